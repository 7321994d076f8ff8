use chainreach::dynamics::{builtin, LatticeConfig, ModelParams, SubsystemHamiltonian};
use chainreach::grid::{read_value, write_value};
use chainreach::levelset::{solve_full_brt, SchemeConfig, SolveOptions};
use chainreach::{Grid, IntervalUnion, TargetSpec, ValueFunction};
use proptest::prelude::*;

const LABELS: [&str; 4] = ["a", "b", "c", "d"];

/// A random grid of 1 to 4 dimensions with 3 to 5 points each, plus values.
fn grid_and_values() -> impl Strategy<Value = (Grid, Vec<f64>)> {
    (1usize..=4)
        .prop_flat_map(|dim| {
            (
                prop::collection::vec(3usize..=5, dim),
                prop::collection::vec(any::<bool>(), dim),
                prop::collection::vec((-5.0f64..0.0, 0.5f64..5.0), dim),
            )
        })
        .prop_flat_map(|(counts, periodic, spans)| {
            let bounds: Vec<(f64, f64)> = spans.iter().map(|&(lo, w)| (lo, lo + w)).collect();
            let grid = Grid::new(&bounds, &counts, &periodic, &LABELS[..counts.len()]).unwrap();
            let n = grid.len();
            (Just(grid), prop::collection::vec(-10.0f64..10.0, n))
        })
}

/// Nonempty subset of `0..dim`, as a sorted label list.
fn keep_labels(grid: &Grid, mask: u8) -> Vec<String> {
    let dim = grid.dim();
    let mask = (mask as usize % ((1 << dim) - 1)) + 1;
    (0..dim).filter(|d| mask & (1 << d) != 0).map(|d| grid.label(d).to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projecting_a_back_projection_is_identity((grid, vals) in grid_and_values(), mask in any::<u8>()) {
        let keep = keep_labels(&grid, mask);
        let sub = grid.restrict(&keep).unwrap();
        let w = ValueFunction::new(sub.clone(), vals[..sub.len()].to_vec(), -0.5).unwrap();
        let back = w.back_project(&grid).unwrap();
        let again = back.project_min(&keep).unwrap();
        prop_assert_eq!(again, w);
    }

    #[test]
    fn back_projecting_a_projection_lies_below((grid, vals) in grid_and_values(), mask in any::<u8>()) {
        let keep = keep_labels(&grid, mask);
        let v = ValueFunction::new(grid.clone(), vals, 0.0).unwrap();
        let lifted = v.project_min(&keep).unwrap().back_project(&grid).unwrap();
        for (a, b) in lifted.values().iter().zip(v.values()) {
            prop_assert!(a <= b);
        }
        // the minimum is attained somewhere on each fiber
        prop_assert_eq!(lifted.min_value(), v.min_value());
    }

    #[test]
    fn rdv_round_trip_is_bitwise((grid, vals) in grid_and_values(), time in -3.0f64..0.0) {
        let v = ValueFunction::new(grid, vals, time).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.rdv");
        write_value(&v, &path).unwrap();
        let back = read_value(&path).unwrap();
        prop_assert_eq!(back.grid(), v.grid());
        prop_assert_eq!(back.time().to_bits(), v.time().to_bits());
        let same = back.values().iter().zip(v.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn wider_missing_ranges_never_raise_the_hamiltonian(
        z in prop::array::uniform2(-10.0f64..10.0),
        p in prop::array::uniform2(-2.0f64..2.0),
        inner in (-8.0f64..8.0, 0.0f64..2.0),
        grow in (0.0f64..3.0, 0.0f64..3.0),
        extra in (-10.0f64..10.0, 0.0f64..1.0),
    ) {
        let m = builtin("quad4", &ModelParams::default()).unwrap();
        let h = SubsystemHamiltonian::new(&m, &[0, 1], LatticeConfig::default()).unwrap();
        let mut s = h.scratch();
        let (lo, w) = inner;
        let a = IntervalUnion::single(lo, lo + w);
        let b = IntervalUnion::single(lo - grow.0, lo + w + grow.1);
        let c = IntervalUnion::from_intervals(vec![
            chainreach::Interval::new(lo, lo + w),
            chainreach::Interval::new(extra.0, extra.0 + extra.1),
        ]);
        let ha = h.eval(&z, &p, &[&a], false, &mut s);
        let hb = h.eval(&z, &p, &[&b], false, &mut s);
        let hc = h.eval(&z, &p, &[&c], false, &mut s);
        prop_assert!(hb <= ha + 1e-12);
        prop_assert!(hc <= ha + 1e-12);
    }

    #[test]
    fn point_range_matches_the_closed_form(
        z in prop::array::uniform2(-10.0f64..10.0),
        p in prop::array::uniform2(-2.0f64..2.0),
        x in -10.0f64..10.0,
    ) {
        // S = {z1, z2} of quad4 with z3 pinned: p1 (z2 + d) + p2 x, d in [-0.25, 0.25]
        let m = builtin("quad4", &ModelParams::default()).unwrap();
        let h = SubsystemHamiltonian::new(&m, &[0, 1], LatticeConfig::default()).unwrap();
        let mut s = h.scratch();
        let got = h.eval(&z, &p, &[&IntervalUnion::single(x, x)], false, &mut s);
        let want = p[0] * z[1] - 0.25 * p[0].abs() + p[1] * x;
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solved_tubes_are_monotone_and_below_the_target(edge in -1.5f64..2.5, horizon in 0.05f64..0.4) {
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let g = Grid::new(&m.bounds().to_vec(), &[15, 13], m.periodic(), m.labels()).unwrap();
        let t = TargetSpec::parse(&[format!("z1 < {edge}")]).unwrap();
        let opts = SolveOptions { horizon, checkpoint_dt: Some(0.05), ..SolveOptions::default() };
        let r = solve_full_brt(&m, &g, &t, &SchemeConfig::default(), &opts).unwrap();
        let l = &r.snapshots[0];
        for w in r.snapshots.windows(2) {
            for ((a, b), lv) in w[1].values().iter().zip(w[0].values()).zip(l.values()) {
                prop_assert!(a <= b);
                prop_assert!(a <= lv);
            }
        }
        prop_assert_eq!(r.last().time(), -horizon);
    }
}
