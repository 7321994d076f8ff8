//! Target sets given as intersections of per-state constraints.
//!
//! Constraint grammar: `LABEL < N`, `LABEL > N` or `N < LABEL < N`.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{Grid, ValueFunction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relation {
    Below(f64),
    Above(f64),
    Between(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub relation: Relation,
}

impl Constraint {
    /// Signed level: nonpositive exactly when `x` satisfies the constraint
    /// (boundary included).
    pub fn level(&self, x: f64) -> f64 {
        match self.relation {
            Relation::Below(c) => x - c,
            Relation::Above(c) => c - x,
            Relation::Between(a, b) => (a - x).max(x - b),
        }
    }

    pub fn parse(s: &str) -> Result<Constraint> {
        let bad = || Error::Target(format!("cannot parse '{s}'"));
        let num = |t: &str| t.trim().parse::<f64>().ok().filter(|v| v.is_finite());
        let label = |t: &str| {
            let t = t.trim();
            (!t.is_empty() && num(t).is_none() && !t.contains(char::is_whitespace)).then(|| t.to_string())
        };
        let c = if s.contains('<') && s.contains('>') {
            return Err(bad());
        } else if let Some((l, r)) = s.split_once('<') {
            match r.split_once('<') {
                Some((mid, hi)) => {
                    let (a, b) = (num(l).ok_or_else(bad)?, num(hi).ok_or_else(bad)?);
                    if !(a < b) {
                        return Err(Error::Target(format!("empty interval in '{s}'")));
                    }
                    Constraint { label: label(mid).ok_or_else(bad)?, relation: Relation::Between(a, b) }
                }
                None => Constraint { label: label(l).ok_or_else(bad)?, relation: Relation::Below(num(r).ok_or_else(bad)?) },
            }
        } else if let Some((l, r)) = s.split_once('>') {
            if r.contains('>') {
                return Err(bad());
            }
            Constraint { label: label(l).ok_or_else(bad)?, relation: Relation::Above(num(r).ok_or_else(bad)?) }
        } else {
            return Err(bad());
        };
        Ok(c)
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.relation {
            Relation::Below(c) => write!(f, "{} < {c}", self.label),
            Relation::Above(c) => write!(f, "{} > {c}", self.label),
            Relation::Between(a, b) => write!(f, "{a} < {} < {b}", self.label),
        }
    }
}

/// Intersection of constraints; `l(z)` is the maximum of their levels.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    constraints: Vec<Constraint>,
}

impl TargetSpec {
    pub fn new(constraints: Vec<Constraint>) -> Result<TargetSpec> {
        if constraints.is_empty() {
            return Err(Error::Target("no constraints".into()));
        }
        Ok(TargetSpec { constraints })
    }

    pub fn parse<S: AsRef<str>>(exprs: &[S]) -> Result<TargetSpec> {
        TargetSpec::new(exprs.iter().map(|e| Constraint::parse(e.as_ref())).collect::<Result<_>>()?)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Checks every constraint against a label set.
    pub fn check_labels<S: AsRef<str>>(&self, labels: &[S]) -> Result<()> {
        match self
            .constraints
            .iter()
            .find(|c| !labels.iter().any(|l| l.as_ref() == c.label))
        {
            Some(c) => Err(Error::Target(format!("constraint '{c}' references unknown state '{}'", c.label))),
            None => Ok(()),
        }
    }

    /// Keeps only constraints on the given labels.
    pub fn restricted_to<S: AsRef<str>>(&self, labels: &[S]) -> Vec<Constraint> {
        self.constraints
            .iter()
            .filter(|c| labels.iter().any(|l| l.as_ref() == c.label))
            .cloned()
            .collect()
    }

    /// Greatest lower bound of `l` over all states, when finite.
    ///
    /// Only interval constraints are bounded below, by minus their half
    /// width. No value function of this target can drop under it.
    pub fn infimum(&self) -> Option<f64> {
        let inf = self
            .constraints
            .iter()
            .map(|c| match c.relation {
                Relation::Between(a, b) => -0.5 * (b - a),
                _ => f64::NEG_INFINITY,
            })
            .fold(f64::NEG_INFINITY, f64::max);
        inf.is_finite().then_some(inf)
    }

    /// `l(z)` for a state laid out along `labels`.
    pub fn level<S: AsRef<str>>(&self, labels: &[S], z: &[f64]) -> Result<f64> {
        self.check_labels(labels)?;
        Ok(level_of(&self.constraints, &resolve(&self.constraints, labels), z))
    }
}

fn resolve<S: AsRef<str>>(cs: &[Constraint], labels: &[S]) -> Vec<usize> {
    cs.iter()
        .map(|c| labels.iter().position(|l| l.as_ref() == c.label).expect("checked label"))
        .collect()
}

fn level_of(cs: &[Constraint], dims: &[usize], z: &[f64]) -> f64 {
    cs.iter()
        .zip(dims)
        .map(|(c, &d)| c.level(z[d]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Tabulates `l` on a grid whose labels cover every constraint.
pub fn target_levelset(target: &TargetSpec, grid: &Grid) -> Result<ValueFunction> {
    target.check_labels(grid.labels())?;
    constraint_levelset(target.constraints(), grid)
}

/// Tabulates the max of the given constraints; the list must be nonempty and
/// reference grid labels only.
pub(crate) fn constraint_levelset(cs: &[Constraint], grid: &Grid) -> Result<ValueFunction> {
    let dims = resolve(cs, grid.labels());
    ValueFunction::from_fn(grid.clone(), 0.0, |z| level_of(cs, &dims, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_target() -> TargetSpec {
        TargetSpec::parse(&["-6 < z1 < 6", "z2 < -4", "z3 < -2"]).unwrap()
    }

    #[test]
    fn grammar() {
        assert_eq!(
            Constraint::parse("z2<-4").unwrap(),
            Constraint { label: "z2".into(), relation: Relation::Below(-4.0) }
        );
        assert_eq!(
            Constraint::parse(" vx > 0 ").unwrap(),
            Constraint { label: "vx".into(), relation: Relation::Above(0.0) }
        );
        assert_eq!(
            Constraint::parse("-6 < z1 < 6").unwrap().relation,
            Relation::Between(-6.0, 6.0)
        );
        for bad in ["z1", "z1 < x", "3 < 4", "1 < z1 < 0", "z1 > 2 < 4", "a b < 1", "< 3"] {
            assert!(Constraint::parse(bad).is_err(), "{bad}");
        }
        let c = Constraint::parse("-6 < z1 < 6").unwrap();
        assert_eq!(Constraint::parse(&c.to_string()).unwrap(), c);
    }

    #[test]
    fn quad_target_membership() {
        let t = quad_target();
        let labels = ["z1", "z2", "z3", "z4"];
        assert!(t.level(&labels, &[0.0, -5.0, -3.0, 0.0]).unwrap() < 0.0);
        assert!(t.level(&labels, &[10.0, -5.0, -3.0, 0.0]).unwrap() > 0.0);
        assert_eq!(t.level(&labels, &[0.0, -5.0, -3.0, 0.0]).unwrap(), -1.0);
        assert!(t.level(&["z1", "z2"], &[0.0, 0.0]).is_err());
        assert!(TargetSpec::new(vec![]).is_err());
        assert_eq!(t.infimum(), Some(-6.0));
        assert_eq!(TargetSpec::parse(&["z1 < 0"]).unwrap().infimum(), None);
    }

    #[test]
    fn levelset_on_grid() {
        let g = Grid::new(&[(-1.0, 1.0), (-1.0, 1.0)], &[3, 3], &[false, false], &["a", "b"]).unwrap();
        let t = TargetSpec::parse(&["a < 0", "b > 0.5"]).unwrap();
        let l = target_levelset(&t, &g).unwrap();
        assert_eq!(l.values(), &[1.5, 0.5, -0.5, 1.5, 0.5, 0.0, 1.5, 1.0, 1.0]);
    }
}
