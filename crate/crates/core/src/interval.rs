//! Closed intervals, interval arithmetic for dissipation bounds, and finite
//! unions of intervals used as missing-state ranges.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Interval {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Interval {
        Interval { lo: x, hi: x }
    }

    /// Symmetric interval `[-r, r]`.
    pub fn symmetric(r: f64) -> Interval {
        Interval { lo: -r, hi: r }
    }

    pub fn width(self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Largest magnitude attained on the interval.
    pub fn mag(self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn hull(self, other: Interval) -> Interval {
        Interval { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }

    pub fn scale(self, k: f64) -> Interval {
        if k >= 0.0 {
            Interval { lo: self.lo * k, hi: self.hi * k }
        } else {
            Interval { lo: self.hi * k, hi: self.lo * k }
        }
    }

    pub fn sin(self) -> Interval {
        if self.width() >= TAU {
            return Interval::symmetric(1.0);
        }
        let (a, b) = (self.lo.sin(), self.hi.sin());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        // does [lo, hi] contain pi/2 + 2k pi or -pi/2 + 2k pi?
        if contains_phase(self, FRAC_PI_2) {
            hi = 1.0;
        }
        if contains_phase(self, -FRAC_PI_2) {
            lo = -1.0;
        }
        Interval { lo, hi }
    }

    pub fn cos(self) -> Interval {
        (self + FRAC_PI_2).sin()
    }
}

fn contains_phase(iv: Interval, phase: f64) -> bool {
    let k = ((iv.lo - phase) / TAU).ceil();
    let x = phase + k * TAU;
    x <= iv.hi + 1e-15 * PI
}

impl std::ops::Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }
}

impl std::ops::Add<f64> for Interval {
    type Output = Interval;
    fn add(self, c: f64) -> Interval {
        Interval { lo: self.lo + c, hi: self.hi + c }
    }
}

impl std::ops::Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval { lo: self.lo - o.hi, hi: self.hi - o.lo }
    }
}

impl std::ops::Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval { lo: -self.hi, hi: -self.lo }
    }
}

impl std::ops::Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Interval {
            lo: c.iter().copied().fold(f64::INFINITY, f64::min),
            hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// A finite union of closed intervals, kept sorted and pairwise disjoint.
///
/// An empty union means no sample satisfied the membership test.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntervalUnion {
    parts: Vec<Interval>,
}

impl IntervalUnion {
    pub fn empty() -> IntervalUnion {
        IntervalUnion { parts: Vec::new() }
    }

    pub fn single(lo: f64, hi: f64) -> IntervalUnion {
        IntervalUnion { parts: vec![Interval::new(lo, hi)] }
    }

    /// Normalizes arbitrary intervals: sorts them and merges overlaps.
    pub fn from_intervals(mut parts: Vec<Interval>) -> IntervalUnion {
        parts.retain(|p| p.lo <= p.hi);
        parts.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut out: Vec<Interval> = Vec::with_capacity(parts.len());
        for p in parts {
            match out.last_mut() {
                Some(last) if p.lo <= last.hi => last.hi = last.hi.max(p.hi),
                _ => out.push(p),
            }
        }
        IntervalUnion { parts: out }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.parts.iter().any(|p| p.contains(x))
    }

    pub fn hull(&self) -> Option<Interval> {
        Some(Interval::new(self.parts.first()?.lo, self.parts.last()?.hi))
    }

    /// Exact intersection by a sweep over both sorted lists.
    pub fn intersect(&self, other: &IntervalUnion) -> IntervalUnion {
        let (a, b) = (&self.parts, &other.parts);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].lo.max(b[j].lo);
            let hi = a[i].hi.min(b[j].hi);
            if lo <= hi {
                out.push(Interval::new(lo, hi));
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalUnion { parts: out }
    }

    /// True when every point of `other` lies in `self`.
    pub fn covers(&self, other: &IntervalUnion) -> bool {
        other
            .parts
            .iter()
            .all(|q| self.parts.iter().any(|p| p.lo <= q.lo && q.hi <= p.hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_products_and_trig() {
        let a = Interval::new(-2.0, 3.0);
        let b = Interval::new(1.0, 4.0);
        assert_eq!(a * b, Interval::new(-8.0, 12.0));
        assert_eq!(Interval::new(0.0, PI).sin().hi, 1.0);
        assert!(Interval::new(0.0, PI).sin().lo.abs() < 1e-15);
        let c = Interval::new(0.0, PI).cos();
        assert!((c.lo + 1.0).abs() < 1e-15 && (c.hi - 1.0).abs() < 1e-15);
        let s = Interval::new(0.1, 0.2).sin();
        assert!((s.lo - 0.1f64.sin()).abs() < 1e-15 && (s.hi - 0.2f64.sin()).abs() < 1e-15);
        assert_eq!(Interval::new(PI / 4.0, 9.0 * PI / 4.0).cos(), Interval::symmetric(1.0));
    }

    #[test]
    fn union_normalization_and_intersection() {
        let u = IntervalUnion::from_intervals(vec![
            Interval::new(3.0, 4.0),
            Interval::new(0.0, 1.0),
            Interval::new(0.5, 2.0),
        ]);
        assert_eq!(u.intervals(), &[Interval::new(0.0, 2.0), Interval::new(3.0, 4.0)]);
        let v = IntervalUnion::from_intervals(vec![Interval::new(1.5, 3.5)]);
        let w = u.intersect(&v);
        assert_eq!(w.intervals(), &[Interval::new(1.5, 2.0), Interval::new(3.0, 3.5)]);
        assert!(u.intersect(&IntervalUnion::single(2.5, 2.9)).is_empty());
        assert!(u.covers(&w));
        assert!(!w.covers(&u));
    }
}
