//! Built-in models and their parameter sets.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};

use super::{DynamicsModel, ModelBuilder, Var};
use crate::error::{Error, Result};
use crate::interval::Interval;

use Var::{Control as U, Disturbance as D, State as Z};

/// Named numeric parameters for a built-in model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams(BTreeMap<String, f64>);

impl ModelParams {
    pub fn new() -> ModelParams {
        ModelParams::default()
    }

    pub fn from_pairs(pairs: &[(&str, f64)]) -> Result<ModelParams> {
        let mut p = ModelParams::new();
        for &(k, v) in pairs {
            p.set(k, v)?;
        }
        Ok(p)
    }

    /// Parses `key=value` assignments.
    pub fn parse<S: AsRef<str>>(items: &[S]) -> Result<ModelParams> {
        let mut p = ModelParams::new();
        for item in items {
            let item = item.as_ref();
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Param(format!("expected key=value, got '{item}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Param(format!("'{}' is not a number", v.trim())))?;
            p.set(k.trim(), v)?;
        }
        Ok(p)
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Param(format!("{key} must be finite")));
        }
        self.0.insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.get(key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }

    fn check_keys(&self, model: &str, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Param(format!(
                "unknown key '{k}' for model {model} (accepted: {})",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    fn or(&self, key: &str, default: f64) -> f64 {
        self.get(key).unwrap_or(default)
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.or(key, default);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::Param(format!("{key} must be positive, got {v}")))
        }
    }
}

pub fn builtin_names() -> &'static [&'static str] {
    &["quad4", "double_int", "car5", "quadrotor6", "bicycle6", "decoupled"]
}

/// Target used when none is given, as constraint expressions.
pub fn builtin_target(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "quad4" => &["-6 < z1 < 6", "z2 < -4", "z3 < -2"],
        "double_int" => &["z1 < 0"],
        // one-way road: psi bound is 7*pi/4
        "bicycle6" => &["-6 < X < 6", "-2 < Y < 2", "psi < 5.497787143782138", "vx < 0"],
        _ => return None,
    })
}

/// Hand-picked chained decomposition, in `a,b|b,c` form.
pub fn builtin_plan(name: &str) -> Option<&'static str> {
    Some(match name {
        "quad4" => "z1,z2|z2,z3|z3,z4",
        "bicycle6" => "X,vx,vy|Y,vx,vy|X,psi|Y,psi|vx,vy,omega|psi,omega",
        _ => return None,
    })
}

/// Parameter keys accepted by a built-in model.
pub fn builtin_keys(name: &str) -> Option<&'static [&'static str]> {
    Some(match name {
        "quad4" => &["u_max", "d_max"],
        "double_int" => &["u_max"],
        "car5" => &["ua_max", "ualpha_max"],
        "quadrotor6" => &["g", "ut_min", "ut_max", "utau_max"],
        "bicycle6" => BicycleParams::KEYS,
        "decoupled" => &["n", "u_max"],
        _ => return None,
    })
}

/// Instantiates a built-in model.
pub fn builtin(name: &str, params: &ModelParams) -> Result<DynamicsModel> {
    let keys = builtin_keys(name).ok_or_else(|| Error::UnknownModel(name.to_string()))?;
    params.check_keys(name, keys)?;
    match name {
        "quad4" => quad4(params),
        "double_int" => double_int(params),
        "car5" => car5(params),
        "quadrotor6" => quadrotor6(params),
        "bicycle6" => bicycle6(&BicycleParams::from_params(params)?),
        "decoupled" => decoupled(params),
        _ => unreachable!(),
    }
}

fn quad4(p: &ModelParams) -> Result<DynamicsModel> {
    let u = p.positive("u_max", 1.0)?;
    let d = p.positive("d_max", 0.25)?;
    ModelBuilder::new("quad4")
        .state("z1", -10.0, 10.0)
        .state("z2", -10.0, 10.0)
        .state("z3", -10.0, 10.0)
        .state("z4", -10.0, 10.0)
        .control("u", -u, u)
        .disturbance("d", -d, d)
        .term(0, &[Z(1)], &[Z(1)], |z, _, _| z[1], |z, _, _| z[1])
        .term(0, &[D(0)], &[D(0)], |_, _, d| d[0], |_, _, d| d[0])
        .term(1, &[Z(2)], &[Z(2)], |z, _, _| z[2], |z, _, _| z[2])
        .term(2, &[Z(3)], &[Z(3)], |z, _, _| z[3], |z, _, _| z[3])
        .term(3, &[U(0)], &[U(0)], |_, u, _| u[0], |_, u, _| u[0])
        .build()
}

fn double_int(p: &ModelParams) -> Result<DynamicsModel> {
    let u = p.positive("u_max", 1.0)?;
    ModelBuilder::new("double_int")
        .state("z1", -2.0, 3.0)
        .state("z2", -2.0, 2.0)
        .control("u", -u, u)
        .term(0, &[Z(1)], &[Z(1)], |z, _, _| z[1], |z, _, _| z[1])
        .term(1, &[U(0)], &[U(0)], |_, u, _| u[0], |_, u, _| u[0])
        .build()
}

fn car5(p: &ModelParams) -> Result<DynamicsModel> {
    let ua = p.positive("ua_max", 1.0)?;
    let ual = p.positive("ualpha_max", 1.0)?;
    ModelBuilder::new("car5")
        .state("x", -10.0, 10.0)
        .state("y", -10.0, 10.0)
        .periodic_state("theta", 0.0, 2.0 * PI)
        .state("v", -1.0, 5.0)
        .state("omega", -2.0, 2.0)
        .control("u_a", -ua, ua)
        .control("u_alpha", -ual, ual)
        .term(0, &[Z(2), Z(3)], &[Z(3)], |z, _, _| z[3] * z[2].cos(), |z, _, _| z[3] * z[2].cos())
        .term(1, &[Z(2), Z(3)], &[Z(3)], |z, _, _| z[3] * z[2].sin(), |z, _, _| z[3] * z[2].sin())
        .term(2, &[Z(4)], &[Z(4)], |z, _, _| z[4], |z, _, _| z[4])
        .term(3, &[U(0)], &[U(0)], |_, u, _| u[0], |_, u, _| u[0])
        .term(4, &[U(1)], &[U(1)], |_, u, _| u[1], |_, u, _| u[1])
        .build()
}

fn quadrotor6(p: &ModelParams) -> Result<DynamicsModel> {
    let g = p.positive("g", 9.81)?;
    let ut_min = p.or("ut_min", 0.0);
    let ut_max = p.positive("ut_max", 20.0)?;
    let utau = p.positive("utau_max", 1.0)?;
    if !(ut_min < ut_max) {
        return Err(Error::Param(format!("ut_min {ut_min} must be below ut_max {ut_max}")));
    }
    ModelBuilder::new("quadrotor6")
        .state("x", -5.0, 5.0)
        .state("z", -5.0, 5.0)
        .state("vx", -5.0, 5.0)
        .state("vz", -5.0, 5.0)
        .periodic_state("theta", -PI, PI)
        .state("omega", -3.0, 3.0)
        .control("u_T", ut_min, ut_max)
        .control("u_tau", -utau, utau)
        .term(0, &[Z(2)], &[Z(2)], |z, _, _| z[2], |z, _, _| z[2])
        .term(1, &[Z(3)], &[Z(3)], |z, _, _| z[3], |z, _, _| z[3])
        .term(2, &[Z(4), U(0)], &[U(0)], |z, u, _| -u[0] * z[4].sin(), |z, u, _| -(u[0] * z[4].sin()))
        .term(3, &[Z(4), U(0)], &[U(0)], |z, u, _| u[0] * z[4].cos(), |z, u, _| u[0] * z[4].cos())
        .term(3, &[], &[], move |_, _, _| -g, move |_, _, _| Interval::point(-g))
        .term(4, &[Z(5)], &[Z(5)], |z, _, _| z[5], |z, _, _| z[5])
        .term(5, &[U(1)], &[U(1)], |_, u, _| u[1], |_, u, _| u[1])
        .build()
}

/// `z_i' = u_i` with no coupling at all.
fn decoupled(p: &ModelParams) -> Result<DynamicsModel> {
    let n = p.or("n", 2.0);
    if n.fract() != 0.0 || !(1.0..=12.0).contains(&n) {
        return Err(Error::Param(format!("n must be an integer in 1..=12, got {n}")));
    }
    let u = p.positive("u_max", 1.0)?;
    let mut b = ModelBuilder::new("decoupled");
    for i in 0..n as usize {
        b = b.state(&format!("z{}", i + 1), -1.0, 1.0).control(&format!("u{}", i + 1), -u, u);
    }
    for i in 0..n as usize {
        b = b.term(i, &[U(i)], &[U(i)], move |_, u, _| u[i], move |_, u, _| u[i]);
    }
    b.build()
}

/// Vehicle and actuator parameters of the dynamic bicycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicycleParams {
    pub m: f64,
    pub iz: f64,
    pub lf: f64,
    pub lr: f64,
    pub f_max: f64,
    pub c_alpha: f64,
    pub vx_floor: f64,
    pub ax_min: f64,
    pub ax_max: f64,
    pub delta_max: f64,
}

impl Default for BicycleParams {
    fn default() -> Self {
        BicycleParams {
            m: 1760.0,
            iz: 2500.0,
            lf: 1.058,
            lr: 1.738,
            f_max: 1000.0,
            c_alpha: 50000.0,
            vx_floor: 0.5,
            ax_min: -4.0,
            ax_max: 2.0,
            delta_max: FRAC_PI_3,
        }
    }
}

impl BicycleParams {
    pub const KEYS: &'static [&'static str] =
        &["m", "iz", "lf", "lr", "f_max", "c_alpha", "vx_floor", "ax_min", "ax_max", "delta_max"];

    pub fn from_params(p: &ModelParams) -> Result<BicycleParams> {
        let d = BicycleParams::default();
        let b = BicycleParams {
            m: p.positive("m", d.m)?,
            iz: p.positive("iz", d.iz)?,
            lf: p.positive("lf", d.lf)?,
            lr: p.positive("lr", d.lr)?,
            f_max: p.positive("f_max", d.f_max)?,
            c_alpha: p.positive("c_alpha", d.c_alpha)?,
            vx_floor: p.positive("vx_floor", d.vx_floor)?,
            ax_min: p.or("ax_min", d.ax_min),
            ax_max: p.or("ax_max", d.ax_max),
            delta_max: p.positive("delta_max", d.delta_max)?,
        };
        if !(b.ax_min < b.ax_max) {
            return Err(Error::Param(format!("ax_min {} must be below ax_max {}", b.ax_min, b.ax_max)));
        }
        Ok(b)
    }

    fn regularized_vx(&self, vx: f64) -> f64 {
        if vx >= 0.0 {
            vx.max(self.vx_floor)
        } else {
            vx.min(-self.vx_floor)
        }
    }

    /// Saturated linear lateral force of the front tire.
    pub fn front_force(&self, vx: f64, vy: f64, omega: f64, delta: f64) -> f64 {
        let slip = delta - ((vy + self.lf * omega) / self.regularized_vx(vx)).atan();
        (self.c_alpha * slip).clamp(-self.f_max, self.f_max)
    }

    /// Saturated linear lateral force of the rear tire.
    pub fn rear_force(&self, vx: f64, vy: f64, omega: f64) -> f64 {
        let slip = -((vy - self.lr * omega) / self.regularized_vx(vx)).atan();
        (self.c_alpha * slip).clamp(-self.f_max, self.f_max)
    }
}

fn bicycle6(b: &BicycleParams) -> Result<DynamicsModel> {
    let b = *b;
    let (kf, kr) = (2.0 / b.m, 2.0 / b.iz);
    let force = Interval::symmetric(b.f_max);
    let cos_delta = Interval::new(-b.delta_max, b.delta_max).cos();
    // X, Y, psi, vx, vy, omega
    ModelBuilder::new("bicycle6")
        .state("X", -16.0, 16.0)
        .state("Y", -16.0, 16.0)
        .periodic_state("psi", FRAC_PI_4, 9.0 * FRAC_PI_4)
        .state("vx", -17.0, 17.0)
        .state("vy", -17.0, 17.0)
        .state("omega", -1.0, 1.0)
        .control("a_x", b.ax_min, b.ax_max)
        .control("delta_f", -b.delta_max, b.delta_max)
        .term(0, &[Z(2), Z(3)], &[Z(3)], |z, _, _| z[3] * z[2].cos(), |z, _, _| z[3] * z[2].cos())
        .term(0, &[Z(2), Z(4)], &[Z(4)], |z, _, _| -z[4] * z[2].sin(), |z, _, _| -(z[4] * z[2].sin()))
        .term(1, &[Z(2), Z(3)], &[Z(3)], |z, _, _| z[3] * z[2].sin(), |z, _, _| z[3] * z[2].sin())
        .term(1, &[Z(2), Z(4)], &[Z(4)], |z, _, _| z[4] * z[2].cos(), |z, _, _| z[4] * z[2].cos())
        .term(2, &[Z(5)], &[Z(5)], |z, _, _| z[5], |z, _, _| z[5])
        .term(3, &[Z(4), Z(5)], &[Z(4), Z(5)], |z, _, _| z[5] * z[4], |z, _, _| z[5] * z[4])
        .term(3, &[U(0)], &[U(0)], |_, u, _| u[0], |_, u, _| u[0])
        .term(4, &[Z(3), Z(5)], &[Z(3), Z(5)], |z, _, _| -z[5] * z[3], |z, _, _| -(z[5] * z[3]))
        .term(
            4,
            &[Z(3), Z(4), Z(5), U(1)],
            &[],
            move |z, u, _| kf * b.front_force(z[3], z[4], z[5], u[1]) * u[1].cos(),
            move |_, _, _| (force * cos_delta).scale(kf),
        )
        .term(
            4,
            &[Z(3), Z(4), Z(5)],
            &[],
            move |z, _, _| kf * b.rear_force(z[3], z[4], z[5]),
            move |_, _, _| force.scale(kf),
        )
        .term(
            5,
            &[Z(3), Z(4), Z(5), U(1)],
            &[],
            move |z, u, _| kr * b.lf * b.front_force(z[3], z[4], z[5], u[1]),
            move |_, _, _| force.scale(kr * b.lf),
        )
        .term(
            5,
            &[Z(3), Z(4), Z(5)],
            &[],
            move |z, _, _| -kr * b.lr * b.rear_force(z[3], z[4], z[5]),
            move |_, _, _| force.scale(-kr * b.lr),
        )
        .build()
}
