//! Planar vector fields and a fixed-step RK4 flow map.
//!
//! The gyre fields are derived from the stream function
//! `psi(x, y) = p sin(2 pi x) sin(pi y) + (1 - p) sin(pi x) sin(pi y)` with
//! velocity `(-psi_y, psi_x)`; the single gyre is the `p = 0` member.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// User-supplied right-hand side.
pub type FieldFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

#[derive(Clone)]
pub enum VectorField {
    SingleGyre,
    /// `x' = y`, `y' = p x - x^5`.
    Duffing { p: f64 },
    DoubleGyre { p: f64 },
    Custom { name: String, p: f64, f: FieldFn },
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField({}, p = {})", self.id(), self.p())
    }
}

impl VectorField {
    /// Builds a built-in field from its identifier.
    pub fn from_id(id: &str, p: f64) -> Result<Self> {
        if !p.is_finite() {
            return Err(Error::Config(format!("parameter p = {p} is not finite")));
        }
        match id {
            "single_gyre" => Ok(VectorField::SingleGyre),
            "duffing" => Ok(VectorField::Duffing { p }),
            "double_gyre" => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("double gyre needs p in [0, 1], got {p}")));
                }
                Ok(VectorField::DoubleGyre { p })
            }
            other => Err(Error::Config(format!("unknown vector field '{other}'"))),
        }
    }

    pub fn custom(name: impl Into<String>, p: f64, f: impl Fn(Point) -> Point + Send + Sync + 'static) -> Self {
        VectorField::Custom { name: name.into(), p, f: Arc::new(f) }
    }

    pub fn id(&self) -> &str {
        match self {
            VectorField::SingleGyre => "single_gyre",
            VectorField::Duffing { .. } => "duffing",
            VectorField::DoubleGyre { .. } => "double_gyre",
            VectorField::Custom { name, .. } => name,
        }
    }

    pub fn p(&self) -> f64 {
        match self {
            VectorField::SingleGyre => 0.0,
            VectorField::Duffing { p } | VectorField::DoubleGyre { p } | VectorField::Custom { p, .. } => *p,
        }
    }

    /// Velocity at `pt`, rejecting non-finite input.
    pub fn eval(&self, pt: Point) -> Result<Point> {
        if !(pt[0].is_finite() && pt[1].is_finite()) {
            return Err(Error::Domain(format!("non-finite point ({}, {})", pt[0], pt[1])));
        }
        Ok(self.velocity(pt))
    }

    /// Unchecked velocity, used inside the integrator.
    #[inline]
    pub fn velocity(&self, [x, y]: Point) -> Point {
        match self {
            VectorField::SingleGyre => gyre_velocity(0.0, x, y),
            VectorField::DoubleGyre { p } => gyre_velocity(*p, x, y),
            VectorField::Duffing { p } => [y, p * x - x.powi(5)],
            VectorField::Custom { f, .. } => f([x, y]),
        }
    }

    /// Stream function of the gyre fields; `None` for fields without one.
    pub fn stream_function(&self, pt: Point) -> Option<f64> {
        match self {
            VectorField::SingleGyre => Some(gyre_psi(0.0, pt[0], pt[1])),
            VectorField::DoubleGyre { p } => Some(gyre_psi(*p, pt[0], pt[1])),
            // Hamiltonian of the oscillator plays the same role.
            VectorField::Duffing { p } => {
                let [x, y] = pt;
                Some(0.5 * y * y - 0.5 * p * x * x + x.powi(6) / 6.0)
            }
            VectorField::Custom { .. } => None,
        }
    }

    /// Central-difference divergence with step `h`.
    pub fn divergence(&self, [x, y]: Point, h: f64) -> f64 {
        let dudx = (self.velocity([x + h, y])[0] - self.velocity([x - h, y])[0]) / (2.0 * h);
        let dvdy = (self.velocity([x, y + h])[1] - self.velocity([x, y - h])[1]) / (2.0 * h);
        dudx + dvdy
    }

    /// Elliptic fixed points of the oscillator, `(+-p^(1/4), 0)` for `p > 0`.
    pub fn duffing_centers(p: f64) -> Vec<Point> {
        if p > 0.0 {
            let r = p.powf(0.25);
            vec![[-r, 0.0], [r, 0.0]]
        } else {
            vec![[0.0, 0.0]]
        }
    }
}

fn gyre_psi(p: f64, x: f64, y: f64) -> f64 {
    let sy = (PI * y).sin();
    p * (2.0 * PI * x).sin() * sy + (1.0 - p) * (PI * x).sin() * sy
}

#[inline]
fn gyre_velocity(p: f64, x: f64, y: f64) -> Point {
    let (sx, cx) = (PI * x).sin_cos();
    let (sy, cy) = (PI * y).sin_cos();
    // Double-angle identities spare a third sin_cos per evaluation.
    let (s2x, c2x) = (2.0 * sx * cx, (cx - sx) * (cx + sx));
    let psi_x = p * 2.0 * PI * c2x * sy + (1.0 - p) * PI * cx * sy;
    let psi_y = p * PI * s2x * cy + (1.0 - p) * PI * sx * cy;
    [-psi_y, psi_x]
}

/// Time-`t_final` map of a field under classical RK4.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub field: VectorField,
    pub t_final: f64,
    pub h: f64,
    steps: usize,
}

impl FlowMap {
    pub fn new(field: VectorField, t_final: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::Config(format!("invalid flow time {t_final} / step {h}")));
        }
        let ratio = t_final / h;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!("t_final / h = {ratio} is not a whole number of steps")));
        }
        Ok(FlowMap { field, t_final, h, steps: steps as usize })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Applies `steps` RK4 steps to `pt`.
    pub fn integrate(&self, pt: Point) -> Result<Point> {
        let h = self.h;
        let f = |q: Point| self.field.velocity(q);
        let mut z = pt;
        for step in 0..self.steps {
            let k1 = f(z);
            let k2 = f([z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]]);
            let k3 = f([z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]]);
            let k4 = f([z[0] + h * k3[0], z[1] + h * k3[1]]);
            z = [
                z[0] + h * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) / 6.0,
                z[1] + h * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) / 6.0,
            ];
            if !(z[0].is_finite() && z[1].is_finite()) {
                return Err(Error::Integration { step: step + 1 });
            }
        }
        Ok(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duffing_center_is_fixed() {
        let f = VectorField::from_id("duffing", 1.0).unwrap();
        assert_eq!(f.eval([1.0, 0.0]).unwrap(), [0.0, 0.0]);
        let flow = FlowMap::new(f, 1.0, 0.01).unwrap();
        let out = flow.integrate([1.0, 0.0]).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-12 && out[1].abs() < 1e-12);
    }

    #[test]
    fn gyre_stagnation_points() {
        let sg = VectorField::SingleGyre;
        assert_eq!(sg.eval([0.0, 0.0]).unwrap(), [0.0, 0.0]);
        let dg = VectorField::from_id("double_gyre", 0.0).unwrap();
        let v = dg.eval([0.5, 0.5]).unwrap();
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
    }

    #[test]
    fn zero_time_is_identity() {
        let flow = FlowMap::new(VectorField::SingleGyre, 0.0, 0.01).unwrap();
        assert_eq!(flow.integrate([0.3, 0.7]).unwrap(), [0.3, 0.7]);
    }

    #[test]
    fn rejects_fractional_step_count() {
        assert!(FlowMap::new(VectorField::SingleGyre, 1.0, 0.3).is_err());
        assert!(FlowMap::new(VectorField::SingleGyre, 1.0, 0.0).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(VectorField::SingleGyre.eval([f64::NAN, 0.0]).is_err());
        assert!(VectorField::from_id("double_gyre", 1.5).is_err());
        assert!(VectorField::from_id("lorenz", 0.0).is_err());
    }

    #[test]
    fn blowup_reports_step() {
        let f = VectorField::custom("blowup", 0.0, |[x, _]| [x * x * x * x, 0.0]);
        let flow = FlowMap::new(f, 1.0, 0.01).unwrap();
        assert!(matches!(flow.integrate([1e80, 0.0]), Err(Error::Integration { step: 1 })));
    }
}
