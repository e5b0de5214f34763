//! Differential game definition: dynamics `ẋ = f(t, x, u, v)`, finite
//! control grids, terminal payoff `g`, and the declared constants
//! (payoff Lipschitz constant `R`, drift bound `M1`, drift Lipschitz
//! constant `K1`).
//!
//! The compact control sets are represented by finite grids; every min/max
//! in the crate is exhaustive enumeration over them, with ties broken by the
//! lowest grid index.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Control vector. Grids hold these; hot paths pass grid indices instead.
pub type Control = Vec<f64>;

pub type DriftFn = dyn Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
pub type PayoffFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

const GRID_TOL: f64 = 1e-12;

#[derive(Clone)]
pub enum Drift {
    /// `f = u + v`; both controls have dimension `d`.
    Sum,
    /// `f = (v·x₂ − u, u·x₁ + v)` in two dimensions with scalar controls.
    Rotation,
    /// `f = A x + B_u u + B_v v + c`.
    Affine {
        a: Vec<Vec<f64>>,
        b_u: Vec<Vec<f64>>,
        b_v: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
    Custom(Arc<DriftFn>),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Sum => write!(f, "Sum"),
            Drift::Rotation => write!(f, "Rotation"),
            Drift::Affine { a, b_u, b_v, c } => f
                .debug_struct("Affine")
                .field("a", a)
                .field("b_u", b_u)
                .field("b_v", b_v)
                .field("c", c)
                .finish(),
            Drift::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Drift {
    fn eval_into(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Drift::Sum => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = u[i] + v[i];
                }
            }
            Drift::Rotation => {
                out[0] = v[0] * x[1] - u[0];
                out[1] = u[0] * x[0] + v[0];
            }
            Drift::Affine { a, b_u, b_v, c } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut s = c[i];
                    for (aij, xj) in a[i].iter().zip(x) {
                        s += aij * xj;
                    }
                    for (bij, uj) in b_u[i].iter().zip(u) {
                        s += bij * uj;
                    }
                    for (bij, vj) in b_v[i].iter().zip(v) {
                        s += bij * vj;
                    }
                    *o = s;
                }
            }
            Drift::Custom(func) => func(t, x, u, v, out),
        }
    }
}

#[derive(Clone)]
pub enum Payoff {
    /// `g(x) = scale·‖x − center‖`.
    Norm { center: Vec<f64>, scale: f64 },
    /// `g(x) = ⟨a, x⟩ + b`.
    Linear { a: Vec<f64>, b: f64 },
    Constant(f64),
    Custom(Arc<PayoffFn>),
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Norm { center, scale } => f
                .debug_struct("Norm")
                .field("center", center)
                .field("scale", scale)
                .finish(),
            Payoff::Linear { a, b } => f.debug_struct("Linear").field("a", a).field("b", b).finish(),
            Payoff::Constant(c) => write!(f, "Constant({c})"),
            Payoff::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Payoff {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Payoff::Norm { center, scale } => {
                scale
                    * x.iter()
                        .zip(center)
                        .map(|(xi, ci)| (xi - ci) * (xi - ci))
                        .sum::<f64>()
                        .sqrt()
            }
            Payoff::Linear { a, b } => a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + b,
            Payoff::Constant(c) => *c,
            Payoff::Custom(func) => func(x),
        }
    }
}

/// An immutable zero-sum differential game with terminal payoff. Player one
/// (`u`) minimizes `g(x(T))`, player two (`v`) maximizes it.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub dim: usize,
    pub horizon: f64,
    pub drift: Drift,
    pub u_grid: Vec<Control>,
    pub v_grid: Vec<Control>,
    pub payoff: Payoff,
    /// `R`
    pub payoff_lipschitz: f64,
    /// `M1`, a bound on `‖f‖`.
    pub drift_bound: f64,
    /// `K1`, the Lipschitz constant of `f` in `x`.
    pub drift_lipschitz: f64,
    /// Half-width of the state cube on which sampled checks are drawn.
    pub sample_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsaacsReport {
    pub max_gap: f64,
    pub samples: usize,
}

impl GameSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        horizon: f64,
        drift: Drift,
        u_grid: Vec<Control>,
        v_grid: Vec<Control>,
        payoff: Payoff,
        payoff_lipschitz: f64,
        drift_bound: f64,
        drift_lipschitz: f64,
    ) -> Result<Self> {
        let spec = GameSpec {
            dim,
            horizon,
            drift,
            u_grid,
            v_grid,
            payoff,
            payoff_lipschitz,
            drift_bound,
            drift_lipschitz,
            sample_radius: 2.0,
        };
        spec.check_structure()?;
        Ok(spec)
    }

    pub fn with_sample_radius(mut self, radius: f64) -> Self {
        self.sample_radius = radius;
        self
    }

    fn check_structure(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidSpec(format!("horizon {} must be > 0", self.horizon)));
        }
        if self.u_grid.is_empty() || self.v_grid.is_empty() {
            return Err(Error::InvalidSpec("control grids must be nonempty".into()));
        }
        for (name, grid) in [("u_grid", &self.u_grid), ("v_grid", &self.v_grid)] {
            let m = grid[0].len();
            if grid.iter().any(|c| c.len() != m || c.iter().any(|x| !x.is_finite())) {
                return Err(Error::InvalidSpec(format!(
                    "{name} entries must share one dimension and be finite"
                )));
            }
        }
        for (name, c) in [
            ("R", self.payoff_lipschitz),
            ("M1", self.drift_bound),
            ("K1", self.drift_lipschitz),
        ] {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be finite and >= 0, got {c}")));
            }
        }
        match &self.drift {
            Drift::Sum => {
                if self.u_grid[0].len() != self.dim || self.v_grid[0].len() != self.dim {
                    return Err(Error::InvalidSpec(
                        "sum drift needs controls of the state dimension".into(),
                    ));
                }
            }
            Drift::Rotation => {
                if self.dim != 2 || self.u_grid[0].len() != 1 || self.v_grid[0].len() != 1 {
                    return Err(Error::InvalidSpec(
                        "rotation drift needs d = 2 and scalar controls".into(),
                    ));
                }
            }
            Drift::Affine { a, b_u, b_v, c } => {
                let ok = a.len() == self.dim
                    && b_u.len() == self.dim
                    && b_v.len() == self.dim
                    && c.len() == self.dim
                    && a.iter().all(|r| r.len() == self.dim)
                    && b_u.iter().all(|r| r.len() == self.u_grid[0].len())
                    && b_v.iter().all(|r| r.len() == self.v_grid[0].len());
                if !ok {
                    return Err(Error::InvalidSpec("affine drift coefficient shapes mismatch".into()));
                }
            }
            Drift::Custom(_) => {}
        }
        match &self.payoff {
            Payoff::Norm { center, .. } if center.len() != self.dim => {
                Err(Error::InvalidSpec("payoff center has wrong dimension".into()))
            }
            Payoff::Linear { a, .. } if a.len() != self.dim => {
                Err(Error::InvalidSpec("payoff slope has wrong dimension".into()))
            }
            _ => Ok(()),
        }
    }

    /// Drift at grid controls, written into `out` (length `dim`). No checks.
    #[inline]
    pub fn drift_at(&self, t: f64, x: &[f64], ui: usize, vi: usize, out: &mut [f64]) {
        self.drift
            .eval_into(t, x, &self.u_grid[ui], &self.v_grid[vi], out);
    }

    /// Drift at arbitrary controls from the compact sets spanned by the grids.
    pub fn eval_drift(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        if x.len() != self.dim {
            return Err(Error::Domain(format!("state has dimension {}, expected {}", x.len(), self.dim)));
        }
        check_in_hull("u", u, &self.u_grid)?;
        check_in_hull("v", v, &self.v_grid)?;
        let mut out = vec![0.0; self.dim];
        self.drift.eval_into(t, x, u, v, &mut out);
        if out.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "non-finite drift at t={t}, x={x:?}, u={u:?}, v={v:?}"
            )));
        }
        Ok(out)
    }

    pub fn eval_payoff(&self, x: &[f64]) -> Result<f64> {
        let g = self.payoff.eval(x);
        if g.is_finite() {
            Ok(g)
        } else {
            Err(Error::InvalidSpec(format!("non-finite payoff at x={x:?}")))
        }
    }

    /// Payoff without the finiteness check, for inner loops over validated grids.
    #[inline]
    pub fn payoff_at(&self, x: &[f64]) -> f64 {
        self.payoff.eval(x)
    }

    fn sample_state<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim)
            .map(|_| rng.random_range(-self.sample_radius..=self.sample_radius))
            .collect()
    }

    /// Randomized check of the declared constants: `‖f‖ ≤ M1`, the payoff
    /// Lipschitz bound `R`, and the drift Lipschitz bound `K1`, on the
    /// sample cube.
    pub fn validate(&self, n_samples: usize, seed: u64) -> Result<()> {
        const TOL: f64 = 1e-12;
        let mut rng = rng::replica(seed, rng::DIAGNOSTIC_STREAM);
        let mut f = vec![0.0; self.dim];
        let mut f2 = vec![0.0; self.dim];
        for _ in 0..n_samples {
            let t = rng.random_range(0.0..=self.horizon);
            let x = self.sample_state(&mut rng);
            let y = self.sample_state(&mut rng);
            let ui = rng.random_range(0..self.u_grid.len());
            let vi = rng.random_range(0..self.v_grid.len());
            self.drift_at(t, &x, ui, vi, &mut f);
            if f.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "non-finite drift at t={t}, x={x:?}, u={:?}, v={:?}",
                    self.u_grid[ui], self.v_grid[vi]
                )));
            }
            let norm = euclid(&f);
            if norm > self.drift_bound * (1.0 + TOL) + TOL {
                return Err(Error::InvalidSpec(format!(
                    "|f| = {norm} exceeds M1 = {} at t={t}, x={x:?}",
                    self.drift_bound
                )));
            }
            self.drift_at(t, &y, ui, vi, &mut f2);
            let dxy = dist(&x, &y);
            let df = dist(&f, &f2);
            if df > self.drift_lipschitz * dxy * (1.0 + TOL) + TOL {
                return Err(Error::InvalidSpec(format!(
                    "drift Lipschitz quotient {} exceeds K1 = {}",
                    df / dxy,
                    self.drift_lipschitz
                )));
            }
            let gx = self.eval_payoff(&x)?;
            let gy = self.eval_payoff(&y)?;
            if (gx - gy).abs() > self.payoff_lipschitz * dxy * (1.0 + TOL) + TOL {
                return Err(Error::InvalidSpec(format!(
                    "payoff Lipschitz quotient {} exceeds R = {}",
                    (gx - gy).abs() / dxy,
                    self.payoff_lipschitz
                )));
            }
        }
        Ok(())
    }

    /// `|min_u max_v ⟨ξ, f⟩ − max_v min_u ⟨ξ, f⟩|` at one point.
    pub fn isaacs_gap(&self, t: f64, x: &[f64], xi: &[f64]) -> f64 {
        let nu = self.u_grid.len();
        let nv = self.v_grid.len();
        let mut f = vec![0.0; self.dim];
        let mut table = vec![0.0; nu * nv];
        for ui in 0..nu {
            for vi in 0..nv {
                self.drift_at(t, x, ui, vi, &mut f);
                table[ui * nv + vi] = dot(xi, &f);
            }
        }
        let minmax = (0..nu)
            .map(|ui| (0..nv).map(|vi| table[ui * nv + vi]).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min);
        let maxmin = (0..nv)
            .map(|vi| (0..nu).map(|ui| table[ui * nv + vi]).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max);
        (minmax - maxmin).abs()
    }

    /// Largest grid Isaacs gap over `n_samples` random `(t, x, ξ)`; `ξ` is
    /// drawn from the unit cube.
    pub fn check_isaacs(&self, n_samples: usize, seed: u64) -> Result<IsaacsReport> {
        if n_samples == 0 {
            return Err(Error::InvalidInput("n_samples must be >= 1".into()));
        }
        let mut rng = rng::replica(seed, rng::DIAGNOSTIC_STREAM - 1);
        let mut max_gap: f64 = 0.0;
        for _ in 0..n_samples {
            let t = rng.random_range(0.0..=self.horizon);
            let x = self.sample_state(&mut rng);
            let xi: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let gap = self.isaacs_gap(t, &x, &xi);
            if !gap.is_finite() {
                return Err(Error::InvalidSpec(format!("non-finite Isaacs gap at t={t}, x={x:?}")));
            }
            max_gap = max_gap.max(gap);
        }
        Ok(IsaacsReport { max_gap, samples: n_samples })
    }

    pub fn u_dim(&self) -> usize {
        self.u_grid[0].len()
    }

    pub fn v_dim(&self) -> usize {
        self.v_grid[0].len()
    }
}

fn check_in_hull(name: &str, c: &[f64], grid: &[Control]) -> Result<()> {
    if c.len() != grid[0].len() {
        return Err(Error::Domain(format!("{name} = {c:?} has wrong dimension")));
    }
    for (j, cj) in c.iter().enumerate() {
        let lo = grid.iter().map(|g| g[j]).fold(f64::INFINITY, f64::min);
        let hi = grid.iter().map(|g| g[j]).fold(f64::NEG_INFINITY, f64::max);
        if !(*cj >= lo - GRID_TOL && *cj <= hi + GRID_TOL) {
            return Err(Error::Domain(format!(
                "{name} = {c:?} outside the control set spanned by {name}_grid"
            )));
        }
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn euclid(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Built-in games used by the examples and the acceptance suite.
pub mod catalog {
    use super::*;

    /// `ẋ = u + v`, `u ∈ {−1, 0, 1}`, `v ∈ {−½, 0, ½}`, `g = |x|`, `T = 1`.
    /// Value: `max(|x| − ½(T − t), 0)`.
    pub fn g1() -> GameSpec {
        GameSpec::new(
            1,
            1.0,
            Drift::Sum,
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            vec![vec![-0.5], vec![0.0], vec![0.5]],
            Payoff::Norm { center: vec![0.0], scale: 1.0 },
            1.0,
            1.5,
            0.0,
        )
        .expect("g1 is well formed")
    }

    /// Closed-form value of [`g1`] with horizon `horizon`.
    pub fn g1_value(horizon: f64, t: f64, x: f64) -> f64 {
        (x.abs() - 0.5 * (horizon - t)).max(0.0)
    }

    /// `ẋ = (v·x₂ − u, u·x₁ + v)` on grids `{−1, 0, 1}`, `g = ‖x‖`; the
    /// declared constants hold on the unit cube.
    pub fn g2() -> GameSpec {
        GameSpec::new(
            2,
            1.0,
            Drift::Rotation,
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            vec![vec![-1.0], vec![0.0], vec![1.0]],
            Payoff::Norm { center: vec![0.0, 0.0], scale: 1.0 },
            1.0,
            2.0 * std::f64::consts::SQRT_2,
            1.0,
        )
        .expect("g2 is well formed")
        .with_sample_radius(1.0)
    }

    /// `ẋ = c` for every control; one dummy control per player.
    pub fn constant_drift(c: Vec<f64>, horizon: f64) -> GameSpec {
        let d = c.len();
        let bound = euclid(&c);
        GameSpec::new(
            d,
            horizon,
            Drift::Affine {
                a: vec![vec![0.0; d]; d],
                b_u: vec![vec![0.0]; d],
                b_v: vec![vec![0.0]; d],
                c,
            },
            vec![vec![0.0]],
            vec![vec![0.0]],
            Payoff::Norm { center: vec![0.0; d], scale: 1.0 },
            1.0,
            bound,
            0.0,
        )
        .expect("constant drift is well formed")
    }

    pub fn by_name(name: &str) -> Option<GameSpec> {
        match name {
            "g1" => Some(g1()),
            "g2" => Some(g2()),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Game definition file
// ---------------------------------------------------------------------------

/// A control in a game file: a bare number for scalar controls or a list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlEntry {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ControlEntry {
    fn into_vec(self) -> Vec<f64> {
        match self {
            ControlEntry::Scalar(x) => vec![x],
            ControlEntry::Vector(v) => v,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftEntry {
    /// Built-in dynamics: `"sum"` (`u + v`) or `"rotation"`.
    Catalog { name: String },
    Affine {
        a: Vec<Vec<f64>>,
        b_u: Vec<Vec<f64>>,
        b_v: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum PayoffEntry {
    Norm {
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "one")]
        scale: f64,
    },
    Linear { a: Vec<f64>, b: f64 },
    Constant { c: f64 },
}

fn one() -> f64 {
    1.0
}

/// On-disk JSON game definition. Field names are the file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameFile {
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub drift: DriftEntry,
    pub u_grid: Vec<ControlEntry>,
    pub v_grid: Vec<ControlEntry>,
    pub payoff: PayoffEntry,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "M1")]
    pub m1: f64,
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(default)]
    pub sample_radius: Option<f64>,
}

impl GameFile {
    pub fn into_spec(self) -> Result<GameSpec> {
        let drift = match self.drift {
            DriftEntry::Catalog { name } => match name.as_str() {
                "sum" => Drift::Sum,
                "rotation" => Drift::Rotation,
                other => {
                    return Err(Error::InvalidInput(format!("unknown catalog drift '{other}'")))
                }
            },
            DriftEntry::Affine { a, b_u, b_v, c } => Drift::Affine { a, b_u, b_v, c },
        };
        let payoff = match self.payoff {
            PayoffEntry::Norm { center, scale } => Payoff::Norm {
                center: center.unwrap_or_else(|| vec![0.0; self.d]),
                scale,
            },
            PayoffEntry::Linear { a, b } => Payoff::Linear { a, b },
            PayoffEntry::Constant { c } => Payoff::Constant(c),
        };
        let spec = GameSpec::new(
            self.d,
            self.horizon,
            drift,
            self.u_grid.into_iter().map(ControlEntry::into_vec).collect(),
            self.v_grid.into_iter().map(ControlEntry::into_vec).collect(),
            payoff,
            self.r,
            self.m1,
            self.k1,
        )
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(match self.sample_radius {
            Some(r) => spec.with_sample_radius(r),
            None => spec,
        })
    }
}

impl GameSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GameFile = serde_json::from_str(text)?;
        file.into_spec()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidInput(format!("cannot read game file {}: {e}", path.display()))
        })?;
        Self::from_json_str(&text)
    }

    /// True when this is the `u + v`, `|x|` game with the catalog grids, so
    /// its closed-form value applies.
    pub fn is_catalog_g1(&self) -> bool {
        let g1 = catalog::g1();
        matches!(self.drift, Drift::Sum)
            && self.dim == 1
            && self.u_grid == g1.u_grid
            && self.v_grid == g1.v_grid
            && matches!(&self.payoff, Payoff::Norm { center, scale } if center == &[0.0] && *scale == 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g1_drift_examples() {
        let g = catalog::g1();
        assert_eq!(g.eval_drift(0.0, &[0.0], &[1.0], &[-0.5]).unwrap(), vec![0.5]);
        assert_eq!(g.eval_drift(0.0, &[0.0], &[-1.0], &[0.5]).unwrap(), vec![-0.5]);
        assert!(matches!(
            g.eval_drift(0.0, &[0.0], &[1.0], &[-1.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn drift_time_outside_horizon_rejected() {
        let g = catalog::g1();
        assert!(g.eval_drift(1.5, &[0.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn non_finite_drift_names_arguments() {
        let g = GameSpec::new(
            1,
            1.0,
            Drift::Custom(Arc::new(|_, x, _, _, out| out[0] = 1.0 / x[0])),
            vec![vec![0.0]],
            vec![vec![0.0]],
            Payoff::Constant(0.0),
            0.0,
            1.0,
            0.0,
        )
        .unwrap();
        let err = g.eval_drift(0.25, &[0.0], &[0.0], &[0.0]).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::InvalidSpec(_)));
        assert!(msg.contains("t=0.25"), "{msg}");
    }

    #[test]
    fn g1_payoff_examples() {
        let g = catalog::g1();
        assert_eq!(g.eval_payoff(&[0.0]).unwrap(), 0.0);
        assert_eq!(g.eval_payoff(&[-2.0]).unwrap(), 2.0);
        assert_eq!(g.eval_payoff(&[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn g1_isaacs_gap_is_zero() {
        let r = catalog::g1().check_isaacs(500, 3).unwrap();
        assert_eq!(r.max_gap, 0.0);
        assert_eq!(r.samples, 500);
    }

    #[test]
    fn zero_direction_has_zero_gap() {
        let g = catalog::g2();
        assert_eq!(g.isaacs_gap(0.3, &[0.2, -0.7], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn coupled_controls_break_isaacs() {
        // f = u·v on {−1, 1}²: min max = |ξ|, max min = −|ξ|.
        let g = GameSpec::new(
            1,
            1.0,
            Drift::Custom(Arc::new(|_, _, u, v, out| out[0] = u[0] * v[0])),
            vec![vec![-1.0], vec![1.0]],
            vec![vec![-1.0], vec![1.0]],
            Payoff::Constant(0.0),
            0.0,
            1.0,
            0.0,
        )
        .unwrap();
        assert_eq!(g.isaacs_gap(0.0, &[0.0], &[0.75]), 1.5);
        assert_eq!(g.isaacs_gap(0.0, &[0.0], &[-0.25]), 0.5);
    }

    #[test]
    fn catalog_constants_validate() {
        catalog::g1().validate(2000, 1).unwrap();
        catalog::g2().validate(2000, 1).unwrap();
        catalog::constant_drift(vec![0.7, -0.2], 1.0).validate(200, 1).unwrap();
    }

    #[test]
    fn understated_bound_is_caught() {
        let mut g = catalog::g1();
        g.drift_bound = 1.0;
        assert!(matches!(g.validate(2000, 1), Err(Error::InvalidSpec(_))));
        let mut g = catalog::g1();
        g.payoff_lipschitz = 0.5;
        assert!(g.validate(2000, 1).is_err());
    }

    #[test]
    fn empty_grid_rejected() {
        let r = GameSpec::new(
            1,
            1.0,
            Drift::Sum,
            vec![],
            vec![vec![0.0]],
            Payoff::Constant(0.0),
            0.0,
            0.0,
            0.0,
        );
        assert!(r.is_err());
    }

    #[test]
    fn game_file_round_trip() {
        let text = r#"{
            "d": 1, "T": 1.0,
            "drift": {"kind": "catalog", "name": "sum"},
            "u_grid": [-1, 0, 1], "v_grid": [-0.5, 0, 0.5],
            "payoff": {"kind": "norm", "params": {}},
            "R": 1.0, "M1": 1.5, "K1": 0.0
        }"#;
        let g = GameSpec::from_json_str(text).unwrap();
        assert!(g.is_catalog_g1());
        assert_eq!(g.eval_payoff(&[-3.0]).unwrap(), 3.0);

        let affine = r#"{
            "d": 2, "T": 0.5,
            "drift": {"kind": "affine", "a": [[0,0],[0,0]], "b_u": [[1],[0]], "b_v": [[0],[1]], "c": [0, 0]},
            "u_grid": [[-1], [1]], "v_grid": [[-1], [1]],
            "payoff": {"kind": "linear", "params": {"a": [1, 2], "b": 0.5}},
            "R": 2.3, "M1": 1.5, "K1": 0.0
        }"#;
        let g = GameSpec::from_json_str(affine).unwrap();
        assert!(!g.is_catalog_g1());
        assert_eq!(g.eval_drift(0.0, &[0.0, 0.0], &[1.0], &[-1.0]).unwrap(), vec![1.0, -1.0]);
        assert_eq!(g.eval_payoff(&[1.0, 1.0]).unwrap(), 3.5);
    }

    #[test]
    fn bad_game_file_is_input_error() {
        assert!(GameSpec::from_json_str("{\"d\": 1}").is_err());
        let text = r#"{"d": 1, "T": 1.0, "drift": {"kind": "catalog", "name": "nope"},
            "u_grid": [0], "v_grid": [0], "payoff": {"kind": "constant", "params": {"c": 1}},
            "R": 0, "M1": 0, "K1": 0}"#;
        assert!(matches!(GameSpec::from_json_str(text), Err(Error::InvalidInput(_))));
    }
}
