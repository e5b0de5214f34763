//! Backward solver for the lattice Isaacs–Bellman system
//!
//! ```text
//! d/dt η(t, x) + H[t, η(t, ·)](x) = 0,   η(T, x) = g(x),   x ∈ hℤ^d,
//! H[t, ρ](x) = min_u max_v Σ_i |f_i(t, x, u, v)| (ρ(x + h χ_i) − ρ(x)) / h
//! ```
//!
//! (upper value; the lower value swaps the order of min and max). The
//! countable system is truncated to a lattice box. At the box boundary a
//! jump target outside the box takes the value of the nearest in-box point,
//! which for axis jumps is the point itself, so that jump contributes
//! nothing. The explicit Euler scheme is monotone under
//! `dt ≤ h / (2 d M1)`; classical RK4 is offered as a non-monotone
//! higher-order option under the same ceiling.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::lattice::{LatticeDomain, DEFAULT_POINT_BUDGET, RATE_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// `min_u max_v`
    Upper,
    /// `max_v min_u`
    Lower,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Upper => "upper",
            ValueKind::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Out-of-box jump targets read the nearest in-box value.
    Freeze,
    /// Out-of-box jump targets are an error.
    Strict,
}

impl BoundaryPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryPolicy::Freeze => "freeze",
            BoundaryPolicy::Strict => "strict",
        }
    }
}

/// Values on a lattice box at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub t: f64,
    pub domain: Arc<LatticeDomain>,
    pub values: Vec<f64>,
}

impl ValueGrid {
    pub fn from_fn(t: f64, domain: Arc<LatticeDomain>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..domain.len()).map(|k| f(&domain.state_of(k))).collect();
        ValueGrid { t, domain, values }
    }

    pub fn terminal(spec: &GameSpec, domain: Arc<LatticeDomain>) -> Result<Self> {
        let grid = Self::from_fn(spec.horizon, domain, |x| spec.payoff_at(x));
        if let Some(k) = grid.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "non-finite payoff at x={:?}",
                grid.domain.state_of(k)
            )));
        }
        Ok(grid)
    }

    pub fn value_at(&self, point: &[i64]) -> Option<f64> {
        self.domain.index_of(point).map(|k| self.values[k])
    }

    /// Value at a state that lies on the lattice (to rounding).
    pub fn value_at_state(&self, x: &[f64]) -> Option<f64> {
        let p: Vec<i64> = x.iter().map(|xi| (xi / self.domain.h).round() as i64).collect();
        self.value_at(&p)
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Ordered by decreasing time, from `T` down to the earliest checkpoint.
    pub slices: Vec<ValueGrid>,
    pub kind: ValueKind,
    pub h: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub boundary_policy: BoundaryPolicy,
    /// Requested checkpoints after snapping to the integration grid.
    pub checkpoints: Vec<f64>,
}

impl SolveResult {
    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.slices[0].domain
    }

    /// The stored slice with the largest time not exceeding `t`.
    pub fn slice_at_or_below(&self, t: f64) -> Result<&ValueGrid> {
        let tol = 1e-9 * self.dt.max(1e-300);
        let k = self.slices.partition_point(|s| s.t > t + tol);
        self.slices
            .get(k)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "time {t} precedes the solved range (earliest slice t={})",
                    self.slices.last().map(|s| s.t).unwrap_or(f64::NAN)
                ))
            })
    }

    /// The slice recorded for the `i`-th requested checkpoint.
    pub fn checkpoint(&self, i: usize) -> Option<&ValueGrid> {
        let t = *self.checkpoints.get(i)?;
        self.slices.iter().find(|s| s.t == t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub scheme: Scheme,
    pub boundary: BoundaryPolicy,
    /// Keep every integration slice, not only the checkpoints.
    pub keep_all_steps: bool,
    /// Relative tolerance of the range check that flags blow-up.
    pub instability_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            scheme: Scheme::Euler,
            boundary: BoundaryPolicy::Freeze,
            keep_all_steps: false,
            instability_tol: 1e-9,
        }
    }
}

/// Largest admissible step, `h / (2 d M1)`.
pub fn stability_ceiling(spec: &GameSpec, h: f64) -> f64 {
    if spec.drift_bound == 0.0 {
        f64::INFINITY
    } else {
        h / (2.0 * spec.dim as f64 * spec.drift_bound)
    }
}

/// Per-point evaluation of the discrete Hamiltonian with reusable buffers.
struct HamiltonianEval<'a> {
    spec: &'a GameSpec,
    domain: &'a LatticeDomain,
    boundary: BoundaryPolicy,
    point: Vec<i64>,
    state: Vec<f64>,
    f: Vec<f64>,
    table: Vec<f64>,
}

impl<'a> HamiltonianEval<'a> {
    fn new(spec: &'a GameSpec, domain: &'a LatticeDomain, boundary: BoundaryPolicy) -> Self {
        HamiltonianEval {
            spec,
            domain,
            boundary,
            point: vec![0; spec.dim],
            state: vec![0.0; spec.dim],
            f: vec![0.0; spec.dim],
            table: vec![0.0; spec.u_grid.len() * spec.v_grid.len()],
        }
    }

    /// Fills the `(u, v)` table of generator values at dense index `k`.
    fn fill(&mut self, values: &[f64], t: f64, k: usize) -> Result<()> {
        let h = self.domain.h;
        self.domain.point_into(k, &mut self.point);
        for (s, p) in self.state.iter_mut().zip(&self.point) {
            *s = *p as f64 * h;
        }
        let here = values[k];
        let nv = self.spec.v_grid.len();
        for ui in 0..self.spec.u_grid.len() {
            for vi in 0..nv {
                self.spec.drift_at(t, &self.state, ui, vi, &mut self.f);
                let mut acc = 0.0;
                for (axis, &fi) in self.f.iter().enumerate() {
                    if fi.abs() < RATE_FLOOR {
                        continue;
                    }
                    let step = if fi > 0.0 { 1 } else { -1 };
                    let there = match self.domain.neighbor(k, &self.point, axis, step) {
                        Some(j) => values[j],
                        None => match self.boundary {
                            BoundaryPolicy::Freeze => here,
                            BoundaryPolicy::Strict => {
                                return Err(Error::Truncation(format!(
                                    "jump from {:?} along axis {axis} leaves the box",
                                    self.point
                                )))
                            }
                        },
                    };
                    acc += fi.abs() * (there - here) / h;
                }
                if !acc.is_finite() {
                    return Err(Error::InvalidSpec(format!(
                        "non-finite Hamiltonian term at t={t}, x={:?}",
                        self.state
                    )));
                }
                self.table[ui * nv + vi] = acc;
            }
        }
        Ok(())
    }

    fn eval(&mut self, values: &[f64], t: f64, k: usize, kind: ValueKind) -> Result<f64> {
        self.fill(values, t, k)?;
        let nu = self.spec.u_grid.len();
        let nv = self.spec.v_grid.len();
        Ok(match kind {
            ValueKind::Upper => minimax(&self.table, nu, nv).1,
            ValueKind::Lower => maximin(&self.table, nu, nv).1,
        })
    }
}

/// `(argmin_u, min_u max_v table[u][v])`, ties to the lowest index.
pub(crate) fn minimax(table: &[f64], nu: usize, nv: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for ui in 0..nu {
        let row = &table[ui * nv..(ui + 1) * nv];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m < best.1 {
            best = (ui, m);
        }
    }
    best
}

/// `(argmax_v, max_v min_u table[u][v])`, ties to the lowest index.
pub(crate) fn maximin(table: &[f64], nu: usize, nv: usize) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for vi in 0..nv {
        let m = (0..nu).map(|ui| table[ui * nv + vi]).fold(f64::INFINITY, f64::min);
        if m > best.1 {
            best = (vi, m);
        }
    }
    best
}

/// `H[t, grid](x)` at lattice point `point`.
pub fn hamiltonian(
    grid: &ValueGrid,
    spec: &GameSpec,
    t: f64,
    point: &[i64],
    kind: ValueKind,
    boundary: BoundaryPolicy,
) -> Result<f64> {
    let k = grid
        .domain
        .index_of(point)
        .ok_or_else(|| Error::Truncation(format!("point {point:?} outside the box")))?;
    HamiltonianEval::new(spec, &grid.domain, boundary).eval(&grid.values, t, k, kind)
}

/// `H[t, grid]` at every point of the box.
pub fn hamiltonian_map(
    grid: &ValueGrid,
    spec: &GameSpec,
    t: f64,
    kind: ValueKind,
    boundary: BoundaryPolicy,
) -> Result<ValueGrid> {
    let values = apply_map(spec, &grid.domain, &grid.values, t, kind, boundary)?;
    Ok(ValueGrid { t, domain: grid.domain.clone(), values })
}

fn apply_map(
    spec: &GameSpec,
    domain: &LatticeDomain,
    values: &[f64],
    t: f64,
    kind: ValueKind,
    boundary: BoundaryPolicy,
) -> Result<Vec<f64>> {
    (0..domain.len())
        .into_par_iter()
        .map_init(
            || HamiltonianEval::new(spec, domain, boundary),
            |ev, k| ev.eval(values, t, k, kind),
        )
        .collect()
}

/// The minimizing `u` index of the upper Hamiltonian at a point.
pub fn upper_argmin(
    grid: &ValueGrid,
    spec: &GameSpec,
    t: f64,
    point: &[i64],
    boundary: BoundaryPolicy,
) -> Result<usize> {
    let k = grid
        .domain
        .index_of(point)
        .ok_or_else(|| Error::Truncation(format!("point {point:?} outside the box")))?;
    let mut ev = HamiltonianEval::new(spec, &grid.domain, boundary);
    ev.fill(&grid.values, t, k)?;
    Ok(minimax(&ev.table, spec.u_grid.len(), spec.v_grid.len()).0)
}

/// `sup_x |a(x) − b(x)| / (h + ‖x‖)`; `b = None` means the zero grid.
pub fn weighted_norm(a: &ValueGrid, b: Option<&ValueGrid>) -> Result<f64> {
    if let Some(b) = b {
        if a.domain != b.domain {
            return Err(Error::InvalidInput("weighted norm needs a common domain".into()));
        }
    }
    Ok(weighted_norm_values(&a.domain, &a.values, b.map(|g| g.values.as_slice())))
}

pub(crate) fn weighted_norm_values(domain: &LatticeDomain, a: &[f64], b: Option<&[f64]>) -> f64 {
    let h = domain.h;
    let mut point = vec![0; domain.dim()];
    let mut best: f64 = 0.0;
    for (k, &ak) in a.iter().enumerate() {
        domain.point_into(k, &mut point);
        let norm = point
            .iter()
            .map(|&p| {
                let x = p as f64 * h;
                x * x
            })
            .sum::<f64>()
            .sqrt();
        let diff = match b {
            Some(b) => ak - b[k],
            None => ak,
        };
        best = best.max(diff.abs() / (h + norm));
    }
    best
}

/// Lattice box covering `[x0_lo, x0_hi]` inflated by `M1 (T − t0) + pad`
/// in every coordinate, rounded outward.
pub fn truncate_domain(
    spec: &GameSpec,
    x0_lo: &[f64],
    x0_hi: &[f64],
    t0: f64,
    h: f64,
    pad: f64,
) -> Result<LatticeDomain> {
    truncate_domain_with_budget(spec, x0_lo, x0_hi, t0, h, pad, DEFAULT_POINT_BUDGET)
}

pub fn truncate_domain_with_budget(
    spec: &GameSpec,
    x0_lo: &[f64],
    x0_hi: &[f64],
    t0: f64,
    h: f64,
    pad: f64,
    budget: usize,
) -> Result<LatticeDomain> {
    if !(pad >= 0.0) {
        return Err(Error::InvalidInput(format!("pad {pad} must be >= 0")));
    }
    if x0_lo.len() != spec.dim || x0_hi.len() != spec.dim {
        return Err(Error::InvalidInput("initial box has the wrong dimension".into()));
    }
    if !(t0 >= 0.0 && t0 <= spec.horizon) {
        return Err(Error::Domain(format!("t0 = {t0} outside [0, {}]", spec.horizon)));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("mesh h = {h} must be > 0")));
    }
    let radius = spec.drift_bound * (spec.horizon - t0) + pad;
    const SNAP: f64 = 1e-9;
    let lo = x0_lo.iter().map(|x| ((x - radius) / h + SNAP).floor() as i64).collect();
    let hi = x0_hi.iter().map(|x| ((x + radius) / h - SNAP).ceil() as i64).collect();
    LatticeDomain::with_budget(h, lo, hi, budget)
}

/// Integration grid: `n` equal steps from `T` down to `t_min`.
pub(crate) fn time_grid(horizon: f64, t_min: f64, dt_max: f64) -> (usize, f64) {
    let span = horizon - t_min;
    if span <= 0.0 {
        return (0, dt_max);
    }
    let n = ((span / dt_max) - 1e-9).ceil().max(1.0) as usize;
    (n, span / n as f64)
}

/// Step index of the grid time at or below checkpoint `c`.
pub(crate) fn snap_index(horizon: f64, dt: f64, n: usize, c: f64) -> usize {
    let k = ((horizon - c) / dt - 1e-9).ceil().max(0.0) as usize;
    k.min(n)
}

pub(crate) fn grid_time(horizon: f64, dt: f64, n: usize, k: usize, t_min: f64) -> f64 {
    if k == n {
        t_min
    } else {
        horizon - k as f64 * dt
    }
}

/// Integrates `dη/dt = −H[t, η]` from `T` down to the earliest checkpoint.
pub fn solve_backward(
    spec: &GameSpec,
    domain: Arc<LatticeDomain>,
    dt: f64,
    kind: ValueKind,
    checkpoints: &[f64],
    options: SolverOptions,
) -> Result<SolveResult> {
    let h = domain.h;
    if domain.dim() != spec.dim {
        return Err(Error::InvalidInput("domain dimension differs from the game".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::StepSize(format!("dt = {dt} must be > 0")));
    }
    let ceiling = stability_ceiling(spec, h);
    if dt > ceiling * (1.0 + 1e-12) {
        return Err(Error::StepSize(format!(
            "dt = {dt} exceeds the stability ceiling h/(2 d M1) = {ceiling}"
        )));
    }
    if checkpoints.is_empty() {
        return Err(Error::InvalidInput("at least one checkpoint is required".into()));
    }
    if let Some(c) = checkpoints.iter().find(|c| !(**c >= 0.0 && **c <= spec.horizon)) {
        return Err(Error::Domain(format!("checkpoint {c} outside [0, {}]", spec.horizon)));
    }
    let t_min = checkpoints.iter().copied().fold(f64::INFINITY, f64::min);
    let horizon = spec.horizon;
    let (n, dt_eff) = time_grid(horizon, t_min, dt);
    let mut wanted: Vec<usize> = checkpoints
        .iter()
        .map(|&c| snap_index(horizon, dt_eff, n, c))
        .collect();
    wanted.sort_unstable();
    wanted.dedup();
    let snapped: Vec<f64> = checkpoints
        .iter()
        .map(|&c| grid_time(horizon, dt_eff, n, snap_index(horizon, dt_eff, n, c), t_min))
        .collect();

    let terminal = ValueGrid::terminal(spec, domain.clone())?;
    let g_min = terminal.values.iter().copied().fold(f64::INFINITY, f64::min);
    let g_max = terminal.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Euler under the ceiling averages neighbouring values, so the solution
    // stays inside the payoff range; RK4 may overshoot by a bounded amount.
    let spread = match options.scheme {
        Scheme::Euler => 0.0,
        Scheme::Rk4 => g_max - g_min,
    };
    let slack = options.instability_tol * g_min.abs().max(g_max.abs()).max(1.0) + spread;
    let (floor, ceil) = (g_min - slack, g_max + slack);
    let mut slices = Vec::new();
    let keep = |k: usize| options.keep_all_steps || wanted.binary_search(&k).is_ok();
    if keep(0) {
        slices.push(terminal.clone());
    }
    let mut current = terminal.values;
    for k in 0..n {
        let t = grid_time(horizon, dt_eff, n, k, t_min);
        let t_next = grid_time(horizon, dt_eff, n, k + 1, t_min);
        let step = t - t_next;
        let next = match options.scheme {
            Scheme::Euler => {
                let hv = apply_map(spec, &domain, &current, t, kind, options.boundary)?;
                current.iter().zip(&hv).map(|(e, hx)| e + step * hx).collect::<Vec<_>>()
            }
            Scheme::Rk4 => {
                let tm = t - 0.5 * step;
                let k1 = apply_map(spec, &domain, &current, t, kind, options.boundary)?;
                let y2 = axpy(&current, 0.5 * step, &k1);
                let k2 = apply_map(spec, &domain, &y2, tm, kind, options.boundary)?;
                let y3 = axpy(&current, 0.5 * step, &k2);
                let k3 = apply_map(spec, &domain, &y3, tm, kind, options.boundary)?;
                let y4 = axpy(&current, step, &k3);
                let k4 = apply_map(spec, &domain, &y4, t_next, kind, options.boundary)?;
                (0..current.len())
                    .map(|j| current[j] + step / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
                    .collect()
            }
        };
        current = next;
        if let Some(j) = current.iter().position(|v| !(*v >= floor && *v <= ceil)) {
            return Err(Error::StepSize(format!(
                "value {:.6e} at t={t_next}, x={:?} left the payoff range [{g_min:.6e}, {g_max:.6e}]; \
                 the declared M1 may be too small or dt too large",
                current[j],
                domain.state_of(j)
            )));
        }
        if keep(k + 1) {
            slices.push(ValueGrid { t: t_next, domain: domain.clone(), values: current.clone() });
        }
    }
    Ok(SolveResult {
        slices,
        kind,
        h,
        dt: dt_eff,
        scheme: options.scheme,
        boundary_policy: options.boundary,
        checkpoints: snapped,
    })
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(yi, xi)| yi + a * xi).collect()
}

/// Largest change of the `t0` values on the region of interest when the
/// reachability pad is doubled.
pub fn boundary_influence(
    spec: &GameSpec,
    x0_lo: &[f64],
    x0_hi: &[f64],
    t0: f64,
    h: f64,
    pad: f64,
    dt: f64,
    kind: ValueKind,
) -> Result<f64> {
    let solve = |p: f64| -> Result<SolveResult> {
        let dom = Arc::new(truncate_domain(spec, x0_lo, x0_hi, t0, h, p)?);
        solve_backward(spec, dom, dt, kind, &[t0], SolverOptions::default())
    };
    let a = solve(pad)?;
    let b = solve(2.0 * pad.max(h))?;
    let ga = a.slices.last().expect("t0 slice");
    let gb = b.slices.last().expect("t0 slice");
    let lo: Vec<i64> = x0_lo.iter().map(|x| (x / h).floor() as i64).collect();
    let hi: Vec<i64> = x0_hi.iter().map(|x| (x / h).ceil() as i64).collect();
    let region = LatticeDomain::new(h, lo, hi)?;
    let mut worst: f64 = 0.0;
    for k in 0..region.len() {
        let p = region.point_of(k);
        if let (Some(va), Some(vb)) = (ga.value_at(&p), gb.value_at(&p)) {
            worst = worst.max((va - vb).abs());
        }
    }
    Ok(worst)
}
