//! Explicit finite differences for the vanishing-viscosity equation
//!
//! ```text
//! ∂ψ/∂t + min_u max_v ⟨∇ψ, f⟩ + (σ²/2) Δψ = 0,   ψ(T, x) = g(x).
//! ```
//!
//! The transport term is upwinded separately for every control pair, so each
//! `(u, v)` entry of the minimax table is a monotone difference; min and max
//! of monotone operators stay monotone. The Laplacian uses centered second
//! differences. Boundary points of the box keep the terminal payoff.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::hjb::{grid_time, minimax, snap_index, time_grid, ValueGrid};
use crate::lattice::{LatticeDomain, RATE_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct ViscousGrid {
    pub t: f64,
    pub sigma: f64,
    pub domain: Arc<LatticeDomain>,
    pub values: Vec<f64>,
}

impl ViscousGrid {
    pub fn dx(&self) -> f64 {
        self.domain.h
    }

    pub fn as_value_grid(&self) -> ValueGrid {
        ValueGrid { t: self.t, domain: self.domain.clone(), values: self.values.clone() }
    }

    pub fn value_at(&self, point: &[i64]) -> Option<f64> {
        self.domain.index_of(point).map(|k| self.values[k])
    }
}

/// `1 / (2 (d M1 / dx + d σ² / dx²))`.
pub fn cfl_ceiling(spec: &GameSpec, sigma: f64, dx: f64) -> f64 {
    let d = spec.dim as f64;
    let rate = d * spec.drift_bound / dx + d * sigma * sigma / (dx * dx);
    if rate == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (2.0 * rate)
    }
}

fn on_ring(domain: &LatticeDomain, point: &[i64]) -> bool {
    point
        .iter()
        .zip(domain.lo.iter().zip(&domain.hi))
        .any(|(p, (lo, hi))| p == lo || p == hi)
}

struct Stencil<'a> {
    spec: &'a GameSpec,
    domain: &'a LatticeDomain,
    sigma: f64,
    point: Vec<i64>,
    state: Vec<f64>,
    f: Vec<f64>,
    table: Vec<f64>,
}

impl<'a> Stencil<'a> {
    /// Time derivative magnitude `min max ⟨∇ψ, f⟩ + σ²/2 Δψ` at interior index `k`.
    fn rhs(&mut self, values: &[f64], t: f64, k: usize) -> Result<f64> {
        let dx = self.domain.h;
        self.domain.point_into(k, &mut self.point);
        if on_ring(self.domain, &self.point) {
            return Ok(0.0);
        }
        for (s, p) in self.state.iter_mut().zip(&self.point) {
            *s = *p as f64 * dx;
        }
        let here = values[k];
        let d = self.spec.dim;
        let nb = |axis: usize, step: i8, pt: &[i64]| -> f64 {
            values[self.domain.neighbor(k, pt, axis, step).expect("interior point")]
        };
        let nv = self.spec.v_grid.len();
        for ui in 0..self.spec.u_grid.len() {
            for vi in 0..nv {
                self.spec.drift_at(t, &self.state, ui, vi, &mut self.f);
                let mut acc = 0.0;
                for axis in 0..d {
                    let fi = self.f[axis];
                    if fi.abs() < RATE_FLOOR {
                        continue;
                    }
                    let step = if fi > 0.0 { 1 } else { -1 };
                    acc += fi.abs() * (nb(axis, step, &self.point) - here) / dx;
                }
                self.table[ui * nv + vi] = acc;
            }
        }
        let transport = minimax(&self.table, self.spec.u_grid.len(), nv).1;
        let mut lap = 0.0;
        if self.sigma != 0.0 {
            for axis in 0..d {
                lap += nb(axis, 1, &self.point) - 2.0 * here + nb(axis, -1, &self.point);
            }
            lap /= dx * dx;
        }
        let out = transport + 0.5 * self.sigma * self.sigma * lap;
        if !out.is_finite() {
            return Err(Error::InvalidSpec(format!("non-finite update at t={t}, x={:?}", self.state)));
        }
        Ok(out)
    }
}

/// Backward explicit integration from `T` to the earliest checkpoint.
/// Returns the checkpoint slices in decreasing time.
pub fn solve_viscous(
    spec: &GameSpec,
    sigma: f64,
    domain: Arc<LatticeDomain>,
    dt: f64,
    checkpoints: &[f64],
) -> Result<Vec<ViscousGrid>> {
    let dx = domain.h;
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma = {sigma} must be >= 0")));
    }
    if domain.dim() != spec.dim {
        return Err(Error::InvalidInput("domain dimension differs from the game".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::StepSize(format!("dt = {dt} must be > 0")));
    }
    let ceiling = cfl_ceiling(spec, sigma, dx);
    if dt > ceiling * (1.0 + 1e-12) {
        return Err(Error::StepSize(format!("dt = {dt} exceeds the CFL ceiling {ceiling}")));
    }
    if checkpoints.is_empty() {
        return Err(Error::InvalidInput("at least one checkpoint is required".into()));
    }
    if let Some(c) = checkpoints.iter().find(|c| !(**c >= 0.0 && **c <= spec.horizon)) {
        return Err(Error::Domain(format!("checkpoint {c} outside [0, {}]", spec.horizon)));
    }
    let horizon = spec.horizon;
    let t_min = checkpoints.iter().copied().fold(f64::INFINITY, f64::min);
    let (n, dt_eff) = time_grid(horizon, t_min, dt);
    let mut wanted: Vec<usize> = checkpoints.iter().map(|&c| snap_index(horizon, dt_eff, n, c)).collect();
    wanted.sort_unstable();
    wanted.dedup();

    let terminal = ValueGrid::terminal(spec, domain.clone())?;
    let mut current = terminal.values;
    let mut out = Vec::new();
    if wanted.contains(&0) {
        out.push(ViscousGrid { t: horizon, sigma, domain: domain.clone(), values: current.clone() });
    }
    let new_stencil = || Stencil {
        spec,
        domain: &domain,
        sigma,
        point: vec![0; spec.dim],
        state: vec![0.0; spec.dim],
        f: vec![0.0; spec.dim],
        table: vec![0.0; spec.u_grid.len() * spec.v_grid.len()],
    };
    for k in 0..n {
        let t = grid_time(horizon, dt_eff, n, k, t_min);
        let t_next = grid_time(horizon, dt_eff, n, k + 1, t_min);
        let step = t - t_next;
        let rhs: Vec<f64> = (0..domain.len())
            .into_par_iter()
            .map_init(new_stencil, |st, j| st.rhs(&current, t, j))
            .collect::<Result<_>>()?;
        for (c, r) in current.iter_mut().zip(&rhs) {
            *c += step * r;
        }
        if wanted.binary_search(&(k + 1)).is_ok() {
            out.push(ViscousGrid { t: t_next, sigma, domain: domain.clone(), values: current.clone() });
        }
    }
    Ok(out)
}

/// `max_x |ψ(x) − val_ref(x)|` over the grid.
pub fn viscosity_gap(psi: &ViscousGrid, val_ref: impl Fn(&[f64]) -> f64) -> f64 {
    (0..psi.domain.len())
        .map(|k| (psi.values[k] - val_ref(&psi.domain.state_of(k))).abs())
        .fold(0.0, f64::max)
}
