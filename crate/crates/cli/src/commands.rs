use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::anyhow;
use serde::Serialize;

use lattice_game::bounds::{self, BoundsReport};
use lattice_game::hjb::{
    self, solve_backward, truncate_domain, SolveResult, SolverOptions, ValueGrid, ValueKind,
};
use lattice_game::io::{self, fmt_f64, Metadata};
use lattice_game::lattice::LatticeDomain;
use lattice_game::rng::derive_seed;
use lattice_game::shift::{self, Adversary, Partition, ShiftOptions};
use lattice_game::sim::{run_replicas, OutcomeEstimate};
use lattice_game::viscous::{self, ViscousGrid};
use lattice_game::{catalog, GameSpec};

use crate::config::{DtPolicy, RunConfig};
use crate::Failure;

const BOUND_SAMPLES: usize = 10_000;
const RANDOM_HOLD: f64 = 0.1;

fn base_meta(hash: &str, seed: u64) -> Metadata {
    let mut m = Metadata::new();
    m.insert("config_hash".into(), hash.to_string());
    m.insert("seed".into(), seed.to_string());
    m
}

fn x0_box(x0s: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = x0s[0].len();
    let lo = (0..d).map(|i| x0s.iter().map(|x| x[i]).fold(f64::INFINITY, f64::min)).collect();
    let hi = (0..d).map(|i| x0s.iter().map(|x| x[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
    (lo, hi)
}

fn fmt_vec(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Value at the lattice point nearest to `x` and the rounding distance.
fn value_near(grid: &ValueGrid, x: &[f64]) -> anyhow::Result<(f64, f64)> {
    let p = LatticeDomain::round_to_lattice(x, grid.domain.h);
    let v = grid
        .value_at(&p)
        .ok_or_else(|| anyhow!("x0 {x:?} lies outside the value grid"))?;
    let dist = x
        .iter()
        .zip(&p)
        .map(|(a, &k)| (a - k as f64 * grid.domain.h).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((v, dist))
}

fn lattice_dt(cfg: &RunConfig, spec: &GameSpec, h: f64) -> f64 {
    match cfg.dt_policy {
        DtPolicy::Auto => hjb::stability_ceiling(spec, h).min(spec.horizon),
        DtPolicy::Value(v) => v,
    }
}

fn viscous_dt(cfg: &RunConfig, spec: &GameSpec, sigma: f64) -> f64 {
    match cfg.dt_policy {
        DtPolicy::Auto => viscous::cfl_ceiling(spec, sigma, cfg.dx).min(spec.horizon),
        DtPolicy::Value(v) => v,
    }
}

fn solve_lattice(
    cfg: &RunConfig,
    spec: &GameSpec,
    h: f64,
    kind: ValueKind,
    keep_all_steps: bool,
) -> Result<SolveResult, Failure> {
    let x0s = cfg.initial_states(spec.dim).map_err(Failure::usage)?;
    let (lo, hi) = x0_box(&x0s);
    let dom = Arc::new(truncate_domain(spec, &lo, &hi, 0.0, h, cfg.pad)?);
    let opts = SolverOptions { keep_all_steps, ..Default::default() };
    Ok(solve_backward(spec, dom, lattice_dt(cfg, spec, h), kind, &[0.0], opts)?)
}

fn solve_psi(cfg: &RunConfig, spec: &GameSpec, sigma: f64) -> Result<(ViscousGrid, f64), Failure> {
    let x0s = cfg.initial_states(spec.dim).map_err(Failure::usage)?;
    let (lo, hi) = x0_box(&x0s);
    // diffusion spreads beyond the drift reach; widen by a few standard deviations
    let pad = cfg.pad + 4.0 * sigma * spec.horizon.sqrt();
    let dom = Arc::new(truncate_domain(spec, &lo, &hi, 0.0, cfg.dx, pad)?);
    let dt = viscous_dt(cfg, spec, sigma);
    let mut out = viscous::solve_viscous(spec, sigma, dom, dt, &[0.0])?;
    Ok((out.pop().expect("t0 slice"), dt))
}

#[derive(Serialize)]
struct BoundsFile<'a> {
    config_hash: &'a str,
    seed: u64,
    reports: &'a [BoundsReport],
}

fn write_bounds(dir: &Path, hash: &str, seed: u64, reports: &[BoundsReport]) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(&BoundsFile { config_hash: hash, seed, reports })
        .map_err(Failure::numeric)?;
    std::fs::write(dir.join("bounds.json"), json + "\n").map_err(Failure::usage)?;
    let mut text = format!("config_hash={hash}\nseed={seed}\n");
    for r in reports {
        text.push('\n');
        text.push_str(&r.to_text());
    }
    std::fs::write(dir.join("bounds.txt"), text).map_err(Failure::usage)?;
    Ok(())
}

pub fn solve(cfg: &RunConfig) -> Result<(), Failure> {
    let (spec, hash) = cfg.load_game()?;
    let out = cfg.out_dir()?.to_path_buf();
    let x0s = cfg.initial_states(spec.dim).map_err(Failure::usage)?;
    for &h in &cfg.h {
        let dir: PathBuf = if cfg.h.len() == 1 { out.clone() } else { out.join(format!("h_{h}")) };
        std::fs::create_dir_all(&dir).map_err(Failure::usage)?;
        let upper = solve_lattice(cfg, &spec, h, ValueKind::Upper, true)?;
        let lower = solve_lattice(cfg, &spec, h, ValueKind::Lower, false)?;
        let mut meta = base_meta(&hash, cfg.seed);
        meta.extend(io::solution_metadata(&upper));
        let up0 = upper.slices.last().expect("t0 slice");
        let lo0 = lower.slices.last().expect("t0 slice");
        io::write_grids(dir.join("eta_upper_t0.csv"), &[up0], &meta)?;
        meta.extend(io::solution_metadata(&lower));
        io::write_grids(dir.join("eta_lower_t0.csv"), &[lo0], &meta)?;
        io::write_solution(dir.join("eta_upper_slices.csv"), &upper, &base_meta(&hash, cfg.seed))?;

        let report = bounds::assemble_with(&spec, h, cfg.sigma.first().copied(), BOUND_SAMPLES, cfg.seed)?;
        write_bounds(&dir, &hash, cfg.seed, std::slice::from_ref(&report))?;
        for x0 in &x0s {
            let (vu, _) = value_near(up0, x0).map_err(Failure::usage)?;
            let (vl, _) = value_near(lo0, x0).map_err(Failure::usage)?;
            println!("h={h} x0={} eta_upper={vu:.10} eta_lower={vl:.10}", fmt_vec(x0));
        }

        for &sigma in &cfg.sigma {
            let (psi, dt) = solve_psi(cfg, &spec, sigma)?;
            let mut meta = base_meta(&hash, cfg.seed);
            meta.insert("sigma".into(), fmt_f64(sigma));
            meta.insert("dx".into(), fmt_f64(cfg.dx));
            meta.insert("dt".into(), fmt_f64(dt));
            io::write_grids(dir.join(format!("psi_sigma_{sigma}_t0.csv")), &[&psi.as_value_grid()], &meta)?;
            for x0 in &x0s {
                let (v, _) = value_near(&psi.as_value_grid(), x0).map_err(Failure::usage)?;
                println!("sigma={sigma} x0={} psi={v:.10}", fmt_vec(x0));
            }
        }
    }
    Ok(())
}

/// Reference value at `t = 0`.
enum Reference {
    Closed(GameSpec),
    Grid(ValueGrid),
}

impl Reference {
    fn at(&self, x: &[f64]) -> anyhow::Result<f64> {
        match self {
            Reference::Closed(spec) => Ok(catalog::g1_value(spec.horizon, 0.0, x[0])),
            Reference::Grid(g) => g
                .value_at_state(x)
                .filter(|_| {
                    let p: Vec<f64> = x.iter().map(|v| v / g.domain.h).collect();
                    p.iter().all(|q| (q - q.round()).abs() < 1e-6)
                })
                .ok_or_else(|| anyhow!("reference grid has no value at x0 {x:?}")),
        }
    }
}

fn empirical_order(prev: Option<(f64, f64)>, param: f64, err: f64) -> String {
    match prev {
        Some((p0, e0)) if e0 > 0.0 && err > 0.0 && p0 != param => {
            format!("{:.6}", (e0 / err).ln() / (p0 / param).ln())
        }
        _ => String::new(),
    }
}

pub fn converge(cfg: &RunConfig) -> Result<(), Failure> {
    let (spec, hash) = cfg.load_game()?;
    let out = cfg.out_dir()?.to_path_buf();
    let reference = match &cfg.reference {
        Some(path) => {
            let (grids, _) = io::read_grids(path)?;
            let g = grids
                .into_iter()
                .min_by(|a, b| a.t.total_cmp(&b.t))
                .expect("read_grids returns at least one grid");
            Reference::Grid(g)
        }
        None if spec.is_catalog_g1() => Reference::Closed(spec.clone()),
        None => {
            return Err(Failure::usage(anyhow!(
                "no reference value: pass --reference FILE (closed form exists only for the u+v, |x| game)"
            )))
        }
    };
    let x0s = cfg.initial_states(spec.dim).map_err(Failure::usage)?;
    let refs: Vec<f64> = x0s.iter().map(|x| reference.at(x)).collect::<anyhow::Result<_>>().map_err(Failure::usage)?;
    let r = spec.payoff_lipschitz;

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut prev = None;
    for &h in &cfg.h {
        let sol = solve_lattice(cfg, &spec, h, ValueKind::Upper, false)?;
        let g0 = sol.slices.last().expect("t0 slice");
        let mut err: f64 = 0.0;
        let mut rounding: f64 = 0.0;
        for (x, v) in x0s.iter().zip(&refs) {
            let (eta, dist) = value_near(g0, x).map_err(Failure::usage)?;
            err = err.max((eta - v).abs());
            rounding = rounding.max(dist);
        }
        let report = bounds::assemble_with(&spec, h, None, BOUND_SAMPLES, cfg.seed)?;
        let bound = report.bound_thm2 + r * rounding;
        rows.push(vec![
            "h".into(),
            fmt_f64(h),
            fmt_f64(err),
            fmt_f64(bound),
            (err <= bound).to_string(),
            empirical_order(prev, h, err),
        ]);
        println!("h={h} error={err:.6e} bound={bound:.6e} ok={}", err <= bound);
        prev = Some((h, err));
    }
    let mut prev = None;
    for &sigma in &cfg.sigma {
        let (psi, _) = solve_psi(cfg, &spec, sigma)?;
        let g0 = psi.as_value_grid();
        let mut err: f64 = 0.0;
        let mut rounding: f64 = 0.0;
        for (x, v) in x0s.iter().zip(&refs) {
            let (val, dist) = value_near(&g0, x).map_err(Failure::usage)?;
            err = err.max((val - v).abs());
            rounding = rounding.max(dist);
        }
        let report = bounds::assemble_with(&spec, cfg.h[0], Some(sigma), BOUND_SAMPLES, cfg.seed)?;
        let bound = report.bound_visc + r * rounding;
        rows.push(vec![
            "sigma".into(),
            fmt_f64(sigma),
            fmt_f64(err),
            fmt_f64(bound),
            (err <= bound).to_string(),
            empirical_order(prev, sigma, err),
        ]);
        println!("sigma={sigma} error={err:.6e} bound={bound:.6e} ok={}", err <= bound);
        prev = Some((sigma, err));
    }
    let mut meta = base_meta(&hash, cfg.seed);
    meta.insert("dx".into(), fmt_f64(cfg.dx));
    io::write_table(
        out.join("convergence.csv"),
        &meta,
        &["kind", "value", "error", "paper_bound", "bound_satisfied", "empirical_order"],
        rows,
    )?;
    Ok(())
}

pub fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let (spec, hash) = cfg.load_game()?;
    if cfg.replicas < 2 {
        return Err(Failure::usage(anyhow!(
            "simulate needs at least 2 replicas for a standard error, got {}",
            cfg.replicas
        )));
    }
    let out = cfg.out_dir()?.to_path_buf();
    let eta_path = cfg.eta.clone().unwrap_or_else(|| out.join("eta_upper_slices.csv"));
    if !eta_path.exists() {
        return Err(Failure::usage(anyhow!(
            "value slices {} not found; run `lgame solve` first or pass --eta",
            eta_path.display()
        )));
    }
    let (eta, _) = io::read_solution(&eta_path)?;
    if eta.kind != ValueKind::Upper {
        return Err(Failure::usage(anyhow!("{} does not hold upper values", eta_path.display())));
    }
    let h = eta.h;
    let report = bounds::assemble_with(&spec, h, None, BOUND_SAMPLES, cfg.seed)?;
    let partition = Partition::uniform(0.0, spec.horizon, cfg.partition_diam)?;
    let panel = Adversary::panel(&spec, derive_seed(cfg.seed, 0xAD), RANDOM_HOLD);
    let x0s = cfg.initial_states(spec.dim).map_err(Failure::usage)?;
    let g0 = eta.slices.last().expect("t0 slice");
    let r = spec.payoff_lipschitz;

    let mut replica_rows = Vec::new();
    let mut verdict_rows = Vec::new();
    let mut all_pass = true;
    for (j, x0) in x0s.iter().enumerate() {
        let (eta0, rounding) = value_near(g0, x0).map_err(Failure::usage)?;
        for (a, adv) in panel.iter().enumerate() {
            let seed = derive_seed(cfg.seed, ((j as u64) << 8) | (a as u64 + 1));
            let results = run_replicas(cfg.replicas, seed, |_, rng| {
                let p = shift::run_extremal_shift(&spec, &partition, x0, &eta, adv, h, rng, ShiftOptions::default())?;
                Ok((p.outcome, p.model_outcome))
            })?;
            let outcomes: Vec<f64> = results.iter().map(|r| r.0).collect();
            let est = OutcomeEstimate::from_samples(&outcomes)?;
            let bound = report.guarantee_thm1 + r * rounding;
            let threshold = eta0 + bound + 3.0 * est.std_error;
            let pass = est.mean <= threshold;
            all_pass &= pass;
            println!(
                "x0={} adversary={} mean={:.6} se={:.2e} threshold={:.6} pass={pass}",
                fmt_vec(x0),
                adv.name(),
                est.mean,
                est.std_error,
                threshold
            );
            for (i, (o, m)) in results.iter().enumerate() {
                replica_rows.push(vec![
                    fmt_vec(x0),
                    adv.name().to_string(),
                    i.to_string(),
                    fmt_f64(*o),
                    fmt_f64(*m),
                ]);
            }
            verdict_rows.push(vec![
                fmt_vec(x0),
                adv.name().to_string(),
                est.n.to_string(),
                fmt_f64(est.mean),
                fmt_f64(est.std_error),
                fmt_f64(est.ci95.0),
                fmt_f64(est.ci95.1),
                fmt_f64(eta0),
                fmt_f64(bound),
                fmt_f64(threshold),
                pass.to_string(),
            ]);
            if j == 0 {
                let mut rng = lattice_game::rng::replica(seed, 0);
                let opts = ShiftOptions { record_path: true, ..Default::default() };
                let p = shift::run_extremal_shift(&spec, &partition, x0, &eta, adv, h, &mut rng, opts)?;
                write_dump(&out.join(format!("trajectory_{}.csv", adv.name())), &p, spec.dim, &hash, cfg.seed)?;
            }
        }
    }
    let mut meta = base_meta(&hash, cfg.seed);
    meta.insert("h".into(), fmt_f64(h));
    meta.insert("partition_diam".into(), fmt_f64(partition.diameter));
    io::write_table(
        out.join("replicas.csv"),
        &meta,
        &["x0", "adversary", "replica", "outcome", "model_outcome"],
        replica_rows,
    )?;
    io::write_table(
        out.join("verdicts.csv"),
        &meta,
        &["x0", "adversary", "n", "mean", "std_error", "ci95_lo", "ci95_hi", "eta_t0", "bound", "threshold", "pass"],
        verdict_rows,
    )?;
    if !all_pass {
        eprintln!("warning: at least one adversary exceeded the guarantee threshold");
    }
    Ok(())
}

fn write_dump(
    path: &Path,
    p: &shift::PairedTrajectory,
    d: usize,
    hash: &str,
    seed: u64,
) -> Result<(), Failure> {
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.extend((1..=d).map(|i| format!("y_{i}")));
    header.push("u_index".into());
    header.push("v_index".into());
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = p.dump.iter().map(|r| {
        let mut row = vec![fmt_f64(r.t)];
        row.extend(r.x.iter().map(|v| fmt_f64(*v)));
        row.extend(r.y.iter().map(|v| fmt_f64(*v)));
        row.push(r.u_index.to_string());
        row.push(r.v_index.to_string());
        row
    });
    io::write_table(path, &base_meta(hash, seed), &refs, rows)?;
    Ok(())
}

pub fn bounds(cfg: &RunConfig) -> Result<(), Failure> {
    let (spec, hash) = cfg.load_game()?;
    let out = cfg.out_dir()?.to_path_buf();
    let mut reports = Vec::new();
    for &h in &cfg.h {
        let rep = bounds::assemble_with(&spec, h, cfg.sigma.first().copied(), BOUND_SAMPLES, cfg.seed)?;
        print!("{}", rep.to_text());
        println!();
        reports.push(rep);
    }
    write_bounds(&out, &hash, cfg.seed, &reports)
}
