use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lattice_game::GameSpec;

use crate::Failure;

/// Flags shared by every subcommand. Any of them may also come from
/// `--config FILE`; flags given on the command line win.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON file with any of the flags below (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Game definition (JSON).
    #[arg(long)]
    pub game: Option<PathBuf>,
    /// Lattice steps, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub h: Option<Vec<f64>>,
    /// Viscosities, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    /// `auto` or a time step.
    #[arg(long = "dt-policy")]
    pub dt_policy: Option<String>,
    #[arg(long = "partition-diam")]
    pub partition_diam: Option<f64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Initial state, components comma separated; repeat for several.
    #[arg(long, num_args = 1)]
    pub x0: Option<Vec<String>>,
    /// Extra margin around the reachable set when truncating the lattice.
    #[arg(long)]
    pub pad: Option<f64>,
    /// Spatial step of the viscous solver.
    #[arg(long)]
    pub dx: Option<f64>,
    /// Value file (`t,x_1..x_d,value`) used as the reference by `converge`.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Upper value slices used by `simulate` (default `<out>/eta_upper_slices.csv`).
    #[arg(long)]
    pub eta: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    game: Option<PathBuf>,
    h: Option<Vec<f64>>,
    sigma: Option<Vec<f64>>,
    dt_policy: Option<serde_json::Value>,
    partition_diam: Option<f64>,
    replicas: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    x0: Option<Vec<Vec<f64>>>,
    pad: Option<f64>,
    dx: Option<f64>,
    reference: Option<PathBuf>,
    eta: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    Auto,
    Value(f64),
}

/// Effective configuration after merging file and flags.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub game: PathBuf,
    pub h: Vec<f64>,
    pub sigma: Vec<f64>,
    pub dt_policy: DtPolicy,
    pub partition_diam: f64,
    pub replicas: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub threads: Option<usize>,
    pub x0: Vec<Vec<f64>>,
    pub pad: f64,
    pub dx: f64,
    pub reference: Option<PathBuf>,
    #[serde(skip)]
    pub eta: Option<PathBuf>,
}

pub const DEFAULT_H: f64 = 0.05;
pub const DEFAULT_PARTITION: f64 = 0.01;
pub const DEFAULT_REPLICAS: usize = 1000;
pub const DEFAULT_PAD: f64 = 0.5;
pub const DEFAULT_DX: f64 = 0.01;

fn parse_dt(v: &str) -> anyhow::Result<DtPolicy> {
    if v == "auto" {
        return Ok(DtPolicy::Auto);
    }
    let dt: f64 = v.parse().map_err(|_| anyhow!("--dt-policy must be `auto` or a number, got {v:?}"))?;
    if !(dt > 0.0) {
        bail!("--dt-policy value must be > 0");
    }
    Ok(DtPolicy::Value(dt))
}

fn parse_x0(v: &str) -> anyhow::Result<Vec<f64>> {
    v.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| anyhow!("bad --x0 component {c:?}")))
        .collect()
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, Failure> {
        Self::resolve_inner(args).map_err(Failure::usage)
    }

    fn resolve_inner(args: &CommonArgs) -> anyhow::Result<Self> {
        let file = match &args.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {}", p.display()))?;
                serde_json::from_str::<FileConfig>(&text)
                    .with_context(|| format!("bad config file {}", p.display()))?
            }
            None => FileConfig::default(),
        };
        let game = args
            .game
            .clone()
            .or(file.game)
            .ok_or_else(|| anyhow!("no game given (--game PATH)"))?;
        let h = args.h.clone().or(file.h).unwrap_or_else(|| vec![DEFAULT_H]);
        if h.is_empty() || h.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            bail!("h values must lie in (0, 1), got {h:?}");
        }
        let sigma = args.sigma.clone().or(file.sigma).unwrap_or_default();
        if sigma.iter().any(|s| !(*s >= 0.0)) {
            bail!("sigma values must be >= 0, got {sigma:?}");
        }
        let dt_policy = match (&args.dt_policy, file.dt_policy) {
            (Some(s), _) => parse_dt(s)?,
            (None, Some(serde_json::Value::String(s))) => parse_dt(&s)?,
            (None, Some(serde_json::Value::Number(n))) => parse_dt(&n.to_string())?,
            (None, Some(other)) => bail!("dt_policy must be `auto` or a number, got {other}"),
            (None, None) => DtPolicy::Auto,
        };
        let partition_diam = args.partition_diam.or(file.partition_diam).unwrap_or(DEFAULT_PARTITION);
        if !(partition_diam > 0.0) {
            bail!("partition diameter must be > 0");
        }
        let replicas = args.replicas.or(file.replicas).unwrap_or(DEFAULT_REPLICAS);
        if replicas < 1 {
            bail!("replicas must be >= 1");
        }
        let x0 = match &args.x0 {
            Some(list) => list.iter().map(|s| parse_x0(s)).collect::<anyhow::Result<Vec<_>>>()?,
            None => file.x0.unwrap_or_default(),
        };
        let pad = args.pad.or(file.pad).unwrap_or(DEFAULT_PAD);
        if !(pad >= 0.0) {
            bail!("pad must be >= 0");
        }
        let dx = args.dx.or(file.dx).unwrap_or(DEFAULT_DX);
        if !(dx > 0.0) {
            bail!("dx must be > 0");
        }
        let threads = args.threads.or(file.threads);
        if threads == Some(0) {
            bail!("threads must be >= 1");
        }
        Ok(RunConfig {
            game,
            h,
            sigma,
            dt_policy,
            partition_diam,
            replicas,
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            threads,
            x0,
            pad,
            dx,
            reference: args.reference.clone().or(file.reference),
            eta: args.eta.clone().or(file.eta),
        })
    }

    /// Loads the game and returns it with the config hash, which covers the
    /// effective configuration and the game file contents.
    pub fn load_game(&self) -> Result<(GameSpec, String), Failure> {
        let text = std::fs::read_to_string(&self.game)
            .with_context(|| format!("cannot read game file {}", self.game.display()))
            .map_err(Failure::usage)?;
        let spec = GameSpec::from_json_str(&text)
            .with_context(|| format!("bad game file {}", self.game.display()))
            .map_err(Failure::usage)?;
        let x0 = self.initial_states(spec.dim).map_err(Failure::usage)?;
        let mut effective = self.clone();
        effective.x0 = x0;
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&effective).expect("config serializes"));
        hasher.update([0u8]);
        hasher.update(text.as_bytes());
        Ok((spec, hex::encode(hasher.finalize())))
    }

    /// `x0` list, defaulting to the origin.
    pub fn initial_states(&self, dim: usize) -> anyhow::Result<Vec<Vec<f64>>> {
        if self.x0.is_empty() {
            return Ok(vec![vec![0.0; dim]]);
        }
        for x in &self.x0 {
            if x.len() != dim {
                bail!("x0 {x:?} does not have dimension {dim}");
            }
        }
        Ok(self.x0.clone())
    }

    pub fn out_dir(&self) -> Result<&Path, Failure> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("cannot create output directory {}", self.out.display()))
            .map_err(Failure::usage)?;
        Ok(&self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dt_policy_parsing() {
        assert_eq!(parse_dt("auto").unwrap(), DtPolicy::Auto);
        assert_eq!(parse_dt("0.01").unwrap(), DtPolicy::Value(0.01));
        assert!(parse_dt("-1").is_err());
        assert!(parse_dt("fast").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"game": "a.json", "h": [0.1], "seed": 5, "dt_policy": 0.002}"#).unwrap();
        let args = CommonArgs { config: Some(cfg), seed: Some(9), ..Default::default() };
        let rc = RunConfig::resolve(&args).unwrap();
        assert_eq!(rc.seed, 9);
        assert_eq!(rc.h, vec![0.1]);
        assert_eq!(rc.dt_policy, DtPolicy::Value(0.002));
        assert_eq!(rc.game, PathBuf::from("a.json"));
    }

    #[test]
    fn h_outside_unit_interval_is_rejected() {
        let args = CommonArgs { game: Some("g.json".into()), h: Some(vec![1.5]), ..Default::default() };
        assert!(RunConfig::resolve(&args).is_err());
    }
}
