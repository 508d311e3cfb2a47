//! Run configuration: a JSON file merged with command-line overrides.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use fewparam_core::certify::Grid;
use fewparam_core::targets::TargetOptions;

/// Every field is optional so that files and flags can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub theorem: Option<String>,
    pub target: Option<String>,
    pub d: Option<usize>,
    pub n: Option<u32>,
    pub p: Option<u32>,
    pub eps: Option<f64>,
    pub constant: Option<f64>,
    pub seed: Option<u64>,
    pub pieces: Option<usize>,
    pub allow_semantic: Option<bool>,
    pub force: Option<bool>,
    pub threads: Option<usize>,
    pub timing: Option<bool>,
    pub eval_mode: Option<String>,
    pub grid_per_cell: Option<u64>,
    pub grid_points: Option<u64>,
    pub lp_per_cell: Option<u64>,
    pub mc_samples: Option<usize>,
    pub sweep: Option<String>,
}

macro_rules! layer {
    ($base:expr, $top:expr, $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fields set in `top` win.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        layer!(
            self, top, theorem, target, d, n, p, eps, constant, seed, pieces, allow_semantic, force, threads, timing, eval_mode, grid_per_cell,
            grid_points, lp_per_cell, mc_samples, sweep
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoremKind {
    Lp,
    Linf,
    ThreeParam,
}

impl TheoremKind {
    pub fn parse(s: &str) -> anyhow::Result<TheoremKind> {
        Ok(match s {
            "lp" => TheoremKind::Lp,
            "linf" => TheoremKind::Linf,
            "three-param" => TheoremKind::ThreeParam,
            other => bail!("unknown theorem `{other}` (expected lp, linf or three-param)"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    Exact,
    Float,
    Both,
}

impl ModeChoice {
    pub fn parse(s: &str) -> anyhow::Result<ModeChoice> {
        Ok(match s {
            "exact" => ModeChoice::Exact,
            "float" => ModeChoice::Float,
            "both" => ModeChoice::Both,
            other => bail!("unknown eval mode `{other}` (expected exact, float or both)"),
        })
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub theorem: TheoremKind,
    pub target: String,
    pub d: usize,
    /// `None` lets the three-parameter construction choose.
    pub n: Option<u32>,
    pub p: u32,
    pub eps: Option<f64>,
    pub target_options: TargetOptions,
    pub allow_semantic: bool,
    pub force: bool,
    pub threads: usize,
    pub timing: bool,
    pub mode: ModeChoice,
    pub grid_per_cell: Option<u64>,
    pub grid_points: Option<u64>,
    pub lp_per_cell: Option<u64>,
    pub mc_samples: usize,
    pub seed: u64,
    pub sweep: Option<Vec<u32>>,
}

/// Default sample budget per grid, in points.
pub const DEFAULT_GRID_POINTS: u64 = 1 << 16;

impl Settings {
    pub fn resolve(c: &RunConfig) -> anyhow::Result<Settings> {
        let theorem = TheoremKind::parse(c.theorem.as_deref().unwrap_or("lp"))?;
        let d = c.d.unwrap_or(1);
        if d == 0 {
            bail!("d must be at least 1");
        }
        let p = c.p.unwrap_or(2);
        if p == 0 {
            bail!("p must be at least 1");
        }
        if theorem == TheoremKind::ThreeParam && c.eps.is_none() {
            bail!("three-param needs --eps");
        }
        let n = match (theorem, c.n) {
            (TheoremKind::ThreeParam, _) => None,
            (_, Some(0)) => bail!("n must be at least 1"),
            (_, n) => Some(n.unwrap_or(2)),
        };
        let seed = c.seed.unwrap_or(0);
        let defaults = TargetOptions::default();
        Ok(Settings {
            theorem,
            target: c.target.clone().unwrap_or_else(|| "linear".into()),
            d,
            n,
            p,
            eps: c.eps,
            target_options: TargetOptions { constant: c.constant.unwrap_or(defaults.constant), seed, pieces: c.pieces.unwrap_or(defaults.pieces) },
            allow_semantic: c.allow_semantic.unwrap_or(false),
            force: c.force.unwrap_or(false),
            threads: c.threads.unwrap_or(0),
            timing: c.timing.unwrap_or(false),
            mode: ModeChoice::parse(c.eval_mode.as_deref().unwrap_or("exact"))?,
            grid_per_cell: c.grid_per_cell,
            grid_points: c.grid_points,
            lp_per_cell: c.lp_per_cell,
            mc_samples: c.mc_samples.unwrap_or(0),
            seed,
            sweep: c.sweep.as_deref().map(parse_sweep).transpose()?,
        })
    }

    /// Sup grid: explicit settings first, then 4097 equispaced points for
    /// univariate three-parameter runs, else the densest cell-interior grid
    /// within [`DEFAULT_GRID_POINTS`].
    pub fn grid(&self, n: u32) -> Grid {
        if let Some(points) = self.grid_points {
            return Grid::Equispaced { points };
        }
        if let Some(per_cell) = self.grid_per_cell {
            return Grid::CellInterior { per_cell };
        }
        if self.theorem == TheoremKind::ThreeParam && self.d == 1 {
            return Grid::Equispaced { points: 4097 };
        }
        Grid::CellInterior { per_cell: default_per_cell(self.d, n, 64) }
    }

    pub fn lp_per_cell(&self, n: u32) -> u64 {
        self.lp_per_cell.unwrap_or_else(|| default_per_cell(self.d, n, 64))
    }
}

/// Largest power of two `<= cap` with `(per_cell 2^n)^d <= DEFAULT_GRID_POINTS`.
pub fn default_per_cell(d: usize, n: u32, cap: u64) -> u64 {
    let mut per = cap.max(1).next_power_of_two();
    while per > 1 && ((per << n) as f64).powi(d as i32) > DEFAULT_GRID_POINTS as f64 {
        per /= 2;
    }
    per
}

/// `n=1..4`, `n=1,3,5` or `1..4`.
pub fn parse_sweep(s: &str) -> anyhow::Result<Vec<u32>> {
    let body = s.strip_prefix("n=").unwrap_or(s);
    let parse = |t: &str| t.trim().parse::<u32>().with_context(|| format!("bad sweep value `{t}`"));
    let out: Vec<u32> = if let Some((a, b)) = body.split_once("..") {
        let (a, b) = (parse(a)?, parse(b.trim_start_matches('='))?);
        if a > b {
            bail!("empty sweep range {a}..{b}");
        }
        (a..=b).collect()
    } else {
        body.split(',').map(parse).collect::<Result<_, _>>()?
    };
    if out.contains(&0) {
        bail!("sweep values must be at least 1");
    }
    Ok(out)
}
