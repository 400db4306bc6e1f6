use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Kind, Prepared, RegressTolerances};
use crate::experiments::{run_kind, suite_kinds, ExperimentResult, Outcome};

pub const RESULT_FILE: &str = "result.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
    pub dim: usize,
    pub h: Vec<f64>,
    pub nodes: usize,
    pub origin: Vec<f64>,
    pub dt: f64,
    pub scheme: eternal_core::Scheme,
    pub seed: u64,
}

/// Deterministic part of a run. Wall times live in the timing sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub name: String,
    pub kind: Kind,
    pub passed: bool,
    pub experiments: BTreeMap<String, ExperimentResult>,
    pub provenance: Provenance,
    pub regress: RegressTolerances,
}

impl RunResult {
    pub fn has_internal_error(&self) -> bool {
        self.experiments.values().any(|e| e.error.is_some())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub experiments: BTreeMap<String, f64>,
}

/// Output directory precedence: explicit override, then the config, then
/// `out/<name>`.
pub fn resolve_out_dir(p: &Prepared, cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| p.config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&p.name))
}

/// Runs the configured experiment(s) on a pool of `workers` threads and
/// writes every report into `out_dir`.
pub fn run(p: &Prepared, out_dir: &Path, workers: Option<usize>) -> Result<RunResult> {
    let start = Instant::now();
    let kinds = match p.config.kind {
        Kind::Suite => suite_kinds(p),
        k => vec![k],
    };
    let single = p.config.kind != Kind::Suite;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().context("building worker pool")?;
    let outcomes: Vec<(Outcome, f64)> = pool.install(|| {
        kinds
            .par_iter()
            .map(|&k| {
                let t = Instant::now();
                let o = run_kind(p, k, single);
                (o, t.elapsed().as_secs_f64())
            })
            .collect()
    });

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut experiments = BTreeMap::new();
    let mut timing = BTreeMap::new();
    for (o, secs) in outcomes {
        for (name, bytes) in &o.csv {
            std::fs::write(out_dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
        }
        timing.insert(o.result.kind.name().to_string(), secs);
        experiments.insert(o.result.kind.name().to_string(), o.result);
    }
    let g = &p.grid;
    let result = RunResult {
        name: p.name.clone(),
        kind: p.config.kind,
        passed: experiments.values().all(|e| e.passed),
        experiments,
        provenance: Provenance {
            config_hash: p.hash.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            dim: g.dim(),
            h: g.h().to_vec(),
            nodes: g.len(),
            origin: g.coords(g.origin_node()).to_vec(),
            dt: p.dt,
            scheme: p.config.scheme,
            seed: p.config.seed,
        },
        regress: p.config.regress.clone(),
    };
    let json = serde_json::to_string_pretty(&result)?;
    std::fs::write(out_dir.join(RESULT_FILE), json + "\n").context("writing result.json")?;
    let timing = Timing {
        total_seconds: start.elapsed().as_secs_f64(),
        experiments: timing,
    };
    std::fs::write(out_dir.join(TIMING_FILE), serde_json::to_string_pretty(&timing)? + "\n")
        .context("writing timing.json")?;
    Ok(result)
}

/// One line per experiment and check.
pub fn summary(r: &RunResult) -> String {
    let mut s = String::new();
    for (name, e) in &r.experiments {
        let status = if e.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{status} {name}\n"));
        for c in &e.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            s.push_str(&format!("  {mark} {}: {}\n", c.name, c.detail));
        }
        if let Some(err) = &e.error {
            s.push_str(&format!("  error: {err}\n"));
        }
    }
    let overall = if r.passed { "PASS" } else { "FAIL" };
    s.push_str(&format!("overall {overall} ({})\n", r.provenance.config_hash));
    s
}
