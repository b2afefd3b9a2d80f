//! Executes a configuration and writes its artifacts.
//!
//! Layout of an output directory:
//!
//! - `manifest.json`: the full configuration and code version
//! - `N{n}_M{m}.csv`: filter trace
//! - `N{n}_M{m}.json`: per-run manifest and final observables
//! - `N{n}_M{m}.mps`: final state
//! - `N{n}_M{m}_corr.csv`: connected energy correlations around the reference term
//! - `summary.json`: all runs, failures and scaling fits

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chebmps::analysis::{self, ScalingFit};
use chebmps::exact::{self, StateVector};
use chebmps::filter::{self, FilterOpts, FilterRun, FilterSetup, FilterTrace, TraceRow, D_TR_EPSILON};
use chebmps::hamiltonian::{build_ising, build_staggered_heisenberg, build_xyz, Model};
use chebmps::{Mps, Truncation};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Backend, ExperimentConfig, InitialSpec, ModelName};
use crate::initial::build_initial_state;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Output root when the environment does not name one.
pub const OUTPUT_ROOT_ENV: &str = "CHEBMPS_OUTPUT_ROOT";
/// Central block used for the distance to the maximally mixed state.
pub const DISTANCE_BLOCK: usize = 4;

pub fn build_model(cfg: &ExperimentConfig, n: usize) -> chebmps::Result<Model> {
    match cfg.model {
        ModelName::Ising => build_ising(n, cfg.param("J"), cfg.param("g"), cfg.param("h")),
        ModelName::Xyz => build_xyz(n, cfg.param("Jx"), cfg.param("Jy"), cfg.param("Jz"), cfg.param("h")),
        ModelName::StaggeredHeisenberg => build_staggered_heisenberg(n),
    }
}

/// Top-level manifest: the configuration that produced a directory.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub code_version: String,
    pub config: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            code_version: CODE_VERSION.to_string(),
            config: cfg.to_map(),
        }
    }

    pub fn to_config(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig::from_map(&self.config)?)
    }
}

/// Per-run manifest with the final observables.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub d_max: usize,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub alpha: f64,
    pub code_version: String,
    pub seed: u64,
    pub backend: String,
    pub initial_state: String,
    pub initial_energy: f64,
    pub completed: bool,
    pub discarded: f64,
    pub energy: f64,
    pub variance: f64,
    /// `sqrt(variance)`
    pub delta: f64,
    pub s_half: f64,
    pub max_bond: usize,
    pub d_tr: usize,
    /// Trace distance of the central block to the maximally mixed state.
    pub trace_distance: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Failure {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub error: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub code_version: String,
    pub runs: Vec<RunManifest>,
    pub failures: Vec<Failure>,
    pub fits: BTreeMap<String, ScalingFit>,
    pub notes: Vec<String>,
}

/// Options outside the configuration file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Record wall-clock seconds in traces (breaks bit-identical reruns).
    pub timing: bool,
    pub dry_run: bool,
}

pub fn run_stem(n: usize, m: usize) -> String {
    format!("N{n}_M{m}")
}

pub fn resolve_output(cfg: &ExperimentConfig, root: Option<&Path>) -> PathBuf {
    let root = root
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    root.join(&cfg.output)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), v)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

struct Produced {
    order: usize,
    state: Option<Mps>,
    trace: FilterTrace,
    discarded: f64,
    completed: bool,
}

/// Runs every `(N, M)` of the configuration into `dir`. Per-run errors are
/// recorded in the summary; only I/O on the directory itself fails.
pub fn run(cfg: &ExperimentConfig, dir: &Path, opts: &RunOptions) -> Result<Summary> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("manifest.json"), &Manifest::new(cfg))?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    if opts.dry_run {
        return Ok(Summary {
            code_version: CODE_VERSION.to_string(),
            runs: vec![],
            failures: vec![],
            fits: BTreeMap::new(),
            notes: vec!["dry run".into()],
        });
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let per_n: Vec<(Vec<RunManifest>, Vec<Failure>)> = pool.install(|| {
        cfg.n_list
            .par_iter()
            .map(|&n| match run_chain(cfg, n, dir, opts) {
                Ok(r) => r,
                Err(e) => (
                    vec![],
                    vec![Failure {
                        n,
                        m: None,
                        error: format!("{e:#}"),
                    }],
                ),
            })
            .collect()
    });
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in per_n {
        runs.extend(r);
        failures.extend(f);
    }
    let (fits, notes) = fit_runs(&runs);
    let summary = Summary {
        code_version: CODE_VERSION.to_string(),
        runs,
        failures,
        fits,
        notes,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn run_chain(cfg: &ExperimentConfig, n: usize, dir: &Path, opts: &RunOptions) -> Result<(Vec<RunManifest>, Vec<Failure>)> {
    let model = build_model(cfg, n)?;
    let mut orders = cfg.orders(n)?;
    orders.sort_unstable();
    orders.dedup();
    let init = build_initial_state(&cfg.initial, &model, cfg.e0, cfg.seed)?;
    let p = init.mps()?;
    let fopts = FilterOpts {
        trunc: Truncation::new(cfg.d_max, 0.0),
        record_every: cfg.record_every,
        block_max: cfg.block_max,
        fit_sweeps: 0,
        timing: opts.timing,
        abort_discarded: cfg.abort_discarded,
        fixed_bond_sweeps: cfg.fixed_bond_sweeps,
    };
    let (alpha, produced) = match cfg.backend {
        Backend::Mps => {
            let setup = FilterSetup::new(&model, cfg.e0, cfg.alpha, cfg.d_dmrg)?;
            let runs = filter::cheby_filter_orders(&p, &setup, &orders, &fopts)?;
            let produced = runs
                .into_iter()
                .map(|r: FilterRun| Produced {
                    order: r.order,
                    state: r.state,
                    trace: r.trace,
                    discarded: r.discarded,
                    completed: r.completed,
                })
                .collect::<Vec<_>>();
            (setup.alpha, produced)
        }
        Backend::Exact => {
            let alpha = match cfg.alpha {
                Some(a) => a,
                None => exact::exact_edges(&model)?.alpha(n, cfg.e0),
            };
            let v = exact::mps_to_vector(&p)?;
            let mut produced = Vec::new();
            for &m in &orders {
                produced.push(exact_run(&v, &model, m, cfg, alpha, &fopts)?);
            }
            (alpha, produced)
        }
    };

    let mut manifests = Vec::new();
    let mut failures = Vec::new();
    for pr in produced {
        match write_run(cfg, &model, alpha, init.energy, pr, dir) {
            Ok(m) => manifests.push(m),
            Err((m, e)) => failures.push(Failure {
                n,
                m: Some(m),
                error: format!("{e:#}"),
            }),
        }
    }
    Ok((manifests, failures))
}

/// Exact-backend run: a single trace row for the final state.
fn exact_run(v: &StateVector, model: &Model, m: usize, cfg: &ExperimentConfig, alpha: f64, opts: &FilterOpts) -> Result<Produced> {
    let out = exact::exact_cheby_filter(v, model, m, cfg.e0, alpha)?;
    let energy = exact::exact_energy(&out, model)?;
    let variance = exact::exact_variance(&out, model)?;
    let mut state = exact::vector_to_mps(&out, Truncation::exact())?;
    let (_, _, half, blocks) = filter::observe(&mut state, model, opts.block_max)?;
    let mut trace = FilterTrace::default();
    trace.push(TraceRow {
        step: m,
        energy,
        variance,
        s_half: half.entropy(),
        s_block: blocks,
        max_bond: state.max_bond(),
        discarded: 0.0,
        d_tr: analysis::d_tr(&half, D_TR_EPSILON),
        seconds: 0.0,
    });
    Ok(Produced {
        order: m,
        state: Some(state),
        trace,
        discarded: 0.0,
        completed: true,
    })
}

/// Reference term for energy correlations.
fn reference_term(cfg: &ExperimentConfig, model: &Model) -> usize {
    let n = model.n;
    if cfg.initial == InitialSpec::ZSt2 {
        let bits: Vec<u8> = (0..n).map(|i| ((i / 2) % 2) as u8).collect();
        if let Some(site) = analysis::xyz_reference_site(&bits) {
            return site.min(n - 2);
        }
    }
    n / 2 - 1
}

fn write_run(
    cfg: &ExperimentConfig,
    model: &Model,
    alpha: f64,
    initial_energy: f64,
    pr: Produced,
    dir: &Path,
) -> std::result::Result<RunManifest, (usize, anyhow::Error)> {
    let m = pr.order;
    let n = model.n;
    let stem = run_stem(n, m);
    let inner = || -> Result<RunManifest> {
        let f = File::create(dir.join(format!("{stem}.csv")))?;
        pr.trace.write_csv(BufWriter::new(f))?;
        let last = pr.trace.last().context("empty trace")?.clone();
        let mut trace_distance = None;
        if let Some(mut state) = pr.state {
            state.normalize()?;
            let f = File::create(dir.join(format!("{stem}.mps")))?;
            state.write_to(BufWriter::new(f))?;
            let lc = DISTANCE_BLOCK.min(n);
            let rho = state.rdm((n - lc) / 2, lc)?;
            trace_distance = Some(analysis::trace_distance_inf_t(&rho)?);
            let corr = analysis::energy_correlations(&mut state, model, reference_term(cfg, model))?;
            let mut w = csv::Writer::from_path(dir.join(format!("{stem}_corr.csv")))?;
            w.write_record(["x", "correlation"])?;
            for (x, c) in corr {
                w.write_record([x.to_string(), format!("{c:e}")])?;
            }
            w.flush()?;
        }
        let rm = RunManifest {
            model: cfg.model.as_str().to_string(),
            params: cfg.params.iter().cloned().collect(),
            n,
            m,
            d_max: cfg.d_max,
            e0: cfg.e0,
            alpha,
            code_version: CODE_VERSION.to_string(),
            seed: cfg.seed,
            backend: cfg.backend.as_str().to_string(),
            initial_state: cfg.initial.to_string(),
            initial_energy,
            completed: pr.completed,
            discarded: pr.discarded,
            energy: last.energy,
            variance: last.variance,
            delta: last.variance.max(0.0).sqrt(),
            s_half: last.s_half,
            max_bond: last.max_bond,
            d_tr: last.d_tr,
            trace_distance,
        };
        write_json(&dir.join(format!("{stem}.json")), &rm)?;
        Ok(rm)
    };
    inner().map_err(|e| (m, e))
}

/// Power-law fits of the runs: `delta^2` against `M` per chain length, and
/// `delta` against `N` when every chain has a single order.
pub fn fit_runs(runs: &[RunManifest]) -> (BTreeMap<String, ScalingFit>, Vec<String>) {
    let mut fits = BTreeMap::new();
    let mut notes = Vec::new();
    let mut by_n: BTreeMap<usize, Vec<&RunManifest>> = BTreeMap::new();
    for r in runs {
        by_n.entry(r.n).or_default().push(r);
    }
    for (n, rs) in &by_n {
        if rs.len() < 3 {
            continue;
        }
        let pts: Vec<(f64, f64, f64)> = rs
            .iter()
            .filter(|r| r.completed)
            .map(|r| (r.m as f64, r.variance, r.discarded))
            .collect();
        let conv = analysis::converged_points(&pts);
        match analysis::fit_power(&conv) {
            Ok(f) => {
                fits.insert(format!("variance_vs_M_N{n}"), f);
            }
            Err(e) => notes.push(format!("N = {n}: no variance fit ({e})")),
        }
    }
    if by_n.len() >= 3 && by_n.values().all(|rs| rs.len() == 1) {
        let pts: Vec<(f64, f64, f64)> = by_n
            .values()
            .map(|rs| (rs[0].n as f64, rs[0].delta, rs[0].discarded))
            .collect();
        match analysis::fit_power(&analysis::converged_points(&pts)) {
            Ok(f) => {
                fits.insert("delta_vs_N".into(), f);
            }
            Err(e) => notes.push(format!("no delta(N) fit ({e})")),
        }
    }
    (fits, notes)
}

/// Rebuilds the summary of an existing directory from its run manifests.
pub fn analyze(dir: &Path) -> Result<Summary> {
    let mut runs = Vec::new();
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
            name.starts_with('N') && name.ends_with(".json")
        })
        .collect();
    names.sort();
    for p in names {
        runs.push(read_json::<RunManifest>(&p)?);
    }
    runs.sort_by_key(|r| (r.n, r.m));
    let (fits, notes) = fit_runs(&runs);
    let summary = Summary {
        code_version: CODE_VERSION.to_string(),
        runs,
        failures: vec![],
        fits,
        notes,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
