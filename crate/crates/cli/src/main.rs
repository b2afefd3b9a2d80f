use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chebmps_cli::config::{Backend, ExperimentConfig};
use chebmps_cli::run::{self, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chebmps", version, about = "Chebyshev-filtered MPS experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Clone)]
struct Overrides {
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    dmax: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long = "alpha-override")]
    alpha_override: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every (N, M) of a configuration.
    Run {
        config: PathBuf,
        #[command(flatten)]
        over: Overrides,
        /// Validate and write the manifest only.
        #[arg(long)]
        dry_run: bool,
        /// Record wall-clock seconds in the traces.
        #[arg(long)]
        timing: bool,
        /// Output root; the configured `output` directory is created inside it.
        #[arg(long, env = run::OUTPUT_ROOT_ENV)]
        root: Option<PathBuf>,
    },
    /// Recompute fits for an existing output directory.
    Analyze { dir: PathBuf },
    /// Parse a configuration and print its canonical form and orders.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        over: Overrides,
    },
}

fn load(path: &PathBuf, over: &Overrides) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut map = ExperimentConfig::parse(&text)?.to_map();
    if let Some(b) = &over.backend {
        b.parse::<Backend>()?;
        map.insert("backend".into(), b.clone());
    }
    if let Some(d) = over.dmax {
        map.insert("d_max".into(), d.to_string());
    }
    if let Some(s) = over.seed {
        map.insert("seed".into(), s.to_string());
    }
    if let Some(w) = over.workers {
        map.insert("workers".into(), w.to_string());
    }
    if let Some(a) = over.alpha_override {
        map.insert("alpha".into(), format!("{a:?}"));
    }
    Ok(ExperimentConfig::from_map(&map)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Validate { config, over } => match load(&config, &over) {
            Ok(cfg) => {
                print!("{}", cfg.to_text());
                for &n in &cfg.n_list {
                    match cfg.orders(n) {
                        Ok(ms) => println!("# N = {n}: M = {ms:?}"),
                        Err(e) => {
                            eprintln!("error: {e}");
                            return ExitCode::from(2);
                        }
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Cmd::Run {
            config,
            over,
            dry_run,
            timing,
            root,
        } => {
            let cfg = match load(&config, &over).and_then(|c| {
                for &n in &c.n_list {
                    c.orders(n)?;
                }
                Ok(c)
            }) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(2);
                }
            };
            let dir = run::resolve_output(&cfg, root.as_deref());
            match run::run(&cfg, &dir, &RunOptions { timing, dry_run }) {
                Ok(s) => {
                    for r in &s.runs {
                        println!(
                            "N = {:>3}  M = {:>5}  delta = {:.6e}  discarded = {:.2e}{}",
                            r.n,
                            r.m,
                            r.delta,
                            r.discarded,
                            if r.completed { "" } else { "  (aborted)" }
                        );
                    }
                    for f in &s.failures {
                        eprintln!("failed N = {} M = {:?}: {}", f.n, f.m, f.error);
                    }
                    for (k, fit) in &s.fits {
                        let named: Vec<String> = fit.params.iter().map(|p| format!("{} = {:.4} ± {:.4}", p.name, p.value, p.error)).collect();
                        println!("fit {k}: {}", named.join(", "));
                    }
                    println!("output: {}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::FAILURE
                }
            }
        }
        Cmd::Analyze { dir } => match run::analyze(&dir) {
            Ok(s) => {
                for (k, fit) in &s.fits {
                    let named: Vec<String> = fit.params.iter().map(|p| format!("{} = {:.4} ± {:.4}", p.name, p.value, p.error)).collect();
                    println!("fit {k}: {}", named.join(", "));
                }
                for n in &s.notes {
                    println!("note: {n}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::FAILURE
            }
        },
    }
}
