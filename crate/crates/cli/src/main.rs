use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use wavepinn_cli::commands::{self, TheoryConfig};
use wavepinn_cli::{resolve_config, BoundMode, Overrides, RunReport};

#[derive(Parser)]
#[command(name = "wavepinn", version, about = "PINN training, error bounds and theory tables for damped/semilinear wave equations")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset: fig5-small or fig5-full.
    #[arg(long)]
    preset: Option<String>,
    /// Seeds as `a..b` (exclusive) or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Norm source for the bound.
    #[arg(long, value_enum)]
    mode: Option<BoundMode>,
    /// Seeds trained concurrently.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            preset: self.preset.clone(),
            seeds: self.seeds.clone(),
            out: self.out.clone(),
            mode: self.mode,
            jobs: self.jobs,
        }
    }
}

#[derive(Subcommand)]
enum Verb {
    /// Train every seed on the last collocation setting and aggregate.
    #[command(alias = "run")]
    Train(Common),
    /// Train every seed on every setting and write sweep.csv.
    Sweep(Common),
    /// Bound for stored parameters on the last setting.
    Bound {
        #[command(flatten)]
        common: Common,
        /// Seed report, training record or parameter JSON.
        #[arg(long)]
        params: PathBuf,
    },
    /// Widths, residual bounds, rates and a-priori sizes.
    Theory {
        /// JSON theory configuration; defaults to a built-in example.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "theory")]
        out: PathBuf,
    },
    /// Collocation points as CSV and, with --params, pointwise error fields.
    ExportPoints {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: Option<PathBuf>,
        /// Nodes per axis of the error fields.
        #[arg(long, default_value_t = 101)]
        nodes: usize,
    },
}

fn summary(r: &RunReport) {
    let m = |k: &str| r.metric(k).mean;
    println!(
        "{:>8} M={:<6} seeds={:<3} E_T={:.3e} L2={:.3e} H1={:.3e} bound={:.3e} (log10 {:.2}) train_s={:.0}",
        r.setting.label,
        r.sizes.total(),
        r.seeds.len(),
        m("E_T"),
        m("l2_error"),
        m("h1_quantity"),
        m("bound"),
        m("log10_bound"),
        r.timing.train_seconds.mean
    );
}

fn execute(cli: Cli) -> Result<()> {
    match cli.verb {
        Verb::Train(c) => {
            let cfg = resolve_config(&c.overrides())?;
            let (report, _) = wavepinn_cli::run(&cfg)?;
            summary(&report);
        }
        Verb::Sweep(c) => {
            let cfg = resolve_config(&c.overrides())?;
            for r in wavepinn_cli::sweep(&cfg)? {
                summary(&r);
            }
            println!("wrote {}", cfg.out.join("sweep.csv").display());
        }
        Verb::Bound { common, params } => {
            let cfg = resolve_config(&common.overrides())?;
            let b = commands::bound(&cfg, &params, cfg.bound.mode)?;
            println!(
                "E_T={:.3e} L2={:.3e} H1={:.3e} bound={:.3e} (log10 {:.2})",
                b.training.total,
                b.l2_error.unwrap_or(f64::NAN),
                b.h1.map_or(f64::NAN, |h| h.sum),
                b.bound.bound_value,
                b.bound.log10_bound
            );
        }
        Verb::Theory { config, out } => {
            let cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<TheoryConfig>(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => TheoryConfig::default(),
            };
            let t = commands::theory(&cfg, &out)?;
            println!("widths {} {}", t.widths.0, t.widths.1);
            for s in &t.sizing {
                println!(
                    "eps={} d={} k={} eta={} N={:.4e} log10(M_PDE, M_t, M_s)=({:.3}, {:.3}, {:.3}) R_min={:.4e} W_min/C={:.4e} L_min={}{}",
                    s.epsilon,
                    s.d,
                    s.k,
                    s.eta,
                    s.big_n,
                    s.log10_m_pde,
                    s.log10_m_t,
                    s.log10_m_s,
                    s.r_min,
                    s.w_min_over_c,
                    s.l_min,
                    if s.below_n_floor { " (N <= 5: below the approximation floor)" } else { "" }
                );
            }
            println!("wrote {} and {}", out.join("theory.json").display(), out.join("rates.csv").display());
        }
        Verb::ExportPoints { common, params, nodes } => {
            let cfg = resolve_config(&common.overrides())?;
            for p in commands::export_points(&cfg, params.as_deref(), nodes)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
