use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pspin::bounds::exponent_report;
use pspin::gibbs::band_set;
use pspin::landscape::{forbidden_pairs, overlap_histogram, pairs_to_json};
use pspin::mogp::{empirical_mogp_search, SearchOptions};
use pspin::tails::{check_suite, CheckConfig, SandwichCheck};
use pspin::{
    build_energy_table, cluster, level_set, superlevel_set, tune_mogp, BuildLimits, ClusterReport, EnergyTable,
    EnergyUnit, EnsembleAngle, LevelSet, Mode,
};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::plot::emit_plot_data;
use crate::scan::{analyze_cell, run_scan, CellParams};

#[derive(Debug, Parser)]
#[command(name = "pspin", version, about = "Exact landscapes of the Ising pure p-spin model")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build (or load) an energy table and write it.
    EnergyTable {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract a level set, its overlap histogram or its forbidden pairs.
    LevelSet {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        level: LevelArgs,
        /// Emit the overlap histogram instead of the members.
        #[arg(long)]
        histogram: bool,
        /// Emit pairs at distance in (ν₁, ν₂) as JSON.
        #[arg(long, requires_all = ["nu1", "nu2"])]
        forbidden: bool,
        #[arg(long)]
        nu1: Option<f64>,
        #[arg(long)]
        nu2: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster a level set; fails with witnesses if the overlap gap is violated.
    Cluster {
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        level: LevelArgs,
        #[arg(long)]
        nu1: f64,
        #[arg(long)]
        nu2: f64,
        /// Report connected components even when the gap fails.
        #[arg(long)]
        diagnostic: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Band dominance, clusters and shattering verdict at one temperature.
    Shatter {
        #[command(flatten)]
        table: TableArgs,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        nu1: f64,
        #[arg(long)]
        nu2: f64,
        #[arg(long, default_value_t = 0.1)]
        c: f64,
        #[arg(long, default_value_t = 0.1)]
        cprime: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form constants as JSON.
    Exponents {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        p: u32,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-overlap parameters.
    #[command(subcommand)]
    Mogp(MogpCommand),
    /// Tail bound checks.
    #[command(subcommand)]
    Tails(TailsCommand),
    /// Run a config file over its seeds and temperatures.
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tidy plot data from a scan directory.
    PlotData {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum MogpCommand {
    /// Pick (ξ, η, c, P*) making the exponent negative.
    Tune {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        gamma: f64,
    },
    /// Count forbidden m-tuples on small instances.
    Search {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        gamma: f64,
        /// Defaults to the tuned value.
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        /// Comma-separated angles in [0, π/2].
        #[arg(long, value_delimiter = ',', default_value = "0")]
        angles: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        tuple_budget: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TailsCommand {
    /// Compare every tail bound against erfc and Monte Carlo.
    Check {
        #[arg(long, default_value_t = CheckConfig::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = CheckConfig::default().savage_cases)]
        cases: usize,
        #[arg(long, default_value_t = CheckConfig::default().savage_samples)]
        samples: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Read a binary table instead of building one.
    #[arg(long, conflicts_with_all = ["n", "p", "mode", "seed"])]
    pub table: Option<PathBuf>,
    #[arg(long, required_unless_present = "table")]
    pub n: Option<usize>,
    #[arg(long, required_unless_present = "table")]
    pub p: Option<usize>,
    /// exact-tensor, gram-cholesky or rem-limit (default: by size).
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TableArgs {
    pub fn load(&self) -> Result<EnergyTable> {
        if let Some(path) = &self.table {
            let f = File::open(path).map_err(|e| CliError::io(path, e))?;
            return EnergyTable::read_binary(io::BufReader::new(f)).map_err(|e| CliError::Corrupt {
                path: path.clone(),
                reason: e.to_string(),
            });
        }
        let (n, p) = (self.n.expect("required"), self.p.expect("required"));
        let mode = self.mode.unwrap_or_else(|| BuildLimits::default().select_mode(n, p));
        Ok(build_energy_table(n, p, self.seed, mode)?)
    }
}

/// Selects `S(ε)`, the band `𝔻(β, κ)` or an explicit window.
#[derive(Debug, Args)]
pub struct LevelArgs {
    #[arg(long, conflicts_with_all = ["lower", "beta"])]
    pub epsilon: Option<f64>,
    #[arg(long, requires = "kappa", conflicts_with = "lower")]
    pub beta: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, requires = "upper")]
    pub lower: Option<f64>,
    #[arg(long)]
    pub upper: Option<f64>,
    /// Unit of --lower/--upper.
    #[arg(long, value_enum, default_value_t = Unit::Sqrt2ln2)]
    pub unit: Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Unit {
    Absolute,
    Sqrt2ln2,
}

impl LevelArgs {
    pub fn select(&self, table: &EnergyTable) -> Result<LevelSet> {
        match (self.epsilon, self.beta, self.lower) {
            (Some(eps), _, _) => Ok(superlevel_set(table, eps)?),
            (_, Some(beta), _) => Ok(band_set(table, beta, self.kappa.expect("required"))?),
            (_, _, Some(lo)) => {
                let unit = match self.unit {
                    Unit::Absolute => EnergyUnit::Absolute,
                    Unit::Sqrt2ln2 => EnergyUnit::SqrtTwoLnTwo,
                };
                Ok(level_set(table, lo, self.upper.expect("required"), unit)?)
            }
            _ => Err(CliError::Usage("one of --epsilon, --beta/--kappa or --lower/--upper is required".into())),
        }
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let label = out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf);
    let mut w = sink(out)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(label, e))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn io_to(out: Option<&Path>) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::io(out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf), e)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        // Ignore a pool that is already set up, as happens in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    match cli.command {
        Command::EnergyTable { table, format, out } => {
            let t = table.load()?;
            let mut w = sink(out.as_deref())?;
            match format {
                Format::Csv => t.write_csv(&mut w),
                Format::Bin => t.write_binary(&mut w),
            }
            .and_then(|_| w.flush())
            .map_err(io_to(out.as_deref()))
        }
        Command::LevelSet {
            table,
            level,
            histogram,
            forbidden,
            nu1,
            nu2,
            out,
        } => {
            let t = table.load()?;
            let set = level.select(&t)?;
            if forbidden {
                let pairs = forbidden_pairs(&set, nu1.expect("required"), nu2.expect("required"))?;
                return emit(out.as_deref(), &(pairs_to_json(&pairs) + "\n"));
            }
            let mut w = sink(out.as_deref())?;
            if histogram {
                overlap_histogram(&set)?.write_csv(&mut w)
            } else {
                set.write_csv(&mut w)
            }
            .and_then(|_| w.flush())
            .map_err(io_to(out.as_deref()))
        }
        Command::Cluster {
            table,
            level,
            nu1,
            nu2,
            diagnostic,
            out,
        } => {
            let t = table.load()?;
            let set = level.select(&t)?;
            let report = if diagnostic {
                ClusterReport::diagnostic(&set, nu1, nu2)?
            } else {
                match cluster(&set, nu1, nu2) {
                    Err(pspin::Error::OgpViolation { witnesses }) => {
                        eprintln!("{}", pairs_to_json(&witnesses));
                        return Err(pspin::Error::OgpViolation { witnesses }.into());
                    }
                    r => r?,
                }
            };
            emit(out.as_deref(), &(report.to_json() + "\n"))
        }
        Command::Shatter {
            table,
            beta,
            kappa,
            nu1,
            nu2,
            c,
            cprime,
            out,
        } => {
            let t = table.load()?;
            let cell = analyze_cell(&t, beta, &CellParams::new(kappa, nu1, nu2, c, cprime))?;
            emit(out.as_deref(), &json(&cell))
        }
        Command::Exponents { epsilon, p, beta, n, out } => {
            emit(out.as_deref(), &json(&exponent_report(epsilon, p, beta, n)?))
        }
        Command::Mogp(MogpCommand::Tune { m, gamma }) => {
            let t = tune_mogp(m, gamma)?;
            let doc = serde_json::json!({ "xi": t.xi, "eta": t.eta, "c": t.c_rate, "p_star": t.p_star, "psi": t.psi });
            emit(None, &json(&doc))
        }
        Command::Mogp(MogpCommand::Search {
            n,
            p,
            m,
            gamma,
            xi,
            eta,
            angles,
            seed,
            mode,
            tuple_budget,
        }) => {
            let (xi, eta) = match (xi, eta) {
                (Some(x), Some(e)) => (x, e),
                _ => {
                    let t = tune_mogp(m, gamma)?;
                    (xi.unwrap_or(t.xi), eta.unwrap_or(t.eta))
                }
            };
            let angles = angles
                .into_iter()
                .map(EnsembleAngle::new)
                .collect::<pspin::Result<Vec<_>>>()?;
            let mut opts = SearchOptions {
                mode,
                ..SearchOptions::default()
            };
            if let Some(b) = tuple_budget {
                opts.tuple_budget = b;
            }
            let s = empirical_mogp_search(n, p, m, gamma, xi, eta, &angles, seed, &opts)?;
            emit(None, &json(&s))
        }
        Command::Tails(TailsCommand::Check {
            seed,
            cases,
            samples,
            out,
        }) => {
            let cfg = CheckConfig {
                seed,
                savage_cases: cases,
                savage_samples: samples,
                ..CheckConfig::default()
            };
            let rows = check_suite(&cfg)?;
            let mut w = sink(out.as_deref())?;
            writeln!(w, "{}", SandwichCheck::HEADER)
                .and_then(|_| rows.iter().try_for_each(|r| r.write_csv(&mut w)))
                .and_then(|_| w.flush())
                .map_err(io_to(out.as_deref()))?;
            match rows.iter().filter(|r| !r.pass).count() {
                0 => Ok(()),
                k => Err(CliError::ChecksFailed(k)),
            }
        }
        Command::Scan { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.out.clone());
            let manifest = match (cli.workers, cfg.workers) {
                (None, Some(w)) => rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .map_err(|e| CliError::Usage(e.to_string()))?
                    .install(|| run_scan(&cfg, &dir))?,
                _ => run_scan(&cfg, &dir)?,
            };
            eprintln!(
                "{} cell(s), {} file(s) written to {}",
                manifest.cells,
                manifest.files.len(),
                dir.display()
            );
            Ok(())
        }
        Command::PlotData { reports, out } => emit(out.as_deref(), &emit_plot_data(&reports)?),
    }
}
