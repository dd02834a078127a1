//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::config::{
    DumpKind, EstimatorChoice, ExperimentConfig, ExperimentKind, OutputFormat, PerComponent, SemiPath, SpectrumConfig, SpectrumName,
};
use crate::bench::experiments::{read_sequence_csv, run_equiv, run_estimate, run_fisher, run_lan, run_simulate};
use crate::bench::mc::run_mc;
use crate::bench::report::{io_err, to_json, write_flat_csv, McReport};
use crate::error::{Error, Result};
use crate::estimate::SplitMode;
use crate::lan::TrendCutoff;
use crate::simulate::DiscreteBackend;

#[derive(Parser, Debug)]
#[command(name = "effcov", version, about = "Efficient spectral covariance estimation under noise", arg_required_else_help = true)]
struct Cli {
    /// Experiment config (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed [default: 42].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file [default: stdout].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format [default: json].
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads [default: all cores]; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Asymptotic Fisher information I(Σ), ¼I(Σ)⁻¹Z and the finite-n check.
    Fisher(ModelArgs),
    /// Write one seeded sample as CSV.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// sequence | discrete | ticks [default: sequence].
        #[arg(long, value_enum)]
        what: Option<WhatArg>,
        /// Number of frequencies for `sequence` [default: window end].
        #[arg(long)]
        p_max: Option<usize>,
        /// dense | karhunen-loeve | increments [default: karhunen-loeve].
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
    },
    /// Adaptive and oracle estimate from one simulated sample or a CSV file.
    Estimate {
        #[command(flatten)]
        model: ModelArgs,
        /// CSV with columns `p,y_1,...,y_d`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte Carlo study of the parametric or semiparametric estimator.
    Mc {
        #[command(flatten)]
        model: ModelArgs,
        /// parametric | semiparametric [default: from config, else parametric].
        #[arg(long, value_enum)]
        kind: Option<McKind>,
        /// oracle | adaptive | both [default: adaptive].
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
        /// fast | end-to-end [default: fast].
        #[arg(long, value_enum)]
        path: Option<PathArg>,
        /// Fine grid of the end-to-end path as a multiple of max n_j [default: 8].
        #[arg(long)]
        grid_factor: Option<usize>,
        /// Leave per-replication estimates out of the report.
        #[arg(long)]
        no_estimates: bool,
    },
    /// LAN diagnostic: log-likelihood ratios towards Σ + r_n H.
    Lan {
        #[command(flatten)]
        model: ModelArgs,
        /// Perturbation H, rows separated by `;` [default: identity].
        #[arg(long)]
        h: Option<String>,
    },
    /// Distance trend between two spectra over a list of n.
    Equiv {
        #[command(flatten)]
        model: ModelArgs,
        /// Alternative spectrum [default: bb].
        #[arg(long)]
        alt: Option<String>,
        /// Hurst index of an fbm alternative.
        #[arg(long)]
        alt_hurst: Option<f64>,
        /// OU rate of an ou alternative.
        #[arg(long)]
        alt_beta: Option<f64>,
        /// Comma-separated sample sizes [default: 10000,1000000,100000000].
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<u64>>,
        /// Sum from p = 1 instead of p_n / ln n.
        #[arg(long)]
        no_cutoff: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WhatArg {
    Sequence,
    Discrete,
    Ticks,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Dense,
    KarhunenLoeve,
    Increments,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum McKind {
    Parametric,
    Semiparametric,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Oracle,
    Adaptive,
    Both,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PathArg {
    Fast,
    EndToEnd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    None,
    Parity,
    CrossFit,
}

/// Model, window and replication overrides shared by all subcommands.
#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// bm | bb | ou | fbm | ibm | power [default: bm].
    #[arg(long)]
    spectrum: Option<String>,
    /// Hurst index (fbm).
    #[arg(long)]
    hurst: Option<f64>,
    /// Mean-reversion rate (ou).
    #[arg(long)]
    beta: Option<f64>,
    /// Integration folds (ibm).
    #[arg(long)]
    folds: Option<u32>,
    /// Power-law constant (power).
    #[arg(long)]
    c: Option<f64>,
    /// Power-law exponent (power).
    #[arg(long)]
    delta: Option<f64>,
    /// Dimension [default: size of sigma, else 1].
    #[arg(long)]
    d: Option<usize>,
    /// Σ (or Σ(0)): rows separated by `;`, entries by `,`; a single number c means c·I_d [default: I_d].
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    /// Σ(1) of a linear semiparametric path [default: constant path].
    #[arg(long, allow_hyphen_values = true)]
    sigma_end: Option<String>,
    /// Noise level η, or comma-separated η_j [default: 1].
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    /// Sample size n, or comma-separated n_j [default: 1000000].
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    /// Schedule shapes w_j in [0, 1) [default: 0].
    #[arg(long, value_delimiter = ',')]
    w: Option<Vec<f64>>,
    /// Number of blocks [default: 20].
    #[arg(long)]
    m: Option<usize>,
    /// Parameter-set bound S [default: derived from Σ].
    #[arg(long)]
    s_bound: Option<f64>,
    /// Lower window factor a [default: 0, i.e. start at p = 1].
    #[arg(long)]
    a: Option<f64>,
    /// Upper window factor b [default: ln n].
    #[arg(long)]
    b: Option<f64>,
    /// none | parity | cross-fit [default: cross-fit].
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    /// Blocks on each side pooled into a block pilot [default: ⌈m/√p_c⌉].
    #[arg(long)]
    pilot_radius: Option<usize>,
    /// Replications [default: 1000].
    #[arg(long)]
    replications: Option<usize>,
    /// Run with fewer than 100 replications.
    #[arg(long)]
    force: bool,
    /// Record wall time in the report.
    #[arg(long)]
    record_timing: bool,
}

fn parse_matrix(s: &str, name: &str, d: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Config(format!("{name}: `{x}`: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() == 1 && rows[0].len() == 1 {
        let c = rows[0][0];
        let d = d.unwrap_or(1);
        return Ok((0..d).map(|i| (0..d).map(|j| if i == j { c } else { 0.0 }).collect()).collect());
    }
    Ok(rows)
}

fn per_component<T: Copy>(v: Vec<T>) -> PerComponent<T> {
    if v.len() == 1 {
        PerComponent::One(v[0])
    } else {
        PerComponent::Each(v)
    }
}

impl ModelArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        let m = &mut cfg.model;
        if let Some(s) = &self.spectrum {
            m.spectrum = SpectrumConfig::named(s.parse::<SpectrumName>()?);
        }
        let sp = &mut m.spectrum;
        sp.hurst = self.hurst.or(sp.hurst);
        sp.beta = self.beta.or(sp.beta);
        sp.folds = self.folds.or(sp.folds);
        sp.c = self.c.or(sp.c);
        sp.delta = self.delta.or(sp.delta);
        if let Some(d) = self.d {
            m.d = Some(d);
        }
        let d = if self.sigma.is_some() { self.d.or(m.d) } else { None };
        if let Some(s) = &self.sigma {
            let rows = parse_matrix(s, "sigma", d)?;
            m.d = Some(rows.len());
            m.sigma = Some(rows);
        }
        if let Some(s) = &self.sigma_end {
            m.sigma_end = Some(parse_matrix(s, "sigma_end", m.d)?);
        }
        if let Some(v) = &self.eta {
            m.eta = per_component(v.clone());
        }
        if let Some(v) = &self.n {
            m.n = per_component(v.clone());
        }
        if let Some(v) = &self.w {
            m.w = per_component(v.clone());
        }
        if let Some(v) = self.m {
            m.m = v;
        }
        if let Some(v) = self.s_bound {
            m.s_bound = Some(v);
        }
        if let Some(a) = self.a {
            cfg.window.a = Some(a);
        }
        if let Some(b) = self.b {
            cfg.window.b = Some(b);
        }
        if let Some(s) = self.split {
            cfg.window.split = match s {
                SplitArg::None => SplitMode::None,
                SplitArg::Parity => SplitMode::Parity,
                SplitArg::CrossFit => SplitMode::CrossFit,
            };
        }
        if let Some(r) = self.pilot_radius {
            cfg.window.pilot_radius = Some(r);
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        cfg.force |= self.force;
        cfg.record_timing |= self.record_timing;
        Ok(())
    }
}

/// Builds the config for a subcommand from the optional file and the flags.
fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let file = match &cli.config {
        Some(p) => Some(ExperimentConfig::load(p)?),
        None => None,
    };
    let base = |kind: ExperimentKind, accepted: &[ExperimentKind]| -> Result<ExperimentConfig> {
        match &file {
            Some(c) if accepted.contains(&c.kind) => {
                let mut c = c.clone();
                if !accepted.contains(&kind) || c.kind != kind {
                    c.kind = kind;
                }
                Ok(c)
            }
            Some(c) => Err(Error::Config(format!("kind: config is `{}`, which this subcommand cannot run", c.kind.label()))),
            None => Ok(ExperimentConfig::new(kind)),
        }
    };
    use ExperimentKind as K;
    let mut cfg = match &cli.command {
        Command::Fisher(args) => {
            let mut c = base(K::FisherTable, &[K::FisherTable, K::McParametric, K::Lan, K::Estimate])?;
            args.apply(&mut c)?;
            c
        }
        Command::Simulate {
            model,
            what,
            p_max,
            backend,
        } => {
            let mut c = base(K::SimulateDump, &[K::SimulateDump, K::McParametric, K::McSemiparametric, K::Estimate])?;
            model.apply(&mut c)?;
            if let Some(w) = what {
                c.simulate.what = match w {
                    WhatArg::Sequence => DumpKind::Sequence,
                    WhatArg::Discrete => DumpKind::Discrete,
                    WhatArg::Ticks => DumpKind::Ticks,
                };
            }
            if p_max.is_some() {
                c.simulate.p_max = *p_max;
            }
            if let Some(b) = backend {
                c.simulate.backend = match b {
                    BackendArg::Dense => DiscreteBackend::Dense,
                    BackendArg::KarhunenLoeve => DiscreteBackend::KarhunenLoeve,
                    BackendArg::Increments => DiscreteBackend::Increments,
                };
            }
            c
        }
        Command::Estimate { model, .. } => {
            let mut c = base(K::Estimate, &[K::Estimate, K::McParametric])?;
            model.apply(&mut c)?;
            c
        }
        Command::Mc {
            model,
            kind,
            estimator,
            path,
            grid_factor,
            no_estimates,
        } => {
            let k = match (kind, &file) {
                (Some(McKind::Parametric), _) => K::McParametric,
                (Some(McKind::Semiparametric), _) => K::McSemiparametric,
                (None, Some(f)) if f.kind == K::McSemiparametric => K::McSemiparametric,
                (None, _) => K::McParametric,
            };
            let mut c = base(k, &[K::McParametric, K::McSemiparametric])?;
            model.apply(&mut c)?;
            if let Some(e) = estimator {
                c.mc.estimator = match e {
                    EstimatorArg::Oracle => EstimatorChoice::Oracle,
                    EstimatorArg::Adaptive => EstimatorChoice::Adaptive,
                    EstimatorArg::Both => EstimatorChoice::Both,
                };
            }
            if let Some(p) = path {
                c.mc.path = match p {
                    PathArg::Fast => SemiPath::Fast,
                    PathArg::EndToEnd => SemiPath::EndToEnd,
                };
            }
            if let Some(g) = grid_factor {
                c.mc.grid_factor = *g;
            }
            if *no_estimates {
                c.mc.keep_estimates = false;
            }
            c
        }
        Command::Lan { model, h } => {
            let mut c = base(K::Lan, &[K::Lan, K::McParametric])?;
            model.apply(&mut c)?;
            if let Some(h) = h {
                c.lan.h = Some(parse_matrix(h, "h", c.model.d)?);
            }
            c
        }
        Command::Equiv {
            model,
            alt,
            alt_hurst,
            alt_beta,
            n_list,
            no_cutoff,
        } => {
            let mut c = base(K::EquivalenceTrend, &[K::EquivalenceTrend])?;
            model.apply(&mut c)?;
            if let Some(a) = alt {
                c.equiv.alternative = SpectrumConfig::named(a.parse()?);
            }
            c.equiv.alternative.hurst = alt_hurst.or(c.equiv.alternative.hurst);
            c.equiv.alternative.beta = alt_beta.or(c.equiv.alternative.beta);
            if let Some(n) = n_list {
                c.equiv.n_list = n.clone();
            }
            if *no_cutoff {
                c.equiv.cutoff = TrendCutoff::None;
            }
            c
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = cli.format {
        cfg.output.format = match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        };
    }
    if let Some(p) = &cli.out {
        cfg.output.path = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_out<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)),
        None => Box::new(stdout),
    })
}

fn emit<T: Serialize>(value: &T, cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    let mut w = open_out(&cfg.output.path, stdout)?;
    match cfg.output.format {
        OutputFormat::Json => w.write_all(to_json(value)?.as_bytes()).map_err(io_err)?,
        OutputFormat::Csv => write_flat_csv(value, &mut w)?,
    }
    w.flush().map_err(io_err)
}

/// Path of the CSV summary footer next to the replication rows.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn emit_mc(report: &McReport, cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    match cfg.output.format {
        OutputFormat::Json => emit(report, cfg, stdout),
        OutputFormat::Csv => match &cfg.output.path {
            Some(p) => {
                let mut w = open_out(&cfg.output.path, stdout)?;
                report.write_csv_rows(&mut w)?;
                w.flush().map_err(io_err)?;
                let f = File::create(summary_path(p)).map_err(|e| Error::Io(e.to_string()))?;
                report.write_csv_summary(BufWriter::new(f))
            }
            None => {
                report.write_csv_rows(&mut *stdout)?;
                stdout.write_all(b"\n").map_err(io_err)?;
                report.write_csv_summary(&mut *stdout)
            }
        },
    }
}

fn execute(cli: &Cli, cfg: &ExperimentConfig, stdout: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Fisher(_) => emit(&run_fisher(cfg)?, cfg, stdout),
        Command::Simulate { .. } => {
            let mut w = open_out(&cfg.output.path, stdout)?;
            run_simulate(cfg, &mut w)?;
            w.flush().map_err(io_err)
        }
        Command::Estimate { input, .. } => {
            let data = match input {
                Some(p) => Some(read_sequence_csv(File::open(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)?),
                None => None,
            };
            emit(&run_estimate(cfg, data)?, cfg, stdout)
        }
        Command::Mc { .. } => emit_mc(&run_mc(cfg)?, cfg, stdout),
        Command::Lan { .. } => emit(&run_lan(cfg)?, cfg, stdout),
        Command::Equiv { .. } => emit(&run_equiv(cfg)?, cfg, stdout),
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Parses `argv` (including the program name) and runs the command. Returns
/// 0 on success, 1 on usage or validation errors and 2 on runtime errors;
/// errors are written to `stderr` as one JSON object.
pub fn run_cli_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use clap::error::ErrorKind;
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = writeln!(stderr, "{}", error_json("usage", &e.render().to_string()));
                    1
                }
            };
        }
    };
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_json("validation", &e.to_string()));
            return 1;
        }
    };
    let mut buf = Vec::new();
    let mut run = || execute(&cli, &cfg, &mut buf);
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(Error::Config(format!("threads: {e}"))),
        },
        None => run(),
    };
    if stdout.write_all(&buf).and_then(|_| stdout.flush()).is_err() {
        return 2;
    }
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_json("runtime", &e.to_string()));
            2
        }
    }
}

/// [`run_cli_with`] on the process's standard streams.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
