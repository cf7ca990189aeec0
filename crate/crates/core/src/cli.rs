//! Command-line front-end.
//!
//! Exit codes: 0 success, 2 validation error, 3 impossible observation pair,
//! 4 simulation failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::chain::classify;
use crate::elapsed::{
    distribution_of_elapsed, ElapsedQuery, VarianceMode, DEFAULT_SERIES_EPSILON, DEFAULT_TAIL,
};
use crate::error::{ChainError, Result};
use crate::matrix::{load_matrix_file, TransitionMatrix};
use crate::oracle::{simulate_elapsed, SimConfig, DEFAULT_CHUNK};
use crate::passage::passage_summary;
use crate::report::{build_report, distribution_table, DistributionReport, Report, WrightFisherReport};
use crate::wright_fisher::{age_setup, allele_age, AgeOptions, WrightFisherParams};

#[derive(Debug, Parser)]
#[command(
    name = "markov-elapsed",
    version,
    about = "Elapsed time between two transient-state observations of an absorbing Markov chain"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Passage quantities and E(T), V(T) in every variance mode.
    Analyze(PairArgs),
    /// Monte Carlo check of E(T) and V(T) against the analytic values.
    Simulate(PairArgs),
    /// Table of P(T = t).
    Distribution(PairArgs),
    /// Expected age of an allele under a Wright-Fisher model.
    Wf(WfArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Paper,
    Series,
    Corrected,
}

impl From<ModeArg> for VarianceMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Paper => VarianceMode::PaperClosed,
            ModeArg::Series => VarianceMode::Series,
            ModeArg::Corrected => VarianceMode::CorrectedClosed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Emit a JSON document instead of a table.
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub trajectories: u64,
    /// Accepted trajectories per simulation work unit.
    #[arg(long, default_value_t = DEFAULT_CHUNK)]
    pub chunk: u64,
    #[arg(long, value_enum, default_value = "corrected")]
    pub variance_mode: ModeArg,
    /// Series truncation threshold on H_jj^n.
    #[arg(long, default_value_t = DEFAULT_SERIES_EPSILON)]
    pub epsilon: f64,
    /// Residual probability mass for automatically sized distributions.
    #[arg(long, default_value_t = DEFAULT_TAIL)]
    pub tail: f64,
    /// Fixed distribution horizon.
    #[arg(long)]
    pub tmax: Option<usize>,
    /// Include the distribution of T in analyze/wf reports.
    #[arg(long)]
    pub distribution: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    /// CSV or JSON transition matrix.
    pub matrix: PathBuf,
    /// Start state (0-based index or label).
    pub i: String,
    /// Observed end state (0-based index or label).
    pub j: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct WfArgs {
    /// JSON parameter file {"N", "s", "h", "u", "v", "observed_count"}.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long = "N", short = 'N')]
    pub population: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub observed_count: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Deserialize)]
struct WfFile {
    #[serde(rename = "N")]
    population: Option<usize>,
    s: Option<f64>,
    h: Option<f64>,
    u: Option<f64>,
    v: Option<f64>,
    observed_count: Option<usize>,
}

impl CommonArgs {
    fn query(&self, i: usize, j: usize) -> ElapsedQuery {
        let mut q = ElapsedQuery::new(i, j).with_mode(self.variance_mode.into());
        q.series_epsilon = self.epsilon;
        q.tail = self.tail;
        q.tmax = self.tmax;
        q
    }

    fn sim_config(&self) -> SimConfig {
        let mut cfg = SimConfig::new(self.seed, self.trajectories);
        cfg.chunk = self.chunk;
        cfg
    }

    fn render(&self, report: &Report) -> String {
        if self.json {
            let mut s = report.to_json();
            s.push('\n');
            s
        } else {
            report.to_table()
        }
    }
}

struct Loaded {
    matrix: TransitionMatrix,
    i: usize,
    j: usize,
}

fn load_pair(args: &PairArgs) -> Result<Loaded> {
    let matrix = load_matrix_file(&args.matrix)?;
    let i = matrix.resolve_state(&args.i)?;
    let j = matrix.resolve_state(&args.j)?;
    let cs = classify(&matrix)?;
    for s in [i, j] {
        if !cs.is_transient(s) {
            return Err(ChainError::NotTransient {
                state: matrix.label(s).to_string(),
            });
        }
    }
    Ok(Loaded { matrix, i, j })
}

/// Full analytic report for a loaded pair; impossible pairs become errors.
fn analytic_report(command: &str, args: &PairArgs, l: &Loaded) -> Result<Report> {
    let cs = classify(&l.matrix)?;
    let ps = passage_summary(&l.matrix, l.j)?;
    let q = args.common.query(l.i, l.j);
    let mut report = build_report(
        command,
        &args.matrix.display().to_string(),
        &l.matrix,
        &cs,
        &ps,
        &q,
        true,
    )?;
    if let Some(why) = report.elapsed.impossible {
        return Err(crate::elapsed::impossible_error(&ps, l.i, why));
    }
    if args.common.distribution {
        let d = distribution_of_elapsed(&cs, &ps, &q)?;
        report.distribution = Some(DistributionReport::from(&d));
    }
    Ok(report)
}

pub fn cmd_analyze(args: &PairArgs) -> Result<String> {
    let l = load_pair(args)?;
    let report = analytic_report("analyze", args, &l)?;
    Ok(args.common.render(&report))
}

pub fn cmd_simulate(args: &PairArgs) -> Result<String> {
    let l = load_pair(args)?;
    let cfg = args.common.sim_config();
    let estimate = simulate_elapsed(&l.matrix, l.i, l.j, &cfg)?;
    let mut report = analytic_report("simulate", args, &l)?;
    report.attach_simulation(cfg, estimate);
    Ok(args.common.render(&report))
}

pub fn cmd_distribution(args: &PairArgs) -> Result<String> {
    let l = load_pair(args)?;
    let cs = classify(&l.matrix)?;
    let ps = passage_summary(&l.matrix, l.j)?;
    let q = args.common.query(l.i, l.j);
    let d = DistributionReport::from(&distribution_of_elapsed(&cs, &ps, &q)?);
    Ok(if args.common.json {
        let mut s = crate::report::to_json_string(&d);
        s.push('\n');
        s
    } else {
        distribution_table(&d)
    })
}

fn wf_params(args: &WfArgs) -> Result<(WrightFisherParams, usize)> {
    let file = match &args.params {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ChainError::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<WfFile>(&text).map_err(|e| ChainError::Parse(e.to_string()))?
        }
        None => WfFile {
            population: None,
            s: None,
            h: None,
            u: None,
            v: None,
            observed_count: None,
        },
    };
    let population = args
        .population
        .or(file.population)
        .ok_or_else(|| ChainError::InvalidArgument("population size N is required".into()))?;
    let observed = args
        .observed_count
        .or(file.observed_count)
        .ok_or_else(|| ChainError::InvalidArgument("--observed-count is required".into()))?;
    let params = WrightFisherParams {
        population,
        s: args.s.or(file.s).unwrap_or(0.0),
        h: args.h.or(file.h).unwrap_or(0.5),
        u: args.u.or(file.u).unwrap_or(0.0),
        v: args.v.or(file.v).unwrap_or(0.0),
    };
    Ok((params, observed))
}

pub fn cmd_wf(args: &WfArgs) -> Result<String> {
    let (params, observed) = wf_params(args)?;
    let c = &args.common;
    let setup = age_setup(&params, observed)?;
    let q = c.query(1, observed);
    let source = format!(
        "wright-fisher N={} s={} h={} u={} v={}",
        params.population, params.s, params.h, params.u, params.v
    );
    let mut report = build_report(
        "wf",
        &source,
        &setup.matrix,
        &setup.structure,
        &setup.passage,
        &q,
        false,
    )?;
    if let Some(why) = report.elapsed.impossible {
        return Err(crate::elapsed::impossible_error(&setup.passage, 1, why));
    }
    let options = AgeOptions {
        variance_mode: c.variance_mode.into(),
        distribution: c.distribution,
        tail: c.tail,
    };
    let age = allele_age(&params, observed, &options)?;
    if let Some(d) = &age.distribution {
        report.distribution = Some(DistributionReport::from(d));
    }
    report.wright_fisher = Some(WrightFisherReport {
        params,
        observed_count: observed,
        age,
    });
    Ok(c.render(&report))
}

pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Distribution(a) => cmd_distribution(a),
        Command::Wf(a) => cmd_wf(a),
    }
}

/// Parses `args`, runs the command and returns `(exit code, stdout, stderr)`.
pub fn run<I, T>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                (0, text, String::new())
            } else {
                (2, String::new(), text)
            };
        }
    };
    match execute(&cli) {
        Ok(out) => (0, out, String::new()),
        Err(e) => {
            let mut msg = format!("error: {e}\n");
            if matches!(e, ChainError::NotTransient { .. }) {
                msg.push_str("both observed states must be transient states of an absorbing chain\n");
            }
            (e.exit_code(), String::new(), msg)
        }
    }
}
