//! CSV ingestion, the end-to-end pipeline, and the command-line surface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::assumptions::{
    build_mask, resolve_auto, AssumptionConfig, CellPolicy, Learning, ObservedRow, Setting,
};
use crate::error::{Error, Result};
use crate::inference::{cs_procedure, empirical, CsConfig, Mode, DEFAULT_DIM_CAP};
use crate::lpcore::{
    all_gap_bounds, feasibility_gap, l1_projection, welfare_bounds, BuiltinSimplex, Tolerances,
};
use crate::matrices::ProblemMatrices;
use crate::ordering::{
    build_partial_order, build_report, to_dot, transitive_reduction, GapMatrix, OrderingReport,
};
use crate::regimes::{Adaptivity, Horizon, RegimeIndex, WelfareSpec};
use crate::simulate::{sample_data, write_csv, DgpConfig};
use crate::statespace::StateSpaceLayout;

/// Feasibility threshold for treating an observation vector as consistent
/// with the model.
pub const FEAS_TAU: f64 = 1e-6;
const SORT_CAP: usize = 1000;
const N_MIN: usize = 30;

/// Observed rows plus the design read off the CSV header.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<ObservedRow>,
    pub t: usize,
    pub instrumented: Vec<bool>,
}

impl Dataset {
    pub fn layout(&self) -> Result<StateSpaceLayout> {
        let horizon = Horizon::new(self.t, self.instrumented.clone(), Adaptivity::Full)?;
        StateSpaceLayout::build(&horizon, true)
    }
}

/// Read observations from a CSV file with columns y1,d1[,z1],y2,d2[,z2];
/// an absent z column marks that period as non-instrumented.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| header.iter().position(|h| h == name);
    let t = if find("y2").is_some() { 2 } else { 1 };
    let mut y_cols = Vec::new();
    let mut d_cols = Vec::new();
    let mut z_cols = Vec::new();
    for period in 1..=t {
        let y = find(&format!("y{period}"))
            .ok_or_else(|| Error::Invalid(format!("missing column y{period}")))?;
        let d = find(&format!("d{period}"))
            .ok_or_else(|| Error::Invalid(format!("missing column d{period}")))?;
        y_cols.push(y);
        d_cols.push(d);
        z_cols.push(find(&format!("z{period}")));
    }
    let instrumented: Vec<bool> = z_cols.iter().map(|c| c.is_some()).collect();
    let parse_bit = |field: &str, row: usize| -> Result<u8> {
        match field.trim() {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(Error::Invalid(format!(
                "row {row}: expected 0 or 1, found '{other}'"
            ))),
        }
    };
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let get = |col: usize| -> Result<u8> {
            record
                .get(col)
                .ok_or_else(|| Error::Invalid(format!("row {}: short record", i + 1)))
                .and_then(|f| parse_bit(f, i + 1))
        };
        let y: Vec<u8> = y_cols.iter().map(|&c| get(c)).collect::<Result<_>>()?;
        let d: Vec<u8> = d_cols.iter().map(|&c| get(c)).collect::<Result<_>>()?;
        let z: Vec<u8> = z_cols
            .iter()
            .map(|c| c.map_or(Ok(0), &get))
            .collect::<Result<_>>()?;
        rows.push((y, d, z));
    }
    if rows.is_empty() {
        return Err(Error::Invalid("no data rows".into()));
    }
    Ok(Dataset { rows, t, instrumented })
}

/// Cell frequencies per instrument path together with the design they
/// were computed under; serialized as the `--p` file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub schema_version: u32,
    pub t: usize,
    pub instrumented: Vec<bool>,
    pub markov: bool,
    pub p: Vec<f64>,
    pub z_counts: Vec<usize>,
    pub labels: Vec<String>,
}

pub fn estimate_p(ds: &Dataset) -> Result<(EmpiricalDistribution, StateSpaceLayout)> {
    let layout = ds.layout()?;
    let (p, z_counts) = empirical(&ds.rows, &layout)?;
    let welfare = WelfareSpec::terminal(ds.t);
    let pm = ProblemMatrices::build(&layout, &welfare)?;
    let labels = pm.row_labels.iter().map(|l| l.to_string_compact()).collect();
    Ok((
        EmpiricalDistribution {
            schema_version: 1,
            t: ds.t,
            instrumented: ds.instrumented.clone(),
            markov: true,
            p,
            z_counts,
            labels,
        },
        layout,
    ))
}

pub fn load_p(path: &Path) -> Result<(EmpiricalDistribution, StateSpaceLayout)> {
    let text = std::fs::read_to_string(path)?;
    let dist: EmpiricalDistribution = serde_json::from_str(&text)?;
    let horizon = Horizon::new(dist.t, dist.instrumented.clone(), Adaptivity::Full)?;
    let layout = StateSpaceLayout::build(&horizon, dist.markov)?;
    let expected = layout.z_grid().len() * ((1usize << (2 * dist.t)) - 1);
    if dist.p.len() != expected {
        return Err(Error::Dimension(format!(
            "p has {} entries, design implies {expected}",
            dist.p.len()
        )));
    }
    Ok((dist, layout))
}

/// Parse a comma-separated assumption list: `none`, `m1[-up|-down|-auto]`,
/// `m2[-up|-down|-auto]`, `learning-short`, `learning-long`.
pub fn parse_assumptions(s: &str) -> Result<AssumptionConfig> {
    let mut config = AssumptionConfig::none(true);
    for token in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token {
            "none" => {}
            "m1" | "m1-up" => config.m1 = CellPolicy::all(Setting::Up),
            "m1-down" => config.m1 = CellPolicy::all(Setting::Down),
            "m1-auto" => config.m1 = CellPolicy::all(Setting::Auto),
            "m2" | "m2-up" => config.m2 = CellPolicy::all(Setting::Up),
            "m2-down" => config.m2 = CellPolicy::all(Setting::Down),
            "m2-auto" => config.m2 = CellPolicy::all(Setting::Auto),
            "learning-short" => config.learning = Learning::Short,
            "learning-long" => config.learning = Learning::Long,
            other => {
                return Err(Error::Invalid(format!("unknown assumption token '{other}'")))
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// Parse `terminal` or `weights:w1,...,wT`.
pub fn parse_welfare(s: &str, t: usize) -> Result<WelfareSpec> {
    if s == "terminal" {
        return Ok(WelfareSpec::terminal(t));
    }
    if let Some(rest) = s.strip_prefix("weights:") {
        let weights: Vec<f64> = rest
            .split(',')
            .map(|w| {
                w.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Invalid(format!("bad welfare weight '{w}'")))
            })
            .collect::<Result<_>>()?;
        if weights.len() != t {
            return Err(Error::Invalid(format!(
                "{} welfare weights for a {t}-period horizon",
                weights.len()
            )));
        }
        return WelfareSpec::weighted(weights);
    }
    Err(Error::Invalid(format!(
        "welfare must be 'terminal' or 'weights:...', found '{s}'"
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignSummary {
    pub t: usize,
    pub instrumented: Vec<bool>,
    pub markov: bool,
    pub n_states_active: usize,
    pub d_p: usize,
    pub n_regimes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub design: DesignSummary,
    pub assumptions: AssumptionConfig,
    pub warnings: Vec<String>,
    pub welfare_weights: Vec<f64>,
    pub feasibility_gap: f64,
    pub projected: bool,
    pub ordering: OrderingReport,
    /// Per-regime welfare [lower, upper], indexed by regime - 1.
    pub welfare_bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub assumptions: AssumptionConfig,
    pub welfare: WelfareSpec,
    pub eps_sign: f64,
    pub project: bool,
}

/// Estimate-free core: from an observation vector to the full ordering
/// report.  `rows` back the automatic direction detection and may be
/// omitted when no `auto` setting is present.
pub fn run_pipeline(
    layout: &StateSpaceLayout,
    p: &[f64],
    rows: Option<&[ObservedRow]>,
    opts: &PipelineOptions,
) -> Result<PipelineReport> {
    let mut tol = Tolerances::default();
    tol.sign = opts.eps_sign;
    let (config, warnings) = match rows {
        Some(rows) => resolve_auto(layout, &opts.assumptions, rows, N_MIN)?,
        None => {
            if opts.assumptions.m1.has_auto() || opts.assumptions.m2.has_auto() {
                return Err(Error::Invalid(
                    "automatic direction detection needs row-level data; pass --in".into(),
                ));
            }
            (opts.assumptions.clone(), Vec::new())
        }
    };
    let mask = build_mask(layout, &config)?;
    let pm = ProblemMatrices::build(layout, &opts.welfare)?.apply_mask(&mask.h)?;

    let gap = feasibility_gap(&pm.b, p, &tol)?;
    let mut p_use = p.to_vec();
    let mut projected = false;
    if gap > FEAS_TAU {
        if opts.project {
            let q = l1_projection(&pm.b, p, &tol)?;
            p_use = pm.b.apply(&q);
            projected = true;
        } else {
            return Err(Error::Infeasible);
        }
    }

    let solver = BuiltinSimplex;
    let (lower, upper) = all_gap_bounds(&pm, &p_use, &solver, &tol)?;
    let gaps = GapMatrix::new(lower, upper)?;
    let po = build_partial_order(&gaps, opts.eps_sign)?;
    let ordering = build_report(&gaps, &po, SORT_CAP)?;
    let mut wb = Vec::with_capacity(pm.n_regimes());
    for k in 1..=pm.n_regimes() {
        let (lo, hi) = welfare_bounds(&pm, &p_use, RegimeIndex(k), &solver, &tol)?;
        wb.push([lo, hi]);
    }
    Ok(PipelineReport {
        schema_version: 1,
        design: DesignSummary {
            t: layout.horizon().periods(),
            instrumented: (1..=layout.horizon().periods())
                .map(|t| layout.horizon().instrumented(t))
                .collect(),
            markov: layout.markov(),
            n_states_active: pm.n_states(),
            d_p: pm.d_p(),
            n_regimes: pm.n_regimes(),
        },
        assumptions: config,
        warnings,
        welfare_weights: opts.welfare.weights().to_vec(),
        feasibility_gap: gap,
        projected,
        ordering,
        welfare_bounds: wb,
    })
}

/// DOT rendering of the transitively reduced order in a report.
pub fn report_dot(report: &PipelineReport, layout: &StateSpaceLayout) -> Result<String> {
    let gaps = GapMatrix::new(report.ordering.lower.clone(), report.ordering.upper.clone())?;
    let po = build_partial_order(&gaps, report.ordering.eps_sign)?;
    to_dot(&transitive_reduction(&po), layout.horizon())
}

#[derive(Parser, Debug)]
#[command(
    name = "optdtr",
    about = "Partial welfare ordering of dynamic treatment regimes from instrumented binary data",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Vertex,
    Resolve,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a synthetic dataset from a built-in process.
    Simulate(SimulateArgs),
    /// Estimate per-instrument-path cell frequencies from a CSV sample.
    Estimate(EstimateArgs),
    /// Compute gap bounds, the partial ordering, and the candidate set.
    Order(OrderArgs),
    /// Sharp welfare bounds for selected regimes.
    Bounds(BoundsArgs),
    /// Bootstrap confidence set for the best regime.
    Infer(InferArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// positive | neg-mu22 | no-z2
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["p", "input"])))]
pub struct OrderArgs {
    /// Frequency file produced by `estimate`.
    #[arg(long)]
    pub p: Option<PathBuf>,
    /// Raw CSV sample (estimates frequencies on the fly).
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Comma-separated list: none, m1[-up|-down|-auto], m2[...],
    /// learning-short, learning-long.
    #[arg(long, default_value = "none")]
    pub assumptions: String,
    /// terminal | weights:w1,...,wT
    #[arg(long, default_value = "terminal")]
    pub welfare: String,
    #[arg(long, default_value_t = 1e-7)]
    pub eps_sign: f64,
    /// Project an inconsistent observation vector onto the model instead
    /// of failing.
    #[arg(long)]
    pub project: bool,
    /// Report output path (JSON); stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Graphviz output path for the reduced ordering.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[arg(long)]
    pub p: PathBuf,
    /// Comma-separated regime indices, or `all`.
    #[arg(long, default_value = "all")]
    pub regimes: String,
    #[arg(long)]
    pub project: bool,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// Defaults to vertex when the dual dimension fits the enumeration
    /// cap, resolve otherwise.
    #[arg(long)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Entry point; returns the process exit code (0 ok, 2 usage, 3 when the
/// data refute the model, 1 otherwise).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Error::Infeasible) => {
            eprintln!("error: the observed distribution is inconsistent with the model (try --project)");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => {
            let cfg = DgpConfig::from_preset(&args.preset)?;
            let sample = sample_data(&cfg, args.n, args.seed)?;
            write_csv(&sample, &args.out, cfg.z2_present)?;
            Ok(())
        }
        Command::Estimate(args) => {
            let ds = read_csv(&args.input)?;
            let (dist, _) = estimate_p(&ds)?;
            std::fs::write(&args.out, serde_json::to_string_pretty(&dist)?)?;
            Ok(())
        }
        Command::Order(args) => {
            let (p, layout, rows) = match (&args.p, &args.input) {
                (Some(path), None) => {
                    let (dist, layout) = load_p(path)?;
                    (dist.p, layout, None)
                }
                (None, Some(path)) => {
                    let ds = read_csv(path)?;
                    let (dist, layout) = estimate_p(&ds)?;
                    (dist.p, layout, Some(ds.rows))
                }
                _ => {
                    return Err(Error::Invalid(
                        "pass exactly one of --p or --in".into(),
                    ))
                }
            };
            let opts = PipelineOptions {
                assumptions: parse_assumptions(&args.assumptions)?,
                welfare: parse_welfare(&args.welfare, layout.horizon().periods())?,
                eps_sign: args.eps_sign,
                project: args.project,
            };
            let report = run_pipeline(&layout, &p, rows.as_deref(), &opts)?;
            let json = serde_json::to_string_pretty(&report)?;
            match &args.out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            if let Some(path) = &args.dot {
                std::fs::write(path, report_dot(&report, &layout)?)?;
            }
            Ok(())
        }
        Command::Bounds(args) => {
            let (dist, layout) = load_p(&args.p)?;
            let welfare = WelfareSpec::terminal(layout.horizon().periods());
            let pm = ProblemMatrices::build(&layout, &welfare)?;
            let tol = Tolerances::default();
            let gap = feasibility_gap(&pm.b, &dist.p, &tol)?;
            let p_use = if gap > FEAS_TAU {
                if args.project {
                    let q = l1_projection(&pm.b, &dist.p, &tol)?;
                    pm.b.apply(&q)
                } else {
                    return Err(Error::Infeasible);
                }
            } else {
                dist.p.clone()
            };
            let ks: Vec<usize> = if args.regimes == "all" {
                (1..=pm.n_regimes()).collect()
            } else {
                args.regimes
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::Invalid(format!("bad regime index '{s}'")))
                    })
                    .collect::<Result<_>>()?
            };
            #[derive(Serialize)]
            struct Row {
                regime: usize,
                lower: f64,
                upper: f64,
            }
            let mut out = Vec::new();
            for k in ks {
                if k == 0 || k > pm.n_regimes() {
                    return Err(Error::Invalid(format!("regime index {k} out of range")));
                }
                let (lo, hi) =
                    welfare_bounds(&pm, &p_use, RegimeIndex(k), &BuiltinSimplex, &tol)?;
                out.push(Row { regime: k, lower: lo, upper: hi });
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
        Command::Infer(args) => {
            let ds = read_csv(&args.input)?;
            let layout = ds.layout()?;
            let welfare = WelfareSpec::terminal(ds.t);
            let pm = ProblemMatrices::build(&layout, &welfare)?;
            let mode = match args.mode {
                Some(ModeArg::Vertex) => Mode::Vertex,
                Some(ModeArg::Resolve) => Mode::Resolve,
                None => {
                    if pm.d_p() + 1 <= DEFAULT_DIM_CAP {
                        Mode::Vertex
                    } else {
                        Mode::Resolve
                    }
                }
            };
            let cfg = CsConfig::new(args.alpha, args.reps, mode, args.seed)?;
            let tol = Tolerances::default();
            let cs = cs_procedure(&ds.rows, &layout, &pm, &cfg, &tol)?;
            println!("{}", serde_json::to_string_pretty(&cs)?);
            Ok(())
        }
    }
}
