//! `bilocal`: predictions, sweeps, synthetic experiments, LHV searches and
//! the separable counter-example.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use bilocal_core::inequalities::{
    bilocal_parameter, chsh_from_table, ij_13, ij_14, predicted_curves, ChshConfig, RegionFlags,
};
use bilocal_core::lhv::{
    eval_bilocal, fit_bilocal, maximize_b_bilocal, maximize_b_local, sample_bilocal, BilocalModel, LocalModel,
    SearchConfig,
};
use bilocal_core::measurements::{counterexample_scenario, Scenario};
use bilocal_core::network::{scenario_distribution, swapped_states, tripartite_distribution};
use bilocal_core::sampler::{
    estimate, flip_noise, flip_probability, seeded_stream, simulate_counts, symmetrize, EstimateReport,
    DEFAULT_BOOTSTRAP_ROUNDS,
};
use bilocal_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::{Cell, CsvTable, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "bilocal", version, about = "Bilocality tests in a three-node entanglement-swapping network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact I, J, B and CHSH for the given visibilities.
    Predict(PredictArgs),
    /// Predicted curves and region flags over a visibility grid.
    Sweep(SweepArgs),
    /// Synthetic finite-statistics experiment with bootstrap errors.
    Experiment(ExperimentArgs),
    /// Separable sources that still violate the bilocal inequality.
    Counterexample(OutputArgs),
    /// Hidden-variable model searches.
    Lhv(LhvArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    #[value(name = "14")]
    Fourteen,
    #[value(name = "13")]
    Thirteen,
    Chsh,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::Fourteen => Scenario::Fourteen,
            ScenarioArg::Thirteen => Scenario::Thirteen,
            ScenarioArg::Chsh => Scenario::Chsh,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Visibilities {
    #[arg(long, default_value_t = 1.0)]
    v1: f64,
    #[arg(long, default_value_t = 1.0)]
    v2: f64,
    #[arg(long, default_value_t = 1.0)]
    vb: f64,
}

impl Visibilities {
    fn effective(&self) -> f64 {
        self.v1 * self.v2 * self.vb
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, value_enum, default_value = "14")]
    scenario: ScenarioArg,
    #[command(flatten)]
    vis: Visibilities,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 0.0)]
    v_min: f64,
    #[arg(long, default_value_t = 1.0)]
    v_max: f64,
    /// Number of grid points, endpoints included.
    #[arg(long, default_value_t = 101)]
    steps: usize,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value = "14")]
    scenario: ScenarioArg,
    #[command(flatten)]
    vis: Visibilities,
    /// Visibility to reach by flipping Alice's outcomes; defaults to v1·v2·vb.
    #[arg(long)]
    v_target: Option<f64>,
    /// Trials per setting.
    #[arg(long, short = 'n', default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_ROUNDS)]
    bootstrap: usize,
    /// Relabel half of each setting's events before estimating.
    #[arg(long)]
    symmetrize: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelClass {
    Bilocal,
    Local,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["maximize", "fit", "sample"])))]
struct LhvArgs {
    /// Maximize B over the given model class.
    #[arg(long, value_enum)]
    maximize: Option<ModelClass>,
    /// Fit a bilocal model to the exact pipeline at visibility --v.
    #[arg(long)]
    fit: bool,
    /// Evaluate this many random bilocal models.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, value_enum, default_value = "14")]
    scenario: ScenarioArg,
    /// Target visibility for --fit.
    #[arg(long, default_value_t = 0.45)]
    v: f64,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    /// Cardinality of a local model.
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type CmdResult = Result<(), Failure>;

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn write(
    format: Format,
    path: Option<&std::path::Path>,
    json: impl FnOnce() -> String,
    csv: impl FnOnce() -> Option<CsvTable>,
) -> CmdResult {
    let text = match format {
        Format::Json => json(),
        Format::Csv => csv().ok_or_else(|| config_error("this report is only available as json"))?.render(),
    };
    output::emit(&text, path)?;
    Ok(())
}

#[derive(Serialize)]
struct PredictReport {
    schema_version: u32,
    scenario: Scenario,
    v1: f64,
    v2: f64,
    vb: f64,
    v_effective: f64,
    #[serde(rename = "I")]
    i: Option<f64>,
    #[serde(rename = "J")]
    j: Option<f64>,
    #[serde(rename = "B")]
    b: Option<f64>,
    #[serde(rename = "CHSH")]
    chsh: f64,
}

fn opt_cell(v: Option<f64>) -> Cell {
    v.map_or(Cell::Text(String::new()), Cell::Num)
}

fn cmd_predict(args: &PredictArgs) -> CmdResult {
    let vis = &args.vis;
    let scenario: Scenario = args.scenario.into();
    let ij = match scenario {
        Scenario::Fourteen => Some(ij_14(&scenario_distribution(scenario, vis.v1, vis.v2, vis.vb)?)?),
        Scenario::Thirteen => Some(ij_13(&scenario_distribution(scenario, vis.v1, vis.v2, vis.vb)?)?),
        Scenario::Chsh => None,
    };
    let chsh =
        chsh_from_table(&scenario_distribution(Scenario::Chsh, vis.v1, vis.v2, vis.vb)?, &ChshConfig::default())?;
    let report = PredictReport {
        schema_version: SCHEMA_VERSION,
        scenario,
        v1: vis.v1,
        v2: vis.v2,
        vb: vis.vb,
        v_effective: vis.effective(),
        i: ij.as_ref().map(|p| p.i_value),
        j: ij.as_ref().map(|p| p.j_value),
        b: ij.as_ref().map(bilocal_parameter),
        chsh,
    };
    write(
        args.out.format,
        args.out.output.as_deref(),
        || output::json(&report),
        || {
            Some(CsvTable {
                header: vec!["scenario", "v_effective", "I", "J", "B", "CHSH"],
                rows: vec![vec![
                    Cell::Text(scenario.to_string()),
                    Cell::Num(report.v_effective),
                    opt_cell(report.i),
                    opt_cell(report.j),
                    opt_cell(report.b),
                    Cell::Num(chsh),
                ]],
            })
        },
    )
}

#[derive(Serialize)]
struct SweepRow {
    v: f64,
    b14: f64,
    b13: f64,
    chsh: f64,
    nonbilocal_14: bool,
    nonbilocal_13: bool,
    nonlocal: bool,
}

#[derive(Serialize)]
struct SweepReport {
    schema_version: u32,
    rows: Vec<SweepRow>,
}

fn cmd_sweep(args: &SweepArgs) -> CmdResult {
    if !(0.0 <= args.v_min && args.v_min < args.v_max && args.v_max <= 1.0) {
        return Err(config_error(format!(
            "sweep range must satisfy 0 <= v-min < v-max <= 1, got [{}, {}]",
            args.v_min, args.v_max
        )));
    }
    if args.steps < 2 {
        return Err(config_error("sweep needs at least 2 steps"));
    }
    let span = args.v_max - args.v_min;
    let mut rows = Vec::with_capacity(args.steps);
    for k in 0..args.steps {
        let v = if k + 1 == args.steps { args.v_max } else { args.v_min + span * k as f64 / (args.steps - 1) as f64 };
        let curves = predicted_curves(v)?;
        let flags = RegionFlags::at(v);
        rows.push(SweepRow {
            v,
            b14: curves.b14,
            b13: curves.b13,
            chsh: curves.chsh,
            nonbilocal_14: flags.nonbilocal_14,
            nonbilocal_13: flags.nonbilocal_13,
            nonlocal: flags.nonlocal,
        });
    }
    let csv_rows = rows
        .iter()
        .map(|r| {
            vec![
                Cell::Num(r.v),
                Cell::Num(r.b14),
                Cell::Num(r.b13),
                Cell::Num(r.chsh),
                Cell::Bool(r.nonbilocal_14),
                Cell::Bool(r.nonbilocal_13),
                Cell::Bool(r.nonlocal),
            ]
        })
        .collect();
    let report = SweepReport { schema_version: SCHEMA_VERSION, rows };
    write(
        args.format,
        args.output.as_deref(),
        || output::json(&report),
        || {
            Some(CsvTable {
                header: vec!["v", "b14", "b13", "chsh", "nonbilocal_14", "nonbilocal_13", "nonlocal"],
                rows: csv_rows,
            })
        },
    )
}

#[derive(Serialize)]
struct ExperimentReport {
    schema_version: u32,
    v1: f64,
    v2: f64,
    vb: f64,
    v_max: f64,
    v_target: f64,
    flip_probability: f64,
    symmetrized: bool,
    #[serde(flatten)]
    estimate: EstimateReport,
}

fn cmd_experiment(args: &ExperimentArgs) -> CmdResult {
    let vis = &args.vis;
    let scenario: Scenario = args.scenario.into();
    let dist = scenario_distribution(scenario, vis.v1, vis.v2, vis.vb)?;
    let v_max = vis.effective();
    let v_target = args.v_target.unwrap_or(v_max);
    if v_target > v_max {
        return Err(config_error(format!("target visibility {v_target} exceeds v1*v2*vb = {v_max}")));
    }
    let p = if v_max == 0.0 { 0.5 } else { flip_probability(v_target, v_max)? };
    let raw = simulate_counts(&dist, args.trials, &mut seeded_stream(args.seed, 0))?;
    let mut counts = flip_noise(&raw, p, &mut seeded_stream(args.seed, 1))?;
    if args.symmetrize {
        counts = symmetrize(&counts)?;
    }
    let estimate = estimate(&counts, args.bootstrap, args.seed)?;
    let report = ExperimentReport {
        schema_version: SCHEMA_VERSION,
        v1: vis.v1,
        v2: vis.v2,
        vb: vis.vb,
        v_max,
        v_target,
        flip_probability: p,
        symmetrized: args.symmetrize,
        estimate,
    };
    write(
        args.out.format,
        args.out.output.as_deref(),
        || output::json(&report),
        || {
            let e = &report.estimate;
            Some(CsvTable {
                header: vec![
                    "scenario",
                    "v_target",
                    "trials",
                    "seed",
                    "i_hat",
                    "j_hat",
                    "b_hat",
                    "b_sigma",
                    "chsh_hat",
                    "chsh_sigma",
                    "effective_visibility",
                ],
                rows: vec![vec![
                    Cell::Text(scenario.to_string()),
                    Cell::Num(v_target),
                    Cell::Int(e.trials_per_setting),
                    Cell::Int(e.seed),
                    Cell::Num(e.i_hat),
                    Cell::Num(e.j_hat),
                    Cell::Num(e.b_hat),
                    Cell::Num(e.b_sigma),
                    opt_cell(e.chsh_hat),
                    opt_cell(e.chsh_sigma),
                    Cell::Num(e.effective_visibility),
                ]],
            })
        },
    )
}

#[derive(Serialize)]
struct Certificate {
    state: String,
    herald_probability: Option<f64>,
    pt_min_eigenvalue: f64,
}

#[derive(Serialize)]
struct CounterexampleReport {
    schema_version: u32,
    #[serde(rename = "I14")]
    i14: f64,
    #[serde(rename = "J14")]
    j14: f64,
    #[serde(rename = "I13")]
    i13: f64,
    #[serde(rename = "J13")]
    j13: f64,
    #[serde(rename = "B14")]
    b14: f64,
    #[serde(rename = "B13")]
    b13: f64,
    certificates: Vec<Certificate>,
    separable: bool,
}

fn cmd_counterexample(args: &OutputArgs) -> CmdResult {
    let ce = counterexample_scenario();
    let ij14 = ij_14(&tripartite_distribution(&ce.rho_ab, &ce.rho_bc, &ce.settings, &ce.bob)?)?;
    let settings13 = ce.settings.clone().with_scenario(Scenario::Thirteen);
    let ij13 = ij_13(&tripartite_distribution(&ce.rho_ab, &ce.rho_bc, &settings13, &ce.bob.group_partial()?)?)?;
    let mut certificates = vec![Certificate {
        state: "rho_bc".into(),
        herald_probability: None,
        pt_min_eigenvalue: ce.rho_bc.ppt_min_eigenvalue()?,
    }];
    for pair in swapped_states(&ce.rho_ab, &ce.rho_bc, &ce.bob)? {
        certificates.push(Certificate {
            state: format!("rho_ac|{}", pair.herald_label),
            herald_probability: Some(pair.herald_probability),
            pt_min_eigenvalue: pair.state.ppt_min_eigenvalue()?,
        });
    }
    let report = CounterexampleReport {
        schema_version: SCHEMA_VERSION,
        i14: ij14.i_value,
        j14: ij14.j_value,
        i13: ij13.i_value,
        j13: ij13.j_value,
        b14: bilocal_parameter(&ij14),
        b13: bilocal_parameter(&ij13),
        separable: certificates.iter().all(|c| c.pt_min_eigenvalue >= -1e-10),
        certificates,
    };
    write(
        args.format,
        args.output.as_deref(),
        || output::json(&report),
        || {
            let mut rows = vec![
                vec![Cell::Text("I14".into()), Cell::Num(report.i14)],
                vec![Cell::Text("J14".into()), Cell::Num(report.j14)],
                vec![Cell::Text("I13".into()), Cell::Num(report.i13)],
                vec![Cell::Text("J13".into()), Cell::Num(report.j13)],
                vec![Cell::Text("B14".into()), Cell::Num(report.b14)],
                vec![Cell::Text("B13".into()), Cell::Num(report.b13)],
            ];
            for c in &report.certificates {
                rows.push(vec![Cell::Text(format!("pt_min_eigenvalue[{}]", c.state)), Cell::Num(c.pt_min_eigenvalue)]);
            }
            Some(CsvTable { header: vec!["quantity", "value"], rows })
        },
    )
}

#[derive(Serialize)]
#[serde(untagged)]
enum Witness {
    Bilocal(BilocalModel),
    Local(LocalModel),
}

#[derive(Serialize)]
struct LhvReport {
    schema_version: u32,
    mode: &'static str,
    scenario: Scenario,
    seed: u64,
    restarts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    model: Witness,
}

fn cmd_lhv(args: &LhvArgs) -> CmdResult {
    let scenario: Scenario = args.scenario.into();
    if scenario == Scenario::Chsh {
        return Err(config_error("lhv searches support scenarios 14 and 13"));
    }
    let arity = scenario.b_arity();
    let default_k = if args.fit { 8 } else { 4 };
    let (k1, k2) = (args.k1.unwrap_or(default_k), args.k2.unwrap_or(default_k));
    if k1 == 0 || k2 == 0 || args.k == 0 {
        return Err(config_error("hidden-variable cardinalities must be at least 1"));
    }
    let restarts = args.restarts.unwrap_or(if args.fit { 16 } else { 64 });
    let cfg = SearchConfig { restarts, iterations: args.iterations, seed: args.seed };
    let base = |mode, model| LhvReport {
        schema_version: SCHEMA_VERSION,
        mode,
        scenario,
        seed: args.seed,
        restarts,
        best_b: None,
        samples: None,
        v: None,
        residual: None,
        model,
    };
    let report = if let Some(class) = args.maximize {
        match class {
            ModelClass::Bilocal => {
                let (m, b) = maximize_b_bilocal(scenario, k1, k2, &cfg)?;
                LhvReport { best_b: Some(b), ..base("maximize-bilocal", Witness::Bilocal(m)) }
            }
            ModelClass::Local => {
                let (m, b) = maximize_b_local(scenario, args.k, &cfg)?;
                LhvReport { best_b: Some(b), ..base("maximize-local", Witness::Local(m)) }
            }
        }
    } else if args.fit {
        let target = scenario_distribution(scenario, args.v, 1.0, 1.0)?;
        let (m, residual) = fit_bilocal(&target, k1, k2, &cfg)?;
        LhvReport { v: Some(args.v), residual: Some(residual), ..base("fit", Witness::Bilocal(m)) }
    } else {
        let n = args.sample.unwrap_or(0);
        if n == 0 {
            return Err(config_error("--sample needs at least one model"));
        }
        let mut rng = seeded_stream(args.seed, 0);
        let mut best: Option<(BilocalModel, f64)> = None;
        for _ in 0..n {
            let m = sample_bilocal(&mut rng, k1, k2, arity);
            let b = bilocal_parameter(&bilocal_core::inequalities::ij_auto(&eval_bilocal(&m, arity)?)?);
            if best.as_ref().is_none_or(|(_, v)| b > *v) {
                best = Some((m, b));
            }
        }
        let (m, b) = best.expect("n >= 1");
        LhvReport { best_b: Some(b), samples: Some(n), ..base("sample", Witness::Bilocal(m)) }
    };
    write(args.format, args.output.as_deref(), || output::json(&report), || None)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let rendered = e.to_string();
            let head: Vec<&str> = rendered.lines().take_while(|l| !l.trim().is_empty()).map(str::trim).collect();
            eprintln!("{}", head.join(" "));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Predict(a) => cmd_predict(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Counterexample(a) => cmd_counterexample(a),
        Command::Lhv(a) => cmd_lhv(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
