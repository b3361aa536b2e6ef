//! The `ecd` command line: `generate`, `fit`, `eval` and `predict`.
//!
//! Every command writes into an output directory taken from `--out`, falling
//! back to `ECD_OUTPUT_DIR` and then the working directory. Outputs depend
//! only on inputs and seeds, never on timing.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{assess_communities, match_against_memberships, roc_auc, CommunityAssessment};
use crate::generator::{generate, GeneratorConfig, GroundTruth, Preset};
use crate::inference::fit;
use crate::io::{self, DatasetBundle, Manifest};
use crate::model::{HyperParams, Optimizer};
use crate::prediction::{one_hop_averages, run_next_activation_benchmark, run_stance_benchmark, stance_scores};

pub const OUTPUT_DIR_ENV: &str = "ECD_OUTPUT_DIR";
pub const MODEL_FILE: &str = "model.json";
pub const Q_TRACE_FILE: &str = "q_trace.tsv";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.json";
pub const ASSESSMENT_FILE: &str = "assessment.tsv";
pub const STANCE_FILE: &str = "stance.tsv";
pub const STANCE_SUMMARY_FILE: &str = "stance_summary.json";
pub const STANCE_BENCHMARK_FILE: &str = "stance_benchmark.json";
pub const NEXT_ACTIVATION_FILE: &str = "next_activation.tsv";

/// Name of the rule `--repair-graph` applies, as recorded in fit reports.
pub const REPAIR_RULE: &str = "earliest-activated";

#[derive(Debug, Parser)]
#[command(name = "ecd", version, about = "Echo-chamber detection on follow graphs and polarized cascades")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset with known communities.
    Generate(GenerateArgs),
    /// Fit the model to a dataset.
    Fit(FitArgs),
    /// Compare a model with ground truth, or assess its communities.
    Eval(EvalArgs),
    /// Run stance detection or next-activation prediction.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Social,
    Balanced,
    Polarized,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Social => Preset::Social,
            PresetArg::Balanced => Preset::Balanced,
            PresetArg::Polarized => Preset::Polarized,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, short, env = OUTPUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
}

const CONFIG_FLAGS: [&str; 13] = [
    "preset",
    "seed",
    "nodes",
    "links",
    "items",
    "eta",
    "delta",
    "mu",
    "sigma_echo",
    "sigma_social",
    "social_prior",
    "echo_prior",
    "max_cascade_size",
];

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Prior strengths (s, h): social (16, 8), balanced (8, 8), polarized (8, 16).
    #[arg(long, value_enum, default_value_t = PresetArg::Polarized)]
    pub preset: PresetArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub links: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    /// Community polarities, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eta: Option<Vec<f64>>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma_echo: Option<f64>,
    #[arg(long)]
    pub sigma_social: Option<f64>,
    /// Overrides the preset's social prior s.
    #[arg(long)]
    pub social_prior: Option<f64>,
    /// Overrides the preset's echo prior h.
    #[arg(long)]
    pub echo_prior: Option<f64>,
    #[arg(long)]
    pub max_cascade_size: Option<usize>,
    /// Regenerate the dataset described by a manifest.
    #[arg(long, conflicts_with_all = CONFIG_FLAGS)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

impl GenerateArgs {
    pub fn config(&self) -> Result<GeneratorConfig> {
        if let Some(path) = &self.manifest {
            let manifest: Manifest = io::read_json(path)?;
            return Ok(manifest.generator);
        }
        let mut c = GeneratorConfig::preset(self.preset.into());
        macro_rules! set {
            ($($field:ident <- $arg:ident),*) => {
                $(if let Some(v) = self.$arg.clone() { c.$field = v; })*
            };
        }
        set!(
            seed <- seed,
            num_nodes <- nodes,
            num_links <- links,
            num_items <- items,
            eta <- eta,
            delta <- delta,
            mu <- mu,
            sigma_echo <- sigma_echo,
            sigma_social <- sigma_social,
            social_prior <- social_prior,
            echo_prior <- echo_prior,
            max_cascade_size <- max_cascade_size
        );
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset directory holding edges.tsv and cascades.tsv (and
    /// ground_truth.json when known).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "cascades", conflicts_with = "data")]
    pub edges: Option<PathBuf>,
    #[arg(long, requires = "edges", conflicts_with = "data")]
    pub cascades: Option<PathBuf>,
    #[arg(long, conflicts_with = "data")]
    pub ground_truth: Option<PathBuf>,
}

impl DataArgs {
    pub fn bundle(&self) -> Result<DatasetBundle> {
        match (&self.data, &self.edges, &self.cascades) {
            (Some(dir), None, None) => Ok(DatasetBundle::in_dir(dir)),
            (None, Some(edges), Some(cascades)) => Ok(DatasetBundle {
                edges: edges.clone(),
                cascades: cascades.clone(),
                ground_truth: self.ground_truth.clone(),
                manifest: None,
            }),
            _ => Err(Error::input("give either --data DIR or both --edges and --cascades")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Plain,
    Adam,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    /// Number of communities K.
    #[arg(long, default_value_t = 8)]
    pub communities: usize,
    /// Social prior strength s.
    #[arg(long, default_value_t = 8.0)]
    pub social_prior: f64,
    /// Echo-chamber prior strength h.
    #[arg(long, default_value_t = 16.0)]
    pub echo_prior: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub steps_per_iter: usize,
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative log-likelihood gain per iteration below which fitting stops.
    #[arg(long, default_value_t = 1e-4, allow_hyphen_values = true)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Plain)]
    pub optimizer: OptimizerArg,
    /// Maximum sharing links materialized per item.
    #[arg(long)]
    pub pair_cap: Option<usize>,
}

impl HyperArgs {
    pub fn hyper(&self) -> Result<HyperParams> {
        let h = HyperParams {
            num_communities: self.communities,
            social_prior: self.social_prior,
            echo_prior: self.echo_prior,
            epsilon: self.epsilon,
            learning_rate: self.lr,
            steps_per_iter: self.steps_per_iter,
            batch_size: self.batch_size,
            max_iters: self.max_iters,
            seed: self.seed,
            optimizer: match self.optimizer {
                OptimizerArg::Plain => Optimizer::Plain,
                OptimizerArg::Adam => Optimizer::Adam,
            },
            pair_cap: self.pair_cap,
            tolerance: self.tolerance,
        };
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Add a follow edge from each cascade's first user to every later user
    /// with no earlier activated followee.
    #[arg(long)]
    pub repair_graph: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Reconstruction,
    Assessment,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Stance,
    NextActivation,
}

pub const DEFAULT_MASK_FRACTIONS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Fitted model; required for stance scoring without --holdout.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    /// Hyperparameters of the fits the benchmarks run.
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MASK_FRACTIONS)]
    pub mask_fractions: Vec<f64>,
    /// Most negatives drawn per item in the next-activation benchmark.
    #[arg(long)]
    pub negative_cap: Option<usize>,
    /// Stance benchmark: hide all activations of this fraction of nodes,
    /// refit, and score the hidden nodes.
    #[arg(long)]
    pub holdout: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<Vec<PathBuf>> {
    let config = args.config()?;
    let (truth, trace) = generate(&config)?;
    let dir = &args.out.out;
    let manifest = Manifest::new(config);
    let files = vec![
        (dir.join(&manifest.edges), io::format_edges(&truth.graph)),
        (dir.join(&manifest.cascades), io::format_cascades(&truth.cascades)),
        (
            dir.join(&manifest.ground_truth),
            io::to_json(&io::GroundTruthFile::new(&truth.memberships)),
        ),
        (
            dir.join(&manifest.trace),
            io::format_trace(&trace, &truth.graph, &truth.cascades),
        ),
        (dir.join(io::MANIFEST_FILE), io::to_json(&manifest)),
    ];
    for (path, text) in &files {
        io::write_text(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Fit summary written next to the model. Timing is left out so that reruns
/// produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub steps: usize,
    pub converged: bool,
    pub epochs: f64,
    pub log_likelihood_trace: Vec<f64>,
    pub repaired_edges: Option<usize>,
    pub repair_rule: Option<&'static str>,
}

pub fn cmd_fit(args: &FitArgs) -> Result<Vec<PathBuf>> {
    let hyper = args.hyper.hyper()?;
    let mut data = args.data.bundle()?.load()?;
    let repaired = if args.repair_graph {
        Some(data.graph.repair_cascades(&data.cascades)?)
    } else {
        None
    };
    let report = fit(&data.graph, &data.cascades, &hyper)?;
    let dir = &args.out.out;
    let summary = FitSummary {
        iterations: report.iterations,
        steps: report.q_trace.len(),
        converged: report.converged,
        epochs: report.epochs,
        log_likelihood_trace: report.log_likelihood_trace.clone(),
        repaired_edges: repaired,
        repair_rule: repaired.map(|_| REPAIR_RULE),
    };
    let paths = vec![dir.join(MODEL_FILE), dir.join(Q_TRACE_FILE), dir.join(FIT_REPORT_FILE)];
    io::write_model(&paths[0], &report.fitted, &hyper)?;
    io::write_text(&paths[1], &io::format_values(&report.q_trace))?;
    io::write_json(&paths[2], &summary)?;
    eprintln!(
        "fit: {} iterations in {:.2?}{}",
        report.iterations,
        report.wall_time,
        if report.converged { ", converged" } else { "" }
    );
    Ok(paths)
}

fn check_nodes(model_nodes: usize, data_nodes: usize) -> Result<()> {
    if model_nodes != data_nodes {
        return Err(Error::input(format!(
            "model has {model_nodes} nodes but the dataset has {data_nodes}"
        )));
    }
    Ok(())
}

/// Assessment rows ordered by `|eta|` descending, ties by community index.
pub fn sorted_assessment(mut rows: Vec<CommunityAssessment>) -> Vec<CommunityAssessment> {
    rows.sort_by(|a, b| b.eta.abs().total_cmp(&a.eta.abs()).then(a.community.cmp(&b.community)));
    rows
}

pub fn format_assessment(rows: &[CommunityAssessment]) -> String {
    let mut out = String::from("community\teta\tconductance\tpurity\tsize\n");
    for r in rows {
        writeln!(out, "{}\t{}\t{}\t{}\t{}", r.community, r.eta, r.conductance, r.purity, r.size).unwrap();
    }
    out
}

pub fn cmd_eval(args: &EvalArgs) -> Result<PathBuf> {
    let (fitted, _) = io::read_model(&args.model)?;
    let bundle = args.data.bundle()?;
    let dir = &args.out.out;
    match args.mode {
        EvalMode::Reconstruction => {
            let truth = bundle
                .load_ground_truth()?
                .ok_or_else(|| Error::input("reconstruction mode needs a ground-truth file"))?;
            check_nodes(fitted.num_nodes(), truth.params.num_nodes())?;
            let report = match_against_memberships(&truth, &fitted)?;
            let path = dir.join(RECONSTRUCTION_FILE);
            io::write_json(&path, &report)?;
            Ok(path)
        }
        EvalMode::Assessment => {
            let data = bundle.load()?;
            check_nodes(fitted.num_nodes(), data.graph.num_nodes())?;
            let rows = sorted_assessment(assess_communities(&data.graph, &data.cascades, &fitted)?);
            let path = dir.join(ASSESSMENT_FILE);
            io::write_text(&path, &format_assessment(&rows))?;
            Ok(path)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StanceSummary {
    /// Null when ground truth is missing or has a single side.
    pub ecd_auc: Option<f64>,
    pub one_hop_auc: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
    pub flagged: usize,
}

pub fn cmd_predict(args: &PredictArgs) -> Result<Vec<PathBuf>> {
    let bundle = args.data.bundle()?;
    let data = bundle.load()?;
    let dir = &args.out.out;
    match (args.task, args.holdout) {
        (Task::Stance, Some(fraction)) => {
            let memberships = bundle
                .load_ground_truth()?
                .ok_or_else(|| Error::input("the stance benchmark needs a ground-truth file"))?;
            check_nodes(memberships.params.num_nodes(), data.graph.num_nodes())?;
            let truth = GroundTruth {
                memberships,
                graph: data.graph,
                cascades: data.cascades,
            };
            let report = run_stance_benchmark(&truth, fraction, &args.hyper.hyper()?, args.hyper.seed)?;
            let path = dir.join(STANCE_BENCHMARK_FILE);
            io::write_json(&path, &report)?;
            Ok(vec![path])
        }
        (Task::Stance, None) => {
            let model = args
                .model
                .as_deref()
                .ok_or_else(|| Error::input("stance scoring needs --model (or --holdout to refit)"))?;
            let (fitted, _) = io::read_model(model)?;
            check_nodes(fitted.num_nodes(), data.graph.num_nodes())?;
            let scores = stance_scores(&fitted);
            let mut table = String::from("node\tscore\tflagged\n");
            for s in &scores {
                writeln!(table, "{}\t{}\t{}", s.node, s.score, s.flagged).unwrap();
            }
            let hop = one_hop_averages(&data.graph, &data.cascades);
            let truth = bundle.load_ground_truth()?;
            let (mut labels, mut ecd, mut base) = (Vec::new(), Vec::new(), Vec::new());
            if let Some(truth) = &truth {
                check_nodes(truth.params.num_nodes(), data.graph.num_nodes())?;
                for (u, p) in truth.node_polarities().into_iter().enumerate() {
                    if p != 0.0 {
                        labels.push(p > 0.0);
                        ecd.push(scores[u].score);
                        base.push(hop[u].value);
                    }
                }
            }
            let n_pos = labels.iter().filter(|&&l| l).count();
            let both = n_pos > 0 && n_pos < labels.len();
            let summary = StanceSummary {
                ecd_auc: both.then(|| roc_auc(&ecd, &labels)).transpose()?,
                one_hop_auc: both.then(|| roc_auc(&base, &labels)).transpose()?,
                n_pos,
                n_neg: labels.len() - n_pos,
                flagged: scores.iter().filter(|s| s.flagged).count(),
            };
            let paths = vec![dir.join(STANCE_FILE), dir.join(STANCE_SUMMARY_FILE)];
            io::write_text(&paths[0], &table)?;
            io::write_json(&paths[1], &summary)?;
            Ok(paths)
        }
        (Task::NextActivation, _) => {
            let hyper = args.hyper.hyper()?;
            let mut table = String::from("method\tmask_fraction\tauc\tn_pos\tn_neg\tnegatives_capped\n");
            for &f in &args.mask_fractions {
                let rows = run_next_activation_benchmark(
                    &data.graph,
                    &data.cascades,
                    f,
                    &hyper,
                    hyper.seed,
                    args.negative_cap,
                )?;
                for r in rows {
                    writeln!(
                        table,
                        "{}\t{}\t{}\t{}\t{}\t{}",
                        r.method, r.mask_fraction, r.auc, r.n_pos, r.n_neg, r.negatives_capped
                    )
                    .unwrap();
                }
            }
            let path = dir.join(NEXT_ACTIVATION_FILE);
            io::write_text(&path, &table)?;
            Ok(vec![path])
        }
    }
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a).map(|p| vec![p]),
        Command::Predict(a) => cmd_predict(a),
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `args` (program name first), runs the command, and reports
/// failures as a single line on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("ecd: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ecd: {}", one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
