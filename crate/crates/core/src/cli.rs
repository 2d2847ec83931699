//! Command-line interface: `sfqi <command> [flags]`.
//!
//! Every command writes plain-text artifacts plus a `manifest.txt` that
//! records the resolved flags, seeds and format versions. Outputs depend only
//! on the flags, so reruns are byte-identical.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::dataset::{load_trajectories, save_trajectories, ColumnSchema, TrajectoryDataset};
use crate::envsim::{make_covariance, CovarianceSetting, SimConfig, SimSettings};
use crate::error::{Error, Result};
use crate::evaluation::{
    comparison_table, fitted_q_evaluation, monte_carlo_value, summary_table, EvalReport, FqeConfig, ForestConfig,
};
use crate::experiment::{
    compare_against_first, data_seed, run_experiment, DataSource, EvalMode, ExperimentSpec, LearnerSpec,
};
use crate::fqi::{FeatureVariant, FqiConfig, GreedyPolicy, QEnsemble};
use crate::neuralnet::{gradient_check, NetworkArchitecture, TrainConfig};
use crate::scalar::fmt_exact;
use crate::spectral::SpectralBasis;
use crate::textio::{self, join_list, KeyValues};

const MANIFEST: &str = "manifest.txt";
const GRADIENT_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "sfqi", version, about = "Spectral fitted Q-iteration experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a frozen simulator config and one dataset per seed.
    Simulate(SimulateArgs),
    /// Train one policy on a dataset file.
    Train(TrainArgs),
    /// Estimate the value of a saved policy.
    Evaluate(EvaluateArgs),
    /// Train and evaluate PCA policies over a list of κ.
    SweepKappa(SweepArgs),
    /// Paired comparison of feature variants.
    Compare(CompareArgs),
    /// Finite-difference check of the network gradient.
    GradientCheck(GradientCheckArgs),
}

/// Seed list: `0..20` (half-open) or `1,5,9`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl std::str::FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("invalid seed list {s:?}");
        if let Some((a, b)) = s.split_once("..") {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a >= b {
                return Err(bad());
            }
            return Ok(SeedList((a..b).collect()));
        }
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(SeedList)
    }
}

fn parse_variant(s: &str) -> std::result::Result<FeatureVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_setting(s: &str) -> std::result::Result<CovarianceSetting, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    /// Frozen simulator config; overrides the other simulator flags.
    #[arg(long)]
    pub sim_config: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub n_traj: usize,
    #[arg(long, default_value_t = 80)]
    pub horizon: usize,
    #[arg(long, default_value_t = 2)]
    pub m0: usize,
    /// Number of high-frequency blocks.
    #[arg(long = "J", default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, default_value_t = 27)]
    pub block_length: usize,
    #[arg(long, default_value_t = 0.6)]
    pub zeta: f64,
    #[arg(long, default_value = "dependent", value_parser = parse_setting)]
    pub setting: CovarianceSetting,
    #[arg(long, default_value_t = 2)]
    pub actions: usize,
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub z_persistence: f64,
    #[arg(long, default_value_t = 0.5)]
    pub x_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub reward_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub z_signal: f64,
    /// Scale of the state offsets `b_a`.
    #[arg(long, default_value_t = 0.0)]
    pub offset_scale: f64,
    /// Seed of the covariance and coefficients.
    #[arg(long, default_value_t = 0)]
    pub coef_seed: u64,
}

impl SimArgs {
    pub fn settings(&self) -> SimSettings {
        SimSettings {
            n_traj: self.n_traj,
            horizon: self.horizon,
            m0: self.m0,
            block_lengths: vec![self.block_length; self.blocks],
            zeta: self.zeta,
            setting: self.setting,
            action_count: self.actions,
            c: self.c,
            gamma: self.gamma,
            z_persistence: self.z_persistence,
            x_noise_sd: self.x_noise,
            reward_noise_sd: self.reward_noise,
            z_signal: self.z_signal,
            offset_scale: self.offset_scale,
            seed: self.coef_seed,
            ..SimSettings::default()
        }
    }

    pub fn build(&self) -> Result<SimConfig> {
        match &self.sim_config {
            Some(path) => SimConfig::load(path),
            None => SimConfig::from_settings(self.settings()),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LearnerArgs {
    /// Hidden layer widths.
    #[arg(long, default_value = "15,5,5", value_delimiter = ',')]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// FQI iterations K.
    #[arg(long, default_value_t = 50)]
    pub iterations: usize,
    /// Transitions per iteration (default: all).
    #[arg(long)]
    pub sample_size: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Discount used for learning (defaults to the simulator's).
    #[arg(long)]
    pub discount: Option<f64>,
    /// Variance share for κ when a variant gives none.
    #[arg(long, default_value_t = 0.95)]
    pub kappa_threshold: f64,
}

impl LearnerArgs {
    pub fn spec(&self, default_gamma: f64) -> LearnerSpec {
        LearnerSpec {
            hidden: self.hidden.clone(),
            dropout: self.dropout,
            kappa_threshold: self.kappa_threshold,
            fqi: FqiConfig {
                iterations: self.iterations,
                sample_size: self.sample_size,
                gamma: self.discount.unwrap_or(default_gamma),
                train: TrainConfig {
                    epochs: self.epochs,
                    batch_size: self.batch_size,
                    learning_rate: self.learning_rate,
                    ..TrainConfig::default()
                },
                seed: 0,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ForestArgs {
    #[arg(long, default_value_t = 30)]
    pub fqe_iterations: usize,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 10)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 1.0)]
    pub bootstrap: f64,
}

impl ForestArgs {
    pub fn config(&self, gamma: f64, seed: u64) -> FqeConfig {
        FqeConfig {
            iterations: self.fqe_iterations,
            gamma,
            forest: ForestConfig {
                n_trees: self.trees,
                max_depth: self.max_depth,
                min_leaf_size: self.min_leaf,
                bootstrap_fraction: self.bootstrap,
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Trajectory file.
    #[arg(long)]
    pub data: PathBuf,
    /// Column layout, e.g. `traj_id=0,t=1,x=2:4,z=4:112,action=112,reward=113`.
    #[arg(long)]
    pub schema: Option<String>,
}

impl DataArgs {
    pub fn load(&self) -> Result<TrajectoryDataset<f64>> {
        let schema = self.schema.as_deref().map(str::parse::<ColumnSchema>).transpose()?;
        load_trajectories(&self.data, schema.as_ref())
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value = "0")]
    pub seeds: SeedList,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "pca", value_parser = parse_variant)]
    pub variant: FeatureVariant,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Policy output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Policy directory written by `train`.
    #[arg(long)]
    pub policy: PathBuf,
    /// Monte-Carlo evaluation against this simulator config.
    #[arg(long, conflicts_with = "data")]
    pub sim_config: Option<PathBuf>,
    /// Fitted Q evaluation on this trajectory file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 20)]
    pub t_mc: usize,
    #[command(flatten)]
    pub forest: ForestArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Evaluate by fitted Q evaluation on held-out trajectories instead of
    /// Monte-Carlo rollouts.
    #[arg(long)]
    pub fqe: bool,
    /// Held-out trajectories per seed for FQE.
    #[arg(long, default_value_t = 3)]
    pub test_size: usize,
    /// Trajectory file shared by every seed (FQE only).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 20)]
    pub t_mc: usize,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value = "2,6,10,14", value_delimiter = ',')]
    pub kappas: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub n_mc: usize,
    #[arg(long, default_value_t = 20)]
    pub t_mc: usize,
    #[arg(long, default_value = "0..20")]
    pub seeds: SeedList,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Variants; the first is compared against each of the others.
    #[arg(long, default_value = "pca,all,ave,bottleneck", value_delimiter = ',', value_parser = parse_variant)]
    pub variants: Vec<FeatureVariant>,
    #[arg(long, default_value = "0..20")]
    pub seeds: SeedList,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GradientCheckArgs {
    #[arg(long, default_value_t = 10)]
    pub input_dim: usize,
    #[arg(long, default_value = "15,5,5", value_delimiter = ',')]
    pub arch: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional directory for a report file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn manifest(command: &str, entries: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tool=sfqi version={}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "command={command}");
    for (k, v) in entries {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

fn sim_entries(sim: &SimConfig) -> Vec<(&'static str, String)> {
    let s = &sim.settings;
    vec![
        ("n_traj", s.n_traj.to_string()),
        ("horizon", s.horizon.to_string()),
        ("m0", s.m0.to_string()),
        ("block_lengths", join_list(&s.block_lengths)),
        ("zeta", fmt_exact(s.zeta)),
        ("setting", s.setting.to_string()),
        ("actions", s.action_count.to_string()),
        ("c", fmt_exact(s.c)),
        ("gamma", fmt_exact(s.gamma)),
        ("z_persistence", fmt_exact(s.z_persistence)),
        ("x_noise", fmt_exact(s.x_noise_sd)),
        ("reward_noise", fmt_exact(s.reward_noise_sd)),
        ("z_signal", fmt_exact(s.z_signal)),
        ("offset_scale", fmt_exact(s.offset_scale)),
        ("coef_seed", s.seed.to_string()),
    ]
}

fn learner_entries(l: &LearnerSpec) -> Vec<(&'static str, String)> {
    vec![
        ("hidden", join_list(&l.hidden)),
        ("dropout", fmt_exact(l.dropout)),
        ("kappa_threshold", fmt_exact(l.kappa_threshold)),
        ("iterations", l.fqi.iterations.to_string()),
        (
            "sample_size",
            l.fqi.sample_size.map_or("all".to_string(), |n| n.to_string()),
        ),
        ("discount", fmt_exact(l.fqi.gamma)),
        ("epochs", l.fqi.train.epochs.to_string()),
        ("batch_size", l.fqi.train.batch_size.to_string()),
        ("learning_rate", fmt_exact(l.fqi.train.learning_rate)),
    ]
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    textio::write_file(&dir.join(name), contents)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let sim = args.sim.build()?;
    sim.save(&args.out.join("sim_config.txt"))?;
    let mut files = Vec::new();
    for &seed in &args.seeds.0 {
        let ds = sim.generate_dataset::<f64>(data_seed(seed))?;
        let name = format!("dataset_seed{seed}.csv");
        save_trajectories(&ds, &args.out.join(&name))?;
        files.push(name);
    }
    let basis = SpectralBasis::<f64>::from_covariance(vec![0.0; sim.settings.m()], &make_covariance(&sim.settings), 0)?;
    let mut entries = sim_entries(&sim);
    entries.push(("seeds", join_list(&args.seeds.0)));
    entries.push(("datasets", files.join(",")));
    entries.push(("covariance_top_eigenvalues", {
        let top: Vec<String> = basis.eigenvalues.iter().take(5).map(|&v| fmt_exact(v)).collect();
        top.join(",")
    }));
    write(&args.out, MANIFEST, &manifest("simulate", &entries))
}

fn history_table(out: &crate::fqi::FqiOutcome<f64>) -> String {
    let a = out.ensemble.action_count();
    let mut s = String::from("iteration,mean_target");
    for j in 0..a {
        let _ = write!(s, ",loss_action{j}");
    }
    s.push('\n');
    for h in &out.history {
        let _ = write!(s, "{},{}", h.iteration, fmt_exact(h.mean_target));
        for l in &h.train_loss {
            let _ = write!(s, ",{}", l.map_or("NA".to_string(), fmt_exact));
        }
        s.push('\n');
    }
    s
}

fn train(args: &TrainArgs) -> Result<()> {
    let ds = args.data.load()?;
    let learner = args.learner.spec(args.learner.discount.unwrap_or(0.5));
    let out = crate::experiment::train_variant(&ds, args.variant, &learner, args.seed)?;
    out.ensemble.save(&args.out)?;
    write(&args.out, "history.csv", &history_table(&out))?;
    let mut entries = learner_entries(&learner);
    entries.push(("data", args.data.data.display().to_string()));
    entries.push(("variant", out.ensemble.variant.to_string()));
    entries.push(("seed", args.seed.to_string()));
    entries.push(("n_traj", ds.n_traj().to_string()));
    entries.push(("horizon", ds.horizon().to_string()));
    entries.push(("r_max", fmt_exact(ds.r_max())));
    write(&args.out, MANIFEST, &manifest("train", &entries))
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let ensemble = Arc::new(QEnsemble::<f64>::load(&args.policy)?);
    let policy = GreedyPolicy::new(ensemble.clone());
    let mut entries = vec![
        ("policy", args.policy.display().to_string()),
        ("variant", ensemble.variant.to_string()),
        ("seed", args.seed.to_string()),
    ];
    let report = match (&args.sim_config, &args.data) {
        (Some(path), None) => {
            let sim = SimConfig::load(path)?;
            entries.push(("estimator", "monte-carlo".into()));
            entries.push(("sim_config", path.display().to_string()));
            entries.push(("n_mc", args.n_mc.to_string()));
            entries.push(("t_mc", args.t_mc.to_string()));
            monte_carlo_value(&sim, &policy, args.n_mc, args.t_mc, args.seed)?
        }
        (None, Some(path)) => {
            let schema = args.schema.as_deref().map(str::parse::<ColumnSchema>).transpose()?;
            let ds = load_trajectories::<f64>(path, schema.as_ref())?;
            let gamma = ensemble.gamma;
            let cfg = args.forest.config(gamma, args.seed);
            entries.push(("estimator", "fqe".into()));
            entries.push(("data", path.display().to_string()));
            entries.push(("fqe_iterations", cfg.iterations.to_string()));
            entries.push(("trees", cfg.forest.n_trees.to_string()));
            let v = fitted_q_evaluation(&policy, &ds, ensemble.basis.as_deref(), &ensemble.variant, &cfg, None)?;
            EvalReport::new("fqe", vec![args.seed], vec![v])?
        }
        _ => {
            return Err(Error::Config(
                "evaluate needs exactly one of --sim-config (Monte Carlo) or --data (FQE)".into(),
            ))
        }
    };
    write(&args.out, "summary.csv", &summary_table(std::slice::from_ref(&report)))?;
    write(&args.out, "records.txt", &report.records())?;
    write(&args.out, MANIFEST, &manifest("evaluate", &entries))
}

fn values_table(reports: &[EvalReport], kappas: Option<&[usize]>) -> String {
    let mut out = String::from(if kappas.is_some() { "seed,kappa,value\n" } else { "seed,variant,value\n" });
    for (j, r) in reports.iter().enumerate() {
        for (s, v) in r.seeds.iter().zip(&r.values) {
            let key = kappas.map_or(r.label.clone(), |k| k[j].to_string());
            let _ = writeln!(out, "{s},{key},{}", fmt_exact(*v));
        }
    }
    out
}

fn sweep_kappa(args: &SweepArgs) -> Result<()> {
    if args.kappas.is_empty() {
        return Err(Error::Config("κ list is empty".into()));
    }
    let sim = Arc::new(args.sim.build()?);
    let learner = args.learner.spec(sim.settings.gamma);
    let spec = ExperimentSpec {
        data: DataSource::Simulated(sim.clone()),
        variants: args.kappas.iter().map(|&k| FeatureVariant::Pca { kappa: k }).collect(),
        learner: learner.clone(),
        eval: EvalMode::MonteCarlo {
            n_mc: args.n_mc,
            t_mc: args.t_mc,
        },
        seeds: args.seeds.0.clone(),
    };
    let reports = run_experiment(&spec)?;
    // variance explained, averaged over the seeds' training datasets
    let mut explained = vec![0.0; args.kappas.len()];
    for &seed in &args.seeds.0 {
        let ds = sim.generate_dataset::<f64>(data_seed(seed))?;
        let cum = SpectralBasis::fit(&ds)?.cumulative_variance()?;
        for (e, &k) in explained.iter_mut().zip(&args.kappas) {
            *e += cum[k.min(cum.len()) - 1] / args.seeds.0.len() as f64;
        }
    }
    let mut table = String::from("kappa,n,mean,se,margin,variance_explained\n");
    for ((k, r), e) in args.kappas.iter().zip(&reports).zip(&explained) {
        let _ = writeln!(
            table,
            "{k},{},{},{},{},{}",
            r.values.len(),
            fmt_exact(r.mean()),
            fmt_exact(r.standard_error()),
            fmt_exact(r.margin()),
            fmt_exact(*e)
        );
    }
    write(&args.out, "kappa_table.csv", &table)?;
    write(&args.out, "values.csv", &values_table(&reports, Some(&args.kappas)))?;
    let mut entries = sim_entries(&sim);
    entries.extend(learner_entries(&learner));
    entries.push(("kappas", join_list(&args.kappas)));
    entries.push(("seeds", join_list(&args.seeds.0)));
    entries.push(("estimator", "monte-carlo".into()));
    entries.push(("n_mc", args.n_mc.to_string()));
    entries.push(("t_mc", args.t_mc.to_string()));
    write(&args.out, MANIFEST, &manifest("sweep-kappa", &entries))
}

fn compare(args: &CompareArgs) -> Result<()> {
    let e = &args.eval;
    let mut entries = Vec::new();
    let (data, gamma) = match &e.data {
        Some(path) => {
            if !e.fqe {
                return Err(Error::Config("--data requires --fqe".into()));
            }
            let schema = e.schema.as_deref().map(str::parse::<ColumnSchema>).transpose()?;
            entries.push(("data", path.display().to_string()));
            let ds = load_trajectories::<f64>(path, schema.as_ref())?;
            (DataSource::Fixed(Arc::new(ds)), args.learner.discount.unwrap_or(0.5))
        }
        None => {
            let sim = Arc::new(args.sim.build()?);
            entries.extend(sim_entries(&sim));
            let gamma = sim.settings.gamma;
            (DataSource::Simulated(sim), gamma)
        }
    };
    let learner = args.learner.spec(gamma);
    let eval = if e.fqe {
        entries.push(("estimator", "fqe".into()));
        entries.push(("test_size", e.test_size.to_string()));
        entries.push(("fqe_iterations", e.forest.fqe_iterations.to_string()));
        entries.push(("trees", e.forest.trees.to_string()));
        EvalMode::Fqe {
            test_size: e.test_size,
            fqe: e.forest.config(learner.fqi.gamma, 0),
        }
    } else {
        entries.push(("estimator", "monte-carlo".into()));
        entries.push(("n_mc", e.n_mc.to_string()));
        entries.push(("t_mc", e.t_mc.to_string()));
        EvalMode::MonteCarlo { n_mc: e.n_mc, t_mc: e.t_mc }
    };
    let spec = ExperimentSpec {
        data,
        variants: args.variants.clone(),
        learner: learner.clone(),
        eval,
        seeds: args.seeds.0.clone(),
    };
    let reports = run_experiment(&spec)?;
    let comparisons = compare_against_first(&reports)?;
    write(&args.out, "values.csv", &values_table(&reports, None))?;
    write(&args.out, "summary.csv", &summary_table(&reports))?;
    write(&args.out, "comparison.csv", &comparison_table(&comparisons))?;
    let records: String = reports.iter().map(EvalReport::records).collect();
    write(&args.out, "records.txt", &records)?;
    entries.extend(learner_entries(&learner));
    entries.push(("variants", join_list(&args.variants)));
    entries.push(("seeds", join_list(&args.seeds.0)));
    write(&args.out, MANIFEST, &manifest("compare", &entries))
}

fn check_gradient(args: &GradientCheckArgs) -> Result<String> {
    let arch = NetworkArchitecture::new(args.input_dim, args.arch.clone(), args.dropout, 1.0)?;
    let err = gradient_check(&arch, args.seed);
    let pass = err < GRADIENT_TOL;
    let mut kv = KeyValues::new();
    kv.push("max_relative_error", fmt_exact(err))
        .push("tolerance", fmt_exact(GRADIENT_TOL))
        .push("pass", pass);
    let line = kv.to_line();
    if let Some(dir) = &args.out {
        write(dir, "gradient_check.txt", &(line.clone() + "\n"))?;
        let entries = vec![
            ("input_dim", args.input_dim.to_string()),
            ("arch", join_list(&args.arch)),
            ("dropout", fmt_exact(args.dropout)),
            ("seed", args.seed.to_string()),
        ];
        write(dir, MANIFEST, &manifest("gradient-check", &entries))?;
    }
    if pass {
        Ok(line)
    } else {
        Err(Error::Config(format!("gradient check failed: {line}")))
    }
}

/// Runs one parsed command; returns the line to print on success.
pub fn run(cli: &Cli) -> Result<Option<String>> {
    match &cli.command {
        Command::Simulate(a) => simulate(a).map(|_| None),
        Command::Train(a) => train(a).map(|_| None),
        Command::Evaluate(a) => evaluate(a).map(|_| None),
        Command::SweepKappa(a) => sweep_kappa(a).map(|_| None),
        Command::Compare(a) => compare(a).map(|_| None),
        Command::GradientCheck(a) => check_gradient(a).map(Some),
    }
}

/// Machine-readable error record.
pub fn error_record(e: &Error) -> String {
    serde_json::json!({ "error": e.kind(), "message": e.to_string() }).to_string()
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(Some(line)) => {
            println!("{line}");
            0
        }
        Ok(None) => 0,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!("0..3".parse::<SeedList>().unwrap().0, vec![0, 1, 2]);
        assert_eq!("4,1".parse::<SeedList>().unwrap().0, vec![4, 1]);
        assert!("3..3".parse::<SeedList>().is_err());
        assert!("a".parse::<SeedList>().is_err());
    }

    #[test]
    fn parses_every_subcommand() {
        for args in [
            vec!["sfqi", "simulate", "--out", "d"],
            vec!["sfqi", "train", "--data", "f.csv", "--out", "p", "--variant", "pca:5"],
            vec!["sfqi", "evaluate", "--policy", "p", "--sim-config", "s", "--out", "e"],
            vec!["sfqi", "sweep-kappa", "--kappas", "2,6", "--seeds", "0..2", "--out", "k"],
            vec!["sfqi", "compare", "--variants", "pca,ave", "--out", "c"],
            vec!["sfqi", "gradient-check", "--arch", "15,5,5"],
        ] {
            Cli::try_parse_from(&args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
        assert!(Cli::try_parse_from(["sfqi", "compare", "--variants", "svd", "--out", "c"]).is_err());
    }

    #[test]
    fn error_records_are_json() {
        let rec = error_record(&Error::Coverage(1));
        let v: serde_json::Value = serde_json::from_str(&rec).unwrap();
        assert_eq!(v["error"], "coverage");
    }

    #[test]
    fn gradient_check_command() {
        let cli = Cli::try_parse_from(["sfqi", "gradient-check"]).unwrap();
        let line = run(&cli).unwrap().unwrap();
        assert!(line.contains("pass=true"), "{line}");
    }
}
