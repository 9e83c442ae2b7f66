//! `twin` command line: run, select, baseline, eval, plot.
//!
//! Exit codes: 0 success, 1 usage, 2 nothing selectable (all trials
//! diverged, incomplete logs, missing artifact), 3 storage failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::grid::HyperGrid;
use crate::harness::GridEvaluation;
use crate::matrices::{assemble, metric_surfaces, MatricesArtifact};
use crate::optim::LrSchedule;
use crate::plot;
use crate::quickshift::QuickshiftParams;
use crate::runstore::{self, load_run, resume_plan, LoadedRun, RunManifest, RunWriter};
use crate::scheduler::{SchedulerKind, SchedulerPolicy};
use crate::search::{run_search, SearchConfig, TrainerSettings};
use crate::selector::{baseline_select, evaluate, twin_pipeline, Method, Selection, SelectionArtifact, TwinOutcome};
use crate::task::TaskSpec;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOTHING_SELECTABLE: i32 = 2;
pub const EXIT_STORAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "twin", version, about = "Validation-free learning-rate / weight-decay search")]
pub struct Cli {
    /// Store root holding `runs/<id>`; defaults to $TWIN_STORE, then the current directory.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the grid, then write matrices and the Twin selection.
    Run(RunArgs),
    /// Recompute the selection offline from logged trials.
    Select(SelectArgs),
    /// Select with SelTS, SelVS or Oracle.
    Baseline(BaselineArgs),
    /// Score every method against Oracle over one or more runs.
    Eval(EvalArgs),
    /// Render an SVG figure.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchedulerArg {
    Fifo,
    Hb,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScheduleArg {
    Cosine,
    Piecewise,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Selts,
    Selvs,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotTarget {
    Psi,
    Theta,
    Labels,
    NormVsTest,
}

#[derive(Debug, Clone, Args)]
pub struct QuickshiftArgs {
    #[arg(long)]
    pub kernel_size: Option<f64>,
    #[arg(long)]
    pub max_dist: Option<f64>,
    /// Weight of the normalized loss against grid coordinates.
    #[arg(long)]
    pub ratio: Option<f64>,
}

impl QuickshiftArgs {
    pub fn resolve(&self, n_rows: usize, n_cols: usize) -> Result<QuickshiftParams> {
        let d = QuickshiftParams::default_for(n_rows, n_cols);
        let p = QuickshiftParams::new(
            self.kernel_size.unwrap_or(d.kernel_size),
            self.max_dist.unwrap_or(d.max_dist),
            self.ratio.unwrap_or(d.ratio),
        );
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub run_id: String,

    // grid
    #[arg(long, default_value_t = 7)]
    pub n_lr: usize,
    #[arg(long, default_value_t = 7)]
    pub n_wd: usize,
    #[arg(long, default_value_t = 5e-5)]
    pub lr_min: f64,
    #[arg(long, default_value_t = 5e-1)]
    pub lr_max: f64,
    #[arg(long, default_value_t = 5e-5)]
    pub wd_min: f64,
    #[arg(long, default_value_t = 5e-1)]
    pub wd_max: f64,

    // scheduler
    #[arg(long, value_enum, default_value_t = SchedulerArg::Fifo)]
    pub scheduler: SchedulerArg,
    /// Fraction of trials alive when halving stops (HB).
    #[arg(long, default_value_t = 0.25)]
    pub stop_fraction: f64,
    #[arg(long, default_value_t = 2)]
    pub eta: usize,
    /// Grace period as a fraction of the epoch budget (HB).
    #[arg(long, default_value_t = 0.05)]
    pub grace: f64,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,

    // task
    #[arg(long, default_value_t = 0)]
    pub task_seed: u64,
    /// Seed of the validation split; defaults to the task seed.
    #[arg(long)]
    pub val_seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    pub n_train: usize,
    #[arg(long, default_value_t = 100)]
    pub n_val: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 16)]
    pub input_dim: usize,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.0)]
    pub label_noise: f64,

    // trainer
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [64, 64])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Cosine)]
    pub lr_schedule: ScheduleArg,
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,

    #[command(flatten)]
    pub quickshift: QuickshiftArgs,
}

impl RunArgs {
    pub fn search_config(&self) -> Result<SearchConfig> {
        let grid = HyperGrid::build_log_grid(self.lr_min, self.lr_max, self.n_lr, self.wd_min, self.wd_max, self.n_wd)?;
        let policy = match self.scheduler {
            SchedulerArg::Fifo => SchedulerPolicy::fifo(self.epochs),
            SchedulerArg::Hb => SchedulerPolicy {
                eta: self.eta,
                grace_fraction: self.grace,
                ..SchedulerPolicy::hb(self.epochs, self.stop_fraction)
            },
        };
        let mut task = TaskSpec::new(
            self.task_seed,
            self.n_train,
            self.n_val,
            self.n_test,
            self.classes,
            self.input_dim,
            self.separation,
            self.label_noise,
        );
        task.val_seed = self.val_seed.unwrap_or(self.task_seed);
        let config = SearchConfig {
            grid,
            policy,
            task,
            trainer: TrainerSettings {
                hidden: self.hidden.clone(),
                momentum: self.momentum,
                batch_size: self.batch_size,
                lr_schedule: match self.lr_schedule {
                    ScheduleArg::Cosine => LrSchedule::Cosine,
                    ScheduleArg::Piecewise => LrSchedule::Piecewise,
                    ScheduleArg::Constant => LrSchedule::Constant,
                },
                init_seed: self.init_seed,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunRef {
    /// Run id under the store, or a path to a run directory.
    #[arg(long)]
    pub run: String,
}

impl RunRef {
    pub fn dir(&self, store: &Path) -> PathBuf {
        let p = PathBuf::from(&self.run);
        if p.join(runstore::MANIFEST).exists() {
            p
        } else {
            runstore::run_path(store, &self.run)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub run: RunRef,
    #[command(flatten)]
    pub quickshift: QuickshiftArgs,
    /// Keep every n-th learning rate.
    #[arg(long, default_value_t = 1)]
    pub lr_stride: usize,
    /// Keep every n-th weight decay.
    #[arg(long, default_value_t = 1)]
    pub wd_stride: usize,
    /// Where to write the selection; defaults to the run's selection.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub run: RunRef,
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    /// Acknowledge that the selection reads test accuracies.
    #[arg(long)]
    pub allow_test_metrics: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Runs to score (ids or paths).
    #[arg(long = "run", required = true, num_args = 1..)]
    pub runs: Vec<String>,
    #[command(flatten)]
    pub quickshift: QuickshiftArgs,
    /// Acknowledge that evaluation reads test accuracies.
    #[arg(long)]
    pub allow_test_metrics: bool,
    /// Report path; defaults to eval_report.json in the first run.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub run: RunRef,
    #[arg(long, value_enum)]
    pub target: PlotTarget,
    /// Output file; defaults to `<target>.svg` in the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument { .. } | Error::CellOutOfBounds { .. } | Error::Schema { .. } => EXIT_USAGE,
        Error::NoTrainableConfiguration
        | Error::EmptyRecord(_)
        | Error::CellCoverage { .. }
        | Error::IncompleteTrials(_)
        | Error::MissingArtifact(_)
        | Error::MissingSurface { .. }
        | Error::Contract(_)
        | Error::Internal(_) => EXIT_NOTHING_SELECTABLE,
        Error::Io { .. } | Error::Corrupt { .. } | Error::Json(_) => EXIT_STORAGE,
    }
}

fn stage(name: &str, err: &Error) -> String {
    format!("twin: {name} failed: {err}")
}

/// Parse `args` and run; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let store = cli.store.clone().unwrap_or_else(|| runstore::store_root("."));
    let (name, result) = match &cli.command {
        Command::Run(a) => ("run", cmd_run(&store, a)),
        Command::Select(a) => ("select", cmd_select(&store, a).map(|_| ())),
        Command::Baseline(a) => ("baseline", cmd_baseline(&store, a).map(|_| ())),
        Command::Eval(a) => ("eval", cmd_eval(&store, a)),
        Command::Plot(a) => ("plot", cmd_plot(&store, a).map(|_| ())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", stage(name, &e));
            exit_code(&e)
        }
    }
}

fn print_selection(sel: &Selection) {
    let mut line = format!("{}: cell {}  lr={:e}  wd={:e}", sel.method, sel.cell, sel.lr, sel.wd);
    if let (Some(r), Some(m), Some(n)) = (sel.region_id, sel.region_mean, sel.norm_at_cell) {
        line.push_str(&format!("  region {r} (mean {m:.4})  norm {n:.4}"));
    }
    println!("{line}");
}

/// Matrices and Twin selection from a set of records; writes both artifacts.
fn select_and_write(
    dir: &Path,
    grid: &HyperGrid,
    kind: SchedulerKind,
    records: &[crate::trial::TrialRecord],
    params: Option<QuickshiftParams>,
    out: Option<&Path>,
) -> Result<TwinOutcome> {
    let matrices = assemble(records, grid)?;
    let surfaces = metric_surfaces(records, grid, kind)?;
    runstore::write_json(&dir.join(runstore::MATRICES), &MatricesArtifact::new(&matrices, &surfaces))?;
    let params = params.unwrap_or_else(|| QuickshiftParams::default_for(grid.n_rows(), grid.n_cols()));
    let outcome = twin_pipeline(grid, &matrices, &params)?;
    let path = out.map_or_else(|| dir.join(runstore::SELECTION), Path::to_path_buf);
    runstore::write_json(&path, &SelectionArtifact::new(&outcome, &matrices))?;
    Ok(outcome)
}

pub fn cmd_run(store: &Path, args: &RunArgs) -> Result<()> {
    let config = args.search_config()?;
    let params = args.quickshift.resolve(config.grid.n_rows(), config.grid.n_cols())?;
    let dir = runstore::run_path(store, &args.run_id);
    let manifest = RunManifest::builtin(&args.run_id, &config);

    let records = if dir.join(runstore::MANIFEST).exists() {
        let existing = runstore::read_manifest(&dir)?;
        if existing.search_config().as_ref() != Some(&config) {
            return Err(Error::invalid(
                "run_id",
                format!("run `{}` exists with a different configuration", args.run_id),
            ));
        }
        let mut writer = RunWriter::open(&dir)?;
        let loaded = load_run(&dir)?;
        let plan = resume_plan(&existing, &loaded.records)?;
        let complete = plan.is_empty() && loaded.incomplete_cells().is_empty();
        if complete {
            loaded.records
        } else {
            eprintln!("twin: resuming {} trial(s)", plan.len());
            // the search is deterministic, so already logged lines are re-derived and skipped
            run_search(&config, &mut writer, jobs(args.jobs))?.records
        }
    } else {
        let mut writer = RunWriter::create(&dir, &manifest)?;
        run_search(&config, &mut writer, jobs(args.jobs))?.records
    };

    let outcome = select_and_write(&dir, &config.grid, config.policy.kind, &records, Some(params), None)?;
    print_selection(&outcome.selection);
    Ok(())
}

fn jobs(requested: Option<usize>) -> usize {
    requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn load_complete(dir: &Path) -> Result<LoadedRun> {
    let run = load_run(dir)?;
    for w in &run.warnings {
        eprintln!("twin: warning: {w}");
    }
    let incomplete = run.incomplete_cells();
    if !incomplete.is_empty() {
        return Err(Error::IncompleteTrials(incomplete));
    }
    Ok(run)
}

pub fn cmd_select(store: &Path, args: &SelectArgs) -> Result<Selection> {
    let dir = args.run.dir(store);
    let run = load_complete(&dir)?;
    let grid = &run.manifest.grid;
    let sliced = args.lr_stride != 1 || args.wd_stride != 1;
    let selection = if sliced {
        let matrices = assemble(&run.records, grid)?.slice(args.lr_stride, args.wd_stride)?;
        let sub = grid.slice(args.lr_stride, args.wd_stride)?;
        let params = args.quickshift.resolve(sub.n_rows(), sub.n_cols())?;
        let outcome = twin_pipeline(&sub, &matrices, &params)?;
        if let Some(out) = &args.out {
            runstore::write_json(out, &SelectionArtifact::new(&outcome, &matrices))?;
        }
        outcome.selection
    } else {
        let params = args.quickshift.resolve(grid.n_rows(), grid.n_cols())?;
        select_and_write(
            &dir,
            grid,
            run.manifest.policy.kind,
            &run.records,
            Some(params),
            args.out.as_deref(),
        )?
        .selection
    };
    print_selection(&selection);
    Ok(selection)
}

fn method_of(m: BaselineMethod) -> Method {
    match m {
        BaselineMethod::Selts => Method::SelTs,
        BaselineMethod::Selvs => Method::SelVs,
        BaselineMethod::Oracle => Method::Oracle,
    }
}

fn require_test_ack(allowed: bool) -> Result<()> {
    if allowed {
        Ok(())
    } else {
        Err(Error::invalid(
            "allow_test_metrics",
            "reading test accuracies requires --allow-test-metrics",
        ))
    }
}

pub fn cmd_baseline(store: &Path, args: &BaselineArgs) -> Result<Selection> {
    if args.method == BaselineMethod::Oracle {
        require_test_ack(args.allow_test_metrics)?;
    }
    let run = load_complete(&args.run.dir(store))?;
    let grid = &run.manifest.grid;
    let matrices = assemble(&run.records, grid)?;
    let mut surfaces = metric_surfaces(&run.records, grid, run.manifest.policy.kind)?;
    if !args.allow_test_metrics {
        surfaces.test_acc = None;
    }
    let sel = baseline_select(grid, &matrices, &surfaces, method_of(args.method))?;
    print_selection(&sel);
    Ok(sel)
}

pub fn cmd_eval(store: &Path, args: &EvalArgs) -> Result<()> {
    require_test_ack(args.allow_test_metrics)?;
    let mut configs = Vec::with_capacity(args.runs.len());
    let mut first_dir = None;
    for r in &args.runs {
        let dir = RunRef { run: r.clone() }.dir(store);
        let run = load_complete(&dir)?;
        let grid = run.manifest.grid.clone();
        let matrices = assemble(&run.records, &grid)?;
        let surfaces = metric_surfaces(&run.records, &grid, run.manifest.policy.kind)?;
        let params = args.quickshift.resolve(grid.n_rows(), grid.n_cols())?;
        let eval = GridEvaluation::from_matrices(grid, matrices, surfaces, Some(params))?;
        let config = eval.config_selections(run.manifest.run_id.clone()).ok_or(Error::MissingSurface {
            method: "eval",
            requirement: "logged test accuracy",
        })?;
        configs.push(config);
        first_dir.get_or_insert(dir);
    }
    let report = evaluate(&configs)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| first_dir.expect("at least one run").join(runstore::EVAL_REPORT));
    runstore::write_json(&out, &report)?;
    for c in &report.configs {
        let picks: Vec<String> = c
            .picks
            .iter()
            .map(|(m, p)| format!("{m} {:.2} (|err| {:.2})", p.test_acc.0, p.abs_error.0))
            .collect();
        println!("{}: oracle {:.2}; {}", c.name, c.oracle_test_acc.0, picks.join(", "));
    }
    let mae: Vec<String> = report.mae.iter().map(|(m, v)| format!("{m} {:.3}", v.0)).collect();
    println!("MAE vs Oracle: {}", mae.join(", "));
    Ok(())
}

pub fn cmd_plot(store: &Path, args: &PlotArgs) -> Result<PathBuf> {
    let dir = args.run.dir(store);
    let manifest = runstore::read_manifest(&dir)?;
    let grid = &manifest.grid;
    let art: MatricesArtifact = runstore::read_json(&dir.join(runstore::MATRICES))?;
    let m = art.log_matrices()?;
    let sel: SelectionArtifact = runstore::read_json(&dir.join(runstore::SELECTION))?;
    if sel.shape != [grid.n_rows(), grid.n_cols()] {
        return Err(Error::invalid("selection", "selection.json was computed on a sliced grid"));
    }
    let invalid: Vec<bool> = m.valid_mask.iter().map(|v| !v).collect();
    let picked = Some(sel.selection.cell);
    let svg = match args.target {
        PlotTarget::Psi => plot::heatmap_svg(grid, &m.psi, &invalid, picked, "training loss (psi)")?,
        PlotTarget::Theta => plot::heatmap_svg(grid, &m.theta, &invalid, picked, "parameter norm (theta)")?,
        PlotTarget::Labels => plot::labels_svg(grid, &sel.labels, picked, "quickshift regions")?,
        PlotTarget::NormVsTest => {
            let test = art
                .surfaces()
                .test_acc
                .ok_or_else(|| Error::MissingArtifact(dir.join(runstore::MATRICES)))?;
            let region = sel
                .selection
                .region_id
                .ok_or_else(|| Error::Internal("selection.json lacks a region id".into()))?;
            plot::norm_vs_test_svg(grid, &m.theta, &test, &sel.labels, region, picked, "selected region: norm vs test")?
        }
    };
    let name = match args.target {
        PlotTarget::Psi => "psi.svg",
        PlotTarget::Theta => "theta.svg",
        PlotTarget::Labels => "labels.svg",
        PlotTarget::NormVsTest => "norm_vs_test.svg",
    };
    let out = args.out.clone().unwrap_or_else(|| dir.join(name));
    std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
    println!("{}", out.display());
    Ok(out)
}
