//! Command-line interface.
//!
//! Every command accepts `--config FILE`, a flat `key = value` file whose keys
//! are long flag names. Its entries are applied before the command-line flags,
//! so explicit flags win.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cart::{fit, AlphaEval, CountMode, FitConfig, PsiSpec, SelectionRule, Tree};
use crate::cif::{fg_true_cif, AalenJohansen, FineGrayParams};
use crate::data::{load_csv, read_covariates, write_csv, CsvSchema, Dataset, TimeGrid};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::simulation::{
    self, apply_censoring, resolve_gamma, run_experiment, sample_full, ExperimentSpec, Method,
    Preset, SimDesign,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_PARTIAL: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "ciftree", version, about = "Regression trees for cumulative incidence under competing risks")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw training and test sets from the Fine-Gray design.
    Simulate(SimulateArgs),
    /// Grow, prune and cross-validate a tree.
    Fit(FitArgs),
    /// Predict cumulative incidence for new covariates.
    Predict(PredictArgs),
    /// Score a tree against the true simulation CIF.
    Evaluate(EvaluateArgs),
    /// Run the replicated simulation study.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    High,
    Medium,
    Low,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::High => Preset::High,
            PresetArg::Medium => Preset::Medium,
            PresetArg::Low => Preset::Low,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// Signal strength preset.
    #[arg(long, value_enum, default_value = "high")]
    pub preset: PresetArg,
    /// Override the preset's coefficients as `beta1,beta2,p`.
    #[arg(long)]
    pub fg: Option<String>,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub n_test: usize,
    /// Target censoring fraction used when calibrating gamma.
    #[arg(long, default_value_t = 0.5)]
    pub censor_target: f64,
    /// Exponential censoring rate, or `auto` to calibrate.
    #[arg(long, default_value = "auto")]
    pub gamma: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl DesignArgs {
    fn params(&self) -> Result<FineGrayParams> {
        match &self.fg {
            Some(s) => match format!("fg-true:{s}").parse::<PsiSpec>()? {
                PsiSpec::FineGray(p) => Ok(p),
                _ => unreachable!(),
            },
            None => Ok(Preset::from(self.preset).params()),
        }
    }

    fn design(&self) -> Result<SimDesign> {
        let mut d = SimDesign::new(self.params()?, self.n);
        d.n_test = self.n_test;
        d.censor_target = self.censor_target;
        d.seed = self.seed;
        d.gamma = match self.gamma.as_str() {
            "auto" => None,
            g => Some(
                g.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("gamma must be a number or 'auto', got '{g}'")))?,
            ),
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Explicit grid times, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "quantiles")]
    pub times: Option<Vec<f64>>,
    /// Grid at these quantiles of the event-time distribution.
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    /// Composite loss weights (normalized); uniform by default.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CountModeArg {
    Auto,
    All,
    Uncensored,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectionArg {
    Min,
    OneSe,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlphaEvalArg {
    Geometric,
    Endpoint,
}

#[derive(Debug, Clone, Args)]
pub struct TreeArgs {
    #[arg(long, default_value_t = 10)]
    pub minbucket: usize,
    #[arg(long, default_value_t = 30)]
    pub minsplit: usize,
    #[arg(long, default_value_t = 30)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 1)]
    pub cv_repeats: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub count_mode: CountModeArg,
    #[arg(long, value_enum, default_value = "min")]
    pub selection: SelectionArg,
    #[arg(long, value_enum, default_value = "geometric")]
    pub alpha_eval: AlphaEvalArg,
    /// Refit censoring and CIF models inside each fold.
    #[arg(long)]
    pub refit_per_fold: bool,
    /// Force leaf CIFs to be nondecreasing across the grid.
    #[arg(long)]
    pub isotonic: bool,
    /// Positivity floor for censoring weights.
    #[arg(long, default_value_t = 0.05)]
    pub floor: f64,
    /// Cap the standard IPCW horizon at this quantile of observed times, or `none`.
    #[arg(long, default_value = "0.95", value_parser = parse_optional_f64)]
    pub tau_quantile: OptionalF64,
    #[arg(long, default_value_t = 1)]
    pub cause: usize,
}

impl TreeArgs {
    fn apply(&self, cfg: &mut FitConfig) {
        cfg.minbucket = self.minbucket;
        cfg.minsplit = self.minsplit;
        cfg.max_depth = self.max_depth;
        cfg.folds = self.folds;
        cfg.cv_repeats = self.cv_repeats;
        cfg.count_mode = match self.count_mode {
            CountModeArg::Auto => None,
            CountModeArg::All => Some(CountMode::AllObs),
            CountModeArg::Uncensored => Some(CountMode::UncensoredOnly),
        };
        cfg.selection = match self.selection {
            SelectionArg::Min => SelectionRule::Min,
            SelectionArg::OneSe => SelectionRule::OneSe,
        };
        cfg.alpha_eval = match self.alpha_eval {
            AlphaEvalArg::Geometric => AlphaEval::GeometricMean,
            AlphaEvalArg::Endpoint => AlphaEval::Endpoint,
        };
        cfg.refit_per_fold = self.refit_per_fold;
        cfg.isotonic = self.isotonic;
        cfg.floor = self.floor;
        cfg.tau_quantile = self.tau_quantile.0;
        cfg.cause = self.cause;
    }
}

/// A number or the word `none`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionalF64(pub Option<f64>);

fn parse_optional_f64(s: &str) -> std::result::Result<OptionalF64, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(OptionalF64(None));
    }
    s.parse::<f64>()
        .map(|v| OptionalF64(Some(v)))
        .map_err(|_| format!("expected a number or 'none', got '{s}'"))
}

#[derive(Debug, Clone, Args)]
pub struct SchemaArgs {
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "status")]
    pub status_col: String,
    #[arg(long, default_value = "cause")]
    pub cause_col: String,
    /// Covariate columns; all remaining columns by default.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long)]
    pub n_causes: Option<usize>,
}

impl SchemaArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            time: self.time_col.clone(),
            status: self.status_col.clone(),
            cause: self.cause_col.clone(),
            covariates: self.covariates.clone(),
            n_causes: self.n_causes,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Quantile levels of the true event-time distribution for the truth file.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
    pub quantiles: Vec<f64>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "dr")]
    pub loss: String,
    /// CIF model for bj/dr: `aj` or `fg-true:<beta1,beta2,p>`.
    #[arg(long, default_value = "aj")]
    pub psi: String,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub tree: PathBuf,
    /// Test covariates.
    #[arg(long)]
    pub data: PathBuf,
    /// True CIF per test row at the tree's grid, as written by `simulate`.
    #[arg(long, conflicts_with = "fg")]
    pub truth: Option<PathBuf>,
    /// Evaluate the closed-form truth for these coefficients `beta1,beta2,p`.
    #[arg(long)]
    pub fg: Option<String>,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "ipcw1,ipcw2,bj-fg,dr-fg")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Splices `--config` entries into the argument list ahead of user flags.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(args.len());
    let mut config: Option<String> = None;
    let mut iter = args.into_iter();
    while let Some(a) = iter.next() {
        if a == "--config" {
            config = Some(
                iter.next()
                    .ok_or_else(|| Error::InvalidArgument("--config needs a file".into()))?,
            );
        } else if let Some(path) = a.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            out.push(a);
        }
    }
    let Some(path) = config else { return Ok(out) };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut injected = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("{path}:{}: expected key = value", k + 1))
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match value {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            v => {
                injected.push(format!("--{key}"));
                injected.push(v.to_string());
            }
        }
    }
    // Program name and subcommand come first.
    let split = out.len().min(2);
    let mut merged: Vec<String> = out[..split].to_vec();
    merged.extend(injected);
    merged.extend_from_slice(&out[split..]);
    Ok(merged)
}

/// First line of every CSV written by the tool.
pub fn header_comment(seed: Option<u64>, flags: &[String]) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!(
        "# ciftree {} seed={} flags={}",
        env!("CARGO_PKG_VERSION"),
        seed,
        flags.join(" ")
    )
}

struct CsvOut {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    fn create(path: &Path, header: &str) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "{header}").map_err(|e| Error::io(path, e))?;
        Ok(CsvOut {
            path: path.to_path_buf(),
            inner: csv::Writer::from_writer(buf),
        })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        Ok(self.inner.write_record(fields)?)
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_dataset(path: &Path, data: &Dataset, header: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    write_csv(data, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn fmt_f(x: f64) -> String {
    x.to_string()
}

fn cmd_simulate(a: &SimulateArgs, header: &str) -> Result<u8> {
    let design = a.design.design()?;
    let gamma = resolve_gamma(&design)?;
    eprintln!("censoring rate gamma = {gamma}");
    let times = simulation::true_quantiles(&design.fg, &a.quantiles)?;
    let mut rng = simulation::rep_rng(design.seed, 0);
    let train_full = sample_full(&design.fg, design.n, &mut rng);
    let train = apply_censoring(&train_full, gamma, &mut rng)?;
    let test_full = sample_full(&design.fg, design.n_test, &mut rng);
    let test = simulation::full_dataset(&test_full)?;

    create_dir(&a.out)?;
    write_dataset(&a.out.join("train.csv"), &train, header)?;
    write_dataset(&a.out.join("test.csv"), &test, header)?;
    let mut truth = CsvOut::create(&a.out.join("truth.csv"), header)?;
    let mut cols = vec!["row".to_string()];
    cols.extend(times.iter().map(|t| format!("t={t}")));
    truth.row(&cols)?;
    for (i, r) in test_full.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(times.iter().map(|&t| fmt_f(fg_true_cif(&design.fg, t, 1, &r.covariates))));
        truth.row(&row)?;
    }
    truth.finish()?;
    let sidecar = serde_json::json!({
        "beta1": design.fg.beta1,
        "beta2": design.fg.beta2,
        "p": design.fg.p,
        "n": design.n,
        "n_test": design.n_test,
        "seed": design.seed,
        "gamma": gamma,
        "gamma_calibrated": design.gamma.is_none(),
        "censor_target": design.censor_target,
        "censoring_fraction": train.censoring_fraction(),
        "quantiles": a.quantiles,
        "times": times,
    });
    let path = a.out.join("sim.json");
    fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(EXIT_OK)
}

fn build_grid(g: &GridArgs, data: &Dataset) -> Result<TimeGrid> {
    let times = match (&g.times, &g.quantiles) {
        (Some(t), _) => t.clone(),
        (None, Some(q)) => {
            let aj = AalenJohansen::fit(data);
            q.iter()
                .map(|&level| {
                    if !(level > 0.0 && level < 1.0) {
                        return Err(Error::InvalidArgument(format!("quantile level {level} outside (0,1)")));
                    }
                    aj.quantile(level).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "event-time distribution does not reach quantile {level} within follow-up"
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        (None, None) => {
            return Err(Error::InvalidArgument("give --times or --quantiles".into()));
        }
    };
    TimeGrid::new(times, g.weights.clone())
}

fn node_rule(tree: &Tree, leaf: usize) -> String {
    let mut parts = Vec::new();
    let mut target = leaf;
    loop {
        let parent = tree
            .nodes
            .iter()
            .find(|n| n.left == Some(target) || n.right == Some(target));
        let Some(p) = parent else { break };
        let s = p.split.unwrap();
        let name = &tree.covariate_names[s.covariate];
        let op = if p.left == Some(target) { "<=" } else { ">" };
        parts.push(format!("{name}{op}{}", s.cutpoint));
        target = p.id;
    }
    parts.reverse();
    if parts.is_empty() {
        "root".to_string()
    } else {
        parts.join(" & ")
    }
}

fn cmd_fit(a: &FitArgs, header: &str) -> Result<u8> {
    let data = load_csv(&a.data, &a.schema.schema())?;
    let loss: LossKind = a.loss.parse()?;
    let psi: PsiSpec = if loss.needs_psi() { a.psi.parse()? } else { PsiSpec::None };
    let grid = build_grid(&a.grid, &data)?;
    let mut cfg = FitConfig::new(loss, grid);
    a.tree.apply(&mut cfg);
    cfg.seed = a.seed;
    let res = fit(&data, &cfg, psi)?;

    create_dir(&a.out)?;
    let path = a.out.join("tree.json");
    fs::write(&path, res.tree.to_json()? + "\n").map_err(|e| Error::io(&path, e))?;

    let mut cv = CsvOut::create(&a.out.join("cv.csv"), header)?;
    cv.row(["alpha", "eval_alpha", "leaves", "train_risk", "cv_risk", "cv_se", "selected"])?;
    for r in 0..res.path.len() {
        let opt = |v: &Option<Vec<f64>>| v.as_ref().map_or(String::new(), |v| fmt_f(v[r]));
        cv.row([
            fmt_f(res.path.alphas[r]),
            fmt_f(res.path.eval_alpha(r, cfg.alpha_eval)),
            res.path.leaves[r].to_string(),
            fmt_f(res.path.train_risk[r]),
            opt(&res.path.cv_risk),
            opt(&res.path.cv_se),
            ((r == res.selected) as u8).to_string(),
        ])?;
    }
    cv.finish()?;

    let mut leaves = CsvOut::create(&a.out.join("leaves.csv"), header)?;
    let mut cols = vec!["leaf".to_string(), "n".into(), "n_eligible".into(), "rule".into()];
    cols.extend(res.tree.times.iter().map(|t| format!("cif_t={t}")));
    cols.extend(res.tree.times.iter().map(|t| format!("raw_t={t}")));
    leaves.row(&cols)?;
    for id in res.tree.leaves() {
        let node = &res.tree.nodes[id];
        let mut row = vec![
            id.to_string(),
            node.n.to_string(),
            node.n_eligible.to_string(),
            node_rule(&res.tree, id),
        ];
        row.extend(res.tree.node_cif(id).into_iter().map(fmt_f));
        row.extend(node.beta.iter().map(|&b| fmt_f(b)));
        leaves.row(&row)?;
    }
    leaves.finish()?;
    eprintln!(
        "selected subtree with {} leaves (alpha = {}, tau = {})",
        res.tree.n_leaves(),
        res.selected_alpha,
        res.tau
    );
    Ok(EXIT_OK)
}

fn load_tree(path: &Path) -> Result<Tree> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Tree::from_json(&text)
}

fn load_covariates(path: &Path, tree: &Tree) -> Result<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_covariates(file, &tree.covariate_names).map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("covariates do not match the tree: {m}")),
        other => other,
    })
}

fn cmd_predict(a: &PredictArgs, header: &str) -> Result<u8> {
    let tree = load_tree(&a.tree)?;
    let rows = load_covariates(&a.data, &tree)?;
    let mut out = CsvOut::create(&a.out, header)?;
    let mut cols = vec!["row".to_string(), "leaf".to_string()];
    cols.extend(tree.times.iter().map(|t| format!("cif_t={t}")));
    out.row(&cols)?;
    for (i, w) in rows.iter().enumerate() {
        let leaf = tree.route(w, -1.0);
        let mut row = vec![i.to_string(), leaf.to_string()];
        row.extend(tree.predict(w)?.into_iter().map(fmt_f));
        out.row(&row)?;
    }
    out.finish()?;
    Ok(EXIT_OK)
}

fn read_truth(path: &Path, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Validation(format!("cannot read truth file {}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let idx = times
        .iter()
        .map(|t| {
            let name = format!("t={t}");
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Validation(format!("truth file lacks column '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        out.push(
            idx.iter()
                .map(|&i| {
                    rec[i].parse::<f64>().map_err(|_| Error::Parse {
                        row: k + 1,
                        column: headers[i].to_string(),
                        message: format!("cannot parse '{}'", &rec[i]),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(out)
}

fn cmd_evaluate(a: &EvaluateArgs, header: &str) -> Result<u8> {
    let tree = load_tree(&a.tree)?;
    let rows = load_covariates(&a.data, &tree)?;
    let truth: Vec<Vec<f64>> = match (&a.truth, &a.fg) {
        (Some(path), _) => read_truth(path, &tree.times)?,
        (None, Some(spec)) => {
            let PsiSpec::FineGray(params) = format!("fg-true:{spec}").parse::<PsiSpec>()? else {
                unreachable!()
            };
            if tree.n_covariates() < 2 {
                return Err(Error::Validation("the simulation truth needs at least two covariates".into()));
            }
            rows.iter()
                .map(|w| tree.times.iter().map(|&t| fg_true_cif(&params, t, 1, w)).collect())
                .collect()
        }
        (None, None) => return Err(Error::InvalidArgument("give --truth or --fg".into())),
    };
    if truth.len() != rows.len() {
        return Err(Error::Validation(format!(
            "truth has {} rows but the data has {}",
            truth.len(),
            rows.len()
        )));
    }
    let jn = tree.times.len();
    let mut err = vec![0.0; jn];
    for (w, tr) in rows.iter().zip(&truth) {
        let pred = tree.predict(w)?;
        for j in 0..jn {
            err[j] += (pred[j] - tr[j]).powi(2);
        }
    }
    err.iter_mut().for_each(|e| *e /= rows.len() as f64);
    let (n_leaves, nsp, pcsp) = simulation::structure_metrics(&tree);
    let mut out = CsvOut::create(&a.out, header)?;
    out.row(["metric", "time", "value"])?;
    for (t, e) in tree.times.iter().zip(&err) {
        out.row(["pred_error".to_string(), fmt_f(*t), fmt_f(*e)])?;
    }
    out.row(["leaves".to_string(), String::new(), n_leaves.to_string()])?;
    out.row([
        "size_dev".to_string(),
        String::new(),
        n_leaves.abs_diff(simulation::TRUE_TREE_SIZE).to_string(),
    ])?;
    out.row(["nsp".to_string(), String::new(), nsp.to_string()])?;
    out.row(["pcsp".to_string(), String::new(), (pcsp as u8).to_string()])?;
    out.finish()?;
    Ok(EXIT_OK)
}

fn cmd_experiment(a: &ExperimentArgs, header: &str) -> Result<u8> {
    let design = a.design.design()?;
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>>>()?;
    let setting = match &a.design.fg {
        Some(_) => format!("fg({},{},{})", design.fg.beta1, design.fg.beta2, design.fg.p),
        None => Preset::from(a.design.preset).as_str().to_string(),
    };
    let grid = simulation::default_grid(&design.fg)?;
    let mut fit_cfg = FitConfig::new(LossKind::DoublyRobust, grid);
    a.tree.apply(&mut fit_cfg);
    let mut spec = ExperimentSpec {
        setting,
        design,
        methods,
        fit: fit_cfg,
    };
    spec.design.n_reps = a.reps;
    create_dir(&a.out)?;
    let res = run_experiment(&spec, Some(&a.out.join("reps")))?;
    eprintln!("censoring rate gamma = {}", res.gamma);

    let mut table = CsvOut::create(&a.out.join("table1.csv"), header)?;
    let mut cols: Vec<String> = [
        "method", "setting", "n", "reps_ok", "reps_failed", "size_dev", "nsp", "pcsp", "mean_leaves",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(res.times.iter().map(|t| format!("mean_pred_error_t={t}")));
    cols.extend(res.times.iter().map(|t| format!("median_pred_error_t={t}")));
    table.row(&cols)?;
    for r in &res.rows {
        let mut row = vec![
            r.method.clone(),
            r.setting.clone(),
            r.n.to_string(),
            r.reps_ok.to_string(),
            r.reps_failed.to_string(),
            fmt_f(r.size_dev),
            fmt_f(r.nsp),
            fmt_f(r.pcsp),
            fmt_f(r.mean_leaves),
        ];
        row.extend(r.mean_pred_error.iter().map(|&v| fmt_f(v)));
        row.extend(r.median_pred_error.iter().map(|&v| fmt_f(v)));
        table.row(&row)?;
    }
    table.finish()?;

    let mut long = CsvOut::create(&a.out.join("prederr.csv"), header)?;
    long.row(["method", "setting", "t_index", "time", "rep", "value"])?;
    for rec in &res.records {
        for outcome in &rec.outcomes {
            let Some(report) = &outcome.report else { continue };
            for (j, (&t, &v)) in res.times.iter().zip(&report.pred_error).enumerate() {
                long.row([
                    outcome.method.clone(),
                    spec.setting.clone(),
                    (j + 1).to_string(),
                    fmt_f(t),
                    rec.rep.to_string(),
                    fmt_f(v),
                ])?;
            }
        }
    }
    long.finish()?;
    let failures = res.n_failures();
    if failures > 0 {
        eprintln!("{failures} method fits failed and were excluded");
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

fn command_seed(cmd: &Command) -> Option<u64> {
    match cmd {
        Command::Simulate(a) => Some(a.design.seed),
        Command::Fit(a) => Some(a.seed),
        Command::Experiment(a) => Some(a.design.seed),
        Command::Predict(_) | Command::Evaluate(_) => None,
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run(args: Vec<String>) -> ExitCode {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let header = header_comment(command_seed(&cli.command), &args[1..]);
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &header),
        Command::Fit(a) => cmd_fit(a, &header),
        Command::Predict(a) => cmd_predict(a, &header),
        Command::Evaluate(a) => cmd_evaluate(a, &header),
        Command::Experiment(a) => cmd_experiment(a, &header),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
