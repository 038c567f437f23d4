//! Two-cause Fine–Gray simulation design with exponential censoring, plus
//! the performance measures and the replication harness.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{fit, FitConfig, PsiSpec, Tree};
use crate::cif::{fg_true_cif, signal_indicator, FineGrayParams};
use crate::data::{Dataset, Observation, TimeGrid};
use crate::error::{Error, Result};
use crate::losses::LossKind;

/// Number of covariates in the design; only the first two carry signal.
pub const N_COVARIATES: usize = 10;
/// `P(Z = 1) = P(W1 <= 0.5) P(W2 > 0.5)`.
pub const SIGNAL_PREVALENCE: f64 = 0.25;
/// Leaves of the tree that generates the data.
pub const TRUE_TREE_SIZE: usize = 3;
pub const GAMMA_CALIBRATION_DRAWS: usize = 100_000;
pub const GRID_QUANTILES: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    High,
    Medium,
    Low,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::High, Preset::Medium, Preset::Low];

    pub fn params(&self) -> FineGrayParams {
        match self {
            Preset::High => FineGrayParams::HIGH,
            Preset::Medium => FineGrayParams::MEDIUM,
            Preset::Low => FineGrayParams::LOW,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::High => "high",
            Preset::Medium => "medium",
            Preset::Low => "low",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "high" => Ok(Preset::High),
            "medium" | "med" => Ok(Preset::Medium),
            "low" => Ok(Preset::Low),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (expected high|medium|low)"
            ))),
        }
    }
}

/// Simulation design for one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDesign {
    pub fg: FineGrayParams,
    pub n: usize,
    pub n_test: usize,
    pub censor_target: f64,
    /// Exponential censoring rate; calibrated to `censor_target` when absent.
    pub gamma: Option<f64>,
    pub n_reps: usize,
    pub seed: u64,
}

impl SimDesign {
    pub fn new(fg: FineGrayParams, n: usize) -> Self {
        SimDesign {
            fg,
            n,
            n_test: 2000,
            censor_target: 0.5,
            gamma: None,
            n_reps: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.censor_target) {
            return Err(Error::InvalidArgument("censoring target must lie in [0,1)".into()));
        }
        if let Some(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidArgument(format!("invalid censoring rate {g}")));
            }
        }
        Ok(())
    }
}

/// One uncensored draw `(T, M, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullRecord {
    pub time: f64,
    pub cause: usize,
    pub covariates: Vec<f64>,
}

/// Cause-1 event time given `Z`, by inverting `psi_01(t) / psi_01(inf) = u`.
pub fn invert_cause1(params: &FineGrayParams, z: bool, u: f64) -> f64 {
    let eta = params.eta(z);
    let mass = params.cause1_mass(z);
    // (1 - u * mass)^(1/eta), kept in log space for accuracy near 0.
    let log_root = (-u * mass).ln_1p() / eta;
    let x = -log_root.exp_m1() / params.p;
    -(-x).ln_1p()
}

/// Conditional CDF of cause-1 times given `Z`.
pub fn cause1_conditional_cdf(params: &FineGrayParams, z: bool, t: f64) -> f64 {
    params.cif_given_z(t, 1, z) / params.cause1_mass(z)
}

pub fn sample_record<R: Rng + ?Sized>(params: &FineGrayParams, rng: &mut R) -> FullRecord {
    let covariates: Vec<f64> = (0..N_COVARIATES).map(|_| rng.gen::<f64>()).collect();
    let z = signal_indicator(&covariates);
    let (time, cause) = if rng.gen::<f64>() < params.cause1_mass(z) {
        (invert_cause1(params, z, rng.gen::<f64>()), 1)
    } else {
        // Inversion of Exp(rate) on (0, 1]; never returns 0.
        let u = 1.0 - rng.gen::<f64>();
        (-u.ln() / params.cause2_rate(z), 2)
    };
    FullRecord {
        time,
        cause,
        covariates,
    }
}

pub fn sample_full<R: Rng + ?Sized>(params: &FineGrayParams, n: usize, rng: &mut R) -> Vec<FullRecord> {
    (0..n).map(|_| sample_record(params, rng)).collect()
}

pub fn covariate_names() -> Vec<String> {
    (1..=N_COVARIATES).map(|k| format!("w{k}")).collect()
}

/// Uncensored dataset from full records.
pub fn full_dataset(records: &[FullRecord]) -> Result<Dataset> {
    let obs = records
        .iter()
        .map(|r| Observation::event(r.time, r.cause, r.covariates.clone()))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(obs, covariate_names(), Some(2))
}

/// Draws `C ~ Exp(gamma)` independently and records `(min(T, C), T <= C)`.
/// A zero rate means no censoring.
pub fn apply_censoring<R: Rng + ?Sized>(records: &[FullRecord], gamma: f64, rng: &mut R) -> Result<Dataset> {
    let obs = records
        .iter()
        .map(|r| {
            let c = if gamma > 0.0 {
                -(1.0 - rng.gen::<f64>()).ln() / gamma
            } else {
                f64::INFINITY
            };
            if r.time <= c {
                Observation::event(r.time, r.cause, r.covariates.clone())
            } else {
                Observation::censored(c, r.covariates.clone())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(obs, covariate_names(), Some(2))
}

/// Rate of exponential censoring giving `P(C < T) = target`, found by
/// bisection on the sample mean of `1 - exp(-gamma T)`, which is the exact
/// censoring probability given the drawn event times.
pub fn calibrate_gamma<R: Rng + ?Sized>(params: &FineGrayParams, target: f64, draws: usize, rng: &mut R) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::Calibration(format!("censoring target {target} outside [0,1)")));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let times: Vec<f64> = (0..draws).map(|_| sample_record(params, rng).time).collect();
    let rate = |g: f64| times.iter().map(|&t| -(-g * t).exp_m1()).sum::<f64>() / times.len() as f64;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut widen = 0;
    while rate(hi) < target {
        hi *= 2.0;
        widen += 1;
        if widen > 60 {
            return Err(Error::Calibration("no censoring rate brackets the target".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let gamma = 0.5 * (lo + hi);
    if (rate(gamma) - target).abs() > 0.005 {
        return Err(Error::Calibration(format!(
            "calibrated rate {gamma} misses the target {target}"
        )));
    }
    Ok(gamma)
}

/// Marginal CDF of `T` over the covariate distribution.
pub fn marginal_cdf(params: &FineGrayParams, t: f64) -> f64 {
    let f = |z: bool| params.cif_given_z(t, 1, z) + params.cif_given_z(t, 2, z);
    (1.0 - SIGNAL_PREVALENCE) * f(false) + SIGNAL_PREVALENCE * f(true)
}

/// Quantiles of the true marginal distribution of `T`, by bisection on the
/// closed-form mixture CDF.
pub fn true_quantiles(params: &FineGrayParams, probs: &[f64]) -> Result<Vec<f64>> {
    probs
        .iter()
        .map(|&q| {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidArgument(format!("quantile level {q} outside (0,1)")));
            }
            let (mut lo, mut hi) = (0.0, 1.0);
            while marginal_cdf(params, hi) < q {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if marginal_cdf(params, mid) < q {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= f64::EPSILON * hi {
                    break;
                }
            }
            Ok(0.5 * (lo + hi))
        })
        .collect()
}

/// The evaluation grid: true marginal quartiles with equal weights.
pub fn default_grid(params: &FineGrayParams) -> Result<TimeGrid> {
    TimeGrid::new(true_quantiles(params, &GRID_QUANTILES)?, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    /// Mean squared error against the true cause-1 CIF at each grid time.
    pub pred_error: Vec<f64>,
    pub n_leaves: usize,
    /// `|leaves - 3|`.
    pub size_dev: usize,
    /// Splits on the noise covariates `w3..w10`.
    pub nsp: usize,
    /// Splits exactly on `{w1, w2}` with three leaves.
    pub pcsp: bool,
}

pub fn structure_metrics(tree: &Tree) -> (usize, usize, bool) {
    let splits = tree.splits();
    let n_leaves = splits.len() + 1;
    let nsp = splits.iter().filter(|s| s.covariate >= 2).count();
    let uses = |c: usize| splits.iter().any(|s| s.covariate == c);
    let pcsp = n_leaves == TRUE_TREE_SIZE && nsp == 0 && uses(0) && uses(1);
    (n_leaves, nsp, pcsp)
}

pub fn evaluate(tree: &Tree, params: &FineGrayParams, test: &[Vec<f64>]) -> Result<PerfReport> {
    let jn = tree.times.len();
    let mut pred_error = vec![0.0; jn];
    for w in test {
        let pred = tree.predict(w)?;
        for j in 0..jn {
            let truth = fg_true_cif(params, tree.times[j], 1, w);
            pred_error[j] += (pred[j] - truth).powi(2);
        }
    }
    pred_error.iter_mut().for_each(|e| *e /= test.len() as f64);
    let (n_leaves, nsp, pcsp) = structure_metrics(tree);
    Ok(PerfReport {
        pred_error,
        n_leaves,
        size_dev: n_leaves.abs_diff(TRUE_TREE_SIZE),
        nsp,
        pcsp,
    })
}

/// Tree-building methods compared in the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ipcw1,
    Ipcw2,
    BjFg,
    DrFg,
    BjAj,
    DrAj,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ipcw1,
        Method::Ipcw2,
        Method::BjFg,
        Method::DrFg,
        Method::BjAj,
        Method::DrAj,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ipcw1 => "ipcw1",
            Method::Ipcw2 => "ipcw2",
            Method::BjFg => "bj-fg",
            Method::DrFg => "dr-fg",
            Method::BjAj => "bj-aj",
            Method::DrAj => "dr-aj",
        }
    }

    pub fn loss(&self) -> LossKind {
        match self {
            Method::Ipcw1 => LossKind::Ipcw1,
            Method::Ipcw2 => LossKind::Ipcw2,
            Method::BjFg | Method::BjAj => LossKind::BuckleyJames,
            Method::DrFg | Method::DrAj => LossKind::DoublyRobust,
        }
    }

    pub fn psi(&self, params: FineGrayParams) -> PsiSpec {
        match self {
            Method::Ipcw1 | Method::Ipcw2 => PsiSpec::None,
            Method::BjFg | Method::DrFg => PsiSpec::FineGray(params),
            Method::BjAj | Method::DrAj => PsiSpec::AalenJohansen,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown method '{s}' (expected ipcw1|ipcw2|bj-fg|dr-fg|bj-aj|dr-aj)"
                ))
            })
    }
}

/// Everything that determines an experiment's results.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub setting: String,
    pub design: SimDesign,
    pub methods: Vec<Method>,
    /// Template for tree fitting; loss and grid are overwritten per method.
    pub fit: FitConfig,
}

impl ExperimentSpec {
    pub fn new(preset: Preset, n: usize, methods: Vec<Method>) -> Result<Self> {
        let design = SimDesign::new(preset.params(), n);
        let grid = default_grid(&design.fg)?;
        Ok(ExperimentSpec {
            setting: preset.as_str().to_string(),
            design,
            methods,
            fit: FitConfig::new(LossKind::DoublyRobust, grid),
        })
    }

    /// Identifies cached replications that can be reused.
    pub fn fingerprint(&self, gamma: f64) -> String {
        let d = &self.design;
        let f = &self.fit;
        format!(
            "{}|fg={},{},{}|n={}|n_test={}|gamma={gamma}|seed={}|methods={}|grid={:?}|w={:?}|minbucket={}|minsplit={}|depth={}|folds={}|repeats={}|select={:?}|alpha={:?}|refit={}|iso={}|floor={}|tauq={:?}|count={:?}",
            self.setting,
            d.fg.beta1,
            d.fg.beta2,
            d.fg.p,
            d.n,
            d.n_test,
            d.seed,
            self.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
            f.grid.times(),
            f.grid.weights(),
            f.minbucket,
            f.minsplit,
            f.max_depth,
            f.folds,
            f.cv_repeats,
            f.selection,
            f.alpha_eval,
            f.refit_per_fold,
            f.isotonic,
            f.floor,
            f.tau_quantile,
            f.count_mode,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    pub report: Option<PerfReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub fingerprint: String,
    pub rep: usize,
    pub censoring_fraction: f64,
    pub outcomes: Vec<MethodOutcome>,
}

/// Random stream for replication `rep`.
pub fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64 + 1);
    rng
}

/// Stream reserved for censoring-rate calibration.
pub fn calibration_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

pub fn resolve_gamma(design: &SimDesign) -> Result<f64> {
    match design.gamma {
        Some(g) => Ok(g),
        None => {
            let g = calibrate_gamma(
                &design.fg,
                design.censor_target,
                GAMMA_CALIBRATION_DRAWS,
                &mut calibration_rng(design.seed),
            )?;
            log::info!("calibrated censoring rate gamma = {g}");
            Ok(g)
        }
    }
}

/// Training and test samples of one replication.
pub fn rep_data(design: &SimDesign, gamma: f64, rep: usize) -> Result<(Dataset, Vec<FullRecord>)> {
    let mut rng = rep_rng(design.seed, rep);
    let train_full = sample_full(&design.fg, design.n, &mut rng);
    let train = apply_censoring(&train_full, gamma, &mut rng)?;
    let test = sample_full(&design.fg, design.n_test, &mut rng);
    Ok((train, test))
}

pub fn run_rep(spec: &ExperimentSpec, gamma: f64, rep: usize) -> Result<RepRecord> {
    let (train, test) = rep_data(&spec.design, gamma, rep)?;
    let test_w: Vec<Vec<f64>> = test.into_iter().map(|r| r.covariates).collect();
    let outcomes = spec
        .methods
        .iter()
        .map(|&m| {
            let mut cfg = spec.fit.clone();
            cfg.loss = m.loss();
            cfg.seed = spec.design.seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let result = fit(&train, &cfg, m.psi(spec.design.fg))
                .and_then(|res| evaluate(&res.tree, &spec.design.fg, &test_w));
            match result {
                Ok(report) => MethodOutcome {
                    method: m.as_str().to_string(),
                    report: Some(report),
                    error: None,
                },
                Err(e) => {
                    log::warn!("rep {rep}, method {m}: {e}");
                    MethodOutcome {
                        method: m.as_str().to_string(),
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(RepRecord {
        fingerprint: spec.fingerprint(gamma),
        rep,
        censoring_fraction: train.censoring_fraction(),
        outcomes,
    })
}

/// Aggregated metrics of one method over the replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub method: String,
    pub setting: String,
    pub n: usize,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub size_dev: f64,
    pub nsp: f64,
    pub pcsp: f64,
    pub mean_leaves: f64,
    pub mean_pred_error: Vec<f64>,
    pub median_pred_error: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub gamma: f64,
    pub times: Vec<f64>,
    pub records: Vec<RepRecord>,
    pub rows: Vec<TableRow>,
}

impl ExperimentResult {
    pub fn n_failures(&self) -> usize {
        self.rows.iter().map(|r| r.reps_failed).sum()
    }

    pub fn row(&self, method: Method) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.method == method.as_str())
    }
}

fn rep_path(dir: &Path, rep: usize) -> PathBuf {
    dir.join(format!("rep_{rep:05}.json"))
}

fn load_cached(dir: &Path, rep: usize, fingerprint: &str) -> Option<RepRecord> {
    let text = fs::read_to_string(rep_path(dir, rep)).ok()?;
    let rec: RepRecord = serde_json::from_str(&text).ok()?;
    (rec.fingerprint == fingerprint && rec.rep == rep).then_some(rec)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Runs all replications, reusing finished ones found in `reps_dir`.
pub fn run_experiment(spec: &ExperimentSpec, reps_dir: Option<&Path>) -> Result<ExperimentResult> {
    spec.design.validate()?;
    if spec.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let gamma = resolve_gamma(&spec.design)?;
    let fingerprint = spec.fingerprint(gamma);
    if let Some(dir) = reps_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let records = (0..spec.design.n_reps)
        .into_par_iter()
        .map(|rep| {
            if let Some(dir) = reps_dir {
                if let Some(rec) = load_cached(dir, rep, &fingerprint) {
                    return Ok(rec);
                }
            }
            let rec = run_rep(spec, gamma, rep)?;
            if let Some(dir) = reps_dir {
                let path = rep_path(dir, rep);
                let tmp = path.with_extension("json.tmp");
                fs::write(&tmp, serde_json::to_string(&rec)?).map_err(|e| Error::io(&tmp, e))?;
                fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = aggregate(spec, &records);
    Ok(ExperimentResult {
        gamma,
        times: spec.fit.grid.times().to_vec(),
        records,
        rows,
    })
}

pub fn aggregate(spec: &ExperimentSpec, records: &[RepRecord]) -> Vec<TableRow> {
    let jn = spec.fit.grid.len();
    spec.methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let reports: Vec<&PerfReport> = records
                .iter()
                .filter_map(|r| r.outcomes[k].report.as_ref())
                .collect();
            let ok = reports.len();
            let mean = |f: &dyn Fn(&PerfReport) -> f64| {
                if ok == 0 {
                    f64::NAN
                } else {
                    reports.iter().map(|r| f(r)).sum::<f64>() / ok as f64
                }
            };
            let mean_pred_error = (0..jn).map(|j| mean(&|r| r.pred_error[j])).collect();
            let median_pred_error = (0..jn)
                .map(|j| median(&mut reports.iter().map(|r| r.pred_error[j]).collect::<Vec<_>>()))
                .collect();
            TableRow {
                method: m.as_str().to_string(),
                setting: spec.setting.clone(),
                n: spec.design.n,
                reps_ok: ok,
                reps_failed: records.len() - ok,
                size_dev: mean(&|r| r.size_dev as f64),
                nsp: mean(&|r| r.nsp as f64),
                pcsp: mean(&|r| r.pcsp as u8 as f64),
                mean_leaves: mean(&|r| r.n_leaves as f64),
                mean_pred_error,
                median_pred_error,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn inversion_round_trip() {
        let params = FineGrayParams::HIGH;
        for z in [false, true] {
            for k in 1..1000 {
                let u = k as f64 / 1000.0;
                let t = invert_cause1(&params, z, u);
                assert!(t > 0.0);
                assert_abs_diff_eq!(cause1_conditional_cdf(&params, z, t), u, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn null_effect_gives_p() {
        let params = FineGrayParams::new(0.0, -0.5, 0.3).unwrap();
        for z in [false, true] {
            assert_abs_diff_eq!(params.cause1_mass(z), 0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn frozen_quantiles() {
        let expect = [
            (Preset::High, [0.151_301_134_596_181_5, 0.4550654872504121, 1.1093032524581065]),
            (Preset::Medium, [0.22977881884657653, 0.584_386_192_737_923_6, 1.2403089706603752]),
            (Preset::Low, [0.2632913809285014, 0.650_010_242_171_553, 1.3387039667941137]),
        ];
        for (preset, qs) in expect {
            let got = true_quantiles(&preset.params(), &GRID_QUANTILES).unwrap();
            for (g, e) in got.iter().zip(qs) {
                assert_abs_diff_eq!(*g, e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_target_gives_zero_rate() {
        let mut rng = rep_rng(1, 0);
        assert_eq!(calibrate_gamma(&FineGrayParams::HIGH, 0.0, 100, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn no_censoring_limit() {
        let mut rng = rep_rng(3, 0);
        let full = sample_full(&FineGrayParams::LOW, 200, &mut rng);
        let d = apply_censoring(&full, 0.0, &mut rng).unwrap();
        assert_eq!(d.censoring_fraction(), 0.0);
        assert_eq!(d, full_dataset(&full).unwrap());
    }

    #[test]
    fn censored_rows_have_cause_zero() {
        let mut rng = rep_rng(5, 0);
        let full = sample_full(&FineGrayParams::HIGH, 500, &mut rng);
        let d = apply_censoring(&full, 1.0, &mut rng).unwrap();
        assert!(d.iter().all(|o| o.delta == (o.cause > 0)));
        assert!(d.censoring_fraction() > 0.2);
    }

    #[test]
    fn perfect_tree_metrics() {
        let root_only = Tree {
            schema: crate::cart::TREE_SCHEMA.into(),
            loss: "dr".into(),
            cause: 1,
            times: vec![0.5],
            weights: vec![1.0],
            covariate_names: covariate_names(),
            isotonic: false,
            nodes: vec![crate::cart::Node {
                id: 0,
                depth: 0,
                n: 10,
                n_eligible: 10,
                split: None,
                left: None,
                right: None,
                beta: vec![0.2],
                risk: 0.0,
                prune_alpha: 0.0,
            }],
        };
        let (leaves, nsp, pcsp) = structure_metrics(&root_only);
        assert_eq!((leaves, nsp, pcsp), (1, 0, false));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("rf".parse::<Method>().is_err());
    }
}
