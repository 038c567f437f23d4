mod common;

use ciftree::cif::{fg_true_cif, FineGrayParams};
use ciftree::simulation::*;

fn small_spec(preset: Preset, reps: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(preset, 150, vec![Method::Ipcw2, Method::DrFg]).unwrap();
    spec.design.n_reps = reps;
    spec.design.n_test = 300;
    spec.design.seed = 77;
    spec.fit.folds = 5;
    spec
}

#[test]
fn censoring_is_independent_of_covariates() {
    // Event times beyond any censoring time expose C directly.
    let mut rng = common::rng(3);
    let params = FineGrayParams::HIGH;
    let records: Vec<FullRecord> = sample_full(&params, 40_000, &mut rng)
        .into_iter()
        .map(|r| FullRecord { time: 1e9, ..r })
        .collect();
    let gamma = 1.3;
    let data = apply_censoring(&records, gamma, &mut rng).unwrap();
    assert_eq!(data.censoring_fraction(), 1.0);
    let c: Vec<f64> = data.iter().map(|o| o.time).collect();
    let mean = c.iter().sum::<f64>() / c.len() as f64;
    assert!((mean - 1.0 / gamma).abs() < 0.02, "mean {mean}");
    for k in 0..N_COVARIATES {
        let w: Vec<f64> = data.iter().map(|o| o.covariates[k]).collect();
        let wm = w.iter().sum::<f64>() / w.len() as f64;
        let cov: f64 = w.iter().zip(&c).map(|(a, b)| (a - wm) * (b - mean)).sum::<f64>() / c.len() as f64;
        let sd_w = (w.iter().map(|a| (a - wm).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        let corr = cov / (sd_w * mean);
        assert!(corr.abs() < 0.02, "covariate {k} correlation {corr}");
    }
}

#[test]
fn calibrated_rate_hits_target() {
    for preset in [Preset::High, Preset::Medium, Preset::Low] {
        let design = SimDesign {
            seed: 11,
            ..SimDesign::new(preset.params(), 500)
        };
        let gamma = resolve_gamma(&design).unwrap();
        let mut rng = common::rng(12);
        let data = apply_censoring(&sample_full(&design.fg, 50_000, &mut rng), gamma, &mut rng).unwrap();
        let frac = data.censoring_fraction();
        assert!((0.48..=0.52).contains(&frac), "{preset}: {frac}");
    }
}

#[test]
fn fixed_gamma_skips_calibration() {
    let design = SimDesign {
        gamma: Some(0.7),
        ..SimDesign::new(FineGrayParams::LOW, 100)
    };
    assert_eq!(resolve_gamma(&design).unwrap(), 0.7);
}

#[test]
fn covariates_are_uniform_and_signal_prevalence_is_a_quarter() {
    let mut rng = common::rng(5);
    let records = sample_full(&FineGrayParams::MEDIUM, 40_000, &mut rng);
    let z = records
        .iter()
        .filter(|r| ciftree::cif::signal_indicator(&r.covariates))
        .count() as f64
        / records.len() as f64;
    assert!((z - SIGNAL_PREVALENCE).abs() < 0.01, "{z}");
    assert!(records.iter().all(|r| r.covariates.iter().all(|&w| (0.0..1.0).contains(&w))));
}

#[test]
fn grid_is_marginal_quartiles() {
    let params = FineGrayParams::HIGH;
    let grid = default_grid(&params).unwrap();
    for (&t, q) in grid.times().iter().zip(GRID_QUANTILES) {
        assert!((marginal_cdf(&params, t) - q).abs() < 1e-12);
    }
}

#[test]
fn replication_is_reproducible() {
    let spec = small_spec(Preset::Medium, 1);
    let gamma = resolve_gamma(&spec.design).unwrap();
    let a = run_rep(&spec, gamma, 3).unwrap();
    let b = run_rep(&spec, gamma, 3).unwrap();
    assert_eq!(a, b);
    let c = run_rep(&spec, gamma, 4).unwrap();
    assert_ne!(a.censoring_fraction, c.censoring_fraction);
}

#[test]
fn resume_reuses_finished_replications() {
    let dir = tempfile::tempdir().unwrap();
    let reps = dir.path().join("reps");
    let first = run_experiment(&small_spec(Preset::High, 2), Some(&reps)).unwrap();
    let cached = std::fs::read_to_string(reps.join("rep_00001.json")).unwrap();
    let extended = run_experiment(&small_spec(Preset::High, 4), Some(&reps)).unwrap();
    assert_eq!(std::fs::read_to_string(reps.join("rep_00001.json")).unwrap(), cached);
    assert_eq!(&extended.records[..2], &first.records[..]);
    let fresh = run_experiment(&small_spec(Preset::High, 4), None).unwrap();
    assert_eq!(extended.rows, fresh.rows);
}

#[test]
fn stale_cache_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let reps = dir.path().join("reps");
    run_experiment(&small_spec(Preset::High, 2), Some(&reps)).unwrap();
    let mut other = small_spec(Preset::High, 2);
    other.fit.minbucket = 7;
    let rerun = run_experiment(&other, Some(&reps)).unwrap();
    let fresh = run_experiment(&other, None).unwrap();
    assert_eq!(rerun.rows, fresh.rows);
    let rec: RepRecord = serde_json::from_str(&std::fs::read_to_string(reps.join("rep_00000.json")).unwrap()).unwrap();
    assert!(rec.fingerprint.contains("minbucket=7"));
}

#[test]
fn evaluation_against_truth() {
    let params = FineGrayParams::HIGH;
    let mut rng = common::rng(8);
    let test: Vec<Vec<f64>> = sample_full(&params, 500, &mut rng).into_iter().map(|r| r.covariates).collect();
    let spec = small_spec(Preset::High, 1);
    let gamma = resolve_gamma(&spec.design).unwrap();
    let rec = run_rep(&spec, gamma, 0).unwrap();
    let report = rec.outcomes[1].report.as_ref().unwrap();
    assert_eq!(report.pred_error.len(), 3);
    assert!(report.pred_error.iter().all(|&e| (0.0..0.1).contains(&e)));
    // Sanity of the closed form used by the evaluation.
    let w_signal = [0.2, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let w_null = [0.8, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    assert!(fg_true_cif(&params, 1.0, 1, &w_signal) > fg_true_cif(&params, 1.0, 1, &w_null));
    assert_eq!(test.len(), 500);
}
