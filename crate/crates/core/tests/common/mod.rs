#![allow(dead_code)]

use ciftree::cif::FineGrayParams;
use ciftree::data::{Dataset, Observation, TimeGrid};
use ciftree::simulation::{covariate_names, sample_full};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("x{k}")).collect()
}

/// Covariates on a coarse lattice so that ties occur.
fn covariates<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    (0..p).map(|_| (rng.gen::<f64>() * 20.0).floor() / 20.0).collect()
}

/// Event time and cause with a step effect of `x1` on the rate and of `x2`
/// on the cause.
fn event<R: Rng>(rng: &mut R, w: &[f64]) -> (f64, usize) {
    let rate = if w[0] > 0.5 { 2.0 } else { 0.7 };
    let t = -(1.0 - rng.gen::<f64>()).ln() / rate;
    let p1 = if w.get(1).copied().unwrap_or(0.0) > 0.4 { 0.7 } else { 0.3 };
    let cause = if rng.gen::<f64>() < p1 { 1 } else { 2 };
    (t, cause)
}

pub fn uncensored<R: Rng>(rng: &mut R, n: usize, p: usize) -> Dataset {
    let obs = (0..n)
        .map(|_| {
            let w = covariates(rng, p);
            let (t, c) = event(rng, &w);
            Observation::event(t, c, w).unwrap()
        })
        .collect();
    Dataset::new(obs, names(p), Some(2)).unwrap()
}

/// Independent exponential censoring at rate `gamma`.
pub fn censored<R: Rng>(rng: &mut R, n: usize, p: usize, gamma: f64) -> Dataset {
    let obs = (0..n)
        .map(|_| {
            let w = covariates(rng, p);
            let (t, c) = event(rng, &w);
            let cens = -(1.0 - rng.gen::<f64>()).ln() / gamma;
            if t <= cens {
                Observation::event(t, c, w).unwrap()
            } else {
                Observation::censored(cens, w).unwrap()
            }
        })
        .collect();
    Dataset::new(obs, names(p), Some(2)).unwrap()
}

/// Data from the simulation model with latent `(T, C)` kept.
pub fn censored_fg<R: Rng>(rng: &mut R, params: &FineGrayParams, n: usize, gamma: f64) -> (Dataset, Vec<(f64, f64)>) {
    let records = sample_full(params, n, rng);
    let mut latent = Vec::with_capacity(n);
    let obs = records
        .into_iter()
        .map(|r| {
            let c = -(1.0 - rng.gen::<f64>()).ln() / gamma;
            latent.push((r.time, c));
            if r.time <= c {
                Observation::event(r.time, r.cause, r.covariates).unwrap()
            } else {
                Observation::censored(c, r.covariates).unwrap()
            }
        })
        .collect();
    (Dataset::new(obs, covariate_names(), Some(2)).unwrap(), latent)
}

pub fn is_tie_free(data: &Dataset) -> bool {
    let mut t: Vec<f64> = data.iter().map(|o| o.time).collect();
    t.sort_by(f64::total_cmp);
    t.windows(2).all(|w| w[0] < w[1])
}

/// Grid at empirical quantiles of the observed times.
pub fn quantile_grid(data: &Dataset, levels: &[f64]) -> TimeGrid {
    let mut t: Vec<f64> = data.iter().map(|o| o.time).collect();
    t.sort_by(f64::total_cmp);
    let times: Vec<f64> = levels
        .iter()
        .map(|&q| {
            let k = ((q * t.len() as f64) as usize).min(t.len() - 1);
            // Halfway to the next time keeps grid points off the data.
            if k + 1 < t.len() {
                0.5 * (t[k] + t[k + 1])
            } else {
                t[k]
            }
        })
        .collect();
    let mut times = times;
    times.dedup();
    TimeGrid::new(times, None).unwrap()
}

pub fn random_subset<R: Rng>(rng: &mut R, n: usize, min: usize) -> Vec<usize> {
    loop {
        let s: Vec<usize> = (0..n).filter(|_| rng.gen::<bool>()).collect();
        if s.len() >= min {
            return s;
        }
    }
}
