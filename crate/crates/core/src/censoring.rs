//! Kaplan–Meier estimation of the censoring survival function
//! `G(s) = P(C >= s)`, inverse-probability-of-censoring weights and the
//! censoring-martingale integrals used by the augmented losses.
//!
//! Discrete-time conventions:
//!
//! * At a tied time, events precede censorings: a subject failing at `u` is
//!   not at risk of being censored at `u`.
//! * Inverse weights on observed times use the left limit `G(s-)`.
//! * The compensator part of `dM_G(u)/G(u)` is divided by the post-jump value
//!   `G(u) = G(u-)(1 - dL(u))`, and a subject's own censoring mass at `T~`
//!   combines with its compensator to `1/G(T~-)`. With these choices
//!   `Delta/G(T~-) + int_0^T~ dM_G/G = 1` holds exactly for every subject.

use std::io::Write;

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};

pub const DEFAULT_POSITIVITY_FLOOR: f64 = 0.05;
pub const DEFAULT_TAU_QUANTILE: f64 = 0.95;

/// How the horizon `tau` of the standard IPCW loss is chosen: it keeps every
/// weight at or above `floor` and, when `quantile` is set, truncates at most
/// that share of the observed follow-up times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    pub floor: f64,
    pub quantile: Option<f64>,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            floor: DEFAULT_POSITIVITY_FLOOR,
            quantile: Some(DEFAULT_TAU_QUANTILE),
        }
    }
}

impl Truncation {
    pub fn floor_only(floor: f64) -> Self {
        Truncation { floor, quantile: None }
    }
}

/// Smallest observed time whose empirical CDF reaches `q`.
pub fn observed_time_quantile(data: &Dataset, q: f64) -> f64 {
    let mut t: Vec<f64> = data.iter().map(|o| o.time).collect();
    t.sort_by(f64::total_cmp);
    let k = (q * t.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    t[k.min(t.len()) - 1]
}

/// Which side of a jump to evaluate a step function on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `G(s-)`, i.e. `P(C >= s)`.
    Left,
    /// `G(s)`, i.e. `P(C > s)`.
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensoringModel {
    jump_times: Vec<f64>,
    /// Survival right after each jump.
    survival: Vec<f64>,
    hazard_increments: Vec<f64>,
    n_at_risk: Vec<usize>,
    /// `dL(u_k) / G(u_k)`, the per-jump compensator mass.
    compensator_mass: Vec<f64>,
}

impl CensoringModel {
    /// Product-limit estimator treating censorings as the events of interest.
    pub fn fit_km(data: &Dataset) -> Self {
        let mut order: Vec<&Observation> = data.iter().collect();
        order.sort_by(|a, b| a.time.total_cmp(&b.time));

        let mut model = CensoringModel::unit();
        let mut remaining = order.len();
        let mut surv = 1.0;
        let mut k = 0;
        while k < order.len() {
            let t = order[k].time;
            let (mut events, mut censored) = (0usize, 0usize);
            while k < order.len() && order[k].time == t {
                if order[k].delta {
                    events += 1;
                } else {
                    censored += 1;
                }
                k += 1;
            }
            if censored > 0 {
                let at_risk = remaining - events;
                let dl = censored as f64 / at_risk as f64;
                surv *= 1.0 - dl;
                model.jump_times.push(t);
                model.survival.push(surv);
                model.hazard_increments.push(dl);
                model.n_at_risk.push(at_risk);
                model.compensator_mass.push(dl / surv);
            }
            remaining -= events + censored;
        }
        model
    }

    /// `G ≡ 1`: no censoring hazard. Augmented losses built on this model are
    /// the Buckley–James losses.
    pub fn unit() -> Self {
        CensoringModel {
            jump_times: Vec::new(),
            survival: Vec::new(),
            hazard_increments: Vec::new(),
            n_at_risk: Vec::new(),
            compensator_mass: Vec::new(),
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn survival_values(&self) -> &[f64] {
        &self.survival
    }

    pub fn hazard_increments(&self) -> &[f64] {
        &self.hazard_increments
    }

    pub fn n_at_risk(&self) -> &[usize] {
        &self.n_at_risk
    }

    pub fn compensator_mass(&self) -> &[f64] {
        &self.compensator_mass
    }

    /// Number of jumps strictly before `t`.
    #[inline]
    pub fn jumps_before(&self, t: f64) -> usize {
        self.jump_times.partition_point(|&u| u < t)
    }

    pub fn survival_at(&self, s: f64, side: Side) -> f64 {
        let k = match side {
            Side::Left => self.jump_times.partition_point(|&u| u < s),
            Side::Right => self.jump_times.partition_point(|&u| u <= s),
        };
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    #[inline]
    pub fn survival_left(&self, s: f64) -> f64 {
        self.survival_at(s, Side::Left)
    }

    /// `Delta(t*) / G(T~(t*)-)` with `Delta(t*) = 1` iff the subject had an
    /// event or was followed to at least `t*`. Pass `f64::INFINITY` for the
    /// untruncated weight.
    pub fn ipcw_weight(&self, obs: &Observation, t_star: f64, floor: f64) -> Result<f64> {
        let followed = obs.delta || obs.time >= t_star;
        if !followed {
            return Ok(0.0);
        }
        let at = obs.time.min(t_star);
        let g = self.survival_left(at);
        if g < floor {
            return Err(Error::Positivity {
                time: at,
                survival: g,
                floor,
            });
        }
        Ok(1.0 / g)
    }

    /// Largest horizon `tau` with `G(min(T~_i, tau)-) >= floor` for every
    /// subject; `f64::INFINITY` when no truncation is needed.
    pub fn choose_tau(&self, data: &Dataset, floor: f64) -> f64 {
        let max_time = data
            .iter()
            .map(|o| o.time)
            .fold(f64::NEG_INFINITY, f64::max);
        match self.survival.iter().position(|&g| g < floor) {
            Some(k) if self.jump_times[k] < max_time => self.jump_times[k],
            _ => f64::INFINITY,
        }
    }

    /// `choose_tau`, further capped at a quantile of the observed times.
    pub fn truncation_horizon(&self, data: &Dataset, rule: Truncation) -> f64 {
        let tau = self.choose_tau(data, rule.floor);
        match rule.quantile {
            Some(q) => tau.min(observed_time_quantile(data, q)),
            None => tau,
        }
    }

    /// Per-subject masses of `dM_G(u)/G(u)` over `(0, T~]`, located at
    /// censoring jump times before `T~` and, for censored subjects, at `T~`.
    pub fn martingale_terms(&self, obs: &Observation) -> MartingaleTerms {
        let k = self.jumps_before(obs.time);
        let mut entries: Vec<(f64, f64)> = (0..k)
            .map(|j| (self.jump_times[j], -self.compensator_mass[j]))
            .collect();
        if !obs.delta {
            entries.push((obs.time, 1.0 / self.survival_left(obs.time)));
        }
        MartingaleTerms { entries }
    }

    /// `int_0^T~ h(u) dM_G(u)/G(u)` for one subject.
    pub fn martingale_integral(&self, obs: &Observation, h: impl Fn(f64) -> f64) -> f64 {
        let k = self.jumps_before(obs.time);
        let mut acc = 0.0;
        for j in 0..k {
            acc -= h(self.jump_times[j]) * self.compensator_mass[j];
        }
        if !obs.delta {
            acc += h(obs.time) / self.survival_left(obs.time);
        }
        acc
    }

    pub fn write_curve_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,survival,hazard_increment,n_at_risk")?;
        for k in 0..self.jump_times.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.jump_times[k], self.survival[k], self.hazard_increments[k], self.n_at_risk[k]
            )?;
        }
        Ok(())
    }
}

/// `(time, mass)` pairs whose weighted sum gives a subject's martingale integral.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleTerms {
    pub entries: Vec<(f64, f64)>,
}

impl MartingaleTerms {
    pub fn integrate(&self, h: impl Fn(f64) -> f64) -> f64 {
        self.entries.iter().map(|&(u, m)| h(u) * m).sum()
    }
}
