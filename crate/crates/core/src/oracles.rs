//! Brute-force reference implementations for testing the fast paths.
//!
//! Nothing here reuses the censoring, loss or tree code: the Kaplan–Meier
//! curve, the martingale sums, the node estimators and the split search are
//! all recomputed from the raw observations by direct summation. Only the
//! data containers and the `CifModel` trait are shared.
//!
//! Martingale convention: the censoring jump of subject `i` at its own time
//! is weighted by `1 / G(T~_i-)` and compensator increments `dLambda(u)` by
//! `1 / G(u)`, the survival value after the jump at `u`.

use crate::cif::CifModel;
use crate::data::{Dataset, TimeGrid};
use crate::losses::LossKind;

/// A fast value next to its brute-force counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub quantity: String,
    pub fast: f64,
    pub oracle: f64,
    pub abs_dev: f64,
    pub rel_dev: f64,
}

impl OracleReport {
    pub fn new(quantity: impl Into<String>, fast: f64, oracle: f64) -> Self {
        let abs_dev = (fast - oracle).abs();
        OracleReport {
            quantity: quantity.into(),
            fast,
            oracle,
            abs_dev,
            rel_dev: abs_dev / oracle.abs().max(f64::MIN_POSITIVE),
        }
    }
}

/// Product-limit censoring curve recomputed from scratch at every query.
pub struct NaiveKm<'a> {
    data: &'a Dataset,
    cens_times: Vec<f64>,
}

impl<'a> NaiveKm<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        let mut cens_times: Vec<f64> = data.iter().filter(|o| !o.delta).map(|o| o.time).collect();
        cens_times.sort_by(f64::total_cmp);
        cens_times.dedup();
        NaiveKm { data, cens_times }
    }

    /// `(d, r)` at censoring time `c`; events at `c` leave the risk set first.
    fn counts(&self, c: f64) -> (f64, f64) {
        let mut d = 0.0;
        let mut r = 0.0;
        for o in self.data.iter() {
            if o.time == c && !o.delta {
                d += 1.0;
                r += 1.0;
            } else if o.time > c {
                r += 1.0;
            }
        }
        (d, r)
    }

    pub fn hazard(&self, c: f64) -> f64 {
        let (d, r) = self.counts(c);
        d / r
    }

    /// `G(s-)`: product over censoring times strictly before `s`.
    pub fn left(&self, s: f64) -> f64 {
        self.cens_times
            .iter()
            .filter(|&&c| c < s)
            .map(|&c| 1.0 - self.hazard(c))
            .product()
    }

    /// `G(s)`: product over censoring times up to and including `s`.
    pub fn right(&self, s: f64) -> f64 {
        self.cens_times
            .iter()
            .filter(|&&c| c <= s)
            .map(|&c| 1.0 - self.hazard(c))
            .product()
    }

    pub fn times(&self) -> &[f64] {
        &self.cens_times
    }

    /// Largest horizon keeping every `G(T~_i(tau)-)` at or above `floor`,
    /// capped at the first observed time whose empirical CDF reaches `quantile`.
    pub fn tau(&self, floor: f64, quantile: Option<f64>) -> f64 {
        let t_max = self.data.iter().map(|o| o.time).fold(f64::NEG_INFINITY, f64::max);
        let mut tau = f64::INFINITY;
        for &c in &self.cens_times {
            if self.right(c) < floor && c < t_max {
                tau = c;
                break;
            }
        }
        if let Some(q) = quantile {
            let n = self.data.len() as f64;
            let cap = self
                .data
                .iter()
                .map(|o| o.time)
                .filter(|&t| self.data.iter().filter(|o| o.time <= t).count() as f64 >= q * n - 1e-9)
                .fold(f64::INFINITY, f64::min);
            tau = tau.min(cap);
        }
        tau
    }
}

fn z_tilde(data: &Dataset, i: usize, t: f64, cause: usize) -> f64 {
    let o = data.get(i);
    if o.delta && o.cause == cause && o.time <= t {
        1.0
    } else {
        0.0
    }
}

/// `int_0^{end} h(u) dM(u) / G` for a subject followed up to `end`, with a
/// censoring jump at `end` when `censored_at_end` is set.
fn mart_sum(km: &NaiveKm, end: f64, censored_at_end: bool, h: &dyn Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for &u in km.times() {
        if u < end {
            total -= h(u) * km.hazard(u) / km.right(u);
        }
    }
    if censored_at_end {
        total += h(end) / km.left(end);
    }
    total
}

/// Literal per-subject loss of one kind at node values `beta` (per grid time).
pub fn naive_observation_loss(
    data: &Dataset,
    km: &NaiveKm,
    psi: Option<&dyn CifModel>,
    i: usize,
    beta: &[f64],
    kind: LossKind,
    grid: &TimeGrid,
    cause: usize,
    tau: f64,
) -> f64 {
    let o = data.get(i);
    let mut total = 0.0;
    for (j, (&t, &w)) in grid.times().iter().zip(grid.weights()).enumerate() {
        let z = z_tilde(data, i, t, cause);
        let b = beta[j];
        let sq = (z - b) * (z - b);
        let v = |u: f64| {
            let y = psi.unwrap().conditional_incidence(u, t, cause, &o.covariates);
            b * b + (1.0 - 2.0 * b) * y
        };
        let l = match kind {
            LossKind::Full => sq,
            LossKind::Ipcw1 | LossKind::Ipcw2 => {
                let t_star = if kind == LossKind::Ipcw1 { tau } else { t };
                let complete = o.delta || o.time >= t_star;
                if complete {
                    sq / km.left(o.time.min(t_star))
                } else {
                    0.0
                }
            }
            LossKind::BuckleyJames => {
                if o.delta {
                    sq
                } else {
                    v(o.time)
                }
            }
            LossKind::DoublyRobust => {
                let point = if o.delta { sq / km.left(o.time) } else { 0.0 };
                point + mart_sum(km, o.time, !o.delta, &v)
            }
        };
        total += w * l;
    }
    total
}

/// Augmented modified-IPCW loss of one subject at a single time `t`: the
/// doubly robust construction applied to the data truncated at `t`.
pub fn naive_augmented_ipcw2_loss(
    data: &Dataset,
    km: &NaiveKm,
    psi: &dyn CifModel,
    i: usize,
    t: f64,
    beta: f64,
    cause: usize,
) -> f64 {
    let o = data.get(i);
    let z = z_tilde(data, i, t, cause);
    let end = o.time.min(t);
    let complete = o.delta || o.time >= t;
    let v = |u: f64| {
        let y = psi.conditional_incidence(u, t, cause, &o.covariates);
        beta * beta + (1.0 - 2.0 * beta) * y
    };
    let point = if complete {
        (z - beta) * (z - beta) / km.left(end)
    } else {
        0.0
    };
    point + mart_sum(km, end, !complete, &v)
}

/// Total loss `(1/n) sum_i L_i(beta_{node(i)})` for an explicit partition.
#[allow(clippy::too_many_arguments)]
pub fn naive_loss(
    data: &Dataset,
    psi: Option<&dyn CifModel>,
    assignment: &[usize],
    betas: &[Vec<f64>],
    kind: LossKind,
    grid: &TimeGrid,
    cause: usize,
    floor: f64,
    tau_quantile: Option<f64>,
) -> f64 {
    let km = NaiveKm::new(data);
    let tau = km.tau(floor, tau_quantile);
    let total: f64 = (0..data.len())
        .map(|i| naive_observation_loss(data, &km, psi, i, &betas[assignment[i]], kind, grid, cause, tau))
        .sum();
    total / data.len() as f64
}

/// Node estimate per grid time from the closed-form estimators.
#[allow(clippy::too_many_arguments)]
pub fn naive_node_estimate(
    data: &Dataset,
    km: &NaiveKm,
    psi: Option<&dyn CifModel>,
    members: &[usize],
    kind: LossKind,
    grid: &TimeGrid,
    cause: usize,
    tau: f64,
) -> Option<Vec<f64>> {
    let n_l = members.len() as f64;
    grid.times()
        .iter()
        .map(|&t| match kind {
            LossKind::Full => Some(members.iter().map(|&i| z_tilde(data, i, t, cause)).sum::<f64>() / n_l),
            LossKind::Ipcw1 | LossKind::Ipcw2 => {
                let t_star = if kind == LossKind::Ipcw1 { tau } else { t };
                let (mut num, mut den) = (0.0, 0.0);
                for &i in members {
                    let o = data.get(i);
                    if o.delta || o.time >= t_star {
                        let w = 1.0 / km.left(o.time.min(t_star));
                        num += w * z_tilde(data, i, t, cause);
                        den += w;
                    }
                }
                (den > 0.0).then(|| num / den)
            }
            LossKind::BuckleyJames => {
                let psi = psi.unwrap();
                let s: f64 = members
                    .iter()
                    .map(|&i| {
                        let o = data.get(i);
                        if o.delta {
                            z_tilde(data, i, t, cause)
                        } else {
                            psi.conditional_incidence(o.time, t, cause, &o.covariates)
                        }
                    })
                    .sum();
                Some(s / n_l)
            }
            LossKind::DoublyRobust => {
                let psi = psi.unwrap();
                let s: f64 = members
                    .iter()
                    .map(|&i| {
                        let o = data.get(i);
                        let y = |u: f64| psi.conditional_incidence(u, t, cause, &o.covariates);
                        let point = if o.delta {
                            z_tilde(data, i, t, cause) / km.left(o.time)
                        } else {
                            0.0
                        };
                        point + mart_sum(km, o.time, !o.delta, &y)
                    })
                    .sum();
                Some(s / n_l)
            }
        })
        .collect()
}

/// Settings shared by the brute-force split search and tree growth.
#[derive(Debug, Clone)]
pub struct OracleSettings {
    pub kind: LossKind,
    pub cause: usize,
    pub floor: f64,
    pub tau_quantile: Option<f64>,
    pub minbucket: usize,
    pub minsplit: usize,
    pub max_depth: usize,
    /// Count only uncensored subjects towards the size limits.
    pub uncensored_only: bool,
}

pub struct Exhaustive<'a> {
    data: &'a Dataset,
    psi: Option<&'a dyn CifModel>,
    grid: &'a TimeGrid,
    km: NaiveKm<'a>,
    tau: f64,
    settings: OracleSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSplit {
    pub covariate: usize,
    pub cutpoint: f64,
    /// Loss reduction, normalized by `n` of the full data.
    pub gain: f64,
}

/// A brute-force tree: `(covariate, cutpoint)` of each internal node in
/// depth-first, left-first order, and the number of leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTree {
    pub splits: Vec<(usize, f64)>,
    pub n_leaves: usize,
}

impl<'a> Exhaustive<'a> {
    pub fn new(data: &'a Dataset, psi: Option<&'a dyn CifModel>, grid: &'a TimeGrid, settings: OracleSettings) -> Self {
        let km = NaiveKm::new(data);
        let tau = km.tau(settings.floor, settings.tau_quantile);
        Exhaustive {
            data,
            psi,
            grid,
            km,
            tau,
            settings,
        }
    }

    fn eligible(&self, members: &[usize]) -> usize {
        members
            .iter()
            .filter(|&&i| !self.settings.uncensored_only || self.data.get(i).delta)
            .count()
    }

    /// Node loss at its own estimate, or `None` if inestimable.
    pub fn node_loss(&self, members: &[usize]) -> Option<f64> {
        let s = &self.settings;
        let beta = naive_node_estimate(self.data, &self.km, self.psi, members, s.kind, self.grid, s.cause, self.tau)?;
        let total: f64 = members
            .iter()
            .map(|&i| {
                naive_observation_loss(self.data, &self.km, self.psi, i, &beta, s.kind, self.grid, s.cause, self.tau)
            })
            .sum();
        Some(total / self.data.len() as f64)
    }

    /// Every covariate and every midpoint, with full recomputation of both
    /// children. Ties keep the lowest covariate, then the smallest cutpoint.
    pub fn best_split(&self, members: &[usize]) -> Option<OracleSplit> {
        let parent = self.node_loss(members)?;
        let mut best: Option<OracleSplit> = None;
        for c in 0..self.data.n_covariates() {
            let mut values: Vec<f64> = members.iter().map(|&i| self.data.get(i).covariates[c]).collect();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for pair in values.windows(2) {
                let mut cut = pair[0] + (pair[1] - pair[0]) / 2.0;
                if cut >= pair[1] {
                    cut = pair[0];
                }
                let (left, right): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&i| self.data.get(i).covariates[c] <= cut);
                if self.eligible(&left) < self.settings.minbucket || self.eligible(&right) < self.settings.minbucket {
                    continue;
                }
                let (Some(l), Some(r)) = (self.node_loss(&left), self.node_loss(&right)) else {
                    continue;
                };
                let gain = parent - l - r;
                // Gains within 1e-12 of the parent loss count as ties.
                if best.as_ref().is_none_or(|b| gain > b.gain + 1e-12 * parent.abs()) {
                    best = Some(OracleSplit {
                        covariate: c,
                        cutpoint: cut,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Greedy growth by repeated exhaustive search. Splits need a gain above
    /// `tolerance` (normalized scale).
    pub fn grow(&self, tolerance: f64) -> OracleTree {
        let mut tree = OracleTree {
            splits: Vec::new(),
            n_leaves: 0,
        };
        let all: Vec<usize> = (0..self.data.len()).collect();
        self.grow_rec(&all, 0, tolerance, &mut tree);
        tree
    }

    fn grow_rec(&self, members: &[usize], depth: usize, tolerance: f64, out: &mut OracleTree) {
        let can_split = self.eligible(members) >= self.settings.minsplit && depth < self.settings.max_depth;
        let best = if can_split { self.best_split(members) } else { None };
        match best {
            Some(b) if b.gain > tolerance => {
                out.splits.push((b.covariate, b.cutpoint));
                let (left, right): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&i| self.data.get(i).covariates[b.covariate] <= b.cutpoint);
                self.grow_rec(&left, depth + 1, tolerance, out);
                self.grow_rec(&right, depth + 1, tolerance, out);
            }
            _ => out.n_leaves += 1,
        }
    }
}

/// Relative order of event time `T`, censoring time `C` and horizon `t`.
#[allow(non_camel_case_types)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ordering3 {
    /// `T < C < t`
    TCt,
    /// `T < t < C`
    TtC,
    /// `t < T < C`
    tTC,
    /// `C < T < t`
    CTt,
    /// `C < t < T`
    CtT,
    /// `t < C < T`
    tCT,
}

impl Ordering3 {
    pub const ALL: [Ordering3; 6] = [
        Ordering3::TCt,
        Ordering3::TtC,
        Ordering3::tTC,
        Ordering3::CTt,
        Ordering3::CtT,
        Ordering3::tCT,
    ];

    pub fn classify(t_event: f64, c: f64, t: f64) -> Ordering3 {
        match (t_event < c, t_event < t, c < t) {
            (true, true, true) => Ordering3::TCt,
            (true, true, false) => Ordering3::TtC,
            (true, false, _) => Ordering3::tTC,
            (false, _, true) if t_event < t => Ordering3::CTt,
            (false, _, true) => Ordering3::CtT,
            (false, _, false) => Ordering3::tCT,
        }
    }

    pub fn index(&self) -> usize {
        Ordering3::ALL.iter().position(|o| o == self).unwrap()
    }
}

/// Outcome of the pathwise equivalence check of the two augmented losses.
#[derive(Debug, Clone, PartialEq)]
pub struct A1Report {
    /// Totals `(1/n) sum_i` of the augmented standard and modified IPCW losses.
    pub totals: OracleReport,
    pub max_omega: f64,
    /// Largest `|Omega_i|` and subject count per ordering of `(T, C, t)`.
    pub per_case: [(f64, usize); 6],
    /// Largest deviation in `int_t^T~ dM/G = I(T~ >= t)(1/G(t-) - Delta/G(T~-))`.
    pub identity_max: f64,
}

/// Computes `Omega_i`, the difference between the doubly robust loss built
/// from the standard IPCW loss and the one built from the modified IPCW
/// loss, for every subject at time `t` and node values `betas` (one per
/// subject). `latent` supplies `(T_i, C_i)` to classify subjects; data with
/// tied observed times is rejected.
pub fn pathwise_a1_check(
    data: &Dataset,
    psi: &dyn CifModel,
    t: f64,
    betas: &[f64],
    cause: usize,
    latent: Option<&[(f64, f64)]>,
) -> crate::Result<A1Report> {
    let mut times: Vec<f64> = data.iter().map(|o| o.time).collect();
    times.sort_by(f64::total_cmp);
    if times.windows(2).any(|w| w[0] == w[1]) || times.contains(&t) {
        return Err(crate::Error::Validation(
            "pathwise check requires distinct observed times different from t".into(),
        ));
    }
    let km = NaiveKm::new(data);
    let grid = TimeGrid::single(t)?;
    let mut per_case = [(0.0_f64, 0usize); 6];
    let (mut sum1, mut sum2, mut max_omega, mut identity_max) = (0.0, 0.0, 0.0_f64, 0.0_f64);
    for i in 0..data.len() {
        let l1 = naive_observation_loss(data, &km, Some(psi), i, &betas[i..=i], LossKind::DoublyRobust, &grid, cause, f64::INFINITY);
        let l2 = naive_augmented_ipcw2_loss(data, &km, psi, i, t, betas[i], cause);
        let omega = (l1 - l2).abs();
        sum1 += l1;
        sum2 += l2;
        max_omega = max_omega.max(omega);
        if let Some(lat) = latent {
            let k = Ordering3::classify(lat[i].0, lat[i].1, t).index();
            per_case[k].0 = per_case[k].0.max(omega);
            per_case[k].1 += 1;
        }

        let o = data.get(i);
        let mut lhs = 0.0;
        for &u in km.times() {
            if u >= t && u < o.time {
                lhs -= km.hazard(u) / km.right(u);
            }
        }
        if !o.delta && o.time >= t {
            lhs += 1.0 / km.left(o.time);
        }
        let rhs = if o.time >= t {
            1.0 / km.left(t) - if o.delta { 1.0 / km.left(o.time) } else { 0.0 }
        } else {
            0.0
        };
        identity_max = identity_max.max((lhs - rhs).abs());
    }
    let n = data.len() as f64;
    Ok(A1Report {
        totals: OracleReport::new("augmented ipcw1 vs ipcw2 total", sum1 / n, sum2 / n),
        max_omega,
        per_case,
        identity_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cif::{FineGrayParams, FineGrayTrue};
    use crate::data::Observation;

    #[test]
    fn full_loss_hand_computed() {
        // Four uncensored subjects, t = 2, beta = 0.25 everywhere.
        let rows = [(1.0, 1), (1.5, 2), (2.5, 1), (0.5, 1)];
        let obs = rows
            .iter()
            .map(|&(t, c)| Observation::event(t, c, vec![0.0]).unwrap())
            .collect();
        let d = Dataset::new(obs, vec!["w".into()], None).unwrap();
        let grid = TimeGrid::single(2.0).unwrap();
        let l = naive_loss(&d, None, &[0, 0, 0, 0], &[vec![0.25]], LossKind::Full, &grid, 1, 0.05, None);
        // Z = (1, 0, 0, 1): two terms of 0.75^2 and two of 0.25^2.
        assert!((l - (2.0 * 0.5625 + 2.0 * 0.0625) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn naive_km_three_points() {
        let obs = vec![
            Observation::event(1.0, 1, vec![0.0]).unwrap(),
            Observation::censored(2.0, vec![0.0]).unwrap(),
            Observation::event(3.0, 1, vec![0.0]).unwrap(),
        ];
        let d = Dataset::new(obs, vec!["w".into()], Some(2)).unwrap();
        let km = NaiveKm::new(&d);
        assert_eq!(km.left(2.0), 1.0);
        assert_eq!(km.right(2.0), 0.5);
        assert_eq!(km.hazard(2.0), 0.5);
    }

    #[test]
    fn case_classification() {
        assert_eq!(Ordering3::classify(1.0, 2.0, 3.0), Ordering3::TCt);
        assert_eq!(Ordering3::classify(1.0, 3.0, 2.0), Ordering3::TtC);
        assert_eq!(Ordering3::classify(2.0, 3.0, 1.0), Ordering3::tTC);
        assert_eq!(Ordering3::classify(2.0, 1.0, 3.0), Ordering3::CTt);
        assert_eq!(Ordering3::classify(3.0, 1.0, 2.0), Ordering3::CtT);
        assert_eq!(Ordering3::classify(3.0, 2.0, 1.0), Ordering3::tCT);
    }

    #[test]
    fn single_case_fixtures() {
        // One subject in each of t < T < C, t < C < T, T < t < C and C < t < T.
        let psi = FineGrayTrue::new(FineGrayParams::HIGH);
        let latent = [(2.0, 5.0), (6.0, 3.0), (0.4, 4.5), (5.5, 0.7)];
        let obs = latent
            .iter()
            .map(|&(t, c)| {
                if t <= c {
                    Observation::event(t, 1, vec![0.2, 0.8]).unwrap()
                } else {
                    Observation::censored(c, vec![0.2, 0.8]).unwrap()
                }
            })
            .collect();
        let d = Dataset::new(obs, vec!["w1".into(), "w2".into()], Some(2)).unwrap();
        let r = pathwise_a1_check(&d, &psi, 1.0, &[0.3, 0.6, 0.1, 0.9], 1, Some(&latent)).unwrap();
        assert!(r.max_omega < 1e-12, "{r:?}");
        assert!(r.identity_max < 1e-12);
        assert_eq!(r.per_case[Ordering3::tTC.index()].1, 1);
        assert_eq!(r.per_case[Ordering3::tCT.index()].1, 1);
        assert_eq!(r.per_case[Ordering3::CtT.index()].1, 1);
    }

    #[test]
    fn ties_rejected() {
        let obs = vec![
            Observation::event(1.0, 1, vec![0.0]).unwrap(),
            Observation::censored(1.0, vec![0.0]).unwrap(),
        ];
        let d = Dataset::new(obs, vec!["w".into()], Some(2)).unwrap();
        let psi = FineGrayTrue::new(FineGrayParams::HIGH);
        assert!(pathwise_a1_check(&d, &psi, 0.5, &[0.1, 0.1], 1, None).is_err());
    }
}
