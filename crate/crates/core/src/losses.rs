//! Brier-type losses for a fixed cause over a grid of time points.
//!
//! For every supported loss the contribution of subject `i` at grid time
//! `t_j` under node value `beta` is the quadratic
//!
//! ```text
//! a_ij * beta^2 - 2 * b_ij * beta + b_ij
//! ```
//!
//! so a node is summarized by the sums of `a` and `b` over its members, and
//! node estimates, node losses and split gains all follow from prefix sums.
//!
//! | kind  | a_ij                              | b_ij                                     |
//! |-------|-----------------------------------|------------------------------------------|
//! | full  | 1                                 | Z~_ij                                    |
//! | ipcw1 | Delta_i(tau)/G(T~_i(tau)-)        | a_ij Z~_ij                               |
//! | ipcw2 | Delta_i(t_j)/G(T~_i(t_j)-)        | a_ij Z~_ij                               |
//! | bj    | 1                                 | Delta_i Z~_ij + (1-Delta_i) y(T~_i; t_j) |
//! | dr    | TS1^0_i + TS2^0_i  (= 1)          | TS1^1_ij + TS2^1_ij                      |

use std::fmt;
use std::str::FromStr;

use crate::censoring::{CensoringModel, Truncation};
use crate::cif::CifModel;
use crate::data::{Dataset, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Uncensored Brier loss on the observed indicator.
    Full,
    /// IPCW with horizon `t* = tau`.
    Ipcw1,
    /// IPCW with horizon `t* = t_j`.
    Ipcw2,
    BuckleyJames,
    DoublyRobust,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Full,
        LossKind::Ipcw1,
        LossKind::Ipcw2,
        LossKind::BuckleyJames,
        LossKind::DoublyRobust,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Full => "full",
            LossKind::Ipcw1 => "ipcw1",
            LossKind::Ipcw2 => "ipcw2",
            LossKind::BuckleyJames => "bj",
            LossKind::DoublyRobust => "dr",
        }
    }

    pub fn needs_psi(&self) -> bool {
        matches!(self, LossKind::BuckleyJames | LossKind::DoublyRobust)
    }

    pub fn is_ipcw(&self) -> bool {
        matches!(self, LossKind::Ipcw1 | LossKind::Ipcw2)
    }

    fn rule(&self) -> EstimatorRule {
        if self.is_ipcw() {
            EstimatorRule::Ratio
        } else {
            EstimatorRule::MemberMean
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(LossKind::Full),
            "ipcw1" => Ok(LossKind::Ipcw1),
            "ipcw2" => Ok(LossKind::Ipcw2),
            "bj" => Ok(LossKind::BuckleyJames),
            "dr" => Ok(LossKind::DoublyRobust),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss '{other}' (expected full|ipcw1|ipcw2|bj|dr)"
            ))),
        }
    }
}

/// How a node value is obtained from the member sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorRule {
    /// `sum b / sum a` (weighted ratio).
    Ratio,
    /// `sum b / N_l`.
    MemberMean,
}

#[derive(Debug, Clone, Copy)]
struct PositivityBreach {
    time: f64,
    survival: f64,
}

/// Per-subject sufficient statistics for one cause over one grid,
/// independent of any tree. Arrays indexed by time are laid out `i * J + j`.
#[derive(Debug, Clone)]
pub struct LossStats {
    n: usize,
    cause: usize,
    grid: TimeGrid,
    floor: f64,
    tau: f64,
    delta: Vec<bool>,
    z_tilde: Vec<f64>,
    ts0_point: Vec<f64>,
    ts0_mart: Vec<f64>,
    ts1_point: Vec<f64>,
    ts1_mart: Option<Vec<f64>>,
    bj_response: Option<Vec<f64>>,
    ipcw1_weight: Vec<f64>,
    ipcw1_breach: Option<PositivityBreach>,
    ipcw2_weight: Vec<f64>,
    ipcw2_breach: Option<PositivityBreach>,
}

/// Computes every per-subject term in one pass. `psi` is required only by
/// the Buckley–James and doubly robust losses. Positivity breaches of the
/// IPCW weights are recorded and reported when those losses are requested.
pub fn precompute_stats(
    data: &Dataset,
    cens: &CensoringModel,
    psi: Option<&dyn CifModel>,
    grid: &TimeGrid,
    cause: usize,
    trunc: Truncation,
) -> Result<LossStats> {
    if cause == 0 || cause > data.n_causes() {
        return Err(Error::InvalidArgument(format!(
            "cause {cause} outside 1..={}",
            data.n_causes()
        )));
    }
    let n = data.len();
    let jn = grid.len();
    let times = grid.times();
    let floor = trunc.floor;
    let tau = cens.truncation_horizon(data, trunc);
    let jumps = cens.jump_times();
    let mass = cens.compensator_mass();

    let mut stats = LossStats {
        n,
        cause,
        grid: grid.clone(),
        floor,
        tau,
        delta: Vec::with_capacity(n),
        z_tilde: vec![0.0; n * jn],
        ts0_point: vec![0.0; n],
        ts0_mart: vec![0.0; n],
        ts1_point: vec![0.0; n * jn],
        ts1_mart: psi.map(|_| vec![0.0; n * jn]),
        bj_response: psi.map(|_| vec![0.0; n * jn]),
        ipcw1_weight: vec![0.0; n],
        ipcw1_breach: None,
        ipcw2_weight: vec![0.0; n * jn],
        ipcw2_breach: None,
    };

    let record = |slot: &mut Option<PositivityBreach>, r: Result<f64>| -> f64 {
        match r {
            Ok(w) => w,
            Err(Error::Positivity { time, survival, .. }) => {
                if slot.is_none() {
                    *slot = Some(PositivityBreach { time, survival });
                }
                0.0
            }
            Err(_) => unreachable!("ipcw_weight only fails on positivity"),
        }
    };

    for (i, obs) in data.iter().enumerate() {
        stats.delta.push(obs.delta);
        let g_left = cens.survival_left(obs.time);
        let k_before = cens.jumps_before(obs.time);

        let point = if obs.delta { 1.0 / g_left } else { 0.0 };
        let own = if obs.delta { 0.0 } else { 1.0 / g_left };
        let compensator: f64 = mass[..k_before].iter().sum();
        stats.ts0_point[i] = point;
        stats.ts0_mart[i] = own - compensator;

        let w1 = cens.ipcw_weight(obs, tau, floor);
        stats.ipcw1_weight[i] = record(&mut stats.ipcw1_breach, w1);

        for (j, &t) in times.iter().enumerate() {
            let idx = i * jn + j;
            let z = obs.observed_incidence(t, cause) as u8 as f64;
            stats.z_tilde[idx] = z;
            stats.ts1_point[idx] = z * point;
            let w2 = cens.ipcw_weight(obs, t, floor);
            stats.ipcw2_weight[idx] = record(&mut stats.ipcw2_breach, w2);

            if let Some(model) = psi {
                let w = &obs.covariates;
                // y(u; t) vanishes for u > t.
                let k_end = k_before.min(jumps.partition_point(|&u| u <= t));
                let mut acc = 0.0;
                for k in 0..k_end {
                    acc -= model.conditional_incidence(jumps[k], t, cause, w) * mass[k];
                }
                let y_own = if obs.delta {
                    0.0
                } else {
                    model.conditional_incidence(obs.time, t, cause, w)
                };
                acc += y_own * own;
                stats.ts1_mart.as_mut().unwrap()[idx] = acc;
                stats.bj_response.as_mut().unwrap()[idx] = if obs.delta { z } else { y_own };
            }
        }
    }
    Ok(stats)
}

impl LossStats {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn n_times(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn cause(&self) -> usize {
        self.cause
    }

    /// Truncation horizon used by IPCW1.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn delta(&self, i: usize) -> bool {
        self.delta[i]
    }

    pub fn z_tilde(&self, i: usize, j: usize) -> f64 {
        self.z_tilde[i * self.grid.len() + j]
    }

    /// `Delta_i / G(T~_i-)`.
    pub fn ts0_point(&self, i: usize) -> f64 {
        self.ts0_point[i]
    }

    /// `int_0^T~_i dM_G / G`.
    pub fn ts0_mart(&self, i: usize) -> f64 {
        self.ts0_mart[i]
    }

    pub fn ts1_point(&self, i: usize, j: usize) -> f64 {
        self.ts1_point[i * self.grid.len() + j]
    }

    /// `int_0^T~_i y(u; t_j) dM_G / G`, when a `Psi` was supplied.
    pub fn ts1_mart(&self, i: usize, j: usize) -> Option<f64> {
        self.ts1_mart
            .as_ref()
            .map(|v| v[i * self.grid.len() + j])
    }

    pub fn ipcw1_weight(&self, i: usize) -> f64 {
        self.ipcw1_weight[i]
    }

    pub fn ipcw2_weight(&self, i: usize, j: usize) -> f64 {
        self.ipcw2_weight[i * self.grid.len() + j]
    }

    fn breach_error(&self, b: PositivityBreach) -> Error {
        Error::Positivity {
            time: b.time,
            survival: b.survival,
            floor: self.floor,
        }
    }

    /// Materializes the `(a, b)` coefficients of one loss kind.
    pub fn quadratic(&self, kind: LossKind) -> Result<Quadratic> {
        let jn = self.grid.len();
        let size = self.n * jn;
        let missing_psi = || {
            Error::InvalidArgument(format!("loss '{kind}' needs a CIF model for imputation"))
        };
        let (a, b) = match kind {
            LossKind::Full => (vec![1.0; size], self.z_tilde.clone()),
            LossKind::Ipcw1 => {
                if let Some(br) = self.ipcw1_breach {
                    return Err(self.breach_error(br));
                }
                let a: Vec<f64> = (0..size).map(|idx| self.ipcw1_weight[idx / jn]).collect();
                let b = a.iter().zip(&self.z_tilde).map(|(w, z)| w * z).collect();
                (a, b)
            }
            LossKind::Ipcw2 => {
                if let Some(br) = self.ipcw2_breach {
                    return Err(self.breach_error(br));
                }
                let a = self.ipcw2_weight.clone();
                let b = a.iter().zip(&self.z_tilde).map(|(w, z)| w * z).collect();
                (a, b)
            }
            LossKind::BuckleyJames => {
                let b = self.bj_response.clone().ok_or_else(missing_psi)?;
                (vec![1.0; size], b)
            }
            LossKind::DoublyRobust => {
                let mart = self.ts1_mart.as_ref().ok_or_else(missing_psi)?;
                let a = (0..size)
                    .map(|idx| self.ts0_point[idx / jn] + self.ts0_mart[idx / jn])
                    .collect();
                let b = self.ts1_point.iter().zip(mart).map(|(p, m)| p + m).collect();
                (a, b)
            }
        };
        Ok(Quadratic {
            n_times: jn,
            weights: self.grid.weights().to_vec(),
            rule: kind.rule(),
            a,
            b,
        })
    }
}

/// Per-subject quadratic loss coefficients for one loss kind.
#[derive(Debug, Clone)]
pub struct Quadratic {
    n_times: usize,
    weights: Vec<f64>,
    rule: EstimatorRule,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Running sums of the quadratic coefficients over a set of subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSums {
    pub count: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl NodeSums {
    pub fn zeros(n_times: usize) -> Self {
        NodeSums {
            count: 0,
            a: vec![0.0; n_times],
            b: vec![0.0; n_times],
        }
    }
}

impl Quadratic {
    /// Builds a quadratic directly from coefficient arrays (`i * J + j` layout).
    pub fn from_parts(
        a: Vec<f64>,
        b: Vec<f64>,
        weights: Vec<f64>,
        rule: EstimatorRule,
    ) -> Result<Self> {
        let jn = weights.len();
        if jn == 0 || a.len() != b.len() || !a.len().is_multiple_of(jn) {
            return Err(Error::InvalidArgument("inconsistent quadratic coefficients".into()));
        }
        Ok(Quadratic {
            n_times: jn,
            weights,
            rule,
            a,
            b,
        })
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn len(&self) -> usize {
        self.a.len() / self.n_times
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rule(&self) -> EstimatorRule {
        self.rule
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n_times + j]
    }

    #[inline]
    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.b[i * self.n_times + j]
    }

    #[inline]
    pub fn add(&self, sums: &mut NodeSums, i: usize) {
        let row = i * self.n_times;
        sums.count += 1;
        for j in 0..self.n_times {
            sums.a[j] += self.a[row + j];
            sums.b[j] += self.b[row + j];
        }
    }

    pub fn sums(&self, members: &[usize]) -> NodeSums {
        let mut s = NodeSums::zeros(self.n_times);
        for &i in members {
            self.add(&mut s, i);
        }
        s
    }

    /// Node value per grid time, or `None` when the node is inestimable
    /// (empty, or an IPCW node with zero total weight).
    pub fn estimate(&self, sums: &NodeSums) -> Option<Vec<f64>> {
        if sums.count == 0 {
            return None;
        }
        (0..self.n_times)
            .map(|j| self.estimate_at(sums, j))
            .collect()
    }

    #[inline]
    fn estimate_at(&self, sums: &NodeSums, j: usize) -> Option<f64> {
        match self.rule {
            EstimatorRule::Ratio => {
                if sums.a[j] > 0.0 {
                    Some(sums.b[j] / sums.a[j])
                } else {
                    None
                }
            }
            EstimatorRule::MemberMean => Some(sums.b[j] / sums.count as f64),
        }
    }

    /// Unnormalized per-time losses `sum_i (a beta^2 - 2 b beta + b)`.
    pub fn losses_at(&self, sums: &NodeSums, beta: &[f64]) -> Vec<f64> {
        (0..self.n_times)
            .map(|j| sums.a[j] * beta[j] * beta[j] - 2.0 * sums.b[j] * beta[j] + sums.b[j])
            .collect()
    }

    /// Unnormalized composite loss `sum_j w_j sum_i (...)` at `beta`.
    pub fn loss_at(&self, sums: &NodeSums, beta: &[f64]) -> f64 {
        self.losses_at(sums, beta)
            .iter()
            .zip(&self.weights)
            .map(|(l, w)| l * w)
            .sum()
    }

    /// Unnormalized composite loss at the node's own estimate.
    #[inline]
    pub fn min_loss(&self, sums: &NodeSums) -> Option<f64> {
        if sums.count == 0 {
            return None;
        }
        let mut total = 0.0;
        for j in 0..self.n_times {
            let beta = self.estimate_at(sums, j)?;
            let l = sums.a[j] * beta * beta - 2.0 * sums.b[j] * beta + sums.b[j];
            total += self.weights[j] * l;
        }
        Some(total)
    }

    /// `min_loss` of `total - part` without materializing the difference.
    #[inline]
    pub fn min_loss_complement(&self, total: &NodeSums, part: &NodeSums) -> Option<f64> {
        let count = total.count - part.count;
        if count == 0 {
            return None;
        }
        let mut sum = 0.0;
        for j in 0..self.n_times {
            let a = total.a[j] - part.a[j];
            let b = total.b[j] - part.b[j];
            let beta = match self.rule {
                // Guard against cancellation residue when the complement has no weight.
                EstimatorRule::Ratio if a > 1e-9 * total.a[j] => b / a,
                EstimatorRule::Ratio => return None,
                EstimatorRule::MemberMean => b / count as f64,
            };
            sum += self.weights[j] * (a * beta * beta - 2.0 * b * beta + b);
        }
        Some(sum)
    }

    /// Composite loss of a single subject at prediction `beta`.
    pub fn observation_loss(&self, i: usize, beta: &[f64]) -> f64 {
        let row = i * self.n_times;
        (0..self.n_times)
            .map(|j| {
                let (a, b) = (self.a[row + j], self.b[row + j]);
                self.weights[j] * (a * beta[j] * beta[j] - 2.0 * b * beta[j] + b)
            })
            .sum()
    }
}

/// Terminal-node estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEstimate {
    /// Raw (unclamped) value per grid time.
    pub beta: Vec<f64>,
    pub n_members: usize,
    /// Per-time loss contribution at `beta`, normalized by the number of
    /// subjects in the statistics.
    pub loss: Vec<f64>,
}

pub fn node_estimate(stats: &LossStats, members: &[usize], kind: LossKind) -> Result<NodeEstimate> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("node has no members".into()));
    }
    let q = stats.quadratic(kind)?;
    let sums = q.sums(members);
    let beta = q.estimate(&sums).ok_or_else(|| {
        Error::Inestimable(format!(
            "{kind} denominator is zero for a node of {} members",
            members.len()
        ))
    })?;
    let scale = 1.0 / stats.len() as f64;
    let loss = q.losses_at(&sums, &beta).into_iter().map(|l| l * scale).collect();
    Ok(NodeEstimate {
        beta,
        n_members: members.len(),
        loss,
    })
}

/// Composite loss `sum_j w_j L_j` of one node at `beta`, normalized by `n`.
pub fn node_loss(stats: &LossStats, members: &[usize], beta: &[f64], kind: LossKind) -> Result<f64> {
    let q = stats.quadratic(kind)?;
    if beta.len() != q.n_times() {
        return Err(Error::InvalidArgument("beta length differs from grid".into()));
    }
    Ok(q.loss_at(&q.sums(members), beta) / stats.len() as f64)
}

/// Loss reduction from splitting `members` at `covariate <= cutpoint`, each
/// child at its own estimate. Returns `None` if either side is inestimable.
pub fn split_gain(
    data: &Dataset,
    stats: &LossStats,
    members: &[usize],
    covariate: usize,
    cutpoint: f64,
    kind: LossKind,
) -> Result<Option<f64>> {
    let q = stats.quadratic(kind)?;
    let mut sorted = members.to_vec();
    sorted.sort_by(|&x, &y| data.get(x).covariates[covariate].total_cmp(&data.get(y).covariates[covariate]));
    // Prefix sums over the sorted members; the cut is the last position with value <= cutpoint.
    let mut prefix = Vec::with_capacity(sorted.len() + 1);
    let mut running = NodeSums::zeros(q.n_times());
    prefix.push(running.clone());
    for &i in &sorted {
        q.add(&mut running, i);
        prefix.push(running.clone());
    }
    let cut = sorted.partition_point(|&i| data.get(i).covariates[covariate] <= cutpoint);
    let total = &prefix[sorted.len()];
    let left = &prefix[cut];
    let right = NodeSums {
        count: total.count - left.count,
        a: total.a.iter().zip(&left.a).map(|(t, l)| t - l).collect(),
        b: total.b.iter().zip(&left.b).map(|(t, l)| t - l).collect(),
    };
    let scale = 1.0 / stats.len() as f64;
    let gain = match (q.min_loss(total), q.min_loss(left), q.min_loss(&right)) {
        (Some(p), Some(l), Some(r)) => Some((p - l - r) * scale),
        _ => None,
    };
    Ok(gain)
}

/// The doubly robust quadratic built by augmenting the modified (`t* = t_j`)
/// IPCW loss: weights and martingale integrals stop at `min(T~_i, t_j)`.
/// Equal to the `dr` quadratic subject by subject.
pub fn augmented_ipcw2_quadratic(
    data: &Dataset,
    cens: &CensoringModel,
    psi: &dyn CifModel,
    grid: &TimeGrid,
    cause: usize,
) -> Result<Quadratic> {
    let jn = grid.len();
    let mass = cens.compensator_mass();
    let jumps = cens.jump_times();
    let mut a = vec![0.0; data.len() * jn];
    let mut b = vec![0.0; data.len() * jn];
    for (i, obs) in data.iter().enumerate() {
        for (j, &t) in grid.times().iter().enumerate() {
            // Modified record: follow-up min(T~, t), complete if an event or still at risk at t.
            let time_t = obs.time.min(t);
            let complete = obs.delta || obs.time >= t;
            let z = obs.observed_incidence(t, cause) as u8 as f64;
            let k_end = jumps.partition_point(|&u| u < time_t);
            let g_left = cens.survival_left(time_t);
            let mut a_ij = if complete { 1.0 / g_left } else { 0.0 };
            let mut b_ij = z * a_ij;
            for k in 0..k_end {
                a_ij -= mass[k];
                b_ij -= psi.conditional_incidence(jumps[k], t, cause, &obs.covariates) * mass[k];
            }
            if !complete {
                a_ij += 1.0 / g_left;
                b_ij += psi.conditional_incidence(obs.time, t, cause, &obs.covariates) / g_left;
            }
            a[i * jn + j] = a_ij;
            b[i * jn + j] = b_ij;
        }
    }
    Quadratic::from_parts(a, b, grid.weights().to_vec(), EstimatorRule::MemberMean)
}

/// Pool-adjacent-violators fit of a nondecreasing sequence (equal weights).
pub fn isotonic_nondecreasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (v2, n2) = blocks[blocks.len() - 1];
            let (v1, n1) = blocks[blocks.len() - 2];
            if v1 <= v2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((v1 * n1 as f64 + v2 * n2 as f64) / (n1 + n2) as f64, n1 + n2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, n)| std::iter::repeat_n(v, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cif::{AalenJohansen, FineGrayParams, FineGrayTrue};
    use crate::data::Observation;
    use approx::assert_abs_diff_eq;

    fn toy() -> Dataset {
        let rows = [
            (0.5, 1, 0.1),
            (1.2, 0, 0.9),
            (0.8, 2, 0.4),
            (2.0, 1, 0.7),
            (1.7, 0, 0.2),
            (2.6, 2, 0.6),
        ];
        let obs = rows
            .iter()
            .map(|&(t, c, w)| Observation::new(t, c > 0, c, vec![w, 1.0 - w]).unwrap())
            .collect();
        Dataset::new(obs, vec!["w1".into(), "w2".into()], None).unwrap()
    }

    fn grid() -> TimeGrid {
        TimeGrid::new(vec![0.7, 1.5, 2.2], None).unwrap()
    }

    #[test]
    fn no_censoring_terms() {
        let obs = (1..=5)
            .map(|k| Observation::event(k as f64, 1 + k % 2, vec![k as f64]).unwrap())
            .collect();
        let d = Dataset::new(obs, vec!["w".into()], None).unwrap();
        let g = CensoringModel::fit_km(&d);
        let aj = AalenJohansen::fit(&d);
        let s = precompute_stats(&d, &g, Some(&aj), &grid(), 1, Truncation::default()).unwrap();
        for i in 0..d.len() {
            assert_eq!(s.ts0_point(i), 1.0);
            assert_eq!(s.ts0_mart(i), 0.0);
            for j in 0..3 {
                assert_eq!(s.ts1_mart(i, j), Some(0.0));
            }
        }
    }

    #[test]
    fn lemma_one_per_subject() {
        let d = toy();
        let g = CensoringModel::fit_km(&d);
        let s = precompute_stats(&d, &g, None, &grid(), 1, Truncation::default()).unwrap();
        for i in 0..d.len() {
            assert_abs_diff_eq!(s.ts0_point(i) + s.ts0_mart(i), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn psi_only_changes_ts1_mart() {
        let d = toy();
        let g = CensoringModel::fit_km(&d);
        let aj = AalenJohansen::fit(&d);
        let fg = FineGrayTrue::new(FineGrayParams::HIGH);
        let s1 = precompute_stats(&d, &g, Some(&aj), &grid(), 1, Truncation::default()).unwrap();
        let s2 = precompute_stats(&d, &g, Some(&fg), &grid(), 1, Truncation::default()).unwrap();
        let mut differs = false;
        for i in 0..d.len() {
            assert_eq!(s1.ts0_point(i), s2.ts0_point(i));
            assert_eq!(s1.ts0_mart(i), s2.ts0_mart(i));
            for j in 0..3 {
                differs |= s1.ts1_mart(i, j) != s2.ts1_mart(i, j);
            }
        }
        assert!(differs);
    }

    #[test]
    fn dr_ratio_and_mean_forms_agree() {
        let d = toy();
        let g = CensoringModel::fit_km(&d);
        let aj = AalenJohansen::fit(&d);
        let s = precompute_stats(&d, &g, Some(&aj), &grid(), 1, Truncation::default()).unwrap();
        let members: Vec<usize> = (0..d.len()).collect();
        let est = node_estimate(&s, &members, LossKind::DoublyRobust).unwrap();
        for j in 0..3 {
            let num: f64 = members
                .iter()
                .map(|&i| s.ts1_point(i, j) + s.ts1_mart(i, j).unwrap())
                .sum();
            let den: f64 = members.iter().map(|&i| s.ts0_point(i) + s.ts0_mart(i)).sum();
            assert_abs_diff_eq!(est.beta[j], num / den, epsilon = 1e-12);
        }
    }

    #[test]
    fn singleton_event_node() {
        let d = toy();
        let g = CensoringModel::fit_km(&d);
        let aj = AalenJohansen::fit(&d);
        let s = precompute_stats(&d, &g, Some(&aj), &grid(), 1, Truncation::default()).unwrap();
        for kind in LossKind::ALL {
            let e = node_estimate(&s, &[0], kind).unwrap();
            assert_abs_diff_eq!(e.beta[0], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn estimate_minimizes_loss() {
        let d = toy();
        let g = CensoringModel::fit_km(&d);
        let aj = AalenJohansen::fit(&d);
        let s = precompute_stats(&d, &g, Some(&aj), &grid(), 1, Truncation::default()).unwrap();
        let members = [0usize, 1, 3, 4];
        for kind in LossKind::ALL {
            let e = node_estimate(&s, &members, kind).unwrap();
            let best = node_loss(&s, &members, &e.beta, kind).unwrap();
            for delta in [-0.1, -1e-3, 1e-3, 0.2] {
                for j in 0..3 {
                    let mut b = e.beta.clone();
                    b[j] += delta;
                    assert!(node_loss(&s, &members, &b, kind).unwrap() >= best - 1e-15);
                }
            }
        }
    }

    #[test]
    fn ipcw1_inestimable_without_events() {
        let d = toy();
        let g = CensoringModel::fit_km(&d);
        let s = precompute_stats(&d, &g, None, &grid(), 1, Truncation::default()).unwrap();
        // Subject 1 is censored at 1.2, before tau.
        assert!(matches!(
            node_estimate(&s, &[1], LossKind::Ipcw1),
            Err(Error::Inestimable(_))
        ));
        assert!(matches!(
            node_estimate(&s, &[1], LossKind::BuckleyJames),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn positivity_breach_is_reported_for_ipcw_only() {
        // Censoring survival collapses to 1/4 before t = 5.
        let rows = [(1.0, false), (2.0, false), (3.0, false), (5.5, true), (6.0, true)];
        let obs = rows
            .iter()
            .map(|&(t, d)| Observation::new(t, d, d as usize, vec![0.0]).unwrap())
            .collect();
        let d = Dataset::new(obs, vec!["w".into()], None).unwrap();
        let g = CensoringModel::fit_km(&d);
        let aj = AalenJohansen::fit(&d);
        let grid = TimeGrid::single(5.0).unwrap();
        let s = precompute_stats(&d, &g, Some(&aj), &grid, 1, Truncation::floor_only(0.5)).unwrap();
        assert!(matches!(s.quadratic(LossKind::Ipcw2), Err(Error::Positivity { .. })));
        assert!(s.quadratic(LossKind::Ipcw1).is_ok());
        assert!(s.quadratic(LossKind::DoublyRobust).is_ok());
    }

    #[test]
    fn split_gain_constant_response_is_zero() {
        let obs = (0..12)
            .map(|k| Observation::event(0.5, 1, vec![k as f64]).unwrap())
            .collect();
        let d = Dataset::new(obs, vec!["w".into()], None).unwrap();
        let g = CensoringModel::fit_km(&d);
        let s = precompute_stats(&d, &g, None, &TimeGrid::single(1.0).unwrap(), 1, Truncation::default()).unwrap();
        let members: Vec<usize> = (0..12).collect();
        for c in 0..11 {
            let gain = split_gain(&d, &s, &members, 0, c as f64 + 0.5, LossKind::Full)
                .unwrap()
                .unwrap();
            assert_eq!(gain, 0.0);
        }
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic_nondecreasing(&[0.1, 0.3, 0.2]), vec![0.1, 0.25, 0.25]);
        for v in isotonic_nondecreasing(&[0.5, 0.1, 0.0]) {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-15);
        }
        assert_eq!(isotonic_nondecreasing(&[0.1, 0.2]), vec![0.1, 0.2]);
    }
}
