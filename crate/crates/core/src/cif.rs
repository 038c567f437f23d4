//! Models `Psi` for the cause-specific cumulative incidence functions, used
//! to impute the conditional incidence of censored subjects.

use std::io::Write;

use crate::data::{Dataset, Observation};

/// A cumulative incidence model `Psi`. Causes are numbered from 1.
pub trait CifModel: Send + Sync {
    fn n_causes(&self) -> usize;

    /// `P(T <= t, M = m | W = w)`.
    fn cif(&self, t: f64, cause: usize, w: &[f64]) -> f64;

    /// `P(T < t, M = m | W = w)`; equal to `cif` for continuous models.
    fn cif_left(&self, t: f64, cause: usize, w: &[f64]) -> f64 {
        self.cif(t, cause, w)
    }

    /// Event-free probability `P(T >= u | W = w)`.
    fn event_free(&self, u: f64, w: &[f64]) -> f64 {
        let total: f64 = (1..=self.n_causes())
            .map(|m| self.cif_left(u, m, w))
            .sum();
        1.0 - total
    }

    /// `E[Z_m(t) | T >= u, W = w]`; see [`conditional_incidence`].
    fn conditional_incidence(&self, u: f64, t: f64, cause: usize, w: &[f64]) -> f64 {
        conditional_incidence(self, u, t, cause, w).value
    }
}

/// Result of a conditional-incidence query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditional {
    pub value: f64,
    /// Set when `P(T >= u | w) = 0`; the value is then reported as 0.
    pub degenerate: bool,
}

/// `y_m(u; t, w) = P(u <= T <= t, M = m | w) / P(T >= u | w)` for `u <= t`
/// and 0 otherwise, clamped to `[0, 1]`.
pub fn conditional_incidence<M: CifModel + ?Sized>(
    model: &M,
    u: f64,
    t: f64,
    cause: usize,
    w: &[f64],
) -> Conditional {
    if u > t {
        return Conditional {
            value: 0.0,
            degenerate: false,
        };
    }
    let at_risk = model.event_free(u, w);
    if at_risk <= 0.0 {
        return Conditional {
            value: 0.0,
            degenerate: true,
        };
    }
    let window = model.cif(t, cause, w) - model.cif_left(u, cause, w);
    Conditional {
        value: (window / at_risk).clamp(0.0, 1.0),
        degenerate: false,
    }
}

/// Parameters of the two-cause Fine–Gray simulation model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineGrayParams {
    pub beta1: f64,
    pub beta2: f64,
    pub p: f64,
}

impl FineGrayParams {
    pub const HIGH: FineGrayParams = FineGrayParams {
        beta1: 3.0,
        beta2: -0.5,
        p: 0.3,
    };
    pub const MEDIUM: FineGrayParams = FineGrayParams {
        beta1: 2.0,
        beta2: -0.5,
        p: 0.3,
    };
    pub const LOW: FineGrayParams = FineGrayParams {
        beta1: 1.5,
        beta2: -0.5,
        p: 0.3,
    };

    pub fn new(beta1: f64, beta2: f64, p: f64) -> crate::Result<Self> {
        if !(p > 0.0 && p < 1.0) || !beta1.is_finite() || !beta2.is_finite() {
            return Err(crate::Error::InvalidArgument(format!(
                "invalid Fine-Gray parameters ({beta1}, {beta2}, {p}); need p in (0,1)"
            )));
        }
        Ok(FineGrayParams { beta1, beta2, p })
    }

    /// `exp(beta1 * Z)`.
    #[inline]
    pub fn eta(&self, z: bool) -> f64 {
        if z {
            self.beta1.exp()
        } else {
            1.0
        }
    }

    /// `exp(beta2 * Z)`, the cause-2 exponential rate.
    #[inline]
    pub fn cause2_rate(&self, z: bool) -> f64 {
        if z {
            self.beta2.exp()
        } else {
            1.0
        }
    }

    /// `psi_01(inf) = 1 - (1 - p)^eta`.
    #[inline]
    pub fn cause1_mass(&self, z: bool) -> f64 {
        1.0 - (1.0 - self.p).powf(self.eta(z))
    }

    pub fn cif_given_z(&self, t: f64, cause: usize, z: bool) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let eta = self.eta(z);
        match cause {
            1 => {
                if t.is_infinite() {
                    return self.cause1_mass(z);
                }
                1.0 - (1.0 - self.p * -(-t).exp_m1()).powf(eta)
            }
            2 => {
                let scale = (1.0 - self.p).powf(eta);
                if t.is_infinite() {
                    return scale;
                }
                scale * -(-t * self.cause2_rate(z)).exp_m1()
            }
            _ => 0.0,
        }
    }
}

/// `Z(W) = I(W1 <= 0.5 and W2 > 0.5)`.
#[inline]
pub fn signal_indicator(w: &[f64]) -> bool {
    w[0] <= 0.5 && w[1] > 0.5
}

/// Closed-form CIFs of the simulation model.
pub fn fg_true_cif(params: &FineGrayParams, t: f64, cause: usize, w: &[f64]) -> f64 {
    params.cif_given_z(t, cause, signal_indicator(w))
}

/// The data-generating model used as an oracle `Psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineGrayTrue {
    pub params: FineGrayParams,
}

impl FineGrayTrue {
    pub fn new(params: FineGrayParams) -> Self {
        FineGrayTrue { params }
    }
}

impl CifModel for FineGrayTrue {
    fn n_causes(&self) -> usize {
        2
    }

    fn cif(&self, t: f64, cause: usize, w: &[f64]) -> f64 {
        fg_true_cif(&self.params, t, cause, w)
    }

    fn event_free(&self, u: f64, w: &[f64]) -> f64 {
        let z = signal_indicator(w);
        1.0 - self.params.cif_given_z(u, 1, z) - self.params.cif_given_z(u, 2, z)
    }
}

/// Marginal Aalen–Johansen estimator; ignores covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct AalenJohansen {
    jump_times: Vec<f64>,
    /// `cif[m-1][k]`: cause-m incidence right after jump k.
    cif: Vec<Vec<f64>>,
    /// All-cause survival right after each jump.
    survival: Vec<f64>,
}

impl AalenJohansen {
    pub fn fit(data: &Dataset) -> Self {
        let k_causes = data.n_causes();
        let mut order: Vec<&Observation> = data.iter().collect();
        order.sort_by(|a, b| a.time.total_cmp(&b.time));

        let mut jump_times = Vec::new();
        let mut cif = vec![Vec::new(); k_causes];
        let mut survival = Vec::new();
        let mut running = vec![0.0; k_causes];
        let mut surv = 1.0;
        let mut remaining = order.len();
        let mut counts = vec![0usize; k_causes];
        let mut k = 0;
        while k < order.len() {
            let t = order[k].time;
            counts.iter_mut().for_each(|c| *c = 0);
            let mut leaving = 0;
            while k < order.len() && order[k].time == t {
                if order[k].delta {
                    counts[order[k].cause - 1] += 1;
                }
                leaving += 1;
                k += 1;
            }
            let events: usize = counts.iter().sum();
            if events > 0 {
                let at_risk = remaining as f64;
                for (m, &d) in counts.iter().enumerate() {
                    running[m] += surv * d as f64 / at_risk;
                    cif[m].push(running[m]);
                }
                surv *= 1.0 - events as f64 / at_risk;
                jump_times.push(t);
                survival.push(surv);
            }
            remaining -= leaving;
        }
        AalenJohansen {
            jump_times,
            cif,
            survival,
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn survival_values(&self) -> &[f64] {
        &self.survival
    }

    pub fn cif_values(&self, cause: usize) -> &[f64] {
        &self.cif[cause - 1]
    }

    /// All-cause survival `P(T > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&u| u <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    /// Smallest jump time at which the all-cause distribution reaches `q`.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        self.survival
            .iter()
            .position(|&s| 1.0 - s >= q - 1e-12)
            .map(|k| self.jump_times[k])
    }

    fn step(&self, values: &[f64], k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            values[k - 1]
        }
    }

    pub fn write_curve_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "time,survival")?;
        for m in 1..=self.cif.len() {
            write!(out, ",cif_{m}")?;
        }
        writeln!(out)?;
        for k in 0..self.jump_times.len() {
            write!(out, "{},{}", self.jump_times[k], self.survival[k])?;
            for c in &self.cif {
                write!(out, ",{}", c[k])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

impl CifModel for AalenJohansen {
    fn n_causes(&self) -> usize {
        self.cif.len()
    }

    fn cif(&self, t: f64, cause: usize, _w: &[f64]) -> f64 {
        if cause == 0 || cause > self.cif.len() {
            return 0.0;
        }
        let k = self.jump_times.partition_point(|&u| u <= t);
        self.step(&self.cif[cause - 1], k)
    }

    fn cif_left(&self, t: f64, cause: usize, _w: &[f64]) -> f64 {
        if cause == 0 || cause > self.cif.len() {
            return 0.0;
        }
        let k = self.jump_times.partition_point(|&u| u < t);
        self.step(&self.cif[cause - 1], k)
    }

    fn event_free(&self, u: f64, _w: &[f64]) -> f64 {
        let k = self.jump_times.partition_point(|&v| v < u);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ds(rows: &[(f64, usize)]) -> Dataset {
        let obs = rows
            .iter()
            .map(|&(t, c)| Observation::new(t, c > 0, c, vec![]).unwrap())
            .collect();
        Dataset::new(obs, vec![], None).unwrap()
    }

    #[test]
    fn fg_limits() {
        let fg = FineGrayTrue::new(FineGrayParams::HIGH);
        let w0 = [0.9, 0.1];
        let w1 = [0.2, 0.8];
        assert_eq!(fg.cif(0.0, 1, &w0), 0.0);
        assert_eq!(fg.cif(0.0, 2, &w1), 0.0);
        for params in [FineGrayParams::HIGH, FineGrayParams::LOW, FineGrayParams::new(-2.0, 1.0, 0.9).unwrap()] {
            for w in [w0, w1] {
                let total = fg_true_cif(&params, f64::INFINITY, 1, &w)
                    + fg_true_cif(&params, f64::INFINITY, 2, &w);
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
                let big = fg_true_cif(&params, 800.0, 1, &w) + fg_true_cif(&params, 800.0, 2, &w);
                assert_abs_diff_eq!(big, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fg_matches_high_precision() {
        // 50-digit evaluation of the closed form at beta1=3, beta2=-0.5, p=0.3, Z=1, t=1.
        let w1 = [0.2, 0.8];
        assert_abs_diff_eq!(
            fg_true_cif(&FineGrayParams::HIGH, 1.0, 1, &w1),
            0.985_351_614_357_356_7,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            fg_true_cif(&FineGrayParams::HIGH, 1.0, 2, &w1),
            0.000_351_960_538_648_853_2,
            epsilon = 1e-16
        );
    }

    #[test]
    fn y_examples() {
        let fg = FineGrayTrue::new(FineGrayParams::HIGH);
        let w0 = [0.9, 0.1];
        assert_abs_diff_eq!(
            fg.conditional_incidence(0.0, 2.0, 1, &w0),
            fg.cif(2.0, 1, &w0),
            epsilon = 1e-15
        );
        assert_eq!(fg.conditional_incidence(3.0, 2.0, 1, &w0), 0.0);
        assert_abs_diff_eq!(
            fg.conditional_incidence(0.0, f64::INFINITY, 1, &w0),
            0.3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn y_degenerate_is_flagged() {
        let aj = AalenJohansen::fit(&ds(&[(1.0, 1), (2.0, 2)]));
        let r = conditional_incidence(&aj, 3.0, 4.0, 1, &[]);
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn aj_single_cause_is_ecdf() {
        let d = ds(&[(3.0, 1), (1.0, 1), (2.0, 1), (2.0, 1)]);
        let aj = AalenJohansen::fit(&d);
        assert_abs_diff_eq!(aj.cif(1.0, 1, &[]), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(aj.cif(2.5, 1, &[]), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(aj.cif(3.0, 1, &[]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(aj.cif_left(3.0, 1, &[]), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn aj_two_causes_uncensored_fractions() {
        let d = ds(&[(1.0, 1), (2.0, 2), (3.0, 1), (4.0, 2), (5.0, 2)]);
        let aj = AalenJohansen::fit(&d);
        assert_abs_diff_eq!(aj.cif(f64::INFINITY, 1, &[]), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(aj.cif(f64::INFINITY, 2, &[]), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn aj_censored_toy_table() {
        // Hand product-limit: S = 4/5, 8/15, 4/15; CIF1 = 1/5, 7/15; CIF2 = 4/15.
        let d = ds(&[(1.0, 1), (2.0, 0), (3.0, 2), (4.0, 1), (5.0, 0)]);
        let aj = AalenJohansen::fit(&d);
        assert_eq!(aj.jump_times(), &[1.0, 3.0, 4.0]);
        let s = aj.survival_values();
        assert_abs_diff_eq!(s[0], 4.0 / 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[1], 8.0 / 15.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s[2], 4.0 / 15.0, epsilon = 1e-15);
        assert_abs_diff_eq!(aj.cif(2.0, 1, &[]), 1.0 / 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(aj.cif(4.0, 1, &[]), 7.0 / 15.0, epsilon = 1e-15);
        assert_abs_diff_eq!(aj.cif(3.0, 2, &[]), 4.0 / 15.0, epsilon = 1e-15);
        for (k, &t) in aj.jump_times().iter().enumerate() {
            let total = aj.cif(t, 1, &[]) + aj.cif(t, 2, &[]) + s[k];
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
        // y_1(u=3; t=4) = P(3 <= T <= 4, M=1) / P(T >= 3) = (4/15) / (4/5).
        assert_abs_diff_eq!(aj.conditional_incidence(3.0, 4.0, 1, &[]), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(aj.event_free(3.0, &[]), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn aj_curve_export() {
        let aj = AalenJohansen::fit(&ds(&[(1.0, 1), (2.0, 2)]));
        let mut buf = Vec::new();
        aj.write_curve_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "time,survival,cif_1,cif_2\n1,0.5,0.5,0\n2,0,0.5,0.5\n"
        );
    }
}
