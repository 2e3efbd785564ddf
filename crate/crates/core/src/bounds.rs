//! Closed-form constants from the particle-tree and ESCFR error analysis.
//!
//! Every calculator handles `γ = 1` through the limit of the geometric sum.
//! Probability bounds are frequently vacuous at practical sizes, so they
//! are returned both raw and clamped to `[0, 1]`.

use std::fmt::Write as _;

use crate::{Error, Result};

/// `(1 − γ^n) / (1 − γ)`, equal to `n` at `γ = 1`.
pub fn geometric_sum(gamma: f64, n: usize) -> f64 {
    if gamma == 1.0 {
        n as f64
    } else {
        (1.0 - gamma.powi(n as i32)) / (1.0 - gamma)
    }
}

/// `ε_ωπ = λ[2(1 − γ^{D+1})/(1 − γ) − 1]`.
pub fn epsilon_omega_pi(lambda: f64, gamma: f64, horizon: usize) -> f64 {
    lambda * (2.0 * geometric_sum(gamma, horizon + 1) - 1.0)
}

/// `V_max = max|R|·(1 − γ^D)/(1 − γ)`.
pub fn v_max(max_abs_reward: f64, gamma: f64, horizon: usize) -> f64 {
    max_abs_reward * geometric_sum(gamma, horizon)
}

/// `Δ_u = Δ_R·(1 − γ^D)/(1 − γ)`.
pub fn delta_u(reward_range: f64, gamma: f64, horizon: usize) -> f64 {
    reward_range * geometric_sum(gamma, horizon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KConstants {
    pub k_max: f64,
    pub k_acute: f64,
    /// `k_max ≤ 0`: the concentration bound says nothing.
    pub vacuous: bool,
}

/// `k_max = λ/(4 V_max d_∞) − 1/√C` and `k′ = min{k_max, λ/(4√2 V_max)}`.
pub fn k_constants(lambda: f64, particle_count: usize, v_max: f64, d_inf_max: f64) -> KConstants {
    let k_max = lambda / (4.0 * v_max * d_inf_max) - 1.0 / (particle_count as f64).sqrt();
    let k_acute = k_max.min(lambda / (4.0 * std::f64::consts::SQRT_2 * v_max));
    KConstants {
        k_max,
        k_acute,
        vacuous: k_max <= 0.0,
    }
}

/// `ε = (1 + √2/√p) · max_i[Δ_{u,i}(|A^i|³C)^{(D+1)/2}] / (2√T)`.
pub fn escfr_epsilon(
    p: f64,
    delta_u: &[f64],
    action_counts: &[usize],
    particle_count: usize,
    horizon: usize,
    iterations: u64,
) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("failure probability {p} is not in (0, 1)")));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be at least 1".into()));
    }
    if delta_u.len() != action_counts.len() {
        return Err(Error::InvalidArgument("one Δu per player is required".into()));
    }
    if let Some(n) = action_counts.iter().find(|&&n| n < 2) {
        return Err(Error::StipulationViolated(format!(
            "every player needs at least 2 actions, found {n}"
        )));
    }
    let exponent = (horizon as f64 + 1.0) / 2.0;
    let worst = delta_u
        .iter()
        .zip(action_counts)
        .map(|(&du, &a)| du * ((a as f64).powi(3) * particle_count as f64).powf(exponent))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((1.0 + std::f64::consts::SQRT_2 / p.sqrt()) * worst / (2.0 * (iterations as f64).sqrt()))
}

/// Number of pure joint policies counted over joint histories:
/// `Σ_{d=0}^{D} (|A|·|O|)^d`.
pub fn sigma_size(joint_actions: usize, joint_observations: usize, horizon: usize) -> f64 {
    let x = (joint_actions * joint_observations) as f64;
    (0..=horizon).map(|d| x.powi(d as i32)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    pub raw: f64,
    pub clamped: f64,
    /// The raw value fell outside `[0, 1]`.
    pub was_clamped: bool,
}

impl Probability {
    fn from_raw(raw: f64) -> Self {
        let clamped = if raw.is_nan() { 0.0 } else { raw.clamp(0.0, 1.0) };
        Self {
            raw,
            clamped,
            was_clamped: clamped != raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremProbabilities {
    /// `1 − 5(4C)^{D+1} e^{−Ck′²}`.
    pub theorem1: Probability,
    /// `1 − 5 Σ_i |Σ|(4C)^{D+1} e^{−Ck′_i²}`.
    pub theorem2: Probability,
    /// `1 − 2[p + 5|Σ|(4C)^{D+1} e^{−Ck′²}]`.
    pub final_bound: Probability,
}

/// The three success probabilities. `k′` without a player index is the
/// smallest per-player value; a non-positive `k′` makes the exponential
/// factor 1.
pub fn theorem_probabilities(
    particle_count: usize,
    horizon: usize,
    k_acute: &[f64],
    sigma_size: f64,
    p: f64,
) -> TheoremProbabilities {
    let c = particle_count as f64;
    let log_base = 5f64.ln() + (horizon as f64 + 1.0) * (4.0 * c).ln();
    let term = |k: f64| {
        let k = k.max(0.0);
        (log_base - c * k * k).exp()
    };
    let k_min = k_acute.iter().copied().fold(f64::INFINITY, f64::min);
    let t1 = term(k_min);
    let t2: f64 = k_acute.iter().map(|&k| sigma_size * term(k)).sum();
    TheoremProbabilities {
        theorem1: Probability::from_raw(1.0 - t1),
        theorem2: Probability::from_raw(1.0 - t2),
        final_bound: Probability::from_raw(1.0 - 2.0 * (p + sigma_size * t1)),
    }
}

/// `NashConv ≤ 4(ε + ε_ωπ)`.
pub fn nashconv_bound(escfr_epsilon: f64, epsilon_omega_pi: f64) -> f64 {
    4.0 * (escfr_epsilon + epsilon_omega_pi)
}

/// `M_i = Σ_{d=0}^{D} |A|^d C^{d/2}`.
pub fn m_i(actions: usize, particle_count: usize, horizon: usize) -> f64 {
    let (a, c) = (actions as f64, particle_count as f64);
    (0..=horizon).map(|d| a.powi(d as i32) * c.powf(d as f64 / 2.0)).sum()
}

/// `|A_i| = Σ_{d=0}^{D} |A|^d`.
pub fn info_set_action_count(actions: usize, horizon: usize) -> f64 {
    let a = actions as f64;
    (0..=horizon).map(|d| a.powi(d as i32)).sum()
}

/// `[|A|³C]^{(D+1)/2}`.
pub fn m_sqrt_a_closed_form(actions: usize, particle_count: usize, horizon: usize) -> f64 {
    ((actions as f64).powi(3) * particle_count as f64).powf((horizon as f64 + 1.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub lambda: f64,
    pub particle_count: usize,
    pub horizon: usize,
    pub discount: f64,
    pub d_inf_max: f64,
    pub p: f64,
    pub reward_range: Vec<f64>,
    pub max_abs_reward: Vec<f64>,
    pub action_counts: Vec<usize>,
    pub observation_counts: Vec<usize>,
    pub iterations: u64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if self.particle_count == 0 {
            return bad("particle count must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount must lie in [0, 1]");
        }
        if !(self.d_inf_max >= 1.0) {
            return bad("d_inf_max must be at least 1");
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad("p must lie in (0, 1)");
        }
        if self.reward_range.iter().any(|r| !(*r >= 0.0)) {
            return bad("reward ranges must be non-negative");
        }
        let n = self.action_counts.len();
        if n == 0 || self.reward_range.len() != n || self.max_abs_reward.len() != n || self.observation_counts.len() != n {
            return bad("per-player parameter lists must have one entry per player");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub epsilon_omega_pi: f64,
    pub v_max: Vec<f64>,
    pub delta_u: Vec<f64>,
    pub k: Vec<KConstants>,
    pub sigma_size: f64,
    /// `Err` carries the reason the ESCFR term is unavailable.
    pub escfr_epsilon: std::result::Result<f64, String>,
    pub probabilities: TheoremProbabilities,
    pub nashconv_bound: Option<f64>,
    pub m_sqrt_a: Vec<(f64, f64)>,
}

pub fn bound_report(params: &BoundParams) -> Result<BoundReport> {
    params.validate()?;
    let (g, d) = (params.discount, params.horizon);
    let v: Vec<f64> = params.max_abs_reward.iter().map(|&r| v_max(r, g, d)).collect();
    let du: Vec<f64> = params.reward_range.iter().map(|&r| delta_u(r, g, d)).collect();
    let k: Vec<KConstants> = v
        .iter()
        .map(|&vm| k_constants(params.lambda, params.particle_count, vm, params.d_inf_max))
        .collect();
    let joint_a: usize = params.action_counts.iter().product();
    let joint_o: usize = params.observation_counts.iter().product();
    let sigma = sigma_size(joint_a, joint_o, d);
    let k_acute: Vec<f64> = k.iter().map(|k| k.k_acute).collect();
    let eps_wp = epsilon_omega_pi(params.lambda, g, d);
    let eps = escfr_epsilon(params.p, &du, &params.action_counts, params.particle_count, d, params.iterations)
        .map_err(|e| e.to_string());
    Ok(BoundReport {
        epsilon_omega_pi: eps_wp,
        v_max: v,
        delta_u: du,
        k,
        sigma_size: sigma,
        nashconv_bound: eps.as_ref().ok().map(|&e| nashconv_bound(e, eps_wp)),
        escfr_epsilon: eps,
        probabilities: theorem_probabilities(params.particle_count, d, &k_acute, sigma, params.p),
        m_sqrt_a: params
            .action_counts
            .iter()
            .map(|&a| {
                (
                    m_i(a, params.particle_count, d) * info_set_action_count(a, d).sqrt(),
                    m_sqrt_a_closed_form(a, params.particle_count, d),
                )
            })
            .collect(),
    })
}

impl BoundReport {
    /// Labelled two-column table, one constant per line.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let mut row = |label: String, value: String| {
            let _ = writeln!(out, "{label:<28}{value}");
        };
        row("epsilon_omega_pi".into(), fmt(self.epsilon_omega_pi));
        for (i, v) in self.v_max.iter().enumerate() {
            row(format!("v_max[{i}]"), fmt(*v));
        }
        for (i, v) in self.delta_u.iter().enumerate() {
            row(format!("delta_u[{i}]"), fmt(*v));
        }
        for (i, k) in self.k.iter().enumerate() {
            let flag = if k.vacuous { " (vacuous)" } else { "" };
            row(format!("k_max[{i}]"), format!("{}{flag}", fmt(k.k_max)));
            row(format!("k_acute[{i}]"), fmt(k.k_acute));
        }
        row("sigma_size".into(), fmt(self.sigma_size));
        match &self.escfr_epsilon {
            Ok(e) => row("escfr_epsilon".into(), fmt(*e)),
            Err(m) => row("escfr_epsilon".into(), format!("unavailable: {m}")),
        }
        let probs = [
            ("theorem1_probability", self.probabilities.theorem1),
            ("theorem2_probability", self.probabilities.theorem2),
            ("final_probability", self.probabilities.final_bound),
        ];
        for (label, p) in probs {
            let flag = if p.was_clamped { " (clamped)" } else { "" };
            row(format!("{label}_raw"), fmt(p.raw));
            row(label.to_string(), format!("{}{flag}", fmt(p.clamped)));
        }
        match self.nashconv_bound {
            Some(b) => row("nashconv_bound".into(), fmt(b)),
            None => row("nashconv_bound".into(), "unavailable".into()),
        }
        for (i, (m, c)) in self.m_sqrt_a.iter().enumerate() {
            row(format!("m_sqrt_a[{i}]"), fmt(*m));
            row(format!("m_sqrt_a_bound[{i}]"), fmt(*c));
        }
        out
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.10e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn epsilon_omega_pi_cases() {
        assert_eq!(epsilon_omega_pi(0.3, 0.0, 7), 0.3);
        assert_eq!(epsilon_omega_pi(0.0, 0.95, 5), 0.0);
        assert_relative_eq!(epsilon_omega_pi(0.1, 1.0, 5), 0.1 * 11.0);
    }

    #[test]
    fn geometric_limits() {
        assert_eq!(delta_u(1.0, 1.0, 5), 5.0);
        assert_eq!(v_max(2.0, 0.0, 5), 2.0);
    }

    #[test]
    fn k_vacuous_example() {
        let k = k_constants(0.1, 100, 1.0, 1.0);
        assert_relative_eq!(k.k_max, -0.075, epsilon = 1e-15);
        assert!(k.vacuous);
        assert!(k.k_acute <= k.k_max);
    }

    #[test]
    fn escfr_epsilon_example() {
        let e = escfr_epsilon(0.5, &[1.0], &[2], 10, 1, 100).unwrap();
        assert_relative_eq!(e, 12.0, epsilon = 1e-12);
        assert!(escfr_epsilon(2.0, &[1.0], &[2], 10, 1, 100).is_err());
        assert!(matches!(
            escfr_epsilon(0.5, &[1.0, 1.0], &[2, 1], 10, 1, 100),
            Err(Error::StipulationViolated(_))
        ));
    }

    #[test]
    fn zero_k_is_vacuous() {
        let p = theorem_probabilities(10, 1, &[0.0, 0.0], 3.0, 0.1);
        assert!(p.theorem1.raw <= 0.0);
        assert_eq!(p.theorem1.clamped, 0.0);
        assert!(p.theorem1.was_clamped);
    }

    #[test]
    fn report_table_lists_constants() {
        let params = BoundParams {
            lambda: 0.1,
            particle_count: 100,
            horizon: 5,
            discount: 0.95,
            d_inf_max: 1.0,
            p: 0.1,
            reward_range: vec![1.0, 1.0],
            max_abs_reward: vec![1.0, 1.0],
            action_counts: vec![6, 6],
            observation_counts: vec![4, 4],
            iterations: 1000,
        };
        let r = bound_report(&params).unwrap();
        let t = r.table();
        for label in ["epsilon_omega_pi", "k_max[0]", "escfr_epsilon", "final_probability", "nashconv_bound"] {
            assert!(t.contains(label), "{label}");
        }
        let mut bad = params.clone();
        bad.d_inf_max = 0.5;
        assert!(bound_report(&bad).is_err());
    }
}
