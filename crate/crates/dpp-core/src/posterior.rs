//! Hybrid control posterior, treatment posterior, posterior-mean difference,
//! and the superiority decision.

use crate::beta::{prob_superiority, BetaParams};
use crate::borrowing::{dynamic_weight, overall_weight, BorrowingPolicy, HistoricalControl};
use crate::error::{Error, Result};

/// Observed responder counts for both concurrent arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    y_c: u64,
    n_c: u64,
    y_t: u64,
    n_t: u64,
}

impl TrialOutcome {
    pub fn new(y_c: u64, n_c: u64, y_t: u64, n_t: u64) -> Result<Self> {
        if n_c == 0 || n_t == 0 {
            return Err(Error::domain("arm sizes must be positive"));
        }
        if y_c > n_c || y_t > n_t {
            return Err(Error::domain(format!(
                "responders exceed arm size: y_c={y_c}/{n_c}, y_t={y_t}/{n_t}"
            )));
        }
        Ok(TrialOutcome { y_c, n_c, y_t, n_t })
    }

    pub fn y_c(&self) -> u64 {
        self.y_c
    }

    pub fn n_c(&self) -> u64 {
        self.n_c
    }

    pub fn y_t(&self) -> u64 {
        self.y_t
    }

    pub fn n_t(&self) -> u64 {
        self.n_t
    }

    /// Observed concurrent-control response rate.
    pub fn rate_c(&self) -> f64 {
        self.y_c as f64 / self.n_c as f64
    }
}

/// Both arm posteriors together with the weight realized when they were
/// built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPair {
    pub control: BetaParams,
    pub treatment: BetaParams,
    pub weight_used: f64,
}

/// Decision summary: strict comparison of the posterior superiority
/// probability against the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub significant: bool,
    pub post_prob: f64,
    pub weight_used: f64,
}

fn check_weight(w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::domain(format!("weight must be in [0,1], got {w}")));
    }
    Ok(())
}

/// Hybrid control posterior
/// Beta(a0c + Y_c + w Y_ch, b0c + (n_c - Y_c) + w (n_ch - Y_ch)).
pub fn hybrid_posterior(
    outcome: &TrialOutcome,
    hist: &HistoricalControl,
    prior_c: &BetaParams,
    w: f64,
) -> Result<BetaParams> {
    check_weight(w)?;
    BetaParams::new(
        prior_c.alpha() + outcome.y_c as f64 + w * hist.y_ch() as f64,
        prior_c.beta() + (outcome.n_c - outcome.y_c) as f64
            + w * (hist.n_ch() - hist.y_ch()) as f64,
    )
}

/// Treatment posterior Beta(a0t + Y_t, b0t + (n_t - Y_t)).
pub fn treatment_posterior(outcome: &TrialOutcome, prior_t: &BetaParams) -> Result<BetaParams> {
    BetaParams::new(
        prior_t.alpha() + outcome.y_t as f64,
        prior_t.beta() + (outcome.n_t - outcome.y_t) as f64,
    )
}

/// Mean of the hybrid control posterior at borrowing weight `a`:
/// (a0c + Y_c + a Y_ch) / (a0c + b0c + n_c + a n_ch).
pub fn posterior_mean_hybrid(
    outcome: &TrialOutcome,
    hist: &HistoricalControl,
    prior_c: &BetaParams,
    a: f64,
) -> Result<f64> {
    check_weight(a)?;
    Ok(
        (prior_c.alpha() + outcome.y_c as f64 + a * hist.y_ch() as f64)
            / (prior_c.alpha() + prior_c.beta() + outcome.n_c as f64 + a * hist.n_ch() as f64),
    )
}

/// Posterior-mean difference d = mu - mu_tilde: the hybrid mean at the
/// realized weight minus the mean with no borrowing. Zero exactly when
/// `w_effective` is zero.
pub fn pmd(
    outcome: &TrialOutcome,
    hist: &HistoricalControl,
    prior_c: &BetaParams,
    w_effective: f64,
) -> Result<f64> {
    check_weight(w_effective)?;
    if w_effective == 0.0 {
        return Ok(0.0);
    }
    let mu = posterior_mean_hybrid(outcome, hist, prior_c, w_effective)?;
    let mu_tilde = posterior_mean_hybrid(outcome, hist, prior_c, 0.0)?;
    Ok(mu - mu_tilde)
}

/// Builds both posteriors under the policy's full weight chain
/// (dynamic method, then gate, then global fraction).
pub fn hybrid_pair(
    outcome: &TrialOutcome,
    hist: &HistoricalControl,
    prior_c: &BetaParams,
    prior_t: &BetaParams,
    policy: &BorrowingPolicy,
) -> Result<PosteriorPair> {
    // A shut gate or a zero global fraction multiplies any dynamic weight
    // away, so the similarity computation is skipped: its value cannot
    // matter, and with a zero fraction the scaled historical posterior
    // degenerates to the bare hyperprior where the divergence quadratures
    // have nothing meaningful to resolve.
    let w = if policy.global_a == 0.0
        || !crate::borrowing::gate_open(outcome.rate_c(), hist.rate(), policy.delta_max)
    {
        0.0
    } else {
        let w_d = dynamic_weight(outcome.y_c, outcome.n_c, hist, prior_c, policy)?;
        overall_weight(w_d, policy, outcome.rate_c(), hist.rate())
    };
    Ok(PosteriorPair {
        control: hybrid_posterior(outcome, hist, prior_c, w)?,
        treatment: treatment_posterior(outcome, prior_t)?,
        weight_used: w,
    })
}

/// Full decision: computes the realized weight, builds both posteriors,
/// evaluates post_prob = P(p_t > p_c | data), and declares significance
/// when post_prob exceeds `tau` strictly.
pub fn decide(
    outcome: &TrialOutcome,
    hist: &HistoricalControl,
    prior_c: &BetaParams,
    prior_t: &BetaParams,
    policy: &BorrowingPolicy,
    tau: f64,
) -> Result<Decision> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("tau must be in (0,1), got {tau}")));
    }
    let pair = hybrid_pair(outcome, hist, prior_c, prior_t, policy)?;
    let post_prob = prob_superiority(&pair.treatment, &pair.control)?;
    Ok(Decision {
        significant: post_prob > tau,
        post_prob,
        weight_used: pair.weight_used,
    })
}
