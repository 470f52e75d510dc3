//! Trial simulation, threshold calibration, and operating characteristics.
//!
//! Everything downstream of the data model reduces to functions of the
//! outcome pair (Y_c, Y_t), so a design is "compiled" once into per-outcome
//! tables (weights, posterior-mean differences, superiority probabilities)
//! and both evaluation modes reuse them:
//!
//! * exact mode sums the tables against the joint binomial distribution,
//! * Monte Carlo mode samples outcomes into a per-cell count histogram.
//!
//! Monte Carlo draws use one counter-based substream per trial, so results
//! are bit-identical for a fixed seed regardless of worker count.

use crate::beta::{binomial_pmf, superiority_with_cache, BetaParams, QuantileCache};
use crate::borrowing::{dynamic_weight, gate_open, overall_weight, BorrowingPolicy, HistoricalControl};
use crate::error::{Error, Result};
use crate::posterior::{hybrid_posterior, pmd, treatment_posterior, TrialOutcome};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use std::fmt;

/// Complete specification of a two-arm design with historical borrowing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec {
    n_c: u64,
    n_t: u64,
    prior_c: BetaParams,
    prior_t: BetaParams,
    hist: HistoricalControl,
    policy: BorrowingPolicy,
    alpha: f64,
}

impl DesignSpec {
    pub fn new(
        n_c: u64,
        n_t: u64,
        prior_c: BetaParams,
        prior_t: BetaParams,
        hist: HistoricalControl,
        policy: BorrowingPolicy,
        alpha: f64,
    ) -> Result<Self> {
        if n_c == 0 || n_t == 0 {
            return Err(Error::domain("arm sizes must be positive"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must be in (0,1), got {alpha}")));
        }
        if (policy.global_a - hist.global_a()).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "policy.global_a = {} disagrees with n_ch_e/n_ch = {}",
                policy.global_a,
                hist.global_a()
            )));
        }
        Ok(DesignSpec {
            n_c,
            n_t,
            prior_c,
            prior_t,
            hist,
            policy,
            alpha,
        })
    }

    pub fn n_c(&self) -> u64 {
        self.n_c
    }

    pub fn n_t(&self) -> u64 {
        self.n_t
    }

    pub fn prior_c(&self) -> &BetaParams {
        &self.prior_c
    }

    pub fn prior_t(&self) -> &BetaParams {
        &self.prior_t
    }

    pub fn hist(&self) -> &HistoricalControl {
        &self.hist
    }

    pub fn policy(&self) -> &BorrowingPolicy {
        &self.policy
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// True response rates for one simulated world, with the observed
/// historical rate carried along for record-keeping (the historical counts
/// themselves stay fixed in the design).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub p_c: f64,
    pub p_t: f64,
    pub p_ch_observed: f64,
}

impl Scenario {
    pub fn new(p_c: f64, p_t: f64, p_ch_observed: f64) -> Result<Self> {
        for (name, v) in [("p_c", p_c), ("p_t", p_t), ("p_ch_observed", p_ch_observed)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must be in [0,1], got {v}")));
            }
        }
        Ok(Scenario {
            p_c,
            p_t,
            p_ch_observed,
        })
    }
}

/// Evaluation mode: exact enumeration over the outcome grid, or Monte Carlo
/// with a reproducible seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMethod {
    Exact,
    MonteCarlo { n_sims: u64, seed: u64 },
}

/// Number of simulated trials behind a result, or the exact-enumeration tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimCount {
    Exact,
    Simulated(u64),
}

impl fmt::Display for SimCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimCount::Exact => write!(f, "exact"),
            SimCount::Simulated(n) => write!(f, "{n}"),
        }
    }
}

/// Operating characteristics at one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcResult {
    pub tau: f64,
    /// Rejection probability at the scenario: type I error when p_t = p_c,
    /// power when p_t > p_c.
    pub type_metric: f64,
    pub mean_pmd: f64,
    pub sd_pmd: f64,
    /// P(|posterior mean difference| > eps).
    pub xi_eps: f64,
    /// Expected effective historical sample size.
    pub eess: f64,
    pub n_sims: SimCount,
    /// Monte Carlo standard error of `type_metric`; zero in exact mode.
    pub mc_se: f64,
}

// Inverse-CDF binomial sampler over a precomputed cumulative table.
struct BinomialSampler {
    cdf: Vec<f64>,
}

impl BinomialSampler {
    fn new(n: u64, p: f64) -> Self {
        let mut cdf = binomial_pmf(n, p);
        let mut acc = 0.0;
        for c in cdf.iter_mut() {
            acc += *c;
            *c = acc;
        }
        // Exact upper endpoint so a unit draw of 1.0 maps to y = n.
        *cdf.last_mut().unwrap() = 1.0;
        BinomialSampler { cdf }
    }

    // u must lie in (0, 1]; returns the smallest y with CDF(y) >= u.
    fn sample(&self, u: f64) -> u64 {
        self.cdf.partition_point(|&c| c < u) as u64
    }
}

// Uniform draw on (0, 1]: zero is excluded so degenerate samplers behave
// exactly, and 1.0 is reachable and handled by the exact CDF endpoint.
fn unit_open_low(rng: &mut impl RngCore) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    ((rng.next_u64() >> 11) + 1) as f64 * SCALE
}

/// Draws one trial outcome: Y_c ~ Binomial(n_c, p_c) then
/// Y_t ~ Binomial(n_t, p_t), independent, in that order on the stream.
pub fn simulate_outcome(
    rng: &mut impl RngCore,
    design: &DesignSpec,
    scenario: &Scenario,
) -> TrialOutcome {
    let y_c = BinomialSampler::new(design.n_c, scenario.p_c).sample(unit_open_low(rng));
    let y_t = BinomialSampler::new(design.n_t, scenario.p_t).sample(unit_open_low(rng));
    TrialOutcome::new(y_c, design.n_c, y_t, design.n_t)
        .expect("sampled responders are bounded by the arm sizes")
}

// Trials per parallel work item; fixed so the partition (and therefore the
// result) is independent of thread count.
const MC_BLOCK: u64 = 4096;
// Substream layout: high bits carry the scenario index, low 40 bits the
// trial index.
const TRIAL_BITS: u32 = 40;

/// A design compiled into per-outcome tables.
///
/// Construction does the expensive work once: dynamic weights and
/// posterior-mean differences per Y_c, and the superiority probability on
/// the full (Y_c, Y_t) grid. Calibration and scenario evaluation are then
/// cheap sums over these tables, which is what makes exhaustive design
/// search affordable.
pub struct DesignEvaluator {
    design: DesignSpec,
    // Indexed by y_c.
    w_dynamic: Vec<f64>,
    w_overall: Vec<f64>,
    wd_gated: Vec<f64>,
    pmd_by_yc: Vec<f64>,
    // Indexed by y_t * (n_c + 1) + y_c.
    post: Vec<f64>,
}

impl DesignEvaluator {
    pub fn new(design: &DesignSpec) -> Result<Self> {
        let nc = design.n_c as usize;
        let nt = design.n_t as usize;
        let p_hat_ch = design.hist.rate();

        let mut w_dynamic = Vec::with_capacity(nc + 1);
        let mut w_overall = Vec::with_capacity(nc + 1);
        let mut wd_gated = Vec::with_capacity(nc + 1);
        let mut pmd_by_yc = Vec::with_capacity(nc + 1);
        let mut control = Vec::with_capacity(nc + 1);
        for y_c in 0..=design.n_c {
            let outcome = TrialOutcome::new(y_c, design.n_c, 0, design.n_t)?;
            // With a zero global fraction every weight lands at zero and the
            // scaled historical posterior collapses to the bare hyperprior,
            // which the divergence methods cannot integrate against.
            let wd = if design.policy.global_a == 0.0 {
                0.0
            } else {
                dynamic_weight(y_c, design.n_c, &design.hist, &design.prior_c, &design.policy)?
            };
            let p_hat_c = y_c as f64 / design.n_c as f64;
            let w = overall_weight(wd, &design.policy, p_hat_c, p_hat_ch);
            w_dynamic.push(wd);
            w_overall.push(w);
            wd_gated.push(if gate_open(p_hat_c, p_hat_ch, design.policy.delta_max) {
                wd
            } else {
                0.0
            });
            pmd_by_yc.push(pmd(&outcome, &design.hist, &design.prior_c, w)?);
            control.push(hybrid_posterior(&outcome, &design.hist, &design.prior_c, w)?);
        }

        // One treatment-quantile cache per row, shared across all y_c cells.
        let rows: Vec<Vec<f64>> = (0..=nt)
            .into_par_iter()
            .map(|y_t| -> Result<Vec<f64>> {
                let outcome = TrialOutcome::new(0, design.n_c, y_t as u64, design.n_t)?;
                let treat = treatment_posterior(&outcome, &design.prior_t)?;
                let mut cache = QuantileCache::new(treat);
                let mut row = Vec::with_capacity(nc + 1);
                for params in &control {
                    row.push(superiority_with_cache(&mut cache, params)?);
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut post = Vec::with_capacity((nc + 1) * (nt + 1));
        for row in rows {
            post.extend(row);
        }

        Ok(DesignEvaluator {
            design: *design,
            w_dynamic,
            w_overall,
            wd_gated,
            pmd_by_yc,
            post,
        })
    }

    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    /// Dynamic weight w_d at an observed control count.
    pub fn dynamic_weight_at(&self, y_c: u64) -> f64 {
        self.w_dynamic[y_c as usize]
    }

    /// Overall weight w (dynamic, gated, globally capped) at an observed
    /// control count.
    pub fn overall_weight_at(&self, y_c: u64) -> f64 {
        self.w_overall[y_c as usize]
    }

    /// Posterior probability P(p_t > p_c | Y_c, Y_t) under the full
    /// borrowing chain; identical to what `decide` computes cell by cell.
    pub fn post_prob(&self, y_c: u64, y_t: u64) -> f64 {
        self.post[y_t as usize * (self.design.n_c as usize + 1) + y_c as usize]
    }

    fn mc_histogram(&self, p_c: f64, p_t: f64, n_sims: u64, seed: u64, salt: u64) -> Result<Vec<u64>> {
        if n_sims == 0 {
            return Err(Error::domain("n_sims must be positive"));
        }
        if n_sims >= 1u64 << TRIAL_BITS {
            return Err(Error::domain(format!(
                "n_sims must be below 2^{TRIAL_BITS}, got {n_sims}"
            )));
        }
        let nc = self.design.n_c as usize;
        let cells = (nc + 1) * (self.design.n_t as usize + 1);
        let sampler_c = BinomialSampler::new(self.design.n_c, p_c);
        let sampler_t = BinomialSampler::new(self.design.n_t, p_t);
        let base = ChaCha8Rng::seed_from_u64(seed);
        let blocks = n_sims.div_ceil(MC_BLOCK);
        let counts = (0..blocks)
            .into_par_iter()
            .map(|block| {
                let mut local = vec![0u64; cells];
                let mut rng = base.clone();
                let lo = block * MC_BLOCK;
                let hi = (lo + MC_BLOCK).min(n_sims);
                for trial in lo..hi {
                    rng.set_stream((salt << TRIAL_BITS) | trial);
                    rng.set_word_pos(0);
                    let y_c = sampler_c.sample(unit_open_low(&mut rng));
                    let y_t = sampler_t.sample(unit_open_low(&mut rng));
                    local[y_t as usize * (nc + 1) + y_c as usize] += 1;
                }
                local
            })
            .reduce(
                || vec![0u64; cells],
                |mut acc, local| {
                    for (a, b) in acc.iter_mut().zip(local) {
                        *a += b;
                    }
                    acc
                },
            );
        Ok(counts)
    }

    /// Calibrates the significance threshold at the null point
    /// p_c = p_t = p_null.
    ///
    /// Exact mode enumerates the joint outcome distribution and returns the
    /// smallest distinct posterior-probability value v with
    /// P(post_prob > v) <= alpha, so the null rejection rate is controlled
    /// exactly. Monte Carlo mode returns the order statistic at rank
    /// ceil((1 - alpha) * n_sims) of the sampled posterior probabilities.
    pub fn calibrate(&self, p_null: f64, method: EvalMethod) -> Result<f64> {
        if !(p_null > 0.0 && p_null < 1.0) {
            return Err(Error::domain(format!(
                "calibration requires p_null strictly inside (0,1), got {p_null}"
            )));
        }
        let alpha = self.design.alpha;
        let nc = self.design.n_c as usize;
        match method {
            EvalMethod::Exact => {
                let pmf_c = binomial_pmf(self.design.n_c, p_null);
                let pmf_t = binomial_pmf(self.design.n_t, p_null);
                let mut cells: Vec<(f64, f64)> = Vec::with_capacity(self.post.len());
                for (idx, &v) in self.post.iter().enumerate() {
                    cells.push((v, pmf_t[idx / (nc + 1)] * pmf_c[idx % (nc + 1)]));
                }
                cells.sort_by(|a, b| b.0.total_cmp(&a.0));
                let mut mass_above = 0.0;
                let mut tau = f64::NAN;
                let mut i = 0;
                while i < cells.len() {
                    let v = cells[i].0;
                    let mut group = 0.0;
                    while i < cells.len() && cells[i].0 == v {
                        group += cells[i].1;
                        i += 1;
                    }
                    if mass_above <= alpha {
                        tau = v;
                    } else {
                        break;
                    }
                    mass_above += group;
                }
                Ok(tau)
            }
            EvalMethod::MonteCarlo { n_sims, seed } => {
                let counts = self.mc_histogram(p_null, p_null, n_sims, seed, 0)?;
                let mut vals: Vec<(f64, u64)> = self
                    .post
                    .iter()
                    .zip(&counts)
                    .filter(|(_, &c)| c > 0)
                    .map(|(&v, &c)| (v, c))
                    .collect();
                vals.sort_by(|a, b| a.0.total_cmp(&b.0));
                let rank = ((1.0 - alpha) * n_sims as f64).ceil() as u64;
                let mut cum = 0u64;
                for (v, c) in vals {
                    cum += c;
                    if cum >= rank {
                        return Ok(v);
                    }
                }
                unreachable!("rank is at most the number of simulated trials")
            }
        }
    }

    fn oc_with_salt(
        &self,
        scenario: &Scenario,
        tau: f64,
        method: EvalMethod,
        eps: f64,
        salt: u64,
    ) -> Result<OcResult> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::domain(format!("tau must be in (0,1), got {tau}")));
        }
        if !(eps >= 0.0) {
            return Err(Error::domain(format!("eps must be nonnegative, got {eps}")));
        }
        let nc = self.design.n_c as usize;
        let n_ch_e = self.design.hist.n_ch_e() as f64;
        match method {
            EvalMethod::Exact => {
                let pmf_c = binomial_pmf(self.design.n_c, scenario.p_c);
                let pmf_t = binomial_pmf(self.design.n_t, scenario.p_t);
                let mut reject = 0.0;
                for (idx, &v) in self.post.iter().enumerate() {
                    if v > tau {
                        reject += pmf_t[idx / (nc + 1)] * pmf_c[idx % (nc + 1)];
                    }
                }
                let mut mean = 0.0;
                let mut second = 0.0;
                let mut xi = 0.0;
                let mut borrow = 0.0;
                for y_c in 0..=nc {
                    let p = pmf_c[y_c];
                    let d = self.pmd_by_yc[y_c];
                    mean += p * d;
                    second += p * d * d;
                    if d.abs() > eps {
                        xi += p;
                    }
                    borrow += p * self.wd_gated[y_c];
                }
                Ok(OcResult {
                    tau,
                    type_metric: reject.clamp(0.0, 1.0),
                    mean_pmd: mean,
                    sd_pmd: (second - mean * mean).max(0.0).sqrt(),
                    xi_eps: xi.clamp(0.0, 1.0),
                    eess: n_ch_e * borrow,
                    n_sims: SimCount::Exact,
                    mc_se: 0.0,
                })
            }
            EvalMethod::MonteCarlo { n_sims, seed } => {
                let counts = self.mc_histogram(scenario.p_c, scenario.p_t, n_sims, seed, salt)?;
                let n = n_sims as f64;
                let mut reject = 0u64;
                let mut row = vec![0u64; nc + 1];
                for (idx, &c) in counts.iter().enumerate() {
                    if c == 0 {
                        continue;
                    }
                    row[idx % (nc + 1)] += c;
                    if self.post[idx] > tau {
                        reject += c;
                    }
                }
                let mut mean = 0.0;
                let mut second = 0.0;
                let mut xi = 0u64;
                let mut borrow = 0.0;
                for y_c in 0..=nc {
                    let c = row[y_c];
                    if c == 0 {
                        continue;
                    }
                    let d = self.pmd_by_yc[y_c];
                    mean += c as f64 * d;
                    second += c as f64 * d * d;
                    if d.abs() > eps {
                        xi += c;
                    }
                    borrow += c as f64 * self.wd_gated[y_c];
                }
                mean /= n;
                second /= n;
                let rate = reject as f64 / n;
                Ok(OcResult {
                    tau,
                    type_metric: rate,
                    mean_pmd: mean,
                    sd_pmd: (second - mean * mean).max(0.0).sqrt(),
                    xi_eps: xi as f64 / n,
                    eess: n_ch_e * borrow / n,
                    n_sims: SimCount::Simulated(n_sims),
                    mc_se: (rate * (1.0 - rate) / n).sqrt(),
                })
            }
        }
    }

    /// Operating characteristics at one scenario under a fixed threshold.
    pub fn operating_characteristics(
        &self,
        scenario: &Scenario,
        tau: f64,
        method: EvalMethod,
        eps: f64,
    ) -> Result<OcResult> {
        self.oc_with_salt(scenario, tau, method, eps, 0)
    }

    /// One result per scenario under a single shared threshold. In Monte
    /// Carlo mode each scenario gets its own substream family, so the sweep
    /// is deterministic for a fixed seed and independent of evaluation
    /// order.
    pub fn oc_sweep(
        &self,
        scenarios: &[Scenario],
        tau: f64,
        method: EvalMethod,
        eps: f64,
    ) -> Result<Vec<OcResult>> {
        if scenarios.is_empty() {
            return Err(Error::domain("scenario list must be non-empty"));
        }
        scenarios
            .iter()
            .enumerate()
            .map(|(i, s)| self.oc_with_salt(s, tau, method, eps, i as u64))
            .collect()
    }
}

/// Calibrates the threshold for a design; see [`DesignEvaluator::calibrate`].
pub fn calibrate_tau(design: &DesignSpec, p_null: f64, method: EvalMethod) -> Result<f64> {
    DesignEvaluator::new(design)?.calibrate(p_null, method)
}

/// One-shot operating characteristics; compiles the design and evaluates a
/// single scenario. Use [`DesignEvaluator`] directly to amortize the
/// compilation across calls.
pub fn operating_characteristics(
    design: &DesignSpec,
    scenario: &Scenario,
    tau: f64,
    method: EvalMethod,
    eps: f64,
) -> Result<OcResult> {
    DesignEvaluator::new(design)?.operating_characteristics(scenario, tau, method, eps)
}

/// One-shot sweep; see [`DesignEvaluator::oc_sweep`].
pub fn oc_sweep(
    design: &DesignSpec,
    scenarios: &[Scenario],
    tau: f64,
    method: EvalMethod,
    eps: f64,
) -> Result<Vec<OcResult>> {
    DesignEvaluator::new(design)?.oc_sweep(scenarios, tau, method, eps)
}
