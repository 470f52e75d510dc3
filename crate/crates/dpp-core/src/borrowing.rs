//! Dynamic similarity weights, the gated overall weight, and expected
//! effective sample size.
//!
//! Four dynamic methods are provided. Empirical Bayes maximizes the marginal
//! likelihood of the concurrent control responses with the historical counts
//! entering unscaled. The Bayesian-P, generalized-Bhattacharyya, and
//! Jensen-Shannon methods compare the concurrent-control posterior against
//! the historical posterior with the global cap `a` applied to the
//! historical counts, each producing a similarity in [0, 1] raised to a
//! tuning power.

use crate::beta::{
    binomial_pmf, log_beta_fn, log_beta_pdf_at, prob_superiority, quant_point, BetaParams,
    QuantPoint,
};
use crate::error::{Error, Result};
use crate::gauss::{regularized_table, EXTENDED_ORDERS};

/// Historical control data: responders, total subjects, and the maximum
/// number of subjects worth of information the design may borrow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoricalControl {
    y_ch: u64,
    n_ch: u64,
    n_ch_e: u64,
}

impl HistoricalControl {
    pub fn new(y_ch: u64, n_ch: u64, n_ch_e: u64) -> Result<Self> {
        if n_ch == 0 {
            return Err(Error::domain("historical study size n_ch must be positive"));
        }
        if y_ch > n_ch {
            return Err(Error::domain(format!(
                "historical responders y_ch={y_ch} exceed n_ch={n_ch}"
            )));
        }
        if n_ch_e > n_ch {
            return Err(Error::domain(format!(
                "equivalent borrowing n_ch_e={n_ch_e} exceeds n_ch={n_ch}"
            )));
        }
        Ok(HistoricalControl { y_ch, n_ch, n_ch_e })
    }

    /// Builds from an observed rate, rounding responders to the nearest
    /// integer count.
    pub fn from_rate(p_hat_ch: f64, n_ch: u64, n_ch_e: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_hat_ch) {
            return Err(Error::domain(format!(
                "historical rate must be in [0,1], got {p_hat_ch}"
            )));
        }
        let y_ch = (p_hat_ch * n_ch as f64).round() as u64;
        HistoricalControl::new(y_ch, n_ch, n_ch_e)
    }

    pub fn y_ch(&self) -> u64 {
        self.y_ch
    }

    pub fn n_ch(&self) -> u64 {
        self.n_ch
    }

    pub fn n_ch_e(&self) -> u64 {
        self.n_ch_e
    }

    /// Observed historical response rate.
    pub fn rate(&self) -> f64 {
        self.y_ch as f64 / self.n_ch as f64
    }

    /// Global borrowing fraction a = n_ch_e / n_ch.
    pub fn global_a(&self) -> f64 {
        self.n_ch_e as f64 / self.n_ch as f64
    }
}

/// Dynamic-weight method with its tuning parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    EmpiricalBayes,
    BayesianP { eta: f64 },
    GeneralizedBc { theta: f64, eta: f64 },
    Jsd { eta: f64 },
    /// w_d identically 1: the fixed power prior special case.
    Fixed,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::EmpiricalBayes => "eb",
            Method::BayesianP { .. } => "bp",
            Method::GeneralizedBc { .. } => "gbc",
            Method::Jsd { .. } => "jsd",
            Method::Fixed => "fixed",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Method::BayesianP { eta } | Method::Jsd { eta } if !(eta > 0.0) => Err(
                Error::domain(format!("{} requires eta > 0, got {eta}", self.tag())),
            ),
            Method::GeneralizedBc { theta, eta } => {
                if !(eta > 0.0) {
                    return Err(Error::domain(format!("gbc requires eta > 0, got {eta}")));
                }
                if !(theta > 0.0 && theta <= 0.5) {
                    return Err(Error::domain(format!(
                        "gbc requires theta in (0, 0.5], got {theta}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Method plus the gate threshold and the global borrowing fraction.
///
/// `delta_max = 0` is allowed and means the gate never opens (the indicator
/// uses a strict inequality), which disables borrowing entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorrowingPolicy {
    pub method: Method,
    pub delta_max: f64,
    pub global_a: f64,
}

impl BorrowingPolicy {
    pub fn new(method: Method, delta_max: f64, global_a: f64) -> Result<Self> {
        method.validate()?;
        if delta_max.is_nan() || delta_max < 0.0 {
            return Err(Error::domain(format!(
                "delta_max must be nonnegative (or infinite), got {delta_max}"
            )));
        }
        if !(0.0..=1.0).contains(&global_a) {
            return Err(Error::domain(format!(
                "global_a must be in [0,1], got {global_a}"
            )));
        }
        Ok(BorrowingPolicy {
            method,
            delta_max,
            global_a,
        })
    }

    /// Policy with the global fraction taken from the historical control.
    pub fn from_historical(method: Method, delta_max: f64, hist: &HistoricalControl) -> Result<Self> {
        BorrowingPolicy::new(method, delta_max, hist.global_a())
    }
}

fn check_counts(y_c: u64, n_c: u64) -> Result<()> {
    if n_c == 0 {
        return Err(Error::domain("n_c must be positive"));
    }
    if y_c > n_c {
        return Err(Error::domain(format!("y_c={y_c} exceeds n_c={n_c}")));
    }
    Ok(())
}

// Log marginal likelihood of y_c under the power prior with weight w:
// the difference of two log-beta functions.
fn eb_objective(w: f64, y_c: f64, n_c: f64, y_ch: f64, n_ch: f64, prior: &BetaParams) -> f64 {
    let a0 = prior.alpha();
    let b0 = prior.beta();
    let num = log_beta_fn(a0 + y_c + w * y_ch, b0 + (n_c - y_c) + w * (n_ch - y_ch));
    let den = log_beta_fn(a0 + w * y_ch, b0 + w * (n_ch - y_ch));
    // Shapes are positive for every w in [0,1] because the prior is.
    num.unwrap() - den.unwrap()
}

// Golden-section maximization; ties push toward the larger argument so the
// result is deterministic on flat stretches.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 <= f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Empirical Bayes weight: the w_d in [0, 1] maximizing the marginal
/// likelihood of the concurrent control data, with historical counts
/// unscaled.
///
/// Maximization is a 1001-point grid scan followed by golden-section
/// refinement (tolerance 1e-10) on the bracketing cell; boundary maxima are
/// returned exactly as 0 or 1, and ties break toward the larger weight.
pub fn weight_eb(y_c: u64, n_c: u64, hist: &HistoricalControl, prior: &BetaParams) -> Result<f64> {
    check_counts(y_c, n_c)?;
    let (yc, nc) = (y_c as f64, n_c as f64);
    let (ych, nch) = (hist.y_ch as f64, hist.n_ch as f64);
    let obj = |w: f64| eb_objective(w, yc, nc, ych, nch, prior);

    let mut best_i = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..=1000usize {
        let v = obj(i as f64 / 1000.0);
        // >= keeps the larger grid point on exact ties.
        if v >= best_v {
            best_v = v;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { 0.0 } else { (best_i - 1) as f64 / 1000.0 };
    let hi = if best_i == 1000 { 1.0 } else { (best_i + 1) as f64 / 1000.0 };
    let refined = golden_max(obj, lo, hi, 1e-10);

    // Compare refinement against the exact endpoints; larger weight wins ties.
    let mut w = 0.0;
    let mut v = obj(0.0);
    for cand in [refined, 1.0] {
        let cv = obj(cand);
        if cv > v || (cv == v && cand > w) {
            v = cv;
            w = cand;
        }
    }
    Ok(w)
}

// Posterior shape pairs shared by the similarity methods: concurrent control
// posterior and the historical posterior with the global cap applied.
fn similarity_posteriors(
    y_c: u64,
    n_c: u64,
    hist: &HistoricalControl,
    prior: &BetaParams,
    global_a: f64,
) -> Result<(BetaParams, BetaParams)> {
    check_counts(y_c, n_c)?;
    if !(0.0..=1.0).contains(&global_a) {
        return Err(Error::domain(format!(
            "global_a must be in [0,1], got {global_a}"
        )));
    }
    let f_c = BetaParams::new(
        prior.alpha() + y_c as f64,
        prior.beta() + (n_c - y_c) as f64,
    )?;
    let f_ch = BetaParams::new(
        prior.alpha() + global_a * hist.y_ch as f64,
        prior.beta() + global_a * (hist.n_ch - hist.y_ch) as f64,
    )?;
    Ok((f_c, f_ch))
}

/// Bayesian-P weight: a two-sided posterior tail comparison raised to eta.
///
/// With xi1 = P(p_c >= p_ch) under independent posteriors, returns
/// [2 min(xi1, 1 - xi1)]^eta.
pub fn weight_bp(
    y_c: u64,
    n_c: u64,
    hist: &HistoricalControl,
    prior: &BetaParams,
    eta: f64,
    global_a: f64,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::domain(format!("eta must be positive, got {eta}")));
    }
    let (f_c, f_ch) = similarity_posteriors(y_c, n_c, hist, prior, global_a)?;
    let xi1 = prob_superiority(&f_c, &f_ch)?;
    let two_sided = 2.0 * xi1.min(1.0 - xi1);
    Ok(two_sided.max(0.0).powf(eta).clamp(0.0, 1.0))
}

// Integral of `integrand` against the given weighting density, evaluated on
// the quantile-transformed domain with node doubling until two successive
// Gauss-Legendre estimates agree within 1e-9. The smoothstep-substituted
// tables tame the endpoint behavior when a weighting shape sits below one,
// and quantiles arrive as log-space points so integrands remain finite even
// where the quantile itself underflows. The divergence integrands keep a
// logarithmic endpoint term after the substitution, so convergence can slow
// on strongly lopsided shape pairs; the ladder therefore runs two doublings
// past the superiority-integral one.
fn quantile_transformed_integral(
    weighting: &BetaParams,
    integrand: impl Fn(&QuantPoint) -> f64,
) -> Result<f64> {
    let lbeta = log_beta_fn(weighting.alpha(), weighting.beta())?;
    let mut history: Vec<f64> = Vec::with_capacity(EXTENDED_ORDERS.len());
    for &order in &EXTENDED_ORDERS {
        let table = regularized_table(order);
        let mut est = 0.0;
        for (&u, &w) in table.nodes.iter().zip(&table.weights) {
            est += w * integrand(&quant_point(u, weighting, lbeta)?);
        }
        if let Some(&prev) = history.last() {
            if (est - prev).abs() < 1e-9 {
                return Ok(est);
            }
        }
        history.push(est);
    }
    Err(Error::numeric(format!(
        "similarity quadrature did not stabilize: estimates by order {history:?}"
    )))
}

/// Generalized Bhattacharyya weight.
///
/// Averages the two theta-power density-ratio integrals and raises the
/// result to eta; theta = 1/2 with eta = 1 reduces to the classic
/// Bhattacharyya coefficient. The result is clamped to [0, 1].
pub fn weight_gbc(
    y_c: u64,
    n_c: u64,
    hist: &HistoricalControl,
    prior: &BetaParams,
    theta: f64,
    eta: f64,
    global_a: f64,
) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::domain(format!("theta must be in (0,1), got {theta}")));
    }
    if !(eta > 0.0) {
        return Err(Error::domain(format!("eta must be positive, got {eta}")));
    }
    let (f_c, f_ch) = similarity_posteriors(y_c, n_c, hist, prior, global_a)?;
    // The theta-power product of two beta densities is an unnormalized beta
    // density, so each ratio integral reduces to a quotient of beta
    // normalizers. No quadrature: the ratio integrands carry fractional
    // endpoint powers that defeat node doubling on lopsided shape pairs,
    // while the closed form is exact up to log-gamma rounding.
    let power_integral = |num: &BetaParams, den: &BetaParams| -> Result<f64> {
        let a = theta * num.alpha() + (1.0 - theta) * den.alpha();
        let b = theta * num.beta() + (1.0 - theta) * den.beta();
        let ln = log_beta_fn(a, b)?
            - theta * log_beta_fn(num.alpha(), num.beta())?
            - (1.0 - theta) * log_beta_fn(den.alpha(), den.beta())?;
        Ok(ln.exp())
    };
    let i1 = power_integral(&f_ch, &f_c)?;
    let i2 = power_integral(&f_c, &f_ch)?;
    Ok((0.5 * (i1 + i2)).powf(eta).clamp(0.0, 1.0))
}

/// Jensen-Shannon weight: (1 - JSD)^eta with base-2 logarithms, so the
/// divergence (and therefore the weight) lives in [0, 1].
pub fn weight_jsd(
    y_c: u64,
    n_c: u64,
    hist: &HistoricalControl,
    prior: &BetaParams,
    eta: f64,
    global_a: f64,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::domain(format!("eta must be positive, got {eta}")));
    }
    let (f_c, f_ch) = similarity_posteriors(y_c, n_c, hist, prior, global_a)?;
    let ln2 = std::f64::consts::LN_2;
    // KL(f || m) integrand on f's own quantile domain: log2 of f over the
    // even mixture. Log-space points keep both log densities finite, so the
    // stable log-add of the mixture never sees an infinity.
    let kl_term = |f: &BetaParams, g: &BetaParams| {
        let (f, g) = (*f, *g);
        move |q: &QuantPoint| {
            let lf = log_beta_pdf_at(q, &f);
            let lg = log_beta_pdf_at(q, &g);
            let hi = lf.max(lg);
            let lm = hi + ((lf - hi).exp() + (lg - hi).exp()).ln() - ln2;
            (lf - lm) / ln2
        }
    };
    let kl_c = quantile_transformed_integral(&f_c, kl_term(&f_c, &f_ch))?;
    let kl_ch = quantile_transformed_integral(&f_ch, kl_term(&f_ch, &f_c))?;
    let jsd = 0.5 * (kl_c + kl_ch);
    Ok((1.0 - jsd).clamp(0.0, 1.0).powf(eta))
}

/// Dynamic weight under the policy's method.
pub fn dynamic_weight(
    y_c: u64,
    n_c: u64,
    hist: &HistoricalControl,
    prior: &BetaParams,
    policy: &BorrowingPolicy,
) -> Result<f64> {
    match policy.method {
        Method::EmpiricalBayes => weight_eb(y_c, n_c, hist, prior),
        Method::BayesianP { eta } => weight_bp(y_c, n_c, hist, prior, eta, policy.global_a),
        Method::GeneralizedBc { theta, eta } => {
            weight_gbc(y_c, n_c, hist, prior, theta, eta, policy.global_a)
        }
        Method::Jsd { eta } => weight_jsd(y_c, n_c, hist, prior, eta, policy.global_a),
        Method::Fixed => {
            check_counts(y_c, n_c)?;
            Ok(1.0)
        }
    }
}

/// True when the observed rates are closer than the gate threshold.
/// The comparison is strictly less-than.
pub fn gate_open(p_hat_c: f64, p_hat_ch: f64, delta_max: f64) -> bool {
    (p_hat_c - p_hat_ch).abs() < delta_max
}

/// Overall weight w = a * w_d * 1{|p_hat_c - p_hat_ch| < delta_max}.
pub fn overall_weight(w_d: f64, policy: &BorrowingPolicy, p_hat_c: f64, p_hat_ch: f64) -> f64 {
    if gate_open(p_hat_c, p_hat_ch, policy.delta_max) {
        policy.global_a * w_d
    } else {
        0.0
    }
}

/// Expected effective sample size and its alternative reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EessReport {
    /// n_ch * E[w] = n_ch_e * E[w_d * gate]: subjects worth of historical
    /// information expected to be borrowed.
    pub adopted: f64,
    /// n_ch_e * E[w]: the same expectation scaled once more by the global
    /// fraction. Reported for diagnosis when published values disagree.
    pub alternative: f64,
}

/// Expected effective sample size by exact summation over the binomial
/// outcome distribution of the concurrent control arm.
pub fn eess(
    n_c: u64,
    p_c: f64,
    hist: &HistoricalControl,
    prior: &BetaParams,
    policy: &BorrowingPolicy,
) -> Result<f64> {
    Ok(eess_report(n_c, p_c, hist, prior, policy)?.adopted)
}

/// As [`eess`], returning both interpretations of the expectation.
pub fn eess_report(
    n_c: u64,
    p_c: f64,
    hist: &HistoricalControl,
    prior: &BetaParams,
    policy: &BorrowingPolicy,
) -> Result<EessReport> {
    if n_c == 0 {
        return Err(Error::domain("n_c must be positive"));
    }
    if !(0.0..=1.0).contains(&p_c) {
        return Err(Error::domain(format!("p_c must be in [0,1], got {p_c}")));
    }
    // No effective historical subjects means both readings are zero and the
    // scaled historical posterior is too degenerate for the weight methods.
    if hist.n_ch_e == 0 {
        return Ok(EessReport { adopted: 0.0, alternative: 0.0 });
    }
    let pmf = binomial_pmf(n_c, p_c);
    let p_hat_ch = hist.rate();
    let mut expectation = 0.0; // E[w_d * gate]
    for y_c in 0..=n_c {
        let p = pmf[y_c as usize];
        if p == 0.0 {
            continue;
        }
        let p_hat_c = y_c as f64 / n_c as f64;
        if !gate_open(p_hat_c, p_hat_ch, policy.delta_max) {
            continue;
        }
        expectation += dynamic_weight(y_c, n_c, hist, prior, policy)? * p;
    }
    let adopted = hist.n_ch_e as f64 * expectation;
    Ok(EessReport {
        adopted,
        alternative: policy.global_a * adopted,
    })
}
