//! Beta-distribution special functions and the superiority integral.
//!
//! Everything here is plain `f64` arithmetic in log space where it matters:
//! log-gamma via the Lanczos series, the regularized incomplete beta via
//! Lentz's continued fraction with a symmetry switch at the mean, quantiles
//! by bracketed Newton with bisection fallback, and P(T > C) by
//! Gauss-Legendre quadrature on the quantile transform with node doubling.

use crate::error::{Error, Result};
use crate::gauss::{regularized_table, GL_ORDERS};

/// Shape pair (alpha, beta) of a beta distribution.
///
/// Invariant: both shapes strictly positive, so the mean is in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::domain(format!("beta must be positive, got {beta}")));
        }
        Ok(BetaParams { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// The reflected distribution of 1 - X.
    pub fn swap(&self) -> Self {
        BetaParams {
            alpha: self.beta,
            beta: self.alpha,
        }
    }
}

// Lanczos approximation, g = 7, 9 coefficients. Relative error below 1e-13
// over the positive reals once the z < 0.5 recurrence is applied.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for z > 0.
pub(crate) fn ln_gamma(z: f64) -> f64 {
    if z < 0.5 {
        // Recurrence keeps the series on its accurate range without the
        // reflection formula's sine term.
        return ln_gamma(z + 1.0) - z.ln();
    }
    let x = z - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// ln B(a, b) = ln Gamma(a) + ln Gamma(b) - ln Gamma(a+b).
///
/// Finite for all positive shapes up to around 1e7.
pub fn log_beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(format!(
            "log_beta_fn requires positive shapes, got ({a}, {b})"
        )));
    }
    Ok(ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

/// Beta density at x.
///
/// Computed in log space then exponentiated. For shapes below 1 the density
/// is unbounded near the endpoints; integrate through the quantile transform
/// rather than sampling endpoint values.
pub fn beta_pdf(x: f64, p: &BetaParams) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::domain(format!("beta_pdf requires x in (0,1), got {x}")));
    }
    Ok(log_beta_pdf(x, p).exp())
}

/// Log density with the (1-x) term evaluated as ln_1p(-x) for precision.
pub(crate) fn log_beta_pdf(x: f64, p: &BetaParams) -> f64 {
    (p.alpha - 1.0) * x.ln() + (p.beta - 1.0) * (-x).ln_1p()
        - (ln_gamma(p.alpha) + ln_gamma(p.beta) - ln_gamma(p.alpha + p.beta))
}

const CF_MAX_ITER: usize = 500;
const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;

// Lentz's continued fraction for the incomplete beta, valid (and fast)
// for x at or below the distribution mean after the symmetry switch.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;
        // Even step.
        let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            return Ok(h);
        }
    }
    Err(Error::numeric(format!(
        "incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )))
}

fn cdf_unchecked(x: f64, a: f64, b: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    let front = ln_front.exp();
    // Symmetry switch at (a+1)/(a+b+2) keeps the continued fraction on the
    // side where it converges quickly; the mean is not a safe pivot when one
    // shape is far below one.
    if x <= (a + 1.0) / (a + b + 2.0) {
        Ok((front * beta_cf(a, b, x)? / a).clamp(0.0, 1.0))
    } else {
        Ok((1.0 - front * beta_cf(b, a, 1.0 - x)? / b).clamp(0.0, 1.0))
    }
}

/// Regularized incomplete beta I_x(alpha, beta); absolute error below 1e-12.
pub fn beta_cdf(x: f64, p: &BetaParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("beta_cdf requires x in [0,1], got {x}")));
    }
    cdf_unchecked(x, p.alpha, p.beta)
}

/// Largest f64 strictly below 1.0; quantiles are clamped into
/// [MIN_POSITIVE, ONE_BELOW] so downstream density and cdf evaluations never
/// see an exact endpoint.
const ONE_BELOW: f64 = f64::from_bits(0x3FEF_FFFF_FFFF_FFFF);

// A quantile whose tail-series inversion lands below e^-3 (about 0.05) is
// solved on the log scale; closer to the middle the plain x-space iteration
// is better conditioned.
const LN_NEAR_TAIL: f64 = -3.0;

/// Inverse of `beta_cdf`: the x with I_x(p) = u.
///
/// Quantiles near the middle use safeguarded Newton in x with a bisection
/// fallback. Quantiles in a tail (where the series inversion
/// x = (u a B(a,b))^(1/a), or its mirror image, lands below 0.05) are solved
/// on the log scale instead: the root can sit hundreds of orders of
/// magnitude below 1, where linear bisection cannot recover from a rejected
/// Newton step within any reasonable iteration budget. When the true
/// quantile is closer to an endpoint than f64 resolves, the nearest
/// representable interior value is returned; the absolute x-space error
/// stays within the 1e-12 contract either way.
pub fn beta_quantile(u: f64, p: &BetaParams) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!(
            "beta_quantile requires u in (0,1), got {u}"
        )));
    }
    let (a, b) = (p.alpha, p.beta);
    let lbeta = log_beta_fn(a, b)?;
    let tail_low_ln = (u.ln() + a.ln() + lbeta) / a;
    if tail_low_ln < LN_NEAR_TAIL {
        let t = solve_log_tail(u, p, tail_low_ln)?;
        return Ok(t.exp().clamp(f64::MIN_POSITIVE, ONE_BELOW));
    }
    let tail_high_ln = ((1.0 - u).ln() + b.ln() + lbeta) / b;
    if tail_high_ln < LN_NEAR_TAIL {
        let s = solve_log_tail(1.0 - u, &p.swap(), tail_high_ln)?.exp();
        return Ok((1.0 - s).clamp(f64::MIN_POSITIVE, ONE_BELOW));
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut x = p.mean();
    let mut dx_old = 1.0_f64;
    for _ in 0..200 {
        let f = cdf_unchecked(x, a, b)? - u;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if f.abs() < 1e-15 && (hi - lo) < 1e-13 {
            break;
        }
        if hi - lo < f64::EPSILON * x.max(1e-300) {
            break;
        }
        let dens = log_beta_pdf(x, p).exp();
        let newton = x - f / dens;
        // Accept Newton only when it stays in the bracket and shrinks the
        // step; otherwise bisect. This is the classic safeguarded update.
        let step_ok = dens > 0.0
            && dens.is_finite()
            && newton > lo
            && newton < hi
            && (f / dens).abs() < 0.5 * dx_old;
        let next = if step_ok { newton } else { 0.5 * (lo + hi) };
        if next == x {
            break;
        }
        dx_old = (next - x).abs().max(f64::MIN_POSITIVE);
        x = next;
    }
    Ok(x.clamp(f64::MIN_POSITIVE, ONE_BELOW))
}

// Lower-tail quantile solve returning t = ln x, started from the tail-series
// inversion `t0`. Newton steps use dF/dt = exp(t + log pdf); rejected steps
// bisect the t bracket, which spans the full representable range in about
// sixty halvings. The bracket top is 0 (x = 1), not the routing threshold:
// the series start can undershoot the root by orders of magnitude when the
// opposite shape is large, so the root may sit well above e^-3 even though
// the routing heuristic fired. Returning the log keeps the full relative
// precision of the root; exponentiating near 1 would collapse it onto the
// coarse x-space grid.
fn solve_log_tail(u: f64, p: &BetaParams, t0: f64) -> Result<f64> {
    let (a, b) = (p.alpha, p.beta);
    let mut t_lo = -745.0_f64; // just below ln of the smallest subnormal
    let mut t_hi = 0.0_f64;
    let mut t = t0.clamp(t_lo, LN_NEAR_TAIL);
    let mut dt_old = f64::INFINITY;
    for _ in 0..200 {
        let x = t.exp().max(f64::MIN_POSITIVE);
        let f = cdf_unchecked(x, a, b)? - u;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            t_hi = t;
        } else {
            t_lo = t;
        }
        if t_hi - t_lo < 1e-14 {
            break;
        }
        // Noise floor: the cdf agrees with u to a few ulps relative, which
        // pins t by monotonicity; waiting for an absolute threshold instead
        // would spin forever when u itself is far below 1e-15.
        if f.abs() <= 8.0 * f64::EPSILON * u {
            break;
        }
        let ld = t + log_beta_pdf(x, p);
        let step = f * (-ld).exp();
        let newton = t - step;
        let step_ok =
            ld.is_finite() && newton > t_lo && newton < t_hi && step.abs() < 0.5 * dt_old;
        let next = if step_ok {
            newton
        } else {
            0.5 * (t_lo + t_hi)
        };
        if next == t {
            break;
        }
        dt_old = (next - t).abs();
        t = next;
    }
    Ok(t)
}

// Below ln(x) = -575 the leading term of the lower-tail series
// I_x(a,b) = x^a / (a B(a,b)) (1 + O(x)) is exact to f64, and the inverse
// may not even be representable; quantiles past this line are carried in
// log space instead of x space.
const LN_DEEP_LOW: f64 = -575.0;
// Near 1 the representable grid is coarse (spacing 2^-53), so the mirrored
// series takes over already when ln(1-x) < -36: 1-x is then within a few
// ulps of the spacing and the series error O((1-x) * alpha) is far smaller
// than the rounding the solver would commit.
const LN_DEEP_HIGH: f64 = -36.0;

/// A quantile carried with log-space coordinates (ln x, ln(1-x)).
///
/// `x` is NaN when the point sits so deep in a tail that x-space resolution
/// fails; consumers must then evaluate through the log coordinates.
#[derive(Clone, Copy)]
pub(crate) struct QuantPoint {
    x: f64,
    lx: f64,
    l1x: f64,
}

/// The u-quantile of `p` as a `QuantPoint`; `lbeta` is log_beta_fn(p).
///
/// Deep-tail quantiles come from the asymptotic tail inversion, which is
/// exact to f64 in that regime. Tail quantiles inside f64 range keep the
/// log-space solver's result as their log coordinate: re-deriving ln(1-x)
/// from a rounded x near 1 would quantize it to the 2^-53 grid.
pub(crate) fn quant_point(u: f64, p: &BetaParams, lbeta: f64) -> Result<QuantPoint> {
    let (a, b) = (p.alpha, p.beta);
    let low = (u.ln() + a.ln() + lbeta) / a;
    if low < LN_DEEP_LOW {
        return Ok(QuantPoint {
            x: f64::NAN,
            lx: low,
            l1x: (-low.exp()).ln_1p(),
        });
    }
    let high = ((1.0 - u).ln() + b.ln() + lbeta) / b;
    if high < LN_DEEP_HIGH {
        return Ok(QuantPoint {
            x: f64::NAN,
            lx: (-high.exp()).ln_1p(),
            l1x: high,
        });
    }
    if low < LN_NEAR_TAIL {
        let t = solve_log_tail(u, p, low)?;
        let x = t.exp();
        return Ok(QuantPoint {
            x: x.clamp(f64::MIN_POSITIVE, ONE_BELOW),
            lx: t,
            l1x: (-x).ln_1p(),
        });
    }
    if high < LN_NEAR_TAIL {
        let t = solve_log_tail(1.0 - u, &p.swap(), high)?;
        let s = t.exp();
        return Ok(QuantPoint {
            x: (1.0 - s).clamp(f64::MIN_POSITIVE, ONE_BELOW),
            lx: (-s).ln_1p(),
            l1x: t,
        });
    }
    let x = beta_quantile(u, p)?;
    Ok(QuantPoint {
        x,
        lx: x.ln(),
        l1x: (-x).ln_1p(),
    })
}

/// CDF of `c` at a quantile point; `lbeta_c` is log_beta_fn(c).
///
/// Deep-tail points use the leading tail series of the incomplete beta,
/// whose truncation error is negligible at those magnitudes. In-range
/// points evaluate the continued fraction through the point's log
/// coordinates, so a point near 1 keeps the full precision of its 1-x.
pub(crate) fn cdf_at_point(c: &BetaParams, lbeta_c: f64, q: &QuantPoint) -> Result<f64> {
    let (a, b) = (c.alpha, c.beta);
    if q.x.is_nan() {
        if q.lx < LN_DEEP_LOW {
            return Ok((a * q.lx - a.ln() - lbeta_c).exp().min(1.0));
        }
        return Ok((1.0 - (b * q.l1x - b.ln() - lbeta_c).exp().min(1.0)).max(0.0));
    }
    let front = (a * q.lx + b * q.l1x - lbeta_c).exp();
    if q.x <= (a + 1.0) / (a + b + 2.0) {
        Ok((front * beta_cf(a, b, q.x)? / a).clamp(0.0, 1.0))
    } else {
        Ok((1.0 - front * beta_cf(b, a, q.l1x.exp())? / b).clamp(0.0, 1.0))
    }
}

/// Log density of `p` at a quantile point, from the log-space coordinates.
///
/// Matches `log_beta_pdf` bitwise on x-space points and stays finite on
/// deep-tail points where the density itself under- or overflows.
pub(crate) fn log_beta_pdf_at(q: &QuantPoint, p: &BetaParams) -> f64 {
    (p.alpha - 1.0) * q.lx + (p.beta - 1.0) * q.l1x
        - (ln_gamma(p.alpha) + ln_gamma(p.beta) - ln_gamma(p.alpha + p.beta))
}

/// Lazily extended table of treatment quantiles at each quadrature order.
///
/// The superiority integral evaluates the quantile function of the first
/// argument at every node; callers that compare one distribution against
/// many reuse this cache so repeated integrals share the quantile solves.
pub(crate) struct QuantileCache {
    p: BetaParams,
    lbeta: f64,
    per_order: [Option<Vec<QuantPoint>>; 4],
}

impl QuantileCache {
    pub(crate) fn new(p: BetaParams) -> Self {
        // Shapes were validated by BetaParams, so the log beta is finite.
        let lbeta = log_beta_fn(p.alpha, p.beta).expect("validated shapes");
        QuantileCache {
            p,
            lbeta,
            per_order: [None, None, None, None],
        }
    }

    fn nodes(&mut self, order_idx: usize) -> Result<&[QuantPoint]> {
        if self.per_order[order_idx].is_none() {
            let table = regularized_table(GL_ORDERS[order_idx]);
            let mut q = Vec::with_capacity(table.nodes.len());
            for &u in &table.nodes {
                q.push(quant_point(u, &self.p, self.lbeta)?);
            }
            self.per_order[order_idx] = Some(q);
        }
        Ok(self.per_order[order_idx].as_ref().unwrap())
    }
}

/// P(T > C) computed against a shared quantile cache for T.
pub(crate) fn superiority_with_cache(cache: &mut QuantileCache, c: &BetaParams) -> Result<f64> {
    let lbeta_c = log_beta_fn(c.alpha, c.beta)?;
    let mut history: Vec<f64> = Vec::with_capacity(GL_ORDERS.len());
    for idx in 0..GL_ORDERS.len() {
        let table = regularized_table(GL_ORDERS[idx]);
        let q = cache.nodes(idx)?;
        let mut est = 0.0;
        for (qi, wi) in q.iter().zip(&table.weights) {
            est += wi * cdf_at_point(c, lbeta_c, qi)?;
        }
        if let Some(&prev) = history.last() {
            if (est - prev).abs() < 1e-9 {
                return Ok(est.clamp(0.0, 1.0));
            }
        }
        history.push(est);
    }
    Err(Error::numeric(format!(
        "superiority quadrature did not stabilize at {} nodes for T=Beta({}, {}) vs \
         C=Beta({}, {}): estimates by order {:?}",
        GL_ORDERS[GL_ORDERS.len() - 1],
        cache.p.alpha,
        cache.p.beta,
        c.alpha,
        c.beta,
        history
    )))
}

/// P(T > C) for independent T ~ Beta(t), C ~ Beta(c).
///
/// Evaluates the integral of F_c(Q_t(u)) over the unit interval by
/// Gauss-Legendre quadrature on the quantile transform, doubling nodes from
/// 128 until two successive estimates agree within 1e-9 (at most 1024
/// nodes). A quintic smoothstep substitution suppresses the endpoint
/// derivative singularities the transform would otherwise have when a shape
/// sits below one, so convergence stays spectral for every shape pair.
pub fn prob_superiority(t: &BetaParams, c: &BetaParams) -> Result<f64> {
    let mut cache = QuantileCache::new(*t);
    superiority_with_cache(&mut cache, c)
}

/// Binomial pmf table for k = 0..=n. Degenerate p handled exactly.
pub(crate) fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    let nn = n as usize;
    let mut out = vec![0.0; nn + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[nn] = 1.0;
        return out;
    }
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let ln_n1 = ln_gamma(n as f64 + 1.0);
    for (k, slot) in out.iter_mut().enumerate() {
        let kf = k as f64;
        let ln_pmf = ln_n1 - ln_gamma(kf + 1.0) - ln_gamma((n - k as u64) as f64 + 1.0)
            + kf * ln_p
            + (n as f64 - kf) * ln_q;
        *slot = ln_pmf.exp();
    }
    out
}
