//! Acceptance gate. Each test evaluates one release check end to end and
//! prints an `acceptance N (<name>): PASS|FAIL` line followed by one detail
//! line per value (cargo shows the detail for failing checks; pass
//! `-- --nocapture` to see it for green ones too).
//!
//! Three checks assert recorded reference bands that exact enumeration
//! reproducibly misses (checks 2, 3 and 4; the computed values are stable
//! to 1e-9 against an independent high-precision oracle, and the misses
//! trace to borrowing-weight cells whose inner maximization is flat to
//! below 1e-5, where the recorded references are not consistent with their
//! own companion weight table). Those tests fail by design and carry the
//! computed values in their assertion messages; do not paper over them.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use dpp_core::borrowing::{self, eess_report, gate_open, weight_eb, weight_gbc};
use dpp_core::optimizer::{candidate_grid, min_sample_size};
use dpp_core::posterior::{self, TrialOutcome};
use dpp_core::{
    beta, BetaParams, BorrowingPolicy, DesignEvaluator, DesignSpec, EvalMethod,
    HistoricalControl, Method, OptimizationConstraints, Scenario,
};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

fn prior(a: f64, b: f64) -> BetaParams {
    BetaParams::new(a, b).unwrap()
}

fn noninformative() -> BetaParams {
    prior(0.001, 0.001)
}

/// Records one sub-check: prints the detail line and keeps the failures.
fn check(failures: &mut Vec<String>, ok: bool, line: String) {
    println!("  {line} {}", if ok { "ok" } else { "MISS" });
    if !ok {
        failures.push(line);
    }
}

fn report(idx: u32, name: &str, failures: Vec<String>) {
    let verdict = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("acceptance {idx} ({name}): {verdict}");
    assert!(
        failures.is_empty(),
        "acceptance {idx} ({name}) failed:\n  {}",
        failures.join("\n  ")
    );
}

/// Evaluator for the 45/45 reference design against the 54/180 historical
/// control, with the given method, gate threshold, and borrowing cap.
fn evaluator_45(method: Method, delta_max: f64, n_ch_e: u64) -> DesignEvaluator {
    let hist = HistoricalControl::new(54, 180, n_ch_e).unwrap();
    let policy = BorrowingPolicy::from_historical(method, delta_max, &hist).unwrap();
    let design = DesignSpec::new(
        45,
        45,
        noninformative(),
        noninformative(),
        hist,
        policy,
        0.1,
    )
    .unwrap();
    DesignEvaluator::new(&design).unwrap()
}

/// Shared instance of the main reference design (empirical Bayes, gate 0.10,
/// cap 45), reused by checks 3 and 4.
fn eb45() -> &'static DesignEvaluator {
    static EVAL: OnceLock<DesignEvaluator> = OnceLock::new();
    EVAL.get_or_init(|| evaluator_45(Method::EmpiricalBayes, 0.10, 45))
}

#[test]
fn criterion_1_dynamic_weight_table() {
    let started = Instant::now();
    let mut failures = Vec::new();

    // 40-subject concurrent control against a 60/200 historical control,
    // empirical Bayes weight at five observed rates under three hyperpriors.
    let hist = HistoricalControl::new(60, 200, 45).unwrap();
    let cases = [
        (0.001, 0.001, [0.020, 0.155, 1.000, 0.308, 0.040]),
        (0.5, 0.5, [0.015, 0.181, 1.000, 0.236, 0.031]),
        (1.0, 1.0, [0.014, 0.232, 1.000, 0.194, 0.026]),
    ];
    for (a0, b0, expected) in cases {
        let pr = prior(a0, b0);
        for (y_c, want) in [4u64, 8, 12, 16, 20].into_iter().zip(expected) {
            let w = weight_eb(y_c, 40, &hist, &pr).unwrap();
            check(
                &mut failures,
                (w - want).abs() <= 0.002,
                format!("eb weight prior=({a0},{b0}) y_c={y_c}: {w:.4} vs {want:.3} +/- 0.002"),
            );
        }
    }

    let elapsed = started.elapsed();
    check(
        &mut failures,
        elapsed < Duration::from_secs(1),
        format!("runtime {} ms < 1000 ms", elapsed.as_millis()),
    );
    report(1, "dynamic weight table", failures);
}

#[test]
fn criterion_2_expected_effective_sample_size() {
    let started = Instant::now();
    let mut failures = Vec::new();

    // Empirical Bayes, 62:31 randomization with cap 31, concurrent control
    // rate 0.27, against the 172/637 historical control.
    let hist = HistoricalControl::new(172, 637, 31).unwrap();
    let policy = BorrowingPolicy::from_historical(Method::EmpiricalBayes, 0.10, &hist).unwrap();
    let r = eess_report(31, 0.27, &hist, &noninformative(), &policy).unwrap();
    check(
        &mut failures,
        (r.adopted - 22.47).abs() <= 0.05,
        format!(
            "eb 2:1:1 eess: {:.4} vs 22.47 +/- 0.05 (alternative reading {:.4})",
            r.adopted, r.alternative
        ),
    );

    // Bayesian P (eta 1), 60:30 randomization with cap 45.
    let hist = HistoricalControl::new(172, 637, 45).unwrap();
    let policy =
        BorrowingPolicy::from_historical(Method::BayesianP { eta: 1.0 }, 0.10, &hist).unwrap();
    let r = eess_report(30, 0.27, &hist, &noninformative(), &policy).unwrap();
    check(
        &mut failures,
        (r.adopted - 23.75).abs() <= 0.05,
        format!(
            "bp 2:1:1.5 eess: {:.4} vs 23.75 +/- 0.05 (alternative reading {:.4})",
            r.adopted, r.alternative
        ),
    );

    let elapsed = started.elapsed();
    check(
        &mut failures,
        elapsed < Duration::from_secs(1),
        format!("runtime {} ms < 1000 ms", elapsed.as_millis()),
    );
    report(2, "expected effective sample size", failures);
}

#[test]
fn criterion_3_operating_characteristic_spot_checks() {
    let mut failures = Vec::new();

    let eval = eb45();
    // The threshold must come from this evaluator's own calibration: the
    // threshold-defining outcome cell has to compare equal to tau under the
    // strict decision rule, and an externally reproduced constant can land
    // an ulp to either side of it.
    let tau = eval.calibrate(0.3, EvalMethod::Exact).unwrap();
    let oc = |p_c: f64, p_t: f64| {
        eval.operating_characteristics(
            &Scenario::new(p_c, p_t, 0.3).unwrap(),
            tau,
            EvalMethod::Exact,
            0.05,
        )
        .unwrap()
    };

    let r = oc(0.3, 0.3).type_metric;
    check(
        &mut failures,
        (r - 0.099).abs() <= 0.006,
        format!("type I at p_c=0.30: {r:.6} vs 0.099 +/- 0.006"),
    );
    let r = oc(0.3, 0.5).type_metric;
    check(
        &mut failures,
        (r - 0.811).abs() <= 0.008,
        format!("power at p_c=0.30: {r:.6} vs 0.811 +/- 0.008"),
    );
    let r = oc(0.4, 0.4).type_metric;
    check(
        &mut failures,
        (r - 0.150).abs() <= 0.010,
        format!("type I at p_c=0.40: {r:.6} vs 0.150 +/- 0.010"),
    );
    let r = oc(0.2, 0.4).mean_pmd;
    check(
        &mut failures,
        (r - 0.009).abs() <= 0.003,
        format!("mean pmd at p_c=0.20: {r:.6} vs 0.009 +/- 0.003"),
    );

    // Fixed power prior at full cap: w_d is identically 1 and the gate is
    // disabled, so only the global fraction (here 1) discounts the
    // historical counts.
    let fixed = evaluator_45(Method::Fixed, f64::INFINITY, 180);
    let tau_fixed = fixed.calibrate(0.3, EvalMethod::Exact).unwrap();
    let r = fixed
        .operating_characteristics(
            &Scenario::new(0.45, 0.45, 0.3).unwrap(),
            tau_fixed,
            EvalMethod::Exact,
            0.05,
        )
        .unwrap()
        .type_metric;
    check(
        &mut failures,
        (r - 0.644).abs() <= 0.010,
        format!("fixed-prior type I at p_c=0.45: {r:.6} vs 0.644 +/- 0.010"),
    );

    // Full sweep: four borrowing caps crossed with seven control rates,
    // type I and power at each point, rebuilt from scratch and timed.
    let started = Instant::now();
    let mut rows = 0;
    for n_ch_e in [45u64, 90, 135, 180] {
        let e = evaluator_45(Method::EmpiricalBayes, 0.10, n_ch_e);
        let tau = e.calibrate(0.3, EvalMethod::Exact).unwrap();
        for i in 0..7 {
            let p_c = 0.15 + 0.05 * i as f64;
            for p_t in [p_c, p_c + 0.2] {
                let s = Scenario::new(p_c, p_t, 0.3).unwrap();
                e.operating_characteristics(&s, tau, EvalMethod::Exact, 0.05)
                    .unwrap();
            }
            rows += 1;
        }
    }
    let elapsed = started.elapsed();
    check(
        &mut failures,
        rows == 28 && elapsed < Duration::from_secs(60),
        format!("28-scenario exact sweep: {rows} rows in {} ms < 60000 ms", elapsed.as_millis()),
    );

    report(3, "operating characteristic spot checks", failures);
}

#[test]
fn criterion_4_gate_threshold_direction() {
    let mut failures = Vec::new();

    // Type I error at p_c=0.40 must grow strictly with the gate threshold,
    // and each value must land in its recorded band.
    let mut got = Vec::new();
    for (delta_max, want) in [(0.05, 0.107), (0.10, 0.150), (0.15, 0.172)] {
        let owned;
        let eval = if delta_max == 0.10 {
            eb45()
        } else {
            owned = evaluator_45(Method::EmpiricalBayes, delta_max, 45);
            &owned
        };
        let tau = eval.calibrate(0.3, EvalMethod::Exact).unwrap();
        let r = eval
            .operating_characteristics(
                &Scenario::new(0.4, 0.4, 0.3).unwrap(),
                tau,
                EvalMethod::Exact,
                0.05,
            )
            .unwrap()
            .type_metric;
        check(
            &mut failures,
            (r - want).abs() <= 0.01,
            format!("type I at p_c=0.40, gate {delta_max:.2}: {r:.6} vs {want:.3} +/- 0.010"),
        );
        got.push(r);
    }
    check(
        &mut failures,
        got[0] < got[1] && got[1] < got[2],
        format!(
            "strictly increasing across gates: {:.6} < {:.6} < {:.6}",
            got[0], got[1], got[2]
        ),
    );

    report(4, "gate threshold direction", failures);
}

#[test]
fn criterion_5_minimum_sample_size_search() {
    let mut failures = Vec::new();

    // 2:1 randomization against the 172/637 historical control; target
    // power 0.8 at one-sided alpha 0.1, influence capped at one percent of
    // response rate across a +/-0.10 discrepancy band.
    let constraints = OptimizationConstraints::new(0.8, 0.1, 0.01, 1.0, 0.05, 0.10).unwrap();
    let pr = noninformative();

    let grid = candidate_grid(28, 34, 2.0, 1.0).unwrap();
    let out = min_sample_size(
        &grid,
        &constraints,
        Method::EmpiricalBayes,
        0.10,
        172,
        637,
        &pr,
        &pr,
    )
    .unwrap();
    let sel = out.selected().expect("eb search should be feasible");
    check(
        &mut failures,
        (30..=32).contains(&sel.n_c) && sel.n_t == 2 * sel.n_c && sel.n_ch_e == sel.n_c,
        format!(
            "eb cap=n_c search: n_c={} n_t={} n_ch_e={} (power {:.4}) vs n_c=31 +/- 1",
            sel.n_c, sel.n_t, sel.n_ch_e, sel.power
        ),
    );
    // The selection must be reproducible from its own reported evaluation:
    // re-run the selected design independently and hold it to the same
    // constraints at every band point.
    let hist = HistoricalControl::new(172, 637, sel.n_ch_e).unwrap();
    let policy = BorrowingPolicy::from_historical(Method::EmpiricalBayes, 0.10, &hist).unwrap();
    let design = DesignSpec::new(sel.n_c, sel.n_t, pr, pr, hist, policy, 0.1).unwrap();
    let eval = DesignEvaluator::new(&design).unwrap();
    let tau = eval.calibrate(hist.rate(), EvalMethod::Exact).unwrap();
    let mut max_pmd = 0.0f64;
    let mut power_center = 0.0;
    for p_c in [hist.rate() - 0.10, hist.rate(), hist.rate() + 0.10] {
        let s = Scenario::new(p_c, (p_c + 0.2).min(1.0), hist.rate()).unwrap();
        let r = eval
            .operating_characteristics(&s, tau, EvalMethod::Exact, constraints.xi_eps)
            .unwrap();
        max_pmd = max_pmd.max(r.mean_pmd.abs());
        if p_c == hist.rate() {
            power_center = r.type_metric;
        }
    }
    check(
        &mut failures,
        (tau - sel.tau).abs() < 1e-12
            && (power_center - sel.power).abs() < 1e-12
            && power_center >= constraints.target_power
            && max_pmd <= constraints.max_mean_pmd,
        format!(
            "eb selection re-verified: power {power_center:.4} >= 0.8, band max |mean pmd| {max_pmd:.4} <= 0.01"
        ),
    );

    let grid = candidate_grid(27, 33, 2.0, 1.5).unwrap();
    let out = min_sample_size(
        &grid,
        &constraints,
        Method::BayesianP { eta: 1.0 },
        0.10,
        172,
        637,
        &pr,
        &pr,
    )
    .unwrap();
    let sel = out.selected().expect("bp search should be feasible");
    check(
        &mut failures,
        (29..=31).contains(&sel.n_c) && sel.n_t == 2 * sel.n_c,
        format!(
            "bp cap=1.5*n_c search: n_c={} n_t={} n_ch_e={} (power {:.4}) vs n_c=30 +/- 1",
            sel.n_c, sel.n_t, sel.n_ch_e, sel.power
        ),
    );

    report(5, "minimum sample size search", failures);
}

// ---------------------------------------------------------------------------
// Check 6: independent numerical oracles.

/// Brute-force numerics used only as test oracles. Everything here is
/// deliberately built on different machinery from the library: Stirling's
/// series instead of Lanczos, tanh-sinh quadrature in x-space instead of
/// Gauss-Legendre on the quantile transform, and iterated 2-D integration
/// instead of the cached-quantile superiority integral.
mod oracle {
    /// Log-gamma by upward recurrence into Stirling's series; absolute
    /// error below 1e-12 over the shapes the tests draw.
    pub fn ln_gamma(x: f64) -> f64 {
        assert!(x > 0.0);
        let mut shift = 0.0;
        let mut x = x;
        while x < 8.0 {
            shift -= x.ln();
            x += 1.0;
        }
        let z = 1.0 / (x * x);
        let series = ((((1.0 / 1188.0 * z - 1.0 / 1680.0) * z + 1.0 / 1260.0) * z
            - 1.0 / 360.0)
            * z
            + 1.0 / 12.0)
            / x;
        shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
    }

    pub fn ln_beta(a: f64, b: f64) -> f64 {
        ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
    }

    /// log(e^a + e^b) without overflow; tolerates negative infinity.
    fn log_add(a: f64, b: f64) -> f64 {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        if lo == f64::NEG_INFINITY {
            return hi;
        }
        hi + (lo - hi).exp().ln_1p()
    }

    /// Tanh-sinh rule over (0,1) in exact log coordinates: the callback gets
    /// (ln x, ln(1-x)) and returns the log of the integrand. Plain x rounds
    /// onto an endpoint once within 2^-53 of it, which silently drops
    /// singular tail mass; the log coordinates keep those nodes alive down
    /// to ln(1-x) of about -220. Refined until two successive levels agree.
    pub fn integral01_log(f: impl Fn(f64, f64) -> f64) -> f64 {
        const UMAX: f64 = 4.5;
        let term = |u: f64| -> f64 {
            let v = std::f64::consts::FRAC_PI_2 * u.sinh();
            let av = v.abs();
            let l = (-2.0 * av).exp().ln_1p();
            let (lx, l1x) = if v >= 0.0 {
                (-l, -2.0 * av - l)
            } else {
                (-2.0 * av - l, -l)
            };
            let lf = f(lx, l1x);
            if lf == f64::NEG_INFINITY {
                return 0.0;
            }
            // ln of the node weight (pi/4) cosh(u) / cosh^2(v).
            let lw = std::f64::consts::FRAC_PI_4.ln() + u.cosh().ln()
                - 2.0 * (av + l - std::f64::consts::LN_2);
            (lw + lf).exp()
        };
        let mut h = 0.5;
        let mut sum = term(0.0);
        let mut j = 1.0;
        while j * h <= UMAX {
            sum += term(j * h) + term(-j * h);
            j += 1.0;
        }
        let mut prev = sum * h;
        for _ in 0..7 {
            h *= 0.5;
            // Only the odd multiples of the new step are new nodes.
            let mut j = 1.0;
            while j * h <= UMAX {
                sum += term(j * h) + term(-j * h);
                j += 2.0;
            }
            let cur = sum * h;
            if (cur - prev).abs() <= 1e-11 * (1.0 + cur.abs()) {
                return cur;
            }
            prev = cur;
        }
        prev
    }

    /// P(T > C) by iterated 2-D integration: the outer integral runs over
    /// the T density, the inner one rebuilds the C distribution function
    /// from scratch on (0, t) for every outer node, with 1 - ts assembled
    /// in log space as (1-t) + t(1-s).
    pub fn prob_gt(at: f64, bt: f64, ac: f64, bc: f64) -> f64 {
        let lbt = ln_beta(at, bt);
        let lbc = ln_beta(ac, bc);
        integral01_log(|lt, l1t| {
            let lft = (at - 1.0) * lt + (bt - 1.0) * l1t - lbt;
            let inner = integral01_log(|ls, l1s| {
                (ac - 1.0) * (lt + ls) + (bc - 1.0) * log_add(l1t, lt + l1s) - lbc
            });
            if inner <= 0.0 {
                return f64::NEG_INFINITY;
            }
            // ln F_C(t) = ln t + ln of the inner integral, capped at 0.
            lft + (lt + inner.ln()).min(0.0)
        })
    }

    /// Overlap integral of two beta densities at matched power one half.
    pub fn bhattacharyya(a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
        let l1 = ln_beta(a1, b1);
        let l2 = ln_beta(a2, b2);
        integral01_log(|lx, l1x| {
            0.5 * ((a1 - 1.0) * lx + (b1 - 1.0) * l1x - l1
                + (a2 - 1.0) * lx
                + (b2 - 1.0) * l1x
                - l2)
        })
    }

    pub fn binom_pmf(n: u64, p: f64, y: u64) -> f64 {
        if p <= 0.0 {
            return if y == 0 { 1.0 } else { 0.0 };
        }
        if p >= 1.0 {
            return if y == n { 1.0 } else { 0.0 };
        }
        let (nf, yf) = (n as f64, y as f64);
        (ln_gamma(nf + 1.0) - ln_gamma(yf + 1.0) - ln_gamma(nf - yf + 1.0)
            + yf * p.ln()
            + (nf - yf) * (-p).ln_1p())
        .exp()
    }
}

/// Uniform draw in [0, 1) from the top 53 bits.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn range(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> u64 {
    lo + rng.next_u64() % (hi - lo + 1)
}

#[test]
fn criterion_6_oracle_equivalence() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1CE);

    // (a) Exact enumeration against Monte Carlo on randomized small designs:
    // rejection probability within 3 binomial standard errors, expected
    // borrowing within 3 standard errors of its exact spread.
    let methods = [
        Method::EmpiricalBayes,
        Method::BayesianP { eta: 1.0 },
        Method::GeneralizedBc { theta: 0.5, eta: 1.0 },
        Method::Jsd { eta: 2.0 },
    ];
    let priors = [(0.001, 0.001), (0.5, 0.5), (1.0, 1.0)];
    let alphas = [0.05, 0.1, 0.2];
    let sims = 30_000u64;
    let mut worst_z = 0.0f64;
    for k in 0..20 {
        let n_c = range(&mut rng, 8, 18);
        let n_t = range(&mut rng, 8, 24);
        let n_ch = range(&mut rng, 30, 90);
        let y_ch = ((0.2 + 0.3 * unit(&mut rng)) * n_ch as f64).round() as u64;
        let y_ch = y_ch.clamp(1, n_ch - 1);
        let n_ch_e = range(&mut rng, 1, n_ch);
        let delta_max = 0.05 + 0.30 * unit(&mut rng);
        let (a0, b0) = priors[k % priors.len()];
        let alpha = alphas[k % alphas.len()];
        let hist = HistoricalControl::new(y_ch, n_ch, n_ch_e).unwrap();
        let policy =
            BorrowingPolicy::from_historical(methods[k % methods.len()], delta_max, &hist)
                .unwrap();
        let design = DesignSpec::new(
            n_c,
            n_t,
            prior(a0, b0),
            prior(a0, b0),
            hist,
            policy,
            alpha,
        )
        .unwrap();
        let eval = DesignEvaluator::new(&design).unwrap();
        let tau = eval.calibrate(hist.rate(), EvalMethod::Exact).unwrap();

        let p_c = 0.15 + 0.35 * unit(&mut rng);
        let p_t = (p_c + 0.05 + 0.20 * unit(&mut rng)).min(0.95);
        let s = Scenario::new(p_c, p_t, hist.rate()).unwrap();
        let exact = eval
            .operating_characteristics(&s, tau, EvalMethod::Exact, 0.05)
            .unwrap();
        let mc = eval
            .operating_characteristics(
                &s,
                tau,
                EvalMethod::MonteCarlo { n_sims: sims, seed: 7_700 + k as u64 },
                0.05,
            )
            .unwrap();

        let p = exact.type_metric;
        let se_reject = (p * (1.0 - p) / sims as f64).sqrt();
        let z_reject = (mc.type_metric - p).abs() / se_reject.max(1e-12);

        // Exact spread of the per-trial borrowed amount, for the eess error.
        let (mut m1, mut m2) = (0.0, 0.0);
        for y_c in 0..=n_c {
            let w = if gate_open(y_c as f64 / n_c as f64, hist.rate(), delta_max) {
                eval.dynamic_weight_at(y_c)
            } else {
                0.0
            };
            let v = n_ch_e as f64 * w;
            let pm = oracle::binom_pmf(n_c, p_c, y_c);
            m1 += pm * v;
            m2 += pm * v * v;
        }
        let se_eess = ((m2 - m1 * m1).max(0.0) / sims as f64).sqrt();
        let z_eess = (mc.eess - exact.eess).abs() / se_eess.max(1e-12);

        let ok = z_reject <= 3.0 && (z_eess <= 3.0 || (mc.eess - exact.eess).abs() < 1e-9);
        worst_z = worst_z.max(z_reject).max(if se_eess > 1e-12 { z_eess } else { 0.0 });
        if !ok {
            check(
                &mut failures,
                false,
                format!(
                    "config {k}: reject exact {p:.6} mc {:.6} (z {z_reject:.2}), eess exact {:.4} mc {:.4} (z {z_eess:.2})",
                    mc.type_metric, exact.eess, mc.eess
                ),
            );
        }
    }
    check(
        &mut failures,
        true,
        format!("20 exact-vs-monte-carlo configs within 3 SE (worst z {worst_z:.2})"),
    );

    // (b) Superiority probability against the iterated tanh-sinh oracle.
    // Shapes stay in [0.3, 80]: the oracle's node ladder reaches ln(1-x)
    // of about -220, which resolves a shape-0.3 tail to ~1e-27 but would
    // leave visible mass uncaptured for shapes far below that (those lie
    // with the library's own high-precision-frozen unit tests instead).
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let draw = |rng: &mut ChaCha8Rng| {
            (0.3f64.ln() + unit(rng) * (80.0f64.ln() - 0.3f64.ln())).exp()
        };
        let (at, bt, ac, bc) = (
            draw(&mut rng),
            draw(&mut rng),
            draw(&mut rng),
            draw(&mut rng),
        );
        let t = prior(at, bt);
        let c = prior(ac, bc);
        let got = beta::prob_superiority(&t, &c).unwrap();
        let want = oracle::prob_gt(at, bt, ac, bc);
        worst = worst.max((got - want).abs());
        if (got - want).abs() > 1e-5 {
            check(
                &mut failures,
                false,
                format!("superiority Beta({at:.17e},{bt:.17e}) vs Beta({ac:.17e},{bc:.17e}): {got:.12} oracle {want:.12}"),
            );
        }
    }
    check(
        &mut failures,
        true,
        format!("50 superiority integrals within 1e-5 of 2-D oracle (worst {worst:.2e})"),
    );

    // (c) Generalized Bhattacharyya at matched power one half and unit
    // exponent against direct overlap quadrature on the same posteriors.
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n_c = range(&mut rng, 10, 40);
        let y_c = range(&mut rng, 1, n_c - 1);
        let n_ch = range(&mut rng, 30, 120);
        let y_ch = range(&mut rng, n_ch / 4, 3 * n_ch / 4);
        let n_ch_e = range(&mut rng, n_ch / 3, n_ch);
        let (a0, b0) = priors[(n_c % 3) as usize];
        let pr = prior(a0, b0);
        let hist = HistoricalControl::new(y_ch, n_ch, n_ch_e).unwrap();
        let a = hist.global_a();
        let got = weight_gbc(y_c, n_c, &hist, &pr, 0.5, 1.0, a).unwrap();
        let want = oracle::bhattacharyya(
            a0 + y_c as f64,
            b0 + (n_c - y_c) as f64,
            a0 + a * y_ch as f64,
            b0 + a * (n_ch - y_ch) as f64,
        );
        worst = worst.max((got - want).abs());
        if (got - want).abs() > 1e-6 {
            check(
                &mut failures,
                false,
                format!("gbc(0.5, 1) y_c={y_c}/{n_c} vs {y_ch}/{n_ch} cap {n_ch_e}: {got:.9} oracle {want:.9}"),
            );
        }
    }
    check(
        &mut failures,
        true,
        format!("50 matched-power overlaps within 1e-6 of direct quadrature (worst {worst:.2e})"),
    );

    report(6, "oracle equivalence", failures);
}

#[test]
fn criterion_7_invariant_suite() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1_7A57);

    // Distribution function monotone in x, including tiny-shape corners.
    let shapes = [(0.001, 0.001), (0.5, 2.0), (3.0, 0.4), (45.001, 36.001)];
    let mut mono = true;
    for (a, b) in shapes {
        let p = prior(a, b);
        let mut last = 0.0;
        for i in 1..64 {
            let f = beta::beta_cdf(i as f64 / 64.0, &p).unwrap();
            mono &= f >= last;
            last = f;
        }
    }
    check(&mut failures, mono, "beta cdf nondecreasing in x".into());

    // Superiority integral: complement symmetry and purity on random
    // posterior-shaped pairs.
    let mut worst = 0.0f64;
    let mut pure = true;
    for _ in 0..40 {
        let n1 = range(&mut rng, 5, 60);
        let y1 = range(&mut rng, 0, n1);
        let n2 = range(&mut rng, 5, 200);
        let y2 = range(&mut rng, 0, n2);
        let (a0, b0) = [(0.001, 0.001), (0.5, 0.5), (1.0, 1.0)][(n1 % 3) as usize];
        let t = prior(a0 + y1 as f64, b0 + (n1 - y1) as f64);
        let c = prior(a0 + y2 as f64, b0 + (n2 - y2) as f64);
        let p1 = beta::prob_superiority(&t, &c).unwrap();
        let p2 = beta::prob_superiority(&c, &t).unwrap();
        pure &= p1 == beta::prob_superiority(&t, &c).unwrap();
        worst = worst.max((p1 + p2 - 1.0).abs());
    }
    check(
        &mut failures,
        worst <= 2e-8,
        format!("superiority complement symmetry within 2e-8 (worst {worst:.2e})"),
    );
    check(&mut failures, pure, "superiority integral is pure (bit-identical repeats)".into());

    // Superiority monotone in the treatment shapes.
    let c = prior(3.5, 6.0);
    let mut mono = true;
    let mut last = 0.0;
    for i in 0..12 {
        let p = beta::prob_superiority(&prior(0.5 + i as f64, 4.0), &c).unwrap();
        mono &= p >= last;
        last = p;
    }
    let mut last = 1.0;
    for i in 0..12 {
        let p = beta::prob_superiority(&prior(4.0, 0.5 + i as f64), &c).unwrap();
        mono &= p <= last;
        last = p;
    }
    check(&mut failures, mono, "superiority monotone in treatment shapes".into());

    // Weight ranges and the strict gate, all four dynamic methods.
    let methods = [
        Method::EmpiricalBayes,
        Method::BayesianP { eta: 1.0 },
        Method::GeneralizedBc { theta: 0.5, eta: 1.0 },
        Method::Jsd { eta: 2.0 },
    ];
    let mut ranges = true;
    let mut gated = true;
    for k in 0..24 {
        let n_c = range(&mut rng, 5, 45);
        let y_c = range(&mut rng, 0, n_c);
        let n_ch = range(&mut rng, 20, 200);
        let y_ch = range(&mut rng, 1, n_ch - 1);
        let n_ch_e = range(&mut rng, 0, n_ch);
        let delta_max = 0.02 + 0.4 * unit(&mut rng);
        let pr = prior(0.001 + unit(&mut rng), 0.001 + unit(&mut rng));
        let hist = HistoricalControl::new(y_ch, n_ch, n_ch_e).unwrap();
        let policy =
            BorrowingPolicy::from_historical(methods[k % methods.len()], delta_max, &hist)
                .unwrap();
        let w_d = borrowing::dynamic_weight(y_c, n_c, &hist, &pr, &policy).unwrap();
        let p_hat_c = y_c as f64 / n_c as f64;
        let w = borrowing::overall_weight(w_d, &policy, p_hat_c, hist.rate());
        ranges &= (0.0..=1.0).contains(&w_d) && (0.0..=policy.global_a).contains(&w);
        if (p_hat_c - hist.rate()).abs() >= delta_max {
            gated &= w == 0.0;
        } else {
            gated &= w == policy.global_a * w_d;
        }
    }
    check(&mut failures, ranges, "dynamic weights in [0,1], overall in [0, a]".into());
    check(&mut failures, gated, "gate strict: zero at or beyond the threshold".into());

    // The matching-rate cell maximizes the empirical Bayes weight and the
    // grid maximum at the boundary is returned exactly.
    let hist = HistoricalControl::new(60, 200, 45).unwrap();
    let w12 = weight_eb(12, 40, &hist, &noninformative()).unwrap();
    let mut argmax = true;
    for y_c in 0..=40 {
        argmax &= weight_eb(y_c, 40, &hist, &noninformative()).unwrap() <= w12;
    }
    check(
        &mut failures,
        argmax && w12 == 1.0,
        format!("eb weight peaks at the matching rate and hits the boundary exactly (w={w12})"),
    );

    // Identical posterior pairs: similarity weights are 1 within 1e-9.
    // Construction: cap = n_c and historical counts k-fold scaled, so the
    // a-scaled historical posterior equals the concurrent one exactly.
    let mut ident = true;
    for _ in 0..8 {
        let n_c = range(&mut rng, 5, 40);
        let y_c = range(&mut rng, 0, n_c);
        let k = range(&mut rng, 2, 6);
        let hist = HistoricalControl::new(k * y_c, k * n_c, n_c).unwrap();
        let a = hist.global_a();
        let pr = prior(0.5, 0.5);
        let bp = borrowing::weight_bp(y_c, n_c, &hist, &pr, 1.0, a).unwrap();
        let gbc = weight_gbc(y_c, n_c, &hist, &pr, 0.5, 1.0, a).unwrap();
        let jsd = borrowing::weight_jsd(y_c, n_c, &hist, &pr, 2.0, a).unwrap();
        ident &= (bp - 1.0).abs() <= 1e-9 && (gbc - 1.0).abs() <= 1e-9 && (jsd - 1.0).abs() <= 1e-9;
    }
    check(&mut failures, ident, "identical posterior pairs weigh 1 within 1e-9".into());

    // Generalized Bhattacharyya is symmetric under theta <-> 1-theta.
    let mut worst = 0.0f64;
    for i in 0..16 {
        let n_c = range(&mut rng, 8, 40);
        let y_c = range(&mut rng, 1, n_c - 1);
        let n_ch = range(&mut rng, 30, 120);
        let y_ch = range(&mut rng, n_ch / 4, 3 * n_ch / 4);
        let hist = HistoricalControl::new(y_ch, n_ch, range(&mut rng, n_ch / 3, n_ch)).unwrap();
        let a = hist.global_a();
        let pr = prior(0.5, 0.5);
        let theta = [0.1, 0.25, 0.4][i % 3];
        let lo = weight_gbc(y_c, n_c, &hist, &pr, theta, 1.0, a).unwrap();
        let hi = weight_gbc(y_c, n_c, &hist, &pr, 1.0 - theta, 1.0, a).unwrap();
        worst = worst.max((lo - hi).abs());
    }
    check(
        &mut failures,
        worst <= 1e-8,
        format!("gbc symmetric in theta within 1e-8 (worst {worst:.2e})"),
    );

    // Raising eta shrinks gbc and jsd whenever the base value is below 1.
    let hist = HistoricalControl::new(60, 200, 45).unwrap();
    let pr = noninformative();
    let mut mono = true;
    for y_c in [4u64, 8, 16, 20] {
        let mut last_g = 1.0;
        let mut last_j = 1.0;
        for eta in [0.5, 1.0, 2.0, 4.0] {
            let g = weight_gbc(y_c, 40, &hist, &pr, 0.5, eta, hist.global_a()).unwrap();
            let j = borrowing::weight_jsd(y_c, 40, &hist, &pr, eta, hist.global_a()).unwrap();
            mono &= g <= last_g + 1e-12 && j <= last_j + 1e-12;
            last_g = g;
            last_j = j;
        }
    }
    check(&mut failures, mono, "gbc and jsd nonincreasing in eta below 1".into());

    // Expected borrowing: exact sum against a million sampled outcomes.
    {
        let n_c = 20u64;
        let p_c = 0.35;
        let hist = HistoricalControl::new(60, 200, 50).unwrap();
        let policy =
            BorrowingPolicy::from_historical(Method::EmpiricalBayes, 0.10, &hist).unwrap();
        let pr = noninformative();
        let exact = borrowing::eess(n_c, p_c, &hist, &pr, &policy).unwrap();
        let mut wdg = Vec::new();
        for y_c in 0..=n_c {
            let open = gate_open(y_c as f64 / n_c as f64, hist.rate(), policy.delta_max);
            wdg.push(if open {
                weight_eb(y_c, n_c, &hist, &pr).unwrap()
            } else {
                0.0
            });
        }
        let mut cdf = Vec::with_capacity(n_c as usize + 1);
        let mut acc = 0.0;
        for y in 0..=n_c {
            acc += oracle::binom_pmf(n_c, p_c, y);
            cdf.push(acc);
        }
        *cdf.last_mut().unwrap() = 1.0;
        let draws = 1_000_000u64;
        let scale = hist.n_ch_e() as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let y = cdf.partition_point(|&c| c < u);
            let v = scale * wdg[y];
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 / draws as f64;
        let se = ((s2 / draws as f64 - mean * mean).max(0.0) / draws as f64).sqrt();
        check(
            &mut failures,
            (mean - exact).abs() <= 3.0 * se,
            format!("eess exact {exact:.4} vs sampled {mean:.4} within 3 SE ({se:.2e})"),
        );
    }

    // Hybrid posterior shapes are linear in the weight.
    let mut linear = true;
    for _ in 0..8 {
        let n_c = range(&mut rng, 5, 40);
        let y_c = range(&mut rng, 0, n_c);
        let n_ch = range(&mut rng, 20, 200);
        let y_ch = range(&mut rng, 0, n_ch);
        let hist = HistoricalControl::new(y_ch, n_ch, n_ch).unwrap();
        let pr = prior(0.5, 1.5);
        let outcome = TrialOutcome::new(y_c, n_c, 0, 10).unwrap();
        let base = posterior::hybrid_posterior(&outcome, &hist, &pr, 0.0).unwrap();
        for i in 0..=10 {
            let w = i as f64 / 10.0;
            let h = posterior::hybrid_posterior(&outcome, &hist, &pr, w).unwrap();
            linear &= (h.alpha() - base.alpha() - w * y_ch as f64).abs() <= 1e-9 * h.alpha()
                && (h.beta() - base.beta() - w * (n_ch - y_ch) as f64).abs() <= 1e-9 * h.beta();
        }
    }
    check(&mut failures, linear, "hybrid posterior shapes linear in the weight".into());

    // With a vanishing prior the hybrid mean moves monotonically from the
    // concurrent rate toward the historical rate as the weight grows.
    {
        let hist = HistoricalControl::new(90, 200, 200).unwrap();
        let below = TrialOutcome::new(5, 20, 0, 10).unwrap();
        let above = TrialOutcome::new(13, 20, 0, 10).unwrap();
        let mut mono = true;
        let mut last_up = 0.0;
        let mut last_down = 1.0;
        for i in 0..=20 {
            let w = i as f64 / 20.0;
            let up = posterior::posterior_mean_hybrid(&below, &hist, &noninformative(), w).unwrap();
            let down =
                posterior::posterior_mean_hybrid(&above, &hist, &noninformative(), w).unwrap();
            if i > 0 {
                mono &= up >= last_up && down <= last_down;
            }
            last_up = up;
            last_down = down;
        }
        check(
            &mut failures,
            mono,
            "hybrid mean pulls monotonically toward the historical rate".into(),
        );
    }

    // Posterior mean difference is exactly zero with the gate shut or the
    // cap at zero.
    {
        let pr = noninformative();
        let outcome = TrialOutcome::new(12, 20, 8, 20).unwrap(); // rate 0.6 vs 0.3
        let hist = HistoricalControl::new(60, 200, 50).unwrap();
        let policy =
            BorrowingPolicy::from_historical(Method::EmpiricalBayes, 0.20, &hist).unwrap();
        let pair = posterior::hybrid_pair(&outcome, &hist, &pr, &pr, &policy).unwrap();
        let d_shut = posterior::pmd(&outcome, &hist, &pr, pair.weight_used).unwrap();

        let capless = HistoricalControl::new(60, 200, 0).unwrap();
        let policy =
            BorrowingPolicy::from_historical(Method::EmpiricalBayes, 0.50, &capless).unwrap();
        let near = TrialOutcome::new(6, 20, 8, 20).unwrap(); // rate 0.3, gate open
        let pair0 = posterior::hybrid_pair(&near, &capless, &pr, &pr, &policy).unwrap();
        let d_zero = posterior::pmd(&near, &capless, &pr, pair0.weight_used).unwrap();
        check(
            &mut failures,
            pair.weight_used == 0.0 && d_shut == 0.0 && pair0.weight_used == 0.0 && d_zero == 0.0,
            "pmd exactly zero when the gate shuts or the cap is zero".into(),
        );
    }

    // Multiplying the weight chain in either order is bit-identical.
    let mut assoc = true;
    for _ in 0..32 {
        let a = unit(&mut rng);
        let w_d = unit(&mut rng);
        let near = unit(&mut rng) < 0.5;
        let policy = BorrowingPolicy::new(Method::Fixed, 0.1, a).unwrap();
        let (p_hat_c, p_hat_ch) = if near { (0.32, 0.3) } else { (0.55, 0.3) };
        let chained = borrowing::overall_weight(w_d, &policy, p_hat_c, p_hat_ch);
        let gate = if gate_open(p_hat_c, p_hat_ch, 0.1) { 1.0 } else { 0.0 };
        assoc &= chained == a * (w_d * gate);
    }
    check(&mut failures, assoc, "weight chain order-invariant (bit-identical)".into());

    // Superiority probability nondecreasing in the treatment responder
    // count, and the decision rule is strictly greater-than.
    {
        let hist = HistoricalControl::new(18, 60, 15).unwrap();
        let policy =
            BorrowingPolicy::from_historical(Method::EmpiricalBayes, 0.15, &hist).unwrap();
        let pr = noninformative();
        let design = DesignSpec::new(12, 12, pr, pr, hist, policy, 0.1).unwrap();
        let eval = DesignEvaluator::new(&design).unwrap();
        let mut mono = true;
        let mut last = 0.0;
        for y_t in 0..=12 {
            let p = eval.post_prob(4, y_t);
            mono &= p >= last;
            last = p;
        }
        check(&mut failures, mono, "superiority nondecreasing in treatment responders".into());

        let outcome = TrialOutcome::new(4, 12, 9, 12).unwrap();
        let pair = posterior::hybrid_pair(&outcome, &hist, &pr, &pr, &policy).unwrap();
        let post = beta::prob_superiority(&pair.treatment, &pair.control).unwrap();
        let d = posterior::decide(&outcome, &hist, &pr, &pr, &policy, post).unwrap();
        check(
            &mut failures,
            !d.significant && d.post_prob == post,
            "decision strict: a tie with the threshold is not significant".into(),
        );
    }

    // Exact calibration keeps null rejection at or below alpha.
    let mut bound = true;
    let mut worst_excess = f64::NEG_INFINITY;
    for k in 0..10 {
        let n_c = range(&mut rng, 8, 12);
        let n_t = range(&mut rng, 8, 12);
        let n_ch = range(&mut rng, 20, 60);
        let y_ch = range(&mut rng, n_ch / 5, 4 * n_ch / 5);
        let hist = HistoricalControl::new(y_ch, n_ch, range(&mut rng, 1, n_ch)).unwrap();
        let policy = BorrowingPolicy::from_historical(
            methods[k % methods.len()],
            0.05 + 0.2 * unit(&mut rng),
            &hist,
        )
        .unwrap();
        let alpha = alphas_for(k);
        let pr = prior(0.5, 0.5);
        let design = DesignSpec::new(n_c, n_t, pr, pr, hist, policy, alpha).unwrap();
        let eval = DesignEvaluator::new(&design).unwrap();
        let tau = eval.calibrate(hist.rate(), EvalMethod::Exact).unwrap();
        let r = eval
            .operating_characteristics(
                &Scenario::new(hist.rate(), hist.rate(), hist.rate()).unwrap(),
                tau,
                EvalMethod::Exact,
                0.05,
            )
            .unwrap();
        bound &= r.type_metric <= alpha + 1e-12;
        worst_excess = worst_excess.max(r.type_metric - alpha);
    }
    check(
        &mut failures,
        bound,
        format!("exact calibration holds null rejection <= alpha (worst excess {worst_excess:.2e})"),
    );

    // Exact evaluation is reproducible across independently built
    // evaluators, and zero cap forces zero mean pmd in both modes.
    {
        let hist = HistoricalControl::new(18, 60, 15).unwrap();
        let policy = BorrowingPolicy::from_historical(Method::Jsd { eta: 2.0 }, 0.15, &hist).unwrap();
        let pr = noninformative();
        let design = DesignSpec::new(12, 14, pr, pr, hist, policy, 0.1).unwrap();
        let s = Scenario::new(0.35, 0.5, hist.rate()).unwrap();
        let (e1, e2) = (
            DesignEvaluator::new(&design).unwrap(),
            DesignEvaluator::new(&design).unwrap(),
        );
        let tau = e1.calibrate(hist.rate(), EvalMethod::Exact).unwrap();
        let r1 = e1.operating_characteristics(&s, tau, EvalMethod::Exact, 0.05).unwrap();
        let r2 = e2.operating_characteristics(&s, tau, EvalMethod::Exact, 0.05).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        check(
            &mut failures,
            close(r1.type_metric, r2.type_metric)
                && close(r1.mean_pmd, r2.mean_pmd)
                && close(r1.eess, r2.eess),
            "exact evaluation reproducible across rebuilds".into(),
        );

        let capless = HistoricalControl::new(18, 60, 0).unwrap();
        let policy =
            BorrowingPolicy::from_historical(Method::EmpiricalBayes, 0.15, &capless).unwrap();
        let design = DesignSpec::new(12, 14, pr, pr, capless, policy, 0.1).unwrap();
        let eval = DesignEvaluator::new(&design).unwrap();
        let tau = eval.calibrate(capless.rate(), EvalMethod::Exact).unwrap();
        let rx = eval.operating_characteristics(&s, tau, EvalMethod::Exact, 0.05).unwrap();
        let rm = eval
            .operating_characteristics(
                &s,
                tau,
                EvalMethod::MonteCarlo { n_sims: 8_192, seed: 5 },
                0.05,
            )
            .unwrap();
        check(
            &mut failures,
            rx.mean_pmd == 0.0 && rm.mean_pmd == 0.0 && rx.eess == 0.0 && rm.eess == 0.0,
            "zero cap forces zero influence in both modes".into(),
        );
    }

    // Monte Carlo results do not depend on worker count.
    {
        let hist = HistoricalControl::new(18, 60, 15).unwrap();
        let policy =
            BorrowingPolicy::from_historical(Method::BayesianP { eta: 1.0 }, 0.15, &hist).unwrap();
        let pr = prior(0.5, 0.5);
        let design = DesignSpec::new(14, 14, pr, pr, hist, policy, 0.1).unwrap();
        let eval = DesignEvaluator::new(&design).unwrap();
        let tau = eval.calibrate(hist.rate(), EvalMethod::Exact).unwrap();
        let s = Scenario::new(0.35, 0.55, hist.rate()).unwrap();
        let mc = EvalMethod::MonteCarlo { n_sims: 16_384, seed: 11 };
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| eval.operating_characteristics(&s, tau, mc, 0.05).unwrap())
        };
        let (r1, r3) = (run(1), run(3));
        check(
            &mut failures,
            r1 == r3,
            "monte carlo bit-identical across worker counts".into(),
        );
    }

    // The size search evaluates the whole grid and is reproducible.
    {
        let constraints = OptimizationConstraints::new(0.5, 0.2, 1.0, 1.0, 0.05, 0.05).unwrap();
        let grid = candidate_grid(8, 11, 1.0, 1.0).unwrap();
        let pr = prior(0.5, 0.5);
        let run = || {
            min_sample_size(
                &grid,
                &constraints,
                Method::EmpiricalBayes,
                0.15,
                12,
                40,
                &pr,
                &pr,
            )
            .unwrap()
        };
        let (o1, o2) = (run(), run());
        check(
            &mut failures,
            o1 == o2 && o1.table().len() == grid.len(),
            "size search reproducible and exhaustive over the grid".into(),
        );
    }

    report(7, "module invariant suite", failures);
}

fn alphas_for(k: usize) -> f64 {
    [0.05, 0.1, 0.2][k % 3]
}
