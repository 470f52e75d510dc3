//! Exhaustive search over candidate designs for the minimum sample size
//! meeting power and historical-influence constraints.
//!
//! Every candidate is evaluated; nothing is pruned by assuming power is
//! monotone in the sample size, because recalibrating the threshold on a
//! discrete outcome grid makes power non-monotone in general. Candidates
//! are cheap to evaluate thanks to the compiled per-design tables, so the
//! exhaustive scan stays fast at realistic grid sizes.

use crate::beta::BetaParams;
use crate::borrowing::{BorrowingPolicy, HistoricalControl, Method};
use crate::engine::{DesignEvaluator, DesignSpec, EvalMethod, OcResult, Scenario};
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Treatment-over-control uplift defining the power scenario
/// (p_t = p_c + 0.2, capped at 1).
pub const POWER_UPLIFT: f64 = 0.2;

/// One point of the search grid: explicit arm sizes and borrowing cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateSpec {
    pub n_c: u64,
    pub n_t: u64,
    pub n_ch_e: u64,
}

impl CandidateSpec {
    /// Total subjects counted against the design: both concurrent arms plus
    /// the borrowed-information cap.
    pub fn total(&self) -> u64 {
        self.n_c + self.n_t + self.n_ch_e
    }
}

/// Builds the standard grid: n_c over an inclusive range, n_t from the
/// allocation ratio, and n_ch_e from a multiplier of n_c, both rounded to
/// the nearest integer.
pub fn candidate_grid(
    n_c_lo: u64,
    n_c_hi: u64,
    t_ratio: f64,
    e_multiplier: f64,
) -> Result<Vec<CandidateSpec>> {
    if n_c_lo == 0 || n_c_lo > n_c_hi {
        return Err(Error::domain(format!(
            "candidate range must satisfy 1 <= lo <= hi, got {n_c_lo}..={n_c_hi}"
        )));
    }
    if !(t_ratio > 0.0) || !(e_multiplier >= 0.0) {
        return Err(Error::domain(format!(
            "ratio must be positive and multiplier nonnegative, got {t_ratio} and {e_multiplier}"
        )));
    }
    Ok((n_c_lo..=n_c_hi)
        .map(|n_c| CandidateSpec {
            n_c,
            n_t: ((t_ratio * n_c as f64).round() as u64).max(1),
            n_ch_e: (e_multiplier * n_c as f64).round() as u64,
        })
        .collect())
}

/// Feasibility thresholds for the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizationConstraints {
    pub target_power: f64,
    pub alpha: f64,
    /// Largest tolerated |mean posterior-mean difference| at any band point.
    pub max_mean_pmd: f64,
    /// Largest tolerated P(|pmd| > xi_eps) at any band point.
    pub max_xi: f64,
    pub xi_eps: f64,
    /// Half-width of the control-rate band around the historical rate over
    /// which the influence constraints are enforced.
    pub discrepancy_band: f64,
}

impl OptimizationConstraints {
    pub fn new(
        target_power: f64,
        alpha: f64,
        max_mean_pmd: f64,
        max_xi: f64,
        xi_eps: f64,
        discrepancy_band: f64,
    ) -> Result<Self> {
        if !(target_power >= 0.0 && target_power < 1.0) {
            return Err(Error::domain(format!(
                "target_power must be in [0,1), got {target_power}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must be in (0,1), got {alpha}")));
        }
        if !(max_mean_pmd >= 0.0) {
            return Err(Error::domain(format!(
                "max_mean_pmd must be nonnegative, got {max_mean_pmd}"
            )));
        }
        if !(0.0..=1.0).contains(&max_xi) {
            return Err(Error::domain(format!("max_xi must be in [0,1], got {max_xi}")));
        }
        if !(xi_eps >= 0.0) {
            return Err(Error::domain(format!("xi_eps must be nonnegative, got {xi_eps}")));
        }
        if !(discrepancy_band >= 0.0) {
            return Err(Error::domain(format!(
                "discrepancy_band must be nonnegative, got {discrepancy_band}"
            )));
        }
        Ok(OptimizationConstraints {
            target_power,
            alpha,
            max_mean_pmd,
            max_xi,
            xi_eps,
            discrepancy_band,
        })
    }
}

/// A fully evaluated candidate: calibrated threshold, the scenario results
/// behind the feasibility verdict, and summary metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignCandidate {
    pub n_t: u64,
    pub n_c: u64,
    pub n_ch_e: u64,
    pub method: &'static str,
    pub tau: f64,
    /// Rejection probability at p_c = historical rate, p_t = p_c + uplift.
    pub power: f64,
    /// Rejection probability at the calibration point (p_t = p_c).
    pub type_i: f64,
    /// Expected effective historical sample size at the calibration point.
    pub eess: f64,
    /// Worst |mean pmd| across the discrepancy band.
    pub max_abs_mean_pmd: f64,
    /// Worst P(|pmd| > eps) across the discrepancy band.
    pub max_xi_eps: f64,
    pub feasible: bool,
    /// Every scenario evaluated for this candidate with its result.
    pub oc_at: Vec<(Scenario, OcResult)>,
}

/// Search result: the chosen design, or the best-power candidate when no
/// grid point satisfies the constraints. Both carry the full evaluated
/// table, sorted by (total size, n_ch_e, n_c).
#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Feasible {
        selected: DesignCandidate,
        table: Vec<DesignCandidate>,
    },
    Infeasible {
        best_power: DesignCandidate,
        table: Vec<DesignCandidate>,
    },
}

impl SearchOutcome {
    pub fn table(&self) -> &[DesignCandidate] {
        match self {
            SearchOutcome::Feasible { table, .. } | SearchOutcome::Infeasible { table, .. } => {
                table
            }
        }
    }

    pub fn selected(&self) -> Option<&DesignCandidate> {
        match self {
            SearchOutcome::Feasible { selected, .. } => Some(selected),
            SearchOutcome::Infeasible { .. } => None,
        }
    }

    /// The selected design, or the best-power fallback when infeasible.
    pub fn best(&self) -> &DesignCandidate {
        match self {
            SearchOutcome::Feasible { selected, .. } => selected,
            SearchOutcome::Infeasible { best_power, .. } => best_power,
        }
    }
}

struct SearchContext<'a> {
    constraints: &'a OptimizationConstraints,
    method: Method,
    delta_max: f64,
    y_ch: u64,
    n_ch: u64,
    prior_c: &'a BetaParams,
    prior_t: &'a BetaParams,
}

fn power_scenario(p_c: f64, p_hat_ch: f64) -> Result<Scenario> {
    Scenario::new(p_c, (p_c + POWER_UPLIFT).min(1.0), p_hat_ch)
}

fn evaluate_candidate(cand: &CandidateSpec, ctx: &SearchContext) -> Result<DesignCandidate> {
    let hist = HistoricalControl::new(ctx.y_ch, ctx.n_ch, cand.n_ch_e)?;
    let policy = BorrowingPolicy::from_historical(ctx.method, ctx.delta_max, &hist)?;
    let design = DesignSpec::new(
        cand.n_c,
        cand.n_t,
        *ctx.prior_c,
        *ctx.prior_t,
        hist,
        policy,
        ctx.constraints.alpha,
    )?;
    let evaluator = DesignEvaluator::new(&design)?;
    let p_hat_ch = hist.rate();
    let tau = evaluator.calibrate(p_hat_ch, EvalMethod::Exact)?;

    let delta = ctx.constraints.discrepancy_band;
    let mut band = vec![p_hat_ch];
    if delta > 0.0 {
        let (lo, hi) = (p_hat_ch - delta, p_hat_ch + delta);
        if lo < 0.0 || hi > 1.0 {
            return Err(Error::domain(format!(
                "discrepancy band [{lo}, {hi}] leaves the unit interval; shrink the band"
            )));
        }
        band = vec![lo, p_hat_ch, hi];
    }

    let mut scenarios = vec![Scenario::new(p_hat_ch, p_hat_ch, p_hat_ch)?];
    for &b in &band {
        scenarios.push(power_scenario(b, p_hat_ch)?);
    }
    let mut oc_at = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        let r = evaluator.operating_characteristics(
            s,
            tau,
            EvalMethod::Exact,
            ctx.constraints.xi_eps,
        )?;
        oc_at.push((*s, r));
    }

    let type_i = oc_at[0].1.type_metric;
    let eess = oc_at[0].1.eess;
    let mut power = f64::NAN;
    let mut max_abs_mean_pmd: f64 = 0.0;
    let mut max_xi_eps: f64 = 0.0;
    for (s, r) in oc_at.iter().skip(1) {
        if s.p_c == p_hat_ch {
            power = r.type_metric;
        }
        max_abs_mean_pmd = max_abs_mean_pmd.max(r.mean_pmd.abs());
        max_xi_eps = max_xi_eps.max(r.xi_eps);
    }
    let feasible = power >= ctx.constraints.target_power
        && max_abs_mean_pmd <= ctx.constraints.max_mean_pmd
        && max_xi_eps <= ctx.constraints.max_xi;

    Ok(DesignCandidate {
        n_t: cand.n_t,
        n_c: cand.n_c,
        n_ch_e: cand.n_ch_e,
        method: ctx.method.tag(),
        tau,
        power,
        type_i,
        eess,
        max_abs_mean_pmd,
        max_xi_eps,
        feasible,
        oc_at,
    })
}

/// Evaluates every candidate and returns the smallest feasible design.
///
/// For each candidate the threshold is calibrated exactly at
/// p_c = p_t = historical rate; power is read at the historical rate with
/// the standard uplift, and the influence constraints must hold at every
/// band point. Candidates are ordered by total size with ties broken by
/// smaller n_ch_e, then smaller n_c. When nothing is feasible the outcome
/// reports the best-power candidate for diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn min_sample_size(
    candidates: &[CandidateSpec],
    constraints: &OptimizationConstraints,
    method: Method,
    delta_max: f64,
    y_ch: u64,
    n_ch: u64,
    prior_c: &BetaParams,
    prior_t: &BetaParams,
) -> Result<SearchOutcome> {
    if candidates.is_empty() {
        return Err(Error::domain("candidate grid must be non-empty"));
    }
    let ctx = SearchContext {
        constraints,
        method,
        delta_max,
        y_ch,
        n_ch,
        prior_c,
        prior_t,
    };
    let mut table: Vec<DesignCandidate> = candidates
        .par_iter()
        .map(|c| evaluate_candidate(c, &ctx))
        .collect::<Result<_>>()?;
    table.sort_by_key(|c| (c.n_t + c.n_c + c.n_ch_e, c.n_ch_e, c.n_c));

    if let Some(selected) = table.iter().find(|c| c.feasible) {
        return Ok(SearchOutcome::Feasible {
            selected: selected.clone(),
            table,
        });
    }
    let best_power = table
        .iter()
        .max_by(|a, b| {
            a.power
                .total_cmp(&b.power)
                // On equal power prefer the smaller design, which sorts first.
                .then_with(|| (b.n_t + b.n_c + b.n_ch_e).cmp(&(a.n_t + a.n_c + a.n_ch_e)))
        })
        .expect("table is non-empty")
        .clone();
    Ok(SearchOutcome::Infeasible { best_power, table })
}

/// One plotting row of a size-by-scenario sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub n_c: u64,
    pub n_t: u64,
    pub n_ch_e: u64,
    pub p_c: f64,
    pub tau: f64,
    /// Rejection probability at p_t = p_c.
    pub type_i: f64,
    /// Rejection probability at p_t = p_c + uplift.
    pub power: f64,
    pub mean_pmd: f64,
    pub eess: f64,
}

/// Evaluates every candidate at every control rate, recalibrating the
/// threshold per candidate at the historical rate. Deterministic for a
/// fixed seed in Monte Carlo mode.
#[allow(clippy::too_many_arguments)]
pub fn design_sweep(
    candidates: &[CandidateSpec],
    p_c_values: &[f64],
    method: Method,
    delta_max: f64,
    y_ch: u64,
    n_ch: u64,
    prior_c: &BetaParams,
    prior_t: &BetaParams,
    alpha: f64,
    eval: EvalMethod,
    eps: f64,
) -> Result<Vec<SweepRow>> {
    if candidates.is_empty() || p_c_values.is_empty() {
        return Err(Error::domain("sweep requires candidates and p_c values"));
    }
    let mut rows = Vec::with_capacity(candidates.len() * p_c_values.len());
    for cand in candidates {
        let hist = HistoricalControl::new(y_ch, n_ch, cand.n_ch_e)?;
        let policy = BorrowingPolicy::from_historical(method, delta_max, &hist)?;
        let design = DesignSpec::new(
            cand.n_c, cand.n_t, *prior_c, *prior_t, hist, policy, alpha,
        )?;
        let evaluator = DesignEvaluator::new(&design)?;
        let p_hat_ch = hist.rate();
        let tau = evaluator.calibrate(p_hat_ch, eval)?;
        let mut scenarios = Vec::with_capacity(2 * p_c_values.len());
        for &p_c in p_c_values {
            scenarios.push(Scenario::new(p_c, p_c, p_hat_ch)?);
            scenarios.push(power_scenario(p_c, p_hat_ch)?);
        }
        let results = evaluator.oc_sweep(&scenarios, tau, eval, eps)?;
        for (i, &p_c) in p_c_values.iter().enumerate() {
            rows.push(SweepRow {
                n_c: cand.n_c,
                n_t: cand.n_t,
                n_ch_e: cand.n_ch_e,
                p_c,
                tau,
                type_i: results[2 * i].type_metric,
                power: results[2 * i + 1].type_metric,
                mean_pmd: results[2 * i].mean_pmd,
                eess: results[2 * i].eess,
            });
        }
    }
    Ok(rows)
}
