//! Run configuration: one TOML document with named sections, strictly
//! validated before any computation runs.
//!
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default. Sections beyond `[design]` and `[borrowing]` are optional;
//! each subcommand demands the sections it reads.

use clap::ValueEnum;
use dpp_core::{BetaParams, BorrowingPolicy, HistoricalControl, Method, Scenario};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub design: DesignSection,
    pub borrowing: BorrowingSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<ScenarioSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub n_c: u64,
    pub n_t: u64,
    /// Control-arm hyperprior as a (alpha, beta) shape pair.
    pub prior_control: [f64; 2],
    /// Treatment-arm hyperprior as a (alpha, beta) shape pair.
    pub prior_treatment: [f64; 2],
    /// Extra control hyperpriors appended to the `weights` table; every
    /// other subcommand ignores them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weight_priors: Vec<[f64; 2]>,
    pub historical: HistoricalSection,
}

/// Historical control data, entered as a responder count or as an observed
/// rate. Exactly one of `y_ch` and `rate` must be present; a rate is
/// converted by rounding to the nearest responder count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoricalSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_ch: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    pub n_ch: u64,
    /// Equivalent historical subjects the design may borrow at most.
    pub n_ch_e: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BorrowingSection {
    pub method: MethodTag,
    /// Tuning power for bp, gbc, and jsd; rejected for other methods.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Skew parameter for gbc; rejected for other methods.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Gate threshold; the gate opens only when the observed control rates
    /// differ by strictly less than this. Zero disables borrowing; `inf`
    /// leaves the gate always open.
    pub delta_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodTag {
    Eb,
    Bp,
    Gbc,
    Jsd,
    Fixed,
}

impl MethodTag {
    fn name(self) -> &'static str {
        match self {
            MethodTag::Eb => "eb",
            MethodTag::Bp => "bp",
            MethodTag::Gbc => "gbc",
            MethodTag::Jsd => "jsd",
            MethodTag::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default)]
    pub mode: Mode,
    /// Trial count for mc mode; required there, ignored in exact mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_sims: Option<u64>,
    /// Stream seed for mc mode; required there, ignored in exact mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub alpha: f64,
    /// Influence threshold for the exceedance probability column.
    pub eps: f64,
    /// Explicit decision threshold; when absent `oc` reads the calibration
    /// record instead.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Calibration record path; defaults to dpp-calibration.txt.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration_record: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Exact,
    Mc,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    /// True concurrent-control rates.
    pub p_c: Vec<f64>,
    #[serde(default)]
    pub p_t_rule: PtRule,
    /// Treatment-rate entries, crossed with `p_c`. Under `offset` each
    /// entry is added to p_c; under `absolute` it is used as is.
    #[serde(default)]
    pub p_t: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PtRule {
    #[default]
    Offset,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub n_c_min: u64,
    pub n_c_max: u64,
    /// Treatment arm size as a multiple of n_c, rounded to the nearest
    /// integer.
    pub t_ratio: f64,
    /// Borrowing cap as a multiple of n_c, rounded to the nearest integer.
    pub e_multiplier: f64,
    pub target_power: f64,
    pub max_mean_pmd: f64,
    pub max_xi: f64,
    pub xi_eps: f64,
    pub discrepancy_band: f64,
}

/// Core-library objects resolved from the design and borrowing sections.
#[derive(Debug)]
pub struct Resolved {
    pub prior_c: BetaParams,
    pub prior_t: BetaParams,
    pub hist: HistoricalControl,
    pub method: Method,
    pub policy: BorrowingPolicy,
}

impl BorrowingSection {
    pub fn method(&self) -> Result<Method, String> {
        let name = self.method.name();
        let eta = || {
            self.eta
                .ok_or_else(|| format!("borrowing.eta is required for method {name}"))
        };
        let no_eta = || match self.eta {
            Some(_) => Err(format!("borrowing.eta is not a parameter of method {name}")),
            None => Ok(()),
        };
        let no_theta = || match self.theta {
            Some(_) => Err(format!("borrowing.theta is not a parameter of method {name}")),
            None => Ok(()),
        };
        match self.method {
            MethodTag::Eb => {
                no_eta()?;
                no_theta()?;
                Ok(Method::EmpiricalBayes)
            }
            MethodTag::Fixed => {
                no_eta()?;
                no_theta()?;
                Ok(Method::Fixed)
            }
            MethodTag::Bp => {
                no_theta()?;
                Ok(Method::BayesianP { eta: eta()? })
            }
            MethodTag::Jsd => {
                no_theta()?;
                Ok(Method::Jsd { eta: eta()? })
            }
            MethodTag::Gbc => {
                let theta = self
                    .theta
                    .ok_or_else(|| format!("borrowing.theta is required for method {name}"))?;
                Ok(Method::GeneralizedBc { theta, eta: eta()? })
            }
        }
    }
}

impl HistoricalSection {
    pub fn resolve(&self) -> Result<HistoricalControl, String> {
        let hist = match (self.y_ch, self.rate) {
            (Some(y), None) => HistoricalControl::new(y, self.n_ch, self.n_ch_e),
            (None, Some(r)) => HistoricalControl::from_rate(r, self.n_ch, self.n_ch_e),
            (Some(_), Some(_)) => {
                return Err("design.historical: give either y_ch or rate, not both".into())
            }
            (None, None) => {
                return Err("design.historical: one of y_ch or rate is required".into())
            }
        };
        hist.map_err(|e| format!("design.historical: {e}"))
    }
}

fn shape_pair(field: &str, pair: [f64; 2]) -> Result<BetaParams, String> {
    BetaParams::new(pair[0], pair[1]).map_err(|e| format!("{field}: {e}"))
}

impl RunConfig {
    /// Builds every core object the design and borrowing sections describe.
    /// The global borrowing fraction always comes from n_ch_e / n_ch.
    pub fn resolve(&self) -> Result<Resolved, String> {
        let prior_c = shape_pair("design.prior_control", self.design.prior_control)?;
        let prior_t = shape_pair("design.prior_treatment", self.design.prior_treatment)?;
        for (i, &pair) in self.design.weight_priors.iter().enumerate() {
            shape_pair(&format!("design.weight_priors[{i}]"), pair)?;
        }
        let hist = self.design.historical.resolve()?;
        let method = self.borrowing.method()?;
        let policy = BorrowingPolicy::from_historical(method, self.borrowing.delta_max, &hist)
            .map_err(|e| format!("borrowing: {e}"))?;
        Ok(Resolved {
            prior_c,
            prior_t,
            hist,
            method,
            policy,
        })
    }

    /// Full up-front validation: every present section is checked against
    /// the library preconditions before any command computes anything.
    pub fn validate(&self) -> Result<(), String> {
        self.resolve()?;
        if self.design.n_c == 0 || self.design.n_t == 0 {
            return Err("design: arm sizes must be positive".into());
        }
        if let Some(sim) = &self.simulation {
            if !(sim.alpha > 0.0 && sim.alpha < 1.0) {
                return Err(format!(
                    "simulation.alpha must be in (0,1), got {}",
                    sim.alpha
                ));
            }
            if !(sim.eps >= 0.0) {
                return Err(format!("simulation.eps must be nonnegative, got {}", sim.eps));
            }
            if let Some(tau) = sim.tau {
                if !(tau > 0.0 && tau < 1.0) {
                    return Err(format!("simulation.tau must be in (0,1), got {tau}"));
                }
            }
            if sim.mode == Mode::Mc {
                match sim.n_sims {
                    None => {
                        return Err(
                            "simulation.n_sims is required in mc mode (or pass --sims)".into()
                        )
                    }
                    Some(0) => return Err("simulation.n_sims must be positive".into()),
                    Some(_) => {}
                }
                if sim.seed.is_none() {
                    return Err("simulation.seed is required in mc mode (or pass --seed)".into());
                }
            }
            // The configuration echo stores integers as signed 64-bit.
            if sim.seed.is_some_and(|s| s > i64::MAX as u64) {
                return Err("simulation.seed must be below 2^63".into());
            }
            if sim.n_sims.is_some_and(|n| n > i64::MAX as u64) {
                return Err("simulation.n_sims must be below 2^63".into());
            }
        }
        if let Some(sc) = &self.scenarios {
            for &p in &sc.p_c {
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("scenarios.p_c entries must be in [0,1], got {p}"));
                }
            }
            if sc.p_t_rule == PtRule::Absolute {
                for &p in &sc.p_t {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(format!("scenarios.p_t entries must be in [0,1], got {p}"));
                    }
                }
            }
        }
        if let Some(opt) = &self.optimize {
            if opt.n_c_min == 0 || opt.n_c_min > opt.n_c_max {
                return Err(format!(
                    "optimize: need 1 <= n_c_min <= n_c_max, got {}..={}",
                    opt.n_c_min, opt.n_c_max
                ));
            }
        }
        Ok(())
    }

    /// The cross product of the scenario rates, with each treatment rate
    /// resolved through the configured rule.
    pub fn scenario_list(&self, p_ch_observed: f64) -> Result<Vec<Scenario>, String> {
        let sc = self
            .scenarios
            .as_ref()
            .ok_or("a [scenarios] section is required for this command")?;
        let mut out = Vec::with_capacity(sc.p_c.len() * sc.p_t.len());
        for &p_c in &sc.p_c {
            for &entry in &sc.p_t {
                let p_t = match sc.p_t_rule {
                    PtRule::Offset => p_c + entry,
                    PtRule::Absolute => entry,
                };
                if !(0.0..=1.0).contains(&p_t) {
                    return Err(format!(
                        "scenarios: p_t = {p_t} falls outside [0,1] (p_c = {p_c}, entry = {entry})"
                    ));
                }
                out.push(Scenario::new(p_c, p_t, p_ch_observed).map_err(|e| e.to_string())?);
            }
        }
        Ok(out)
    }

    pub fn simulation(&self) -> Result<&SimulationSection, String> {
        self.simulation
            .as_ref()
            .ok_or_else(|| "a [simulation] section is required for this command".into())
    }

    pub fn effective_seed(&self) -> u64 {
        self.simulation.as_ref().and_then(|s| s.seed).unwrap_or(0)
    }
}
