//! Calibration record: a small key=value file tying a calibrated threshold
//! to a fingerprint of the design that produced it.
//!
//! `oc` refuses a record whose fingerprint does not match the current
//! configuration, so a threshold can never silently cross designs.

use crate::config::{Resolved, RunConfig};
use crate::output::sha256_hex;
use dpp_core::Method;
use std::collections::BTreeMap;
use std::path::Path;

pub const DEFAULT_PATH: &str = "dpp-calibration.txt";

/// Hash of everything the calibrated threshold depends on: arm sizes,
/// hyperpriors, historical data, borrowing policy, and the significance
/// level. Mode and seed are deliberately excluded; they describe how the
/// threshold was estimated, not which design it belongs to.
pub fn fingerprint(cfg: &RunConfig, r: &Resolved, alpha: f64) -> String {
    let method = match r.method {
        Method::EmpiricalBayes => "eb".into(),
        Method::BayesianP { eta } => format!("bp;eta={eta:.17e}"),
        Method::GeneralizedBc { theta, eta } => format!("gbc;theta={theta:.17e};eta={eta:.17e}"),
        Method::Jsd { eta } => format!("jsd;eta={eta:.17e}"),
        Method::Fixed => "fixed".into(),
    };
    let canon = format!(
        "v1|n_c={}|n_t={}|prior_c={:.17e},{:.17e}|prior_t={:.17e},{:.17e}\
         |y_ch={}|n_ch={}|n_ch_e={}|method={}|delta_max={:.17e}|alpha={:.17e}",
        cfg.design.n_c,
        cfg.design.n_t,
        r.prior_c.alpha(),
        r.prior_c.beta(),
        r.prior_t.alpha(),
        r.prior_t.beta(),
        r.hist.y_ch(),
        r.hist.n_ch(),
        r.hist.n_ch_e(),
        method,
        cfg.borrowing.delta_max,
        alpha,
    );
    sha256_hex(&canon)
}

pub struct CalibrationRecord {
    pub fingerprint: String,
    pub tau: f64,
    pub mode: String,
    pub n_sims: String,
    pub seed: u64,
    pub alpha: f64,
    pub p_null: f64,
}

impl CalibrationRecord {
    /// Serializes with the threshold at full precision so `oc` reproduces
    /// the calibrated decision rule bit for bit.
    pub fn to_text(&self) -> String {
        format!(
            "tool_version={}\nfingerprint={}\ntau={:.17e}\nmode={}\nn_sims={}\nseed={}\nalpha={}\np_null={}\n",
            env!("CARGO_PKG_VERSION"),
            self.fingerprint,
            self.tau,
            self.mode,
            self.n_sims,
            self.seed,
            self.alpha,
            self.p_null,
        )
    }
}

/// Reads the threshold for this configuration, or explains what to run.
pub fn read_tau(path: &Path, expected_fingerprint: &str) -> Result<f64, String> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        format!(
            "no calibration record at {}: run `calibrate` with this configuration first, \
             or set simulation.tau",
            path.display()
        )
    })?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let found = map
        .get("fingerprint")
        .ok_or_else(|| format!("{}: missing fingerprint line", path.display()))?;
    if found != expected_fingerprint {
        return Err(format!(
            "calibration record {} belongs to a different design: \
             re-run `calibrate` with this configuration",
            path.display()
        ));
    }
    map.get("tau")
        .ok_or_else(|| format!("{}: missing tau line", path.display()))?
        .parse::<f64>()
        .map_err(|e| format!("{}: bad tau value: {e}", path.display()))
}
