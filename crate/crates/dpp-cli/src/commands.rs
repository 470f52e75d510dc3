//! The five subcommands: each resolves the sections it needs, runs the
//! library, and writes one provenance-stamped results file.

use crate::config::{Mode, RunConfig, SimulationSection};
use crate::output::{e2, p6, provenance, write_table};
use crate::record::{self, CalibrationRecord};
use crate::CliError;
use dpp_core::borrowing::{dynamic_weight, eess_report, overall_weight};
use dpp_core::optimizer::{candidate_grid, min_sample_size};
use dpp_core::{
    DesignCandidate, DesignEvaluator, DesignSpec, EvalMethod, OptimizationConstraints,
    SearchOutcome,
};
use std::path::{Path, PathBuf};

fn out_path(out: Option<PathBuf>, default: &str) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(default))
}

fn eval_method(sim: &SimulationSection) -> EvalMethod {
    match sim.mode {
        // Validation guarantees n_sims and seed are present in mc mode.
        Mode::Exact => EvalMethod::Exact,
        Mode::Mc => EvalMethod::MonteCarlo {
            n_sims: sim.n_sims.expect("validated"),
            seed: sim.seed.expect("validated"),
        },
    }
}

fn design_spec(cfg: &RunConfig, alpha: f64) -> Result<DesignSpec, CliError> {
    let r = cfg.resolve().map_err(CliError::Config)?;
    Ok(DesignSpec::new(
        cfg.design.n_c,
        cfg.design.n_t,
        r.prior_c,
        r.prior_t,
        r.hist,
        r.policy,
        alpha,
    )?)
}

/// Dynamic and overall weights at each requested control rate, one row
/// block per control hyperprior. Rates are converted to the nearest
/// responder count; the gate evaluates at the realized rate y_c / n_c.
pub fn weights(cfg: &RunConfig, echo: &str, out: Option<PathBuf>) -> Result<(), CliError> {
    let r = cfg.resolve().map_err(CliError::Config)?;
    let sc = cfg
        .scenarios
        .as_ref()
        .ok_or_else(|| CliError::Config("a [scenarios] section with p_c is required".into()))?;
    let n_c = cfg.design.n_c;

    let mut priors = vec![cfg.design.prior_control];
    priors.extend(cfg.design.weight_priors.iter().copied());

    let mut rows = Vec::new();
    for pair in priors {
        let prior = dpp_core::BetaParams::new(pair[0], pair[1])?;
        for &p in &sc.p_c {
            let y_c = (p * n_c as f64).round() as u64;
            let w_d = dynamic_weight(y_c, n_c, &r.hist, &prior, &r.policy)?;
            let p_hat_c = y_c as f64 / n_c as f64;
            let w = overall_weight(w_d, &r.policy, p_hat_c, r.hist.rate());
            rows.push(format!(
                "{},{},{},{},{},{}",
                r.method.tag(),
                pair[0],
                pair[1],
                y_c,
                p6(w_d),
                p6(w)
            ));
        }
    }

    let path = out_path(out, "dpp-weights.csv");
    write_table(
        &path,
        &provenance(cfg.effective_seed(), echo),
        "method,prior_alpha,prior_beta,y_c,w_d,w",
        &rows,
    )
    .map_err(CliError::Config)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

/// Calibrates the decision threshold at the null (both rates equal to the
/// observed historical rate) and writes the record `oc` consumes.
pub fn calibrate(cfg: &RunConfig, echo: &str, out: Option<PathBuf>) -> Result<(), CliError> {
    let sim = cfg.simulation().map_err(CliError::Config)?.clone();
    let r = cfg.resolve().map_err(CliError::Config)?;
    let design = design_spec(cfg, sim.alpha)?;
    let p_null = r.hist.rate();
    let method = eval_method(&sim);
    let tau = dpp_core::engine::calibrate_tau(&design, p_null, method)?;

    let n_sims = match method {
        EvalMethod::Exact => "exact".to_string(),
        EvalMethod::MonteCarlo { n_sims, .. } => n_sims.to_string(),
    };
    let rec = CalibrationRecord {
        fingerprint: record::fingerprint(cfg, &r, sim.alpha),
        tau,
        mode: sim.mode.name().to_string(),
        n_sims: n_sims.clone(),
        seed: cfg.effective_seed(),
        alpha: sim.alpha,
        p_null,
    };
    let path = out_path(out, record::DEFAULT_PATH);
    let mut text = provenance(cfg.effective_seed(), echo);
    text.push_str(&rec.to_text());
    std::fs::write(&path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;

    println!(
        "tau={} mode={} n_sims={} seed={}",
        p6(tau),
        sim.mode.name(),
        n_sims,
        cfg.effective_seed()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn resolve_tau(cfg: &RunConfig, sim: &SimulationSection, alpha: f64) -> Result<f64, CliError> {
    if let Some(tau) = sim.tau {
        return Ok(tau);
    }
    let r = cfg.resolve().map_err(CliError::Config)?;
    let path = sim
        .calibration_record
        .clone()
        .unwrap_or_else(|| record::DEFAULT_PATH.to_string());
    record::read_tau(Path::new(&path), &record::fingerprint(cfg, &r, alpha))
        .map_err(CliError::Config)
}

const OC_HEADER: &str = "method,delta_max,n_ch_e,p_c,p_t,tau,reject_prob,mean_pmd,sd_pmd,\
                         xi_eps,eess,mode,n_sims,mc_se";

/// Operating characteristics at every configured scenario under one fixed
/// threshold. An empty scenario cross product writes a header-only file.
pub fn oc(cfg: &RunConfig, echo: &str, out: Option<PathBuf>) -> Result<(), CliError> {
    let sim = cfg.simulation().map_err(CliError::Config)?.clone();
    let r = cfg.resolve().map_err(CliError::Config)?;
    let tau = resolve_tau(cfg, &sim, sim.alpha)?;
    let scenarios = cfg.scenario_list(r.hist.rate()).map_err(CliError::Config)?;

    let mut rows = Vec::with_capacity(scenarios.len());
    if !scenarios.is_empty() {
        let design = design_spec(cfg, sim.alpha)?;
        let evaluator = DesignEvaluator::new(&design)?;
        let results = evaluator.oc_sweep(&scenarios, tau, eval_method(&sim), sim.eps)?;
        for (s, oc) in scenarios.iter().zip(&results) {
            rows.push(format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.method.tag(),
                p6(cfg.borrowing.delta_max),
                r.hist.n_ch_e(),
                p6(s.p_c),
                p6(s.p_t),
                p6(oc.tau),
                p6(oc.type_metric),
                p6(oc.mean_pmd),
                p6(oc.sd_pmd),
                p6(oc.xi_eps),
                e2(oc.eess),
                sim.mode.name(),
                oc.n_sims,
                p6(oc.mc_se)
            ));
        }
    }

    let path = out_path(out, "dpp-oc.csv");
    write_table(
        &path,
        &provenance(cfg.effective_seed(), echo),
        OC_HEADER,
        &rows,
    )
    .map_err(CliError::Config)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

/// Expected effective sample size at each configured control rate, in both
/// readings: `eess` counts subjects against the borrowing cap, `eess_alt`
/// additionally scales by the global fraction.
pub fn eess(cfg: &RunConfig, echo: &str, out: Option<PathBuf>) -> Result<(), CliError> {
    let r = cfg.resolve().map_err(CliError::Config)?;
    let sc = cfg
        .scenarios
        .as_ref()
        .ok_or_else(|| CliError::Config("a [scenarios] section with p_c is required".into()))?;

    let mut rows = Vec::with_capacity(sc.p_c.len());
    for &p_c in &sc.p_c {
        let report = eess_report(cfg.design.n_c, p_c, &r.hist, &r.prior_c, &r.policy)?;
        rows.push(format!(
            "{},{},{},{},{},{}",
            r.method.tag(),
            p6(cfg.borrowing.delta_max),
            r.hist.n_ch_e(),
            p6(p_c),
            e2(report.adopted),
            e2(report.alternative)
        ));
    }

    let path = out_path(out, "dpp-eess.csv");
    write_table(
        &path,
        &provenance(cfg.effective_seed(), echo),
        "method,delta_max,n_ch_e,p_c,eess,eess_alt",
        &rows,
    )
    .map_err(CliError::Config)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn candidate_row(c: &DesignCandidate) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        c.method,
        c.n_t,
        c.n_c,
        c.n_ch_e,
        c.n_t + c.n_c + c.n_ch_e,
        p6(c.tau),
        p6(c.power),
        p6(c.type_i),
        e2(c.eess),
        p6(c.max_abs_mean_pmd),
        p6(c.max_xi_eps),
        c.feasible
    )
}

fn selection_line(label: &str, c: &DesignCandidate) -> String {
    format!(
        "{label} n_t={} n_c={} n_ch_e={} total={} tau={} power={} type_i={} eess={}",
        c.n_t,
        c.n_c,
        c.n_ch_e,
        c.n_t + c.n_c + c.n_ch_e,
        p6(c.tau),
        p6(c.power),
        p6(c.type_i),
        e2(c.eess)
    )
}

/// Searches the configured grid for the smallest design meeting the power
/// and influence constraints; writes the full candidate table either way.
/// An infeasible grid still exits 0: the INFEASIBLE marker and the table
/// are the result.
pub fn optimize(cfg: &RunConfig, echo: &str, out: Option<PathBuf>) -> Result<(), CliError> {
    let sim = cfg.simulation().map_err(CliError::Config)?;
    let opt = cfg
        .optimize
        .as_ref()
        .ok_or_else(|| CliError::Config("an [optimize] section is required".into()))?;
    let r = cfg.resolve().map_err(CliError::Config)?;

    let grid = candidate_grid(opt.n_c_min, opt.n_c_max, opt.t_ratio, opt.e_multiplier)?;
    let constraints = OptimizationConstraints::new(
        opt.target_power,
        sim.alpha,
        opt.max_mean_pmd,
        opt.max_xi,
        opt.xi_eps,
        opt.discrepancy_band,
    )?;
    let outcome = min_sample_size(
        &grid,
        &constraints,
        r.method,
        cfg.borrowing.delta_max,
        r.hist.y_ch(),
        r.hist.n_ch(),
        &r.prior_c,
        &r.prior_t,
    )?;

    let mut comments = provenance(cfg.effective_seed(), echo);
    match &outcome {
        SearchOutcome::Feasible { selected, .. } => {
            comments.push_str("# outcome=FEASIBLE\n");
            println!("outcome=FEASIBLE");
            println!("{}", selection_line("selected", selected));
        }
        SearchOutcome::Infeasible { best_power, .. } => {
            comments.push_str("# outcome=INFEASIBLE\n");
            println!("outcome=INFEASIBLE");
            println!("no candidate meets the constraints; closest by power:");
            println!("{}", selection_line("best", best_power));
        }
    }

    let rows: Vec<String> = outcome.table().iter().map(candidate_row).collect();
    let path = out_path(out, "dpp-candidates.csv");
    write_table(
        &path,
        &comments,
        "method,n_t,n_c,n_ch_e,total,tau,power,type_i,eess,max_abs_mean_pmd,max_xi_eps,feasible",
        &rows,
    )
    .map_err(CliError::Config)?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}
