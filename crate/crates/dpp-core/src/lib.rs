//! Dynamic-power-prior borrowing designs for binary-endpoint trials.
//!
//! The crate is organized bottom-up:
//!
//! * [`beta`] — beta-distribution special functions (log-beta, pdf, cdf,
//!   quantile) and the probability-of-superiority integral.
//! * [`borrowing`] — the four dynamic similarity weights (empirical Bayes,
//!   Bayesian P, generalized Bhattacharyya, Jensen-Shannon), the gated
//!   overall weight, and expected effective sample size.
//! * [`posterior`] — hybrid control posterior, posterior means, posterior
//!   mean difference, and the superiority decision.
//! * [`engine`] — trial simulation, threshold calibration, and operating
//!   characteristics by Monte Carlo or exact enumeration.
//! * [`optimizer`] — grid search for minimal sample sizes under power and
//!   historical-influence constraints.
//!
//! All public operations are pure value-in/value-out functions (or methods on
//! an explicitly constructed evaluator) and are safe to call concurrently.

pub mod beta;
pub mod borrowing;
pub mod engine;
pub mod error;
pub mod optimizer;
pub mod posterior;

mod gauss;

pub use beta::BetaParams;
pub use borrowing::{BorrowingPolicy, HistoricalControl, Method};
pub use engine::{DesignEvaluator, DesignSpec, EvalMethod, OcResult, Scenario, SimCount};
pub use error::{Error, Result};
pub use optimizer::{
    CandidateSpec, DesignCandidate, OptimizationConstraints, SearchOutcome, SweepRow,
};
pub use posterior::{Decision, PosteriorPair, TrialOutcome};
