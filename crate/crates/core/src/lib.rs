//! Predictive runtime monitoring of Gaussian flowpipes.
//!
//! A flowpipe is a sequence of per-timestamp Gaussians produced by a stochastic
//! predictor. Formulas with confidence-annotated atoms are checked against it in a
//! strong (whole confidence interval satisfies) and a weak (some point satisfies)
//! sense, or queried for the range of confidence levels at which they hold. The
//! same machinery scores uncertainty-estimation schemas for calibration.
//!
//! ```
//! use stlu::{parse, verdict, Flowpipe, GaussianPoint};
//!
//! let fp = Flowpipe::single("x", 100, vec![GaussianPoint::new(0.0, 1.0).unwrap()]).unwrap();
//! let phi = parse("x < 0.1 @ 0.95").unwrap();
//! let v = verdict(&phi, &fp, 0).unwrap();
//! assert!(!v.strong && v.weak);
//! ```

pub mod calibrate;
pub mod confidence;
pub mod error;
pub mod flowpipe;
pub mod formula;
pub mod monitor;
pub mod normal;
pub mod parallel;
pub mod predictor;

pub use calibrate::{
    average_loss, eval_metrics, g_components, indicators_sat, loss_cf, loss_sat, select_schema, CalibrationSample,
    CalibrationWeights, Candidate, Criterion, FlowpipeGenerator, LabeledPair, Metrics, Selection,
};
pub use confidence::{atom_strong_range, atom_weak_range, ranges, strong_range, weak_range, IntervalSet};
pub use error::{Error, EvalError, ParseError, ParseErrorKind, Result};
pub use flowpipe::{
    confidence_interval, coverage_level, flowpipe_from_samples, trace_in_flowpipe, validate_flowpipe,
    ConfidenceInterval, Flowpipe, FlowpipeDoc, GaussianPoint, PointRecord, Trace, Violation,
};
pub use formula::{parse, Atom, Confidence, Expr, Formula, TimeInterval};
pub use monitor::{strong_sat, trace_sat, verdict, weak_sat, EpsilonPolicy, Monitor, Verdict};
pub use predictor::{fit_ar, mc_predict, sample_mask, ArGenerator, McOptions, Schema, Srt, ToyArModel};
