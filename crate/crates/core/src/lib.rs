//! Controlled invariant sets of discrete-time switched nonlinear systems by
//! interval branch-and-prune, with partition-based controller extraction.

pub mod config;
pub mod controller;
pub mod expr;
pub mod harness;
pub mod interval;
pub mod paving;
pub mod synthesis;
pub mod system;

pub use config::{load_config, ConfigError, SystemConfig};
pub use controller::{
    export_abstraction, simulate, Controller, ControllerError, SimTrace, SwitchPolicy, Transition,
};
pub use expr::{parse, Expr, ExprError};
pub use harness::{RunOptions, RunOutcome, RunReport};
pub use interval::{Interval, IntervalBox, IntervalError, Rounding};
pub use paving::{ClassifiedPaving, ModeSet, PavingError, Region};
pub use synthesis::{
    certify, cpre, inner_approx, margin_probe, outer_approx, ApproxKind, Outcome, SynthesisConfig,
    SynthesisError, SynthesisResult, WorklistOrder,
};
pub use system::{InclusionStrategy, Mode, SwitchedSystem, SystemError};
