//! Branch-and-prune approximation of maximal controlled invariant sets.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::interval::{IntervalBox, Rounding};
use crate::paving::{ClassifiedPaving, ModeSet, PavingError, Region};
use crate::system::{InclusionStrategy, SwitchedSystem, SystemError};

#[derive(Debug, Clone, Error)]
pub enum SynthesisError {
    #[error("invalid synthesis configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Domain(#[from] SystemError),
    #[error(transparent)]
    Paving(#[from] PavingError),
    #[error("iteration budget of {budget} sweeps exceeded")]
    IterationBudgetExceeded {
        budget: usize,
        partial: Box<SynthesisResult>,
    },
    #[error("certification failed: no recorded mode maps box {0} into the result")]
    CertificationFailure(String),
}

/// Order in which a sequential sweep pops boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WorklistOrder {
    #[default]
    Lifo,
    Fifo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Boxes narrower than this are not bisected further.
    pub epsilon: f64,
    pub strategy: InclusionStrategy,
    pub rounding: Rounding,
    /// Cap on the number of sweeps.
    pub max_iterations: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub order: WorklistOrder,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            strategy: InclusionStrategy::Natural,
            rounding: Rounding::Outward,
            max_iterations: 1_000_000,
            workers: 0,
            order: WorklistOrder::Lifo,
        }
    }
}

impl SynthesisConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), SynthesisError> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(SynthesisError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(SynthesisError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxKind {
    Outer,
    Inner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Nonempty,
    Empty,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Nonempty => "NONEMPTY",
            Outcome::Empty => "EMPTY",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub kind: ApproxKind,
    pub outcome: Outcome,
    pub region: Region,
    /// Boxes of the last sweep classified inside, with every mode keeping
    /// them in `region`.
    pub cells: Vec<(IntervalBox, ModeSet)>,
    /// Boxes of the last sweep left undetermined (outer results only).
    pub undetermined: Vec<IntervalBox>,
    pub epsilon: f64,
    pub iterations: usize,
    pub boxes_processed: usize,
    pub wall_time: Duration,
    /// Set once the re-verification pass succeeded.
    pub certified: bool,
}

impl SynthesisResult {
    pub fn volume(&self) -> f64 {
        self.region.volume()
    }

    /// Volume of the result over the volume of Ω.
    pub fn volume_ratio(&self) -> f64 {
        self.region.volume() / self.region.root_volume()
    }
}

enum Class {
    Inside(ModeSet),
    Outside,
    Undetermined,
}

fn classify(
    sys: &SwitchedSystem,
    target: &Region,
    b: &IntervalBox,
    cfg: &SynthesisConfig,
) -> Result<Class, SynthesisError> {
    let mut modes = ModeSet::empty(sys.num_modes());
    let mut touches = false;
    for p in 0..sys.num_modes() {
        let img = sys.include(p, b, cfg.strategy, cfg.rounding)?;
        if target.contains_box(&img) {
            modes.insert(p);
            touches = true;
        } else if !touches && target.intersects_box(&img) {
            touches = true;
        }
    }
    Ok(if !modes.is_empty() {
        Class::Inside(modes)
    } else if touches {
        Class::Undetermined
    } else {
        Class::Outside
    })
}

/// Outcome of classifying one box: a final label or its two halves.
enum Step {
    Done(Class, IntervalBox),
    Split(IntervalBox, IntervalBox),
}

fn step(
    sys: &SwitchedSystem,
    target: &Region,
    b: IntervalBox,
    cfg: &SynthesisConfig,
) -> Result<Step, SynthesisError> {
    let c = classify(sys, target, &b, cfg)?;
    if let Class::Undetermined = c {
        if b.width() >= cfg.epsilon {
            let (l, r) = b.bisect().map_err(SystemError::from)?;
            return Ok(Step::Split(l, r));
        }
    }
    Ok(Step::Done(c, b))
}

fn record(out: &mut ClassifiedPaving, c: Class, b: IntervalBox) {
    match c {
        Class::Inside(m) => out.inside.push((b, m)),
        Class::Outside => out.outside.push(b),
        Class::Undetermined => out.undetermined.push(b),
    }
}

/// One classification sweep of `boxes` against `target`.
///
/// Each box goes to `outside` when every mode maps it off `target`, to
/// `inside` (with all modes mapping it into `target`) when some mode does,
/// and is otherwise bisected until narrower than `epsilon`. Output lists are
/// sorted canonically, so they do not depend on worklist order or worker
/// count.
pub fn cpre(
    sys: &SwitchedSystem,
    target: &Region,
    boxes: &[IntervalBox],
    cfg: &SynthesisConfig,
) -> Result<ClassifiedPaving, SynthesisError> {
    cfg.validate()?;
    let pool = thread_pool(cfg)?;
    cpre_in(&pool, sys, target, boxes, cfg)
}

fn thread_pool(cfg: &SynthesisConfig) -> Result<rayon::ThreadPool, SynthesisError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| SynthesisError::InvalidConfig(e.to_string()))
}

fn cpre_in(
    pool: &rayon::ThreadPool,
    sys: &SwitchedSystem,
    target: &Region,
    boxes: &[IntervalBox],
    cfg: &SynthesisConfig,
) -> Result<ClassifiedPaving, SynthesisError> {
    let mut out = if pool.current_num_threads() <= 1 {
        sweep_sequential(sys, target, boxes, cfg)?
    } else {
        pool.install(|| sweep_parallel(sys, target, boxes, cfg))?
    };
    out.sort();
    Ok(out)
}

fn sweep_sequential(
    sys: &SwitchedSystem,
    target: &Region,
    boxes: &[IntervalBox],
    cfg: &SynthesisConfig,
) -> Result<ClassifiedPaving, SynthesisError> {
    let mut out = ClassifiedPaving::default();
    let mut list: VecDeque<IntervalBox> = boxes.iter().cloned().collect();
    loop {
        let next = match cfg.order {
            WorklistOrder::Lifo => list.pop_back(),
            WorklistOrder::Fifo => list.pop_front(),
        };
        let Some(b) = next else { break };
        out.processed += 1;
        match step(sys, target, b, cfg)? {
            Step::Done(c, b) => record(&mut out, c, b),
            Step::Split(l, r) => {
                if cfg.order == WorklistOrder::Lifo {
                    list.push_back(r);
                    list.push_back(l);
                } else {
                    list.push_back(l);
                    list.push_back(r);
                }
            }
        }
    }
    Ok(out)
}

/// Breadth-first sweep: every generation of boxes is classified in parallel.
fn sweep_parallel(
    sys: &SwitchedSystem,
    target: &Region,
    boxes: &[IntervalBox],
    cfg: &SynthesisConfig,
) -> Result<ClassifiedPaving, SynthesisError> {
    let mut out = ClassifiedPaving::default();
    let mut frontier: Vec<IntervalBox> = boxes.to_vec();
    while !frontier.is_empty() {
        out.processed += frontier.len();
        let steps = frontier
            .into_par_iter()
            .with_min_len(64)
            .map(|b| step(sys, target, b, cfg))
            .collect::<Result<Vec<_>, _>>()?;
        frontier = Vec::new();
        for s in steps {
            match s {
                Step::Done(c, b) => record(&mut out, c, b),
                Step::Split(l, r) => {
                    frontier.push(l);
                    frontier.push(r);
                }
            }
        }
    }
    Ok(out)
}

fn check_omega(omega: &Region) -> Result<(), SynthesisError> {
    if omega.is_empty() {
        return Err(SynthesisError::InvalidConfig("omega is empty".into()));
    }
    if !omega.hull().is_finite() {
        return Err(SynthesisError::InvalidConfig("omega is unbounded".into()));
    }
    Ok(())
}

/// Outer approximation: repeatedly drops boxes whose images leave the current
/// set under every mode, until a sweep drops nothing.
pub fn outer_approx(
    sys: &SwitchedSystem,
    omega: &Region,
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult, SynthesisError> {
    cfg.validate()?;
    check_omega(omega)?;
    let start = Instant::now();
    let pool = thread_pool(cfg)?;
    let roots = omega.roots();
    let mut y = omega.clone();
    let mut x = omega.leaves_in();
    let mut processed = 0;
    let mut iterations = 0;
    loop {
        if iterations == cfg.max_iterations {
            let partial = SynthesisResult {
                kind: ApproxKind::Outer,
                outcome: outcome_of(&y),
                region: y,
                cells: Vec::new(),
                undetermined: x,
                epsilon: cfg.epsilon,
                iterations,
                boxes_processed: processed,
                wall_time: start.elapsed(),
                certified: false,
            };
            return Err(SynthesisError::IterationBudgetExceeded {
                budget: cfg.max_iterations,
                partial: Box::new(partial),
            });
        }
        iterations += 1;
        let cp = cpre_in(&pool, sys, &y, &x, cfg)?;
        processed += cp.processed;
        if cp.outside.is_empty() {
            return Ok(SynthesisResult {
                kind: ApproxKind::Outer,
                outcome: outcome_of(&y),
                region: y,
                cells: cp.inside,
                undetermined: cp.undetermined,
                epsilon: cfg.epsilon,
                iterations,
                boxes_processed: processed,
                wall_time: start.elapsed(),
                certified: false,
            });
        }
        x = cp.inside.into_iter().map(|(b, _)| b).collect();
        x.extend(cp.undetermined);
        x.sort_by(|a, b| a.canonical_cmp(b));
        y = Region::from_boxes(&roots, &x)?;
    }
}

/// Inner approximation: keeps only boxes some mode maps into the current set,
/// until the set stops changing, then re-verifies the result.
pub fn inner_approx(
    sys: &SwitchedSystem,
    omega: &Region,
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult, SynthesisError> {
    cfg.validate()?;
    check_omega(omega)?;
    let start = Instant::now();
    let pool = thread_pool(cfg)?;
    let roots = omega.roots();
    let mut y = omega.clone();
    let mut x = omega.leaves_in();
    let mut processed = 0;
    let mut iterations = 0;
    let cells = loop {
        if iterations == cfg.max_iterations {
            let partial = SynthesisResult {
                kind: ApproxKind::Inner,
                outcome: outcome_of(&y),
                region: y,
                cells: Vec::new(),
                undetermined: Vec::new(),
                epsilon: cfg.epsilon,
                iterations,
                boxes_processed: processed,
                wall_time: start.elapsed(),
                certified: false,
            };
            return Err(SynthesisError::IterationBudgetExceeded {
                budget: cfg.max_iterations,
                partial: Box::new(partial),
            });
        }
        iterations += 1;
        let cp = cpre_in(&pool, sys, &y, &x, cfg)?;
        processed += cp.processed;
        x = cp.inside.iter().map(|(b, _)| b.clone()).collect();
        let next = Region::from_boxes(&roots, &x)?;
        if next == y || next.is_empty() {
            y = next;
            break cp.inside;
        }
        y = next;
    };
    let mut result = SynthesisResult {
        kind: ApproxKind::Inner,
        outcome: outcome_of(&y),
        region: y,
        cells,
        undetermined: Vec::new(),
        epsilon: cfg.epsilon,
        iterations,
        boxes_processed: processed,
        wall_time: Duration::ZERO,
        certified: false,
    };
    if result.outcome == Outcome::Nonempty {
        pool.install(|| certify(sys, &result.region, &result.cells, cfg.strategy, cfg.rounding))?;
        result.certified = true;
    }
    result.wall_time = start.elapsed();
    Ok(result)
}

fn outcome_of(r: &Region) -> Outcome {
    if r.is_empty() {
        Outcome::Empty
    } else {
        Outcome::Nonempty
    }
}

/// Checks that every cell has a recorded mode whose image lies in `region`.
pub fn certify(
    sys: &SwitchedSystem,
    region: &Region,
    cells: &[(IntervalBox, ModeSet)],
    strategy: InclusionStrategy,
    rounding: Rounding,
) -> Result<(), SynthesisError> {
    cells.par_iter().try_for_each(|(b, modes)| {
        for p in modes.iter() {
            let img = sys.include(p, b, strategy, rounding)?;
            if region.contains_box(&img) && region.contains_box(b) {
                return Ok(());
            }
        }
        Err(SynthesisError::CertificationFailure(b.to_text()))
    })
}

#[derive(Debug, Clone)]
pub struct MarginProbe {
    /// First precision giving a nonempty inner result.
    pub epsilon: Option<f64>,
    pub result: Option<SynthesisResult>,
    /// Every precision tried, in order.
    pub tried: Vec<f64>,
    /// `rho1 * epsilon` for the successful precision, when a Lipschitz bound
    /// over Ω is available.
    pub margin_probe: Option<f64>,
}

/// Runs [`inner_approx`] at `eps0`, `eps0 * shrink`, ... down to `eps_min`
/// and returns the first nonempty result.
pub fn margin_probe(
    sys: &SwitchedSystem,
    omega: &Region,
    cfg: &SynthesisConfig,
    eps0: f64,
    shrink: f64,
    eps_min: f64,
) -> Result<MarginProbe, SynthesisError> {
    if !(eps0 > eps_min && eps_min > 0.0) {
        return Err(SynthesisError::InvalidConfig(format!(
            "need eps0 > eps_min > 0, got {eps0} and {eps_min}"
        )));
    }
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(SynthesisError::InvalidConfig(format!(
            "shrink must lie in (0, 1), got {shrink}"
        )));
    }
    let mut tried = Vec::new();
    let mut eps = eps0;
    while eps >= eps_min {
        tried.push(eps);
        let run_cfg = SynthesisConfig {
            epsilon: eps,
            ..cfg.clone()
        };
        let res = inner_approx(sys, omega, &run_cfg)?;
        if res.outcome == Outcome::Nonempty {
            let margin = sys.estimate_rho1(&omega.hull()).ok().map(|l| l.rho1 * eps);
            return Ok(MarginProbe {
                epsilon: Some(eps),
                result: Some(res),
                tried,
                margin_probe: margin,
            });
        }
        eps *= shrink;
    }
    Ok(MarginProbe {
        epsilon: None,
        result: None,
        tried,
        margin_probe: None,
    })
}
