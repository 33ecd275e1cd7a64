//! Partition-based invariance controllers extracted from inner approximations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{midpoint, IntervalBox, Rounding};
use crate::paving::ModeSet;
use crate::synthesis::{ApproxKind, Outcome, SynthesisResult};
use crate::system::{InclusionStrategy, SwitchedSystem, SystemError};

#[derive(Debug, Clone, Error)]
pub enum ControllerError {
    #[error("only nonempty certified inner approximations yield controllers")]
    EmptyResult,
    #[error("initial state {0:?} lies outside the controller domain")]
    InfeasibleStart(Vec<f64>),
    #[error("no admissible mode at step {step} (state {state:?})")]
    ConformanceBreach {
        step: usize,
        state: Vec<f64>,
        trace: Box<SimTrace>,
    },
    #[error("cell {0} is not a canonical subdivision box of omega or overlaps another cell")]
    MisalignedCell(String),
    #[error("controller was built for system {expected}, got {got}")]
    SystemMismatch { expected: String, got: String },
    #[error("unknown mode {0:?}")]
    UnknownMode(String),
    #[error("state has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("malformed controller file: {0}")]
    Malformed(String),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchPolicy {
    /// Keep the previous mode while it stays admissible, else take the first.
    Inertial,
    /// Lowest admissible mode index.
    First,
    /// Uniform choice among admissible modes.
    Random(u64),
}

impl SwitchPolicy {
    /// Parses `inertial`, `first` or `random`; the seed is used by `random`.
    pub fn from_name(name: &str, seed: u64) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "inertial" => Some(Self::Inertial),
            "first" => Some(Self::First),
            "random" => Some(Self::Random(seed)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub states: Vec<Vec<f64>>,
    /// `modes[k]` drives `states[k]` to `states[k + 1]`.
    pub modes: Vec<usize>,
    pub in_omega: Vec<bool>,
}

impl SimTrace {
    pub fn exits(&self) -> usize {
        self.in_omega.iter().filter(|b| !**b).count()
    }
}

/// A transition `(from, mode, to)` between cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Transition {
    pub from: usize,
    pub mode: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Empty,
    Cell(usize),
    Split(Box<[Node; 2]>),
}

fn plane(lo: &[f64], hi: &[f64]) -> (usize, f64) {
    let mut j = 0;
    for i in 1..lo.len() {
        if hi[i] - lo[i] > hi[j] - lo[j] {
            j = i;
        }
    }
    (j, midpoint(lo[j], hi[j]))
}

fn bounds(b: &IntervalBox) -> (Vec<f64>, Vec<f64>) {
    (
        b.dims().iter().map(|d| d.lo()).collect(),
        b.dims().iter().map(|d| d.hi()).collect(),
    )
}

fn insert(root: &IntervalBox, node: &mut Node, q: &IntervalBox, id: usize) -> bool {
    let (mut lo, mut hi) = bounds(root);
    let mut node = node;
    loop {
        let exact = q
            .dims()
            .iter()
            .enumerate()
            .all(|(i, d)| d.lo() == lo[i] && d.hi() == hi[i]);
        if exact {
            if *node != Node::Empty {
                return false;
            }
            *node = Node::Cell(id);
            return true;
        }
        let (j, cut) = plane(&lo, &hi);
        if hi[j] - lo[j] <= q.get(j).width() {
            return false;
        }
        let side = if q.get(j).hi() <= cut {
            0
        } else if q.get(j).lo() >= cut {
            1
        } else {
            return false;
        };
        match node {
            Node::Cell(_) => return false,
            Node::Empty => *node = Node::Split(Box::new([Node::Empty, Node::Empty])),
            Node::Split(_) => {}
        }
        if side == 0 {
            hi[j] = cut;
        } else {
            lo[j] = cut;
        }
        let Node::Split(ch) = node else {
            unreachable!()
        };
        node = &mut ch[side];
    }
}

/// Collects ids of cells whose closed box meets the closed box `[qlo, qhi]`.
fn query(node: &Node, lo: &mut [f64], hi: &mut [f64], qlo: &[f64], qhi: &[f64], out: &mut Vec<usize>) {
    let touches = (0..lo.len()).all(|i| qlo[i] <= hi[i] && lo[i] <= qhi[i]);
    if !touches {
        return;
    }
    match node {
        Node::Empty => {}
        Node::Cell(id) => out.push(*id),
        Node::Split(ch) => {
            let (j, cut) = plane(lo, hi);
            let (l, h) = (lo[j], hi[j]);
            hi[j] = cut;
            query(&ch[0], lo, hi, qlo, qhi, out);
            hi[j] = h;
            lo[j] = cut;
            query(&ch[1], lo, hi, qlo, qhi, out);
            lo[j] = l;
        }
    }
}

/// State-feedback map from points to admissible mode sets, defined cellwise
/// on a paving of the certified invariant region.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    system_hash: String,
    mode_names: Vec<String>,
    omega: Vec<IntervalBox>,
    cells: Vec<(IntervalBox, ModeSet)>,
    index: Vec<Node>,
}

impl Controller {
    fn build(
        system_hash: String,
        mode_names: Vec<String>,
        omega: Vec<IntervalBox>,
        cells: Vec<(IntervalBox, ModeSet)>,
    ) -> Result<Self, ControllerError> {
        let mut index = vec![Node::Empty; omega.len()];
        for (id, (b, m)) in cells.iter().enumerate() {
            if m.is_empty() {
                return Err(ControllerError::MisalignedCell(b.to_text()));
            }
            let slot = omega
                .iter()
                .position(|r| r.dim() == b.dim() && b.is_subset_of(r))
                .ok_or_else(|| ControllerError::MisalignedCell(b.to_text()))?;
            if !insert(&omega[slot], &mut index[slot], b, id) {
                return Err(ControllerError::MisalignedCell(b.to_text()));
            }
        }
        Ok(Self {
            system_hash,
            mode_names,
            omega,
            cells,
            index,
        })
    }

    /// Controller whose cells are the inside boxes of a certified inner result.
    pub fn extract(sys: &SwitchedSystem, result: &SynthesisResult) -> Result<Self, ControllerError> {
        if result.kind != ApproxKind::Inner
            || result.outcome != Outcome::Nonempty
            || !result.certified
            || result.cells.is_empty()
        {
            return Err(ControllerError::EmptyResult);
        }
        Self::build(
            sys.hash(),
            sys.mode_names(),
            result.region.roots(),
            result.cells.clone(),
        )
    }

    pub fn cells(&self) -> &[(IntervalBox, ModeSet)] {
        &self.cells
    }

    pub fn omega(&self) -> &[IntervalBox] {
        &self.omega
    }

    pub fn system_hash(&self) -> &str {
        &self.system_hash
    }

    pub fn dim(&self) -> usize {
        self.omega[0].dim()
    }

    pub fn num_modes(&self) -> usize {
        self.mode_names.len()
    }

    pub fn in_omega(&self, x: &[f64]) -> bool {
        self.omega.iter().any(|r| r.contains_point(x))
    }

    /// Indices of cells whose closed box meets `q`.
    pub fn cells_touching(&self, q: &IntervalBox) -> Vec<usize> {
        let (qlo, qhi) = bounds(q);
        let mut out = Vec::new();
        for (root, node) in self.omega.iter().zip(&self.index) {
            let (mut lo, mut hi) = bounds(root);
            query(node, &mut lo, &mut hi, &qlo, &qhi, &mut out);
        }
        out.sort_unstable();
        out
    }

    /// Union of the mode sets of every cell containing `x`; empty outside the
    /// controller domain.
    pub fn admissible(&self, x: &[f64]) -> ModeSet {
        let mut m = ModeSet::empty(self.num_modes());
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return m;
        }
        for id in self.cells_touching(&IntervalBox::point(x)) {
            m.union_with(&self.cells[id].1);
        }
        m
    }

    /// Serializes as `{system_hash, omega, cells: [{box, modes}]}`.
    pub fn to_json(&self) -> String {
        let file = ControllerFile {
            system_hash: self.system_hash.clone(),
            omega: self.omega.iter().map(IntervalBox::to_flat).collect(),
            cells: self
                .cells
                .iter()
                .map(|(b, m)| CellFile {
                    r#box: b.to_flat(),
                    modes: m.iter().map(|p| self.mode_names[p].clone()).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("controller serializes");
        s.push('\n');
        s
    }

    /// Loads a controller written by [`to_json`](Self::to_json) for `sys`.
    pub fn from_json(s: &str, sys: &SwitchedSystem) -> Result<Self, ControllerError> {
        let file: ControllerFile =
            serde_json::from_str(s).map_err(|e| ControllerError::Malformed(e.to_string()))?;
        if file.system_hash != sys.hash() {
            return Err(ControllerError::SystemMismatch {
                expected: file.system_hash,
                got: sys.hash(),
            });
        }
        let to_box = |flat: &[f64]| {
            IntervalBox::from_flat(flat).map_err(|e| ControllerError::Malformed(e.to_string()))
        };
        let omega = file
            .omega
            .iter()
            .map(|f| to_box(f))
            .collect::<Result<Vec<_>, _>>()?;
        if omega.is_empty() || omega.iter().any(|b| b.dim() != sys.dim()) {
            return Err(ControllerError::Malformed("bad omega".into()));
        }
        let mut cells = Vec::with_capacity(file.cells.len());
        for c in &file.cells {
            let b = to_box(&c.r#box)?;
            let mut m = ModeSet::empty(sys.num_modes());
            for name in &c.modes {
                m.insert(
                    sys.mode_index(name)
                        .ok_or_else(|| ControllerError::UnknownMode(name.clone()))?,
                );
            }
            cells.push((b, m));
        }
        Self::build(file.system_hash, sys.mode_names(), omega, cells)
    }
}

#[derive(Serialize, Deserialize)]
struct ControllerFile {
    system_hash: String,
    omega: Vec<Vec<f64>>,
    cells: Vec<CellFile>,
}

#[derive(Serialize, Deserialize)]
struct CellFile {
    r#box: Vec<f64>,
    modes: Vec<String>,
}

/// Closed-loop run of `steps` steps from `x0`, choosing each mode among the
/// admissible ones according to `policy`.
pub fn simulate(
    sys: &SwitchedSystem,
    ctl: &Controller,
    x0: &[f64],
    steps: usize,
    policy: SwitchPolicy,
) -> Result<SimTrace, ControllerError> {
    if x0.len() != ctl.dim() {
        return Err(ControllerError::Dimension {
            expected: ctl.dim(),
            got: x0.len(),
        });
    }
    if ctl.admissible(x0).is_empty() {
        return Err(ControllerError::InfeasibleStart(x0.to_vec()));
    }
    let mut rng = match policy {
        SwitchPolicy::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    let mut trace = SimTrace {
        states: vec![x0.to_vec()],
        modes: Vec::with_capacity(steps),
        in_omega: vec![ctl.in_omega(x0)],
    };
    let mut prev = 0;
    for k in 0..steps {
        let x = &trace.states[k];
        let adm = ctl.admissible(x);
        let Some(first) = adm.first() else {
            return Err(ControllerError::ConformanceBreach {
                step: k,
                state: x.clone(),
                trace: Box::new(trace),
            });
        };
        let p = match policy {
            SwitchPolicy::First => first,
            SwitchPolicy::Inertial => {
                if adm.contains(prev) {
                    prev
                } else {
                    first
                }
            }
            SwitchPolicy::Random(_) => {
                let choices: Vec<usize> = adm.iter().collect();
                let rng = rng.as_mut().expect("seeded for random policy");
                choices[rng.gen_range(0..choices.len())]
            }
        };
        let next = sys.step(p, x)?;
        trace.in_omega.push(ctl.in_omega(&next));
        trace.states.push(next);
        trace.modes.push(p);
        prev = p;
    }
    Ok(trace)
}

/// Transitions `(i, p, j)` such that `p` is admissible on cell `i` and the
/// enclosure of `f_p(cell i)` meets cell `j`, sorted.
pub fn export_abstraction(
    sys: &SwitchedSystem,
    ctl: &Controller,
    strategy: InclusionStrategy,
    rounding: Rounding,
) -> Result<Vec<Transition>, ControllerError> {
    let mut out = Vec::new();
    for (i, (b, modes)) in ctl.cells.iter().enumerate() {
        for p in modes.iter() {
            let img = sys.include(p, b, strategy, rounding)?;
            for j in ctl.cells_touching(&img) {
                out.push(Transition { from: i, mode: p, to: j });
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paving::Region;
    use crate::synthesis::{inner_approx, outer_approx, SynthesisConfig};
    use crate::system::Mode;

    fn square() -> IntervalBox {
        IntervalBox::from_bounds(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap()
    }

    fn contraction() -> SwitchedSystem {
        SwitchedSystem::new(2, vec![Mode::parse("m1", &["0.5*x1", "0.5*x2"]).unwrap()]).unwrap()
    }

    fn cfg() -> SynthesisConfig {
        SynthesisConfig {
            workers: 1,
            ..SynthesisConfig::with_epsilon(0.1)
        }
    }

    fn contraction_controller() -> (SwitchedSystem, Controller) {
        let s = contraction();
        let omega = Region::full(&[square()]).unwrap();
        let r = inner_approx(&s, &omega, &cfg()).unwrap();
        let c = Controller::extract(&s, &r).unwrap();
        (s, c)
    }

    #[test]
    fn extraction() {
        let (_, c) = contraction_controller();
        assert_eq!(c.cells().len(), 1);
        assert_eq!(c.cells()[0].1, ModeSet::from_indices(1, [0]));

        let s = contraction();
        let omega = Region::full(&[square()]).unwrap();
        let o = outer_approx(&s, &omega, &cfg()).unwrap();
        assert!(matches!(Controller::extract(&s, &o), Err(ControllerError::EmptyResult)));
    }

    #[test]
    fn admissible_lookup() {
        let (_, c) = contraction_controller();
        assert!(c.admissible(&[2.0, 0.0]).is_empty());
        assert_eq!(c.admissible(&[0.3, -0.2]).iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(c.admissible(&[1.0, 1.0]).len(), 1);
    }

    #[test]
    fn face_points_get_the_union() {
        let names = vec!["a".to_string(), "b".to_string()];
        let left = IntervalBox::from_bounds(&[(-1.0, 0.0), (-1.0, 1.0)]).unwrap();
        let right = IntervalBox::from_bounds(&[(0.0, 1.0), (-1.0, 1.0)]).unwrap();
        let c = Controller::build(
            "h".into(),
            names,
            vec![square()],
            vec![
                (left, ModeSet::from_indices(2, [0])),
                (right, ModeSet::from_indices(2, [1])),
            ],
        )
        .unwrap();
        assert_eq!(c.admissible(&[-0.5, 0.0]).iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(c.admissible(&[0.0, 0.3]).iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn misaligned_or_overlapping_cells_are_rejected() {
        let bad = IntervalBox::from_bounds(&[(-0.5, 0.5), (-1.0, 1.0)]).unwrap();
        let one = ModeSet::from_indices(1, [0]);
        assert!(Controller::build("h".into(), vec!["a".into()], vec![square()], vec![(bad, one.clone())]).is_err());
        let left = IntervalBox::from_bounds(&[(-1.0, 0.0), (-1.0, 1.0)]).unwrap();
        assert!(Controller::build(
            "h".into(),
            vec!["a".into()],
            vec![square()],
            vec![(square(), one.clone()), (left, one)]
        )
        .is_err());
    }

    #[test]
    fn simulation() {
        let (s, c) = contraction_controller();
        let t = simulate(&s, &c, &[0.8, -0.4], 10, SwitchPolicy::Inertial).unwrap();
        assert_eq!(t.states.len(), 11);
        assert_eq!(t.modes.len(), 10);
        assert_eq!(t.exits(), 0);
        assert_eq!(t.states[1], vec![0.4, -0.2]);
        assert!(matches!(
            simulate(&s, &c, &[3.0, 0.0], 10, SwitchPolicy::First),
            Err(ControllerError::InfeasibleStart(_))
        ));
        let a = simulate(&s, &c, &[0.8, -0.4], 5, SwitchPolicy::Random(7)).unwrap();
        let b = simulate(&s, &c, &[0.8, -0.4], 5, SwitchPolicy::Random(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn breach_is_reported() {
        let s = SwitchedSystem::new(2, vec![Mode::parse("m1", &["x1+1.5", "x2"]).unwrap()]).unwrap();
        let c = Controller::build(
            s.hash(),
            s.mode_names(),
            vec![square()],
            vec![(square(), ModeSet::from_indices(1, [0]))],
        )
        .unwrap();
        match simulate(&s, &c, &[0.0, 0.0], 3, SwitchPolicy::First) {
            Err(ControllerError::ConformanceBreach { step, trace, .. }) => {
                assert_eq!(step, 1);
                assert_eq!(trace.in_omega, vec![true, false]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn abstraction() {
        let (s, c) = contraction_controller();
        let t = export_abstraction(&s, &c, InclusionStrategy::Natural, Rounding::Outward).unwrap();
        assert_eq!(t, vec![Transition { from: 0, mode: 0, to: 0 }]);

        let left = IntervalBox::from_bounds(&[(-1.0, 0.0), (-1.0, 1.0)]).unwrap();
        let right = IntervalBox::from_bounds(&[(0.0, 1.0), (-1.0, 1.0)]).unwrap();
        let s = SwitchedSystem::new(2, vec![Mode::parse("m1", &["x1+0.5", "x2"]).unwrap()]).unwrap();
        let one = ModeSet::from_indices(1, [0]);
        let c = Controller::build(s.hash(), s.mode_names(), vec![square()], vec![(left, one.clone()), (right, one)])
            .unwrap();
        let t = export_abstraction(&s, &c, InclusionStrategy::Natural, Rounding::Outward).unwrap();
        let from0: Vec<_> = t.iter().filter(|t| t.from == 0).map(|t| t.to).collect();
        assert_eq!(from0, vec![0, 1]);
    }

    #[test]
    fn json_round_trip() {
        let (s, c) = contraction_controller();
        let text = c.to_json();
        let back = Controller::from_json(&text, &s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), text);
        let other = SwitchedSystem::new(2, vec![Mode::parse("m1", &["x1", "x2"]).unwrap()]).unwrap();
        assert!(matches!(
            Controller::from_json(&text, &other),
            Err(ControllerError::SystemMismatch { .. })
        ));
    }
}
