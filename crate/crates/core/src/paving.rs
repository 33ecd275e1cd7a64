//! Regions as unions of boxes on the canonical bisection tree of a root box.
//!
//! Every box a region can hold is reachable from its root by repeatedly
//! splitting the widest side at its midpoint (lowest index on ties), the same
//! rule [`IntervalBox::bisect`] uses. The tree is kept reduced (no internal
//! node with two equal leaves), so two regions over the same roots represent
//! the same set exactly when their trees are equal.
//!
//! Sets are closed: a box touching a region along a face intersects it, and
//! boxes sharing a face cover that face.

use std::fmt;

use thiserror::Error;

use crate::interval::{Interval, IntervalBox};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PavingError {
    #[error("box {0} is not generated by canonical bisection of any root")]
    MisalignedBox(String),
    #[error("root box {0} must have positive width in every dimension")]
    DegenerateRoot(String),
    #[error("root boxes {0} and {1} overlap")]
    OverlappingRoots(String, String),
    #[error("region needs at least one root box")]
    NoRoots,
}

/// A set of modes, stored as a bitset over the system's ordered mode list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeSet {
    words: Vec<u64>,
}

impl ModeSet {
    pub fn empty(num_modes: usize) -> Self {
        Self {
            words: vec![0; num_modes.div_ceil(64).max(1)],
        }
    }

    pub fn from_indices(num_modes: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(num_modes);
        for i in indices {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, p: usize) {
        let w = p / 64;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << (p % 64);
    }

    pub fn contains(&self, p: usize) -> bool {
        self.words
            .get(p / 64)
            .is_some_and(|w| w & (1 << (p % 64)) != 0)
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn union_with(&mut self, other: &ModeSet) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Lowest mode index in the set.
    pub fn first(&self) -> Option<usize> {
        self.iter().next()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            (0..64).filter(move |b| w & (1u64 << b) != 0).map(move |b| wi * 64 + b)
        })
    }
}

/// Result of classifying a list of boxes against a target region.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifiedPaving {
    /// Boxes with some mode mapping them into the target, with every such mode.
    pub inside: Vec<(IntervalBox, ModeSet)>,
    /// Boxes below the precision threshold that could not be decided.
    pub undetermined: Vec<IntervalBox>,
    /// Boxes mapped outside the target by every mode.
    pub outside: Vec<IntervalBox>,
    /// Number of boxes classified, counting every bisection step.
    pub processed: usize,
}

impl ClassifiedPaving {
    pub fn len(&self) -> usize {
        self.inside.len() + self.undetermined.len() + self.outside.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sorts each list by the canonical box order.
    pub fn sort(&mut self) {
        self.inside.sort_by(|a, b| a.0.canonical_cmp(&b.0));
        self.undetermined.sort_by(|a, b| a.canonical_cmp(b));
        self.outside.sort_by(|a, b| a.canonical_cmp(b));
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    In,
    Out,
    Split(Box<[Node; 2]>),
}

impl Node {
    fn leaf(inside: bool) -> Node {
        if inside {
            Node::In
        } else {
            Node::Out
        }
    }

    fn reduce(&mut self) {
        if let Node::Split(ch) = self {
            ch[0].reduce();
            ch[1].reduce();
            match (&ch[0], &ch[1]) {
                (Node::In, Node::In) => *self = Node::In,
                (Node::Out, Node::Out) => *self = Node::Out,
                _ => {}
            }
        }
    }

    fn count_leaves(&self, inside: bool) -> usize {
        match self {
            Node::In => inside as usize,
            Node::Out => !inside as usize,
            Node::Split(ch) => ch[0].count_leaves(inside) + ch[1].count_leaves(inside),
        }
    }

    fn flip(&mut self) {
        match self {
            Node::In => *self = Node::Out,
            Node::Out => *self = Node::In,
            Node::Split(ch) => {
                ch[0].flip();
                ch[1].flip();
            }
        }
    }
}

/// Scratch bounds used while walking the tree, mutated in place so queries do
/// not allocate per level.
struct Cursor {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Cursor {
    fn new(b: &IntervalBox) -> Self {
        Self {
            lo: b.dims().iter().map(Interval::lo).collect(),
            hi: b.dims().iter().map(Interval::hi).collect(),
        }
    }

    fn plane(&self) -> (usize, f64) {
        let mut j = 0;
        let mut w = self.hi[0] - self.lo[0];
        for i in 1..self.lo.len() {
            let wi = self.hi[i] - self.lo[i];
            if wi > w {
                j = i;
                w = wi;
            }
        }
        (j, crate::interval::midpoint(self.lo[j], self.hi[j]))
    }

    fn to_box(&self) -> IntervalBox {
        IntervalBox::new(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(&l, &h)| Interval::new(l, h).expect("cursor bounds are ordered"))
                .collect(),
        )
    }

    fn equals(&self, q: &IntervalBox) -> bool {
        q.dims()
            .iter()
            .enumerate()
            .all(|(i, d)| d.lo() == self.lo[i] && d.hi() == self.hi[i])
    }

    /// Overlap in the sense used by containment: positive length on sides
    /// where `q` is non-degenerate, membership where `q` is a single value.
    fn overlaps(&self, q: &IntervalBox) -> bool {
        q.dims().iter().enumerate().all(|(i, d)| {
            if d.width() > 0.0 {
                d.hi().min(self.hi[i]) > d.lo().max(self.lo[i])
            } else {
                self.lo[i] <= d.lo() && d.lo() <= self.hi[i]
            }
        })
    }

    fn touches(&self, q: &IntervalBox) -> bool {
        q.dims()
            .iter()
            .enumerate()
            .all(|(i, d)| d.lo() <= self.hi[i] && self.lo[i] <= d.hi())
    }

    fn contains_point(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| self.lo[i] <= v && v <= self.hi[i])
    }

    fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    root: IntervalBox,
    node: Node,
}

impl Tree {
    /// Sets the node for the aligned box `q` to `label`.
    fn set(&mut self, q: &IntervalBox, label: bool) -> Result<(), PavingError> {
        if q.dim() != self.root.dim() || !q.is_subset_of(&self.root) {
            return Err(misaligned(q));
        }
        if q.dims().iter().any(|d| d.width() <= 0.0) {
            return Err(misaligned(q));
        }
        let mut cur = Cursor::new(&self.root);
        let mut node = &mut self.node;
        loop {
            if cur.equals(q) {
                *node = Node::leaf(label);
                return Ok(());
            }
            if *node == Node::leaf(label) {
                // already labelled; q only needs to be aligned, and any
                // descent would succeed or fail identically, so check it
                // without mutating.
                return check_aligned(cur, q);
            }
            let (j, cut) = cur.plane();
            let d = q.get(j);
            let side = if d.hi() <= cut {
                0
            } else if d.lo() >= cut {
                1
            } else {
                return Err(misaligned(q));
            };
            if cur.hi[j] - cur.lo[j] <= q.get(j).width() {
                return Err(misaligned(q));
            }
            if let Node::In | Node::Out = node {
                let l = matches!(node, Node::In);
                *node = Node::Split(Box::new([Node::leaf(l), Node::leaf(l)]));
            }
            if side == 0 {
                cur.hi[j] = cut;
            } else {
                cur.lo[j] = cut;
            }
            let Node::Split(ch) = node else {
                unreachable!()
            };
            node = &mut ch[side];
        }
    }
}

fn check_aligned(mut cur: Cursor, q: &IntervalBox) -> Result<(), PavingError> {
    loop {
        if cur.equals(q) {
            return Ok(());
        }
        let (j, cut) = cur.plane();
        if cur.hi[j] - cur.lo[j] <= q.get(j).width() {
            return Err(misaligned(q));
        }
        let d = q.get(j);
        if d.hi() <= cut {
            cur.hi[j] = cut;
        } else if d.lo() >= cut {
            cur.lo[j] = cut;
        } else {
            return Err(misaligned(q));
        }
    }
}

fn misaligned(q: &IntervalBox) -> PavingError {
    PavingError::MisalignedBox(q.to_text())
}

fn walk_overlapping(node: &Node, cur: &mut Cursor, q: &IntervalBox, visit: &mut impl FnMut(bool) -> bool) -> bool {
    if !cur.overlaps(q) {
        return true;
    }
    match node {
        Node::In => visit(true),
        Node::Out => visit(false),
        Node::Split(ch) => {
            let (j, cut) = cur.plane();
            let (lo, hi) = (cur.lo[j], cur.hi[j]);
            cur.hi[j] = cut;
            let go = walk_overlapping(&ch[0], cur, q, visit);
            cur.hi[j] = hi;
            if !go {
                return false;
            }
            cur.lo[j] = cut;
            let go = walk_overlapping(&ch[1], cur, q, visit);
            cur.lo[j] = lo;
            go
        }
    }
}

fn any_in_touching(node: &Node, cur: &mut Cursor, q: &IntervalBox) -> bool {
    if !cur.touches(q) {
        return false;
    }
    match node {
        Node::In => true,
        Node::Out => false,
        Node::Split(ch) => {
            let (j, cut) = cur.plane();
            let (lo, hi) = (cur.lo[j], cur.hi[j]);
            cur.hi[j] = cut;
            let hit = any_in_touching(&ch[0], cur, q);
            cur.hi[j] = hi;
            if hit {
                return true;
            }
            cur.lo[j] = cut;
            let hit = any_in_touching(&ch[1], cur, q);
            cur.lo[j] = lo;
            hit
        }
    }
}

fn any_in_at_point(node: &Node, cur: &mut Cursor, x: &[f64]) -> bool {
    if !cur.contains_point(x) {
        return false;
    }
    match node {
        Node::In => true,
        Node::Out => false,
        Node::Split(ch) => {
            let (j, cut) = cur.plane();
            let (lo, hi) = (cur.lo[j], cur.hi[j]);
            cur.hi[j] = cut;
            let hit = any_in_at_point(&ch[0], cur, x);
            cur.hi[j] = hi;
            if hit {
                return true;
            }
            cur.lo[j] = cut;
            let hit = any_in_at_point(&ch[1], cur, x);
            cur.lo[j] = lo;
            hit
        }
    }
}

fn collect_leaves(node: &Node, cur: &mut Cursor, inside: bool, out: &mut Vec<IntervalBox>) {
    match node {
        Node::In | Node::Out => {
            if matches!(node, Node::In) == inside {
                out.push(cur.to_box());
            }
        }
        Node::Split(ch) => {
            let (j, cut) = cur.plane();
            let (lo, hi) = (cur.lo[j], cur.hi[j]);
            cur.hi[j] = cut;
            collect_leaves(&ch[0], cur, inside, out);
            cur.hi[j] = hi;
            cur.lo[j] = cut;
            collect_leaves(&ch[1], cur, inside, out);
            cur.lo[j] = lo;
        }
    }
}

fn volume_in(node: &Node, cur: &mut Cursor) -> f64 {
    match node {
        Node::In => cur.volume(),
        Node::Out => 0.0,
        Node::Split(ch) => {
            let (j, cut) = cur.plane();
            let (lo, hi) = (cur.lo[j], cur.hi[j]);
            cur.hi[j] = cut;
            let a = volume_in(&ch[0], cur);
            cur.hi[j] = hi;
            cur.lo[j] = cut;
            let b = volume_in(&ch[1], cur);
            cur.lo[j] = lo;
            a + b
        }
    }
}

/// A closed set represented as a forest of reduced bisection trees, one per
/// root box.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    trees: Vec<Tree>,
}

impl Region {
    fn with_roots(roots: &[IntervalBox], fill: bool) -> Result<Self, PavingError> {
        if roots.is_empty() {
            return Err(PavingError::NoRoots);
        }
        let n = roots[0].dim();
        for (i, r) in roots.iter().enumerate() {
            if r.dim() != n || r.dims().iter().any(|d| d.width() <= 0.0 || !d.is_finite()) {
                return Err(PavingError::DegenerateRoot(r.to_text()));
            }
            for o in &roots[..i] {
                if Cursor::new(o).overlaps(r) {
                    return Err(PavingError::OverlappingRoots(o.to_text(), r.to_text()));
                }
            }
        }
        Ok(Self {
            trees: roots
                .iter()
                .map(|r| Tree {
                    root: r.clone(),
                    node: Node::leaf(fill),
                })
                .collect(),
        })
    }

    /// The region covering every root box entirely.
    pub fn full(roots: &[IntervalBox]) -> Result<Self, PavingError> {
        Self::with_roots(roots, true)
    }

    pub fn empty(roots: &[IntervalBox]) -> Result<Self, PavingError> {
        Self::with_roots(roots, false)
    }

    /// The union of `boxes`, each of which must be aligned with one root.
    pub fn from_boxes(roots: &[IntervalBox], boxes: &[IntervalBox]) -> Result<Self, PavingError> {
        let mut r = Self::empty(roots)?;
        for b in boxes {
            r.set_label(b, true)?;
        }
        r.reduce();
        Ok(r)
    }

    /// A new region with `boxes` removed (labelled OUT).
    pub fn remove_boxes(&self, boxes: &[IntervalBox]) -> Result<Self, PavingError> {
        let mut r = self.clone();
        for b in boxes {
            r.set_label(b, false)?;
        }
        r.reduce();
        Ok(r)
    }

    fn set_label(&mut self, b: &IntervalBox, label: bool) -> Result<(), PavingError> {
        let tree = self
            .trees
            .iter_mut()
            .find(|t| b.dim() == t.root.dim() && b.is_subset_of(&t.root))
            .ok_or_else(|| misaligned(b))?;
        tree.set(b, label)
    }

    fn reduce(&mut self) {
        for t in &mut self.trees {
            t.node.reduce();
        }
    }

    pub fn roots(&self) -> Vec<IntervalBox> {
        self.trees.iter().map(|t| t.root.clone()).collect()
    }

    pub fn dim(&self) -> usize {
        self.trees[0].root.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.iter().all(|t| t.node == Node::Out)
    }

    /// Whether `q` lies in the union of IN leaves.
    ///
    /// Decided by descent: every leaf meeting `q` in positive measure (or
    /// containing `q`'s coordinate along sides where `q` has zero width) must
    /// be IN, and the roots together must cover `q`.
    pub fn contains_box(&self, q: &IntervalBox) -> bool {
        if q.dim() != self.dim() || !self.roots_cover(q) {
            return false;
        }
        self.trees.iter().all(|t| {
            let mut cur = Cursor::new(&t.root);
            walk_overlapping(&t.node, &mut cur, q, &mut |inside| inside)
        })
    }

    fn roots_cover(&self, q: &IntervalBox) -> bool {
        if self.trees.len() == 1 {
            return q.is_subset_of(&self.trees[0].root);
        }
        let mut pending = vec![q.clone()];
        for t in &self.trees {
            pending = pending
                .iter()
                .flat_map(|p| box_difference(p, &t.root))
                .collect();
            if pending.is_empty() {
                return true;
            }
        }
        false
    }

    /// Whether `q` meets the closed union of IN leaves; face contact counts.
    pub fn intersects_box(&self, q: &IntervalBox) -> bool {
        if q.dim() != self.dim() {
            return false;
        }
        self.trees.iter().any(|t| {
            let mut cur = Cursor::new(&t.root);
            any_in_touching(&t.node, &mut cur, q)
        })
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && self.trees.iter().any(|t| {
                let mut cur = Cursor::new(&t.root);
                any_in_at_point(&t.node, &mut cur, x)
            })
    }

    /// Whether every IN leaf of `self` is contained in `other`.
    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.leaves_in().iter().all(|b| other.contains_box(b))
    }

    /// IN leaves in canonical (tree) order.
    pub fn leaves_in(&self) -> Vec<IntervalBox> {
        self.leaves(true)
    }

    pub fn leaves_out(&self) -> Vec<IntervalBox> {
        self.leaves(false)
    }

    fn leaves(&self, inside: bool) -> Vec<IntervalBox> {
        let mut out = Vec::new();
        for t in &self.trees {
            let mut cur = Cursor::new(&t.root);
            collect_leaves(&t.node, &mut cur, inside, &mut out);
        }
        out
    }

    pub fn num_leaves_in(&self) -> usize {
        self.trees.iter().map(|t| t.node.count_leaves(true)).sum()
    }

    pub fn volume(&self) -> f64 {
        self.trees
            .iter()
            .map(|t| {
                let mut cur = Cursor::new(&t.root);
                volume_in(&t.node, &mut cur)
            })
            .sum()
    }

    /// Total volume of the root boxes.
    pub fn root_volume(&self) -> f64 {
        self.trees.iter().map(|t| t.root.volume()).sum()
    }

    /// The closure of the roots minus this region, on the same trees.
    pub fn complement(&self) -> Region {
        let mut r = self.clone();
        for t in &mut r.trees {
            t.node.flip();
        }
        r
    }

    /// Hull of all root boxes.
    pub fn hull(&self) -> IntervalBox {
        let mut h = self.trees[0].root.clone();
        for t in &self.trees[1..] {
            h = h.hull(&t.root);
        }
        h
    }

    /// Canonical equality: same roots and same reduced trees.
    pub fn equals(&self, other: &Region) -> bool {
        self == other
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Region({} roots, {} IN leaves, volume {})",
            self.trees.len(),
            self.num_leaves_in(),
            self.volume()
        )
    }
}

/// Closed pieces of `q` outside `r` that have positive length along every
/// side where `q` does.
fn box_difference(q: &IntervalBox, r: &IntervalBox) -> Vec<IntervalBox> {
    if !Cursor::new(r).overlaps(q) {
        return vec![q.clone()];
    }
    let mut pieces = Vec::new();
    let mut rest: Vec<Interval> = q.dims().to_vec();
    for i in 0..q.dim() {
        let d = rest[i];
        let ri = r.get(i);
        if d.lo() < ri.lo() {
            let mut p = rest.clone();
            p[i] = Interval::new(d.lo(), ri.lo()).unwrap();
            pieces.push(IntervalBox::new(p));
        }
        if d.hi() > ri.hi() {
            let mut p = rest.clone();
            p[i] = Interval::new(ri.hi(), d.hi()).unwrap();
            pieces.push(IntervalBox::new(p));
        }
        rest[i] = Interval::new(d.lo().max(ri.lo()), d.hi().min(ri.hi())).unwrap();
    }
    pieces
}
