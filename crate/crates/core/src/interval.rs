//! Closed intervals and axis-aligned boxes.
//!
//! Every elementary operation takes a [`Rounding`] policy. Under
//! [`Rounding::Outward`] each computed endpoint is pushed to the adjacent
//! representable value away from the result (lower endpoint down, upper
//! endpoint up), so the returned interval encloses the exact real result even
//! though the FPU rounds to nearest. Library transcendental functions are not
//! correctly rounded; their endpoints are stepped twice.
//!
//! Empty sets are never represented by an `Interval` with `lo > hi`: the
//! operations that can produce an empty set return `Option`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid interval bounds [{lo}, {hi}]")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("cannot bisect a box of zero width")]
    DegenerateBox,
    #[error("radius must be non-negative, got {0}")]
    NegativeRadius(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed box text: {0}")]
    Malformed(String),
}

/// Floating point rounding applied to interval endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Rounding {
    /// Round to nearest only; results may miss the true range by an ulp.
    None,
    /// Step every endpoint outward after each operation.
    #[default]
    Outward,
}

impl Rounding {
    #[inline]
    fn down(self, x: f64) -> f64 {
        match self {
            Rounding::None => x,
            Rounding::Outward => x.next_down(),
        }
    }

    #[inline]
    fn up(self, x: f64) -> f64 {
        match self {
            Rounding::None => x,
            Rounding::Outward => x.next_up(),
        }
    }

    #[inline]
    fn down2(self, x: f64) -> f64 {
        self.down(self.down(x))
    }

    #[inline]
    fn up2(self, x: f64) -> f64 {
        self.up(self.up(x))
    }

    // Directed versions of the basic operations. The rounding error of the
    // nearest result is recovered exactly (TwoSum, or an fma residual), so an
    // endpoint only moves when the nearest result is wrong in that direction.

    #[inline]
    fn add_down(self, a: f64, b: f64) -> f64 {
        let s = a + b;
        match self {
            Rounding::None => s,
            Rounding::Outward => {
                if sum_error(a, b, s) < 0.0 {
                    s.next_down()
                } else {
                    s
                }
            }
        }
    }

    #[inline]
    fn add_up(self, a: f64, b: f64) -> f64 {
        let s = a + b;
        match self {
            Rounding::None => s,
            Rounding::Outward => {
                if sum_error(a, b, s) > 0.0 {
                    s.next_up()
                } else {
                    s
                }
            }
        }
    }

    #[inline]
    fn mul_down(self, a: f64, b: f64) -> f64 {
        let p = a * b;
        match self {
            Rounding::None => p,
            Rounding::Outward => match product_error(a, b, p) {
                Some(e) if e >= 0.0 => p,
                _ => p.next_down(),
            },
        }
    }

    #[inline]
    fn mul_up(self, a: f64, b: f64) -> f64 {
        let p = a * b;
        match self {
            Rounding::None => p,
            Rounding::Outward => match product_error(a, b, p) {
                Some(e) if e <= 0.0 => p,
                _ => p.next_up(),
            },
        }
    }

    #[inline]
    fn div_down(self, a: f64, b: f64) -> f64 {
        let q = a / b;
        match self {
            Rounding::None => q,
            Rounding::Outward => match quotient_error(a, b, q) {
                Some(e) if e >= 0.0 => q,
                _ => q.next_down(),
            },
        }
    }

    #[inline]
    fn div_up(self, a: f64, b: f64) -> f64 {
        let q = a / b;
        match self {
            Rounding::None => q,
            Rounding::Outward => match quotient_error(a, b, q) {
                Some(e) if e <= 0.0 => q,
                _ => q.next_up(),
            },
        }
    }

}

/// A nonempty closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    /// Builds `[lo, hi]`. NaN endpoints and `lo > hi` are rejected.
    pub fn new(lo: f64, hi: f64) -> Result<Self, IntervalError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(IntervalError::InvalidBounds { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        midpoint(self.lo, self.hi)
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    // Results of finite operations can still be NaN (inf - inf); those are
    // reported rather than silently turned into a bogus interval.
    fn checked(lo: f64, hi: f64, op: &str) -> Result<Interval, IntervalError> {
        if lo.is_nan() || hi.is_nan() {
            return Err(IntervalError::Domain(format!("{op} produced NaN")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn add(&self, b: &Interval, r: Rounding) -> Result<Interval, IntervalError> {
        Self::checked(r.add_down(self.lo, b.lo), r.add_up(self.hi, b.hi), "add")
    }

    pub fn sub(&self, b: &Interval, r: Rounding) -> Result<Interval, IntervalError> {
        Self::checked(r.add_down(self.lo, -b.hi), r.add_up(self.hi, -b.lo), "sub")
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn mul(&self, b: &Interval, r: Rounding) -> Result<Interval, IntervalError> {
        // 0 * inf is NaN; treat it as 0, which is the limit for the
        // finite boxes this library accepts.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (x, y) in [(self.lo, b.lo), (self.lo, b.hi), (self.hi, b.lo), (self.hi, b.hi)] {
            if (x * y).is_nan() {
                lo = lo.min(0.0);
                hi = hi.max(0.0);
            } else {
                lo = lo.min(r.mul_down(x, y));
                hi = hi.max(r.mul_up(x, y));
            }
        }
        Self::checked(lo, hi, "mul")
    }

    pub fn div(&self, b: &Interval, r: Rounding) -> Result<Interval, IntervalError> {
        if b.contains_zero() {
            return Err(IntervalError::Domain(format!(
                "division by interval [{}, {}] containing zero",
                b.lo, b.hi
            )));
        }
        let pairs = [(self.lo, b.lo), (self.lo, b.hi), (self.hi, b.lo), (self.hi, b.hi)];
        let lo = pairs.iter().map(|&(x, y)| r.div_down(x, y)).fold(f64::INFINITY, f64::min);
        let hi = pairs.iter().map(|&(x, y)| r.div_up(x, y)).fold(f64::NEG_INFINITY, f64::max);
        Self::checked(lo, hi, "div")
    }

    /// Integer power `x^k`, tighter than repeated multiplication for even `k`.
    pub fn pow_int(&self, k: u32, r: Rounding) -> Result<Interval, IntervalError> {
        if k == 0 {
            return Ok(Interval::point(1.0));
        }
        if k == 1 {
            return Ok(*self);
        }
        let res = if k % 2 == 1 {
            // odd powers are monotone increasing
            Interval {
                lo: signed_pow_down(self.lo, k, r),
                hi: signed_pow_up(self.hi, k, r),
            }
        } else if self.lo >= 0.0 {
            Interval {
                lo: pow_pos_down(self.lo, k, r),
                hi: pow_pos_up(self.hi, k, r),
            }
        } else if self.hi <= 0.0 {
            Interval {
                lo: pow_pos_down(-self.hi, k, r),
                hi: pow_pos_up(-self.lo, k, r),
            }
        } else {
            Interval {
                lo: 0.0,
                hi: pow_pos_up(self.mag(), k, r),
            }
        };
        Self::checked(res.lo, res.hi, "pow_int")
    }

    pub fn abs(&self) -> Interval {
        if self.lo >= 0.0 {
            *self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Interval {
                lo: 0.0,
                hi: self.mag(),
            }
        }
    }

    pub fn sqrt(&self, r: Rounding) -> Result<Interval, IntervalError> {
        if self.lo < 0.0 {
            return Err(IntervalError::Domain(format!(
                "sqrt of interval [{}, {}] with negative part",
                self.lo, self.hi
            )));
        }
        Ok(Interval {
            lo: sqrt_down(self.lo, r).max(0.0),
            hi: sqrt_up(self.hi, r),
        })
    }

    pub fn exp(&self, r: Rounding) -> Result<Interval, IntervalError> {
        Self::checked(
            r.down2(self.lo.exp()).max(0.0),
            r.up2(self.hi.exp()),
            "exp",
        )
    }

    pub fn log(&self, r: Rounding) -> Result<Interval, IntervalError> {
        if self.lo <= 0.0 {
            return Err(IntervalError::Domain(format!(
                "log of interval [{}, {}] touching non-positive values",
                self.lo, self.hi
            )));
        }
        Self::checked(r.down2(self.lo.ln()), r.up2(self.hi.ln()), "log")
    }

    pub fn sin(&self, r: Rounding) -> Result<Interval, IntervalError> {
        if !self.is_finite() {
            return Ok(Interval { lo: -1.0, hi: 1.0 });
        }
        let has_max = contains_periodic_point(self, FRAC_PI_2, 2.0 * PI);
        let has_min = contains_periodic_point(self, -FRAC_PI_2, 2.0 * PI);
        Ok(trig_hull(self.lo.sin(), self.hi.sin(), has_min, has_max, r))
    }

    pub fn cos(&self, r: Rounding) -> Result<Interval, IntervalError> {
        if !self.is_finite() {
            return Ok(Interval { lo: -1.0, hi: 1.0 });
        }
        let has_max = contains_periodic_point(self, 0.0, 2.0 * PI);
        let has_min = contains_periodic_point(self, PI, 2.0 * PI);
        Ok(trig_hull(self.lo.cos(), self.hi.cos(), has_min, has_max, r))
    }

    pub fn tan(&self, r: Rounding) -> Result<Interval, IntervalError> {
        if !self.is_finite() || contains_periodic_point(self, FRAC_PI_2, PI) {
            return Err(IntervalError::Domain(format!(
                "tan of interval [{}, {}] containing a pole",
                self.lo, self.hi
            )));
        }
        Self::checked(r.down2(self.lo.tan()), r.up2(self.hi.tan()), "tan")
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Midpoint that does not overflow for large endpoints.
#[inline]
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = 0.5 * (lo + hi);
    if m.is_finite() {
        m
    } else {
        0.5 * lo + 0.5 * hi
    }
}

/// Exact error `(a + b) - s` of the nearest sum `s` (TwoSum); zero when the
/// sum overflowed, where stepping from infinity is handled by the caller.
#[inline]
fn sum_error(a: f64, b: f64, s: f64) -> f64 {
    if !s.is_finite() {
        return 0.0;
    }
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

// Below this magnitude fma residuals may be rounded themselves.
const TINY: f64 = 1e-290;

/// Exact error `a * b - p`, when it can be recovered.
#[inline]
fn product_error(a: f64, b: f64, p: f64) -> Option<f64> {
    if !p.is_finite() || (p.abs() < TINY && p != 0.0) {
        return None;
    }
    if p == 0.0 {
        return (a == 0.0 || b == 0.0).then_some(0.0);
    }
    Some(a.mul_add(b, -p))
}

/// Sign-carrying error `a / b - q`, when it can be recovered.
#[inline]
fn quotient_error(a: f64, b: f64, q: f64) -> Option<f64> {
    if !q.is_finite() || q.abs() < TINY || b.abs() < TINY || !b.is_finite() {
        return (a == 0.0 && b != 0.0).then_some(0.0);
    }
    // a - q b, exact; a / b - q has the sign of this times b
    let rem = (-q).mul_add(b, a);
    Some(if b > 0.0 { rem } else { -rem })
}

fn sqrt_down(x: f64, r: Rounding) -> f64 {
    let s = x.sqrt();
    if r == Rounding::None || s == 0.0 || !s.is_finite() {
        return s;
    }
    if s.abs() < TINY {
        return s.next_down();
    }
    // x - s^2 < 0 means the true root is below s
    if (-s).mul_add(s, x) < 0.0 {
        s.next_down()
    } else {
        s
    }
}

fn sqrt_up(x: f64, r: Rounding) -> f64 {
    let s = x.sqrt();
    if r == Rounding::None || !s.is_finite() {
        return s;
    }
    if s < TINY {
        return if s == 0.0 { 0.0 } else { s.next_up() };
    }
    if (-s).mul_add(s, x) > 0.0 {
        s.next_up()
    } else {
        s
    }
}

fn pow_pos_down(x: f64, k: u32, r: Rounding) -> f64 {
    let mut acc = x;
    for _ in 1..k {
        acc = r.mul_down(acc, x);
    }
    acc.max(0.0)
}

fn pow_pos_up(x: f64, k: u32, r: Rounding) -> f64 {
    let mut acc = x;
    for _ in 1..k {
        acc = r.mul_up(acc, x);
    }
    acc
}

// Odd k: x^k = sign(x) |x|^k.
fn signed_pow_down(x: f64, k: u32, r: Rounding) -> f64 {
    if x >= 0.0 {
        pow_pos_down(x, k, r)
    } else {
        -pow_pos_up(-x, k, r)
    }
}

fn signed_pow_up(x: f64, k: u32, r: Rounding) -> f64 {
    if x >= 0.0 {
        pow_pos_up(x, k, r)
    } else {
        -pow_pos_down(-x, k, r)
    }
}

/// Whether `[x]` may contain a point `offset + k * period` for some integer k.
/// Errs on the side of `true` near the boundary since `PI` is inexact.
fn contains_periodic_point(x: &Interval, offset: f64, period: f64) -> bool {
    if x.width() >= period {
        return true;
    }
    let slack = 1e-14 * (1.0 + x.lo.abs().max(x.hi.abs()));
    let k_lo = ((x.lo - slack - offset) / period).ceil();
    let k_hi = ((x.hi + slack - offset) / period).floor();
    k_lo <= k_hi
}

fn trig_hull(a: f64, b: f64, has_min: bool, has_max: bool, r: Rounding) -> Interval {
    let lo = if has_min {
        -1.0
    } else {
        r.down2(a.min(b)).max(-1.0)
    };
    let hi = if has_max {
        1.0
    } else {
        r.up2(a.max(b)).min(1.0)
    };
    Interval { lo, hi }
}

/// An axis-aligned box, the product of `dim()` nonempty intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    dims: Vec<Interval>,
}

impl IntervalBox {
    pub fn new(dims: Vec<Interval>) -> Self {
        Self { dims }
    }

    /// Builds a box from `[(lo1, hi1), (lo2, hi2), ...]`.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self, IntervalError> {
        let dims = bounds
            .iter()
            .map(|&(lo, hi)| Interval::new(lo, hi))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { dims })
    }

    /// Builds a box from the flat form `[lo1, hi1, lo2, hi2, ...]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self, IntervalError> {
        if flat.len() % 2 != 0 || flat.is_empty() {
            return Err(IntervalError::Malformed(format!(
                "expected an even number of bounds, got {}",
                flat.len()
            )));
        }
        let dims = flat
            .chunks(2)
            .map(|c| Interval::new(c[0], c[1]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { dims })
    }

    pub fn point(x: &[f64]) -> Self {
        Self {
            dims: x.iter().map(|&v| Interval::point(v)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Interval] {
        &self.dims
    }

    pub fn get(&self, i: usize) -> &Interval {
        &self.dims[i]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.dims.iter().flat_map(|d| [d.lo, d.hi]).collect()
    }

    /// Maximum side length.
    pub fn width(&self) -> f64 {
        self.dims.iter().map(Interval::width).fold(0.0, f64::max)
    }

    /// Index of the widest side, lowest index on ties.
    pub fn widest_dim(&self) -> usize {
        let mut best = 0;
        for (i, d) in self.dims.iter().enumerate() {
            if d.width() > self.dims[best].width() {
                best = i;
            }
        }
        best
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::mid).collect()
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().map(Interval::width).product()
    }

    pub fn is_finite(&self) -> bool {
        self.dims.iter().all(Interval::is_finite)
    }

    /// Splits along the widest side at its midpoint.
    pub fn bisect(&self) -> Result<(IntervalBox, IntervalBox), IntervalError> {
        if self.width() <= 0.0 {
            return Err(IntervalError::DegenerateBox);
        }
        let (j, cut) = self.bisection_plane();
        Ok(self.split_at(j, cut))
    }

    /// The `(dimension, cut)` pair [`bisect`](Self::bisect) splits at.
    pub fn bisection_plane(&self) -> (usize, f64) {
        let j = self.widest_dim();
        (j, self.dims[j].mid())
    }

    /// Splits along side `j` at `cut`, which must lie inside that side.
    pub fn split_at(&self, j: usize, cut: f64) -> (IntervalBox, IntervalBox) {
        let mut left = self.dims.clone();
        let mut right = self.dims.clone();
        left[j] = Interval {
            lo: self.dims[j].lo,
            hi: cut,
        };
        right[j] = Interval {
            lo: cut,
            hi: self.dims[j].hi,
        };
        (IntervalBox { dims: left }, IntervalBox { dims: right })
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.dims.iter().zip(x).all(|(d, &v)| d.contains(v))
    }

    pub fn is_subset_of(&self, other: &IntervalBox) -> bool {
        self.dims
            .iter()
            .zip(&other.dims)
            .all(|(a, b)| a.is_subset_of(b))
    }

    /// Closed intersection; boxes that only share a face intersect in a
    /// degenerate box.
    pub fn intersect(&self, other: &IntervalBox) -> Option<IntervalBox> {
        let dims = self
            .dims
            .iter()
            .zip(&other.dims)
            .map(|(a, b)| a.intersect(b))
            .collect::<Option<Vec<_>>>()?;
        Some(IntervalBox { dims })
    }

    pub fn intersects(&self, other: &IntervalBox) -> bool {
        self.dims
            .iter()
            .zip(&other.dims)
            .all(|(a, b)| a.lo <= b.hi && b.lo <= a.hi)
    }

    pub fn hull(&self, other: &IntervalBox) -> IntervalBox {
        IntervalBox {
            dims: self
                .dims
                .iter()
                .zip(&other.dims)
                .map(|(a, b)| a.hull(b))
                .collect(),
        }
    }

    /// Minkowski sum with the infinity-norm ball of radius `r`.
    pub fn inflate(&self, r: f64) -> Result<IntervalBox, IntervalError> {
        if r < 0.0 || r.is_nan() {
            return Err(IntervalError::NegativeRadius(r));
        }
        Ok(IntervalBox {
            dims: self
                .dims
                .iter()
                .map(|d| Interval {
                    lo: d.lo - r,
                    hi: d.hi + r,
                })
                .collect(),
        })
    }

    /// Pontryagin difference with the infinity-norm ball of radius `r`;
    /// `None` when some side is shorter than `2r`.
    pub fn deflate(&self, r: f64) -> Result<Option<IntervalBox>, IntervalError> {
        if r < 0.0 || r.is_nan() {
            return Err(IntervalError::NegativeRadius(r));
        }
        let dims = self
            .dims
            .iter()
            .map(|d| Interval::new(d.lo + r, d.hi - r).ok())
            .collect::<Option<Vec<_>>>();
        Ok(dims.map(|dims| IntervalBox { dims }))
    }

    /// Textual form `lo1,hi1,lo2,hi2,...` with shortest round-trip decimals.
    pub fn to_text(&self) -> String {
        self.to_flat()
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_text(s: &str) -> Result<IntervalBox, IntervalError> {
        let flat = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| IntervalError::Malformed(format!("{t:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_flat(&flat)
    }

    /// Total order on boxes by their flat bound vector, used to sort outputs.
    pub fn canonical_cmp(&self, other: &IntervalBox) -> std::cmp::Ordering {
        for (a, b) in self.dims.iter().zip(&other.dims) {
            let o = a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi));
            if o.is_ne() {
                return o;
            }
        }
        self.dim().cmp(&other.dim())
    }
}

impl fmt::Display for IntervalBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, "x")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}
