//! Switched systems `x+ = f_p(x)` and their inclusion functions.

use std::fmt;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::expr::{self, Expr, ExprError};
use crate::interval::{Interval, IntervalBox, IntervalError, Rounding};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("mode set is empty")]
    NoModes,
    #[error("duplicate mode name {0:?}")]
    DuplicateMode(String),
    #[error("mode {mode:?} has {got} update expressions, expected {expected}")]
    WrongArity {
        mode: String,
        expected: usize,
        got: usize,
    },
    #[error("mode {mode:?}: {source}")]
    Expr {
        mode: String,
        #[source]
        source: ExprError,
    },
    #[error("mode {mode:?} is not differentiable (contains abs)")]
    NonDifferentiable { mode: String },
    #[error("domain error in mode {mode:?} on box {bbox}: {message}")]
    Domain {
        mode: String,
        bbox: String,
        message: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Lyapunov series does not converge (spectral radius >= 1)")]
    NotConverging,
    #[error("origin lies outside the constraint box")]
    OriginOutside,
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// How `[f_p]([x])` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum InclusionStrategy {
    /// Replace every operation by its interval counterpart.
    #[default]
    Natural,
    /// `f(m) + [J]([x]) ([x] - m)` around the midpoint `m`.
    MeanValue,
}

impl InclusionStrategy {
    pub fn name(self) -> &'static str {
        match self {
            InclusionStrategy::Natural => "natural",
            InclusionStrategy::MeanValue => "meanvalue",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "natural" => Some(InclusionStrategy::Natural),
            "meanvalue" => Some(InclusionStrategy::MeanValue),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    name: String,
    update: Vec<Expr>,
    /// `jacobian[i][j] = d f_i / d x_j`; `None` if some coordinate uses abs.
    jacobian: Option<Vec<Vec<Expr>>>,
}

impl Mode {
    pub fn new(name: impl Into<String>, update: Vec<Expr>) -> Result<Self, SystemError> {
        let name = name.into();
        let n = update.len();
        if let Some(v) = update.iter().filter_map(Expr::max_var).max() {
            if v >= n {
                return Err(SystemError::Expr {
                    mode: name,
                    source: ExprError::UnknownVariable {
                        name: format!("x{}", v + 1),
                        position: 0,
                        dim: n,
                    },
                });
            }
        }
        let jacobian = if update.iter().any(Expr::contains_abs) {
            None
        } else {
            let rows = update
                .iter()
                .map(|f| {
                    (0..n)
                        .map(|j| f.differentiate(j))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|source| SystemError::Expr {
                    mode: name.clone(),
                    source,
                })?;
            Some(rows)
        };
        Ok(Self {
            name,
            update,
            jacobian,
        })
    }

    /// Parses one expression per state coordinate.
    pub fn parse(name: impl Into<String>, update: &[&str]) -> Result<Self, SystemError> {
        let name = name.into();
        let n = update.len();
        let exprs = update
            .iter()
            .map(|s| expr::parse(s, n))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| SystemError::Expr {
                mode: name.clone(),
                source,
            })?;
        Self::new(name, exprs)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn update(&self) -> &[Expr] {
        &self.update
    }

    pub fn dim(&self) -> usize {
        self.update.len()
    }

    pub fn jacobian(&self) -> Option<&[Vec<Expr>]> {
        self.jacobian.as_deref()
    }

    pub fn is_differentiable(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.update.iter().map(|f| f.eval_real(x)).collect()
    }

    fn domain_err(&self, b: &IntervalBox, e: impl fmt::Display) -> SystemError {
        SystemError::Domain {
            mode: self.name.clone(),
            bbox: b.to_text(),
            message: e.to_string(),
        }
    }

    /// Interval enclosure of `f_p(b)`.
    pub fn include(
        &self,
        b: &IntervalBox,
        strategy: InclusionStrategy,
        r: Rounding,
    ) -> Result<IntervalBox, SystemError> {
        match strategy {
            InclusionStrategy::Natural => self.include_natural(b, r),
            InclusionStrategy::MeanValue => self.include_mean_value(b, r),
        }
    }

    fn include_natural(&self, b: &IntervalBox, r: Rounding) -> Result<IntervalBox, SystemError> {
        let dims = self
            .update
            .iter()
            .map(|f| f.eval_interval(b, r))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| self.domain_err(b, e))?;
        Ok(IntervalBox::new(dims))
    }

    fn include_mean_value(
        &self,
        b: &IntervalBox,
        r: Rounding,
    ) -> Result<IntervalBox, SystemError> {
        let jac = self
            .jacobian
            .as_ref()
            .ok_or_else(|| SystemError::NonDifferentiable {
                mode: self.name.clone(),
            })?;
        let m = b.midpoint();
        let mbox = IntervalBox::point(&m);
        let offsets = b
            .dims()
            .iter()
            .zip(&m)
            .map(|(d, &mi)| d.sub(&Interval::point(mi), r))
            .collect::<Result<Vec<_>, _>>()?;
        let mut dims = Vec::with_capacity(self.dim());
        for (f, row) in self.update.iter().zip(jac) {
            let mut acc = f.eval_interval(&mbox, r).map_err(|e| self.domain_err(b, e))?;
            for (dfdx, off) in row.iter().zip(&offsets) {
                if matches!(dfdx, Expr::Const(c) if *c == 0.0) {
                    continue;
                }
                let g = dfdx.eval_interval(b, r).map_err(|e| self.domain_err(b, e))?;
                acc = acc.add(&g.mul(off, r)?, r)?;
            }
            dims.push(acc);
        }
        Ok(IntervalBox::new(dims))
    }

    /// Infinity norm bound of the interval Jacobian over `b`: the largest row
    /// sum of entry magnitudes.
    pub fn jacobian_norm_bound(&self, b: &IntervalBox, r: Rounding) -> Result<f64, SystemError> {
        let jac = self
            .jacobian
            .as_ref()
            .ok_or_else(|| SystemError::NonDifferentiable {
                mode: self.name.clone(),
            })?;
        let mut best: f64 = 0.0;
        for row in jac {
            let mut sum = 0.0;
            for d in row {
                sum += d.eval_interval(b, r).map_err(|e| self.domain_err(b, e))?.mag();
            }
            best = best.max(sum);
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    dim: usize,
    modes: Vec<Mode>,
}

impl SwitchedSystem {
    pub fn new(dim: usize, modes: Vec<Mode>) -> Result<Self, SystemError> {
        if modes.is_empty() {
            return Err(SystemError::NoModes);
        }
        for (i, m) in modes.iter().enumerate() {
            if m.dim() != dim {
                return Err(SystemError::WrongArity {
                    mode: m.name.clone(),
                    expected: dim,
                    got: m.dim(),
                });
            }
            if modes[..i].iter().any(|o| o.name == m.name) {
                return Err(SystemError::DuplicateMode(m.name.clone()));
            }
        }
        Ok(Self { dim, modes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, p: usize) -> &Mode {
        &self.modes[p]
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode_index(&self, name: &str) -> Option<usize> {
        self.modes.iter().position(|m| m.name == name)
    }

    pub fn mode_names(&self) -> Vec<String> {
        self.modes.iter().map(|m| m.name.clone()).collect()
    }

    pub fn include(
        &self,
        p: usize,
        b: &IntervalBox,
        strategy: InclusionStrategy,
        r: Rounding,
    ) -> Result<IntervalBox, SystemError> {
        if b.dim() != self.dim {
            return Err(IntervalError::DimensionMismatch {
                expected: self.dim,
                got: b.dim(),
            }
            .into());
        }
        self.modes[p].include(b, strategy, r)
    }

    pub fn step(&self, p: usize, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        self.modes[p].eval(x).map_err(|source| SystemError::Expr {
            mode: self.modes[p].name.clone(),
            source,
        })
    }

    /// Lipschitz constant in the infinity norm over the hull `domain`.
    pub fn estimate_rho1(&self, domain: &IntervalBox) -> Result<LipschitzEstimate, SystemError> {
        let mut rho1: f64 = 0.0;
        for m in &self.modes {
            rho1 = rho1.max(m.jacobian_norm_bound(domain, Rounding::Outward)?);
        }
        Ok(LipschitzEstimate {
            rho1,
            domain: domain.clone(),
        })
    }

    /// Stable digest of the dimension and printed mode maps.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("n={}\n", self.dim));
        for m in &self.modes {
            h.update(format!("{}:", m.name));
            for f in &m.update {
                h.update(format!("{f};"));
            }
            h.update("\n");
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub rho1: f64,
    pub domain: IntervalBox,
}

/// Builds the linear-affine map `x -> M x + d` as expressions, dropping zero
/// coefficients and writing unit coefficients as the bare variable.
pub fn linear_affine_exprs(m: &DMatrix<f64>, d: &[f64]) -> Vec<Expr> {
    let n = m.nrows();
    (0..n)
        .map(|i| {
            let mut acc: Option<Expr> = None;
            for j in 0..n {
                let c = m[(i, j)];
                if c == 0.0 {
                    continue;
                }
                let term = if c == 1.0 {
                    Expr::var(j)
                } else {
                    Expr::mul(Expr::constant(c), Expr::var(j))
                };
                acc = Some(match acc {
                    None => term,
                    Some(a) => Expr::add(a, term),
                });
            }
            if d[i] != 0.0 || acc.is_none() {
                let c = Expr::constant(d[i]);
                acc = Some(match acc {
                    None => c,
                    Some(a) => Expr::add(a, c),
                });
            }
            acc.unwrap()
        })
        .collect()
}

/// `exp(A)` by scaling and squaring: halve until `||A / 2^s||_inf < 0.5`,
/// sum the Taylor series until the next term is below 1e-16 relative to the
/// partial sum (the tail is then < 1e-14), and square back `s` times.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = inf_norm(a);
    let mut s = 0u32;
    while norm / 2f64.powi(s as i32) >= 0.5 {
        s += 1;
    }
    let scaled = a / 2f64.powi(s as i32);
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..60 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if inf_norm(&term) <= 1e-16 * inf_norm(&sum).max(1.0) {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Zero-order-hold discretization of `dx/dt = A x + b` with sampling time
/// `tau`, via the exponential of the augmented matrix `[[A, b], [0, 0]] tau`.
pub fn discretize_linear_affine(
    name: impl Into<String>,
    a: &DMatrix<f64>,
    b: &[f64],
    tau: f64,
) -> Result<Mode, SystemError> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(SystemError::InvalidArgument(format!(
            "sampling time must be positive, got {tau}"
        )));
    }
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(SystemError::InvalidArgument(format!(
            "expected a square matrix and a {n}-vector"
        )));
    }
    let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            aug[(i, j)] = a[(i, j)] * tau;
        }
        aug[(i, n)] = b[i] * tau;
    }
    let e = expm(&aug);
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd: Vec<f64> = (0..n).map(|i| e[(i, n)]).collect();
    Mode::new(name, linear_affine_exprs(&ad, &bd))
}

/// Forward Euler step `x + tau * field(x)`, built symbolically without
/// simplification so evaluation matches the formula bit for bit.
pub fn discretize_euler(
    name: impl Into<String>,
    field: &[Expr],
    tau: f64,
) -> Result<Mode, SystemError> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(SystemError::InvalidArgument(format!(
            "sampling time must be positive, got {tau}"
        )));
    }
    let update = field
        .iter()
        .enumerate()
        .map(|(i, f)| Expr::add(Expr::var(i), Expr::mul(Expr::constant(tau), f.clone())))
        .collect();
    Mode::new(name, update)
}

/// Quadratic Lyapunov level set used to estimate a robust invariance margin.
#[derive(Debug, Clone)]
pub struct LyapunovMargin {
    pub p: DMatrix<f64>,
    /// The level set is `{x : x' P x <= gamma^2}`.
    pub gamma: f64,
    /// Smallest infinity-norm clearance of `A x` from the complement of the
    /// level set, over sampled boundary points `x`.
    pub r: f64,
}

/// Solves `A' P A - P + Q = 0` by summing `sum_k (A')^k Q A^k`, scales the
/// level set to be inscribed in `omega`, and samples its boundary for the
/// margin.
pub fn lyapunov_margin(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    omega: &IntervalBox,
    samples: usize,
) -> Result<LyapunovMargin, SystemError> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n || omega.dim() != n {
        return Err(SystemError::InvalidArgument("dimension mismatch".into()));
    }
    if !omega.contains_point(&vec![0.0; n]) {
        return Err(SystemError::OriginOutside);
    }
    let p = lyapunov_series(a, q)?;
    let p_inv = p
        .clone()
        .try_inverse()
        .ok_or_else(|| SystemError::InvalidArgument("P is singular".into()))?;

    // max of x_i over the ellipsoid {x' P x <= g^2} is g sqrt((P^-1)_ii)
    let mut gamma2 = f64::INFINITY;
    for i in 0..n {
        let d = omega.get(i);
        let bound = d.hi().min(-d.lo());
        gamma2 = gamma2.min(bound * bound / p_inv[(i, i)]);
    }
    let gamma = gamma2.sqrt();

    let r = boundary_samples(&p, gamma, samples)
        .iter()
        .map(|x| {
            let ax = a * nalgebra::DVector::from_column_slice(x);
            ellipsoid_clearance(&p, gamma2, ax.as_slice())
        })
        .fold(f64::INFINITY, f64::min);
    Ok(LyapunovMargin { p, gamma, r })
}

fn lyapunov_series(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, SystemError> {
    let mut p = q.clone();
    let mut term = q.clone();
    let at = a.transpose();
    for _ in 0..200_000 {
        term = &at * &term * a;
        p += &term;
        let t = inf_norm(&term);
        if !t.is_finite() {
            return Err(SystemError::NotConverging);
        }
        if t < 1e-12 {
            return Ok(p);
        }
    }
    Err(SystemError::NotConverging)
}

/// Points on `{x' P x = gamma^2}`. In 2-D these are evenly spaced in angle;
/// in higher dimensions a deterministic quasi-random set of directions.
fn boundary_samples(p: &DMatrix<f64>, gamma: f64, samples: usize) -> Vec<Vec<f64>> {
    let n = p.nrows();
    let dirs: Vec<Vec<f64>> = if n == 2 {
        (0..samples)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / samples as f64;
                vec![t.cos(), t.sin()]
            })
            .collect()
    } else {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x1ac0);
        (0..samples)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    };
    dirs.into_iter()
        .filter_map(|d| {
            let v = nalgebra::DVector::from_vec(d);
            let q = (v.transpose() * p * &v)[(0, 0)];
            (q > 0.0).then(|| (v * (gamma / q.sqrt())).as_slice().to_vec())
        })
        .collect()
}

/// Largest `t` such that the infinity-norm ball of radius `t` around `y` lies
/// in the ellipsoid. The ellipsoid is convex, so checking the ball's corners
/// suffices; each corner gives a quadratic in `t`.
fn ellipsoid_clearance(p: &DMatrix<f64>, gamma2: f64, y: &[f64]) -> f64 {
    let n = y.len();
    let yv = nalgebra::DVector::from_column_slice(y);
    let c = (yv.transpose() * p * &yv)[(0, 0)] - gamma2;
    if c > 0.0 {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for mask in 0..(1u32 << n) {
        let s = nalgebra::DVector::from_iterator(
            n,
            (0..n).map(|i| if mask & (1 << i) != 0 { 1.0 } else { -1.0 }),
        );
        let qa = (s.transpose() * p * &s)[(0, 0)];
        let qb = 2.0 * (yv.transpose() * p * &s)[(0, 0)];
        let disc = (qb * qb - 4.0 * qa * c).max(0.0);
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        best = best.min(t.max(0.0));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(b: &[(f64, f64)]) -> IntervalBox {
        IntervalBox::from_bounds(b).unwrap()
    }

    #[test]
    fn include_examples() {
        let m = Mode::parse("sq", &["x1^2"]).unwrap();
        let b = bx(&[(0.9, 1.1)]);
        let mv = m
            .include(&b, InclusionStrategy::MeanValue, Rounding::None)
            .unwrap();
        // 1 + [1.8, 2.2] * [-0.1, 0.1]
        let g = mv.get(0);
        assert!((g.lo() - 0.78).abs() < 1e-12 && (g.hi() - 1.22).abs() < 1e-12, "{g}");
        let nat = m.include(&b, InclusionStrategy::Natural, Rounding::None).unwrap();
        let g = nat.get(0);
        assert!((g.lo() - 0.81).abs() < 1e-12 && (g.hi() - 1.21).abs() < 1e-12);

        let c = Mode::parse("half", &["0.5*x1", "0.5*x2"]).unwrap();
        let img = c
            .include(
                &bx(&[(-1.0, 1.0), (-1.0, 1.0)]),
                InclusionStrategy::Natural,
                Rounding::None,
            )
            .unwrap();
        assert_eq!(img, bx(&[(-0.5, 0.5), (-0.5, 0.5)]));
    }

    #[test]
    fn mean_value_rejects_abs() {
        let m = Mode::parse("a", &["abs(x1)"]).unwrap();
        assert!(!m.is_differentiable());
        assert!(matches!(
            m.include(&bx(&[(0.0, 1.0)]), InclusionStrategy::MeanValue, Rounding::None),
            Err(SystemError::NonDifferentiable { .. })
        ));
        assert!(m
            .include(&bx(&[(-1.0, 1.0)]), InclusionStrategy::Natural, Rounding::None)
            .is_ok());
    }

    #[test]
    fn rho1_examples() {
        let lti = Mode::parse(
            "lti",
            &["1.0810*x1+0.4517*x2", "-0.0903*x1+0.7197*x2"],
        )
        .unwrap();
        let sys = SwitchedSystem::new(2, vec![lti]).unwrap();
        let est = sys.estimate_rho1(&bx(&[(-1.0, 1.0), (-1.0, 1.0)])).unwrap();
        assert!((est.rho1 - 1.5327).abs() < 1e-12);

        let id = SwitchedSystem::new(2, vec![Mode::parse("id", &["x1", "x2"]).unwrap()]).unwrap();
        assert_eq!(id.estimate_rho1(&bx(&[(0.0, 1.0), (0.0, 1.0)])).unwrap().rho1, 1.0);
        let two = SwitchedSystem::new(1, vec![Mode::parse("d", &["2*x1"]).unwrap()]).unwrap();
        assert_eq!(two.estimate_rho1(&bx(&[(0.0, 1.0)])).unwrap().rho1, 2.0);
    }

    #[test]
    fn system_validation() {
        assert_eq!(SwitchedSystem::new(2, vec![]), Err(SystemError::NoModes));
        let a = Mode::parse("a", &["x1", "x2"]).unwrap();
        assert!(matches!(
            SwitchedSystem::new(2, vec![a.clone(), a.clone()]),
            Err(SystemError::DuplicateMode(_))
        ));
        assert!(matches!(
            SwitchedSystem::new(3, vec![a]),
            Err(SystemError::WrongArity { .. })
        ));
        assert!(matches!(
            Mode::parse("b", &["x3", "x1"]),
            Err(SystemError::Expr { .. })
        ));
    }

    #[test]
    fn linear_affine_examples() {
        let a = DMatrix::<f64>::zeros(2, 2);
        let m = discretize_linear_affine("m", &a, &[1.0, 0.0], 0.5).unwrap();
        assert_eq!(m.update()[0].to_string(), "x1+0.5");
        assert_eq!(m.update()[1].to_string(), "x2");

        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        let m = discretize_linear_affine("m", &a, &[0.0, 0.0], 2f64.ln()).unwrap();
        let y = m.eval(&[1.0, 0.0]).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-15 && y[1] == 0.0);
        let y = m.eval(&[0.0, 1.0]).unwrap();
        assert!((y[1] - 0.5).abs() < 1e-15 && y[0] == 0.0);

        assert!(discretize_linear_affine("m", &a, &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn euler_examples() {
        let field = vec![
            expr::parse("x2", 2).unwrap(),
            expr::parse("-x1", 2).unwrap(),
        ];
        let m = discretize_euler("e", &field, 0.01).unwrap();
        let want = Mode::parse("w", &["x1+0.01*x2", "x2-0.01*x1"]).unwrap();
        for x in [[1.0, 2.0], [-0.3, 0.7], [5.0, -1.25]] {
            let got = m.eval(&x).unwrap();
            let exp = want.eval(&x).unwrap();
            for (g, e) in got.iter().zip(&exp) {
                assert!((g - e).abs() < 1e-15);
            }
        }
        assert!(discretize_euler("e", &field, 0.0).is_err());
    }

    #[test]
    fn lyapunov_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let q = DMatrix::<f64>::identity(2, 2);
        let omega = bx(&[(-1.0, 1.0), (-1.0, 1.0)]);
        let res = lyapunov_margin(&a, &q, &omega, 1000).unwrap();
        for (i, j) in [(0, 0), (1, 1)] {
            assert!((res.p[(i, j)] - 4.0 / 3.0).abs() < 1e-11);
        }
        assert!(res.p[(0, 1)].abs() < 1e-15);
        // disk of radius 1: gamma^2 = 4/3
        assert!((res.gamma * res.gamma - 4.0 / 3.0).abs() < 1e-10);
        // A x lies on the circle of radius 1/2; clearance in the inf-norm is
        // min over directions of the distance to the unit circle, reached on
        // the diagonal: 1/sqrt(2) - 1/(2 sqrt(2)) = 1/(2 sqrt(2))
        assert!((res.r - 0.5 / 2f64.sqrt()).abs() < 1e-3, "{}", res.r);

        let unstable = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        assert!(matches!(
            lyapunov_margin(&unstable, &q, &omega, 10),
            Err(SystemError::NotConverging)
        ));
        let off = bx(&[(0.5, 1.0), (-1.0, 1.0)]);
        assert!(matches!(
            lyapunov_margin(&a, &q, &off, 10),
            Err(SystemError::OriginOutside)
        ));
    }
}
