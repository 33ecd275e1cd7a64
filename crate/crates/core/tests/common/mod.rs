#![allow(dead_code)]

use invkit::expr::{BinaryOp, Expr, UnaryOp};
use invkit::{cpre, Interval, IntervalBox, Mode, Region, Rounding, SwitchedSystem, SynthesisConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random expression over `n` variables. Only operations defined everywhere
/// on bounded boxes are used unless `partial` is set.
pub fn random_expr<R: Rng>(rng: &mut R, depth: u32, n: usize, partial: bool) -> Expr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.6) {
            Expr::var(rng.gen_range(0..n))
        } else {
            Expr::constant((rng.gen_range(-40..=40) as f64) / 8.0)
        };
    }
    let d = depth - 1;
    match rng.gen_range(0..if partial { 12 } else { 9 }) {
        0 => Expr::add(random_expr(rng, d, n, partial), random_expr(rng, d, n, partial)),
        1 => Expr::sub(random_expr(rng, d, n, partial), random_expr(rng, d, n, partial)),
        2 | 3 => Expr::mul(random_expr(rng, d, n, partial), random_expr(rng, d, n, partial)),
        4 => Expr::powi(random_expr(rng, d, n, partial), rng.gen_range(0..5)),
        5 => Expr::unary(UnaryOp::Sin, random_expr(rng, d, n, partial)),
        6 => Expr::unary(UnaryOp::Cos, random_expr(rng, d, n, partial)),
        7 => Expr::unary(UnaryOp::Neg, random_expr(rng, d, n, partial)),
        8 => Expr::unary(UnaryOp::Exp, Expr::mul(Expr::constant(0.25), random_expr(rng, d, n, partial))),
        9 => Expr::binary(BinaryOp::Div, random_expr(rng, d, n, partial), random_expr(rng, d, n, partial)),
        10 => Expr::unary(UnaryOp::Log, random_expr(rng, d, n, partial)),
        _ => Expr::unary(UnaryOp::Sqrt, random_expr(rng, d, n, partial)),
    }
}

pub fn random_box<R: Rng>(rng: &mut R, n: usize, scale: f64) -> IntervalBox {
    let bounds: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let c = rng.gen_range(-scale..scale);
            let w = rng.gen_range(0.0..scale) * rng.gen_range(0.0f64..1.0).powi(3);
            (c - w, c + w)
        })
        .collect();
    IntervalBox::from_bounds(&bounds).unwrap()
}

pub fn sample_point<R: Rng>(rng: &mut R, b: &IntervalBox) -> Vec<f64> {
    b.dims()
        .iter()
        .map(|d| {
            if d.width() == 0.0 {
                d.lo()
            } else {
                match rng.gen_range(0..8) {
                    0 => d.lo(),
                    1 => d.hi(),
                    _ => rng.gen_range(d.lo()..=d.hi()),
                }
            }
        })
        .collect()
}

pub const O: Rounding = Rounding::Outward;

fn random_interval(rng: &mut ChaCha8Rng) -> Interval {
    let scale = [1e-3, 1.0, 10.0, 1e3][rng.gen_range(0..4)];
    let a: f64 = rng.gen_range(-scale..scale);
    let b = if rng.gen_bool(0.1) { a } else { rng.gen_range(-scale..scale) };
    Interval::new(a.min(b), a.max(b)).unwrap()
}

fn sample(rng: &mut ChaCha8Rng, i: &Interval) -> f64 {
    match rng.gen_range(0..6) {
        0 => i.lo(),
        1 => i.hi(),
        _ => rng.gen_range(i.lo()..=i.hi()),
    }
}

pub type Unary = (&'static str, fn(&Interval) -> Option<Interval>, fn(f64) -> f64);
pub type Binary = (&'static str, fn(&Interval, &Interval) -> Option<Interval>, fn(f64, f64) -> f64);

pub const UNARY: [Unary; 9] = [
    ("sqrt", |a| a.sqrt(O).ok(), f64::sqrt),
    ("exp", |a| a.exp(O).ok(), f64::exp),
    ("log", |a| a.log(O).ok(), f64::ln),
    ("sin", |a| a.sin(O).ok(), f64::sin),
    ("cos", |a| a.cos(O).ok(), f64::cos),
    ("tan", |a| a.tan(O).ok(), f64::tan),
    ("pow2", |a| a.pow_int(2, O).ok(), |x| x * x),
    ("pow3", |a| a.pow_int(3, O).ok(), |x| x * x * x),
    ("abs", |a| Some(a.abs()), f64::abs),
];

pub const BINARY: [Binary; 4] = [
    ("add", |a, b| a.add(b, O).ok(), |x, y| x + y),
    ("sub", |a, b| a.sub(b, O).ok(), |x, y| x - y),
    ("mul", |a, b| a.mul(b, O).ok(), |x, y| x * y),
    ("div", |a, b| a.div(b, O).ok(), |x, y| x / y),
];

/// Counts sampled point results of elementary operations that miss the
/// interval result.
pub fn elementary_soundness(seed: u64, samples: usize) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluations = 0usize;
    let mut violations = Vec::new();
    while evaluations < samples {
        let a = random_interval(&mut rng);
        let b = random_interval(&mut rng);
        for (name, op, f) in UNARY {
            let Some(r) = op(&a) else { continue };
            for _ in 0..4 {
                let x = sample(&mut rng, &a);
                let y = f(x);
                evaluations += 1;
                if y.is_finite() && !r.contains(y) {
                    violations.push(format!("{name}({a}) = {r} misses {name}({x}) = {y}"));
                }
            }
        }
        for (name, op, f) in BINARY {
            let Some(r) = op(&a, &b) else { continue };
            for _ in 0..4 {
                let (x, y) = (sample(&mut rng, &a), sample(&mut rng, &b));
                let z = f(x, y);
                evaluations += 1;
                if z.is_finite() && !r.contains(z) {
                    violations.push(format!("{name}({a}, {b}) = {r} misses {z}"));
                }
            }
        }
    }
    (evaluations, violations)
}

pub fn square() -> IntervalBox {
    IntervalBox::from_bounds(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap()
}

pub fn single(update: &[&str]) -> SwitchedSystem {
    SwitchedSystem::new(2, vec![Mode::parse("m1", update).unwrap()]).unwrap()
}

pub fn sequential(eps: f64) -> SynthesisConfig {
    SynthesisConfig {
        workers: 1,
        ..SynthesisConfig::with_epsilon(eps)
    }
}

fn flats<'a>(boxes: impl Iterator<Item = &'a IntervalBox>) -> Vec<Vec<f64>> {
    let mut v: Vec<Vec<f64>> = boxes.map(|b| b.to_flat()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// `x1 × x2` for each pair, flattened.
fn product(x1: &[(f64, f64)], x2: &[(f64, f64)]) -> Vec<Vec<f64>> {
    x1.iter()
        .flat_map(|a| x2.iter().map(move |b| vec![a.0, a.1, b.0, b.1]))
        .collect()
}

/// Inside, undetermined and outside sets as sorted flat boxes.
pub type Classified = [Vec<Vec<f64>>; 3];

/// Classification of the doubling map on the square at precision 0.5, next
/// to the exact classification computed independently with rational
/// arithmetic.
pub fn cpre_toy() -> (Classified, Classified) {
    let sys = single(&["2*x1", "2*x2"]);
    let omega = Region::full(&[square()]).unwrap();
    let cp = cpre(&sys, &omega, &[square()], &sequential(0.5)).unwrap();
    assert!(cp.inside.iter().all(|(_, m)| m.contains(0) && m.len() == 1));
    let got = [
        flats(cp.inside.iter().map(|(b, _)| b)),
        flats(cp.undetermined.iter()),
        flats(cp.outside.iter()),
    ];

    let mut inside = product(&[(-0.5, 0.0), (0.0, 0.5)], &[(-0.5, 0.0), (0.0, 0.5)]);
    let q: Vec<(f64, f64)> = (0..6).map(|k| (-0.75 + 0.25 * k as f64, -0.5 + 0.25 * k as f64)).collect();
    let rim = [(-0.75, -0.5), (0.5, 0.75)];
    let mut undetermined = product(&rim, &q);
    undetermined.extend(product(&q[1..5], &rim));
    let halves = [(-1.0, -0.5), (-0.5, 0.0), (0.0, 0.5), (0.5, 1.0)];
    let edges = [(-1.0, -0.75), (0.75, 1.0)];
    let mut outside = product(&edges, &halves);
    outside.extend(product(&q, &edges));
    for v in [&mut inside, &mut undetermined, &mut outside] {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    assert_eq!((inside.len(), undetermined.len(), outside.len()), (4, 20, 20));
    (got, [inside, undetermined, outside])
}

fn sup_dist_outside(y: &[f64], b: &IntervalBox) -> f64 {
    // how far `y` lies outside `b` in the sup norm (0 when inside)
    y.iter()
        .zip(b.dims())
        .map(|(&v, d)| (d.lo() - v).max(v - d.hi()).max(0.0))
        .fold(0.0, f64::max)
}

fn sup_depth_inside(y: &[f64], b: &IntervalBox) -> f64 {
    y.iter()
        .zip(b.dims())
        .map(|(&v, d)| (v - d.lo()).min(d.hi() - v))
        .fold(f64::INFINITY, f64::min)
}

pub struct Sandwich {
    pub violations: Vec<String>,
    /// Samples mapped deeper than the margin into Ω.
    pub deep: usize,
    /// Samples in the inside or undetermined region.
    pub kept: usize,
}

/// Samples one classification step of a linear map against the exact
/// predecessor of Ω shrunk and grown by `rho1 * epsilon`.
pub fn sandwich(seed: u64, samples: usize) -> Sandwich {
    let sys = single(&["1.081*x1+0.4517*x2", "-0.0903*x1+0.7197*x2"]);
    let a = [[1.081, 0.4517], [-0.0903, 0.7197]];
    let rho1 = 1.081f64 + 0.4517;
    let eps = 0.05;
    let slack = 1e-12;
    let omega = Region::full(&[square()]).unwrap();
    let cp = cpre(&sys, &omega, &[square()], &sequential(eps)).unwrap();
    let mut boxes: Vec<IntervalBox> = cp.inside.iter().map(|(b, _)| b.clone()).collect();
    let inside = Region::from_boxes(&[square()], &boxes).unwrap();
    boxes.extend(cp.undetermined.iter().cloned());
    let kept_region = Region::from_boxes(&[square()], &boxes).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Sandwich {
        violations: Vec::new(),
        deep: 0,
        kept: 0,
    };
    for _ in 0..samples {
        let x = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        let ax = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
        if sup_depth_inside(&ax, &square()) > rho1 * eps + slack {
            out.deep += 1;
            if !inside.contains_point(&x) {
                out.violations.push(format!("{x:?} maps deep inside but is not kept"));
            }
        }
        if kept_region.contains_point(&x) {
            out.kept += 1;
            if sup_dist_outside(&ax, &square()) > rho1 * eps + slack {
                out.violations.push(format!("{x:?} is kept but maps too far out"));
            }
        }
    }
    out
}
