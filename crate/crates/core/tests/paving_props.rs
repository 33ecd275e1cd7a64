use invkit::{IntervalBox, Region};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn roots() -> Vec<IntervalBox> {
    vec![
        IntervalBox::from_bounds(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap(),
        IntervalBox::from_bounds(&[(1.0, 2.0), (-1.0, 1.0)]).unwrap(),
    ]
}

/// Random subdivision of `b` up to `depth` levels; leaves come labelled.
fn subdivide(rng: &mut ChaCha8Rng, b: &IntervalBox, depth: u32, out: &mut Vec<(IntervalBox, bool)>) {
    if depth == 0 || rng.gen_bool(0.3) {
        out.push((b.clone(), rng.gen_bool(0.5)));
        return;
    }
    let (l, r) = b.bisect().unwrap();
    subdivide(rng, &l, depth - 1, out);
    subdivide(rng, &r, depth - 1, out);
}

fn random_leaves(rng: &mut ChaCha8Rng) -> Vec<(IntervalBox, bool)> {
    let mut out = Vec::new();
    for r in roots() {
        subdivide(rng, &r, 6, &mut out);
    }
    out
}

fn inside(leaves: &[(IntervalBox, bool)]) -> Vec<IntervalBox> {
    leaves.iter().filter(|(_, i)| *i).map(|(b, _)| b.clone()).collect()
}

/// Dyadic coordinate on a 1/32 grid within [-1.25, 2.25].
fn grid(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-40..=72) as f64 / 32.0
}

fn random_query(rng: &mut ChaCha8Rng) -> IntervalBox {
    let mut d = || {
        let (a, b) = (grid(rng), grid(rng));
        if a == b {
            (a, a + 1.0 / 32.0)
        } else {
            (a.min(b), a.max(b))
        }
    };
    IntervalBox::from_bounds(&[d(), d()]).unwrap()
}

/// Covered measure of `q`, exact because every coordinate is dyadic.
fn covered(inside: &[IntervalBox], q: &IntervalBox) -> f64 {
    inside.iter().filter_map(|b| b.intersect(q)).map(|b| b.volume()).sum()
}

#[test]
fn queries_agree_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let leaves = random_leaves(&mut rng);
        let ins = inside(&leaves);
        let region = Region::from_boxes(&roots(), &ins).unwrap();
        for _ in 0..1000 {
            let q = random_query(&mut rng);
            assert_eq!(region.contains_box(&q), covered(&ins, &q) == q.volume(), "contains {q}");
            assert_eq!(
                region.intersects_box(&q),
                ins.iter().any(|b| b.intersects(&q)),
                "intersects {q}"
            );
            let x = [grid(&mut rng), grid(&mut rng)];
            assert_eq!(
                region.contains_point(&x),
                ins.iter().any(|b| b.contains_point(&x)),
                "point {x:?}"
            );
        }
    }
}

#[test]
fn volume_is_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..300 {
        let leaves = random_leaves(&mut rng);
        let ins = inside(&leaves);
        let region = Region::from_boxes(&roots(), &ins).unwrap();
        let sum: f64 = ins.iter().map(|b| b.volume()).sum();
        assert_eq!(region.volume(), sum);
        assert_eq!(region.volume() + region.complement().volume(), region.root_volume());
        let k = rng.gen_range(0..=ins.len());
        let a = Region::from_boxes(&roots(), &ins[..k]).unwrap();
        let b = Region::from_boxes(&roots(), &ins[k..]).unwrap();
        assert_eq!(a.volume() + b.volume(), region.volume());
        assert_eq!(region.remove_boxes(&ins[..k]).unwrap().volume(), b.volume());
        assert!(a.is_subset_of(&region) && b.is_subset_of(&region));
        let leaf_sum: f64 = region.leaves_in().iter().map(|b| b.volume()).sum();
        assert_eq!(leaf_sum, sum);
    }
}

#[test]
fn construction_is_order_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..300 {
        let leaves = random_leaves(&mut rng);
        let mut ins = inside(&leaves);
        let a = Region::from_boxes(&roots(), &ins).unwrap();
        ins.shuffle(&mut rng);
        let b = Region::from_boxes(&roots(), &ins).unwrap();
        assert!(a.equals(&b));
        assert_eq!(a, b);
        assert_eq!(a.leaves_in(), b.leaves_in());

        // removing the OUT leaves from the full region in any order lands on
        // the same reduced forest
        let mut outs: Vec<IntervalBox> =
            leaves.iter().filter(|(_, i)| !*i).map(|(b, _)| b.clone()).collect();
        outs.shuffle(&mut rng);
        let c = Region::full(&roots()).unwrap().remove_boxes(&outs).unwrap();
        assert!(a.equals(&c));
        assert_eq!(a.complement().complement(), a);
        assert!(Region::from_boxes(&roots(), &a.leaves_in()).unwrap().equals(&a));
    }
}
