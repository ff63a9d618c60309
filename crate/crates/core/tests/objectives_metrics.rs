mod common;

use common::{away_from_zero, rng, uniform};
use mdust::objectives::{dice_ce_loss, mae_loss, nt_xent, DICE_SMOOTH};
use mdust::tensor::gradcheck::check_gradients;
use mdust::{dsc, hausdorff, paired_t_test, BinaryMask, Error, Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

fn nt_xent_oracle(z: &[Vec<f64>], tau: f64) -> f64 {
    let n = z.len();
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut total = 0.0;
    for i in 0..n {
        let j = (i + n / 2) % n;
        let num = (cos(&z[i], &z[j]) / tau).exp();
        let den: f64 = (0..n).filter(|&k| k != i).map(|k| (cos(&z[i], &z[k]) / tau).exp()).sum();
        total += -(num / den).ln();
    }
    total / n as f64
}

fn rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    t.data().chunks(t.shape()[1]).map(<[f64]>::to_vec).collect()
}

#[test]
fn nt_xent_matches_direct_summation() {
    for seed in 0..5 {
        let z = uniform(&mut rng(seed), &[4, 128], 1.0);
        let tape = Tape::new();
        let got = nt_xent(tape.leaf(&z), 0.5).unwrap().item();
        assert!((got - nt_xent_oracle(&rows(&z), 0.5)).abs() < 1e-6, "seed {seed}");
    }
}

#[test]
fn nt_xent_ignores_common_rescaling() {
    let z = uniform(&mut rng(7), &[6, 16], 1.0);
    let scaled = Tensor::new(z.shape(), z.data().iter().map(|v| v * 37.5).collect()).unwrap();
    let tape = Tape::new();
    let a = nt_xent(tape.leaf(&z), 0.5).unwrap().item();
    let b = nt_xent(tape.leaf(&scaled), 0.5).unwrap().item();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn nt_xent_gradient_matches_finite_differences() {
    let z = uniform(&mut rng(8), &[6, 5], 1.0);
    let r = check_gradients(&[z], 1e-5, 100, |_, v| nt_xent(v[0], 0.5)).unwrap();
    assert!(r.passes(1e-3), "{r:?}");
}

fn dice_ce_oracle(logits: &Tensor<f64>, labels: &[u8]) -> f64 {
    let s = logits.shape();
    let (b, vox) = (s[0], s[2..].iter().product::<usize>());
    let (mut dice, mut ce) = (0.0, 0.0);
    for n in 0..b {
        let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
        for v in 0..vox {
            let z0 = logits.data()[(2 * n) * vox + v];
            let z1 = logits.data()[(2 * n + 1) * vox + v];
            let p1 = z1.exp() / (z0.exp() + z1.exp());
            let g = labels[n * vox + v] as f64;
            inter += p1 * g;
            sp += p1;
            sg += g;
            ce -= if g == 1.0 { p1.ln() } else { (1.0 - p1).ln() };
        }
        dice += 1.0 - 2.0 * inter / (sp + sg + DICE_SMOOTH);
    }
    dice / b as f64 + ce / (b * vox) as f64
}

fn random_labels(seed: u64, n: usize) -> Vec<u8> {
    let mut r = rng(seed);
    (0..n).map(|_| u8::from(r.random_bool(0.4))).collect()
}

#[test]
fn dice_ce_matches_direct_formula() {
    for seed in 0..5 {
        let z = uniform(&mut rng(seed), &[2, 2, 3, 4, 2], 3.0);
        let labels = random_labels(seed + 100, 2 * 24);
        let tape = Tape::new();
        let got = dice_ce_loss(tape.leaf(&z), &labels).unwrap().item();
        assert!((got - dice_ce_oracle(&z, &labels)).abs() < 1e-10, "seed {seed}");
    }
}

#[test]
fn dice_ce_gradient_matches_finite_differences() {
    let z = uniform(&mut rng(11), &[2, 2, 3, 3, 2], 2.0);
    let labels = random_labels(12, 36);
    let r = check_gradients(&[z], 1e-5, 200, |_, v| dice_ce_loss(v[0], &labels)).unwrap();
    assert!(r.passes(1e-3), "{r:?}");
}

#[test]
fn dice_ce_decreases_as_true_foreground_gains_confidence() {
    let labels = [1, 0, 1, 0];
    let mut prev = f64::INFINITY;
    for step in 0..10 {
        let boost = step as f64 * 0.5;
        let z = Tensor::new([1, 2, 4], vec![0.0, 0.3, 0.0, -0.2, boost, 0.1, boost, 0.4]).unwrap();
        let tape = Tape::new();
        let loss = dice_ce_loss(tape.leaf(&z), &labels).unwrap().item();
        assert!(loss < prev);
        prev = loss;
    }
}

#[test]
fn mae_gradient_matches_finite_differences() {
    let p = away_from_zero(&mut rng(13), &[3, 4]);
    let t = Tensor::zeros([3, 4]);
    let r = check_gradients(&[p, t], 1e-6, 100, |_, v| mae_loss(v[0], v[1])).unwrap();
    assert!(r.passes(1e-3), "{r:?}");
}

fn surface_oracle(m: &BinaryMask) -> Vec<[f64; 3]> {
    let [nh, nw, nl] = m.dims().map(|d| d as isize);
    let sp = m.spacing();
    let on = |h: isize, w: isize, l: isize| {
        (0..nh).contains(&h) && (0..nw).contains(&w) && (0..nl).contains(&l) && m.get(h as usize, w as usize, l as usize)
    };
    let mut out = Vec::new();
    for h in 0..nh {
        for w in 0..nw {
            for l in 0..nl {
                let offsets = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)];
                if on(h, w, l) && offsets.iter().any(|&(a, b, c)| !on(h + a, w + b, l + c)) {
                    out.push([h as f64 * sp[0], w as f64 * sp[1], l as f64 * sp[2]]);
                }
            }
        }
    }
    out
}

fn hausdorff_oracle(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (sa, sb) = (surface_oracle(a), surface_oracle(b));
    let directed = |x: &[[f64; 3]], y: &[[f64; 3]]| {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(&sa, &sb).max(directed(&sb, &sa))
}

fn random_mask(r: &mut impl Rng, dims: [usize; 3], spacing: [f64; 3]) -> BinaryMask {
    let centre = dims.map(|d| r.random_range(0.0..d as f64));
    let radius = r.random_range(1.0..6.0);
    let noise = r.random_range(0.0..0.2);
    let m = BinaryMask::from_fn(dims, spacing, |i| {
        let p = [i / (dims[1] * dims[2]), i / dims[2] % dims[1], i % dims[2]];
        let d2: f64 = (0..3).map(|k| (p[k] as f64 - centre[k]).powi(2)).sum();
        d2 <= radius * radius || r.random_bool(noise * 0.1)
    })
    .unwrap();
    if m.is_empty() {
        BinaryMask::from_fn(dims, spacing, |i| i == 0).unwrap()
    } else {
        m
    }
}

#[test]
fn hausdorff_matches_all_pairs_oracle() {
    let mut r = rng(20);
    for case in 0..100 {
        let dims = [r.random_range(1..=16), r.random_range(1..=16), r.random_range(1..=16)];
        let spacing = [r.random_range(0.5..2.0), r.random_range(0.5..2.0), r.random_range(0.5..3.0)];
        let a = random_mask(&mut r, dims, spacing);
        let b = random_mask(&mut r, dims, spacing);
        assert_eq!(hausdorff(&a, &b).unwrap(), hausdorff_oracle(&a, &b), "case {case}");
    }
}

#[test]
fn mismatched_grids_are_rejected() {
    let a = BinaryMask::from_fn([2, 2, 2], [1.0; 3], |i| i == 0).unwrap();
    let b = BinaryMask::from_fn([2, 2, 3], [1.0; 3], |i| i == 0).unwrap();
    assert!(matches!(dsc(&a, &b), Err(Error::Shape { .. })));
    assert!(hausdorff(&a, &b).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dsc_and_hausdorff_properties(seed in 0u64..10_000, scale in 0.5f64..4.0) {
        let mut r = rng(seed);
        let dims = [r.random_range(2..10), r.random_range(2..10), r.random_range(1..6)];
        let a = random_mask(&mut r, dims, [1.0; 3]);
        let b = random_mask(&mut r, dims, [1.0; 3]);
        let inter = a.data().iter().zip(b.data()).filter(|(x, y)| **x == 1 && **y == 1).count();
        let direct = 2.0 * inter as f64 / (a.count() + b.count()) as f64;
        prop_assert_eq!(dsc(&a, &b).unwrap(), direct);
        prop_assert_eq!(dsc(&a, &b).unwrap(), dsc(&b, &a).unwrap());
        prop_assert_eq!(dsc(&a, &a).unwrap(), 1.0);

        let h = hausdorff(&a, &b).unwrap();
        prop_assert!(h >= 0.0);
        prop_assert_eq!(h, hausdorff(&b, &a).unwrap());
        prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let sa = a.clone().with_spacing([scale; 3]).unwrap();
        let sb = b.clone().with_spacing([scale; 3]).unwrap();
        prop_assert!((hausdorff(&sa, &sb).unwrap() - scale * h).abs() <= 1e-9 * (1.0 + scale * h));
        prop_assert_eq!(dsc(&sa, &sb).unwrap(), dsc(&a, &b).unwrap());
    }
}

/// Two-sided p-value by Simpson integration of the Student t density.
fn t_pvalue_oracle(t: f64, df: f64) -> f64 {
    let ln_gamma = |x: f64| -> f64 {
        // Stirling series after shifting x above 10.
        let mut x = x;
        let mut acc = 0.0;
        while x < 10.0 {
            acc -= x.ln();
            x += 1.0;
        }
        acc + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x.powi(3))
            + 1.0 / (1260.0 * x.powi(5))
    };
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let n = 200_000;
    let (a, b) = (0.0, t.abs());
    let h = (b - a) / n as f64;
    let mut s = pdf(a) + pdf(b);
    for i in 1..n {
        s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

#[test]
fn paired_t_test_matches_hand_computation() {
    let x = [0.81, 0.76, 0.79, 0.84, 0.72, 0.77, 0.80, 0.74, 0.83, 0.78];
    let y = [0.75, 0.74, 0.70, 0.80, 0.71, 0.69, 0.78, 0.70, 0.79, 0.77];
    let d = [0.06, 0.02, 0.09, 0.04, 0.01, 0.08, 0.02, 0.04, 0.04, 0.01];
    let mean = 0.041;
    let ss: f64 = d.iter().map(|v| (v - mean) * (v - mean)).sum();
    let t_hand = mean / (ss / 9.0 / 10.0).sqrt();
    let r = paired_t_test(&x, &y).unwrap();
    assert!((r.t - t_hand).abs() < 1e-9, "{} vs {t_hand}", r.t);
    assert!((r.mean_difference - mean).abs() < 1e-12);
    assert_eq!(r.df, 9.0);
    assert!((r.p - t_pvalue_oracle(t_hand, 9.0)).abs() < 1e-8, "{}", r.p);
    assert!(r.significant);
}

#[test]
fn paired_t_test_p_value_is_symmetric() {
    let x = [0.1, 0.4, 0.35, 0.8, 0.55];
    let y = [0.2, 0.3, 0.5, 0.6, 0.5];
    let a = paired_t_test(&x, &y).unwrap();
    let b = paired_t_test(&y, &x).unwrap();
    assert_eq!(a.t, -b.t);
    assert!((a.p - b.p).abs() < 1e-15);
    assert!((a.p - t_pvalue_oracle(a.t, 4.0)).abs() < 1e-8);
    assert!(!a.significant);
}
