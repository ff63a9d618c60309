//! Evaluation statistics: DSC, surface Hausdorff distance and the paired t-test.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Binary voxel mask on an `(H, W, L)` grid with millimetre spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    dims: [usize; 3],
    spacing: [f64; 3],
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<u8>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::shape("binary mask", &dims, &[data.len()]));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::invalid("binary mask", "values must be 0 or 1"));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("binary mask", format!("spacing must be positive, got {spacing:?}")));
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn empty(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        Self::new(dims, spacing, vec![0; dims.iter().product()])
    }

    /// Mask of voxels where `pred(i)` holds.
    pub fn from_fn(dims: [usize; 3], spacing: [f64; 3], mut pred: impl FnMut(usize) -> bool) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, (0..n).map(|i| u8::from(pred(i))).collect())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Result<Self> {
        self.spacing = spacing;
        Self::new(self.dims, self.spacing, self.data)
    }

    pub fn index(&self, h: usize, w: usize, l: usize) -> usize {
        (h * self.dims[1] + w) * self.dims[2] + l
    }

    pub fn get(&self, h: usize, w: usize, l: usize) -> bool {
        self.data[self.index(h, w, l)] == 1
    }

    /// Foreground voxels with at least one background 6-neighbour; positions
    /// outside the grid count as background.
    pub fn surface(&self) -> Vec<[usize; 3]> {
        let [nh, nw, nl] = self.dims;
        let mut out = Vec::new();
        for h in 0..nh {
            for w in 0..nw {
                for l in 0..nl {
                    if !self.get(h, w, l) {
                        continue;
                    }
                    let interior = h > 0
                        && h + 1 < nh
                        && w > 0
                        && w + 1 < nw
                        && l > 0
                        && l + 1 < nl
                        && self.get(h - 1, w, l)
                        && self.get(h + 1, w, l)
                        && self.get(h, w - 1, l)
                        && self.get(h, w + 1, l)
                        && self.get(h, w, l - 1)
                        && self.get(h, w, l + 1);
                    if !interior {
                        out.push([h, w, l]);
                    }
                }
            }
        }
        out
    }
}

fn same_grid(op: &'static str, a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::shape(op, &a.dims, &b.dims));
    }
    if a.spacing != b.spacing {
        return Err(Error::invalid(op, format!("spacing {:?} vs {:?}", a.spacing, b.spacing)));
    }
    Ok(())
}

/// `2|A ∩ B| / (|A| + |B|)`; two empty masks score 1.
pub fn dsc(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    same_grid("dsc", a, b)?;
    let inter: usize = a.data.iter().zip(&b.data).map(|(&x, &y)| (x & y) as usize).sum();
    let total = a.count() + b.count();
    Ok(if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 })
}

fn physical(points: &[[usize; 3]], spacing: [f64; 3]) -> Vec<[f64; 3]> {
    points
        .iter()
        .map(|p| [p[0] as f64 * spacing[0], p[1] as f64 * spacing[1], p[2] as f64 * spacing[2]])
        .collect()
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// `max_a min_b |a - b|²`, abandoning `a` once it cannot raise the maximum.
fn directed_sq(from: &[[f64; 3]], to: &[[f64; 3]]) -> f64 {
    let mut worst = 0.0f64;
    for a in from {
        let mut best = f64::INFINITY;
        for b in to {
            let d = sq_dist(a, b);
            if d < best {
                best = d;
                if best <= worst {
                    break;
                }
            }
        }
        worst = worst.max(best);
    }
    worst
}

/// Symmetric Hausdorff distance in millimetres between the surfaces of two
/// non-empty masks.
pub fn hausdorff(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    same_grid("hausdorff", a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::Undefined("Hausdorff distance with an empty mask"));
    }
    let sa = physical(&a.surface(), a.spacing);
    let sb = physical(&b.surface(), b.spacing);
    Ok(directed_sq(&sa, &sb).max(directed_sq(&sb, &sa)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: f64,
    pub mean_difference: f64,
    pub significant: bool,
}

pub const SIGNIFICANCE: f64 = 0.05;

/// Two-sided paired t-test of `x - y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<TTest> {
    if x.len() != y.len() {
        return Err(Error::shape("paired_t_test", &[x.len()], &[y.len()]));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("paired_t_test", "need at least two pairs"));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(Error::Undefined("paired t statistic (differences have zero variance)"));
    }
    let t = mean / (var / nf).sqrt();
    let df = nf - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::invalid("paired_t_test", e.to_string()))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest {
        t,
        p,
        df,
        mean_difference: mean,
        significant: p < SIGNIFICANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(dims: [usize; 3], on: &[[usize; 3]]) -> BinaryMask {
        let mut m = BinaryMask::empty(dims, [1.0; 3]).unwrap();
        for p in on {
            let i = m.index(p[0], p[1], p[2]);
            m.data[i] = 1;
        }
        m
    }

    #[test]
    fn dsc_examples() {
        let a = mask([4, 1, 1], &[[0, 0, 0], [1, 0, 0]]);
        let b = mask([4, 1, 1], &[[1, 0, 0], [2, 0, 0]]);
        let c = mask([4, 1, 1], &[[3, 0, 0]]);
        assert_eq!(dsc(&a, &b).unwrap(), 0.5);
        assert_eq!(dsc(&a, &a).unwrap(), 1.0);
        assert_eq!(dsc(&a, &c).unwrap(), 0.0);
        let e = BinaryMask::empty([4, 1, 1], [1.0; 3]).unwrap();
        assert_eq!(dsc(&e, &e).unwrap(), 1.0);
    }

    #[test]
    fn hausdorff_examples() {
        let a = mask([5, 1, 1], &[[0, 0, 0]]);
        let b = mask([5, 1, 1], &[[3, 0, 0]]);
        assert_eq!(hausdorff(&a, &b).unwrap(), 3.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        let e = BinaryMask::empty([5, 1, 1], [1.0; 3]).unwrap();
        assert!(matches!(hausdorff(&a, &e), Err(Error::Undefined(_))));
    }

    #[test]
    fn interior_voxels_are_not_surface() {
        let m = BinaryMask::from_fn([5, 5, 5], [1.0; 3], |_| true).unwrap();
        assert_eq!(m.surface().len(), 125 - 27);
        let inner = BinaryMask::from_fn([5, 5, 5], [1.0; 3], |i| {
            let (h, w, l) = (i / 25, i / 5 % 5, i % 5);
            (1..4).contains(&h) && (1..4).contains(&w) && (1..4).contains(&l)
        })
        .unwrap();
        assert_eq!(inner.surface().len(), 26);
    }

    #[test]
    fn t_test_degenerate_inputs() {
        let x = [1.0, 2.0, 3.0];
        assert!(matches!(paired_t_test(&x, &x), Err(Error::Undefined(_))));
        let y = [0.5, 1.5, 2.5];
        assert!(matches!(paired_t_test(&x, &y), Err(Error::Undefined(_))));
        assert!(paired_t_test(&x[..1], &y[..1]).is_err());
    }

    #[test]
    fn rejects_non_binary_values() {
        assert!(BinaryMask::new([2, 1, 1], [1.0; 3], vec![0, 2]).is_err());
        assert!(BinaryMask::new([2, 1, 1], [0.0, 1.0, 1.0], vec![0, 1]).is_err());
    }
}
