//! Dense `f64` vector numerics shared by every module: the softmax family,
//! KL divergence, entropy, Euclidean norms, and a minimal row-major matrix.
//!
//! All operations are pure, allocate their outputs, and never let NaN or
//! infinity escape: softmax is computed with a max shift, and KL clamps the
//! second distribution at [`PROB_FLOOR`] before taking logs so a saturated
//! model still yields finite divergences and gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to `q` entries inside `ln q` when computing KL terms.
pub const PROB_FLOOR: f64 = 1e-12;

/// A probability distribution over `C` classes.
///
/// Entries lie in `[0, 1]` and sum to 1 within 1e-9. Constructed either by
/// [`softmax`] (which guarantees the invariant) or via [`ProbDist::new`]
/// which validates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbDist(Vec<f64>);

impl ProbDist {
    /// Validate and wrap raw probabilities.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty".into()));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(format!("entry {p} outside [0,1]")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!("sum {sum} != 1")));
        }
        Ok(ProbDist(probs))
    }

    /// Uniform distribution over `classes` classes.
    pub fn uniform(classes: usize) -> Self {
        assert!(classes > 0);
        ProbDist(vec![1.0 / classes as f64; classes])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest probability, ties broken by lowest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

impl std::ops::Index<usize> for ProbDist {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Numerically stable softmax over raw logits.
///
/// Shift-invariant by construction: the maximum logit is subtracted before
/// exponentiation, so magnitudes up to roughly ±700 stay finite.
pub fn softmax(logits: &[f64]) -> Result<ProbDist> {
    if logits.is_empty() {
        return Err(Error::EmptyLogits);
    }
    debug_assert!(logits.iter().all(|x| x.is_finite()), "non-finite logits");
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    for e in &mut exps {
        *e /= sum;
    }
    Ok(ProbDist(exps))
}

/// KL divergence `D(p ‖ q) = Σ_c p_c (ln p_c − ln q_c)`, with `0·ln 0 := 0`
/// and `q` clamped at [`PROB_FLOOR`] inside the log.
pub fn kl_divergence(p: &ProbDist, q: &ProbDist) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    let mut sum = 0.0;
    for (&pc, &qc) in p.probs().iter().zip(q.probs()) {
        sum += kl_term(pc, qc);
    }
    // Clamping can introduce a tiny negative residue when p itself sits
    // below the floor; KL is non-negative by definition.
    Ok(sum.max(0.0))
}

/// Per-class KL summands `v_c = p_c (ln p_c − ln q_c)`; their sum is
/// `kl_divergence(p, q)`.
pub fn kl_contributions(p: &ProbDist, q: &ProbDist) -> Result<Vec<f64>> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    Ok(p.probs()
        .iter()
        .zip(q.probs())
        .map(|(&pc, &qc)| kl_term(pc, qc))
        .collect())
}

fn kl_term(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        p * (p.ln() - q.max(PROB_FLOOR).ln())
    }
}

/// Shannon entropy `−Σ p_c ln p_c` in nats, with `0·ln 0 := 0`.
pub fn entropy(p: &ProbDist) -> f64 {
    -p.probs()
        .iter()
        .map(|&pc| if pc <= 0.0 { 0.0 } else { pc * pc.ln() })
        .sum::<f64>()
}

/// Euclidean norm.
pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scale `v` to unit Euclidean norm, preserving direction.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if norm <= 0.0 {
        return Err(Error::DegenerateDirection);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared Euclidean distance between two points.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Dense row-major matrix. Only what the classifier head needs; this is not
/// a tensor library.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols));
        let n = rows.len();
        Matrix { rows: n, cols, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `y = A·x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `y = Aᵀ·x`.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (row, &xr) in self.data.chunks_exact(self.cols).zip(x) {
            for (yc, &a) in y.iter_mut().zip(row) {
                *yc += xr * a;
            }
        }
        y
    }

    /// `self += s · x·yᵀ` (rank-one update).
    pub fn add_outer_scaled(&mut self, x: &[f64], y: &[f64], s: f64) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (row, &xr) in self.data.chunks_exact_mut(self.cols).zip(x) {
            let xs = xr * s;
            for (a, &yc) in row.iter_mut().zip(y) {
                *a += xs * yc;
            }
        }
    }
}
