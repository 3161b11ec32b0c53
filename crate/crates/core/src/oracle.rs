//! Reference transcription of the learner equations.
//!
//! Written against plain nested vectors with no shared code from
//! [`crate::learner`] or [`crate::environment`], so the two can be checked
//! against each other. Favours literal formulas over numerical care: no
//! max-shift in the softmax, and the three-branch trace rule spelled out.

/// `x_i / Σx`; all-zero input stays zero.
pub fn sum_norm(x: &[f64]) -> Vec<f64> {
    let mut total = 0.0;
    for v in x {
        total += v;
    }
    let mut out = Vec::new();
    for v in x {
        out.push(if total == 0.0 { 0.0 } else { v / total });
    }
    out
}

/// `e^{x_i} / Σ e^{x_j}`
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let mut denom = 0.0;
    for v in x {
        denom += v.exp();
    }
    x.iter().map(|v| v.exp() / denom).collect()
}

/// `Σ P(x) log(P(x) / U(x))` with `U(x) = 1/n` and `0 log 0 = 0`.
pub fn kl_from_uniform(p: &[f64]) -> f64 {
    let u = 1.0 / p.len() as f64;
    let mut acc = 0.0;
    for &px in p {
        if px != 0.0 {
            acc += px * (px / u).ln();
        }
    }
    acc
}

/// `sum_norm([kl_1..kl_m]) + sum_norm([count_1..count_m])`
pub fn blend(counts: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let kls: Vec<f64> = w.iter().map(|row| kl_from_uniform(row)).collect();
    let a = sum_norm(&kls);
    let b = sum_norm(counts);
    (0..w.len()).map(|i| a[i] + b[i]).collect()
}

/// `softmax(sum_norm(B)ᵀ W)`
pub fn combined(b: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let bn = sum_norm(b);
    let n = w[0].len();
    let mut v = vec![0.0; n];
    for j in 0..n {
        for i in 0..w.len() {
            v[j] += bn[i] * w[i][j];
        }
    }
    softmax(&v)
}

/// Replacement trace: `1` at the hit cell, `γ e` where `e > 0`, `0` otherwise.
pub fn trace_update(e: &[Vec<f64>], hit: (usize, usize), gamma: f64) -> Vec<Vec<f64>> {
    let mut out = e.to_vec();
    for i in 0..e.len() {
        for j in 0..e[i].len() {
            out[i][j] = if (i, j) == hit {
                1.0
            } else if e[i][j] > 0.0 {
                gamma * e[i][j]
            } else {
                0.0
            };
        }
    }
    out
}

/// Learner state as bare vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleState {
    pub w: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub counts: Vec<f64>,
    pub group_of: Vec<usize>,
    pub alpha: f64,
    pub gamma: f64,
}

impl OracleState {
    pub fn new(group_of: Vec<usize>, m: usize, n: usize, alpha: f64, gamma: f64) -> Self {
        Self {
            w: vec![vec![1.0 / n as f64; n]; m],
            e: vec![vec![0.0; n]; m],
            counts: vec![0.0; m],
            group_of,
            alpha,
            gamma,
        }
    }

    pub fn sample(&mut self, parent: usize) {
        self.counts[self.group_of[parent]] += 1.0;
    }

    /// Trace refresh, `W + α·atv·E`, then row-wise sum-normalisation.
    pub fn update(&mut self, task_type: usize, parent: usize, atv: f64) {
        let atv = if atv < 0.0 { 0.0 } else { atv };
        let hit = (self.group_of[parent], task_type);
        self.e = trace_update(&self.e, hit, self.gamma);
        for i in 0..self.w.len() {
            for j in 0..self.w[i].len() {
                self.w[i][j] += self.alpha * atv * self.e[i][j];
            }
            self.w[i] = sum_norm(&self.w[i]);
        }
    }

    /// Resource amount for `task_type` when `held` of the resource is available.
    pub fn weighting(&self, task_type: usize, held: f64) -> f64 {
        let b = blend(&self.counts, &self.w);
        combined(&b, &self.w)[task_type] * held
    }
}

/// `min(1, amount / demand)`, zero amount gives zero.
pub fn quality(amount: f64, demand: f64) -> f64 {
    if amount <= 0.0 {
        0.0
    } else if amount >= demand {
        1.0
    } else {
        amount / demand
    }
}

/// Each atomic's share of its parent's preference mass within the composite.
pub fn ctv(preference: &[f64], types: &[usize]) -> Vec<f64> {
    let picked: Vec<f64> = types.iter().map(|&t| preference[t]).collect();
    sum_norm(&picked)
}

pub fn taq(ctv: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..ctv.len() {
        s += ctv[k] * q[k];
    }
    s
}

pub fn atv(taq: f64, ctv: f64) -> f64 {
    taq * ctv
}
