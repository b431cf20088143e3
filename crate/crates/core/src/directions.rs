//! The direction chain: a finite set of unit vectors, an irreducible Markov
//! kernel over them, its stationary law and drift, and the Doeblin-minorized
//! variant with split-chain regeneration.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{compensated_sum, norm2};

const UNIT_NORM_TOL: f64 = 1e-9;
const ROW_SUM_TOL: f64 = 1e-12;
const FIXED_POINT_TOL: f64 = 1e-10;
const POWER_ITER_CAP: usize = 200_000;

#[derive(Debug, Error)]
pub enum DirectionError {
    #[error("direction set needs at least two vectors, got {0}")]
    TooFewDirections(usize),
    #[error("vector {index} has norm {norm}, not unit within tolerance")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("vectors {0} and {1} are identical")]
    DuplicateDirection(usize, usize),
    #[error("distinguished index {index} out of range for {len} directions")]
    BadDistinguished { index: usize, len: usize },
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("kernel row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("kernel entry ({0},{1}) is negative")]
    NegativeEntry(usize, usize),
    #[error("kernel is not irreducible: positive-entry graph is not strongly connected")]
    NonIrreducible,
    #[error("stationary solve failed to converge within {0} iterations")]
    NonConvergent(usize),
    #[error("kernel is {got}x{got2}, expected square of size {expected}")]
    BadShape {
        got: usize,
        got2: usize,
        expected: usize,
    },
    #[error("doeblin minorization violated at state {state}, atom {atom}: residual mass {mass}")]
    InvalidKernel {
        state: usize,
        atom: usize,
        mass: f64,
    },
    #[error("doeblin ratio bound must exceed 1, got {0}")]
    BadRatioBound(f64),
    #[error("base measure must be a probability vector with positive atoms")]
    BadBaseMeasure,
}

/// The ordered set U of feasible directions, with the distinguished
/// regeneration direction u_1.
#[derive(Debug, Clone)]
pub struct DirectionSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
    distinguished: usize,
}

impl DirectionSet {
    /// Validates and builds a direction set. Vectors within 1e-9 of unit
    /// norm are re-normalized; anything further off is rejected.
    pub fn new(
        dim: usize,
        vectors: Vec<Vec<f64>>,
        distinguished: usize,
    ) -> Result<Self, DirectionError> {
        if vectors.len() < 2 {
            return Err(DirectionError::TooFewDirections(vectors.len()));
        }
        if distinguished >= vectors.len() {
            return Err(DirectionError::BadDistinguished {
                index: distinguished,
                len: vectors.len(),
            });
        }
        let mut vectors = vectors;
        for (i, v) in vectors.iter_mut().enumerate() {
            if v.len() != dim {
                return Err(DirectionError::DimensionMismatch {
                    index: i,
                    got: v.len(),
                    expected: dim,
                });
            }
            let n = norm2(v);
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(DirectionError::NotUnitNorm { index: i, norm: n });
            }
            for x in v.iter_mut() {
                *x /= n;
            }
        }
        for i in 0..vectors.len() {
            for j in (i + 1)..vectors.len() {
                let d: f64 = vectors[i]
                    .iter()
                    .zip(&vectors[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d.sqrt() < 1e-12 {
                    return Err(DirectionError::DuplicateDirection(i, j));
                }
            }
        }
        Ok(Self {
            dim,
            vectors,
            distinguished,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Index of u_1.
    pub fn distinguished(&self) -> usize {
        self.distinguished
    }
}

/// Row-stochastic, irreducible transition matrix of the direction chain.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    matrix: Vec<Vec<f64>>,
}

impl TransitionKernel {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self, DirectionError> {
        let n = matrix.len();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(DirectionError::BadShape {
                    got: n,
                    got2: row.len(),
                    expected: n,
                });
            }
            for (j, &p) in row.iter().enumerate() {
                if p < 0.0 {
                    return Err(DirectionError::NegativeEntry(i, j));
                }
            }
            let sum = compensated_sum(row);
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(DirectionError::NotStochastic { row: i, sum });
            }
        }
        let kernel = Self { matrix };
        if !kernel.strongly_connected() {
            return Err(DirectionError::NonIrreducible);
        }
        Ok(kernel)
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    /// Strong connectivity of the positive-entry digraph: every state must
    /// reach state 0 and be reachable from it.
    fn strongly_connected(&self) -> bool {
        let n = self.matrix.len();
        let fwd = self.reachable(0, false);
        let bwd = self.reachable(0, true);
        (0..n).all(|i| fwd[i] && bwd[i])
    }

    fn reachable(&self, start: usize, transpose: bool) -> Vec<bool> {
        let n = self.matrix.len();
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let p = if transpose {
                    self.matrix[v][u]
                } else {
                    self.matrix[u][v]
                };
                if p > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// Stationary distribution of the chain together with the drift
/// mu = sum_v pi_v * v.
#[derive(Debug, Clone)]
pub struct StationaryLaw {
    pub pi: Vec<f64>,
    pub drift: Vec<f64>,
}

/// Solves pi * M = pi, sum pi = 1, by direct Gaussian elimination with a
/// power-iteration fallback for ill-conditioned inputs.
pub fn stationary_distribution(
    kernel: &TransitionKernel,
    dirs: &DirectionSet,
) -> Result<StationaryLaw, DirectionError> {
    let pi = match solve_stationary_direct(kernel) {
        Some(pi) if fixed_point_residual(kernel, &pi) < FIXED_POINT_TOL => pi,
        _ => power_iteration(kernel)?,
    };
    let drift = drift_from(dirs, &pi);
    Ok(StationaryLaw { pi, drift })
}

pub fn drift_from(dirs: &DirectionSet, pi: &[f64]) -> Vec<f64> {
    let mut mu = vec![0.0; dirs.dim()];
    for (v, &p) in dirs.vectors().iter().zip(pi) {
        for (m, &x) in mu.iter_mut().zip(v) {
            *m += p * x;
        }
    }
    mu
}

pub fn fixed_point_residual(kernel: &TransitionKernel, pi: &[f64]) -> f64 {
    let n = kernel.len();
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            s += pi[i] * kernel.matrix[i][j];
        }
        worst = worst.max((s - pi[j]).abs());
    }
    worst
}

/// Gaussian elimination on (M^T - I) with the last balance equation
/// replaced by the normalization sum pi = 1.
fn solve_stationary_direct(kernel: &TransitionKernel) -> Option<Vec<f64>> {
    let n = kernel.len();
    // a[i][j] x_j = b[i], unknowns x = pi
    let mut a = vec![vec![0.0f64; n]; n];
    let mut b = vec![0.0f64; n];
    for i in 0..n - 1 {
        for j in 0..n {
            a[i][j] = kernel.matrix[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    b[n - 1] = 1.0;

    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| {
            a[r][col]
                .abs()
                .partial_cmp(&a[s][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in (r + 1)..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    if x.iter().any(|&p| !p.is_finite() || p <= 0.0) {
        return None;
    }
    let total = compensated_sum(&x);
    for p in x.iter_mut() {
        *p /= total;
    }
    Some(x)
}

fn power_iteration(kernel: &TransitionKernel) -> Result<Vec<f64>, DirectionError> {
    let n = kernel.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0f64; n];
    for _ in 0..POWER_ITER_CAP {
        for x in next.iter_mut() {
            *x = 0.0;
        }
        for i in 0..n {
            let p = pi[i];
            for j in 0..n {
                next[j] += p * kernel.matrix[i][j];
            }
        }
        // lazy averaging handles periodic chains
        let mut delta = 0.0f64;
        for j in 0..n {
            let updated = 0.5 * (pi[j] + next[j]);
            delta = delta.max((updated - pi[j]).abs());
            pi[j] = updated;
        }
        if delta < FIXED_POINT_TOL / 10.0 {
            let total = compensated_sum(&pi);
            for p in pi.iter_mut() {
                *p /= total;
            }
            if pi.iter().all(|&p| p > 0.0) {
                return Ok(pi);
            }
        }
    }
    Err(DirectionError::NonConvergent(POWER_ITER_CAP))
}

/// One step of the direction chain: next state drawn from row `state`.
pub fn step<R: Rng + ?Sized>(kernel: &TransitionKernel, state: usize, rng: &mut R) -> usize {
    sample_categorical(kernel.row(state), rng)
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding pushed acc slightly below 1; return the last positive atom
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .expect("categorical weights must not all be zero")
}

/// Doeblin-minorized kernel on a finite grid of sphere directions:
/// c_r^{-1} psi(A) < H(x, A) < c_r psi(A) for every state x and atom A.
#[derive(Debug, Clone)]
pub struct DoeblinKernel {
    base_measure: Vec<f64>,
    ratio_bound: f64,
    rows: Vec<Vec<f64>>,
    /// Residual kernel (H(x,.) - c_r^{-1} psi) / (1 - c_r^{-1}), one row per state.
    residual: Vec<Vec<f64>>,
}

impl DoeblinKernel {
    pub fn new(
        base_measure: Vec<f64>,
        ratio_bound: f64,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, DirectionError> {
        if ratio_bound <= 1.0 {
            return Err(DirectionError::BadRatioBound(ratio_bound));
        }
        let n = base_measure.len();
        if n == 0
            || base_measure.iter().any(|&p| p <= 0.0)
            || (compensated_sum(&base_measure) - 1.0).abs() > ROW_SUM_TOL
        {
            return Err(DirectionError::BadBaseMeasure);
        }
        let inv = 1.0 / ratio_bound;
        let mut residual = Vec::with_capacity(rows.len());
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(DirectionError::BadShape {
                    got: rows.len(),
                    got2: row.len(),
                    expected: n,
                });
            }
            let sum = compensated_sum(row);
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(DirectionError::NotStochastic { row: x, sum });
            }
            let mut res = Vec::with_capacity(n);
            for (a, (&h, &psi)) in row.iter().zip(&base_measure).enumerate() {
                if h <= inv * psi || h >= ratio_bound * psi {
                    return Err(DirectionError::InvalidKernel {
                        state: x,
                        atom: a,
                        mass: h - inv * psi,
                    });
                }
                res.push((h - inv * psi) / (1.0 - inv));
            }
            residual.push(res);
        }
        Ok(Self {
            base_measure,
            ratio_bound,
            rows,
            residual,
        })
    }

    pub fn len(&self) -> usize {
        self.base_measure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_measure.is_empty()
    }

    pub fn ratio_bound(&self) -> f64 {
        self.ratio_bound
    }

    pub fn base_measure(&self) -> &[f64] {
        &self.base_measure
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.rows[state]
    }

    /// The full kernel viewed as an ordinary transition matrix (for
    /// stationary-law computations).
    pub fn as_transition_kernel(&self) -> Result<TransitionKernel, DirectionError> {
        TransitionKernel::new(self.rows.clone())
    }
}

/// Split-chain step: with probability c_r^{-1} the next state is drawn from
/// the base measure and the chain regenerates; otherwise it is drawn from
/// the residual kernel. The marginal law of the next state is H(state, .).
pub fn doeblin_step<R: Rng + ?Sized>(
    kernel: &DoeblinKernel,
    state: usize,
    rng: &mut R,
) -> (usize, bool) {
    let regen = rng.gen::<f64>() < 1.0 / kernel.ratio_bound;
    let next = if regen {
        sample_categorical(&kernel.base_measure, rng)
    } else {
        sample_categorical(&kernel.residual[state], rng)
    };
    (next, regen)
}

/// On-disk description of a direction set plus kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionDocument {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    pub distinguished: usize,
    pub kernel: Vec<Vec<f64>>,
}

impl DirectionDocument {
    pub fn build(&self) -> Result<(DirectionSet, TransitionKernel), DirectionError> {
        let dirs = DirectionSet::new(self.dim, self.vectors.clone(), self.distinguished)?;
        let kernel = TransitionKernel::new(self.kernel.clone())?;
        if kernel.len() != dirs.len() {
            return Err(DirectionError::BadShape {
                got: kernel.len(),
                got2: kernel.len(),
                expected: dirs.len(),
            });
        }
        Ok((dirs, kernel))
    }
}
