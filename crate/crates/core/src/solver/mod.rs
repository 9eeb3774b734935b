//! ADMM over the split `S_{u,i} = X_{u,i} beta`, with FISTA and CCP inner solvers.

mod admm;
mod beta_update;
mod prox;
mod s_update;

use ndarray::{Array1, Array2};

pub use admm::{
    adaptive_rho, dual_update, fit, predict, residuals, warm_start, Model, SolveTrace, TraceRecord, TraceSummary,
};
pub use beta_update::{
    beta_update, grad_s_beta, linearize_m, m_value, BetaSubproblem, BetaUpdateOutcome, CcpState, Linearization,
    BETA_BLOWUP, CCP_TOL, FISTA_TOL,
};
pub use prox::{fista, fista_momentum, soft_threshold, soft_threshold_vec, FistaOutcome, FistaState};
pub use s_update::{grad_p, s_update, solve_representative, zeta_s, SUpdateStats, S_TOL};

use crate::model::{instance_scores, select_representative, Coefficients, Dataset, DesignMatrix};

const POWER_STEPS: usize = 50;
const POWER_MARGIN: f64 = 1.01;

/// Design matrices for every user plus the cached Gram matrix `sum_u X_u' X_u`.
#[derive(Debug, Clone)]
pub struct DesignSet {
    pub designs: Vec<DesignMatrix>,
    pub labels: Vec<f64>,
    pub user_ids: Vec<String>,
    /// Indices of the positive users.
    pub positives: Vec<usize>,
    gram: Array2<f64>,
    gram_norm: f64,
    total_entries: usize,
}

impl DesignSet {
    pub fn new(data: &Dataset) -> Self {
        let designs: Vec<DesignMatrix> = data
            .bags
            .iter()
            .map(|b| DesignMatrix::from_counts(b.counts.view()))
            .collect();
        let n = data.n_keywords() + 1;
        let mut gram = Array2::zeros((n, n));
        for x in &designs {
            gram += &x.view().t().dot(&x.view());
        }
        let gram_norm = largest_eigenvalue(&gram, POWER_STEPS) * POWER_MARGIN;
        DesignSet {
            labels: data.bags.iter().map(|b| f64::from(b.label())).collect(),
            user_ids: data.bags.iter().map(|b| b.user_id.clone()).collect(),
            positives: data.positive_users(),
            total_entries: designs.iter().map(|x| x.nrows()).sum(),
            designs,
            gram,
            gram_norm,
        }
    }

    pub fn n_users(&self) -> usize {
        self.designs.len()
    }

    pub fn n_coef(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &Array2<f64> {
        &self.gram
    }

    /// Power-iteration estimate of `||X'X||_2`, inflated by 1%.
    pub fn gram_norm(&self) -> f64 {
        self.gram_norm
    }

    /// Number of `(u, i)` pairs.
    pub fn total_entries(&self) -> usize {
        self.total_entries
    }

    /// `X_u beta` for every user.
    pub fn scores(&self, beta: &Coefficients) -> Vec<Array1<f64>> {
        self.designs.iter().map(|x| x.view().dot(beta.as_array())).collect()
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub(crate) fn largest_eigenvalue(m: &Array2<f64>, steps: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..steps {
        let w = m.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    lambda.max(m.dot(&v).dot(&v))
}

/// Full mutable state of the outer loop. `h` is the scaled dual, so the
/// augmented term reads `(rho/2) ||S - X beta + h||^2`.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub s: Vec<Array1<f64>>,
    pub h: Vec<Array1<f64>>,
    pub rho: f64,
    pub rep_index: Vec<usize>,
    pub k: usize,
    pub r_primal: f64,
    pub s_dual: f64,
}

impl AdmmState {
    /// Starts at `S = X beta`. The dual is zero except at each representative
    /// entry, where it is set to `-grad_p / rho`; a stationary `beta` is then
    /// a fixed point of the iteration.
    pub fn new(designs: &DesignSet, beta: &Coefficients, rho: f64) -> Self {
        let s = designs.scores(beta);
        let mut h: Vec<Array1<f64>> = s.iter().map(|v| Array1::zeros(v.len())).collect();
        let mut rep_index = Vec::with_capacity(s.len());
        for (u, scores) in s.iter().enumerate() {
            let rep = select_representative(scores.view()).unwrap_or(0);
            h[u][rep] = -grad_p(scores[rep], designs.labels[u]) / rho;
            rep_index.push(rep);
        }
        AdmmState {
            s,
            h,
            rho,
            rep_index,
            k: 0,
            r_primal: f64::INFINITY,
            s_dual: f64::INFINITY,
        }
    }

    /// Re-selects `I(u)` under `beta`. Returns whether any index moved.
    ///
    /// When a representative moves, its dual entry moves with it: the max
    /// score is continuous in `beta` even when the argmax jumps, so the
    /// multiplier on the loss term should follow the score, not the tweet.
    pub fn refresh_representatives(&mut self, designs: &DesignSet, beta: &Coefficients) -> bool {
        let mut changed = false;
        for (u, x) in designs.designs.iter().enumerate() {
            let scores = instance_scores(x, beta).expect("design width matches beta");
            let rep = select_representative(scores.view()).expect("bags are non-empty");
            let old = self.rep_index[u];
            if rep != old {
                self.h[u].swap(old, rep);
                self.rep_index[u] = rep;
                changed = true;
            }
        }
        changed
    }
}
