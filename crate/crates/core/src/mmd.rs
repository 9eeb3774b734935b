//! Generalized MMD between the report domain and the representative
//! instances of positive users.
//!
//! Under the kernel `k(x, y) = -||x - y||^2` with the keyword-weighted norm
//! `||x||^2 = sum_j x_j^2 beta_{j+1}^2`, the distance reduces to a diagonal
//! quadratic in the keyword weights:
//!
//! ```text
//! Dist^2(beta) = sum_j (2 A_j - B_j) beta_{j+1}^2
//! A_j = sum_{i,u} (R_ij - d_uj)^2 / (r n_p)      cross-domain
//! B_j = sum_{u,v} (d_uj - d_vj)^2 / n_p^2         within positive users
//! ```
//!
//! The constant report-report kernel term is dropped. Large populations are
//! split into `c` chunk pairs; each chunk is normalized by its own sizes and
//! the chunk values are averaged, so `c = 1` reproduces the exact weights.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MidaError, Result};
use crate::model::{instance_scores, select_representative, Coefficients, Dataset, DesignMatrix, ReportSet};

/// Per-keyword quadratic weights; `lambda2` and the factor 2 are applied by the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct MmdWeights {
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    pub n_p: usize,
    pub r: usize,
}

impl MmdWeights {
    pub fn zeros(n_keywords: usize) -> Self {
        MmdWeights {
            a: Array1::zeros(n_keywords),
            b: Array1::zeros(n_keywords),
            n_p: 0,
            r: 0,
        }
    }

    /// Weights for the given representative rows. Either domain being empty
    /// makes the whole term vanish.
    pub fn compute(reports: &ReportSet, selected: ArrayView2<f64>, plan: &PartitionPlan) -> Result<Self> {
        let k = reports.width();
        if selected.ncols() != k {
            return Err(MidaError::dimension("representative rows", k, selected.ncols()));
        }
        let (r, n_p) = (reports.len(), selected.nrows());
        if r == 0 || n_p == 0 {
            return Ok(MmdWeights { r, n_p, ..MmdWeights::zeros(k) });
        }
        Ok(MmdWeights {
            a: cross_domain_weights(reports, selected, plan)?,
            b: within_domain_weights(selected, plan)?,
            n_p,
            r,
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Net quadratic coefficient `2 A_j - B_j` per keyword.
    pub fn net(&self) -> Array1<f64> {
        &self.a * 2.0 - &self.b
    }
}

/// Chunk `i` of reports is paired with chunk `i` of users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub report_chunks: Vec<Vec<usize>>,
    pub user_chunks: Vec<Vec<usize>>,
    pub c: usize,
}

impl PartitionPlan {
    /// Everything in one chunk per side.
    pub fn single(r: usize, users: &[usize]) -> Self {
        PartitionPlan {
            report_chunks: vec![(0..r).collect()],
            user_chunks: vec![users.to_vec()],
            c: 1,
        }
    }

    pub fn n_chunks(&self) -> usize {
        self.report_chunks.len()
    }

    fn pairs(&self) -> impl Iterator<Item = (&[usize], &[usize])> {
        self.report_chunks
            .iter()
            .zip(&self.user_chunks)
            .map(|(r, u)| (r.as_slice(), u.as_slice()))
    }
}

/// Seeded shuffle of both domains followed by round-robin assignment into
/// `min(c, max(r, n_p))` chunks per side.
pub fn partition(r: usize, positive_user_ids: &[usize], c: usize, seed: u64) -> PartitionPlan {
    let c = c.max(1);
    let n_p = positive_user_ids.len();
    let m = c.min(r.max(n_p));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports: Vec<usize> = (0..r).collect();
    reports.shuffle(&mut rng);
    let mut users = positive_user_ids.to_vec();
    users.shuffle(&mut rng);

    let deal = |items: Vec<usize>| {
        let mut chunks = vec![Vec::new(); m];
        for (k, item) in items.into_iter().enumerate() {
            chunks[k % m].push(item);
        }
        chunks
    };
    if m == 0 {
        return PartitionPlan { report_chunks: Vec::new(), user_chunks: Vec::new(), c };
    }
    PartitionPlan {
        report_chunks: deal(reports),
        user_chunks: deal(users),
        c,
    }
}

/// Rows `D_{u, I(u)}` for every positive user, in bag order.
pub fn representative_rows(data: &Dataset, beta: &Coefficients) -> Result<Array2<f64>> {
    let positives = data.positive_users();
    let mut rep = Vec::with_capacity(positives.len());
    for &u in &positives {
        let bag = &data.bags[u];
        let x = DesignMatrix::from_counts(bag.counts.view());
        let scores = instance_scores(&x, beta)?;
        rep.push(select_representative(scores.view()).map_err(|_| MidaError::EmptyBag {
            user_id: Some(bag.user_id.clone()),
        })?);
    }
    Ok(rows_at(data, &positives, &rep))
}

/// Gathers `counts[rep[k]]` of bag `users[k]` into an `n x |K|` matrix.
pub(crate) fn rows_at(data: &Dataset, users: &[usize], rep: &[usize]) -> Array2<f64> {
    let k = data.n_keywords();
    let mut out = Array2::zeros((users.len(), k));
    for (row, (&u, &i)) in users.iter().zip(rep).enumerate() {
        let src = data.bags[u].counts.row(i);
        out.row_mut(row).assign(&src.mapv(f64::from));
    }
    out
}

/// Cross-domain weights `A`. User chunk entries index rows of `selected`.
pub fn cross_domain_weights(
    reports: &ReportSet,
    selected: ArrayView2<f64>,
    plan: &PartitionPlan,
) -> Result<Array1<f64>> {
    let k = reports.width();
    if selected.ncols() != k {
        return Err(MidaError::dimension("cross-domain weights", k, selected.ncols()));
    }
    let mut acc = Array1::zeros(k);
    let mut used = 0usize;
    if reports.is_empty() || selected.nrows() == 0 {
        return Ok(acc);
    }
    let rep = reports.counts.mapv(f64::from);
    for (rc, uc) in plan.pairs() {
        if rc.is_empty() || uc.is_empty() {
            continue;
        }
        // sum_{i,u} (x_i - y_u)^2 = n_u sum x^2 - 2 sum x sum y + n_r sum y^2
        let (nr, nu) = (rc.len() as f64, uc.len() as f64);
        let r_sub = rep.select(Axis(0), rc);
        let u_sub = selected.select(Axis(0), uc);
        let (sx, sxx) = column_moments(r_sub.view());
        let (sy, syy) = column_moments(u_sub.view());
        let pair_sum = &sxx * nu - &(&sx * &sy) * 2.0 + &syy * nr;
        acc += &(pair_sum / (nr * nu));
        used += 1;
    }
    if used > 0 {
        acc /= used as f64;
    }
    Ok(acc)
}

/// Within-domain weights `B`, via `sum_{u,v} (x_u - x_v)^2 = 2n sum x^2 - 2 (sum x)^2`.
pub fn within_domain_weights(selected: ArrayView2<f64>, plan: &PartitionPlan) -> Result<Array1<f64>> {
    let k = selected.ncols();
    let mut acc = Array1::zeros(k);
    let mut used = 0usize;
    for uc in &plan.user_chunks {
        if uc.is_empty() {
            continue;
        }
        if let Some(&bad) = uc.iter().find(|&&u| u >= selected.nrows()) {
            return Err(MidaError::dimension("partition user index", selected.nrows(), bad + 1));
        }
        let n = uc.len() as f64;
        let (s, ss) = column_moments(selected.select(Axis(0), uc).view());
        acc += &((&ss * (2.0 * n) - &(&s * &s) * 2.0) / (n * n));
        used += 1;
    }
    if used > 0 {
        acc /= used as f64;
    }
    Ok(acc)
}

fn column_moments(m: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let sum = m.sum_axis(Axis(0));
    let sq = m.mapv(|v| v * v).sum_axis(Axis(0));
    (sum, sq)
}

/// `Dist^2 = sum_j (2 A_j - B_j) beta_{j+1}^2`. Independent of the intercept.
pub fn mmd_distance(beta: &Coefficients, w: &MmdWeights) -> Result<f64> {
    if beta.n_keywords() != w.len() {
        return Err(MidaError::dimension("mmd distance", w.len() + 1, beta.len()));
    }
    Ok(beta
        .weights()
        .iter()
        .zip(w.a.iter().zip(&w.b))
        .map(|(bj, (a, b))| (2.0 * a - b) * bj * bj)
        .sum())
}

/// Literal pairwise evaluation of the distance, for cross-checking. Cost is
/// `O((r n_p + n_p^2) |K|)`.
pub fn brute_force_mmd(reports: &ReportSet, selected: ArrayView2<f64>, beta: &Coefficients) -> f64 {
    let (r, n_p) = (reports.len(), selected.nrows());
    if r == 0 || n_p == 0 {
        return 0.0;
    }
    let beta = beta.as_array();
    let k = reports.width();
    let weighted_sq = |x: &dyn Fn(usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for j in 0..k {
            let d = x(j);
            acc += d * d * beta[j + 1] * beta[j + 1];
        }
        acc
    };
    let mut cross = 0.0;
    for u in 0..n_p {
        for i in 0..r {
            cross += weighted_sq(&|j| selected[[u, j]] - f64::from(reports.counts[[i, j]]));
        }
    }
    let mut within = 0.0;
    for u1 in 0..n_p {
        for u2 in 0..n_p {
            within += weighted_sq(&|j| selected[[u1, j]] - selected[[u2, j]]);
        }
    }
    2.0 * cross / (r * n_p) as f64 - within / (n_p * n_p) as f64
}
