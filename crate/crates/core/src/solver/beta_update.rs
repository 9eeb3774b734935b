//! Decision-variable update: a difference-of-convex problem `l(beta) - m(beta)`
//! handled by the convex-concave procedure.
//!
//! ```text
//! l(beta) = lambda1 ||beta||_1 + (rho/2) ||S + h - X beta||^2 + 2 lambda2 sum_j A_j beta_{j+1}^2
//! m(beta) = lambda2 sum_j B_j beta_{j+1}^2
//! ```
//!
//! Each outer step replaces `m` by its tangent at the current point and
//! solves the resulting convex problem with FISTA, splitting off the l1 term
//! as the proximal part. The quadratic is assembled from the cached Gram
//! matrix `X'X`, so an inner iteration costs `O(|K|^2)`.

use ndarray::{Array1, Zip};

use super::prox::{fista, soft_threshold_vec};
use super::{AdmmState, DesignSet};
use crate::error::{MidaError, Result};
use crate::mmd::MmdWeights;
use crate::model::{Coefficients, Hyperparams};

pub const CCP_TOL: f64 = 1e-6;
pub const FISTA_TOL: f64 = 1e-8;
/// `||beta||_inf` beyond this is treated as divergence.
pub const BETA_BLOWUP: f64 = 1e8;

/// Tangent of `m` at `point`: `m(point) + grad . (beta - point)`.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub point: Array1<f64>,
    pub value: f64,
    pub gradient: Array1<f64>,
}

impl Linearization {
    pub fn eval(&self, beta: &Array1<f64>) -> f64 {
        self.value
            + self
                .gradient
                .iter()
                .zip(beta.iter().zip(&self.point))
                .map(|(g, (b, p))| g * (b - p))
                .sum::<f64>()
    }
}

/// Pads a per-keyword vector with a leading zero for the intercept.
fn with_intercept(v: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(v.len() + 1);
    out.slice_mut(ndarray::s![1..]).assign(v);
    out
}

pub fn m_value(beta: &Array1<f64>, w: &MmdWeights, lambda2: f64) -> f64 {
    lambda2
        * w.b
            .iter()
            .zip(beta.iter().skip(1))
            .map(|(b, x)| b * x * x)
            .sum::<f64>()
}

pub fn linearize_m(beta_q: &Coefficients, w: &MmdWeights, lambda2: f64) -> Linearization {
    let point = beta_q.as_array().clone();
    let gradient = with_intercept(&w.b) * &point * (2.0 * lambda2);
    Linearization {
        value: m_value(&point, w, lambda2),
        point,
        gradient,
    }
}

/// Gradient of the smooth part `s(beta) = (rho/2)||S - X beta + h||^2
/// + 2 lambda2 sum A_j beta_{j+1}^2 - m~(beta)`, summed user by user.
#[allow(clippy::too_many_arguments)]
pub fn grad_s_beta(
    beta: &Coefficients,
    s: &[Array1<f64>],
    h: &[Array1<f64>],
    designs: &DesignSet,
    w: &MmdWeights,
    lin: &Linearization,
    rho: f64,
    lambda2: f64,
) -> Array1<f64> {
    let b = beta.as_array();
    let mut g = with_intercept(&w.a) * b * (4.0 * lambda2) - &lin.gradient;
    for (u, x) in designs.designs.iter().enumerate() {
        let resid = &s[u] - &x.view().dot(b) + &h[u];
        g -= &(x.view().t().dot(&resid) * rho);
    }
    g
}

/// The convex-concave subproblem for one outer iteration, with the data
/// term reduced to `(rho/2)(t't - 2 beta'X't + beta'X'X beta)`, `t = S + h`.
#[derive(Debug)]
pub struct BetaSubproblem<'a> {
    designs: &'a DesignSet,
    xt: Array1<f64>,
    tt: f64,
    rho: f64,
    lambda1: f64,
    lambda2: f64,
    a: Array1<f64>,
    b: Array1<f64>,
}

impl<'a> BetaSubproblem<'a> {
    pub fn new(state: &AdmmState, designs: &'a DesignSet, w: &MmdWeights, lambda1: f64, lambda2: f64) -> Self {
        let mut xt = Array1::zeros(designs.n_coef());
        let mut tt = 0.0;
        for (u, x) in designs.designs.iter().enumerate() {
            let t = &state.s[u] + &state.h[u];
            xt += &x.view().t().dot(&t);
            tt += t.dot(&t);
        }
        BetaSubproblem {
            designs,
            xt,
            tt,
            rho: state.rho,
            lambda1,
            lambda2,
            a: with_intercept(&w.a),
            b: with_intercept(&w.b),
        }
    }

    fn quadratic(&self, beta: &Array1<f64>) -> f64 {
        let gb = self.designs.gram().dot(beta);
        0.5 * self.rho * (self.tt - 2.0 * beta.dot(&self.xt) + beta.dot(&gb))
    }

    fn diag_sum(d: &Array1<f64>, beta: &Array1<f64>) -> f64 {
        d.iter().zip(beta).map(|(d, x)| d * x * x).sum()
    }

    /// `l(beta) - m(beta)`, the quantity the CCP must not increase.
    pub fn objective(&self, beta: &Array1<f64>) -> f64 {
        self.lambda1 * beta.iter().map(|v| v.abs()).sum::<f64>()
            + self.quadratic(beta)
            + 2.0 * self.lambda2 * Self::diag_sum(&self.a, beta)
            - self.lambda2 * Self::diag_sum(&self.b, beta)
    }

    /// `s(beta)` for the given tangent.
    pub fn smooth_value(&self, beta: &Array1<f64>, lin: &Linearization) -> f64 {
        self.quadratic(beta) + 2.0 * self.lambda2 * Self::diag_sum(&self.a, beta) - lin.eval(beta)
    }

    pub fn smooth_grad(&self, beta: &Array1<f64>, lin: &Linearization) -> Array1<f64> {
        let mut g = (self.designs.gram().dot(beta) - &self.xt) * self.rho;
        Zip::from(&mut g)
            .and(&self.a)
            .and(beta)
            .and(&lin.gradient)
            .for_each(|g, &a, &x, &dm| *g += 4.0 * self.lambda2 * a * x - dm);
        g
    }

    /// Convex surrogate `l(beta) - m~(beta)`.
    pub fn surrogate(&self, beta: &Array1<f64>, lin: &Linearization) -> f64 {
        self.lambda1 * beta.iter().map(|v| v.abs()).sum::<f64>() + self.smooth_value(beta, lin)
    }

    /// Upper bound on the curvature of `s`: `rho ||X'X|| + 4 lambda2 max A`.
    pub fn lipschitz(&self) -> f64 {
        let amax = self.a.iter().cloned().fold(0.0, f64::max);
        self.rho * self.designs.gram_norm() + 4.0 * self.lambda2 * amax
    }
}

#[derive(Debug, Clone)]
pub struct CcpState {
    pub q: usize,
    pub beta_q: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BetaUpdateOutcome {
    pub beta: Coefficients,
    pub ccp_iterations: usize,
    /// `l - m` at every CCP iterate, starting point included.
    pub objectives: Vec<f64>,
    /// Some inner FISTA run stopped at `max_fista`.
    pub fista_capped: bool,
}

impl BetaUpdateOutcome {
    /// Largest `objectives[q + 1] - objectives[q]`; non-positive for a descent run.
    pub fn max_rise(&self) -> f64 {
        self.objectives.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Minimizes `l - m` starting from `start`, with `state.s`, `state.h` and
/// `state.rho` held fixed.
pub fn beta_update(
    state: &AdmmState,
    designs: &DesignSet,
    w: &MmdWeights,
    hyper: &Hyperparams,
    start: &Coefficients,
) -> Result<BetaUpdateOutcome> {
    if start.len() != designs.n_coef() {
        return Err(MidaError::dimension("beta-update start", designs.n_coef(), start.len()));
    }
    let problem = BetaSubproblem::new(state, designs, w, hyper.lambda1, hyper.lambda2);
    let step = 1.0 / problem.lipschitz();
    let kappa = hyper.lambda1;
    // with m identically zero the surrogate is exact and one solve suffices
    let concave_free = hyper.lambda2 == 0.0 || w.b.iter().all(|&b| b == 0.0);

    let mut ccp = CcpState { q: 0, beta_q: start.as_array().clone() };
    let mut objectives = vec![problem.objective(&ccp.beta_q)];
    let mut rises = 0;
    let mut fista_capped = false;

    while ccp.q < hyper.max_ccp {
        let lin = linearize_m(&Coefficients::new(ccp.beta_q.clone())?, w, hyper.lambda2);
        let out = fista(
            ccp.beta_q.clone(),
            step,
            hyper.max_fista,
            FISTA_TOL,
            |b| problem.smooth_grad(b, &lin),
            |mut v, t| {
                soft_threshold_vec(&mut v, kappa * t);
                v
            },
        );
        fista_capped |= !out.converged;
        // FISTA is not monotone; never accept a point worse than the tangent point
        let next = if problem.surrogate(&out.x, &lin) <= problem.surrogate(&ccp.beta_q, &lin) {
            out.x
        } else {
            ccp.beta_q.clone()
        };

        let blowup = next.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if blowup.is_nan() || blowup > BETA_BLOWUP {
            return Err(divergence(format!(
                "||beta||_inf = {blowup:e} after CCP step {}",
                ccp.q + 1
            )));
        }
        let value = problem.objective(&next);
        let prev = *objectives.last().unwrap();
        rises = if value > prev + 1e-6 { rises + 1 } else { 0 };
        if rises >= 3 {
            return Err(divergence("CCP objective increased for 3 consecutive steps".into()));
        }
        objectives.push(value);

        let change = next
            .iter()
            .zip(&ccp.beta_q)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        ccp.beta_q = next;
        ccp.q += 1;
        if change < CCP_TOL || concave_free {
            break;
        }
    }

    Ok(BetaUpdateOutcome {
        beta: Coefficients::new(ccp.beta_q)?,
        ccp_iterations: ccp.q,
        objectives,
        fista_capped,
    })
}

fn divergence(what: String) -> MidaError {
    MidaError::Divergence {
        iteration: None,
        message: format!("{what}; increase rho (rho >= 10 * lambda2 is recommended)"),
    }
}
