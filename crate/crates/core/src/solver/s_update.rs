//! Auxiliary-variable update.
//!
//! For a non-representative instance the subproblem is a pure quadratic and
//! `S = X beta - h`. For the representative instance it is the scalar
//! problem `F(S) + (rho/2)(S - target)^2` with `F(S) = ln(1 + e^S) - y S`,
//! solved by FISTA with the gradient step taken on `F` and the quadratic
//! handled exactly.

use rayon::prelude::*;

use super::prox::FistaState;
use super::{AdmmState, DesignSet};
use crate::error::{MidaError, Result};
use crate::model::{sigmoid, Coefficients, Hyperparams};

/// Stop when a scalar iterate moves less than this.
pub const S_TOL: f64 = 1e-8;

/// Derivative of `ln(1 + e^s) - y s`.
#[inline]
pub fn grad_p(s: f64, y: f64) -> f64 {
    sigmoid(s) - y
}

/// Exact minimizer of `(rho/2)(S - target)^2 + ||S - (s_k - eta grad_p(s_k))||^2 / (2 eta)`.
#[inline]
pub fn zeta_s(s_k: f64, target: f64, rho: f64, eta: f64, y: f64) -> f64 {
    (rho * target + (s_k - eta * grad_p(s_k, y)) / eta) / (rho + 1.0 / eta)
}

/// Scalar FISTA for one representative instance, warm-started at `s0`.
/// Returns the final prox point and whether the step met [`S_TOL`].
pub fn solve_representative(s0: f64, target: f64, rho: f64, eta: f64, y: f64, max_iter: usize) -> (f64, bool) {
    let mut s = s0;
    let mut state = FistaState::new(s0);
    for _ in 0..max_iter {
        let zeta = zeta_s(s, target, rho, eta, y);
        if (zeta - s).abs() < S_TOL {
            return (zeta, true);
        }
        if (s - zeta) * (zeta - state.zeta_prev) > 0.0 {
            state = FistaState::new(state.zeta_prev);
        }
        let gamma = state.advance();
        s = (1.0 - gamma) * zeta + gamma * state.zeta_prev;
        state.zeta_prev = zeta;
    }
    (state.zeta_prev, false)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SUpdateStats {
    /// Representative solves that hit `max_fista` before converging.
    pub capped: usize,
}

/// Updates `state.s` in place for every user, holding `beta` and `state.h` fixed.
pub fn s_update(
    state: &mut AdmmState,
    beta: &Coefficients,
    designs: &DesignSet,
    hyper: &Hyperparams,
) -> Result<SUpdateStats> {
    let rho = state.rho;
    let results: Vec<(bool, bool)> = state
        .s
        .par_iter_mut()
        .zip(state.h.par_iter())
        .zip(state.rep_index.par_iter())
        .enumerate()
        .map(|(u, ((s_u, h_u), &rep))| {
            let xb = designs.designs[u].view().dot(beta.as_array());
            let y = designs.labels[u];
            let mut capped = false;
            for i in 0..s_u.len() {
                let target = xb[i] - h_u[i];
                if i == rep {
                    let (v, ok) = solve_representative(s_u[i], target, rho, hyper.eta, y, hyper.max_fista);
                    s_u[i] = v;
                    capped = !ok;
                } else {
                    s_u[i] = target;
                }
            }
            (capped, s_u.iter().all(|v| v.is_finite()))
        })
        .collect();

    if let Some(u) = results.iter().position(|&(_, finite)| !finite) {
        return Err(MidaError::Divergence {
            iteration: None,
            message: format!("S-update produced a non-finite value for user `{}`", designs.user_ids[u]),
        });
    }
    Ok(SUpdateStats {
        capped: results.iter().filter(|&&(c, _)| c).count(),
    })
}
