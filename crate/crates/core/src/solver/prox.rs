//! Soft thresholding and the accelerated proximal-gradient loop shared by
//! the warm start and the beta-update.

use ndarray::Array1;

/// Proximal operator of `kappa |x|`: `max(a - k, 0) - max(-a - k, 0)`.
#[inline]
pub fn soft_threshold(alpha: f64, kappa: f64) -> f64 {
    (alpha - kappa).max(0.0) - (-alpha - kappa).max(0.0)
}

pub fn soft_threshold_vec(v: &mut Array1<f64>, kappa: f64) {
    v.mapv_inplace(|a| soft_threshold(a, kappa));
}

/// One step of the momentum recurrence. Returns `(lambda_{k+1}, gamma_k)` with
/// `lambda_{k+1} = (1 + sqrt(1 + 4 lambda_k^2)) / 2` and
/// `gamma_k = (1 - lambda_k) / lambda_{k+1}`.
#[inline]
pub fn fista_momentum(lam_k: f64) -> (f64, f64) {
    let next = (1.0 + (1.0 + 4.0 * lam_k * lam_k).sqrt()) / 2.0;
    (next, (1.0 - lam_k) / next)
}

/// Momentum bookkeeping for one FISTA run.
///
/// The sequence starts at `lambda = 0`; `new` advances it once so the first
/// combination weight is `gamma = (1 - 1) / lambda_2 = 0`, making the first
/// iterate a plain proximal-gradient step.
#[derive(Debug, Clone)]
pub struct FistaState<T> {
    pub lam: f64,
    pub gamma: f64,
    pub zeta_prev: T,
}

impl<T> FistaState<T> {
    pub fn new(start: T) -> Self {
        let (lam, _) = fista_momentum(0.0);
        FistaState { lam, gamma: 0.0, zeta_prev: start }
    }

    /// Advances the recurrence and returns the weight for the current step.
    pub fn advance(&mut self) -> f64 {
        let (next, gamma) = fista_momentum(self.lam);
        self.lam = next;
        self.gamma = gamma;
        gamma
    }
}

#[derive(Debug, Clone)]
pub struct FistaOutcome {
    pub x: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f(x) + g(x)` with `f` smooth and `g` proximable.
///
/// `prox(v, step)` must return `argmin_x g(x) + ||x - v||^2 / (2 step)`.
/// Stops when the proximal-gradient step `||zeta - x||_inf` drops below
/// `tol` and returns that prox point. Momentum is reset whenever the step
/// turns against the previous direction (gradient restart).
pub fn fista<G, P>(x0: Array1<f64>, step: f64, max_iter: usize, tol: f64, mut grad: G, prox: P) -> FistaOutcome
where
    G: FnMut(&Array1<f64>) -> Array1<f64>,
    P: Fn(Array1<f64>, f64) -> Array1<f64>,
{
    let mut x = x0.clone();
    let mut state = FistaState::new(x0);
    for it in 1..=max_iter {
        let g = grad(&x);
        let zeta = prox(&x - &(g * step), step);
        let change = sup_dist(&zeta, &x);
        if change < tol || !change.is_finite() {
            return FistaOutcome { x: zeta, iterations: it, converged: change < tol };
        }
        let turned: f64 = (&x - &zeta).dot(&(&zeta - &state.zeta_prev));
        if turned > 0.0 {
            state = FistaState::new(state.zeta_prev);
        }
        let gamma = state.advance();
        x = &zeta * (1.0 - gamma) + &state.zeta_prev * gamma;
        state.zeta_prev = zeta;
    }
    FistaOutcome { x: state.zeta_prev, iterations: max_iter, converged: false }
}

fn sup_dist(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
}
