//! Outer loop: refresh representatives, rebalance the penalty, update `S`,
//! `beta` and the dual, then test the residuals.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::beta_update::{beta_update, FISTA_TOL};
use super::prox::{fista, soft_threshold_vec};
use super::s_update::s_update;
use super::{largest_eigenvalue, AdmmState, DesignSet};
use crate::error::{MidaError, Result};
use crate::mmd::{partition, rows_at, MmdWeights, PartitionPlan};
use crate::model::{
    loss_at_score, objective_from_parts, rho_stability_warning, sigmoid, user_probability, Coefficients, Dataset,
    Hyperparams, KeywordVocabulary, UserBag,
};

/// One outer iteration. `seconds` is wall time since the start of `fit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    pub r_primal: f64,
    pub s_dual: f64,
    pub rho: f64,
    pub objective: f64,
    pub seconds: f64,
    pub ccp_iterations: usize,
    /// Largest step-to-step increase of `l - m` inside the beta-update.
    pub ccp_max_rise: f64,
    /// Some inner solve stopped at its iteration cap.
    pub capped: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub warnings: Vec<String>,
    pub converged: bool,
}

impl SolveTrace {
    fn warn(&mut self, message: String) {
        if !self.warnings.contains(&message) {
            self.warnings.push(message);
        }
    }
}

/// Timing-free digest of a trace, stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub outer_iterations: usize,
    pub converged: bool,
    pub final_r_primal: f64,
    pub final_s_dual: f64,
    pub final_rho: f64,
    pub final_objective: f64,
}

impl From<&SolveTrace> for TraceSummary {
    fn from(t: &SolveTrace) -> Self {
        let last = t.records.last();
        TraceSummary {
            outer_iterations: t.records.len(),
            converged: t.converged,
            final_r_primal: last.map_or(0.0, |r| r.r_primal),
            final_s_dual: last.map_or(0.0, |r| r.s_dual),
            final_rho: last.map_or(0.0, |r| r.rho),
            final_objective: last.map_or(0.0, |r| r.objective),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub vocabulary: KeywordVocabulary,
    pub beta: Coefficients,
    pub hyper: Hyperparams,
    pub trace_summary: TraceSummary,
}

/// Scaled dual ascent: `h += S - X beta`.
pub fn dual_update(state: &mut AdmmState, beta: &Coefficients, designs: &DesignSet) {
    for (u, x) in designs.designs.iter().enumerate() {
        let resid = &state.s[u] - &x.view().dot(beta.as_array());
        state.h[u] += &resid;
    }
}

/// `(||S - X beta_new||, rho ||X (beta_prev - beta_new)||)` over all entries.
pub fn residuals(state: &AdmmState, designs: &DesignSet, beta_prev: &Coefficients, beta_new: &Coefficients) -> (f64, f64) {
    let delta = beta_prev.as_array() - beta_new.as_array();
    let mut r2 = 0.0;
    let mut s2 = 0.0;
    for (u, x) in designs.designs.iter().enumerate() {
        let xb = x.view().dot(beta_new.as_array());
        r2 += (&state.s[u] - &xb).mapv(|v| v * v).sum();
        s2 += x.view().dot(&delta).mapv(|v| v * v).sum();
    }
    (r2.sqrt(), state.rho * s2.sqrt())
}

/// Residual balancing with factor 10 and step 2.
pub fn adaptive_rho(rho: f64, r_primal: f64, s_dual: f64) -> f64 {
    if r_primal > 10.0 * s_dual {
        2.0 * rho
    } else if s_dual > 10.0 * r_primal {
        rho / 2.0
    } else {
        rho
    }
}

/// l1 logistic regression on bags collapsed to their column-wise maxima,
/// solved by FISTA. Used as the starting point when none is supplied.
pub fn warm_start(data: &Dataset, hyper: &Hyperparams) -> Result<Coefficients> {
    let k = data.n_keywords();
    let n = data.bags.len();
    if n == 0 {
        return Err(MidaError::EmptyInput("no users to fit".into()));
    }
    let mut x = Array2::<f64>::ones((n, k + 1));
    for (u, bag) in data.bags.iter().enumerate() {
        let max = bag.counts.map_axis(Axis(0), |c| c.iter().copied().max().unwrap_or(0));
        x.row_mut(u).slice_mut(ndarray::s![1..]).assign(&max.mapv(f64::from));
    }
    let y = Array1::from_iter(data.bags.iter().map(|b| f64::from(b.label())));
    let lip = 0.25 * largest_eigenvalue(&x.t().dot(&x), 50) * 1.01;
    let kappa = hyper.lambda1;
    let out = fista(
        Array1::zeros(k + 1),
        1.0 / lip.max(f64::MIN_POSITIVE),
        hyper.max_fista,
        FISTA_TOL,
        |b| x.t().dot(&(x.dot(b).mapv(sigmoid) - &y)),
        |mut v, t| {
            soft_threshold_vec(&mut v, kappa * t);
            v
        },
    );
    Coefficients::new(out.x)
}

struct Objective<'a> {
    data: &'a Dataset,
    designs: &'a DesignSet,
    plan: PartitionPlan,
    hyper: &'a Hyperparams,
}

impl Objective<'_> {
    /// MMD weights for the representatives currently in `state`.
    fn weights(&self, rep_index: &[usize]) -> Result<MmdWeights> {
        let pos = &self.designs.positives;
        let rep: Vec<usize> = pos.iter().map(|&u| rep_index[u]).collect();
        let selected = rows_at(self.data, pos, &rep);
        MmdWeights::compute(&self.data.reports, selected.view(), &self.plan)
    }

    fn value(&self, beta: &Coefficients, w: &MmdWeights) -> Result<f64> {
        let loss: f64 = self
            .designs
            .scores(beta)
            .iter()
            .zip(&self.designs.labels)
            .map(|(s, &y)| loss_at_score(s.fold(f64::NEG_INFINITY, |m, &v| m.max(v)), y))
            .sum();
        objective_from_parts(loss, beta, w, self.hyper)
    }
}

fn at_iteration(err: MidaError, k: usize) -> MidaError {
    match err {
        MidaError::Divergence { iteration: None, message } => MidaError::Divergence { iteration: Some(k), message },
        other => other,
    }
}

/// Runs the outer loop from `beta_init`, or from [`warm_start`] when absent.
pub fn fit(data: &Dataset, hyper: &Hyperparams, beta_init: Option<&Coefficients>) -> Result<(Model, SolveTrace)> {
    let mut trace = SolveTrace::default();
    for w in hyper.validate()? {
        trace.warn(w);
    }
    if data.bags.is_empty() {
        return Err(MidaError::EmptyInput("no users to fit".into()));
    }
    let start = Instant::now();
    let designs = DesignSet::new(data);
    let mut beta = match beta_init {
        Some(b) if b.len() != designs.n_coef() => {
            return Err(MidaError::dimension("initial coefficients", designs.n_coef(), b.len()))
        }
        Some(b) => b.clone(),
        None => warm_start(data, hyper)?,
    };

    let n_p = designs.positives.len();
    let plan = partition(data.reports.len(), &(0..n_p).collect::<Vec<_>>(), hyper.partitions, hyper.seed);
    let objective = Objective { data, designs: &designs, plan, hyper };
    let mut state = AdmmState::new(&designs, &beta, hyper.rho0);
    let mut weights = objective.weights(&state.rep_index)?;
    let sqrt_p = (designs.total_entries() as f64).sqrt();

    for k in 1..=hyper.max_outer {
        state.k = k;
        if state.refresh_representatives(&designs, &beta) {
            weights = objective.weights(&state.rep_index)?;
        }
        if hyper.adaptive_rho && k > 1 {
            let rho = adaptive_rho(state.rho, state.r_primal, state.s_dual);
            if rho != state.rho {
                let scale = state.rho / rho;
                state.h.iter_mut().for_each(|h| *h *= scale);
                state.rho = rho;
                if let Some(w) = rho_stability_warning(rho, hyper.lambda2) {
                    trace.warn(w);
                }
            }
        }

        let s_stats = s_update(&mut state, &beta, &designs, hyper).map_err(|e| at_iteration(e, k))?;
        let out = beta_update(&state, &designs, &weights, hyper, &beta).map_err(|e| at_iteration(e, k))?;
        let ccp_max_rise = out.max_rise();
        let beta_prev = std::mem::replace(&mut beta, out.beta);
        dual_update(&mut state, &beta, &designs);
        let (r, s) = residuals(&state, &designs, &beta_prev, &beta);
        state.r_primal = r;
        state.s_dual = s;

        // the objective is reported at the representatives of the new beta
        state.refresh_representatives(&designs, &beta);
        weights = objective.weights(&state.rep_index)?;
        let value = objective.value(&beta, &weights).map_err(|e| at_iteration(e, k))?;
        trace.records.push(TraceRecord {
            k,
            r_primal: r,
            s_dual: s,
            rho: state.rho,
            objective: value,
            seconds: start.elapsed().as_secs_f64(),
            ccp_iterations: out.ccp_iterations,
            ccp_max_rise,
            capped: out.fista_capped || s_stats.capped > 0,
        });

        let (xb_norm, s_norm, h_norm) = norms(&state, &designs, &beta);
        let eps_pri = sqrt_p * hyper.tol_abs + hyper.tol_rel * xb_norm.max(s_norm);
        let eps_dual = sqrt_p * hyper.tol_abs + hyper.tol_rel * state.rho * h_norm;
        if r < eps_pri && s < eps_dual {
            trace.converged = true;
            break;
        }
    }

    let model = Model {
        vocabulary: data.vocabulary.clone(),
        beta,
        hyper: hyper.clone(),
        trace_summary: TraceSummary::from(&trace),
    };
    Ok((model, trace))
}

fn norms(state: &AdmmState, designs: &DesignSet, beta: &Coefficients) -> (f64, f64, f64) {
    let sq = |v: &Array1<f64>| v.dot(v);
    let xb: f64 = designs.scores(beta).iter().map(sq).sum();
    let s: f64 = state.s.iter().map(sq).sum();
    let h: f64 = state.h.iter().map(sq).sum();
    (xb.sqrt(), s.sqrt(), h.sqrt())
}

/// Max-rule probability of `bag` under the fitted model.
pub fn predict(model: &Model, bag: &UserBag) -> Result<f64> {
    if bag.width() != model.vocabulary.len() {
        return Err(MidaError::dimension(
            format!("bag `{}` vs model vocabulary", bag.user_id),
            model.vocabulary.len(),
            bag.width(),
        ));
    }
    user_probability(&model.beta, bag)
}
