//! With one tweet per user, no reports and no MMD term, the model is plain
//! l1-regularized logistic regression, which the warm start solves directly.

use mida::model::full_objective;
use mida::solver::warm_start;
use mida::synth::{generate, SynthConfig};
use mida::{fit, Hyperparams, MmdWeights};

fn main() -> mida::Result<()> {
    let cfg = SynthConfig { n_users: 300, tweets_per_user: 1..=1, n_reports: 0, ..Default::default() };
    let data = generate(&cfg)?.dataset;
    let hyper = Hyperparams { lambda2: 0.0, ..Default::default() };
    let (model, trace) = fit(&data, &hyper, None)?;
    let direct = warm_start(&data, &hyper)?;
    let none = MmdWeights::zeros(data.n_keywords());
    println!("ADMM objective after {} iterations: {:.10}", trace.records.len(), model.trace_summary.final_objective);
    println!("direct l1-logistic objective:        {:.10}", full_objective(&direct, &data, &none, &hyper)?);
    let gap = (model.beta.as_array() - direct.as_array()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("max coefficient difference:          {gap:.2e}");
    Ok(())
}
