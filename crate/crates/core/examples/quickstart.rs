//! Generate a corpus, fit, and score a few users.

use mida::synth::{generate, SynthConfig};
use mida::{fit, predict, Hyperparams};

fn main() -> mida::Result<()> {
    let data = generate(&SynthConfig { n_users: 400, n_reports: 500, ..Default::default() })?;
    let (model, trace) = fit(&data.dataset, &Hyperparams::default(), None)?;
    println!(
        "{} outer iterations, final r = {:.2e}, objective = {:.4}",
        trace.records.len(),
        model.trace_summary.final_r_primal,
        model.trace_summary.final_objective
    );
    for bag in data.dataset.bags.iter().take(8) {
        println!("{}  label {}  p = {:.3}", bag.user_id, bag.label(), predict(&model, bag)?);
    }
    let nonzero: Vec<&str> = model
        .vocabulary
        .keywords()
        .iter()
        .zip(model.beta.weights())
        .filter(|(_, w)| **w != 0.0)
        .map(|(k, _)| k.as_str())
        .collect();
    println!("{} non-zero keyword weights: {}", nonzero.len(), nonzero.join(" "));
    Ok(())
}
