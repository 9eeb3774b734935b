//! Fits the default synthetic corpus and prints the residual trace.

use mida::synth::{generate, SynthConfig};
use mida::{fit, Hyperparams};

fn main() -> mida::Result<()> {
    let data = generate(&SynthConfig::default())?;
    let (model, trace) = fit(&data.dataset, &Hyperparams::default(), None)?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    println!("{:>3} {:>12} {:>12} {:>8} {:>14} {:>5} {:>8}", "k", "r_primal", "s_dual", "rho", "objective", "ccp", "seconds");
    for r in &trace.records {
        println!(
            "{:>3} {:>12.3e} {:>12.3e} {:>8} {:>14.6} {:>5} {:>8.2}{}",
            r.k, r.r_primal, r.s_dual, r.rho, r.objective, r.ccp_iterations, r.seconds,
            if r.capped { "  capped" } else { "" }
        );
    }
    println!("beta[0..12] = {:.3}", model.beta.as_array().slice(ndarray::s![..12]));
    Ok(())
}
