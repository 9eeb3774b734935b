//! Held-out AUC with and without the MMD term as the report domain drifts
//! further from the adverse tweets.

use mida::cli::holdout_split;
use mida::metrics::{roc_auc, ScoredLabel};
use mida::synth::{generate, SynthConfig};
use mida::{fit, predict, Hyperparams};

fn main() -> mida::Result<()> {
    println!("{:>6} {:>8} {:>10} {:>10}", "shift", "lambda2", "auc", "|w|_1");
    for shift in [0.0, 0.5, 1.5] {
        let data = generate(&SynthConfig { report_shift: shift, ..Default::default() })?.dataset;
        let (train, held) = holdout_split(data.bags.len(), 0.3, 0)?;
        let train_set = data.subset(&train);
        for lambda2 in [0.0, 1.0, 5.0] {
            let hyper = Hyperparams { lambda2, rho0: 20.0f64.max(10.0 * lambda2), ..Default::default() };
            let (model, _) = fit(&train_set, &hyper, None)?;
            let scored: Vec<ScoredLabel> = held
                .iter()
                .map(|&u| Ok(ScoredLabel::new(predict(&model, &data.bags[u])?, data.bags[u].label())))
                .collect::<mida::Result<_>>()?;
            let (auc, _) = roc_auc(&scored)?;
            println!("{shift:>6.1} {lambda2:>8.1} {auc:>10.4} {:>10.3}", model.beta.weights().iter().map(|v| v.abs()).sum::<f64>());
        }
    }
    Ok(())
}
