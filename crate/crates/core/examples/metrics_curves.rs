//! Threshold metrics, ROC and PR curves for a handful of scores.

use mida::metrics::{pairwise_auc, pr_aupr, roc_auc, threshold_metrics, write_curve_csv, ScoredLabel};

fn main() -> mida::Result<()> {
    let scored: Vec<ScoredLabel> = [(0.95, 1), (0.9, 0), (0.8, 1), (0.7, 1), (0.55, 0), (0.5, 1), (0.3, 0), (0.1, 0)]
        .into_iter()
        .map(|(s, l)| ScoredLabel::new(s, l))
        .collect();
    for t in [0.3, 0.5, 0.75] {
        let m = threshold_metrics(&scored, t)?;
        println!("threshold {t:.2}: acc {:.3} pr {:.3} re {:.3} fs {:.3}", m.acc, m.pr, m.re, m.fs);
    }
    let (auc, roc) = roc_auc(&scored)?;
    let (aupr, pr) = pr_aupr(&scored)?;
    println!("AUC {auc:.4} (pairwise {:.4}), AUPR {aupr:.4}", pairwise_auc(&scored)?);
    println!("\nROC");
    write_curve_csv(&roc, std::io::stdout()).expect("stdout");
    println!("\nPR");
    write_curve_csv(&pr, std::io::stdout()).expect("stdout");
    Ok(())
}
