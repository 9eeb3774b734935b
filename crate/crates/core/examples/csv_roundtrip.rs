//! Write a synthetic corpus as CSV, read it back, and round-trip a model file.

use mida::io::{load_dataset, load_model, save_labels, save_model, save_reports, save_tweets};
use mida::synth::{generate, SynthConfig};
use mida::{fit, Hyperparams};

fn main() -> mida::Result<()> {
    let dir = std::env::temp_dir().join(format!("mida-csv-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|source| mida::MidaError::Io { path: dir.clone(), source })?;
    let data = generate(&SynthConfig { n_users: 150, n_reports: 200, ..Default::default() })?.dataset;
    save_reports(&dir.join("reports.csv"), &data.reports, &data.vocabulary)?;
    save_tweets(&dir.join("tweets.csv"), &data.bags, &data.vocabulary)?;
    save_labels(&dir.join("labels.csv"), &data.bags)?;

    let back = load_dataset(&dir.join("reports.csv"), &dir.join("tweets.csv"), &dir.join("labels.csv"))?;
    println!("dataset survives CSV: {}", back == data);

    let (model, _) = fit(&back, &Hyperparams { max_outer: 5, ..Default::default() }, None)?;
    save_model(&model, &dir.join("model.json"))?;
    println!("model survives JSON: {}", load_model(&dir.join("model.json"))? == model);
    println!("files in {}", dir.display());
    Ok(())
}
