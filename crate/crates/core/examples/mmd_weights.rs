//! Exact and partitioned MMD weights against the pairwise definition.

use mida::mmd::{brute_force_mmd, mmd_distance, partition, representative_rows, MmdWeights, PartitionPlan};
use mida::synth::{generate, SynthConfig};

fn main() -> mida::Result<()> {
    let data = generate(&SynthConfig { n_users: 300, n_reports: 400, ..Default::default() })?.dataset;
    let beta = generate(&SynthConfig { n_users: 1, n_reports: 1, ..Default::default() })?.ground_truth;
    let selected = representative_rows(&data, &beta)?;
    let n_p = selected.nrows();
    let users: Vec<usize> = (0..n_p).collect();

    let exact = MmdWeights::compute(&data.reports, selected.view(), &PartitionPlan::single(data.reports.len(), &users))?;
    println!("pairwise   Dist^2 = {:.6}", brute_force_mmd(&data.reports, selected.view(), &beta));
    println!("c = 1      Dist^2 = {:.6}", mmd_distance(&beta, &exact)?);
    for c in [4, 16, 64] {
        let plan = partition(data.reports.len(), &users, c, 0);
        let w = MmdWeights::compute(&data.reports, selected.view(), &plan)?;
        println!("c = {c:<3}   Dist^2 = {:.6}  ({} chunk pairs)", mmd_distance(&beta, &w)?, plan.n_chunks());
    }
    println!("net weights 2A - B on the first 12 keywords: {:.3}", exact.net().slice(ndarray::s![..12]));
    Ok(())
}
