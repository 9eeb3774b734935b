//! Synthetic two-domain corpus with a known ground-truth coefficient vector.
//!
//! Every tweet draws Poisson counts with mean `background_rate` on each
//! keyword. A positive user additionally has exactly one adverse tweet, in
//! which the first `n_signal` keywords have mean `signal_rate`. Reports look
//! like adverse tweets with the signal means raised by `report_shift`.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{MidaError, Result};
use crate::model::{Coefficients, Dataset, KeywordVocabulary, ReportSet, UserBag};

const REPORT_STREAMS: u64 = 1 << 32;
const LABEL_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub positive_fraction: f64,
    pub tweets_per_user: RangeInclusive<usize>,
    pub n_keywords: usize,
    pub n_signal: usize,
    pub n_reports: usize,
    pub background_rate: f64,
    pub signal_rate: f64,
    pub report_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 1000,
            positive_fraction: 0.36,
            tweets_per_user: 1..=8,
            n_keywords: 50,
            n_signal: 10,
            n_reports: 2000,
            background_rate: 0.15,
            signal_rate: 0.8,
            report_shift: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(MidaError::Config(what.to_string()));
        if self.n_users == 0 {
            return bad("n_users must be at least 1");
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad("positive_fraction must lie in (0, 1)");
        }
        if *self.tweets_per_user.start() == 0 || self.tweets_per_user.is_empty() {
            return bad("tweets_per_user must be a non-empty range starting at 1 or more");
        }
        if self.n_keywords == 0 || self.n_signal == 0 || self.n_signal > self.n_keywords {
            return bad("need 1 <= n_signal <= n_keywords");
        }
        if !(self.background_rate > 0.0 && self.background_rate.is_finite()) {
            return bad("background_rate must be positive");
        }
        if !(self.signal_rate > self.background_rate && self.signal_rate.is_finite()) {
            return bad("signal_rate must exceed background_rate");
        }
        if !(self.report_shift >= 0.0 && self.report_shift.is_finite()) {
            return bad("report_shift must be non-negative");
        }
        Ok(())
    }

    pub fn n_positive(&self) -> usize {
        (self.positive_fraction * self.n_users as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: Dataset,
    pub ground_truth: Coefficients,
    /// Position of the adverse tweet in each positive user's bag.
    pub adverse_index: BTreeMap<String, usize>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Rates {
    background: Poisson<f64>,
    signal: Poisson<f64>,
    report: Poisson<f64>,
}

fn draw_row(rng: &mut ChaCha8Rng, k: usize, n_signal: usize, signal: Option<&Poisson<f64>>, bg: &Poisson<f64>) -> Vec<u32> {
    (0..k)
        .map(|j| {
            let d = if j < n_signal { signal.unwrap_or(bg) } else { bg };
            d.sample(rng) as u32
        })
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let poisson = |m: f64| Poisson::new(m).map_err(|e| MidaError::Config(format!("rate {m}: {e}")));
    let rates = Rates {
        background: poisson(cfg.background_rate)?,
        signal: poisson(cfg.signal_rate)?,
        report: poisson(cfg.signal_rate + cfg.report_shift)?,
    };
    let k = cfg.n_keywords;
    let width = cfg.n_users.to_string().len();
    let vocabulary = KeywordVocabulary::new((0..k).map(|j| format!("kw{j:02}")))?;

    let mut order: Vec<usize> = (0..cfg.n_users).collect();
    order.shuffle(&mut stream(cfg.seed, LABEL_STREAM));
    let mut positive = vec![false; cfg.n_users];
    for &u in &order[..cfg.n_positive()] {
        positive[u] = true;
    }

    let users: Vec<(UserBag, Option<usize>)> = (0..cfg.n_users)
        .into_par_iter()
        .map(|u| {
            let mut rng = stream(cfg.seed, u as u64);
            let n = rng.random_range(cfg.tweets_per_user.clone());
            let adverse = positive[u].then(|| rng.random_range(0..n));
            let mut counts = Vec::with_capacity(n * k);
            for i in 0..n {
                let signal = (adverse == Some(i)).then_some(&rates.signal);
                counts.extend(draw_row(&mut rng, k, cfg.n_signal, signal, &rates.background));
            }
            let counts = Array2::from_shape_vec((n, k), counts).expect("row-major fill");
            let bag = UserBag::new(format!("u{u:0width$}"), counts, u8::from(positive[u])).expect("valid bag");
            (bag, adverse)
        })
        .collect();

    let reports: Vec<u32> = (0..cfg.n_reports)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = stream(cfg.seed, REPORT_STREAMS + i as u64);
            draw_row(&mut rng, k, cfg.n_signal, Some(&rates.report), &rates.background)
        })
        .collect();
    let reports = ReportSet::new(Array2::from_shape_vec((cfg.n_reports, k), reports).expect("row-major fill"));

    let mut adverse_index = BTreeMap::new();
    let mut bags = Vec::with_capacity(users.len());
    for (bag, adverse) in users {
        if let Some(i) = adverse {
            adverse_index.insert(bag.user_id.clone(), i);
        }
        bags.push(bag);
    }

    let mut beta = Array1::zeros(k + 1);
    beta[0] = -(cfg.n_signal as f64) * (cfg.background_rate + cfg.signal_rate) / 2.0;
    beta.slice_mut(ndarray::s![1..=cfg.n_signal]).fill(1.0);

    Ok(SynthData {
        dataset: Dataset::new(vocabulary, bags, reports)?,
        ground_truth: Coefficients::new(beta)?,
        adverse_index,
    })
}
