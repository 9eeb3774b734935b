//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each on
//! stderr (uncaptured), then fails if any criterion failed.

use std::io::Write;
use std::time::{Duration, Instant};

use mida::cli::holdout_split;
use mida::io::{prune_bag, save_model, save_trace};
use mida::metrics::{pairwise_auc, roc_auc, threshold_metrics, ScoredLabel};
use mida::mmd::{brute_force_mmd, mmd_distance, within_domain_weights, MmdWeights, PartitionPlan};
use mida::model::{loss_at_score, Coefficients, Dataset, Hyperparams, KeywordVocabulary, ReportSet, UserBag};
use mida::solver::{
    fit, grad_p, grad_s_beta, linearize_m, predict, s_update, soft_threshold, solve_representative, AdmmState,
    DesignSet, SolveTrace,
};
use mida::synth::{generate, SynthConfig};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

type Outcome = std::result::Result<String, String>;

/// Every outer iteration of every fit in the suite, for the descent audit.
#[derive(Default)]
struct Fits {
    traces: Vec<SolveTrace>,
}

impl Fits {
    fn fit(&mut self, data: &Dataset, hyper: &Hyperparams) -> mida::Result<mida::Model> {
        let (model, trace) = fit(data, hyper, None)?;
        self.traces.push(trace);
        Ok(model)
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn prox_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let alpha = rng.random_range(-5.0..5.0);
        let kappa = rng.random_range(0.0..3.0);
        let f = |x: f64| kappa * x.abs() + 0.5 * (x - alpha) * (x - alpha);
        // coarse grid, then a fine grid around the coarse winner
        let argmin = |lo: f64, step: f64, n: usize| {
            (0..=n).map(|i| lo + i as f64 * step).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap()
        };
        let coarse = argmin(-6.0, 1e-2, 1200);
        let fine = argmin(coarse - 1e-2, 1e-5, 2000);
        worst = worst.max((soft_threshold(alpha, kappa) - fine).abs());
    }
    check(worst < 2e-4, format!("max |prox - grid argmin| = {worst:.2e} over 1000 cases"))
}

fn random_dataset(rng: &mut ChaCha8Rng, n_users: usize, k: usize, max_tweets: usize, n_reports: usize) -> Dataset {
    let counts = Poisson::new(0.7).unwrap();
    let draw = |rows: usize, rng: &mut ChaCha8Rng| {
        Array2::from_shape_fn((rows, k), |_| counts.sample(rng) as u32)
    };
    let vocab = KeywordVocabulary::new((0..k).map(|j| format!("k{j}"))).unwrap();
    let bags = (0..n_users)
        .map(|u| {
            let n = rng.random_range(1..=max_tweets);
            let label = u8::from(u % 3 == 0 || rng.random_bool(0.2));
            UserBag::new(format!("u{u}"), draw(n, rng), label).unwrap()
        })
        .collect();
    let reports = ReportSet::new(draw(n_reports, rng));
    Dataset::new(vocab, bags, reports).unwrap()
}

fn random_beta(rng: &mut ChaCha8Rng, k: usize) -> Coefficients {
    Coefficients::from_vec((0..=k).map(|_| rng.random_range(-0.6..0.6)).collect()).unwrap()
}

fn gradient_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let step = 1e-6;
    let mut worst_p = 0.0f64;
    for _ in 0..20 {
        let s = rng.random_range(-6.0..6.0);
        let y = f64::from(rng.random_range(0..2u8));
        let fd = (loss_at_score(s + step, y) - loss_at_score(s - step, y)) / (2.0 * step);
        worst_p = worst_p.max(rel_err(grad_p(s, y), fd));
    }

    let mut worst_b = 0.0f64;
    for _ in 0..20 {
        let k = rng.random_range(2..8);
        let data = random_dataset(&mut rng, 12, k, 4, 15);
        let designs = DesignSet::new(&data);
        let beta = random_beta(&mut rng, k);
        let rho = rng.random_range(0.5..20.0);
        let lambda2 = rng.random_range(0.0..3.0);
        let mut state = AdmmState::new(&designs, &beta, rho);
        for (s, h) in state.s.iter_mut().zip(state.h.iter_mut()) {
            s.mapv_inplace(|v| v + rng.random_range(-1.0..1.0));
            h.mapv_inplace(|v| v + rng.random_range(-1.0..1.0));
        }
        let n_p = data.positive_users().len();
        let plan = PartitionPlan::single(data.reports.len(), &(0..n_p).collect::<Vec<_>>());
        let selected = mida::mmd::representative_rows(&data, &beta).unwrap();
        let w = MmdWeights::compute(&data.reports, selected.view(), &plan).unwrap();
        let lin = linearize_m(&random_beta(&mut rng, k), &w, lambda2);
        // s(beta) written out directly
        let smooth = |b: &Array1<f64>| {
            let mut v = 0.0;
            for (u, x) in designs.designs.iter().enumerate() {
                let r = &state.s[u] - &x.view().dot(b) + &state.h[u];
                v += 0.5 * rho * r.dot(&r);
            }
            for j in 0..k {
                v += 2.0 * lambda2 * w.a[j] * b[j + 1] * b[j + 1];
            }
            v - lin.eval(b)
        };
        let g = grad_s_beta(&beta, &state.s, &state.h, &designs, &w, &lin, rho, lambda2);
        for j in 0..=k {
            let mut up = beta.as_array().clone();
            let mut dn = up.clone();
            up[j] += step;
            dn[j] -= step;
            let fd = (smooth(&up) - smooth(&dn)) / (2.0 * step);
            worst_b = worst_b.max((g[j] - fd).abs() / g.iter().fold(1.0f64, |m, v| m.max(v.abs())));
        }
    }
    check(
        worst_p < 1e-5 && worst_b < 1e-5,
        format!("grad_p rel err {worst_p:.2e}, grad_s_beta rel err {worst_b:.2e} (20 instances each)"),
    )
}

fn s_update_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let rho = rng.random_range(0.5..50.0);
        let target = rng.random_range(-8.0..8.0);
        let y = f64::from(rng.random_range(0..2u8));
        let f = |s: f64| loss_at_score(s, y) + 0.5 * rho * (s - target) * (s - target);
        let grid = |lo: f64, step: f64, n: usize| {
            (0..=n).map(|i| lo + i as f64 * step).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap()
        };
        let coarse = grid(-12.0, 1e-3, 24_000);
        let fine = grid(coarse - 1e-3, 1e-6, 2000);
        let (s, _) = solve_representative(target + rng.random_range(-1.0..1.0), target, rho, 1.0, y, 5000);
        worst = worst.max((s - fine).abs());
    }

    // non-representative entries take the closed form X beta - h
    let data = random_dataset(&mut rng, 40, 6, 6, 10);
    let designs = DesignSet::new(&data);
    let beta = random_beta(&mut rng, 6);
    let rho = 7.0;
    let mut state = AdmmState::new(&designs, &beta, rho);
    for h in state.h.iter_mut() {
        h.mapv_inplace(|v| v + rng.random_range(-1.0..1.0));
    }
    s_update(&mut state, &beta, &designs, &Hyperparams { rho0: rho, ..Default::default() }).unwrap();
    let mut closed_form_miss = 0usize;
    let mut worst_resid = 0.0f64;
    for (u, x) in designs.designs.iter().enumerate() {
        let xb = x.view().dot(beta.as_array());
        for i in (0..xb.len()).filter(|&i| i != state.rep_index[u]) {
            let resid = rho * (state.s[u][i] - xb[i] + state.h[u][i]);
            closed_form_miss += usize::from(state.s[u][i] != xb[i] - state.h[u][i]);
            // the residual is one rounding of the closed form, nothing more
            worst_resid = worst_resid.max(resid.abs() / (rho * f64::EPSILON * (xb[i].abs() + state.h[u][i].abs())));
        }
    }
    check(
        worst < 1e-3 && closed_form_miss == 0 && worst_resid <= 2.0,
        format!(
            "max |S - grid argmin| = {worst:.2e}; non-representative closed-form misses {closed_form_miss}, \
             residual <= {worst_resid:.1} ulp-scale"
        ),
    )
}

fn mmd_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut worst_dist, mut worst_within) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let k = rng.random_range(1..=20);
        let r = rng.random_range(1..=50);
        let n_p = rng.random_range(1..=50);
        let reports = ReportSet::new(Array2::from_shape_fn((r, k), |_| rng.random_range(0..5u32)));
        let selected = Array2::from_shape_fn((n_p, k), |_| f64::from(rng.random_range(0..5u32)));
        let plan = PartitionPlan::single(r, &(0..n_p).collect::<Vec<_>>());
        let w = MmdWeights::compute(&reports, selected.view(), &plan).unwrap();
        let beta = random_beta(&mut rng, k);
        let fast = mmd_distance(&beta, &w).unwrap();
        let slow = brute_force_mmd(&reports, selected.view(), &beta);
        worst_dist = worst_dist.max((fast - slow).abs() / slow.abs().max(1.0));

        let b = within_domain_weights(selected.view(), &plan).unwrap();
        for j in 0..k {
            let mut pairwise = 0.0;
            for u in 0..n_p {
                for v in 0..n_p {
                    pairwise += (selected[[u, j]] - selected[[v, j]]).powi(2);
                }
            }
            pairwise /= (n_p * n_p) as f64;
            worst_within = worst_within.max((b[j] - pairwise).abs() / pairwise.max(1.0));
        }
    }
    check(
        worst_dist < 1e-10 && worst_within < 1e-10,
        format!("distance err {worst_dist:.2e}, within-domain identity err {worst_within:.2e} (50 instances)"),
    )
}

/// Plain FISTA on `sum log(1 + e^{x.b}) - y x.b + lambda ||b||_1`, with the
/// step bounded through the Frobenius norm.
fn l1_logistic_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let n = x[0].len();
    let objective = |b: &[f64]| -> f64 {
        let mut v: f64 = b.iter().map(|c| lambda * c.abs()).sum();
        for (row, &yi) in x.iter().zip(y) {
            let s: f64 = row.iter().zip(b).map(|(a, c)| a * c).sum();
            v += if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() } - yi * s;
        }
        v
    };
    let frob: f64 = x.iter().flatten().map(|v| v * v).sum();
    let step = 1.0 / (0.25 * frob);
    let (mut b, mut z, mut t) = (vec![0.0; n], vec![0.0; n], 1.0f64);
    for _ in 0..400_000 {
        let mut g = vec![0.0; n];
        for (row, &yi) in x.iter().zip(y) {
            let s: f64 = row.iter().zip(&z).map(|(a, c)| a * c).sum();
            let r = 1.0 / (1.0 + (-s).exp()) - yi;
            for (gj, a) in g.iter_mut().zip(row) {
                *gj += r * a;
            }
        }
        let next: Vec<f64> = z
            .iter()
            .zip(&g)
            .map(|(zj, gj)| {
                let v = zj - step * gj;
                v.signum() * (v.abs() - step * lambda).max(0.0)
            })
            .collect();
        let moved = next.iter().zip(&b).fold(0.0f64, |m, (a, c)| m.max((a - c).abs()));
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = next.iter().zip(&b).map(|(a, c)| a + (t - 1.0) / t_next * (a - c)).collect();
        // restart on objective increase
        if objective(&next) > objective(&b) {
            z = next.clone();
            t = 1.0;
        } else {
            t = t_next;
        }
        b = next;
        if moved < 1e-13 {
            break;
        }
    }
    let v = objective(&b);
    (b, v)
}

fn reduction_equivalence(fits: &mut Fits) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for _ in 0..5 {
        let n = rng.random_range(80..=200);
        let k = rng.random_range(5..=50);
        let truth: Vec<f64> = (0..=k).map(|_| rng.random_range(-0.5..0.5)).collect();
        let counts = Poisson::new(0.5).unwrap();
        let mut x = Vec::with_capacity(n);
        let mut bags = Vec::with_capacity(n);
        for u in 0..n {
            let c: Vec<u32> = (0..k).map(|_| counts.sample(&mut rng) as u32).collect();
            let row: Vec<f64> = std::iter::once(1.0).chain(c.iter().map(|&v| f64::from(v))).collect();
            let s: f64 = row.iter().zip(&truth).map(|(a, b)| a * b).sum();
            let label = u8::from(rng.random_bool(1.0 / (1.0 + (-s).exp())));
            bags.push(UserBag::new(format!("u{u}"), Array2::from_shape_vec((1, k), c).unwrap(), label).unwrap());
            x.push(row);
        }
        let y: Vec<f64> = bags.iter().map(|b| f64::from(b.label())).collect();
        let vocab = KeywordVocabulary::new((0..k).map(|j| format!("k{j}"))).unwrap();
        let data = Dataset::new(vocab, bags, ReportSet::empty(k)).unwrap();
        let hyper = Hyperparams { lambda1: 0.5, lambda2: 0.0, ..Default::default() };
        let model = fits.fit(&data, &hyper).map_err(|e| e.to_string())?;
        let (_, oracle) = l1_logistic_oracle(&x, &y, hyper.lambda1);
        let got = model.trace_summary.final_objective;
        worst = worst.max((got - oracle).abs());
        detail.push(format!("N={n} K={k}"));
    }
    check(worst < 1e-6, format!("max |fit - oracle| objective gap {worst:.2e} on {}", detail.join(", ")))
}

fn ccp_descent(fits: &Fits) -> Outcome {
    let records: Vec<_> = fits.traces.iter().flat_map(|t| &t.records).collect();
    let worst = records.iter().map(|r| r.ccp_max_rise).fold(f64::NEG_INFINITY, f64::max);
    let ccp_steps: usize = records.iter().map(|r| r.ccp_iterations).sum();
    check(
        !records.is_empty() && worst <= 1e-8,
        format!(
            "max l - m rise {worst:.2e} over {ccp_steps} CCP steps in {} outer iterations of {} fits",
            records.len(),
            fits.traces.len()
        ),
    )
}

fn pruned(data: Dataset) -> Dataset {
    let bags = data.bags.iter().map(prune_bag).collect();
    Dataset::new(data.vocabulary, bags, data.reports).unwrap()
}

fn admm_behavior(fits: &mut Fits) -> Outcome {
    let data = pruned(generate(&SynthConfig::default()).map_err(|e| e.to_string())?.dataset);
    fits.fit(&data, &Hyperparams::default()).map_err(|e| e.to_string())?;
    let rec = &fits.traces.last().unwrap().records;
    let (first, last) = (rec.first().unwrap(), rec.last().unwrap());
    check(
        rec.len() == 20 && last.r_primal < first.r_primal && last.r_primal < 1e-3,
        format!(
            "r_primal {:.2e} at k=1 -> {:.2e} at k={}; s_dual {:.2e} -> {:.2e}",
            first.r_primal, last.r_primal, last.k, first.s_dual, last.s_dual
        ),
    )
}

fn holdout_auc(fits: &mut Fits, data: &Dataset, held: &[usize], train: &[usize], hyper: &Hyperparams) -> Result<f64, String> {
    let model = fits.fit(&data.subset(train), hyper).map_err(|e| e.to_string())?;
    let scored: Vec<ScoredLabel> = held
        .iter()
        .map(|&u| ScoredLabel::new(predict(&model, &data.bags[u]).unwrap(), data.bags[u].label()))
        .collect();
    roc_auc(&scored).map(|(auc, _)| auc).map_err(|e| e.to_string())
}

fn end_to_end(fits: &mut Fits) -> Outcome {
    let data = pruned(generate(&SynthConfig::default()).map_err(|e| e.to_string())?.dataset);
    let (train, held) = holdout_split(data.bags.len(), 0.3, 0).map_err(|e| e.to_string())?;
    let with = holdout_auc(fits, &data, &held, &train, &Hyperparams::default())?;
    let without = holdout_auc(fits, &data, &held, &train, &Hyperparams { lambda2: 0.0, ..Default::default() })?;
    check(
        with >= 0.90 && with >= without - 0.01,
        format!("held-out AUC {with:.4} with the MMD term, {without:.4} without ({} users)", held.len()),
    )
}

fn f_score_consistency() -> Outcome {
    // smallest confusion matrix with precision 0.7735 and recall 0.5333
    let (pr, re) = (0.7735, 0.5333);
    let (tp, fp, fn_) = (1..2000usize)
        .flat_map(|tp| (0..2000usize).map(move |fp| (tp, fp)))
        .filter(|&(tp, fp)| (tp as f64 / (tp + fp) as f64 - pr).abs() < 5e-5)
        .find_map(|(tp, fp)| {
            let fn_ = (tp as f64 / re - tp as f64).round() as usize;
            ((tp as f64 / (tp + fn_) as f64 - re).abs() < 5e-5).then_some((tp, fp, fn_))
        })
        .ok_or("no confusion matrix found")?;
    let mut scored = vec![ScoredLabel::new(0.9, 1); tp];
    scored.extend(vec![ScoredLabel::new(0.9, 0); fp]);
    scored.extend(vec![ScoredLabel::new(0.1, 1); fn_]);
    scored.push(ScoredLabel::new(0.1, 0));
    let m = threshold_metrics(&scored, 0.5).map_err(|e| e.to_string())?;
    check(
        (m.fs - 0.6310).abs() <= 5e-4,
        format!("tp={tp} fp={fp} fn={fn_}: PR {:.4} RE {:.4} FS {:.4}", m.pr, m.re, m.fs),
    )
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0f64;
    let mut sets = 0;
    while sets < 100 {
        let n = rng.random_range(2..200);
        // coarse scores so ties are common
        let scored: Vec<ScoredLabel> = (0..n)
            .map(|_| ScoredLabel::new(f64::from(rng.random_range(0..25u8)) / 24.0, rng.random_range(0..2u8)))
            .collect();
        if let (Ok((a, _)), Ok(b)) = (roc_auc(&scored), pairwise_auc(&scored)) {
            worst = worst.max((a - b).abs());
            sets += 1;
        }
    }
    check(worst < 1e-10, format!("max |trapezoid - Mann-Whitney| = {worst:.2e} over 100 sets"))
}

fn determinism(fits: &mut Fits) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = SynthConfig { n_users: 300, n_reports: 400, seed: 7, ..Default::default() };
    let hyper = Hyperparams { seed: 7, ..Default::default() };
    let mut files = Vec::new();
    for run in 0..2 {
        let data = pruned(generate(&cfg).map_err(|e| e.to_string())?.dataset);
        let model = fits.fit(&data, &hyper).map_err(|e| e.to_string())?;
        let m = dir.path().join(format!("model{run}.json"));
        let t = dir.path().join(format!("trace{run}.csv"));
        save_model(&model, &m).map_err(|e| e.to_string())?;
        save_trace(&t, fits.traces.last().unwrap()).map_err(|e| e.to_string())?;
        let trace = std::fs::read_to_string(&t).map_err(|e| e.to_string())?;
        // the last column is wall time
        let timing_free: Vec<String> =
            trace.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect();
        files.push((std::fs::read(&m).map_err(|e| e.to_string())?, timing_free));
    }
    check(
        files[0] == files[1],
        format!("model files {} bytes, traces {} rows", files[0].0.len(), files[0].1.len()),
    )
}

struct Row {
    id: usize,
    name: &'static str,
    limit: Option<Duration>,
    outcome: Outcome,
    elapsed: Duration,
}

fn timed(id: usize, name: &'static str, limit: Option<u64>, f: impl FnOnce() -> Outcome) -> Row {
    let start = Instant::now();
    let outcome = f();
    Row { id, name, limit: limit.map(Duration::from_secs), outcome, elapsed: start.elapsed() }
}

#[test]
fn acceptance_criteria() {
    let mut fits = Fits::default();
    let mut rows = vec![
        timed(1, "prox oracle", Some(1), prox_oracle),
        timed(2, "gradient oracles", Some(5), gradient_oracles),
        timed(3, "S-update oracle", Some(10), s_update_oracle),
        timed(4, "MMD oracle", Some(5), mmd_oracle),
        timed(5, "reduction to l1 logistic", Some(30), || reduction_equivalence(&mut fits)),
        timed(7, "ADMM residual decline", Some(60), || admm_behavior(&mut fits)),
        timed(8, "end-to-end learning", Some(120), || end_to_end(&mut fits)),
        timed(9, "F-score consistency", None, f_score_consistency),
        timed(10, "metrics oracle", None, metrics_oracle),
        timed(11, "determinism", None, || determinism(&mut fits)),
    ];
    rows.push(timed(6, "CCP descent", None, || ccp_descent(&fits)));
    rows.sort_by_key(|r| r.id);

    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for r in &rows {
        let over = r.limit.is_some_and(|l| r.elapsed > l);
        let pass = r.outcome.is_ok() && !over;
        let detail = match &r.outcome {
            Ok(d) | Err(d) => d,
        };
        let budget = r.limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
        writeln!(
            err,
            "{} {:>2} {:<26} [{:.2}s{budget}] {detail}",
            if pass { "PASS" } else { "FAIL" },
            r.id,
            r.name,
            r.elapsed.as_secs_f64()
        )
        .unwrap();
        if !pass {
            failed.push(r.id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
