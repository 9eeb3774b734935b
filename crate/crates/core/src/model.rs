//! Data model for bags of keyword-count instances, the max-rule logistic
//! loss, and the full regularized objective.
//!
//! A user's bag holds one row of keyword counts per message. The design
//! matrix prepends an all-ones column so that `beta[0]` acts as the
//! intercept and `beta[j + 1]` weighs keyword `j`. A bag is scored by its
//! best instance: `p_u = sigmoid(max_i x_i . beta)`.

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{MidaError, Result};
use crate::mmd::{self, MmdWeights};

/// Ordered keyword list; column `j` of every count matrix refers to `keywords[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct KeywordVocabulary {
    keywords: Vec<String>,
}

impl KeywordVocabulary {
    /// Keywords are lowercased; duplicates (after lowercasing) and empty
    /// vocabularies are rejected.
    pub fn new<I, S>(keywords: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let keywords: Vec<String> = keywords
            .into_iter()
            .map(|k| k.as_ref().trim().to_lowercase())
            .collect();
        if keywords.is_empty() {
            return Err(MidaError::Config("vocabulary must contain at least one keyword".into()));
        }
        let mut seen = HashSet::with_capacity(keywords.len());
        let mut dups = Vec::new();
        for k in &keywords {
            if k.is_empty() {
                return Err(MidaError::Config("vocabulary contains an empty keyword".into()));
            }
            if !seen.insert(k.as_str()) {
                dups.push(k.clone());
            }
        }
        if !dups.is_empty() {
            return Err(MidaError::Config(format!("duplicate keywords: {}", dups.join(", "))));
        }
        Ok(KeywordVocabulary { keywords })
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn position(&self, keyword: &str) -> Option<usize> {
        self.keywords.iter().position(|k| k == keyword)
    }
}

impl TryFrom<Vec<String>> for KeywordVocabulary {
    type Error = MidaError;

    fn try_from(value: Vec<String>) -> Result<Self> {
        KeywordVocabulary::new(value)
    }
}

impl From<KeywordVocabulary> for Vec<String> {
    fn from(v: KeywordVocabulary) -> Self {
        v.keywords
    }
}

/// One user's messages as keyword counts (`n_u x |K|`) plus the bag label.
#[derive(Debug, Clone, PartialEq)]
pub struct UserBag {
    pub user_id: String,
    pub counts: Array2<u32>,
    label: u8,
}

impl UserBag {
    pub fn new(user_id: impl Into<String>, counts: Array2<u32>, label: u8) -> Result<Self> {
        let user_id = user_id.into();
        if label > 1 {
            return Err(MidaError::Config(format!(
                "label for `{user_id}` must be 0 or 1, got {label}"
            )));
        }
        if counts.nrows() == 0 {
            return Err(MidaError::EmptyBag { user_id: Some(user_id) });
        }
        Ok(UserBag { user_id, counts, label })
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }

    pub fn n_instances(&self) -> usize {
        self.counts.nrows()
    }

    pub fn width(&self) -> usize {
        self.counts.ncols()
    }
}

/// `X_u = [1, D_u]`, shape `n_u x (|K| + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(Array2<f64>);

impl DesignMatrix {
    pub fn from_counts(counts: ArrayView2<u32>) -> Self {
        let (n, k) = counts.dim();
        let mut x = Array2::<f64>::ones((n, k + 1));
        for ((i, j), &c) in counts.indexed_iter() {
            x[[i, j + 1]] = f64::from(c);
        }
        DesignMatrix(x)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Source-domain reports (`r x |K|`). All reports are implicitly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSet {
    pub counts: Array2<u32>,
}

impl ReportSet {
    pub fn new(counts: Array2<u32>) -> Self {
        ReportSet { counts }
    }

    /// A set with no reports; the MMD term vanishes.
    pub fn empty(width: usize) -> Self {
        ReportSet {
            counts: Array2::zeros((0, width)),
        }
    }

    pub fn len(&self) -> usize {
        self.counts.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.counts.ncols()
    }
}

/// Decision vector: `beta[0]` is the intercept, `beta[j + 1]` the weight of keyword `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Coefficients(Array1<f64>);

impl Coefficients {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(MidaError::dimension("coefficients", 1, 0));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MidaError::Divergence {
                iteration: None,
                message: format!("coefficient {i} is not finite"),
            });
        }
        Ok(Coefficients(values))
    }

    pub fn zeros(n_keywords: usize) -> Self {
        Coefficients(Array1::zeros(n_keywords + 1))
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        Coefficients::new(Array1::from(values))
    }

    pub fn intercept(&self) -> f64 {
        self.0[0]
    }

    /// Keyword weights `beta[1..]`.
    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.0.slice(ndarray::s![1..])
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array1<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_keywords(&self) -> usize {
        self.0.len() - 1
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|b| b.abs()).sum()
    }
}

impl TryFrom<Vec<f64>> for Coefficients {
    type Error = MidaError;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Coefficients::from_vec(value)
    }
}

impl From<Coefficients> for Vec<f64> {
    fn from(c: Coefficients) -> Self {
        c.0.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// l1 weight on the whole coefficient vector, intercept included.
    pub lambda1: f64,
    /// Weight of the generalized MMD term.
    pub lambda2: f64,
    /// Initial ADMM penalty.
    pub rho0: f64,
    /// Number of partitions used to approximate the MMD weights.
    pub partitions: usize,
    /// Step size of the scalar FISTA solve in the S-update.
    pub eta: f64,
    pub max_outer: usize,
    pub max_fista: usize,
    pub max_ccp: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub adaptive_rho: bool,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda1: 0.01,
            lambda2: 1.0,
            rho0: 20.0,
            partitions: 100,
            eta: 1.0,
            max_outer: 20,
            max_fista: 5000,
            max_ccp: 50,
            tol_abs: 1e-6,
            tol_rel: 1e-6,
            adaptive_rho: false,
            seed: 0,
        }
    }
}

impl Hyperparams {
    /// Rejects out-of-range values. Returns warnings for settings that are
    /// legal but known to destabilize the solver.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |what: &str| Err(MidaError::Config(what.to_string()));
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1 must be positive");
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad("lambda2 must be non-negative");
        }
        if !(self.rho0 > 0.0 && self.rho0.is_finite()) {
            return bad("rho0 must be positive");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.partitions == 0 || self.max_outer == 0 || self.max_fista == 0 || self.max_ccp == 0 {
            return bad("partitions and iteration caps must be at least 1");
        }
        let mut warnings = Vec::new();
        if let Some(w) = rho_stability_warning(self.rho0, self.lambda2) {
            warnings.push(w);
        }
        Ok(warnings)
    }
}

pub(crate) fn rho_stability_warning(rho: f64, lambda2: f64) -> Option<String> {
    (lambda2 > 0.0 && rho < 10.0 * lambda2).then(|| {
        format!("rho = {rho} is below 10 * lambda2 = {}; the beta-update may diverge", 10.0 * lambda2)
    })
}

/// Users, their labels, and the report set over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocabulary: KeywordVocabulary,
    pub bags: Vec<UserBag>,
    pub reports: ReportSet,
}

impl Dataset {
    pub fn new(vocabulary: KeywordVocabulary, bags: Vec<UserBag>, reports: ReportSet) -> Result<Self> {
        let k = vocabulary.len();
        for bag in &bags {
            if bag.width() != k {
                return Err(MidaError::dimension(format!("bag `{}`", bag.user_id), k, bag.width()));
            }
        }
        if reports.width() != k {
            return Err(MidaError::dimension("report set", k, reports.width()));
        }
        Ok(Dataset { vocabulary, bags, reports })
    }

    pub fn n_keywords(&self) -> usize {
        self.vocabulary.len()
    }

    /// Indices (into `bags`) of the positive users `U_p`.
    pub fn positive_users(&self) -> Vec<usize> {
        self.bags
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_positive())
            .map(|(i, _)| i)
            .collect()
    }

    /// Restricts the dataset to the given bag indices, keeping their order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            vocabulary: self.vocabulary.clone(),
            bags: indices.iter().map(|&i| self.bags[i].clone()).collect(),
            reports: self.reports.clone(),
        }
    }
}

pub fn build_design_matrix(bag: &UserBag, vocabulary: &KeywordVocabulary) -> Result<DesignMatrix> {
    if bag.width() != vocabulary.len() {
        return Err(MidaError::dimension(
            format!("bag `{}` vs vocabulary", bag.user_id),
            vocabulary.len(),
            bag.width(),
        ));
    }
    Ok(DesignMatrix::from_counts(bag.counts.view()))
}

/// Linear scores `X_{u,i} . beta`, one per instance.
pub fn instance_scores(x: &DesignMatrix, beta: &Coefficients) -> Result<Array1<f64>> {
    if x.ncols() != beta.len() {
        return Err(MidaError::dimension("instance scores", x.ncols(), beta.len()));
    }
    Ok(x.view().dot(beta.as_array()))
}

/// Index of the highest score; the lowest index wins ties.
pub fn select_representative(scores: ArrayView1<f64>) -> Result<usize> {
    let mut iter = scores.iter().enumerate();
    let (mut best, mut best_score) = match iter.next() {
        Some((i, &s)) => (i, s),
        None => return Err(MidaError::EmptyBag { user_id: None }),
    };
    for (i, &s) in iter {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
pub fn log1p_exp(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Log loss at a representative score: `ln(1 + e^s) - y s`.
pub fn loss_at_score(s: f64, y: f64) -> f64 {
    log1p_exp(s) - y * s
}

fn representative_score(x: &DesignMatrix, beta: &Coefficients, user_id: &str) -> Result<f64> {
    let scores = instance_scores(x, beta)?;
    let i = select_representative(scores.view()).map_err(|_| MidaError::EmptyBag {
        user_id: Some(user_id.to_string()),
    })?;
    Ok(scores[i])
}

/// Max-rule bag probability `sigmoid(max_i X_{u,i} . beta)`.
pub fn user_probability(beta: &Coefficients, bag: &UserBag) -> Result<f64> {
    let x = DesignMatrix::from_counts(bag.counts.view());
    Ok(sigmoid(representative_score(&x, beta, &bag.user_id)?))
}

pub fn user_loss(beta: &Coefficients, bag: &UserBag) -> Result<f64> {
    let x = DesignMatrix::from_counts(bag.counts.view());
    let s = representative_score(&x, beta, &bag.user_id)?;
    Ok(loss_at_score(s, f64::from(bag.label())))
}

/// `sum_u Loss_u + lambda1 ||beta||_1 + lambda2 Dist^2`, with the MMD weights
/// supplied by the caller (they depend on the representative indices).
pub fn full_objective(
    beta: &Coefficients,
    data: &Dataset,
    weights: &MmdWeights,
    hyper: &Hyperparams,
) -> Result<f64> {
    if beta.n_keywords() != data.n_keywords() {
        return Err(MidaError::dimension("objective", data.n_keywords() + 1, beta.len()));
    }
    let mut loss = 0.0;
    for bag in &data.bags {
        loss += user_loss(beta, bag)?;
    }
    objective_from_parts(loss, beta, weights, hyper)
}

pub(crate) fn objective_from_parts(
    loss: f64,
    beta: &Coefficients,
    weights: &MmdWeights,
    hyper: &Hyperparams,
) -> Result<f64> {
    let mut value = loss + hyper.lambda1 * beta.l1_norm();
    if hyper.lambda2 != 0.0 {
        value += hyper.lambda2 * mmd::mmd_distance(beta, weights)?;
    }
    if !value.is_finite() {
        return Err(MidaError::Divergence {
            iteration: None,
            message: "objective is not finite".into(),
        });
    }
    Ok(value)
}
