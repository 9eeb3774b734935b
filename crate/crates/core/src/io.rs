//! CSV interchange, keyword vectorization, instance pruning and model files.
//!
//! ```text
//! reports.csv   report_id,<kw1>,...,<kwK>
//! tweets.csv    user_id,tweet_id,<kw1>,...,<kwK>
//! labels.csv    user_id,label
//! scores.csv    user_id,score
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MidaError, Result};
use crate::model::{Coefficients, Dataset, Hyperparams, KeywordVocabulary, ReportSet, UserBag};
use crate::solver::{Model, SolveTrace, TraceSummary};

pub const MODEL_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MidaError + '_ {
    move |source| MidaError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> MidaError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => MidaError::Io { path: path.to_path_buf(), source },
        other => MidaError::Parse {
            file: path.to_path_buf(),
            line,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec));
    }
    Ok(Table { path: path.to_path_buf(), header, rows })
}

impl Table {
    fn parse_error(&self, line: u64, column: &str, message: impl Into<String>) -> MidaError {
        MidaError::Parse {
            file: self.path.clone(),
            line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    /// Checks the leading id columns and returns the keyword columns.
    fn split_header(&self, leading: &[&str]) -> Result<Vec<String>> {
        for (i, want) in leading.iter().enumerate() {
            match self.header.get(i) {
                Some(h) if h == want => {}
                Some(h) => return Err(self.parse_error(1, h, format!("expected column `{want}`"))),
                None => return Err(self.parse_error(1, want, "missing column")),
            }
        }
        Ok(self.header[leading.len()..].to_vec())
    }

    fn expect_keywords(&self, leading: &[&str], vocab: &KeywordVocabulary) -> Result<()> {
        let kws = self.split_header(leading)?;
        for (i, kw) in vocab.keywords().iter().enumerate() {
            match kws.get(i) {
                Some(h) if h.to_lowercase() == *kw => {}
                Some(h) => return Err(self.parse_error(1, h, format!("expected keyword column `{kw}`"))),
                None => return Err(self.parse_error(1, kw, "missing column")),
            }
        }
        if let Some(extra) = kws.get(vocab.len()) {
            return Err(self.parse_error(1, extra, "column not in vocabulary"));
        }
        Ok(())
    }

    fn count(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<u32> {
        let name = &self.header[col];
        let cell = rec.get(col).ok_or_else(|| self.parse_error(line, name, "missing cell"))?;
        cell.parse::<u32>()
            .map_err(|_| self.parse_error(line, name, format!("`{cell}` is not a non-negative integer count")))
    }

    fn counts(&self, rows: &[&(u64, csv::StringRecord)], offset: usize, width: usize) -> Result<Array2<u32>> {
        let mut out = Array2::zeros((rows.len(), width));
        for (r, (line, rec)) in rows.iter().enumerate() {
            for j in 0..width {
                out[[r, j]] = self.count(*line, rec, offset + j)?;
            }
        }
        Ok(out)
    }
}

/// Keyword columns of a tweets file, in order.
pub fn read_tweet_vocabulary(path: &Path) -> Result<KeywordVocabulary> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let table = Table { path: path.to_path_buf(), header: header.iter().map(String::from).collect(), rows: vec![] };
    let kws = table.split_header(&["user_id", "tweet_id"])?;
    KeywordVocabulary::new(kws).map_err(|e| table.parse_error(1, "", e.to_string()))
}

pub fn load_reports(path: &Path, vocab: &KeywordVocabulary) -> Result<ReportSet> {
    let table = read_table(path)?;
    table.expect_keywords(&["report_id"], vocab)?;
    let rows: Vec<_> = table.rows.iter().collect();
    Ok(ReportSet::new(table.counts(&rows, 1, vocab.len())?))
}

/// Per-user labels in file order.
pub fn load_labels(path: &Path) -> Result<Vec<(String, u8)>> {
    let table = read_table(path)?;
    table.split_header(&["user_id", "label"])?;
    let mut seen = HashMap::new();
    let mut dups = Vec::new();
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let user = rec.get(0).unwrap_or_default().to_string();
        let label = match rec.get(1) {
            Some("0") => 0,
            Some("1") => 1,
            other => {
                return Err(table.parse_error(*line, "label", format!("`{}` is not 0 or 1", other.unwrap_or(""))))
            }
        };
        if seen.insert(user.clone(), *line).is_some() {
            dups.push(user.clone());
        }
        out.push((user, label));
    }
    if !dups.is_empty() {
        return Err(MidaError::Validation {
            file: path.to_path_buf(),
            message: "duplicate label rows".into(),
            offenders: dups,
        });
    }
    Ok(out)
}

type Group<'a> = Vec<&'a (u64, csv::StringRecord)>;

fn group_by_user(table: &Table) -> (Vec<&str>, HashMap<&str, Group<'_>>) {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Group<'_>> = HashMap::new();
    for row in &table.rows {
        let user = row.1.get(0).unwrap_or_default();
        groups
            .entry(user)
            .or_insert_with(|| {
                order.push(user);
                Vec::new()
            })
            .push(row);
    }
    (order, groups)
}

/// Per-user count matrices from a tweets file, without labels.
pub fn load_tweets(path: &Path, vocab: &KeywordVocabulary) -> Result<Vec<(String, Array2<u32>)>> {
    let table = read_table(path)?;
    table.expect_keywords(&["user_id", "tweet_id"], vocab)?;
    let (order, groups) = group_by_user(&table);
    order
        .iter()
        .map(|&u| Ok((u.to_string(), table.counts(&groups[u], 2, vocab.len())?)))
        .collect()
}

/// Groups tweets by user (first-appearance order, instances in file order)
/// and attaches labels. Every tweeting user needs exactly one label and every
/// labelled user at least one tweet.
pub fn load_bags(tweets_path: &Path, labels_path: &Path, vocab: &KeywordVocabulary) -> Result<Vec<UserBag>> {
    let tweets = load_tweets(tweets_path, vocab)?;
    let labels = load_labels(labels_path)?;
    let label_of: HashMap<&str, u8> = labels.iter().map(|(u, l)| (u.as_str(), *l)).collect();

    let unlabeled: Vec<String> = tweets
        .iter()
        .filter(|(u, _)| !label_of.contains_key(u.as_str()))
        .map(|(u, _)| u.clone())
        .collect();
    if !unlabeled.is_empty() {
        return Err(MidaError::Validation {
            file: labels_path.to_path_buf(),
            message: "users with tweets but no label".into(),
            offenders: unlabeled,
        });
    }
    let tweeting: std::collections::HashSet<&str> = tweets.iter().map(|(u, _)| u.as_str()).collect();
    let empty: Vec<String> = labels
        .iter()
        .filter(|(u, _)| !tweeting.contains(u.as_str()))
        .map(|(u, _)| u.clone())
        .collect();
    if !empty.is_empty() {
        return Err(MidaError::Validation {
            file: tweets_path.to_path_buf(),
            message: "labelled users without tweets".into(),
            offenders: empty,
        });
    }

    tweets
        .into_iter()
        .map(|(u, counts)| {
            let label = label_of[u.as_str()];
            UserBag::new(u, counts, label)
        })
        .collect()
}

/// Reads the three CSVs, taking the vocabulary from the tweets header.
pub fn load_dataset(reports: &Path, tweets: &Path, labels: &Path) -> Result<Dataset> {
    let vocab = read_tweet_vocabulary(tweets)?;
    let bags = load_bags(tweets, labels, &vocab)?;
    let reports = load_reports(reports, &vocab)?;
    Dataset::new(vocab, bags, reports)
}

/// Lowercases, splits on runs of non-alphanumeric characters and counts
/// exact matches against the vocabulary.
pub fn vectorize_text(text: &str, vocab: &KeywordVocabulary) -> Vec<u32> {
    let mut counts = vec![0; vocab.len()];
    for token in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        if let Some(j) = vocab.position(&token.to_lowercase()) {
            counts[j] += 1;
        }
    }
    counts
}

/// Drops all-zero instances, keeping one if nothing else remains.
pub fn prune_bag(bag: &UserBag) -> UserBag {
    let keep: Vec<usize> = (0..bag.n_instances())
        .filter(|&i| bag.counts.row(i).iter().any(|&c| c != 0))
        .collect();
    if keep.len() == bag.n_instances() {
        return bag.clone();
    }
    let keep = if keep.is_empty() { vec![0] } else { keep };
    let counts = bag.counts.select(ndarray::Axis(0), &keep);
    UserBag::new(bag.user_id.clone(), counts, bag.label()).expect("pruned bag keeps a row")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_rows<I>(path: &Path, header: Vec<String>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn with_keywords(lead: &[&str], vocab: &KeywordVocabulary) -> Vec<String> {
    lead.iter().map(|s| s.to_string()).chain(vocab.keywords().iter().cloned()).collect()
}

pub fn save_reports(path: &Path, reports: &ReportSet, vocab: &KeywordVocabulary) -> Result<()> {
    let rows = reports.counts.rows().into_iter().enumerate().map(|(i, r)| {
        std::iter::once(format!("r{i}")).chain(r.iter().map(|c| c.to_string())).collect()
    });
    write_rows(path, with_keywords(&["report_id"], vocab), rows)
}

pub fn save_tweets(path: &Path, bags: &[UserBag], vocab: &KeywordVocabulary) -> Result<()> {
    let rows = bags.iter().flat_map(|b| {
        b.counts.rows().into_iter().enumerate().map(move |(i, r)| {
            [b.user_id.clone(), format!("{}-{i}", b.user_id)]
                .into_iter()
                .chain(r.iter().map(|c| c.to_string()))
                .collect()
        })
    });
    write_rows(path, with_keywords(&["user_id", "tweet_id"], vocab), rows)
}

pub fn save_labels(path: &Path, bags: &[UserBag]) -> Result<()> {
    let rows = bags.iter().map(|b| vec![b.user_id.clone(), b.label().to_string()]);
    write_rows(path, vec!["user_id".into(), "label".into()], rows)
}

/// `user_id,score`, sorted by user id.
pub fn save_scores(path: &Path, scores: &BTreeMap<String, f64>) -> Result<()> {
    let rows = scores.iter().map(|(u, s)| vec![u.clone(), s.to_string()]);
    write_rows(path, vec!["user_id".into(), "score".into()], rows)
}

pub fn load_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let table = read_table(path)?;
    table.split_header(&["user_id", "score"])?;
    let mut out = BTreeMap::new();
    for (line, rec) in &table.rows {
        let cell = rec.get(1).unwrap_or_default();
        let score: f64 = cell
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| table.parse_error(*line, "score", format!("`{cell}` is not a finite number")))?;
        if out.insert(rec.get(0).unwrap_or_default().to_string(), score).is_some() {
            return Err(table.parse_error(*line, "user_id", "duplicate user"));
        }
    }
    Ok(out)
}

/// Single `user_id` column.
pub fn save_user_list<'a, I: IntoIterator<Item = &'a String>>(path: &Path, users: I) -> Result<()> {
    write_rows(path, vec!["user_id".into()], users.into_iter().map(|u| vec![u.clone()]))
}

/// Reads the `user_id` column of any CSV that has one first.
pub fn load_user_list(path: &Path) -> Result<BTreeSet<String>> {
    let table = read_table(path)?;
    table.split_header(&["user_id"])?;
    Ok(table.rows.iter().map(|(_, rec)| rec.get(0).unwrap_or_default().to_string()).collect())
}

/// `k,r_primal,s_dual,rho,objective,seconds`.
pub fn save_trace(path: &Path, trace: &SolveTrace) -> Result<()> {
    let header = ["k", "r_primal", "s_dual", "rho", "objective", "seconds"].map(String::from).to_vec();
    let rows = trace.records.iter().map(|r| {
        vec![
            r.k.to_string(),
            r.r_primal.to_string(),
            r.s_dual.to_string(),
            r.rho.to_string(),
            r.objective.to_string(),
            r.seconds.to_string(),
        ]
    });
    write_rows(path, header, rows)
}

#[derive(Serialize)]
struct Payload<'a> {
    version: u32,
    vocabulary: &'a KeywordVocabulary,
    beta: &'a Coefficients,
    hyperparams: &'a Hyperparams,
    trace_summary: &'a TraceSummary,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    vocabulary: KeywordVocabulary,
    beta: Coefficients,
    hyperparams: Hyperparams,
    trace_summary: TraceSummary,
    checksum: String,
}

fn checksum(p: &Payload<'_>) -> String {
    let bytes = serde_json::to_vec(p).expect("payload serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn model_to_json(model: &Model) -> String {
    let payload = Payload {
        version: MODEL_VERSION,
        vocabulary: &model.vocabulary,
        beta: &model.beta,
        hyperparams: &model.hyper,
        trace_summary: &model.trace_summary,
    };
    let file = ModelFile {
        version: MODEL_VERSION,
        vocabulary: model.vocabulary.clone(),
        beta: model.beta.clone(),
        hyperparams: model.hyper.clone(),
        trace_summary: model.trace_summary.clone(),
        checksum: checksum(&payload),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str) -> Result<Model> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| MidaError::Format(format!("not a model document: {e}")))?;
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(MODEL_VERSION) => {}
        Some(v) => return Err(MidaError::Format(format!("version {v} is not supported (expected {MODEL_VERSION})"))),
        None => return Err(MidaError::Format("missing `version`".into())),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| MidaError::Format(e.to_string()))?;
    let expected = checksum(&Payload {
        version: file.version,
        vocabulary: &file.vocabulary,
        beta: &file.beta,
        hyperparams: &file.hyperparams,
        trace_summary: &file.trace_summary,
    });
    if expected != file.checksum {
        return Err(MidaError::Format("checksum mismatch".into()));
    }
    if file.beta.len() != file.vocabulary.len() + 1 {
        return Err(MidaError::Format(format!(
            "beta has {} entries for {} keywords",
            file.beta.len(),
            file.vocabulary.len()
        )));
    }
    Ok(Model {
        vocabulary: file.vocabulary,
        beta: file.beta,
        hyper: file.hyperparams,
        trace_summary: file.trace_summary,
    })
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(model_to_json(model).as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    model_from_json(&text).map_err(|e| match e {
        MidaError::Format(m) => MidaError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
