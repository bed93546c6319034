//! Evaluation protocols: rank-correlation similarity scoring against human
//! judgments, and downstream classification with a logistic regression on
//! composed vectors. Out-of-vocabulary items follow the null-vector
//! convention: a pair with an uncomposable side scores cosine 0 instead of
//! being dropped, keeping methods with different coverage comparable.

mod logreg;

pub use logreg::{train_logreg, LogisticRegression};

use std::fs;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{cosine, EmbeddingModel};
use crate::trainer::derive_seed;

const STREAM_SPLIT: u64 = 101;

/// Item pairs with human similarity scores.
#[derive(Debug, Clone)]
pub struct SimilarityDataset {
    pub name: String,
    pub rows: Vec<SimilarityPair>,
}

#[derive(Debug, Clone)]
pub struct SimilarityPair {
    pub item1: String,
    pub item2: String,
    pub score: f64,
}

impl SimilarityDataset {
    /// Reads `item1 \t item2 \t score` rows; `#`-comment and blank lines
    /// are ignored.
    pub fn from_file(path: &Path) -> Result<SimilarityDataset> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "similarity".into());
        SimilarityDataset::parse(&name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<SimilarityDataset> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!(
                    "{name}:{}: expected `item1\\titem2\\tscore`, got {} fields",
                    lineno + 1,
                    fields.len()
                )));
            }
            let score: f64 = fields[2].parse().map_err(|_| {
                Error::Format(format!("{name}:{}: bad score `{}`", lineno + 1, fields[2]))
            })?;
            if !score.is_finite() {
                return Err(Error::Format(format!(
                    "{name}:{}: score must be finite",
                    lineno + 1
                )));
            }
            rows.push(SimilarityPair {
                item1: fields[0].to_string(),
                item2: fields[1].to_string(),
                score,
            });
        }
        if rows.len() < 2 {
            return Err(Error::Dataset(format!(
                "{name}: need at least 2 pairs, got {}",
                rows.len()
            )));
        }
        Ok(SimilarityDataset {
            name: name.to_string(),
            rows,
        })
    }
}

/// Labeled texts for downstream classification.
#[derive(Debug, Clone)]
pub struct LabeledTextDataset {
    pub rows: Vec<(String, String)>,
}

impl LabeledTextDataset {
    /// Reads `label \t text` rows; `#`-comment and blank lines are ignored.
    pub fn from_file(path: &Path) -> Result<LabeledTextDataset> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        LabeledTextDataset::parse(&text)
    }

    pub fn parse(text: &str) -> Result<LabeledTextDataset> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, body) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!("line {}: expected `label\\ttext`", lineno + 1))
            })?;
            rows.push((label.to_string(), body.to_string()));
        }
        if rows.is_empty() {
            return Err(Error::Dataset("no labeled rows".into()));
        }
        Ok(LabeledTextDataset { rows })
    }
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Invalid(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Invalid("need at least 2 points".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation inputs".into()));
    }
    if xs.iter().all(|&v| v == xs[0]) {
        return Err(Error::DegenerateRanking(
            "first list has zero variance".into(),
        ));
    }
    if ys.iter().all(|&v| v == ys[0]) {
        return Err(Error::DegenerateRanking(
            "second list has zero variance".into(),
        ));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    Ok(pearson(&rx, &ry))
}

/// 1-based ranks; runs of equal values share the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = shared;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Similarity-task result.
#[derive(Debug, Clone, Serialize)]
pub struct SimilarityReport {
    pub dataset: String,
    pub spearman_rho: f64,
    pub n_pairs: usize,
    /// Pairs where at least one side composed to nothing.
    pub oov_pair_count: usize,
    /// Fraction of item slots (two per pair) that composed to something.
    pub coverage_fraction: f64,
}

/// Scores model cosine similarities against the human scores. Pairs with an
/// uncomposable side enter the correlation with cosine 0.
pub fn eval_similarity(
    model: &EmbeddingModel,
    dataset: &SimilarityDataset,
) -> Result<SimilarityReport> {
    let mut model_scores = Vec::with_capacity(dataset.rows.len());
    let mut human_scores = Vec::with_capacity(dataset.rows.len());
    let mut oov_pair_count = 0;
    let mut covered_slots = 0usize;
    for pair in &dataset.rows {
        let a = model.compose(&pair.item1);
        let b = model.compose(&pair.item2);
        covered_slots += usize::from(!a.is_empty()) + usize::from(!b.is_empty());
        if a.is_empty() || b.is_empty() {
            oov_pair_count += 1;
            model_scores.push(0.0);
        } else {
            model_scores.push(cosine(&a.vector, &b.vector));
        }
        human_scores.push(pair.score);
    }
    if oov_pair_count == dataset.rows.len() {
        return Err(Error::Dataset(format!(
            "{}: every pair has a side with no in-vocabulary sub-n-grams",
            dataset.name
        )));
    }
    let spearman_rho = spearman(&model_scores, &human_scores)?;
    Ok(SimilarityReport {
        dataset: dataset.name.clone(),
        spearman_rho,
        n_pairs: dataset.rows.len(),
        oov_pair_count,
        coverage_fraction: covered_slots as f64 / (2 * dataset.rows.len()) as f64,
    })
}

/// Classification protocol constants: repeated random 60/40 splits with a
/// 3-fold cross-validated grid search for the regularization parameter.
#[derive(Debug, Clone, Serialize)]
pub struct ClfProtocol {
    pub repeats: usize,
    pub train_frac: f64,
    pub cv_folds: usize,
    pub c_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for ClfProtocol {
    fn default() -> ClfProtocol {
        ClfProtocol {
            repeats: 10,
            train_frac: 0.6,
            cv_folds: 3,
            c_grid: vec![0.1, 0.5, 1.0, 5.0, 10.0],
            seed: 42,
        }
    }
}

impl ClfProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(Error::Invalid("repeats must be at least 1".into()));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::Invalid(format!(
                "train_frac must lie in (0, 1), got {}",
                self.train_frac
            )));
        }
        if self.cv_folds < 2 {
            return Err(Error::Invalid("cv_folds must be at least 2".into()));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return Err(Error::Invalid("c_grid must hold positive values".into()));
        }
        Ok(())
    }
}

/// Classification-task result.
#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub accuracies: Vec<f64>,
    /// Regularization parameter chosen by cross-validation per repeat.
    pub chosen_c: Vec<f64>,
    /// Fraction of texts that composed to something.
    pub coverage_fraction: f64,
}

/// Composes features for every text, then repeats: a fresh seed-derived
/// train/test split, hyperparameter selection by cross-validation inside
/// the train set, a refit, and a test-accuracy measurement.
pub fn eval_classification(
    model: &EmbeddingModel,
    dataset: &LabeledTextDataset,
    protocol: &ClfProtocol,
) -> Result<ClassificationReport> {
    protocol.validate()?;
    let n = dataset.rows.len();
    if n < 2 {
        return Err(Error::Dataset("need at least 2 texts".into()));
    }
    let mut label_names: Vec<&str> = dataset.rows.iter().map(|(l, _)| l.as_str()).collect();
    label_names.sort_unstable();
    label_names.dedup();
    if label_names.len() < 2 {
        return Err(Error::Dataset(
            "classification needs at least 2 distinct labels".into(),
        ));
    }
    let labels: Vec<usize> = dataset
        .rows
        .iter()
        .map(|(l, _)| label_names.binary_search(&l.as_str()).unwrap())
        .collect();
    let n_classes = label_names.len();

    let mut covered = 0usize;
    let features: Vec<Vec<f64>> = dataset
        .rows
        .iter()
        .map(|(_, text)| {
            let c = model.compose(text);
            covered += usize::from(!c.is_empty());
            c.vector.iter().map(|&x| x as f64).collect()
        })
        .collect();
    if features.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("composed features".into()));
    }

    let n_train = ((n as f64 * protocol.train_frac).round() as usize).clamp(1, n - 1);
    let mut accuracies = Vec::with_capacity(protocol.repeats);
    let mut chosen_c = Vec::with_capacity(protocol.repeats);
    for repeat in 0..protocol.repeats {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(protocol.seed, STREAM_SPLIT, repeat as u64));
        let mut indices: Vec<usize> = (0..n).collect();
        let mut split_ok = false;
        for _attempt in 0..100 {
            indices.shuffle(&mut rng);
            let mut seen = vec![false; n_classes];
            for &i in &indices[..n_train] {
                seen[labels[i]] = true;
            }
            if seen.iter().all(|&s| s) {
                split_ok = true;
                break;
            }
        }
        if !split_ok {
            return Err(Error::Dataset(
                "a class is missing from every sampled training split".into(),
            ));
        }
        let (train_idx, test_idx) = indices.split_at(n_train);

        // 3-fold cross-validation over the C grid inside the train set
        let mut best_c = protocol.c_grid[0];
        let mut best_acc = f64::NEG_INFINITY;
        for &c in &protocol.c_grid {
            let mut fold_accs = Vec::with_capacity(protocol.cv_folds);
            for fold in 0..protocol.cv_folds {
                let mut fit_x = Vec::new();
                let mut fit_y = Vec::new();
                let mut val_x = Vec::new();
                let mut val_y = Vec::new();
                for (pos, &i) in train_idx.iter().enumerate() {
                    if pos % protocol.cv_folds == fold {
                        val_x.push(features[i].clone());
                        val_y.push(labels[i]);
                    } else {
                        fit_x.push(features[i].clone());
                        fit_y.push(labels[i]);
                    }
                }
                if val_x.is_empty() || distinct_count(&fit_y) < 2 {
                    continue;
                }
                let clf = train_logreg(&fit_x, &fit_y, c, protocol.seed)?;
                fold_accs.push(accuracy(&clf, &val_x, &val_y));
            }
            if fold_accs.is_empty() {
                return Err(Error::Dataset(
                    "every cross-validation fold was degenerate".into(),
                ));
            }
            let mean = fold_accs.iter().sum::<f64>() / fold_accs.len() as f64;
            if mean > best_acc {
                best_acc = mean;
                best_c = c;
            }
        }

        let fit_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| features[i].clone()).collect();
        let fit_y: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
        let clf = train_logreg(&fit_x, &fit_y, best_c, protocol.seed)?;
        let test_x: Vec<Vec<f64>> = test_idx.iter().map(|&i| features[i].clone()).collect();
        let test_y: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
        accuracies.push(accuracy(&clf, &test_x, &test_y));
        chosen_c.push(best_c);
    }

    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
        / accuracies.len() as f64;
    Ok(ClassificationReport {
        mean_accuracy: mean,
        std_accuracy: var.sqrt(),
        accuracies,
        chosen_c,
        coverage_fraction: covered as f64 / n as f64,
    })
}

fn distinct_count(labels: &[usize]) -> usize {
    let mut sorted = labels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len()
}

fn accuracy(clf: &LogisticRegression, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let hits = clf
        .predict_batch(xs)
        .iter()
        .zip(ys)
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / ys.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::{build_vocab, FreqTable};

    #[test]
    fn spearman_basics() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&xs, &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        let ranks = average_ranks(&[2.0, 1.0, 2.0, 5.0]);
        assert_eq!(ranks, vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(Error::Invalid(_))
        ));
        assert!(matches!(
            spearman(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::DegenerateRanking(_))
        ));
        assert!(matches!(
            spearman(&[1.0, 2.0], &[3.0, 3.0]),
            Err(Error::DegenerateRanking(_))
        ));
    }

    fn tiny_model() -> EmbeddingModel {
        let table: FreqTable = [("a", 6u64), ("b", 5), ("c", 4), ("ab", 3), ("bc", 2)]
            .iter()
            .map(|(g, f)| (g.to_string(), *f))
            .collect();
        EmbeddingModel::init(build_vocab(&table, 10, 2), 8, 3)
    }

    #[test]
    fn similarity_dataset_parsing() {
        let ds = SimilarityDataset::parse(
            "toy",
            "# comment\nab\tbc\t0.9\n\nc\ta\t0.1\n",
        )
        .unwrap();
        assert_eq!(ds.rows.len(), 2);
        assert!(SimilarityDataset::parse("bad", "a\tb\t0.5\n").is_err()); // one row
        assert!(SimilarityDataset::parse("bad", "a\tb\tx\na\tb\t1\n").is_err());
        assert!(SimilarityDataset::parse("bad", "a\tb\na\tb\t1\n").is_err());
    }

    #[test]
    fn similarity_applies_null_vector_convention() {
        let model = tiny_model();
        let ds = SimilarityDataset::parse(
            "toy",
            "ab\tb\t1.0\nzz\tb\t0.5\nc\tab\t0.2\n",
        )
        .unwrap();
        let report = eval_similarity(&model, &ds).unwrap();
        assert_eq!(report.n_pairs, 3);
        assert_eq!(report.oov_pair_count, 1);
        // 5 of 6 item slots composed
        assert!((report.coverage_fraction - 5.0 / 6.0).abs() < 1e-12);
        assert!(report.spearman_rho >= -1.0 && report.spearman_rho <= 1.0);
    }

    #[test]
    fn similarity_full_coverage_is_one() {
        let model = tiny_model();
        let ds = SimilarityDataset::parse("toy", "ab\tb\t1.0\nc\ta\t0.3\nbc\tab\t0.6\n").unwrap();
        let report = eval_similarity(&model, &ds).unwrap();
        assert_eq!(report.oov_pair_count, 0);
        assert_eq!(report.coverage_fraction, 1.0);
    }

    #[test]
    fn similarity_all_oov_is_an_error() {
        let model = tiny_model();
        let ds = SimilarityDataset::parse("toy", "zz\tyy\t1.0\nxx\tzz\t0.5\n").unwrap();
        assert!(matches!(
            eval_similarity(&model, &ds),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn similarity_rho_is_scale_invariant() {
        let model = tiny_model();
        let ds = SimilarityDataset::parse("toy", "ab\tb\t1.0\nc\ta\t0.3\nbc\tab\t0.6\n").unwrap();
        let base = eval_similarity(&model, &ds).unwrap();
        // uniformly scaling all embeddings leaves cosine, hence rho, unchanged
        let (vocab, dim, emb, ctx) = model.into_parts();
        let scaled = EmbeddingModel::from_parts(
            vocab,
            dim,
            emb.iter().map(|x| x * 7.5).collect(),
            ctx,
        );
        let report = eval_similarity(&scaled, &ds).unwrap();
        assert!((report.spearman_rho - base.spearman_rho).abs() < 1e-12);
    }

    /// `tiny_model` with embeddings scaled to unit-order magnitude so the
    /// composed features are separable at the protocol's C grid.
    fn scaled_model() -> EmbeddingModel {
        let (vocab, dim, emb, ctx) = tiny_model().into_parts();
        EmbeddingModel::from_parts(vocab, dim, emb.iter().map(|x| x * 40.0).collect(), ctx)
    }

    /// Synthetic labeled dataset whose label is a linear function of the
    /// composed features, with a margin between the classes.
    fn planted_dataset(model: &EmbeddingModel, n: usize) -> LabeledTextDataset {
        let vocab_strings = ["a", "b", "c", "ab", "bc"];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dim = model.dim();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut rows = Vec::new();
        while rows.len() < n {
            let len = rng.gen_range(1..=4);
            let text: String = (0..len)
                .map(|_| vocab_strings[rng.gen_range(0..vocab_strings.len())])
                .collect();
            let composed = model.compose(&text);
            let score: f64 = composed
                .vector
                .iter()
                .zip(&w)
                .map(|(&x, &wk)| x as f64 * wk)
                .sum();
            if score.abs() < 1.0 {
                continue;
            }
            let label = if score > 0.0 { "pos" } else { "neg" };
            rows.push((label.to_string(), text));
        }
        LabeledTextDataset { rows }
    }

    #[test]
    fn planted_signal_is_learnable() {
        let model = scaled_model();
        let ds = planted_dataset(&model, 200);
        let protocol = ClfProtocol {
            repeats: 3,
            ..Default::default()
        };
        let report = eval_classification(&model, &ds, &protocol).unwrap();
        assert!(
            report.mean_accuracy >= 0.95,
            "planted signal should be learnable, got {}",
            report.mean_accuracy
        );
        assert_eq!(report.coverage_fraction, 1.0);
        assert_eq!(report.accuracies.len(), 3);
        assert_eq!(report.chosen_c.len(), 3);
    }

    #[test]
    fn random_labels_sit_at_chance() {
        let model = tiny_model();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let strings = ["a", "b", "c", "ab", "bc"];
        let rows: Vec<(String, String)> = (0..400)
            .map(|i| {
                let len = rng.gen_range(1..=4);
                let text: String = (0..len)
                    .map(|_| strings[rng.gen_range(0..strings.len())])
                    .collect();
                let label = if i % 2 == 0 { "x" } else { "y" };
                (label.to_string(), text)
            })
            .collect();
        let ds = LabeledTextDataset { rows };
        let report = eval_classification(&model, &ds, &ClfProtocol::default()).unwrap();
        assert!(
            (report.mean_accuracy - 0.5).abs() <= 0.05,
            "random labels should score near chance, got {}",
            report.mean_accuracy
        );
    }

    #[test]
    fn classification_is_reproducible_for_a_seed() {
        let model = scaled_model();
        let ds = planted_dataset(&model, 80);
        let protocol = ClfProtocol {
            repeats: 1,
            seed: 9,
            ..Default::default()
        };
        let a = eval_classification(&model, &ds, &protocol).unwrap();
        let b = eval_classification(&model, &ds, &protocol).unwrap();
        assert_eq!(a.accuracies, b.accuracies);
        assert_eq!(a.chosen_c, b.chosen_c);
        assert_eq!(a.mean_accuracy, b.mean_accuracy);
    }

    #[test]
    fn classification_rejects_single_class() {
        let model = tiny_model();
        let rows = vec![
            ("same".to_string(), "ab".to_string()),
            ("same".to_string(), "bc".to_string()),
        ];
        let ds = LabeledTextDataset { rows };
        assert!(matches!(
            eval_classification(&model, &ds, &ClfProtocol::default()),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn protocol_defaults_match_the_documented_constants() {
        let p = ClfProtocol::default();
        assert_eq!(p.repeats, 10);
        assert!((p.train_frac - 0.6).abs() < 1e-12);
        assert_eq!(p.cv_folds, 3);
        assert_eq!(p.c_grid, vec![0.1, 0.5, 1.0, 5.0, 10.0]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // rho is invariant under strictly monotone transforms
            #[test]
            fn monotone_invariance(mut xs in proptest::collection::vec(-100f64..100.0, 3..20)) {
                xs.dedup();
                if xs.len() < 3 { return Ok(()); }
                let ys: Vec<f64> = xs.iter().map(|x| x * 3.0 + 1.0).collect();
                let transformed: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
                let a = spearman(&xs, &ys).unwrap();
                let b = spearman(&transformed, &ys).unwrap();
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
