//! End-to-end pipeline over the bundled fixture files: ingest, train,
//! persist, reload, and evaluate on both tasks.

use std::path::PathBuf;

use scne::corpus::{BoundaryPolicy, Corpus};
use scne::eval::{
    eval_classification, eval_similarity, ClfProtocol, LabeledTextDataset, SimilarityDataset,
};
use scne::model::{EmbeddingModel, ModelFormat};
use scne::trainer::{train, Mode, TrainConfig};
use scne::vocab::{build_vocab, count_ngrams, Vocab};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn fixtures_drive_the_whole_pipeline() {
    let corpus = Corpus::from_file(&fixture("corpus_toy.txt"), &BoundaryPolicy::default()).unwrap();
    assert_eq!(corpus.n_docs(), 20);

    let config = TrainConfig {
        dim: 16,
        vocab_size: 120,
        n_max: 3,
        n_target: 3,
        negatives: 5,
        epochs: 8,
        lr0: 0.05,
        neg_exponent: 1.0,
        mode: Mode::Scne,
        seed: 13,
        workers: 2,
    };
    let vocab = build_vocab(&count_ngrams(&corpus, config.n_max), config.vocab_size, config.n_max);
    let (model, report) = train(&corpus, &vocab, &config).unwrap();
    assert!(report.pairs_processed > 0);
    assert!(model.is_finite());

    // persist and reload through both formats
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("toy.bin");
    model.save(&bin, ModelFormat::Binary).unwrap();
    let reloaded = EmbeddingModel::load(&bin).unwrap();
    let text = dir.path().join("toy.tsv");
    model.save(&text, ModelFormat::Text).unwrap();
    assert_eq!(
        EmbeddingModel::read_header(&text).unwrap(),
        reloaded.header()
    );

    let sim = SimilarityDataset::from_file(&fixture("similarity_toy.tsv")).unwrap();
    let sim_report = eval_similarity(&reloaded, &sim).unwrap();
    assert_eq!(sim_report.n_pairs, 10);
    assert_eq!(sim_report.coverage_fraction, 1.0);
    assert!(
        sim_report.spearman_rho > 0.0,
        "flank classes should be recoverable, rho = {}",
        sim_report.spearman_rho
    );

    let clf = LabeledTextDataset::from_file(&fixture("classification_toy.tsv")).unwrap();
    let protocol = ClfProtocol {
        repeats: 3,
        seed: 4,
        ..Default::default()
    };
    let clf_report = eval_classification(&reloaded, &clf, &protocol).unwrap();
    assert_eq!(clf_report.coverage_fraction, 1.0);
    assert!(
        clf_report.mean_accuracy > 0.8,
        "classes separated by disjoint character sets should classify, got {}",
        clf_report.mean_accuracy
    );
}

#[test]
fn vocab_tsv_round_trips_through_files() {
    let corpus = Corpus::from_file(&fixture("corpus_toy.txt"), &BoundaryPolicy::default()).unwrap();
    let vocab = build_vocab(&count_ngrams(&corpus, 2), 40, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.tsv");
    vocab.save_tsv(&path).unwrap();
    let loaded = Vocab::load_tsv(&path).unwrap();
    assert_eq!(loaded.entries(), vocab.entries());
}
