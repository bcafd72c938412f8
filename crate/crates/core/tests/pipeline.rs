//! End-to-end training and retrieval on a synthetic labelled corpus.

use corrhash::corpus::Dataset;
use corrhash::encdec::{read_checkpoint, write_checkpoint, Model, ModelShape};
use corrhash::retrieval::{hamming, hash_document, hash_documents, precision_at_k, HashCode, LshHasher, RetrievalIndex};
use corrhash::synthetic::{synthetic_dataset, SyntheticSpec};
use corrhash::tensor::{ParamStore, RngStream};
use corrhash::trainer::{train, TrainConfig};

fn data() -> Dataset {
    let spec = SyntheticSpec {
        docs: 300,
        classes: 3,
        vocab_size: 150,
        doc_len: 40,
        purity: 0.5,
    };
    synthetic_dataset(&spec, 0.1, 0.2, 17)
}

fn config() -> TrainConfig {
    TrainConfig {
        bits: 16,
        rank: 4,
        components: 4,
        hidden: vec![64],
        learning_rate: 0.01,
        batch_size: 20,
        epochs: 60,
        keep_prob: 0.9,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn test_precision<T: corrhash::Scalar>(model: &Model<T>, data: &Dataset) -> f64 {
    let index = RetrievalIndex::build(hash_documents(model, &data.train).unwrap()).unwrap();
    precision_at_k(&hash_documents(model, &data.test).unwrap(), &index, 20).unwrap()
}

#[test]
fn trained_codes_cluster_by_label_and_beat_lsh() {
    let data = data();
    let out = train::<f64>(&config(), &data).unwrap();
    assert!(out.log.iter().all(|e| e.loss.is_finite()));
    assert!(out.best_val_precision.is_some());

    let model_p = test_precision(&out.model, &data);
    let lsh = LshHasher::new(data.vocab_size, 16, 3);
    let index = RetrievalIndex::build(data.train.iter().map(|x| lsh.hash(x)).collect()).unwrap();
    let lsh_p = precision_at_k(&data.test.iter().map(|x| lsh.hash(x)).collect::<Vec<_>>(), &index, 20).unwrap();
    assert!(model_p > 0.8, "model precision {model_p}");
    assert!(model_p > lsh_p, "model {model_p} vs lsh {lsh_p}");

    let codes: Vec<HashCode> = hash_documents(&out.model, &data.test).unwrap();
    let (mut within, mut between) = ((0.0, 0), (0.0, 0));
    for (i, a) in codes.iter().enumerate() {
        for b in &codes[i + 1..] {
            let d = hamming(a, b).unwrap() as f64;
            if a.labels == b.labels {
                within = (within.0 + d, within.1 + 1);
            } else {
                between = (between.0 + d, between.1 + 1);
            }
        }
    }
    let (w, b) = (within.0 / within.1 as f64, between.0 / between.1 as f64);
    assert!(w < b, "within {w} between {b}");
}

#[test]
fn hashing_is_deterministic_and_zero_mean_gives_zero_code() {
    let data = data();
    let mut model = Model::<f64>::new(ModelShape::new(data.vocab_size, vec![8], 12, 2), &mut RngStream::new(1));
    let x = &data.test[0];
    assert_eq!(hash_document(&model, x).unwrap(), hash_document(&model, x).unwrap());
    for p in model.params_mut() {
        p.value.fill(0.0);
    }
    let code = hash_document(&model, x).unwrap();
    assert!(code.words().iter().all(|&w| w == 0));
}

#[test]
fn single_precision_training_and_checkpoint_round_trip() {
    let data = data();
    let cfg = TrainConfig {
        epochs: 3,
        ..config()
    };
    let out = train::<f32>(&cfg, &data).unwrap();
    assert!(out.step_losses.iter().all(|l| l.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    write_checkpoint(&out.model, &path).unwrap();
    let back: Model<f32> = read_checkpoint(&path).unwrap();
    assert_eq!(
        hash_documents(&back, &data.test).unwrap(),
        hash_documents(&out.model, &data.test).unwrap()
    );
    let wide: Model<f64> = read_checkpoint(&path).unwrap();
    assert_eq!(test_precision(&wide, &data), test_precision(&out.model, &data));
}
