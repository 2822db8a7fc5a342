use ndarray::Array2;
use tevae::dataset::{load_manifest, load_split, write_dataset};
use tevae::detect::{detect, estimate_threshold, ReverseWindowMethod};
use tevae::metrics::summarize;
use tevae::model::{ModelConfig, TeVae, Variant};
use tevae::preprocess::{apply_norm, fit_norm, window_sequence, Sequence};
use tevae::syndata::{build_dataset, AnomalyCounts, DatasetConfig, Record, Split};
use tevae::train::{fit, TrainConfig};

const WINDOW: usize = 16;

fn small_dataset() -> DatasetConfig {
    DatasetConfig {
        budget_hours: 3.2,
        cycle_classes: 2,
        duration_scale: 0.05,
        anomaly_ratio: 0.5,
        anomalies_per_class: AnomalyCounts {
            wheel_diameter: 1,
            recuperation_off: 1,
            battery_simulator: 1,
            cooling_loss: 1,
        },
        ..DatasetConfig::default()
    }
}

fn windows(seqs: &[Sequence]) -> Vec<Array2<f64>> {
    seqs.iter()
        .flat_map(|s| window_sequence(s, WINDOW, 8).unwrap().windows)
        .collect()
}

fn split(records: &[Record], which: Split) -> Vec<&Record> {
    records.iter().filter(|r| r.meta.split == which).collect()
}

#[test]
fn library_pipeline_from_generator_to_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let records = build_dataset(&small_dataset()).unwrap();
    write_dataset(dir.path(), &records, None).unwrap();
    let manifest = load_manifest(dir.path()).unwrap();
    let test = load_split(dir.path(), &manifest, Split::Test).unwrap();
    let expected = split(&records, Split::Test);
    assert_eq!(test.len(), expected.len());
    for (a, b) in test.iter().zip(&expected) {
        assert_eq!(a.meta, b.meta);
        assert_eq!(a.sequence.channel_names, b.sequence.channel_names);
        assert_eq!(a.sequence.len(), b.sequence.len());
    }

    let raw_train: Vec<Sequence> = split(&records, Split::Train)
        .iter()
        .map(|r| r.sequence.clone())
        .collect();
    let norm = fit_norm(&raw_train).unwrap();
    let prep =
        |rs: Vec<&Record>| -> Vec<Sequence> { rs.iter().map(|r| apply_norm(&r.sequence, &norm).unwrap()).collect() };
    let train = prep(split(&records, Split::Train));
    let val = prep(split(&records, Split::Val));

    let mc = ModelConfig {
        window: WINDOW,
        channels: norm.channels(),
        latent: 4,
        heads: 2,
        key_dim: 6,
        enc_hidden: (8, 4),
        dec_hidden: (4, 8),
        variant: Variant::Tevae,
    };
    let tc = TrainConfig {
        batch_size: 32,
        max_epochs: 2,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    };
    let out = fit(
        &windows(&train),
        &windows(&val),
        TeVae::new(mc.clone(), 0).unwrap(),
        &tc,
    )
    .unwrap();
    assert_eq!(out.history.len(), 2);
    let again = fit(&windows(&train), &windows(&val), TeVae::new(mc, 0).unwrap(), &tc).unwrap();
    assert_eq!(out.history, again.history);

    let method = ReverseWindowMethod::Mean;
    let tau = estimate_threshold(&val, &out.model, method).unwrap().tau;
    for seq in &val {
        assert!(!detect(seq, &out.model, tau, method).unwrap().is_anomalous());
    }

    let (mut outcomes, mut gts) = (Vec::new(), Vec::new());
    for r in &test {
        let seq = apply_norm(&r.sequence, &norm).unwrap();
        let o = detect(&seq, &out.model, tau, method).unwrap();
        assert_eq!(o.first_flagged_step.is_some(), o.root_cause_channel.is_some());
        outcomes.push(o);
        gts.push(r.meta.ground_truth.clone());
    }
    let sum = summarize(&outcomes, &gts, WINDOW, manifest.rate).unwrap();
    let c = sum.counts;
    assert_eq!(c.total(), test.len());
    assert_eq!(c.n_tp + c.n_fp, c.n_tp_rc + c.n_fp_rc);
    assert!(sum.p_rc <= sum.precision);
}
