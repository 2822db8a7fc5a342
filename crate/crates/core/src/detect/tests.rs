use super::*;
use crate::model::{ModelConfig, Variant};
use crate::rng::{fill_standard_normal, seeded};
use proptest::prelude::*;
use rand::Rng;

fn tiny_model(window: usize, seed: u64) -> TeVae {
    let cfg = ModelConfig {
        window,
        channels: 3,
        latent: 2,
        heads: 2,
        key_dim: 1,
        enc_hidden: (4, 3),
        dec_hidden: (3, 4),
        variant: Variant::Tevae,
    };
    TeVae::new(cfg, seed).unwrap()
}

fn random_seq(len: usize, channels: usize, seed: u64) -> Sequence {
    let mut buf = vec![0.0; len * channels];
    fill_standard_normal(&mut seeded(seed), &mut buf);
    let names = (0..channels).map(|c| format!("c{c}")).collect();
    Sequence::new(
        format!("r{seed}"),
        2.0,
        names,
        Array2::from_shape_vec((len, channels), buf).unwrap(),
    )
    .unwrap()
}

fn random_outputs(w: usize, n: usize, d: usize, seed: u64) -> (Array3<f64>, Array3<f64>) {
    let mut rng = seeded(seed);
    let mu = Array3::from_shape_fn((w, n, d), |_| rng.random_range(-3.0..3.0));
    let var = Array3::from_shape_fn((w, n, d), |_| rng.random_range(0.01..5.0));
    (mu, var)
}

fn fold(
    method: ReverseWindowMethod,
    mu: &Array3<f64>,
    var: &Array3<f64>,
    len: usize,
    batch: usize,
) -> (Array2<f64>, Array2<f64>) {
    let (w, n, d) = mu.dim();
    let mut f = ReverseWindower::new(method, w, len, d);
    let mut first = 0;
    while first < n {
        let nb = batch.min(n - first);
        f.push(
            first,
            mu.slice(s![.., first..first + nb, ..]),
            var.slice(s![.., first..first + nb, ..]),
        );
        first += nb;
    }
    f.finish().unwrap()
}

/// For every step, list every window that covers it and average.
fn brute_mean(mu: &Array3<f64>, var: &Array3<f64>, len: usize) -> (Array2<f64>, Array2<f64>) {
    let (w, n, d) = mu.dim();
    let mut m = Array2::zeros((len, d));
    let mut v = Array2::zeros((len, d));
    for t in 0..len {
        let covering: Vec<usize> = (0..n).filter(|&k| k <= t && t < k + w).collect();
        for j in 0..d {
            let sm: f64 = covering.iter().map(|&k| mu[[t - k, k, j]]).sum();
            let sv: f64 = covering.iter().map(|&k| var[[t - k, k, j]]).sum();
            m[[t, j]] = sm / covering.len() as f64;
            v[[t, j]] = sv / covering.len() as f64;
        }
    }
    (m, v)
}

#[test]
fn mean_fold_matches_brute_force() {
    let mut rng = seeded(99);
    for case in 0..100 {
        let w = rng.random_range(1..12);
        let len = w + rng.random_range(0..30);
        let (mu, var) = random_outputs(w, len - w + 1, 2, case);
        let (m, v) = fold(ReverseWindowMethod::Mean, &mu, &var, len, 1 + case as usize % 5);
        let (bm, bv) = brute_mean(&mu, &var, len);
        for (a, b) in m.iter().zip(&bm).chain(v.iter().zip(&bv)) {
            assert!((a - b).abs() <= 1e-12, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn first_and_last_pick_edge_steps() {
    let (w, len) = (4, 9);
    let (mu, var) = random_outputs(w, len - w + 1, 1, 5);
    let last_k = len - w;
    let (first, _) = fold(ReverseWindowMethod::First, &mu, &var, len, 3);
    for t in 0..len {
        let (k, i) = if t <= last_k { (t, 0) } else { (last_k, t - last_k) };
        assert_eq!(first[[t, 0]], mu[[i, k, 0]]);
    }
    let (last, _) = fold(ReverseWindowMethod::Last, &mu, &var, len, 2);
    for t in 0..len {
        let (k, i) = if t >= w - 1 { (t + 1 - w, w - 1) } else { (0, t) };
        assert_eq!(last[[t, 0]], mu[[i, k, 0]]);
    }
}

#[test]
fn averaged_variances_give_pooled_sigma() {
    let mu = Array3::zeros((2, 2, 1));
    let mut var = Array3::zeros((2, 2, 1));
    // step 1 is covered by window 0 (offset 1) and window 1 (offset 0)
    var[[1, 0, 0]] = 4.0;
    var[[0, 1, 0]] = 16.0;
    var[[0, 0, 0]] = 1.0;
    var[[1, 1, 0]] = 1.0;
    let (m, v) = fold(ReverseWindowMethod::Mean, &mu, &var, 3, 2);
    assert_eq!(v[[1, 0]], 10.0);
    let x = Array2::zeros((3, 1));
    let score = gaussian_scores(x.view(), m, v).unwrap();
    assert_eq!(score.sigma[[1, 0]], 10f64.sqrt());
}

#[test]
fn single_window_makes_methods_agree() {
    let model = tiny_model(6, 1);
    let seq = random_seq(6, 3, 2);
    let scores: Vec<_> = ReverseWindowMethod::ALL
        .iter()
        .map(|&m| score_sequence(&seq, &model, m).unwrap())
        .collect();
    assert_eq!(scores[0], scores[1]);
    assert_eq!(scores[1], scores[2]);
}

#[test]
fn scores_satisfy_row_sum_identity() {
    let model = tiny_model(5, 3);
    let seq = random_seq(23, 3, 4);
    for m in ReverseWindowMethod::ALL {
        let sc = score_sequence(&seq, &model, m).unwrap();
        assert_eq!(sc.len(), 23);
        assert!(sc.sigma.iter().all(|&v| v > 0.0));
        for (t, row) in sc.per_channel.rows().into_iter().enumerate() {
            assert!(sc.s[t].is_finite());
            assert!((row.sum() - sc.s[t]).abs() <= 1e-9);
        }
    }
}

#[test]
fn per_channel_nll_matches_closed_form() {
    let x = ndarray::array![[1.0, -2.0]];
    let mu = ndarray::array![[0.5, 0.0]];
    let var = ndarray::array![[4.0, 0.25]];
    let sc = gaussian_scores(x.view(), mu, var).unwrap();
    let nll = |x: f64, m: f64, v: f64| 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m).powi(2) / v);
    assert!((sc.per_channel[[0, 0]] - nll(1.0, 0.5, 4.0)).abs() < 1e-12);
    assert!((sc.per_channel[[0, 1]] - nll(-2.0, 0.0, 0.25)).abs() < 1e-12);
}

#[test]
fn batch_size_does_not_change_scores() {
    let model = tiny_model(7, 5);
    let seq = random_seq(40, 3, 6);
    for m in ReverseWindowMethod::ALL {
        let a = score_sequence_batched(&seq, &model, m, 1).unwrap();
        let b = score_sequence_batched(&seq, &model, m, 9).unwrap();
        let c = score_sequence_batched(&seq, &model, m, 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }
}

#[test]
fn shared_passes_match_single_method_scoring() {
    let model = tiny_model(5, 2);
    let seq = random_seq(30, 3, 8);
    let all = score_sequence_multi(&seq, &model, &ReverseWindowMethod::ALL, 7).unwrap();
    for (m, score) in ReverseWindowMethod::ALL.into_iter().zip(&all) {
        assert_eq!(score, &score_sequence(&seq, &model, m).unwrap());
    }
    assert!(score_sequence_multi(&seq, &model, &[], 7).is_err());
}

#[test]
fn last_type_is_causal() {
    let mut rng = seeded(17);
    for case in 0..20 {
        let w = rng.random_range(2..8);
        let len = w + rng.random_range(1..25);
        let model = tiny_model(w, case);
        let seq = random_seq(len, 3, 100 + case);
        let full = score_sequence(&seq, &model, ReverseWindowMethod::Last).unwrap();
        let t = rng.random_range(w - 1..len);
        let cut = score_sequence(&seq.truncated(t + 1), &model, ReverseWindowMethod::Last).unwrap();
        assert_eq!(&full.s[w - 1..=t], &cut.s[w - 1..=t], "case {case}");
    }
}

#[test]
fn mean_type_looks_at_most_w_minus_1_ahead() {
    let mut rng = seeded(18);
    for case in 0..20 {
        let w = rng.random_range(2..8);
        let len = 2 * w + rng.random_range(1..25);
        let model = tiny_model(w, case);
        let seq = random_seq(len, 3, 200 + case);
        let full = score_sequence(&seq, &model, ReverseWindowMethod::Mean).unwrap();
        let t = rng.random_range(0..len - w);
        let cut = score_sequence(&seq.truncated(t + w), &model, ReverseWindowMethod::Mean).unwrap();
        assert_eq!(full.s[t], cut.s[t], "case {case}");
        // one step less of lookahead changes the score
        if t >= 1 && t + w - 1 < len {
            let short = score_sequence(&seq.truncated(t + w - 1), &model, ReverseWindowMethod::Mean).unwrap();
            assert_ne!(full.s[t], short.s[t], "case {case}");
        }
    }
}

#[test]
fn short_sequence_is_rejected() {
    let model = tiny_model(8, 1);
    let err = score_sequence(&random_seq(7, 3, 1), &model, ReverseWindowMethod::Mean).unwrap_err();
    assert!(matches!(err, Error::SequenceShorterThanWindow { len: 7, window: 8 }));
}

#[test]
fn threshold_is_max_of_maxima() {
    assert_eq!(threshold_from_maxima(&[1.0, 2.0, 3.0]).unwrap().tau, 3.0);
    assert!(threshold_from_maxima(&[]).is_err());
}

#[test]
fn threshold_matches_recomputed_max() {
    let model = tiny_model(4, 2);
    let val: Vec<_> = (0..3).map(|i| random_seq(15 + i, 3, 30 + i as u64)).collect();
    let tau = estimate_threshold(&val, &model, ReverseWindowMethod::Mean).unwrap().tau;
    let mut expected = f64::NEG_INFINITY;
    for seq in &val {
        for v in score_sequence(seq, &model, ReverseWindowMethod::Mean).unwrap().s {
            expected = expected.max(v);
        }
    }
    assert_eq!(tau, expected);
    // the validation maximum itself is never flagged
    for seq in &val {
        assert!(!detect(seq, &model, tau, ReverseWindowMethod::Mean)
            .unwrap()
            .is_anomalous());
    }
}

fn synthetic_score(per_channel: Array2<f64>) -> AnomalyScore {
    let s = per_channel.rows().into_iter().map(|r| r.sum()).collect();
    let sigma = Array2::ones(per_channel.dim());
    AnomalyScore {
        s,
        mu: Array2::zeros(per_channel.dim()),
        sigma,
        per_channel,
    }
}

#[test]
fn infinite_threshold_is_normal() {
    let sc = synthetic_score(Array2::from_elem((5, 2), 3.0));
    let out = detect_from_score(&sc, f64::INFINITY);
    assert_eq!(out.label, Verdict::Normal);
    assert_eq!(out.first_flagged_step, None);
    assert_eq!(out.root_cause_channel, None);
    assert_eq!(out.max_score, 6.0);
}

#[test]
fn spike_is_flagged_and_attributed() {
    let mut pc = Array2::from_elem((10, 4), 1.0);
    pc[[6, 2]] = 9.0;
    let sc = synthetic_score(pc);
    let out = detect_from_score(&sc, sc.s[6].next_down());
    assert_eq!(out.first_flagged_step, Some(6));
    assert_eq!(out.root_cause_channel, Some(2));
    assert!(out.is_anomalous());
}

#[test]
fn channel_ties_go_to_lowest_index() {
    let mut pc = Array2::zeros((3, 4));
    pc[[1, 1]] = 5.0;
    pc[[1, 3]] = 5.0;
    let out = detect_from_score(&synthetic_score(pc), 1.0);
    assert_eq!(out.root_cause_channel, Some(1));
    assert_eq!(argmax_lowest([2.0, 2.0, 2.0]), Some(0));
}

#[test]
fn method_names_round_trip() {
    for m in ReverseWindowMethod::ALL {
        assert_eq!(m.to_string().parse::<ReverseWindowMethod>().unwrap(), m);
    }
    assert!("median".parse::<ReverseWindowMethod>().is_err());
}

#[test]
fn score_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dump.csv");
    let mut pc = Array2::from_elem((4, 2), 0.1);
    pc[[2, 1]] = -1.0 / 3.0;
    let sc = synthetic_score(pc);
    write_score_dump(&path, &sc, &["a".into(), "b".into()]).unwrap();
    let (s, per) = read_score_dump(&path).unwrap();
    assert_eq!(s, sc.s);
    assert_eq!(per, sc.per_channel);
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("t,s,a,b\n"));
}

proptest! {
    #[test]
    fn raising_tau_shrinks_flags(seed in 0u64..1000, lo in -5.0f64..5.0, gap in 0.0f64..5.0) {
        let mut rng = seeded(seed);
        let pc = Array2::from_shape_fn((12, 3), |_| rng.random_range(-2.0..3.0));
        let sc = synthetic_score(pc);
        let (a, b) = (detect_from_score(&sc, lo), detect_from_score(&sc, lo + gap));
        if !a.is_anomalous() {
            prop_assert!(!b.is_anomalous());
        }
        let flagged = |tau: f64| sc.s.iter().filter(|&&v| v > tau).count();
        prop_assert!(flagged(lo + gap) <= flagged(lo));
        if let (Some(fa), Some(fb)) = (a.first_flagged_step, b.first_flagged_step) {
            prop_assert!(fb >= fa);
        }
    }

    #[test]
    fn outcome_fields_are_consistent(seed in 0u64..1000, tau in -3.0f64..10.0) {
        let mut rng = seeded(seed);
        let pc = Array2::from_shape_fn((8, 2), |_| rng.random_range(-1.0..4.0));
        let out = detect_from_score(&synthetic_score(pc), tau);
        prop_assert_eq!(out.is_anomalous(), out.first_flagged_step.is_some());
        prop_assert_eq!(out.first_flagged_step.is_some(), out.root_cause_channel.is_some());
    }
}
