use ndarray::{Array2, Array3, Axis};
use rand::Rng;

use super::*;
use crate::rng::{fill_standard_normal, seeded};

fn tiny(variant: Variant) -> ModelConfig {
    ModelConfig {
        window: 8,
        channels: 2,
        latent: 4,
        heads: 2,
        key_dim: 1,
        enc_hidden: (8, 4),
        dec_hidden: (4, 8),
        variant,
    }
}

fn random3(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
    let mut rng = seeded(seed);
    let mut a = Array3::zeros(shape);
    fill_standard_normal(&mut rng, a.as_slice_mut().unwrap());
    a
}

fn loss_of(model: &TeVae, x: &Array3<f64>, noise: &Array3<f64>, beta: f64) -> f64 {
    model
        .forward_train(x.view(), x.view(), noise.view(), beta)
        .unwrap()
        .1
        .total
}

fn gradient_check(variant: Variant) -> f64 {
    let model = TeVae::new(tiny(variant), 11).unwrap();
    let x = random3((8, 2, 2), 1);
    let noise = random3((8, 2, 4), 2);
    let beta = 0.3;
    let (out, _, cache) = model.forward(x.view(), LatentInput::Sample(noise.view())).unwrap();
    let lat = LatentParams {
        mu: model.encode(x.view()).unwrap().mu,
        logvar: model.encode(x.view()).unwrap().logvar,
    };
    let grad = model.backward(x.view(), &out, &lat, &cache, beta);
    let analytic: Vec<f64> = grad.tensors().iter().flat_map(|(_, _, d)| d.to_vec()).collect();

    let h = 1e-4;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut flat_idx = 0;
    let n_tensors = probe.tensors().len();
    for ti in 0..n_tensors {
        let len = probe.tensors()[ti].2.len();
        for j in 0..len {
            let orig = probe.tensors_mut()[ti][j];
            probe.tensors_mut()[ti][j] = orig + h;
            let up = loss_of(&probe, &x, &noise, beta);
            probe.tensors_mut()[ti][j] = orig - h;
            let down = loss_of(&probe, &x, &noise, beta);
            probe.tensors_mut()[ti][j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[flat_idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            flat_idx += 1;
        }
    }
    assert_eq!(flat_idx, analytic.len());
    worst
}

#[test]
fn gradients_match_central_differences() {
    let worst = gradient_check(Variant::Tevae);
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn noma_gradients_match_central_differences() {
    let worst = gradient_check(Variant::Noma);
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn encode_and_decode_shapes() {
    let model = TeVae::new(tiny(Variant::Tevae), 3).unwrap();
    let x = random3((8, 3, 2), 4);
    let lat = model.encode(x.view()).unwrap();
    assert_eq!(lat.mu.dim(), (8, 3, 4));
    assert_eq!(lat.logvar.dim(), (8, 3, 4));
    let out = model.decode(lat.mu.view()).unwrap();
    assert_eq!(out.mu.dim(), (8, 3, 2));
    assert_eq!(out.logvar.dim(), (8, 3, 2));
}

#[test]
fn shape_mismatch_is_rejected() {
    let model = TeVae::new(tiny(Variant::Tevae), 3).unwrap();
    assert!(model.encode(random3((7, 1, 2), 0).view()).is_err());
    assert!(model.encode(random3((8, 1, 3), 0).view()).is_err());
    assert!(model.decode(random3((8, 1, 2), 0).view()).is_err());
    let x = random3((8, 1, 2), 0);
    assert!(model.attend(x.view(), random3((8, 1, 3), 0).view()).is_err());
}

#[test]
fn inference_is_bit_identical_across_calls() {
    let model = TeVae::new(tiny(Variant::Tevae), 5).unwrap();
    let x = random3((8, 2, 2), 6);
    let a = model.forward_infer(x.view()).unwrap();
    let b = model.forward_infer(x.view()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn infer_equals_train_with_zero_noise() {
    let model = TeVae::new(tiny(Variant::Tevae), 5).unwrap();
    let x = random3((8, 2, 2), 6);
    let zeros = Array3::zeros((8, 2, 4));
    let (train_out, _, _) = model.forward_train(x.view(), x.view(), zeros.view(), 0.0).unwrap();
    let (infer_out, _) = model.forward_infer(x.view()).unwrap();
    for (a, b) in train_out.mu.iter().zip(infer_out.mu.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn batch_entries_are_independent() {
    let model = TeVae::new(tiny(Variant::Tevae), 8).unwrap();
    let x = random3((8, 3, 2), 9);
    let (batched, _) = model.forward_infer(x.view()).unwrap();
    for b in 0..3 {
        let single = x.slice(ndarray::s![.., b..b + 1, ..]).to_owned();
        let (one, _) = model.forward_infer(single.view()).unwrap();
        let (mu_b, _) = batched.window(b);
        for (p, q) in one.mu.index_axis(Axis(1), 0).iter().zip(mu_b.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}

#[test]
fn sample_latent_cases() {
    let mu = random3((4, 1, 3), 1);
    let lp = LatentParams {
        mu: mu.clone(),
        logvar: Array3::zeros((4, 1, 3)),
    };
    let zero = Array3::zeros((4, 1, 3));
    assert_eq!(sample_latent(&lp, zero.view()).unwrap(), mu);
    let n = random3((4, 1, 3), 2);
    let z = sample_latent(&lp, n.view()).unwrap();
    assert_eq!(z, &mu + &n);
    assert!(sample_latent(&lp, Array3::zeros((4, 1, 2)).view()).is_err());
}

#[test]
fn sample_mean_converges_to_mu() {
    // Monte Carlo: mean of 1e5 draws within 3 sigma / sqrt(N) of mu
    let mut rng = seeded(17);
    let mu = [0.7, -1.3];
    let logvar = [0.5, -1.0];
    let lp = LatentParams {
        mu: Array3::from_shape_vec((1, 1, 2), mu.to_vec()).unwrap(),
        logvar: Array3::from_shape_vec((1, 1, 2), logvar.to_vec()).unwrap(),
    };
    let n = 100_000;
    let mut sums = [0.0; 2];
    let mut noise = Array3::zeros((1, 1, 2));
    for _ in 0..n {
        fill_standard_normal(&mut rng, noise.as_slice_mut().unwrap());
        let z = sample_latent(&lp, noise.view()).unwrap();
        sums[0] += z[[0, 0, 0]];
        sums[1] += z[[0, 0, 1]];
    }
    for j in 0..2 {
        let sigma = (0.5 * logvar[j]).exp();
        let mean = sums[j] / n as f64;
        assert!((mean - mu[j]).abs() < 3.0 * sigma / (n as f64).sqrt());
    }
}

#[test]
fn elbo_identities() {
    let x = random3((8, 1, 2), 3);
    let out = OutputParams {
        mu: x.clone(),
        logvar: Array3::zeros((8, 1, 2)),
    };
    let lat0 = LatentParams {
        mu: Array3::zeros((8, 1, 4)),
        logvar: Array3::zeros((8, 1, 4)),
    };
    let loss = elbo_loss(x.view(), &out, &lat0, 0.7);
    assert!((loss.nll - 0.5 * 16.0 * LN_2PI).abs() < 1e-12);
    assert_eq!(loss.kl, 0.0);

    let mu = random3((8, 1, 4), 4);
    let lat = LatentParams {
        mu: mu.clone(),
        logvar: Array3::zeros((8, 1, 4)),
    };
    let kl = elbo_loss(x.view(), &out, &lat, 1.0).kl;
    let expected: f64 = mu.iter().map(|m| m * m / 2.0).sum();
    assert!((kl - expected).abs() < 1e-12);

    let l0 = elbo_loss(x.view(), &out, &lat, 0.0);
    assert_eq!(l0.total, l0.nll);
}

#[test]
fn kl_is_nonnegative_and_zero_only_at_prior() {
    let mut rng = seeded(5);
    for _ in 0..200 {
        let lat = LatentParams {
            mu: Array3::from_shape_fn((2, 1, 2), |_| rng.random_range(-2.0..2.0)),
            logvar: Array3::from_shape_fn((2, 1, 2), |_| rng.random_range(-3.0..3.0)),
        };
        assert!(kl_divergence(&lat) > 0.0);
    }
}

#[test]
fn attention_with_single_step_is_value_projection() {
    let cfg = ModelConfig {
        window: 1,
        channels: 3,
        latent: 2,
        heads: 1,
        key_dim: 2,
        enc_hidden: (2, 2),
        dec_hidden: (2, 2),
        variant: Variant::Tevae,
    };
    let model = TeVae::new(cfg, 1).unwrap();
    let ap = model.attention.as_ref().unwrap();
    let x = random3((1, 1, 3), 2);
    let v = random3((1, 1, 2), 3);
    let c = model.attend(x.view(), v.view()).unwrap();
    let expected = v.index_axis(Axis(0), 0).dot(&ap.wv).dot(&ap.wo);
    for (a, b) in c.iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn zero_input_gives_uniform_attention() {
    let model = TeVae::new(tiny(Variant::Tevae), 2).unwrap();
    let ap = model.attention.as_ref().unwrap();
    let x = Array3::zeros((8, 1, 2));
    let v = random3((8, 1, 4), 1);
    let (c, cache) = ap.forward(x.view(), v.view());
    assert!(cache.scores.iter().all(|&s| (s - 0.125).abs() < 1e-15));
    let vi = v.index_axis(Axis(1), 0).dot(&ap.wv);
    let mean: Array2<f64> = vi.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
    let expected = mean.dot(&ap.wo);
    for t in 0..8 {
        for j in 0..4 {
            assert!((c[[t, 0, j]] - expected[[0, j]]).abs() < 1e-12);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let model = TeVae::new(tiny(Variant::Tevae), 21).unwrap();
    let ck = Checkpoint::from_model(&model, 7, -12.5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let restored = back.to_model().unwrap();
    for ((_, _, a), (_, _, b)) in restored.tensors().iter().zip(model.tensors().iter()) {
        assert!(a.iter().zip(b.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn checkpoint_with_wrong_layout_is_rejected() {
    let model = TeVae::new(tiny(Variant::Tevae), 21).unwrap();
    let mut ck = Checkpoint::from_model(&model, 0, 0.0);
    ck.tensors[0].shape = vec![1, 1];
    assert!(ck.to_model().is_err());
    let mut ck = Checkpoint::from_model(&model, 0, 0.0);
    ck.tensors.pop();
    assert!(ck.to_model().is_err());
}

#[test]
fn noma_has_no_attention_parameters() {
    let te = TeVae::new(tiny(Variant::Tevae), 1).unwrap();
    let no = TeVae::new(tiny(Variant::Noma), 1).unwrap();
    assert!(no.attention.is_none());
    assert_eq!(
        te.parameter_count() - no.parameter_count(),
        2 * 2 + 2 * 2 + 4 * 2 + 2 * 4
    );
    assert!(no
        .attend(Array3::zeros((8, 1, 2)).view(), Array3::zeros((8, 1, 4)).view())
        .is_err());
}
