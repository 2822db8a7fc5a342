use super::*;
use crate::rng::{fill_standard_normal, seeded};
use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};
use proptest::prelude::*;
use std::f64::consts::PI;

fn raw(values: Vec<f64>, rate: f64) -> RawChannel {
    RawChannel {
        name: "x".into(),
        timestamps: (0..values.len()).map(|i| i as f64 / rate).collect(),
        values,
        native_rate: rate,
    }
}

fn seq(values: Array2<f64>) -> Sequence {
    let names = (0..values.ncols()).map(|i| format!("c{i}")).collect();
    Sequence::new("s", 2.0, names, values).unwrap()
}

/// |H| of a cascade evaluated directly on the unit circle.
fn cascade_gain(f: &Butterworth, omega: f64) -> f64 {
    let (c1, s1) = (omega.cos(), -omega.sin());
    let (c2, s2) = ((2.0 * omega).cos(), -(2.0 * omega).sin());
    f.sections
        .iter()
        .map(|sec| {
            let num = (sec.b[0] + sec.b[1] * c1 + sec.b[2] * c2, sec.b[1] * s1 + sec.b[2] * s2);
            let den = (1.0 + sec.a[0] * c1 + sec.a[1] * c2, sec.a[0] * s1 + sec.a[1] * s2);
            (num.0.hypot(num.1)) / (den.0.hypot(den.1))
        })
        .product()
}

#[test]
fn butterworth_matches_analytic_magnitude() {
    let (fc, fs) = (1.0, 20.0);
    let filt = Butterworth::lowpass4(fc, fs);
    let wc = (PI * fc / fs).tan();
    for f in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 9.0] {
        let omega = 2.0 * PI * f / fs;
        let ratio = (omega / 2.0).tan() / wc;
        let expected = 1.0 / (1.0 + ratio.powi(8)).sqrt();
        assert_abs_diff_eq!(cascade_gain(&filt, omega), expected, epsilon = 1e-12);
    }
}

#[test]
fn filter_starts_in_steady_state() {
    let filt = Butterworth::lowpass4(1.0, 10.0);
    let mut data = vec![3.25; 50];
    filt.filter(&mut data);
    assert!(data.iter().all(|v| (v - 3.25).abs() < 1e-12));
}

#[test]
fn constant_channel_stays_constant() {
    for rate in [0.5, 1.0, 2.0, 10.0, 100.0] {
        let ch = raw(vec![-4.5; 40], rate);
        let out = resample_channel(&ch, 2.0).unwrap();
        assert!(!out.is_empty());
        assert!(out.iter().all(|v| (v + 4.5).abs() < 1e-12), "rate {rate}");
    }
}

#[test]
fn ramp_upsamples_linearly() {
    let out = resample_channel(&raw(vec![0.0, 1.0, 2.0], 1.0), 2.0).unwrap();
    assert_eq!(out, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
}

#[test]
fn fast_channel_keeps_slow_component() {
    let fs = 20.0;
    let n = 20 * 120;
    let slow = |t: f64| (2.0 * PI * 0.2 * t).sin();
    let values = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            slow(t) + (2.0 * PI * 5.0 * t).sin()
        })
        .collect();
    let out = resample_channel(&raw(values, fs), 2.0).unwrap();
    let reference: Vec<f64> = (0..out.len()).map(|k| slow(k as f64 / 2.0)).collect();
    let corr = pearson(&out, &reference);
    assert!(corr > 0.99, "correlation {corr}");
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn single_sample_is_rejected() {
    let err = resample_channel(&raw(vec![1.0], 1.0), 2.0).unwrap_err();
    assert!(err.to_string().contains("insufficient samples"));
}

#[test]
fn invalid_channels_are_rejected() {
    let mut ch = raw(vec![1.0, 2.0, 3.0], 1.0);
    ch.timestamps[2] = 0.5;
    assert!(resample_channel(&ch, 2.0).is_err());
    let mut ch = raw(vec![1.0, f64::NAN, 3.0], 1.0);
    assert!(resample_channel(&ch, 2.0).is_err());
    ch.values[1] = 0.0;
    ch.native_rate = 0.0;
    assert!(resample_channel(&ch, 2.0).is_err());
}

#[test]
fn assemble_uses_common_span() {
    let a = raw(vec![0.0, 1.0, 2.0, 3.0], 1.0);
    let mut b = raw((0..16).map(|i| i as f64).collect(), 4.0);
    b.name = "y".into();
    let s = assemble_sequence("id", &[a, b], 2.0).unwrap();
    assert_eq!(s.channel_names, vec!["x", "y"]);
    // a ends at 3 s
    assert_eq!(s.len(), 7);
    assert_abs_diff_eq!(s.values[[3, 0]], 1.5, epsilon = 1e-12);
}

#[test]
fn fit_norm_of_zeros_uses_floor() {
    let stats = fit_norm(&[seq(Array2::zeros((5, 2)))]).unwrap();
    assert_eq!(stats.mean, vec![0.0, 0.0]);
    assert_eq!(stats.std, vec![STD_FLOOR, STD_FLOOR]);
}

#[test]
fn two_point_population_std() {
    let stats = fit_norm(&[seq(array![[1.0], [3.0]])]).unwrap();
    assert_eq!(stats.mean, vec![2.0]);
    assert_eq!(stats.std, vec![1.0]);
}

#[test]
fn fit_norm_rejects_empty_set() {
    assert!(fit_norm(&[]).is_err());
}

#[test]
fn apply_norm_matches_hand_computation() {
    let s = seq(array![[1.0, 10.0], [2.0, 20.0], [4.0, 60.0]]);
    let stats = NormStats {
        mean: vec![2.0, 30.0],
        std: vec![0.5, 20.0],
    };
    let out = apply_norm(&s, &stats).unwrap();
    let expected = array![[-2.0, -1.0], [0.0, -0.5], [4.0, 1.5]];
    assert_eq!(out.values, expected);
}

#[test]
fn identity_stats_do_nothing() {
    let s = seq(array![[1.5, -2.0], [0.25, 7.0]]);
    let out = apply_norm(&s, &NormStats::identity(2)).unwrap();
    assert_eq!(out, s);
}

#[test]
fn norm_rejects_channel_mismatch() {
    let s = seq(Array2::zeros((3, 2)));
    assert!(matches!(
        apply_norm(&s, &NormStats::identity(3)),
        Err(Error::ChannelMismatch { expected: 3, got: 2 })
    ));
    assert!(invert_norm(&s, &NormStats::identity(1)).is_err());
}

fn random_set(seed: u64, count: usize, channels: usize) -> Vec<Sequence> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|i| {
            let t = 20 + 7 * i;
            let mut buf = vec![0.0; t * channels];
            fill_standard_normal(&mut rng, &mut buf);
            let values = Array2::from_shape_vec((t, channels), buf).unwrap();
            let scales = ndarray::Array1::from_iter((0..channels).map(|c| 1.0 + 3.0 * c as f64));
            seq(values * &scales + 5.0)
        })
        .collect()
}

#[test]
fn normalised_training_pool_is_standard() {
    let set = random_set(3, 3, 4);
    let stats = fit_norm(&set).unwrap();
    let normed: Vec<_> = set.iter().map(|s| apply_norm(s, &stats).unwrap()).collect();
    let again = fit_norm(&normed).unwrap();
    for c in 0..4 {
        assert!(again.mean[c].abs() < 1e-9);
        assert!((again.std[c] - 1.0).abs() < 1e-9);
    }
}

fn ar1(seed: u64, phi: f64, t: usize) -> Vec<f64> {
    let mut rng = seeded(seed);
    let burn = 500;
    let mut e = vec![0.0; t + burn];
    fill_standard_normal(&mut rng, &mut e);
    let mut x = vec![0.0; t + burn];
    for i in 1..x.len() {
        x[i] = phi * x[i - 1] + e[i];
    }
    x.split_off(burn)
}

#[test]
fn white_noise_gives_minimum_window() {
    let set = random_set(11, 2, 3);
    let cfg = WindowSizeConfig {
        max_lag: 16,
        min_window: 16,
    };
    // a short white-noise series can cross the band by chance at lag 1
    let est = estimate_window_size(&set, &cfg).unwrap();
    assert!(est.max_significant_lag <= 1);
    assert_eq!(est.window, 16);
    let flat = seq(Array2::from_elem((64, 2), 1.0));
    assert_eq!(estimate_window_size(&[flat], &cfg).unwrap().window, 16);
}

#[test]
fn ar1_significant_lag_tracks_closed_form() {
    let t = 4096;
    let expected = (1.96 / (t as f64).sqrt()).ln() / 0.9f64.ln();
    let mut lags: Vec<usize> = (0..101u64)
        .map(|seed| significant_lag(&ar1(seed, 0.9, t), 1024))
        .collect();
    lags.sort_unstable();
    let median = lags[lags.len() / 2] as f64;
    assert!(
        (median - expected).abs() <= 0.2 * expected,
        "median {median} vs {expected}: {lags:?}"
    );

    let x = ar1(0, 0.9, t);
    let s = seq(Array2::from_shape_vec((t, 1), x.clone()).unwrap());
    let est = estimate_window_size(&[s], &WindowSizeConfig::default()).unwrap();
    let lag = significant_lag(&x, 1024);
    assert_eq!(est.max_significant_lag, lag);
    assert!(est.window > lag && est.window / 2 <= lag && est.window.is_power_of_two());
}

#[test]
fn significant_lag_agrees_with_acf() {
    let x = ar1(5, 0.7, 500);
    let acf = autocorrelation(&x, 100);
    let band = 1.96 / (500f64).sqrt();
    let first_inside = acf.iter().position(|r| r.abs() <= band).unwrap();
    assert_eq!(significant_lag(&x, 100), first_inside);
}

#[test]
fn window_counts() {
    let s = seq(Array2::zeros((16, 1)));
    assert_eq!(window_sequence(&s, 16, 1).unwrap().len(), 1);
    let s = seq(Array2::zeros((32, 1)));
    assert_eq!(window_sequence(&s, 16, 8).unwrap().len(), 3);
    let err = window_sequence(&s, 33, 1).unwrap_err();
    assert!(err.to_string().contains("sequence shorter than window"));
    assert!(window_sequence(&s, 8, 0).is_err());
}

proptest! {
    #[test]
    fn windows_are_exact_slices(t in 1usize..80, w in 1usize..40, shift in 1usize..20, seed in 0u64..1000) {
        prop_assume!(w <= t);
        let mut buf = vec![0.0; t * 2];
        fill_standard_normal(&mut seeded(seed), &mut buf);
        let s = seq(Array2::from_shape_vec((t, 2), buf).unwrap());
        let ws = window_sequence(&s, w, shift).unwrap();
        prop_assert_eq!(ws.len(), (t - w) / shift + 1);
        for (k, (win, start)) in ws.windows.iter().zip(ws.starts()).enumerate() {
            prop_assert_eq!(start, k * shift);
            prop_assert_eq!(win.dim(), (w, 2));
            for i in 0..w {
                for c in 0..2 {
                    prop_assert_eq!(win[[i, c]], s.values[[k * shift + i, c]]);
                }
            }
        }
    }

    #[test]
    fn resampling_preserves_constants(c in -1e3f64..1e3, n in 2usize..60, rate in 0.3f64..50.0, target in 0.5f64..5.0) {
        let out = resample_channel(&raw(vec![c; n], rate), target).unwrap();
        for v in out {
            prop_assert!((v - c).abs() <= 1e-9 * c.abs().max(1.0));
        }
    }

    #[test]
    fn normalisation_round_trips(seed in 0u64..500, count in 1usize..4, d in 1usize..5) {
        let set = random_set(seed, count, d);
        let stats = fit_norm(&set).unwrap();
        prop_assert!(stats.std.iter().all(|&s| s > 0.0));
        for s in &set {
            let back = invert_norm(&apply_norm(s, &stats).unwrap(), &stats).unwrap();
            for (a, b) in back.values.iter().zip(s.values.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
        let normed: Vec<_> = set.iter().map(|s| apply_norm(s, &stats).unwrap()).collect();
        let again = fit_norm(&normed).unwrap();
        for c in 0..d {
            prop_assert!(again.mean[c].abs() < 1e-6);
            prop_assert!((again.std[c] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn adding_a_channel_never_shrinks_window(seed in 0u64..200, phi in 0.0f64..0.95) {
        let t = 300;
        let base = ar1(seed, 0.5, t);
        let extra = ar1(seed + 1000, phi, t);
        let cfg = WindowSizeConfig { max_lag: 128, min_window: 4 };
        let one = seq(Array2::from_shape_vec((t, 1), base.clone()).unwrap());
        let mut both = Array2::zeros((t, 2));
        both.column_mut(0).assign(&ndarray::Array1::from(base));
        both.column_mut(1).assign(&ndarray::Array1::from(extra));
        let w1 = estimate_window_size(&[one], &cfg).unwrap().window;
        let w2 = estimate_window_size(&[seq(both)], &cfg).unwrap().window;
        prop_assert!(w2 >= w1);
    }
}
