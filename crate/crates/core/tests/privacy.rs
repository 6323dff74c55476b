use privse_core::corpus::{generate, Corpus, MessageRecord, SynthConfig};
use privse_core::privacy::{
    laplace_inverse_cdf, local_sensitivity, mixed_sensitivity, sensitivity_report,
    smooth_sensitivity, Chosen, Epsilon, PrivacyParams, SensitivityMode, SimilarityOracle,
};
use proptest::prelude::*;

fn record(id: &str, embedding: Vec<f64>) -> MessageRecord {
    MessageRecord {
        id: id.into(),
        block: 0,
        embedding,
        attributes: Default::default(),
        label: None,
    }
}

/// Per-anchor spread of cosines, taken over every ordered pair directly.
fn spread_oracle(vectors: &[Vec<f64>]) -> f64 {
    let unit: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect()
        })
        .collect();
    let cos = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    (0..unit.len())
        .map(|i| {
            let vals: Vec<f64> = (0..unit.len())
                .filter(|&j| j != i)
                .map(|j| cos(&unit[i], &unit[j]))
                .collect();
            let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
            let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn local_sensitivity_matches_spread(vs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 2..12)) {
        prop_assume!(vs.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3));
        let records = vs.iter().enumerate().map(|(i, v)| record(&format!("r{i}"), v.clone())).collect();
        let corpus = Corpus::new(records).unwrap();
        let s = local_sensitivity(&corpus.pooled()).unwrap();
        prop_assert!((s - spread_oracle(&vs)).abs() < 1e-9);
        prop_assert!((0.0..=2.0).contains(&s));
    }

    #[test]
    fn mixed_is_min_of_global_and_smooth(s_local in 0.0f64..=2.0, eps in 0.05f64..20.0, n in 2usize..5000) {
        let smooth = smooth_sensitivity(s_local, eps, n);
        // 2 exp(-(ε/2) ln(2/δ)) s_local with δ = 1/n²
        let delta = 1.0 / (n as f64 * n as f64);
        let expected = 2.0 * (-(eps / 2.0) * (2.0 / delta).ln()).exp() * s_local;
        prop_assert!((smooth - expected).abs() <= 1e-12 * expected.max(1.0));
        prop_assert_eq!(mixed_sensitivity(2.0, smooth), smooth.min(2.0));
    }

    #[test]
    fn inverse_cdf_is_odd_and_monotone(u in -0.4999f64..0.4999, v in -0.4999f64..0.4999, b in 0.01f64..5.0) {
        prop_assert!((laplace_inverse_cdf(b, u) + laplace_inverse_cdf(b, -u)).abs() < 1e-12);
        if u < v {
            prop_assert!(laplace_inverse_cdf(b, u) < laplace_inverse_cdf(b, v));
        }
    }
}

#[test]
fn inverse_cdf_matches_analytic_quantile() {
    // Laplace(0, b): P(X <= x) = 1 - exp(-x/b)/2 for x >= 0
    let b = 0.7;
    for &u in &[0.1, 0.25, 0.4, 0.49] {
        let x = laplace_inverse_cdf(b, u);
        let cdf = 1.0 - 0.5 * (-x / b).exp();
        assert!((cdf - (0.5 + u)).abs() < 1e-12);
    }
}

#[test]
fn oracle_caches_one_draw_per_pair() {
    let corpus = generate(&SynthConfig::new(3, 10, 8, 5)).unwrap();
    let block = corpus.pooled();
    let oracle = SimilarityOracle::new(block, 42, 0.5);
    let a = oracle.noisy_similarity(3, 7).unwrap();
    assert_eq!(oracle.noisy_similarity(7, 3).unwrap(), a);
    assert_eq!(oracle.noisy_similarity(3, 7).unwrap(), a);
    assert_eq!(oracle.cache_len(), 1);
    assert_ne!(a, block.cosine(3, 7));
    // a fresh oracle with the same seed replays the same draw
    let again = SimilarityOracle::new(block, 42, 0.5);
    assert_eq!(again.noisy_similarity(7, 3).unwrap(), a);
    assert!(oracle.noisy_similarity(4, 4).is_err());
    assert!(oracle.noisy_similarity(0, 30).is_err());
}

#[test]
fn noise_off_returns_exact_cosines() {
    let corpus = generate(&SynthConfig::new(2, 6, 4, 1)).unwrap();
    let block = corpus.pooled();
    let params = PrivacyParams::off(9);
    let report = sensitivity_report(&block, &params).unwrap();
    assert_eq!(report.noise_scale, 0.0);
    let oracle = SimilarityOracle::from_report(block, &params, &report);
    for i in 0..block.len() {
        for j in (i + 1)..block.len() {
            assert_eq!(oracle.noisy_similarity(i, j).unwrap(), block.cosine(i, j));
        }
    }
}

#[test]
fn report_modes() {
    let corpus = generate(&SynthConfig::new(5, 40, 16, 2)).unwrap();
    let block = corpus.pooled();
    for eps in [0.5, 5.0, 15.0] {
        let base = PrivacyParams::new(Epsilon::Budget(eps), 0);
        let mixed = sensitivity_report(&block, &base).unwrap();
        assert_eq!(mixed.s_mixed, mixed.s_global.min(mixed.s_smooth));
        assert_eq!(mixed.noise_scale, mixed.s_mixed / eps);
        let global = sensitivity_report(&block, &base.with_mode(SensitivityMode::Global)).unwrap();
        assert_eq!(global.chosen, Chosen::Global);
        assert_eq!(global.noise_scale, 2.0 / eps);
        let smooth = sensitivity_report(&block, &base.with_mode(SensitivityMode::Smooth)).unwrap();
        assert_eq!(smooth.chosen, Chosen::Smooth);
        assert_eq!(smooth.noise_scale, smooth.s_smooth / eps);
    }
    let high = sensitivity_report(&block, &PrivacyParams::new(Epsilon::Budget(15.0), 0)).unwrap();
    assert_eq!(high.chosen, Chosen::Smooth);
}

#[test]
fn epsilon_parsing() {
    assert_eq!("off".parse::<Epsilon>().unwrap(), Epsilon::Off);
    assert_eq!("2.5".parse::<Epsilon>().unwrap(), Epsilon::Budget(2.5));
    assert!("-1".parse::<Epsilon>().is_err());
    assert!("0".parse::<Epsilon>().is_err());
    assert!("abc".parse::<Epsilon>().is_err());
}
