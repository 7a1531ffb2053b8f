mod common;

use common::oracle::EnergyOracle;
use num_complex::Complex32;
use proptest::prelude::*;
use specsense::baseband::{IqFrame, Simulator};
use specsense::dataset::{idle_frame, Label};
use specsense::detectors::*;
use specsense::mlp::{forward, Batch, MlpParams};

fn idle_energies(sim: &Simulator, n: u64, seed: u64) -> Vec<f64> {
    Detector::Energy
        .stats(&(0..n).map(|i| idle_frame(sim, i, seed).unwrap()).collect::<Vec<_>>())
        .unwrap()
}

#[test]
fn noise_energy_matches_generalized_chi_square() {
    // The 111 samples are correlated, so the energy is a weighted sum of
    // exponentials with weights equal to the covariance eigenvalues, not a
    // 222-degree chi-square.
    let sim = Simulator::new(Default::default()).unwrap();
    let e = idle_energies(&sim, 100_000, 11);
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);

    let oracle = EnergyOracle::new(111, 1.35, 10, 0.35);
    let (m0, v0) = oracle.noise_energy_moments();
    assert!((mean / m0 - 1.0).abs() < 0.02, "mean {mean} vs {m0}");
    assert!((var / v0 - 1.0).abs() < 0.02, "var {var} vs {v0}");
    // A 222-degree chi-square would put the variance at 111.
    assert!(var > 5.0 * 111.0);
}

#[test]
fn realized_false_alarm_on_fresh_idle_frames() {
    let sim = Simulator::new(Default::default()).unwrap();
    let cal = idle_energies(&sim, 100_000, 21);
    let ver = idle_energies(&sim, 20_000, 22);
    let thr = calibrate_threshold(&cal, 0.01, DetectorKind::Energy).unwrap();
    let pfa = exceed_fraction(&ver, thr.value);
    let sigma = common::binomial_sigma(0.01, ver.len());
    assert!((pfa - 0.01).abs() <= 3.0 * sigma, "{pfa}");
}

fn frame_strategy() -> impl Strategy<Value = IqFrame> {
    prop::collection::vec((-3.0f32..3.0, -3.0f32..3.0), 111)
        .prop_map(|v| IqFrame::new(v.into_iter().map(|(a, b)| Complex32::new(a, b)).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_quadratic(frame in frame_strategy(), k in 0.1f32..4.0) {
        let scaled = IqFrame::new(frame.samples().iter().map(|s| s * k).collect()).unwrap();
        let (a, b) = (energy_stat(&frame).value, energy_stat(&scaled).value);
        prop_assert!(a >= 0.0);
        prop_assert!((b - (k as f64).powi(2) * a).abs() <= 1e-5 * b.max(1.0));
    }

    #[test]
    fn nn_sign_matches_argmax(frame in frame_strategy(), seed in 0u64..1000, shift in -5.0f64..5.0) {
        let mut p = MlpParams::init(&[222, 12, 2], seed);
        for (i, w) in p.layers[1].weights.iter_mut().enumerate() {
            *w = ((i as u64 * 7 + seed) as f64).sin();
        }
        let base = nn_stat(&p, &frame).unwrap().value;
        let logits = forward(&p, &Batch::from_frames([&frame], 111).unwrap()).unwrap();
        if logits[0] != logits[1] {
            prop_assert_eq!(base > 0.0, logits[1] > logits[0]);
        }
        p.layers[1].bias.iter_mut().for_each(|b| *b += shift);
        prop_assert!((nn_stat(&p, &frame).unwrap().value - base).abs() <= 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn threshold_bounds_the_exceedance(stats in prop::collection::vec(-1e3f64..1e3, 100..600), pfa in 0.01f64..0.2) {
        let thr = calibrate_threshold(&stats, pfa, DetectorKind::Nn).unwrap();
        let above = exceed_fraction(&stats, thr.value);
        prop_assert!(above <= pfa + 1e-12);
        // Smallest such value: the next lower order statistic overshoots.
        let below: Vec<f64> = stats.iter().copied().filter(|&s| s < thr.value).collect();
        if let Some(next) = below.iter().copied().fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s)))) {
            prop_assert!(exceed_fraction(&stats, next) > pfa);
        }
        prop_assert_eq!(decide(DetectorStat { value: thr.value, kind: DetectorKind::Nn }, &thr).unwrap(), Label::Idle);
    }
}
