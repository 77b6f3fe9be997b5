//! Sampled clicks against quadrature bin masses and binomial detector counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use timeleak::estimation::TimingHistogram;
use timeleak::simulation::{detector_counts, simulate_session};
use timeleak::{DetectorResponse, ReceiverModel};

/// Pearson p-value of `samples` binned at `width` against quadrature masses,
/// pooling bins from each end until they expect at least 5 events.
fn chi_square_p(samples: &[f64], d: &DetectorResponse, width: f64) -> f64 {
    let h = TimingHistogram::from_samples(samples, width).unwrap();
    let n = h.total() as f64;
    let (lo, hi) = d.support();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for k in 0..h.len() {
        let a = if k == 0 { lo.min(h.edge(0)) } else { h.edge(k) };
        let b = if k + 1 == h.len() { hi.max(h.end()) } else { h.edge(k + 1) };
        acc.0 += h.counts()[k] as f64;
        acc.1 += n * d.integrate_density(a, b).unwrap();
        if acc.1 >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    let last = cells.last_mut().unwrap();
    last.0 += acc.0;
    last.1 += acc.1;
    let chi2: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    1.0 - ChiSquared::new((cells.len() - 1) as f64).unwrap().cdf(chi2)
}

#[test]
fn million_draws_match_bin_masses() {
    let d = DetectorResponse::new(1138.0, 395.0, 288.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let p = chi_square_p(&d.sample(&mut rng, 1_000_000), &d, 20.0);
    assert!(p > 1e-3, "p = {p}");
}

#[test]
fn session_counts_and_timing() {
    let rcv = ReceiverModel::table1();
    let n = 1_000_000;
    let events = simulate_session(&rcv, n, 31);
    let counts = detector_counts(&events);
    assert_eq!(counts.iter().sum::<u64>(), n as u64);
    // Basis uniform and balanced prior: each detector fires a quarter of the time.
    let sd = (n as f64 * 0.25 * 0.75).sqrt();
    for c in counts {
        assert!((c as f64 - 0.25 * n as f64).abs() < 4.0 * sd, "{counts:?}");
    }
    for id in 1..=4u8 {
        let times: Vec<f64> = events.iter().filter(|e| e.detector == id).map(|e| e.time_ps).collect();
        let p = chi_square_p(&times, rcv.detector(id), 20.0);
        assert!(p > 1e-3, "detector {id}: p = {p}");
    }
}

#[test]
fn skewed_prior_shifts_counts() {
    let rcv = ReceiverModel::from_grouping(*ReceiverModel::table1().detectors(), timeleak::Grouping::PAIRINGS[0], 0.8)
        .unwrap();
    let n = 200_000;
    let counts = detector_counts(&simulate_session(&rcv, n, 4));
    let zeros: u64 = [1u8, 2, 3, 4]
        .iter()
        .filter(|&&id| rcv.bit_of(id) == timeleak::Bit::Zero)
        .map(|&id| counts[id as usize - 1])
        .sum();
    let sd = (n as f64 * 0.8 * 0.2).sqrt();
    assert!((zeros as f64 - 0.8 * n as f64).abs() < 4.0 * sd);
}
