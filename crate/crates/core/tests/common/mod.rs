//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use mclt::distributions::{robust_soliton, SolitonParams};
use mclt::mc_session::{uniform_channels, McScheme, Session, StopRule};
use mclt::rng::{derive_seed, floyd_sample, SplitMix64};

/// Success probability at three receptions for the k = 3 two-configuration
/// scheme that switches after two solved symbols, as a hand-derived polynomial.
pub fn k3_two_config_closed_form(p: &[f64], q: &[f64]) -> f64 {
    let (p1, p2, p3) = (p[0], p[1], p[2]);
    let (q1, q2, q3) = (q[0], q[1], q[2]);
    2.0 / 9.0 * p1 * p2 * (5.0 * p2 + 12.0 * p3 + 2.0 * q1 + 4.0 * q2 + 6.0 * q3)
        + 2.0 / 9.0 * p1 * p1 * (2.0 * p2 + 6.0 * p3 + q1 + 2.0 * q2 + 3.0 * q3)
}

/// Uniform point on the probability simplex of dimension `n`.
pub fn simplex_point(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.next_f64()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Empirical release-time counts.
///
/// Each trial runs a real peeling decode of a robust-soliton stream to
/// completion and takes its recovery order as the processing order. A fresh
/// uniform `d`-subset of inputs is then released when its second-to-last
/// member is processed; `L` is the number of inputs still unprocessed at that
/// moment (`k` for `d = 1`). Returns `counts[j][L]` for `degrees[j]`.
pub fn release_counts(k: usize, degrees: &[usize], trials: usize, seed: u64) -> Vec<Vec<u64>> {
    let params = SolitonParams::new(k, 0.1, 0.1).unwrap();
    let scheme = McScheme::single(1, robust_soliton(&params).unwrap());
    let mut counts = vec![vec![0u64; k + 1]; degrees.len()];
    let mut position = vec![0usize; k];
    for t in 0..trials {
        let s = derive_seed(seed, t as u64);
        let channels = uniform_channels(&scheme, 0.0, s).unwrap();
        let mut session = Session::new(&scheme, None, channels, s).unwrap();
        session.run(StopRule::received(1000 * k), |_, _| {});
        let order = session.decoder().recovery_order();
        assert_eq!(order.len(), k, "decode did not finish");
        for (step, &i) in order.iter().enumerate() {
            position[i as usize] = step + 1;
        }
        let mut rng = SplitMix64::new(derive_seed(s, 0x9b0be));
        for (j, &d) in degrees.iter().enumerate() {
            let l = if d == 1 {
                k
            } else {
                let mut steps: Vec<usize> = floyd_sample(&mut rng, k as u32, d as u32)
                    .into_iter()
                    .map(|i| position[i as usize])
                    .collect();
                steps.sort_unstable();
                k - steps[d - 2]
            };
            counts[j][l] += 1;
        }
    }
    counts
}

/// Exhaustive count of neighbor sets: fraction of all `d`-subsets of `0..k`
/// that meet exactly `i` of the first `u` indices.
pub fn subset_fraction(k: usize, d: usize, u: usize, i: usize) -> f64 {
    let mut hit = 0u64;
    let mut total = 0u64;
    for mask in 0u64..(1u64 << k) {
        if mask.count_ones() as usize != d {
            continue;
        }
        total += 1;
        if (mask & ((1u64 << u) - 1)).count_ones() as usize == i {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}
