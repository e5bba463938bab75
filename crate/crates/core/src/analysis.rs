//! Closed-form analytics: utility-degree distributions, the domination
//! condition between consecutive degrees, release probabilities, and the
//! phase-one identities relating the starter to the robust soliton.

use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::distributions::{DegreeDistribution, SolitonParams, SolitonTerms};
use crate::error::{invalid, Result};

/// `ln C(n, r)`; `-inf` when `r > n`.
pub fn ln_choose(n: u64, r: u64) -> f64 {
    if r > n {
        f64::NEG_INFINITY
    } else {
        ln_factorial(n) - ln_factorial(r) - ln_factorial(n - r)
    }
}

/// Distribution of the utility degree `i` of a degree-`d` output symbol that
/// arrives while `u` of `k` input symbols are unsolved (hypergeometric).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityDegreePmf {
    pub d: usize,
    pub u: usize,
    pub k: usize,
    /// Smallest utility degree with nonzero mass.
    pub lo: usize,
    /// Masses for `lo..=lo + probs.len() - 1`.
    pub probs: Vec<f64>,
}

impl UtilityDegreePmf {
    pub fn hi(&self) -> usize {
        self.lo + self.probs.len() - 1
    }

    pub fn pmf(&self, i: usize) -> f64 {
        if i < self.lo || i > self.hi() {
            0.0
        } else {
            self.probs[i - self.lo]
        }
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(j, p)| (self.lo + j) as f64 * p)
            .sum()
    }

    /// Probability that the symbol is still useful (`i > 0`).
    pub fn useful(&self) -> f64 {
        1.0 - self.pmf(0)
    }
}

/// `D(d, i, u) = C(u, i) C(k-u, d-i) / C(k, d)` over its support.
pub fn utility_degree_pmf(d: usize, u: usize, k: usize) -> Result<UtilityDegreePmf> {
    if d == 0 || d > k {
        return Err(invalid(format!("degree {d} outside 1..={k}")));
    }
    if u > k {
        return Err(invalid(format!("unsolved count {u} exceeds k = {k}")));
    }
    let lo = (d + u).saturating_sub(k);
    let hi = d.min(u);
    let (k64, u64_, d64) = (k as u64, u as u64, d as u64);
    let denom = ln_choose(k64, d64);
    let probs = (lo..=hi)
        .map(|i| {
            let i = i as u64;
            (ln_choose(u64_, i) + ln_choose(k64 - u64_, d64 - i) - denom).exp()
        })
        .collect();
    Ok(UtilityDegreePmf { d, u, k, lo, probs })
}

fn check_consecutive(d: usize, u: usize, k: usize) -> Result<()> {
    if d == 0 || d >= k {
        return Err(invalid(format!("degree {d} outside 1..{k}")));
    }
    if u > k {
        return Err(invalid(format!("unsolved count {u} exceeds k = {k}")));
    }
    Ok(())
}

/// Whether degree `d + 1` dominates degree `d` at `u` unsolved symbols.
///
/// The pointwise condition reduces to `u <= i (k+1)/(d+1)` for every `i > 0`;
/// `i = 1` is binding.
pub fn dominates(d: usize, u: usize, k: usize) -> Result<bool> {
    check_consecutive(d, u, k)?;
    Ok(u * (d + 1) <= k + 1)
}

/// The largest `u` at which `d + 1` dominates `d`: `floor((k+1)/(d+1))`.
pub fn domination_threshold(d: usize, k: usize) -> usize {
    (k + 1) / (d + 1)
}

/// Brute-force check that `D(d_high, i, u) >= D(d_low, i, u)` for all `i > 0`.
pub fn verify_domination_pair(d_low: usize, d_high: usize, u: usize, k: usize) -> Result<bool> {
    let low = utility_degree_pmf(d_low, u, k)?;
    let high = utility_degree_pmf(d_high, u, k)?;
    let top = low.hi().max(high.hi());
    Ok((1..=top).all(|i| {
        let (a, b) = (low.pmf(i), high.pmf(i));
        // Boundary cases are exact ties; allow for rounding in the log-space evaluation.
        b >= a - 1e-12 * a.max(b)
    }))
}

/// Brute-force oracle for [`dominates`].
pub fn verify_domination(d: usize, u: usize, k: usize) -> Result<bool> {
    check_consecutive(d, u, k)?;
    verify_domination_pair(d, d + 1, u, k)
}

/// Probability that a degree-`d` output symbol is released exactly when `l`
/// input symbols remain unprocessed, for a processing order independent of
/// the symbol.
///
/// `q(1, k) = 1`; for `d >= 2` and `1 <= l <= k-d+1`,
/// `q(d, l) = C(k-l-1, d-2) * l / C(k, d)`; zero elsewhere.
pub fn release_probability(d: usize, l: usize, k: usize) -> Result<f64> {
    if d == 0 || d > k {
        return Err(invalid(format!("degree {d} outside 1..={k}")));
    }
    if l == 0 || l > k {
        return Err(invalid(format!("L = {l} outside 1..={k}")));
    }
    Ok(release_unchecked(d, l, k))
}

fn release_unchecked(d: usize, l: usize, k: usize) -> f64 {
    if d == 1 {
        return if l == k { 1.0 } else { 0.0 };
    }
    if l + d > k + 1 {
        return 0.0;
    }
    let (k, l, d) = (k as u64, l as u64, d as u64);
    (ln_choose(k - l - 1, d - 2) + (l as f64).ln() - ln_choose(k, d)).exp()
}

/// Release probabilities `q(d, L)` for selected degrees and `L = 1..=k`.
#[derive(Debug, Clone, Serialize)]
pub struct ReleaseCurve {
    pub k: usize,
    pub degrees: Vec<usize>,
    /// `table[j][l - 1] = q(degrees[j], l)`.
    pub table: Vec<Vec<f64>>,
}

impl ReleaseCurve {
    pub fn new(k: usize, degrees: &[usize]) -> Result<Self> {
        let mut table = Vec::with_capacity(degrees.len());
        for &d in degrees {
            table.push(
                (1..=k)
                    .map(|l| release_probability(d, l, k))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Self {
            k,
            degrees: degrees.to_vec(),
            table,
        })
    }

    pub fn q(&self, degree_index: usize, l: usize) -> f64 {
        self.table[degree_index][l - 1]
    }

    /// `degree,L,q` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("degree,L,q\n");
        for (j, d) in self.degrees.iter().enumerate() {
            for l in (1..=self.k).rev() {
                out.push_str(&format!("{},{},{}\n", d, l, self.q(j, l)));
            }
        }
        out
    }
}

/// Overall release probability `r(L) = Σ_d pmf(d) q(d, L)`.
pub fn aggregate_release(dist: &DegreeDistribution, l: usize) -> Result<f64> {
    let k = dist.k();
    if l == 0 || l > k {
        return Err(invalid(format!("L = {l} outside 1..={k}")));
    }
    Ok((1..=k)
        .filter(|&d| dist.pmf(d) > 0.0)
        .map(|d| dist.pmf(d) * release_unchecked(d, l, k))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub l: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Compares `(γ/β) K r_starter(L)` with `K r_robust(L)` where the robust
/// release excludes the spike's contribution. `symbols` is `K`.
pub fn phase1_release_identity(params: &SolitonParams, l: usize, symbols: f64) -> Result<IdentityCheck> {
    let terms = SolitonTerms::new(params)?;
    let k = params.k;
    if l == 0 || l >= k {
        return Err(invalid(format!("L = {l} outside 1..{k}")));
    }
    let starter = terms.starter()?;
    let lhs = terms.gamma / terms.beta * symbols * aggregate_release(&starter, l)?;
    let rhs = symbols
        * (1..=k)
            .map(|d| {
                let tau = if d == terms.spike { 0.0 } else { terms.tau[d - 1] };
                (terms.rho[d - 1] + tau) / terms.beta * release_unchecked(d, l, k)
            })
            .sum::<f64>();
    Ok(IdentityCheck {
        l,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// The identity over every `L` in `ceil(R)..=k-1`.
pub fn phase1_identity_sweep(params: &SolitonParams, symbols: f64) -> Result<Vec<IdentityCheck>> {
    let start = switch_threshold(params)?.max(1);
    (start..params.k)
        .map(|l| phase1_release_identity(params, l, symbols))
        .collect()
}

/// Expected number of degree-one symbols among the `(γ/β) K` starter symbols
/// of phase one: `(γ/β) K λ(1)`.
pub fn expected_degree_one(params: &SolitonParams, symbols: f64) -> Result<f64> {
    if !(symbols > 0.0) {
        return Err(invalid("symbol count must be positive"));
    }
    let terms = SolitonTerms::new(params)?;
    let lambda = terms.starter()?;
    Ok(terms.gamma / terms.beta * symbols * lambda.pmf(1))
}

/// `ceil(R)`: receivers move to the closer once `u <= ceil(R)`.
pub fn switch_threshold(params: &SolitonParams) -> Result<usize> {
    Ok(threshold_from_r(crate::distributions::compute_r(params)?))
}

/// `ceil(r)` as a symbol count.
pub fn threshold_from_r(r: f64) -> usize {
    r.ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical(k: usize) -> SolitonParams {
        SolitonParams::new(k, 0.1, 0.1).unwrap()
    }

    // Enumerates all d-subsets of 0..k and counts overlap with the first u indices.
    fn utility_by_enumeration(d: usize, u: usize, k: usize) -> Vec<f64> {
        let mut counts = vec![0u64; d + 1];
        let mut total = 0u64;
        for mask in 0u32..(1 << k) {
            if mask.count_ones() as usize == d {
                total += 1;
                counts[(mask & ((1 << u) - 1)).count_ones() as usize] += 1;
            }
        }
        counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    #[test]
    fn utility_examples() {
        let p = utility_degree_pmf(20, 100, 100).unwrap();
        assert_eq!((p.lo, p.hi()), (20, 20));
        assert!((p.pmf(20) - 1.0).abs() < 1e-12);

        let p = utility_degree_pmf(2, 2, 4).unwrap();
        let oracle = utility_by_enumeration(2, 2, 4);
        assert!((oracle[0] - 1.0 / 6.0).abs() < 1e-15);
        for i in 0..=2 {
            assert!((p.pmf(i) - oracle[i]).abs() < 1e-12);
        }

        let p = utility_degree_pmf(20, 40, 100).unwrap();
        let mode = (p.lo..=p.hi())
            .max_by(|&a, &b| p.pmf(a).partial_cmp(&p.pmf(b)).unwrap())
            .unwrap();
        assert_eq!(mode, 8);
    }

    #[test]
    fn utility_matches_enumeration_small() {
        for k in 1..=10 {
            for d in 1..=k {
                for u in 0..=k {
                    let p = utility_degree_pmf(d, u, k).unwrap();
                    let oracle = utility_by_enumeration(d, u, k);
                    for (i, want) in oracle.iter().enumerate() {
                        assert!((p.pmf(i) - want).abs() < 1e-12, "d={d} u={u} k={k} i={i}");
                    }
                }
            }
        }
    }

    #[test]
    fn utility_mean_increases_with_u() {
        for k in [10usize, 50, 100] {
            for d in [1usize, 2, 5, k / 2, k] {
                let means: Vec<f64> = (0..=k)
                    .map(|u| utility_degree_pmf(d, u, k).unwrap().mean())
                    .collect();
                for u in 0..=k {
                    assert!((means[u] - (d * u) as f64 / k as f64).abs() < 1e-9);
                }
                assert!(means.windows(2).all(|w| w[1] > w[0]));
            }
        }
    }

    #[test]
    fn utility_rejects_bad_args() {
        assert!(utility_degree_pmf(0, 1, 4).is_err());
        assert!(utility_degree_pmf(5, 1, 4).is_err());
        assert!(utility_degree_pmf(2, 5, 4).is_err());
    }

    #[test]
    fn domination_examples() {
        assert!(dominates(1, 1, 2).unwrap());
        assert!(verify_domination(1, 1, 2).unwrap());
        assert!(dominates(4, 20, 100).unwrap());
        assert!(!dominates(4, 21, 100).unwrap());
        let d4 = utility_degree_pmf(4, 21, 100).unwrap();
        let d5 = utility_degree_pmf(5, 21, 100).unwrap();
        assert!(d5.pmf(1) < d4.pmf(1));
        assert!(dominates(100, 1, 100).is_err());
    }

    #[test]
    fn degree_two_and_ten_are_not_ordered() {
        for u in [20usize, 80] {
            assert!(!verify_domination_pair(2, 10, u, 100).unwrap());
        }
        // At u = 20 the two curves cross: degree 10 wins for larger i but not at i = 1.
        let d2 = utility_degree_pmf(2, 20, 100).unwrap();
        let d10 = utility_degree_pmf(10, 20, 100).unwrap();
        assert!(d10.pmf(2) > d2.pmf(2));
        assert!(d10.pmf(1) < d2.pmf(1));
        // Degrees 1..3 are dominated by 5 with 80 of 100 solved.
        for d in 1..=3 {
            assert!(verify_domination_pair(d, 5, 20, 100).unwrap());
        }
    }

    #[test]
    fn release_examples() {
        for k in [2usize, 10, 100] {
            assert_eq!(release_probability(2, k, k).unwrap(), 0.0);
            assert_eq!(release_probability(1, k, k).unwrap(), 1.0);
        }
        let k = 100;
        let peak = (1..=k)
            .max_by(|&a, &b| {
                release_probability(20, a, k)
                    .unwrap()
                    .partial_cmp(&release_probability(20, b, k).unwrap())
                    .unwrap()
            })
            .unwrap();
        assert!((5..=15).contains(&peak), "peak at L = {peak}");
    }

    #[test]
    fn release_mass_is_one() {
        for k in [5usize, 30, 100] {
            for d in 1..=k {
                let s: f64 = (1..=k).map(|l| release_probability(d, l, k).unwrap()).sum();
                assert!(s <= 1.0 + 1e-9 && s > 1.0 - 1e-9, "d={d} k={k} s={s}");
                for l in (k - d + 2)..=k {
                    if d > 1 {
                        assert_eq!(release_probability(d, l, k).unwrap(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn release_against_exact_permutation_count() {
        // For k = 6, enumerate every processing order and every d-subset.
        let k = 6usize;
        let mut perms: Vec<Vec<usize>> = vec![vec![]];
        for _ in 0..k {
            perms = perms
                .into_iter()
                .flat_map(|p| {
                    (0..k)
                        .filter(|x| !p.contains(x))
                        .map(|x| {
                            let mut q = p.clone();
                            q.push(x);
                            q
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        for d in 2..=k {
            let mut counts = vec![0u64; k + 1];
            let mut total = 0u64;
            for perm in &perms {
                for mask in 0u32..(1 << k) {
                    if mask.count_ones() as usize != d {
                        continue;
                    }
                    total += 1;
                    let mut seen = 0;
                    for (step, &x) in perm.iter().enumerate() {
                        if mask & (1 << x) != 0 {
                            seen += 1;
                            if seen == d - 1 {
                                counts[k - (step + 1)] += 1;
                                break;
                            }
                        }
                    }
                }
            }
            for l in 1..=k {
                let want = counts[l] as f64 / total as f64;
                assert!((release_probability(d, l, k).unwrap() - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn aggregate_release_properties() {
        let k = 100;
        let one = DegreeDistribution::point_mass(k, 1).unwrap();
        for l in 1..=k {
            assert_eq!(aggregate_release(&one, l).unwrap(), release_probability(1, l, k).unwrap());
        }
        let mu = crate::distributions::robust_soliton(&canonical(k)).unwrap();
        for l in 1..k {
            assert!(aggregate_release(&mu, l).unwrap() > 0.0);
        }
        let ideal = crate::distributions::ideal_soliton(k).unwrap();
        let mix = mu.mix(&ideal, 0.5).unwrap();
        for l in 1..=k {
            let avg = 0.5 * (aggregate_release(&mu, l).unwrap() + aggregate_release(&ideal, l).unwrap());
            assert!((aggregate_release(&mix, l).unwrap() - avg).abs() < 1e-15);
        }
    }

    #[test]
    fn phase1_identity_holds() {
        for k in [30usize, 100] {
            let checks = phase1_identity_sweep(&canonical(k), 1.0).unwrap();
            assert!(!checks.is_empty());
            for c in checks {
                assert!(c.residual < 1e-9, "k={k} L={} residual={}", c.l, c.residual);
            }
        }
        let a = phase1_release_identity(&canonical(100), 50, 1.0).unwrap();
        let b = phase1_release_identity(&canonical(100), 50, 10.0).unwrap();
        assert!((b.lhs - 10.0 * a.lhs).abs() < 1e-12);
        assert!((b.rhs - 10.0 * a.rhs).abs() < 1e-12);
    }

    #[test]
    fn degree_one_count_is_one_plus_r() {
        for k in [100usize, 1000] {
            let p = canonical(k);
            let terms = SolitonTerms::new(&p).unwrap();
            let got = expected_degree_one(&p, terms.beta * k as f64).unwrap();
            assert!((got - (1.0 + terms.r)).abs() < 1e-9);
            let doubled = expected_degree_one(&p, 2.0 * terms.beta * k as f64).unwrap();
            assert!((doubled - 2.0 * got).abs() < 1e-9);
        }
        let p = canonical(1000);
        let r = crate::distributions::compute_r(&p).unwrap();
        let got = expected_degree_one(&p, SolitonTerms::new(&p).unwrap().beta * 1000.0).unwrap();
        assert!((got - r).abs() / r < 0.05);
    }

    #[test]
    fn switch_thresholds() {
        assert_eq!(switch_threshold(&canonical(1000)).unwrap(), 30);
        assert_eq!(switch_threshold(&canonical(30)).unwrap(), 4);
        assert_eq!(threshold_from_r(3.0), 3);
        assert_eq!(threshold_from_r(3.000001), 4);
    }
}
