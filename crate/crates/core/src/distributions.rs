//! Degree distributions: ideal soliton, robust soliton, and the starter/closer
//! pair obtained by splitting the robust soliton's spike off into its own
//! configuration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Probability mass over degrees `1..=k`, with a precomputed cdf for sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    k: usize,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl DegreeDistribution {
    /// Builds a distribution from nonnegative weights for degrees `1..=weights.len()`.
    /// The weights are normalized; they need not sum to one.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("degree distribution needs k >= 1"));
        }
        if let Some(bad) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid(format!(
                "weight for degree {} is {}",
                bad + 1,
                weights[bad]
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(invalid("degree weights sum to zero"));
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        // Pin the tail so a uniform draw can never fall past the last degree.
        let last_positive = pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for c in cdf.iter_mut().skip(last_positive) {
            *c = 1.0;
        }
        Ok(Self {
            k: pmf.len(),
            pmf,
            cdf,
        })
    }

    /// All mass on degree `degree`.
    pub fn point_mass(k: usize, degree: usize) -> Result<Self> {
        if degree == 0 || degree > k {
            return Err(invalid(format!("degree {degree} outside 1..={k}")));
        }
        let mut w = vec![0.0; k];
        w[degree - 1] = 1.0;
        Self::from_weights(w)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Probability of degree `d` (zero outside `1..=k`).
    pub fn pmf(&self, d: usize) -> f64 {
        if d == 0 || d > self.k {
            0.0
        } else {
            self.pmf[d - 1]
        }
    }

    /// Cumulative probability of degrees `1..=d`.
    pub fn cdf(&self, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            self.cdf[d.min(self.k) - 1]
        }
    }

    pub fn pmf_slice(&self) -> &[f64] {
        &self.pmf
    }

    pub fn cdf_slice(&self) -> &[f64] {
        &self.cdf
    }

    /// Inverse-transform sample: the smallest degree whose cdf exceeds `u`.
    pub fn sample(&self, u: f64) -> usize {
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.k - 1) + 1
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Pointwise mixture `w * self + (1 - w) * other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        if self.k != other.k {
            return Err(invalid("cannot mix distributions with different k"));
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(invalid(format!("mixture weight {w} outside [0, 1]")));
        }
        Self::from_weights(
            self.pmf
                .iter()
                .zip(&other.pmf)
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect(),
        )
    }
}

/// Free function form of [`DegreeDistribution::sample`].
pub fn sample_degree(dist: &DegreeDistribution, u: f64) -> usize {
    dist.sample(u)
}

/// Parameters of the robust soliton family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub k: usize,
    pub c: f64,
    pub delta: f64,
}

impl SolitonParams {
    pub fn new(k: usize, c: f64, delta: f64) -> Result<Self> {
        let p = Self { k, c, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k must be at least 1"));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(invalid(format!("c must be positive, got {}", self.c)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// `R = c ln(k/δ) √k`, the expected ripple size.
pub fn compute_r(params: &SolitonParams) -> Result<f64> {
    params.validate()?;
    let k = params.k as f64;
    Ok(params.c * (k / params.delta).ln() * k.sqrt())
}

/// Ideal soliton ρ(d): `1/k` at d=1, `1/(d(d-1))` above.
pub fn ideal_soliton(k: usize) -> Result<DegreeDistribution> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    DegreeDistribution::from_weights(ideal_weights(k))
}

fn ideal_weights(k: usize) -> Vec<f64> {
    (1..=k)
        .map(|d| {
            if d == 1 {
                1.0 / k as f64
            } else {
                1.0 / (d as f64 * (d as f64 - 1.0))
            }
        })
        .collect()
}

/// The unnormalized pieces of the robust soliton for one parameter set.
///
/// `spike` is `round(k/R)` with ties rounded up; the τ branch `R/(dk)` covers
/// `1..spike`, the spike mass `R ln(R/δ)/k` sits at `spike`, and τ is zero above.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolitonTerms {
    pub params: SolitonParams,
    pub r: f64,
    pub spike: usize,
    /// ρ(d) for d = 1..=k.
    pub rho: Vec<f64>,
    /// τ(d) for d = 1..=k, including the spike.
    pub tau: Vec<f64>,
    /// Σ (ρ + τ).
    pub beta: f64,
    /// β − τ(spike).
    pub gamma: f64,
}

impl SolitonTerms {
    pub fn new(params: &SolitonParams) -> Result<Self> {
        let r = compute_r(params)?;
        let k = params.k;
        let ratio = k as f64 / r;
        // f64::round rounds half away from zero, which is "ties up" for positives.
        let spike = ratio.round();
        if !(spike >= 1.0 && spike <= k as f64) {
            return Err(invalid(format!(
                "spike degree round(k/R) = {spike} outside 1..={k} (R = {r})"
            )));
        }
        let spike = spike as usize;
        let spike_mass = r * (r / params.delta).ln() / k as f64;
        if !(spike_mass >= 0.0) {
            return Err(invalid(format!(
                "spike mass R ln(R/delta)/k = {spike_mass} is negative"
            )));
        }
        let rho = ideal_weights(k);
        let tau: Vec<f64> = (1..=k)
            .map(|d| {
                if d < spike {
                    r / (d as f64 * k as f64)
                } else if d == spike {
                    spike_mass
                } else {
                    0.0
                }
            })
            .collect();
        let beta: f64 = rho.iter().sum::<f64>() + tau.iter().sum::<f64>();
        let gamma = beta - spike_mass;
        Ok(Self {
            params: *params,
            r,
            spike,
            rho,
            tau,
            beta,
            gamma,
        })
    }

    pub fn tau_spike(&self) -> f64 {
        self.tau[self.spike - 1]
    }

    pub fn robust(&self) -> Result<DegreeDistribution> {
        DegreeDistribution::from_weights(self.rho.iter().zip(&self.tau).map(|(a, b)| a + b).collect())
    }

    pub fn starter(&self) -> Result<DegreeDistribution> {
        let mut w: Vec<f64> = self.rho.iter().zip(&self.tau).map(|(a, b)| a + b).collect();
        w[self.spike - 1] = self.rho[self.spike - 1];
        DegreeDistribution::from_weights(w)
    }

    pub fn closer(&self) -> Result<DegreeDistribution> {
        DegreeDistribution::point_mass(self.params.k, self.spike)
    }
}

/// Robust soliton μ(d) = (ρ(d) + τ(d)) / β.
pub fn robust_soliton(params: &SolitonParams) -> Result<DegreeDistribution> {
    SolitonTerms::new(params)?.robust()
}

/// Robust soliton with the spike term removed, renormalized by γ.
pub fn starter(params: &SolitonParams) -> Result<DegreeDistribution> {
    SolitonTerms::new(params)?.starter()
}

/// Point mass at the spike degree.
pub fn closer(params: &SolitonParams) -> Result<DegreeDistribution> {
    SolitonTerms::new(params)?.closer()
}

/// Named distribution families, as accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Ideal,
    Robust,
    Starter,
    Closer,
}

impl DistKind {
    pub fn build(self, params: &SolitonParams) -> Result<DegreeDistribution> {
        match self {
            DistKind::Ideal => ideal_soliton(params.k),
            DistKind::Robust => robust_soliton(params),
            DistKind::Starter => starter(params),
            DistKind::Closer => closer(params),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistKind::Ideal => "ideal",
            DistKind::Robust => "robust",
            DistKind::Starter => "starter",
            DistKind::Closer => "closer",
        }
    }
}

impl std::str::FromStr for DistKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(DistKind::Ideal),
            "robust" => Ok(DistKind::Robust),
            "starter" => Ok(DistKind::Starter),
            "closer" => Ok(DistKind::Closer),
            other => Err(invalid(format!("unknown distribution kind '{other}'"))),
        }
    }
}

/// `degree,pmf,cdf` rows.
pub fn to_csv(dist: &DegreeDistribution) -> String {
    let mut out = String::from("degree,pmf,cdf\n");
    for d in 1..=dist.k() {
        out.push_str(&format!("{},{},{}\n", d, dist.pmf(d), dist.cdf(d)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SUM_TOLERANCE: f64 = 1e-12;

    fn canonical(k: usize) -> SolitonParams {
        SolitonParams::new(k, 0.1, 0.1).unwrap()
    }

    fn assert_normalized(d: &DegreeDistribution) {
        let s: f64 = d.pmf_slice().iter().sum();
        assert!((s - 1.0).abs() < SUM_TOLERANCE, "sum = {s}");
        assert!(d.pmf_slice().iter().all(|&p| p >= 0.0));
        assert!(d.cdf_slice().windows(2).all(|w| w[0] <= w[1]));
        assert!((d.cdf(d.k()) - 1.0).abs() < SUM_TOLERANCE);
    }

    #[test]
    fn ideal_small_cases() {
        assert_eq!(ideal_soliton(1).unwrap().pmf_slice(), &[1.0]);
        let d2 = ideal_soliton(2).unwrap();
        assert_eq!(d2.pmf_slice(), &[0.5, 0.5]);
        let d4 = ideal_soliton(4).unwrap();
        let want = [0.25, 0.5, 1.0 / 6.0, 1.0 / 12.0];
        for (a, b) in d4.pmf_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(ideal_soliton(0).is_err());
    }

    #[test]
    fn r_values() {
        // Independent evaluation: 0.1 * ln(10000) * sqrt(1000) = 29.1256...
        let r = compute_r(&canonical(1000)).unwrap();
        assert!((r - 29.1256).abs() < 1e-3, "{r}");
        let r30 = compute_r(&canonical(30)).unwrap();
        assert!((r30 - 3.1241).abs() < 1e-3, "{r30}");
        assert!(SolitonParams::new(100, 0.0, 0.1).is_err());
        assert!(SolitonParams::new(100, 0.1, 1.0).is_err());
        assert!(SolitonParams::new(100, 0.1, 0.0).is_err());
    }

    #[test]
    fn r_is_monotone() {
        let ks = [10usize, 100, 1000, 10000];
        let cs = [0.01, 0.05, 0.1, 0.5];
        let ds = [0.01, 0.05, 0.1, 0.5];
        let r = |k, c, d| compute_r(&SolitonParams::new(k, c, d).unwrap()).unwrap();
        for &c in &cs {
            for &d in &ds {
                for w in ks.windows(2) {
                    assert!(r(w[0], c, d) < r(w[1], c, d));
                }
            }
        }
        for &k in &ks {
            for &d in &ds {
                for w in cs.windows(2) {
                    assert!(r(k, w[0], d) < r(k, w[1], d));
                }
            }
            for &c in &cs {
                for w in ds.windows(2) {
                    assert!(r(k, c, w[0]) > r(k, c, w[1]));
                }
            }
        }
    }

    #[test]
    fn robust_spike_k1000() {
        let t = SolitonTerms::new(&canonical(1000)).unwrap();
        assert_eq!(t.spike, 34);
        let mu = t.robust().unwrap();
        assert_normalized(&mu);
        assert!(mu.pmf(34) > mu.pmf(33));
        assert!(mu.pmf(34) > mu.pmf(35));
    }

    #[test]
    fn robust_first_mass_k30() {
        let t = SolitonTerms::new(&canonical(30)).unwrap();
        assert_eq!(t.spike, 10);
        let mu = t.robust().unwrap();
        let expected = (1.0 / 30.0 + t.r / 30.0) / t.beta;
        assert!((mu.pmf(1) - expected).abs() < 1e-15);
    }

    #[test]
    fn starter_and_closer() {
        let t = SolitonTerms::new(&canonical(1000)).unwrap();
        let mu = t.robust().unwrap();
        let lambda = t.starter().unwrap();
        assert_normalized(&lambda);
        assert!(lambda.pmf(34) < mu.pmf(34));
        assert!(lambda.pmf(1) > mu.pmf(1));
        assert!((t.gamma - (t.beta - t.tau_spike())).abs() < 1e-15);
        for d in 1..=1000 {
            if d != t.spike {
                let lhs = t.beta * mu.pmf(d);
                let rhs = t.gamma * lambda.pmf(d);
                assert!((lhs - rhs).abs() <= 1e-14 * lhs.max(1e-300), "d={d}");
            }
        }
        let theta = t.closer().unwrap();
        assert_eq!(theta.pmf(34), 1.0);
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(theta.sample(u), 34);
        }
    }

    #[test]
    fn pathological_spike_rejected() {
        // k=1: R = 0.1 ln(10) ≈ 0.23, so k/R ≈ 4.3 lies above k.
        assert!(robust_soliton(&canonical(1)).is_err());
    }

    #[test]
    fn sampling_examples() {
        let one = DegreeDistribution::from_weights(vec![1.0]).unwrap();
        assert_eq!(one.sample(0.7), 1);
        let d = DegreeDistribution::from_weights(vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(d.sample(0.5), 1);
        assert_eq!(d.sample(0.9), 2);
        assert_eq!(d.sample(0.0), 1);
    }

    #[test]
    fn all_constructors_normalized() {
        for k in [2usize, 10, 30, 100, 1000, 5000] {
            let p = canonical(k);
            assert_normalized(&ideal_soliton(k).unwrap());
            if let Ok(t) = SolitonTerms::new(&p) {
                assert_normalized(&t.robust().unwrap());
                assert_normalized(&t.starter().unwrap());
                assert_normalized(&t.closer().unwrap());
            }
        }
    }

    #[test]
    fn empirical_frequencies_match() {
        let mu = robust_soliton(&canonical(100)).unwrap();
        let mut rng = crate::rng::SplitMix64::new(2024);
        let n = 1_000_000usize;
        let mut counts = vec![0usize; 101];
        for _ in 0..n {
            counts[mu.sample(rng.next_f64())] += 1;
        }
        for d in 1..=100 {
            let p = mu.pmf(d);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = counts[d] as f64 / n as f64;
            if p == 0.0 {
                assert_eq!(counts[d], 0);
            } else {
                assert!((freq - p).abs() <= 4.0 * se, "d={d} freq={freq} p={p}");
            }
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = to_csv(&ideal_soliton(3).unwrap());
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "degree,pmf,cdf");
        assert_eq!(lines.len(), 4);
    }
}
