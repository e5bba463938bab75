//! Seeded Monte-Carlo experiments over the three canonical schemes:
//! reception overhead at full recovery, success rate and residual symbol
//! erasure rate as functions of overhead.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{SolitonParams, SolitonTerms};
use crate::error::{invalid, Error, Result};
use crate::mc_session::{uniform_channels, McScheme, SchemeKind, Session, StopRule};
use crate::rng::{derive_seed, GENERATOR_VERSION};
use crate::stats::{intervals_disjoint, proportion_stderr, MeanEstimate};

/// Trials that have not finished after `CAP_FACTOR * k` receptions are abandoned.
pub const CAP_FACTOR: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scheme: SchemeKind,
    pub k: usize,
    pub c: f64,
    pub delta: f64,
    pub trials: usize,
    pub base_seed: u64,
    /// Reception overheads at which the curves are sampled.
    pub grid: Vec<f64>,
    pub erasure: f64,
}

impl ExperimentSpec {
    /// The canonical setting: k = 1000, c = δ = 0.1, overhead grid 0..0.5 step 0.01.
    pub fn canonical(scheme: SchemeKind, trials: usize, base_seed: u64) -> Self {
        Self {
            scheme,
            k: 1000,
            c: 0.1,
            delta: 0.1,
            trials,
            base_seed,
            grid: parse_grid("0:0.5:0.01").expect("static grid"),
            erasure: 0.0,
        }
    }

    pub fn params(&self) -> Result<SolitonParams> {
        SolitonParams::new(self.k, self.c, self.delta)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(invalid("overhead grid is empty"));
        }
        if self.grid.windows(2).any(|w| w[1] < w[0]) || self.grid.iter().any(|x| !(*x >= 0.0)) {
            return Err(invalid("overhead grid must be nonnegative and nondecreasing"));
        }
        if !(0.0..1.0).contains(&self.erasure) {
            return Err(invalid(format!("erasure rate {} outside [0, 1)", self.erasure)));
        }
        Ok(())
    }

    pub fn scheme(&self) -> Result<McScheme> {
        self.scheme.build(&self.params()?)
    }

    /// Reception count corresponding to each grid overhead.
    pub fn grid_receptions(&self) -> Vec<usize> {
        self.grid
            .iter()
            .map(|x| (self.k as f64 * (1.0 + x) + 1e-9).floor() as usize)
            .collect()
    }

    pub fn trial_seed(&self, index: usize) -> u64 {
        derive_seed(self.base_seed, index as u64)
    }

    /// Builds a spec from `key = value` pairs (`scheme k c delta trials seed grid erasure`).
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let get = |key: &str| pairs.get(key).map(String::as_str);
        let num = |key: &str, default: &str| -> Result<f64> {
            let v = get(key).unwrap_or(default);
            v.parse::<f64>()
                .map_err(|_| invalid(format!("{key}: cannot parse '{v}'")))
        };
        let int = |key: &str, default: &str| -> Result<u64> {
            let v = get(key).unwrap_or(default);
            v.parse::<u64>()
                .map_err(|_| invalid(format!("{key}: cannot parse '{v}'")))
        };
        let spec = Self {
            scheme: get("scheme").unwrap_or("starter+closer").parse()?,
            k: int("k", "1000")? as usize,
            c: num("c", "0.1")?,
            delta: num("delta", "0.1")?,
            trials: int("trials", "10000")? as usize,
            base_seed: int("seed", "42")?,
            grid: parse_grid(get("grid").unwrap_or("0:0.5:0.01"))?,
            erasure: num("erasure", "0")?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || invalid(format!("bad grid '{text}'"));
    if text.contains(':') {
        let parts: Vec<f64> = text
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect())
    } else {
        text.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect()
    }
}

/// Parses a plain-text config: `key = value` lines, `#` comments.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':').filter(|(k, _)| !k.contains(' ')))
            .ok_or_else(|| invalid(format!("config line {}: expected key = value", n + 1)))?;
        out.insert(
            key.trim().trim_start_matches("--").to_string(),
            value.trim().to_string(),
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    /// Receptions at completion, or at the cap.
    pub received: usize,
    pub capped: bool,
    /// Unsolved count after each grid reception count.
    pub unsolved_at_grid: Vec<u32>,
}

impl TrialRecord {
    pub fn overhead(&self, k: usize) -> f64 {
        self.received as f64 / k as f64 - 1.0
    }
}

/// Runs one seeded session to completion (or the cap), sampling `u` on the grid.
pub fn run_trial(spec: &ExperimentSpec, scheme: &McScheme, index: usize) -> Result<TrialRecord> {
    let seed = spec.trial_seed(index);
    let grid_n = spec.grid_receptions();
    let channels = uniform_channels(scheme, spec.erasure, derive_seed(seed, 0xe7a5))?;
    let mut session = Session::new(scheme, None, channels, seed)?;
    let mut samples = vec![u32::MAX; grid_n.len()];
    let mut next = 0;
    session.run(StopRule::received(CAP_FACTOR * spec.k), |d, state| {
        if d.erased {
            return;
        }
        while next < grid_n.len() && state.received() == grid_n[next] {
            samples[next] = state.unsolved() as u32;
            next += 1;
        }
    });
    let state = session.decoder();
    for s in &mut samples[next..] {
        *s = state.unsolved() as u32;
    }
    Ok(TrialRecord {
        index,
        seed,
        received: state.received(),
        capped: !state.is_complete(),
        unsolved_at_grid: samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub overhead: f64,
    pub rate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub r: f64,
    pub spike: usize,
    pub switch_threshold: Option<usize>,
    /// Over uncapped trials.
    pub mean_overhead: MeanEstimate,
    pub capped: usize,
    pub success_rate: Vec<CurvePoint>,
    pub error_rate: Vec<CurvePoint>,
    #[serde(skip)]
    pub trials: Vec<TrialRecord>,
}

impl ExperimentResult {
    pub fn label(&self) -> &'static str {
        self.spec.scheme.label()
    }

    pub fn overheads(&self) -> Vec<f64> {
        self.trials
            .iter()
            .filter(|t| !t.capped)
            .map(|t| t.overhead(self.spec.k))
            .collect()
    }

    pub fn received_counts(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.received as f64).collect()
    }

    fn point_index(&self, overhead: f64) -> Option<usize> {
        self.spec
            .grid
            .iter()
            .position(|x| (x - overhead).abs() < 1e-9)
    }

    pub fn success_at(&self, overhead: f64) -> Option<CurvePoint> {
        self.point_index(overhead).map(|i| self.success_rate[i])
    }

    pub fn error_at(&self, overhead: f64) -> Option<CurvePoint> {
        self.point_index(overhead).map(|i| self.error_rate[i])
    }

    /// Per-trial unsolved fraction at a grid point.
    pub fn error_samples(&self, grid_index: usize) -> Vec<f64> {
        let k = self.spec.k as f64;
        self.trials
            .iter()
            .map(|t| t.unsolved_at_grid[grid_index] as f64 / k)
            .collect()
    }
}

/// Runs every trial of `spec`. Trials are independent and seeded by index, so
/// the result does not depend on how many workers run them.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let params = spec.params()?;
    let terms = SolitonTerms::new(&params)?;
    let scheme = spec.scheme()?;

    #[cfg(feature = "parallel")]
    let trials: Vec<TrialRecord> = {
        use rayon::prelude::*;
        (0..spec.trials)
            .into_par_iter()
            .map(|i| run_trial(spec, &scheme, i))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let trials: Vec<TrialRecord> = (0..spec.trials)
        .map(|i| run_trial(spec, &scheme, i))
        .collect::<Result<_>>()?;

    let k = spec.k;
    let n = trials.len();
    let overheads: Vec<f64> = trials
        .iter()
        .filter(|t| !t.capped)
        .map(|t| t.overhead(k))
        .collect();
    let capped = n - overheads.len();
    let grid_n = spec.grid_receptions();
    let mut success_rate = Vec::with_capacity(grid_n.len());
    let mut error_rate = Vec::with_capacity(grid_n.len());
    for (g, (&x, &limit)) in spec.grid.iter().zip(&grid_n).enumerate() {
        let hits = trials
            .iter()
            .filter(|t| !t.capped && t.received <= limit)
            .count();
        let rate = hits as f64 / n as f64;
        success_rate.push(CurvePoint {
            overhead: x,
            rate,
            stderr: proportion_stderr(rate, n),
        });
        let fractions: Vec<f64> = trials
            .iter()
            .map(|t| t.unsolved_at_grid[g] as f64 / k as f64)
            .collect();
        let m = MeanEstimate::from_samples(&fractions);
        error_rate.push(CurvePoint {
            overhead: x,
            rate: m.mean,
            stderr: m.stderr,
        });
    }
    let switch_threshold = (spec.scheme == SchemeKind::StarterCloser)
        .then(|| scheme.stages().get(1).map(|s| s.activate_at))
        .flatten();
    Ok(ExperimentResult {
        spec: spec.clone(),
        r: terms.r,
        spike: terms.spike,
        switch_threshold,
        mean_overhead: MeanEstimate::from_samples(&overheads),
        capped,
        success_rate,
        error_rate,
        trials,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RankedMean {
    pub label: String,
    pub mean: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairVerdict {
    /// Lower mean overhead.
    pub better: String,
    pub worse: String,
    pub ci_disjoint: bool,
    /// Grid overheads where the better-on-average scheme has the lower success rate.
    pub non_dominance: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub ranking: Vec<RankedMean>,
    pub pairs: Vec<PairVerdict>,
}

impl ComparisonReport {
    pub fn order(&self) -> Vec<&str> {
        self.ranking.iter().map(|r| r.label.as_str()).collect()
    }

    pub fn pair(&self, a: &str, b: &str) -> Option<&PairVerdict> {
        self.pairs
            .iter()
            .find(|p| (p.better == a && p.worse == b) || (p.better == b && p.worse == a))
    }
}

/// Ranks experiments by mean overhead with 95% intervals and flags where
/// success-rate curves cross.
pub fn compare(results: &[&ExperimentResult]) -> Result<ComparisonReport> {
    if results.len() < 2 {
        return Err(Error::InvalidComparison("need at least two experiments".into()));
    }
    let first = &results[0].spec;
    for r in results {
        if r.spec.k != first.k {
            return Err(Error::InvalidComparison(format!(
                "k differs: {} vs {}",
                r.spec.k, first.k
            )));
        }
        if r.spec.trials != first.trials {
            return Err(Error::InvalidComparison("trial counts differ".into()));
        }
        if r.spec.grid != first.grid {
            return Err(Error::InvalidComparison("overhead grids differ".into()));
        }
    }
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| {
        results[a]
            .mean_overhead
            .mean
            .total_cmp(&results[b].mean_overhead.mean)
    });
    let ranking = order
        .iter()
        .map(|&i| {
            let m = results[i].mean_overhead;
            let (lo, hi) = m.ci95();
            RankedMean {
                label: results[i].label().to_string(),
                mean: m.mean,
                stderr: m.stderr,
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect();
    let mut pairs = Vec::new();
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            let (better, worse) = (results[i], results[j]);
            let non_dominance = better
                .success_rate
                .iter()
                .zip(&worse.success_rate)
                .filter(|(b, w)| b.rate < w.rate)
                .map(|(b, _)| b.overhead)
                .collect();
            pairs.push(PairVerdict {
                better: better.label().to_string(),
                worse: worse.label().to_string(),
                ci_disjoint: intervals_disjoint(
                    better.mean_overhead.ci95(),
                    worse.mean_overhead.ci95(),
                ),
                non_dominance,
            });
        }
    }
    Ok(ComparisonReport { ranking, pairs })
}

#[derive(Serialize)]
struct Summary<'a> {
    scheme: &'a str,
    mean_overhead: f64,
    stderr: f64,
    trials: usize,
    capped: usize,
}

#[derive(Serialize)]
struct Meta<'a> {
    spec: &'a ExperimentSpec,
    r: f64,
    spike_degree: usize,
    switch_threshold: Option<usize>,
    crate_version: &'static str,
    generator_version: u8,
    cap_factor: usize,
}

/// Writes `summary.json`, `success_rate.csv`, `error_rate.csv`, `meta.json`
/// and `trials.csv` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let summary = Summary {
        scheme: result.label(),
        mean_overhead: result.mean_overhead.mean,
        stderr: result.mean_overhead.stderr,
        trials: result.spec.trials,
        capped: result.capped,
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    let meta = Meta {
        spec: &result.spec,
        r: result.r,
        spike_degree: result.spike,
        switch_threshold: result.switch_threshold,
        crate_version: env!("CARGO_PKG_VERSION"),
        generator_version: GENERATOR_VERSION,
        cap_factor: CAP_FACTOR,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    let curve = |header: &str, pts: &[CurvePoint]| {
        let mut s = format!("overhead,{header}\n");
        for p in pts {
            s.push_str(&format!("{},{}\n", p.overhead, p.rate));
        }
        s
    };
    fs::write(
        dir.join("success_rate.csv"),
        curve("success_rate", &result.success_rate),
    )?;
    fs::write(
        dir.join("error_rate.csv"),
        curve("error_rate", &result.error_rate),
    )?;
    let mut trials = String::from("index,seed,received,capped\n");
    for t in &result.trials {
        trials.push_str(&format!("{},{},{},{}\n", t.index, t.seed, t.received, t.capped));
    }
    fs::write(dir.join("trials.csv"), trials)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scheme: SchemeKind, k: usize, trials: usize) -> ExperimentSpec {
        ExperimentSpec {
            scheme,
            k,
            c: 0.1,
            delta: 0.1,
            trials,
            base_seed: 7,
            grid: parse_grid("0:0.5:0.05").unwrap(),
            erasure: 0.0,
        }
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0:0.5:0.01").unwrap();
        assert_eq!(g.len(), 51);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[20], 0.2);
        assert_eq!(g[50], 0.5);
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
    }

    #[test]
    fn grid_receptions_are_exact() {
        let spec = ExperimentSpec::canonical(SchemeKind::Robust, 1, 0);
        let n = spec.grid_receptions();
        assert_eq!(n[0], 1000);
        assert_eq!(n[7], 1070);
        assert_eq!(n[50], 1500);
    }

    #[test]
    fn config_text() {
        let kv = parse_config("# experiment\nscheme = robust\nk=200\ntrials: 10\n\n").unwrap();
        let spec = ExperimentSpec::from_pairs(&kv).unwrap();
        assert_eq!(spec.scheme, SchemeKind::Robust);
        assert_eq!(spec.k, 200);
        assert_eq!(spec.trials, 10);
        assert!(parse_config("nonsense line").is_err());
    }

    #[test]
    fn curves_are_monotone_and_deterministic() {
        let spec = small(SchemeKind::StarterCloser, 200, 300);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.trials, b.trials);
        assert!(a.success_rate.windows(2).all(|w| w[1].rate >= w[0].rate));
        assert!(a.error_rate.windows(2).all(|w| w[1].rate <= w[0].rate));
        assert!(a.success_rate.iter().chain(&a.error_rate).all(|p| (0.0..=1.0).contains(&p.rate)));
        assert!(a.overheads().iter().all(|&o| o >= 0.0));
    }

    #[test]
    fn trial_u_is_consistent_with_completion() {
        let spec = small(SchemeKind::Robust, 100, 50);
        let r = run_experiment(&spec).unwrap();
        let grid_n = spec.grid_receptions();
        for t in &r.trials {
            for (g, &n) in grid_n.iter().enumerate() {
                if n >= t.received && !t.capped {
                    assert_eq!(t.unsolved_at_grid[g], 0);
                } else {
                    assert!(t.unsolved_at_grid[g] > 0);
                }
            }
        }
    }

    #[test]
    fn compare_rejects_mismatch() {
        let a = run_experiment(&small(SchemeKind::Robust, 100, 20)).unwrap();
        let b = run_experiment(&small(SchemeKind::Starter, 120, 20)).unwrap();
        assert!(matches!(compare(&[&a, &b]), Err(Error::InvalidComparison(_))));
        assert!(compare(&[&a]).is_err());
    }

    #[test]
    fn outputs_written() {
        let dir = std::env::temp_dir().join(format!("mclt-harness-{}", std::process::id()));
        let r = run_experiment(&small(SchemeKind::Starter, 100, 10)).unwrap();
        write_outputs(&r, &dir).unwrap();
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["trials"], 10);
        assert!(summary["mean_overhead"].is_number());
        let sr = fs::read_to_string(dir.join("success_rate.csv")).unwrap();
        assert!(sr.starts_with("overhead,success_rate\n"));
        assert_eq!(sr.lines().count(), 12);
        assert!(fs::read_to_string(dir.join("error_rate.csv")).unwrap().starts_with("overhead,error_rate\n"));
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta["spec"]["scheme"], "starter");
        fs::remove_dir_all(dir).ok();
    }
}
