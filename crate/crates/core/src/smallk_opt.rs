//! Exact decoding-state Markov chains for very short codes, and the
//! optimization of degree distributions over them.
//!
//! A state is what a peeling receiver knows: the set of solved input symbols
//! and the set of buffered output symbols reduced to their unsolved
//! neighbors. Each reception draws a degree from P (or from Q once enough
//! symbols are solved) and a uniform neighbor set, then peels. States are
//! identified up to relabeling of the input symbols.

use std::collections::HashMap;

use serde::Serialize;

use crate::distributions::DegreeDistribution;
use crate::error::{invalid, Error, Result};
use crate::mc_session::{uniform_channels, McScheme, Session, StopRule};
use crate::rng::{derive_seed, SplitMix64};
use crate::stats::proportion_stderr;

/// Largest code length the enumerator accepts.
pub const MAX_K: usize = 5;

/// Canonical receiver knowledge. `sets` are bitmasks over unsolved symbols,
/// each with at least two bits, sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DecodeState {
    pub solved: u8,
    pub sets: Vec<u8>,
}

impl DecodeState {
    pub fn solved_count(&self) -> usize {
        self.solved.count_ones() as usize
    }

    fn key(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.sets.len() + 1);
        v.push(self.solved);
        v.extend_from_slice(&self.sets);
        v
    }
}

/// Adds neighbor mask `new` to `(solved, sets)` and peels to a fixpoint.
fn peel(solved: u8, sets: &[u8], new: u8) -> (u8, Vec<u8>) {
    let mut solved = solved;
    let mut buf: Vec<u8> = sets.to_vec();
    buf.push(new);
    loop {
        let mut progressed = false;
        for &b in &buf {
            let rest = b & !solved;
            if rest.count_ones() == 1 {
                solved |= rest;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let mut out: Vec<u8> = buf
        .into_iter()
        .map(|b| b & !solved)
        .filter(|b| b.count_ones() >= 2)
        .collect();
    out.sort_unstable();
    out.dedup();
    (solved, out)
}

struct Relabeler {
    // perm_masks[p][m] = image of mask m under permutation p
    perm_masks: Vec<Vec<u8>>,
}

impl Relabeler {
    fn new(k: usize) -> Self {
        let mut perms: Vec<Vec<usize>> = vec![Vec::new()];
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
        let perm_masks = perms
            .iter()
            .map(|p| {
                (0..(1usize << k))
                    .map(|m| {
                        (0..k)
                            .filter(|&i| m & (1 << i) != 0)
                            .fold(0u8, |acc, i| acc | (1 << p[i]))
                    })
                    .collect()
            })
            .collect();
        Self { perm_masks }
    }

    fn canonical(&self, solved: u8, sets: &[u8]) -> DecodeState {
        let mut best: Option<Vec<u8>> = None;
        let mut scratch = Vec::with_capacity(sets.len() + 1);
        for pm in &self.perm_masks {
            scratch.clear();
            scratch.extend(sets.iter().map(|&s| pm[s as usize]));
            scratch.sort_unstable();
            scratch.insert(0, pm[solved as usize]);
            if best.as_ref().is_none_or(|b| scratch < *b) {
                best = Some(scratch.clone());
            }
        }
        let key = best.expect("at least the identity permutation");
        DecodeState {
            solved: key[0],
            sets: key[1..].to_vec(),
        }
    }
}

/// One outgoing edge: probability `weight * X[degree - 1]` where `X` is Q
/// for states past the switch and P otherwise. Degree 0 marks the absorbing
/// self-loop of the full-recovery state, whose probability is `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub to: usize,
    pub degree: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionGraph {
    pub k: usize,
    pub switch_after_solved: Option<usize>,
    /// Receptions covered from the initial state; `None` means the graph is closed.
    pub horizon: Option<usize>,
    pub states: Vec<DecodeState>,
    pub uses_q: Vec<bool>,
    pub transitions: Vec<Vec<Transition>>,
    pub initial: usize,
    pub full: usize,
}

/// Solved count at which the tabulated two-configuration codes switch to Q:
/// once a single input symbol remains (`k - 1` solved).
pub fn default_switch_solved(k: usize) -> usize {
    k.saturating_sub(1).max(1)
}

/// `ceil(k - (k+1)/2)`: the switch point implied by degree 2 dominating
/// degree 1 (`u <= (k+1)/2`).
pub fn domination_switch_solved(k: usize) -> usize {
    (2 * k).saturating_sub(k + 1).div_ceil(2)
}

/// Builds the full chain (or, for `k = 5`, the part reachable in `k` receptions).
pub fn build_graph(k: usize, switch_after_solved: Option<usize>) -> Result<TransitionGraph> {
    let horizon = if k >= 5 { Some(k) } else { None };
    build_graph_with_horizon(k, switch_after_solved, horizon)
}

pub fn build_graph_with_horizon(
    k: usize,
    switch_after_solved: Option<usize>,
    horizon: Option<usize>,
) -> Result<TransitionGraph> {
    if k == 0 || k > MAX_K {
        return Err(Error::Unsupported(format!(
            "exact enumeration supports 1 <= k <= {MAX_K}, got {k}"
        )));
    }
    if let Some(s) = switch_after_solved {
        if s > k {
            return Err(invalid(format!("switch after {s} solved exceeds k = {k}")));
        }
    }
    let relabel = Relabeler::new(k);
    let full_mask: u8 = ((1u16 << k) - 1) as u8;
    let subsets: Vec<Vec<u8>> = (0..=k)
        .map(|d| {
            (0..=full_mask)
                .filter(|m| m.count_ones() as usize == d)
                .collect()
        })
        .collect();

    let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut states: Vec<DecodeState> = Vec::new();
    let mut depth: Vec<usize> = Vec::new();
    let mut intern = |s: DecodeState, d: usize, states: &mut Vec<DecodeState>, depth: &mut Vec<usize>| {
        *index.entry(s.key()).or_insert_with(|| {
            states.push(s);
            depth.push(d);
            states.len() - 1
        })
    };
    let initial = intern(relabel.canonical(0, &[]), 0, &mut states, &mut depth);
    let full = intern(relabel.canonical(full_mask, &[]), usize::MAX, &mut states, &mut depth);

    let mut transitions: Vec<Vec<Transition>> = Vec::new();
    let mut cursor = 0;
    while cursor < states.len() {
        let state = states[cursor].clone();
        let here = depth[cursor];
        let mut out: Vec<Transition> = Vec::new();
        if cursor == full {
            // Absorbing self-loop, independent of P and Q.
            out.push(Transition {
                to: full,
                degree: 0,
                weight: 1.0,
            });
        } else if horizon.is_none_or(|h| here < h) {
            for d in 1..=k {
                let share = 1.0 / subsets[d].len() as f64;
                let mut merged: Vec<(usize, f64)> = Vec::new();
                for &t in &subsets[d] {
                    let (solved, sets) = peel(state.solved, &state.sets, t);
                    let next = relabel.canonical(solved, &sets);
                    let to = intern(next, here + 1, &mut states, &mut depth);
                    match merged.iter_mut().find(|(s, _)| *s == to) {
                        Some(e) => e.1 += share,
                        None => merged.push((to, share)),
                    }
                }
                out.extend(merged.into_iter().map(|(to, weight)| Transition {
                    to,
                    degree: d,
                    weight,
                }));
            }
        }
        transitions.push(out);
        cursor += 1;
    }
    let uses_q = states
        .iter()
        .map(|s| switch_after_solved.is_some_and(|sw| s.solved_count() >= sw))
        .collect();
    Ok(TransitionGraph {
        k,
        switch_after_solved,
        horizon,
        states,
        uses_q,
        transitions,
        initial,
        full,
    })
}

impl TransitionGraph {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn check(&self, p: &[f64], q: &[f64], n: usize) -> Result<()> {
        if p.len() != self.k || q.len() != self.k {
            return Err(invalid(format!("P and Q need {} entries", self.k)));
        }
        if let Some(h) = self.horizon {
            if n > h {
                return Err(Error::Unsupported(format!(
                    "graph only covers {h} receptions, asked for {n}"
                )));
            }
        }
        Ok(())
    }

    fn edge_prob(&self, from: usize, t: &Transition, p: &[f64], q: &[f64]) -> f64 {
        if t.degree == 0 {
            return t.weight;
        }
        let x = if self.uses_q[from] { q } else { p };
        t.weight * x[t.degree - 1]
    }

    /// Sum of outgoing probabilities of `state` under (P, Q).
    pub fn outgoing_mass(&self, state: usize, p: &[f64], q: &[f64]) -> f64 {
        self.transitions[state]
            .iter()
            .map(|t| self.edge_prob(state, t, p, q))
            .sum()
    }

    /// Probability of full recovery within `n` receptions.
    pub fn success_probability(&self, p: &[f64], q: &[f64], n: usize) -> Result<f64> {
        self.check(p, q, n)?;
        let mut mass = vec![0.0; self.len()];
        mass[self.initial] = 1.0;
        for _ in 0..n {
            mass = self.step(&mass, p, q);
        }
        Ok(mass[self.full])
    }

    fn step(&self, mass: &[f64], p: &[f64], q: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.len()];
        for (s, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for t in &self.transitions[s] {
                next[t.to] += m * self.edge_prob(s, t, p, q);
            }
        }
        next
    }

    /// Value and gradient of the success probability with respect to P and Q.
    pub fn success_with_gradient(&self, p: &[f64], q: &[f64], n: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.check(p, q, n)?;
        let mut forward = vec![vec![0.0; self.len()]; n + 1];
        forward[0][self.initial] = 1.0;
        for t in 0..n {
            forward[t + 1] = self.step(&forward[t], p, q);
        }
        // backward[t][s] = P(full at n | in s after t receptions)
        let mut backward = vec![vec![0.0; self.len()]; n + 1];
        backward[n][self.full] = 1.0;
        for t in (0..n).rev() {
            for s in 0..self.len() {
                backward[t][s] = self.transitions[s]
                    .iter()
                    .map(|e| self.edge_prob(s, e, p, q) * backward[t + 1][e.to])
                    .sum();
            }
        }
        let mut gp = vec![0.0; self.k];
        let mut gq = vec![0.0; self.k];
        for t in 0..n {
            for s in 0..self.len() {
                let a = forward[t][s];
                if a == 0.0 || s == self.full {
                    continue;
                }
                let g = if self.uses_q[s] { &mut gq } else { &mut gp };
                for e in &self.transitions[s] {
                    g[e.degree - 1] += a * e.weight * backward[t + 1][e.to];
                }
            }
        }
        Ok((forward[n][self.full], gp, gq))
    }
}

/// `success_probability` as a free function.
pub fn success_probability(graph: &TransitionGraph, p: &DegreeDistribution, q: &DegreeDistribution, n: usize) -> Result<f64> {
    graph.success_probability(p.pmf_slice(), q.pmf_slice(), n)
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn random_simplex(rng: &mut SplitMix64, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.next_f64()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizerSettings {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iters: 20_000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptResult {
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Option<Vec<f64>>,
    pub value: f64,
    pub restarts: usize,
    pub best_restart: usize,
    pub iterations: usize,
    pub k: usize,
    pub switch_after_solved: Option<usize>,
}

impl OptResult {
    pub fn p_dist(&self) -> Result<DegreeDistribution> {
        DegreeDistribution::from_weights(self.p.clone())
    }

    pub fn q_dist(&self) -> Result<Option<DegreeDistribution>> {
        self.q.clone().map(DegreeDistribution::from_weights).transpose()
    }
}

struct LocalResult {
    p: Vec<f64>,
    q: Vec<f64>,
    value: f64,
    iterations: usize,
}

fn ascend(graph: &TransitionGraph, n: usize, mut p: Vec<f64>, mut q: Vec<f64>, joint: bool, max_iters: usize) -> LocalResult {
    let eval = |p: &[f64], q: &[f64]| graph.success_with_gradient(p, q, n).expect("validated sizes");
    let (mut value, mut gp, mut gq) = eval(&p, &q);
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut accepted = false;
        while step > 1e-14 {
            let np = project_simplex(&p.iter().zip(&gp).map(|(x, g)| x + step * g).collect::<Vec<_>>());
            let nq = if joint {
                project_simplex(&q.iter().zip(&gq).map(|(x, g)| x + step * g).collect::<Vec<_>>())
            } else {
                q.clone()
            };
            let dir: f64 = np.iter().zip(&p).zip(&gp).map(|((a, b), g)| (a - b) * g).sum::<f64>()
                + nq.iter().zip(&q).zip(&gq).map(|((a, b), g)| (a - b) * g).sum::<f64>();
            let (nv, ngp, ngq) = eval(&np, &nq);
            if dir > 0.0 && nv >= value + 1e-4 * dir {
                let gain = nv - value;
                p = np;
                q = nq;
                value = nv;
                gp = ngp;
                gq = ngq;
                step *= 2.0;
                accepted = gain > 1e-15;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    LocalResult {
        p,
        q,
        value,
        iterations,
    }
}

/// Maximizes the success probability at `n = k` receptions over P (pure) or
/// over P and Q jointly (two configurations).
pub fn optimize(k: usize, switch_after_solved: Option<usize>) -> Result<OptResult> {
    optimize_with(k, switch_after_solved, OptimizerSettings::default())
}

pub fn optimize_with(k: usize, switch_after_solved: Option<usize>, settings: OptimizerSettings) -> Result<OptResult> {
    if settings.restarts == 0 {
        return Err(invalid("need at least one restart"));
    }
    let graph = build_graph(k, switch_after_solved)?;
    let joint = switch_after_solved.is_some();
    let run = |i: usize| {
        let mut rng = SplitMix64::new(derive_seed(settings.seed, i as u64));
        let p = random_simplex(&mut rng, k);
        let q = if joint {
            random_simplex(&mut rng, k)
        } else {
            vec![1.0 / k as f64; k]
        };
        ascend(&graph, k, p, q, joint, settings.max_iters)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<LocalResult> = {
        use rayon::prelude::*;
        (0..settings.restarts).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<LocalResult> = (0..settings.restarts).map(run).collect();

    let (best_restart, best) = results
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .expect("restarts >= 1");
    Ok(OptResult {
        p: best.p.clone(),
        q: joint.then(|| best.q.clone()),
        value: best.value,
        restarts: settings.restarts,
        best_restart,
        iterations: results.iter().map(|r| r.iterations).sum(),
        k,
        switch_after_solved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Simulated success probability at `n` receptions over an erasure-free channel.
pub fn monte_carlo_success(
    p: &DegreeDistribution,
    q: Option<&DegreeDistribution>,
    switch_after_solved: Option<usize>,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    let k = p.k();
    let scheme = match (q, switch_after_solved) {
        (Some(q), Some(s)) => McScheme::two_phase(p.clone(), q.clone(), k.saturating_sub(s))?,
        _ => McScheme::single(1, p.clone()),
    };
    let trial = |i: usize| -> bool {
        let s = derive_seed(seed, i as u64);
        let channels = uniform_channels(&scheme, 0.0, s).expect("valid rate");
        let mut session = Session::new(&scheme, None, channels, s).expect("matching channels");
        session.run(StopRule::received(n), |_, _| {});
        session.decoder().is_complete()
    };
    #[cfg(feature = "parallel")]
    let hits = {
        use rayon::prelude::*;
        (0..trials).into_par_iter().filter(|&i| trial(i)).count()
    };
    #[cfg(not(feature = "parallel"))]
    let hits = (0..trials).filter(|&i| trial(i)).count();
    let value = hits as f64 / trials as f64;
    Ok(McEstimate {
        value,
        stderr: proportion_stderr(value, trials),
        trials,
    })
}
