//! WebAssembly bindings behind `www/index.html`.
//!
//! Each export has a plain-Rust twin returning `Result<_, String>` so the
//! logic is testable off the browser.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mclt::distributions::{DistKind, SolitonParams, SolitonTerms};
use mclt::mc_session::{uniform_channels, SchemeKind, Session, StopRule};
use mclt::smallk_opt::{self, OptimizerSettings};

/// Probability mass for degrees `1..=k`.
pub fn pmf(kind: &str, k: usize, c: f64, delta: f64) -> Result<Vec<f64>, String> {
    let kind: DistKind = kind.parse().map_err(|e: mclt::Error| e.to_string())?;
    let params = SolitonParams::new(k, c, delta).map_err(|e| e.to_string())?;
    let dist = kind.build(&params).map_err(|e| e.to_string())?;
    Ok(dist.pmf_slice().to_vec())
}

#[derive(Debug, Serialize)]
pub struct Trace {
    pub k: usize,
    /// Unsolved count after each received symbol.
    pub unsolved: Vec<usize>,
    /// Configuration of each received symbol.
    pub config: Vec<u8>,
    pub switch_threshold: Option<usize>,
    pub generated: u64,
    pub success: bool,
}

/// One structure-only decoding session, recorded reception by reception.
pub fn trace(scheme: &str, k: usize, c: f64, delta: f64, erasure: f64, seed: u64) -> Result<Trace, String> {
    let kind: SchemeKind = scheme.parse().map_err(|e: mclt::Error| e.to_string())?;
    let params = SolitonParams::new(k, c, delta).map_err(|e| e.to_string())?;
    let scheme = kind.build(&params).map_err(|e| e.to_string())?;
    let channels = uniform_channels(&scheme, erasure, seed ^ 0xe7a5).map_err(|e| e.to_string())?;
    let mut session = Session::new(&scheme, None, channels, seed).map_err(|e| e.to_string())?;
    let mut unsolved = Vec::new();
    let mut config = Vec::new();
    session.run(StopRule::received(5 * k), |d, state| {
        if !d.erased {
            unsolved.push(state.unsolved());
            config.push(d.config_id);
        }
    });
    let switch_threshold = match kind {
        SchemeKind::StarterCloser => Some(
            mclt::analysis::threshold_from_r(SolitonTerms::new(&params).map_err(|e| e.to_string())?.r),
        ),
        _ => None,
    };
    Ok(Trace {
        k,
        unsolved,
        config,
        switch_threshold,
        generated: session.generated(),
        success: session.decoder().is_complete(),
    })
}

/// Best small-k distributions; `configs` is 1 or 2.
pub fn optimum(k: usize, configs: u8, restarts: usize) -> Result<smallk_opt::OptResult, String> {
    let switch = match configs {
        1 => None,
        2 => Some(smallk_opt::default_switch_solved(k)),
        n => return Err(format!("configs must be 1 or 2, got {n}")),
    };
    let settings = OptimizerSettings {
        restarts: restarts.max(1),
        ..Default::default()
    };
    smallk_opt::optimize_with(k, switch, settings).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = degreePmf)]
pub fn degree_pmf(kind: &str, k: usize, c: f64, delta: f64) -> Result<Vec<f64>, JsError> {
    pmf(kind, k, c, delta).map_err(|e| JsError::new(&e))
}

/// JSON-encoded [`Trace`].
#[wasm_bindgen(js_name = sessionTrace)]
pub fn session_trace(scheme: &str, k: usize, c: f64, delta: f64, erasure: f64, seed: u32) -> Result<String, JsError> {
    let t = trace(scheme, k, c, delta, erasure, seed as u64).map_err(|e| JsError::new(&e))?;
    to_json(&t)
}

/// JSON with `P`, `Q`, `value`, `restarts`, `best_restart`.
#[wasm_bindgen(js_name = smallKOptimum)]
pub fn small_k_optimum(k: usize, configs: u8, restarts: usize) -> Result<String, JsError> {
    let r = optimum(k, configs, restarts).map_err(|e| JsError::new(&e))?;
    to_json(&r)
}
