//! Browser demo: a scripted-expert rollout, the sensor response to wheel slip,
//! and the attention masks of a small DANNet trained in the page.
//!
//! The plain functions return serializable structs and are what the tests
//! exercise; the `#[wasm_bindgen]` wrappers hand them to JavaScript as JSON.

use pilectl::controllers::{ControllerKind, ControllerSpec};
use pilectl::dataset::{build_dataset, DatasetSpec};
use pilectl::numerics::RngState;
use pilectl::signals::CHANNEL_NAMES;
use pilectl::simulator::{
    generate_demonstrations, rollout, sense_clean, ConditionProfile, DemoConfig, LoaderState, RolloutConfig,
    ScriptedExpert, CONTROL_DT,
};
use pilectl::training::{trace_rows, train, TrainConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct RolloutTrace {
    pub condition: String,
    pub success: bool,
    pub termination: String,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub fill: Vec<f64>,
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub p_d: Vec<f64>,
    pub p_t: Vec<f64>,
    pub u_boom: Vec<f64>,
    pub u_bucket: Vec<f64>,
    pub u_gas: Vec<f64>,
}

pub fn expert_trace(condition: &str, seed: u64) -> Result<RolloutTrace, String> {
    let cond = ConditionProfile::resolve(condition).map_err(|e| e.to_string())?;
    let mut expert = ScriptedExpert::new(Default::default());
    let r = rollout(&mut expert, &cond, RolloutConfig::default(), &mut RngState::new(seed)).map_err(|e| e.to_string())?;
    let mut out = RolloutTrace {
        condition: cond.name.clone(),
        success: r.success,
        termination: r.termination.as_str().into(),
        t: vec![],
        x: vec![],
        fill: vec![],
        theta1: vec![],
        theta2: vec![],
        p_d: vec![],
        p_t: vec![],
        u_boom: vec![],
        u_bucket: vec![],
        u_gas: vec![],
    };
    for (i, p) in r.trajectory.iter().enumerate() {
        out.t.push(i as f64 * CONTROL_DT);
        out.x.push(p.state.x);
        out.fill.push(p.state.fill);
        out.theta1.push(p.state.theta1);
        out.theta2.push(p.state.theta2);
        out.p_d.push(p.obs.p_d());
        out.p_t.push(p.obs.p_t());
        out.u_boom.push(p.u.boom);
        out.u_bucket.push(p.u.bucket);
        out.u_gas.push(p.u.gas);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct SlipResponse {
    pub slip: Vec<f64>,
    pub p_d: Vec<f64>,
    pub p_t: Vec<f64>,
}

/// Noise-free drive and tilt pressure at a fixed internal load as slip goes from 0 to 0.9.
pub fn slip_response(load: f64, speed: f64) -> SlipResponse {
    let state = LoaderState {
        v: speed,
        internal_load: load,
        ..LoaderState::at_distance(-0.1)
    };
    let mut out = SlipResponse {
        slip: vec![],
        p_d: vec![],
        p_t: vec![],
    };
    for i in 0..=18 {
        let cond = ConditionProfile {
            slip: i as f64 * 0.05,
            ..ConditionProfile::summer().without_noise()
        };
        let s = sense_clean(&state, &cond);
        out.slip.push(cond.slip);
        out.p_d.push(s.p_d());
        out.p_t.push(s.p_t());
    }
    out
}

#[derive(Debug, Serialize)]
pub struct MaskTrace {
    pub channels: Vec<String>,
    pub t: Vec<f64>,
    /// One row per tick, one column per input channel.
    pub mask: Vec<Vec<f64>>,
    pub mask_u: Vec<[f64; 3]>,
    pub final_loss: f64,
}

/// Trains a small DANNet on a few summer demonstrations, then traces its masks
/// over a fresh demonstration recorded in `condition`.
pub fn attention_masks(condition: &str, seed: u64, epochs: usize) -> Result<MaskTrace, String> {
    let err = |e: pilectl::Error| e.to_string();
    let cfg = DemoConfig {
        n: 6,
        rate_hz: 20.0,
        ..Default::default()
    };
    let root = RngState::new(seed);
    let demos = generate_demonstrations(&cfg, &ConditionProfile::summer(), &mut root.derive(1)).map_err(err)?;
    let ds = build_dataset(&demos, &DatasetSpec::d1()).map_err(err)?;
    let spec = ControllerSpec::from_sensors(ControllerKind::Dannet, true, false).map_err(err)?;
    let train_cfg = TrainConfig {
        epochs: epochs.max(1),
        batch_size: 64,
        seed,
        ..Default::default()
    };
    let (params, curve) = train(spec, &ds, &train_cfg).map_err(err)?;
    let cond = ConditionProfile::resolve(condition).map_err(err)?;
    let probe = DemoConfig {
        n: 1,
        full_fraction: 1.0,
        ..cfg
    };
    let demo = generate_demonstrations(&probe, &cond, &mut root.derive(2)).map_err(err)?.remove(0);
    let rows = trace_rows(&params, &demo).map_err(err)?;
    Ok(MaskTrace {
        channels: spec.input_channels().map_err(err)?.iter().map(|&c| CHANNEL_NAMES[c].to_string()).collect(),
        t: rows.iter().map(|r| r.t).collect(),
        mask: rows.iter().map(|r| r.mask.clone().unwrap_or_default()).collect(),
        mask_u: rows.iter().map(|r| r.mask_u.unwrap_or_default()).collect(),
        final_loss: curve.train.last().copied().unwrap_or(f64::NAN),
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = expertRollout)]
pub fn expert_rollout_js(condition: &str, seed: u32) -> Result<String, JsValue> {
    to_json(expert_trace(condition, seed as u64))
}

#[wasm_bindgen(js_name = slipResponse)]
pub fn slip_response_js(load: f64, speed: f64) -> Result<String, JsValue> {
    to_json(Ok(slip_response(load, speed)))
}

#[wasm_bindgen(js_name = attentionMasks)]
pub fn attention_masks_js(condition: &str, seed: u32, epochs: u32) -> Result<String, JsValue> {
    to_json(attention_masks(condition, seed as u64, epochs as usize))
}
