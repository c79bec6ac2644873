//! Browser bindings: trajectory time sampling, exact-teacher rollouts on the
//! 8-mode mixture, and the tangent warmup schedule.

use cmlab::diffcore::NumArray;
use cmlab::distill::{r_value, RSchedule};
use cmlab::eval::equivalent_noise_curve;
use cmlab::netmodel::ConditionEncoder;
use cmlab::teacher::Dataset2D;
use cmlab::trajectory::{flow_euler_reference, rollout_batch, sample_trajectory_times, TimestepScheme};
use cmlab::ResourceCounters;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wasm_bindgen::prelude::*;

const SIGMA_D: f64 = 0.5;
const SHIFT: f64 = 3.0;

fn scheme_from(name: &str) -> Result<TimestepScheme, String> {
    match name {
        "reference_route" => Ok(TimestepScheme::reference_route()),
        "logit_normal" => Ok(TimestepScheme::logit_normal()),
        "random" => Ok(TimestepScheme::Random),
        other => Err(format!("unknown scheme {other:?}")),
    }
}

/// `draws` trajectories of `n` times each, concatenated.
pub fn trajectory_times(scheme: &str, n: usize, draws: usize, seed: u64) -> Result<Vec<f64>, String> {
    let scheme = scheme_from(scheme)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * draws);
    for _ in 0..draws {
        let traj = sample_trajectory_times(&scheme, n, SIGMA_D, &mut rng).map_err(|e| e.to_string())?;
        out.extend_from_slice(traj.times());
    }
    Ok(out)
}

/// Result of rolling the exact mixture velocity out from shared noise.
pub struct Rollout {
    /// Interleaved `x, y` of the final clean predictions.
    pub samples: Vec<f64>,
    /// Interleaved `x, y` of fresh data draws.
    pub data: Vec<f64>,
    /// Interleaved `t, similarity` of the equivalent-noise curve.
    pub noise_curve: Vec<f64>,
}

pub fn rollout(points: usize, steps: usize, seed: u64) -> Result<Rollout, String> {
    if points == 0 {
        return Err("need at least one point".into());
    }
    let ds = Dataset2D::gmm8(SIGMA_D);
    let model = ds.analytic_velocity().ok_or("mixture has no closed-form velocity")?;
    let enc = ConditionEncoder::new(ds.num_conditions(), 4, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..points * 2)
        .map(|_| SIGMA_D * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let z = NumArray::matrix(points, 2, z);
    let ids: Vec<usize> = (0..points).map(|i| i % ds.num_conditions()).collect();
    let traj = flow_euler_reference(steps, SHIFT).map_err(|e| e.to_string())?;
    let mut counters = ResourceCounters::default();
    let batch = rollout_batch(&model, &enc, &z, &ids, &vec![traj.clone(); points], None, &mut counters)
        .map_err(|e| e.to_string())?;
    let curve = equivalent_noise_curve(&model, &enc, &traj, &z, &ids, &mut counters).map_err(|e| e.to_string())?;
    let (data, _) = ds.sample_data(points, &mut rng);
    Ok(Rollout {
        samples: batch.x0_hat.data().to_vec(),
        data: data.data().to_vec(),
        noise_curve: curve.iter().flat_map(|p| [p.t, p.similarity]).collect(),
    })
}

/// `r` at `points` evenly spaced iterations of a `total`-iteration run.
pub fn r_curve(total: u64, warmup: u64, r_final: f64, points: usize) -> Result<Vec<f64>, String> {
    let mut s = RSchedule::default_for(total, r_final);
    s.h = warmup.max(1);
    s.s_r = s.s_r.max(s.h);
    s.validate().map_err(|e| e.to_string())?;
    let last = points.max(2) - 1;
    Ok((0..=last).map(|i| r_value(&s, total * i as u64 / last as u64)).collect())
}

#[wasm_bindgen(js_name = trajectoryTimes)]
pub fn trajectory_times_js(scheme: &str, n: usize, draws: usize, seed: u64) -> Result<Vec<f64>, JsValue> {
    trajectory_times(scheme, n, draws, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = rolloutSamples)]
pub fn rollout_samples_js(points: usize, steps: usize, seed: u64) -> Result<Vec<f64>, JsValue> {
    rollout(points, steps, seed).map(|r| r.samples).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = dataSamples)]
pub fn data_samples_js(points: usize, seed: u64) -> Result<Vec<f64>, JsValue> {
    rollout(points, 1, seed).map(|r| r.data).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = noiseCurve)]
pub fn noise_curve_js(points: usize, steps: usize, seed: u64) -> Result<Vec<f64>, JsValue> {
    rollout(points, steps, seed).map(|r| r.noise_curve).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = rCurve)]
pub fn r_curve_js(total: u64, warmup: u64, r_final: f64, points: usize) -> Result<Vec<f64>, JsValue> {
    r_curve(total, warmup, r_final, points).map_err(|e| JsValue::from_str(&e))
}
