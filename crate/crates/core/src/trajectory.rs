//! Timestep schemes, backward teacher rollouts, the forward-noised
//! baseline batch and the per-trajectory brightness filter.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::NumArray;
use crate::error::{Error, Result};
use crate::netmodel::{ConditionEncoder, EncodedConditions, VelocityModel};
use crate::schedules::{cosine_similarity, t_trig_from_fm, trig};
use crate::ResourceCounters;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum TimestepScheme {
    Random,
    LogitNormal { p_mean: f64, p_std: f64 },
    ReferenceRoute { shift: f64, jitter_fraction: f64 },
}

impl TimestepScheme {
    pub fn logit_normal() -> Self {
        Self::LogitNormal {
            p_mean: 0.2,
            p_std: 1.6,
        }
    }

    pub fn reference_route() -> Self {
        Self::ReferenceRoute {
            shift: 3.0,
            jitter_fraction: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::LogitNormal { .. } => "logit_normal",
            Self::ReferenceRoute { .. } => "reference_route",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Random => Ok(()),
            Self::LogitNormal { p_mean, p_std } => {
                if !(p_std > 0.0) || !p_mean.is_finite() {
                    return Err(Error::Config("logit-normal scheme needs finite p_mean and p_std > 0".into()));
                }
                Ok(())
            }
            Self::ReferenceRoute { shift, jitter_fraction } => {
                if !(shift >= 1.0) || !(0.0..=1.0).contains(&jitter_fraction) {
                    return Err(Error::Config(
                        "reference route needs shift >= 1 and jitter_fraction in [0, 1]".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Draw `t = atan(e^τ / σ_d)` with `τ ~ N(p_mean, p_std²)`.
pub fn logit_normal_time(rng: &mut ChaCha8Rng, p_mean: f64, p_std: f64, sigma_d: f64) -> f64 {
    let tau: f64 = p_mean + p_std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
    (tau.exp() / sigma_d).atan()
}

/// Strictly decreasing times in `(0, π/2]` starting at `π/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&FRAC_PI_2) {
            return Err(Error::Config("trajectory must start at pi/2".into()));
        }
        for w in times.windows(2) {
            if !(w[1] < w[0]) || !(w[1] > 0.0) {
                return Err(Error::Config(format!(
                    "trajectory times must be strictly decreasing in (0, pi/2], got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Step size leaving time `i`; the last step lands on `t = 0`.
    pub fn delta(&self, i: usize) -> f64 {
        self.times[i] - self.times.get(i + 1).copied().unwrap_or(0.0)
    }
}

fn interior_draws(n: usize, rng: &mut ChaCha8Rng, mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n + 1);
    out.push(FRAC_PI_2);
    while out.len() < n {
        let t = draw(rng);
        if t > 0.0 && t < FRAC_PI_2 && !out.contains(&t) {
            out.push(t);
        }
    }
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

pub fn sample_trajectory_times(
    scheme: &TimestepScheme,
    n: usize,
    sigma_d: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::Config("trajectory needs at least one step".into()));
    }
    scheme.validate()?;
    match *scheme {
        TimestepScheme::Random => Trajectory::new(interior_draws(n, rng, |r| r.random::<f64>() * FRAC_PI_2)),
        TimestepScheme::LogitNormal { p_mean, p_std } => Trajectory::new(interior_draws(n, rng, |r| {
            logit_normal_time(r, p_mean, p_std, sigma_d)
        })),
        TimestepScheme::ReferenceRoute { shift, jitter_fraction } => {
            partitioned_sample(&flow_euler_reference(n, shift)?, jitter_fraction, rng)
        }
    }
}

/// Flow-Euler grid `u_i = 1 − i/N`, shifted by `s·u / (1 + (s − 1)·u)`
/// and mapped to TrigFlow time.
pub fn flow_euler_reference(n: usize, shift: f64) -> Result<Trajectory> {
    if n == 0 || !(shift >= 1.0) {
        return Err(Error::Config("reference route needs N >= 1 and shift >= 1".into()));
    }
    let times = (0..n)
        .map(|i| {
            let u = 1.0 - i as f64 / n as f64;
            t_trig_from_fm(shift * u / (1.0 + (shift - 1.0) * u))
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(times)
}

/// Bounds `(lo, hi)` of the partition owned by reference time `i`.
pub fn partition_bounds(reference: &Trajectory, i: usize) -> (f64, f64) {
    let t = reference.times();
    let hi = if i == 0 { t[0] } else { 0.5 * (t[i - 1] + t[i]) };
    let lo = 0.5 * (t[i] + t.get(i + 1).copied().unwrap_or(0.0));
    (lo, hi)
}

/// One time per midpoint partition, drawn uniformly from the central
/// `jitter_fraction` of the partition around the reference time. The first
/// time stays at `π/2`.
pub fn partitioned_sample(reference: &Trajectory, jitter_fraction: f64, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&jitter_fraction) {
        return Err(Error::Config("jitter_fraction must lie in [0, 1]".into()));
    }
    let mut out = Vec::with_capacity(reference.len());
    for (i, &t) in reference.times().iter().enumerate() {
        if i == 0 || jitter_fraction == 0.0 {
            out.push(t);
            continue;
        }
        let (lo, hi) = partition_bounds(reference, i);
        let a = t - jitter_fraction * (t - lo);
        let b = t + jitter_fraction * (hi - t);
        loop {
            let s = a + (b - a) * rng.random::<f64>();
            // Half-open on the upper side so neighbours never coincide.
            if s > 0.0 && s < hi && s >= lo {
                out.push(s);
                break;
            }
        }
    }
    Trajectory::new(out)
}

/// Harvested `(x_t, dx_t/dt, t)` triples with per-row condition and mask.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryBatch {
    pub states: NumArray,
    pub velocities: NumArray,
    pub times: Vec<f64>,
    pub keep_mask: Vec<bool>,
    pub cond: EncodedConditions,
    /// Trajectory (or data point) index of each row.
    pub source: Vec<usize>,
    /// Step index of each row within its trajectory.
    pub step: Vec<usize>,
    /// Final clean prediction of each trajectory.
    pub x0_hat: NumArray,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn kept(&self) -> usize {
        self.keep_mask.iter().filter(|&&k| k).count()
    }

    /// CSV rows: prompt id, step, t, x components, velocity components, keep.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.states.cols();
        let mut header = vec!["prompt".to_string(), "condition".into(), "step".into(), "t".into()];
        header.extend((0..d).map(|k| format!("x{k}")));
        header.extend((0..d).map(|k| format!("v{k}")));
        header.push("keep".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![
                self.source[i].to_string(),
                self.cond.ids[i].to_string(),
                self.step[i].to_string(),
                format!("{:?}", self.times[i]),
            ];
            row.extend(self.states.row(i).iter().map(|v| format!("{v:?}")));
            row.extend(self.velocities.row(i).iter().map(|v| format!("{v:?}")));
            row.push(u8::from(self.keep_mask[i]).to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    pub z_b: Vec<f64>,
    pub threshold: f64,
}

impl FilterConfig {
    pub fn new(z_b: Vec<f64>, threshold: f64) -> Result<Self> {
        if !z_b.iter().all(|v| v.is_finite()) || !(-1.0..=1.0).contains(&threshold) {
            return Err(Error::Config("filter needs a finite z_b and threshold in [-1, 1]".into()));
        }
        Ok(Self { z_b, threshold })
    }
}

/// `true` keeps the trajectory. Zero-norm inputs are always kept.
pub fn brightness_filter(x0_hat_scaled: &[f64], cfg: &FilterConfig) -> bool {
    let zero = |v: &[f64]| v.iter().all(|&x| x == 0.0);
    if zero(x0_hat_scaled) || zero(&cfg.z_b) {
        return true;
    }
    cosine_similarity(x0_hat_scaled, &cfg.z_b) < cfg.threshold
}

/// Roll out one trajectory per row of `z`, all sharing the step count.
///
/// Each prompt is encoded once and reused for every state; the teacher is
/// called once per (trajectory, step). The step rule
/// `x ← cos Δ·x − sin Δ·dx/dt` with `dx/dt = σ_d F` is exact for exact
/// velocities.
pub fn rollout_batch<M: VelocityModel + ?Sized>(
    teacher: &M,
    encoder: &ConditionEncoder,
    z: &NumArray,
    ids: &[usize],
    trajs: &[Trajectory],
    filter: Option<&FilterConfig>,
    counters: &mut ResourceCounters,
) -> Result<TrajectoryBatch> {
    let p = z.rows();
    if ids.len() != p || trajs.len() != p || p == 0 {
        return Err(Error::Shape {
            op: "rollout",
            expected: vec![p, z.cols()],
            got: vec![ids.len(), trajs.len()],
        });
    }
    let n = trajs[0].len();
    if trajs.iter().any(|t| t.len() != n) {
        return Err(Error::Config("trajectories in one rollout batch must share their length".into()));
    }
    let sigma_d = teacher.sigma_d();
    let prompts = encoder.encode(ids, counters)?;
    let d = z.cols();
    let mut x = z.clone();
    let mut states = Vec::with_capacity(n * p * d);
    let mut vels = Vec::with_capacity(n * p * d);
    let mut times = Vec::with_capacity(n * p);
    for step in 0..n {
        let t: Vec<f64> = trajs.iter().map(|tr| tr.times()[step]).collect();
        let f = teacher.predict(&x, &t, &prompts)?;
        counters.teacher_nfe += p as u64;
        let v = f.scaled(sigma_d);
        if !v.all_finite() {
            return Err(Error::Rollout { step });
        }
        states.extend_from_slice(x.data());
        vels.extend_from_slice(v.data());
        times.extend_from_slice(&t);
        for (r, tr) in trajs.iter().enumerate() {
            let (c, s) = trig(tr.delta(step));
            let vr = v.row(r).to_vec();
            for (xv, dv) in x.row_mut(r).iter_mut().zip(vr) {
                *xv = c * *xv - s * dv;
            }
        }
        if !x.all_finite() {
            return Err(Error::Rollout { step });
        }
    }
    // After the last step to t = 0 the state is the clean prediction.
    let x0_hat = x;
    let keep: Vec<bool> = (0..p)
        .map(|r| match filter {
            Some(cfg) => {
                let scaled: Vec<f64> = x0_hat.row(r).iter().map(|v| v / sigma_d).collect();
                brightness_filter(&scaled, cfg)
            }
            None => true,
        })
        .collect();
    // Rows are ordered step-major in the buffers; reorder trajectory-major.
    let mut order = Vec::with_capacity(n * p);
    for r in 0..p {
        for step in 0..n {
            order.push(step * p + r);
        }
    }
    let states = NumArray::matrix(n * p, d, states).gather_rows(&order);
    let velocities = NumArray::matrix(n * p, d, vels).gather_rows(&order);
    let source: Vec<usize> = order.iter().map(|&k| k % p).collect();
    Ok(TrajectoryBatch {
        states,
        velocities,
        times: order.iter().map(|&k| times[k]).collect(),
        keep_mask: source.iter().map(|&r| keep[r]).collect(),
        cond: prompts.gather(&source),
        step: order.iter().map(|&k| k / p).collect(),
        source,
        x0_hat,
    })
}

/// Single-trajectory rollout.
pub fn rollout<M: VelocityModel + ?Sized>(
    teacher: &M,
    encoder: &ConditionEncoder,
    z: &[f64],
    y: usize,
    traj: &Trajectory,
    counters: &mut ResourceCounters,
) -> Result<TrajectoryBatch> {
    let z = NumArray::matrix(1, z.len(), z.to_vec());
    rollout_batch(teacher, encoder, &z, &[y], std::slice::from_ref(traj), None, counters)
}

/// Forward-noised training states: one independent time per data point,
/// each with its own condition encoding and teacher velocity.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_space_batch<M: VelocityModel + ?Sized>(
    teacher: &M,
    encoder: &ConditionEncoder,
    x0: &NumArray,
    ids: &[usize],
    scheme: &TimestepScheme,
    rng: &mut ChaCha8Rng,
    counters: &mut ResourceCounters,
) -> Result<TrajectoryBatch> {
    let b = x0.rows();
    if ids.len() != b {
        return Err(Error::Shape {
            op: "diffusion_space_batch",
            expected: vec![b],
            got: vec![ids.len()],
        });
    }
    let sigma_d = teacher.sigma_d();
    let TimestepScheme::LogitNormal { p_mean, p_std } = *scheme else {
        return Err(Error::Config("the forward-noised baseline uses the logit-normal scheme".into()));
    };
    scheme.validate()?;
    counters.data_encoder_calls += b as u64;
    let noise = Normal::new(0.0, sigma_d).map_err(|e| Error::Config(e.to_string()))?;
    let mut t = Vec::with_capacity(b);
    let mut xt = x0.clone();
    for i in 0..b {
        let ti = logit_normal_time(rng, p_mean, p_std, sigma_d).min(FRAC_PI_2);
        let (c, s) = trig(ti);
        for v in xt.row_mut(i) {
            let z: f64 = noise.sample(rng);
            *v = c * *v + s * z;
        }
        t.push(ti);
    }
    let cond = encoder.encode(ids, counters)?;
    let f = teacher.predict(&xt, &t, &cond)?;
    counters.teacher_nfe += b as u64;
    Ok(TrajectoryBatch {
        states: xt,
        velocities: f.scaled(sigma_d),
        times: t,
        keep_mask: vec![true; b],
        cond,
        source: (0..b).collect(),
        step: vec![0; b],
        x0_hat: x0.clone(),
    })
}
