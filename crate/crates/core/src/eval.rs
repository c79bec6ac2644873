//! Sampling from a distilled student, the sliced-Wasserstein metric, the
//! equivalent-noise diagnostic and the ablation harness.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{NumArray, ParamStore};
use crate::distill::{run_distillation, DistillConfig, DistillMode, DistillSetup, RMode, SCM_DEFAULT_LR};
use crate::error::{Error, Result};
use crate::netmodel::{ConditionEncoder, EncodedConditions, NetVelocity, VelocityModel, VelocityNet};
use crate::schedules::{consistency_output_rows, cosine_similarity, equivalent_noise, trig};
use crate::teacher::Dataset2D;
use crate::trajectory::{flow_euler_reference, rollout_batch, TimestepScheme, Trajectory};
use crate::ResourceCounters;

/// `x̂₀ = −σ_d F(z/σ_d, π/2, y)`: one network pass per sample.
pub fn one_step_sample<M: VelocityModel + ?Sized>(
    student: &M,
    z: &NumArray,
    cond: &EncodedConditions,
    counters: &mut ResourceCounters,
) -> Result<NumArray> {
    let t = vec![FRAC_PI_2; z.rows()];
    let f = student.predict(z, &t, cond)?;
    counters.student_nfe += 1;
    consistency_output_rows(&f, z, &t, student.sigma_d())
}

/// Consistency sampling with re-noising: map to `x̂₀`, re-noise to the
/// next time with fresh noise, repeat; returns the last `x̂₀`.
pub fn multi_step_sample<M: VelocityModel + ?Sized>(
    student: &M,
    times: &Trajectory,
    z: &NumArray,
    cond: &EncodedConditions,
    rng: &mut ChaCha8Rng,
    counters: &mut ResourceCounters,
) -> Result<NumArray> {
    let sigma_d = student.sigma_d();
    let noise = Normal::new(0.0, sigma_d).map_err(|e| Error::Config(e.to_string()))?;
    let n = z.rows();
    let mut x = z.clone();
    let mut x0 = z.clone();
    for (k, &t) in times.times().iter().enumerate() {
        if k > 0 {
            let (c, s) = trig(t);
            x = x0.map(|v| c * v);
            for v in x.data_mut() {
                let e: f64 = noise.sample(rng);
                *v += s * e;
            }
        }
        let tv = vec![t; n];
        let f = student.predict(&x, &tv, cond)?;
        counters.student_nfe += 1;
        x0 = consistency_output_rows(&f, &x, &tv, sigma_d)?;
    }
    Ok(x0)
}

/// Default multi-step grid: the shifted Flow-Euler reference of length `steps`.
pub fn default_step_times(steps: usize) -> Result<Trajectory> {
    flow_euler_reference(steps, 3.0)
}

/// Squared 1D W2 between the empirical laws of sorted `a` and `b`, by
/// exact quantile matching (sizes may differ).
fn w2_sq_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos = 0.0;
    let mut acc = 0.0;
    while i < a.len() && j < b.len() {
        let ea = (i + 1) as f64 / na;
        let eb = (j + 1) as f64 / nb;
        let next = ea.min(eb);
        let d = a[i] - b[j];
        acc += (next - pos) * d * d;
        pos = next;
        if ea <= eb {
            i += 1;
        }
        if eb <= ea {
            j += 1;
        }
    }
    acc
}

/// Mean over random unit directions of the 1D 2-Wasserstein distance
/// between the projected point sets.
pub fn sliced_wasserstein(a: &NumArray, b: &NumArray, n_projections: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    let (a, b) = (a.clone().as_matrix(), b.clone().as_matrix());
    if a.cols() != b.cols() {
        return Err(Error::Shape {
            op: "sliced_wasserstein",
            expected: vec![b.rows(), a.cols()],
            got: b.shape().to_vec(),
        });
    }
    if a.rows() == 0 || b.rows() == 0 || n_projections == 0 {
        return Err(Error::Config("sliced Wasserstein needs non-empty sets and projections".into()));
    }
    let d = a.cols();
    let project = |m: &NumArray, u: &[f64]| {
        let mut p: Vec<f64> = (0..m.rows())
            .map(|i| m.row(i).iter().zip(u).map(|(x, w)| x * w).sum())
            .collect();
        p.sort_by(f64::total_cmp);
        p
    };
    let mut total = 0.0;
    for _ in 0..n_projections {
        let mut u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        total += w2_sq_sorted(&project(&a, &u), &project(&b, &u)).sqrt();
    }
    Ok(total / n_projections as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub t: f64,
    /// Mean cosine similarity between equivalent and initial noise.
    pub similarity: f64,
}

/// Cosine similarity between the equivalent noise at each rollout state and
/// the initial noise, averaged over the rows of `z`.
pub fn equivalent_noise_curve<M: VelocityModel + ?Sized>(
    teacher: &M,
    encoder: &ConditionEncoder,
    traj: &Trajectory,
    z: &NumArray,
    ids: &[usize],
    counters: &mut ResourceCounters,
) -> Result<Vec<NoisePoint>> {
    let p = z.rows();
    let trajs = vec![traj.clone(); p];
    let batch = rollout_batch(teacher, encoder, z, ids, &trajs, None, counters)?;
    let sigma_d = teacher.sigma_d();
    let n = traj.len();
    let mut out = Vec::with_capacity(n);
    for (step, &t) in traj.times().iter().enumerate() {
        let mut acc = 0.0;
        for r in 0..p {
            let k = r * n + step;
            let x = batch.states.gather_rows(&[k]);
            let f = batch.velocities.gather_rows(&[k]).scaled(1.0 / sigma_d);
            let x0 = consistency_output_rows(&f, &x, &[t], sigma_d)?;
            let eps = equivalent_noise(&x, &x0, t)?;
            acc += cosine_similarity(eps.data(), z.row(r));
        }
        out.push(NoisePoint {
            t,
            similarity: acc / p as f64,
        });
    }
    Ok(out)
}

/// Held-out reference set and fixed noise for one-step evaluation.
#[derive(Clone, Debug)]
pub struct EvalProtocol {
    pub held_out: NumArray,
    pub ids: Vec<usize>,
    pub z: NumArray,
    pub n_projections: usize,
    pub seed: u64,
}

impl EvalProtocol {
    pub fn new(dataset: &Dataset2D, n_samples: usize, n_projections: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x6576_616c);
        let (held_out, ids) = dataset.sample_data(n_samples, &mut rng);
        let sigma_d = dataset.sigma_d();
        let z = NumArray::matrix(
            n_samples,
            2,
            (0..2 * n_samples)
                .map(|_| sigma_d * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect(),
        );
        Self {
            held_out,
            ids,
            z,
            n_projections,
            seed,
        }
    }

    /// Desk-scale defaults: 2048 samples per side, 512 projections.
    pub fn standard(dataset: &Dataset2D, seed: u64) -> Self {
        Self::new(dataset, 2048, 512, seed)
    }

    pub fn distance(&self, samples: &NumArray) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(0x7377);
        sliced_wasserstein(samples, &self.held_out, self.n_projections, &mut rng)
    }

    /// Conditions are embedded without touching any run's counters.
    fn cond(&self, encoder: &ConditionEncoder) -> Result<EncodedConditions> {
        encoder.encode(&self.ids, &mut ResourceCounters::default())
    }

    /// Sliced-Wasserstein of the one-step samples of `model`.
    pub fn one_step_distance<M: VelocityModel + ?Sized>(&self, model: &M, encoder: &ConditionEncoder) -> Result<f64> {
        let x = one_step_sample(model, &self.z, &self.cond(encoder)?, &mut ResourceCounters::default())?;
        self.distance(&x)
    }

    /// Sliced-Wasserstein of a deterministic `steps`-step teacher rollout.
    pub fn rollout_distance<M: VelocityModel + ?Sized>(
        &self,
        teacher: &M,
        encoder: &ConditionEncoder,
        steps: usize,
    ) -> Result<f64> {
        let traj = flow_euler_reference(steps, 3.0)?;
        let trajs = vec![traj; self.z.rows()];
        let b = rollout_batch(teacher, encoder, &self.z, &self.ids, &trajs, None, &mut ResourceCounters::default())?;
        self.distance(&b.x0_hat)
    }
}

#[derive(Clone, Debug)]
pub struct AblationEntry {
    pub name: String,
    pub cfg: DistillConfig,
}

/// Named ablation grids built around `base`: `scheme` (the three timestep
/// schemes at the base N), `steps` (N in 4, 8, 16), `r_final` (0.75 vs 1.0)
/// and `mode` (TBCM vs the forward-noised baseline at equal batch).
pub fn ablation_grid(name: &str, base: &DistillConfig) -> Result<Vec<AblationEntry>> {
    let with = |label: String, f: &dyn Fn(&mut DistillConfig)| {
        let mut cfg = base.clone();
        f(&mut cfg);
        AblationEntry { name: label, cfg }
    };
    let tbcm = |cfg: &mut DistillConfig| {
        if cfg.mode != DistillMode::Tbcm {
            cfg.lr = 0.5 * SCM_DEFAULT_LR;
        }
        cfg.mode = DistillMode::Tbcm;
    };
    let (p_mean, p_std) = match base.scheme {
        TimestepScheme::LogitNormal { p_mean, p_std } => (p_mean, p_std),
        _ => (0.2, 1.6),
    };
    let reference = match base.scheme {
        s @ TimestepScheme::ReferenceRoute { .. } => s,
        _ => TimestepScheme::reference_route(),
    };
    Ok(match name {
        "scheme" => vec![
            with("reference_route".into(), &|c| {
                tbcm(c);
                c.scheme = reference;
            }),
            with("logit_normal".into(), &|c| {
                tbcm(c);
                c.scheme = TimestepScheme::LogitNormal { p_mean, p_std };
            }),
            with("random".into(), &|c| {
                tbcm(c);
                c.scheme = TimestepScheme::Random;
            }),
        ],
        "steps" => [4usize, 8, 16]
            .iter()
            .map(|&n| {
                with(format!("n{n}"), &|c| {
                    tbcm(c);
                    c.scheme = reference;
                    c.n_steps = n;
                })
            })
            .collect(),
        "r_final" => [0.75, 1.0]
            .iter()
            .map(|&rf| {
                with(format!("r_final_{rf}"), &|c| {
                    tbcm(c);
                    c.r_schedule.mode = RMode::WarmupCooldown;
                    c.r_schedule.r_f = rf;
                })
            })
            .collect(),
        "mode" => vec![
            with("tbcm".into(), &|c| {
                tbcm(c);
                c.scheme = reference;
            }),
            with("scm".into(), &|c| {
                if c.mode != DistillMode::Scm {
                    c.lr = SCM_DEFAULT_LR;
                }
                c.mode = DistillMode::Scm;
                c.scheme = TimestepScheme::LogitNormal { p_mean, p_std };
            }),
        ],
        other => {
            return Err(Error::Config(format!(
                "unknown ablation grid {other:?}, expected scheme, steps, r_final or mode"
            )))
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRun {
    pub name: String,
    pub seed: u64,
    /// One-step sliced-Wasserstein, or the error message of a failed run.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationSummary {
    pub name: String,
    pub median: Option<f64>,
    pub values: Vec<f64>,
    pub failures: usize,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Distill every (config, seed), score one-step samples against the
/// protocol's held-out set and summarize by the median over seeds. Failed
/// runs are recorded and skipped.
pub fn ablation_harness(
    grid: &[AblationEntry],
    seeds: &[u64],
    setup: &DistillSetup<'_>,
    protocol: &EvalProtocol,
    mut on_run: impl FnMut(&AblationRun),
) -> (Vec<AblationRun>, Vec<AblationSummary>) {
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for entry in grid {
        let mut values = Vec::new();
        let mut failures = 0;
        for &seed in seeds {
            let mut cfg = entry.cfg.clone();
            cfg.seed = seed;
            let outcome = run_distillation(&cfg, setup, 0, None)
                .and_then(|run| {
                    let student = NetVelocity {
                        net: setup.net,
                        params: &run.student,
                        sigma_d: cfg.sigma_d,
                    };
                    protocol.one_step_distance(&student, setup.encoder)
                })
                .map_err(|e| e.to_string());
            match &outcome {
                Ok(v) => values.push(*v),
                Err(_) => failures += 1,
            }
            let run = AblationRun {
                name: entry.name.clone(),
                seed,
                outcome,
            };
            on_run(&run);
            runs.push(run);
        }
        summaries.push(AblationSummary {
            name: entry.name.clone(),
            median: median(&values),
            values,
            failures,
        });
    }
    (runs, summaries)
}

/// Convenience: a trained network as a sampler.
pub fn net_model<'a>(net: &'a VelocityNet, params: &'a ParamStore, sigma_d: f64) -> NetVelocity<'a> {
    NetVelocity { net, params, sigma_d }
}
