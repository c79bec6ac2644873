//! Synthetic 2D datasets, analytic velocity oracles and TrigFlow
//! pretraining of the teacher network.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{grad, NumArray, Objective, Ops, ParamStore};
use crate::error::{Error, Result};
use crate::netmodel::{EncodedConditions, VelocityModel, VelocityNet, VelocityNetConfig};
use crate::netmodel::ConditionEncoder;
use crate::optim::Adam;
use crate::schedules::{trig, T_EPS};
use crate::trajectory::logit_normal_time;
use crate::ResourceCounters;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetKind {
    /// Eight isotropic modes on a circle; mode `k` carries condition
    /// `k % num_conditions`.
    GaussianMixture8 {
        radius: f64,
        mode_std: f64,
        num_conditions: usize,
    },
    /// Two interleaved half circles, one condition per moon.
    TwoMoons { noise: f64 },
    /// Planar spiral, single condition.
    SwissRoll2D { noise: f64 },
    /// Every sample equals `x*` (no normalization applied).
    PointMass { x_star: [f64; 2] },
}

/// A 2D data law normalized to a per-coordinate standard deviation `σ_d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset2D {
    kind: DatasetKind,
    sigma_d: f64,
    scale: f64,
    offset: [f64; 2],
}

const REFERENCE_SAMPLES: usize = 20_000;

impl Dataset2D {
    pub fn new(kind: DatasetKind, sigma_d: f64) -> Result<Self> {
        if !(sigma_d > 0.0) {
            return Err(Error::Config(format!("sigma_d must be positive, got {sigma_d}")));
        }
        match &kind {
            DatasetKind::GaussianMixture8 {
                radius,
                mode_std,
                num_conditions,
            } => {
                if !(*radius > 0.0) || !(*mode_std >= 0.0) || *num_conditions == 0 || 8 % num_conditions != 0
                {
                    return Err(Error::Config(
                        "gaussian mixture needs radius > 0, mode_std >= 0 and num_conditions dividing 8".into(),
                    ));
                }
            }
            DatasetKind::TwoMoons { noise } | DatasetKind::SwissRoll2D { noise } => {
                if !(*noise >= 0.0) {
                    return Err(Error::Config("noise must be non-negative".into()));
                }
            }
            DatasetKind::PointMass { x_star } => {
                if !x_star.iter().all(|v| v.is_finite()) {
                    return Err(Error::Config("point mass location must be finite".into()));
                }
            }
        }
        let mut ds = Self {
            kind,
            sigma_d,
            scale: 1.0,
            offset: [0.0, 0.0],
        };
        match &ds.kind {
            DatasetKind::GaussianMixture8 { radius, mode_std, .. } => {
                let var = radius * radius / 2.0 + mode_std * mode_std;
                ds.scale = sigma_d / var.sqrt();
            }
            DatasetKind::PointMass { .. } => {}
            _ => {
                // Empirical normalization from a fixed reference draw.
                let mut rng = ChaCha8Rng::seed_from_u64(0x6e6f_726d);
                let (raw, _) = ds.sample_raw(REFERENCE_SAMPLES, &mut rng);
                let n = raw.rows() as f64;
                let mut mean = [0.0; 2];
                for i in 0..raw.rows() {
                    mean[0] += raw.at(i, 0) / n;
                    mean[1] += raw.at(i, 1) / n;
                }
                let mut var = 0.0;
                for i in 0..raw.rows() {
                    var += ((raw.at(i, 0) - mean[0]).powi(2) + (raw.at(i, 1) - mean[1]).powi(2)) / (2.0 * n);
                }
                ds.offset = mean;
                ds.scale = sigma_d / var.sqrt();
            }
        }
        Ok(ds)
    }

    /// Default lab density: the 8-mode mixture with two conditions.
    pub fn gmm8(sigma_d: f64) -> Self {
        Self::new(
            DatasetKind::GaussianMixture8 {
                radius: 1.0,
                mode_std: 0.12,
                num_conditions: 2,
            },
            sigma_d,
        )
        .expect("valid default dataset")
    }

    pub fn point_mass(x_star: [f64; 2], sigma_d: f64) -> Result<Self> {
        Self::new(DatasetKind::PointMass { x_star }, sigma_d)
    }

    pub fn kind(&self) -> &DatasetKind {
        &self.kind
    }

    pub fn sigma_d(&self) -> f64 {
        self.sigma_d
    }

    pub fn num_conditions(&self) -> usize {
        match &self.kind {
            DatasetKind::GaussianMixture8 { num_conditions, .. } => *num_conditions,
            DatasetKind::TwoMoons { .. } => 2,
            DatasetKind::SwissRoll2D { .. } | DatasetKind::PointMass { .. } => 1,
        }
    }

    /// Mode centers after normalization (mixture only).
    pub fn mode_centers(&self) -> Option<Vec<[f64; 2]>> {
        match &self.kind {
            DatasetKind::GaussianMixture8 { radius, .. } => Some(
                (0..8)
                    .map(|k| {
                        let a = 2.0 * PI * k as f64 / 8.0;
                        [self.scale * radius * a.cos(), self.scale * radius * a.sin()]
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Mean of the normalized law; the degenerate collapse point.
    pub fn grand_mean(&self) -> [f64; 2] {
        match &self.kind {
            DatasetKind::PointMass { x_star } => *x_star,
            _ => [0.0, 0.0],
        }
    }

    fn sample_raw(&self, n: usize, rng: &mut ChaCha8Rng) -> (NumArray, Vec<usize>) {
        let mut data = Vec::with_capacity(2 * n);
        let mut ids = Vec::with_capacity(n);
        let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
        for _ in 0..n {
            match &self.kind {
                DatasetKind::GaussianMixture8 {
                    radius,
                    mode_std,
                    num_conditions,
                } => {
                    let k = rng.random_range(0..8usize);
                    let a = 2.0 * PI * k as f64 / 8.0;
                    data.push(radius * a.cos() + mode_std * gauss(rng));
                    data.push(radius * a.sin() + mode_std * gauss(rng));
                    ids.push(k % num_conditions);
                }
                DatasetKind::TwoMoons { noise } => {
                    let moon = rng.random_range(0..2usize);
                    let a = PI * rng.random::<f64>();
                    let (x, y) = if moon == 0 {
                        (a.cos(), a.sin())
                    } else {
                        (1.0 - a.cos(), 0.5 - a.sin())
                    };
                    data.push(x + noise * gauss(rng));
                    data.push(y + noise * gauss(rng));
                    ids.push(moon);
                }
                DatasetKind::SwissRoll2D { noise } => {
                    let s = 1.5 * PI * (1.0 + 2.0 * rng.random::<f64>());
                    data.push(s * s.cos() + noise * gauss(rng));
                    data.push(s * s.sin() + noise * gauss(rng));
                    ids.push(0);
                }
                DatasetKind::PointMass { x_star } => {
                    data.extend_from_slice(x_star);
                    ids.push(0);
                }
            }
        }
        (NumArray::matrix(n, 2, data), ids)
    }

    /// `n` normalized samples with their condition ids.
    pub fn sample_data(&self, n: usize, rng: &mut ChaCha8Rng) -> (NumArray, Vec<usize>) {
        let (mut x, ids) = self.sample_raw(n, rng);
        if !matches!(self.kind, DatasetKind::PointMass { .. }) {
            for i in 0..n {
                let r = x.row_mut(i);
                r[0] = (r[0] - self.offset[0]) * self.scale;
                r[1] = (r[1] - self.offset[1]) * self.scale;
            }
        }
        (x, ids)
    }

    /// Exact TrigFlow velocity of this law, where one exists.
    pub fn analytic_velocity(&self) -> Option<MixtureVelocity> {
        match &self.kind {
            DatasetKind::GaussianMixture8 {
                mode_std,
                num_conditions,
                ..
            } => {
                let centers = self.mode_centers()?;
                let mut per = vec![Vec::new(); *num_conditions];
                for (k, c) in centers.into_iter().enumerate() {
                    per[k % num_conditions].push(c);
                }
                Some(MixtureVelocity::new(per, mode_std * self.scale, self.sigma_d))
            }
            DatasetKind::PointMass { x_star } => {
                Some(MixtureVelocity::new(vec![vec![*x_star]], 0.0, self.sigma_d))
            }
            _ => None,
        }
    }
}

/// TrigFlow regression target `cos t·z − sin t·x₀`.
pub fn trigflow_target(x0: &NumArray, z: &NumArray, t: f64) -> Result<NumArray> {
    x0.same_shape(z, "trigflow_target")?;
    let (c, s) = trig(t);
    Ok(z.zip_map(x0, |zv, xv| c * zv - s * xv))
}

/// Optimal `F*` when the data is the single point `x*`:
/// `(cos t·x_t − x*) / (σ_d sin t)`.
pub fn analytic_velocity_pointmass(x_t: &NumArray, t: f64, x_star: &[f64], sigma_d: f64) -> Result<NumArray> {
    let (c, s) = trig(t);
    if s < T_EPS {
        return Err(Error::Singular {
            op: "analytic_velocity_pointmass",
            t,
            guard: T_EPS,
        });
    }
    if x_t.cols() != x_star.len() {
        return Err(Error::Shape {
            op: "analytic_velocity_pointmass",
            expected: vec![x_t.rows(), x_star.len()],
            got: x_t.shape().to_vec(),
        });
    }
    let mut out = x_t.clone();
    for i in 0..out.rows() {
        for (o, &xs) in out.row_mut(i).iter_mut().zip(x_star) {
            *o = (c * *o - xs) / (sigma_d * s);
        }
    }
    Ok(out)
}

/// Exact TrigFlow velocity for a per-condition mixture of equally weighted
/// isotropic Gaussians `N(μ_k, s² I)`.
///
/// With `z ~ N(0, σ_d² I)` the posterior mean `x̂₀ = E[x₀ | x_t]` is closed
/// form and `F* = (cos t·x_t − x̂₀) / (σ_d sin t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureVelocity {
    components: Vec<Vec<[f64; 2]>>,
    std: f64,
    sigma_d: f64,
}

impl MixtureVelocity {
    pub fn new(components: Vec<Vec<[f64; 2]>>, std: f64, sigma_d: f64) -> Self {
        Self {
            components,
            std,
            sigma_d,
        }
    }

    pub fn point_mass(x_star: [f64; 2], sigma_d: f64) -> Self {
        Self::new(vec![vec![x_star]], 0.0, sigma_d)
    }

    /// Posterior mean of the clean sample for one state.
    pub fn posterior_mean(&self, x: &[f64], t: f64, y: usize) -> Result<[f64; 2]> {
        let comps = self.components.get(y).ok_or(Error::UnknownCondition {
            id: y,
            size: self.components.len(),
        })?;
        let (c, s) = trig(t);
        let s2 = self.std * self.std;
        let var = c * c * s2 + s * s * self.sigma_d * self.sigma_d;
        if var <= 0.0 {
            // t = 0 with zero-width modes: the state is the sample.
            return Ok([x[0], x[1]]);
        }
        let logits: Vec<f64> = comps
            .iter()
            .map(|m| {
                let d0 = x[0] - c * m[0];
                let d1 = x[1] - c * m[1];
                -(d0 * d0 + d1 * d1) / (2.0 * var)
            })
            .collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let total: f64 = w.iter().sum();
        let gain = c * s2 / var;
        let mut out = [0.0; 2];
        for (m, wk) in comps.iter().zip(&w) {
            let r = wk / total;
            out[0] += r * (m[0] + gain * (x[0] - c * m[0]));
            out[1] += r * (m[1] + gain * (x[1] - c * m[1]));
        }
        Ok(out)
    }
}

impl VelocityModel for MixtureVelocity {
    fn sigma_d(&self) -> f64 {
        self.sigma_d
    }

    fn predict(&self, x_t: &NumArray, t: &[f64], cond: &EncodedConditions) -> Result<NumArray> {
        if x_t.cols() != 2 || x_t.rows() != t.len() || cond.len() != t.len() {
            return Err(Error::Shape {
                op: "MixtureVelocity::predict",
                expected: vec![t.len(), 2],
                got: x_t.shape().to_vec(),
            });
        }
        let mut out = x_t.clone();
        for (i, &ti) in t.iter().enumerate() {
            let (c, s) = trig(ti);
            if s < T_EPS {
                return Err(Error::Singular {
                    op: "MixtureVelocity::predict",
                    t: ti,
                    guard: T_EPS,
                });
            }
            let x0 = self.posterior_mean(x_t.row(i), ti, cond.ids[i])?;
            let row = out.row_mut(i);
            for d in 0..2 {
                row[d] = (c * row[d] - x0[d]) / (self.sigma_d * s);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub dataset: DatasetKind,
    pub sigma_d: f64,
    pub net: VelocityNetConfig,
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub p_mean: f64,
    pub p_std: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::GaussianMixture8 {
                radius: 1.0,
                mode_std: 0.12,
                num_conditions: 2,
            },
            sigma_d: 0.5,
            net: VelocityNetConfig {
                num_conditions: 2,
                ..Default::default()
            },
            steps: 20_000,
            batch: 256,
            lr: 1e-3,
            seed: 0,
            p_mean: 0.2,
            p_std: 1.6,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("teacher batch must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("teacher lr must be positive".into()));
        }
        if !(self.p_std > 0.0) {
            return Err(Error::Config("p_std must be positive".into()));
        }
        self.net.validate()
    }

    pub fn dataset(&self) -> Result<Dataset2D> {
        let ds = Dataset2D::new(self.dataset.clone(), self.sigma_d)?;
        if ds.num_conditions() != self.net.num_conditions {
            return Err(Error::Config(format!(
                "dataset has {} conditions but the network expects {}",
                ds.num_conditions(),
                self.net.num_conditions
            )));
        }
        Ok(ds)
    }
}

/// Trained teacher weights and the per-step loss trace.
#[derive(Clone, Debug)]
pub struct TeacherRun {
    pub params: ParamStore,
    pub losses: Vec<f64>,
}

struct TeacherLoss<'a> {
    net: &'a VelocityNet,
    x_scaled: NumArray,
    t: NumArray,
    cond: &'a NumArray,
    target: NumArray,
    sigma_d: f64,
}

impl Objective for TeacherLoss<'_> {
    fn eval<E: Ops>(&self, e: &mut E, params: &ParamStore) -> Result<E::Val> {
        let x = e.constant(self.x_scaled.clone());
        let t = e.constant(self.t.clone());
        let c = e.constant(self.cond.clone());
        let f = self.net.forward(e, params, &x, &t, &c)?;
        let pred = e.scale(&f, self.sigma_d)?;
        let target = e.constant(self.target.clone());
        let diff = e.sub(&pred, &target)?;
        let sq = e.square(&diff)?;
        let total = e.sum(&sq)?;
        e.scale(&total, 1.0 / self.x_scaled.rows() as f64)
    }
}

/// Seed used for the frozen condition encoder of a teacher trained with `seed`.
pub fn encoder_seed(seed: u64) -> u64 {
    seed ^ 0x656e_636f_6465_72
}

/// Pretrain `F_θ` on `E‖σ_d F_θ(x_t/σ_d, t, y) − (cos t·z − sin t·x₀)‖²`.
pub fn train_teacher(cfg: &TeacherConfig) -> Result<TeacherRun> {
    cfg.validate()?;
    let ds = cfg.dataset()?;
    let net = VelocityNet::new(cfg.net.clone())?;
    let encoder = ConditionEncoder::for_net(&cfg.net, encoder_seed(cfg.seed));
    let mut params = net.init_params(cfg.seed);
    let mut opt = Adam::new(&params, cfg.lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0x7465_6163);
    let sigma_d = cfg.sigma_d;
    let mut losses = Vec::with_capacity(cfg.steps as usize);
    let mut scratch = ResourceCounters::default();
    for step in 0..cfg.steps {
        let (x0, ids) = ds.sample_data(cfg.batch, &mut rng);
        let n = cfg.batch;
        let mut t = Vec::with_capacity(n);
        let mut x_scaled = Vec::with_capacity(2 * n);
        let mut target = Vec::with_capacity(2 * n);
        for i in 0..n {
            let ti = logit_normal_time(&mut rng, cfg.p_mean, cfg.p_std, sigma_d);
            let (c, s) = trig(ti);
            for d in 0..2 {
                let g: f64 = StandardNormal.sample(&mut rng);
                let z = sigma_d * g;
                let x = x0.at(i, d);
                x_scaled.push((c * x + s * z) / sigma_d);
                target.push(c * z - s * x);
            }
            t.push(ti);
        }
        let cond = encoder.encode(&ids, &mut scratch)?;
        let loss = TeacherLoss {
            net: &net,
            x_scaled: NumArray::matrix(n, 2, x_scaled),
            t: NumArray::column(&t),
            cond: &cond.rows,
            target: NumArray::matrix(n, 2, target),
            sigma_d,
        };
        let (value, g) = grad(&loss, &params).map_err(|e| Error::Diverged {
            step,
            reason: e.to_string(),
        })?;
        opt.step(&mut params, &g)?;
        losses.push(value);
    }
    Ok(TeacherRun { params, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{consistency_output, ScheduleFamily};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn point_mass_samples_are_exact() {
        let ds = Dataset2D::point_mass([2.0, -1.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, ids) = ds.sample_data(10, &mut rng);
        for i in 0..10 {
            assert_eq!(x.row(i), &[2.0, -1.0]);
            assert_eq!(ids[i], 0);
        }
    }

    #[test]
    fn mixture_mode_counts_concentrate() {
        let ds = Dataset2D::new(
            DatasetKind::GaussianMixture8 {
                radius: 1.0,
                mode_std: 0.05,
                num_conditions: 8,
            },
            0.5,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, ids) = ds.sample_data(8000, &mut rng);
        let mut counts = [0usize; 8];
        for y in ids {
            counts[y] += 1;
        }
        for c in counts {
            assert!((850..=1150).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let ds = Dataset2D::gmm8(0.5);
        let a = ds.sample_data(64, &mut ChaCha8Rng::seed_from_u64(9));
        let b = ds.sample_data(64, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn pooled_std_is_close_to_sigma_d() {
        for kind in [
            DatasetKind::GaussianMixture8 {
                radius: 1.0,
                mode_std: 0.12,
                num_conditions: 2,
            },
            DatasetKind::TwoMoons { noise: 0.05 },
            DatasetKind::SwissRoll2D { noise: 0.2 },
        ] {
            let ds = Dataset2D::new(kind, 0.5).unwrap();
            let (x, _) = ds.sample_data(10_000, &mut ChaCha8Rng::seed_from_u64(2));
            let n = x.rows() as f64;
            let mut pooled = 0.0;
            for d in 0..2 {
                let mean: f64 = (0..x.rows()).map(|i| x.at(i, d)).sum::<f64>() / n;
                pooled += (0..x.rows()).map(|i| (x.at(i, d) - mean).powi(2)).sum::<f64>() / (2.0 * n);
            }
            let std = pooled.sqrt();
            assert!((std - 0.5).abs() <= 0.02, "{:?}: std {std}", ds.kind());
        }
    }

    #[test]
    fn invalid_datasets_are_rejected() {
        assert!(Dataset2D::new(
            DatasetKind::GaussianMixture8 {
                radius: 1.0,
                mode_std: 0.1,
                num_conditions: 3
            },
            0.5
        )
        .is_err());
        assert!(Dataset2D::new(DatasetKind::TwoMoons { noise: -1.0 }, 0.5).is_err());
        assert!(Dataset2D::gmm8(0.5).sigma_d() == 0.5);
    }

    #[test]
    fn trigflow_target_values() {
        let x0 = NumArray::matrix(1, 2, vec![2.0, 0.0]);
        let z = NumArray::matrix(1, 2, vec![0.0, 2.0]);
        assert_eq!(trigflow_target(&x0, &z, 0.0).unwrap(), z);
        assert_eq!(trigflow_target(&x0, &z, FRAC_PI_2).unwrap(), x0.scaled(-1.0));
        let m = trigflow_target(&x0, &z, FRAC_PI_4).unwrap();
        let r2 = 2f64.sqrt();
        assert!((m.data()[0] + r2).abs() < 1e-15 && (m.data()[1] - r2).abs() < 1e-15);
    }

    #[test]
    fn point_mass_velocity_is_the_trajectory_derivative() {
        let xs = [2.0, -1.0];
        let z = [0.5, 0.3];
        for &t in &[0.1, 0.7, 1.3, FRAC_PI_2] {
            let (c, s) = trig(t);
            let xt = NumArray::matrix(1, 2, vec![c * xs[0] + s * z[0], c * xs[1] + s * z[1]]);
            let f = analytic_velocity_pointmass(&xt, t, &xs, 1.0).unwrap();
            for d in 0..2 {
                let dxdt = -s * xs[d] + c * z[d];
                assert!((f.data()[d] - dxdt).abs() < 1e-12);
            }
        }
        let zt = NumArray::matrix(1, 2, vec![0.5, 0.3]);
        let f = analytic_velocity_pointmass(&zt, FRAC_PI_2, &xs, 1.0).unwrap();
        assert_eq!(f.data(), &[-2.0, 1.0]);
        assert!(analytic_velocity_pointmass(&zt, 0.0, &xs, 1.0).is_err());
    }

    #[test]
    fn rotation_identity_reconstructs_x0() {
        let fam = ScheduleFamily::trigflow(0.5).unwrap();
        let x0 = NumArray::matrix(1, 2, vec![0.3, -0.8]);
        let z = NumArray::matrix(1, 2, vec![0.25, 0.4]);
        for &t in &[0.2, 0.9, 1.4] {
            let xt = fam.forward_noise(&x0, &z, t).unwrap();
            let f = trigflow_target(&x0, &z, t).unwrap().scaled(1.0 / 0.5);
            let back = consistency_output(&f, &xt, t, 0.5).unwrap();
            assert!(back.max_abs_diff(&x0) < 1e-14);
        }
    }

    #[test]
    fn mixture_velocity_reduces_to_point_mass() {
        let mv = MixtureVelocity::point_mass([2.0, -1.0], 0.5);
        let enc = EncodedConditions {
            ids: vec![0, 0],
            rows: NumArray::zeros(&[2, 1]),
        };
        let x = NumArray::from_rows(&[[0.3, 0.1], [-1.0, 2.0]]);
        let f = mv.predict(&x, &[0.4, 1.2], &enc).unwrap();
        for (i, &t) in [0.4, 1.2].iter().enumerate() {
            let want = analytic_velocity_pointmass(&x.gather_rows(&[i]), t, &[2.0, -1.0], 0.5).unwrap();
            assert!(want.max_abs_diff(&f.gather_rows(&[i])) < 1e-12);
        }
    }

    #[test]
    fn zero_step_teacher_returns_initialization() {
        let cfg = TeacherConfig {
            steps: 0,
            net: VelocityNetConfig {
                hidden_dims: vec![8],
                num_conditions: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let run = train_teacher(&cfg).unwrap();
        let net = VelocityNet::new(cfg.net.clone()).unwrap();
        assert_eq!(run.params, net.init_params(cfg.seed));
        assert!(run.losses.is_empty());
    }
}
