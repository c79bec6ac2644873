//! Continuous-time consistency distillation: r schedules, the JVP tangent,
//! the adaptively weighted loss, and the training loop for both the
//! trajectory-backward (TBCM) and forward-noised (SCM) sample spaces.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{grad, Eval, NumArray, Objective, Ops, ParamStore};
use crate::error::{Error, Result};
use crate::netmodel::{
    init_student_from_teacher, velocity_forward_jvp, AdaptiveWeightConfig, ConditionEncoder, NetVelocity,
    VelocityNet, WeightHead,
};
use crate::optim::Adam;
use crate::schedules::trig;
use crate::teacher::Dataset2D;
use crate::trajectory::{
    diffusion_space_batch, rollout_batch, sample_trajectory_times, FilterConfig, TimestepScheme, TrajectoryBatch,
};
use crate::ResourceCounters;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RMode {
    Warmup,
    WarmupCooldown,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RSchedule {
    pub h: u64,
    pub mode: RMode,
    pub s_r: u64,
    pub t_r: u64,
    pub r_f: f64,
}

impl RSchedule {
    pub fn warmup(h: u64) -> Result<Self> {
        let s = Self {
            h,
            mode: RMode::Warmup,
            s_r: h,
            t_r: 1,
            r_f: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn warmup_cooldown(h: u64, s_r: u64, t_r: u64, r_f: f64) -> Result<Self> {
        let s = Self {
            h,
            mode: RMode::WarmupCooldown,
            s_r,
            t_r,
            r_f,
        };
        s.validate()?;
        Ok(s)
    }

    /// Warmup over 400 iterations, cooldown to `r_f` starting at half of
    /// `total` and lasting a quarter of it.
    pub fn default_for(total: u64, r_f: f64) -> Self {
        let h = 400;
        Self {
            h,
            mode: RMode::WarmupCooldown,
            s_r: (total / 2).max(h),
            t_r: (total / 4).max(1),
            r_f,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(Error::Config("r schedule warmup H must be at least 1".into()));
        }
        if !(self.r_f > 0.0 && self.r_f <= 1.0) {
            return Err(Error::Config("r_f must lie in (0, 1]".into()));
        }
        if self.mode == RMode::WarmupCooldown && (self.s_r < self.h || self.t_r == 0) {
            return Err(Error::Config("cooldown needs S_r >= H and T_r >= 1".into()));
        }
        Ok(())
    }
}

pub fn r_value(s: &RSchedule, iters: u64) -> f64 {
    let warm = (iters as f64 / s.h as f64).min(1.0);
    match s.mode {
        RMode::Warmup => warm,
        RMode::WarmupCooldown => {
            let p = ((iters as f64 - s.s_r as f64) / s.t_r as f64).clamp(0.0, 1.0);
            (1.0 - p) * warm + p * s.r_f
        }
    }
}

/// `g = −cos²t·(σ_d F⁻ − dx/dt) − r·cos t·sin t·(x_t + σ_d dF⁻/dt)`, per row.
pub fn tangent_g(
    f_minus: &NumArray,
    dxdt: &NumArray,
    x_t: &NumArray,
    dfdt: &NumArray,
    t: &[f64],
    r: f64,
    sigma_d: f64,
) -> Result<NumArray> {
    f_minus.same_shape(dxdt, "tangent_g")?;
    f_minus.same_shape(x_t, "tangent_g")?;
    f_minus.same_shape(dfdt, "tangent_g")?;
    if f_minus.rows() != t.len() {
        return Err(Error::Shape {
            op: "tangent_g",
            expected: vec![t.len()],
            got: f_minus.shape().to_vec(),
        });
    }
    let mut g = f_minus.clone();
    for (i, &ti) in t.iter().enumerate() {
        let (c, s) = trig(ti);
        let (fm, v, x, df) = (f_minus.row(i), dxdt.row(i), x_t.row(i), dfdt.row(i));
        for (k, out) in g.row_mut(i).iter_mut().enumerate() {
            *out = -c * c * (sigma_d * fm[k] - v[k]) - r * c * s * (x[k] + sigma_d * df[k]);
        }
    }
    Ok(g)
}

/// Per-row `g / (‖g‖ + c)`.
pub fn normalize_tangent(g: &NumArray, c: f64) -> Result<NumArray> {
    if !(c > 0.0) {
        return Err(Error::Config(format!("tangent normalization constant must be positive, got {c}")));
    }
    let mut out = g.clone().as_matrix();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in row {
            *v /= norm + c;
        }
    }
    Ok(out.reshape(g.shape())?)
}

/// Loss value, gradients over every student parameter (`net.*` and
/// `wt.*`) and bookkeeping for one batch.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: ParamStore,
    pub kept: usize,
    /// Mean of `‖F_θ − F_θ⁻ − g‖²` over kept rows.
    pub residual: f64,
}

/// The pieces of the loss for kept rows: scaled states, times, conditions
/// and the stop-gradient regression target `F_θ⁻ + g`.
#[derive(Clone, Debug)]
pub struct LossInputs {
    pub x_scaled: NumArray,
    pub t: Vec<f64>,
    pub cond: NumArray,
    pub target: NumArray,
}

/// Build the constant side of the loss from `θ⁻`; `None` when every row is
/// masked out.
pub fn loss_inputs(
    net: &VelocityNet,
    theta_minus: &ParamStore,
    batch: &TrajectoryBatch,
    r: f64,
    c: f64,
    sigma_d: f64,
) -> Result<Option<LossInputs>> {
    let kept: Vec<usize> = (0..batch.len()).filter(|&i| batch.keep_mask[i]).collect();
    if kept.is_empty() {
        return Ok(None);
    }
    let x = batch.states.gather_rows(&kept);
    let v = batch.velocities.gather_rows(&kept);
    let t: Vec<f64> = kept.iter().map(|&i| batch.times[i]).collect();
    let cond = batch.cond.gather(&kept);
    let x_scaled = x.scaled(1.0 / sigma_d);
    let (f_minus, df_minus) = velocity_forward_jvp(net, theta_minus, &x_scaled, &t, &cond, &v, sigma_d)?;
    let g = tangent_g(&f_minus, &v, &x, &df_minus, &t, r, sigma_d)?;
    let g = normalize_tangent(&g, c)?;
    let mut target = f_minus;
    target.add_assign(&g);
    Ok(Some(LossInputs {
        x_scaled,
        t,
        cond: cond.rows,
        target,
    }))
}

struct ConsistencyObjective<'a> {
    net: &'a VelocityNet,
    head: &'a WeightHead,
    inputs: &'a LossInputs,
}

impl Objective for ConsistencyObjective<'_> {
    fn eval<E: Ops>(&self, e: &mut E, params: &ParamStore) -> Result<E::Val> {
        let inp = self.inputs;
        let x = e.constant(inp.x_scaled.clone());
        let t = e.constant(NumArray::column(&inp.t));
        let c = e.constant(inp.cond.clone());
        let f = self.net.forward(e, params, &x, &t, &c)?;
        let target = e.constant(inp.target.clone());
        let diff = e.sub(&f, &target)?;
        let sq = e.square(&diff)?;
        let per = e.sum_cols(&sq)?;
        let w = self.head.forward(e, params, &t)?;
        let ew = e.exp(&w)?;
        let weighted = e.mul(&ew, &per)?;
        let weighted = e.scale(&weighted, 1.0 / inp.x_scaled.cols() as f64)?;
        let per_sample = e.sub(&weighted, &w)?;
        e.mean(&per_sample)
    }
}

/// Loss and gradients with the target side taken from an explicit `θ⁻`.
#[allow(clippy::too_many_arguments)]
pub fn scm_loss_with_target(
    net: &VelocityNet,
    head: &WeightHead,
    params: &ParamStore,
    theta_minus: &ParamStore,
    batch: &TrajectoryBatch,
    r: f64,
    c: f64,
    sigma_d: f64,
) -> Result<Option<LossOutput>> {
    let Some(inputs) = loss_inputs(net, theta_minus, batch, r, c, sigma_d)? else {
        return Ok(None);
    };
    let obj = ConsistencyObjective {
        net,
        head,
        inputs: &inputs,
    };
    let (loss, grads) = grad(&obj, params)?;
    let residual = residual_mean(net, params, &inputs)?;
    Ok(Some(LossOutput {
        loss,
        grads,
        kept: inputs.t.len(),
        residual,
    }))
}

/// Masked-mean consistency loss where `θ⁻` is the current student with its
/// gradient flow severed.
pub fn scm_loss(
    net: &VelocityNet,
    head: &WeightHead,
    params: &ParamStore,
    batch: &TrajectoryBatch,
    r: f64,
    c: f64,
    sigma_d: f64,
) -> Result<Option<LossOutput>> {
    scm_loss_with_target(net, head, params, params, batch, r, c, sigma_d)
}

/// Loss value only, for fixed loss inputs.
pub fn loss_value(net: &VelocityNet, head: &WeightHead, params: &ParamStore, inputs: &LossInputs) -> Result<f64> {
    let obj = ConsistencyObjective { net, head, inputs };
    Ok(obj.eval(&mut Eval, params)?.data()[0])
}

fn residual_mean(net: &VelocityNet, params: &ParamStore, inputs: &LossInputs) -> Result<f64> {
    let mut e = Eval;
    let f = net.forward(
        &mut e,
        params,
        &inputs.x_scaled,
        &NumArray::column(&inputs.t),
        &inputs.cond,
    )?;
    let sq: f64 = f.zip_map(&inputs.target, |a, b| (a - b) * (a - b)).sum();
    Ok(sq / inputs.t.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistillMode {
    Tbcm,
    Scm,
}

impl DistillMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Tbcm => "tbcm",
            Self::Scm => "scm",
        }
    }
}

pub const SCM_DEFAULT_LR: f64 = 2e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    pub mode: DistillMode,
    pub scheme: TimestepScheme,
    /// Trajectory length `N` (TBCM only).
    pub n_steps: usize,
    pub r_schedule: RSchedule,
    pub c: f64,
    pub filter: Option<FilterConfig>,
    pub steps: u64,
    /// Optimizer samples per iteration. TBCM uses `batch / N` prompts.
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub sigma_d: f64,
    pub weight: AdaptiveWeightConfig,
    /// Learning-rate multiplier for the adaptive weighting head.
    pub weight_lr_scale: f64,
}

impl DistillConfig {
    pub fn new(mode: DistillMode, steps: u64) -> Self {
        let lr = match mode {
            DistillMode::Scm => SCM_DEFAULT_LR,
            DistillMode::Tbcm => 0.5 * SCM_DEFAULT_LR,
        };
        let scheme = match mode {
            DistillMode::Scm => TimestepScheme::logit_normal(),
            DistillMode::Tbcm => TimestepScheme::reference_route(),
        };
        Self {
            mode,
            scheme,
            n_steps: 8,
            r_schedule: RSchedule::default_for(steps, 0.75),
            c: 0.1,
            filter: None,
            steps,
            batch: 128,
            lr,
            seed: 0,
            sigma_d: 0.5,
            weight: AdaptiveWeightConfig::default(),
            weight_lr_scale: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.r_schedule.validate()?;
        if !(self.c > 0.0) || !(self.lr > 0.0) || !(self.sigma_d > 0.0) {
            return Err(Error::Config("c, lr and sigma_d must be positive".into()));
        }
        if !(self.weight_lr_scale >= 0.0) {
            return Err(Error::Config("weight_lr_scale must be non-negative".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.mode == DistillMode::Tbcm && self.n_steps == 0 {
            return Err(Error::Config("TBCM needs N >= 1".into()));
        }
        if self.mode == DistillMode::Scm && !matches!(self.scheme, TimestepScheme::LogitNormal { .. }) {
            return Err(Error::Config("SCM samples times from the logit-normal scheme".into()));
        }
        Ok(())
    }

    /// Prompts rolled out per TBCM iteration.
    pub fn prompts_per_iter(&self) -> usize {
        (self.batch / self.n_steps.max(1)).max(1)
    }
}

/// Student parameters (`net.*` plus `wt.*`), optimizer and counters.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ParamStore,
    pub opt: Adam,
    pub iters: u64,
    pub counters: ResourceCounters,
}

impl TrainState {
    pub fn new(
        net: &VelocityNet,
        head: &WeightHead,
        teacher: &ParamStore,
        lr: f64,
        weight_lr_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut params = init_student_from_teacher(net, teacher)?.filter_prefix("net.");
        for (name, value) in head.init_params(seed, 0.0).iter() {
            params.insert(name, value.clone())?;
        }
        let opt = Adam::new(&params, lr)?.with_group("wt.", weight_lr_scale)?;
        Ok(Self {
            params,
            opt,
            iters: 0,
            counters: ResourceCounters::default(),
        })
    }

    pub fn student(&self) -> ParamStore {
        self.params.filter_prefix("net.")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// `None` when the whole batch was filtered out.
    pub loss: Option<f64>,
    pub r: f64,
    pub kept_fraction: f64,
}

/// One optimizer update on `batch`; an all-masked batch only advances the
/// iteration counter.
pub fn distill_step(
    state: &mut TrainState,
    net: &VelocityNet,
    head: &WeightHead,
    batch: &TrajectoryBatch,
    cfg: &DistillConfig,
) -> Result<StepReport> {
    let r = r_value(&cfg.r_schedule, state.iters);
    state.counters.optimizer_samples += batch.len() as u64;
    let kept_fraction = batch.kept() as f64 / batch.len().max(1) as f64;
    let out = scm_loss(net, head, &state.params, batch, r, cfg.c, cfg.sigma_d).map_err(|e| match e {
        Error::NonFinite { .. } => Error::Diverged {
            step: state.iters,
            reason: e.to_string(),
        },
        other => other,
    })?;
    let loss = match out {
        Some(out) => {
            if !out.loss.is_finite() {
                return Err(Error::Diverged {
                    step: state.iters,
                    reason: "non-finite loss".into(),
                });
            }
            state.opt.step(&mut state.params, &out.grads)?;
            Some(out.loss)
        }
        None => None,
    };
    state.iters += 1;
    Ok(StepReport {
        loss,
        r,
        kept_fraction,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    pub loss: Option<f64>,
    pub r: f64,
    pub kept_fraction: f64,
    pub teacher_nfe: u64,
    pub cond_embeds: u64,
    pub data_encoder_calls: u64,
    pub eval: Option<f64>,
}

pub const METRICS_HEADER: &str = "iteration,loss,r,kept_fraction,teacher_nfe,cond_embeds,data_encoder_calls,eval";

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut w: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:?},{:?},{},{},{},{}",
            r.iteration,
            opt(r.loss),
            r.r,
            r.kept_fraction,
            r.teacher_nfe,
            r.cond_embeds,
            r.data_encoder_calls,
            opt(r.eval)
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct DistillRun {
    /// Final student velocity weights (`net.*`).
    pub student: ParamStore,
    /// Student plus adaptive-weight head.
    pub full: ParamStore,
    pub rows: Vec<MetricsRow>,
    pub counters: ResourceCounters,
}

/// Everything a distillation run reads but never mutates.
pub struct DistillSetup<'a> {
    pub net: &'a VelocityNet,
    pub teacher: &'a ParamStore,
    pub encoder: &'a ConditionEncoder,
    pub dataset: &'a Dataset2D,
}

/// Build the optimization batch for one iteration.
pub fn draw_batch(
    cfg: &DistillConfig,
    setup: &DistillSetup<'_>,
    rng: &mut ChaCha8Rng,
    counters: &mut ResourceCounters,
) -> Result<TrajectoryBatch> {
    let teacher = NetVelocity {
        net: setup.net,
        params: setup.teacher,
        sigma_d: cfg.sigma_d,
    };
    match cfg.mode {
        DistillMode::Tbcm => {
            let p = cfg.prompts_per_iter();
            let k = setup.dataset.num_conditions();
            let ids: Vec<usize> = (0..p).map(|_| rng.random_range(0..k)).collect();
            let noise = Normal::new(0.0, cfg.sigma_d).map_err(|e| Error::Config(e.to_string()))?;
            let z = NumArray::matrix(p, 2, (0..2 * p).map(|_| noise.sample(rng)).collect());
            let trajs = (0..p)
                .map(|_| sample_trajectory_times(&cfg.scheme, cfg.n_steps, cfg.sigma_d, rng))
                .collect::<Result<Vec<_>>>()?;
            rollout_batch(&teacher, setup.encoder, &z, &ids, &trajs, cfg.filter.as_ref(), counters)
        }
        DistillMode::Scm => {
            let (x0, ids) = setup.dataset.sample_data(cfg.batch, rng);
            diffusion_space_batch(&teacher, setup.encoder, &x0, &ids, &cfg.scheme, rng, counters)
        }
    }
}

/// Run the distillation loop. `eval` is called every `eval_every`
/// iterations (and after the last) on the current student.
pub fn run_distillation(
    cfg: &DistillConfig,
    setup: &DistillSetup<'_>,
    eval_every: u64,
    mut eval: Option<&mut dyn FnMut(&ParamStore) -> Result<f64>>,
) -> Result<DistillRun> {
    cfg.validate()?;
    setup.net.check_params(setup.teacher)?;
    let head = WeightHead::new(cfg.weight.clone())?;
    let mut state = TrainState::new(setup.net, &head, setup.teacher, cfg.lr, cfg.weight_lr_scale, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0x6469_7374);
    let mut rows = Vec::with_capacity(cfg.steps as usize);
    for it in 0..cfg.steps {
        let batch = draw_batch(cfg, setup, &mut rng, &mut state.counters)?;
        let report = distill_step(&mut state, setup.net, &head, &batch, cfg)?;
        let due = eval_every > 0 && ((it + 1) % eval_every == 0 || it + 1 == cfg.steps);
        let metric = match (&mut eval, due) {
            (Some(f), true) => Some(f(&state.student())?),
            _ => None,
        };
        rows.push(MetricsRow {
            iteration: it + 1,
            loss: report.loss,
            r: report.r,
            kept_fraction: report.kept_fraction,
            teacher_nfe: state.counters.teacher_nfe,
            cond_embeds: state.counters.cond_embeds,
            data_encoder_calls: state.counters.data_encoder_calls,
            eval: metric,
        });
    }
    Ok(DistillRun {
        student: state.student(),
        full: state.params,
        rows,
        counters: state.counters,
    })
}
