//! Conditional velocity network, its frozen condition encoder and the
//! adaptive loss-weighting head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::counters::ResourceCounters;
use crate::diffcore::{self, Eval, Field, NumArray, Ops, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityNetConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Number of Fourier features; must be even.
    pub time_embed_dim: usize,
    pub num_conditions: usize,
    pub cond_embed_dim: usize,
}

impl Default for VelocityNetConfig {
    fn default() -> Self {
        Self {
            input_dim: 2,
            hidden_dims: vec![128, 128, 128],
            time_embed_dim: 8,
            num_conditions: 1,
            cond_embed_dim: 8,
        }
    }
}

impl VelocityNetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.input_dim == 0 {
            return bad("input_dim must be positive");
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return bad("hidden_dims must be a non-empty list of positive widths");
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return bad("time_embed_dim must be even and positive");
        }
        if self.num_conditions == 0 || self.cond_embed_dim == 0 {
            return bad("condition vocabulary and embedding width must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveWeightConfig {
    pub hidden_dim: usize,
    pub time_embed_dim: usize,
}

impl Default for AdaptiveWeightConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            time_embed_dim: 8,
        }
    }
}

/// Fourier time features `[sin(2ᵏ t), cos(2ᵏ t)]`, `k = 0..dim/2`.
pub fn time_features<E: Ops>(e: &mut E, t: &E::Val, dim: usize) -> Result<E::Val> {
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half).map(|k| (1u64 << k) as f64).collect();
    let w = e.constant(NumArray::matrix(half, 1, freqs));
    let tf = e.affine(t, &w, None)?;
    let s = e.sin(&tf)?;
    let c = e.cos(&tf)?;
    e.concat_cols(&[&s, &c])
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> NumArray {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    NumArray::matrix(rows, cols, data)
}

/// Frozen lookup from condition id to embedding vector.
///
/// Plays the part of a prompt encoder: every call is counted, and callers
/// are expected to reuse the result rather than re-encode.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionEncoder {
    table: NumArray,
    seed: u64,
}

/// Encoded conditions, one row per id.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedConditions {
    pub ids: Vec<usize>,
    pub rows: NumArray,
}

impl EncodedConditions {
    /// Reuse already-encoded rows; no encoder call is made.
    pub fn gather(&self, idx: &[usize]) -> Self {
        Self {
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            rows: self.rows.gather_rows(idx),
        }
    }

    pub fn concat(parts: &[&EncodedConditions]) -> Result<Self> {
        let rows: Vec<&NumArray> = parts.iter().map(|p| &p.rows).collect();
        Ok(Self {
            ids: parts.iter().flat_map(|p| p.ids.iter().copied()).collect(),
            rows: NumArray::vstack(&rows)?,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl ConditionEncoder {
    pub fn new(num_conditions: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x636f_6e64);
        Self {
            table: normal_matrix(&mut rng, num_conditions, dim, 1.0),
            seed,
        }
    }

    pub fn for_net(cfg: &VelocityNetConfig, seed: u64) -> Self {
        Self::new(cfg.num_conditions, cfg.cond_embed_dim, seed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_conditions(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Embed one condition id, incrementing `cond_embeds` once.
    pub fn condition_embed(&self, y: usize, counters: &mut ResourceCounters) -> Result<NumArray> {
        if y >= self.num_conditions() {
            return Err(Error::UnknownCondition {
                id: y,
                size: self.num_conditions(),
            });
        }
        counters.cond_embeds += 1;
        Ok(NumArray::vector(self.table.row(y).to_vec()))
    }

    /// Embed a batch of ids; one counted call per id.
    pub fn encode(&self, ids: &[usize], counters: &mut ResourceCounters) -> Result<EncodedConditions> {
        let mut data = Vec::with_capacity(ids.len() * self.dim());
        for &y in ids {
            data.extend_from_slice(self.condition_embed(y, counters)?.data());
        }
        Ok(EncodedConditions {
            ids: ids.to_vec(),
            rows: NumArray::matrix(ids.len(), self.dim(), data),
        })
    }
}

/// `F_θ(x/σ_d, t, y)`: an MLP over `[x, time features]` with the condition
/// embedding projected into the first hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityNet {
    cfg: VelocityNetConfig,
}

impl VelocityNet {
    pub fn new(cfg: VelocityNetConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &VelocityNetConfig {
        &self.cfg
    }

    fn layer_names(&self) -> Vec<String> {
        (1..self.cfg.hidden_dims.len()).map(|i| format!("net.h{i}")).collect()
    }

    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x6e65_74);
        let c = &self.cfg;
        let mut p = ParamStore::new();
        let h0 = c.hidden_dims[0];
        let fan_in = c.input_dim + c.time_embed_dim;
        let put = |p: &mut ParamStore, n: &str, v: NumArray| p.insert(n, v).expect("fresh store");
        put(&mut p, "net.in.w", normal_matrix(&mut rng, h0, fan_in, (1.0 / fan_in as f64).sqrt()));
        put(&mut p, "net.in.b", NumArray::zeros(&[h0]));
        put(
            &mut p,
            "net.cond.w",
            normal_matrix(&mut rng, h0, c.cond_embed_dim, (1.0 / c.cond_embed_dim as f64).sqrt()),
        );
        for (i, name) in self.layer_names().iter().enumerate() {
            let (fi, fo) = (c.hidden_dims[i], c.hidden_dims[i + 1]);
            put(&mut p, &format!("{name}.w"), normal_matrix(&mut rng, fo, fi, (1.0 / fi as f64).sqrt()));
            put(&mut p, &format!("{name}.b"), NumArray::zeros(&[fo]));
        }
        let last = *c.hidden_dims.last().expect("validated");
        put(
            &mut p,
            "net.out.w",
            normal_matrix(&mut rng, c.input_dim, last, (1.0 / last as f64).sqrt()),
        );
        put(&mut p, "net.out.b", NumArray::zeros(&[c.input_dim]));
        p
    }

    /// Raw output for scaled inputs `x/σ_d: [n, d]`, times `[n, 1]` and
    /// encoded conditions `[n, e]`.
    pub fn forward<E: Ops>(
        &self,
        e: &mut E,
        params: &ParamStore,
        x_scaled: &E::Val,
        t: &E::Val,
        cond: &E::Val,
    ) -> Result<E::Val> {
        let temb = time_features(e, t, self.cfg.time_embed_dim)?;
        let inp = e.concat_cols(&[x_scaled, &temb])?;
        let w = e.param(params, "net.in.w")?;
        let b = e.param(params, "net.in.b")?;
        let wc = e.param(params, "net.cond.w")?;
        let h = e.affine(&inp, &w, Some(&b))?;
        let hc = e.affine(cond, &wc, None)?;
        let pre = e.add(&h, &hc)?;
        let mut h = e.silu(&pre)?;
        for name in self.layer_names() {
            let w = e.param(params, &format!("{name}.w"))?;
            let b = e.param(params, &format!("{name}.b"))?;
            let z = e.affine(&h, &w, Some(&b))?;
            h = e.silu(&z)?;
        }
        let w = e.param(params, "net.out.w")?;
        let b = e.param(params, "net.out.b")?;
        e.affine(&h, &w, Some(&b))
    }

    /// Check that `params` was built for this architecture.
    pub fn check_params(&self, params: &ParamStore) -> Result<()> {
        let reference = self.init_params(0);
        if !reference.same_layout(&params.filter_prefix("net.")) {
            return Err(Error::Architecture(
                "parameter layout does not match the velocity network configuration".into(),
            ));
        }
        Ok(())
    }

    fn check_inputs(&self, x: &NumArray, t: &[f64], cond: &EncodedConditions) -> Result<()> {
        if x.cols() != self.cfg.input_dim || x.rows() != t.len() || cond.len() != t.len() {
            return Err(Error::Shape {
                op: "velocity_forward",
                expected: vec![t.len(), self.cfg.input_dim],
                got: x.shape().to_vec(),
            });
        }
        if let Some(&bad) = cond.ids.iter().find(|&&y| y >= self.cfg.num_conditions) {
            return Err(Error::UnknownCondition {
                id: bad,
                size: self.cfg.num_conditions,
            });
        }
        Ok(())
    }
}

/// The network bound to a fixed batch of conditions, usable as a
/// [`Field`] of `(x/σ_d, t)`.
pub struct ConditionedNet<'a> {
    pub net: &'a VelocityNet,
    pub cond: &'a NumArray,
}

impl Field for ConditionedNet<'_> {
    fn eval<E: Ops>(&self, e: &mut E, params: &ParamStore, x: &E::Val, t: &E::Val) -> Result<E::Val> {
        let c = e.constant(self.cond.clone());
        self.net.forward(e, params, x, t, &c)
    }
}

/// `F_θ(x/σ_d, t, y)` evaluated on a batch.
pub fn velocity_forward(
    net: &VelocityNet,
    params: &ParamStore,
    x_over_sigma: &NumArray,
    t: &[f64],
    cond: &EncodedConditions,
) -> Result<NumArray> {
    net.check_inputs(x_over_sigma, t, cond)?;
    let field = ConditionedNet {
        net,
        cond: &cond.rows,
    };
    let mut e = Eval;
    let x = x_over_sigma.clone().as_matrix();
    field.eval(&mut e, params, &x, &NumArray::column(t))
}

/// `(F, dF/dt)` where the total derivative follows the direction
/// `(dx/dt / σ_d, 1)`. Parameters are constants in the tangent.
pub fn velocity_forward_jvp(
    net: &VelocityNet,
    params: &ParamStore,
    x_over_sigma: &NumArray,
    t: &[f64],
    cond: &EncodedConditions,
    dx_dt: &NumArray,
    sigma_d: f64,
) -> Result<(NumArray, NumArray)> {
    net.check_inputs(x_over_sigma, t, cond)?;
    x_over_sigma.same_shape(dx_dt, "velocity_forward_jvp")?;
    let field = ConditionedNet {
        net,
        cond: &cond.rows,
    };
    diffcore::jvp(
        &field,
        params,
        &x_over_sigma.clone().as_matrix(),
        &NumArray::column(t),
        &dx_dt.scaled(1.0 / sigma_d).as_matrix(),
        &NumArray::filled(&[t.len(), 1], 1.0),
    )
}

/// `w_φ(t)`: a one-hidden-layer network over Fourier time features.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightHead {
    cfg: AdaptiveWeightConfig,
}

impl WeightHead {
    pub fn new(cfg: AdaptiveWeightConfig) -> Result<Self> {
        if cfg.hidden_dim == 0 || cfg.time_embed_dim == 0 || cfg.time_embed_dim % 2 != 0 {
            return Err(Error::Config("invalid adaptive weight head configuration".into()));
        }
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &AdaptiveWeightConfig {
        &self.cfg
    }

    /// Hidden layer is random, output layer zero, output bias `shift`; the
    /// head therefore starts out constant at `shift`.
    pub fn init_params(&self, seed: u64, shift: f64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x7774);
        let (h, d) = (self.cfg.hidden_dim, self.cfg.time_embed_dim);
        let mut p = ParamStore::new();
        p.insert("wt.in.w", normal_matrix(&mut rng, h, d, (1.0 / d as f64).sqrt()))
            .expect("fresh store");
        p.insert("wt.in.b", NumArray::zeros(&[h])).expect("fresh store");
        p.insert("wt.out.w", NumArray::zeros(&[1, h])).expect("fresh store");
        p.insert("wt.out.b", NumArray::vector(vec![shift])).expect("fresh store");
        p
    }

    /// `[n, 1]` log-weights for times `[n, 1]`.
    pub fn forward<E: Ops>(&self, e: &mut E, phi: &ParamStore, t: &E::Val) -> Result<E::Val> {
        let temb = time_features(e, t, self.cfg.time_embed_dim)?;
        let w = e.param(phi, "wt.in.w")?;
        let b = e.param(phi, "wt.in.b")?;
        let h = e.affine(&temb, &w, Some(&b))?;
        let h = e.silu(&h)?;
        let w = e.param(phi, "wt.out.w")?;
        let b = e.param(phi, "wt.out.b")?;
        e.affine(&h, &w, Some(&b))
    }

    pub fn weight_forward(&self, phi: &ParamStore, t: f64) -> Result<f64> {
        let mut e = Eval;
        let t = NumArray::column(&[t]);
        Ok(self.forward(&mut e, phi, &t)?.data()[0])
    }
}

/// Deep copy of the teacher's weights as the student's starting point.
pub fn init_student_from_teacher(net: &VelocityNet, teacher: &ParamStore) -> Result<ParamStore> {
    net.check_params(teacher)?;
    Ok(teacher.clone())
}

/// Anything that returns the raw TrigFlow output `F` for unscaled states.
pub trait VelocityModel {
    fn sigma_d(&self) -> f64;

    /// `F(x_t/σ_d, t, y)` for each row of `x_t`.
    fn predict(&self, x_t: &NumArray, t: &[f64], cond: &EncodedConditions) -> Result<NumArray>;
}

/// A trained network exposed as a [`VelocityModel`].
pub struct NetVelocity<'a> {
    pub net: &'a VelocityNet,
    pub params: &'a ParamStore,
    pub sigma_d: f64,
}

impl VelocityModel for NetVelocity<'_> {
    fn sigma_d(&self) -> f64 {
        self.sigma_d
    }

    fn predict(&self, x_t: &NumArray, t: &[f64], cond: &EncodedConditions) -> Result<NumArray> {
        velocity_forward(self.net, self.params, &x_t.scaled(1.0 / self.sigma_d), t, cond)
    }
}
