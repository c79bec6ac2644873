//! Flat key-value run configuration shared by every CLI subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distill::{DistillConfig, DistillMode, RMode, RSchedule, SCM_DEFAULT_LR};
use crate::error::{Error, Result};
use crate::netmodel::{AdaptiveWeightConfig, VelocityNetConfig};
use crate::teacher::{Dataset2D, DatasetKind, TeacherConfig};
use crate::trajectory::{FilterConfig, TimestepScheme};

/// Environment variable that re-roots relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "CMLAB_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,

    pub dataset: String,
    pub gmm_radius: f64,
    pub gmm_mode_std: f64,
    pub num_conditions: usize,
    pub data_noise: f64,
    pub point_mass: [f64; 2],
    pub sigma_d: f64,

    pub hidden_dims: Vec<usize>,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,

    pub teacher_steps: u64,
    pub teacher_batch: usize,
    pub teacher_lr: f64,
    pub p_mean: f64,
    pub p_std: f64,

    pub mode: String,
    pub scheme: String,
    pub shift: f64,
    pub jitter_fraction: f64,
    pub trajectory_steps: usize,
    pub distill_steps: u64,
    pub batch: usize,
    /// Unset means the mode default (TBCM uses half the SCM rate).
    pub lr: Option<f64>,
    pub c: f64,
    pub r_mode: String,
    pub r_warmup: u64,
    pub r_cooldown_start: Option<u64>,
    pub r_cooldown_steps: Option<u64>,
    pub r_final: f64,
    pub weight_hidden: usize,
    pub weight_lr_scale: f64,
    /// Unset disables the brightness filter.
    pub filter_threshold: Option<f64>,
    /// Reference latent; defaults to the dataset's collapse point.
    pub filter_reference: Option<[f64; 2]>,
    pub eval_every: u64,

    pub eval_samples: usize,
    pub eval_projections: usize,
    pub eval_seed: u64,
    pub baseline_steps: usize,

    pub sample_count: usize,
    pub noise_probes: usize,
    pub noise_steps: usize,

    pub ablate_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: "runs/default".into(),
            dataset: "gmm8".into(),
            gmm_radius: 1.0,
            gmm_mode_std: 0.12,
            num_conditions: 2,
            data_noise: 0.05,
            point_mass: [2.0, -1.0],
            sigma_d: 0.5,
            hidden_dims: vec![128, 128, 128],
            time_embed_dim: 8,
            cond_embed_dim: 8,
            teacher_steps: 20_000,
            teacher_batch: 256,
            teacher_lr: 1e-3,
            p_mean: 0.2,
            p_std: 1.6,
            mode: "tbcm".into(),
            scheme: "reference_route".into(),
            shift: 3.0,
            jitter_fraction: 1.0,
            trajectory_steps: 8,
            distill_steps: 4000,
            batch: 128,
            lr: None,
            c: 0.1,
            r_mode: "warmup_cooldown".into(),
            r_warmup: 400,
            r_cooldown_start: None,
            r_cooldown_steps: None,
            r_final: 0.75,
            weight_hidden: 64,
            weight_lr_scale: 0.01,
            filter_threshold: None,
            filter_reference: None,
            eval_every: 500,
            eval_samples: 2048,
            eval_projections: 512,
            eval_seed: 1,
            baseline_steps: 32,
            sample_count: 2048,
            noise_probes: 256,
            noise_steps: 32,
            ablate_seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.teacher_config()?.validate()?;
        self.distill_config()?.validate()?;
        if self.eval_samples == 0 || self.eval_projections == 0 || self.sample_count == 0 {
            return Err(bad("evaluation and sample sizes must be positive"));
        }
        if self.baseline_steps == 0 || self.noise_steps == 0 || self.noise_probes == 0 {
            return Err(bad("baseline_steps, noise_steps and noise_probes must be positive"));
        }
        if self.ablate_seeds.is_empty() {
            return Err(bad("ablate_seeds must not be empty"));
        }
        Ok(())
    }

    /// Output directory after applying the environment override.
    pub fn output_path(&self) -> PathBuf {
        let p = PathBuf::from(&self.output_dir);
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if p.is_relative() => PathBuf::from(root).join(p),
            _ => p,
        }
    }

    pub fn dataset_kind(&self) -> Result<DatasetKind> {
        Ok(match self.dataset.as_str() {
            "gmm8" => DatasetKind::GaussianMixture8 {
                radius: self.gmm_radius,
                mode_std: self.gmm_mode_std,
                num_conditions: self.num_conditions,
            },
            "two_moons" => DatasetKind::TwoMoons { noise: self.data_noise },
            "swiss_roll" => DatasetKind::SwissRoll2D { noise: self.data_noise },
            "point_mass" => DatasetKind::PointMass { x_star: self.point_mass },
            other => return Err(bad(format!("unknown dataset {other:?}"))),
        })
    }

    pub fn dataset(&self) -> Result<Dataset2D> {
        Dataset2D::new(self.dataset_kind()?, self.sigma_d)
    }

    pub fn net_config(&self) -> Result<VelocityNetConfig> {
        let ds = self.dataset()?;
        Ok(VelocityNetConfig {
            input_dim: 2,
            hidden_dims: self.hidden_dims.clone(),
            time_embed_dim: self.time_embed_dim,
            num_conditions: ds.num_conditions(),
            cond_embed_dim: self.cond_embed_dim,
        })
    }

    pub fn teacher_config(&self) -> Result<TeacherConfig> {
        Ok(TeacherConfig {
            dataset: self.dataset_kind()?,
            sigma_d: self.sigma_d,
            net: self.net_config()?,
            steps: self.teacher_steps,
            batch: self.teacher_batch,
            lr: self.teacher_lr,
            seed: self.seed,
            p_mean: self.p_mean,
            p_std: self.p_std,
        })
    }

    pub fn distill_mode(&self) -> Result<DistillMode> {
        parse_mode(&self.mode)
    }

    pub fn timestep_scheme(&self) -> Result<TimestepScheme> {
        parse_scheme(&self.scheme, self.p_mean, self.p_std, self.shift, self.jitter_fraction)
    }

    pub fn distill_config(&self) -> Result<DistillConfig> {
        let mode = self.distill_mode()?;
        let mut cfg = DistillConfig::new(mode, self.distill_steps);
        cfg.scheme = match mode {
            DistillMode::Scm => TimestepScheme::LogitNormal {
                p_mean: self.p_mean,
                p_std: self.p_std,
            },
            DistillMode::Tbcm => self.timestep_scheme()?,
        };
        cfg.n_steps = self.trajectory_steps;
        let defaults = RSchedule::default_for(self.distill_steps, self.r_final);
        let h = self.r_warmup;
        cfg.r_schedule = match self.r_mode.as_str() {
            "warmup" => RSchedule {
                h,
                mode: RMode::Warmup,
                s_r: h,
                t_r: 1,
                r_f: 1.0,
            },
            "warmup_cooldown" => RSchedule {
                h,
                mode: RMode::WarmupCooldown,
                s_r: self.r_cooldown_start.unwrap_or((self.distill_steps / 2).max(h)),
                t_r: self.r_cooldown_steps.unwrap_or(defaults.t_r),
                r_f: self.r_final,
            },
            other => return Err(bad(format!("unknown r_mode {other:?}"))),
        };
        cfg.c = self.c;
        cfg.filter = match self.filter_threshold {
            Some(th) => {
                let z_b = match self.filter_reference {
                    Some(r) => r.to_vec(),
                    None => self.dataset()?.grand_mean().to_vec(),
                };
                Some(FilterConfig::new(z_b, th)?)
            }
            None => None,
        };
        cfg.batch = self.batch;
        cfg.lr = self.lr.unwrap_or(match mode {
            DistillMode::Scm => SCM_DEFAULT_LR,
            DistillMode::Tbcm => 0.5 * SCM_DEFAULT_LR,
        });
        cfg.seed = self.seed;
        cfg.sigma_d = self.sigma_d;
        cfg.weight = AdaptiveWeightConfig {
            hidden_dim: self.weight_hidden,
            time_embed_dim: self.time_embed_dim,
        };
        cfg.weight_lr_scale = self.weight_lr_scale;
        Ok(cfg)
    }
}

pub fn parse_mode(s: &str) -> Result<DistillMode> {
    match s {
        "tbcm" => Ok(DistillMode::Tbcm),
        "scm" => Ok(DistillMode::Scm),
        other => Err(bad(format!("unknown mode {other:?}, expected tbcm or scm"))),
    }
}

pub fn parse_scheme(s: &str, p_mean: f64, p_std: f64, shift: f64, jitter_fraction: f64) -> Result<TimestepScheme> {
    let scheme = match s {
        "random" => TimestepScheme::Random,
        "logit_normal" => TimestepScheme::LogitNormal { p_mean, p_std },
        "reference_route" => TimestepScheme::ReferenceRoute { shift, jitter_fraction },
        other => return Err(bad(format!("unknown scheme {other:?}"))),
    };
    scheme.validate()?;
    Ok(scheme)
}
