//! Diffusion formulations (EDM, flow matching, TrigFlow), the
//! flow-matching ↔ TrigFlow coordinate transforms, the consistency output
//! and the equivalent-noise diagnostic.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::diffcore::NumArray;
use crate::error::{Error, Result};

/// Guard below which `sin t` (or `t` for EDM) is treated as zero.
pub const T_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    Edm,
    FlowMatching,
    TrigFlow,
}

/// One row of the unified formulation table: `x_t = α_t x₀ + σ_t z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleFamily {
    tag: FamilyTag,
    sigma_d: f64,
    t_max: f64,
}

impl ScheduleFamily {
    pub fn edm(t_max: f64, sigma_d: f64) -> Result<Self> {
        if !(t_max > 0.0) {
            return Err(Error::Config(format!("EDM horizon must be positive, got {t_max}")));
        }
        Self::build(FamilyTag::Edm, sigma_d, t_max)
    }

    pub fn flow_matching(sigma_d: f64) -> Result<Self> {
        Self::build(FamilyTag::FlowMatching, sigma_d, 1.0)
    }

    pub fn trigflow(sigma_d: f64) -> Result<Self> {
        Self::build(FamilyTag::TrigFlow, sigma_d, FRAC_PI_2)
    }

    fn build(tag: FamilyTag, sigma_d: f64, t_max: f64) -> Result<Self> {
        if !(sigma_d > 0.0) {
            return Err(Error::Config(format!("sigma_d must be positive, got {sigma_d}")));
        }
        Ok(Self {
            tag,
            sigma_d,
            t_max,
        })
    }

    pub fn tag(&self) -> FamilyTag {
        self.tag
    }

    pub fn sigma_d(&self) -> f64 {
        self.sigma_d
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    fn check_t(&self, t: f64, op: &'static str) -> Result<()> {
        if !(0.0..=self.t_max).contains(&t) {
            return Err(Error::Domain {
                op,
                value: t,
                lo: 0.0,
                hi: self.t_max,
            });
        }
        Ok(())
    }

    /// `(α_t, σ_t)` for this family.
    pub fn alpha_sigma(&self, t: f64) -> Result<(f64, f64)> {
        self.check_t(t, "alpha_sigma")?;
        Ok(match self.tag {
            FamilyTag::Edm => (1.0, t),
            FamilyTag::FlowMatching => (1.0 - t, t),
            FamilyTag::TrigFlow => {
                if t == 0.0 {
                    (1.0, 0.0)
                } else if t == FRAC_PI_2 {
                    (0.0, 1.0)
                } else {
                    (t.cos(), t.sin())
                }
            }
        })
    }

    /// `α_t·x₀ + σ_t·z`.
    pub fn forward_noise(&self, x0: &NumArray, z: &NumArray, t: f64) -> Result<NumArray> {
        x0.same_shape(z, "forward_noise")?;
        let (a, s) = self.alpha_sigma(t)?;
        Ok(x0.zip_map(z, |x, n| a * x + s * n))
    }

    /// Probability-flow `dx/dt` from the raw network output.
    ///
    /// EDM: `(x_t − x̂)/t` with `output = x̂`; flow matching: `v`;
    /// TrigFlow: `σ_d·F`.
    pub fn ode_rhs(&self, output: &NumArray, x_t: &NumArray, t: f64) -> Result<NumArray> {
        output.same_shape(x_t, "ode_rhs")?;
        self.check_t(t, "ode_rhs")?;
        Ok(match self.tag {
            FamilyTag::Edm => {
                if t < T_EPS {
                    return Err(Error::Singular {
                        op: "ode_rhs",
                        t,
                        guard: T_EPS,
                    });
                }
                x_t.zip_map(output, |x, d| (x - d) / t)
            }
            FamilyTag::FlowMatching => output.clone(),
            FamilyTag::TrigFlow => output.scaled(self.sigma_d),
        })
    }
}

/// TrigFlow time → flow-matching time, `sin t / (sin t + cos t)`.
pub fn t_fm_from_trig(t_trig: f64) -> Result<f64> {
    if !(0.0..=FRAC_PI_2).contains(&t_trig) {
        return Err(Error::Domain {
            op: "t_fm_from_trig",
            value: t_trig,
            lo: 0.0,
            hi: FRAC_PI_2,
        });
    }
    if t_trig == FRAC_PI_2 {
        return Ok(1.0);
    }
    let (s, c) = t_trig.sin_cos();
    Ok(s / (s + c))
}

/// Inverse of [`t_fm_from_trig`]: `atan(t / (1 − t))`, with `1 ↦ π/2`.
pub fn t_trig_from_fm(t_fm: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t_fm) {
        return Err(Error::Domain {
            op: "t_trig_from_fm",
            value: t_fm,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if t_fm == 1.0 {
        return Ok(FRAC_PI_2);
    }
    Ok(t_fm.atan2(1.0 - t_fm))
}

/// `√(t² + (1 − t)²)`, the norm relating the two parameterizations.
pub fn fm_scale(t_fm: f64) -> f64 {
    (t_fm * t_fm + (1.0 - t_fm) * (1.0 - t_fm)).sqrt()
}

/// TrigFlow state → flow-matching state and time.
pub fn x_fm_from_trig(x_trig: &NumArray, t_trig: f64, sigma_d: f64) -> Result<(NumArray, f64)> {
    let t_fm = t_fm_from_trig(t_trig)?;
    let k = fm_scale(t_fm) / sigma_d;
    Ok((x_trig.scaled(k), t_fm))
}

/// Expose a flow-matching velocity model as a TrigFlow `F̂`.
///
/// `v_net(x_fm, t_fm)` is evaluated at the transformed point; the result
/// is `[(1 − 2t)·x_fm + (1 − 2t + 2t²)·v] / √(t² + (1 − t)²)`.
pub fn wrap_fm_as_trigflow<V>(v_net: V, x_trig: &NumArray, t_trig: f64, sigma_d: f64) -> Result<NumArray>
where
    V: FnOnce(&NumArray, f64) -> Result<NumArray>,
{
    let (x_fm, t) = x_fm_from_trig(x_trig, t_trig, sigma_d)?;
    let v = v_net(&x_fm, t)?;
    x_fm.same_shape(&v, "wrap_fm_as_trigflow")?;
    let a = 1.0 - 2.0 * t;
    let b = 1.0 - 2.0 * t + 2.0 * t * t;
    let norm = fm_scale(t);
    Ok(x_fm.zip_map(&v, |x, v| (a * x + b * v) / norm))
}

/// Clean-sample prediction `cos t·x_t − sin t·σ_d·F`.
pub fn consistency_output(f_value: &NumArray, x_t: &NumArray, t: f64, sigma_d: f64) -> Result<NumArray> {
    f_value.same_shape(x_t, "consistency_output")?;
    let (c, s) = trig(t);
    Ok(x_t.zip_map(f_value, |x, f| c * x - s * sigma_d * f))
}

/// Row-wise [`consistency_output`] with a per-row time.
pub fn consistency_output_rows(
    f_value: &NumArray,
    x_t: &NumArray,
    t: &[f64],
    sigma_d: f64,
) -> Result<NumArray> {
    f_value.same_shape(x_t, "consistency_output")?;
    let mut out = x_t.clone();
    for (i, &ti) in t.iter().enumerate() {
        let (c, s) = trig(ti);
        for (o, &f) in out.row_mut(i).iter_mut().zip(f_value.row(i)) {
            *o = c * *o - s * sigma_d * f;
        }
    }
    Ok(out)
}

/// Noise that reproduces `x_t` by forward noising from `x̂₀`:
/// `(x_t − cos t·x̂₀) / sin t`.
pub fn equivalent_noise(x_t: &NumArray, x0_hat: &NumArray, t: f64) -> Result<NumArray> {
    x_t.same_shape(x0_hat, "equivalent_noise")?;
    let (c, s) = trig(t);
    if s < T_EPS {
        return Err(Error::Singular {
            op: "equivalent_noise",
            t,
            guard: T_EPS,
        });
    }
    Ok(x_t.zip_map(x0_hat, |x, x0| (x - c * x0) / s))
}

/// `(cos t, sin t)` with exact values at the two endpoints.
pub(crate) fn trig(t: f64) -> (f64, f64) {
    if t == 0.0 {
        (1.0, 0.0)
    } else if t == FRAC_PI_2 {
        (0.0, 1.0)
    } else {
        (t.cos(), t.sin())
    }
}

/// Cosine similarity; `0` when either vector is zero. Written as
/// `a·b / √(|a|²|b|²)` so that identical inputs give exactly `1`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let denom = (na * nb).sqrt();
    if denom.is_finite() && denom > 0.0 {
        dot / denom
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}
