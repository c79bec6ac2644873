use super::ops::{
    affine_value, broadcast_rows, concat_value, finite, matmul_t, sum_cols_value, Ops, Unary,
};
use super::{NumArray, ParamStore};
use crate::error::{Error, Result};

/// A primal batch paired with its tangent (same shape).
#[derive(Clone, Debug, PartialEq)]
pub struct DualBatch {
    pub primal: NumArray,
    pub tangent: NumArray,
}

impl DualBatch {
    pub fn new(primal: NumArray, tangent: NumArray) -> Result<Self> {
        primal.same_shape(&tangent, "DualBatch::new")?;
        Ok(Self { primal, tangent })
    }
}

/// Engine-internal dual value; a missing tangent means "identically zero".
#[derive(Clone, Debug)]
pub struct Dual {
    pub primal: NumArray,
    pub tangent: Option<NumArray>,
}

impl Dual {
    pub fn seeded(primal: NumArray, tangent: NumArray) -> Result<Self> {
        primal.same_shape(&tangent, "dual seed")?;
        Ok(Self {
            primal,
            tangent: Some(tangent),
        })
    }

    pub fn into_batch(self) -> DualBatch {
        let tangent = self
            .tangent
            .unwrap_or_else(|| NumArray::zeros(self.primal.shape()));
        DualBatch {
            primal: self.primal,
            tangent,
        }
    }
}

/// Forward-mode engine. Parameters never carry tangents, so a directional
/// derivative computed here has no path back into the weights.
#[derive(Debug, Default)]
pub struct DualEval;

fn tangent_finite(t: Option<NumArray>, op: &'static str) -> Result<Option<NumArray>> {
    match t {
        Some(t) if !t.all_finite() => Err(Error::NonFinite { op }),
        other => Ok(other),
    }
}

fn add_opt(a: Option<NumArray>, b: Option<NumArray>) -> Option<NumArray> {
    match (a, b) {
        (Some(mut a), Some(b)) => {
            a.add_assign(&b);
            Some(a)
        }
        (a, None) => a,
        (None, b) => b,
    }
}

impl Ops for DualEval {
    type Val = Dual;

    fn constant(&mut self, a: NumArray) -> Dual {
        Dual {
            primal: a,
            tangent: None,
        }
    }

    fn param(&mut self, store: &ParamStore, name: &str) -> Result<Dual> {
        Ok(self.constant(store.get(name)?.clone()))
    }

    fn primal<'a>(&'a self, v: &'a Dual) -> &'a NumArray {
        &v.primal
    }

    fn affine(&mut self, x: &Dual, w: &Dual, b: Option<&Dual>) -> Result<Dual> {
        let primal = affine_value(&x.primal, &w.primal, b.map(|b| &b.primal))?;
        let n = primal.rows();
        let mut t = x.tangent.as_ref().map(|dx| matmul_t(dx, &w.primal));
        t = add_opt(t, w.tangent.as_ref().map(|dw| matmul_t(&x.primal, dw)));
        t = add_opt(
            t,
            b.and_then(|b| b.tangent.as_ref()).map(|db| broadcast_rows(db, n)),
        );
        Ok(Dual {
            primal,
            tangent: tangent_finite(t, "affine")?,
        })
    }

    fn add(&mut self, a: &Dual, b: &Dual) -> Result<Dual> {
        a.primal.same_shape(&b.primal, "add")?;
        let primal = finite(a.primal.zip_map(&b.primal, |x, y| x + y), "add")?;
        let tangent = add_opt(a.tangent.clone(), b.tangent.clone());
        Ok(Dual {
            primal,
            tangent: tangent_finite(tangent, "add")?,
        })
    }

    fn sub(&mut self, a: &Dual, b: &Dual) -> Result<Dual> {
        a.primal.same_shape(&b.primal, "sub")?;
        let primal = finite(a.primal.zip_map(&b.primal, |x, y| x - y), "sub")?;
        let tangent = add_opt(a.tangent.clone(), b.tangent.as_ref().map(|t| t.scaled(-1.0)));
        Ok(Dual {
            primal,
            tangent: tangent_finite(tangent, "sub")?,
        })
    }

    fn mul(&mut self, a: &Dual, b: &Dual) -> Result<Dual> {
        a.primal.same_shape(&b.primal, "mul")?;
        let primal = finite(a.primal.zip_map(&b.primal, |x, y| x * y), "mul")?;
        let ta = a.tangent.as_ref().map(|t| t.zip_map(&b.primal, |d, y| d * y));
        let tb = b.tangent.as_ref().map(|t| a.primal.zip_map(t, |x, d| x * d));
        Ok(Dual {
            primal,
            tangent: tangent_finite(add_opt(ta, tb), "mul")?,
        })
    }

    fn scale(&mut self, a: &Dual, c: f64) -> Result<Dual> {
        Ok(Dual {
            primal: finite(a.primal.scaled(c), "scale")?,
            tangent: tangent_finite(a.tangent.as_ref().map(|t| t.scaled(c)), "scale")?,
        })
    }

    fn unary(&mut self, a: &Dual, f: Unary) -> Result<Dual> {
        let primal = finite(a.primal.map(|x| f.apply(x)), f.name())?;
        let tangent = match &a.tangent {
            Some(t) => {
                let mut d = t.clone();
                for ((dv, &x), &y) in d
                    .data_mut()
                    .iter_mut()
                    .zip(a.primal.data())
                    .zip(primal.data())
                {
                    *dv *= f.derivative(x, y);
                }
                Some(d)
            }
            None => None,
        };
        Ok(Dual {
            primal,
            tangent: tangent_finite(tangent, f.name())?,
        })
    }

    fn sum_cols(&mut self, a: &Dual) -> Result<Dual> {
        Ok(Dual {
            primal: finite(sum_cols_value(&a.primal), "sum_cols")?,
            tangent: a.tangent.as_ref().map(sum_cols_value),
        })
    }

    fn sum(&mut self, a: &Dual) -> Result<Dual> {
        Ok(Dual {
            primal: finite(NumArray::scalar(a.primal.sum()), "sum")?,
            tangent: a.tangent.as_ref().map(|t| NumArray::scalar(t.sum())),
        })
    }

    fn concat_cols(&mut self, parts: &[&Dual]) -> Result<Dual> {
        let primals: Vec<&NumArray> = parts.iter().map(|p| &p.primal).collect();
        let primal = concat_value(&primals)?;
        let tangent = if parts.iter().any(|p| p.tangent.is_some()) {
            let zeros: Vec<NumArray> = parts
                .iter()
                .map(|p| NumArray::zeros(&[p.primal.rows(), p.primal.cols()]))
                .collect();
            let ts: Vec<&NumArray> = parts
                .iter()
                .zip(&zeros)
                .map(|(p, z)| p.tangent.as_ref().unwrap_or(z))
                .collect();
            Some(concat_value(&ts)?)
        } else {
            None
        };
        Ok(Dual { primal, tangent })
    }
}
