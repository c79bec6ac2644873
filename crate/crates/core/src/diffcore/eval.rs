use super::ops::{affine_value, concat_value, finite, sum_cols_value, Ops, Unary};
use super::{NumArray, ParamStore};
use crate::error::Result;

/// Value-only engine: no derivative bookkeeping.
#[derive(Debug, Default)]
pub struct Eval;

impl Ops for Eval {
    type Val = NumArray;

    fn constant(&mut self, a: NumArray) -> NumArray {
        a
    }

    fn param(&mut self, store: &ParamStore, name: &str) -> Result<NumArray> {
        store.get(name).cloned()
    }

    fn primal<'a>(&'a self, v: &'a NumArray) -> &'a NumArray {
        v
    }

    fn affine(&mut self, x: &NumArray, w: &NumArray, b: Option<&NumArray>) -> Result<NumArray> {
        affine_value(x, w, b)
    }

    fn add(&mut self, a: &NumArray, b: &NumArray) -> Result<NumArray> {
        a.same_shape(b, "add")?;
        finite(a.zip_map(b, |x, y| x + y), "add")
    }

    fn sub(&mut self, a: &NumArray, b: &NumArray) -> Result<NumArray> {
        a.same_shape(b, "sub")?;
        finite(a.zip_map(b, |x, y| x - y), "sub")
    }

    fn mul(&mut self, a: &NumArray, b: &NumArray) -> Result<NumArray> {
        a.same_shape(b, "mul")?;
        finite(a.zip_map(b, |x, y| x * y), "mul")
    }

    fn scale(&mut self, a: &NumArray, c: f64) -> Result<NumArray> {
        finite(a.scaled(c), "scale")
    }

    fn unary(&mut self, a: &NumArray, f: Unary) -> Result<NumArray> {
        finite(a.map(|x| f.apply(x)), f.name())
    }

    fn sum_cols(&mut self, a: &NumArray) -> Result<NumArray> {
        finite(sum_cols_value(a), "sum_cols")
    }

    fn sum(&mut self, a: &NumArray) -> Result<NumArray> {
        finite(NumArray::scalar(a.sum()), "sum")
    }

    fn concat_cols(&mut self, parts: &[&NumArray]) -> Result<NumArray> {
        concat_value(parts)
    }
}
