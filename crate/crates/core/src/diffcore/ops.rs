//! Primitive operation set shared by every evaluation engine.
//!
//! Model code is written once against [`Ops`] and can then be run for plain
//! values ([`Eval`](super::Eval)), forward-mode tangents
//! ([`DualEval`](super::DualEval)) or reverse-mode gradients
//! ([`Tape`](super::Tape)).

use super::array::gemm;
use super::{NumArray, ParamStore};
use crate::error::{Error, Result};

/// Smooth elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Sin,
    Cos,
    Exp,
    Tanh,
    Silu,
    Square,
}

impl Unary {
    pub fn name(self) -> &'static str {
        match self {
            Unary::Sin => "sin",
            Unary::Cos => "cos",
            Unary::Exp => "exp",
            Unary::Tanh => "tanh",
            Unary::Silu => "silu",
            Unary::Square => "square",
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::Exp => x.exp(),
            Unary::Tanh => x.tanh(),
            Unary::Silu => x * sigmoid(x),
            Unary::Square => x * x,
        }
    }

    /// Derivative at input `x` given output `y = apply(x)`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sin => x.cos(),
            Unary::Cos => -x.sin(),
            Unary::Exp => y,
            Unary::Tanh => 1.0 - y * y,
            Unary::Silu => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Unary::Square => 2.0 * x,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub trait Ops {
    type Val: Clone;

    /// A value that carries no derivative information.
    fn constant(&mut self, a: NumArray) -> Self::Val;

    /// A value read from a parameter store. Only the reverse-mode tape
    /// tracks these; other engines treat parameters as constants.
    fn param(&mut self, store: &ParamStore, name: &str) -> Result<Self::Val>;

    fn primal<'a>(&'a self, v: &'a Self::Val) -> &'a NumArray;

    /// `x · wᵀ + b` for `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    fn affine(&mut self, x: &Self::Val, w: &Self::Val, b: Option<&Self::Val>)
        -> Result<Self::Val>;

    fn add(&mut self, a: &Self::Val, b: &Self::Val) -> Result<Self::Val>;
    fn sub(&mut self, a: &Self::Val, b: &Self::Val) -> Result<Self::Val>;
    fn mul(&mut self, a: &Self::Val, b: &Self::Val) -> Result<Self::Val>;
    fn scale(&mut self, a: &Self::Val, c: f64) -> Result<Self::Val>;
    fn unary(&mut self, a: &Self::Val, f: Unary) -> Result<Self::Val>;

    /// Row sums: `[n, k] -> [n, 1]`.
    fn sum_cols(&mut self, a: &Self::Val) -> Result<Self::Val>;
    /// Total sum as a one-element array.
    fn sum(&mut self, a: &Self::Val) -> Result<Self::Val>;
    /// Concatenate batches with equal row counts along columns.
    fn concat_cols(&mut self, parts: &[&Self::Val]) -> Result<Self::Val>;

    fn sin(&mut self, a: &Self::Val) -> Result<Self::Val> {
        self.unary(a, Unary::Sin)
    }
    fn cos(&mut self, a: &Self::Val) -> Result<Self::Val> {
        self.unary(a, Unary::Cos)
    }
    fn exp(&mut self, a: &Self::Val) -> Result<Self::Val> {
        self.unary(a, Unary::Exp)
    }
    fn tanh(&mut self, a: &Self::Val) -> Result<Self::Val> {
        self.unary(a, Unary::Tanh)
    }
    fn silu(&mut self, a: &Self::Val) -> Result<Self::Val> {
        self.unary(a, Unary::Silu)
    }
    fn square(&mut self, a: &Self::Val) -> Result<Self::Val> {
        self.unary(a, Unary::Square)
    }
    fn mean(&mut self, a: &Self::Val) -> Result<Self::Val> {
        let n = self.primal(a).len().max(1) as f64;
        let s = self.sum(a)?;
        self.scale(&s, 1.0 / n)
    }
}

pub(crate) fn finite(a: NumArray, op: &'static str) -> Result<NumArray> {
    if a.all_finite() {
        Ok(a)
    } else {
        Err(Error::NonFinite { op })
    }
}

pub(crate) fn affine_value(x: &NumArray, w: &NumArray, b: Option<&NumArray>) -> Result<NumArray> {
    check_affine(x, w, b)?;
    let (n, k, out) = (x.rows(), x.cols(), w.rows());
    let mut c = match b {
        Some(b) => {
            let mut c = Vec::with_capacity(n * out);
            for _ in 0..n {
                c.extend_from_slice(b.data());
            }
            c
        }
        None => vec![0.0; n * out],
    };
    let beta = if b.is_some() { 1.0 } else { 0.0 };
    gemm(n, k, out, 1.0, x.data(), false, w.data(), true, beta, &mut c);
    finite(NumArray::matrix(n, out, c), "affine")
}

/// `x · wᵀ` without bias and without the finiteness check; used for tangents.
pub(crate) fn matmul_t(x: &NumArray, w: &NumArray) -> NumArray {
    let (n, k, out) = (x.rows(), x.cols(), w.rows());
    let mut c = vec![0.0; n * out];
    gemm(n, k, out, 1.0, x.data(), false, w.data(), true, 0.0, &mut c);
    NumArray::matrix(n, out, c)
}

fn check_affine(x: &NumArray, w: &NumArray, b: Option<&NumArray>) -> Result<()> {
    if w.shape().len() != 2 || x.cols() != w.cols() {
        return Err(Error::Shape {
            op: "affine",
            expected: vec![x.rows(), w.cols()],
            got: x.shape().to_vec(),
        });
    }
    if let Some(b) = b {
        if b.len() != w.rows() {
            return Err(Error::Shape {
                op: "affine bias",
                expected: vec![w.rows()],
                got: b.shape().to_vec(),
            });
        }
    }
    Ok(())
}

pub(crate) fn sum_cols_value(a: &NumArray) -> NumArray {
    let n = a.rows();
    let data = (0..n).map(|i| a.row(i).iter().sum()).collect();
    NumArray::matrix(n, 1, data)
}

pub(crate) fn concat_value(parts: &[&NumArray]) -> Result<NumArray> {
    let n = parts.first().map_or(0, |p| p.rows());
    for p in parts {
        if p.rows() != n {
            return Err(Error::Shape {
                op: "concat_cols",
                expected: vec![n, p.cols()],
                got: p.shape().to_vec(),
            });
        }
    }
    let total: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(n * total);
    for i in 0..n {
        for p in parts {
            data.extend_from_slice(p.row(i));
        }
    }
    Ok(NumArray::matrix(n, total, data))
}

/// Broadcast a bias-like vector `[out]` over `n` rows.
pub(crate) fn broadcast_rows(b: &NumArray, n: usize) -> NumArray {
    let mut data = Vec::with_capacity(n * b.len());
    for _ in 0..n {
        data.extend_from_slice(b.data());
    }
    NumArray::matrix(n, b.len(), data)
}
