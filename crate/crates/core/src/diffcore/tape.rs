use std::collections::BTreeMap;

use super::array::gemm;
use super::ops::{affine_value, concat_value, finite, sum_cols_value, Ops, Unary};
use super::{NumArray, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    Affine { x: usize, w: usize, b: Option<usize> },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Unary(usize, Unary),
    SumCols(usize),
    Sum(usize),
    Concat(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: NumArray,
    op: Op,
    needs_grad: bool,
}

/// Reverse-mode recording engine.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Parameter gradients keyed by parameter name.
#[derive(Debug, Default)]
pub struct Gradients {
    by_name: BTreeMap<String, NumArray>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&NumArray> {
        self.by_name.get(name)
    }

    /// Gradients laid out like `like`; entries never touched are zero.
    pub fn to_store(&self, like: &ParamStore) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, v) in like.iter() {
            let g = self
                .by_name
                .get(name)
                .cloned()
                .unwrap_or_else(|| NumArray::zeros(v.shape()));
            out.insert(name, g).expect("names are unique");
        }
        out
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &NumArray {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: NumArray, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: &Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Back-propagate from a one-element output.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let root = &self.nodes[out.0];
        if root.value.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                expected: vec![1],
                got: root.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<NumArray>> = (0..=out.0).map(|_| None).collect();
        grads[out.0] = Some(NumArray::filled(root.value.shape(), 1.0));
        let mut result = Gradients::default();

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let acc = |grads: &mut Vec<Option<NumArray>>, j: usize, d: NumArray| {
                if !self.nodes[j].needs_grad {
                    return;
                }
                match &mut grads[j] {
                    Some(existing) => existing.add_assign(&d),
                    slot => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => match result.by_name.get_mut(name) {
                    Some(existing) => existing.add_assign(&g),
                    None => {
                        result.by_name.insert(name.clone(), g);
                    }
                },
                Op::Affine { x, w, b } => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    let (n, k, out) = (xv.rows(), xv.cols(), wv.rows());
                    if self.nodes[*x].needs_grad {
                        let mut dx = vec![0.0; n * k];
                        gemm(n, out, k, 1.0, g.data(), false, wv.data(), false, 0.0, &mut dx);
                        let dx = NumArray::new(xv.shape().to_vec(), dx)?;
                        acc(&mut grads, *x, dx);
                    }
                    if self.nodes[*w].needs_grad {
                        let mut dw = vec![0.0; out * k];
                        gemm(out, n, k, 1.0, g.data(), true, xv.data(), false, 0.0, &mut dw);
                        acc(&mut grads, *w, NumArray::new(wv.shape().to_vec(), dw)?);
                    }
                    if let Some(b) = b {
                        if self.nodes[*b].needs_grad {
                            let mut db = vec![0.0; out];
                            for r in 0..n {
                                for (d, v) in db.iter_mut().zip(g.row(r)) {
                                    *d += v;
                                }
                            }
                            let bshape = self.nodes[*b].value.shape().to_vec();
                            acc(&mut grads, *b, NumArray::new(bshape, db)?);
                        }
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.scaled(-1.0));
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    acc(&mut grads, *a, g.zip_map(bv, |d, y| d * y));
                    acc(&mut grads, *b, g.zip_map(av, |d, x| d * x));
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.scaled(*c)),
                Op::Unary(a, f) => {
                    let xv = &self.nodes[*a].value;
                    let mut d = g;
                    for ((dv, &x), &y) in d
                        .data_mut()
                        .iter_mut()
                        .zip(xv.data())
                        .zip(node.value.data())
                    {
                        *dv *= f.derivative(x, y);
                    }
                    acc(&mut grads, *a, d);
                }
                Op::SumCols(a) => {
                    let av = &self.nodes[*a].value;
                    let (n, k) = (av.rows(), av.cols());
                    let mut d = Vec::with_capacity(n * k);
                    for r in 0..n {
                        d.extend(std::iter::repeat(g.data()[r]).take(k));
                    }
                    acc(&mut grads, *a, NumArray::new(av.shape().to_vec(), d)?);
                }
                Op::Sum(a) => {
                    let av = &self.nodes[*a].value;
                    acc(&mut grads, *a, NumArray::filled(av.shape(), g.data()[0]));
                }
                Op::Concat(parts) => {
                    let n = g.rows();
                    let mut offset = 0;
                    for &p in parts {
                        let pv = &self.nodes[p].value;
                        let k = pv.cols();
                        if self.nodes[p].needs_grad {
                            let mut d = Vec::with_capacity(n * k);
                            for r in 0..n {
                                d.extend_from_slice(&g.row(r)[offset..offset + k]);
                            }
                            acc(&mut grads, p, NumArray::new(pv.shape().to_vec(), d)?);
                        }
                        offset += k;
                    }
                }
            }
        }
        Ok(result)
    }
}

impl Ops for Tape {
    type Val = Var;

    fn constant(&mut self, a: NumArray) -> Var {
        self.push(a, Op::Constant, false)
    }

    fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let v = store.get(name)?.clone();
        Ok(self.push(v, Op::Param(name.to_string()), true))
    }

    fn primal<'a>(&'a self, v: &'a Var) -> &'a NumArray {
        &self.nodes[v.0].value
    }

    fn affine(&mut self, x: &Var, w: &Var, b: Option<&Var>) -> Result<Var> {
        let value = affine_value(self.value(*x), self.value(*w), b.map(|b| self.value(*b)))?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(
            value,
            Op::Affine {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
            },
            ng,
        ))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.value(*a).same_shape(self.value(*b), "add")?;
        let v = finite(self.value(*a).zip_map(self.value(*b), |x, y| x + y), "add")?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a.0, b.0), ng))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.value(*a).same_shape(self.value(*b), "sub")?;
        let v = finite(self.value(*a).zip_map(self.value(*b), |x, y| x - y), "sub")?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a.0, b.0), ng))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.value(*a).same_shape(self.value(*b), "mul")?;
        let v = finite(self.value(*a).zip_map(self.value(*b), |x, y| x * y), "mul")?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Mul(a.0, b.0), ng))
    }

    fn scale(&mut self, a: &Var, c: f64) -> Result<Var> {
        let v = finite(self.value(*a).scaled(c), "scale")?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::Scale(a.0, c), ng))
    }

    fn unary(&mut self, a: &Var, f: Unary) -> Result<Var> {
        let v = finite(self.value(*a).map(|x| f.apply(x)), f.name())?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::Unary(a.0, f), ng))
    }

    fn sum_cols(&mut self, a: &Var) -> Result<Var> {
        let v = finite(sum_cols_value(self.value(*a)), "sum_cols")?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::SumCols(a.0), ng))
    }

    fn sum(&mut self, a: &Var) -> Result<Var> {
        let v = finite(NumArray::scalar(self.value(*a).sum()), "sum")?;
        let ng = self.ng(a);
        Ok(self.push(v, Op::Sum(a.0), ng))
    }

    fn concat_cols(&mut self, parts: &[&Var]) -> Result<Var> {
        let values: Vec<&NumArray> = parts.iter().map(|p| self.value(**p)).collect();
        let v = concat_value(&values)?;
        let ng = parts.iter().any(|p| self.ng(p));
        Ok(self.push(v, Op::Concat(parts.iter().map(|p| p.0).collect()), ng))
    }
}
