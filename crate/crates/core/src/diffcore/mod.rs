//! Minimal differentiation engine.
//!
//! Array-level primitives (affine maps, elementwise arithmetic, smooth
//! nonlinearities, reductions, concatenation) run under three engines:
//! [`Eval`] for values, [`DualEval`] for Jacobian-vector products and
//! [`Tape`] for reverse-mode parameter gradients.

mod array;
mod dual;
mod eval;
mod ops;
mod params;
mod tape;

pub use array::NumArray;
pub use dual::{Dual, DualBatch, DualEval};
pub use eval::Eval;
pub use ops::{Ops, Unary};
pub use params::ParamStore;
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};

/// A batched map `(params, x, t) -> y` built from [`Ops`] primitives.
///
/// `x` is `[n, d]` and `t` is `[n, 1]`. Conditioning, if any, is carried
/// by the implementor.
pub trait Field {
    fn eval<E: Ops>(&self, e: &mut E, params: &ParamStore, x: &E::Val, t: &E::Val)
        -> Result<E::Val>;
}

/// A scalar-valued function of the parameters.
pub trait Objective {
    fn eval<E: Ops>(&self, e: &mut E, params: &ParamStore) -> Result<E::Val>;
}

pub fn evaluate<F: Field>(
    f: &F,
    params: &ParamStore,
    x: &NumArray,
    t: &NumArray,
) -> Result<NumArray> {
    let mut e = Eval;
    f.eval(&mut e, params, x, t)
}

/// Value and directional derivative of `f` along `(x_dot, t_dot)` in one
/// dual-number pass. Parameters are held constant.
pub fn jvp<F: Field>(
    f: &F,
    params: &ParamStore,
    x: &NumArray,
    t: &NumArray,
    x_dot: &NumArray,
    t_dot: &NumArray,
) -> Result<(NumArray, NumArray)> {
    let mut e = DualEval;
    let xd = Dual::seeded(x.clone(), x_dot.clone())?;
    let td = Dual::seeded(t.clone(), t_dot.clone())?;
    let out = f.eval(&mut e, params, &xd, &td)?.into_batch();
    Ok((out.primal, out.tangent))
}

/// Central-difference approximation of the directional derivative.
pub fn finite_diff_directional<F: Field>(
    f: &F,
    params: &ParamStore,
    x: &NumArray,
    t: &NumArray,
    x_dot: &NumArray,
    t_dot: &NumArray,
    eps: f64,
) -> Result<NumArray> {
    if !(eps > 0.0) {
        return Err(Error::Domain {
            op: "finite_diff_directional",
            value: eps,
            lo: f64::MIN_POSITIVE,
            hi: f64::INFINITY,
        });
    }
    x.same_shape(x_dot, "finite_diff_directional")?;
    t.same_shape(t_dot, "finite_diff_directional")?;
    let step = |s: f64| -> Result<NumArray> {
        let xs = x.zip_map(x_dot, |a, d| a + s * d);
        let ts = t.zip_map(t_dot, |a, d| a + s * d);
        evaluate(f, params, &xs, &ts)
    };
    let plus = step(eps)?;
    let minus = step(-eps)?;
    Ok(plus.zip_map(&minus, |p, m| (p - m) / (2.0 * eps)))
}

/// Loss value and exact reverse-mode gradients, laid out like `params`.
pub fn grad<O: Objective>(loss: &O, params: &ParamStore) -> Result<(f64, ParamStore)> {
    let mut tape = Tape::new();
    let out = loss.eval(&mut tape, params)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(Error::Shape {
            op: "grad",
            expected: vec![1],
            got: value.shape().to_vec(),
        });
    }
    let v = value.data()[0];
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "loss" });
    }
    let grads = tape.backward(out)?;
    Ok((v, grads.to_store(params)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// f(x, t) = A·x + b·t with A, b read from the store.
    struct Linear;

    impl Field for Linear {
        fn eval<E: Ops>(
            &self,
            e: &mut E,
            p: &ParamStore,
            x: &E::Val,
            t: &E::Val,
        ) -> Result<E::Val> {
            let a = e.param(p, "a")?;
            let b = e.param(p, "b")?;
            let ax = e.affine(x, &a, None)?;
            let bt = e.affine(t, &b, None)?;
            e.add(&ax, &bt)
        }
    }

    fn linear_params() -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("a", NumArray::matrix(2, 2, vec![1.0, 2.0, -3.0, 0.5]))
            .unwrap();
        p.insert("b", NumArray::matrix(2, 1, vec![4.0, -1.0])).unwrap();
        p
    }

    /// Scalar f(x, t) = x² · sin t.
    struct SquareSin;

    impl Field for SquareSin {
        fn eval<E: Ops>(&self, e: &mut E, _: &ParamStore, x: &E::Val, t: &E::Val) -> Result<E::Val> {
            let xx = e.square(x)?;
            let s = e.sin(t)?;
            e.mul(&xx, &s)
        }
    }

    #[test]
    fn jvp_of_linear_map_is_the_map() {
        let p = linear_params();
        let x = NumArray::matrix(1, 2, vec![0.3, -0.7]);
        let t = NumArray::column(&[0.9]);
        let v = NumArray::matrix(1, 2, vec![1.5, 2.0]);
        let (val, d) = jvp(&Linear, &p, &x, &t, &v, &NumArray::column(&[1.0])).unwrap();
        // A·x + b·t
        let expect_val = [0.3 - 1.4 + 3.6, -0.9 - 0.35 - 0.9];
        // A·v + b
        let expect_d = [1.5 + 4.0 + 4.0, -4.5 + 1.0 - 1.0];
        for i in 0..2 {
            assert!((val.data()[i] - expect_val[i]).abs() < 1e-14);
            assert!((d.data()[i] - expect_d[i]).abs() < 1e-14);
        }
        let fd = finite_diff_directional(&Linear, &p, &x, &t, &v, &NumArray::column(&[1.0]), 0.3)
            .unwrap();
        assert!(fd.max_abs_diff(&d) < 1e-12);
    }

    #[test]
    fn zero_direction_gives_exact_zero() {
        let p = linear_params();
        let x = NumArray::matrix(1, 2, vec![0.3, -0.7]);
        let t = NumArray::column(&[0.9]);
        let (_, d) = jvp(&Linear, &p, &x, &t, &NumArray::zeros(&[1, 2]), &NumArray::column(&[0.0]))
            .unwrap();
        assert!(d.data().iter().all(|&v| v == 0.0));
        let fd = finite_diff_directional(
            &Linear,
            &p,
            &x,
            &t,
            &NumArray::zeros(&[1, 2]),
            &NumArray::column(&[0.0]),
            1e-4,
        )
        .unwrap();
        assert!(fd.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn jvp_square_sin_hand_derivative() {
        let p = ParamStore::new();
        let x = NumArray::column(&[2.0]);
        let t = NumArray::column(&[std::f64::consts::FRAC_PI_6]);
        let (v, d) = jvp(&SquareSin, &p, &x, &t, &NumArray::column(&[3.0]), &NumArray::column(&[1.0]))
            .unwrap();
        assert!((v.data()[0] - 2.0).abs() < 1e-14);
        let expect = 6.0 + 2.0 * 3f64.sqrt();
        assert!((d.data()[0] - expect).abs() < 1e-12);
        assert!((d.data()[0] - 9.4641).abs() < 1e-4);
    }

    #[test]
    fn jvp_shape_mismatch_is_an_error() {
        let p = linear_params();
        let x = NumArray::matrix(1, 2, vec![0.3, -0.7]);
        let t = NumArray::column(&[0.9]);
        let bad = NumArray::matrix(1, 3, vec![0.0; 3]);
        assert!(matches!(
            jvp(&Linear, &p, &x, &t, &bad, &NumArray::column(&[1.0])),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn non_finite_names_the_primitive() {
        struct Blow;
        impl Field for Blow {
            fn eval<E: Ops>(&self, e: &mut E, _: &ParamStore, x: &E::Val, _: &E::Val) -> Result<E::Val> {
                e.exp(x)
            }
        }
        let x = NumArray::column(&[1000.0]);
        let t = NumArray::column(&[0.0]);
        match evaluate(&Blow, &ParamStore::new(), &x, &t) {
            Err(Error::NonFinite { op }) => assert_eq!(op, "exp"),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    struct SumSquares;

    impl Objective for SumSquares {
        fn eval<E: Ops>(&self, e: &mut E, p: &ParamStore) -> Result<E::Val> {
            let v = e.param(p, "p")?;
            let sq = e.square(&v)?;
            e.sum(&sq)
        }
    }

    struct Constant;

    impl Objective for Constant {
        fn eval<E: Ops>(&self, e: &mut E, _: &ParamStore) -> Result<E::Val> {
            Ok(e.constant(NumArray::scalar(3.5)))
        }
    }

    #[test]
    fn grad_of_quadratic() {
        let mut p = ParamStore::new();
        p.insert("p", NumArray::vector(vec![1.0, -2.0])).unwrap();
        let (v, g) = grad(&SumSquares, &p).unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(g.get("p").unwrap().data(), &[2.0, -4.0]);
    }

    #[test]
    fn grad_of_constant_is_zero() {
        let mut p = ParamStore::new();
        p.insert("p", NumArray::vector(vec![1.0, -2.0])).unwrap();
        let (_, g) = grad(&Constant, &p).unwrap();
        assert_eq!(g.get("p").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn finite_diff_rejects_non_positive_eps() {
        let p = linear_params();
        let x = NumArray::matrix(1, 2, vec![0.3, -0.7]);
        let t = NumArray::column(&[0.9]);
        let r = finite_diff_directional(&Linear, &p, &x, &t, &x, &t, 0.0);
        assert!(matches!(r, Err(Error::Domain { .. })));
    }
}
