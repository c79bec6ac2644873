#![allow(dead_code)]

use cmlab::diffcore::{NumArray, ParamStore};
use cmlab::netmodel::{ConditionEncoder, VelocityNet, VelocityNetConfig};
use cmlab::ResourceCounters;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> NumArray {
    use rand_distr::{Distribution, StandardNormal};
    let data = (0..rows * cols)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            std * g
        })
        .collect();
    NumArray::matrix(rows, cols, data)
}

pub fn uniform_times(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn small_net(hidden: &[usize], num_conditions: usize) -> VelocityNet {
    VelocityNet::new(VelocityNetConfig {
        hidden_dims: hidden.to_vec(),
        num_conditions,
        ..Default::default()
    })
    .unwrap()
}

pub fn encoder_for(net: &VelocityNet, seed: u64) -> ConditionEncoder {
    ConditionEncoder::for_net(net.config(), seed)
}

/// Relative error with a floor on the denominator.
pub fn rel_err(a: &NumArray, b: &NumArray) -> f64 {
    let diff = a.zip_map(b, |x, y| x - y).norm();
    diff / b.norm().max(1e-8)
}

/// Norm-wise relative error of `grads` against a central difference of `f`
/// taken coordinate by coordinate.
pub fn fd_check(params: &ParamStore, grads: &ParamStore, eps: f64, f: impl Fn(&ParamStore) -> f64) -> f64 {
    let (mut diff, mut norm) = (0.0, 0.0);
    let mut work = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let n = params.get(&name).unwrap().len();
        for k in 0..n {
            let orig = params.get(&name).unwrap().data()[k];
            work.get_mut(&name).unwrap().data_mut()[k] = orig + eps;
            let up = f(&work);
            work.get_mut(&name).unwrap().data_mut()[k] = orig - eps;
            let down = f(&work);
            work.get_mut(&name).unwrap().data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * eps);
            let g = grads.get(&name).unwrap().data()[k];
            diff += (g - fd) * (g - fd);
            norm += fd * fd;
        }
    }
    diff.sqrt() / norm.sqrt().max(1e-12)
}

pub fn zero_counters() -> ResourceCounters {
    ResourceCounters::default()
}
