use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ImpedanceMapMatrix;
use crate::linalg::{vec_norm, DMat};
use crate::C64;

pub const NORM_TOL: f64 = 1e-10;
pub const NORM_MAX_ITER: usize = 10_000;
/// Largest dimension for which a stalled power iteration falls back to a
/// dense SVD.
const DENSE_FALLBACK_DIM: usize = 2000;
const START_SEED: u64 = 0x1d_c0de;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMethod {
    PowerIteration,
    DenseSvd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    /// Nodal samples of the maximizing input, unit weighted norm.
    pub maximizer: Vec<C64>,
    pub converged: bool,
    pub iterations: usize,
    pub method: NormMethod,
}

/// Largest singular value of W_out^{1/2} M W_in^{−1/2} by power iteration on
/// its normal matrix. If the iteration stalls on a small matrix the dense SVD
/// value is returned instead and `converged` stays false.
pub fn operator_norm(map: &ImpedanceMapMatrix) -> NormEstimate {
    let s = map.weighted();
    let n = s.ncols();
    let b = s.adjoint() * &s;
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut v: Vec<C64> =
        (0..n).map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=NORM_MAX_ITER {
        iterations = it;
        let w = &b * nalgebra::DVector::from_column_slice(&v);
        let rayleigh: f64 = v.iter().zip(w.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        let nw = vec_norm(w.as_slice());
        if nw == 0.0 {
            lambda = 0.0;
            converged = true;
            break;
        }
        v = w.iter().map(|z| z / nw).collect();
        if (rayleigh - lambda).abs() <= NORM_TOL * rayleigh.abs() {
            lambda = rayleigh;
            converged = true;
            break;
        }
        lambda = rayleigh;
    }
    let maximizer: Vec<C64> = v.iter().zip(&map.in_weights).map(|(z, w)| z / w.sqrt()).collect();
    if !converged {
        log::warn!("power iteration did not converge in {NORM_MAX_ITER} steps (dimension {n})");
        if n <= DENSE_FALLBACK_DIM {
            return NormEstimate {
                value: operator_norm_dense(map),
                maximizer,
                converged,
                iterations,
                method: NormMethod::DenseSvd,
            };
        }
    }
    // ‖S v‖ is the singular value estimate without the square-root bias
    let value = if lambda == 0.0 { 0.0 } else { vec_norm((&s * nalgebra::DVector::from_column_slice(&v)).as_slice()) };
    NormEstimate { value, maximizer, converged, iterations, method: NormMethod::PowerIteration }
}

/// Largest singular value of the weighted matrix by dense SVD.
pub fn operator_norm_dense(map: &ImpedanceMapMatrix) -> f64 {
    largest_singular_value(&map.weighted())
}

fn largest_singular_value(s: &DMat) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    s.clone().singular_values().max()
}

fn normalize(v: &mut [C64]) {
    let n = vec_norm(v);
    for z in v {
        *z /= n;
    }
}
