//! Π^k_λ: removal of interface frequencies |ζ| ≲ λ, ζ = (angular frequency)/k.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::linalg::{trapezoid_weights, DMat};
use crate::solver::BoundaryTrace;
use crate::{Error, Result, C64};

/// Zero-padding factor of the interface FFT.
pub const PAD_FACTOR: usize = 4;

fn phi(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Smooth even bump: 1 on [−1, 1], 0 outside (−2, 2),
/// φ(2−|t|) / (φ(2−|t|) + φ(|t|−1)) in between with φ(s) = e^{−1/s}.
pub fn psi(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let p = phi(2.0 - a);
        p / (p + phi(a - 1.0))
    }
}

pub fn projection_multiplier(zeta: f64, lambda: f64) -> f64 {
    1.0 - psi(zeta / lambda)
}

fn check(lambda: f64, k: f64, hy: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::LambdaOutOfRange(format!("λ = {lambda} not in (0, 1)")));
    }
    if !(k > 0.0 && hy > 0.0) {
        return Err(Error::InvalidArgument(format!("need k > 0 and hy > 0, got {k}, {hy}")));
    }
    if lambda * k > 0.8 * PI / hy {
        return Err(Error::LambdaOutOfRange(format!(
            "λk = {} exceeds 0.8·π/hy = {}",
            lambda * k,
            0.8 * PI / hy
        )));
    }
    Ok(())
}

struct Filter {
    n: usize,
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    multiplier: Vec<f64>,
    sqrt_w: Vec<f64>,
}

impl Filter {
    fn new(weights: &[f64], hy: f64, lambda: f64, k: f64) -> Result<Self> {
        check(lambda, k, hy)?;
        let n = weights.len();
        let m = PAD_FACTOR * n;
        let mut planner = FftPlanner::new();
        let multiplier = (0..m)
            .map(|q| {
                let qs = if q <= m / 2 { q as f64 } else { q as f64 - m as f64 };
                let zeta = 2.0 * PI * qs / (m as f64 * hy) / k;
                projection_multiplier(zeta, lambda) / m as f64
            })
            .collect();
        Ok(Self {
            n,
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
            multiplier,
            sqrt_w: weights.iter().map(|w| w.sqrt()).collect(),
        })
    }

    /// W^{−1/2} T W^{1/2} g with T the padded Fourier multiplier. T is a
    /// contraction in ℓ², so the result is a contraction in the weighted norm.
    fn apply(&self, g: &[C64]) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.m];
        for (j, z) in g.iter().enumerate() {
            buf[j] = z * self.sqrt_w[j];
        }
        self.forward.process(&mut buf);
        for (z, a) in buf.iter_mut().zip(&self.multiplier) {
            *z *= a;
        }
        self.inverse.process(&mut buf);
        (0..self.n).map(|j| buf[j] / self.sqrt_w[j]).collect()
    }
}

fn spacing(weights: &[f64]) -> Result<f64> {
    match weights.len() {
        0 | 1 => Err(Error::DimensionMismatch("projection needs at least two samples".into())),
        2 => Ok(2.0 * weights[0]),
        _ => Ok(weights[1]),
    }
}

pub fn project_away_zero(g: &BoundaryTrace, lambda: f64, k: f64) -> Result<BoundaryTrace> {
    let hy = spacing(&g.weights)?;
    let f = Filter::new(&g.weights, hy, lambda, k)?;
    BoundaryTrace::new(f.apply(&g.samples), g.weights.clone(), g.segment.clone())
}

/// Nodal matrix of Π^k_λ on `n` nodes of spacing `hy`.
pub fn projection_matrix(n: usize, hy: f64, lambda: f64, k: f64) -> Result<DMat> {
    if n < 2 {
        return Err(Error::DimensionMismatch("projection needs at least two samples".into()));
    }
    let f = Filter::new(&trapezoid_weights(n - 1, hy), hy, lambda, k)?;
    let mut p = DMat::zeros(n, n);
    let mut e = vec![C64::new(0.0, 0.0); n];
    for c in 0..n {
        e[c] = C64::new(1.0, 0.0);
        for (r, v) in f.apply(&e).into_iter().enumerate() {
            p[(r, c)] = v;
        }
        e[c] = C64::new(0.0, 0.0);
    }
    Ok(p)
}
