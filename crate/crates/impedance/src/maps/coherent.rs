//! Gaussian coherent states on Γ_l with a smooth cutoff near the corners.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::trapezoid_weights;
use crate::solver::BoundaryTrace;
use crate::{Error, Result, C64};

/// Largest Gaussian mass allowed outside the support of the cutoff.
pub const CUTOFF_TAIL_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentState {
    pub y0: f64,
    pub theta0: f64,
    pub k: f64,
    pub eta: f64,
}

impl CoherentState {
    /// Samples on `ny` cells of the segment [0, h].
    pub fn sample(&self, h: f64, ny: usize) -> Result<BoundaryTrace> {
        coherent_state(h, ny, self.y0, self.theta0, self.k, self.eta)
    }

    pub fn xi(&self) -> f64 {
        self.theta0.sin()
    }
}

/// exp(−1/t)-based step from 0 at t ≤ 0 to 1 at t ≥ 1.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        a / (a + (-1.0 / (1.0 - t)).exp())
    }
}

/// χ: 1 on [η, h−η], supported in [η/2, h−η/2].
pub fn cutoff(y: f64, h: f64, eta: f64) -> f64 {
    let half = 0.5 * eta;
    smooth_step((y - half) / half) * smooth_step((h - half - y) / half)
}

/// Mass of the normalized |Gaussian|² outside [η/2, h−η/2].
pub fn gaussian_tail(y0: f64, h: f64, eta: f64, k: f64) -> f64 {
    let s = (1.0 / k).sqrt();
    0.5 * libm::erfc((y0 - 0.5 * eta) / s) + 0.5 * libm::erfc((h - 0.5 * eta - y0) / s)
}

/// (πħ)^{−1/4} e^{i(y−y₀) sin θ₀/ħ} e^{−(y−y₀)²/(2ħ)} χ(y) at the nodes j·h/ny.
pub fn coherent_state(h: f64, ny: usize, y0: f64, theta0: f64, k: f64, eta: f64) -> Result<BoundaryTrace> {
    if !(h > 0.0 && k > 0.0 && eta > 0.0 && 2.0 * eta < h && ny > 0) {
        return Err(Error::InvalidArgument(format!(
            "coherent state needs h, k, η > 0, 2η < h and ny > 0; got h={h}, k={k}, η={eta}, ny={ny}"
        )));
    }
    if !(y0 > eta && y0 < h - eta) {
        return Err(Error::InvalidArgument(format!("y0 = {y0} not in (η, h−η) = ({eta}, {})", h - eta)));
    }
    if !(theta0.abs() < 0.5 * PI) {
        return Err(Error::InvalidArgument(format!("θ0 = {theta0} not in (−π/2, π/2)")));
    }
    let tail = gaussian_tail(y0, h, eta, k);
    if tail > CUTOFF_TAIL_LIMIT {
        return Err(Error::CutoffTooTight { tail });
    }
    let hbar = 1.0 / k;
    let amp = (PI * hbar).powf(-0.25);
    let xi = theta0.sin();
    let hy = h / ny as f64;
    let samples = (0..=ny)
        .map(|j| {
            let y = j as f64 * hy;
            let d = y - y0;
            C64::from_polar(amp * (-(d * d) / (2.0 * hbar)).exp() * cutoff(y, h, eta), d * xi / hbar)
        })
        .collect();
    BoundaryTrace::new(samples, trapezoid_weights(ny, hy), "l")
}
