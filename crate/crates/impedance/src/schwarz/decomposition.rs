use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Overlapping strips Ω_ℓ = (a_ℓ, b_ℓ) × (0, 1) covering (0, L).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripDecomposition {
    pub length: f64,
    pub height: f64,
    /// (a_ℓ, b_ℓ), left to right.
    pub bounds: Vec<(f64, f64)>,
}

/// N equal pieces of L/N, each interior cut widened by δ/2 on both sides.
pub fn build_decomposition(n: usize, length: f64, delta: f64) -> Result<StripDecomposition> {
    if n < 2 {
        return Err(Error::LayoutInvalid(format!("need at least two subdomains, got {n}")));
    }
    if !(length > 0.0 && delta > 0.0) {
        return Err(Error::LayoutInvalid(format!("need L > 0 and δ > 0, got {length}, {delta}")));
    }
    let p = length / n as f64;
    let bounds = (0..n)
        .map(|l| {
            let a = if l == 0 { 0.0 } else { l as f64 * p - 0.5 * delta };
            let b = if l + 1 == n { length } else { (l + 1) as f64 * p + 0.5 * delta };
            (a, b)
        })
        .collect();
    build_decomposition_explicit(length, bounds)
}

pub fn build_decomposition_explicit(length: f64, bounds: Vec<(f64, f64)>) -> Result<StripDecomposition> {
    let d = StripDecomposition { length, height: 1.0, bounds };
    d.validate()?;
    Ok(d)
}

impl StripDecomposition {
    pub fn validate(&self) -> Result<()> {
        let n = self.bounds.len();
        if n < 2 {
            return Err(Error::LayoutInvalid(format!("need at least two subdomains, got {n}")));
        }
        let (a0, _) = self.bounds[0];
        let (_, bn) = self.bounds[n - 1];
        if a0 != 0.0 || (bn - self.length).abs() > 1e-12 * self.length {
            return Err(Error::LayoutInvalid(format!("strips must cover [0, {}], got [{a0}, {bn}]", self.length)));
        }
        for (l, &(a, b)) in self.bounds.iter().enumerate() {
            if !(b > a) {
                return Err(Error::LayoutInvalid(format!("Ω_{} has non-positive width", l + 1)));
            }
        }
        for l in 0..n - 1 {
            let (a, b) = self.bounds[l];
            let (a1, b1) = self.bounds[l + 1];
            if !(a1 > a && b1 > b) {
                return Err(Error::LayoutInvalid(format!("Ω_{} and Ω_{} are not ordered", l + 1, l + 2)));
            }
            if !(a1 < b) {
                return Err(Error::LayoutInvalid(format!("Ω_{} and Ω_{} do not overlap", l + 1, l + 2)));
            }
            if l + 2 < n && self.bounds[l + 2].0 < b {
                return Err(Error::LayoutInvalid(format!("Ω_{} overlaps its non-neighbour Ω_{}", l + 1, l + 3)));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.bounds.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.bounds.iter().map(|(a, b)| b - a).collect()
    }

    /// δ_ℓ = b_{ℓ−1} − a_ℓ for ℓ = 2..N.
    pub fn overlaps(&self) -> Vec<f64> {
        self.bounds.windows(2).map(|w| w[0].1 - w[1].0).collect()
    }

    /// Every strip end inside (0, L], for grid snapping.
    pub fn marks(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.bounds.iter().flat_map(|&(a, b)| [a, b]).filter(|&x| x > 0.0).collect();
        m.sort_by(f64::total_cmp);
        m.dedup();
        m
    }
}

/// 3t² − 2t³ clamped to [0, 1].
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// χ_ℓ sampled on the columns of the global grid.
///
/// Across the overlap [A_{ℓ+1}, B_ℓ] (column indices) χ_ℓ falls from 1 to 0
/// by a smoothstep between A_{ℓ+1}+1 and B_ℓ−1, so each χ is flat on the
/// three columns a centered difference at a strip end touches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    /// Global index of the first stored column.
    pub i_min: isize,
    /// chi[ℓ][i − i_min].
    pub chi: Vec<Vec<f64>>,
}

impl PartitionOfUnity {
    /// `ends[ℓ] = (A_ℓ, B_ℓ)` are the strip ends as global column indices.
    pub fn new(ends: &[(isize, isize)], i_min: isize, i_max: isize) -> Result<Self> {
        let n = ends.len();
        for l in 0..n.saturating_sub(1) {
            let (a1, b) = (ends[l + 1].0, ends[l].1);
            if b - a1 < 3 {
                return Err(Error::LayoutInvalid(format!(
                    "overlap of Ω_{} and Ω_{} spans {} cells, need at least 3",
                    l + 1,
                    l + 2,
                    b - a1
                )));
            }
        }
        // r_ℓ rises from 0 to 1 across the ℓ/ℓ+1 overlap
        let ramp = |l: usize, i: isize| -> f64 {
            let lo = (ends[l + 1].0 + 1) as f64;
            let hi = (ends[l].1 - 1) as f64;
            smoothstep((i as f64 - lo) / (hi - lo))
        };
        let chi = (0..n)
            .map(|l| {
                (i_min..=i_max)
                    .map(|i| {
                        let up = if l == 0 { 1.0 } else { ramp(l - 1, i) };
                        let down = if l + 1 == n { 1.0 } else { 1.0 - ramp(l, i) };
                        up * down
                    })
                    .collect()
            })
            .collect();
        Ok(Self { i_min, chi })
    }

    pub fn at(&self, l: usize, i: isize) -> f64 {
        let k = i - self.i_min;
        if k < 0 || k as usize >= self.chi[l].len() {
            0.0
        } else {
            self.chi[l][k as usize]
        }
    }

    /// Largest |Σ_ℓ χ_ℓ − 1| over the columns.
    pub fn sum_defect(&self) -> f64 {
        let m = self.chi[0].len();
        (0..m).map(|c| (self.chi.iter().map(|x| x[c]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}
