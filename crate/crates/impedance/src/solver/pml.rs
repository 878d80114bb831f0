use crate::C64;

/// Target round-trip attenuation of the default profile at normal incidence.
pub const DEFAULT_ROUND_TRIP: f64 = 1e-6;

/// Complex coordinate stretch s(t) = 1 + i σ₀ (t/w)^p for depth t into a layer
/// of width w.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmlProfile {
    pub width: f64,
    pub strength: f64,
    pub order: u32,
}

impl PmlProfile {
    /// Peak strength giving `round_trip` attenuation for a normally incident
    /// wave: exp(−2 k σ₀ w / (p+1)) = round_trip.
    pub fn default_strength(k: f64, width: f64, order: u32) -> f64 {
        (order as f64 + 1.0) * (1.0 / DEFAULT_ROUND_TRIP).ln() / (2.0 * k * width)
    }

    pub fn stretch(&self, depth: f64) -> C64 {
        if depth <= 0.0 {
            return C64::new(1.0, 0.0);
        }
        C64::new(1.0, self.strength * (depth / self.width).powi(self.order as i32))
    }
}

/// Stretch along one axis: optional layers below `lo` and above `hi`.
#[derive(Debug, Clone, Copy)]
pub struct AxisStretch {
    pub lo: f64,
    pub hi: f64,
    pub below: Option<PmlProfile>,
    pub above: Option<PmlProfile>,
}

impl AxisStretch {
    pub fn at(&self, t: f64) -> C64 {
        if t < self.lo {
            if let Some(p) = self.below {
                return p.stretch(self.lo - t);
            }
        } else if t > self.hi {
            if let Some(p) = self.above {
                return p.stretch(t - self.hi);
            }
        }
        C64::new(1.0, 0.0)
    }
}
