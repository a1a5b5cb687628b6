use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Sharp frequency cutoff.
///
/// Conventions: `Dyadic(j)` keeps `2^(j-1) <= |xi| < 2^j`, `Ball(k)` keeps
/// `|xi| < k`, `High(k)` keeps `|xi| >= k`, `Annulus(h, k)` keeps
/// `h <= |xi| < k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandMask {
    Dyadic(i32),
    Ball(f64),
    High(f64),
    Annulus(f64, f64),
}

impl BandMask {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BandMask::Dyadic(_) => Ok(()),
            BandMask::Ball(k) | BandMask::High(k) => {
                if k.is_nan() || k < 0.0 {
                    invalid(format!("cutoff radius must be >= 0, got {k}"))
                } else {
                    Ok(())
                }
            }
            BandMask::Annulus(h, k) => {
                if h.is_nan() || k.is_nan() || h < 0.0 {
                    invalid(format!("annulus radii must be >= 0, got ({h}, {k})"))
                } else if h >= k {
                    invalid(format!("annulus needs h < k, got ({h}, {k})"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Membership of a wavevector with squared length `norm2`.
    #[inline]
    pub fn contains(&self, norm2: i64) -> bool {
        match *self {
            BandMask::Dyadic(j) => {
                if j < 1 {
                    // 0 < 2^(j-1) <= |xi| < 2^j <= 1 has no lattice points.
                    return false;
                }
                if j > 31 {
                    return false;
                }
                let lo = 1i64 << (2 * (j - 1));
                let hi = 1i64 << (2 * j);
                lo <= norm2 && norm2 < hi
            }
            BandMask::Ball(k) => (norm2 as f64) < k * k,
            BandMask::High(k) => (norm2 as f64) >= k * k,
            BandMask::Annulus(h, k) => {
                let s = norm2 as f64;
                h * h <= s && s < k * k
            }
        }
    }
}
