//! Dyadic shell profiles: the sequence of shell magnitudes `sigma_j = |Delta_j v|_2`.
//!
//! A profile is a finite sparse map `j -> sigma_j`. Shifting by `m = 2^(2^l)`
//! indices moves mass into the far windows of the weight `a`, and the
//! accompanying factor `2^(-m/2)` underflows any `f64` for `l >= 4`, so the
//! magnitudes are kept as mantissas with a shared power-of-two exponent stored
//! in half-units: `sigma_j = 2^(half_exp / 2) * mantissa_j`. Critical-norm sums
//! combine the index and the exponent before exponentiating, which keeps the
//! scaling identities exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::sequences::weight_a;

/// Highest tower level whose shift `2^(2^l)` fits the signed 64-bit index range.
pub const MAX_LEVEL: u32 = 5;

/// Default number of levels checked beyond `l0`.
pub const DEFAULT_EXTRA_LEVELS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShellProfile {
    entries: BTreeMap<i64, f64>,
    half_exp: i64,
}

impl ShellProfile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a profile from `(j, sigma_j)` pairs. Zeros are dropped.
    pub fn from_entries<I: IntoIterator<Item = (i64, f64)>>(entries: I) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (j, sigma) in entries {
            if !sigma.is_finite() || sigma < 0.0 {
                return invalid(format!("shell {j}: magnitude {sigma} is not a finite nonnegative number"));
            }
            if map.contains_key(&j) {
                return invalid(format!("shell {j} listed twice"));
            }
            if sigma > 0.0 {
                map.insert(j, sigma);
            }
        }
        Ok(ShellProfile {
            entries: map,
            half_exp: 0,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Shared exponent in half-powers of two.
    pub fn half_exponent(&self) -> i64 {
        self.half_exp
    }

    /// Occupied shell indices in increasing order.
    pub fn indices(&self) -> impl Iterator<Item = i64> + '_ {
        self.entries.keys().copied()
    }

    /// `sigma_j` as an `f64` (may underflow to zero after large shifts).
    pub fn magnitude(&self, j: i64) -> f64 {
        self.entries
            .get(&j)
            .map_or(0.0, |&mu| mu * (self.half_exp as f64 / 2.0).exp2())
    }

    /// `(j, sigma_j)` pairs as `f64`.
    pub fn entries(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.entries.keys().map(move |&j| (j, self.magnitude(j)))
    }

    /// `2^(c j) sigma_j^2` evaluated with the exponent folded in.
    fn weighted_square(&self, j: i64, mu: f64, c: f64) -> f64 {
        (c * j as f64 + self.half_exp as f64).exp2() * mu * mu
    }

    /// Plain l2 magnitude `(sum sigma_j^2)^(1/2)`.
    pub fn l2_magnitude(&self) -> f64 {
        let s: f64 = self.entries.values().map(|mu| mu * mu).sum();
        s.sqrt() * (self.half_exp as f64 / 2.0).exp2()
    }

    /// `(sum_j 2^(2 s j) sigma_j^2)^(1/2)`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.entries
            .iter()
            .map(|(&j, &mu)| self.weighted_square(j, mu, 2.0 * s))
            .fold(0.0, |a, b| a + b)
            .sqrt()
    }

    /// `(sum_j 2^j a(j)^-2 sigma_j^2)^(1/2)`.
    pub fn x1_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(&j, &mu)| {
                let a = weight_a(j);
                self.weighted_square(j, mu, 1.0) / (a * a)
            })
            .fold(0.0, |a, b| a + b)
            .sqrt()
    }

    /// `sigma'_j = 2^(-m/2) sigma_{j-m}`: the profile of `lambda v(lambda x)`
    /// for `lambda = 2^m`.
    pub fn scale(&self, params: ScalingParams) -> Result<ShellProfile> {
        let m = params.shift;
        let mut entries = BTreeMap::new();
        for (&j, &mu) in &self.entries {
            let shifted = j
                .checked_add(m)
                .ok_or_else(|| Error::Overflow(format!("shell {j} shifted by {m}")))?;
            entries.insert(shifted, mu);
        }
        let half_exp = self
            .half_exp
            .checked_sub(m)
            .ok_or_else(|| Error::Overflow(format!("exponent shift by {m}")))?;
        Ok(ShellProfile { entries, half_exp })
    }

    /// Tail mass `sum_{|j| >= cutoff} 2^j sigma_j^2`.
    pub fn critical_tail(&self, cutoff: u64) -> f64 {
        self.entries
            .iter()
            .filter(|(&j, _)| j.unsigned_abs() >= cutoff)
            .map(|(&j, &mu)| self.weighted_square(j, mu, 1.0))
            .sum()
    }

    /// Parses the `j<TAB>sigma` text format. `#` lines and blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.starts_with('#') || trimmed.trim().is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse {
                what: "profile",
                line: line_no,
                reason,
            };
            let mut fields = trimmed.split('\t');
            let (j, sigma) = match (fields.next(), fields.next(), fields.next()) {
                (Some(j), Some(s), None) => (j.trim(), s.trim()),
                _ => return Err(err("expected `j<TAB>sigma`".into())),
            };
            let j: i64 = j
                .parse()
                .map_err(|e| err(format!("shell index {j:?}: {e}")))?;
            let sigma: f64 = sigma
                .parse()
                .map_err(|e| err(format!("magnitude {sigma:?}: {e}")))?;
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(err(format!("magnitude {sigma} must be finite and >= 0")));
            }
            if pairs.iter().any(|&(k, _)| k == j) {
                return Err(err(format!("shell {j} listed twice")));
            }
            pairs.push((j, sigma));
        }
        Self::from_entries(pairs)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Text form accepted by [`ShellProfile::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (j, sigma) in self.entries() {
            let _ = writeln!(out, "{j}\t{sigma:e}");
        }
        out
    }
}

/// Shift `m` (so `lambda = 2^m`), normally the tower value `2^(2^l)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScalingParams {
    pub level: Option<u32>,
    pub shift: i64,
}

impl ScalingParams {
    /// `m = 2^(2^l)`, for `l <= MAX_LEVEL`.
    pub fn from_level(l: u32) -> Result<Self> {
        if l > MAX_LEVEL {
            return Err(Error::Overflow(format!(
                "level {l}: shift 2^(2^{l}) exceeds the index range"
            )));
        }
        Ok(ScalingParams {
            level: Some(l),
            shift: 1i64 << (1u32 << l),
        })
    }

    /// Arbitrary nonnegative index shift.
    pub fn shift(m: i64) -> Result<Self> {
        if m < 0 {
            return invalid(format!("shift must be nonnegative, got {m}"));
        }
        Ok(ScalingParams {
            level: None,
            shift: m,
        })
    }

    /// `log2 lambda`, i.e. the shift.
    pub fn log2_lambda(&self) -> i64 {
        self.shift
    }
}

pub fn shell_sobolev_norm(p: &ShellProfile, s: f64) -> f64 {
    p.sobolev_norm(s)
}

pub fn x1_norm(p: &ShellProfile) -> f64 {
    p.x1_norm()
}

pub fn scale_profile(p: &ShellProfile, params: ScalingParams) -> Result<ShellProfile> {
    p.scale(params)
}

/// Smallest `M >= 1` with `sum_{|j| >= M} 2^j sigma_j^2 <= eps^2 / 2`.
pub fn find_tail_cutoff(p: &ShellProfile, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0) {
        return invalid(format!("epsilon must be positive, got {epsilon}"));
    }
    let threshold = epsilon * epsilon / 2.0;
    // The tail only changes at M = |j| + 1 for occupied j.
    let mut candidates: Vec<u64> = p.indices().map(|j| j.unsigned_abs() + 1).collect();
    candidates.push(1);
    candidates.sort_unstable();
    candidates.dedup();
    for m in candidates {
        if p.critical_tail(m) <= threshold {
            return Ok(m);
        }
    }
    unreachable!("the tail past the largest |j| is empty")
}

/// `max{M + 1, ceil(log2(max(1, log2 max(2, M)) * x1 / eps)) + 1}`.
pub fn l0_threshold(m: u64, x1: f64, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0) {
        return invalid(format!("epsilon must be positive, got {epsilon}"));
    }
    let first = m + 1;
    if !(x1 > 0.0) {
        return Ok(first);
    }
    let log_m = (m.max(2) as f64).log2().max(1.0);
    let second = (log_m * x1 / epsilon).log2().ceil() + 1.0;
    if second <= first as f64 {
        Ok(first)
    } else {
        Ok(second as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCheck {
    pub level: u32,
    pub shift: i64,
    /// X1 norm after scaling; the maximum over profiles for uniform checks.
    pub x1_norm: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallnessCertificate {
    pub epsilon: f64,
    /// Tail cutoff `M`.
    pub tail_cutoff: u64,
    pub l0: u64,
    /// Unscaled X1 norm (maximum over profiles in the uniform case).
    pub x1_norm: f64,
    pub profiles: usize,
    pub checked_levels: Vec<LevelCheck>,
    /// Set when `l0 + extra` ran past [`MAX_LEVEL`].
    pub range_limited: bool,
    /// Every checked level passed and at least one level was checked.
    pub pass: bool,
}

fn certify_levels(
    ps: &[ShellProfile],
    epsilon: f64,
    m: u64,
    x1: f64,
    extra_levels: u32,
) -> Result<SmallnessCertificate> {
    let l0 = l0_threshold(m, x1, epsilon)?;
    let wanted_top = l0.saturating_add(extra_levels as u64);
    let top = wanted_top.min(MAX_LEVEL as u64);
    let mut checked = Vec::new();
    if l0 <= top {
        for level in l0 as u32..=top as u32 {
            let params = ScalingParams::from_level(level)?;
            let mut worst = 0.0f64;
            for p in ps {
                worst = worst.max(p.scale(params)?.x1_norm());
            }
            checked.push(LevelCheck {
                level,
                shift: params.shift,
                x1_norm: worst,
                pass: worst <= epsilon,
            });
        }
    }
    let pass = !checked.is_empty() && checked.iter().all(|c| c.pass);
    Ok(SmallnessCertificate {
        epsilon,
        tail_cutoff: m,
        l0,
        x1_norm: x1,
        profiles: ps.len(),
        checked_levels: checked,
        range_limited: wanted_top > MAX_LEVEL as u64,
        pass,
    })
}

/// Smallness of `lambda v(lambda x)` in X1 for `l0 <= l <= min(l0 + extra, 5)`.
pub fn verify_smallness(
    p: &ShellProfile,
    epsilon: f64,
    extra_levels: u32,
) -> Result<SmallnessCertificate> {
    let m = find_tail_cutoff(p, epsilon)?;
    certify_levels(std::slice::from_ref(p), epsilon, m, p.x1_norm(), extra_levels)
}

/// Time-uniform version: one `M` (the largest per-profile cutoff) and one `l0`
/// (from the largest X1 norm) must serve every profile in the list.
pub fn verify_smallness_uniform(
    ps: &[ShellProfile],
    epsilon: f64,
    extra_levels: u32,
) -> Result<SmallnessCertificate> {
    if ps.is_empty() {
        return invalid("uniform smallness needs at least one profile");
    }
    let mut m = 1;
    let mut x1 = 0.0f64;
    for p in ps {
        m = m.max(find_tail_cutoff(p, epsilon)?);
        x1 = x1.max(p.x1_norm());
    }
    certify_levels(ps, epsilon, m, x1, extra_levels)
}

/// Support of the randomized profiles.
pub const RANDOM_SUPPORT: (i64, i64) = (-30, 30);

/// Seeded random profile on `[-30, 30]`.
///
/// The critical density `2^j sigma_j^2` is `r_j 4^-|j|` with `r_j` in
/// `[0.5, 1)`, normalised so that the critical norm is `rho * epsilon` with
/// `rho` drawn from `[0.5, 2]`. This keeps `M` and `l0` inside the levels that
/// fit the index range.
pub fn random_profile<R: Rng>(rng: &mut R, epsilon: f64) -> ShellProfile {
    let (lo, hi) = RANDOM_SUPPORT;
    let density: Vec<(i64, f64)> = (lo..=hi)
        .map(|j| (j, rng.gen_range(0.5..1.0) * 4f64.powi(-(j.abs() as i32))))
        .collect();
    let total: f64 = density.iter().map(|&(_, w)| w).sum();
    let rho: f64 = rng.gen_range(0.5..=2.0);
    let target = rho * rho * epsilon * epsilon;
    let entries = density
        .into_iter()
        .map(|(j, w)| (j, (target * w / total / (j as f64).exp2()).sqrt()));
    ShellProfile::from_entries(entries).expect("generated magnitudes are finite and positive")
}

/// `count` profiles from a ChaCha8 stream seeded with `seed`.
pub fn random_profiles(seed: u64, count: usize, epsilon: f64) -> Vec<ShellProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_profile(&mut rng, epsilon)).collect()
}
