//! Shell energy inequalities evaluated on velocity snapshots.
//!
//! Notation: `u_k` keeps `|xi| < k`, `u^k` keeps `|xi| >= k` and `u_{h,k}`
//! keeps `h <= |xi| < k` (see [`BandMask`]). For every snapshot and every `k`
//! in the sweep the energy rate of the high part,
//! `d/2dt |u^k|^2 + nu |grad u^k|^2 = <du/dt, u^k> + nu |grad u^k|^2`, is taken
//! from the analytic right-hand side and compared against the Hoelder,
//! Bernstein and shell bounds. Per-snapshot records cover the superposition
//! identities and the averaged bound.
//!
//! Records whose bound carries a generic constant (Bernstein, the shell
//! inequality and the summed form) report `ratio = lhs / rhs` as a sample of
//! that constant. They pass when the ratio stays below an admissible value
//! derived on the lattice from `c0 = max_j sqrt(N_j) 2^(-3j/2)`, where `N_j`
//! counts lattice points in dyadic shell `j`:
//!
//! | record | rhs | ceiling |
//! |---|---|---|
//! | `bernstein-u_k` | `b(j0(k)) k X1` | `8 c0` |
//! | `bernstein-grad-u_k` | `b(j0(k)) k^2 X1` | `32 c0` |
//! | `bernstein-grad-u_k/2` | `b(j0(k)) k^2 X1` | `16 c0` |
//! | `shell-k2` | `b(j0(k)) k^2 X1 |u^{k/2}|^2` | `56 c0` |
//! | `shell` | `b(j0(k)) X1 |grad u^{k/2}|^2` | `224 c0` |
//! | `averaged-shell` | `X1 (c(n0) |grad u|^2 + 6 sum_{n>=n0} n |grad u_{n,n+1}|^2)` | `224 c0` |
//! | `averaged-shell-c2` | `X1 (|grad u|^2 + sum_n n |grad u_{n,n+1}|^2)` | `224 c0 max(c(n0), 6)` |
//!
//! Grid maxima stand in for sup norms. The trilinear forms are evaluated as
//! grid means, so the Hoelder bounds hold exactly on the grid.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::nse_sim::NavierStokes;
use crate::sequences::{b_table, certify_b_sum_averaging, j0_of_k, paired_b_sums};
use crate::shell_profile::{verify_smallness_uniform, ShellProfile, SmallnessCertificate, DEFAULT_EXTRA_LEVELS};
use crate::spectral::{pointwise_max, trilinear_physical, BandMask, Lattice, Snapshot, SpectralField};

/// Relative slack for inequalities that hold exactly in exact arithmetic.
pub const INEQUALITY_TOL: f64 = 1e-9;
/// Relative tolerance of the superposition identities.
pub const IDENTITY_TOL: f64 = 1e-12;

/// `k` value used for records that summarize all shells of a snapshot.
pub const ALL_SHELLS: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityRecord {
    pub t: f64,
    pub k: f64,
    pub equation: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; 0 when both vanish, infinite when only `rhs` does.
    pub ratio: f64,
    pub pass: bool,
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

impl InequalityRecord {
    /// `lhs <= rhs (1 + 1e-9)`.
    pub fn inequality(t: f64, k: f64, equation: &str, lhs: f64, rhs: f64) -> Self {
        Self::with_pass(t, k, equation, lhs, rhs, lhs <= rhs * (1.0 + INEQUALITY_TOL))
    }

    /// As [`inequality`](Self::inequality), also accepting `lhs <= floor`.
    /// Used where `lhs` is a computed energy rate whose exact value may be 0
    /// while `rhs` is exactly 0.
    pub fn inequality_floor(t: f64, k: f64, equation: &str, lhs: f64, rhs: f64, floor: f64) -> Self {
        Self::with_pass(t, k, equation, lhs, rhs, lhs <= rhs * (1.0 + INEQUALITY_TOL) + floor)
    }

    /// `|lhs - rhs| <= tol * scale`.
    pub fn identity(t: f64, k: f64, equation: &str, lhs: f64, rhs: f64, tol: f64, scale: f64) -> Self {
        Self::with_pass(t, k, equation, lhs, rhs, (lhs - rhs).abs() <= tol * scale)
    }

    /// Generic-constant bound: passes while `lhs / rhs <= ceiling`.
    pub fn measured(t: f64, k: f64, equation: &str, lhs: f64, rhs: f64, ceiling: f64) -> Self {
        Self::measured_floor(t, k, equation, lhs, rhs, ceiling, 0.0)
    }

    pub fn measured_floor(t: f64, k: f64, equation: &str, lhs: f64, rhs: f64, ceiling: f64, floor: f64) -> Self {
        let pass = lhs <= ceiling * rhs * (1.0 + INEQUALITY_TOL) + floor;
        Self::with_pass(t, k, equation, lhs, rhs, pass)
    }

    fn with_pass(t: f64, k: f64, equation: &str, lhs: f64, rhs: f64, pass: bool) -> Self {
        // empty f64 sums are -0.0; keep reports free of signed zeros
        let (lhs, rhs) = (lhs + 0.0, rhs + 0.0);
        InequalityRecord {
            t,
            k,
            equation: equation.to_string(),
            lhs,
            rhs,
            ratio: ratio(lhs, rhs),
            pass: pass && lhs.is_finite() && rhs.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantEstimate {
    pub name: String,
    pub value: f64,
    pub sweep: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsConfig {
    /// Shell radii; `None` sweeps integers `1..=floor(dealias radius)`.
    pub ks: Option<Vec<f64>>,
    /// Smallness level for the time-uniform scaling certificate.
    pub epsilon: f64,
    pub extra_levels: u32,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            ks: None,
            epsilon: 0.1,
            extra_levels: DEFAULT_EXTRA_LEVELS,
        }
    }
}

impl DiagnosticsConfig {
    pub fn with_kmax(kmax: u32) -> Self {
        DiagnosticsConfig {
            ks: Some((1..=kmax).map(f64::from).collect()),
            ..Default::default()
        }
    }

    fn sweep_for(&self, lattice: Lattice) -> Vec<f64> {
        match &self.ks {
            Some(ks) => ks.clone(),
            None => (1..=lattice.dealias_radius().floor() as u32)
                .map(f64::from)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotError {
    pub source: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRun {
    pub source: String,
    pub sweep: Vec<f64>,
    pub snapshots: usize,
    pub records: Vec<InequalityRecord>,
    pub constants: Vec<ConstantEstimate>,
    pub certificate: Option<SmallnessCertificate>,
    pub errors: Vec<SnapshotError>,
}

impl DiagnosticsRun {
    pub fn failed_records(&self) -> impl Iterator<Item = &InequalityRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    /// No failed record and a passing scaling certificate.
    pub fn passed(&self) -> bool {
        self.failed_records().next().is_none()
            && self.certificate.as_ref().map_or(true, |c| c.pass)
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|c| c.name == name).map(|c| c.value)
    }

    /// One row per record: `t,k,equation,lhs,rhs,ratio,pass`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(r).map_err(|e| Error::Io(e.into()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn constants_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.constants)? + "\n")
    }
}

/// `max_j sqrt(N_j) / 2^(3j/2)` over the dyadic shells of the lattice.
pub fn lattice_c0(lattice: Lattice) -> f64 {
    let mut counts: Vec<u64> = Vec::new();
    lattice.for_each_mode(|_, _, s| {
        if s == 0 {
            return;
        }
        // shell j holds 4^(j-1) <= s < 4^j
        let j = ((64 - (s as u64).leading_zeros()) as usize + 1) / 2;
        if counts.len() <= j {
            counts.resize(j + 1, 0);
        }
        counts[j] += 1;
    });
    counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(j, &c)| (c as f64).sqrt() / (1.5 * j as f64).exp2())
        .fold(0.0, f64::max)
}

/// Explicit constants for the averaged bound on one lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AveragingConstants {
    /// Largest annulus index present on the lattice.
    pub n_lattice: i64,
    pub n0: i64,
    /// `2 B(n0) + 1` with `B(n) = sum_{k<=n} (b(j0(2k)) + b(j0(2k+1)))`.
    pub c_n0: f64,
}

impl AveragingConstants {
    /// `n0` is the first index past the last violation of the b-sum bound on
    /// `[1, n_lattice]`; both partial sums stay below `3n` from there on.
    pub fn for_lattice(lattice: Lattice) -> Result<Self> {
        let n_lattice = (lattice.max_norm2() as f64).sqrt().floor() as i64;
        let report = certify_b_sum_averaging(n_lattice.max(1))?;
        let n0 = report
            .last_violation
            .map_or(1, |l| l + 1)
            .min(n_lattice + 1);
        let sums = paired_b_sums(n0 as usize);
        Ok(AveragingConstants {
            n_lattice,
            n0,
            c_n0: 2.0 * sums[n0 as usize] + 1.0,
        })
    }
}

/// Per-snapshot quantities shared by the shell checks.
struct Context<'a> {
    t: f64,
    u: &'a SpectralField,
    nu: f64,
    du_dt: &'a SpectralField,
    x1: f64,
    c0: f64,
    b: Vec<f64>,
    /// `|u|_inf |grad u|_2`
    velocity_scale: f64,
}

impl<'a> Context<'a> {
    fn new(t: f64, u: &'a SpectralField, nu: f64, du_dt: &'a SpectralField, kmax: f64) -> Result<Self> {
        let lattice = u.lattice();
        let top = j0_of_k(kmax.max(1.0))? as usize + 1;
        Ok(Context {
            t,
            u,
            nu,
            du_dt,
            x1: u.decompose_shells().x1_norm(),
            c0: lattice_c0(lattice),
            b: b_table(top),
            velocity_scale: pointwise_max(&u.to_physical()) * u.grad_norm_sq().sqrt(),
        })
    }

    fn b_j0(&self, k: f64) -> Result<f64> {
        Ok(self.b[j0_of_k(k)? as usize])
    }
}

/// Everything one shell radius `k` needs, computed once.
struct ShellTerms {
    k: f64,
    /// `<du/dt, u^k> + nu |grad u^k|^2`
    energy_rate: f64,
    /// `-((u_k . grad) u_{k/2,k}, u^k)`, `-((u_{k/2,k} . grad) u_{k/2}, u^k)`,
    /// `-((u^k . grad) u_k, u^k)`
    trilinear: [f64; 3],
    /// Scale of the trilinear terms, `|u|_inf |grad u|_2 |u^k|_2`.
    trilinear_scale: f64,
    sup_low: f64,
    sup_grad_low: f64,
    sup_grad_low_half: f64,
    high_half_sq: f64,
    grad_high_half_sq: f64,
    grad_annulus: f64,
    high: f64,
}

impl ShellTerms {
    /// Roundoff level of `energy_rate`.
    fn rate_floor(&self) -> f64 {
        INEQUALITY_TOL * self.trilinear_scale
    }
}

fn validate_k(k: f64) -> Result<()> {
    if !(k > 0.0) || !k.is_finite() {
        return invalid(format!("shell radius must be positive, got {k}"));
    }
    Ok(())
}

fn shell_terms(ctx: &Context<'_>, k: f64) -> Result<ShellTerms> {
    validate_k(k)?;
    let u = ctx.u;
    let low = u.apply_mask(BandMask::Ball(k))?;
    let high = u.apply_mask(BandMask::High(k))?;
    let low_half = u.apply_mask(BandMask::Ball(k / 2.0))?;
    let high_half = u.apply_mask(BandMask::High(k / 2.0))?;
    let annulus = u.apply_mask(BandMask::Annulus(k / 2.0, k))?;

    let low_p = low.to_physical();
    let high_p = high.to_physical();
    let annulus_p = annulus.to_physical();
    let grad_low = low.gradient_physical();
    let grad_low_half = low_half.gradient_physical();
    let grad_annulus = annulus.gradient_physical();

    let trilinear = [
        -trilinear_physical(&low_p, &grad_annulus, &high_p),
        -trilinear_physical(&annulus_p, &grad_low_half, &high_p),
        -trilinear_physical(&high_p, &grad_low, &high_p),
    ];
    Ok(ShellTerms {
        k,
        energy_rate: ctx.du_dt.inner_product(&high)? + ctx.nu * high.grad_norm_sq(),
        trilinear,
        trilinear_scale: ctx.velocity_scale * high.norm_l2(),
        sup_low: pointwise_max(&low_p),
        sup_grad_low: pointwise_max(&grad_low),
        sup_grad_low_half: pointwise_max(&grad_low_half),
        high_half_sq: high_half.norm_l2().powi(2),
        grad_high_half_sq: high_half.grad_norm_sq(),
        grad_annulus: annulus.grad_norm_sq().sqrt(),
        high: high.norm_l2(),
    })
}

fn decomposition_records(ctx: &Context<'_>, s: &ShellTerms) -> Vec<InequalityRecord> {
    let (t, k) = (ctx.t, s.k);
    let [t1, t2, t3] = s.trilinear;
    let holder_b_rhs = s.sup_low * s.grad_annulus * s.high;
    vec![
        InequalityRecord::identity(
            t,
            k,
            "decomposition",
            s.energy_rate,
            t1 + t2 + t3,
            INEQUALITY_TOL,
            s.trilinear_scale,
        ),
        InequalityRecord::inequality(
            t,
            k,
            "holder-low",
            (t2 + t3).abs(),
            (s.sup_grad_low_half + s.sup_grad_low) * s.high_half_sq,
        ),
        InequalityRecord::inequality(t, k, "holder-annulus", t1.abs(), holder_b_rhs),
        InequalityRecord::inequality(t, k, "k-factor", holder_b_rhs, k * s.sup_low * s.high_half_sq),
    ]
}

fn holder_record(ctx: &Context<'_>, s: &ShellTerms) -> InequalityRecord {
    let rhs = (s.sup_grad_low_half + s.sup_grad_low + s.k * s.sup_low) * s.high_half_sq;
    InequalityRecord::inequality_floor(ctx.t, s.k, "holder", s.energy_rate, rhs, s.rate_floor())
}

fn bernstein_records(ctx: &Context<'_>, s: &ShellTerms) -> Result<Vec<InequalityRecord>> {
    let (t, k) = (ctx.t, s.k);
    if ctx.x1 == 0.0 && (s.sup_low > 0.0 || s.sup_grad_low > 0.0) {
        return Err(Error::InvalidInput(format!(
            "X1 norm vanishes but |u_k|_inf = {} at k = {k}; the field has a nonzero mean",
            s.sup_low
        )));
    }
    let b = ctx.b_j0(k)?;
    let base = b * ctx.x1;
    Ok(vec![
        InequalityRecord::measured(t, k, "bernstein-u_k", s.sup_low, base * k, 8.0 * ctx.c0),
        InequalityRecord::measured(t, k, "bernstein-grad-u_k", s.sup_grad_low, base * k * k, 32.0 * ctx.c0),
        InequalityRecord::measured(
            t,
            k,
            "bernstein-grad-u_k/2",
            s.sup_grad_low_half,
            base * k * k,
            16.0 * ctx.c0,
        ),
    ])
}

fn shell_records(ctx: &Context<'_>, s: &ShellTerms) -> Result<Vec<InequalityRecord>> {
    let (t, k) = (ctx.t, s.k);
    let b = ctx.b_j0(k)?;
    Ok(vec![
        InequalityRecord::measured_floor(
            t,
            k,
            "shell",
            s.energy_rate,
            b * ctx.x1 * s.grad_high_half_sq,
            224.0 * ctx.c0,
            s.rate_floor(),
        ),
        InequalityRecord::measured_floor(
            t,
            k,
            "shell-k2",
            s.energy_rate,
            b * k * k * ctx.x1 * s.high_half_sq,
            56.0 * ctx.c0,
            s.rate_floor(),
        ),
        InequalityRecord::inequality(t, k, "plancherel-k2", k * k * s.high_half_sq, 4.0 * s.grad_high_half_sq),
    ])
}

fn analytic_rhs(u: &SpectralField, nu: f64) -> SpectralField {
    NavierStokes::new(u.lattice(), nu).time_derivative(u)
}

/// `|<(u . grad) u^k, u^k>| <= 1e-9 |u|_2 |u^k|_2 |grad u^k|_2`.
pub fn check_cancellation(t: f64, u: &SpectralField, k: f64) -> Result<InequalityRecord> {
    validate_k(k)?;
    let high = u.apply_mask(BandMask::High(k))?;
    let conv = SpectralField::convection(u, &high)?;
    let lhs = conv.inner_product(&high)?.abs();
    let rhs = INEQUALITY_TOL * u.norm_l2() * high.norm_l2() * high.grad_norm_sq().sqrt();
    Ok(InequalityRecord::with_pass(t, k, "cancellation", lhs, rhs, lhs <= rhs))
}

/// The Hoelder bound on the energy rate of `u^k`. `du_dt` is the analytic
/// right-hand side at this state.
pub fn check_holder(
    t: f64,
    u: &SpectralField,
    nu: f64,
    du_dt: &SpectralField,
    k: f64,
) -> Result<InequalityRecord> {
    let ctx = Context::new(t, u, nu, du_dt, k)?;
    Ok(holder_record(&ctx, &shell_terms(&ctx, k)?))
}

/// The trilinear decomposition of the energy rate and its three intermediate
/// bounds.
pub fn check_decomposition(
    t: f64,
    u: &SpectralField,
    nu: f64,
    du_dt: &SpectralField,
    k: f64,
) -> Result<Vec<InequalityRecord>> {
    let ctx = Context::new(t, u, nu, du_dt, k)?;
    Ok(decomposition_records(&ctx, &shell_terms(&ctx, k)?))
}

/// Sup norms of `u_k`, `grad u_k` and `grad u_{k/2}` against the X1 norm;
/// returns the records and the largest ratio.
pub fn check_bernstein_x1(t: f64, u: &SpectralField, k: f64) -> Result<(Vec<InequalityRecord>, f64)> {
    let zero = SpectralField::zeros(u.lattice());
    let ctx = Context::new(t, u, 0.0, &zero, k)?;
    let records = bernstein_records(&ctx, &shell_terms(&ctx, k)?)?;
    let c0 = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok((records, c0))
}

/// The shell inequality in both forms plus the Plancherel step between them.
pub fn check_shell(
    t: f64,
    u: &SpectralField,
    nu: f64,
    du_dt: &SpectralField,
    k: f64,
) -> Result<Vec<InequalityRecord>> {
    let ctx = Context::new(t, u, nu, du_dt, k)?;
    shell_records(&ctx, &shell_terms(&ctx, k)?)
}

/// `sum_s weight(s) E(s)` over the bins of a radial spectrum.
fn spectral_sums(spectrum: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let grad: Vec<f64> = spectrum.iter().enumerate().map(|(s, e)| s as f64 * e).collect();
    (spectrum.to_vec(), grad)
}

fn isqrt(s: usize) -> usize {
    let mut r = (s as f64).sqrt() as usize;
    while r * r > s {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= s {
        r += 1;
    }
    r
}

/// `sum_{k=1}^{K} |u^k|^2 = sum_{n=1}^{K-1} n |u_{n,n+1}|^2 + K |u^K|^2`
/// with `K` past the largest lattice radius, for `u` and `grad u`.
pub fn check_superposition(t: f64, u: &SpectralField) -> [InequalityRecord; 2] {
    let (plain, grad) = spectral_sums(&u.radial_spectrum());
    let kk = isqrt(plain.len() - 1) + 1;
    let record = |name: &str, bins: &[f64]| {
        // tail(k) = sum_{s >= k^2}, accumulated from the top
        let mut lhs = 0.0;
        for k in 1..=kk {
            lhs += bins.iter().skip(k * k).sum::<f64>();
        }
        let mut rhs = 0.0;
        for n in 1..kk {
            let lo = n * n;
            let hi = ((n + 1) * (n + 1)).min(bins.len());
            if lo < bins.len() {
                rhs += n as f64 * bins[lo..hi].iter().sum::<f64>();
            }
        }
        rhs += kk as f64 * bins.iter().skip(kk * kk).sum::<f64>();
        InequalityRecord::identity(t, ALL_SHELLS, name, lhs, rhs, IDENTITY_TOL, lhs.abs().max(rhs.abs()))
    };
    [record("superposition-u", &plain), record("superposition-grad", &grad)]
}

/// `(lhs, c(n0)|grad u|^2 + 6 sum_{n>=n0} n |grad u_{n,n+1}|^2, |grad u|^2 + sum_n n |grad u_{n,n+1}|^2)`.
fn averaging_sums(u: &SpectralField, consts: &AveragingConstants) -> Result<(f64, f64, f64)> {
    let spectrum = u.radial_spectrum();
    let grad: Vec<f64> = spectrum.iter().enumerate().map(|(s, e)| s as f64 * e).collect();
    let smax = grad.len() - 1;
    let kmax = 2 * (isqrt(smax) + 1);
    let b = b_table(j0_of_k(kmax as f64)? as usize);
    // |grad u^{k/2}|^2 keeps 4 s >= k^2
    let mut lhs = 0.0;
    for k in 1..=kmax {
        let from = (k * k).div_ceil(4);
        let tail: f64 = grad.iter().skip(from).sum();
        lhs += b[j0_of_k(k as f64)? as usize] * tail;
    }
    let total: f64 = grad.iter().sum();
    let mut weighted_tail = 0.0;
    let mut weighted_all = 0.0;
    for (s, g) in grad.iter().enumerate() {
        let n = isqrt(s) as i64;
        if n >= 1 {
            weighted_all += n as f64 * g;
            if n >= consts.n0 {
                weighted_tail += n as f64 * g;
            }
        }
    }
    Ok((lhs, consts.c_n0 * total + 6.0 * weighted_tail, total + weighted_all))
}

/// `sum_k b(j0(k)) |grad u^{k/2}|^2 <= c(n0) |grad u|^2 + 6 sum_{n>=n0} n |grad u_{n,n+1}|^2`.
pub fn check_averaging(t: f64, u: &SpectralField) -> Result<InequalityRecord> {
    let consts = AveragingConstants::for_lattice(u.lattice())?;
    let (lhs, rhs, _) = averaging_sums(u, &consts)?;
    Ok(InequalityRecord::inequality(t, ALL_SHELLS, "averaging", lhs, rhs))
}

/// Summed shell inequality: `sum_k (<du/dt, u^k> + nu |grad u^k|^2)` against
/// the averaged bound times `X1`, in the explicit-`c(n0)` and the `C2` forms.
pub fn check_averaged_shell(
    t: f64,
    u: &SpectralField,
    nu: f64,
    du_dt: &SpectralField,
) -> Result<Vec<InequalityRecord>> {
    let lattice = u.lattice();
    let consts = AveragingConstants::for_lattice(lattice)?;
    let (_, rhs313, plain) = averaging_sums(u, &consts)?;
    // sum over k >= 1 of the rate of u^k weights mode xi by floor(|xi|)
    let mut lhs = 0.0;
    lattice.for_each_mode(|idx, _, s| {
        if s == 0 {
            return;
        }
        let w = isqrt(s as usize) as f64;
        let a = du_dt.coeff(idx);
        let v = u.coeff(idx);
        let dot: f64 = (0..3).map(|c| a[c].re * v[c].re + a[c].im * v[c].im).sum();
        let visc: f64 = nu * s as f64 * v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        lhs += w * (dot + visc);
    });
    let x1 = u.decompose_shells().x1_norm();
    let c0 = lattice_c0(lattice);
    Ok(vec![
        InequalityRecord::measured(t, ALL_SHELLS, "averaged-shell", lhs, x1 * rhs313, 224.0 * c0),
        InequalityRecord::measured(
            t,
            ALL_SHELLS,
            "averaged-shell-c2",
            lhs,
            x1 * plain,
            224.0 * c0 * consts.c_n0.max(6.0),
        ),
    ])
}

/// All records for one snapshot, unsorted.
pub fn diagnose_snapshot(snap: &Snapshot, ks: &[f64]) -> Result<Vec<InequalityRecord>> {
    let u = &snap.field;
    let t = snap.time;
    if !u.is_band_limited() {
        return invalid("snapshot has modes at or beyond the dealiasing radius");
    }
    let du_dt = analytic_rhs(u, snap.nu);
    let kmax = ks.iter().copied().fold(1.0, f64::max);
    let ctx = Context::new(t, u, snap.nu, &du_dt, kmax)?;
    let mut out = Vec::new();
    for &k in ks {
        let terms = shell_terms(&ctx, k)?;
        out.push(check_cancellation(t, u, k)?);
        out.extend(decomposition_records(&ctx, &terms));
        out.push(holder_record(&ctx, &terms));
        out.extend(bernstein_records(&ctx, &terms)?);
        out.extend(shell_records(&ctx, &terms)?);
    }
    out.extend(check_superposition(t, u));
    out.push(check_averaging(t, u)?);
    out.extend(check_averaged_shell(t, u, snap.nu, &du_dt)?);
    Ok(out)
}

fn sup_ratio(records: &[InequalityRecord], names: &[&str]) -> f64 {
    records
        .iter()
        .filter(|r| names.contains(&r.equation.as_str()))
        .map(|r| r.ratio)
        .fold(0.0, f64::max)
}

/// Runs every check over a stream of snapshots. Snapshots that fail to load
/// or to evaluate are reported in `errors` and skipped.
pub fn run_diagnostics(
    source: &str,
    snapshots: impl IntoIterator<Item = (String, Result<Snapshot>)>,
    config: &DiagnosticsConfig,
) -> Result<DiagnosticsRun> {
    if !(config.epsilon > 0.0) {
        return invalid(format!("epsilon must be positive, got {}", config.epsilon));
    }
    let mut records = Vec::new();
    let mut profiles: Vec<ShellProfile> = Vec::new();
    let mut errors = Vec::new();
    let mut sweep = Vec::new();
    let mut lattice = None;
    let mut count = 0;
    for (name, snap) in snapshots {
        let result = snap.and_then(|s| {
            let ks = config.sweep_for(s.field.lattice());
            let recs = diagnose_snapshot(&s, &ks)?;
            Ok((s, ks, recs))
        });
        match result {
            Ok((s, ks, recs)) => {
                info!("{name}: t = {}, {} records", s.time, recs.len());
                count += 1;
                profiles.push(s.field.decompose_shells());
                records.extend(recs);
                sweep = ks;
                lattice.get_or_insert(s.field.lattice());
            }
            Err(e) => {
                warn!("{name}: {e}");
                errors.push(SnapshotError {
                    source: name,
                    message: e.to_string(),
                });
            }
        }
    }
    records.sort_by(|a, b| {
        a.t.total_cmp(&b.t)
            .then(a.k.total_cmp(&b.k))
            .then_with(|| a.equation.cmp(&b.equation))
    });

    let span = format!("{count} snapshots x {} shells", sweep.len());
    let mut constants = vec![
        ConstantEstimate {
            name: "c0".into(),
            value: sup_ratio(&records, &["bernstein-u_k", "bernstein-grad-u_k", "bernstein-grad-u_k/2"]),
            sweep: span.clone(),
        },
        ConstantEstimate {
            name: "C1".into(),
            value: sup_ratio(&records, &["shell-k2"]),
            sweep: span.clone(),
        },
        ConstantEstimate {
            name: "4C1".into(),
            value: sup_ratio(&records, &["shell"]),
            sweep: span.clone(),
        },
        ConstantEstimate {
            name: "C2".into(),
            value: sup_ratio(&records, &["averaged-shell-c2"]),
            sweep: format!("{count} snapshots"),
        },
    ];
    if let Some(lat) = lattice {
        let consts = AveragingConstants::for_lattice(lat)?;
        let note = format!("annuli n <= {}", consts.n_lattice);
        constants.push(ConstantEstimate {
            name: "n0".into(),
            value: consts.n0 as f64,
            sweep: note.clone(),
        });
        constants.push(ConstantEstimate {
            name: "c(n0)".into(),
            value: consts.c_n0,
            sweep: note,
        });
        constants.push(ConstantEstimate {
            name: "c0-lattice".into(),
            value: lattice_c0(lat),
            sweep: format!("dyadic shells of the {}^3 lattice", lat.n()),
        });
    }
    let certificate = if profiles.is_empty() {
        None
    } else {
        Some(verify_smallness_uniform(&profiles, config.epsilon, config.extra_levels)?)
    };
    Ok(DiagnosticsRun {
        source: source.to_string(),
        sweep,
        snapshots: count,
        records,
        constants,
        certificate,
        errors,
    })
}

/// Snapshot files (`*.shf1`) in `dir`, sorted by name.
pub fn snapshot_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "shf1"))
        .collect();
    files.sort();
    Ok(files)
}

/// [`run_diagnostics`] over the snapshot files of a directory. Fails when the
/// directory is unreadable or holds no snapshots.
pub fn run_diagnostics_dir(dir: &Path, config: &DiagnosticsConfig) -> Result<DiagnosticsRun> {
    let files = snapshot_files(dir)?;
    if files.is_empty() {
        return invalid(format!("no .shf1 snapshots in {}", dir.display()));
    }
    let stream = files.into_iter().map(|p| {
        let name = p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        (name, Snapshot::read(&p))
    });
    run_diagnostics(&dir.display().to_string(), stream, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nse_sim::{init_random_divfree, init_taylor_green};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn single_mode(lat: Lattice, xi: [i64; 3], v: [Complex64; 3]) -> SpectralField {
        let mut u = SpectralField::zeros(lat);
        u.set_coeff(lat.index_of(xi).unwrap(), v);
        let m = lat.index_of([-xi[0], -xi[1], -xi[2]]).unwrap();
        u.set_coeff(m, [v[0].conj(), v[1].conj(), v[2].conj()]);
        u
    }

    #[test]
    fn zero_field_passes_everything() {
        let lat = Lattice::new(8).unwrap();
        let snap = Snapshot {
            nu: 0.1,
            time: 0.0,
            field: SpectralField::zeros(lat),
        };
        let recs = diagnose_snapshot(&snap, &[1.0, 2.0]).unwrap();
        assert!(recs.iter().all(|r| r.pass && r.lhs == 0.0 && r.ratio == 0.0), "{recs:?}");
        // 12 per k plus 5 per snapshot
        assert_eq!(recs.len(), 2 * 12 + 5);
    }

    #[test]
    fn cancellation_on_taylor_green_and_random() {
        let lat = Lattice::new(16).unwrap();
        let tg = init_taylor_green(lat, 1.0).unwrap();
        let r = check_cancellation(0.0, &tg, 1.0).unwrap();
        assert!(r.pass, "{r:?}");
        let u = init_random_divfree(lat, 2, -1.0, 1.0).unwrap();
        let r = check_cancellation(0.0, &u, 3.0).unwrap();
        assert!(r.pass && r.rhs > 0.0, "{r:?}");
    }

    #[test]
    fn single_mode_above_k_has_empty_high_part() {
        let lat = Lattice::new(8).unwrap();
        let u = single_mode(lat, [1, 0, 0], [Complex64::default(), Complex64::new(0.5, 0.0), Complex64::default()]);
        let du = analytic_rhs(&u, 0.1);
        let r = check_holder(0.0, &u, 0.1, &du, 2.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass);
        assert!(check_shell(0.0, &u, 0.1, &du, 5.0).unwrap().iter().all(|r| r.pass));
    }

    #[test]
    fn bernstein_single_mode_closed_form() {
        // u = (0, cos x1, 0): sup |u_2| = 1, shell j = 1 with sigma = 1/sqrt 2,
        // X1 = sqrt(2 * 1/2) = 1, b(j0(2)) = b(2) = 0.75.
        let lat = Lattice::new(8).unwrap();
        let u = single_mode(lat, [1, 0, 0], [Complex64::default(), Complex64::new(0.5, 0.0), Complex64::default()]);
        let (recs, c0) = check_bernstein_x1(0.0, &u, 2.0).unwrap();
        assert_relative_eq!(recs[0].lhs, 1.0, max_relative = 1e-14);
        assert_relative_eq!(recs[0].rhs, 0.75 * 2.0, max_relative = 1e-14);
        assert_relative_eq!(recs[1].lhs, 1.0, max_relative = 1e-14);
        // u_{k/2} = u_1 holds only the mean
        assert_eq!(recs[2].lhs, 0.0);
        assert!(recs.iter().all(|r| r.pass));
        assert_relative_eq!(c0, 1.0 / 1.5, max_relative = 1e-14);
    }

    #[test]
    fn superposition_hand_count() {
        // xi = (2, 1, 0), |xi|^2 = 5: k = 1, 2 see the mode, the n = 2 annulus holds it
        let lat = Lattice::new(8).unwrap();
        let u = single_mode(lat, [2, 1, 0], [Complex64::default(), Complex64::default(), Complex64::new(0.3, 0.1)]);
        let e = u.norm_l2().powi(2);
        let [plain, grad] = check_superposition(0.0, &u);
        assert_relative_eq!(plain.lhs, 2.0 * e, max_relative = 1e-15);
        assert_relative_eq!(plain.rhs, 2.0 * e, max_relative = 1e-15);
        assert_relative_eq!(grad.lhs, 10.0 * e, max_relative = 1e-15);
        assert!(plain.pass && grad.pass);
    }

    #[test]
    fn averaging_single_mode_by_enumeration() {
        // |xi| = 1: |grad u^{k/2}|^2 = G for k = 1, 2, zero beyond, so
        // lhs = (b(1) + b(2)) G; the n = 1 annulus carries G.
        let lat = Lattice::new(8).unwrap();
        let u = single_mode(lat, [0, 0, 1], [Complex64::new(0.2, 0.0), Complex64::default(), Complex64::default()]);
        let g = u.grad_norm_sq();
        let r = check_averaging(0.0, &u).unwrap();
        assert_relative_eq!(r.lhs, (0.5 + 0.75) * g, max_relative = 1e-14);
        let consts = AveragingConstants::for_lattice(lat).unwrap();
        assert_eq!(consts.n0, 1);
        assert_relative_eq!(consts.c_n0, 2.0 * (0.75 + b_table(3)[3]) + 1.0, max_relative = 1e-15);
        assert_relative_eq!(r.rhs, consts.c_n0 * g + 6.0 * g, max_relative = 1e-14);
        assert!(r.pass);
    }

    #[test]
    fn random_field_full_suite_passes() {
        let lat = Lattice::new(16).unwrap();
        let u = init_random_divfree(lat, 11, -2.0, 1.0).unwrap();
        let snap = Snapshot {
            nu: 0.05,
            time: 0.5,
            field: u,
        };
        let recs = diagnose_snapshot(&snap, &[1.0, 2.0, 3.0, 4.5]).unwrap();
        let failed: Vec<_> = recs.iter().filter(|r| !r.pass).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }

    #[test]
    fn lattice_c0_small_shells() {
        // n = 8: shell 1 has 26 points, shell 2 (4 <= s < 16) has 98
        let c0 = lattice_c0(Lattice::new(8).unwrap());
        assert!(c0 >= 26f64.sqrt() / 8f64.sqrt());
        assert!(c0 < 2.0);
    }

    #[test]
    fn run_keeps_going_past_bad_snapshots() {
        let lat = Lattice::new(8).unwrap();
        let good = Snapshot {
            nu: 0.1,
            time: 0.0,
            field: SpectralField::zeros(lat),
        };
        let stream = vec![
            ("a".to_string(), Ok(good)),
            ("b".to_string(), Err(Error::Snapshot("bad magic".into()))),
        ];
        let run = run_diagnostics("mem", stream, &DiagnosticsConfig::with_kmax(2)).unwrap();
        assert_eq!(run.snapshots, 1);
        assert_eq!(run.errors.len(), 1);
        assert!(run.passed());
        assert!(run.certificate.as_ref().unwrap().pass);
        let mut csv = Vec::new();
        run.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("t,k,equation,lhs,rhs,ratio,pass\n"));
        assert_eq!(text.lines().count(), 1 + run.records.len());
    }
}
