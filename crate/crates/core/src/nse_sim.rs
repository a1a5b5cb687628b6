//! Pseudo-spectral Navier-Stokes on the periodic box.
//!
//! Evolves `du/dt = -P[(u . grad) u] + nu Lap u` with the pressure removed by
//! the Leray projector `P`. The convective term is evaluated in divergence form
//! `div(u (x) u)` (equal to `(u . grad) u` for solenoidal `u`), dealiased by
//! sharp truncation at the lattice dealiasing radius. Time stepping is
//! classical RK4 in integrating-factor (Lawson) form, so the viscous decay of
//! every mode is exact.

use std::path::{Path, PathBuf};

use log::{info, warn};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spectral::{fft, pointwise_max, Lattice, SpectralField, Snapshot};

/// Runs abort once the energy exceeds this multiple of its initial value.
pub const ENERGY_GROWTH_LIMIT: f64 = 1e3;

/// Imaginary-axis stability limit of classical RK4.
const RK4_IMAGINARY_LIMIT: f64 = 2.0 * std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitSpec {
    TaylorGreen { amplitude: f64 },
    Random { seed: u64, slope: f64, energy: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub nu: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub init: InitSpec,
    pub snapshot_every: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl SimConfig {
    /// Desk-scale defaults: Taylor-Green on 64^3, nu = 0.05, dt = 1e-3, T = 1.
    pub fn taylor_green_default() -> Self {
        SimConfig {
            n: 64,
            nu: 0.05,
            dt: 1e-3,
            horizon: 1.0,
            init: InitSpec::TaylorGreen { amplitude: 1.0 },
            snapshot_every: 50,
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        Lattice::new(self.n)?;
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return invalid(format!("viscosity must be positive, got {}", self.nu));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return invalid(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return invalid(format!("horizon must be >= 0, got {}", self.horizon));
        }
        if self.snapshot_every == 0 {
            return invalid("snapshot_every must be >= 1");
        }
        match self.init {
            InitSpec::TaylorGreen { amplitude } if !(amplitude > 0.0) => {
                invalid(format!("Taylor-Green amplitude must be positive, got {amplitude}"))
            }
            InitSpec::Random { energy, slope, .. } if !(energy > 0.0) || !slope.is_finite() => {
                invalid(format!("random init needs energy > 0 and finite slope, got {energy}, {slope}"))
            }
            _ => Ok(()),
        }
    }

    /// Number of steps, `round(T / dt)`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn initial_field(&self) -> Result<SpectralField> {
        let lattice = Lattice::new(self.n)?;
        match self.init {
            InitSpec::TaylorGreen { amplitude } => init_taylor_green(lattice, amplitude),
            InitSpec::Random {
                seed,
                slope,
                energy,
            } => init_random_divfree(lattice, seed, slope, energy),
        }
    }
}

/// `A (sin x cos y cos z, -cos x sin y cos z, 0)` as spectral coefficients.
pub fn init_taylor_green(lattice: Lattice, amplitude: f64) -> Result<SpectralField> {
    if !(amplitude > 0.0) {
        return invalid(format!("amplitude must be positive, got {amplitude}"));
    }
    let mut u = SpectralField::zeros(lattice);
    let c = amplitude / 8.0;
    for s1 in [-1i64, 1] {
        for s2 in [-1i64, 1] {
            for s3 in [-1i64, 1] {
                let idx = lattice.index_of([s1, s2, s3])?;
                u.set_coeff(
                    idx,
                    [
                        Complex64::new(0.0, -(s1 as f64) * c),
                        Complex64::new(0.0, s2 as f64 * c),
                        Complex64::default(),
                    ],
                );
            }
        }
    }
    Ok(u)
}

/// Seeded solenoidal field with `|u_hat(xi)| ~ |xi|^slope` on
/// `0 < |xi| <` dealiasing radius, rescaled so that `|u|_2^2 = energy`.
pub fn init_random_divfree(
    lattice: Lattice,
    seed: u64,
    slope: f64,
    energy: f64,
) -> Result<SpectralField> {
    if !(energy > 0.0) {
        return invalid(format!("energy must be positive, got {energy}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = SpectralField::zeros(lattice);
    lattice.for_each_mode(|idx, _, s| {
        if s == 0 || !lattice.within_dealias(s) {
            return;
        }
        let amp = (s as f64).sqrt().powf(slope);
        let mut v = [Complex64::default(); 3];
        for z in v.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z = Complex64::new(re, im) * amp;
        }
        raw.set_coeff(idx, v);
    });
    let mut sym = SpectralField::zeros(lattice);
    for idx in 0..lattice.len() {
        let m = lattice.mirror(idx);
        let a = raw.coeff(idx);
        let b = raw.coeff(m);
        sym.set_coeff(
            idx,
            [
                (a[0] + b[0].conj()) * 0.5,
                (a[1] + b[1].conj()) * 0.5,
                (a[2] + b[2].conj()) * 0.5,
            ],
        );
    }
    let projected = sym.leray_project();
    let norm = projected.norm_l2();
    if norm == 0.0 {
        return invalid("lattice has no admissible modes below the dealiasing radius");
    }
    Ok(projected.scaled(energy.sqrt() / norm))
}

/// Reusable buffers for one nonlinear evaluation.
#[derive(Debug)]
struct Workspace {
    z: Vec<Complex64>,
    phys: [Vec<f64>; 3],
    prods: [Vec<f64>; 6],
    tensor: [Vec<Complex64>; 6],
}

impl Workspace {
    fn new(len: usize) -> Self {
        Workspace {
            z: vec![Complex64::default(); len],
            phys: std::array::from_fn(|_| vec![0.0; len]),
            prods: std::array::from_fn(|_| vec![0.0; len]),
            tensor: std::array::from_fn(|_| vec![Complex64::default(); len]),
        }
    }
}

/// A mode strictly inside the dealiasing ball.
#[derive(Debug, Clone, Copy)]
struct BallMode {
    idx: usize,
    k: [f64; 3],
    norm2: f64,
}

/// Right-hand side evaluator for one lattice and viscosity.
#[derive(Debug)]
pub struct NavierStokes {
    lattice: Lattice,
    nu: f64,
    plan: std::sync::Arc<fft::Fft3>,
    ball: Vec<BallMode>,
}

impl NavierStokes {
    pub fn new(lattice: Lattice, nu: f64) -> Self {
        let mut ball = Vec::new();
        lattice.for_each_mode(|idx, xi, s| {
            if s > 0 && lattice.within_dealias(s) {
                ball.push(BallMode {
                    idx,
                    k: [xi[0] as f64, xi[1] as f64, xi[2] as f64],
                    norm2: s as f64,
                });
            }
        });
        NavierStokes {
            lattice,
            nu,
            plan: fft::plan(lattice.n()),
            ball,
        }
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    /// `-P[div(u (x) u)]`, truncated at the dealiasing radius.
    pub fn nonlinear(&self, u: &SpectralField) -> SpectralField {
        let mut out = SpectralField::zeros(self.lattice);
        self.nonlinear_into(u, &mut out, &mut Workspace::new(self.lattice.len()));
        out
    }

    fn nonlinear_into(&self, u: &SpectralField, out: &mut SpectralField, work: &mut Workspace) {
        let lat = self.lattice;
        // only ball entries are written; callers keep the rest of `out` zero
        if u.is_zero() {
            for m in &self.ball {
                out.set_coeff(m.idx, [Complex64::default(); 3]);
            }
            return;
        }
        let Workspace { z, phys, prods, tensor } = work;
        {
            let mut dst: Vec<&mut [f64]> = phys.iter_mut().map(|v| v.as_mut_slice()).collect();
            let src = u.components();
            self.plan
                .to_physical_into(&[&src[0], &src[1], &src[2]], &mut dst, z);
        }
        let [u1, u2, u3] = &*phys;
        let [p0, p1, p2, p3, p4, p5] = prods;
        for x in 0..lat.len() {
            let (a, b, c) = (u1[x], u2[x], u3[x]);
            p0[x] = a * a;
            p1[x] = a * b;
            p2[x] = a * c;
            p3[x] = b * b;
            p4[x] = b * c;
            p5[x] = c * c;
        }
        let refs: Vec<&[f64]> = prods.iter().map(|p| p.as_slice()).collect();
        let mut dst: Vec<&mut [Complex64]> = tensor.iter_mut().map(|v| v.as_mut_slice()).collect();
        let r2 = lat.dealias_radius() * lat.dealias_radius();
        self.plan.to_spectral_into(&refs, r2, &mut dst, z);
        let t = tensor;
        // symmetric tensor slots: (0,0)=0 (0,1)=1 (0,2)=2 (1,1)=3 (1,2)=4 (2,2)=5
        const SLOT: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
        for m in &self.ball {
            let (idx, k) = (m.idx, m.k);
            let mut f = [Complex64::default(); 3];
            for (i, fi) in f.iter_mut().enumerate() {
                let mut acc = Complex64::default();
                for j in 0..3 {
                    acc += t[SLOT[i][j]][idx] * k[j];
                }
                // i * acc
                *fi = Complex64::new(-acc.im, acc.re);
            }
            let dot = (f[0] * k[0] + f[1] * k[1] + f[2] * k[2]) / m.norm2;
            out.set_coeff(
                idx,
                [
                    -(f[0] - dot * k[0]),
                    -(f[1] - dot * k[1]),
                    -(f[2] - dot * k[2]),
                ],
            );
        }
    }

    /// Full `du/dt = -P[(u . grad) u] - nu |xi|^2 u_hat`.
    pub fn time_derivative(&self, u: &SpectralField) -> SpectralField {
        let mut out = self.nonlinear(u);
        let nu = self.nu;
        let lat = self.lattice;
        lat.for_each_mode(|idx, _, s| {
            let [a, b, c] = u.coeff(idx);
            let [x, y, z] = out.coeff(idx);
            let d = nu * s as f64;
            out.set_coeff(idx, [x - a * d, y - b * d, z - c * d]);
        });
        out
    }

    /// `nu |grad u|_2^2`.
    pub fn dissipation(&self, u: &SpectralField) -> f64 {
        self.nu * u.grad_norm_sq()
    }

    /// `dt <= 2 sqrt 2 / (R * sum_i max |u_i|)`, the RK4 advective limit.
    pub fn stability_bound(&self, u: &SpectralField) -> f64 {
        let phys = u.to_physical();
        let speed: f64 = phys
            .iter()
            .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .sum();
        if speed == 0.0 {
            f64::INFINITY
        } else {
            RK4_IMAGINARY_LIMIT / (self.lattice.dealias_radius() * speed)
        }
    }
}

/// One Lawson RK4 step with fixed `dt`.
///
/// With `E = exp(-nu |xi|^2 dt / 2)` and `N` the nonlinear term:
/// `a = E(u + dt/2 N(u))`, `b = E u + dt/2 N(a)`, `c = E^2 u + dt E N(b)`,
/// `u+ = E^2 u + dt/6 (E^2 N(u) + 2E (N(a) + N(b)) + N(c))`.
#[derive(Debug)]
pub struct Stepper {
    ns: NavierStokes,
    dt: f64,
    half_decay: Vec<f64>,
    full_decay: Vec<f64>,
    work: Workspace,
    k: [SpectralField; 4],
    stage: SpectralField,
    stage_clean: bool,
}

impl Stepper {
    pub fn new(lattice: Lattice, nu: f64, dt: f64) -> Self {
        let mut half = vec![0.0; lattice.len()];
        let mut full = vec![0.0; lattice.len()];
        lattice.for_each_mode(|idx, _, s| {
            half[idx] = (-nu * s as f64 * dt / 2.0).exp();
            full[idx] = (-nu * s as f64 * dt).exp();
        });
        Stepper {
            ns: NavierStokes::new(lattice, nu),
            dt,
            half_decay: half,
            full_decay: full,
            work: Workspace::new(lattice.len()),
            k: std::array::from_fn(|_| SpectralField::zeros(lattice)),
            stage: SpectralField::zeros(lattice),
            stage_clean: true,
        }
    }

    pub fn equations(&self) -> &NavierStokes {
        &self.ns
    }

    /// `out = decay * u + sum_t weight_t * factor_t * k[t]`. The nonlinear
    /// terms vanish outside the dealiasing ball, so they are only visited there;
    /// with `banded` set, `u` and `out` are zero outside the ball as well.
    fn combine(
        banded: bool,
        ball: &[BallMode],
        k: &[SpectralField; 4],
        out: &mut SpectralField,
        u: &SpectralField,
        decay: &[f64],
        terms: &[(usize, Option<&[f64]>, f64)],
    ) {
        for c in 0..3 {
            let dst = out.component_mut(c);
            let src = u.component(c);
            if banded {
                for m in ball {
                    dst[m.idx] = src[m.idx] * decay[m.idx];
                }
            } else {
                for ((z, s), d) in dst.iter_mut().zip(src).zip(decay) {
                    *z = *s * *d;
                }
            }
            for &(t, factor, weight) in terms {
                let src = k[t].component(c);
                for m in ball {
                    let w = factor.map_or(weight, |f| f[m.idx] * weight);
                    dst[m.idx] += src[m.idx] * w;
                }
            }
        }
    }

    pub fn step(&mut self, u: &SpectralField) -> Result<SpectralField> {
        let dt = self.dt;
        let Stepper {
            ns,
            half_decay,
            full_decay,
            work,
            k,
            stage,
            stage_clean,
            ..
        } = self;
        let (eh, ef) = (&half_decay[..], &full_decay[..]);
        let ball = &ns.ball[..];
        let banded = u.is_band_limited();
        if !banded {
            // stage may keep stale values outside the ball once the input is banded again
            *stage_clean = false;
        } else if !*stage_clean {
            *stage = SpectralField::zeros(ns.lattice);
            *stage_clean = true;
        }
        ns.nonlinear_into(u, &mut k[0], work);
        Self::combine(banded, ball, k, stage, u, eh, &[(0, Some(eh), dt / 2.0)]);
        ns.nonlinear_into(stage, &mut k[1], work);
        Self::combine(banded, ball, k, stage, u, eh, &[(1, None, dt / 2.0)]);
        ns.nonlinear_into(stage, &mut k[2], work);
        Self::combine(banded, ball, k, stage, u, ef, &[(2, Some(eh), dt)]);
        ns.nonlinear_into(stage, &mut k[3], work);
        let mut next = SpectralField::zeros(ns.lattice);
        Self::combine(
            banded,
            ball,
            k,
            &mut next,
            u,
            ef,
            &[
                (0, Some(ef), dt / 6.0),
                (1, Some(eh), dt / 3.0),
                (2, Some(eh), dt / 3.0),
                (3, None, dt / 6.0),
            ],
        );
        if next
            .components()
            .iter()
            .flatten()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::BlowUp {
                time: f64::NAN,
                reason: "non-finite coefficient".into(),
            });
        }
        Ok(next)
    }
}

/// Single step of the integrator.
pub fn step(u: &SpectralField, nu: f64, dt: f64) -> Result<SpectralField> {
    Stepper::new(u.lattice(), nu, dt).step(u)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergySample {
    pub t: f64,
    /// `|u|_2^2 / 2`
    pub energy: f64,
    /// `nu |grad u|_2^2`
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub n: usize,
    pub nu: f64,
    pub dt: f64,
    pub steps: usize,
    pub final_time: f64,
    pub stability_bound: f64,
    pub warnings: Vec<String>,
    pub energy_history: Vec<EnergySample>,
    /// Trapezoidal `int_0^T nu |grad u|^2 dt`.
    pub dissipation_integral: f64,
    /// `E(T) - E(0) + int_0^T nu |grad u|^2`; zero for the exact solution.
    pub energy_residual: f64,
    /// Largest step-over-step energy increase (0 when monotone).
    pub max_energy_increase: f64,
    pub snapshot_times: Vec<f64>,
    pub snapshot_files: Vec<PathBuf>,
}

/// Integrates `config`, handing every snapshot to `on_snapshot`.
pub fn run_with(
    config: &SimConfig,
    mut on_snapshot: impl FnMut(usize, &Snapshot) -> Result<Option<PathBuf>>,
) -> Result<RunSummary> {
    config.validate()?;
    let lattice = Lattice::new(config.n)?;
    let mut stepper = Stepper::new(lattice, config.nu, config.dt);
    let mut u = config.initial_field()?;
    let steps = config.steps();

    let bound = stepper.equations().stability_bound(&u);
    let mut warnings = Vec::new();
    if config.dt > bound {
        let msg = format!(
            "dt = {} exceeds the RK4 advective stability bound {bound:.3e}",
            config.dt
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    if (steps as f64 * config.dt - config.horizon).abs() > 1e-9 * config.horizon.max(1.0) {
        let msg = format!(
            "T = {} is not a multiple of dt; integrating to {}",
            config.horizon,
            steps as f64 * config.dt
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let energy = |u: &SpectralField| 0.5 * u.norm_l2().powi(2);
    let e0 = energy(&u);
    let mut history = vec![EnergySample {
        t: 0.0,
        energy: e0,
        dissipation: config.nu * u.grad_norm_sq(),
    }];
    let mut snapshot_times = Vec::new();
    let mut snapshot_files = Vec::new();
    let mut emit = |step: usize, t: f64, u: &SpectralField| -> Result<()> {
        let snap = Snapshot {
            nu: config.nu,
            time: t,
            field: u.clone(),
        };
        if let Some(path) = on_snapshot(step, &snap)? {
            snapshot_files.push(path);
        }
        snapshot_times.push(t);
        Ok(())
    };
    emit(0, 0.0, &u)?;

    let mut integral = 0.0;
    let mut max_increase = 0.0f64;
    for m in 1..=steps {
        let t = m as f64 * config.dt;
        u = stepper.step(&u).map_err(|e| match e {
            Error::BlowUp { reason, .. } => Error::BlowUp { time: t, reason },
            other => other,
        })?;
        let sample = EnergySample {
            t,
            energy: energy(&u),
            dissipation: config.nu * u.grad_norm_sq(),
        };
        if !sample.energy.is_finite() || sample.energy > ENERGY_GROWTH_LIMIT * e0.max(f64::MIN_POSITIVE) {
            return Err(Error::BlowUp {
                time: t,
                reason: format!("energy {} grew past {ENERGY_GROWTH_LIMIT}x the initial {e0}", sample.energy),
            });
        }
        let prev = history.last().unwrap();
        integral += 0.5 * config.dt * (prev.dissipation + sample.dissipation);
        max_increase = max_increase.max(sample.energy - prev.energy);
        history.push(sample);
        if m % config.snapshot_every == 0 || m == steps {
            emit(m, t, &u)?;
        }
    }
    let last = history.last().unwrap();
    let summary = RunSummary {
        n: config.n,
        nu: config.nu,
        dt: config.dt,
        steps,
        final_time: last.t,
        stability_bound: bound,
        warnings,
        dissipation_integral: integral,
        energy_residual: last.energy - e0 + integral,
        max_energy_increase: max_increase,
        energy_history: history,
        snapshot_times,
        snapshot_files,
    };
    info!(
        "integrated {} steps to t = {}; energy residual {:.3e}",
        steps, summary.final_time, summary.energy_residual
    );
    Ok(summary)
}

/// File name of the snapshot taken after `step` steps.
pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step:07}.shf1")
}

/// Integrates `config` and writes SHF1 snapshots plus `summary.json` into
/// `out_dir` (created if missing). Snapshot paths in the summary are
/// relative to `out_dir`.
pub fn run(config: &SimConfig, out_dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;
    let summary = run_with(config, |step, snap| {
        let name = snapshot_name(step);
        snap.write(&out_dir.join(&name))?;
        Ok(Some(PathBuf::from(name)))
    })?;
    let json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(out_dir.join("summary.json"), json + "\n")?;
    Ok(summary)
}

/// Grid maximum of `|u|` for reporting.
pub fn max_speed(u: &SpectralField) -> f64 {
    pointwise_max(&u.to_physical())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn taylor_green_norm_matches_quadrature() {
        let lat = Lattice::new(16).unwrap();
        let u = init_taylor_green(lat, 1.0).unwrap();
        // direct quadrature of the closed-form field on the grid
        let n = lat.n();
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let (x, y, z) = (lat.coordinate(a), lat.coordinate(b), lat.coordinate(c));
                    let u1 = x.sin() * y.cos() * z.cos();
                    let u2 = -x.cos() * y.sin() * z.cos();
                    acc += u1 * u1 + u2 * u2;
                }
            }
        }
        let quad = (acc / (n * n * n) as f64).sqrt();
        assert_relative_eq!(u.norm_l2(), quad, max_relative = 1e-13);
        assert_relative_eq!(u.norm_l2(), 0.5, max_relative = 1e-15);
        assert_eq!(u.divergence_indicator(), 0.0);
        assert_eq!(u.hermitian_defect(), 0.0);
        let profile = u.decompose_shells();
        assert_eq!(profile.indices().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn taylor_green_physical_values() {
        let lat = Lattice::new(8).unwrap();
        let u = init_taylor_green(lat, 2.0).unwrap();
        let phys = u.to_physical();
        let n = lat.n();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let (x, y, z) = (lat.coordinate(a), lat.coordinate(b), lat.coordinate(c));
                    let idx = lat.index(a, b, c);
                    assert!((phys[0][idx] - 2.0 * x.sin() * y.cos() * z.cos()).abs() < 1e-13);
                    assert!((phys[1][idx] + 2.0 * x.cos() * y.sin() * z.cos()).abs() < 1e-13);
                    assert!(phys[2][idx].abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn random_init_contract() {
        let lat = Lattice::new(16).unwrap();
        let a = init_random_divfree(lat, 3, -1.0, 0.7).unwrap();
        let b = init_random_divfree(lat, 3, -1.0, 0.7).unwrap();
        assert_eq!(a, b);
        assert_relative_eq!(a.norm_l2().powi(2), 0.7, max_relative = 1e-12);
        assert!(a.divergence_indicator() <= 1e-12);
        assert_eq!(a.hermitian_defect(), 0.0);
        assert!(a.is_band_limited());
        assert_eq!(a.mean(), [Complex64::default(); 3]);
        let c = init_random_divfree(lat, 4, -1.0, 0.7).unwrap();
        assert_ne!(a, c);
        assert!(init_random_divfree(lat, 3, -1.0, 0.0).is_err());
    }

    #[test]
    fn zero_field_stays_zero() {
        let lat = Lattice::new(8).unwrap();
        let z = SpectralField::zeros(lat);
        assert!(step(&z, 0.1, 0.01).unwrap().is_zero());
    }

    #[test]
    fn shear_mode_decays_like_heat_equation() {
        // u = (0, A cos x1, 0): (u . grad) u = 0, so only viscosity acts.
        let lat = Lattice::new(16).unwrap();
        let mut u = SpectralField::zeros(lat);
        for s in [-1i64, 1] {
            let idx = lat.index_of([s, 0, 0]).unwrap();
            u.set_coeff(idx, [Complex64::default(), Complex64::new(0.35, 0.0), Complex64::default()]);
        }
        let (nu, dt) = (0.07, 0.01);
        let mut stepper = Stepper::new(lat, nu, dt);
        let mut v = u.clone();
        for _ in 0..10 {
            v = stepper.step(&v).unwrap();
        }
        let decay = (-nu * 1.0 * dt * 10.0).exp();
        for idx in 0..lat.len() {
            let want = u.coeff(idx);
            let got = v.coeff(idx);
            for c in 0..3 {
                assert!((got[c] - want[c] * decay).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let text = r#"{"n": 16, "nu": 0.05, "dt": 0.001, "T": 0.01,
            "init": {"kind": "random", "seed": 5, "slope": -1.5, "energy": 0.5},
            "snapshot_every": 5, "out_dir": "out"}"#;
        let cfg = SimConfig::from_json(text).unwrap();
        assert_eq!(cfg.steps(), 10);
        assert_eq!(cfg.init, InitSpec::Random { seed: 5, slope: -1.5, energy: 0.5 });
        let back: SimConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(SimConfig::from_json(&text.replace("0.05", "-1")).is_err());
        assert!(SimConfig::from_json(&text.replace("\"n\": 16", "\"n\": 7")).is_err());
        assert!(SimConfig::from_json("{}").is_err());
    }

    #[test]
    fn zero_horizon_emits_initial_condition_only() {
        let mut cfg = SimConfig::taylor_green_default();
        cfg.n = 16;
        cfg.horizon = 0.0;
        let mut snaps = Vec::new();
        let summary = run_with(&cfg, |_, s| {
            snaps.push(s.clone());
            Ok(None)
        })
        .unwrap();
        assert_eq!(summary.steps, 0);
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].field, cfg.initial_field().unwrap());
        assert_eq!(snaps[0].time, 0.0);
    }

    #[test]
    fn energy_growth_guard_fires() {
        // dt far past the stability bound on a strong random field
        let cfg = SimConfig {
            n: 16,
            nu: 1e-4,
            dt: 5.0,
            horizon: 200.0,
            init: InitSpec::Random { seed: 1, slope: 0.0, energy: 100.0 },
            snapshot_every: 1000,
            out_dir: None,
        };
        let err = run_with(&cfg, |_, _| Ok(None)).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }), "{err}");
    }
}
