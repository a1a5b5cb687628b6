//! Band-limited vector fields on the periodic lattice.
//!
//! The domain is the `2 pi`-periodic torus with integer wavevectors
//! `xi in {-n/2, ..., n/2 - 1}^3`, used as a finite stand-in for the whole
//! space. Coefficients are stored per component in FFT order and normalised so
//! that `u(x) = sum_xi u_hat(xi) e^{i xi x}`; Parseval then reads
//! `|u|_2^2 = mean_x |u(x)|^2 = sum_xi |u_hat(xi)|^2` with no volume factor.

pub mod fft;
mod mask;
pub mod snapshot;

use num_complex::Complex64;

pub use mask::BandMask;
pub use snapshot::Snapshot;

use crate::error::{invalid, Error, Result};
use crate::shell_profile::ShellProfile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    n: usize,
    dealias_radius: f64,
}

impl Lattice {
    /// `n` modes per axis, dealiasing radius `n / 3`.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_dealias_radius(n, n as f64 / 3.0)
    }

    pub fn with_dealias_radius(n: usize, dealias_radius: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return invalid(format!("lattice size must be even and >= 8, got {n}"));
        }
        if n > 1024 {
            return invalid(format!("lattice size {n} is beyond the supported 1024"));
        }
        if !(dealias_radius > 0.0) || dealias_radius > n as f64 / 2.0 {
            return invalid(format!(
                "dealias radius must lie in (0, n/2], got {dealias_radius} for n = {n}"
            ));
        }
        Ok(Lattice { n, dealias_radius })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dealias_radius(&self) -> f64 {
        self.dealias_radius
    }

    /// Number of lattice points `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed wavenumber of FFT index `i`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavenumber used for derivatives; zero on the unpaired Nyquist plane.
    #[inline]
    pub fn derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i) as f64
        }
    }

    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.n + i2) * self.n + i3
    }

    /// Flat index of the wavevector `xi`, which must lie in the lattice range.
    pub fn index_of(&self, xi: [i64; 3]) -> Result<usize> {
        let half = (self.n / 2) as i64;
        let mut out = [0usize; 3];
        for (o, &x) in out.iter_mut().zip(&xi) {
            if x < -half || x >= half {
                return invalid(format!("wavevector {xi:?} outside the lattice"));
            }
            *o = x.rem_euclid(self.n as i64) as usize;
        }
        Ok(self.index(out[0], out[1], out[2]))
    }

    pub fn wavevector(&self, idx: usize) -> [i64; 3] {
        let n = self.n;
        [
            self.wavenumber(idx / (n * n)),
            self.wavenumber((idx / n) % n),
            self.wavenumber(idx % n),
        ]
    }

    /// Index of `-xi`.
    pub fn mirror(&self, idx: usize) -> usize {
        let n = self.n;
        let m = |i: usize| (n - i) % n;
        self.index(m(idx / (n * n)), m((idx / n) % n), m(idx % n))
    }

    /// Calls `f(flat_index, xi, |xi|^2)` for every lattice point in storage order.
    #[inline]
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, [i64; 3], i64)) {
        let n = self.n;
        let mut idx = 0;
        for i1 in 0..n {
            let k1 = self.wavenumber(i1);
            for i2 in 0..n {
                let k2 = self.wavenumber(i2);
                for i3 in 0..n {
                    let k3 = self.wavenumber(i3);
                    f(idx, [k1, k2, k3], k1 * k1 + k2 * k2 + k3 * k3);
                    idx += 1;
                }
            }
        }
    }

    /// Largest `|xi|^2` on the lattice.
    pub fn max_norm2(&self) -> i64 {
        let h = (self.n / 2) as i64;
        3 * h * h
    }

    /// Physical grid coordinate `2 pi a / n`.
    pub fn coordinate(&self, a: usize) -> f64 {
        2.0 * std::f64::consts::PI * a as f64 / self.n as f64
    }

    /// Whether `|xi|^2` is strictly inside the dealiasing ball.
    #[inline]
    pub fn within_dealias(&self, norm2: i64) -> bool {
        (norm2 as f64) < self.dealias_radius * self.dealias_radius
    }
}

/// Three complex coefficient arrays over a [`Lattice`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    lattice: Lattice,
    comps: [Vec<Complex64>; 3],
}

impl SpectralField {
    pub fn zeros(lattice: Lattice) -> Self {
        let len = lattice.len();
        SpectralField {
            lattice,
            comps: [
                vec![Complex64::default(); len],
                vec![Complex64::default(); len],
                vec![Complex64::default(); len],
            ],
        }
    }

    pub fn from_components(lattice: Lattice, comps: [Vec<Complex64>; 3]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != lattice.len()) {
            return invalid(format!(
                "component length does not match lattice size {}",
                lattice.len()
            ));
        }
        Ok(SpectralField { lattice, comps })
    }

    /// Spectral coefficients of a real field sampled on the physical grid.
    pub fn from_physical(lattice: Lattice, values: [&[f64]; 3]) -> Result<Self> {
        if values.iter().any(|v| v.len() != lattice.len()) {
            return invalid("physical samples do not match the lattice size");
        }
        let plan = fft::plan(lattice.n());
        let mut spectra = plan.to_spectral(&values).into_iter();
        let comps = [
            spectra.next().unwrap(),
            spectra.next().unwrap(),
            spectra.next().unwrap(),
        ];
        Ok(SpectralField { lattice, comps })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        &self.comps[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.comps[i]
    }

    pub fn components(&self) -> &[Vec<Complex64>; 3] {
        &self.comps
    }

    pub fn into_components(self) -> [Vec<Complex64>; 3] {
        self.comps
    }

    /// `u_hat(xi)` as a 3-vector.
    pub fn coeff(&self, idx: usize) -> [Complex64; 3] {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }

    pub fn set_coeff(&mut self, idx: usize, v: [Complex64; 3]) {
        for (c, x) in self.comps.iter_mut().zip(v) {
            c[idx] = x;
        }
    }

    fn check_same_lattice(&self, other: &SpectralField) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch {
                left: self.lattice.n(),
                right: other.lattice.n(),
            });
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.iter().all(|z| z.re == 0.0 && z.im == 0.0))
    }

    /// Linear combination `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: f64, other: &SpectralField, beta: f64) -> Result<SpectralField> {
        self.check_same_lattice(other)?;
        let mut out = self.clone();
        for (o, b) in out.comps.iter_mut().zip(&other.comps) {
            for (x, y) in o.iter_mut().zip(b) {
                *x = *x * alpha + *y * beta;
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, alpha: f64) -> SpectralField {
        let mut out = self.clone();
        for c in out.comps.iter_mut() {
            for z in c.iter_mut() {
                *z *= alpha;
            }
        }
        out
    }

    /// Zeroes every coefficient outside the mask.
    pub fn apply_mask(&self, mask: BandMask) -> Result<SpectralField> {
        mask.validate()?;
        let mut out = self.clone();
        self.lattice.for_each_mode(|idx, _, s| {
            if !mask.contains(s) {
                for c in out.comps.iter_mut() {
                    c[idx] = Complex64::default();
                }
            }
        });
        Ok(out)
    }

    /// `sum |u_hat|^2` binned by `|xi|^2`.
    pub fn radial_spectrum(&self) -> Vec<f64> {
        let mut bins = vec![0.0; self.lattice.max_norm2() as usize + 1];
        self.lattice.for_each_mode(|idx, _, s| {
            let e: f64 = self.comps.iter().map(|c| c[idx].norm_sqr()).sum();
            bins[s as usize] += e;
        });
        bins
    }

    /// Shell magnitudes `sigma_j = |Delta_j u|_2` for nonempty dyadic shells.
    pub fn decompose_shells(&self) -> ShellProfile {
        let spectrum = self.radial_spectrum();
        let mut shells: Vec<(i64, f64)> = Vec::new();
        let mut j = 1;
        loop {
            let lo = 1usize << (2 * (j - 1));
            if lo >= spectrum.len() {
                break;
            }
            let hi = (1usize << (2 * j)).min(spectrum.len());
            let energy: f64 = spectrum[lo..hi].iter().sum();
            shells.push((j as i64, energy.sqrt()));
            j += 1;
        }
        ShellProfile::from_entries(shells).expect("shell energies are finite and nonnegative")
    }

    /// Removes the gradient part: `u_hat - xi (xi . u_hat) / |xi|^2`.
    pub fn leray_project(&self) -> SpectralField {
        let mut out = self.clone();
        self.lattice.for_each_mode(|idx, xi, s| {
            if s == 0 {
                return;
            }
            let [a, b, c] = self.coeff(idx);
            let (x, y, z) = (xi[0] as f64, xi[1] as f64, xi[2] as f64);
            let dot = (a * x + b * y + c * z) / s as f64;
            out.comps[0][idx] = a - dot * x;
            out.comps[1][idx] = b - dot * y;
            out.comps[2][idx] = c - dot * z;
        });
        out
    }

    /// `max_xi |xi . u_hat(xi)| / |u_hat(xi)|` over nonzero coefficients.
    pub fn divergence_indicator(&self) -> f64 {
        let mut worst = 0.0f64;
        self.lattice.for_each_mode(|idx, xi, s| {
            let [a, b, c] = self.coeff(idx);
            let mag = (a.norm_sqr() + b.norm_sqr() + c.norm_sqr()).sqrt();
            if mag == 0.0 || s == 0 {
                return;
            }
            let dot = a * xi[0] as f64 + b * xi[1] as f64 + c * xi[2] as f64;
            worst = worst.max(dot.norm() / (mag * (s as f64).sqrt()));
        });
        worst
    }

    /// `max |u_hat(-xi) - conj u_hat(xi)|` relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for c in &self.comps {
            for idx in 0..c.len() {
                let m = self.lattice.mirror(idx);
                worst = worst.max((c[m] - c[idx].conj()).norm());
                scale = scale.max(c[idx].norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Coefficient at `xi = 0`.
    pub fn mean(&self) -> [Complex64; 3] {
        self.coeff(0)
    }

    /// No nonzero coefficient at or beyond the dealiasing radius.
    pub fn is_band_limited(&self) -> bool {
        let mut ok = true;
        self.lattice.for_each_mode(|idx, _, s| {
            if ok && !self.lattice.within_dealias(s) {
                ok = self.comps.iter().all(|c| c[idx] == Complex64::default());
            }
        });
        ok
    }

    /// Spectral L2 norm.
    pub fn norm_l2(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .map(|z| z.norm_sqr())
            .fold(0.0, |a, b| a + b)
            .sqrt()
    }

    /// Homogeneous `(sum |xi|^(2s) |u_hat|^2)^(1/2)` (`xi = 0` skipped) or
    /// inhomogeneous `(sum (1 + |xi|^2)^s |u_hat|^2)^(1/2)`.
    pub fn norm_hs(&self, s: f64, homogeneous: bool) -> f64 {
        let spectrum = self.radial_spectrum();
        spectrum
            .iter()
            .enumerate()
            .filter(|&(q, &e)| e != 0.0 && !(homogeneous && q == 0))
            .map(|(q, &e)| {
                let w = if homogeneous {
                    (q as f64).powf(s)
                } else {
                    (1.0 + q as f64).powf(s)
                };
                w * e
            })
            .fold(0.0, |a, b| a + b)
            .sqrt()
    }

    /// `|grad u|_2^2 = sum |xi|^2 |u_hat|^2`.
    pub fn grad_norm_sq(&self) -> f64 {
        self.radial_spectrum()
            .iter()
            .enumerate()
            .map(|(q, e)| q as f64 * e)
            .sum()
    }

    /// Real part of `sum_xi u_hat . conj w_hat`.
    pub fn inner_product(&self, other: &SpectralField) -> Result<f64> {
        self.check_same_lattice(other)?;
        Ok(self
            .comps
            .iter()
            .zip(&other.comps)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum())
    }

    /// Physical-space samples of the three components.
    pub fn to_physical(&self) -> [Vec<f64>; 3] {
        let plan = fft::plan(self.lattice.n());
        let mut it = plan
            .to_physical(&[&self.comps[0], &self.comps[1], &self.comps[2]])
            .into_iter();
        [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
    }

    /// Spectral coefficients of `d_j u_i`, entry `3 * i + j`.
    pub fn gradient_spectra(&self) -> Vec<Vec<Complex64>> {
        let k = self.derivative_table();
        let mut out = Vec::with_capacity(9);
        for e in 0..9 {
            let mut g = vec![Complex64::default(); self.lattice.len()];
            self.fill_derivatives(&k, e, None, &mut g);
            out.push(g);
        }
        out
    }

    /// Physical samples of `d_j u_i`, entry `3 * i + j`.
    pub fn gradient_physical(&self) -> Vec<Vec<f64>> {
        let len = self.lattice.len();
        let plan = fft::plan(self.lattice.n());
        let k = self.derivative_table();
        let mut out = vec![vec![0.0; len]; 9];
        let mut z = vec![Complex64::default(); len];
        for (p, pair) in out.chunks_mut(2).enumerate() {
            let second = (2 * p + 1 < 9).then_some(2 * p + 1);
            self.fill_derivatives(&k, 2 * p, second, &mut z);
            plan.inverse(&mut z);
            for (x, c) in pair[0].iter_mut().zip(&z) {
                *x = c.re;
            }
            if let Some(dst) = pair.get_mut(1) {
                for (x, c) in dst.iter_mut().zip(&z) {
                    *x = c.im;
                }
            }
        }
        out
    }

    fn derivative_table(&self) -> Vec<f64> {
        (0..self.lattice.n())
            .map(|i| self.lattice.derivative_wavenumber(i))
            .collect()
    }

    /// Writes the spectrum of gradient entry `e` into `z`, or the packed pair
    /// `e + i f` when `f` is given (both real in physical space).
    fn fill_derivatives(&self, k: &[f64], e: usize, f: Option<usize>, z: &mut [Complex64]) {
        let n = self.lattice.n();
        let wave = |entry: usize, a: usize, b: usize, c: usize| match entry % 3 {
            0 => k[a],
            1 => k[b],
            _ => k[c],
        };
        let u = &self.comps[e / 3];
        let mut idx = 0;
        for a in 0..n {
            for b in 0..n {
                let ka = wave(e, a, b, 0);
                match f {
                    None => {
                        for c in 0..n {
                            let kk = if e % 3 == 2 { k[c] } else { ka };
                            let v = u[idx];
                            z[idx] = Complex64::new(-v.im * kk, v.re * kk);
                            idx += 1;
                        }
                    }
                    Some(f) => {
                        let w = &self.comps[f / 3];
                        let kb = wave(f, a, b, 0);
                        for c in 0..n {
                            let k0 = if e % 3 == 2 { k[c] } else { ka };
                            let k1 = if f % 3 == 2 { k[c] } else { kb };
                            let (v, x) = (u[idx], w[idx]);
                            // i k0 v + i (i k1 x)
                            z[idx] = Complex64::new(-v.im * k0 - x.re * k1, v.re * k0 - x.im * k1);
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    /// Grid maxima of `|u(x)|` and of the Frobenius norm of `grad u(x)`.
    ///
    /// A grid maximum is a lower bound for the true supremum.
    pub fn sup_norms(&self) -> (f64, f64) {
        if self.is_zero() {
            return (0.0, 0.0);
        }
        (
            pointwise_max(&self.to_physical()),
            pointwise_max(&self.gradient_physical()),
        )
    }

    /// `(u . grad) w`, dealiased: products on the grid, forward transform and
    /// sharp truncation at the dealiasing radius.
    pub fn convection(u: &SpectralField, w: &SpectralField) -> Result<SpectralField> {
        u.check_same_lattice(w)?;
        if !u.is_band_limited() || !w.is_band_limited() {
            return invalid("convection inputs must vanish at and beyond the dealiasing radius");
        }
        let lat = u.lattice;
        if u.is_zero() || w.is_zero() {
            return Ok(SpectralField::zeros(lat));
        }
        let velocity = u.to_physical();
        let grad = w.gradient_physical();
        let len = lat.len();
        let mut products = vec![vec![0.0; len], vec![0.0; len], vec![0.0; len]];
        for (i, out) in products.iter_mut().enumerate() {
            for (x, o) in out.iter_mut().enumerate() {
                *o = velocity[0][x] * grad[3 * i][x]
                    + velocity[1][x] * grad[3 * i + 1][x]
                    + velocity[2][x] * grad[3 * i + 2][x];
            }
        }
        let r2 = lat.dealias_radius() * lat.dealias_radius();
        let spectra = fft::plan(lat.n()).to_spectral_within(&[&products[0], &products[1], &products[2]], r2);
        let mut it = spectra.into_iter();
        let mut out = SpectralField {
            lattice: lat,
            comps: [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()],
        };
        out.truncate_dealias();
        Ok(out)
    }

    /// Zeroes every coefficient with `|xi| >=` the dealiasing radius.
    pub fn truncate_dealias(&mut self) {
        let lat = self.lattice;
        let comps = &mut self.comps;
        lat.for_each_mode(|idx, _, s| {
            if !lat.within_dealias(s) {
                for c in comps.iter_mut() {
                    c[idx] = Complex64::default();
                }
            }
        });
    }
}

/// Largest pointwise Euclidean norm across a set of same-length fields.
pub fn pointwise_max(fields: &[Vec<f64>]) -> f64 {
    let len = fields.first().map_or(0, |f| f.len());
    let mut best = 0.0f64;
    for x in 0..len {
        let s: f64 = fields.iter().map(|f| f[x] * f[x]).sum();
        best = best.max(s);
    }
    best.sqrt()
}

/// `mean_x sum_ij a_j(x) d_j b_i(x) c_i(x)` from physical samples.
///
/// For inputs band-limited within radius `n/3` this equals the continuous
/// trilinear form `((a . grad) b, c)` up to roundoff: a nonzero triple of
/// wavevectors with components below `n/3` cannot sum to a multiple of `n`.
pub fn trilinear_physical(a: &[Vec<f64>], grad_b: &[Vec<f64>], c: &[Vec<f64>]) -> f64 {
    let len = a[0].len();
    let mut acc = 0.0;
    for x in 0..len {
        let mut s = 0.0;
        for i in 0..3 {
            let adv = a[0][x] * grad_b[3 * i][x]
                + a[1][x] * grad_b[3 * i + 1][x]
                + a[2][x] * grad_b[3 * i + 2][x];
            s += adv * c[i][x];
        }
        acc += s;
    }
    acc / len as f64
}

#[cfg(test)]
mod tests;
