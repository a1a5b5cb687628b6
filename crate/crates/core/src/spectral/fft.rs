//! Cubic 3D complex FFT built from 1D `rustfft` passes.
//!
//! Strided axes are handled one `n x n` plane at a time through a transposed
//! scratch plane. All-zero lines are skipped, which makes inverse transforms
//! of band-limited spectra cheaper, and forward transforms can be restricted
//! to a ball of wavevectors.
//!
//! Physical fields are real, so two of them share one complex transform:
//! `ifft(A + iB) = a + ib`, and `fft(a + ib) = Z` splits as
//! `A(k) = (Z(k) + conj Z(-k)) / 2`, `B(k) = (Z(k) - conj Z(-k)) / 2i`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

const TILE: usize = 8;

fn is_zero(line: &[Complex64]) -> bool {
    line.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

struct Work {
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

pub struct Fft3 {
    n: usize,
    /// squared signed wavenumber per axis index
    sq: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

/// Shared plan for an `n^3` grid.
pub fn plan(n: usize) -> Arc<Fft3> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(Fft3::new(n)))
        .clone()
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let sq = (0..n)
            .map(|i| {
                let k = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
                (k * k) as f64
            })
            .collect();
        Fft3 {
            n,
            sq,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn wavenumber(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// `buf[c * n + a] = data[base + a * stride + c]`, in 8 x 8 tiles.
    fn gather(&self, data: &[Complex64], base: usize, stride: usize, buf: &mut [Complex64]) {
        let n = self.n;
        for a0 in (0..n).step_by(TILE) {
            for c0 in (0..n).step_by(TILE) {
                for a in a0..(a0 + TILE).min(n) {
                    let row = &data[base + a * stride..base + a * stride + n];
                    for c in c0..(c0 + TILE).min(n) {
                        buf[c * n + a] = row[c];
                    }
                }
            }
        }
    }

    /// Inverse of [`Fft3::gather`].
    fn scatter(&self, buf: &[Complex64], data: &mut [Complex64], base: usize, stride: usize) {
        let n = self.n;
        for a0 in (0..n).step_by(TILE) {
            for c0 in (0..n).step_by(TILE) {
                for a in a0..(a0 + TILE).min(n) {
                    let row = &mut data[base + a * stride..base + a * stride + n];
                    for c in c0..(c0 + TILE).min(n) {
                        row[c] = buf[c * n + a];
                    }
                }
            }
        }
    }

    fn lines(fft: &dyn Fft<f64>, buf: &mut [Complex64], n: usize, scratch: &mut [Complex64]) {
        for line in buf.chunks_exact_mut(n) {
            if !is_zero(line) {
                fft.process_with_scratch(line, scratch);
            }
        }
    }

    /// Transforms along the strided first axis, one `(i1, i3)` slab per `i2`.
    fn first_axis(&self, data: &mut [Complex64], fft: &dyn Fft<f64>, work: &mut Work) {
        let n = self.n;
        for i2 in 0..n {
            self.gather(data, i2 * n, n * n, &mut work.buf);
            Self::lines(fft, &mut work.buf, n, &mut work.scratch);
            self.scatter(&work.buf, data, i2 * n, n * n);
        }
    }

    /// Transforms along the second axis of one `(i2, i3)` plane.
    fn second_axis(&self, plane: &mut [Complex64], fft: &dyn Fft<f64>, work: &mut Work) {
        let n = self.n;
        self.gather(plane, 0, n, &mut work.buf);
        Self::lines(fft, &mut work.buf, n, &mut work.scratch);
        self.scatter(&work.buf, plane, 0, n);
    }

    fn work(&self, fft: &dyn Fft<f64>) -> Work {
        Work {
            buf: vec![Complex64::default(); self.n * self.n],
            scratch: vec![Complex64::default(); fft.get_inplace_scratch_len()],
        }
    }

    /// `out(k) = n^-3 sum_x in(x) e^{-i k x}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward_within(data, f64::INFINITY);
    }

    /// Forward transform that only produces wavevectors with `|k|^2 < r2`;
    /// every other output is set to zero.
    pub fn forward_within(&self, data: &mut [Complex64], r2: f64) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        let nn = n * n;
        let fft = self.forward.as_ref();
        let mut work = self.work(fft);
        let sq = |i: usize| {
            let k = self.wavenumber(i);
            (k * k) as f64
        };
        let scale = 1.0 / self.len() as f64;
        self.first_axis(data, fft, &mut work);
        for (i1, plane) in data.chunks_exact_mut(nn).enumerate() {
            let q1 = sq(i1);
            if q1 >= r2 {
                plane.fill(Complex64::default());
                continue;
            }
            self.second_axis(plane, fft, &mut work);
            for (i2, row) in plane.chunks_exact_mut(n).enumerate() {
                let q12 = q1 + sq(i2);
                if q12 >= r2 {
                    row.fill(Complex64::default());
                    continue;
                }
                fft.process_with_scratch(row, &mut work.scratch);
                for (i3, z) in row.iter_mut().enumerate() {
                    if q12 + sq(i3) < r2 {
                        *z *= scale;
                    } else {
                        *z = Complex64::default();
                    }
                }
            }
        }
    }

    /// `out(x) = sum_k in(k) e^{i k x}` (no normalisation).
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        let fft = self.inverse.as_ref();
        let mut work = self.work(fft);
        // zero lines and planes are skipped, so band-limited input is cheap
        for plane in data.chunks_exact_mut(n * n) {
            let mut any = false;
            for row in plane.chunks_exact_mut(n) {
                if !is_zero(row) {
                    fft.process_with_scratch(row, &mut work.scratch);
                    any = true;
                }
            }
            if any {
                self.second_axis(plane, fft, &mut work);
            }
        }
        self.first_axis(data, fft, &mut work);
    }

    /// Real fields from Hermitian spectra. Processes two spectra per complex
    /// transform.
    pub fn to_physical(&self, spectra: &[&[Complex64]]) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.len()]; spectra.len()];
        let mut refs: Vec<&mut [f64]> = out.iter_mut().map(|v| v.as_mut_slice()).collect();
        let mut z = vec![Complex64::default(); self.len()];
        self.to_physical_into(spectra, &mut refs, &mut z);
        out
    }

    /// As [`Fft3::to_physical`], writing into caller buffers; `z` is scratch of
    /// length `n^3`.
    pub fn to_physical_into(&self, spectra: &[&[Complex64]], out: &mut [&mut [f64]], z: &mut [Complex64]) {
        assert_eq!(spectra.len(), out.len());
        for (pair, dst) in spectra.chunks(2).zip(out.chunks_mut(2)) {
            match pair {
                [a, b] => {
                    for ((z, a), b) in z.iter_mut().zip(a.iter()).zip(b.iter()) {
                        *z = Complex64::new(a.re - b.im, a.im + b.re);
                    }
                }
                [a] => z.copy_from_slice(a),
                _ => unreachable!(),
            }
            self.inverse(z);
            for (x, c) in dst[0].iter_mut().zip(z.iter()) {
                *x = c.re;
            }
            if let Some(second) = dst.get_mut(1) {
                for (x, c) in second.iter_mut().zip(z.iter()) {
                    *x = c.im;
                }
            }
        }
    }

    /// Spectra of real fields; results are exactly Hermitian.
    pub fn to_spectral(&self, fields: &[&[f64]]) -> Vec<Vec<Complex64>> {
        self.to_spectral_within(fields, f64::INFINITY)
    }

    /// As [`Fft3::to_spectral`], keeping only wavevectors with `|k|^2 < r2`.
    pub fn to_spectral_within(&self, fields: &[&[f64]], r2: f64) -> Vec<Vec<Complex64>> {
        let mut out = vec![vec![Complex64::default(); self.len()]; fields.len()];
        let mut refs: Vec<&mut [Complex64]> = out.iter_mut().map(|v| v.as_mut_slice()).collect();
        let mut z = vec![Complex64::default(); self.len()];
        self.to_spectral_into(fields, r2, &mut refs, &mut z);
        out
    }

    /// As [`Fft3::to_spectral_within`], writing into caller buffers.
    pub fn to_spectral_into(
        &self,
        fields: &[&[f64]],
        r2: f64,
        out: &mut [&mut [Complex64]],
        z: &mut [Complex64],
    ) {
        assert_eq!(fields.len(), out.len());
        let n = self.n;
        let m = |i: usize| (n - i) % n;
        for (pair, dst) in fields.chunks(2).zip(out.chunks_mut(2)) {
            match pair {
                [a, b] => {
                    for ((z, &a), &b) in z.iter_mut().zip(a.iter()).zip(b.iter()) {
                        *z = Complex64::new(a, b);
                    }
                }
                [a] => {
                    for (z, &a) in z.iter_mut().zip(a.iter()) {
                        *z = Complex64::new(a, 0.0);
                    }
                }
                _ => unreachable!(),
            }
            self.forward_within(z, r2);
            let two = dst.len() == 2;
            for i1 in 0..n {
                for i2 in 0..n {
                    let row = (i1 * n + i2) * n;
                    // in-ball i3 are 0..=kmax and n-kmax..n
                    let rem = r2 - (self.sq[i1] + self.sq[i2]);
                    let kmax = if rem <= 0.0 {
                        None
                    } else {
                        (0..n / 2).take_while(|&k| ((k * k) as f64) < rem).last()
                    };
                    let Some(kmax) = kmax else {
                        for d in dst.iter_mut() {
                            d[row..row + n].fill(Complex64::default());
                        }
                        continue;
                    };
                    let mrow = (m(i1) * n + m(i2)) * n;
                    let lo = kmax + 1;
                    let hi = if kmax == n / 2 - 1 && rem > ((n / 2) * (n / 2)) as f64 {
                        n / 2
                    } else {
                        n - kmax
                    };
                    for d in dst.iter_mut() {
                        d[row + lo..row + hi.max(lo)].fill(Complex64::default());
                    }
                    for i3 in (0..lo).chain(hi.max(lo)..n) {
                        let idx = row + i3;
                        let zk = z[idx];
                        let zm = z[mrow + m(i3)].conj();
                        dst[0][idx] = (zk + zm) * 0.5;
                        if two {
                            // (zk - zm) / 2i
                            let d = (zk - zm) * 0.5;
                            dst[1][idx] = Complex64::new(d.im, -d.re);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn naive_dft(n: usize, x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); x.len()];
        for k1 in 0..n {
            for k2 in 0..n {
                for k3 in 0..n {
                    let mut acc = Complex64::default();
                    for a in 0..n {
                        for b in 0..n {
                            for c in 0..n {
                                let phase = sign * 2.0 * PI * ((k1 * a + k2 * b + k3 * c) as f64)
                                    / n as f64;
                                acc += x[(a * n + b) * n + c] * Complex64::from_polar(1.0, phase);
                            }
                        }
                    }
                    out[(k1 * n + k2) * n + k3] = acc;
                }
            }
        }
        out
    }

    fn sample(n: usize) -> Vec<Complex64> {
        (0..n * n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let n = 6;
        let x = sample(n);
        let plan = Fft3::new(n);
        let mut fwd = x.clone();
        plan.forward(&mut fwd);
        let reference = naive_dft(n, &x, -1.0);
        for (a, b) in fwd.iter().zip(&reference) {
            assert_abs_diff_eq!(a.re, b.re / (n * n * n) as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im / (n * n * n) as f64, epsilon = 1e-12);
        }
        let mut back = fwd;
        plan.inverse(&mut back);
        for (a, b) in back.iter().zip(&x) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn packed_real_pairs_round_trip() {
        let n = 8;
        let plan = Fft3::new(n);
        let len = n * n * n;
        let a: Vec<f64> = (0..len).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..len).map(|i| (i as f64 * 0.7).cos() + 0.2).collect();
        let c: Vec<f64> = (0..len).map(|i| ((i * i) % 13) as f64).collect();
        let spectra = plan.to_spectral(&[&a, &b, &c]);
        // each spectrum equals the single-field transform
        let mut single = b.iter().map(|&v| Complex64::new(v, 0.0)).collect::<Vec<_>>();
        plan.forward(&mut single);
        for (x, y) in spectra[1].iter().zip(&single) {
            assert_abs_diff_eq!(x.re, y.re, epsilon = 1e-13);
            assert_abs_diff_eq!(x.im, y.im, epsilon = 1e-13);
        }
        let refs: Vec<&[Complex64]> = spectra.iter().map(|s| s.as_slice()).collect();
        let back = plan.to_physical(&refs);
        for (orig, got) in [&a, &b, &c].iter().zip(&back) {
            for (x, y) in orig.iter().zip(got) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ball_restricted_forward_matches_masked_full() {
        let n = 12;
        let plan = Fft3::new(n);
        let x = sample(n);
        let mut full = x.clone();
        plan.forward(&mut full);
        let mut ball = x;
        let r2 = 16.0;
        plan.forward_within(&mut ball, r2);
        for (idx, (a, b)) in full.iter().zip(&ball).enumerate() {
            let k = [idx / (n * n), (idx / n) % n, idx % n].map(|i| plan.wavenumber(i));
            if ((k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64) < r2 {
                assert_eq!(a, b);
            } else {
                assert_eq!(*b, Complex64::default());
            }
        }
    }
}
