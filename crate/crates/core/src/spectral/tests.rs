use super::*;
use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn single_mode(lat: Lattice, xi: [i64; 3], v: [Complex64; 3]) -> SpectralField {
    let mut u = SpectralField::zeros(lat);
    u.set_coeff(lat.index_of(xi).unwrap(), v);
    let m = lat.index_of([-xi[0], -xi[1], -xi[2]]).unwrap();
    u.set_coeff(m, [v[0].conj(), v[1].conj(), v[2].conj()]);
    u
}

fn random_field(lat: Lattice, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = SpectralField::zeros(lat);
    lat.for_each_mode(|idx, _, s| {
        if s > 0 && lat.within_dealias(s) {
            let mut v = [Complex64::default(); 3];
            for z in v.iter_mut() {
                *z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            raw.set_coeff(idx, v);
        }
    });
    let mut sym = SpectralField::zeros(lat);
    for idx in 0..lat.len() {
        let a = raw.coeff(idx);
        let b = raw.coeff(lat.mirror(idx));
        sym.set_coeff(
            idx,
            [
                (a[0] + b[0].conj()) * 0.5,
                (a[1] + b[1].conj()) * 0.5,
                (a[2] + b[2].conj()) * 0.5,
            ],
        );
    }
    sym.leray_project()
}

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[test]
fn lattice_geometry() {
    let lat = Lattice::new(8).unwrap();
    assert_eq!(lat.len(), 512);
    assert_eq!(lat.wavenumber(3), 3);
    assert_eq!(lat.wavenumber(4), -4);
    assert_eq!(lat.wavenumber(7), -1);
    assert_eq!(lat.derivative_wavenumber(4), 0.0);
    let idx = lat.index_of([-1, 2, 3]).unwrap();
    assert_eq!(lat.wavevector(idx), [-1, 2, 3]);
    assert_eq!(lat.wavevector(lat.mirror(idx)), [1, -2, -3]);
    assert!(lat.index_of([5, 0, 0]).is_err());
    assert!(Lattice::new(7).is_err());
    assert!(Lattice::new(6).is_err());
    assert!(Lattice::new(2048).is_err());
    assert!(lat.within_dealias(7));
    assert!(!Lattice::new(12).unwrap().within_dealias(16));
}

#[test]
fn single_mode_masks() {
    let lat = Lattice::new(16).unwrap();
    let u = single_mode(lat, [1, 0, 0], [ZERO, ONE, ZERO]);
    assert!(u.apply_mask(BandMask::High(2.0)).unwrap().is_zero());
    assert!(u.apply_mask(BandMask::Dyadic(0)).unwrap().is_zero());
    assert_eq!(u.apply_mask(BandMask::Dyadic(1)).unwrap(), u);
    assert_eq!(u.apply_mask(BandMask::Ball(2.0)).unwrap(), u);
    assert!(u.apply_mask(BandMask::Annulus(2.0, 1.0)).is_err());
}

#[test]
fn masks_are_complementary_bit_for_bit() {
    let lat = Lattice::new(16).unwrap();
    let u = random_field(lat, 7);
    for k in [0.0, 1.0, 2.0, 2.5, 4.0, 5.3] {
        let lo = u.apply_mask(BandMask::Ball(k)).unwrap();
        let hi = u.apply_mask(BandMask::High(k)).unwrap();
        let sum = lo.axpby(1.0, &hi, 1.0).unwrap();
        assert_eq!(sum, u);
        assert_eq!(lo.inner_product(&hi).unwrap(), 0.0);
    }
}

#[test]
fn shell_decomposition_is_parseval() {
    let lat = Lattice::new(16).unwrap();
    let u = random_field(lat, 3);
    let profile = u.decompose_shells();
    let total: f64 = profile.entries().map(|(_, s)| s * s).sum();
    assert_relative_eq!(total, u.norm_l2().powi(2), max_relative = 1e-13);
    for (j, sigma) in profile.entries() {
        let shell = u.apply_mask(BandMask::Dyadic(j as i32)).unwrap();
        assert_relative_eq!(shell.norm_l2(), sigma, max_relative = 1e-13);
    }
}

#[test]
fn leray_projection() {
    let lat = Lattice::new(8).unwrap();
    let parallel = single_mode(lat, [1, 2, 0], [ONE, ONE * 2.0, ZERO]);
    assert!(parallel.leray_project().norm_l2() < 1e-15);
    let orth = single_mode(lat, [1, 2, 0], [ONE * 2.0, -ONE, ONE]);
    assert_eq!(orth.leray_project(), orth);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut u = SpectralField::zeros(lat);
    let mut w = SpectralField::zeros(lat);
    for idx in 0..lat.len() {
        let mut v = [ZERO; 3];
        let mut x = [ZERO; 3];
        for c in 0..3 {
            v[c] = Complex64::new(rng.gen(), rng.gen());
            x[c] = Complex64::new(rng.gen(), rng.gen());
        }
        u.set_coeff(idx, v);
        w.set_coeff(idx, x);
    }
    let pu = u.leray_project();
    let ppu = pu.leray_project();
    assert!(ppu.axpby(1.0, &pu, -1.0).unwrap().norm_l2() <= 1e-13 * pu.norm_l2());
    assert!(pu.divergence_indicator() < 1e-14);
    let lhs = pu.inner_product(&w).unwrap();
    let rhs = u.inner_product(&w.leray_project()).unwrap();
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn sobolev_norm_examples() {
    let lat = Lattice::new(8).unwrap();
    let mut u = SpectralField::zeros(lat);
    u.set_coeff(lat.index_of([1, 0, 0]).unwrap(), [ZERO, ONE, ZERO]);
    assert_relative_eq!(u.norm_hs(1.0, true), 1.0, max_relative = 1e-15);
    assert_relative_eq!(u.norm_hs(1.0, false), 2f64.sqrt(), max_relative = 1e-15);
    assert_relative_eq!(u.norm_hs(0.0, true), u.norm_l2(), max_relative = 1e-15);
}

#[test]
fn norms_match_physical_quadrature() {
    let lat = Lattice::new(16).unwrap();
    let u = random_field(lat, 5);
    let phys = u.to_physical();
    let n3 = lat.len() as f64;
    let l2: f64 = phys.iter().flatten().map(|v| v * v).sum::<f64>() / n3;
    assert_relative_eq!(u.norm_l2().powi(2), l2, max_relative = 1e-12);
    let grad = u.gradient_physical();
    let g2: f64 = grad.iter().flatten().map(|v| v * v).sum::<f64>() / n3;
    assert_relative_eq!(u.grad_norm_sq(), g2, max_relative = 1e-12);
    let back = SpectralField::from_physical(lat, [&phys[0], &phys[1], &phys[2]]).unwrap();
    assert!(back.axpby(1.0, &u, -1.0).unwrap().norm_l2() < 1e-13 * u.norm_l2());
}

#[test]
fn sup_norms_of_sine() {
    // u = (sin x1, 0, 0): |u|_inf = 1 and |grad u|_inf = 1, both attained on the grid
    let lat = Lattice::new(16).unwrap();
    let u = single_mode(lat, [1, 0, 0], [Complex64::new(0.0, -0.5), ZERO, ZERO]);
    let (s, g) = u.sup_norms();
    assert_relative_eq!(s, 1.0, max_relative = 1e-14);
    assert_relative_eq!(g, 1.0, max_relative = 1e-14);
    assert_eq!(SpectralField::zeros(lat).sup_norms(), (0.0, 0.0));
}

#[test]
fn convection_of_shear_flow_vanishes() {
    let lat = Lattice::new(16).unwrap();
    let u = single_mode(lat, [1, 0, 0], [ZERO, Complex64::new(0.75, 0.0), ZERO]);
    let c = SpectralField::convection(&u, &u).unwrap();
    assert!(c.norm_l2() < 1e-15);
}

#[test]
fn convection_cancellation_and_trilinear_consistency() {
    let lat = Lattice::new(16).unwrap();
    let u = random_field(lat, 1);
    let w = random_field(lat, 2).apply_mask(BandMask::High(2.0)).unwrap();
    let conv = SpectralField::convection(&u, &w).unwrap();
    let scale = u.norm_l2() * w.norm_l2() * w.grad_norm_sq().sqrt();
    assert!(conv.inner_product(&w).unwrap().abs() <= 1e-12 * scale);
    let z = random_field(lat, 9);
    let spectral = conv.inner_product(&z).unwrap();
    let physical = trilinear_physical(&u.to_physical(), &w.gradient_physical(), &z.to_physical());
    assert!((spectral - physical).abs() <= 1e-12 * scale.max(spectral.abs()));
    let mut aliased = SpectralField::zeros(lat);
    aliased.set_coeff(lat.index_of([6, 0, 0]).unwrap(), [ZERO, ONE, ZERO]);
    assert!(SpectralField::convection(&aliased, &u).is_err());
}

#[test]
fn inner_product_properties() {
    let lat = Lattice::new(8).unwrap();
    let a = single_mode(lat, [1, 0, 0], [ZERO, ONE, ZERO]);
    let b = single_mode(lat, [0, 1, 0], [ONE, ZERO, ZERO]);
    assert_eq!(a.inner_product(&b).unwrap(), 0.0);
    let u = random_field(lat, 21);
    let v = random_field(lat, 22);
    let lhs = u.axpby(2.0, &v, -3.0).unwrap().inner_product(&a).unwrap();
    let rhs = 2.0 * u.inner_product(&a).unwrap() - 3.0 * v.inner_product(&a).unwrap();
    assert!((lhs - rhs).abs() < 1e-13);
    let other = SpectralField::zeros(Lattice::new(16).unwrap());
    assert!(matches!(u.inner_product(&other), Err(Error::LatticeMismatch { .. })));
}

#[test]
fn snapshot_round_trip_and_corruption() {
    let lat = Lattice::new(8).unwrap();
    let snap = Snapshot {
        nu: 0.05,
        time: 0.25,
        field: random_field(lat, 4),
    };
    let mut bytes = Vec::new();
    snap.write_to(&mut bytes).unwrap();
    assert_eq!(bytes.len(), 4 + 4 + 16 + 48 * lat.len());
    assert_eq!(Snapshot::read_from(&bytes[..]).unwrap(), snap);

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Snapshot::read_from(&bad[..]), Err(Error::Snapshot(_))));
    assert!(matches!(Snapshot::read_from(&bytes[..bytes.len() - 1]), Err(Error::Snapshot(_))));
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(Snapshot::read_from(&long[..]), Err(Error::Snapshot(_))));
    let mut nan = bytes.clone();
    nan[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(Snapshot::read_from(&nan[..]), Err(Error::Snapshot(_))));
    let mut odd = bytes;
    odd[4..8].copy_from_slice(&7u32.to_le_bytes());
    assert!(matches!(Snapshot::read_from(&odd[..]), Err(Error::Snapshot(_))));
}
