use num_complex::Complex;
use proptest::prelude::*;

use pairspec::dispersion::{epsilon_bose_value, epsilon_fermi_value, lambda_full, uniform_grid};
use pairspec::eigen::{eigen, CMatrix};
use pairspec::pairfield::{phi_coefficient, Branch};
use pairspec::torus::FourierCoefficients;
use pairspec::variational::{build_matrix, doppler, eigenvalues, multiset_distance, BlockCouplings};
use pairspec::{RadialSpectrum, Statistics, TorusGeometry, Units, Vec3};

fn vec3() -> impl Strategy<Value = Vec3<f64>> {
    (-2.0..2.0, -2.0..2.0, -2.0..2.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn units() -> impl Strategy<Value = Units<f64>> {
    (0.3..3.0, 0.3..3.0).prop_map(|(h, m)| Units::new(h, m).unwrap())
}

proptest! {
    #[test]
    fn bose_identity(u in units(), p in 0.0..5.0, v in -3.0..3.0) {
        let e = epsilon_bose_value(&u, p, v);
        let kin = u.kinetic(p * p);
        let lhs = if e.unstable { -e.value * e.value } else { e.value * e.value } + v * v;
        let rhs = (kin + v).powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(v * v).max(1.0));
    }

    #[test]
    fn fermi_nonnegative(u in units(), p in 0.0..5.0, v in -3.0..3.0, v0 in -3.0..3.0) {
        prop_assert!(epsilon_fermi_value(&u, p, v, v0) >= 0.0);
        prop_assert_eq!(epsilon_fermi_value(&u, 0.0, v0, v0), 0.0);
    }

    #[test]
    fn drift_linearity(p in vec3(), v1 in vec3(), v2 in vec3(), level in -1.0..1.0) {
        let u = Units::default();
        let spec = RadialSpectrum::from_fn(uniform_grid(4.0, 81), |_| level).unwrap();
        for stat in [Statistics::Bose, Statistics::Fermi] {
            let a = lambda_full(&p, &v1, stat, &u, &spec).unwrap().value;
            let b = lambda_full(&p, &(v1 + v2), stat, &u, &spec).unwrap().value;
            prop_assert!((b - a + p.dot(&v2)).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn phi_solves_its_quadratic(b in -50.0f64..50.0, diff in -3.0..3.0, den in -3.0..3.0) {
        prop_assume!(den != 0.0);
        let branch = Branch { l_sq_minus_k2_sq: diff, denominator: den };
        for stat in [Statistics::Bose, Statistics::Fermi] {
            let phi = phi_coefficient(stat, b, &branch).value;
            let (lin, c) = match stat {
                Statistics::Bose => (Complex::new(b, 0.0), 0.25),
                Statistics::Fermi => (Complex::new(0.0, b), -0.25),
            };
            let d = phi * phi + lin * phi + c;
            prop_assert!(d.norm() <= 1e-13 * (1.0 + b.abs()));
            if b.abs() >= 1.0 {
                prop_assert!(phi.norm() <= 0.5 + 1e-15);
            }
        }
    }

    #[test]
    fn eigenvalues_sum_to_trace(entries in proptest::collection::vec(-1.0..1.0, 32)) {
        let mut m = CMatrix::zeros(4);
        for i in 0..16 {
            m.data[i] = Complex::new(entries[2 * i], entries[2 * i + 1]);
        }
        let e = eigen(&m).unwrap();
        let tr: Complex<f64> = (0..4).map(|i| m.data[5 * i]).sum();
        let s: Complex<f64> = e.values().into_iter().sum();
        prop_assert!((tr - s).norm() <= 1e-12 * m.frobenius().max(1.0));
        for pair in &e.pairs {
            prop_assert!(pair.residual <= 1e-12 * m.frobenius().max(1.0));
        }
    }

    #[test]
    fn doppler_shift_only(k1 in vec3(), k2 in vec3(), l in vec3(), v in -1.0..1.0) {
        let u = Units::default();
        let c = BlockCouplings { v0: v, v_2k2: 0.5 * v, v_l_minus_k2: 0.2 * v, v_l_plus_k2: 0.3 * v, v_l_plus_3k2: 0.1 * v };
        let phi = Complex::new(0.1, 0.0);
        let at_rest = build_matrix(Statistics::Bose, &u, l, Vec3::zero(), k2, c, phi, phi).unwrap();
        let moving = build_matrix(Statistics::Bose, &u, l, k1, k2, c, phi, phi).unwrap();
        let a = eigenvalues(&at_rest).unwrap().lambda;
        let shifted: Vec<Complex<f64>> = a.iter().map(|z| z + doppler(&u, &k1, &k2, &l)).collect();
        let b = eigenvalues(&moving).unwrap().lambda;
        let scale = moving.entries.max_abs().max(1.0);
        prop_assert!(multiset_distance(&shifted, &b) <= 1e-9 * scale);
    }

    #[test]
    fn coefficient_table_symmetric(n in 0i64..3, a in -2.0f64..2.0) {
        let t = FourierCoefficients::from_fn(&TorusGeometry::unit(), n, a.abs(), |i| a / (1 + i[0] * i[0] + i[1] * i[1] + i[2] * i[2]) as f64).unwrap();
        for (i, v) in t.entries() {
            prop_assert_eq!(t.get([-i[0], -i[1], -i[2]]).unwrap(), v);
        }
    }

    #[test]
    fn statistics_names_round_trip(fermi in any::<bool>()) {
        let s = if fermi { Statistics::Fermi } else { Statistics::Bose };
        prop_assert_eq!(s.name().parse::<Statistics>().unwrap(), s);
    }
}
