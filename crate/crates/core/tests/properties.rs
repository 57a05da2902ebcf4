use dirac_spectra::conformal::{assemble_b, ConformalFactor};
use dirac_spectra::eigensolver::{cluster_eigenvalues, symmetry_defect, SpectrumArtifact};
use dirac_spectra::experiments::{random_factor, simplicity_certificate};
use dirac_spectra::perturbation::{perturbation_matrix, unitary_rotate, EigenCluster, PerturbationReport};
use dirac_spectra::spinor::{apply_j, clifford_mul, dirac_symbol, herm_inner, Spinor, Vector3};
use dirac_spectra::torus::{build_mode_set, SpinStructure, SpinorField};
use dirac_spectra::deformed_spectrum;
use faer::Mat;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn unit() -> impl Strategy<Value = f64> {
    -1.0..1.0f64
}

fn spinor() -> impl Strategy<Value = Spinor> {
    (unit(), unit(), unit(), unit()).prop_map(|(a, b, e, d)| Spinor::new(c(a, b), c(e, d)))
}

fn vector() -> impl Strategy<Value = Vector3> {
    (unit(), unit(), unit()).prop_map(|(a, b, e)| Vector3::new(a, b, e))
}

fn delta() -> impl Strategy<Value = SpinStructure> {
    (0..2u8, 0..2u8, 0..2u8).prop_map(|(a, b, e)| SpinStructure::new([a, b, e]).unwrap())
}

fn field(order: usize, delta: SpinStructure, seed: u64) -> SpinorField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let modes = build_mode_set(order, delta).unwrap();
    let coeffs = (0..modes.len())
        .map(|_| {
            Spinor::new(
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            )
        })
        .collect();
    SpinorField::from_coeffs(modes, coeffs).unwrap()
}

fn unitary(p: usize, seed: u64) -> Mat<Complex64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = Mat::<Complex64>::from_fn(p, p, |_, _| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    g.qr().compute_Q()
}

proptest! {
    #[test]
    fn clifford_relation(v in vector(), w in vector(), s in spinor()) {
        let lhs = clifford_mul(&v, &clifford_mul(&w, &s)) + clifford_mul(&w, &clifford_mul(&v, &s));
        prop_assert!(lhs.max_abs_diff(&s.scale_re(-2.0 * v.dot(&w))) < 1e-13);
    }

    #[test]
    fn quaternionic_structure_laws(v in vector(), a in spinor(), b in spinor(), re in unit(), im in unit()) {
        let z = c(re, im);
        prop_assert!(apply_j(&apply_j(&a)).max_abs_diff(&-a) < 1e-15);
        prop_assert!(apply_j(&(a * z)).max_abs_diff(&(apply_j(&a) * z.conj())) < 1e-14);
        prop_assert!(apply_j(&clifford_mul(&v, &a)).max_abs_diff(&clifford_mul(&v, &apply_j(&a))) < 1e-14);
        prop_assert!((herm_inner(&apply_j(&a), &apply_j(&b)) - herm_inner(&a, &b).conj()).norm() < 1e-14);
        // J v is orthogonal to v
        prop_assert!(herm_inner(&a, &apply_j(&a)).norm() < 1e-15);
    }

    #[test]
    fn symbol_squares_to_length(k in vector(), s in spinor()) {
        let m = dirac_symbol(&k);
        prop_assert!(m.apply(&m.apply(&s)).max_abs_diff(&s.scale_re(k.norm_sqr())) < 1e-14);
    }

    #[test]
    fn flat_dirac_is_symmetric_and_commutes_with_j(d in delta(), s1 in 0u64..1000, s2 in 0u64..1000) {
        let phi = field(2, d, s1);
        let psi = field(2, d, s2);
        let lhs = phi.apply_flat_dirac().l2_inner(&psi).unwrap();
        let rhs = phi.l2_inner(&psi.apply_flat_dirac()).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10);
        let a = phi.apply_j().apply_flat_dirac();
        let b = phi.apply_flat_dirac().apply_j();
        prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn factor_json_round_trip(seed in 0u64..10_000, d in 1usize..3, a in 0.01..2.0f64) {
        let f = random_factor(seed, d, a);
        let g = ConformalFactor::from_json(&f.to_json()).unwrap();
        prop_assert_eq!(f, g);
    }

    #[test]
    fn weight_matrix_is_hermitian(d in delta(), seed in 0u64..1000, t in -0.5..0.5f64) {
        let f = random_factor(seed, 2, 0.5);
        let modes = build_mode_set(1, d).unwrap();
        let b = assemble_b(&f, t, &modes).unwrap();
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                prop_assert!((b[(i, j)] - b[(j, i)].conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn clustering_is_idempotent(mut values in prop::collection::vec(-5.0..5.0f64, 1..40), tau in 1e-9..1e-1f64) {
        values.sort_by(f64::total_cmp);
        let spans = cluster_eigenvalues(&values, tau);
        let total: usize = spans.iter().map(|s| s.mult_c).sum();
        prop_assert_eq!(total, values.len());
        let means: Vec<f64> = spans.iter().map(|s| s.lambda).collect();
        let again = cluster_eigenvalues(&means, tau);
        prop_assert!(again.len() <= spans.len());
        let means2: Vec<f64> = again.iter().map(|s| s.lambda).collect();
        prop_assert_eq!(cluster_eigenvalues(&means2, tau).len(), again.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rates_are_linear_in_the_factor(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let modes = build_mode_set(2, SpinStructure::new([1, 1, 0]).unwrap()).unwrap();
        let cluster = EigenCluster::flat(modes, 2).unwrap();
        let f = random_factor(s1, 2, 1.0);
        let g = random_factor(s2, 1, 1.0);
        let combo = f.scaled(a).plus(&g.scaled(b));
        let pf = perturbation_matrix(&cluster, &f).unwrap().matrix();
        let pg = perturbation_matrix(&cluster, &g).unwrap().matrix();
        let pc = perturbation_matrix(&cluster, &combo).unwrap().matrix();
        for i in 0..pc.nrows() {
            for j in 0..pc.ncols() {
                prop_assert!((pc[(i, j)] - (pf[(i, j)] * a + pg[(i, j)] * b)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rates_are_basis_independent(seed in 0u64..1000, pos in prop::sample::select(vec![-2i64, -1, 1, 2, 3])) {
        let modes = build_mode_set(2, SpinStructure::TRIVIAL).unwrap();
        let cluster = EigenCluster::flat(modes, pos).unwrap();
        let f = random_factor(seed, 2, 1.0);
        let before = perturbation_matrix(&cluster, &f).unwrap();
        let rotated = unitary_rotate(&cluster, &unitary(cluster.p_complex(), seed)).unwrap();
        let after = perturbation_matrix(&rotated, &f).unwrap();
        for (x, y) in before.rates.iter().zip(&after.rates) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!(before.pairing_ok && after.pairing_ok);
    }

    #[test]
    fn constant_shift_moves_rates_uniformly(seed in 0u64..1000, shift in -1.0..1.0f64) {
        let modes = build_mode_set(2, SpinStructure::new([0, 0, 1]).unwrap()).unwrap();
        let cluster = EigenCluster::flat(modes, 2).unwrap();
        let f = random_factor(seed, 2, 1.0);
        let a = perturbation_matrix(&cluster, &f).unwrap();
        let b = perturbation_matrix(&cluster, &f.shifted(shift)).unwrap();
        for (x, y) in a.rates.iter().zip(&b.rates) {
            prop_assert!((y - x + cluster.lambda() * shift).abs() < 1e-12);
        }
        // gaps are unchanged
        let gaps = |r: &PerturbationReport| r.quaternionic_rates.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>();
        for (x, y) in gaps(&a).iter().zip(&gaps(&b)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn deformed_clusters_have_even_multiplicity(d in delta(), seed in 0u64..1000, t in -0.3..0.3f64) {
        let modes = build_mode_set(1, d).unwrap();
        let spec = deformed_spectrum(&random_factor(seed, 2, 0.5), t, &modes).unwrap();
        prop_assert_eq!(spec.kramers_violations(), 0);
        let art = spec.to_artifact();
        let back: SpectrumArtifact = serde_json::from_str(&serde_json::to_string(&art).unwrap()).unwrap();
        prop_assert_eq!(back, art);
    }

    #[test]
    fn even_factors_give_symmetric_spectra(d in delta(), m in (0i32..2, -1i32..2, -1i32..2), a in 0.1..1.0f64, t in -0.3..0.3f64) {
        // x -> -x maps the spectrum to its negative only when f is even
        prop_assume!(m != (0, 0, 0));
        let f = ConformalFactor::cosine([m.0, m.1, m.2], a);
        let modes = build_mode_set(1, d).unwrap();
        let spec = deformed_spectrum(&f, t, &modes).unwrap();
        prop_assert!(symmetry_defect(&spec.values) < 1e-10);
    }

    #[test]
    fn perturbation_report_round_trip(seed in 0u64..1000) {
        let modes = build_mode_set(2, SpinStructure::new([1, 0, 0]).unwrap()).unwrap();
        let cluster = EigenCluster::flat(modes, 2).unwrap();
        let rep = perturbation_matrix(&cluster, &random_factor(seed, 2, 0.7)).unwrap();
        let back: PerturbationReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        prop_assert_eq!(back, rep);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn simplicity_is_monotone_in_k(seed in 0u64..1000) {
        let d = SpinStructure::new([1, 0, 0]).unwrap();
        let f = random_factor(seed, 2, 0.3);
        let mut previous = true;
        for k in 1..=3 {
            let r = simplicity_certificate(d, &f, 0.05, k, 3).unwrap();
            prop_assert!(previous || !r.passed, "k = {} passes after a failure", k);
            previous = r.passed;
        }
    }
}
