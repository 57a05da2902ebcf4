//! Self-check suite run by the `validate` command.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{
    apply_deformed_dirac, deformed_spectrum, effective_exp_band, ConformalFactor,
};
use crate::eigensolver::{cluster_eigenvalues, solve_gen_hermitian, KERNEL_TOL};
use crate::error::Result;
use crate::experiments::random_factor;
use crate::grid::{pow2_at_least, Grid3};
use crate::perturbation::{fd_check, EigenCluster};
use crate::spinor::{apply_j, clifford_mul, herm_inner, Spinor, Vector3};
use crate::torus::{
    assemble_flat_dirac, build_mode_set, closed_form_spectrum, ModeSet, SpinStructure, SpinorField,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

pub fn random_spinor(rng: &mut impl Rng) -> Spinor {
    Spinor::new(
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
    )
}

pub fn random_vector(rng: &mut impl Rng) -> Vector3 {
    Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
}

/// Field with independent uniform coefficients, normalized to unit `L²` norm.
pub fn random_unit_field(modes: ModeSet, rng: &mut impl Rng) -> SpinorField {
    let coeffs: Vec<Spinor> = (0..modes.len()).map(|_| random_spinor(rng)).collect();
    let f = SpinorField::from_coeffs(modes, coeffs).expect("length matches");
    let n = f.norm();
    f.scale(Complex64::new(1.0 / n, 0.0))
}

/// Largest deviation from the Clifford relation and the laws of `J` over
/// `samples` random inputs.
pub fn spinor_law_defect(samples: usize, rng: &mut impl Rng) -> f64 {
    let i = Complex64::new(0.0, 1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let (v, w) = (random_vector(rng), random_vector(rng));
        let (a, b) = (random_spinor(rng), random_spinor(rng));
        let anti = clifford_mul(&v, &clifford_mul(&w, &a)) + clifford_mul(&w, &clifford_mul(&v, &a));
        worst = worst.max(anti.max_abs_diff(&a.scale_re(-2.0 * v.dot(&w))));
        worst = worst.max(apply_j(&apply_j(&a)).max_abs_diff(&-a));
        worst = worst.max(apply_j(&(a * i)).max_abs_diff(&(apply_j(&a) * -i)));
        worst = worst.max(apply_j(&clifford_mul(&v, &a)).max_abs_diff(&clifford_mul(&v, &apply_j(&a))));
        worst = worst.max((herm_inner(&apply_j(&a), &apply_j(&b)) - herm_inner(&a, &b).conj()).norm());
    }
    worst
}

/// Compares the dense flat spectrum with the closed form below `lambda_max`;
/// returns the largest eigenvalue deviation, or a description of the first
/// multiplicity mismatch.
pub fn oracle_defect(delta: SpinStructure, order: usize, lambda_max: f64) -> Result<std::result::Result<f64, String>> {
    let modes = build_mode_set(order, delta)?;
    let a = assemble_flat_dirac(&modes);
    let b = faer::Mat::<Complex64>::identity(modes.dim(), modes.dim());
    let eig = solve_gen_hermitian(&a, &b)?;
    let lines = closed_form_spectrum(delta, lambda_max)?;
    let spans = cluster_eigenvalues(&eig.values, 1e-6);
    let tol = 1e-9;
    let mut worst: f64 = 0.0;
    let mut expected = Vec::new();
    for l in &lines {
        if l.lambda > 0.0 {
            expected.push((-l.lambda, l.mult_complex));
        }
        expected.push((l.lambda, l.mult_complex));
    }
    expected.sort_by(|x, y| x.0.total_cmp(&y.0));
    let got: Vec<_> = spans
        .iter()
        .filter(|s| s.lambda.abs() <= lambda_max + tol)
        .collect();
    if got.len() != expected.len() {
        return Ok(Err(format!(
            "{delta}: {} clusters, closed form has {}",
            got.len(),
            expected.len()
        )));
    }
    for (s, (l, m)) in got.iter().zip(&expected) {
        if s.mult_c != *m {
            return Ok(Err(format!("{delta}: multiplicity {} at {l}, expected {m}", s.mult_c)));
        }
        for v in &eig.values[s.range()] {
            worst = worst.max((v - l).abs());
        }
    }
    Ok(Ok(worst))
}

/// `e^{tf} φ` on the mode set of `φ` enlarged by the band of `e^{tf}`.
pub fn exp_weighted_field(f: &ConformalFactor, t: f64, phi: &SpinorField) -> Result<SpinorField> {
    let band = if f.is_constant() || t == 0.0 { 0 } else { effective_exp_band(f, t) };
    let target = phi.modes().enlarged(band);
    let grid = Grid3::new(pow2_at_least(2 * target.order() + 2))?;
    let vals = phi.periodic_values(&grid)?;
    let fv = f.evaluate_on_grid(&grid)?;
    let scaled = vals.map(|c| c.iter().zip(&fv).map(|(z, g)| z * (t * g).exp()).collect());
    Ok(SpinorField::from_periodic_values(target, &grid, scaled))
}

/// Relative max-norm defect of `D(e^{tf}φ) = e^{2tf} D^tφ` on a grid.
pub fn substitution_defect(f: &ConformalFactor, t: f64, phi: &SpinorField) -> Result<f64> {
    let lhs_field = exp_weighted_field(f, t, phi)?.apply_flat_dirac();
    let dt = apply_deformed_dirac(f, t, phi)?;
    let order = lhs_field.modes().order().max(dt.modes().order());
    let grid = Grid3::new(pow2_at_least(2 * order + 2))?;
    let lhs = lhs_field.evaluate_on_grid(&grid)?;
    let rhs = dt.evaluate_on_grid(&grid)?;
    let fv = f.evaluate_on_grid(&grid)?;
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for idx in 0..grid.len() {
        let r = rhs[idx].scale_re((2.0 * t * fv[idx]).exp());
        num = num.max(lhs[idx].max_abs_diff(&r));
        den = den.max(lhs[idx].norm());
    }
    Ok(num / den.max(1e-300))
}

fn check(name: &str, outcome: Result<(bool, String)>) -> CheckResult {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs every check at reduced size; deterministic in `seed`.
pub fn run_validation(seed: u64) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let d = spinor_law_defect(2000, &mut rng);
    checks.push(check("spinor_laws", Ok((d <= 1e-13, format!("max defect {d:.2e}")))));

    checks.push(check(
        "oracle_equality",
        (|| {
            let mut worst: f64 = 0.0;
            for delta in SpinStructure::all() {
                match oracle_defect(delta, 2, 1.5)? {
                    Ok(w) => worst = worst.max(w),
                    Err(msg) => return Ok((false, msg)),
                }
            }
            Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
        })(),
    ));

    checks.push(check(
        "substitution_identity",
        (|| {
            let mut worst: f64 = 0.0;
            for i in 0..4 {
                let delta = SpinStructure::new([(i % 2) as u8, 0, (i / 2) as u8])?;
                let modes = build_mode_set(2, delta)?;
                let f = random_factor(seed.wrapping_add(i), 1, 0.5);
                let t = rng.random_range(-0.5..0.5);
                let phi = random_unit_field(modes, &mut rng);
                worst = worst.max(substitution_defect(&f, t, &phi)?);
            }
            Ok((worst <= 1e-10, format!("max relative defect {worst:.2e}")))
        })(),
    ));

    let deformed: Vec<(SpinStructure, Result<crate::eigensolver::SpectrumResult>)> = (0..4u64)
        .map(|i| {
            let delta = SpinStructure::new([(i % 2) as u8, (i / 2) as u8, 0]).expect("valid");
            let f = random_factor(seed.wrapping_add(100 + i), 2, 0.3);
            let modes = build_mode_set(2, delta).expect("valid");
            (delta, deformed_spectrum(&f, 0.05, &modes))
        })
        .collect();

    checks.push(check(
        "kramers_pairing",
        (|| {
            let mut violations = 0;
            for (_, spec) in &deformed {
                let spec = spec.as_ref().map_err(|e| crate::error::DiracError::InvalidInput(e.to_string()))?;
                violations += spec.kramers_violations();
            }
            Ok((violations == 0, format!("{violations} odd clusters in {} runs", deformed.len())))
        })(),
    ));

    checks.push(check(
        "kernel_constancy",
        (|| {
            let mut bad = Vec::new();
            for (delta, spec) in &deformed {
                let spec = spec.as_ref().map_err(|e| crate::error::DiracError::InvalidInput(e.to_string()))?;
                let expect = if delta.is_trivial() { 2 } else { 0 };
                if spec.kernel_dim() != expect {
                    bad.push(format!("{delta}: {}", spec.kernel_dim()));
                }
            }
            Ok((bad.is_empty(), format!("kernel tolerance {KERNEL_TOL:.0e}; violations {bad:?}")))
        })(),
    ));

    checks.push(check(
        "first_order_rates",
        (|| {
            let modes = build_mode_set(2, SpinStructure::new([1, 0, 0])?)?;
            let cluster = EigenCluster::flat(modes, 2)?;
            let f = random_factor(seed.wrapping_add(200), 2, 0.5);
            let rep = fd_check(&cluster, &f, &[1e-2, 1e-3, 1e-4])?;
            let order = rep.fitted_order.unwrap_or(f64::NAN);
            Ok((order >= 1.9, format!("fitted order {order:.3}")))
        })(),
    ));

    ValidationReport {
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_weighting_matches_pointwise_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let modes = build_mode_set(2, SpinStructure::new([0, 1, 1]).unwrap()).unwrap();
        let phi = random_unit_field(modes, &mut rng);
        let f = ConformalFactor::cosine([1, 0, 1], 0.4);
        let w = exp_weighted_field(&f, 0.3, &phi).unwrap();
        for _ in 0..5 {
            let x = [rng.random_range(0.0..6.0), rng.random_range(0.0..6.0), rng.random_range(0.0..6.0)];
            let expect = phi.evaluate_at(x).scale_re((0.3 * f.evaluate_at(x)).exp());
            assert!(w.evaluate_at(x).max_abs_diff(&expect) < 1e-13);
        }
    }

    #[test]
    fn substitution_identity_holds_for_constant_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let modes = build_mode_set(2, SpinStructure::TRIVIAL).unwrap();
        let phi = random_unit_field(modes, &mut rng);
        let d = substitution_defect(&ConformalFactor::constant(0.7), 0.4, &phi).unwrap();
        assert!(d < 1e-14);
    }

    #[test]
    fn default_validation_passes() {
        let r = run_validation(0);
        assert!(r.passed, "{r:#?}");
        assert_eq!(r.checks.len(), 6);
    }
}
