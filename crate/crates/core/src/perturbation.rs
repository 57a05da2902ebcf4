//! First-order perturbation of Dirac eigenvalues under `g^t = e^{2tf} g`.
//!
//! For a normalized eigenspinor the rate is `λ' = -λ ∫ f |φ|² dμ`. For a
//! degenerate eigenspace with orthonormal basis `φ_1, …, φ_p` the rates of the
//! analytic branches are the eigenvalues of the Hermitian matrix
//! `P_ij = -λ ∫ f <φ_j, φ_i> dμ`; its diagonal is the single-vector formula.
//! All integrals are evaluated as finite Fourier convolution sums.

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conformal::{deformed_spectrum, in_accepted_range, ConformalFactor};
use crate::eigensolver::{cluster_eigenvalues, ClusterSpan, SpectrumResult};
use crate::error::{DiracError, Result};
use crate::grid::Grid3;
use crate::spinor::{dirac_symbol, herm_inner, Spinor};
use crate::torus::{flat_eigenvalues, ModeSet, SpinorField};

const NORM_TOL: f64 = 1e-8;
const GRAM_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-12;
/// Relative gap for grouping rates into Kramers pairs.
pub const PAIRING_TOL: f64 = 1e-8;
/// Relative gap for identifying a flat eigenvalue cluster.
pub const FLAT_CLUSTER_TOL: f64 = 1e-6;

/// An orthonormal basis of one eigenspace of the flat operator.
#[derive(Clone, Debug)]
pub struct EigenCluster {
    lambda: f64,
    vectors: Vec<SpinorField>,
    j_closed: bool,
}

impl EigenCluster {
    /// Validates orthonormality (Gram matrix within 1e-10 of the identity) and
    /// eigen-residuals `|Dφ - λφ| ≤ 1e-9 max(1, |λ|)`, and detects whether the
    /// span is closed under `J`.
    pub fn new(lambda: f64, vectors: Vec<SpinorField>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(DiracError::Precondition("empty eigen cluster".into()));
        };
        let modes = *first.modes();
        if vectors.iter().any(|v| *v.modes() != modes) {
            return Err(DiracError::ModeSetMismatch(
                "cluster vectors use different mode sets".into(),
            ));
        }
        for (i, a) in vectors.iter().enumerate() {
            for (j, b) in vectors.iter().enumerate() {
                let g = a.l2_inner(b)?;
                let e = if i == j { 1.0 } else { 0.0 };
                if (g - Complex64::new(e, 0.0)).norm() > GRAM_TOL {
                    return Err(DiracError::Precondition(format!(
                        "cluster basis is not orthonormal: Gram[{i}][{j}] = {g}"
                    )));
                }
            }
        }
        let bound = 1e-9 * lambda.abs().max(1.0);
        for (i, v) in vectors.iter().enumerate() {
            let r = v
                .apply_flat_dirac()
                .add_scaled(Complex64::new(-lambda, 0.0), v)?
                .norm();
            if r > bound {
                return Err(DiracError::Precondition(format!(
                    "vector {i} has eigen-residual {r:.3e} for lambda = {lambda}"
                )));
            }
        }
        let j_closed = span_contains(&vectors, vectors.iter().map(SpinorField::apply_j))?;
        Ok(EigenCluster {
            lambda,
            vectors,
            j_closed,
        })
    }

    /// The cluster `span` of an undeformed spectrum.
    pub fn from_spectrum(spectrum: &SpectrumResult, span: &ClusterSpan) -> Result<Self> {
        if spectrum.meta.t != 0.0 {
            return Err(DiracError::Precondition(
                "eigen clusters are taken from the undeformed operator (t = 0)".into(),
            ));
        }
        Self::new(span.lambda, spectrum.cluster_fields(span))
    }

    /// Eigenspace of the flat operator by signed position: `k > 0` is the
    /// k-th distinct positive eigenvalue, `k < 0` the |k|-th negative one,
    /// `k = 0` the kernel. The basis is built mode by mode from the symbol.
    pub fn flat(modes: ModeSet, position: i64) -> Result<Self> {
        let values = flat_eigenvalues(&modes);
        let spans = cluster_eigenvalues(&values, FLAT_CLUSTER_TOL);
        let span = match position {
            0 => spans.iter().find(|s| s.lambda.abs() < 1e-12),
            k if k > 0 => spans.iter().filter(|s| s.lambda > 1e-12).nth(k as usize - 1),
            k => spans
                .iter()
                .rev()
                .filter(|s| s.lambda < -1e-12)
                .nth((-k) as usize - 1),
        }
        .ok_or_else(|| {
            DiracError::InvalidInput(format!("no flat eigenvalue cluster at position {position}"))
        })?;
        let lambda = if span.lambda.abs() < 1e-12 { 0.0 } else { span.lambda };
        let mut vectors = Vec::new();
        for i in 0..modes.len() {
            let kappa = modes.mode(i);
            let k = modes.lattice_point(i);
            if kappa.norm_sqr() == 0.0 {
                if lambda == 0.0 {
                    for u in [Spinor::from_re(1.0, 0.0), Spinor::from_re(0.0, 1.0)] {
                        vectors.push(SpinorField::single_mode(modes, k, u)?);
                    }
                }
                continue;
            }
            if (kappa.norm() - lambda.abs()).abs() < 1e-12 * lambda.abs().max(1.0) {
                let u = dirac_symbol(&kappa).hermitian_eigenvector(lambda);
                vectors.push(SpinorField::single_mode(modes, k, u)?);
            }
        }
        Self::new(lambda, vectors)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn vectors(&self) -> &[SpinorField] {
        &self.vectors
    }

    pub fn modes(&self) -> &ModeSet {
        self.vectors[0].modes()
    }

    pub fn p_complex(&self) -> usize {
        self.vectors.len()
    }

    pub fn p_quaternionic(&self) -> usize {
        self.vectors.len() / 2
    }

    pub fn j_closed(&self) -> bool {
        self.j_closed
    }

    /// Index of the first eigenvalue of this cluster in the sorted flat
    /// spectrum of its mode set.
    pub fn offset(&self) -> usize {
        let tol = FLAT_CLUSTER_TOL * self.lambda.abs().max(1.0);
        flat_eigenvalues(self.modes())
            .iter()
            .filter(|&&v| v < self.lambda - tol)
            .count()
    }
}

/// Whether every field of `candidates` lies in the span of the orthonormal
/// `basis` up to 1e-8.
fn span_contains(
    basis: &[SpinorField],
    candidates: impl Iterator<Item = SpinorField>,
) -> Result<bool> {
    for c in candidates {
        let mut rest = c.clone();
        for b in basis {
            let coef = rest.l2_inner(b)?;
            rest = rest.add_scaled(-coef, b)?;
        }
        if rest.norm() > 1e-8 * c.norm().max(1e-300) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Multiplication by `f`, truncated back to the mode set of `phi`.
pub fn multiply_by_factor(f: &ConformalFactor, phi: &SpinorField) -> SpinorField {
    let modes = *phi.modes();
    let terms: Vec<([i32; 3], Complex64)> = f.nonzero().collect();
    let coeffs = modes
        .lattice_points()
        .map(|k| {
            let mut acc = Spinor::ZERO;
            for (m, c) in &terms {
                let src = [k[0] - m[0], k[1] - m[1], k[2] - m[2]];
                if let Some(j) = modes.index_of(src) {
                    acc += phi.coeffs()[j].scale(*c);
                }
            }
            acc
        })
        .collect();
    SpinorField::from_coeffs(modes, coeffs).expect("coefficient count matches")
}

/// `∫ f <φ, ψ> dμ` for fields on the same mode set.
pub fn weighted_inner(f: &ConformalFactor, phi: &SpinorField, psi: &SpinorField) -> Result<Complex64> {
    multiply_by_factor(f, phi).l2_inner(psi)
}

/// Single-branch rate `λ' = -λ ∫ f |φ|² dμ` for a unit-norm `φ`.
pub fn rate_single(lambda: f64, phi: &SpinorField, f: &ConformalFactor) -> Result<f64> {
    let n2 = phi.norm_sqr();
    if (n2 - 1.0).abs() > NORM_TOL {
        return Err(DiracError::NotNormalized(n2));
    }
    Ok(-lambda * weighted_inner(f, phi, phi)?.re)
}

/// First-order data for one cluster and one conformal factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub lambda: f64,
    pub f_ref: String,
    /// `P` as rows of `[re, im]` pairs.
    pub matrix: Vec<Vec<Complex64>>,
    /// Eigenvalues of `P`, ascending.
    pub rates: Vec<f64>,
    /// Rates with Kramers pairs merged (equal to `rates` if the basis is not
    /// `J`-closed).
    pub quaternionic_rates: Vec<f64>,
    /// Smallest gap between consecutive quaternionic rates.
    pub min_gap: Option<f64>,
    pub j_closed: bool,
    /// Every rate paired with an equal partner (only meaningful when `j_closed`).
    pub pairing_ok: bool,
}

impl PerturbationReport {
    pub fn matrix(&self) -> Mat<Complex64> {
        let n = self.matrix.len();
        Mat::from_fn(n, n, |i, j| self.matrix[i][j])
    }

    /// Quaternionic rates grouped into values that differ by more than
    /// `tol`, with their multiplicities.
    pub fn distinct_quaternionic_rates(&self, tol: f64) -> Vec<(f64, usize)> {
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for &r in &self.quaternionic_rates {
            match groups.last_mut() {
                Some((v, n)) if (r - *v / *n as f64).abs() <= tol => {
                    *v += r;
                    *n += 1;
                }
                _ => groups.push((r, 1)),
            }
        }
        groups.into_iter().map(|(v, n)| (v / n as f64, n)).collect()
    }
}

/// The Hermitian matrix `P_ij = -λ ∫ f <φ_j, φ_i> dμ` and its eigenvalues.
pub fn perturbation_matrix(cluster: &EigenCluster, f: &ConformalFactor) -> Result<PerturbationReport> {
    let p = cluster.p_complex();
    let lambda = cluster.lambda();
    let products: Vec<SpinorField> = cluster
        .vectors()
        .iter()
        .map(|v| multiply_by_factor(f, v))
        .collect();
    let mut m = Mat::<Complex64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            m[(i, j)] = products[j].l2_inner(&cluster.vectors()[i])? * (-lambda);
        }
    }
    let mut herm_err: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            herm_err = herm_err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    if herm_err > 1e-12 * lambda.abs().max(1.0) * f.sup_norm().max(1.0) {
        return Err(DiracError::Precondition(format!(
            "perturbation matrix is not Hermitian (deviation {herm_err:.3e})"
        )));
    }
    let rates = hermitian_eigenvalues(&m)?;
    let scale = rates.iter().fold(1.0f64, |a, r| a.max(r.abs()));
    let (quaternionic_rates, pairing_ok) = if cluster.j_closed() {
        pair_rates(&rates, PAIRING_TOL * scale)
    } else {
        (rates.clone(), true)
    };
    let min_gap = quaternionic_rates
        .windows(2)
        .map(|w| w[1] - w[0])
        .reduce(f64::min);
    Ok(PerturbationReport {
        lambda,
        f_ref: f.describe(),
        matrix: (0..p).map(|i| (0..p).map(|j| m[(i, j)]).collect()).collect(),
        rates,
        quaternionic_rates,
        min_gap,
        j_closed: cluster.j_closed(),
        pairing_ok,
    })
}

pub(crate) fn hermitian_eigenvalues(m: &Mat<Complex64>) -> Result<Vec<f64>> {
    let mut h = m.clone();
    let n = h.nrows();
    for i in 0..n {
        h[(i, i)] = Complex64::new(h[(i, i)].re, 0.0);
        for j in 0..i {
            let avg = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            h[(i, j)] = avg;
            h[(j, i)] = avg.conj();
        }
    }
    let mut values = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| DiracError::NoConvergence)?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Merges sorted rates pairwise; reports whether every pair agreed to `tol`.
fn pair_rates(rates: &[f64], tol: f64) -> (Vec<f64>, bool) {
    let mut ok = rates.len().is_multiple_of(2);
    let merged = rates
        .chunks(2)
        .map(|c| {
            if c.len() == 2 {
                ok &= (c[1] - c[0]).abs() <= tol;
                (c[0] + c[1]) / 2.0
            } else {
                c[0]
            }
        })
        .collect();
    (merged, ok)
}

/// Replaces the basis by `φ̄_i = Σ_j U_ij φ_j` for a unitary `U`.
pub fn unitary_rotate(cluster: &EigenCluster, u: &Mat<Complex64>) -> Result<EigenCluster> {
    let p = cluster.p_complex();
    if u.nrows() != p || u.ncols() != p {
        return Err(DiracError::InvalidInput(format!(
            "rotation is {}x{}, cluster has dimension {p}",
            u.nrows(),
            u.ncols()
        )));
    }
    let uu = u * u.adjoint();
    let mut dev: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let e = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((uu[(i, j)] - Complex64::new(e, 0.0)).norm());
        }
    }
    if dev > UNITARY_TOL {
        return Err(DiracError::NotUnitary(dev));
    }
    let modes = *cluster.modes();
    let vectors = (0..p)
        .map(|i| {
            let mut acc = SpinorField::zeros(modes);
            for (j, v) in cluster.vectors().iter().enumerate() {
                acc = acc.add_scaled(u[(i, j)], v)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenCluster {
        lambda: cluster.lambda,
        vectors,
        j_closed: cluster.j_closed,
    })
}

/// `α = (φ₁ + i^p J^q φ₂)/√2`, `β = (φ₁ - i^p J^q φ₂)/√2`.
///
/// Requires unit norms and `(φ₁, φ₂) = (φ₁, Jφ₂) = 0` to 1e-8, i.e.
/// quaternionic orthonormality of the pair.
pub fn alpha_beta(
    phi1: &SpinorField,
    phi2: &SpinorField,
    p: u8,
    q: u8,
) -> Result<(SpinorField, SpinorField)> {
    if p > 1 || q > 1 {
        return Err(DiracError::InvalidInput(format!(
            "p and q must be 0 or 1, got ({p}, {q})"
        )));
    }
    for (name, phi) in [("phi1", phi1), ("phi2", phi2)] {
        let n2 = phi.norm_sqr();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(DiracError::Precondition(format!("{name} has |.|^2 = {n2}")));
        }
    }
    let j2 = phi2.apply_j();
    let c1 = phi1.l2_inner(phi2)?;
    let c2 = phi1.l2_inner(&j2)?;
    if c1.norm() > NORM_TOL || c2.norm() > NORM_TOL {
        return Err(DiracError::Precondition(format!(
            "pair is not quaternionically orthonormal: (phi1, phi2) = {c1}, (phi1, J phi2) = {c2}"
        )));
    }
    let mut partner = if q == 1 { j2 } else { phi2.clone() };
    if p == 1 {
        partner = partner.scale(Complex64::new(0.0, 1.0));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let alpha = phi1.add_scaled(Complex64::new(1.0, 0.0), &partner)?.scale(Complex64::new(s, 0.0));
    let beta = phi1.add_scaled(Complex64::new(-1.0, 0.0), &partner)?.scale(Complex64::new(s, 0.0));
    Ok((alpha, beta))
}

/// Pointwise `h₁ = <φ₁, φ₂>` and `h₂ = <φ₁, Jφ₂>` on a grid.
#[derive(Clone, Debug)]
pub struct GramFunctions {
    pub h1: Vec<Complex64>,
    pub h2: Vec<Complex64>,
    pub sup_h1: f64,
    pub sup_h2: f64,
}

pub fn pointwise_gram(phi1: &SpinorField, phi2: &SpinorField, grid: &Grid3) -> Result<GramFunctions> {
    if phi1.modes() != phi2.modes() {
        return Err(DiracError::ModeSetMismatch("fields use different mode sets".into()));
    }
    let need = 2 * phi1.modes().min_sampling_grid();
    if grid.size() < need {
        return Err(DiracError::GridTooSmall {
            got: grid.size(),
            need,
        });
    }
    let a = phi1.evaluate_on_grid(grid)?;
    let b = phi2.evaluate_on_grid(grid)?;
    let jb = phi2.apply_j().evaluate_on_grid(grid)?;
    let h1: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| herm_inner(x, y)).collect();
    let h2: Vec<Complex64> = a.iter().zip(&jb).map(|(x, y)| herm_inner(x, y)).collect();
    let sup = |h: &[Complex64]| h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(GramFunctions {
        sup_h1: sup(&h1),
        sup_h2: sup(&h2),
        h1,
        h2,
    })
}

/// Finite-difference comparison of deformed eigenvalues with first-order
/// predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub lambda: f64,
    pub rates: Vec<f64>,
    pub rows: Vec<FdRow>,
    /// Observed order between consecutive `t` values.
    pub pairwise_orders: Vec<f64>,
    /// Least-squares slope of `log mismatch` against `log |t|`.
    pub fitted_order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdRow {
    pub t: f64,
    /// `max_i |λ_i(t) - (λ + t r_i)|` over sorted sub-eigenvalues and rates.
    pub mismatch: f64,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Solves the deformed problem at each `t` and pairs the cluster's sorted
/// sub-eigenvalues with the sorted first-order predictions `λ + t·rate`.
pub fn fd_check(cluster: &EigenCluster, f: &ConformalFactor, t_list: &[f64]) -> Result<FdReport> {
    if t_list.is_empty() {
        return Err(DiracError::InvalidInput("empty t list".into()));
    }
    if t_list.windows(2).any(|w| w[1].abs() >= w[0].abs()) {
        return Err(DiracError::InvalidInput(
            "t values must be strictly decreasing in magnitude".into(),
        ));
    }
    if let Some(t) = t_list.iter().find(|&&t| !in_accepted_range(f, t) || t == 0.0) {
        return Err(DiracError::InvalidInput(format!(
            "t = {t} is zero or outside the accepted range"
        )));
    }
    let report = perturbation_matrix(cluster, f)?;
    let lambda = cluster.lambda();
    let p = cluster.p_complex();
    let offset = cluster.offset();
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let spec = deformed_spectrum(f, t, cluster.modes())?;
        let observed = spec.values[offset..offset + p].to_vec();
        let mut predicted: Vec<f64> = report.rates.iter().map(|r| lambda + t * r).collect();
        predicted.sort_by(f64::total_cmp);
        let mismatch = observed
            .iter()
            .zip(&predicted)
            .map(|(o, q)| (o - q).abs())
            .fold(0.0, f64::max);
        let below = offset
            .checked_sub(1)
            .map(|i| observed[0] - spec.values[i])
            .unwrap_or(f64::INFINITY);
        let above = spec
            .values
            .get(offset + p)
            .map(|v| v - observed[p - 1])
            .unwrap_or(f64::INFINITY);
        let gap = below.min(above);
        if gap < mismatch {
            return Err(DiracError::ClusterNotIsolated {
                lambda,
                t,
                gap,
                mismatch,
            });
        }
        rows.push(FdRow {
            t,
            mismatch,
            observed,
            predicted,
        });
    }
    let pairwise_orders = rows
        .windows(2)
        .map(|w| (w[0].mismatch / w[1].mismatch).ln() / (w[0].t.abs() / w[1].t.abs()).ln())
        .collect();
    let fitted_order = fit_order(&rows);
    Ok(FdReport {
        lambda,
        rates: report.rates,
        rows,
        pairwise_orders,
        fitted_order,
    })
}

fn fit_order(rows: &[FdRow]) -> Option<f64> {
    if rows.len() < 2 || rows.iter().any(|r| r.mismatch <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.t.abs().ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mismatch.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{build_mode_set, SpinStructure};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trivial(n: usize) -> ModeSet {
        build_mode_set(n, SpinStructure::TRIVIAL).unwrap()
    }

    fn shifted(n: usize) -> ModeSet {
        build_mode_set(n, SpinStructure::new([1, 0, 0]).unwrap()).unwrap()
    }

    fn random_unitary(p: usize, rng: &mut impl Rng) -> Mat<Complex64> {
        let g = Mat::<Complex64>::from_fn(p, p, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        g.qr().compute_Q()
    }

    #[test]
    fn flat_cluster_dimensions() {
        let c = EigenCluster::flat(trivial(2), 1).unwrap();
        assert_eq!((c.p_complex(), c.p_quaternionic()), (6, 3));
        assert!(c.j_closed());
        assert_eq!(c.lambda(), 1.0);
        let k = EigenCluster::flat(trivial(2), 0).unwrap();
        assert_eq!(k.p_complex(), 2);
        let c = EigenCluster::flat(shifted(2), 2).unwrap();
        assert!((c.lambda() - 5f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(c.p_complex(), 8);
        let neg = EigenCluster::flat(shifted(2), -1).unwrap();
        assert_eq!(neg.lambda(), -0.5);
        assert!(EigenCluster::new(1.0, vec![]).is_err());
    }

    #[test]
    fn rate_single_examples() {
        let c = EigenCluster::flat(shifted(2), 1).unwrap();
        let phi = &c.vectors()[0];
        let rate = rate_single(0.5, phi, &ConformalFactor::constant(0.3)).unwrap();
        assert!((rate + 0.15).abs() < 1e-15);
        // single-mode field, mean-zero factor
        let f = ConformalFactor::cosine([1, 0, 1], 0.8).plus(&ConformalFactor::sine([0, 2, 0], 0.3));
        assert!(rate_single(0.5, phi, &f).unwrap().abs() < 1e-15);
        let unnormalized = phi.scale(Complex64::new(2.0, 0.0));
        assert!(matches!(
            rate_single(0.5, &unnormalized, &f),
            Err(DiracError::NotNormalized(_))
        ));
    }

    #[test]
    fn constant_factor_gives_uniform_rates() {
        let c = EigenCluster::flat(trivial(2), 1).unwrap();
        let r = perturbation_matrix(&c, &ConformalFactor::constant(0.25)).unwrap();
        assert!(r.rates.iter().all(|v| (v + 0.25).abs() < 1e-15));
        let m = r.matrix();
        for i in 0..6 {
            for j in 0..6 {
                let e = if i == j { -0.25 } else { 0.0 };
                assert!((m[(i, j)] - Complex64::new(e, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn one_dimensional_cluster_reduces_to_single_rate() {
        let c = EigenCluster::flat(shifted(2), 1).unwrap();
        let single = EigenCluster::new(0.5, vec![c.vectors()[0].clone()]).unwrap();
        assert!(!single.j_closed());
        let f = ConformalFactor::cosine([1, 0, 0], 0.5).shifted(0.2);
        let r = perturbation_matrix(&single, &f).unwrap();
        let expect = rate_single(0.5, &c.vectors()[0], &f).unwrap();
        assert_eq!(r.rates.len(), 1);
        assert!((r.rates[0] - expect).abs() < 1e-15);
        assert_eq!(r.min_gap, None);
    }

    #[test]
    fn cos_2x1_leaves_unit_cluster_unsplit_at_first_order() {
        // the modes ±e1 are coupled by cos(2 x1) but their eigenvectors are
        // orthogonal, so P vanishes identically
        let c = EigenCluster::flat(trivial(3), 1).unwrap();
        let r = perturbation_matrix(&c, &ConformalFactor::cosine([2, 0, 0], 1.0)).unwrap();
        assert!(r.matrix.iter().flatten().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn matrix_agrees_with_grid_quadrature() {
        let c = EigenCluster::flat(trivial(2), 1).unwrap();
        for f in [
            ConformalFactor::cosine([2, 0, 0], 1.0),
            ConformalFactor::cosine([1, 1, 0], 0.7).plus(&ConformalFactor::sine([0, 1, -1], 0.4)),
        ] {
            let r = perturbation_matrix(&c, &f).unwrap();
            let grid = Grid3::new(16).unwrap();
            let fv = f.evaluate_on_grid(&grid).unwrap();
            let vals: Vec<Vec<Spinor>> = c
                .vectors()
                .iter()
                .map(|v| v.evaluate_on_grid(&grid).unwrap())
                .collect();
            for i in 0..6 {
                for j in 0..6 {
                    let quad: Complex64 = (0..grid.len())
                        .map(|x| herm_inner(&vals[j][x], &vals[i][x]) * fv[x])
                        .sum::<Complex64>()
                        / grid.len() as f64
                        * -1.0;
                    assert!((quad - r.matrix[i][j]).norm() < 1e-10);
                }
            }
            assert!(r.pairing_ok);
        }
    }

    #[test]
    fn rates_are_invariant_under_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = EigenCluster::flat(shifted(2), 2).unwrap();
        let f = ConformalFactor::cosine([1, 1, 0], 0.6).plus(&ConformalFactor::cosine([0, 1, 1], 0.3));
        let before = perturbation_matrix(&c, &f).unwrap();
        let u = random_unitary(8, &mut rng);
        let rotated = unitary_rotate(&c, &u).unwrap();
        let after = perturbation_matrix(&rotated, &f).unwrap();
        for (a, b) in before.rates.iter().zip(&after.rates) {
            assert!((a - b).abs() < 1e-10);
        }
        // P transforms as conj(U) P U^T
        let expect = u.conjugate() * before.matrix() * u.transpose();
        let got = after.matrix();
        for i in 0..8 {
            for j in 0..8 {
                assert!((expect[(i, j)] - got[(i, j)]).norm() < 1e-12);
            }
        }
        // identity and permutation
        let same = unitary_rotate(&c, &Mat::identity(8, 8)).unwrap();
        assert_eq!(same.vectors(), c.vectors());
        let perm = Mat::<Complex64>::from_fn(8, 8, |i, j| {
            if j == (i + 3) % 8 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
        let permuted = perturbation_matrix(&unitary_rotate(&c, &perm).unwrap(), &f).unwrap();
        for (a, b) in before.rates.iter().zip(&permuted.rates) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut bad = Mat::<Complex64>::identity(8, 8);
        bad[(0, 0)] = Complex64::new(1.1, 0.0);
        assert!(matches!(unitary_rotate(&c, &bad), Err(DiracError::NotUnitary(_))));
    }

    #[test]
    fn alpha_beta_properties() {
        let c = EigenCluster::flat(trivial(2), 1).unwrap();
        let phi1 = &c.vectors()[0];
        // pick a second vector quaternionically orthogonal to phi1
        let phi2 = c
            .vectors()
            .iter()
            .find(|v| {
                phi1.l2_inner(&v.apply_j()).unwrap().norm() < 1e-12
                    && phi1.l2_inner(v).unwrap().norm() < 1e-12
            })
            .unwrap();
        for p in 0..2 {
            for q in 0..2 {
                let (a, b) = alpha_beta(phi1, phi2, p, q).unwrap();
                assert!((a.norm_sqr() - 1.0).abs() < 1e-14);
                assert!((a.norm_sqr() + b.norm_sqr() - 2.0).abs() < 1e-14);
                for v in [&a, &b] {
                    let r = v.apply_flat_dirac().add_scaled(Complex64::new(-1.0, 0.0), v).unwrap();
                    assert!(r.norm() < 1e-10);
                }
            }
        }
        let (a, _) = alpha_beta(phi1, phi2, 0, 0).unwrap();
        let expect = phi1
            .add_scaled(Complex64::new(1.0, 0.0), phi2)
            .unwrap()
            .scale(Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        assert!(a.max_abs_diff(&expect).unwrap() < 1e-16);
        assert!(alpha_beta(phi1, phi1, 0, 0).is_err());
        assert!(alpha_beta(phi1, &phi1.apply_j(), 0, 0).is_err());
    }

    #[test]
    fn gram_functions_examples() {
        let c = EigenCluster::flat(trivial(2), 1).unwrap();
        let grid = Grid3::new(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_unitary(6, &mut rng);
        let phi = &unitary_rotate(&c, &u).unwrap().vectors()[0].clone();
        let same = pointwise_gram(phi, phi, &grid).unwrap();
        let rho = crate::torus::pointwise_density(phi, &grid).unwrap();
        for (h, r) in same.h1.iter().zip(&rho) {
            assert!((h - Complex64::new(*r, 0.0)).norm() < 1e-12);
        }
        assert!(same.sup_h1 >= phi.norm_sqr() - 1e-12);
        let with_j = pointwise_gram(phi, &phi.apply_j(), &grid).unwrap();
        for (h, r) in with_j.h2.iter().zip(&rho) {
            assert!((h + Complex64::new(*r, 0.0)).norm() < 1e-12);
        }
        assert!(pointwise_gram(phi, phi, &Grid3::new(9).unwrap()).is_err());
    }

    #[test]
    fn fd_constant_factor_is_exact_scaling() {
        let c = EigenCluster::flat(shifted(2), 1).unwrap();
        let f = ConformalFactor::constant(0.4);
        let rep = fd_check(&c, &f, &[0.1, 0.01]).unwrap();
        for row in &rep.rows {
            let expect = 0.5 * ((-row.t * 0.4f64).exp() - 1.0 + row.t * 0.4);
            assert!((row.mismatch - expect).abs() < 1e-14);
        }
        assert!(fd_check(&c, &f, &[0.01, 0.1]).is_err());
    }
}
