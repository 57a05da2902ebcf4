//! The flat Dirac operator on T³ = R³/2πZ³ in a truncated Fourier basis.
//!
//! A spin structure `δ ∈ {0,1}³` selects the mode lattice `Z³ + δ/2`. A
//! spinor field is `φ(x) = Σ_κ e^{i<κ,x>} u_κ` and the measure is normalized
//! to total volume one, so the L² product is the plain coefficient sum.
//! On each mode the flat operator acts by the 2×2 symbol `-σ·κ`; the
//! truncated matrix is therefore block diagonal and its eigenvalues below
//! the truncation radius are exact.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DiracError, Result};
use crate::grid::Grid3;
use crate::spinor::{apply_j, dirac_symbol, herm_inner, Spinor, Vector3};

/// Spin structure on the cubic torus, `δ ∈ {0,1}³`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u8; 3]", into = "[u8; 3]")]
pub struct SpinStructure([u8; 3]);

impl SpinStructure {
    pub const TRIVIAL: SpinStructure = SpinStructure([0, 0, 0]);

    pub fn new(delta: [u8; 3]) -> Result<Self> {
        for &d in &delta {
            if d > 1 {
                return Err(DiracError::InvalidSpinStructure(d));
            }
        }
        Ok(SpinStructure(delta))
    }

    /// All eight spin structures in lexicographic order.
    pub fn all() -> impl Iterator<Item = SpinStructure> {
        (0u8..8).map(|b| SpinStructure([(b >> 2) & 1, (b >> 1) & 1, b & 1]))
    }

    pub fn components(&self) -> [u8; 3] {
        self.0
    }

    pub fn is_trivial(&self) -> bool {
        self.0 == [0, 0, 0]
    }

    /// The lattice shift `δ/2`.
    pub fn shift(&self) -> Vector3 {
        Vector3(self.0.map(|d| d as f64 / 2.0))
    }
}

impl TryFrom<[u8; 3]> for SpinStructure {
    type Error = DiracError;
    fn try_from(delta: [u8; 3]) -> Result<Self> {
        SpinStructure::new(delta)
    }
}

impl From<SpinStructure> for [u8; 3] {
    fn from(s: SpinStructure) -> [u8; 3] {
        s.0
    }
}

impl fmt::Display for SpinStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for SpinStructure {
    type Err = DiracError;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(DiracError::InvalidInput(format!(
                "spin structure must be three comma-separated bits, got {s:?}"
            )));
        }
        let mut delta = [0u8; 3];
        for (d, p) in delta.iter_mut().zip(parts) {
            *d = p
                .parse()
                .map_err(|_| DiracError::InvalidInput(format!("bad spin structure bit {p:?}")))?;
        }
        SpinStructure::new(delta)
    }
}

/// Truncated mode set: `κ = k + δ/2` with `k_j ∈ [-N, N - δ_j]`.
///
/// The asymmetric range for `δ_j = 1` keeps the set closed under `κ ↦ -κ`,
/// which is what lets `J` act within the truncation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeSet {
    order: usize,
    delta: SpinStructure,
}

impl ModeSet {
    pub fn new(order: usize, delta: SpinStructure) -> Result<Self> {
        if order == 0 {
            return Err(DiracError::ZeroOrder);
        }
        Ok(ModeSet { order, delta })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn delta(&self) -> SpinStructure {
        self.delta
    }

    pub fn extent(&self, axis: usize) -> usize {
        2 * self.order + 1 - self.delta.0[axis] as usize
    }

    /// Number of modes.
    pub fn len(&self) -> usize {
        (0..3).map(|j| self.extent(j)).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Dimension of the coefficient space (two complex numbers per mode).
    pub fn dim(&self) -> usize {
        2 * self.len()
    }

    /// Integer part `k` of mode `i`.
    pub fn lattice_point(&self, i: usize) -> [i32; 3] {
        let (e1, e2) = (self.extent(1), self.extent(2));
        let n = self.order as i32;
        [
            (i / (e1 * e2)) as i32 - n,
            ((i / e2) % e1) as i32 - n,
            (i % e2) as i32 - n,
        ]
    }

    /// Mode `κ_i = k_i + δ/2`.
    pub fn mode(&self, i: usize) -> Vector3 {
        let k = self.lattice_point(i);
        let s = self.delta.shift();
        Vector3([
            k[0] as f64 + s.0[0],
            k[1] as f64 + s.0[1],
            k[2] as f64 + s.0[2],
        ])
    }

    pub fn index_of(&self, k: [i32; 3]) -> Option<usize> {
        let n = self.order as i32;
        let mut idx = 0usize;
        for (j, &kj) in k.iter().enumerate() {
            let hi = n - self.delta.0[j] as i32;
            if kj < -n || kj > hi {
                return None;
            }
            idx = idx * self.extent(j) + (kj + n) as usize;
        }
        Some(idx)
    }

    /// Index of the mode `-κ_i`, i.e. lattice point `-k - δ`.
    pub fn negated(&self, i: usize) -> usize {
        let k = self.lattice_point(i);
        let d = self.delta.0;
        self.index_of([
            -k[0] - d[0] as i32,
            -k[1] - d[1] as i32,
            -k[2] - d[2] as i32,
        ])
        .expect("mode sets are closed under negation")
    }

    pub fn lattice_points(&self) -> impl Iterator<Item = [i32; 3]> + '_ {
        (0..self.len()).map(move |i| self.lattice_point(i))
    }

    /// Same spin structure, larger truncation order.
    pub fn enlarged(&self, extra: usize) -> ModeSet {
        ModeSet {
            order: self.order + extra,
            delta: self.delta,
        }
    }

    /// Radius below which the truncated flat spectrum is complete.
    pub fn trusted_radius(&self) -> f64 {
        self.order as f64 - 0.5
    }

    /// Smallest grid on which fields of this set can be sampled without
    /// wrap-around.
    pub fn min_sampling_grid(&self) -> usize {
        2 * self.order + 1
    }
}

/// `build_mode_set(N, δ)`.
pub fn build_mode_set(order: usize, delta: SpinStructure) -> Result<ModeSet> {
    ModeSet::new(order, delta)
}

/// A spinor field given by its Fourier coefficients on a [`ModeSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    modes: ModeSet,
    coeffs: Vec<Spinor>,
}

impl SpinorField {
    pub fn zeros(modes: ModeSet) -> Self {
        SpinorField {
            modes,
            coeffs: vec![Spinor::ZERO; modes.len()],
        }
    }

    pub fn from_coeffs(modes: ModeSet, coeffs: Vec<Spinor>) -> Result<Self> {
        if coeffs.len() != modes.len() {
            return Err(DiracError::ModeSetMismatch(format!(
                "{} coefficients for {} modes",
                coeffs.len(),
                modes.len()
            )));
        }
        Ok(SpinorField { modes, coeffs })
    }

    /// Field from a flat coefficient vector `[u_0^1, u_0^2, u_1^1, ...]`.
    pub fn from_vector(modes: ModeSet, v: &[Complex64]) -> Result<Self> {
        if v.len() != modes.dim() {
            return Err(DiracError::ModeSetMismatch(format!(
                "vector of length {} for dimension {}",
                v.len(),
                modes.dim()
            )));
        }
        let coeffs = v.chunks_exact(2).map(|c| Spinor::new(c[0], c[1])).collect();
        Ok(SpinorField { modes, coeffs })
    }

    /// Field from column `col` of a coefficient matrix.
    pub fn from_column(modes: ModeSet, m: faer::MatRef<'_, Complex64>, col: usize) -> Result<Self> {
        let v: Vec<Complex64> = (0..m.nrows()).map(|r| m[(r, col)]).collect();
        Self::from_vector(modes, &v)
    }

    pub fn single_mode(modes: ModeSet, k: [i32; 3], u: Spinor) -> Result<Self> {
        let idx = modes
            .index_of(k)
            .ok_or_else(|| DiracError::InvalidInput(format!("mode {k:?} not in mode set")))?;
        let mut field = SpinorField::zeros(modes);
        field.coeffs[idx] = u;
        Ok(field)
    }

    pub fn to_vector(&self) -> Vec<Complex64> {
        self.coeffs.iter().flat_map(|s| s.0).collect()
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn coeffs(&self) -> &[Spinor] {
        &self.coeffs
    }

    pub fn coeff(&self, k: [i32; 3]) -> Spinor {
        self.modes
            .index_of(k)
            .map(|i| self.coeffs[i])
            .unwrap_or(Spinor::ZERO)
    }

    fn check_same(&self, other: &SpinorField) -> Result<()> {
        if self.modes != other.modes {
            return Err(DiracError::ModeSetMismatch(format!(
                "{:?} vs {:?}",
                self.modes, other.modes
            )));
        }
        Ok(())
    }

    /// `(φ, ψ) = ∫ <φ, ψ> dμ`, by Parseval.
    pub fn l2_inner(&self, other: &SpinorField) -> Result<Complex64> {
        self.check_same(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| herm_inner(a, b))
            .sum())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(Spinor::norm_sqr).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, z: Complex64) -> SpinorField {
        SpinorField {
            modes: self.modes,
            coeffs: self.coeffs.iter().map(|s| s.scale(z)).collect(),
        }
    }

    /// `self + z · other`.
    pub fn add_scaled(&self, z: Complex64, other: &SpinorField) -> Result<SpinorField> {
        self.check_same(other)?;
        Ok(SpinorField {
            modes: self.modes,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| *a + b.scale(z))
                .collect(),
        })
    }

    pub fn max_abs_diff(&self, other: &SpinorField) -> Result<f64> {
        self.check_same(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max))
    }

    /// Coefficient at `-κ` of the output is `J u_κ`; `J` maps `e^{i<κ,x>}` to
    /// `e^{-i<κ,x>}` because it is antilinear.
    pub fn apply_j(&self) -> SpinorField {
        let mut out = vec![Spinor::ZERO; self.coeffs.len()];
        for (i, u) in self.coeffs.iter().enumerate() {
            out[self.modes.negated(i)] = apply_j(u);
        }
        SpinorField {
            modes: self.modes,
            coeffs: out,
        }
    }

    /// Flat Dirac operator applied mode by mode.
    pub fn apply_flat_dirac(&self) -> SpinorField {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, u)| dirac_symbol(&self.modes.mode(i)).apply(u))
            .collect();
        SpinorField {
            modes: self.modes,
            coeffs,
        }
    }

    /// The same field expressed on a larger mode set of the same spin structure.
    pub fn embed(&self, target: ModeSet) -> Result<SpinorField> {
        if target.delta() != self.modes.delta() || target.order() < self.modes.order() {
            return Err(DiracError::ModeSetMismatch(format!(
                "cannot embed {:?} into {:?}",
                self.modes, target
            )));
        }
        let mut out = SpinorField::zeros(target);
        for (i, u) in self.coeffs.iter().enumerate() {
            let idx = target
                .index_of(self.modes.lattice_point(i))
                .expect("target contains source");
            out.coeffs[idx] = *u;
        }
        Ok(out)
    }

    /// Point value `φ(x)`.
    pub fn evaluate_at(&self, x: [f64; 3]) -> Spinor {
        let mut acc = Spinor::ZERO;
        for (i, u) in self.coeffs.iter().enumerate() {
            let k = self.modes.mode(i);
            let phase = k.0[0] * x[0] + k.0[1] * x[1] + k.0[2] * x[2];
            acc += u.scale(Complex64::new(phase.cos(), phase.sin()));
        }
        acc
    }

    /// Values of the periodic part `e^{-i<δ/2,x>} φ(x)` on the grid.
    pub(crate) fn periodic_values(&self, grid: &Grid3) -> Result<[Vec<Complex64>; 2]> {
        let need = self.modes.min_sampling_grid();
        if grid.size() < need {
            return Err(DiracError::GridTooSmall {
                got: grid.size(),
                need,
            });
        }
        let mut comps = [
            vec![Complex64::new(0.0, 0.0); grid.len()],
            vec![Complex64::new(0.0, 0.0); grid.len()],
        ];
        for (i, u) in self.coeffs.iter().enumerate() {
            let idx = grid.freq_index(self.modes.lattice_point(i));
            comps[0][idx] = u.0[0];
            comps[1][idx] = u.0[1];
        }
        grid.synthesize(&mut comps[0]);
        grid.synthesize(&mut comps[1]);
        Ok(comps)
    }

    /// Field values `φ(x)` at every grid point.
    pub fn evaluate_on_grid(&self, grid: &Grid3) -> Result<Vec<Spinor>> {
        let [a, b] = self.periodic_values(grid)?;
        let shift = self.modes.delta().shift();
        Ok((0..grid.len())
            .map(|idx| {
                let x = grid.point(idx);
                let phase = shift.0[0] * x[0] + shift.0[1] * x[1] + shift.0[2] * x[2];
                Spinor::new(a[idx], b[idx]).scale(Complex64::new(phase.cos(), phase.sin()))
            })
            .collect())
    }

    /// Recover the coefficients of a field on `target` from the periodic part
    /// sampled on `grid`. Content outside `target` is discarded.
    pub(crate) fn from_periodic_values(
        target: ModeSet,
        grid: &Grid3,
        mut comps: [Vec<Complex64>; 2],
    ) -> SpinorField {
        grid.analyze(&mut comps[0]);
        grid.analyze(&mut comps[1]);
        let coeffs = target
            .lattice_points()
            .map(|k| {
                let idx = grid.freq_index(k);
                Spinor::new(comps[0][idx], comps[1][idx])
            })
            .collect();
        SpinorField {
            modes: target,
            coeffs,
        }
    }
}

/// `|φ|²(x)` on a G³ grid. Requires `G ≥ 2(2N+1)` so the band-limited density
/// is sampled without aliasing.
pub fn pointwise_density(field: &SpinorField, grid: &Grid3) -> Result<Vec<f64>> {
    let need = 2 * field.modes().min_sampling_grid();
    if grid.size() < need {
        return Err(DiracError::GridTooSmall {
            got: grid.size(),
            need,
        });
    }
    let [a, b] = field.periodic_values(grid)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| x.norm_sqr() + y.norm_sqr())
        .collect())
}

/// Block-diagonal matrix of the flat Dirac operator on `modes`.
pub fn assemble_flat_dirac(modes: &ModeSet) -> Mat<Complex64> {
    let n = modes.dim();
    let mut a = Mat::<Complex64>::zeros(n, n);
    for i in 0..modes.len() {
        let sym = dirac_symbol(&modes.mode(i));
        for r in 0..2 {
            for c in 0..2 {
                a[(2 * i + r, 2 * i + c)] = sym.0[r][c];
            }
        }
    }
    a
}

/// All eigenvalues of the truncated flat operator, ascending. Each mode
/// contributes the two eigenvalues of its symbol.
pub fn flat_eigenvalues(modes: &ModeSet) -> Vec<f64> {
    let mut values: Vec<f64> = (0..modes.len())
        .flat_map(|i| dirac_symbol(&modes.mode(i)).hermitian_eigenvalues())
        .collect();
    values.sort_by(f64::total_cmp);
    values
}

/// One line of a spectrum table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub lambda: f64,
    pub mult_complex: usize,
    pub mult_quaternionic: usize,
}

/// Closed-form nonnegative spectrum of the flat torus up to `lambda_max`.
///
/// Enumerates the shifted lattice `Z³ + δ/2` exactly (grouping by the
/// integer `|2κ|²`) and takes the symbol eigenvalues `±|κ|`. The negative
/// half of the spectrum is the mirror image of the returned lines.
pub fn closed_form_spectrum(delta: SpinStructure, lambda_max: f64) -> Result<Vec<SpectralLine>> {
    if lambda_max.is_nan() || lambda_max <= 0.0 {
        return Err(DiracError::InvalidInput(format!(
            "lambda_max must be positive, got {lambda_max}"
        )));
    }
    let bound = lambda_max.ceil() as i32 + 1;
    let d = delta.components().map(|x| x as i32);
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for a in -bound..=bound {
        for b in -bound..=bound {
            for c in -bound..=bound {
                let twice = [2 * a + d[0], 2 * b + d[1], 2 * c + d[2]];
                let q: i64 = twice.iter().map(|&v| (v as i64) * (v as i64)).sum();
                let kappa = Vector3(twice.map(|v| v as f64 / 2.0));
                if kappa.norm() > lambda_max * (1.0 + 1e-12) {
                    continue;
                }
                let ev = dirac_symbol(&kappa).hermitian_eigenvalues();
                // nonnegative eigenvalues only; the zero mode contributes both
                let nonneg = ev.iter().filter(|&&e| e >= -1e-15).count();
                *counts.entry(q).or_default() += nonneg;
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|(q, mult)| SpectralLine {
            lambda: (q as f64).sqrt() / 2.0,
            mult_complex: mult,
            mult_quaternionic: mult / 2,
        })
        .collect())
}
