//! Conformal deformation `g^t = e^{2tf} g` of the flat metric.
//!
//! The deformed operator is `D^t φ = e^{-tf}(Dφ + (n-1)/2 · t · grad f · φ)`.
//! Writing `χ = e^{(n-1)tf/2} φ` turns `D^t φ = λ φ` into `D χ = λ e^{tf} χ`,
//! so the spectrum is computed from the Hermitian-definite pencil `(A, B)`
//! with `A` the flat Dirac matrix and `B` the Galerkin matrix of
//! multiplication by `e^{tf}`. The `B`-norm of `χ` is the `g^t`-norm of `φ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use faer::Mat;

use crate::eigensolver::{self, SpectrumMeta, SpectrumResult, Tolerances};
use crate::error::{DiracError, Result};
use crate::grid::{pow2_at_least, Grid3};
use crate::spinor::{clifford_mul, Spinor, Vector3};
use crate::torus::{assemble_flat_dirac, ModeSet, SpinorField};

/// Spatial dimension of the torus.
pub const DIM: usize = 3;

const REALITY_TOL: f64 = 1e-14;
/// Largest sampling grid used for coefficient extraction.
const MAX_GRID: usize = 128;
/// Coefficient size accepted as negligible aliasing.
const ALIAS_TOL: f64 = 1e-15;

/// A real trigonometric polynomial `f(x) = Σ_{|m|_∞ ≤ d} f̂(m) e^{i<m,x>}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorJson", into = "FactorJson")]
pub struct ConformalFactor {
    degree: usize,
    coeffs: Vec<Complex64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CoeffJson {
    m: [i32; 3],
    re: f64,
    im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FactorJson {
    degree: usize,
    coeffs: Vec<CoeffJson>,
}

impl TryFrom<FactorJson> for ConformalFactor {
    type Error = DiracError;
    fn try_from(json: FactorJson) -> Result<Self> {
        ConformalFactor::from_coeffs(
            json.degree,
            json.coeffs
                .into_iter()
                .map(|c| (c.m, Complex64::new(c.re, c.im))),
        )
    }
}

impl From<ConformalFactor> for FactorJson {
    fn from(f: ConformalFactor) -> FactorJson {
        FactorJson {
            degree: f.degree,
            coeffs: f
                .nonzero()
                .map(|(m, c)| CoeffJson {
                    m,
                    re: c.re,
                    im: c.im,
                })
                .collect(),
        }
    }
}

impl ConformalFactor {
    fn side(&self) -> usize {
        2 * self.degree + 1
    }

    fn slot(&self, m: [i32; 3]) -> Option<usize> {
        let d = self.degree as i32;
        if m.iter().any(|v| v.abs() > d) {
            return None;
        }
        let s = self.side();
        Some((((m[0] + d) as usize) * s + (m[1] + d) as usize) * s + (m[2] + d) as usize)
    }

    fn freq(&self, slot: usize) -> [i32; 3] {
        let s = self.side();
        let d = self.degree as i32;
        [
            (slot / (s * s)) as i32 - d,
            ((slot / s) % s) as i32 - d,
            (slot % s) as i32 - d,
        ]
    }

    pub fn zero() -> Self {
        ConformalFactor {
            degree: 0,
            coeffs: vec![Complex64::new(0.0, 0.0)],
        }
    }

    pub fn constant(c: f64) -> Self {
        ConformalFactor {
            degree: 0,
            coeffs: vec![Complex64::new(c, 0.0)],
        }
    }

    /// `amplitude · cos<m, x>`.
    pub fn cosine(m: [i32; 3], amplitude: f64) -> Self {
        let h = Complex64::new(amplitude / 2.0, 0.0);
        Self::pair(m, h)
    }

    /// `amplitude · sin<m, x>`.
    pub fn sine(m: [i32; 3], amplitude: f64) -> Self {
        let h = Complex64::new(0.0, -amplitude / 2.0);
        Self::pair(m, h)
    }

    fn pair(m: [i32; 3], h: Complex64) -> Self {
        let degree = m.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0);
        let mut f = Self::with_degree(degree);
        let neg = m.map(|v| -v);
        if m == neg {
            // m = 0: cos 0 = 1, sin 0 = 0
            let s = f.slot(m).unwrap();
            f.coeffs[s] = Complex64::new(2.0 * h.re, 0.0);
            return f;
        }
        let (a, b) = (f.slot(m).unwrap(), f.slot(neg).unwrap());
        f.coeffs[a] = h;
        f.coeffs[b] = h.conj();
        f
    }

    pub(crate) fn with_degree(degree: usize) -> Self {
        let s = 2 * degree + 1;
        ConformalFactor {
            degree,
            coeffs: vec![Complex64::new(0.0, 0.0); s * s * s],
        }
    }

    /// Builds a factor from `(m, f̂(m))` pairs; unspecified coefficients are
    /// zero. Rejects frequencies beyond `degree` and violations of
    /// `f̂(-m) = conj f̂(m)` larger than 1e-14.
    pub fn from_coeffs(
        degree: usize,
        entries: impl IntoIterator<Item = ([i32; 3], Complex64)>,
    ) -> Result<Self> {
        let mut f = Self::with_degree(degree);
        for (m, c) in entries {
            let slot = f.slot(m).ok_or_else(|| {
                DiracError::InvalidInput(format!("frequency {m:?} exceeds degree {degree}"))
            })?;
            f.coeffs[slot] += c;
        }
        for slot in 0..f.coeffs.len() {
            let m = f.freq(slot);
            let neg = f.slot(m.map(|v| -v)).unwrap();
            let deviation = (f.coeffs[neg] - f.coeffs[slot].conj()).norm();
            if deviation > REALITY_TOL {
                return Err(DiracError::RealityViolation { m, deviation });
            }
        }
        // remove rounding-level asymmetry
        for slot in 0..f.coeffs.len() {
            let neg = f.slot(f.freq(slot).map(|v| -v)).unwrap();
            if neg >= slot {
                let avg = (f.coeffs[slot] + f.coeffs[neg].conj()) * 0.5;
                f.coeffs[slot] = avg;
                f.coeffs[neg] = avg.conj();
            }
        }
        Ok(f)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("factor serializes")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeff(&self, m: [i32; 3]) -> Complex64 {
        self.slot(m)
            .map(|s| self.coeffs[s])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Nonzero coefficients in lexicographic frequency order.
    pub fn nonzero(&self) -> impl Iterator<Item = ([i32; 3], Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|(s, c)| (self.freq(s), *c))
    }

    /// Mean value `∫ f dμ`.
    pub fn mean(&self) -> f64 {
        self.coeff([0, 0, 0]).re
    }

    pub fn is_constant(&self) -> bool {
        self.nonzero().all(|(m, _)| m == [0, 0, 0])
    }

    pub fn scaled(&self, s: f64) -> Self {
        ConformalFactor {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn plus(&self, other: &ConformalFactor) -> Self {
        let degree = self.degree.max(other.degree);
        let mut out = Self::with_degree(degree);
        for (m, c) in self.nonzero().chain(other.nonzero()) {
            let s = out.slot(m).unwrap();
            out.coeffs[s] += c;
        }
        out
    }

    /// `f + c`.
    pub fn shifted(&self, c: f64) -> Self {
        self.plus(&Self::constant(c))
    }

    pub fn evaluate_at(&self, x: [f64; 3]) -> f64 {
        self.nonzero()
            .map(|(m, c)| {
                let p = m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2];
                (c * Complex64::new(p.cos(), p.sin())).re
            })
            .sum()
    }

    /// Flat gradient at a point: `(grad f)^(m) = i m f̂(m)`.
    pub fn gradient_at(&self, x: [f64; 3]) -> Vector3 {
        let mut g = [0.0; 3];
        for (m, c) in self.nonzero() {
            let p = m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2];
            let w = c * Complex64::new(0.0, 1.0) * Complex64::new(p.cos(), p.sin());
            for j in 0..3 {
                g[j] += m[j] as f64 * w.re;
            }
        }
        Vector3(g)
    }

    /// Values of `f` on the grid. Requires `G ≥ 2d + 1`.
    pub fn evaluate_on_grid(&self, grid: &Grid3) -> Result<Vec<f64>> {
        Ok(self
            .spectral_on_grid(grid, |_, c| c)?
            .into_iter()
            .map(|v| v.re)
            .collect())
    }

    /// Components of `grad f` on the grid.
    pub fn gradient_on_grid(&self, grid: &Grid3) -> Result<[Vec<f64>; 3]> {
        let comp = |j: usize| -> Result<Vec<f64>> {
            Ok(self
                .spectral_on_grid(grid, |m, c| c * Complex64::new(0.0, m[j] as f64))?
                .into_iter()
                .map(|v| v.re)
                .collect())
        };
        Ok([comp(0)?, comp(1)?, comp(2)?])
    }

    fn spectral_on_grid(
        &self,
        grid: &Grid3,
        weight: impl Fn([i32; 3], Complex64) -> Complex64,
    ) -> Result<Vec<Complex64>> {
        let need = 2 * self.degree + 1;
        if grid.size() < need {
            return Err(DiracError::GridTooSmall {
                got: grid.size(),
                need,
            });
        }
        let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (m, c) in self.nonzero() {
            data[grid.freq_index(m)] = weight(m, c);
        }
        grid.synthesize(&mut data);
        Ok(data)
    }

    /// `(min f, max f)` sampled on a grid fine enough to resolve it.
    pub fn range(&self) -> (f64, f64) {
        let grid = Grid3::new(pow2_at_least((8 * self.degree).max(16))).expect("grid size is valid");
        let values = self.evaluate_on_grid(&grid).expect("grid resolves the factor");
        values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Sampled sup norm.
    pub fn sup_norm(&self) -> f64 {
        let (lo, hi) = self.range();
        lo.abs().max(hi.abs())
    }

    /// Short description used in artifact metadata.
    pub fn describe(&self) -> String {
        if self.is_constant() {
            return format!("const:{}", self.mean());
        }
        let terms: Vec<String> = self
            .nonzero()
            .map(|(m, c)| format!("{},{},{}:{}{:+}i", m[0], m[1], m[2], c.re, c.im))
            .collect();
        format!("trig(d={}):[{}]", self.degree, terms.join(";"))
    }
}

/// Fourier coefficients of `e^{tf}` for `|m|_∞ ≤ band`.
#[derive(Clone, Debug)]
pub struct ExpCoefficients {
    band: usize,
    coeffs: Vec<Complex64>,
    grid_size: usize,
    alias_tail: f64,
}

impl ExpCoefficients {
    pub fn band(&self) -> usize {
        self.band
    }

    pub fn get(&self, m: [i32; 3]) -> Complex64 {
        let b = self.band as i32;
        if m.iter().any(|v| v.abs() > b) {
            return Complex64::new(0.0, 0.0);
        }
        let s = 2 * self.band + 1;
        self.coeffs[(((m[0] + b) as usize) * s + (m[1] + b) as usize) * s + (m[2] + b) as usize]
    }

    /// Sampling grid used for the transform.
    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Largest coefficient modulus in the outer frequency shell of the
    /// sampling grid; bounds the aliasing error of every returned coefficient.
    pub fn alias_tail(&self) -> f64 {
        self.alias_tail
    }
}

/// Coefficients of `e^{tf}` by sampling on an oversampled grid.
///
/// The grid starts at the smallest power of two `≥ max(64, 4·band + 8d)` and
/// is doubled while the outer-shell coefficients exceed 1e-15.
pub fn exp_coeffs(f: &ConformalFactor, t: f64, band: usize) -> ExpCoefficients {
    let d = f.degree();
    let mut size = pow2_at_least((4 * band + 8 * d).max(64));
    loop {
        let grid = Grid3::new(size).expect("grid size is valid");
        let fvals = f.evaluate_on_grid(&grid).expect("grid resolves the factor");
        let mut data: Vec<Complex64> = fvals
            .iter()
            .map(|v| Complex64::new((t * v).exp(), 0.0))
            .collect();
        grid.analyze(&mut data);
        let quarter = (size / 4) as i32;
        let alias_tail = (0..grid.len())
            .filter(|&i| grid.index_freq(i).iter().any(|v| v.abs() > quarter))
            .map(|i| data[i].norm())
            .fold(0.0, f64::max);
        let resolved = alias_tail <= ALIAS_TOL && (band as i32) < quarter;
        if resolved || size >= MAX_GRID {
            assert!(2 * band < size, "band {band} does not fit a {size}-point grid");
            if alias_tail > ALIAS_TOL {
                log::warn!("exp_coeffs: aliasing tail {alias_tail:.2e} at grid {size}");
            }
            let b = band as i32;
            let s = 2 * band + 1;
            let mut coeffs = vec![Complex64::new(0.0, 0.0); s * s * s];
            for (slot, c) in coeffs.iter_mut().enumerate() {
                let m = [
                    (slot / (s * s)) as i32 - b,
                    ((slot / s) % s) as i32 - b,
                    (slot % s) as i32 - b,
                ];
                let here = data[grid.freq_index(m)];
                let mirror = data[grid.freq_index(m.map(|v| -v))];
                *c = (here + mirror.conj()) * 0.5;
            }
            return ExpCoefficients {
                band,
                coeffs,
                grid_size: size,
                alias_tail,
            };
        }
        size *= 2;
    }
}

/// Whether `|t| · (max f - min f) ≤ 1`.
pub fn in_accepted_range(f: &ConformalFactor, t: f64) -> bool {
    let (lo, hi) = f.range();
    t.abs() * (hi - lo) <= 1.0 + 1e-12
}

/// Galerkin matrix of multiplication by `e^{tf}`:
/// `B[(κ,a),(κ',b)] = ĥ(κ - κ') δ_ab` with `h = e^{tf}`.
///
/// Fails with [`DiracError::NotPositiveDefinite`] when a Cholesky
/// factorization does not exist.
pub fn assemble_b(f: &ConformalFactor, t: f64, modes: &ModeSet) -> Result<Mat<Complex64>> {
    let b = weight_matrix(f, t, modes);
    if b.llt(faer::Side::Lower).is_err() {
        return Err(DiracError::NotPositiveDefinite { t });
    }
    Ok(b)
}

fn weight_matrix(f: &ConformalFactor, t: f64, modes: &ModeSet) -> Mat<Complex64> {
    let n = modes.len();
    let mut b = Mat::<Complex64>::zeros(2 * n, 2 * n);
    if t == 0.0 {
        for i in 0..2 * n {
            b[(i, i)] = Complex64::new(1.0, 0.0);
        }
        return b;
    }
    let h = exp_coeffs(f, t, 2 * modes.order());
    let points: Vec<[i32; 3]> = modes.lattice_points().collect();
    for (i, ki) in points.iter().enumerate() {
        for (j, kj) in points.iter().enumerate() {
            let c = h.get([ki[0] - kj[0], ki[1] - kj[1], ki[2] - kj[2]]);
            b[(2 * i, 2 * j)] = c;
            b[(2 * i + 1, 2 * j + 1)] = c;
        }
    }
    b
}

/// `vol(g^t) = ∫ e^{ntf} dμ`.
pub fn deformed_volume(f: &ConformalFactor, t: f64) -> f64 {
    exp_coeffs(f, DIM as f64 * t, 0).get([0, 0, 0]).re
}

/// The pencil `(A, B)` of the conformally deformed Dirac operator.
#[derive(Clone, Debug)]
pub struct DeformedOperator {
    modes: ModeSet,
    t: f64,
    factor: ConformalFactor,
    a: Mat<Complex64>,
    b: Mat<Complex64>,
}

impl DeformedOperator {
    pub fn new(factor: &ConformalFactor, t: f64, modes: ModeSet) -> Result<Self> {
        if !in_accepted_range(factor, t) {
            log::warn!(
                "t = {t} is outside the accepted range |t|(max f - min f) <= 1 for {}",
                factor.describe()
            );
        }
        Ok(DeformedOperator {
            modes,
            t,
            factor: factor.clone(),
            a: assemble_flat_dirac(&modes),
            b: assemble_b(factor, t, &modes)?,
        })
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn factor(&self) -> &ConformalFactor {
        &self.factor
    }

    pub fn a(&self) -> &Mat<Complex64> {
        &self.a
    }

    pub fn b(&self) -> &Mat<Complex64> {
        &self.b
    }

    pub fn spectrum(&self, tol: &Tolerances) -> Result<SpectrumResult> {
        let meta = SpectrumMeta {
            delta: self.modes.delta(),
            order: self.modes.order(),
            t: self.t,
            f_ref: self.factor.describe(),
        };
        eigensolver::solve_spectrum(&self.a, &self.b, self.modes, meta, tol)
            .map_err(|e| match e {
                DiracError::NotPositiveDefinite { .. } => DiracError::NotPositiveDefinite { t: self.t },
                other => other,
            })
    }
}

/// Spectrum of `D^t` on the truncated basis, with default tolerances.
pub fn deformed_spectrum(f: &ConformalFactor, t: f64, modes: &ModeSet) -> Result<SpectrumResult> {
    deformed_spectrum_with(f, t, modes, &Tolerances::default())
}

pub fn deformed_spectrum_with(
    f: &ConformalFactor,
    t: f64,
    modes: &ModeSet,
    tol: &Tolerances,
) -> Result<SpectrumResult> {
    DeformedOperator::new(f, t, *modes)?.spectrum(tol)
}

/// Applies `D^t φ = e^{-tf}(Dφ + (n-1)/2 · t · grad f · φ)` directly.
///
/// The product is formed pointwise on a grid and transformed back; the
/// output lives on the mode set enlarged by `d + b`, where `b` is the band
/// beyond which the coefficients of `e^{-tf}` fall below 1e-16.
pub fn apply_deformed_dirac(f: &ConformalFactor, t: f64, phi: &SpinorField) -> Result<SpinorField> {
    let modes = *phi.modes();
    let d = f.degree();
    let band = if f.is_constant() || t == 0.0 {
        0
    } else {
        effective_exp_band(f, -t)
    };
    let target = modes.enlarged(d + band);
    let size = pow2_at_least(2 * target.order() + 2);
    let grid = Grid3::new(size)?;

    let dphi = phi.apply_flat_dirac().periodic_values(&grid)?;
    let vals = phi.periodic_values(&grid)?;
    let fvals = f.evaluate_on_grid(&grid)?;
    let grad = f.gradient_on_grid(&grid)?;
    let factor = (DIM as f64 - 1.0) / 2.0 * t;

    let mut out = [
        vec![Complex64::new(0.0, 0.0); grid.len()],
        vec![Complex64::new(0.0, 0.0); grid.len()],
    ];
    for idx in 0..grid.len() {
        let g = Vector3([grad[0][idx], grad[1][idx], grad[2][idx]]);
        let s = Spinor::new(vals[0][idx], vals[1][idx]);
        let cs = clifford_mul(&g, &s).scale_re(factor);
        let w = (-t * fvals[idx]).exp();
        out[0][idx] = (dphi[0][idx] + cs.0[0]) * w;
        out[1][idx] = (dphi[1][idx] + cs.0[1]) * w;
    }
    Ok(SpinorField::from_periodic_values(target, &grid, out))
}

pub(crate) fn effective_exp_band(f: &ConformalFactor, t: f64) -> usize {
    let probe = 24;
    let h = exp_coeffs(f, t, probe);
    let scale = h.get([0, 0, 0]).norm();
    let mut band = probe;
    for b in (0..=probe).rev() {
        let shell_max = shell_max(&h, b);
        if shell_max > 1e-16 * scale {
            break;
        }
        band = b;
    }
    band.max(1)
}

fn shell_max(h: &ExpCoefficients, b: usize) -> f64 {
    let b = b as i32;
    let mut best: f64 = 0.0;
    for x in -b..=b {
        for y in -b..=b {
            for z in -b..=b {
                if x.abs().max(y.abs()).max(z.abs()) == b {
                    best = best.max(h.get([x, y, z]).norm());
                }
            }
        }
    }
    best
}
