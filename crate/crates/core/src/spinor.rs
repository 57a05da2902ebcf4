//! The spinor representation of Spin(3) on C^2.
//!
//! Conventions used throughout the crate:
//!
//! - Clifford multiplication by a unit frame vector is `c(e_j) = i σ_j`, so
//!   `c(v) c(v) = -|v|^2`.
//! - The quaternionic structure is `J(z1, z2) = (-conj z2, conj z1)`.
//! - The Hermitian product `<a, b> = a1 conj(b1) + a2 conj(b2)` is antilinear
//!   in its second argument.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A tangent vector in the flat global frame of the torus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vector3(pub [f64; 3]);

impl Vector3 {
    pub const ZERO: Vector3 = Vector3([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vector3([x, y, z])
    }

    pub fn basis(j: usize) -> Self {
        let mut v = [0.0; 3];
        v[j] = 1.0;
        Vector3(v)
    }

    pub fn dot(&self, other: &Vector3) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

/// An element of Σ = C^2.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Spinor(pub [Complex64; 2]);

impl Spinor {
    pub const ZERO: Spinor = Spinor([ZERO, ZERO]);

    pub fn new(z1: Complex64, z2: Complex64) -> Self {
        Spinor([z1, z2])
    }

    pub fn from_re(a: f64, b: f64) -> Self {
        Spinor([Complex64::new(a, 0.0), Complex64::new(b, 0.0)])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, z: Complex64) -> Spinor {
        Spinor([self.0[0] * z, self.0[1] * z])
    }

    pub fn scale_re(&self, x: f64) -> Spinor {
        Spinor([self.0[0] * x, self.0[1] * x])
    }

    /// Largest componentwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Spinor) -> f64 {
        (self.0[0] - other.0[0])
            .norm()
            .max((self.0[1] - other.0[1]).norm())
    }
}

impl Add for Spinor {
    type Output = Spinor;
    fn add(self, rhs: Spinor) -> Spinor {
        Spinor([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1]])
    }
}

impl AddAssign for Spinor {
    fn add_assign(&mut self, rhs: Spinor) {
        self.0[0] += rhs.0[0];
        self.0[1] += rhs.0[1];
    }
}

impl Sub for Spinor {
    type Output = Spinor;
    fn sub(self, rhs: Spinor) -> Spinor {
        Spinor([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1]])
    }
}

impl Neg for Spinor {
    type Output = Spinor;
    fn neg(self) -> Spinor {
        Spinor([-self.0[0], -self.0[1]])
    }
}

impl Mul<Complex64> for Spinor {
    type Output = Spinor;
    fn mul(self, rhs: Complex64) -> Spinor {
        self.scale(rhs)
    }
}

/// A 2×2 complex matrix acting on spinors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[ZERO, ZERO], [ZERO, ZERO]]);

    pub fn apply(&self, s: &Spinor) -> Spinor {
        let m = &self.0;
        Spinor([
            m[0][0] * s.0[0] + m[0][1] * s.0[1],
            m[1][0] * s.0[0] + m[1][1] * s.0[1],
        ])
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn adjoint(&self) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.0[r][c] - other.0[r][c]).norm());
            }
        }
        d
    }

    /// Eigenvalues of a Hermitian 2×2 matrix, ascending.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let tr = self.trace().re;
        let det = self.det().re;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        [(tr - disc) / 2.0, (tr + disc) / 2.0]
    }

    /// Unit eigenvector of a Hermitian 2×2 matrix for the eigenvalue `mu`.
    /// For a multiple of the identity this is `(1, 0)`.
    pub fn hermitian_eigenvector(&self, mu: f64) -> Spinor {
        let m = &self.0;
        let a = Spinor::new(m[0][1], Complex64::new(mu, 0.0) - m[0][0]);
        let b = Spinor::new(Complex64::new(mu, 0.0) - m[1][1], m[1][0]);
        let v = if a.norm_sqr() >= b.norm_sqr() { a } else { b };
        let n = v.norm();
        if n < 1e-300 {
            return Spinor::from_re(1.0, 0.0);
        }
        v.scale_re(1.0 / n)
    }
}

/// Pauli matrix σ_j, `j ∈ {0, 1, 2}`.
pub fn pauli(j: usize) -> Mat2 {
    let one = Complex64::new(1.0, 0.0);
    match j {
        0 => Mat2([[ZERO, one], [one, ZERO]]),
        1 => Mat2([[ZERO, -I], [I, ZERO]]),
        2 => Mat2([[one, ZERO], [ZERO, -one]]),
        _ => panic!("pauli index {j} out of range"),
    }
}

/// σ·v.
fn sigma_dot(v: &Vector3) -> Mat2 {
    let [x, y, z] = v.0;
    Mat2([
        [Complex64::new(z, 0.0), Complex64::new(x, -y)],
        [Complex64::new(x, y), Complex64::new(-z, 0.0)],
    ])
}

/// Clifford multiplication `c(v) s = i (σ·v) s`.
pub fn clifford_mul(v: &Vector3, s: &Spinor) -> Spinor {
    sigma_dot(v).apply(s).scale(I)
}

/// The quaternionic structure: antilinear, `J² = -1`, commutes with `c(v)`.
pub fn apply_j(s: &Spinor) -> Spinor {
    Spinor([-s.0[1].conj(), s.0[0].conj()])
}

/// Pointwise Hermitian product, antilinear in `b`.
pub fn herm_inner(a: &Spinor, b: &Spinor) -> Complex64 {
    a.0[0] * b.0[0].conj() + a.0[1] * b.0[1].conj()
}

/// Symbol of the flat Dirac operator on the Fourier mode `e^{i<κ,x>}`:
/// `D(e^{i<κ,x>} u) = e^{i<κ,x>} (-σ·κ) u`.
pub fn dirac_symbol(kappa: &Vector3) -> Mat2 {
    let s = sigma_dot(kappa);
    Mat2([[-s.0[0][0], -s.0[0][1]], [-s.0[1][0], -s.0[1][1]]])
}
