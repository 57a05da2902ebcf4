//! Uniform G×G×G sampling grids on the torus and the 3D FFT between grid
//! values and Fourier coefficients.
//!
//! Grid point `(a, b, c)` sits at `x = 2π (a, b, c) / G` and is stored at
//! flat index `(a G + b) G + c`. Coefficient `m` lives at index `m mod G`
//! along each axis.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{DiracError, Result};

/// Plans for forward and inverse transforms of one grid size.
pub struct Grid3 {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid3").field("size", &self.size).finish()
    }
}

impl Grid3 {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(DiracError::GridTooSmall { got: size, need: 2 });
        }
        let mut planner = FftPlanner::new();
        Ok(Grid3 {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.size * self.size * self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let g = self.size;
        let h = 2.0 * std::f64::consts::PI / g as f64;
        [
            (idx / (g * g)) as f64 * h,
            ((idx / g) % g) as f64 * h,
            (idx % g) as f64 * h,
        ]
    }

    /// Flat storage index of integer frequency `m` (taken modulo G).
    pub fn freq_index(&self, m: [i32; 3]) -> usize {
        let g = self.size as i64;
        let w = |v: i32| (v as i64).rem_euclid(g) as usize;
        (w(m[0]) * self.size + w(m[1])) * self.size + w(m[2])
    }

    /// Signed frequency stored at flat index `idx`, in `[-G/2, G/2)`.
    pub fn index_freq(&self, idx: usize) -> [i32; 3] {
        let g = self.size;
        let s = |v: usize| {
            if v >= g.div_ceil(2) {
                v as i32 - g as i32
            } else {
                v as i32
            }
        };
        [s(idx / (g * g)), s((idx / g) % g), s(idx % g)]
    }

    /// Grid values `Σ_m c_m e^{i<m,x>}` from coefficients (unnormalized inverse DFT).
    pub fn synthesize(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
    }

    /// Fourier coefficients `(1/G³) Σ_x v(x) e^{-i<m,x>}` from grid values.
    pub fn analyze(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let g = self.size;
        assert_eq!(data.len(), g * g * g, "grid buffer has wrong length");
        // last axis is contiguous
        plan.process(data);
        let mut line = vec![Complex64::new(0.0, 0.0); g];
        for stride in [g, g * g] {
            for base in 0..g * g {
                let (outer, inner) = (base / stride, base % stride);
                let start = outer * stride * g + inner;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[start + j * stride];
                }
                plan.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[start + j * stride] = *v;
                }
            }
        }
    }
}

/// Smallest power of two that is at least `n`.
pub fn pow2_at_least(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frequency_round_trip() {
        let grid = Grid3::new(8).unwrap();
        let m = [1, -2, 3];
        let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];
        data[grid.freq_index(m)] = Complex64::new(1.0, 0.0);
        grid.synthesize(&mut data);
        for (idx, v) in data.iter().enumerate() {
            let x = grid.point(idx);
            let phase = m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2];
            let expect = Complex64::new(phase.cos(), phase.sin());
            assert!((v - expect).norm() < 1e-12);
        }
        grid.analyze(&mut data);
        for (idx, v) in data.iter().enumerate() {
            let expect = if grid.index_freq(idx) == m { 1.0 } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn index_freq_inverts_freq_index() {
        let grid = Grid3::new(6).unwrap();
        for idx in 0..grid.len() {
            assert_eq!(grid.freq_index(grid.index_freq(idx)), idx);
        }
    }
}
