//! Forward/inverse discrete Fourier transforms on the periodic grid.
//!
//! Conventions: `forward` computes plain DFT sums
//! `fhat(m) = sum_x f(x) exp(-2 pi i m.x / n)` axis by axis (no
//! normalisation), `inverse` divides by n^d, so `inverse(forward(f)) = f`.
//! The lattice frequency of mode index m is `2 pi m_signed / box_length`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::sync::Mutex;

use crate::error::{Result, RwError};
use crate::field::Field;
use crate::grid::TorusGrid;

/// Transform of a two-component field: mode coefficients per component.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub grid: TorusGrid,
    pub comp1: Vec<Complex64>,
    pub comp2: Vec<Complex64>,
}

/// FFT engine caching plans per length.
pub struct Fourier {
    planner: Mutex<FftPlanner<f64>>,
}

impl Default for Fourier {
    fn default() -> Self {
        Self::new()
    }
}

impl Fourier {
    pub fn new() -> Self {
        Self {
            planner: Mutex::new(FftPlanner::new()),
        }
    }

    fn transform_axes(&self, grid: &TorusGrid, data: &mut [Complex64], forward: bool) {
        let n = grid.n();
        let fft = {
            let mut planner = self.planner.lock().unwrap();
            if forward {
                planner.plan_fft_forward(n)
            } else {
                planner.plan_fft_inverse(n)
            }
        };
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..grid.dim() {
            for (base, stride) in grid.lines(axis) {
                for i in 0..n {
                    line[i] = data[base + i * stride];
                }
                fft.process(&mut line);
                for i in 0..n {
                    data[base + i * stride] = line[i];
                }
            }
        }
    }

    /// Forward DFT of both components.
    pub fn forward(&self, field: &Field) -> Result<SpectralField> {
        if !field.is_finite() {
            return Err(RwError::InvalidField("fourier_forward".into()));
        }
        let grid = *field.grid();
        let mut comp1 = field.comp1.clone();
        let mut comp2 = field.comp2.clone();
        self.transform_axes(&grid, &mut comp1, true);
        self.transform_axes(&grid, &mut comp2, true);
        Ok(SpectralField { grid, comp1, comp2 })
    }

    /// Inverse DFT: `inverse(forward(f)) = f`.
    pub fn inverse(&self, coeffs: &SpectralField) -> Result<Field> {
        let grid = coeffs.grid;
        if coeffs.comp1.len() != grid.len() || coeffs.comp2.len() != grid.len() {
            return Err(RwError::DimensionMismatch("fourier_inverse".into()));
        }
        let mut comp1 = coeffs.comp1.clone();
        let mut comp2 = coeffs.comp2.clone();
        self.transform_axes(&grid, &mut comp1, false);
        self.transform_axes(&grid, &mut comp2, false);
        let scale = Complex64::new(1.0 / grid.len() as f64, 0.0);
        for z in comp1.iter_mut().chain(comp2.iter_mut()) {
            *z *= scale;
        }
        Field::from_components(grid, comp1, comp2)
    }

    /// In-place forward transform of a single scalar component.
    pub fn forward_scalar(&self, grid: &TorusGrid, data: &mut [Complex64]) {
        self.transform_axes(grid, data, true);
    }

    /// In-place inverse transform (normalised) of a single scalar component.
    pub fn inverse_scalar(&self, grid: &TorusGrid, data: &mut [Complex64]) {
        self.transform_axes(grid, data, false);
        let scale = Complex64::new(1.0 / grid.len() as f64, 0.0);
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Apply a scalar Fourier multiplier `m(zeta)` to both components.
    pub fn multiplier<F: Fn(&[f64]) -> Complex64>(&self, field: &Field, m: F) -> Result<Field> {
        let mut spec = self.forward(field)?;
        let grid = spec.grid;
        for idx in 0..grid.len() {
            let zeta = grid.frequency_vector(idx);
            let w = m(&zeta);
            spec.comp1[idx] *= w;
            spec.comp2[idx] *= w;
        }
        self.inverse(&spec)
    }
}

/// Spectral l2 energy `n^{-d} h^d sum |fhat|^2`; equals `lp_norm(f,2)^2` by
/// Parseval.
pub fn spectral_energy(spec: &SpectralField) -> f64 {
    let norm = spec.grid.cell_volume() / spec.grid.len() as f64;
    let s = crate::util::pairwise_sum_by(spec.grid.len(), |i| {
        spec.comp1[i].norm_sqr() + spec.comp2[i].norm_sqr()
    });
    norm * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{lp_norm, random_field};

    #[test]
    fn pure_mode_is_single_coefficient() {
        let g = TorusGrid::new(1, 32, 2.0).unwrap();
        let k = 5i64;
        let mut f = Field::zeros(g);
        for i in 0..32 {
            let x = g.coord(i);
            let phase = 2.0 * std::f64::consts::PI * k as f64 * x / g.box_length();
            f.comp1[i] = Complex64::new(phase.cos(), phase.sin());
        }
        let spec = Fourier::new().forward(&f).unwrap();
        for m in 0..32 {
            let mag = spec.comp1[m].norm();
            if g.signed_mode(m) == k {
                assert!((mag - 32.0).abs() < 1e-9);
            } else {
                assert!(mag < 1e-9, "mode {m} has magnitude {mag}");
            }
        }
    }

    #[test]
    fn delta_has_flat_spectrum() {
        let g = TorusGrid::new(2, 8, 1.0).unwrap();
        let f = Field::delta(g, 11);
        let spec = Fourier::new().forward(&f).unwrap();
        for z in &spec.comp1 {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let fft = Fourier::new();
        for (d, n) in [(1usize, 64usize), (2, 16), (3, 8)] {
            let g = TorusGrid::new(d, n, 1.7).unwrap();
            let f = random_field(g, 42 + d as u64);
            let spec = fft.forward(&f).unwrap();
            let back = fft.inverse(&spec).unwrap();
            let err = crate::util::rel_l2(&back.comp1, &f.comp1)
                .max(crate::util::rel_l2(&back.comp2, &f.comp2));
            assert!(err < 1e-12, "round trip err {err} at d={d}");
            let l2 = lp_norm(&f, 2.0).unwrap();
            let energy = spectral_energy(&spec);
            assert!(
                ((l2 * l2 - energy) / energy).abs() < 1e-12,
                "parseval defect at d={d}"
            );
        }
    }

    #[test]
    fn parseval_over_seed_family() {
        let fft = Fourier::new();
        let g = TorusGrid::new(2, 16, 2.0).unwrap();
        for seed in 0..100 {
            let f = random_field(g, seed);
            let spec = fft.forward(&f).unwrap();
            let l2sq = lp_norm(&f, 2.0).unwrap().powi(2);
            let energy = spectral_energy(&spec);
            assert!(((l2sq - energy) / energy).abs() < 1e-12);
        }
    }
}
