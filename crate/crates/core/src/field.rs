use num_complex::Complex64;

use crate::error::{Result, RwError};
use crate::grid::TorusGrid;
use crate::util::pairwise_sum_by;

/// A two-component complex field on a periodic grid.
///
/// The pair `(comp1, comp2)` discretises the implicitly C^2-valued functions
/// all transport-group and wave calculations act on.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    pub comp1: Vec<Complex64>,
    pub comp2: Vec<Complex64>,
}

impl Field {
    pub fn zeros(grid: TorusGrid) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            comp1: z.clone(),
            comp2: z,
        }
    }

    pub fn from_components(
        grid: TorusGrid,
        comp1: Vec<Complex64>,
        comp2: Vec<Complex64>,
    ) -> Result<Self> {
        if comp1.len() != grid.len() || comp2.len() != grid.len() {
            return Err(RwError::DimensionMismatch(format!(
                "components of lengths {}/{} on grid of {} points",
                comp1.len(),
                comp2.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, comp1, comp2 })
    }

    /// Unit impulse in the first component at flat index `idx`.
    pub fn delta(grid: TorusGrid, idx: usize) -> Self {
        let mut f = Self::zeros(grid);
        f.comp1[idx] = Complex64::new(1.0, 0.0);
        f
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> [&[Complex64]; 2] {
        [&self.comp1, &self.comp2]
    }

    pub fn components_mut(&mut self) -> [&mut Vec<Complex64>; 2] {
        [&mut self.comp1, &mut self.comp2]
    }

    pub fn is_finite(&self) -> bool {
        self.comp1
            .iter()
            .chain(self.comp2.iter())
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Pointwise C^2 magnitude squared at flat index `i`.
    pub fn abs2_at(&self, i: usize) -> f64 {
        self.comp1[i].norm_sqr() + self.comp2[i].norm_sqr()
    }

    pub fn scale(&mut self, c: Complex64) {
        for z in self.comp1.iter_mut().chain(self.comp2.iter_mut()) {
            *z *= c;
        }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    pub fn axpy(&mut self, c: Complex64, other: &Field) {
        for (z, w) in self.comp1.iter_mut().zip(&other.comp1) {
            *z += c * w;
        }
        for (z, w) in self.comp2.iter_mut().zip(&other.comp2) {
            *z += c * w;
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other);
        out
    }

    /// Unweighted L^2 pairing h^d * sum(f . conj(g)) over both components.
    pub fn inner(&self, other: &Field) -> Complex64 {
        let hd = self.grid.cell_volume();
        let n = self.grid.len();
        let re = pairwise_sum_by(n, |i| {
            (self.comp1[i] * other.comp1[i].conj() + self.comp2[i] * other.comp2[i].conj()).re
        });
        let im = pairwise_sum_by(n, |i| {
            (self.comp1[i] * other.comp1[i].conj() + self.comp2[i] * other.comp2[i].conj()).im
        });
        Complex64::new(re * hd, im * hd)
    }

    pub fn norm_l2(&self) -> f64 {
        lp_norm_unchecked(self, 2.0)
    }
}

/// Discrete L^p norm `(h^d sum_x |f(x)|_{C^2}^p)^{1/p}` for p in (1, inf).
///
/// Uses a fixed-order pairwise reduction so results are deterministic across
/// thread counts.
pub fn lp_norm(field: &Field, p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(RwError::InvalidParameter(format!(
            "p = {p} outside (1, inf)"
        )));
    }
    if !field.is_finite() {
        return Err(RwError::InvalidField("lp_norm".into()));
    }
    Ok(lp_norm_unchecked(field, p))
}

pub(crate) fn lp_norm_unchecked(field: &Field, p: f64) -> f64 {
    let n = field.grid().len();
    let hd = field.grid().cell_volume();
    let s = if p == 2.0 {
        pairwise_sum_by(n, |i| field.abs2_at(i))
    } else {
        pairwise_sum_by(n, |i| field.abs2_at(i).powf(0.5 * p))
    };
    (hd * s).powf(1.0 / p)
}

/// L^p norm of a scalar sample vector on a grid (single component).
pub fn lp_norm_scalar(grid: &TorusGrid, v: &[Complex64], p: f64) -> f64 {
    let hd = grid.cell_volume();
    let s = pairwise_sum_by(v.len(), |i| v[i].norm().powf(p));
    (hd * s).powf(1.0 / p)
}

/// Sup norm over both components.
pub fn sup_norm(field: &Field) -> f64 {
    field
        .comp1
        .iter()
        .chain(field.comp2.iter())
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Seeded random field with independent standard complex Gaussian entries.
pub fn random_field(grid: TorusGrid, seed: u64) -> Field {
    use rand::Rng;
    let mut rng = crate::util::rng_for(seed, 0xf1e1d);
    let mut f = Field::zeros(grid);
    for z in f.comp1.iter_mut().chain(f.comp2.iter_mut()) {
        // Box-Muller from uniform draws keeps us independent of distr crates.
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        *z = Complex64::new(
            r * (2.0 * std::f64::consts::PI * u2).cos(),
            r * (2.0 * std::f64::consts::PI * u2).sin(),
        );
    }
    f
}
