use crate::error::{Result, RwError};

/// Periodic computational box `[0, box_length)^d` sampled with `n` points per
/// axis, row-major with the last axis contiguous.
///
/// `n` is a power of two so every axis supports an FFT, and the total number
/// of degrees of freedom of a two-component field is `2 n^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    d: usize,
    n: usize,
    box_length: f64,
}

impl TorusGrid {
    pub fn new(d: usize, n: usize, box_length: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(RwError::InvalidGrid(format!("dimension {d} not in 1..=3")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(RwError::InvalidGrid(format!(
                "n = {n} must be a power of two >= 8"
            )));
        }
        if !(box_length > 0.0) || !box_length.is_finite() {
            return Err(RwError::InvalidGrid(format!("box_length = {box_length}")));
        }
        Ok(Self { d, n, box_length })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Grid spacing h = box_length / n.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    /// Number of grid points n^d.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume h^d.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    /// Signed Fourier mode for index `m` in `0..n`: maps to `m` or `m - n`,
    /// with the Nyquist index going to `-n/2`.
    pub fn signed_mode(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Physical frequency 2*pi*m / box_length for signed mode m.
    pub fn frequency(&self, m: i64) -> f64 {
        2.0 * std::f64::consts::PI * m as f64 / self.box_length
    }

    /// Frequency vector of the lattice point with flat index `idx`.
    pub fn frequency_vector(&self, idx: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d);
        let mut rem = idx;
        let mut div = self.len();
        for _ in 0..self.d {
            div /= self.n;
            let m = rem / div;
            rem %= div;
            out.push(self.frequency(self.signed_mode(m)));
        }
        out
    }

    /// Largest frequency magnitude representable per axis (Nyquist).
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    /// Flat index of multi-index `ix` (row-major, last axis fastest).
    pub fn flat_index(&self, ix: &[usize]) -> usize {
        debug_assert_eq!(ix.len(), self.d);
        let mut idx = 0;
        for &i in ix {
            debug_assert!(i < self.n);
            idx = idx * self.n + i;
        }
        idx
    }

    /// Multi-index of flat index.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.d];
        for k in (0..self.d).rev() {
            out[k] = idx % self.n;
            idx /= self.n;
        }
        out
    }

    /// Physical coordinate of a 1D index.
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Flat index of the box-center grid point.
    pub fn center_index(&self) -> usize {
        let c = vec![self.n / 2; self.d];
        self.flat_index(&c)
    }

    /// Periodic displacement `a - b` reduced to `(-l/2, l/2]`.
    pub fn periodic_delta(&self, a: f64, b: f64) -> f64 {
        let l = self.box_length;
        let mut dt = (a - b) % l;
        if dt > 0.5 * l {
            dt -= l;
        }
        if dt <= -0.5 * l {
            dt += l;
        }
        dt
    }

    /// Euclidean periodic distance between grid points with flat indices a, b.
    pub fn periodic_distance(&self, a: usize, b: usize) -> f64 {
        let ia = self.multi_index(a);
        let ib = self.multi_index(b);
        let mut s = 0.0;
        for k in 0..self.d {
            let dt = self.periodic_delta(self.coord(ia[k]), self.coord(ib[k]));
            s += dt * dt;
        }
        s.sqrt()
    }

    /// Iterate over all lines along `axis`: yields (base flat index, stride).
    pub fn lines(&self, axis: usize) -> Vec<(usize, usize)> {
        assert!(axis < self.d);
        let n = self.n;
        let total = self.len();
        let stride = n.pow((self.d - 1 - axis) as u32);
        let mut out = Vec::with_capacity(total / n);
        // Enumerate all flat indices whose coordinate along `axis` is zero.
        let block = stride * n;
        let mut base = 0;
        while base < total {
            for off in 0..stride {
                out.push((base + off, stride));
            }
            base += block;
        }
        out
    }
}
