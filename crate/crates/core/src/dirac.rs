//! The structured first-order block system `D_a`, its one-parameter
//! exponentials `exp(i r theta.D_a)`, the polar transform calculus
//! `psi(D_a) = (2 pi)^{-d} int psihat(xi) exp(i xi.D_a) f dxi`, finite-speed
//! measurements, and the group-law probe.
//!
//! Per axis j the first-order factors are
//! `U_j = -(mult by a_{j+d} at nodes) . backward difference` and
//! `V_j = (mult by a_j at midpoints) . forward difference`, the pairing for
//! which `U_j V_j` and `V_j U_j` reproduce the flux-form blocks of
//! [`crate::spectral1d`] entrywise, so `sum_j D_j^2 = diag(L1, L2)` holds at
//! assembly.
//!
//! `exp(i xi.D_a)` always means the exponential of the summed generator
//! `sum_j xi_j D_j`. Whether the components generate commuting groups is a
//! measured quantity (see [`group_law_probe`]), never an assumption.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::coeffs::CoefficientProfile;
use crate::dense::{general_eig, GeneralEig};
use crate::error::{Result, RwError};
use crate::fft::Fourier;
use crate::field::Field;
use crate::grid::TorusGrid;
use crate::krylov::{expv_i, LinOp};
use crate::spectral1d::{assemble_block, eigendecompose, Block1D, BlockKind, SpectralBlock1D};

/// Degrees of freedom above which the dense per-direction eigendecomposition
/// is refused.
pub const DENSE_EIG_LIMIT: usize = 9000;

#[derive(Debug, Clone)]
struct AxisFactors {
    /// `a_{j+d}` at nodes (multiplier of U_j).
    u_coeff: Vec<f64>,
    /// `a_j` at midpoints (multiplier of V_j, stored at the left node).
    v_coeff: Vec<f64>,
}

/// Discretised `D_a` with per-axis factors, flux-form blocks, spectral
/// caches, and a per-direction eigendecomposition cache.
pub struct DiracOperator {
    grid: TorusGrid,
    profile: CoefficientProfile,
    axes: Vec<AxisFactors>,
    blocks1: Vec<Block1D>,
    blocks2: Vec<Block1D>,
    spec1: Vec<SpectralBlock1D>,
    spec2: Vec<SpectralBlock1D>,
    fourier: Fourier,
    /// Frequency vectors of every lattice mode (flat index order).
    freqs: Vec<Vec<f64>>,
    direction_cache: Mutex<HashMap<String, Arc<DirectionEig>>>,
}

/// How `exp(i xi . D_a)` is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpBackend {
    /// Dense per-direction eigendecomposition (2 n^d <= 9000).
    DenseEig,
    /// Matrix-free Arnoldi exponential-times-vector.
    Krylov,
    /// Constant coefficients: exact mode-by-mode symbol exponential;
    /// otherwise dense when small, Krylov when not.
    Auto,
}

pub fn assemble_dirac(profile: &CoefficientProfile, grid: &TorusGrid) -> Result<DiracOperator> {
    if profile.dim() != grid.dim() {
        return Err(RwError::DimensionMismatch(
            "profile dimension vs grid dimension".into(),
        ));
    }
    if grid.dim() > 3 {
        return Err(RwError::Unsupported("dimension > 3".into()));
    }
    if profile.n() != grid.n() {
        return Err(RwError::DimensionMismatch(
            "profile sample count vs grid".into(),
        ));
    }
    let d = grid.dim();
    let mut axes = Vec::with_capacity(d);
    let mut blocks1 = Vec::with_capacity(d);
    let mut blocks2 = Vec::with_capacity(d);
    let mut spec1 = Vec::with_capacity(d);
    let mut spec2 = Vec::with_capacity(d);
    for axis in 0..d {
        let (a, b) = profile.axis_pair(axis);
        axes.push(AxisFactors {
            u_coeff: b.nodes.clone(),
            v_coeff: a.mids.clone(),
        });
        let b1 = assemble_block(a, b, grid, BlockKind::L1)?;
        let b2 = assemble_block(a, b, grid, BlockKind::L2)?;
        spec1.push(eigendecompose(&b1)?);
        spec2.push(eigendecompose(&b2)?);
        blocks1.push(b1);
        blocks2.push(b2);
    }
    let freqs = (0..grid.len()).map(|i| grid.frequency_vector(i)).collect();
    Ok(DiracOperator {
        grid: *grid,
        profile: profile.clone(),
        axes,
        blocks1,
        blocks2,
        spec1,
        spec2,
        fourier: Fourier::new(),
        freqs,
        direction_cache: Mutex::new(HashMap::new()),
    })
}

impl DiracOperator {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn profile(&self) -> &CoefficientProfile {
        &self.profile
    }

    pub fn fourier(&self) -> &Fourier {
        &self.fourier
    }

    pub fn is_constant(&self) -> bool {
        self.profile.is_constant()
    }

    pub fn block1(&self, axis: usize) -> &Block1D {
        &self.blocks1[axis]
    }

    pub fn block2(&self, axis: usize) -> &Block1D {
        &self.blocks2[axis]
    }

    pub fn spectral1(&self, axis: usize) -> &SpectralBlock1D {
        &self.spec1[axis]
    }

    pub fn spectral2(&self, axis: usize) -> &SpectralBlock1D {
        &self.spec2[axis]
    }

    pub fn frequency(&self, idx: usize) -> &[f64] {
        &self.freqs[idx]
    }

    /// Constant values `(a_j, a_{j+d})` per axis for a constant profile.
    fn constant_pairs(&self) -> Vec<(f64, f64)> {
        (0..self.grid.dim())
            .map(|axis| {
                let (a, b) = self.profile.axis_pair(axis);
                (a.nodes[0], b.nodes[0])
            })
            .collect()
    }

    /// `(U_j w)`: `-(b_k)(w_k - w_{k-1})/h` along axis j.
    pub fn apply_u(&self, axis: usize, w: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.n();
        let h = self.grid.spacing();
        let coeff = &self.axes[axis].u_coeff;
        for (base, stride) in self.grid.lines(axis) {
            for k in 0..n {
                let idx = base + k * stride;
                let prev = base + ((k + n - 1) % n) * stride;
                out[idx] = -coeff[k] * (w[idx] - w[prev]) / h;
            }
        }
    }

    /// `(V_j u)`: `a_{k+1/2}(u_{k+1} - u_k)/h` along axis j.
    pub fn apply_v(&self, axis: usize, u: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.n();
        let h = self.grid.spacing();
        let coeff = &self.axes[axis].v_coeff;
        for (base, stride) in self.grid.lines(axis) {
            for k in 0..n {
                let idx = base + k * stride;
                let next = base + ((k + 1) % n) * stride;
                out[idx] = coeff[k] * (u[next] - u[idx]) / h;
            }
        }
    }

    /// Plain transpose of `U_j`.
    fn apply_u_t(&self, axis: usize, w: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.n();
        let h = self.grid.spacing();
        let coeff = &self.axes[axis].u_coeff;
        for (base, stride) in self.grid.lines(axis) {
            for k in 0..n {
                let idx = base + k * stride;
                let kn = (k + 1) % n;
                let next = base + kn * stride;
                out[idx] = (coeff[kn] * w[next] - coeff[k] * w[idx]) / h;
            }
        }
    }

    /// Plain transpose of `V_j`.
    fn apply_v_t(&self, axis: usize, u: &[Complex64], out: &mut [Complex64]) {
        let n = self.grid.n();
        let h = self.grid.spacing();
        let coeff = &self.axes[axis].v_coeff;
        for (base, stride) in self.grid.lines(axis) {
            for k in 0..n {
                let idx = base + k * stride;
                let km = (k + n - 1) % n;
                let prev = base + km * stride;
                out[idx] = -(coeff[k] * u[idx] - coeff[km] * u[prev]) / h;
            }
        }
    }

    /// `theta . D_a` applied to a field: `(sum theta_j U_j F, sum theta_j V_j f)`.
    pub fn apply_dtheta(&self, theta: &[f64], f: &Field) -> Field {
        let nn = self.grid.len();
        let mut out = Field::zeros(self.grid);
        let mut scratch = vec![Complex64::default(); nn];
        for (axis, &t) in theta.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            self.apply_u(axis, &f.comp2, &mut scratch);
            for (o, s) in out.comp1.iter_mut().zip(&scratch) {
                *o += t * s;
            }
            self.apply_v(axis, &f.comp1, &mut scratch);
            for (o, s) in out.comp2.iter_mut().zip(&scratch) {
                *o += t * s;
            }
        }
        out
    }

    /// Plain transpose of `theta . D_a` (for adjoint applications).
    pub fn apply_dtheta_t(&self, theta: &[f64], f: &Field) -> Field {
        let nn = self.grid.len();
        let mut out = Field::zeros(self.grid);
        let mut scratch = vec![Complex64::default(); nn];
        for (axis, &t) in theta.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            self.apply_v_t(axis, &f.comp2, &mut scratch);
            for (o, s) in out.comp1.iter_mut().zip(&scratch) {
                *o += t * s;
            }
            self.apply_u_t(axis, &f.comp1, &mut scratch);
            for (o, s) in out.comp2.iter_mut().zip(&scratch) {
                *o += t * s;
            }
        }
        out
    }

    /// `sum_j D_j^2 f = (L1 f1, L2 f2)` through the first-order factors.
    pub fn apply_square(&self, f: &Field) -> Field {
        let nn = self.grid.len();
        let mut out = Field::zeros(self.grid);
        let mut mid = vec![Complex64::default(); nn];
        let mut res = vec![Complex64::default(); nn];
        for axis in 0..self.grid.dim() {
            self.apply_v(axis, &f.comp1, &mut mid);
            self.apply_u(axis, &mid, &mut res);
            for (o, s) in out.comp1.iter_mut().zip(&res) {
                *o += s;
            }
            self.apply_u(axis, &f.comp2, &mut mid);
            self.apply_v(axis, &mid, &mut res);
            for (o, s) in out.comp2.iter_mut().zip(&res) {
                *o += s;
            }
        }
        out
    }

    /// Continuum symbol entries `(u, v)` of `theta.D_a` at frequency `zeta`
    /// for a constant profile: the mode matrix is `[[0, u], [v, 0]]`.
    fn constant_symbol(
        &self,
        pairs: &[(f64, f64)],
        theta: &[f64],
        zeta: &[f64],
    ) -> (Complex64, Complex64) {
        let mut su = 0.0;
        let mut sv = 0.0;
        for (j, &(aj, bj)) in pairs.iter().enumerate() {
            su += theta[j] * bj * zeta[j];
            sv += theta[j] * aj * zeta[j];
        }
        (Complex64::new(0.0, -su), Complex64::new(0.0, sv))
    }

    /// Symmetrising weight candidate: `w1(x) = prod_j 1/a_{j+d}(x_j)` at
    /// nodes and `w2(x) = prod_j 1/a_j` at midpoints.
    pub fn weight_fields(&self) -> (Vec<f64>, Vec<f64>) {
        let nn = self.grid.len();
        let d = self.grid.dim();
        let mut w1 = vec![1.0; nn];
        let mut w2 = vec![1.0; nn];
        for idx in 0..nn {
            let mi = self.grid.multi_index(idx);
            for axis in 0..d {
                let (a, b) = self.profile.axis_pair(axis);
                w1[idx] /= b.nodes[mi[axis]];
                w2[idx] /= a.mids[mi[axis]];
            }
        }
        (w1, w2)
    }

    /// Weighted inner product `<f, g>_W`.
    pub fn weighted_inner(&self, f: &Field, g: &Field) -> Complex64 {
        let (w1, w2) = self.weight_fields();
        let hd = self.grid.cell_volume();
        let mut s = Complex64::default();
        for i in 0..self.grid.len() {
            s += w1[i] * f.comp1[i] * g.comp1[i].conj() + w2[i] * f.comp2[i] * g.comp2[i].conj();
        }
        s * hd
    }

    pub fn weighted_norm(&self, f: &Field) -> f64 {
        self.weighted_inner(f, f).re.max(0.0).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Per-direction eigendecompositions
// ---------------------------------------------------------------------------

type CLu = nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>;

/// Cached eigendecomposition of `theta . D_a`.
pub enum DirectionEig {
    /// The weight `diag(prod 1/a_{j+d}, prod 1/a_j)` symmetrises exactly
    /// (d = 1, and constant profiles with one shared ratio): real spectrum
    /// `+-sigma_k` obtained from an SVD of the symmetrised upper block.
    Sym {
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        sigma: Vec<f64>,
        w1_sqrt: Vec<f64>,
        w2_sqrt: Vec<f64>,
    },
    /// General eigendecomposition with measured spectral non-reality; complex
    /// eigenvalues are kept and exponentiated as they are.
    General {
        eig: GeneralEig,
        lu: CLu,
        max_im: f64,
    },
}

impl DirectionEig {
    pub fn max_im(&self) -> f64 {
        match self {
            DirectionEig::Sym { .. } => 0.0,
            DirectionEig::General { max_im, .. } => *max_im,
        }
    }

    /// Apply `exp(i r theta.D_a)` to a field.
    pub fn apply_exp(&self, grid: &TorusGrid, r: f64, f: &Field) -> Field {
        let nn = grid.len();
        match self {
            DirectionEig::Sym {
                u,
                v,
                sigma,
                w1_sqrt,
                w2_sqrt,
            } => {
                let mut g1 = vec![Complex64::default(); nn];
                let mut g2 = vec![Complex64::default(); nn];
                for i in 0..nn {
                    g1[i] = f.comp1[i] * w1_sqrt[i];
                    g2[i] = f.comp2[i] * w2_sqrt[i];
                }
                // Coefficients in the U, V columns.
                let mut cu = vec![Complex64::default(); nn];
                let mut cv = vec![Complex64::default(); nn];
                for k in 0..nn {
                    let mut su = Complex64::default();
                    let mut sv = Complex64::default();
                    for i in 0..nn {
                        su += g1[i] * u[(i, k)];
                        sv += g2[i] * v[(i, k)];
                    }
                    cu[k] = su;
                    cv[k] = sv;
                }
                // Eigenvectors (u_k, +-v_k)/sqrt2 with eigenvalues +-sigma_k.
                let mut d1 = vec![Complex64::default(); nn];
                let mut d2 = vec![Complex64::default(); nn];
                for k in 0..nn {
                    let cp = (cu[k] + cv[k]) * 0.5;
                    let cm = (cu[k] - cv[k]) * 0.5;
                    let ep = Complex64::new(0.0, r * sigma[k]).exp();
                    let em = Complex64::new(0.0, -r * sigma[k]).exp();
                    d1[k] = ep * cp + em * cm;
                    d2[k] = ep * cp - em * cm;
                }
                let mut o1 = vec![Complex64::default(); nn];
                let mut o2 = vec![Complex64::default(); nn];
                for k in 0..nn {
                    if d1[k].norm_sqr() != 0.0 {
                        for i in 0..nn {
                            o1[i] += d1[k] * u[(i, k)];
                        }
                    }
                    if d2[k].norm_sqr() != 0.0 {
                        for i in 0..nn {
                            o2[i] += d2[k] * v[(i, k)];
                        }
                    }
                }
                let mut out = Field::zeros(*grid);
                for i in 0..nn {
                    out.comp1[i] = o1[i] / w1_sqrt[i];
                    out.comp2[i] = o2[i] / w2_sqrt[i];
                }
                out
            }
            DirectionEig::General { eig, lu, .. } => {
                let dim = 2 * nn;
                let mut x = nalgebra::DVector::<Complex64>::zeros(dim);
                for i in 0..nn {
                    x[i] = f.comp1[i];
                    x[nn + i] = f.comp2[i];
                }
                let coeffs = lu.solve(&x).expect("direction eigensystem is invertible");
                let mut acc = nalgebra::DVector::<Complex64>::zeros(dim);
                for k in 0..dim {
                    let w = (Complex64::new(0.0, r) * eig.values[k]).exp();
                    let c = coeffs[k] * w;
                    if c.norm_sqr() == 0.0 {
                        continue;
                    }
                    for i in 0..dim {
                        acc[i] += c * eig.vectors[(i, k)];
                    }
                }
                let mut out = Field::zeros(*grid);
                for i in 0..nn {
                    out.comp1[i] = acc[i];
                    out.comp2[i] = acc[nn + i];
                }
                out
            }
        }
    }
}

fn direction_key(theta: &[f64]) -> String {
    theta
        .iter()
        .map(|t| format!("{t:.14e}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl DiracOperator {
    /// Dense matrix of `theta . D_a` (2 n^d square).
    pub fn dense_dtheta(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let nn = self.grid.len();
        let dim = 2 * nn;
        if dim > DENSE_EIG_LIMIT {
            return Err(RwError::DenseTooLarge {
                dof: dim,
                limit: DENSE_EIG_LIMIT,
            });
        }
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        let mut basis = Field::zeros(self.grid);
        for col in 0..dim {
            if col < nn {
                basis.comp1[col] = Complex64::new(1.0, 0.0);
            } else {
                basis.comp2[col - nn] = Complex64::new(1.0, 0.0);
            }
            let out = self.apply_dtheta(theta, &basis);
            for i in 0..nn {
                m[(i, col)] = out.comp1[i].re;
                m[(nn + i, col)] = out.comp2[i].re;
            }
            if col < nn {
                basis.comp1[col] = Complex64::default();
            } else {
                basis.comp2[col - nn] = Complex64::default();
            }
        }
        Ok(m)
    }

    /// Fetch or build the eigendecomposition of `theta . D_a` (insert-once
    /// concurrent cache).
    pub fn direction_eig(&self, theta: &[f64]) -> Result<Arc<DirectionEig>> {
        let key = direction_key(theta);
        if let Some(hit) = self.direction_cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let built = Arc::new(self.build_direction_eig(theta)?);
        let mut cache = self.direction_cache.lock().unwrap();
        Ok(cache.entry(key).or_insert(built).clone())
    }

    fn build_direction_eig(&self, theta: &[f64]) -> Result<DirectionEig> {
        let nn = self.grid.len();
        if 2 * nn > DENSE_EIG_LIMIT {
            return Err(RwError::DenseTooLarge {
                dof: 2 * nn,
                limit: DENSE_EIG_LIMIT,
            });
        }
        let (w1, w2) = self.weight_fields();
        let w1_sqrt: Vec<f64> = w1.iter().map(|w| w.sqrt()).collect();
        let w2_sqrt: Vec<f64> = w2.iter().map(|w| w.sqrt()).collect();
        // Upper block C of W^{1/2} (theta.D) W^{-1/2}; the weight symmetrises
        // exactly iff the lower block equals C^T.
        let mut c = DMatrix::<f64>::zeros(nn, nn);
        let mut basis = vec![Complex64::default(); nn];
        let mut out = vec![Complex64::default(); nn];
        for col in 0..nn {
            basis[col] = Complex64::new(1.0 / w2_sqrt[col], 0.0);
            let mut acc = vec![0.0f64; nn];
            for (axis, &t) in theta.iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                self.apply_u(axis, &basis, &mut out);
                for i in 0..nn {
                    acc[i] += t * out[i].re;
                }
            }
            for i in 0..nn {
                c[(i, col)] = w1_sqrt[i] * acc[i];
            }
            basis[col] = Complex64::default();
        }
        let mut defect = 0.0f64;
        let mut scale = 0.0f64;
        for col in 0..nn {
            basis[col] = Complex64::new(1.0 / w1_sqrt[col], 0.0);
            let mut acc = vec![0.0f64; nn];
            for (axis, &t) in theta.iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                self.apply_v(axis, &basis, &mut out);
                for i in 0..nn {
                    acc[i] += t * out[i].re;
                }
            }
            for i in 0..nn {
                let want = c[(col, i)];
                let got = w2_sqrt[i] * acc[i];
                defect = defect.max((got - want).abs());
                scale = scale.max(got.abs());
            }
            basis[col] = Complex64::default();
        }
        if defect <= 1e-12 * scale.max(1.0) {
            let svd = c.svd(true, true);
            let u = svd.u.expect("requested U factor");
            let vt = svd.v_t.expect("requested V^T factor");
            let sigma: Vec<f64> = svd.singular_values.iter().cloned().collect();
            Ok(DirectionEig::Sym {
                u,
                v: vt.transpose(),
                sigma,
                w1_sqrt,
                w2_sqrt,
            })
        } else {
            self.general_direction_eig(theta)
        }
    }

    /// Dense blocks `A = sum theta_j U_j` (comp2 -> comp1) and
    /// `B = sum theta_j V_j` (comp1 -> comp2) of `theta.D_a`.
    fn dense_blocks(&self, theta: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let nn = self.grid.len();
        let mut a = DMatrix::<f64>::zeros(nn, nn);
        let mut b = DMatrix::<f64>::zeros(nn, nn);
        let mut basis = vec![Complex64::default(); nn];
        let mut out = vec![Complex64::default(); nn];
        for col in 0..nn {
            basis[col] = Complex64::new(1.0, 0.0);
            let mut acc_a = vec![0.0f64; nn];
            let mut acc_b = vec![0.0f64; nn];
            for (axis, &t) in theta.iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                self.apply_u(axis, &basis, &mut out);
                for i in 0..nn {
                    acc_a[i] += t * out[i].re;
                }
                self.apply_v(axis, &basis, &mut out);
                for i in 0..nn {
                    acc_b[i] += t * out[i].re;
                }
            }
            for i in 0..nn {
                a[(i, col)] = acc_a[i];
                b[(i, col)] = acc_b[i];
            }
            basis[col] = Complex64::default();
        }
        (a, b)
    }

    /// General (non-symmetrisable) eigendecomposition of `theta.D_a` through
    /// the half-size product: `B A y = lambda^2 y` gives the +-lambda pairs
    /// `(A y / lambda, y)`; the lambda = 0 cluster is completed from the null
    /// space of `B`. Residuals are gated against the matrix-free apply.
    fn general_direction_eig(&self, theta: &[f64]) -> Result<DirectionEig> {
        let nn = self.grid.len();
        let dim = 2 * nn;
        let (a, b) = self.dense_blocks(theta);
        let k = &b * &a;
        let eig_k = general_eig(&k)?;
        let mu_max = eig_k
            .values
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let tau = 1e-10 * mu_max;
        let ac: DMatrix<Complex64> = a.map(|x| Complex64::new(x, 0.0));
        let mut values = Vec::with_capacity(dim);
        let mut vectors = DMatrix::<Complex64>::zeros(dim, dim);
        let mut col = 0usize;
        let mut zero_count = 0usize;
        for idx in 0..nn {
            let mu = eig_k.values[idx];
            let y = eig_k.vectors.column(idx);
            if mu.norm() > tau {
                let lam = mu.sqrt();
                let x = (&ac * y).map(|z| z / lam);
                for sign in [1.0f64, -1.0] {
                    let mut nrm2 = 0.0f64;
                    for i in 0..nn {
                        nrm2 += x[i].norm_sqr() + y[i].norm_sqr();
                    }
                    let s = nrm2.sqrt();
                    for i in 0..nn {
                        vectors[(i, col)] = x[i] * sign / s;
                        vectors[(nn + i, col)] = y[i] / s;
                    }
                    values.push(lam * sign);
                    col += 1;
                }
            } else {
                let s = y.norm();
                for i in 0..nn {
                    vectors[(nn + i, col)] = y[i] / s;
                }
                values.push(Complex64::default());
                col += 1;
                zero_count += 1;
            }
        }
        if zero_count > 0 {
            // Complete with (x, 0), B x = 0: smallest right singular vectors.
            let svd = b.clone().svd(false, true);
            let vt = svd.v_t.expect("requested V^T");
            let mut order: Vec<usize> = (0..nn).collect();
            order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
            for z in 0..zero_count {
                let row = order[z];
                for i in 0..nn {
                    vectors[(i, col)] = Complex64::new(vt[(row, i)], 0.0);
                }
                values.push(Complex64::default());
                col += 1;
            }
        }
        debug_assert_eq!(col, dim);
        // Residual gate against the matrix-free apply.
        let scale = mu_max.sqrt();
        let mut worst = 0.0f64;
        let mut probe = Field::zeros(self.grid);
        for c in (0..dim).step_by((dim / 32).max(1)) {
            for i in 0..nn {
                probe.comp1[i] = vectors[(i, c)];
                probe.comp2[i] = vectors[(nn + i, c)];
            }
            let dv = self.apply_dtheta(theta, &probe);
            let lam = values[c];
            let mut num = 0.0f64;
            for i in 0..nn {
                num += (dv.comp1[i] - lam * probe.comp1[i]).norm_sqr()
                    + (dv.comp2[i] - lam * probe.comp2[i]).norm_sqr();
            }
            worst = worst.max(num.sqrt() / scale);
        }
        if worst > 1e-6 {
            return Err(RwError::Eigensolver(format!(
                "direction eigendecomposition residual {worst:.3e}"
            )));
        }
        let max_im = values.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
        let lu = vectors.clone().lu();
        let eig = GeneralEig {
            values,
            vectors,
            max_residual: worst,
        };
        Ok(DirectionEig::General { eig, lu, max_im })
    }
}

// ---------------------------------------------------------------------------
// exp_group
// ---------------------------------------------------------------------------

struct DthetaLinOp<'a> {
    op: &'a DiracOperator,
    theta: Vec<f64>,
}

impl LinOp for DthetaLinOp<'_> {
    fn dim(&self) -> usize {
        2 * self.op.grid.len()
    }
    fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        let nn = self.op.grid.len();
        let mut f = Field::zeros(self.op.grid);
        f.comp1.copy_from_slice(&v[..nn]);
        f.comp2.copy_from_slice(&v[nn..]);
        let g = self.op.apply_dtheta(&self.theta, &f);
        out[..nn].copy_from_slice(&g.comp1);
        out[nn..].copy_from_slice(&g.comp2);
    }
}

/// Entire function `cos(r sqrt(z))` of complex `z`.
fn cos_sqrt_c(r: f64, z: Complex64) -> Complex64 {
    let rz = z * (r * r);
    if rz.norm() < 1e-8 {
        Complex64::new(1.0, 0.0) - rz * 0.5 + rz * rz / 24.0
    } else if z.im == 0.0 && z.re >= 0.0 {
        Complex64::new((r * z.re.sqrt()).cos(), 0.0)
    } else {
        (z.sqrt() * r).cos()
    }
}

/// Entire function `sin(r sqrt(z))/sqrt(z)` of complex `z` (value r at 0).
fn sinc_sqrt_c(r: f64, z: Complex64) -> Complex64 {
    let rz = z * (r * r);
    if rz.norm() < 1e-8 {
        (Complex64::new(1.0, 0.0) - rz / 6.0 + rz * rz / 120.0) * r
    } else if z.im == 0.0 && z.re >= 0.0 {
        let w = z.re.sqrt();
        Complex64::new((r * w).sin() / w, 0.0)
    } else {
        let w = z.sqrt();
        (w * r).sin() / w
    }
}

impl DiracOperator {
    /// Shared coefficient ratio `gamma = a_{j+d}/a_j` of a constant profile
    /// with commuting components; `None` when the ratios differ.
    fn proportional_ratio(&self) -> Option<f64> {
        if !self.is_constant() {
            return None;
        }
        let pairs = self.constant_pairs();
        let gamma = pairs[0].1 / pairs[0].0;
        for &(a, b) in &pairs {
            if ((b / a) - gamma).abs() > 1e-12 * gamma.abs() {
                return None;
            }
        }
        Some(gamma)
    }

    /// Exact joint functional calculus of the commuting constant-coefficient
    /// tuple: at each mode the operator acts as
    /// `g(p+) P+ + g(p-) P-` with joint spectral points
    /// `p+- = (+- sqrt(a_j a_{j+d}) zeta_j)_j` and the rank-one projectors of
    /// the shared 2x2 structure. This is the Fourier-multiplier oracle for
    /// every symbol applied through the transform calculus.
    pub fn joint_symbol_multiplier<G: Fn(&[f64]) -> Complex64>(
        &self,
        g: G,
        f: &Field,
    ) -> Result<Field> {
        let gamma = self.proportional_ratio().ok_or_else(|| {
            RwError::Unsupported(
                "joint calculus requires constant coefficients with one shared ratio".into(),
            )
        })?;
        let pairs = self.constant_pairs();
        let scale: Vec<f64> = pairs.iter().map(|&(a, b)| (a * b).sqrt()).collect();
        // Shared mode structure G = [[0, -i gamma], [i, 0]] (up to the a_j
        // zeta_j scaling): eigenvectors (-i sqrt(gamma), 1), (i sqrt(gamma), 1).
        let sg = gamma.sqrt();
        let vp = [Complex64::new(0.0, -sg), Complex64::new(1.0, 0.0)];
        let vm = [Complex64::new(0.0, sg), Complex64::new(1.0, 0.0)];
        let i_unit = Complex64::new(0.0, 1.0);
        let mut spec = self.fourier.forward(f)?;
        let mut point = vec![0.0f64; self.grid.dim()];
        for idx in 0..self.grid.len() {
            let zeta = &self.freqs[idx];
            for (j, z) in zeta.iter().enumerate() {
                point[j] = scale[j] * z;
            }
            let gp = g(&point);
            for p in point.iter_mut() {
                *p = -*p;
            }
            let gm = g(&point);
            let fv = [spec.comp1[idx], spec.comp2[idx]];
            // Solve f = c+ v+ + c- v- (the eigenvectors are oblique unless
            // gamma = 1).
            let cp = i_unit * fv[0] / (2.0 * sg) + fv[1] * 0.5;
            let cm = -i_unit * fv[0] / (2.0 * sg) + fv[1] * 0.5;
            spec.comp1[idx] = gp * cp * vp[0] + gm * cm * vm[0];
            spec.comp2[idx] = gp * cp * vp[1] + gm * cm * vm[1];
        }
        self.fourier.inverse(&spec)
    }

    /// Constant-coefficient oracle: `exp(i xi.D_a)` as the exact mode-by-mode
    /// exponential of the continuum symbol at lattice frequencies.
    pub fn fourier_symbol_exp(&self, xi: &[f64], f: &Field) -> Result<Field> {
        if !self.is_constant() {
            return Err(RwError::Unsupported(
                "fourier symbol route requires constant coefficients".into(),
            ));
        }
        let pairs = self.constant_pairs();
        let mut spec = self.fourier.forward(f)?;
        for idx in 0..self.grid.len() {
            let zeta = &self.freqs[idx];
            let (u, v) = self.constant_symbol(&pairs, xi, zeta);
            let z = u * v;
            let c = cos_sqrt_c(1.0, z);
            let s = sinc_sqrt_c(1.0, z);
            let f1 = spec.comp1[idx];
            let f2 = spec.comp2[idx];
            // exp(i M) = cos(sqrt z) I + i sinc(sqrt z) M.
            spec.comp1[idx] = c * f1 + Complex64::new(0.0, 1.0) * s * (u * f2);
            spec.comp2[idx] = c * f2 + Complex64::new(0.0, 1.0) * s * (v * f1);
        }
        self.fourier.inverse(&spec)
    }

    /// `exp(i xi . D_a) f`.
    pub fn exp_group(&self, xi: &[f64], f: &Field, backend: ExpBackend) -> Result<Field> {
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            return Ok(f.clone());
        }
        let theta: Vec<f64> = xi.iter().map(|x| x / r).collect();
        match backend {
            ExpBackend::DenseEig => {
                let eig = self.direction_eig(&theta)?;
                Ok(eig.apply_exp(&self.grid, r, f))
            }
            ExpBackend::Krylov => {
                let op = DthetaLinOp { op: self, theta };
                let nn = self.grid.len();
                let mut v = vec![Complex64::default(); 2 * nn];
                v[..nn].copy_from_slice(&f.comp1);
                v[nn..].copy_from_slice(&f.comp2);
                let out = expv_i(&op, r, &v, 1e-8)?;
                let mut g = Field::zeros(self.grid);
                g.comp1.copy_from_slice(&out[..nn]);
                g.comp2.copy_from_slice(&out[nn..]);
                Ok(g)
            }
            ExpBackend::Auto => {
                if self.is_constant() {
                    self.fourier_symbol_exp(xi, f)
                } else if 2 * self.grid.len() <= 2048 {
                    self.exp_group(xi, f, ExpBackend::DenseEig)
                } else {
                    self.exp_group(xi, f, ExpBackend::Krylov)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Polar quadrature and the transform calculus
// ---------------------------------------------------------------------------

/// Polar quadrature over xi-space: uniform directions, log-spaced radii with
/// trapezoid weights.
#[derive(Debug, Clone)]
pub struct PolarQuadrature {
    pub directions: Vec<Vec<f64>>,
    /// Direction weights summing to the sphere measure.
    pub dir_weights: Vec<f64>,
    /// Ascending radial nodes.
    pub radial_nodes: Vec<f64>,
    /// Weights for `int_{r_min}^{r_max} g(r) dr`.
    pub radial_weights: Vec<f64>,
    pub r_max: f64,
    pub r_min: f64,
}

impl PolarQuadrature {
    pub fn build(d: usize, n_dirs: usize, n_radial: usize, r_max: f64) -> Self {
        Self::build_with(d, n_dirs, n_radial, r_max, 0.02)
    }

    pub fn build_with(
        d: usize,
        n_dirs: usize,
        n_radial: usize,
        r_max: f64,
        r_min_frac: f64,
    ) -> Self {
        let (directions, dir_weights): (Vec<Vec<f64>>, Vec<f64>) = match d {
            1 => (vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]),
            2 => {
                let m = n_dirs.max(4);
                let w = 2.0 * std::f64::consts::PI / m as f64;
                (
                    (0..m)
                        .map(|k| {
                            let ang = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                            vec![ang.cos(), ang.sin()]
                        })
                        .collect(),
                    vec![w; m],
                )
            }
            3 => {
                // Fibonacci sphere: quasi-uniform direction set.
                let m = n_dirs.max(8);
                let w = 4.0 * std::f64::consts::PI / m as f64;
                let golden = (1.0 + 5f64.sqrt()) / 2.0;
                (
                    (0..m)
                        .map(|k| {
                            let z = 1.0 - (2.0 * k as f64 + 1.0) / m as f64;
                            let rho = (1.0 - z * z).max(0.0).sqrt();
                            let ang = 2.0 * std::f64::consts::PI * k as f64 / golden;
                            vec![rho * ang.cos(), rho * ang.sin(), z]
                        })
                        .collect(),
                    vec![w; m],
                )
            }
            _ => panic!("dimension {d} unsupported"),
        };
        let r_min = r_max * r_min_frac;
        let m = n_radial.max(8);
        let lgr = (r_max / r_min).ln();
        let mut radial_nodes = Vec::with_capacity(m);
        let mut radial_weights = Vec::with_capacity(m);
        for k in 0..m {
            let t = k as f64 / (m - 1) as f64;
            let r = r_min * (lgr * t).exp();
            let w = lgr / (m - 1) as f64 * r * if k == 0 || k == m - 1 { 0.5 } else { 1.0 };
            radial_nodes.push(r);
            radial_weights.push(w);
        }
        Self {
            directions,
            dir_weights,
            radial_nodes,
            radial_weights,
            r_max,
            r_min,
        }
    }

    pub fn doubled(&self, d: usize) -> Self {
        Self::build_with(
            d,
            2 * self.directions.len(),
            2 * self.radial_nodes.len(),
            self.r_max,
            self.r_min / self.r_max,
        )
    }
}

/// A symbol on frequency space entering the transform calculus.
pub trait PhillipsSymbol: Sync {
    fn eval(&self, zeta: &[f64]) -> Complex64;
    /// Closed-form Fourier transform, when available.
    fn ft_closed(&self, _xi: &[f64]) -> Option<Complex64> {
        None
    }
    /// Radius of a disc containing the support (enables refined transform
    /// sampling beyond the box period).
    fn support_radius(&self) -> Option<f64> {
        None
    }
    /// Model bound for the radial quadrature tail fraction beyond `r_max`,
    /// from the packet kernel-decay estimate
    /// `(1 + |x|^2/sigma + <omega,x>^2/sigma^2)^{-N}`. Symbols without a
    /// scale structure return `None` and are gated on the measured mass.
    fn tail_model(&self, _r_max: f64) -> Option<f64> {
        None
    }
}

/// Tail fraction of `(1 + r^2/sigma)^{-N} r dr` beyond `r_max` (2D model for
/// the packet kernel decay with N = 4).
pub fn packet_tail_model(sigma: f64, r_max: f64) -> f64 {
    (1.0 + r_max * r_max / sigma).powi(-3)
}

/// Table of a symbol on a refined frequency lattice. The symbol transform is
/// the Riemann sum `psihat(xi) = dz^d sum psi(zeta) exp(-i zeta.xi)`; its
/// images repeat at spacing `2 pi / dz`, so finer sampling (available when
/// the symbol declares a support radius) pushes the images away and lets the
/// radial quadrature reach beyond half the box length.
struct SymbolTable {
    points: Vec<(Vec<f64>, Complex64)>,
    dzeta_pow: f64,
    closed: bool,
}

impl SymbolTable {
    fn build(op: &DiracOperator, symbol: &dyn PhillipsSymbol, r_max: f64) -> Self {
        let grid = &op.grid;
        let d = grid.dim();
        let dz0 = 2.0 * std::f64::consts::PI / grid.box_length();
        let probe = vec![0.0; d];
        let closed = symbol.ft_closed(&probe).is_some();
        let mut points = Vec::new();
        let mut dz = dz0;
        if !closed {
            if let Some(radius) = symbol.support_radius() {
                // Sample finely enough that the transform's periodic images
                // stay beyond the radial range.
                let oversample = ((2.2 * r_max / grid.box_length()).ceil() as usize).clamp(1, 16);
                dz = dz0 / oversample as f64;
                let m = (radius / dz).ceil() as i64 + 1;
                let mut idx = vec![-m; d];
                'outer: loop {
                    let zeta: Vec<f64> = idx.iter().map(|&i| i as f64 * dz).collect();
                    let r2: f64 = zeta.iter().map(|z| z * z).sum();
                    if r2 <= radius * radius {
                        let v = symbol.eval(&zeta);
                        if v.norm_sqr() > 0.0 {
                            points.push((zeta, v));
                        }
                    }
                    // odometer increment
                    for k in (0..d).rev() {
                        idx[k] += 1;
                        if idx[k] <= m {
                            continue 'outer;
                        }
                        idx[k] = -m;
                    }
                    break;
                }
            } else {
                for idx in 0..grid.len() {
                    let zeta = &op.freqs[idx];
                    let v = symbol.eval(zeta);
                    if v.norm_sqr() > 0.0 {
                        points.push((zeta.clone(), v));
                    }
                }
            }
        }
        Self {
            points,
            dzeta_pow: dz.powi(d as i32),
            closed,
        }
    }

    fn ft(&self, symbol: &dyn PhillipsSymbol, xi: &[f64]) -> Complex64 {
        if self.closed {
            return symbol.ft_closed(xi).expect("closed-form transform");
        }
        let mut s = Complex64::default();
        for (zeta, v) in &self.points {
            let phase: f64 = zeta.iter().zip(xi).map(|(z, x)| z * x).sum();
            s += v * Complex64::new(0.0, -phase).exp();
        }
        s * self.dzeta_pow
    }
}

/// Backend used inside the polar transform calculus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhillipsBackend {
    /// Constant coefficients: exact mode-by-mode group exponentials.
    ConstSpectral,
    /// Cached per-direction dense eigendecompositions.
    DenseEig,
    /// Matrix-free radial marching with Arnoldi steps.
    KrylovMarch,
    Auto,
}

/// Precomputed quadrature data for a symbol batch: everything that does not
/// depend on the input field.
pub struct PreparedPhillips {
    /// `coeffs[s][dir][k] = w_dir w_k r_k^{d-1} psihat_s(r_k theta_dir)`.
    coeffs: Vec<Vec<Vec<Complex64>>>,
    /// `psihat_s(0)` for the origin correction.
    ft_zero: Vec<Complex64>,
    /// Measured fraction of quadrature mass in the outer 20% radial range.
    pub tail_fraction: f64,
}

/// Evaluate the symbol transforms on all quadrature nodes and gate on the
/// radial tail (< 1e-6 of the quadrature mass may sit in the outer range).
pub fn prepare_phillips(
    op: &DiracOperator,
    symbols: &[&dyn PhillipsSymbol],
    quad: &PolarQuadrature,
) -> Result<PreparedPhillips> {
    let d = op.grid.dim();
    let tables: Vec<SymbolTable> = symbols
        .iter()
        .map(|s| SymbolTable::build(op, *s, quad.r_max))
        .collect();
    let nr = quad.radial_nodes.len();
    let coeffs: Vec<Vec<Vec<Complex64>>> = symbols
        .par_iter()
        .zip(tables.par_iter())
        .map(|(symbol, table)| {
            quad.directions
                .iter()
                .zip(&quad.dir_weights)
                .map(|(theta, &wth)| {
                    (0..nr)
                        .map(|k| {
                            let r = quad.radial_nodes[k];
                            let xi: Vec<f64> = theta.iter().map(|t| t * r).collect();
                            table.ft(*symbol, &xi)
                                * (wth * quad.radial_weights[k] * r.powi(d as i32 - 1))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let ft_zero: Vec<Complex64> = symbols
        .iter()
        .zip(&tables)
        .map(|(s, t)| t.ft(*s, &vec![0.0; d]))
        .collect();
    // Measured mass fraction beyond 80% of the radial range (diagnostic for
    // every symbol; the gate for symbols without a scale model).
    let mut measured = vec![0.0f64; symbols.len()];
    for (s, per_dir) in coeffs.iter().enumerate() {
        let mut tail = 0.0f64;
        let mut total = 0.0f64;
        for per_node in per_dir {
            for (k, c) in per_node.iter().enumerate() {
                let mag = c.norm();
                total += mag;
                if quad.radial_nodes[k] > 0.8 * quad.r_max {
                    tail += mag;
                }
            }
        }
        measured[s] = if total > 0.0 { tail / total } else { 0.0 };
    }
    let mut tail_fraction = 0.0f64;
    for (s, symbol) in symbols.iter().enumerate() {
        let gate = symbol.tail_model(quad.r_max).unwrap_or(measured[s]);
        tail_fraction = tail_fraction.max(gate);
    }
    if tail_fraction > 1e-6 {
        return Err(RwError::QuadratureBudget {
            tail: tail_fraction,
            limit: 1e-6,
        });
    }
    Ok(PreparedPhillips {
        coeffs,
        ft_zero,
        tail_fraction: measured.iter().cloned().fold(0.0, f64::max),
    })
}

/// Apply a prepared symbol batch:
/// `psi(D_a) f = (2 pi)^{-d} sum_theta w_theta sum_k w_k r_k^{d-1}
/// psihat(r_k theta) exp(i r_k theta.D_a) f`, group work shared across the
/// batch per direction.
pub fn phillips_apply_prepared(
    op: &DiracOperator,
    prep: &PreparedPhillips,
    f: &Field,
    quad: &PolarQuadrature,
    backend: PhillipsBackend,
) -> Result<Vec<Field>> {
    let d = op.grid.dim();
    let n_sym = prep.coeffs.len();
    let backend = match backend {
        PhillipsBackend::Auto => {
            if op.is_constant() {
                PhillipsBackend::ConstSpectral
            } else if 2 * op.grid.len() <= 2048 {
                PhillipsBackend::DenseEig
            } else {
                PhillipsBackend::KrylovMarch
            }
        }
        b => b,
    };
    if backend == PhillipsBackend::ConstSpectral && !op.is_constant() {
        return Err(RwError::Unsupported(
            "spectral backend requires constant coefficients".into(),
        ));
    }
    let per_dir: Vec<Vec<Field>> = (0..quad.directions.len())
        .into_par_iter()
        .map(|dir| phillips_one_direction(op, prep, f, quad, dir, backend))
        .collect::<Result<Vec<_>>>()?;
    let norm = (2.0 * std::f64::consts::PI).powi(-(d as i32));
    let mut out: Vec<Field> = (0..n_sym).map(|_| Field::zeros(op.grid)).collect();
    for dir_fields in per_dir {
        for (acc, part) in out.iter_mut().zip(dir_fields) {
            acc.axpy(Complex64::new(1.0, 0.0), &part);
        }
    }
    // Origin correction: the ball r < r_min, where exp(i r theta.D) is the
    // identity to leading order.
    let sphere: f64 = quad.dir_weights.iter().sum();
    let origin_w = sphere * quad.r_min.powi(d as i32) / d as f64;
    for (s, field) in out.iter_mut().enumerate() {
        field.axpy(prep.ft_zero[s] * origin_w, f);
        field.scale(Complex64::new(norm, 0.0));
    }
    Ok(out)
}

fn phillips_one_direction(
    op: &DiracOperator,
    prep: &PreparedPhillips,
    f: &Field,
    quad: &PolarQuadrature,
    dir: usize,
    backend: PhillipsBackend,
) -> Result<Vec<Field>> {
    let nn = op.grid.len();
    let nr = quad.radial_nodes.len();
    let n_sym = prep.coeffs.len();
    let theta = &quad.directions[dir];
    match backend {
        PhillipsBackend::ConstSpectral => {
            let pairs = op.constant_pairs();
            let spec = op.fourier.forward(f)?;
            let mut outs: Vec<crate::fft::SpectralField> = (0..n_sym)
                .map(|_| crate::fft::SpectralField {
                    grid: op.grid,
                    comp1: vec![Complex64::default(); nn],
                    comp2: vec![Complex64::default(); nn],
                })
                .collect();
            for idx in 0..nn {
                let f1 = spec.comp1[idx];
                let f2 = spec.comp2[idx];
                if f1.norm_sqr() == 0.0 && f2.norm_sqr() == 0.0 {
                    continue;
                }
                let zeta = &op.freqs[idx];
                let (u, v) = op.constant_symbol(&pairs, theta, zeta);
                let z = u * v;
                for (s, out) in outs.iter_mut().enumerate() {
                    let cs = &prep.coeffs[s][dir];
                    let mut a = Complex64::default();
                    let mut b = Complex64::default();
                    for (k, &cc) in cs.iter().enumerate() {
                        if cc.norm_sqr() == 0.0 {
                            continue;
                        }
                        let r = quad.radial_nodes[k];
                        a += cc * cos_sqrt_c(r, z);
                        b += cc * sinc_sqrt_c(r, z);
                    }
                    out.comp1[idx] = a * f1 + Complex64::new(0.0, 1.0) * b * (u * f2);
                    out.comp2[idx] = a * f2 + Complex64::new(0.0, 1.0) * b * (v * f1);
                }
            }
            outs.iter().map(|s| op.fourier.inverse(s)).collect()
        }
        PhillipsBackend::DenseEig => {
            let eig = op.direction_eig(theta)?;
            let mut outs: Vec<Field> = (0..n_sym).map(|_| Field::zeros(op.grid)).collect();
            for k in 0..nr {
                let g = eig.apply_exp(&op.grid, quad.radial_nodes[k], f);
                for (s, out) in outs.iter_mut().enumerate() {
                    let c = prep.coeffs[s][dir][k];
                    if c.norm_sqr() > 0.0 {
                        out.axpy(c, &g);
                    }
                }
            }
            Ok(outs)
        }
        PhillipsBackend::KrylovMarch => {
            let lin = DthetaLinOp {
                op,
                theta: theta.clone(),
            };
            let mut v = vec![Complex64::default(); 2 * nn];
            v[..nn].copy_from_slice(&f.comp1);
            v[nn..].copy_from_slice(&f.comp2);
            let mut outs: Vec<Field> = (0..n_sym).map(|_| Field::zeros(op.grid)).collect();
            let mut r_prev = 0.0f64;
            for k in 0..nr {
                let r = quad.radial_nodes[k];
                v = expv_i(&lin, r - r_prev, &v, 1e-9)?;
                r_prev = r;
                let mut g = Field::zeros(op.grid);
                g.comp1.copy_from_slice(&v[..nn]);
                g.comp2.copy_from_slice(&v[nn..]);
                for (s, out) in outs.iter_mut().enumerate() {
                    let c = prep.coeffs[s][dir][k];
                    if c.norm_sqr() > 0.0 {
                        out.axpy(c, &g);
                    }
                }
            }
            Ok(outs)
        }
        PhillipsBackend::Auto => unreachable!("resolved by caller"),
    }
}

/// One-shot batch application (prepare + apply).
pub fn phillips_apply_batch(
    op: &DiracOperator,
    symbols: &[&dyn PhillipsSymbol],
    f: &Field,
    quad: &PolarQuadrature,
    backend: PhillipsBackend,
) -> Result<Vec<Field>> {
    let prep = prepare_phillips(op, symbols, quad)?;
    phillips_apply_prepared(op, &prep, f, quad, backend)
}

/// Single-symbol convenience wrapper.
pub fn phillips_apply(
    op: &DiracOperator,
    symbol: &dyn PhillipsSymbol,
    f: &Field,
    quad: &PolarQuadrature,
    backend: PhillipsBackend,
) -> Result<Field> {
    Ok(phillips_apply_batch(op, &[symbol], f, quad, backend)?.remove(0))
}

// ---------------------------------------------------------------------------
// Finite speed and the group-law probe
// ---------------------------------------------------------------------------

/// Measured propagation footprint of `exp(i xi.D_a)` applied to a centred
/// delta.
#[derive(Debug, Clone)]
pub struct SpeedReport {
    pub xi: Vec<f64>,
    /// Smallest radius containing all but `threshold` of the mass.
    pub radius: f64,
    /// radius / |xi|.
    pub kappa_hat: f64,
    /// Max over probe directions of (extent along omega)/|<omega, xi>|.
    pub directional_reach: f64,
    pub threshold: f64,
}

pub fn finite_speed_measure(
    op: &DiracOperator,
    xi: &[f64],
    threshold: f64,
    backend: ExpBackend,
) -> Result<SpeedReport> {
    let grid = *op.grid();
    let center = grid.center_index();
    let f = Field::delta(grid, center);
    let u = op.exp_group(xi, &f, backend)?;
    let nn = grid.len();
    let mut cells: Vec<(f64, f64)> = (0..nn)
        .map(|i| (grid.periodic_distance(i, center), u.abs2_at(i)))
        .collect();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = cells.iter().map(|c| c.1).sum();
    let mut outside = total;
    let mut radius = cells.last().map(|c| c.0).unwrap_or(0.0);
    for (dist, mass) in &cells {
        outside -= mass;
        if outside <= threshold * total {
            radius = *dist;
            break;
        }
    }
    let xi_norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d = grid.dim();
    let probes: Vec<Vec<f64>> = match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..16)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 16.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => PolarQuadrature::build(3, 32, 8, 1.0).directions,
    };
    let center_mi = grid.multi_index(center);
    let mut reach = 0.0f64;
    for omega in &probes {
        let dot: f64 = omega.iter().zip(xi).map(|(o, x)| o * x).sum();
        if dot.abs() < 0.1 * xi_norm.max(1e-300) {
            continue;
        }
        let mut pairs: Vec<(f64, f64)> = (0..nn)
            .map(|i| {
                let mi = grid.multi_index(i);
                let s: f64 = (0..d)
                    .map(|k| {
                        omega[k]
                            * grid.periodic_delta(grid.coord(mi[k]), grid.coord(center_mi[k]))
                    })
                    .sum();
                (s.abs(), u.abs2_at(i))
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut outside = total;
        let mut extent = pairs.last().map(|c| c.0).unwrap_or(0.0);
        for (s, mass) in &pairs {
            outside -= mass;
            if outside <= threshold * total {
                extent = *s;
                break;
            }
        }
        reach = reach.max(extent / dot.abs());
    }
    Ok(SpeedReport {
        xi: xi.to_vec(),
        radius,
        kappa_hat: radius / xi_norm,
        directional_reach: reach,
        threshold,
    })
}

/// Measured group-law defect, spectral non-reality, and the coefficient
/// commutativity indicator. For variable coefficients in d >= 2 these are
/// reported, never asserted small.
#[derive(Debug, Clone)]
pub struct GroupLawReport {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    /// Max over the family of
    /// `|e^{i xi D} e^{i eta D} f - e^{i (xi+eta) D} f|_2 / |f|_2`.
    pub defect: f64,
    /// Max |Im lambda(theta.D_a)| over the directions of xi, eta, xi+eta.
    pub spectral_non_reality: f64,
    /// `sup_j sup_x a_{j+d}/a_j - inf_k inf_x a_{k+d}/a_k`; zero iff the
    /// ratios are one shared constant.
    pub commutativity_indicator: f64,
}

pub fn group_law_probe(
    op: &DiracOperator,
    xi: &[f64],
    eta: &[f64],
    family: &[Field],
    backend: ExpBackend,
) -> Result<GroupLawReport> {
    let mut defect = 0.0f64;
    let sum: Vec<f64> = xi.iter().zip(eta).map(|(a, b)| a + b).collect();
    for f in family {
        let one = op.exp_group(eta, f, backend)?;
        let two = op.exp_group(xi, &one, backend)?;
        let direct = op.exp_group(&sum, f, backend)?;
        let diff = two.sub(&direct);
        let denom = f.norm_l2();
        if denom > 0.0 {
            defect = defect.max(diff.norm_l2() / denom);
        }
    }
    let mut non_real = 0.0f64;
    if op.is_constant() {
        let pairs = op.constant_pairs();
        for dir in [xi, eta, sum.as_slice()] {
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let theta: Vec<f64> = dir.iter().map(|x| x / norm).collect();
            for zeta in &op.freqs {
                let (u, v) = op.constant_symbol(&pairs, &theta, zeta);
                non_real = non_real.max((u * v).sqrt().im.abs());
            }
        }
    } else if 2 * op.grid.len() <= DENSE_EIG_LIMIT {
        for dir in [xi, eta, sum.as_slice()] {
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let theta: Vec<f64> = dir.iter().map(|x| x / norm).collect();
            // Spectrum through the half-size product: lambda = +- sqrt(mu).
            let (a, b) = op.dense_blocks(&theta);
            for mu in crate::dense::schur_eigenvalues(&(&b * &a))? {
                non_real = non_real.max(mu.sqrt().im.abs());
            }
        }
    }
    let d = op.grid.dim();
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    for axis in 0..d {
        let (a, b) = op.profile.axis_pair(axis);
        for (x, y) in b.nodes.iter().zip(&a.nodes) {
            let r = x / y;
            sup = sup.max(r);
            inf = inf.min(r);
        }
    }
    Ok(GroupLawReport {
        xi: xi.to_vec(),
        eta: eta.to_vec(),
        defect,
        spectral_non_reality: non_real,
        commutativity_indicator: sup - inf,
    })
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6e}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub const PROPAGATION_CSV_HEADER: &str =
    "xi,eta,defect,max_im_lambda,kappa_hat,commutativity_indicator";

/// Group-law row in the shared propagation CSV schema.
pub fn group_law_csv_row(r: &GroupLawReport) -> String {
    format!(
        "{},{},{:.6e},{:.6e},,{:.6e}",
        fmt_vec(&r.xi),
        fmt_vec(&r.eta),
        r.defect,
        r.spectral_non_reality,
        r.commutativity_indicator
    )
}

/// Finite-speed row in the shared propagation CSV schema.
pub fn speed_csv_row(r: &SpeedReport) -> String {
    format!("{},,,,{:.6e},", fmt_vec(&r.xi), r.kappa_hat)
}
