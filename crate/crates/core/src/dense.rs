//! Dense matrix functions used by the small-size exact routes: Pade
//! scaling-and-squaring exponentials, complex Schur form with a triangular
//! square root, and a general eigendecomposition (Schur eigenvalues plus
//! inverse iteration for vectors).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, RwError};

type CMat = DMatrix<Complex64>;
type RMat = DMatrix<f64>;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm_c(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// exp(A) for complex A by Pade-13 scaling and squaring.
pub fn expm_complex(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let norm = one_norm_c(a);
    let theta13 = 5.371920351148152;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let a_s = a.map(|z| z / (2f64.powi(s)));
    let ident = CMat::identity(n, n);
    let a2 = &a_s * &a_s;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &PADE13;
    let u_inner = &a6 * (a6.map(|z| z * b[13]) + a4.map(|z| z * b[11]) + a2.map(|z| z * b[9]))
        + a6.map(|z| z * b[7])
        + a4.map(|z| z * b[5])
        + a2.map(|z| z * b[3])
        + ident.map(|z| z * b[1]);
    let u = &a_s * u_inner;
    let v = &a6 * (a6.map(|z| z * b[12]) + a4.map(|z| z * b[10]) + a2.map(|z| z * b[8]))
        + a6.map(|z| z * b[6])
        + a4.map(|z| z * b[4])
        + a2.map(|z| z * b[2])
        + ident.map(|z| z * b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Pade denominator is nonsingular for scaled input");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// exp(A) for real A.
pub fn expm_real(a: &RMat) -> RMat {
    let ac = a.map(|x| Complex64::new(x, 0.0));
    expm_complex(&ac).map(|z| z.re)
}

/// Convert a real Schur pair (Q, T) with 2x2 blocks into a complex Schur
/// pair (Qc, Tc) with Tc upper triangular.
fn rsf_to_csf(q: &RMat, t: &RMat) -> (CMat, CMat) {
    let n = t.nrows();
    let mut qc = q.map(|x| Complex64::new(x, 0.0));
    let mut tc = t.map(|x| Complex64::new(x, 0.0));
    let mut j = 0usize;
    while j + 1 < n {
        let sub = tc[(j + 1, j)];
        if sub.norm() > 1e-300 {
            // 2x2 block rows j, j+1: unitary rotation making it triangular.
            let a11 = tc[(j, j)];
            let a12 = tc[(j, j + 1)];
            let a21 = tc[(j + 1, j)];
            let a22 = tc[(j + 1, j + 1)];
            // Eigenvalue of the block (complex pair).
            let tr = (a11 + a22) * 0.5;
            let det = a11 * a22 - a12 * a21;
            let disc = (tr * tr - det).sqrt();
            let mu = tr + disc;
            // Null vector of (block - mu I).
            let (v1, v2) = if (a11 - mu).norm() > a21.norm() {
                (a12, mu - a11)
            } else {
                (mu - a22, a21)
            };
            let nrm = (v1.norm_sqr() + v2.norm_sqr()).sqrt();
            let (c, s) = (v1 / nrm, v2 / nrm);
            // Givens-like unitary G = [[c*, s*], [-s, c]] applied to rows and
            // columns j, j+1.
            for col in 0..n {
                let x = tc[(j, col)];
                let y = tc[(j + 1, col)];
                tc[(j, col)] = c.conj() * x + s.conj() * y;
                tc[(j + 1, col)] = -s * x + c * y;
            }
            for row in 0..n {
                let x = tc[(row, j)];
                let y = tc[(row, j + 1)];
                tc[(row, j)] = x * c + y * s;
                tc[(row, j + 1)] = -x * s.conj() + y * c.conj();
            }
            for row in 0..n {
                let x = qc[(row, j)];
                let y = qc[(row, j + 1)];
                qc[(row, j)] = x * c + y * s;
                qc[(row, j + 1)] = -x * s.conj() + y * c.conj();
            }
            tc[(j + 1, j)] = Complex64::default();
            j += 2;
        } else {
            tc[(j + 1, j)] = Complex64::default();
            j += 1;
        }
    }
    // Zero the strictly lower part (rounding residue).
    for i in 0..n {
        for k in 0..i {
            tc[(i, k)] = Complex64::default();
        }
    }
    (qc, tc)
}

fn try_schur_robust(a: &RMat) -> Result<nalgebra::Schur<f64, nalgebra::Dyn>> {
    if let Some(s) = a.clone().try_schur(1e-9, 200_000) {
        return Ok(s);
    }
    // The Francis iteration can stall on highly degenerate spectra (repeated
    // +- pairs, large kernels). Retry on a tiny seeded perturbation; callers
    // refine eigenpairs against the unperturbed matrix afterwards.
    use rand::Rng;
    let n = a.nrows();
    let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    for attempt in 0..4 {
        let eps = 1e-10 * scale * 10f64.powi(attempt);
        let mut rng = crate::util::rng_for(0x5c47, attempt as u64);
        let mut ap = a.clone();
        for j in 0..n {
            for i in 0..n {
                ap[(i, j)] += eps * (rng.random::<f64>() - 0.5);
            }
        }
        if let Some(s) = ap.try_schur(1e-9, 200_000) {
            return Ok(s);
        }
    }
    Err(RwError::Eigensolver(
        "real Schur iteration did not converge (with perturbation retries)".into(),
    ))
}

/// Eigenvalues of a real matrix via a robust Schur iteration. Values from a
/// perturbed retry carry an O(1e-10 |A|) uncertainty.
pub fn schur_eigenvalues(a: &RMat) -> Result<Vec<Complex64>> {
    let schur = try_schur_robust(a)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect())
}

/// Complex Schur decomposition of a real matrix: A = Q T Q^H with T upper
/// triangular.
pub fn complex_schur(a: &RMat) -> Result<(CMat, CMat)> {
    let (q, t) = try_schur_robust(a)?.unpack();
    Ok(rsf_to_csf(&q, &t))
}

/// Upper-triangular square root (Bjorck-Hammarling recurrence).
fn sqrt_triangular(t: &CMat) -> CMat {
    let n = t.nrows();
    let mut r = CMat::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = t[(i, i)].sqrt();
    }
    for off in 1..n {
        for i in 0..n - off {
            let j = i + off;
            let mut s = t[(i, j)];
            for k in (i + 1)..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            let den = r[(i, i)] + r[(j, j)];
            r[(i, j)] = if den.norm() > 1e-300 {
                s / den
            } else {
                Complex64::default()
            };
        }
    }
    r
}

/// Principal square root of a real matrix via the complex Schur form, with
/// an upward spectral shift when eigenvalues dip below `-shift_tol`.
///
/// Returns the square-root factor and the shift actually applied.
pub fn sqrtm_via_schur(a: &RMat, shift_tol: f64) -> Result<(CMat, f64)> {
    let (q, mut t) = complex_schur(a)?;
    let min_re = (0..t.nrows())
        .map(|i| t[(i, i)].re)
        .fold(f64::INFINITY, f64::min);
    let shift = if min_re < -shift_tol {
        -min_re + shift_tol
    } else {
        0.0
    };
    if shift > 0.0 {
        for i in 0..t.nrows() {
            t[(i, i)] += Complex64::new(shift, 0.0);
        }
    }
    let r = sqrt_triangular(&t);
    let qh = q.adjoint();
    Ok((&q * r * qh, shift))
}

/// Eigendecomposition of a general real matrix: Schur eigenvalues plus one
/// step of inverse iteration per eigenvalue for the vectors.
///
/// Returns (eigenvalues, eigenvector matrix, max relative residual).
pub struct GeneralEig {
    pub values: Vec<Complex64>,
    pub vectors: CMat,
    pub max_residual: f64,
}

pub fn general_eig(a: &RMat) -> Result<GeneralEig> {
    let n = a.nrows();
    let shifts = schur_eigenvalues(a)?;
    let ac: CMat = a.map(|x| Complex64::new(x, 0.0));
    let norm_a = one_norm_c(&ac).max(1e-300);
    let mut vectors = CMat::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    let mut max_residual = 0.0f64;
    let mut rng = crate::util::rng_for(0x11e1, 1);
    use rand::Rng;
    for (k, &shift) in shifts.iter().enumerate() {
        // Keep the shift slightly off the eigenvalue so the solve is merely
        // ill-conditioned, which is what inverse iteration wants.
        let eps = 1e-10 * norm_a;
        let shifted = {
            let mut m = ac.clone();
            for i in 0..n {
                m[(i, i)] -= shift + Complex64::new(eps, eps);
            }
            m
        };
        let lu = shifted.lu();
        let mut v = DVector::<Complex64>::from_fn(n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        v /= Complex64::new(v.norm(), 0.0);
        for _ in 0..3 {
            let solved = lu.solve(&v);
            match solved {
                Some(w) => {
                    let nn = w.norm();
                    if !nn.is_finite() || nn == 0.0 {
                        break;
                    }
                    v = w / Complex64::new(nn, 0.0);
                }
                None => break,
            }
        }
        // Rayleigh refinement removes the shift perturbation from the value.
        let av = &ac * &v;
        let nv = v.norm();
        let lam = v.dotc(&av) / Complex64::new(nv * nv, 0.0);
        let res = (&av - v.map(|z| z * lam)).norm() / norm_a;
        max_residual = max_residual.max(res);
        values.push(lam);
        vectors.set_column(k, &v);
    }
    Ok(GeneralEig {
        values,
        vectors,
        max_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_real(n: usize, seed: u64) -> RMat {
        let mut rng = crate::util::rng_for(seed, 3);
        RMat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5)
    }

    #[test]
    fn expm_matches_series_small() {
        let a = random_real(6, 1) * 0.3;
        let e = expm_real(&a);
        // Taylor series oracle
        let mut term = RMat::identity(6, 6);
        let mut sum = RMat::identity(6, 6);
        for k in 1..30 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        assert!((e - sum).norm() < 1e-12);
    }

    #[test]
    fn expm_group_property() {
        let a = random_real(8, 2);
        let e1 = expm_real(&(a.clone() * 0.7));
        let e2 = expm_real(&(a.clone() * 0.3));
        let e = expm_real(&a);
        assert!((e1 * e2 - e).norm() < 1e-10);
    }

    #[test]
    fn schur_sqrt_squares_back() {
        let base = random_real(12, 5);
        // Make it comfortably positive-spectrum: A = B B^T + 0.5 I.
        let a = &base * base.transpose() + RMat::identity(12, 12) * 0.5;
        let (r, shift) = sqrtm_via_schur(&a, 1e-8).unwrap();
        assert_eq!(shift, 0.0);
        let sq = &r * &r;
        let ac = a.map(|x| Complex64::new(x, 0.0));
        assert!((sq - ac).map(|z| z.norm()).max() < 1e-9);
    }

    #[test]
    fn schur_sqrt_shift_reported() {
        let mut a = RMat::identity(4, 4);
        a[(0, 0)] = -0.5;
        let (_, shift) = sqrtm_via_schur(&a, 1e-8).unwrap();
        assert!(shift >= 0.5);
    }

    #[test]
    fn general_eig_reconstructs() {
        let a = random_real(20, 9);
        let eig = general_eig(&a).unwrap();
        assert!(eig.max_residual < 1e-8, "residual {}", eig.max_residual);
        // Trace equals eigenvalue sum.
        let tr: Complex64 = (0..20).map(|i| Complex64::new(a[(i, i)], 0.0)).sum();
        let s: Complex64 = eig.values.iter().sum();
        assert!((tr - s).norm() < 1e-8);
    }
}
