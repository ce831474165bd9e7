//! Arnoldi exponential-times-vector: computes `exp(i t A) v` for a matrix-free
//! real operator `A`, with adaptive substepping and a residual-based stopping
//! rule.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dense::expm_complex;
use crate::error::{Result, RwError};

/// Matrix-free linear operator on interleaved complex vectors.
pub trait LinOp: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[Complex64], out: &mut [Complex64]);
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

struct ArnoldiResult {
    /// Orthonormal basis columns, length m_used + 1 (last is the residual
    /// direction unless breakdown occurred).
    basis: Vec<Vec<Complex64>>,
    /// Upper Hessenberg (m_used+1) x m_used entries h[(i, j)].
    h: DMatrix<Complex64>,
    m_used: usize,
    breakdown: bool,
}

fn arnoldi(op: &dyn LinOp, v0: &[Complex64], m: usize) -> ArnoldiResult {
    let n = v0.len();
    let beta = norm(v0);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
    basis.push(v0.iter().map(|z| z / beta).collect());
    let mut h = DMatrix::<Complex64>::zeros(m + 1, m);
    let mut w = vec![Complex64::default(); n];
    let mut m_used = 0;
    let mut breakdown = false;
    for j in 0..m {
        op.apply(&basis[j], &mut w);
        // Modified Gram-Schmidt with one reorthogonalisation pass.
        for _pass in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let mut dot = Complex64::default();
                for (a, b) in w.iter().zip(q.iter()) {
                    dot += a * b.conj();
                }
                if _pass == 0 {
                    h[(i, j)] = dot;
                } else {
                    h[(i, j)] += dot;
                }
                for (a, b) in w.iter_mut().zip(q.iter()) {
                    *a -= dot * b;
                }
            }
        }
        let hn = norm(&w);
        h[(j + 1, j)] = Complex64::new(hn, 0.0);
        m_used = j + 1;
        if hn < 1e-14 {
            breakdown = true;
            break;
        }
        basis.push(w.iter().map(|z| z / hn).collect());
    }
    ArnoldiResult {
        basis,
        h,
        m_used,
        breakdown,
    }
}

/// `exp(i t A) v` with target relative accuracy `tol`.
///
/// Uses restarted Arnoldi steps; the per-step local error is estimated from
/// the Hessenberg residual term and steps are halved until it passes.
pub fn expv_i(op: &dyn LinOp, t: f64, v: &[Complex64], tol: f64) -> Result<Vec<Complex64>> {
    let beta0 = norm(v);
    if t == 0.0 || beta0 == 0.0 {
        return Ok(v.to_vec());
    }
    let m_max = 36usize.min(op.dim().saturating_sub(1).max(2));
    let mut w = v.to_vec();
    let mut t_done = 0.0f64;
    let sign = t.signum();
    let t_abs = t.abs();
    // Crude spectral scale estimate from a short Arnoldi run.
    let probe = arnoldi(op, &w, 8.min(m_max));
    let rho_est = (0..probe.m_used)
        .map(|j| {
            (0..=probe.m_used.min(probe.h.nrows() - 1))
                .map(|i| probe.h[(i, j)].norm())
                .sum::<f64>()
        })
        .fold(1e-10, f64::max);
    let mut tau = (m_max as f64 / (2.0 * rho_est)).min(t_abs);
    let mut worst_residual = 0.0f64;
    let mut steps = 0usize;
    while t_done < t_abs * (1.0 - 1e-14) {
        steps += 1;
        if steps > 100_000 {
            return Err(RwError::KrylovNoConvergence {
                residual: worst_residual,
                target: tol,
            });
        }
        tau = tau.min(t_abs - t_done);
        let ar = arnoldi(op, &w, m_max);
        let m = ar.m_used;
        let beta = norm(&w);
        loop {
            let mut hm = DMatrix::<Complex64>::zeros(m, m);
            for j in 0..m {
                for i in 0..m {
                    hm[(i, j)] = ar.h[(i, j)] * Complex64::new(0.0, sign * tau);
                }
            }
            let f = expm_complex(&hm);
            // Local error estimate: residual term h_{m+1,m} |f_{m,1}| tau.
            let err = if ar.breakdown {
                0.0
            } else {
                ar.h[(m, m - 1)].norm() * f[(m - 1, 0)].norm() * beta
            };
            let budget = tol * beta0 * (tau / t_abs).max(1e-6);
            if err <= budget || tau < 1e-13 * t_abs {
                worst_residual = worst_residual.max(err / beta0.max(1e-300));
                // w <- beta * V_m f e1
                let mut out = vec![Complex64::default(); w.len()];
                for j in 0..m {
                    let c = f[(j, 0)] * beta;
                    if c.norm_sqr() == 0.0 {
                        continue;
                    }
                    for (o, b) in out.iter_mut().zip(ar.basis[j].iter()) {
                        *o += c * b;
                    }
                }
                w = out;
                t_done += tau;
                // Gentle growth for the next step.
                if err < 0.1 * budget {
                    tau *= 1.6;
                }
                break;
            }
            tau *= 0.5;
        }
    }
    Ok(w)
}
