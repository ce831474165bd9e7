//! Small numeric helpers: deterministic reductions, smooth cutoff profiles,
//! line fits, and seeded RNG derivation.

use num_complex::Complex64;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pairwise (cascade) sum: deterministic and O(eps log n) error.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Pairwise sum of `f(i)` over `0..n` without materialising the vector for
/// small blocks.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        let len = hi - lo;
        if len <= 8 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + len / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}

pub fn pairwise_sum_complex(v: &[Complex64]) -> Complex64 {
    match v.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum_complex(&v[..mid]) + pairwise_sum_complex(&v[mid..])
        }
    }
}

/// The standard C^infinity bump exp(-1/(1-t^2)) on (-1,1), zero outside.
pub fn bump(t: f64) -> f64 {
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

/// Smooth transition S with S(t)=0 for t<=0, S(t)=1 for t>=1 and the exact
/// complement property S(t) + S(1-t) = 1.
pub fn smoothstep(t: f64) -> f64 {
    fn half(t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-1.0 / t).exp()
        }
    }
    let a = half(t);
    let b = half(1.0 - t);
    if a == 0.0 && b == 0.0 {
        return if t >= 0.5 { 1.0 } else { 0.0 };
    }
    a / (a + b)
}

/// Plateau window: 1 on |u| <= 1/2, smooth monotone decay to 0 at |u| = 1.
/// Translates at spacing 3/2 sum to exactly 1 (shoulders are complementary
/// smoothsteps), which is what makes equispaced angular sums of the squared
/// packet profile reproduce constants without aliasing ripple.
pub fn plateau_window(u: f64) -> f64 {
    smoothstep(2.0 * (1.0 - u.abs()))
}

/// Least-squares line fit `y ~ a + b x`; returns (a, b, r2).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    assert!(n >= 2.0, "need at least two points");
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

/// Deterministically derive an independent RNG for sub-task `k` of a seeded
/// computation (stable under parallel scheduling).
pub fn rng_for(seed: u64, k: u64) -> ChaCha8Rng {
    // SplitMix64 step decorrelates consecutive k.
    let mut z = seed ^ k.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    ChaCha8Rng::seed_from_u64(z)
}

/// Relative l2 distance between complex slices.
pub fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - y).norm_sqr();
        den += y.norm_sqr();
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - naive).abs() < 1e-9);
        assert!((pairwise_sum_by(v.len(), |i| v[i]) - naive).abs() < 1e-9);
    }

    #[test]
    fn smoothstep_complement() {
        for k in 0..=40 {
            let t = k as f64 / 40.0;
            let s = smoothstep(t) + smoothstep(1.0 - t);
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert_eq!(smoothstep(-0.2), 0.0);
        assert_eq!(smoothstep(1.3), 1.0);
    }

    #[test]
    fn plateau_partition_of_unity() {
        // Translates at spacing 3/2 sum to 1 everywhere.
        for k in 0..=60 {
            let u = -2.0 + 4.0 * k as f64 / 60.0;
            let mut s = 0.0;
            for m in -4..=4 {
                s += plateau_window(u + 1.5 * m as f64);
            }
            assert!((s - 1.0).abs() < 1e-14, "u={u} s={s}");
        }
    }

    #[test]
    fn line_fit_exact() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&t| 3.0 - 2.0 * t).collect();
        let (a, b, r2) = linear_fit(&x, &y);
        assert!((a - 3.0).abs() < 1e-12);
        assert!((b + 2.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }
}
