//! Structured Lipschitz coefficient tuples `a_1..a_2d` (each a function of a
//! single coordinate), the increasing primitive `phi(x) = int_0^x 1/a`, and
//! the bi-Lipschitz flow `chi(t,x) = phi^{-1}(t + phi(x))` it generates.

use rand::Rng;

use crate::error::{Result, RwError};
use crate::util::{bump, rng_for};

/// Generator of one periodic coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum CoeffKind {
    Constant {
        value: f64,
    },
    /// Triangle wave `base + amplitude * tri(teeth (x - phase)/l)`; merely
    /// Lipschitz, with analytic slope `4 amplitude teeth / l`.
    Sawtooth {
        base: f64,
        amplitude: f64,
        teeth: u32,
        phase: f64,
    },
    /// Smooth compactly supported bump of the given center/width on the box.
    Bump {
        base: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Piecewise-linear path with independent increments clipped to the
    /// slope cap, closed up periodically; deterministic per seed.
    RandomLipschitz {
        base: f64,
        amplitude: f64,
        slope_cap: f64,
        seed: u64,
    },
}

impl CoeffKind {
    fn describe(&self) -> String {
        match self {
            CoeffKind::Constant { value } => format!("constant value={value}"),
            CoeffKind::Sawtooth {
                base,
                amplitude,
                teeth,
                phase,
            } => format!("sawtooth base={base} amplitude={amplitude} teeth={teeth} phase={phase}"),
            CoeffKind::Bump {
                base,
                amplitude,
                center,
                width,
            } => format!("bump base={base} amplitude={amplitude} center={center} width={width}"),
            CoeffKind::RandomLipschitz {
                base,
                amplitude,
                slope_cap,
                seed,
            } => format!(
                "random_lipschitz base={base} amplitude={amplitude} slope_cap={slope_cap} seed={seed}"
            ),
        }
    }
}

/// One sampled coefficient: node and midpoint samples on a 1D axis grid plus
/// the analytic generator for off-grid evaluation.
#[derive(Debug, Clone)]
pub struct Coefficient1D {
    kind: CoeffKind,
    n: usize,
    box_length: f64,
    /// a(x_k) at nodes x_k = k h.
    pub nodes: Vec<f64>,
    /// a(x_{k+1/2}) at midpoints.
    pub mids: Vec<f64>,
    /// Grid for the piecewise-linear fallback evaluator.
    random_breaks: Option<Vec<f64>>,
    pub lambda: f64,
    pub big_lambda: f64,
    /// Discrete Lipschitz constant over node samples, periodic wrap included.
    pub lip: f64,
}

fn tri(t: f64) -> f64 {
    // Triangle wave of period 1 with range [-1, 1], peak at t = 1/4.
    let u = (t - t.floor()) * 4.0;
    if u <= 1.0 {
        u
    } else if u <= 3.0 {
        2.0 - u
    } else {
        u - 4.0
    }
}

impl Coefficient1D {
    pub fn build(kind: CoeffKind, n: usize, box_length: f64) -> Result<Self> {
        let h = box_length / n as f64;
        let random_breaks = match &kind {
            CoeffKind::RandomLipschitz {
                base,
                amplitude,
                slope_cap,
                seed,
            } => {
                if *amplitude >= *base {
                    return Err(RwError::InvalidProfile(format!(
                        "random_lipschitz amplitude {amplitude} >= base {base}"
                    )));
                }
                let mut rng = rng_for(*seed, 0xc0ef);
                let mut vals = vec![*base; n + 1];
                for k in 1..n {
                    let step: f64 = (rng.random::<f64>() * 2.0 - 1.0) * slope_cap * h;
                    let mut v = vals[k - 1] + step;
                    v = v.clamp(base - amplitude, base + amplitude);
                    vals[k] = v;
                }
                // Close periodically without exceeding the slope cap: blend
                // linearly back to the start over the last quarter.
                let tail = n / 4;
                for k in (n - tail)..n {
                    let w = (k - (n - tail)) as f64 / tail as f64;
                    vals[k] = vals[k] * (1.0 - w) + vals[0] * w;
                }
                vals[n] = vals[0];
                // Re-scan: blending can only reduce values inside the band,
                // slopes may grow by at most amplitude/tail*h; enforce cap.
                for k in 1..=n {
                    let lo = vals[k - 1] - slope_cap * h;
                    let hi = vals[k - 1] + slope_cap * h;
                    vals[k] = vals[k].clamp(lo, hi);
                }
                // Force exact closure; the clamp above kept us within reach.
                vals[n] = vals[0];
                Some(vals)
            }
            _ => None,
        };
        let eval = |x: f64| -> f64 {
            Self::eval_kind(&kind, random_breaks.as_deref(), n, box_length, x)
        };
        let nodes: Vec<f64> = (0..n).map(|k| eval(k as f64 * h)).collect();
        let mids: Vec<f64> = (0..n).map(|k| eval((k as f64 + 0.5) * h)).collect();
        let lambda = nodes
            .iter()
            .chain(mids.iter())
            .fold(f64::INFINITY, |a, &b| a.min(b));
        let big_lambda = nodes.iter().chain(mids.iter()).fold(0.0f64, |a, &b| a.max(b));
        if !(lambda > 0.0) {
            return Err(RwError::InvalidProfile(format!(
                "coefficient not positive: min {lambda} for {}",
                kind.describe()
            )));
        }
        let mut lip = 0.0f64;
        for k in 0..n {
            let next = nodes[(k + 1) % n];
            lip = lip.max((next - nodes[k]).abs() / h);
        }
        Ok(Self {
            kind,
            n,
            box_length,
            nodes,
            mids,
            random_breaks,
            lambda,
            big_lambda,
            lip,
        })
    }

    fn eval_kind(
        kind: &CoeffKind,
        breaks: Option<&[f64]>,
        n: usize,
        box_length: f64,
        x: f64,
    ) -> f64 {
        let l = box_length;
        let xr = x - l * (x / l).floor();
        match kind {
            CoeffKind::Constant { value } => *value,
            CoeffKind::Sawtooth {
                base,
                amplitude,
                teeth,
                phase,
            } => base + amplitude * tri(*teeth as f64 * (xr - phase) / l),
            CoeffKind::Bump {
                base,
                amplitude,
                center,
                width,
            } => base + amplitude * bump((xr - center) / width),
            CoeffKind::RandomLipschitz { .. } => {
                let vals = breaks.expect("random coefficient has break table");
                let h = l / n as f64;
                let t = xr / h;
                let k = (t.floor() as usize).min(n - 1);
                let w = t - k as f64;
                vals[k] * (1.0 - w) + vals[k + 1] * w
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        Self::eval_kind(
            &self.kind,
            self.random_breaks.as_deref(),
            self.n,
            self.box_length,
            x,
        )
    }

    pub fn kind(&self) -> &CoeffKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn spacing(&self) -> f64 {
        self.box_length / self.n as f64
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, CoeffKind::Constant { .. })
    }

    /// Locations inside a node cell where the generator may have a kink.
    fn kinks_in(&self, x0: f64, x1: f64) -> Vec<f64> {
        match &self.kind {
            CoeffKind::Sawtooth { teeth, phase, .. } => {
                // Kinks of tri at quarter periods: x = phase + l m / (4 teeth).
                let step = self.box_length / (4.0 * *teeth as f64);
                let mut out = Vec::new();
                let m0 = ((x0 - phase) / step).ceil() as i64;
                let mut m = m0;
                loop {
                    let x = phase + m as f64 * step;
                    if x >= x1 {
                        break;
                    }
                    if x > x0 {
                        out.push(x);
                    }
                    m += 1;
                }
                out
            }
            _ => Vec::new(),
        }
    }
}

/// The full tuple `a_1..a_2d` with shared bounds.
#[derive(Debug, Clone)]
pub struct CoefficientProfile {
    d: usize,
    coeffs: Vec<Coefficient1D>,
    pub lambda: f64,
    pub big_lambda: f64,
}

impl CoefficientProfile {
    /// Build from one 1D spec per coefficient slot (length must be 2d).
    pub fn from_specs(d: usize, n: usize, box_length: f64, kinds: Vec<CoeffKind>) -> Result<Self> {
        if kinds.len() != 2 * d {
            return Err(RwError::InvalidProfile(format!(
                "need 2d = {} coefficient specs, got {}",
                2 * d,
                kinds.len()
            )));
        }
        let coeffs = kinds
            .into_iter()
            .map(|k| Coefficient1D::build(k, n, box_length))
            .collect::<Result<Vec<_>>>()?;
        let lambda = coeffs.iter().map(|c| c.lambda).fold(f64::INFINITY, f64::min);
        let big_lambda = coeffs.iter().map(|c| c.big_lambda).fold(0.0, f64::max);
        Ok(Self {
            d,
            coeffs,
            lambda,
            big_lambda,
        })
    }

    /// Convenience constructor replicating one kind across all 2d slots.
    /// Random kinds get decorrelated seeds per slot.
    pub fn make_profile(
        d: usize,
        n: usize,
        box_length: f64,
        kind: CoeffKind,
        seed: u64,
    ) -> Result<Self> {
        let kinds = (0..2 * d)
            .map(|j| match kind.clone() {
                CoeffKind::RandomLipschitz {
                    base,
                    amplitude,
                    slope_cap,
                    ..
                } => CoeffKind::RandomLipschitz {
                    base,
                    amplitude,
                    slope_cap,
                    seed: seed.wrapping_add(0x9e37 * (j as u64 + 1)),
                },
                other => other,
            })
            .collect();
        Self::from_specs(d, n, box_length, kinds)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.coeffs[0].n
    }

    pub fn box_length(&self) -> f64 {
        self.coeffs[0].box_length
    }

    /// Coefficient `a_j`, 1-based as in `a_1..a_2d`.
    pub fn coeff(&self, j: usize) -> &Coefficient1D {
        assert!((1..=2 * self.d).contains(&j));
        &self.coeffs[j - 1]
    }

    /// Axis coefficient pair `(a_j, a_{j+d})` for axis index 0..d.
    pub fn axis_pair(&self, axis: usize) -> (&Coefficient1D, &Coefficient1D) {
        (&self.coeffs[axis], &self.coeffs[axis + self.d])
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_constant())
    }

    pub fn lips(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.lip).collect()
    }

    /// Flat key-value block for provenance logs.
    pub fn to_kv_block(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("d = {}\n", self.d));
        s.push_str(&format!("n = {}\n", self.n()));
        s.push_str(&format!("box_length = {:.17e}\n", self.box_length()));
        s.push_str(&format!("lambda = {:.17e}\n", self.lambda));
        s.push_str(&format!("Lambda = {:.17e}\n", self.big_lambda));
        for (j, c) in self.coeffs.iter().enumerate() {
            s.push_str(&format!("a{} = {}\n", j + 1, c.kind.describe()));
            s.push_str(&format!("lip{} = {:.17e}\n", j + 1, c.lip));
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Primitive and flow
// ---------------------------------------------------------------------------

/// Adaptive Simpson quadrature of `f` over `[x0, x1]`.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, x0: f64, x1: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, left, 0.5 * tol, depth - 1) + rec(f, m, b, right, 0.5 * tol, depth - 1)
        }
    }
    rec(f, x0, x1, simpson(f, x0, x1), tol, 40)
}

/// Strictly increasing primitive of `1/a` stored as a monotone cubic Hermite
/// spline over the axis grid, with a Newton/bisection inverse.
#[derive(Debug, Clone)]
pub struct PrimitivePhi {
    n: usize,
    box_length: f64,
    /// phi at nodes 0..=n (phi[0] = 0, phi[n] = total).
    values: Vec<f64>,
    /// d(phi)/dx = 1/a at nodes 0..=n, Fritsch-Carlson limited.
    derivs: Vec<f64>,
    pub total: f64,
}

impl PrimitivePhi {
    pub fn build(coeff: &Coefficient1D) -> Result<Self> {
        if !(coeff.lambda > 0.0) {
            return Err(RwError::InvalidProfile(
                "primitive needs strictly positive coefficient".into(),
            ));
        }
        let n = coeff.n;
        let h = coeff.spacing();
        let f = |x: f64| 1.0 / coeff.eval(x);
        let mut values = vec![0.0; n + 1];
        for k in 0..n {
            let x0 = k as f64 * h;
            let x1 = x0 + h;
            // Split at generator kinks so each Simpson piece is smooth.
            let mut cuts = vec![x0];
            cuts.extend(coeff.kinks_in(x0, x1));
            cuts.push(x1);
            let mut cell = 0.0;
            for w in cuts.windows(2) {
                cell += adaptive_simpson(&f, w[0], w[1], 1e-15);
            }
            values[k + 1] = values[k] + cell;
        }
        let total = values[n];
        let mut derivs: Vec<f64> = (0..=n).map(|k| f(k as f64 * h)).collect();
        // Fritsch-Carlson limiter: keeps the Hermite interpolant monotone.
        for k in 0..n {
            let s = (values[k + 1] - values[k]) / h;
            let cap = 3.0 * s;
            if derivs[k] > cap {
                derivs[k] = cap;
            }
            if derivs[k + 1] > cap {
                derivs[k + 1] = cap;
            }
        }
        Ok(Self {
            n,
            box_length: coeff.box_length,
            values,
            derivs,
            total,
        })
    }

    fn eval_cell(&self, k: usize, t: f64) -> f64 {
        // Cubic Hermite on cell k with local coordinate t in [0,1].
        let h = self.box_length / self.n as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.derivs[k] * h, self.derivs[k + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * (t3 - t2)
    }

    fn eval_cell_deriv(&self, k: usize, t: f64) -> f64 {
        let h = self.box_length / self.n as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.derivs[k] * h, self.derivs[k + 1] * h);
        let t2 = t * t;
        (y0 * (6.0 * t2 - 6.0 * t)
            + d0 * (3.0 * t2 - 4.0 * t + 1.0)
            + y1 * (-6.0 * t2 + 6.0 * t)
            + d1 * (3.0 * t2 - 2.0 * t))
            / h
    }

    /// phi(x) for any real x, using phi(x + l) = phi(x) + total.
    pub fn eval(&self, x: f64) -> f64 {
        let l = self.box_length;
        let per = (x / l).floor();
        let xr = x - per * l;
        let h = l / self.n as f64;
        let t = xr / h;
        let k = (t.floor() as usize).min(self.n - 1);
        self.eval_cell(k, t - k as f64) + per * self.total
    }

    /// phi'(x) = 1/a(x) up to interpolation.
    pub fn deriv(&self, x: f64) -> f64 {
        let l = self.box_length;
        let xr = x - l * (x / l).floor();
        let h = l / self.n as f64;
        let t = xr / h;
        let k = (t.floor() as usize).min(self.n - 1);
        self.eval_cell_deriv(k, t - k as f64)
    }

    /// Inverse map: the unique x with phi(x) = y, to 1e-12 in y.
    pub fn inverse(&self, y: f64) -> f64 {
        let per = (y / self.total).floor();
        let yr = y - per * self.total;
        // Bracket by binary search over node values (monotone).
        let mut lo = 0usize;
        let mut hi = self.n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.values[mid] <= yr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let k = lo;
        // Newton in the local coordinate with bisection safeguard.
        let mut t_lo = 0.0f64;
        let mut t_hi = 1.0f64;
        let mut t = if self.values[k + 1] > self.values[k] {
            ((yr - self.values[k]) / (self.values[k + 1] - self.values[k])).clamp(0.0, 1.0)
        } else {
            0.5
        };
        let h = self.box_length / self.n as f64;
        let tol = 1e-12 * self.total.max(1.0);
        for _ in 0..60 {
            let val = self.eval_cell(k, t) - yr;
            if val.abs() <= tol {
                break;
            }
            if val > 0.0 {
                t_hi = t;
            } else {
                t_lo = t;
            }
            let slope = self.eval_cell_deriv(k, t) * h;
            let mut step_t = t - val / slope.max(1e-300);
            if !(step_t > t_lo && step_t < t_hi) {
                step_t = 0.5 * (t_lo + t_hi);
            }
            t = step_t;
        }
        (k as f64 + t) * h + per * self.box_length
    }
}

/// The transport flow `chi(t, x) = phi^{-1}(t + phi(x))` of one coefficient.
#[derive(Debug, Clone)]
pub struct Flow {
    pub phi: PrimitivePhi,
    coeff: Coefficient1D,
}

impl Flow {
    pub fn new(coeff: &Coefficient1D) -> Result<Self> {
        Ok(Self {
            phi: PrimitivePhi::build(coeff)?,
            coeff: coeff.clone(),
        })
    }

    /// chi(t, x); chi(0, x) = x exactly.
    pub fn chi(&self, t: f64, x: f64) -> f64 {
        if t == 0.0 {
            return x;
        }
        self.phi.inverse(t + self.phi.eval(x))
    }

    /// d/dx chi(t, x) = a(chi(t,x)) / a(x); lies in [lambda/Lambda, Lambda/lambda].
    pub fn jacobian(&self, t: f64, x: f64) -> f64 {
        self.coeff.eval(self.chi(t, x)) / self.coeff.eval(x)
    }

    pub fn coefficient(&self) -> &Coefficient1D {
        &self.coeff
    }
}
