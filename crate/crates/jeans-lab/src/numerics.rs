//! Small numerical building blocks: root bracketing, monotone interpolation,
//! quadrature, periodic stencils, binomial remainders and low-discrepancy points.

use crate::error::{Error, Result};

/// Bisection for a sign change of `f` on `[lo, hi]`, run until the bracket is below `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Domain(format!("no sign change on [{lo}, {hi}]: f = ({flo:e}, {fhi:e})")));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monotone piecewise cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// Builds the interpolant; `x` must be strictly increasing with at least two nodes.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::Domain("pchip needs at least two matching nodes".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("pchip abscissae must be strictly increasing".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = del[0];
            d[1] = del[0];
        } else {
            for k in 1..n - 1 {
                if del[k - 1] * del[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], del[0], del[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Index `k` of the interval `[x_k, x_{k+1}]` containing `xq` (clamped to the table).
    pub fn interval(&self, xq: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&v| v <= xq) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    pub fn eval(&self, xq: f64) -> f64 {
        let k = self.interval(xq);
        let h = self.x[k + 1] - self.x[k];
        let s = (xq - self.x[k]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}

/// Integral of `f` over `[a, b]` with a composite Gauss-Legendre rule.
pub fn integrate_gl<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (xs, ws) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x, w) in xs.iter().zip(&ws) {
            sum += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * sum
}

/// Fourth-order periodic first derivative with grid spacing `h`.
pub fn d1_periodic(u: &[f64], h: f64, out: &mut [f64]) {
    let n = u.len();
    let c = 1.0 / (12.0 * h);
    for j in 0..n {
        let m2 = u[(j + n - 2) % n];
        let m1 = u[(j + n - 1) % n];
        let p1 = u[(j + 1) % n];
        let p2 = u[(j + 2) % n];
        out[j] = c * ((m2 - p2) + 8.0 * (p1 - m1));
    }
}

/// Fourth-order periodic second derivative with grid spacing `h`.
pub fn d2_periodic(u: &[f64], h: f64, out: &mut [f64]) {
    let n = u.len();
    let c = 1.0 / (12.0 * h * h);
    for j in 0..n {
        let m2 = u[(j + n - 2) % n];
        let m1 = u[(j + n - 1) % n];
        let p1 = u[(j + 1) % n];
        let p2 = u[(j + 2) % n];
        out[j] = c * (16.0 * (p1 + m1) - (p2 + m2) - 30.0 * u[j]);
    }
}

/// Fourth-order centered first derivative of a scalar function.
pub fn d1_centered<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - f(x + 2.0 * h) + 8.0 * (f(x + h) - f(x - h))) / (12.0 * h)
}

/// `((1+y)^p - sum_{j<k} C(p,j) y^j) / y^k`, accurate for small `y`.
pub fn binom_tail_over(p: f64, y: f64, k: u32) -> f64 {
    if y.abs() < 0.25 {
        let mut coef = 1.0;
        for j in 0..k {
            coef *= (p - j as f64) / (j as f64 + 1.0);
        }
        let mut sum = 0.0;
        let mut term = coef;
        let mut j = k;
        loop {
            sum += term;
            let next = term * (p - j as f64) / (j as f64 + 1.0) * y;
            j += 1;
            if next.abs() <= 1e-18 * sum.abs().max(1e-300) || j > k + 200 {
                break;
            }
            term = next;
        }
        sum
    } else {
        let mut head = 0.0;
        let mut coef = 1.0;
        for j in 0..k {
            head += coef * y.powi(j as i32);
            coef *= (p - j as f64) / (j as f64 + 1.0);
        }
        ((1.0 + y).powf(p) - head) / y.powi(k as i32)
    }
}

/// Radical inverse of `index` in `base` (van der Corput).
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while index > 0 {
        r += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    r
}

/// Point `index` of the Halton sequence in `dim <= 8` dimensions, offset by `skip`.
pub fn halton(index: u64, dim: usize, skip: u64) -> Vec<f64> {
    const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    (0..dim).map(|d| radical_inverse(index + skip + 1, PRIMES[d])).collect()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
