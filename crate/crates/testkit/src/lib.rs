//! Independent numerical oracles for the hbm test suites.
//!
//! Nothing here calls into `hbm-core`: the quadrature, Kolmogorov–Smirnov
//! and brute-force routines are written from first principles so that
//! they can check the library without sharing its code paths.

use std::f64::consts::PI;

/// Adaptive Simpson quadrature on a finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        // Below rounding noise of the running estimate there is nothing to refine.
        if depth == 0 || delta.abs() <= 15.0 * tol.max(4.0 * f64::EPSILON * (left + right).abs()) {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }

    if a == b {
        return 0.0;
    }
    // Split into panels first so narrow peaks are not missed by the
    // initial five-point estimate.
    let panels = 64;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = if p + 1 == panels { b } else { lo + h };
        let flo = f(lo);
        let fhi = f(hi);
        let (m, fm, whole) = simpson(&f, lo, flo, hi, fhi);
        total += recurse(&f, lo, flo, hi, fhi, m, fm, whole, tol / panels as f64, 48);
    }
    total
}

/// Integral over `[a, ∞)` through the substitution `x = a + t/(1-t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: f64) -> f64 {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let x = a + t / (1.0 - t);
        let jac = 1.0 / ((1.0 - t) * (1.0 - t));
        let v = f(x) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, tol)
}

/// Integral over the whole real line.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, center: f64, tol: f64) -> f64 {
    integrate_to_infinity(|x| f(x), center, tol) + integrate_to_infinity(|x| f(2.0 * center - x), center, tol)
}

/// Cumulative distribution on a grid, built by integrating a (possibly
/// unnormalized) density between successive grid points and normalizing
/// by the total mass up to the last point plus the supplied tail mass.
pub struct TabulatedCdf {
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl TabulatedCdf {
    /// `lower` is the left end of the support; `grid` must be ascending and
    /// start above `lower`. The density is normalized numerically over
    /// `[lower, upper_total]`.
    pub fn from_density<F: Fn(f64) -> f64>(density: F, lower: f64, grid: &[f64], tail_mass_beyond_last: Option<f64>) -> Self {
        let mut cdf = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        let mut prev = lower;
        for &g in grid {
            acc += integrate(&density, prev, g, 1e-13);
            cdf.push(acc);
            prev = g;
        }
        let total = match tail_mass_beyond_last {
            Some(t) => acc + t,
            None => acc,
        };
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Self { grid: grid.to_vec(), cdf }
    }

    /// Sup distance between the empirical CDF of `sample` and this table,
    /// evaluated at every grid point (both one-sided limits).
    pub fn ks_distance(&self, sample: &[f64]) -> f64 {
        let mut sorted = sample.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len() as f64;
        let mut worst: f64 = 0.0;
        for (g, &c) in self.grid.iter().zip(&self.cdf) {
            let le = sorted.partition_point(|v| v <= g) as f64 / n;
            let lt = sorted.partition_point(|v| v < g) as f64 / n;
            worst = worst.max((le - c).abs()).max((lt - c).abs());
        }
        worst
    }
}

/// One-sample KS statistic against an analytic CDF, exact over the sample.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(|p, q| p.partial_cmp(q).unwrap());
    y.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value, `c(α)·sqrt((n+m)/(n·m))`.
pub fn ks_critical(alpha: f64, n: f64, m: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) / (n * m)).sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    correlation(&ranks(x), &ranks(y))
}

/// Normal CDF through a series / continued-fraction `erf`.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / (sd * std::f64::consts::SQRT_2);
    0.5 * (1.0 + erf(z))
}

fn erf(x: f64) -> f64 {
    if x.abs() < 2.5 {
        let mut sum = x;
        let mut term = x;
        let x2 = x * x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    } else {
        let s = x.signum();
        let a = x.abs();
        // Lentz continued fraction for erfc.
        let mut f = a;
        let mut c = a;
        let mut d = 0.0;
        for k in 1..200 {
            let an = k as f64 / 2.0;
            d = a + an * d;
            d = 1.0 / d;
            c = a + an / c;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let erfc = (-a * a).exp() / (f * PI.sqrt());
        s * (1.0 - erfc)
    }
}

/// Brute-force WAIC on a dense `[observation][draw]` log-likelihood
/// matrix, evaluated with direct sums in linear space after a per-row
/// max shift. Returns `(lppd, p_waic, waic)`.
pub fn brute_force_waic(loglik: &[Vec<f64>]) -> (f64, f64, f64) {
    let mut lppd = 0.0;
    let mut p = 0.0;
    for row in loglik {
        let s = row.len() as f64;
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        for &l in row {
            acc += (l - max).exp();
        }
        lppd += max + (acc / s).ln();
        let mut m = 0.0;
        for &l in row {
            m += l;
        }
        m /= s;
        let mut v = 0.0;
        for &l in row {
            v += (l - m) * (l - m);
        }
        p += v / (s - 1.0);
    }
    (lppd, p, -2.0 * lppd + 2.0 * p)
}

/// Log-spaced grid of `n` points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
