//! Online moment accumulators and small statistical helpers.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

/// Welford mean/variance of a real stream.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Welford {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Merges another accumulator (parallel-variance formula).
    pub fn merge(&mut self, o: &Welford) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64;
        self.n = n;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            libm::sqrt(self.variance() / self.n as f64)
        }
    }

    /// Standard error of the sample variance under a Gaussian approximation.
    pub fn variance_std_error(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.variance() * libm::sqrt(2.0 / (self.n - 1) as f64)
        }
    }
}

/// Componentwise accumulator for a fixed-length real vector.
#[derive(Clone, Debug, PartialEq)]
pub struct VecWelford {
    pub parts: Vec<Welford>,
}

impl VecWelford {
    pub fn new(len: usize) -> Self {
        Self { parts: vec![Welford::new(); len] }
    }

    pub fn push(&mut self, xs: &[f64]) {
        for (w, x) in self.parts.iter_mut().zip(xs) {
            w.push(*x);
        }
    }

    pub fn merge(&mut self, o: &VecWelford) {
        for (a, b) in self.parts.iter_mut().zip(&o.parts) {
            a.merge(b);
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.parts.iter().map(|w| w.mean()).collect()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.parts.iter().map(|w| w.std_error()).collect()
    }
}

/// Accumulates complex samples as (re, im) pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ComplexWelford {
    pub re: Welford,
    pub im: Welford,
}

impl ComplexWelford {
    pub fn push(&mut self, z: C64) {
        self.re.push(z.re);
        self.im.push(z.im);
    }

    pub fn merge(&mut self, o: &ComplexWelford) {
        self.re.merge(&o.re);
        self.im.merge(&o.im);
    }

    pub fn mean(&self) -> C64 {
        C64::new(self.re.mean(), self.im.mean())
    }

    /// Standard error of the complex mean, sqrt(se_re² + se_im²).
    pub fn std_error(&self) -> f64 {
        libm::hypot(self.re.std_error(), self.im.std_error())
    }
}

/// sqrt(p(1−p)/n).
pub fn binomial_std_error(p: f64, n: u64) -> f64 {
    libm::sqrt(p * (1.0 - p) / n as f64)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Least-squares fit y = c·x through the origin; returns (c, R²) with R²
/// measured against the mean of y.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let c = sxy / sxx;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - c * a) * (b - c * a)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - mean) * (b - mean)).sum();
    (c, 1.0 - ss_res / ss_tot)
}

/// Gauss–Hermite nodes and weights for ∫ e^{−x²} g(x) dx, by Newton iteration
/// on the Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pi4 = libm::pow(core::f64::consts::PI, -0.25);
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => libm::sqrt((2 * n + 1) as f64) - 1.85575 * libm::pow((2 * n + 1) as f64, -1.0 / 6.0),
            1 => z - 1.14 * libm::pow(n as f64, 0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pi4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * libm::sqrt(2.0 / (j + 1) as f64) * p2 - libm::sqrt(j as f64 / (j + 1) as f64) * p3;
            }
            pp = libm::sqrt(2.0 * n as f64) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 3e-16 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_integrates_even_moments() {
        let (x, w) = gauss_hermite(20);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        let sq = libm::sqrt(core::f64::consts::PI);
        assert!((m0 - sq).abs() < 1e-13);
        assert!((m2 - 0.5 * sq).abs() < 1e-13);
    }

    #[test]
    fn exact_line_has_unit_r2() {
        let (c, r2) = fit_through_origin(&[1.0, 2.0, 3.0], &[2.5, 5.0, 7.5]);
        assert!((c - 2.5).abs() < 1e-15 && (r2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ks_of_grid_sample() {
        let mut s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_distance(&mut s, |x| x) - 0.005).abs() < 1e-12);
    }
}
