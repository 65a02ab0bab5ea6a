//! Gauss–Hermite quadrature and finite-difference stencils.

/// Nodes and weights for n-point Gauss–Hermite quadrature with weight
/// `exp(-x^2)`: `int f(x) e^{-x^2} dx ~ sum_i w_i f(x_i)`.
///
/// Nodes are found by Newton iteration on the physicists' Hermite recurrence
/// with the standard asymptotic initial guesses; accurate to machine
/// precision for n up to a few hundred.
#[derive(Clone, Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Self {
        assert!(
            (1..=192).contains(&n),
            "Hermite root finder is validated for 1..=192 nodes"
        );
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            // Initial guesses per Numerical Recipes' gauher.
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                // Evaluate H~_n(z) (orthonormal recurrence) and its derivative.
                let mut p1 = std::f64::consts::PI.powf(-0.25);
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        // Sort ascending.
        nodes.reverse();
        weights.reverse();
        let total: f64 = weights.iter().sum();
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!(
            (total - sqrt_pi).abs() < 1e-10 * sqrt_pi,
            "Hermite root finder failed at n={n}: weight sum {total}"
        );
        GaussHermite { nodes, weights }
    }

    /// `E[f(X)]` for `X ~ Normal(mean, sd^2)`.
    pub fn gaussian_expectation(&self, mean: f64, sd: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let c = std::f64::consts::PI.sqrt().recip();
        let s2 = std::f64::consts::SQRT_2 * sd;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| c * w * f(mean + s2 * x))
            .sum()
    }
}

/// Shared 64-node rule, the default for the smooth g-function integrals.
pub fn gauss_hermite_64() -> &'static GaussHermite {
    use std::sync::OnceLock;
    static GH: OnceLock<GaussHermite> = OnceLock::new();
    GH.get_or_init(|| GaussHermite::new(64))
}

/// Nodes and weights for n-point Gauss–Legendre quadrature on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!((1..=64).contains(&n));
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        GaussLegendre { nodes, weights }
    }

    /// `int_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }
}

/// `E[f(X)]` for `X ~ Normal(mean, sd^2)` by composite Gauss–Legendre over
/// `±10` standard deviations. Slower than [`GaussHermite`] but keeps full
/// accuracy for integrands with localized structure (saturating tanh at low
/// noise).
pub fn gaussian_expectation_panels(mean: f64, sd: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let gl = GaussLegendre::new(16);
    let panels = 24;
    let lo = mean - 10.0 * sd;
    let width = 20.0 * sd / panels as f64;
    let norm = (2.0 * std::f64::consts::PI).sqrt() * sd;
    let mut total = 0.0;
    for k in 0..panels {
        let a = lo + k as f64 * width;
        total += gl.integrate(a, a + width, |x| {
            let z = (x - mean) / sd;
            (-0.5 * z * z).exp() / norm * f(x)
        });
    }
    total
}

/// Five-point central first derivative, O(h^4).
pub fn central_first_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Five-point central second derivative, O(h^4).
pub fn central_second_derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x - 2.0 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2.0 * h))
        / (12.0 * h * h)
}

/// First and second derivatives by 3-point central differences at steps `h`
/// and `h/2`, combined by one Richardson level (overall O(h^4)).
pub fn richardson_derivatives(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    let d1 = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    let first = (4.0 * d1(h / 2.0) - d1(h)) / 3.0;
    let second = (4.0 * d2(h / 2.0) - d2(h)) / 3.0;
    (first, second)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_weights_and_moments() {
        for &n in &[1usize, 2, 5, 16, 64] {
            let gh = GaussHermite::new(n);
            let sqrt_pi = std::f64::consts::PI.sqrt();
            let total: f64 = gh.weights.iter().sum();
            assert!((total - sqrt_pi).abs() < 1e-12 * sqrt_pi, "n={n} total={total}");
            if n >= 2 {
                let m2: f64 = gh
                    .nodes
                    .iter()
                    .zip(&gh.weights)
                    .map(|(x, w)| w * x * x)
                    .sum();
                assert!((m2 - sqrt_pi / 2.0).abs() < 1e-11, "n={n} m2={m2}");
            }
        }
    }

    #[test]
    fn gaussian_expectation_of_polynomials() {
        let gh = GaussHermite::new(64);
        // E[X^2] = mu^2 + sigma^2, E[X^4] for N(1, 2^2) = mu^4+6mu^2 s^2+3 s^4.
        let e2 = gh.gaussian_expectation(1.0, 2.0, |x| x * x);
        assert!((e2 - 5.0).abs() < 1e-10);
        let e4 = gh.gaussian_expectation(1.0, 2.0, |x| x.powi(4));
        assert!((e4 - (1.0 + 6.0 * 4.0 + 3.0 * 16.0)).abs() < 1e-9);
    }

    #[test]
    fn panel_rule_is_self_consistent_for_tanh_integrands() {
        // Against a doubled-panel reference on the saturation-heavy case
        // (low-noise Gaussian LLR) where plain Gauss–Hermite loses digits.
        for (m, s) in [(0.5, 2.0), (8.0, 4.0), (2.0, 2.0)] {
            let a = gaussian_expectation_panels(m, s, |l| (l / 2.0).tanh().powi(2));
            let gl = GaussLegendre::new(24);
            let lo = m - 12.0 * s;
            let width = 24.0 * s / 64.0;
            let norm = (2.0 * std::f64::consts::PI).sqrt() * s;
            let mut b = 0.0;
            for k in 0..64 {
                let x0 = lo + k as f64 * width;
                b += gl.integrate(x0, x0 + width, |x| {
                    let z = (x - m) / s;
                    (-0.5 * z * z).exp() / norm * (x / 2.0).tanh().powi(2)
                });
            }
            assert!((a - b).abs() < 1e-12, "m={m} s={s}: {a} vs {b}");
        }
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        let v = gl.integrate(-1.0, 3.0, |x| 3.0 * x * x);
        assert!((v - (27.0 + 1.0)).abs() < 1e-12);
        let total: f64 = gl.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn stencils_differentiate_exp() {
        let f = |x: f64| (0.7 * x).exp();
        let d1 = central_first_derivative(f, 0.3, 1e-2);
        let d2 = central_second_derivative(f, 0.3, 1e-2);
        let t = (0.7f64 * 0.3).exp();
        assert!((d1 - 0.7 * t).abs() < 1e-10);
        assert!((d2 - 0.49 * t).abs() < 1e-8);
        let (r1, r2) = richardson_derivatives(f, 0.3, 1e-2);
        assert!((r1 - 0.7 * t).abs() < 1e-10);
        assert!((r2 - 0.49 * t).abs() < 1e-8);
    }
}
