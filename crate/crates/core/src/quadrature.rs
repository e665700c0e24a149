//! Gaussian quadrature rules.
//!
//! [`gauss_hermite`] integrates against the standard normal density (weights
//! sum to one); [`gauss_legendre`] is the usual rule on `[-1, 1]`. Nodes come
//! from the Golub-Welsch eigenvalue problem (Hermite) or the Chebyshev-like
//! initial guess (Legendre) and are polished with Newton steps on the
//! three-term recurrence.

use nalgebra::DMatrix;

/// Nodes and weights of a one-dimensional rule.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Makes the rule exactly symmetric about zero (mirror-averaged).
    fn symmetrize(&mut self) {
        let n = self.nodes.len();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (self.nodes[j] - self.nodes[i]);
            let w = 0.5 * (self.weights[i] + self.weights[j]);
            self.nodes[i] = -x;
            self.nodes[j] = x;
            self.weights[i] = w;
            self.weights[j] = w;
        }
        if n % 2 == 1 {
            self.nodes[n / 2] = 0.0;
        }
    }
}

/// Evaluates the orthonormal probabilists' Hermite polynomials at `x`.
///
/// Returns `(p_n(x), p_{n-1}(x), sum_{k<n} p_k(x)^2)`; all three share a common
/// power-of-two rescaling when the values would overflow, which leaves ratios
/// intact and sends the Christoffel sum to infinity (weight zero).
fn hermite_recurrence(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum = 0.0;
    let mut overflowed = false;
    for k in 0..n {
        sum += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > 1e100 {
            cur *= 1e-100;
            prev *= 1e-100;
            sum *= 1e-200;
            overflowed = true;
        }
    }
    if overflowed {
        sum = f64::INFINITY;
    }
    (cur, prev, sum)
}

/// `n`-point Gauss-Hermite rule for `E[f(z)]`, `z ~ N(0, 1)`.
pub fn gauss_hermite(n: usize) -> GaussRule {
    assert!(n >= 1, "need at least one node");
    if n == 1 {
        return GaussRule {
            nodes: vec![0.0],
            weights: vec![1.0],
        };
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = jacobi.symmetric_eigen();
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (pn, pn1, _) = hermite_recurrence(n, *x);
            let deriv = (n as f64).sqrt() * pn1;
            if deriv != 0.0 {
                *x -= pn / deriv;
            }
        }
        let (_, _, sum) = hermite_recurrence(n, *x);
        weights.push(1.0 / sum);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut rule = GaussRule { nodes, weights };
    rule.symmetrize();
    rule
}

/// `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> GaussRule {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 1..n {
                let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    let mut rule = GaussRule { nodes, weights };
    rule.symmetrize();
    rule
}

/// Visits the nodes of a composite rule for `E[f(z)]`, `z ~ N(0, 1)`.
///
/// Panels of width `width` are anchored at `anchor` (panel edges sit at
/// `anchor + k * width`) and cover `[-cutoff, cutoff]`; each panel uses the
/// Gauss-Legendre rule `panel`. The callback receives `(z, weight)` where the
/// weight already includes the normal density.
pub fn for_each_composite_normal(
    anchor: f64,
    width: f64,
    cutoff: f64,
    panel: &GaussRule,
    mut f: impl FnMut(f64, f64),
) {
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let k_lo = ((-cutoff - anchor) / width).floor() as i64;
    let k_hi = ((cutoff - anchor) / width).ceil() as i64;
    let half = 0.5 * width;
    for k in k_lo..k_hi {
        let mid = anchor + (k as f64 + 0.5) * width;
        for (x, w) in panel.nodes.iter().zip(&panel.weights) {
            let z = mid + half * x;
            f(z, w * half * inv_sqrt_2pi * (-0.5 * z * z).exp());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial_odd(k: usize) -> f64 {
        // (k-1)!! for even k: E[z^k]
        (1..k).step_by(2).map(|x| x as f64).product()
    }

    #[test]
    fn hermite_reproduces_gaussian_moments() {
        for n in [1usize, 2, 5, 20, 80, 160] {
            let rule = gauss_hermite(n);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for k in (0..(2 * n).min(24)).step_by(2) {
                let est: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(k as i32))
                    .sum();
                let exact = if k == 0 { 1.0 } else { double_factorial_odd(k) };
                assert!(
                    (est - exact).abs() <= 1e-11 * exact,
                    "n={n} k={k} est={est} exact={exact}"
                );
            }
        }
    }

    #[test]
    fn hermite_rule_is_symmetric() {
        let rule = gauss_hermite(81);
        for i in 0..rule.len() {
            assert_eq!(rule.nodes[i], -rule.nodes[rule.len() - 1 - i]);
            assert_eq!(rule.weights[i], rule.weights[rule.len() - 1 - i]);
        }
    }

    #[test]
    fn legendre_integrates_polynomials() {
        for n in [1usize, 2, 8, 10, 16] {
            let rule = gauss_legendre(n);
            for k in 0..(2 * n) {
                let est: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(k as i32))
                    .sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((est - exact).abs() < 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn composite_rule_integrates_normal_density() {
        let panel = gauss_legendre(10);
        let mut mass = 0.0;
        let mut second = 0.0;
        for_each_composite_normal(0.37, 0.3, 9.5, &panel, |z, w| {
            mass += w;
            second += w * z * z;
        });
        assert!((mass - 1.0).abs() < 1e-14);
        assert!((second - 1.0).abs() < 1e-13);
    }
}
