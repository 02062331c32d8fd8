//! Adaptive composite Gauss–Legendre quadrature.

use std::sync::OnceLock;

const ORDER: usize = 10;
const MAX_DEPTH: u32 = 40;

/// Absolute/relative stopping rule for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Tolerance {
    pub const DEFAULT: Tolerance = Tolerance {
        rel: 1e-9,
        abs: 1e-12,
    };

    pub fn new(rel: f64, abs: f64) -> Self {
        Self { rel, abs }
    }

    /// Allowed absolute error for an integral whose value is about `value`.
    pub fn allowed(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::DEFAULT
    }
}

struct Rule {
    nodes: [f64; ORDER],
    weights: [f64; ORDER],
}

/// Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 2..=n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
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
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        Rule { nodes, weights }
    })
}

/// Single fixed-order Gauss–Legendre panel on [a, b].
pub fn gauss_legendre<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> f64 {
    let r = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (x, w) in r.nodes.iter().zip(r.weights.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Integrates `f` over [a, b] by bisection until a panel and its two halves
/// agree to within `abs_tol` (split between halves as it recurses).
pub fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let whole = gauss_legendre(f, a, b);
    refine(f, a, b, whole, abs_tol, 0)
}

fn refine<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let left = gauss_legendre(f, a, m);
    let right = gauss_legendre(f, m, b);
    let split = left + right;
    let diff = (split - whole).abs();
    // Stop once the panels agree to rounding, whatever the requested tolerance.
    if diff <= tol
        || diff <= 8.0 * f64::EPSILON * split.abs()
        || depth >= MAX_DEPTH
        || m <= a
        || m >= b
    {
        return split;
    }
    refine(f, a, m, left, 0.5 * tol, depth + 1) + refine(f, m, b, right, 0.5 * tol, depth + 1)
}

/// Integrates a function that may have derivative singularities at the
/// ends of [a, b]. The cubic map `s -> a + (b-a)(3s^2 - 2s^3)` flattens
/// algebraic end behavior before the adaptive rule sees it.
pub fn adaptive_endpoint_smoothed<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    abs_tol: f64,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let len = b - a;
    let mut g = |s: f64| {
        let x = a + len * s * s * (3.0 - 2.0 * s);
        f(x) * 6.0 * s * (1.0 - s) * len
    };
    adaptive(&mut g, 0.0, 1.0, abs_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        // order-10 rule is exact through degree 19
        let mut f = |x: f64| x.powi(19) + 3.0 * x.powi(8);
        let got = gauss_legendre(&mut f, -1.0, 1.0);
        assert!((got - 6.0 / 9.0).abs() < 1e-14);
        let w: f64 = rule().weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_sqrt_endpoint() {
        // ∫_0^1 sqrt(x) dx = 2/3
        let mut f = |x: f64| x.sqrt();
        let got = adaptive(&mut f, 0.0, 1.0, 1e-13);
        assert!((got - 2.0 / 3.0).abs() < 1e-12);
        let got = adaptive_endpoint_smoothed(&mut f, 0.0, 1.0, 1e-13);
        assert!((got - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_interval_is_zero() {
        let mut f = |_x: f64| 1.0;
        assert_eq!(adaptive(&mut f, 1.0, 1.0, 1e-12), 0.0);
    }
}
