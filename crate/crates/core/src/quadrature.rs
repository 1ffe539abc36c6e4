//! Composite Gauss–Legendre rules on graded panels.

use std::sync::OnceLock;

/// Points per panel of the production rule.
pub const PANEL_ORDER: usize = 16;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn reference_rule(order: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static R16: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    static R32: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    match order {
        16 => R16.get_or_init(|| gauss_legendre(16)),
        32 => R32.get_or_init(|| gauss_legendre(32)),
        _ => panic!("unsupported panel order {order}"),
    }
}

/// A quadrature rule on an interval: `sum_k weights[k] * f(nodes[k])`.
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Composite rule with `order` points on each of the given panels.
    pub fn on_panels(breaks: &[f64], order: usize) -> Rule {
        let (x, w) = reference_rule(order);
        let mut rule = Rule::default();
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(w) {
                rule.nodes.push(mid + half * xi);
                rule.weights.push(half * wi);
            }
        }
        rule
    }
}

/// Breakpoints on `[a, b]` refined geometrically (ratio 2) towards each end.
///
/// Panels shrink from the midpoint towards `a` until they are no wider than
/// `floor_lo`, and towards `b` until no wider than `floor_hi`. Interior panels
/// wider than `max_width` are split evenly.
pub fn graded_breaks(a: f64, b: f64, floor_lo: f64, floor_hi: f64, max_width: f64) -> Vec<f64> {
    debug_assert!(b > a);
    let mid = 0.5 * (a + b);
    let half = mid - a;
    let mut lo = vec![a];
    let mut width = half;
    let mut steps = Vec::new();
    while width > floor_lo && steps.len() < 200 {
        width *= 0.5;
        steps.push(width);
    }
    // a, a + w_min, a + 2 w_min, ..., mid
    for w in steps.iter().rev() {
        lo.push(a + w);
    }
    lo.push(mid);
    let mut hi = Vec::new();
    let mut width = half;
    let mut steps = Vec::new();
    while width > floor_hi && steps.len() < 200 {
        width *= 0.5;
        steps.push(width);
    }
    for w in steps.iter() {
        hi.push(b - w);
    }
    hi.push(b);
    lo.extend(hi);
    let mut out = Vec::with_capacity(lo.len());
    out.push(lo[0]);
    for pair in lo.windows(2) {
        let (x0, x1) = (pair[0], pair[1]);
        if x1 <= x0 {
            continue;
        }
        let pieces = ((x1 - x0) / max_width).ceil().max(1.0) as usize;
        for k in 1..=pieces {
            out.push(if k == pieces { x1 } else { x0 + (x1 - x0) * k as f64 / pieces as f64 });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for n in [1, 2, 5, 16, 32] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..(2 * n) {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                assert!((got - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn graded_rule_handles_endpoint_singularity() {
        let breaks = graded_breaks(0.0, 1.0, 1e-12, 0.25, 1.0);
        let rule = Rule::on_panels(&breaks, 16);
        let got = rule.integrate(|x| 1.0 / x.sqrt());
        assert!((got - 2.0).abs() < 1e-5, "{got}");
        assert!(breaks.windows(2).all(|p| p[1] > p[0]));
        assert_eq!(*breaks.first().unwrap(), 0.0);
        assert_eq!(*breaks.last().unwrap(), 1.0);
    }
}
