//! Gauss–Legendre rules and their composite form.

use crate::scalar::Real;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// Roots of `P_n` by Newton iteration from the Tricomi initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a rule needs at least one node");
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = T::from_usize_lossy(n);
        let tol = T::unit_roundoff() * T::lit(4.0);
        for i in 0..n.div_ceil(2) {
            let guess = (T::PI() * (T::from_usize_lossy(i) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
            let mut x = guess;
            let mut dp = T::one();
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x = x - dx;
                if dx.abs() <= tol {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != T::zero() { d } else { dp };
            let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Single-panel rule on `[a, b]`.
    pub fn integrate<F: FnMut(T) -> T>(&self, mut f: F, a: T, b: T) -> T {
        let half = (b - a) / T::lit(2.0);
        let mid = (a + b) / T::lit(2.0);
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + *w * f(mid + half * *x);
        }
        acc * half
    }

    /// `panels` equal panels on `[a, b]`.
    pub fn composite<F: FnMut(T) -> T>(&self, mut f: F, a: T, b: T, panels: usize) -> T {
        let width = (b - a) / T::from_usize_lossy(panels);
        let mut acc = T::zero();
        for p in 0..panels {
            let lo = a + width * T::from_usize_lossy(p);
            let hi = if p + 1 == panels { b } else { lo + width };
            acc = acc + self.integrate(&mut f, lo, hi);
        }
        acc
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre<T: Real>(n: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::from_usize_lossy(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (T::one(), T::zero());
    }
    let nf = T::from_usize_lossy(n);
    let d = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// One-shot composite rule with `nodes` points per panel.
pub fn composite_gauss_legendre<T: Real, F: FnMut(T) -> T>(
    f: F,
    a: T,
    b: T,
    panels: usize,
    nodes: usize,
) -> T {
    GaussLegendre::new(nodes).composite(f, a, b, panels)
}

/// Composite quadrature that doubles the panel count until two successive
/// estimates agree to `rel_tol` (relative to `scale` when the integral is
/// near zero). Returns the finer estimate and whether it converged.
pub fn integrate_adaptive<T: Real, F: FnMut(T) -> T>(
    rule: &GaussLegendre<T>,
    mut f: F,
    a: T,
    b: T,
    start_panels: usize,
    max_panels: usize,
    rel_tol: T,
    scale: T,
) -> (T, bool) {
    let mut panels = start_panels.max(1);
    let mut coarse = rule.composite(&mut f, a, b, panels);
    loop {
        let fine_panels = panels * 2;
        let fine = rule.composite(&mut f, a, b, fine_panels);
        let tol = rel_tol * fine.abs().max(scale);
        if (fine - coarse).abs() <= tol {
            return (fine, true);
        }
        if fine_panels >= max_panels {
            return (fine, false);
        }
        coarse = fine;
        panels = fine_panels;
    }
}
