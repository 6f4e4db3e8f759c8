//! Composite Gauss–Legendre quadrature with panel doubling.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

const NODES_PER_PANEL: usize = 16;

/// Integrates `f` over `[a, b]`, doubling the number of equal panels until two
/// successive estimates agree to `rel_tol` (relative, with an absolute floor of
/// `rel_tol * 1e-300` so an identically zero integrand terminates).
#[derive(Debug, Clone)]
pub struct CompositeQuadrature {
    rule: GaussLegendre,
    pub rel_tol: f64,
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for CompositeQuadrature {
    fn default() -> Self {
        Self::new(1e-8)
    }
}

impl CompositeQuadrature {
    pub fn new(rel_tol: f64) -> Self {
        Self {
            rule: GaussLegendre::new(NonZeroUsize::new(NODES_PER_PANEL).unwrap()),
            rel_tol,
            initial_panels: 4,
            max_panels: 1 << 22,
        }
    }

    /// Starts from at least `panels` panels; useful for oscillatory integrands
    /// where a coarse first estimate can agree with its refinement by accident.
    pub fn with_initial_panels(mut self, panels: usize) -> Self {
        self.initial_panels = panels.max(1);
        self
    }

    fn fixed<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, f: &mut F) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + h * p as f64;
                self.rule.integrate(lo, lo + h, &mut *f)
            })
            .sum()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let mut panels = self.initial_panels;
        let mut prev = self.fixed(a, b, panels, &mut f);
        loop {
            panels *= 2;
            let next = self.fixed(a, b, panels, &mut f);
            let scale = next.abs().max(prev.abs());
            if (next - prev).abs() <= self.rel_tol * scale || scale == 0.0 || panels >= self.max_panels
            {
                return next;
            }
            prev = next;
        }
    }

    /// Mean value `(1/(b−a)) ∫ f` for a complex integrand, integrating real and
    /// imaginary parts separately.
    pub fn mean_complex<F: FnMut(f64) -> Complex64>(&self, a: f64, b: f64, mut f: F) -> Complex64 {
        let re = self.integrate(a, b, |t| f(t).re);
        let im = self.integrate(a, b, |t| f(t).im);
        Complex64::new(re, im) / (b - a)
    }
}
