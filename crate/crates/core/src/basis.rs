//! Polynomial bases on a strut [0, len].
//!
//! Primal fields (displacement, rotation) use a nodal Lagrange basis on
//! Gauss–Lobatto points so endpoint values are single coefficients.
//! Multiplier fields (contact force/couple densities) use the Legendre
//! basis scaled to [0, len], orthogonal and trace-free.

use crate::quadrature::{gauss_lobatto, legendre_with_derivative};

/// Nodal Lagrange basis of degree `n` on the n+1 Gauss–Lobatto points of [0, len].
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    pub degree: usize,
    pub len: f64,
    /// Node locations in `[0, len]`, ascending; `nodes[0] = 0`, `nodes[n] = len`.
    pub nodes: Vec<f64>,
    bary: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(degree: usize, len: f64) -> Self {
        assert!(degree >= 1);
        assert!(len > 0.0);
        let ref_rule = gauss_lobatto(degree + 1);
        let nodes: Vec<f64> = ref_rule.nodes.iter().map(|x| 0.5 * len * (x + 1.0)).collect();
        let mut bary = vec![1.0; degree + 1];
        for i in 0..=degree {
            for j in 0..=degree {
                if i != j {
                    bary[i] /= nodes[i] - nodes[j];
                }
            }
        }
        LagrangeBasis {
            degree,
            len,
            nodes,
            bary,
        }
    }

    pub fn count(&self) -> usize {
        self.degree + 1
    }

    /// Values of all basis functions at s.
    pub fn eval(&self, s: f64) -> Vec<f64> {
        let n = self.count();
        let mut vals = vec![0.0; n];
        // exact at nodes, barycentric formula elsewhere
        for i in 0..n {
            if (s - self.nodes[i]).abs() < 1e-14 * self.len.max(1.0) {
                vals[i] = 1.0;
                return vals;
            }
        }
        let mut denom = 0.0;
        for i in 0..n {
            let term = self.bary[i] / (s - self.nodes[i]);
            vals[i] = term;
            denom += term;
        }
        for v in vals.iter_mut() {
            *v /= denom;
        }
        vals
    }

    /// Derivatives of all basis functions at s.
    pub fn eval_deriv(&self, s: f64) -> Vec<f64> {
        // Differentiate the Lagrange product form directly:
        // phi_i(s) = bary_i * prod_{j != i} (s - x_j), so
        // phi_i'(s) = bary_i * sum_{m != i} prod_{j != i, m} (s - x_j).
        let n = self.count();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for m in 0..n {
                if m == i {
                    continue;
                }
                let mut prod = 1.0;
                for j in 0..n {
                    if j != i && j != m {
                        prod *= s - self.nodes[j];
                    }
                }
                acc += prod;
            }
            out[i] = self.bary[i] * acc;
        }
        out
    }

    /// Value of the polynomial with nodal coefficients `coeffs` at s.
    pub fn value(&self, coeffs: &[f64], s: f64) -> f64 {
        self.eval(s)
            .iter()
            .zip(coeffs)
            .map(|(phi, c)| phi * c)
            .sum()
    }

    pub fn derivative(&self, coeffs: &[f64], s: f64) -> f64 {
        self.eval_deriv(s)
            .iter()
            .zip(coeffs)
            .map(|(phi, c)| phi * c)
            .sum()
    }
}

/// Legendre basis of degree `0..=k` scaled to [0, len].
///
/// L_a(s) = P_a(2 s / len - 1); the basis is orthogonal with
/// integral of L_a^2 over [0, len] equal to len / (2a + 1).
#[derive(Debug, Clone)]
pub struct LegendreBasis {
    pub degree: usize,
    pub len: f64,
}

impl LegendreBasis {
    pub fn new(degree: usize, len: f64) -> Self {
        assert!(len > 0.0);
        LegendreBasis { degree, len }
    }

    pub fn count(&self) -> usize {
        self.degree + 1
    }

    /// Diagonal of the basis mass matrix.
    pub fn mass_diagonal(&self) -> Vec<f64> {
        (0..=self.degree)
            .map(|a| self.len / (2 * a + 1) as f64)
            .collect()
    }

    /// Values of all basis functions at s in [0, len].
    pub fn eval(&self, s: f64) -> Vec<f64> {
        let x = 2.0 * s / self.len - 1.0;
        let mut vals = Vec::with_capacity(self.count());
        for a in 0..=self.degree {
            vals.push(legendre_with_derivative(a, x).0);
        }
        vals
    }

    pub fn value(&self, coeffs: &[f64], s: f64) -> f64 {
        self.eval(s)
            .iter()
            .zip(coeffs)
            .map(|(l, c)| l * c)
            .sum()
    }
}
