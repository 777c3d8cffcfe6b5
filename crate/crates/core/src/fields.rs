//! Decoded solution fields and their evaluation on the network.

use nalgebra::{DVector, Vector3};

use crate::basis::{LagrangeBasis, LegendreBasis};
use crate::layout::DofLayout;
use crate::network::StentNetwork;

/// Per-strut polynomial fields, vertex values, endpoint contacts and the
/// two global multipliers, decoded from a flat coefficient vector.
#[derive(Debug, Clone)]
pub struct MixedSolution {
    /// Contact couple density per strut: (k+1) Legendre coefficients x 3.
    pub q: Vec<Vec<Vector3<f64>>>,
    /// Contact force density per strut: (k+1) Legendre coefficients x 3.
    pub p: Vec<Vec<Vector3<f64>>>,
    pub p_plus: Vec<Vector3<f64>>,
    pub p_minus: Vec<Vector3<f64>>,
    pub q_plus: Vec<Vector3<f64>>,
    pub q_minus: Vec<Vector3<f64>>,
    pub alpha: Vector3<f64>,
    pub beta: Vector3<f64>,
    /// Displacement per strut: (n+1) nodal coefficients x 3.
    pub u: Vec<Vec<Vector3<f64>>>,
    /// Infinitesimal rotation per strut: (n+1) nodal coefficients x 3.
    pub omega: Vec<Vec<Vector3<f64>>>,
    pub vertex_u: Vec<Vector3<f64>>,
    pub vertex_omega: Vec<Vector3<f64>>,
}

fn vec3_block(z: &DVector<f64>, start: usize) -> Vector3<f64> {
    Vector3::new(z[start], z[start + 1], z[start + 2])
}

impl MixedSolution {
    /// Splits a flat vector into fields per the layout.
    pub fn decode(z: &DVector<f64>, layout: &DofLayout) -> MixedSolution {
        assert_eq!(z.len(), layout.dim_total());
        let k1 = layout.orders.k() + 1;
        let n1 = layout.orders.n() + 1;
        let n_e = layout.n_struts;
        let n_v = layout.n_vertices;
        let mult_field = |start: usize| -> Vec<Vec<Vector3<f64>>> {
            (0..n_e)
                .map(|e| {
                    (0..k1)
                        .map(|a| vec3_block(z, start + layout.mult_local(e, a, 0)))
                        .collect()
                })
                .collect()
        };
        let primal_field = |start: usize| -> Vec<Vec<Vector3<f64>>> {
            (0..n_e)
                .map(|e| {
                    (0..n1)
                        .map(|i| vec3_block(z, start + layout.primal_local(e, i, 0)))
                        .collect()
                })
                .collect()
        };
        let contact = |start: usize| -> Vec<Vector3<f64>> {
            (0..n_e).map(|e| vec3_block(z, start + 3 * e)).collect()
        };
        let vertex = |start: usize| -> Vec<Vector3<f64>> {
            (0..n_v).map(|v| vec3_block(z, start + 3 * v)).collect()
        };
        MixedSolution {
            q: mult_field(layout.q.start),
            p: mult_field(layout.p.start),
            p_plus: contact(layout.p_plus.start),
            p_minus: contact(layout.p_minus.start),
            q_plus: contact(layout.q_plus.start),
            q_minus: contact(layout.q_minus.start),
            alpha: vec3_block(z, layout.alpha.start),
            beta: vec3_block(z, layout.beta.start),
            u: primal_field(layout.u.start),
            omega: primal_field(layout.omega.start),
            vertex_u: vertex(layout.vertex_u.start),
            vertex_omega: vertex(layout.vertex_omega.start),
        }
    }

    /// Inverse of [`MixedSolution::decode`].
    pub fn encode(&self, layout: &DofLayout) -> DVector<f64> {
        let mut z = DVector::zeros(layout.dim_total());
        let mut put3 = |start: usize, v: &Vector3<f64>| {
            z[start] = v.x;
            z[start + 1] = v.y;
            z[start + 2] = v.z;
        };
        for (e, coeffs) in self.q.iter().enumerate() {
            for (a, v) in coeffs.iter().enumerate() {
                put3(layout.q.start + layout.mult_local(e, a, 0), v);
            }
        }
        for (e, coeffs) in self.p.iter().enumerate() {
            for (a, v) in coeffs.iter().enumerate() {
                put3(layout.p.start + layout.mult_local(e, a, 0), v);
            }
        }
        for (e, v) in self.p_plus.iter().enumerate() {
            put3(layout.p_plus.start + 3 * e, v);
        }
        for (e, v) in self.p_minus.iter().enumerate() {
            put3(layout.p_minus.start + 3 * e, v);
        }
        for (e, v) in self.q_plus.iter().enumerate() {
            put3(layout.q_plus.start + 3 * e, v);
        }
        for (e, v) in self.q_minus.iter().enumerate() {
            put3(layout.q_minus.start + 3 * e, v);
        }
        put3(layout.alpha.start, &self.alpha);
        put3(layout.beta.start, &self.beta);
        for (e, coeffs) in self.u.iter().enumerate() {
            for (i, v) in coeffs.iter().enumerate() {
                put3(layout.u.start + layout.primal_local(e, i, 0), v);
            }
        }
        for (e, coeffs) in self.omega.iter().enumerate() {
            for (i, v) in coeffs.iter().enumerate() {
                put3(layout.omega.start + layout.primal_local(e, i, 0), v);
            }
        }
        for (v, val) in self.vertex_u.iter().enumerate() {
            put3(layout.vertex_u.start + 3 * v, val);
        }
        for (v, val) in self.vertex_omega.iter().enumerate() {
            put3(layout.vertex_omega.start + 3 * v, val);
        }
        z
    }

    pub fn zero(layout: &DofLayout) -> MixedSolution {
        MixedSolution::decode(&DVector::zeros(layout.dim_total()), layout)
    }
}

/// Evaluates a 3-vector polynomial given by Legendre coefficients at s.
pub fn eval_multiplier(basis: &LegendreBasis, coeffs: &[Vector3<f64>], s: f64) -> Vector3<f64> {
    let vals = basis.eval(s);
    let mut out = Vector3::zeros();
    for (l, c) in vals.iter().zip(coeffs) {
        out += c * *l;
    }
    out
}

/// Evaluates a 3-vector polynomial given by nodal coefficients at s.
pub fn eval_primal(basis: &LagrangeBasis, coeffs: &[Vector3<f64>], s: f64) -> Vector3<f64> {
    let vals = basis.eval(s);
    let mut out = Vector3::zeros();
    for (phi, c) in vals.iter().zip(coeffs) {
        out += c * *phi;
    }
    out
}

/// Derivative with respect to arclength of a nodal 3-vector polynomial.
pub fn eval_primal_deriv(
    basis: &LagrangeBasis,
    coeffs: &[Vector3<f64>],
    s: f64,
) -> Vector3<f64> {
    let vals = basis.eval_deriv(s);
    let mut out = Vector3::zeros();
    for (phi, c) in vals.iter().zip(coeffs) {
        out += c * *phi;
    }
    out
}

/// Network integrals of u and omega by exact quadrature.
pub fn mean_integrals(
    net: &StentNetwork,
    layout: &DofLayout,
    sol: &MixedSolution,
) -> (Vector3<f64>, Vector3<f64>) {
    let n = layout.orders.n();
    let rule = crate::quadrature::gauss_legendre(n + 1);
    let mut int_u = Vector3::zeros();
    let mut int_w = Vector3::zeros();
    for strut in &net.struts {
        let basis = LagrangeBasis::new(n, strut.length);
        let mapped = rule.mapped(strut.length);
        for (s, w) in mapped.nodes.iter().zip(&mapped.weights) {
            int_u += eval_primal(&basis, &sol.u[strut.id], *s) * *w;
            int_w += eval_primal(&basis, &sol.omega[strut.id], *s) * *w;
        }
    }
    (int_u, int_w)
}
