//! Shared test support: an independent quadrature oracle for the
//! bilinear forms, built from raw recurrence/product evaluations and a
//! Gauss-Lobatto rule, plus a small fixture network.
//!
//! The assembled matrices are checked against a direct evaluation of the
//! defining sums: polynomials are evaluated with local recurrence/product
//! formulas and integrated with a high-order Gauss-Lobatto rule, a
//! different rule family than the assembler uses.

use nalgebra::Vector3;
use strutnet_core::assembly::Assembler;
use strutnet_core::fields::MixedSolution;
use strutnet_core::layout::FeOrders;
use strutnet_core::network::{StentNetwork, Strut, Vertex};
use strutnet_core::quadrature::gauss_lobatto;
use strutnet_core::rod::{compliance_weight, frame_for, h_matrix, CrossSection, Material};

/// Legendre polynomial value by the raw three-term recurrence.
pub fn legendre_value(a: usize, x: f64) -> f64 {
    match a {
        0 => 1.0,
        1 => x,
        _ => {
            let mut p0 = 1.0;
            let mut p1 = x;
            for m in 1..a {
                let mf = m as f64;
                let p2 = ((2.0 * mf + 1.0) * x * p1 - mf * p0) / (mf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    }
}

/// Lagrange basis value by the bare product formula.
pub fn lagrange_value(nodes: &[f64], i: usize, s: f64) -> f64 {
    let mut prod = 1.0;
    for (j, xj) in nodes.iter().enumerate() {
        if j != i {
            prod *= (s - xj) / (nodes[i] - xj);
        }
    }
    prod
}

/// Lagrange basis derivative by the product-rule sum.
pub fn lagrange_derivative(nodes: &[f64], i: usize, s: f64) -> f64 {
    let mut total = 0.0;
    for (m, xm) in nodes.iter().enumerate() {
        if m == i {
            continue;
        }
        let mut prod = 1.0 / (nodes[i] - xm);
        for (j, xj) in nodes.iter().enumerate() {
            if j != i && j != m {
                prod *= (s - xj) / (nodes[i] - xj);
            }
        }
        total += prod;
    }
    total
}

pub struct FieldEval<'a> {
    net: &'a StentNetwork,
    orders: FeOrders,
    nodes: Vec<Vec<f64>>,
}

impl<'a> FieldEval<'a> {
    pub fn new(net: &'a StentNetwork, orders: FeOrders, asm: &Assembler) -> Self {
        let nodes = asm
            .contexts
            .iter()
            .map(|c| c.primal.nodes.clone())
            .collect();
        FieldEval { net, orders, nodes }
    }

    pub fn primal(&self, coeffs: &[Vector3<f64>], e: usize, s: f64) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for (i, c) in coeffs.iter().enumerate() {
            out += c * lagrange_value(&self.nodes[e], i, s);
        }
        out
    }

    pub fn primal_deriv(&self, coeffs: &[Vector3<f64>], e: usize, s: f64) -> Vector3<f64> {
        let mut out = Vector3::zeros();
        for (i, c) in coeffs.iter().enumerate() {
            out += c * lagrange_derivative(&self.nodes[e], i, s);
        }
        out
    }

    pub fn multiplier(&self, coeffs: &[Vector3<f64>], e: usize, s: f64) -> Vector3<f64> {
        let len = self.net.struts[e].length;
        let x = 2.0 * s / len - 1.0;
        let mut out = Vector3::zeros();
        for (a, c) in coeffs.iter().enumerate() {
            out += c * legendre_value(a, x);
        }
        out
    }

    pub fn tangent(&self, e: usize) -> Vector3<f64> {
        let s = &self.net.struts[e];
        (self.net.position(s.head) - self.net.position(s.tail)) / s.length
    }

    /// Direct evaluation of b(Sigma, psi) from its definition.
    pub fn b_form(&self, sigma: &MixedSolution, psi: &MixedSolution) -> f64 {
        let quad = gauss_lobatto(2 * self.orders.n() + 4);
        let mut total = 0.0;
        for strut in &self.net.struts {
            let e = strut.id;
            let t = self.tangent(e);
            let rule = quad.mapped(strut.length);
            for (s, w) in rule.nodes.iter().zip(&rule.weights) {
                let p = self.multiplier(&sigma.p[e], e, *s);
                let q = self.multiplier(&sigma.q[e], e, *s);
                let dv = self.primal_deriv(&psi.u[e], e, *s);
                let wv = self.primal(&psi.omega[e], e, *s);
                let dw = self.primal_deriv(&psi.omega[e], e, *s);
                total += w * (-p.dot(&(dv + t.cross(&wv))) - q.dot(&dw));
            }
            let v_end = self.primal(&psi.u[e], e, strut.length);
            let v_start = self.primal(&psi.u[e], e, 0.0);
            let w_end = self.primal(&psi.omega[e], e, strut.length);
            let w_start = self.primal(&psi.omega[e], e, 0.0);
            total += sigma.p_plus[e].dot(&v_end) - sigma.p_minus[e].dot(&v_start);
            total += sigma.q_plus[e].dot(&w_end) - sigma.q_minus[e].dot(&w_start);
            // vertex couplings carry a minus sign
            total -= sigma.p_plus[e].dot(&psi.vertex_u[strut.head]);
            total += sigma.p_minus[e].dot(&psi.vertex_u[strut.tail]);
            total -= sigma.q_plus[e].dot(&psi.vertex_omega[strut.head]);
            total += sigma.q_minus[e].dot(&psi.vertex_omega[strut.tail]);
            // mean constraint terms
            for (s, w) in rule.nodes.iter().zip(&rule.weights) {
                let v = self.primal(&psi.u[e], e, *s);
                let wv = self.primal(&psi.omega[e], e, *s);
                total += w * (sigma.alpha.dot(&v) + sigma.beta.dot(&wv));
            }
        }
        total
    }

    /// Direct evaluation of a(Sigma, Gamma).
    #[allow(dead_code)]
    pub fn a_form(&self, sigma: &MixedSolution, gamma: &MixedSolution) -> f64 {
        let quad = gauss_lobatto(2 * self.orders.k() + 4);
        let mut total = 0.0;
        for strut in &self.net.struts {
            let e = strut.id;
            let frame = frame_for(
                &self.net.position(strut.tail),
                &self.net.position(strut.head),
            )
            .unwrap();
            let h = h_matrix(self.net.material_of(strut), self.net.section_of(strut));
            let weight = compliance_weight(&frame, &h);
            let rule = quad.mapped(strut.length);
            for (s, w) in rule.nodes.iter().zip(&rule.weights) {
                let q = self.multiplier(&sigma.q[e], e, *s);
                let xi = self.multiplier(&gamma.q[e], e, *s);
                total += w * (weight * q).dot(&xi);
            }
        }
        total
    }
}

pub fn three_strut_net() -> StentNetwork {
    // a bent chain of three non-collinear struts
    let positions = [
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1.0, 0.2, 0.0),
        Vector3::new(1.8, -0.1, 0.7),
        Vector3::new(2.5, 0.4, 1.0),
    ];
    let vertices: Vec<Vertex> = positions
        .iter()
        .enumerate()
        .map(|(id, p)| Vertex { id, position: *p })
        .collect();
    let struts = (0..3)
        .map(|i| Strut {
            id: i,
            tail: i,
            head: i + 1,
            length: (positions[i + 1] - positions[i]).norm(),
            section: 0,
            material: 0,
        })
        .collect();
    StentNetwork {
        vertices,
        struts,
        sections: vec![CrossSection::new(0.2, 0.1)],
        materials: vec![Material::new(2.0, 1.3, 1.0)],
    }
}

