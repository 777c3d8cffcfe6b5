//! Degree-of-freedom bookkeeping for the saddle-point system.
//!
//! The global coefficient vector is ordered
//! (q, p, P+, P-, Q+, Q-, alpha, beta | u, omega, U, Omega):
//! the multiplier space first, the primal space second. Multiplier fields
//! use k+1 Legendre coefficients per strut and component, primal fields
//! n+1 = k+2 nodal coefficients.

use crate::error::CoreError;
use crate::network::StentNetwork;

/// Polynomial orders of the discretization; the primal degree is always
/// one above the multiplier degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeOrders {
    k: usize,
}

impl FeOrders {
    pub fn new(k: usize) -> Self {
        FeOrders { k }
    }

    /// Checked constructor for independently supplied degrees.
    pub fn try_new(k: usize, n: usize) -> Result<Self, CoreError> {
        if n != k + 1 {
            return Err(CoreError::InconsistentOrders { k, n });
        }
        Ok(FeOrders { k })
    }

    /// Multiplier degree.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Primal degree n = k + 1.
    pub fn n(&self) -> usize {
        self.k + 1
    }
}

/// Index ranges of every variable group in the global vector.
#[derive(Debug, Clone)]
pub struct DofLayout {
    pub orders: FeOrders,
    pub n_struts: usize,
    pub n_vertices: usize,
    pub q: Range,
    pub p: Range,
    pub p_plus: Range,
    pub p_minus: Range,
    pub q_plus: Range,
    pub q_minus: Range,
    pub alpha: Range,
    pub beta: Range,
    pub u: Range,
    pub omega: Range,
    pub vertex_u: Range,
    pub vertex_omega: Range,
}

pub type Range = std::ops::Range<usize>;

impl DofLayout {
    pub fn new(net: &StentNetwork, orders: FeOrders) -> Self {
        let k = orders.k();
        let n_e = net.n_struts();
        let n_v = net.n_vertices();
        let mult = 3 * (k + 1) * n_e;
        let primal = 3 * (k + 2) * n_e;
        let contact = 3 * n_e;
        let mut at = 0usize;
        let mut next = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let q = next(mult);
        let p = next(mult);
        let p_plus = next(contact);
        let p_minus = next(contact);
        let q_plus = next(contact);
        let q_minus = next(contact);
        let alpha = next(3);
        let beta = next(3);
        let u = next(primal);
        let omega = next(primal);
        let vertex_u = next(3 * n_v);
        let vertex_omega = next(3 * n_v);
        DofLayout {
            orders,
            n_struts: n_e,
            n_vertices: n_v,
            q,
            p,
            p_plus,
            p_minus,
            q_plus,
            q_minus,
            alpha,
            beta,
            u,
            omega,
            vertex_u,
            vertex_omega,
        }
    }

    /// Dimension of the multiplier space: 3 (2k+6) n_E + 6.
    pub fn dim_multiplier(&self) -> usize {
        3 * (2 * self.orders.k() + 6) * self.n_struts + 6
    }

    /// Dimension of the primal space: 3 (2k+4) n_E + 6 n_V.
    pub fn dim_primal(&self) -> usize {
        3 * (2 * self.orders.k() + 4) * self.n_struts + 6 * self.n_vertices
    }

    /// Full system dimension.
    pub fn dim_total(&self) -> usize {
        self.dim_multiplier() + self.dim_primal()
    }

    /// Index of Legendre coefficient `a`, component `c` of a multiplier
    /// field on strut `e`, relative to the group start.
    pub fn mult_local(&self, e: usize, a: usize, c: usize) -> usize {
        3 * ((self.orders.k() + 1) * e + a) + c
    }

    /// Index of nodal coefficient `i`, component `c` of a primal field on
    /// strut `e`, relative to the group start.
    pub fn primal_local(&self, e: usize, i: usize, c: usize) -> usize {
        3 * ((self.orders.n() + 1) * e + i) + c
    }

    pub fn contact_local(&self, e: usize, c: usize) -> usize {
        3 * e + c
    }

    pub fn vertex_local(&self, v: usize, c: usize) -> usize {
        3 * v + c
    }

    /// Row group of q within the multiplier block (canonical block 1).
    pub fn group_q(&self) -> Range {
        self.q.clone()
    }

    /// Row group of (p, P+, P-, Q+, Q-, alpha, beta) (canonical block 2).
    pub fn group_rest(&self) -> Range {
        self.p.start..self.beta.end
    }

    /// Row group of u within the full vector (canonical block 3).
    pub fn group_u(&self) -> Range {
        self.u.clone()
    }

    /// Row group of (omega, U, Omega) (canonical block 4).
    pub fn group_omega_vertices(&self) -> Range {
        self.omega.start..self.vertex_omega.end
    }
}
