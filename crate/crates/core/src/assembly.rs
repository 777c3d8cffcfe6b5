//! Assembly of the saddle-point system K = [[A, B^T], [B, 0]] and loads.
//!
//! The form a couples only the contact-couple density with itself through
//! the weight Q H^{-1} Q^T. The form b carries everything else: the strut
//! integrals, the endpoint trace terms, the vertex couplings through the
//! incidence matrices and the two mean constraints. The right hand side
//! has entries only in the displacement rows.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::basis::{LagrangeBasis, LegendreBasis};
use crate::error::CoreError;
use crate::fields::MixedSolution;
use crate::layout::{DofLayout, FeOrders};
use crate::loads::Load;
use crate::network::StentNetwork;
use crate::quadrature::gauss_legendre;
use crate::rod::{compliance_weight, frame_for, h_matrix, LocalFrame};

/// (row, col, value) entry in global indices.
pub type Triplet = (usize, usize, f64);

/// Per-strut data reused across assembly passes.
pub struct StrutContext {
    pub frame: LocalFrame,
    /// Q H^{-1} Q^T
    pub weight: Matrix3<f64>,
    pub primal: LagrangeBasis,
    pub mult: LegendreBasis,
    /// integral of L_a phi_i' over the strut, indexed `[a][i]`
    pub grad_int: Vec<Vec<f64>>,
    /// integral of L_a phi_i over the strut, indexed `[a][i]`
    pub mass_cross: Vec<Vec<f64>>,
    /// integral of phi_i phi_j, indexed `[i][j]`
    pub mass_primal: Vec<Vec<f64>>,
    /// integral of phi_i
    pub phi_int: Vec<f64>,
    /// phi_i at s = 0 and s = len
    pub phi_at_0: Vec<f64>,
    pub phi_at_len: Vec<f64>,
    /// Legendre basis mass diagonal
    pub mult_mass: Vec<f64>,
    pub rho_area: f64,
}

/// Prepared assembler for one network and order pair.
pub struct Assembler<'a> {
    pub net: &'a StentNetwork,
    pub orders: FeOrders,
    pub layout: DofLayout,
    pub contexts: Vec<StrutContext>,
    /// Number of quadrature points used for general (non-polynomial) loads.
    pub load_quadrature_points: usize,
}

impl<'a> Assembler<'a> {
    pub fn new(net: &'a StentNetwork, orders: FeOrders) -> Result<Self, CoreError> {
        net.validate()?;
        let layout = DofLayout::new(net, orders);
        let n = orders.n();
        let k = orders.k();
        let mut contexts = Vec::with_capacity(net.n_struts());
        for strut in &net.struts {
            let frame = frame_for(&net.position(strut.tail), &net.position(strut.head))?;
            let h = h_matrix(net.material_of(strut), net.section_of(strut));
            let weight = compliance_weight(&frame, &h);
            let primal = LagrangeBasis::new(n, strut.length);
            let mult = LegendreBasis::new(k, strut.length);
            // n+1 Gauss points integrate every polynomial integrand here
            // exactly (max degree 2n = 2k + 2 <= 2(n+1) - 1).
            let rule = gauss_legendre(n + 1).mapped(strut.length);
            let np = n + 1;
            let kp = k + 1;
            let mut grad_int = vec![vec![0.0; np]; kp];
            let mut mass_cross = vec![vec![0.0; np]; kp];
            let mut mass_primal = vec![vec![0.0; np]; np];
            let mut phi_int = vec![0.0; np];
            for (s, w) in rule.nodes.iter().zip(&rule.weights) {
                let lv = mult.eval(*s);
                let pv = primal.eval(*s);
                let pd = primal.eval_deriv(*s);
                for a in 0..kp {
                    for i in 0..np {
                        grad_int[a][i] += w * lv[a] * pd[i];
                        mass_cross[a][i] += w * lv[a] * pv[i];
                    }
                }
                for i in 0..np {
                    phi_int[i] += w * pv[i];
                    for j in 0..np {
                        mass_primal[i][j] += w * pv[i] * pv[j];
                    }
                }
            }
            // products associate differently above and below the diagonal
            for i in 0..np {
                for j in 0..i {
                    mass_primal[j][i] = mass_primal[i][j];
                }
            }
            let phi_at_0 = primal.eval(0.0);
            let phi_at_len = primal.eval(strut.length);
            let mult_mass = mult.mass_diagonal();
            let rho_area = net.material_of(strut).density * net.section_of(strut).area();
            contexts.push(StrutContext {
                frame,
                weight,
                primal,
                mult,
                grad_int,
                mass_cross,
                mass_primal,
                phi_int,
                phi_at_0,
                phi_at_len,
                mult_mass,
                rho_area,
            });
        }
        Ok(Assembler {
            net,
            orders,
            layout,
            contexts,
            load_quadrature_points: n + 3,
        })
    }

    /// Entries of the form a: the q-q Gram matrix under Q H^{-1} Q^T.
    /// The scaled Legendre basis is orthogonal, so degrees decouple.
    pub fn assemble_a(&self) -> Vec<Triplet> {
        let lay = &self.layout;
        let k1 = self.orders.k() + 1;
        let mut out = Vec::with_capacity(self.net.n_struts() * k1 * 9);
        for (e, ctx) in self.contexts.iter().enumerate() {
            for a in 0..k1 {
                let scale = ctx.mult_mass[a];
                for c in 0..3 {
                    for d in 0..3 {
                        let val = scale * ctx.weight[(c, d)];
                        if val != 0.0 {
                            out.push((
                                lay.q.start + lay.mult_local(e, a, c),
                                lay.q.start + lay.mult_local(e, a, d),
                                val,
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    /// Entries of the form b, rows in the primal block, columns in the
    /// multiplier block.
    pub fn assemble_b(&self) -> Vec<Triplet> {
        let lay = &self.layout;
        let k1 = self.orders.k() + 1;
        let n1 = self.orders.n() + 1;
        let mut out = Vec::new();
        for (e, ctx) in self.contexts.iter().enumerate() {
            let strut = &self.net.struts[e];
            let cross = ctx.frame.tangent().cross_matrix();
            for i in 0..n1 {
                // -int p . ds v  and  alpha . int v
                for c in 0..3 {
                    let row_u = lay.u.start + lay.primal_local(e, i, c);
                    for a in 0..k1 {
                        out.push((
                            row_u,
                            lay.p.start + lay.mult_local(e, a, c),
                            -ctx.grad_int[a][i],
                        ));
                    }
                    // P+ . v(len) - P- . v(0)
                    if ctx.phi_at_len[i] != 0.0 {
                        out.push((
                            row_u,
                            lay.p_plus.start + lay.contact_local(e, c),
                            ctx.phi_at_len[i],
                        ));
                    }
                    if ctx.phi_at_0[i] != 0.0 {
                        out.push((
                            row_u,
                            lay.p_minus.start + lay.contact_local(e, c),
                            -ctx.phi_at_0[i],
                        ));
                    }
                    out.push((row_u, lay.alpha.start + c, ctx.phi_int[i]));
                }
                // rotation rows
                for d in 0..3 {
                    let row_w = lay.omega.start + lay.primal_local(e, i, d);
                    for a in 0..k1 {
                        // -int q . ds w
                        out.push((
                            row_w,
                            lay.q.start + lay.mult_local(e, a, d),
                            -ctx.grad_int[a][i],
                        ));
                        // -int p . (t x w): p-component c against w-component d
                        for c in 0..3 {
                            let t_cd = cross[(c, d)];
                            if t_cd != 0.0 {
                                out.push((
                                    row_w,
                                    lay.p.start + lay.mult_local(e, a, c),
                                    -ctx.mass_cross[a][i] * t_cd,
                                ));
                            }
                        }
                    }
                    // Q+ . w(len) - Q- . w(0)
                    if ctx.phi_at_len[i] != 0.0 {
                        out.push((
                            row_w,
                            lay.q_plus.start + lay.contact_local(e, d),
                            ctx.phi_at_len[i],
                        ));
                    }
                    if ctx.phi_at_0[i] != 0.0 {
                        out.push((
                            row_w,
                            lay.q_minus.start + lay.contact_local(e, d),
                            -ctx.phi_at_0[i],
                        ));
                    }
                    out.push((row_w, lay.beta.start + d, ctx.phi_int[i]));
                }
            }
            // vertex couplings: -(A+ P+ - A- P-) . V and the same for couples
            for c in 0..3 {
                out.push((
                    lay.vertex_u.start + lay.vertex_local(strut.head, c),
                    lay.p_plus.start + lay.contact_local(e, c),
                    -1.0,
                ));
                out.push((
                    lay.vertex_u.start + lay.vertex_local(strut.tail, c),
                    lay.p_minus.start + lay.contact_local(e, c),
                    1.0,
                ));
                out.push((
                    lay.vertex_omega.start + lay.vertex_local(strut.head, c),
                    lay.q_plus.start + lay.contact_local(e, c),
                    -1.0,
                ));
                out.push((
                    lay.vertex_omega.start + lay.vertex_local(strut.tail, c),
                    lay.q_minus.start + lay.contact_local(e, c),
                    1.0,
                ));
            }
        }
        out
    }

    /// Right hand side at time t: f(psi) = -sum_i int f . v ds, entries in
    /// the displacement rows only.
    pub fn assemble_rhs(&self, load: &Load, t: f64) -> DVector<f64> {
        let lay = &self.layout;
        let n1 = self.orders.n() + 1;
        let mut rhs = DVector::zeros(lay.dim_total());
        let rule = gauss_legendre(self.load_quadrature_points);
        for (e, ctx) in self.contexts.iter().enumerate() {
            let strut = &self.net.struts[e];
            let mapped = rule.mapped(strut.length);
            for (s, w) in mapped.nodes.iter().zip(&mapped.weights) {
                let x = self.net.point_on(e, *s);
                let f = load.eval(&x, t);
                if f == Vector3::zeros() {
                    continue;
                }
                let pv = ctx.primal.eval(*s);
                for i in 0..n1 {
                    for c in 0..3 {
                        rhs[lay.u.start + lay.primal_local(e, i, c)] -= w * f[c] * pv[i];
                    }
                }
            }
        }
        rhs
    }

    /// Entries of the mass form c, a rho A weighted Gram matrix placed in
    /// the displacement block.
    pub fn assemble_mass(&self) -> Vec<Triplet> {
        let lay = &self.layout;
        let n1 = self.orders.n() + 1;
        let mut out = Vec::new();
        for (e, ctx) in self.contexts.iter().enumerate() {
            for i in 0..n1 {
                for j in 0..n1 {
                    let val = ctx.rho_area * ctx.mass_primal[i][j];
                    if val != 0.0 {
                        for c in 0..3 {
                            out.push((
                                lay.u.start + lay.primal_local(e, i, c),
                                lay.u.start + lay.primal_local(e, j, c),
                                val,
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    /// Assembles the full static system for a load at time t.
    pub fn system(&self, load: &Load, t: f64) -> SaddleSystem {
        SaddleSystem {
            layout: self.layout.clone(),
            a_entries: self.assemble_a(),
            b_entries: self.assemble_b(),
            rhs: self.assemble_rhs(load, t),
        }
    }

    pub fn decode(&self, z: &DVector<f64>) -> MixedSolution {
        MixedSolution::decode(z, &self.layout)
    }
}

/// The assembled symmetric block system.
///
/// `a_entries` live in the multiplier diagonal block, `b_entries` have rows
/// in the primal block and columns in the multiplier block; the full matrix
/// is K = [[A, B^T], [B, 0]] with a structurally zero (2,2) block.
pub struct SaddleSystem {
    pub layout: DofLayout,
    pub a_entries: Vec<Triplet>,
    pub b_entries: Vec<Triplet>,
    pub rhs: DVector<f64>,
}

impl SaddleSystem {
    pub fn dim(&self) -> usize {
        self.layout.dim_total()
    }

    /// All entries of K: A, B and B^T.
    pub fn k_triplets(&self) -> Vec<Triplet> {
        let mut out = Vec::with_capacity(self.a_entries.len() + 2 * self.b_entries.len());
        out.extend_from_slice(&self.a_entries);
        for &(r, c, v) in &self.b_entries {
            out.push((r, c, v));
            out.push((c, r, v));
        }
        out
    }

    pub fn k_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (r, c, v) in self.k_triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Dense B block (primal rows x multiplier columns).
    pub fn b_dense(&self) -> DMatrix<f64> {
        let rows = self.layout.dim_primal();
        let cols = self.layout.dim_multiplier();
        let offset = self.layout.dim_multiplier();
        let mut m = DMatrix::zeros(rows, cols);
        for &(r, c, v) in &self.b_entries {
            m[(r - offset, c)] += v;
        }
        m
    }

    /// Dense A block (multiplier x multiplier).
    pub fn a_dense(&self) -> DMatrix<f64> {
        let n = self.layout.dim_multiplier();
        let mut m = DMatrix::zeros(n, n);
        for &(r, c, v) in &self.a_entries {
            m[(r, c)] += v;
        }
        m
    }

    /// Writes K as `row col value` lines, 0-based indices.
    pub fn export_triplets(&self, path: &std::path::Path) -> Result<(), CoreError> {
        use std::io::Write;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut trips = self.k_triplets();
        trips.sort_by_key(|a| (a.0, a.1));
        for (r, c, v) in trips {
            writeln!(file, "{r} {c} {v:.17e}")?;
        }
        Ok(())
    }
}
