//! Material and cross-section models for a single strut.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Linear elastic material, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Young modulus, Pa.
    pub young_modulus: f64,
    /// Shear modulus, Pa.
    pub shear_modulus: f64,
    /// Volume mass density, kg/m^3.
    pub density: f64,
}

impl Material {
    pub fn new(young_modulus: f64, shear_modulus: f64, density: f64) -> Self {
        assert!(young_modulus > 0.0 && shear_modulus > 0.0 && density >= 0.0);
        Material {
            young_modulus,
            shear_modulus,
            density,
        }
    }

    /// Builds a material from Young modulus and Poisson ratio.
    pub fn from_poisson(young_modulus: f64, poisson: f64, density: f64) -> Self {
        Material::new(
            young_modulus,
            young_modulus / (2.0 * (1.0 + poisson)),
            density,
        )
    }
}

/// Rectangular cross-section of width `w` and thickness `t`, SI units.
///
/// The torsion constant defaults to the Saint-Venant approximation
/// `w t^3 (1/3 - 0.21 (t/w) (1 - t^4 / (12 w^4)))` with `w >= t`
/// (sides swapped otherwise); an explicit value can be supplied to
/// override it, e.g. with a series evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub width: f64,
    pub thickness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torsion_constant: Option<f64>,
}

impl CrossSection {
    pub fn new(width: f64, thickness: f64) -> Self {
        assert!(width > 0.0 && thickness > 0.0);
        CrossSection {
            width,
            thickness,
            torsion_constant: None,
        }
    }

    pub fn with_torsion_constant(mut self, kt: f64) -> Self {
        assert!(kt > 0.0);
        self.torsion_constant = Some(kt);
        self
    }

    /// Area w*t, m^2.
    pub fn area(&self) -> f64 {
        self.width * self.thickness
    }

    /// Moment of inertia about the section normal axis: w t^3 / 12, m^4.
    pub fn moment_n(&self) -> f64 {
        self.width * self.thickness.powi(3) / 12.0
    }

    /// Moment of inertia about the binormal axis: t w^3 / 12, m^4.
    pub fn moment_b(&self) -> f64 {
        self.thickness * self.width.powi(3) / 12.0
    }

    /// Torsion constant, m^4.
    pub fn torsion(&self) -> f64 {
        if let Some(kt) = self.torsion_constant {
            return kt;
        }
        let (w, t) = if self.width >= self.thickness {
            (self.width, self.thickness)
        } else {
            (self.thickness, self.width)
        };
        let r = t / w;
        w * t.powi(3) * (1.0 / 3.0 - 0.21 * r * (1.0 - r.powi(4) / 12.0))
    }
}

/// Diagonal elasticity matrix H = diag(mu K_t, E I_n, E I_b), N m^2.
#[derive(Debug, Clone, Copy)]
pub struct HMatrix {
    pub diag: Vector3<f64>,
}

impl HMatrix {
    pub fn inverse_diag(&self) -> Vector3<f64> {
        Vector3::new(1.0 / self.diag.x, 1.0 / self.diag.y, 1.0 / self.diag.z)
    }
}

/// H = diag(mu K_t, E I_n, E I_b) for a strut with the given material/section.
pub fn h_matrix(material: &Material, section: &CrossSection) -> HMatrix {
    HMatrix {
        diag: Vector3::new(
            material.shear_modulus * section.torsion(),
            material.young_modulus * section.moment_n(),
            material.young_modulus * section.moment_b(),
        ),
    }
}

/// Orthonormal frame Q = [t, n, b] attached to a straight strut.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    pub q_matrix: Matrix3<f64>,
}

impl LocalFrame {
    pub fn tangent(&self) -> Vector3<f64> {
        self.q_matrix.column(0).into()
    }
}

/// Builds the local frame for the chord from `tail_pos` to `head_pos`.
///
/// The tangent is the unit chord. The normal comes from projecting e3 onto
/// the tangent-orthogonal complement; when the chord is closer than ~25
/// degrees to e3 (|t . e3| > 0.9) the reference switches to e2. The rule is
/// deterministic so assembled systems are reproducible.
pub fn frame_for(tail_pos: &Vector3<f64>, head_pos: &Vector3<f64>) -> Result<LocalFrame, CoreError> {
    let chord = head_pos - tail_pos;
    let len = chord.norm();
    if len <= 0.0 || !len.is_finite() {
        return Err(CoreError::DegenerateStrut(format!(
            "zero-length strut at {tail_pos:?}"
        )));
    }
    let t = chord / len;
    let reference = if t.z.abs() > 0.9 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let mut n = reference - t * reference.dot(&t);
    n /= n.norm();
    let b = t.cross(&n);
    let mut q = Matrix3::zeros();
    q.set_column(0, &t);
    q.set_column(1, &n);
    q.set_column(2, &b);
    Ok(LocalFrame { q_matrix: q })
}

/// Q H^{-1} Q^T, the symmetric positive definite weight entering the form a.
/// Symmetrized so assembled matrices are symmetric to the last bit.
pub fn compliance_weight(frame: &LocalFrame, h: &HMatrix) -> Matrix3<f64> {
    let q = frame.q_matrix;
    let w = q * Matrix3::from_diagonal(&h.inverse_diag()) * q.transpose();
    (w + w.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_defect(q: &Matrix3<f64>) -> f64 {
        (q.transpose() * q - Matrix3::identity()).norm()
    }

    #[test]
    fn frame_along_e1_is_orthonormal_right_handed() {
        let f = frame_for(&Vector3::zeros(), &Vector3::new(2.0, 0.0, 0.0)).unwrap();
        assert!(orthonormality_defect(&f.q_matrix) < 1e-12);
        assert!((f.q_matrix.determinant() - 1.0).abs() < 1e-12);
        assert!((f.tangent() - Vector3::x()).norm() < 1e-14);
    }

    #[test]
    fn frame_along_e3_uses_fallback_reference() {
        let f = frame_for(&Vector3::zeros(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let n: Vector3<f64> = f.q_matrix.column(1).into();
        assert!(n.dot(&Vector3::z()).abs() < 1e-14);
        assert!(orthonormality_defect(&f.q_matrix) < 1e-12);
        assert!((f.q_matrix.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_strut_is_rejected() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(frame_for(&p, &p).is_err());
    }

    #[test]
    fn square_section_moments_match() {
        let s = CrossSection::new(1e-4, 1e-4);
        let expected = 1e-4f64 * 1e-4f64.powi(3) / 12.0;
        assert!((s.moment_n() - expected).abs() < 1e-30);
        assert!((s.moment_n() - s.moment_b()).abs() < 1e-30);
        assert!((s.moment_n() - 8.3333e-18).abs() < 1e-21);
    }

    /// Series oracle for the rectangular torsion constant (w >= t):
    /// K = w t^3 (1/3 - 64 t / (pi^5 w) * sum over odd m of tanh(m pi w / (2 t)) / m^5).
    fn torsion_series(w: f64, t: f64) -> f64 {
        let (w, t) = if w >= t { (w, t) } else { (t, w) };
        let mut sum = 0.0;
        let mut m = 1u32;
        while m < 400 {
            let mf = m as f64;
            sum += (mf * std::f64::consts::PI * w / (2.0 * t)).tanh() / mf.powi(5);
            m += 2;
        }
        w * t.powi(3) * (1.0 / 3.0 - 64.0 * t / (std::f64::consts::PI.powi(5) * w) * sum)
    }

    #[test]
    fn torsion_default_close_to_series_for_square() {
        let s = CrossSection::new(1e-4, 1e-4);
        let exact = torsion_series(1e-4, 1e-4);
        assert!((exact - 1.4058e-17).abs() / exact < 1e-3, "series {exact}");
        let approx = s.torsion();
        assert!((approx - exact).abs() / exact < 5e-3, "{approx} vs {exact}");
        // explicit override wins
        let s2 = CrossSection::new(1e-4, 1e-4).with_torsion_constant(exact);
        assert_eq!(s2.torsion(), exact);
    }

    #[test]
    fn torsion_approximation_tracks_series_for_rectangles() {
        for ratio in [1.0, 1.5, 2.0, 4.0, 10.0] {
            let w = 2e-3 * ratio;
            let t = 2e-3;
            let approx = CrossSection::new(w, t).torsion();
            let exact = torsion_series(w, t);
            assert!(
                (approx - exact).abs() / exact < 0.02,
                "ratio {ratio}: {approx} vs {exact}"
            );
        }
    }

    #[test]
    fn unit_moduli_h_matrix() {
        let m = Material::new(1.0, 1.0, 0.0);
        let s = CrossSection::new(1.0, 1.0);
        let h = h_matrix(&m, &s);
        assert!((h.diag.x - s.torsion()).abs() < 1e-15);
        assert!((h.diag.y - 1.0 / 12.0).abs() < 1e-15);
        assert!((h.diag.z - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn steel_square_h_matrix_values() {
        let m = Material::from_poisson(2.1e11, 0.26506, 7850.0);
        let s = CrossSection::new(1e-4, 1e-4);
        let h = h_matrix(&m, &s);
        assert!((h.diag.y - 2.1e11 * 8.333333333333333e-18).abs() / h.diag.y < 1e-12);
        assert!((h.diag.y - h.diag.z).abs() < 1e-20);
        assert!(h.diag.x > 0.0);
    }

    #[test]
    fn compliance_weight_is_similar_to_inverse_h() {
        let m = Material::from_poisson(2.1e11, 0.26506, 7850.0);
        let s = CrossSection::new(2e-4, 1e-4);
        let h = h_matrix(&m, &s);
        let f = frame_for(&Vector3::zeros(), &Vector3::new(1.0, 1.0, 0.3)).unwrap();
        let g = compliance_weight(&f, &h);
        assert!((g - g.transpose()).norm() < 1e-12 * g.norm());
        let eig = nalgebra::SymmetricEigen::new(g);
        let mut got: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        let mut want: Vec<f64> = h.inverse_diag().iter().cloned().collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() / w < 1e-10);
        }
    }
}
