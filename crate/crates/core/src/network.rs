//! The stent as an undirected graph of oriented straight struts.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::rod::{CrossSection, Material};

/// A junction point of the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub position: Vector3<f64>,
}

/// One straight elastic strut. The local coordinate runs from 0 at `tail`
/// to `length` at `head`; `length` always equals the chord length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strut {
    pub id: usize,
    pub tail: usize,
    pub head: usize,
    pub length: f64,
    pub section: usize,
    pub material: usize,
}

/// Undirected graph of vertices and oriented struts plus the section and
/// material tables they reference. Immutable after construction.
#[derive(Debug, Clone)]
pub struct StentNetwork {
    pub vertices: Vec<Vertex>,
    pub struts: Vec<Strut>,
    pub sections: Vec<CrossSection>,
    pub materials: Vec<Material>,
}

/// 0/1 block incidence matrices; `a_plus` marks head vertices, `a_minus`
/// tail vertices. A_I = a_plus - a_minus. Stored as vertex indices per
/// strut since each 3-column block holds exactly one 3x3 identity.
#[derive(Debug, Clone)]
pub struct IncidenceMatrices {
    pub n_vertices: usize,
    /// head vertex of each strut (row block of the identity in a_plus)
    pub head: Vec<usize>,
    /// tail vertex of each strut (row block of the identity in a_minus)
    pub tail: Vec<usize>,
}

impl IncidenceMatrices {
    /// Dense scalar A_I^+ (3 n_V x 3 n_E).
    pub fn a_plus_dense(&self) -> nalgebra::DMatrix<f64> {
        self.block_dense(&self.head)
    }

    /// Dense scalar A_I^- (3 n_V x 3 n_E).
    pub fn a_minus_dense(&self) -> nalgebra::DMatrix<f64> {
        self.block_dense(&self.tail)
    }

    /// Dense A_I = A_I^+ - A_I^-.
    pub fn incidence_dense(&self) -> nalgebra::DMatrix<f64> {
        self.a_plus_dense() - self.a_minus_dense()
    }

    fn block_dense(&self, rows: &[usize]) -> nalgebra::DMatrix<f64> {
        let n_e = rows.len();
        let mut m = nalgebra::DMatrix::zeros(3 * self.n_vertices, 3 * n_e);
        for (e, &v) in rows.iter().enumerate() {
            for c in 0..3 {
                m[(3 * v + c, 3 * e + c)] = 1.0;
            }
        }
        m
    }
}

impl StentNetwork {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_struts(&self) -> usize {
        self.struts.len()
    }

    pub fn position(&self, v: usize) -> Vector3<f64> {
        self.vertices[v].position
    }

    pub fn section_of(&self, strut: &Strut) -> &CrossSection {
        &self.sections[strut.section]
    }

    pub fn material_of(&self, strut: &Strut) -> &Material {
        &self.materials[strut.material]
    }

    pub fn total_length(&self) -> f64 {
        self.struts.iter().map(|s| s.length).sum()
    }

    /// Point on strut `e` at local coordinate s in [0, length].
    pub fn point_on(&self, e: usize, s: f64) -> Vector3<f64> {
        let strut = &self.struts[e];
        let a = self.position(strut.tail);
        let b = self.position(strut.head);
        a + (b - a) * (s / strut.length)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.vertices.len()];
        for s in &self.struts {
            deg[s.tail] += 1;
            deg[s.head] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return false;
        }
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for s in &self.struts {
            adj[s.tail].push(s.head);
            adj[s.head].push(s.tail);
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.vertices.len()
    }

    /// Validates ids, lengths, degrees and connectivity.
    pub fn validate(&self) -> Result<(), CoreError> {
        for (i, v) in self.vertices.iter().enumerate() {
            if v.id != i {
                return Err(CoreError::Inconsistent(format!(
                    "vertex id {} at position {i}",
                    v.id
                )));
            }
        }
        for (i, s) in self.struts.iter().enumerate() {
            if s.id != i {
                return Err(CoreError::Inconsistent(format!("strut id {} at {i}", s.id)));
            }
            if s.tail == s.head {
                return Err(CoreError::DegenerateStrut(format!("strut {i} is a loop")));
            }
            if s.tail >= self.vertices.len() || s.head >= self.vertices.len() {
                return Err(CoreError::Inconsistent(format!(
                    "strut {i} references a missing vertex"
                )));
            }
            if s.section >= self.sections.len() || s.material >= self.materials.len() {
                return Err(CoreError::Inconsistent(format!(
                    "strut {i} references a missing section or material"
                )));
            }
            let chord = (self.position(s.head) - self.position(s.tail)).norm();
            if (chord - s.length).abs() > 1e-9 * chord.max(1.0) {
                return Err(CoreError::Inconsistent(format!(
                    "strut {i}: stored length {} differs from chord {chord}",
                    s.length
                )));
            }
        }
        if self.degrees().contains(&0) {
            return Err(CoreError::NotConnected);
        }
        if !self.is_connected() {
            return Err(CoreError::NotConnected);
        }
        Ok(())
    }

    /// Incidence structure of the oriented graph.
    pub fn incidence(&self) -> IncidenceMatrices {
        IncidenceMatrices {
            n_vertices: self.vertices.len(),
            head: self.struts.iter().map(|s| s.head).collect(),
            tail: self.struts.iter().map(|s| s.tail).collect(),
        }
    }

    /// Splits every strut into `splits` collinear struts of equal length.
    ///
    /// Original vertex ids are preserved as a prefix. The new vertices of
    /// strut `e` get ids `n_V + e (splits - 1) + (j - 1)` for the cut at
    /// fraction j/splits, and the sub-struts of strut `e` occupy indices
    /// `e * splits .. (e+1) * splits` in tail-to-head order. Nested
    /// refinements therefore enumerate sub-struts the same way as a single
    /// refinement by the product of the factors.
    pub fn refine(&self, splits: usize) -> StentNetwork {
        assert!(splits >= 1);
        if splits == 1 {
            return self.clone();
        }
        let n_v = self.vertices.len();
        let mut vertices = self.vertices.clone();
        let mut struts = Vec::with_capacity(self.struts.len() * splits);
        for strut in &self.struts {
            let a = self.position(strut.tail);
            let b = self.position(strut.head);
            let base = n_v + strut.id * (splits - 1);
            for j in 1..splits {
                let frac = j as f64 / splits as f64;
                vertices.push(Vertex {
                    id: base + j - 1,
                    position: a + (b - a) * frac,
                });
            }
            let sub_len = strut.length / splits as f64;
            for j in 0..splits {
                let tail = if j == 0 { strut.tail } else { base + j - 1 };
                let head = if j == splits - 1 {
                    strut.head
                } else {
                    base + j
                };
                struts.push(Strut {
                    id: strut.id * splits + j,
                    tail,
                    head,
                    length: sub_len,
                    section: strut.section,
                    material: strut.material,
                });
            }
        }
        StentNetwork {
            vertices,
            struts,
            sections: self.sections.clone(),
            materials: self.materials.clone(),
        }
    }

    pub fn to_json(&self) -> NetworkFile {
        NetworkFile {
            vertices: self
                .vertices
                .iter()
                .map(|v| [v.position.x, v.position.y, v.position.z])
                .collect(),
            struts: self
                .struts
                .iter()
                .map(|s| StrutRecord {
                    tail: s.tail,
                    head: s.head,
                    section: s.section,
                    material: s.material,
                })
                .collect(),
            sections: self.sections.clone(),
            materials: self.materials.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CoreError> {
        let text = serde_json::to_string_pretty(&self.to_json())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<StentNetwork, CoreError> {
        let text = std::fs::read_to_string(path)?;
        let file: NetworkFile = serde_json::from_str(&text)?;
        file.into_network()
    }
}

/// On-disk JSON schema for networks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub vertices: Vec<[f64; 3]>,
    pub struts: Vec<StrutRecord>,
    pub sections: Vec<CrossSection>,
    pub materials: Vec<Material>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrutRecord {
    pub tail: usize,
    pub head: usize,
    pub section: usize,
    pub material: usize,
}

impl NetworkFile {
    pub fn into_network(self) -> Result<StentNetwork, CoreError> {
        let vertices: Vec<Vertex> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, p)| Vertex {
                id: i,
                position: Vector3::new(p[0], p[1], p[2]),
            })
            .collect();
        let struts: Vec<Strut> = self
            .struts
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let len = if r.tail < vertices.len() && r.head < vertices.len() {
                    (vertices[r.head].position - vertices[r.tail].position).norm()
                } else {
                    0.0
                };
                Strut {
                    id: i,
                    tail: r.tail,
                    head: r.head,
                    length: len,
                    section: r.section,
                    material: r.material,
                }
            })
            .collect();
        let net = StentNetwork {
            vertices,
            struts,
            sections: self.sections,
            materials: self.materials,
        };
        net.validate()?;
        Ok(net)
    }
}

/// Generates a zigzag cylinder: `n_long` rings of `n_circ` points on a
/// cylinder about the x1 axis, consecutive rings offset by half the angular
/// pitch and joined by the two nearest diagonals, so every interior vertex
/// is a 4-junction. With `end_ring`, ring 0 additionally carries `n_circ`
/// circumferential struts. Vertex ids run ring-major, ordered by angle.
#[allow(clippy::too_many_arguments)]
pub fn zigzag_cylinder(
    n_circ: usize,
    n_long: usize,
    radius: f64,
    length: f64,
    end_ring: bool,
    section: CrossSection,
    material: Material,
) -> Result<StentNetwork, CoreError> {
    if n_circ < 3 {
        return Err(CoreError::InvalidParameters(format!(
            "n_circ must be at least 3, got {n_circ}"
        )));
    }
    if n_long < 2 {
        return Err(CoreError::InvalidParameters(format!(
            "n_long must be at least 2, got {n_long}"
        )));
    }
    if radius <= 0.0 || length <= 0.0 {
        return Err(CoreError::InvalidParameters(
            "radius and length must be positive".into(),
        ));
    }
    let mut vertices = Vec::with_capacity(n_circ * n_long);
    let dx = length / (n_long - 1) as f64;
    let pitch = 2.0 * std::f64::consts::PI / n_circ as f64;
    for ring in 0..n_long {
        let offset = if ring % 2 == 0 { 0.0 } else { 0.5 };
        for i in 0..n_circ {
            let angle = pitch * (i as f64 + offset);
            vertices.push(Vertex {
                id: ring * n_circ + i,
                position: Vector3::new(
                    ring as f64 * dx,
                    radius * angle.cos(),
                    radius * angle.sin(),
                ),
            });
        }
    }
    let mut struts = Vec::new();
    let mut push = |tail: usize, head: usize, vs: &[Vertex]| {
        let len = (vs[head].position - vs[tail].position).norm();
        struts.push(Strut {
            id: struts.len(),
            tail,
            head,
            length: len,
            section: 0,
            material: 0,
        });
    };
    for ring in 0..n_long - 1 {
        for i in 0..n_circ {
            let v = ring * n_circ + i;
            // nearest two points of the next ring: same index and the
            // angular neighbour on the side of the half-pitch offset
            let (first, second) = if ring % 2 == 0 {
                (i, (i + n_circ - 1) % n_circ)
            } else {
                (i, (i + 1) % n_circ)
            };
            push(v, (ring + 1) * n_circ + first, &vertices);
            push(v, (ring + 1) * n_circ + second, &vertices);
        }
    }
    if end_ring {
        for i in 0..n_circ {
            push(i, (i + 1) % n_circ, &vertices);
        }
    }
    let net = StentNetwork {
        vertices,
        struts,
        sections: vec![section],
        materials: vec![material],
    };
    // belt check against duplicate vertices from degenerate parameters
    let scale = radius.max(length);
    for a in 0..net.vertices.len() {
        for b in a + 1..net.vertices.len() {
            if (net.vertices[a].position - net.vertices[b].position).norm() < 1e-12 * scale {
                return Err(CoreError::InvalidParameters(format!(
                    "duplicate vertices {a} and {b}"
                )));
            }
        }
    }
    net.validate()?;
    Ok(net)
}

/// The Palmaz-like reference geometry: counts chosen so the graph has
/// 144 vertices and 276 struts (12 rings of 12 points plus one end ring),
/// radius 1.5 mm, length 16.8 mm, square 0.1 mm steel section.
pub fn palmaz(section: CrossSection, material: Material) -> StentNetwork {
    zigzag_cylinder(12, 12, 1.5e-3, 1.68e-2, true, section, material)
        .expect("reference geometry parameters are valid")
}

pub fn steel() -> Material {
    Material::from_poisson(2.1e11, 0.26506, 7850.0)
}

pub fn square_section_01mm() -> CrossSection {
    CrossSection::new(1e-4, 1e-4)
}
