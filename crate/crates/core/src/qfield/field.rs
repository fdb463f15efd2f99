use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QvarError, Result};
use crate::mesh::{Cube, Mesh};
use crate::qspace::{metric_g, optimal_matching, QPoint};

use super::AffineQMap;

/// Anything that can be evaluated as a Q-valued map on a cube.
pub trait QValued: Sync {
    fn domain(&self) -> &Cube;
    fn q(&self) -> usize;
    fn n(&self) -> usize;
    fn value_at(&self, x: &[f64]) -> Result<QPoint>;
}

/// A Q-valued map given by a closure, e.g. a smooth synthetic field.
pub struct FnField<F> {
    cube: Cube,
    q: usize,
    n: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> QPoint + Sync> FnField<F> {
    pub fn new(cube: Cube, q: usize, n: usize, f: F) -> Self {
        Self { cube, q, n, f }
    }
}

impl<F: Fn(&[f64]) -> QPoint + Sync> QValued for FnField<F> {
    fn domain(&self) -> &Cube {
        &self.cube
    }
    fn q(&self) -> usize {
        self.q
    }
    fn n(&self) -> usize {
        self.n
    }
    fn value_at(&self, x: &[f64]) -> Result<QPoint> {
        if !self.cube.contains(x, 1e-12) {
            return Err(QvarError::Domain(format!("{x:?} is outside {:?}", self.cube)));
        }
        Ok((self.f)(x))
    }
}

/// Piecewise-affine Q-valued field on a Kuhn mesh.
///
/// Every vertex stores a Q-point; every simplex stores a matching that picks,
/// for each of its Q sheets, one entry at each of its `m+1` vertices. Sheets
/// are affine interpolants of the matched entries.
#[derive(Debug, Clone, PartialEq)]
pub struct QSheetField {
    mesh: Mesh,
    n: usize,
    q: usize,
    vertices: Vec<QPoint>,
    /// `matching[simplex][sheet][local vertex]` = entry index at that vertex.
    matching: Vec<Vec<Vec<usize>>>,
}

/// Face defect above which a matching is rejected.
pub const FACE_TOLERANCE: f64 = 1e-12;

impl QSheetField {
    /// Field whose sheets are the continuous functions returned by `sheets`
    /// (evaluated at vertices, identity matching everywhere).
    pub fn from_sheets(mesh: Mesh, q: usize, n: usize, sheets: impl Fn(&[f64]) -> Vec<Vec<f64>>) -> Result<Self> {
        let vertices = (0..mesh.num_vertices())
            .map(|v| {
                let pts = sheets(&mesh.vertex_position(v));
                if pts.len() != q {
                    return Err(invalid!("sheet function returned {} sheets, expected {q}", pts.len()));
                }
                QPoint::new(n, &pts)
            })
            .collect::<Result<Vec<_>>>()?;
        let identity: Vec<Vec<usize>> = (0..q).map(|t| vec![t; mesh.dim() + 1]).collect();
        let matching = vec![identity; mesh.num_simplices()];
        Ok(Self { mesh, n, q, vertices, matching })
    }

    /// Samples an affine Q-map at the vertices.
    pub fn sample_affine(u: &AffineQMap, mesh: Mesh) -> Result<Self> {
        if u.m() != mesh.dim() {
            return Err(invalid!("affine map has m={}, mesh has dimension {}", u.m(), mesh.dim()));
        }
        Self::from_sheets(mesh, u.q(), u.n(), |x| u.eval(x).points().map(<[f64]>::to_vec).collect())
    }

    /// Field from vertex values alone. Each simplex matches the entries at its
    /// vertices to those at its first vertex by optimal assignment; the result
    /// must be face-consistent.
    pub fn from_vertex_values(mesh: Mesh, vertices: Vec<QPoint>) -> Result<Self> {
        let (q, n) = check_vertices(&mesh, &vertices)?;
        let matching = (0..mesh.num_simplices())
            .map(|s| assignment_matching(&mesh, &vertices, s, q))
            .collect::<Result<Vec<_>>>()?;
        let field = Self { mesh, n, q, vertices, matching };
        field.require_consistent()?;
        Ok(field)
    }

    /// Field with an explicit matching, validated for shape and face consistency.
    pub fn with_matching(mesh: Mesh, vertices: Vec<QPoint>, matching: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let (q, n) = check_vertices(&mesh, &vertices)?;
        if matching.len() != mesh.num_simplices() {
            return Err(invalid!(
                "matching lists {} simplices, mesh has {}",
                matching.len(),
                mesh.num_simplices()
            ));
        }
        for (s, sm) in matching.iter().enumerate() {
            if sm.len() != q || sm.iter().any(|t| t.len() != mesh.dim() + 1) {
                return Err(invalid!("matching of simplex {s} has the wrong shape"));
            }
            for local in 0..=mesh.dim() {
                let mut seen = vec![false; q];
                for t in sm {
                    let e = t[local];
                    if e >= q || std::mem::replace(&mut seen[e], true) {
                        return Err(invalid!("matching of simplex {s} is not a permutation at vertex {local}"));
                    }
                }
            }
        }
        let field = Self { mesh, n, q, vertices, matching };
        field.require_consistent()?;
        Ok(field)
    }

    pub(crate) fn from_parts_unchecked(
        mesh: Mesh,
        n: usize,
        q: usize,
        vertices: Vec<QPoint>,
        matching: Vec<Vec<Vec<usize>>>,
    ) -> Self {
        Self { mesh, n, q, vertices, matching }
    }

    pub(crate) fn with_vertices(&self, vertices: Vec<QPoint>) -> Self {
        Self { mesh: self.mesh.clone(), n: self.n, q: self.q, vertices, matching: self.matching.clone() }
    }

    pub(crate) fn set_matching_unchecked(&mut self, matching: Vec<Vec<Vec<usize>>>) {
        self.matching = matching;
    }

    /// True when simplices sharing a facet use the same entry indices there,
    /// which keeps the field consistent for any vertex values.
    pub(crate) fn index_consistent(mesh: &Mesh, matching: &[Vec<Vec<usize>>]) -> bool {
        let m = mesh.dim();
        let mut facets: BTreeMap<Vec<usize>, Vec<Vec<usize>>> = BTreeMap::new();
        for (s, sm) in matching.iter().enumerate() {
            let verts = mesh.simplex_vertices(s);
            for drop in 0..=m {
                let mut locals: Vec<usize> = (0..=m).filter(|&l| l != drop).collect();
                locals.sort_by_key(|&l| verts[l]);
                let key: Vec<usize> = locals.iter().map(|&l| verts[l]).collect();
                let mut tuples: Vec<Vec<usize>> = sm.iter().map(|t| locals.iter().map(|&l| t[l]).collect()).collect();
                tuples.sort();
                match facets.remove(&key) {
                    Some(other) if other != tuples => return false,
                    Some(_) => {}
                    None => {
                        facets.insert(key, tuples);
                    }
                }
            }
        }
        true
    }

    fn require_consistent(&self) -> Result<()> {
        let defect = self.face_consistency_defect();
        if defect > FACE_TOLERANCE {
            return Err(QvarError::InconsistentMatching(format!(
                "sheets disagree across an interior face by {defect:e}"
            )));
        }
        Ok(())
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn domain(&self) -> &Cube {
        self.mesh.cube()
    }

    pub fn m(&self) -> usize {
        self.mesh.dim()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn vertex_values(&self) -> &[QPoint] {
        &self.vertices
    }

    pub fn matching(&self) -> &[Vec<Vec<usize>>] {
        &self.matching
    }

    /// Entry of `sheet` at local vertex `local` of simplex `s`.
    pub fn sheet_vertex_value(&self, s: usize, sheet: usize, local: usize) -> &[f64] {
        let v = self.mesh.simplex_vertices(s)[local];
        self.vertices[v].point(self.matching[s][sheet][local])
    }

    /// Sheet values at barycentric point `bary` of simplex `s`, in sheet order.
    pub fn eval_in_simplex(&self, s: usize, bary: &[f64]) -> Vec<Vec<f64>> {
        let verts = self.mesh.simplex_vertices(s);
        (0..self.q)
            .map(|t| {
                let mut p = vec![0.0; self.n];
                for (local, (&v, &l)) in verts.iter().zip(bary).enumerate() {
                    let e = self.vertices[v].point(self.matching[s][t][local]);
                    for (pi, ei) in p.iter_mut().zip(e) {
                        *pi += l * ei;
                    }
                }
                p
            })
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<QPoint> {
        let (s, bary) = self.mesh.locate(x)?;
        let sheets = self.eval_in_simplex(s, &bary);
        QPoint::new(self.n, &sheets)
    }

    /// Constant sheet gradients (`n × m` each) on simplex `s`, in sheet order.
    pub fn sheet_gradients(&self, s: usize) -> Vec<DMatrix<f64>> {
        let verts = self.mesh.simplex_vertices(s);
        let perm = self.mesh.simplex_perm(s);
        let h = self.mesh.h();
        (0..self.q)
            .map(|t| {
                let mut d = DMatrix::zeros(self.n, self.m());
                for c in 1..verts.len() {
                    let hi = self.vertices[verts[c]].point(self.matching[s][t][c]);
                    let lo = self.vertices[verts[c - 1]].point(self.matching[s][t][c - 1]);
                    for i in 0..self.n {
                        d[(i, perm[c - 1])] = (hi[i] - lo[i]) / h;
                    }
                }
                d
            })
            .collect()
    }

    /// `Du = Σ_i ⟦Du_i⟧` on a cell (simplex) of the mesh.
    pub fn differential(&self, cell: usize) -> Result<Vec<DMatrix<f64>>> {
        self.mesh.check_simplex(cell)?;
        Ok(self.sheet_gradients(cell))
    }

    /// `|Du| = sqrt(Σ_i |Du_i|²)` with Frobenius norms.
    pub fn gradient_norm(&self, cell: usize) -> Result<f64> {
        Ok(self.differential(cell)?.iter().map(|d| d.norm_squared()).sum::<f64>().sqrt())
    }

    pub fn lipschitz_seminorm(&self) -> f64 {
        (0..self.mesh.num_simplices())
            .map(|s| self.sheet_gradients(s).iter().map(|d| d.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Largest disagreement, as a G distance between matched vertex tuples,
    /// of the sheet sets seen from the two simplices sharing an interior facet.
    pub fn face_consistency_defect(&self) -> f64 {
        let mut facets: BTreeMap<Vec<usize>, QPoint> = BTreeMap::new();
        let mut defect: f64 = 0.0;
        let m = self.m();
        for s in 0..self.mesh.num_simplices() {
            let verts = self.mesh.simplex_vertices(s);
            for drop in 0..=m {
                let mut locals: Vec<usize> = (0..=m).filter(|&l| l != drop).collect();
                locals.sort_by_key(|&l| verts[l]);
                let key: Vec<usize> = locals.iter().map(|&l| verts[l]).collect();
                let mut coords = Vec::with_capacity(self.q * self.n * m);
                for t in 0..self.q {
                    for &l in &locals {
                        coords.extend_from_slice(self.vertices[verts[l]].point(self.matching[s][t][l]));
                    }
                }
                let tuple = QPoint::from_flat(self.n * m.max(1), coords).expect("nonempty");
                match facets.remove(&key) {
                    Some(other) => {
                        defect = defect.max(metric_g(&tuple, &other).expect("same shape"));
                    }
                    None => {
                        facets.insert(key, tuple);
                    }
                }
            }
        }
        defect
    }

    pub fn boundary_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.mesh.num_vertices()).filter(|&v| self.mesh.is_boundary_vertex(v))
    }

    /// `max_v G(f(v), target(v))` over boundary vertices. For piecewise-affine
    /// fields and affine targets this bounds the trace distance.
    pub fn boundary_sup_distance(&self, target: impl Fn(&[f64]) -> QPoint) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for v in self.boundary_vertices() {
            let d = metric_g(&self.vertices[v], &target(&self.mesh.vertex_position(v)))?;
            worst = worst.max(d);
        }
        Ok(worst)
    }

    /// Same mesh and matching, vertex entries replaced by `f(position, entry)`.
    pub fn map_entries(&self, f: impl Fn(&[f64], &[f64]) -> Vec<f64>) -> Result<Self> {
        let mut new_n = None;
        let vertices = self
            .vertices
            .iter()
            .enumerate()
            .map(|(v, p)| {
                let x = self.mesh.vertex_position(v);
                let pts: Vec<Vec<f64>> = p.points().map(|e| f(&x, e)).collect();
                new_n = Some(pts[0].len());
                QPoint::new(pts[0].len(), &pts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mesh: self.mesh.clone(),
            n: new_n.unwrap_or(self.n),
            q: self.q,
            vertices,
            matching: self.matching.clone(),
        })
    }

    /// Superposition of fields on a common mesh; sheets keep their blocks.
    pub fn combine(fields: &[QSheetField]) -> Result<Self> {
        let first = fields.first().ok_or_else(|| invalid!("nothing to combine"))?;
        let mut vertices = first.vertices.clone();
        let mut matching = first.matching.clone();
        let mut offset = first.q;
        for f in &fields[1..] {
            if f.mesh != first.mesh || f.n != first.n {
                return Err(invalid!("combined fields must share mesh and target dimension"));
            }
            for (a, b) in vertices.iter_mut().zip(&f.vertices) {
                *a = a.concat(b)?;
            }
            for (ms, fs) in matching.iter_mut().zip(&f.matching) {
                ms.extend(fs.iter().map(|t| t.iter().map(|e| e + offset).collect::<Vec<_>>()));
            }
            offset += f.q;
        }
        Ok(Self { mesh: first.mesh.clone(), n: first.n, q: offset, vertices, matching })
    }
}

impl QValued for QSheetField {
    fn domain(&self) -> &Cube {
        self.mesh.cube()
    }
    fn q(&self) -> usize {
        self.q
    }
    fn n(&self) -> usize {
        self.n
    }
    fn value_at(&self, x: &[f64]) -> Result<QPoint> {
        self.evaluate(x)
    }
}

fn check_vertices(mesh: &Mesh, vertices: &[QPoint]) -> Result<(usize, usize)> {
    if vertices.len() != mesh.num_vertices() {
        return Err(invalid!("{} vertex values for a mesh with {} vertices", vertices.len(), mesh.num_vertices()));
    }
    let (q, n) = (vertices[0].q(), vertices[0].n());
    if vertices.iter().any(|v| v.q() != q || v.n() != n) {
        return Err(invalid!("vertex values must share Q and n"));
    }
    Ok((q, n))
}

/// Matching of simplex `s` relative to its first vertex by optimal assignment
/// along each edge `v_0 → v_c`. Ties resolve to the lowest entry index.
pub(crate) fn assignment_matching(mesh: &Mesh, vertices: &[QPoint], s: usize, q: usize) -> Result<Vec<Vec<usize>>> {
    let verts = mesh.simplex_vertices(s);
    let mut sheets: Vec<Vec<usize>> = (0..q).map(|t| vec![t]).collect();
    for &v in &verts[1..] {
        let (sigma, _) = optimal_matching(&vertices[verts[0]], &vertices[v])?;
        for (t, sheet) in sheets.iter_mut().enumerate() {
            sheet.push(sigma[t]);
        }
    }
    Ok(sheets)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldRepr {
    m: usize,
    n: usize,
    #[serde(rename = "Q")]
    q: usize,
    domain: Cube,
    cells_per_side: usize,
    vertices: Vec<Vec<Vec<f64>>>,
    matching: Vec<Vec<Vec<usize>>>,
}

impl Serialize for QSheetField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        // vertex entries are written in canonical order; matchings are remapped
        let orders: Vec<Vec<usize>> = self.vertices.iter().map(|p| p.canonical_order()).collect();
        let ranks: Vec<Vec<usize>> = orders
            .iter()
            .map(|o| {
                let mut r = vec![0; o.len()];
                for (rank, &old) in o.iter().enumerate() {
                    r[old] = rank;
                }
                r
            })
            .collect();
        let matching = self
            .matching
            .iter()
            .enumerate()
            .map(|(sx, sm)| {
                let verts = self.mesh.simplex_vertices(sx);
                sm.iter()
                    .map(|t| t.iter().enumerate().map(|(l, &e)| ranks[verts[l]][e]).collect())
                    .collect()
            })
            .collect();
        FieldRepr {
            m: self.m(),
            n: self.n,
            q: self.q,
            domain: self.mesh.cube().clone(),
            cells_per_side: self.mesh.cells_per_side(),
            vertices: self
                .vertices
                .iter()
                .map(|p| p.canonical().points().map(<[f64]>::to_vec).collect())
                .collect(),
            matching,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QSheetField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = FieldRepr::deserialize(d)?;
        if r.domain.dim() != r.m {
            return Err(D::Error::custom("domain dimension differs from m"));
        }
        let cube = Cube::new(r.domain.center, r.domain.side).map_err(D::Error::custom)?;
        let mesh = Mesh::new(cube, r.cells_per_side).map_err(D::Error::custom)?;
        let vertices = r
            .vertices
            .iter()
            .map(|pts| {
                let p = QPoint::new(r.n, pts)?;
                if p.q() != r.q {
                    return Err(invalid!("vertex with {} entries, expected Q={}", p.q(), r.q));
                }
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        QSheetField::with_matching(mesh, vertices, r.matching).map_err(D::Error::custom)
    }
}
