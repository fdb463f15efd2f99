//! Regular simplicial meshes of an axis-aligned cube.
//!
//! The cube is split into `k^m` cells and each cell into `m!` Kuhn simplices:
//! for a permutation `π`, the simplex has vertices `v_0 = corner` and
//! `v_c = v_{c−1} + h·e_{π(c−1)}`. The triangulation is conforming and nests
//! under integer refinement of `k`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, QvarError, Result};
use crate::quadrature::{advance, factorial};

/// The closed cube `C_r(x0) = x0 + [−r/2, r/2]^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cube {
    pub center: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn new(center: Vec<f64>, side: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(invalid!("cube needs dimension ≥ 1"));
        }
        if !(side > 0.0) || !side.is_finite() {
            return Err(invalid!("cube side must be positive, got {side}"));
        }
        Ok(Self { center, side })
    }

    /// `C_side` centred at the origin.
    pub fn centered(m: usize, side: f64) -> Self {
        Self { center: vec![0.0; m], side }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim() as i32)
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - 0.5 * self.side
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.center[axis] + 0.5 * self.side
    }

    pub fn contains(&self, x: &[f64], slack: f64) -> bool {
        x.len() == self.dim()
            && x.iter().enumerate().all(|(i, &xi)| {
                xi >= self.lower(i) - slack && xi <= self.upper(i) + slack
            })
    }

    pub fn contains_cube(&self, other: &Cube, slack: f64) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| {
                other.lower(i) >= self.lower(i) - slack && other.upper(i) <= self.upper(i) + slack
            })
    }
}

/// Kuhn triangulation of a cube with `cells_per_side` cells along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    cube: Cube,
    cells_per_side: usize,
    perms: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn new(cube: Cube, cells_per_side: usize) -> Result<Self> {
        if cells_per_side == 0 {
            return Err(invalid!("cells_per_side must be ≥ 1"));
        }
        let m = cube.dim();
        if m > 4 {
            return Err(invalid!("meshes are limited to dimension ≤ 4, got {m}"));
        }
        Ok(Self { perms: permutations(m), cube, cells_per_side })
    }

    pub fn cube(&self) -> &Cube {
        &self.cube
    }

    pub fn dim(&self) -> usize {
        self.cube.dim()
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn h(&self) -> f64 {
        self.cube.side / self.cells_per_side as f64
    }

    pub fn vertices_per_side(&self) -> usize {
        self.cells_per_side + 1
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices_per_side().pow(self.dim() as u32)
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_side.pow(self.dim() as u32)
    }

    pub fn simplices_per_cell(&self) -> usize {
        self.perms.len()
    }

    pub fn num_simplices(&self) -> usize {
        self.num_cells() * self.perms.len()
    }

    pub fn simplex_volume(&self) -> f64 {
        self.h().powi(self.dim() as i32) / factorial(self.dim()) as f64
    }

    /// Axis permutation defining simplex `s` inside its cell.
    pub fn simplex_perm(&self, s: usize) -> &[usize] {
        &self.perms[s % self.perms.len()]
    }

    pub fn cell_of_simplex(&self, s: usize) -> usize {
        s / self.perms.len()
    }

    pub fn vertex_multi_index(&self, v: usize) -> Vec<usize> {
        let base = self.vertices_per_side();
        let mut rest = v;
        (0..self.dim())
            .map(|_| {
                let i = rest % base;
                rest /= base;
                i
            })
            .collect()
    }

    pub fn vertex_index(&self, multi: &[usize]) -> usize {
        let base = self.vertices_per_side();
        multi.iter().rev().fold(0, |acc, &i| acc * base + i)
    }

    pub fn cell_multi_index(&self, c: usize) -> Vec<usize> {
        let mut rest = c;
        (0..self.dim())
            .map(|_| {
                let i = rest % self.cells_per_side;
                rest /= self.cells_per_side;
                i
            })
            .collect()
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        multi.iter().rev().fold(0, |acc, &i| acc * self.cells_per_side + i)
    }

    pub fn vertex_position(&self, v: usize) -> Vec<f64> {
        let h = self.h();
        self.vertex_multi_index(v)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.cube.lower(a) + h * i as f64)
            .collect()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_multi_index(v)
            .iter()
            .any(|&i| i == 0 || i == self.cells_per_side)
    }

    /// Vertices `v_0..v_m` of simplex `s`.
    pub fn simplex_vertices(&self, s: usize) -> Vec<usize> {
        let mut multi = self.cell_multi_index(self.cell_of_simplex(s));
        let mut out = Vec::with_capacity(self.dim() + 1);
        out.push(self.vertex_index(&multi));
        for &axis in self.simplex_perm(s) {
            multi[axis] += 1;
            out.push(self.vertex_index(&multi));
        }
        out
    }

    pub fn check_simplex(&self, s: usize) -> Result<()> {
        if s >= self.num_simplices() {
            return Err(QvarError::Index(format!(
                "cell {s} out of range (mesh has {} simplices)",
                self.num_simplices()
            )));
        }
        Ok(())
    }

    /// Physical point with barycentric coordinates `bary` in simplex `s`.
    pub fn point_in_simplex(&self, s: usize, bary: &[f64]) -> Vec<f64> {
        let verts = self.simplex_vertices(s);
        let mut x = vec![0.0; self.dim()];
        for (&v, &l) in verts.iter().zip(bary) {
            for (xi, pi) in x.iter_mut().zip(self.vertex_position(v)) {
                *xi += l * pi;
            }
        }
        x
    }

    /// Simplex containing `x` and the barycentric coordinates of `x` in it.
    pub fn locate(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let m = self.dim();
        let slack = 1e-12 * self.cube.side.max(1.0);
        if !self.cube.contains(x, slack) {
            return Err(QvarError::Domain(format!("{x:?} is outside {:?}", self.cube)));
        }
        let h = self.h();
        let mut cell = Vec::with_capacity(m);
        let mut t = Vec::with_capacity(m);
        for (a, &xa) in x.iter().enumerate() {
            let s = ((xa - self.cube.lower(a)) / h).clamp(0.0, self.cells_per_side as f64);
            let i = (s.floor() as usize).min(self.cells_per_side - 1);
            cell.push(i);
            t.push((s - i as f64).clamp(0.0, 1.0));
        }
        // order axes by decreasing local coordinate, ties by axis index
        let mut perm: Vec<usize> = (0..m).collect();
        perm.sort_by(|&a, &b| t[b].total_cmp(&t[a]).then(a.cmp(&b)));
        let pidx = self.perms.iter().position(|p| *p == perm).expect("all permutations present");
        let s = self.cell_index(&cell) * self.perms.len() + pidx;
        let mut bary = Vec::with_capacity(m + 1);
        bary.push(1.0 - t[perm[0]]);
        for c in 0..m {
            let next = if c + 1 < m { t[perm[c + 1]] } else { 0.0 };
            bary.push(t[perm[c]] - next);
        }
        Ok((s, bary))
    }

    /// Facets of simplex `s` on the cube boundary, as
    /// `(face axis, upper side?, local index of the dropped vertex)`.
    pub fn boundary_facets(&self, s: usize) -> Vec<(usize, bool, usize)> {
        let verts = self.simplex_vertices(s);
        let multis: Vec<Vec<usize>> = verts.iter().map(|&v| self.vertex_multi_index(v)).collect();
        let mut out = Vec::new();
        for drop in 0..verts.len() {
            for axis in 0..self.dim() {
                for (upper, level) in [(false, 0usize), (true, self.cells_per_side)] {
                    let on_face = multis
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != drop)
                        .all(|(_, mi)| mi[axis] == level);
                    if on_face {
                        out.push((axis, upper, drop));
                    }
                }
            }
        }
        out
    }

    /// Iterates cells as multi-indices in linear order.
    pub fn cells(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.num_cells()).map(|c| self.cell_multi_index(c))
    }
}

/// All permutations of `0..m` in lexicographic order.
pub fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; m];
    // enumerate all m^m tuples, keep permutations; m ≤ 4 keeps this tiny
    loop {
        let mut seen = vec![false; m];
        if idx.iter().all(|&i| !std::mem::replace(&mut seen[i], true)) {
            let mut p = idx.clone();
            p.reverse();
            out.push(p);
        }
        if m == 0 || !advance(&mut idx, m) {
            break;
        }
    }
    out.sort();
    out
}
