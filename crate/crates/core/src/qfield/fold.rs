use crate::error::{invalid, QvarError, Result};
use crate::mesh::{Cube, Mesh};
use crate::qspace::QPoint;

use super::{AffineQMap, QSheetField};

/// Admissibility tolerance for competitor boundary traces, in G-sup norm.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Folding sequence `u_{k,r}(x) = Σ_j ( a_j + L_j·x + (r/k)·z^j(kx/r + (k−1)/2) )`
/// on `C_r`, where `z^j(y) = w^j(y) − a_j − L_j·y` is extended periodically.
/// The half-period offset for even `k` tiles `C_r` by exactly `k^m` copies of
/// `C_{r/k}`, so the trace on `∂C_r` is that of `u` for every `k`.
///
/// Every `w^j` lives on `C_1` with the same number `n_w` of cells per side and
/// must carry the trace `q_j ⟦a_j + L_j·y⟧`. The output mesh has `k·n_w` cells
/// per side.
pub fn fold_sequence(u: &AffineQMap, w: &[QSheetField], k: usize, r: f64) -> Result<QSheetField> {
    if k == 0 || !(r > 0.0) {
        return Err(invalid!("need k ≥ 1 and r > 0"));
    }
    let groups = u.groups();
    if w.len() != groups.len() {
        return Err(invalid!("{} competitors for {} groups", w.len(), groups.len()));
    }
    let m = u.m();
    let unit = Cube::centered(m, 1.0);
    let nw = w[0].mesh().cells_per_side();
    for (j, (wj, g)) in w.iter().zip(groups).enumerate() {
        if wj.domain() != &unit || wj.mesh().cells_per_side() != nw {
            return Err(invalid!("competitor {j} must live on the unit cube with {nw} cells per side"));
        }
        if wj.q() != g.multiplicity || wj.n() != u.n() {
            return Err(invalid!("competitor {j} has the wrong Q or n"));
        }
        let defect = wj.boundary_sup_distance(|y| QPoint::multiple(g.multiplicity, &g.eval(y)))?;
        if defect > BOUNDARY_TOLERANCE {
            return Err(QvarError::InvalidCompetitor(format!(
                "competitor {j} misses its boundary trace by {defect:e}"
            )));
        }
    }
    let mesh = Mesh::new(Cube::centered(m, r), k * nw)?;
    let wmesh = w[0].mesh();
    let reduce = |multi: &[usize]| -> Vec<usize> { multi.iter().map(|&i| i % nw).collect() };
    let scale = r / k as f64;

    let vertices = (0..mesh.num_vertices())
        .map(|v| {
            let x = mesh.vertex_position(v);
            let rep = reduce(&mesh.vertex_multi_index(v));
            let on_unit_boundary = rep.iter().any(|&i| i == 0);
            let wv = wmesh.vertex_index(&rep);
            let y = wmesh.vertex_position(wv);
            let mut coords = Vec::with_capacity(u.q() * u.n());
            for (g, wj) in groups.iter().zip(w) {
                let base = g.eval(&x);
                if on_unit_boundary {
                    for _ in 0..g.multiplicity {
                        coords.extend_from_slice(&base);
                    }
                } else {
                    let trace = g.eval(&y);
                    for e in wj.vertex_values()[wv].points() {
                        coords.extend(base.iter().zip(e).zip(&trace).map(|((b, e), t)| b + scale * (e - t)));
                    }
                }
            }
            QPoint::from_flat(u.n(), coords)
        })
        .collect::<Result<Vec<_>>>()?;

    let per_cell = mesh.simplices_per_cell();
    let matching = (0..mesh.num_simplices())
        .map(|s| {
            let cell = reduce(&mesh.cell_multi_index(mesh.cell_of_simplex(s)));
            let ws = wmesh.cell_index(&cell) * per_cell + s % per_cell;
            let mut sheets = Vec::with_capacity(u.q());
            let mut offset = 0;
            for wj in w {
                sheets.extend(wj.matching()[ws].iter().map(|t| t.iter().map(|e| e + offset).collect::<Vec<_>>()));
                offset += wj.q();
            }
            sheets
        })
        .collect();
    Ok(QSheetField::from_parts_unchecked(mesh, u.n(), u.q(), vertices, matching))
}
