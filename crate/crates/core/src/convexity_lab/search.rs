use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, QvarError, Result};
use crate::integrands::{check_perm_invariance, energy, matrix_gradient, FrozenValues, QIntegrand, QuadraticIntegrand};
use crate::mesh::{Cube, Mesh};
use crate::par;
use crate::qfield::{AffineQMap, QSheetField};
use crate::qspace::{optimal_matching, QPoint};
use crate::rng::stream_rng;

use super::quadratic::{assemble, generalized_min, rank_one_min_matrix};
use super::{OptimizerConfig, QCVerdict, SearchLog, Status};

/// Curvature seeds are skipped above this many unknowns per sheet.
const MAX_CURVATURE_DOFS: usize = 1500;
const ARMIJO: f64 = 1e-4;
const HYSTERESIS: f64 = 1e-12;

struct Problem<'a> {
    frozen: FrozenValues<'a>,
    affine_energy: f64,
    base: QSheetField,
    /// `(first sheet, multiplicity)` of every group.
    groups: Vec<(usize, usize)>,
    boundary: Vec<bool>,
    cfg: &'a OptimizerConfig,
}

struct Outcome {
    margin: f64,
    field: QSheetField,
    history: Vec<f64>,
    iterations: usize,
}

/// Searches for boundary-pinned competitors `w^j` on `C_1` lowering
/// `∫ f(0, a, Dw)` below the affine value `f(0, a, L)`, with the point and
/// value arguments frozen at the origin and the group centers.
pub fn quasiconvexity_test(f: &dyn QIntegrand, u: &AffineQMap, cfg: &OptimizerConfig) -> Result<QCVerdict> {
    if f.m() != u.m() || f.n() != u.n() || f.q().is_some_and(|q| q != u.q()) {
        return Err(invalid!("integrand and affine map disagree on m, n or Q"));
    }
    if cfg.restarts == 0 || cfg.cells_per_side < 2 {
        return Err(QvarError::Configuration("need restarts ≥ 1 and cells_per_side ≥ 2".into()));
    }
    if !check_perm_invariance(f, u.q(), 20, cfg.seed) {
        return Err(QvarError::InvalidIntegrand("integrand is not invariant under sheet permutations".into()));
    }
    let m = u.m();
    let frozen = FrozenValues { inner: f, x: vec![0.0; m], values: u.frozen_values() };
    let affine_energy = frozen.eval(&[], &[], &u.sheet_gradients());
    let mesh = Mesh::new(Cube::centered(m, 1.0), cfg.cells_per_side)?;
    let boundary = (0..mesh.num_vertices()).map(|v| mesh.is_boundary_vertex(v)).collect();
    let base = QSheetField::sample_affine(u, mesh)?;
    let mut groups = Vec::new();
    let mut first = 0;
    for g in u.groups() {
        groups.push((first, g.multiplicity));
        first += g.multiplicity;
    }
    let problem = Problem { frozen, affine_energy, base, groups, boundary, cfg };

    let laminates = if cfg.laminate_seeds { laminate_directions(&problem) } else { Vec::new() };
    let curvature = if cfg.laminate_seeds && cfg.restarts > 1 { curvature_seed(&problem) } else { None };

    let outcomes = par::map_range(cfg.restarts, |r| -> Result<Outcome> {
        let mut rng = stream_rng(cfg.seed, r as u64);
        let seed_field = if r == 0 {
            problem.base.clone()
        } else if cfg.laminate_seeds && r == 1 && curvature.is_some() {
            curvature.clone().expect("checked")
        } else if cfg.laminate_seeds && r % 2 == 1 {
            laminate_seed(&problem, &laminates, 1 + (r / 2) % 4)?
        } else {
            random_seed(&problem, &mut rng)?
        };
        descend(&problem, seed_field)
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let (best_restart, best) = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.margin.total_cmp(&b.1.margin).then(a.0.cmp(&b.0)))
        .expect("at least one restart");
    let violation = best.margin < -cfg.tol;
    Ok(QCVerdict {
        status: if violation { Status::Violation } else { Status::NoViolationFound },
        margin: best.margin,
        certificate: violation.then(|| best.field.clone()),
        search_log: SearchLog {
            iterations: outcomes.iter().map(|o| o.iterations).sum(),
            restarts: cfg.restarts,
            seed: cfg.seed,
            best_restart,
            restart_margins: outcomes.iter().map(|o| o.margin).collect(),
            histories: outcomes.iter().map(|o| o.history.clone()).collect(),
        },
    })
}

impl Problem<'_> {
    fn margin(&self, w: &QSheetField) -> Result<f64> {
        Ok(energy(&self.frozen, w)? - self.affine_energy)
    }

    /// `∂E/∂(vertex entries)`, zero on boundary vertices; flat `Q·n` per vertex.
    fn gradient(&self, w: &QSheetField) -> Vec<Vec<f64>> {
        let mesh = w.mesh();
        let (n, q) = (w.n(), w.q());
        let h = mesh.h();
        let vol = mesh.simplex_volume();
        let parts = par::map_range(mesh.num_simplices(), |s| {
            let grads = w.sheet_gradients(s);
            let dg = matrix_gradient(&self.frozen, &[], &[], &grads);
            let verts = mesh.simplex_vertices(s);
            let perm = mesh.simplex_perm(s);
            let mut out = Vec::with_capacity(q * verts.len());
            for (t, g) in dg.iter().enumerate() {
                for c in 0..verts.len() {
                    let mut d = vec![0.0; n];
                    if c >= 1 {
                        for i in 0..n {
                            d[i] += vol * g[(i, perm[c - 1])] / h;
                        }
                    }
                    if c < perm.len() {
                        for i in 0..n {
                            d[i] -= vol * g[(i, perm[c])] / h;
                        }
                    }
                    out.push((verts[c], w.matching()[s][t][c], d));
                }
            }
            out
        });
        let mut grad = vec![vec![0.0; q * n]; mesh.num_vertices()];
        for part in parts {
            for (v, e, d) in part {
                if !self.boundary[v] {
                    for i in 0..n {
                        grad[v][e * n + i] += d[i];
                    }
                }
            }
        }
        grad
    }

    fn shifted(&self, w: &QSheetField, dir: &[Vec<f64>], step: f64) -> Result<QSheetField> {
        let vertices = w
            .vertex_values()
            .iter()
            .zip(dir)
            .map(|(p, d)| QPoint::from_flat(w.n(), p.as_flat().iter().zip(d).map(|(x, g)| x + step * g).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(w.with_vertices(vertices))
    }

    /// Optimal-assignment matching inside every group with more than one sheet.
    fn rematched(&self, w: &QSheetField) -> Result<Option<Vec<Vec<Vec<usize>>>>> {
        if self.groups.iter().all(|&(_, q)| q < 2) {
            return Ok(None);
        }
        let mesh = w.mesh();
        let n = w.n();
        let group_point = |v: usize, first: usize, q: usize| {
            QPoint::from_flat(n, w.vertex_values()[v].as_flat()[first * n..(first + q) * n].to_vec())
        };
        let mut matching = w.matching().to_vec();
        for (s, sm) in matching.iter_mut().enumerate() {
            let verts = mesh.simplex_vertices(s);
            for &(first, q) in &self.groups {
                if q < 2 {
                    continue;
                }
                let root = group_point(verts[0], first, q)?;
                let mut sheets: Vec<Vec<usize>> = (0..q).map(|t| vec![first + t]).collect();
                for &v in &verts[1..] {
                    let (sigma, _) = optimal_matching(&root, &group_point(v, first, q)?)?;
                    for (t, sheet) in sheets.iter_mut().enumerate() {
                        sheet.push(first + sigma[t]);
                    }
                }
                for (t, sheet) in sheets.into_iter().enumerate() {
                    sm[first + t] = sheet;
                }
            }
        }
        if matching == w.matching() || !QSheetField::index_consistent(mesh, &matching) {
            return Ok(None);
        }
        Ok(Some(matching))
    }
}

/// Projected gradient descent with Armijo backtracking and re-matching.
fn descend(p: &Problem, mut w: QSheetField) -> Result<Outcome> {
    let mut margin = p.margin(&w)?;
    let mut history = vec![margin];
    let mut step = 0.1;
    let mut iterations = 0;
    while iterations < p.cfg.max_iters && margin >= p.cfg.stop_margin {
        let grad = p.gradient(&w);
        let gn2: f64 = grad.iter().flatten().map(|g| g * g).sum();
        if !(gn2 > 1e-24) {
            break;
        }
        let dir: Vec<Vec<f64>> = grad.iter().map(|g| g.iter().map(|x| -x).collect()).collect();
        let mut accepted = None;
        for _ in 0..60 {
            let trial = p.shifted(&w, &dir, step)?;
            let tm = p.margin(&trial)?;
            if tm <= margin - ARMIJO * step * gn2 {
                accepted = Some((trial, tm));
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        let Some((mut next, mut next_margin)) = accepted else { break };
        if let Some(matching) = p.rematched(&next)? {
            let mut alt = next.clone();
            alt.set_matching_unchecked(matching);
            let am = p.margin(&alt)?;
            if am < next_margin - HYSTERESIS {
                next = alt;
                next_margin = am;
            }
        }
        w = next;
        margin = next_margin;
        history.push(margin);
        iterations += 1;
    }
    Ok(Outcome { margin, field: w, history, iterations })
}

fn random_seed(p: &Problem, rng: &mut impl Rng) -> Result<QSheetField> {
    let dir: Vec<Vec<f64>> = p
        .base
        .vertex_values()
        .iter()
        .enumerate()
        .map(|(v, pt)| {
            pt.as_flat()
                .iter()
                .map(|_| if p.boundary[v] { 0.0 } else { 0.1 * rng.sample::<f64, _>(StandardNormal) })
                .collect()
        })
        .collect();
    p.shifted(&p.base, &dir, 1.0)
}

/// Rank-one directions `(a_j, b_j)` of the frozen integrand's Hessian in the
/// first sheet of every group, at the affine gradients.
fn laminate_directions(p: &Problem) -> Vec<(Vec<f64>, Vec<f64>)> {
    let grads0 = p.base.sheet_gradients(0);
    let (n, m) = grads0[0].shape();
    let k = n * m;
    let eps = 1e-4;
    p.groups
        .iter()
        .map(|&(first, _)| {
            let phi = |dp: Option<usize>, dq: Option<usize>| {
                let mut g = grads0.clone();
                for d in [dp, dq].into_iter().flatten() {
                    g[first][d] += eps;
                }
                p.frozen.eval(&[], &[], &g)
            };
            let f0 = phi(None, None);
            let single: Vec<f64> = (0..k).map(|i| phi(Some(i), None)).collect();
            let hess = DMatrix::from_fn(k, k, |i, j| (phi(Some(i), Some(j)) - single[i] - single[j] + f0) / (eps * eps));
            let r = rank_one_min_matrix(&hess, m, n);
            (r.a, r.b)
        })
        .collect()
}

fn tri(s: f64) -> f64 {
    (s - s.floor() - 0.5).abs() - 0.25
}

/// Sawtooth laminate `(1/osc)·a·tri(osc·b·x)` damped to zero in a layer of
/// width `2h` at the boundary; sheets of a group alternate sign.
fn laminate_seed(p: &Problem, dirs: &[(Vec<f64>, Vec<f64>)], osc: usize) -> Result<QSheetField> {
    let mesh = p.base.mesh();
    let n = p.base.n();
    let layer = 2.0 * mesh.h();
    let dir: Vec<Vec<f64>> = (0..mesh.num_vertices())
        .map(|v| {
            let x = mesh.vertex_position(v);
            let dist = x.iter().map(|c| 0.5 - c.abs()).fold(f64::INFINITY, f64::min);
            let cutoff = (dist / layer).clamp(0.0, 1.0);
            let mut d = vec![0.0; p.base.q() * n];
            for (&(first, q), (a, b)) in p.groups.iter().zip(dirs) {
                let s: f64 = b.iter().zip(&x).map(|(bi, xi)| bi * xi).sum();
                let amp = tri(osc as f64 * s) * cutoff / osc as f64;
                for t in 0..q {
                    let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
                    for i in 0..n {
                        d[(first + t) * n + i] = sign * amp * a[i];
                    }
                }
            }
            d
        })
        .collect();
    p.shifted(&p.base, &dir, 1.0)
}

/// Lowest second-variation mode of the energy, per unit Dirichlet energy,
/// in the first sheet of the group where it is most negative; sheets of that
/// group carry it with alternating signs.
fn curvature_seed(p: &Problem) -> Option<QSheetField> {
    let mesh = p.base.mesh();
    let (m, n) = (mesh.dim(), p.base.n());
    let interior: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| !p.boundary[v]).collect();
    let dofs = interior.len() * n;
    if dofs == 0 || dofs > MAX_CURVATURE_DOFS {
        return None;
    }
    let (_, _, dirichlet) = assemble(&QuadraticIntegrand::identity(m, n), mesh).ok()?;
    let eps = 1e-4;
    let mut best: Option<(f64, usize, nalgebra::DVector<f64>)> = None;
    for &(first, _) in &p.groups {
        let probe = |slot: usize, sign: f64| -> Option<Vec<Vec<f64>>> {
            let mut dir = vec![vec![0.0; p.base.q() * n]; mesh.num_vertices()];
            dir[interior[slot / n]][first * n + slot % n] = sign * eps;
            Some(p.gradient(&p.shifted(&p.base, &dir, 1.0).ok()?))
        };
        let mut hess = DMatrix::zeros(dofs, dofs);
        for col in 0..dofs {
            let (gp, gm) = (probe(col, 1.0)?, probe(col, -1.0)?);
            for (row, &v) in interior.iter().enumerate() {
                for i in 0..n {
                    hess[(row * n + i, col)] = (gp[v][first * n + i] - gm[v][first * n + i]) / (2.0 * eps);
                }
            }
        }
        let (lambda, vec) = generalized_min(&hess, &dirichlet).ok()?;
        if best.as_ref().is_none_or(|b| lambda < b.0) {
            best = Some((lambda, first, vec));
        }
    }
    let (_, first, vec) = best?;
    let q = p.groups.iter().find(|g| g.0 == first).map(|g| g.1)?;
    let mut dir = vec![vec![0.0; p.base.q() * n]; mesh.num_vertices()];
    for (slot, &v) in interior.iter().enumerate() {
        for t in 0..q {
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..n {
                dir[v][(first + t) * n + i] = sign * vec[slot * n + i];
            }
        }
    }
    p.shifted(&p.base, &dir, 1.0).ok()
}
