use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{invalid, QvarError, Result};
use crate::integrands::{mattila_energy, QuadraticIntegrand};
use crate::mesh::{Cube, Mesh};
use crate::minors::subsets;
use crate::qfield::QSheetField;
use crate::qspace::QPoint;
use crate::rng::stream_rng;

use super::{OptimizerConfig, QCVerdict, SearchLog, Status};

/// `min_{|a|=|b|=1} ⟨A(a⊗b), a⊗b⟩` and a minimizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankOneMin {
    pub value: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn min_eigen(mat: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (idx, &val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1).then(x.0.cmp(&y.0)))
        .expect("nonempty");
    (val, eig.eigenvectors.column(idx).into_owned())
}

/// `S(b)_{ij} = Σ_{c,d} A[c·n+i, d·n+j] b_c b_d`.
fn contract_b(a: &DMatrix<f64>, n: usize, b: &[f64]) -> DMatrix<f64> {
    let m = b.len();
    DMatrix::from_fn(n, n, |i, j| {
        let mut s = 0.0;
        for c in 0..m {
            for d in 0..m {
                s += a[(c * n + i, d * n + j)] * b[c] * b[d];
            }
        }
        s
    })
}

/// `T(a)_{cd} = Σ_{i,j} A[c·n+i, d·n+j] a_i a_j`.
fn contract_a(a: &DMatrix<f64>, m: usize, av: &[f64]) -> DMatrix<f64> {
    let n = av.len();
    DMatrix::from_fn(m, m, |c, d| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[(c * n + i, d * n + j)] * av[i] * av[j];
            }
        }
        s
    })
}

fn normalize_sign(v: &mut [f64]) -> f64 {
    match v.iter().find(|x| x.abs() > 1e-14) {
        Some(&x) if x < 0.0 => {
            v.iter_mut().for_each(|t| *t = -*t);
            -1.0
        }
        _ => 1.0,
    }
}

pub(crate) fn rank_one_min_matrix(a: &DMatrix<f64>, m: usize, n: usize) -> RankOneMin {
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for c in 0..m {
        let mut b = vec![0.0; m];
        b[c] = 1.0;
        starts.push(b);
    }
    let mut rng = stream_rng(0x5eed, 0);
    for _ in 0..8 {
        let b: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        starts.push(b.iter().map(|x| x / r).collect());
    }
    // starts in a: the first half-step turns them into b
    for i in 0..n {
        let mut av = vec![0.0; n];
        av[i] = 1.0;
        let (_, b) = min_eigen(&contract_a(a, m, &av));
        starts.push(b.iter().copied().collect());
    }
    let mut best: Option<RankOneMin> = None;
    for b0 in starts {
        let mut b = b0;
        let mut av: Vec<f64> = vec![0.0; n];
        let mut value = f64::INFINITY;
        for _ in 0..1000 {
            let (_, a_new) = min_eigen(&contract_b(a, n, &b));
            av = a_new.iter().copied().collect();
            let (v, b_new) = min_eigen(&contract_a(a, m, &av));
            b = b_new.iter().copied().collect();
            let done = (value - v).abs() <= 1e-15 * (1.0 + v.abs());
            value = v;
            if done {
                break;
            }
        }
        if best.as_ref().is_none_or(|r| value < r.value) {
            normalize_sign(&mut av);
            normalize_sign(&mut b);
            best = Some(RankOneMin { value, a: av, b });
        }
    }
    best.expect("at least one start")
}

/// Alternating smallest-eigenvector iteration with multistart.
pub fn rank_one_min(a: &QuadraticIntegrand) -> RankOneMin {
    use crate::integrands::QIntegrand;
    rank_one_min_matrix(a.matrix(), a.m(), a.n())
}

/// Symmetric matrices `D_k` with `vec(M)ᵀ D_k vec(M) = 2·M_k(M)` for every
/// `2 × 2` minor, in canonical minor order.
pub fn minor_forms(m: usize, n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    for alpha in subsets(m, 2) {
        for beta in subsets(n, 2) {
            let (c1, c2) = (alpha[0], alpha[1]);
            let (i1, i2) = (beta[0], beta[1]);
            let mut d = DMatrix::zeros(n * m, n * m);
            let (p, q) = (c1 * n + i1, c2 * n + i2);
            let (r, s) = (c2 * n + i1, c1 * n + i2);
            d[(p, q)] = 1.0;
            d[(q, p)] = 1.0;
            d[(r, s)] = -1.0;
            d[(s, r)] = -1.0;
            out.push(d);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyconvexityCertificate {
    /// Coefficients on [`minor_forms`].
    pub lambdas: Vec<f64>,
    /// `λ_min(A + Σ_k λ_k D_k)`.
    pub min_eigenvalue: f64,
    /// `min_eigenvalue ≥ −1e-8`.
    pub feasible: bool,
    /// Infeasibility rules out quasiconvexity only when `min(m,n) ≤ 2`.
    pub decides_quasiconvexity: bool,
}

fn shifted(a: &DMatrix<f64>, forms: &[DMatrix<f64>], lambdas: &[f64]) -> DMatrix<f64> {
    let mut s = a.clone();
    for (d, &l) in forms.iter().zip(lambdas) {
        s += d * l;
    }
    s
}

/// Returns `(λ_min, supergradient)` of `λ ↦ λ_min(A + Σ λ_k D_k)`.
fn objective(a: &DMatrix<f64>, forms: &[DMatrix<f64>], lambdas: &[f64]) -> (f64, Vec<f64>) {
    let (v, x) = min_eigen(&shifted(a, forms, lambdas));
    let g = forms.iter().map(|d| (d * &x).dot(&x)).collect();
    (v, g)
}

fn bisect_coordinate(a: &DMatrix<f64>, forms: &[DMatrix<f64>], lambdas: &mut [f64], k: usize, radius: f64) {
    let (mut lo, mut hi) = (-radius, radius);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        lambdas[k] = mid;
        let (_, g) = objective(a, forms, lambdas);
        if g[k] > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let candidates = [lo, 0.5 * (lo + hi), hi];
    let mut best = (f64::NEG_INFINITY, 0.0);
    for c in candidates {
        lambdas[k] = c;
        let v = objective(a, forms, lambdas).0;
        if v > best.0 {
            best = (v, c);
        }
    }
    lambdas[k] = best.1;
}

/// Maximizes `λ_min(A + Σ λ_k D_k)` over `|λ_k| ≤ 2‖A‖ + 1`: exact bisection
/// for one minor, supergradient ascent followed by coordinate bisection
/// otherwise.
pub fn polyconvexity_certificate(a: &QuadraticIntegrand) -> PolyconvexityCertificate {
    use crate::integrands::QIntegrand;
    let (m, n) = (a.m(), a.n());
    let mat = a.matrix();
    let forms = minor_forms(m, n);
    let radius = 2.0 * mat.norm() + 1.0;
    let mut lambdas = vec![0.0; forms.len()];
    if forms.len() == 1 {
        bisect_coordinate(mat, &forms, &mut lambdas, 0, radius);
    } else if forms.len() > 1 {
        let mut best = (objective(mat, &forms, &lambdas).0, lambdas.clone());
        let mut cur = lambdas.clone();
        for t in 1..=2000 {
            let (v, g) = objective(mat, &forms, &cur);
            if v > best.0 {
                best = (v, cur.clone());
            }
            let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if gn < 1e-14 {
                break;
            }
            let step = radius / (10.0 * (t as f64).sqrt());
            for (c, gi) in cur.iter_mut().zip(&g) {
                *c = (*c + step * gi / gn).clamp(-radius, radius);
            }
        }
        lambdas = best.1;
        for _ in 0..20 {
            for k in 0..forms.len() {
                bisect_coordinate(mat, &forms, &mut lambdas, k, radius);
            }
        }
    }
    let min_eigenvalue = objective(mat, &forms, &lambdas).0;
    let feasible = min_eigenvalue >= -1e-8;
    PolyconvexityCertificate { lambdas, min_eigenvalue, feasible, decides_quasiconvexity: feasible || m.min(n) <= 2 }
}

/// Gradients of the barycentric coordinates of simplex `s`, indexed by local vertex.
fn barycentric_gradients(mesh: &Mesh, s: usize) -> Vec<Vec<f64>> {
    let m = mesh.dim();
    let perm = mesh.simplex_perm(s);
    let h = mesh.h();
    (0..=m)
        .map(|c| {
            let mut g = vec![0.0; m];
            if c >= 1 {
                g[perm[c - 1]] += 1.0 / h;
            }
            if c < m {
                g[perm[c]] -= 1.0 / h;
            }
            g
        })
        .collect()
}

/// Dense limit on interior degrees of freedom for the eigenvalue route.
const MAX_DOFS: usize = 4000;

/// Assembles the stiffness matrix of `⟨A Df, Df⟩` and the Dirichlet matrix on
/// the interior vertex degrees of freedom `(vertex, component)`.
pub(crate) fn assemble(a: &QuadraticIntegrand, mesh: &Mesh) -> Result<(Vec<usize>, DMatrix<f64>, DMatrix<f64>)> {
    use crate::integrands::QIntegrand;
    let (m, n) = (a.m(), a.n());
    let interior: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| !mesh.is_boundary_vertex(v)).collect();
    let mut slot = vec![usize::MAX; mesh.num_vertices()];
    for (k, &v) in interior.iter().enumerate() {
        slot[v] = k;
    }
    let dofs = interior.len() * n;
    if dofs == 0 {
        return Err(QvarError::Configuration("mesh has no interior vertices; use more cells per side".into()));
    }
    if dofs > MAX_DOFS {
        return Err(QvarError::Configuration(format!("{dofs} interior unknowns exceed the dense limit {MAX_DOFS}")));
    }
    let mat = a.matrix();
    let vol = mesh.simplex_volume();
    let mut k = DMatrix::zeros(dofs, dofs);
    let mut s_mat = DMatrix::zeros(dofs, dofs);
    for s in 0..mesh.num_simplices() {
        let verts = mesh.simplex_vertices(s);
        let grads = barycentric_gradients(mesh, s);
        for (lc, &vc) in verts.iter().enumerate() {
            if slot[vc] == usize::MAX {
                continue;
            }
            for (ld, &vd) in verts.iter().enumerate() {
                if slot[vd] == usize::MAX {
                    continue;
                }
                let (g1, g2) = (&grads[lc], &grads[ld]);
                let dot: f64 = g1.iter().zip(g2).map(|(x, y)| x * y).sum();
                for i in 0..n {
                    let p = slot[vc] * n + i;
                    s_mat[(p, slot[vd] * n + i)] += vol * dot;
                    for j in 0..n {
                        let mut val = 0.0;
                        for c in 0..m {
                            for d in 0..m {
                                val += mat[(c * n + i, d * n + j)] * g1[c] * g2[d];
                            }
                        }
                        k[(p, slot[vd] * n + j)] += vol * val;
                    }
                }
            }
        }
    }
    Ok((interior, k, s_mat))
}

/// Smallest generalized eigenpair of `K v = λ S v` with `S` positive definite;
/// the eigenvector satisfies `vᵀ S v = 1`.
pub(crate) fn generalized_min(k: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| QvarError::Configuration("Dirichlet matrix is not positive definite".into()))?;
    let l = chol.l();
    let x = l.solve_lower_triangular(k).expect("triangular solve");
    let c = l.solve_lower_triangular(&x.transpose()).expect("triangular solve");
    let (val, y) = min_eigen(&c);
    let v = l.transpose().solve_upper_triangular(&y).expect("triangular solve");
    Ok((val, v))
}

/// Minimizes `E(f) = ∫ Σ_i ⟨A Df_i, Df_i⟩` over Q-fields vanishing on the
/// boundary, per unit Dirichlet energy, through the generalized eigenvalue
/// problem of the stiffness and Dirichlet matrices. Sheets are decoupled
/// copies of the minimizing single-valued field.
pub fn semiellipticity_test(a: &QuadraticIntegrand, q: usize, cfg: &OptimizerConfig) -> Result<QCVerdict> {
    use crate::integrands::QIntegrand;
    if q == 0 {
        return Err(invalid!("Q must be ≥ 1"));
    }
    let (m, n) = (a.m(), a.n());
    let mesh = Mesh::new(Cube::centered(m, 1.0), cfg.cells_per_side)?;
    let (interior, k, s) = assemble(a, &mesh)?;
    let (lambda, v) = generalized_min(&k, &s)?;
    let scale = 1.0 / (q as f64).sqrt();
    let mut vertices = vec![QPoint::multiple(q, &vec![0.0; n]); mesh.num_vertices()];
    for (slot, &vx) in interior.iter().enumerate() {
        let p: Vec<f64> = (0..n).map(|i| v[slot * n + i] * scale).collect();
        vertices[vx] = QPoint::multiple(q, &p);
    }
    let identity: Vec<Vec<usize>> = (0..q).map(|t| vec![t; m + 1]).collect();
    let matching = vec![identity; mesh.num_simplices()];
    let cert = QSheetField::from_parts_unchecked(mesh, n, q, vertices, matching);
    let margin = mattila_energy(a, &cert)?;
    let violation = margin < -cfg.tol;
    Ok(QCVerdict {
        status: if violation { Status::Violation } else { Status::NoViolationFound },
        margin,
        certificate: violation.then_some(cert),
        search_log: SearchLog {
            iterations: 0,
            restarts: 1,
            seed: cfg.seed,
            best_restart: 0,
            restart_margins: vec![margin],
            histories: vec![vec![lambda]],
        },
    })
}

/// `E(g) − E(f) − k⟨A L, L⟩·|Ω|` where `g = Σ ⟦f_i + L·x⟧`, for `f` vanishing
/// on the boundary.
pub fn translation_identity_gap(a: &QuadraticIntegrand, f: &QSheetField, l: &DMatrix<f64>) -> Result<f64> {
    use crate::integrands::QIntegrand;
    if l.shape() != (a.n(), a.m()) {
        return Err(invalid!("L must be {}×{}", a.n(), a.m()));
    }
    let pinned = f.boundary_sup_distance(|_| QPoint::multiple(f.q(), &vec![0.0; f.n()]))?;
    if pinned > crate::qfield::BOUNDARY_TOLERANCE {
        return Err(invalid!("field is not pinned to Q⟦0⟧ on the boundary (defect {pinned:e})"));
    }
    let g = f.map_entries(|x, e| {
        e.iter()
            .enumerate()
            .map(|(i, v)| v + (0..x.len()).map(|c| l[(i, c)] * x[c]).sum::<f64>())
            .collect()
    })?;
    let affine = f.q() as f64 * a.form(l) * f.domain().volume();
    Ok(mattila_energy(a, &g)? - mattila_energy(a, f)? - affine)
}
