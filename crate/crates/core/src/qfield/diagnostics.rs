use serde::Serialize;

use crate::error::{invalid, QvarError, Result};
use crate::mesh::{Cube, Mesh};
use crate::par;
use crate::quadrature::{box_rule, simplex_rule, DEFAULT_ORDER};
use crate::qspace::{metric_g, QPoint};

use super::{AffineQMap, QFieldSequence, QSheetField, QValued};

/// `(∫ G(f,g)^p)^{1/p}` with the default quadrature order.
pub fn lp_distance(f: &QSheetField, g: &QSheetField, p: f64) -> Result<f64> {
    lp_distance_with_order(f, g, p, DEFAULT_ORDER)
}

/// As [`lp_distance`], with `order` Gauss points per axis on each simplex of
/// the common refinement of both meshes.
pub fn lp_distance_with_order(f: &QSheetField, g: &QSheetField, p: f64, order: usize) -> Result<f64> {
    if f.domain() != g.domain() || f.q() != g.q() || f.n() != g.n() {
        return Err(invalid!("lp_distance needs a common domain, Q and n"));
    }
    if !(p >= 1.0) {
        return Err(invalid!("exponent p must be ≥ 1, got {p}"));
    }
    let (kf, kg) = (f.mesh().cells_per_side(), g.mesh().cells_per_side());
    let mesh = Mesh::new(f.domain().clone(), kf / gcd(kf, kg) * kg)?;
    let rule = simplex_rule(mesh.dim(), order);
    let scale = mesh.h().powi(mesh.dim() as i32);
    let parts = par::map_range(mesh.num_simplices(), |s| -> Result<f64> {
        let mut acc = 0.0;
        for (bary, w) in &rule {
            let x = mesh.point_in_simplex(s, bary);
            acc += w * metric_g(&f.evaluate(&x)?, &g.evaluate(&x)?)?.powf(p);
        }
        Ok(acc * scale)
    });
    let mut total = 0.0;
    for part in parts {
        total += part?;
    }
    Ok(total.powf(1.0 / p))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// `∫ |Du|^p` of a piecewise-affine field.
pub(crate) fn gradient_energy(f: &QSheetField, p: f64) -> f64 {
    let vol = f.mesh().simplex_volume();
    (0..f.mesh().num_simplices())
        .map(|s| {
            let sq: f64 = f.sheet_gradients(s).iter().map(|d| d.norm_squared()).sum();
            vol * sq.powf(0.5 * p)
        })
        .sum()
}

/// Finite-sequence evidence for weak convergence `u_k ⇀ u`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakConvergenceReport {
    pub p: f64,
    /// `‖G(u_k, u)‖_{L^p}` per member.
    pub distances: Vec<f64>,
    /// `∫ |Du_k|^p` per member.
    pub energies: Vec<f64>,
    pub sup_energy: f64,
    /// Distances non-increasing, the last at most a quarter of the first (or
    /// negligible), and bounded energies. Evidence only.
    pub consistent_with_weak_convergence: bool,
}

pub fn weak_convergence_report(seq: &QFieldSequence, u: &QSheetField) -> Result<WeakConvergenceReport> {
    let p = seq.p();
    let distances = seq.items().iter().map(|f| lp_distance(f, u, p)).collect::<Result<Vec<_>>>()?;
    let energies: Vec<f64> = seq.items().iter().map(|f| gradient_energy(f, p)).collect();
    let sup_energy = energies.iter().copied().fold(0.0, f64::max);
    let negligible = 1e-12;
    let monotone = distances.windows(2).all(|w| w[1] <= w[0] + negligible);
    let shrinking = match (distances.first(), distances.last()) {
        (Some(&first), Some(&last)) => last <= negligible || last <= 0.25 * first,
        _ => true,
    };
    let finite = sup_energy.is_finite() && distances.iter().all(|d| d.is_finite());
    Ok(WeakConvergenceReport {
        p,
        consistent_with_weak_convergence: monotone && shrinking && finite,
        distances,
        energies,
        sup_energy,
    })
}

/// `ρ^{−p−m} ∫_{C_ρ(x0)} G(f(x), T(x − x0))^p dx` with a composite Gauss rule
/// of 4 subdivisions per axis and 4 points per subdivision.
pub fn blowup_residual(f: &dyn QValued, x0: &[f64], t: &AffineQMap, rho: f64, p: f64) -> Result<f64> {
    blowup_residual_with(f, x0, t, rho, p, 4, DEFAULT_ORDER)
}

pub fn blowup_residual_with(
    f: &dyn QValued,
    x0: &[f64],
    t: &AffineQMap,
    rho: f64,
    p: f64,
    subdivisions: usize,
    order: usize,
) -> Result<f64> {
    let m = f.domain().dim();
    if x0.len() != m || t.m() != m || t.n() != f.n() || t.q() != f.q() {
        return Err(invalid!("blow-up model does not match the field's dimensions"));
    }
    if !(rho > 0.0) || !(p >= 1.0) {
        return Err(invalid!("need rho > 0 and p ≥ 1"));
    }
    let cube = Cube::new(x0.to_vec(), rho)?;
    if !f.domain().contains_cube(&cube, 1e-14) {
        return Err(QvarError::Domain(format!("C_{rho}({x0:?}) is not inside the field's domain")));
    }
    let rule = box_rule(m, order);
    let sub = rho / subdivisions as f64;
    let mut total = 0.0;
    let mut cell = vec![0usize; m];
    loop {
        for (u, w) in &rule {
            let x: Vec<f64> = (0..m).map(|d| cube.lower(d) + (cell[d] as f64 + u[d]) * sub).collect();
            let rel: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
            total += w * metric_g(&f.value_at(&x)?, &t.eval(&rel))?.powf(p);
        }
        if !crate::quadrature::advance(&mut cell, subdivisions) {
            break;
        }
    }
    Ok(total * sub.powi(m as i32) / rho.powf(p + m as f64))
}

/// `max_v G(f(v), u(v))` over mesh vertices.
pub fn vertex_sup_distance(f: &QSheetField, u: &AffineQMap) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (v, val) in f.vertex_values().iter().enumerate() {
        let target: QPoint = u.eval(&f.mesh().vertex_position(v));
        worst = worst.max(metric_g(val, &target)?);
    }
    Ok(worst)
}
