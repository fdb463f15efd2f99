use serde::Serialize;

use crate::error::Result;
use crate::integrands::{energy, FrozenValues, QIntegrand};
use crate::mesh::{Cube, Mesh};
use crate::qfield::{fold_sequence, AffineQMap, QSheetField};

/// Energies along the folding sequence `u_{k,r}` built from competitors `w`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NecessityReport {
    pub r: f64,
    pub ks: Vec<usize>,
    /// `F(u, C_r)`.
    pub affine_energy: f64,
    /// `F(u_{k,r}, C_r)` for every `k`.
    pub folded_energies: Vec<f64>,
    /// `r^m ∫_{C_1} f(0, a, Dw)`.
    pub competitor_energy_rescaled: f64,
    /// Spread of `F(u_{k,r}, C_r) / r^m` over `k`.
    pub k_spread: f64,
    /// Whether `f` ignores `x` and the values, in which case the spread must vanish.
    pub x_independent: bool,
}

pub fn necessity_experiment(
    f: &dyn QIntegrand,
    u: &AffineQMap,
    w: &[QSheetField],
    ks: &[usize],
    r: f64,
) -> Result<NecessityReport> {
    let nw = w.first().map_or(1, |w| w.mesh().cells_per_side());
    let sampled = QSheetField::sample_affine(u, Mesh::new(Cube::centered(u.m(), r), nw)?)?;
    let affine_energy = energy(f, &sampled)?;
    let folded_energies = ks
        .iter()
        .map(|&k| energy(f, &fold_sequence(u, w, k, r)?))
        .collect::<Result<Vec<_>>>()?;
    let combined = QSheetField::combine(w)?;
    let frozen = FrozenValues { inner: f, x: vec![0.0; u.m()], values: u.frozen_values() };
    let rm = r.powi(u.m() as i32);
    let competitor_energy_rescaled = energy(&frozen, &combined)? * rm;
    let scaled: Vec<f64> = folded_energies.iter().map(|e| e / rm).collect();
    let k_spread = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - scaled.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(NecessityReport {
        r,
        ks: ks.to_vec(),
        affine_energy,
        folded_energies,
        competitor_energy_rescaled,
        k_spread: if ks.is_empty() { 0.0 } else { k_spread },
        x_independent: f.gradient_only(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrands::QuadraticIntegrand;
    use nalgebra::DMatrix;

    #[test]
    fn affine_competitor_reproduces_everything() {
        let a = QuadraticIntegrand::identity(2, 1);
        let u = AffineQMap::single(1, vec![0.0], DMatrix::from_row_slice(1, 2, &[1.0, -2.0])).unwrap();
        let w = QSheetField::sample_affine(&u, Mesh::new(Cube::centered(2, 1.0), 4).unwrap()).unwrap();
        let rep = necessity_experiment(&a, &u, &[w], &[1, 2, 4], 0.5).unwrap();
        for e in &rep.folded_energies {
            assert!((e - rep.affine_energy).abs() < 1e-12);
        }
        assert!((rep.competitor_energy_rescaled - rep.affine_energy).abs() < 1e-12);
        assert!(rep.k_spread < 1e-12 && rep.x_independent);
    }
}
