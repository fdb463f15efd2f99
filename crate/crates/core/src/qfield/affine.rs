use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::qspace::{sq_dist, QPoint};

/// One group `q ⟦a + L·x⟧` of an affine Q-valued map.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGroup {
    pub multiplicity: usize,
    pub offset: Vec<f64>,
    /// `n × m`.
    pub linear: DMatrix<f64>,
}

impl AffineGroup {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (0..self.offset.len())
            .map(|i| self.offset[i] + (0..x.len()).map(|c| self.linear[(i, c)] * x[c]).sum::<f64>())
            .collect()
    }
}

/// `u(x) = Σ_j q_j ⟦a_j + L_j·x⟧` with pairwise distinct `a_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineQMap {
    m: usize,
    n: usize,
    groups: Vec<AffineGroup>,
}

impl AffineQMap {
    pub fn new(m: usize, n: usize, groups: Vec<AffineGroup>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(invalid!("dimensions must be positive"));
        }
        if groups.is_empty() {
            return Err(invalid!("an affine Q-map needs at least one group"));
        }
        for (j, g) in groups.iter().enumerate() {
            if g.multiplicity == 0 {
                return Err(invalid!("group {j} has zero multiplicity"));
            }
            if g.offset.len() != n || g.linear.nrows() != n || g.linear.ncols() != m {
                return Err(invalid!("group {j} has wrong shape for m={m}, n={n}"));
            }
        }
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                if sq_dist(&groups[a].offset, &groups[b].offset) == 0.0 {
                    return Err(invalid!("groups {a} and {b} share the center {:?}", groups[a].offset));
                }
            }
        }
        Ok(Self { m, n, groups })
    }

    /// `Q ⟦a + L·x⟧`.
    pub fn single(q: usize, offset: Vec<f64>, linear: DMatrix<f64>) -> Result<Self> {
        let (n, m) = linear.shape();
        Self::new(m, n, vec![AffineGroup { multiplicity: q, offset, linear }])
    }

    /// `Q ⟦0⟧` as a map from R^m into R^n.
    pub fn zero(q: usize, m: usize, n: usize) -> Self {
        Self::single(q, vec![0.0; n], DMatrix::zeros(n, m)).expect("valid shape")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.groups.iter().map(|g| g.multiplicity).sum()
    }

    pub fn groups(&self) -> &[AffineGroup] {
        &self.groups
    }

    pub fn eval(&self, x: &[f64]) -> QPoint {
        let mut coords = Vec::with_capacity(self.q() * self.n);
        for g in &self.groups {
            let p = g.eval(x);
            for _ in 0..g.multiplicity {
                coords.extend_from_slice(&p);
            }
        }
        QPoint::from_flat(self.n, coords).expect("nonempty")
    }

    /// Sheet values `(a_1 ×q_1, …, a_J ×q_J)` at the origin.
    pub fn frozen_values(&self) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .flat_map(|g| std::iter::repeat(g.offset.clone()).take(g.multiplicity))
            .collect()
    }

    /// Sheet gradients `(L_1 ×q_1, …, L_J ×q_J)`.
    pub fn sheet_gradients(&self) -> Vec<DMatrix<f64>> {
        self.groups
            .iter()
            .flat_map(|g| std::iter::repeat(g.linear.clone()).take(g.multiplicity))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupRepr {
    multiplicity: usize,
    offset: Vec<f64>,
    /// Row-major `n × m`.
    linear: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineRepr {
    m: usize,
    n: usize,
    groups: Vec<GroupRepr>,
}

impl Serialize for AffineQMap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AffineRepr {
            m: self.m,
            n: self.n,
            groups: self
                .groups
                .iter()
                .map(|g| GroupRepr {
                    multiplicity: g.multiplicity,
                    offset: g.offset.clone(),
                    linear: (0..self.n).map(|i| g.linear.row(i).iter().copied().collect()).collect(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AffineQMap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let r = AffineRepr::deserialize(d)?;
        let groups = r
            .groups
            .into_iter()
            .map(|g| {
                if g.linear.len() != r.n || g.linear.iter().any(|row| row.len() != r.m) {
                    return Err(D::Error::custom("linear part must be an n × m array of rows"));
                }
                let linear = DMatrix::from_fn(r.n, r.m, |i, c| g.linear[i][c]);
                Ok(AffineGroup { multiplicity: g.multiplicity, offset: g.offset, linear })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        AffineQMap::new(r.m, r.n, groups).map_err(D::Error::custom)
    }
}
