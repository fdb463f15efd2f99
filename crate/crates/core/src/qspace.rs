//! The space of unordered Q-tuples of points in R^n with the G metric.
//!
//! A [`QPoint`] keeps its points in an internal order, but nothing in the
//! public API depends on it: the metric, the mean, grouping and serialization
//! are all invariant under permutation of the stored points.

use std::cmp::Ordering;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::assignment;
use crate::error::{invalid, Result};

/// An unordered Q-tuple `Σ_i ⟦P_i⟧` of points in R^n.
#[derive(Debug, Clone, PartialEq)]
pub struct QPoint {
    n: usize,
    coords: Vec<f64>,
}

impl QPoint {
    pub fn new(n: usize, points: &[Vec<f64>]) -> Result<Self> {
        if n == 0 {
            return Err(invalid!("ambient dimension must be at least 1"));
        }
        if points.is_empty() {
            return Err(invalid!("a Q-point needs at least one point"));
        }
        let mut coords = Vec::with_capacity(n * points.len());
        for (i, p) in points.iter().enumerate() {
            if p.len() != n {
                return Err(invalid!("point {i} has dimension {}, expected {n}", p.len()));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { n, coords })
    }

    /// Builds from `Q * n` packed coordinates.
    pub fn from_flat(n: usize, coords: Vec<f64>) -> Result<Self> {
        if n == 0 || coords.is_empty() || coords.len() % n != 0 {
            return Err(invalid!(
                "{} coordinates cannot be split into points of dimension {n}",
                coords.len()
            ));
        }
        Ok(Self { n, coords })
    }

    /// `q⟦p⟧`.
    pub fn multiple(q: usize, p: &[f64]) -> Self {
        assert!(q >= 1 && !p.is_empty());
        let mut coords = Vec::with_capacity(q * p.len());
        for _ in 0..q {
            coords.extend_from_slice(p);
        }
        Self { n: p.len(), coords }
    }

    pub fn q(&self) -> usize {
        self.coords.len() / self.n
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.n..(i + 1) * self.n]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.n)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Copy with the points sorted lexicographically.
    pub fn canonical(&self) -> QPoint {
        let order = self.canonical_order();
        let mut coords = Vec::with_capacity(self.coords.len());
        for i in order {
            coords.extend_from_slice(self.point(i));
        }
        QPoint { n: self.n, coords }
    }

    /// Indices of the stored points in lexicographic order (stable).
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.q()).collect();
        order.sort_by(|&a, &b| lex_cmp(self.point(a), self.point(b)));
        order
    }

    /// Concatenation `Σ⟦P_i⟧ + Σ⟦S_j⟧` (a Q1+Q2 point).
    pub fn concat(&self, other: &QPoint) -> Result<QPoint> {
        if self.n != other.n {
            return Err(invalid!("dimension mismatch {} vs {}", self.n, other.n));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(QPoint { n: self.n, coords })
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_compatible(t1: &QPoint, t2: &QPoint) -> Result<()> {
    if t1.n != t2.n || t1.q() != t2.q() {
        return Err(invalid!(
            "incompatible Q-points: (Q={}, n={}) vs (Q={}, n={})",
            t1.q(),
            t1.n,
            t2.q(),
            t2.n
        ));
    }
    Ok(())
}

/// Squared-distance cost matrix between the points of two Q-points.
pub(crate) fn cost_matrix(t1: &QPoint, t2: &QPoint) -> Vec<Vec<f64>> {
    t1.points()
        .map(|p| t2.points().map(|s| sq_dist(p, s)).collect())
        .collect()
}

/// Optimal matching `σ` (point `i` of `t1` goes to point `σ[i]` of `t2`) and
/// the squared cost `Σ|P_i − S_σ(i)|²`.
pub fn optimal_matching(t1: &QPoint, t2: &QPoint) -> Result<(Vec<usize>, f64)> {
    check_compatible(t1, t2)?;
    let cost = cost_matrix(t1, t2);
    let sigma = assignment::solve(&cost);
    let total = assignment::total_cost(&cost, &sigma);
    Ok((sigma, total))
}

/// `G(T1, T2) = min_σ sqrt(Σ_i |P_i − S_σ(i)|²)`.
///
/// The value is unique even when several matchings attain it.
pub fn metric_g(t1: &QPoint, t2: &QPoint) -> Result<f64> {
    Ok(optimal_matching(t1, t2)?.1.max(0.0).sqrt())
}

/// `τ_v(T) = Σ⟦T_i − v⟧`.
pub fn translate(t: &QPoint, v: &[f64]) -> Result<QPoint> {
    if v.len() != t.n {
        return Err(invalid!("translation vector has dimension {}, expected {}", v.len(), t.n));
    }
    let coords = t
        .coords
        .chunks_exact(t.n)
        .flat_map(|p| p.iter().zip(v).map(|(a, b)| a - b))
        .collect();
    Ok(QPoint { n: t.n, coords })
}

/// Barycenter `η∘T = Q⁻¹ Σ_i T_i`, summed in canonical order.
pub fn mean_eta(t: &QPoint) -> Vec<f64> {
    let mut mean = vec![0.0; t.n];
    for i in t.canonical_order() {
        for (m, x) in mean.iter_mut().zip(t.point(i)) {
            *m += x;
        }
    }
    let q = t.q() as f64;
    mean.iter_mut().for_each(|m| *m /= q);
    mean
}

/// Decomposition `T = Σ_j q_j ⟦a_j⟧` up to a clustering tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportGrouping {
    pub groups: Vec<SupportGroup>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportGroup {
    pub multiplicity: usize,
    pub center: Vec<f64>,
    /// Indices of the clustered points in the input.
    pub members: Vec<usize>,
}

impl SupportGrouping {
    pub fn total_multiplicity(&self) -> usize {
        self.groups.iter().map(|g| g.multiplicity).sum()
    }
}

/// Single-linkage clustering of the points of `t` at threshold `tol`.
///
/// Points at distance `≤ tol` are linked (`tol = 0` groups exact
/// coincidences). Clusters whose weighted centers still lie within `tol` of
/// each other are merged, so centers end up pairwise more than `tol` apart.
/// Groups are listed in lexicographic order of their first member.
pub fn group_by_support(t: &QPoint, tol: f64) -> Result<SupportGrouping> {
    if !(tol >= 0.0) {
        return Err(invalid!("grouping tolerance must be nonnegative, got {tol}"));
    }
    let order = t.canonical_order();
    let q = t.q();
    let mut parent: Vec<usize> = (0..q).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    fn union(parent: &mut [usize], a: usize, b: usize) {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            // the root is always the lexicographically earlier position
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }
    // positions refer to `order`
    let tol2 = tol * tol;
    for a in 0..q {
        for b in a + 1..q {
            if sq_dist(t.point(order[a]), t.point(order[b])) <= tol2 {
                union(&mut parent, a, b);
            }
        }
    }
    let collect = |parent: &mut Vec<usize>| -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        let mut root_slot = vec![usize::MAX; q];
        for pos in 0..q {
            let r = find(parent, pos);
            if root_slot[r] == usize::MAX {
                root_slot[r] = clusters.len();
                clusters.push(Vec::new());
            }
            clusters[root_slot[r]].push(pos);
        }
        clusters
    };
    let center_of = |cluster: &[usize]| -> Vec<f64> {
        let mut c = vec![0.0; t.n];
        for &pos in cluster {
            for (ci, x) in c.iter_mut().zip(t.point(order[pos])) {
                *ci += x;
            }
        }
        c.iter_mut().for_each(|x| *x /= cluster.len() as f64);
        c
    };
    loop {
        let clusters = collect(&mut parent);
        let centers: Vec<Vec<f64>> = clusters.iter().map(|c| center_of(c)).collect();
        let mut merged = false;
        'outer: for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                if sq_dist(&centers[a], &centers[b]) <= tol2 {
                    union(&mut parent, clusters[a][0], clusters[b][0]);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            let groups = clusters
                .iter()
                .zip(centers)
                .map(|(c, center)| SupportGroup {
                    multiplicity: c.len(),
                    center,
                    members: c.iter().map(|&pos| order[pos]).collect(),
                })
                .collect();
            return Ok(SupportGrouping { groups, tolerance: tol });
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QPointRepr {
    n: usize,
    points: Vec<Vec<f64>>,
}

impl Serialize for QPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let c = self.canonical();
        QPointRepr { n: c.n, points: c.points().map(|p| p.to_vec()).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for QPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = QPointRepr::deserialize(d)?;
        QPoint::new(r.n, &r.points).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(n: usize, pts: &[&[f64]]) -> QPoint {
        QPoint::new(n, &pts.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn metric_examples() {
        let z = QPoint::multiple(3, &[0.0]);
        assert_eq!(metric_g(&z, &z).unwrap(), 0.0);
        assert_eq!(metric_g(&qp(1, &[&[0.0], &[1.0]]), &qp(1, &[&[1.0], &[0.0]])).unwrap(), 0.0);
        let t1 = qp(2, &[&[0.0, 0.0], &[2.0, 0.0]]);
        let t2 = qp(2, &[&[1.0, 0.0], &[3.0, 0.0]]);
        // permutations: identity gives 1+1, swap gives 9+1
        assert!((metric_g(&t1, &t2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn metric_rejects_mismatch() {
        let a = QPoint::multiple(2, &[0.0]);
        let b = QPoint::multiple(3, &[0.0]);
        assert!(metric_g(&a, &b).is_err());
        let c = QPoint::multiple(2, &[0.0, 1.0]);
        assert!(metric_g(&a, &c).is_err());
    }

    #[test]
    fn translate_examples() {
        let t = qp(1, &[&[0.0], &[2.0]]);
        assert_eq!(translate(&t, &[1.0]).unwrap(), qp(1, &[&[-1.0], &[1.0]]));
        assert_eq!(translate(&t, &[0.0]).unwrap(), t);
        assert!(translate(&t, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_eta(&qp(2, &[&[1.0, 0.0], &[3.0, 0.0]])), vec![2.0, 0.0]);
        assert_eq!(mean_eta(&QPoint::multiple(4, &[0.5, -2.0])), vec![0.5, -2.0]);
    }

    #[test]
    fn grouping_examples() {
        let t = qp(1, &[&[0.0], &[0.05], &[1.0]]);
        let g = group_by_support(&t, 0.1).unwrap();
        assert_eq!(g.groups.len(), 2);
        assert_eq!(g.groups[0].multiplicity, 2);
        assert!((g.groups[0].center[0] - 0.025).abs() < 1e-15);
        assert_eq!((g.groups[1].multiplicity, g.groups[1].center[0]), (1, 1.0));

        let t = qp(2, &[&[1.0, 1.0], &[0.0, 3.0], &[1.0, 1.0]]);
        let g = group_by_support(&t, 0.0).unwrap();
        assert_eq!(g.groups.len(), 2);
        assert_eq!((g.groups[0].multiplicity, g.groups[0].center.clone()), (1, vec![0.0, 3.0]));
        assert_eq!((g.groups[1].multiplicity, g.groups[1].center.clone()), (2, vec![1.0, 1.0]));

        let g = group_by_support(&QPoint::multiple(3, &[2.0]), 0.0).unwrap();
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.total_multiplicity(), 3);
        assert!(group_by_support(&t, -1.0).is_err());
    }

    #[test]
    fn grouping_centers_are_separated() {
        // chain a-b-c linked, d close to the chain center only after merging
        let t = qp(2, &[&[0.0, 0.0], &[0.09, 0.0], &[0.18, 0.0], &[0.09, 0.15]]);
        let g = group_by_support(&t, 0.1).unwrap();
        for a in 0..g.groups.len() {
            for b in a + 1..g.groups.len() {
                assert!(sq_dist(&g.groups[a].center, &g.groups[b].center) > 0.01);
            }
        }
        assert_eq!(g.total_multiplicity(), 4);
    }

    #[test]
    fn json_is_canonical() {
        let t = qp(1, &[&[2.0], &[0.0]]);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"n":1,"points":[[0.0],[2.0]]}"#);
        let back: QPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(metric_g(&back, &t).unwrap(), 0.0);
        assert!(serde_json::from_str::<QPoint>(r#"{"n":2,"points":[[0.0]]}"#).is_err());
        assert!(serde_json::from_str::<QPoint>(r#"{"n":1,"points":[[0.0]],"x":1}"#).is_err());
    }
}
