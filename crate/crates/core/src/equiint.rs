//! Equi-integrability diagnostics for sampled sequences of functions:
//! distribution tails, De la Vallée Poussin sums, biting truncations and the
//! critical Sobolev exponent check.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, QvarError, Result};
use crate::par;
use crate::qfield::QSheetField;

/// Piecewise-constant functions on a common grid of equal cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFunctionSeq {
    cell_volume: f64,
    samples: Vec<Vec<f64>>,
    p: f64,
}

impl SampledFunctionSeq {
    /// `samples[k][c]` is the value of `g_k` on cell `c` of a grid splitting a
    /// domain of measure `measure` into equal cells.
    pub fn new(measure: f64, samples: Vec<Vec<f64>>, p: f64) -> Result<Self> {
        if !(measure > 0.0 && measure.is_finite()) {
            return Err(invalid!("domain measure must be positive and finite"));
        }
        if !(p >= 1.0) {
            return Err(QvarError::InvalidExponent(format!("p = {p} < 1")));
        }
        let cells = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != cells) {
            return Err(invalid!("members do not share the grid"));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid!("non-finite sample value"));
        }
        if !samples.is_empty() && cells == 0 {
            return Err(invalid!("empty grid"));
        }
        let cell_volume = if cells == 0 { measure } else { measure / cells as f64 };
        Ok(SampledFunctionSeq { cell_volume, samples, p })
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn l1_norms(&self) -> Vec<f64> {
        self.samples.iter().map(|g| g.iter().map(|v| v.abs()).sum::<f64>() * self.cell_volume).collect()
    }
}

/// `∫_{|g| ≥ t} |g|` for a piecewise-constant `g`.
pub fn distribution_tail(g: &[f64], cell_volume: f64, t: f64) -> f64 {
    g.iter().map(|v| v.abs()).filter(|&v| v >= t).sum::<f64>() * cell_volume
}

/// `sup { ∫_E |g| : meas E ≤ δ }` over unions of grid cells.
pub fn small_set_sup(g: &[f64], cell_volume: f64, delta: f64) -> f64 {
    let count = ((delta / cell_volume) + 1e-12).floor().max(0.0) as usize;
    let mut mags: Vec<f64> = g.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags.iter().take(count).sum::<f64>() * cell_volume
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DlvpReport {
    pub bounded: bool,
    pub sup: f64,
    pub integrals: Vec<f64>,
    pub cap: f64,
}

/// `sup_k ∫ φ(|g_k|)` compared against `cap`.
pub fn dlvp_check(seq: &SampledFunctionSeq, phi: &(dyn Fn(f64) -> f64 + Sync), cap: f64) -> DlvpReport {
    let integrals: Vec<f64> = par::map_range(seq.len(), |k| {
        seq.samples[k].iter().map(|v| phi(v.abs())).sum::<f64>() * seq.cell_volume
    });
    let sup = integrals.iter().copied().fold(0.0, f64::max);
    DlvpReport { bounded: sup < cap, sup, integrals, cap }
}

/// Tail budget `ε(t) = c / t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSchedule {
    pub c: f64,
}

impl TailSchedule {
    /// `c` equal to the largest `L¹` norm of the sequence.
    pub fn calibrated(seq: &SampledFunctionSeq) -> Self {
        let c = seq.l1_norms().into_iter().fold(0.0, f64::max);
        TailSchedule { c: if c > 0.0 { c } else { 1.0 } }
    }

    pub fn eps(&self, t: f64) -> f64 {
        if t <= 0.0 {
            f64::INFINITY
        } else {
            self.c / t
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitingReport {
    pub schedule: TailSchedule,
    pub indices: Vec<usize>,
    pub levels: Vec<f64>,
    /// `‖g_{k_j} ∧ t_j‖_{L¹}`, the largest tail of each truncation.
    pub truncated_mass: Vec<f64>,
    pub tail_levels: Vec<f64>,
    /// `tails[j][i] = sup_{j' ≥ j} φ_{j'}(tail_levels[i])`.
    pub tails: Vec<Vec<f64>>,
}

fn truncate(g: &[f64], t: f64) -> Vec<f64> {
    g.iter().map(|v| v.abs().min(t)).collect()
}

/// Largest violation of `φ(s) ≤ ε(s)` over the levels where `φ` jumps.
fn schedule_excess(h: &[f64], vol: f64, schedule: &TailSchedule) -> f64 {
    let mut vals: Vec<f64> = h.iter().copied().filter(|&v| v > 0.0).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut worst = f64::NEG_INFINITY;
    let mut i = 0;
    while i < vals.len() {
        let level = vals[i];
        while i < vals.len() && vals[i] == level {
            acc += vals[i] * vol;
            i += 1;
        }
        worst = worst.max(acc - schedule.eps(level));
    }
    worst
}

/// Greedy selection of `k_1 < k_2 < …` and `t_1 < t_2 < …` with every
/// truncation `g_{k_j} ∧ t_j` inside the tail budget.
pub fn biting_truncations(seq: &SampledFunctionSeq, schedule: TailSchedule) -> Result<BitingReport> {
    if seq.is_empty() {
        return Err(invalid!("empty sequence"));
    }
    if !(schedule.c > 0.0) {
        return Err(QvarError::Configuration("schedule constant must be positive".into()));
    }
    let vol = seq.cell_volume;
    let feasible = |g: &[f64], t: f64| schedule_excess(&truncate(g, t), vol, &schedule) <= 1e-14 * schedule.c;
    let mut indices = Vec::new();
    let mut levels: Vec<f64> = Vec::new();
    let mut best_excess = f64::INFINITY;
    for (k, g) in seq.samples.iter().enumerate() {
        let prev = levels.last().copied().unwrap_or(0.0);
        let hi = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let j = indices.len() as i32 + 1;
        let level = if feasible(g, hi) {
            let dyadic = 2f64.powi(j).max(hi);
            if dyadic > prev { dyadic } else { 2.0 * prev }
        } else {
            let (mut lo, mut up) = (0.0, hi);
            for _ in 0..100 {
                let mid = 0.5 * (lo + up);
                if feasible(g, mid) {
                    lo = mid;
                } else {
                    up = mid;
                }
            }
            best_excess = best_excess.min(schedule_excess(&truncate(g, prev.max(lo)), vol, &schedule));
            lo
        };
        if level > prev {
            indices.push(k);
            levels.push(level);
        }
    }
    if indices.is_empty() {
        return Err(QvarError::ScheduleUnattainable(format!(
            "no member meets ε(t) = {}/t; smallest excess {best_excess:.3e}",
            schedule.c
        )));
    }
    let truncs: Vec<Vec<f64>> = indices.iter().zip(&levels).map(|(&k, &t)| truncate(&seq.samples[k], t)).collect();
    let truncated_mass = truncs.iter().map(|h| h.iter().sum::<f64>() * vol).collect();
    let top = levels.iter().copied().fold(1.0, f64::max);
    let mut tail_levels = vec![];
    let mut t = 1.0 / 1024.0;
    while t <= 2.0 * top {
        tail_levels.push(t);
        t *= 2.0;
    }
    let raw: Vec<Vec<f64>> = truncs.iter().map(|h| tail_levels.iter().map(|&t| distribution_tail(h, vol, t)).collect()).collect();
    let mut tails = raw.clone();
    for j in (0..tails.len().saturating_sub(1)).rev() {
        for i in 0..tail_levels.len() {
            tails[j][i] = tails[j][i].max(tails[j + 1][i]);
        }
    }
    Ok(BitingReport { schedule, indices, levels, truncated_mass, tail_levels, tails })
}

/// Scalar fields with cellwise values and gradient magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevSamples {
    pub m: usize,
    pub cell_volume: f64,
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<f64>>,
}

impl SobolevSamples {
    /// Values at simplex barycenters and gradient norms of single-valued
    /// scalar fields sharing a mesh.
    pub fn from_fields(fields: &[QSheetField]) -> Result<Self> {
        let first = fields.first().ok_or_else(|| invalid!("no fields"))?;
        let mesh = first.mesh();
        let m = mesh.dim();
        for f in fields {
            if f.q() != 1 || f.n() != 1 || f.mesh() != mesh {
                return Err(invalid!("fields must be scalar, single-valued and share the mesh"));
            }
        }
        let bary = vec![1.0 / (m + 1) as f64; m + 1];
        let sample = |f: &QSheetField| -> (Vec<f64>, Vec<f64>) {
            (0..mesh.num_simplices())
                .map(|s| (f.eval_in_simplex(s, &bary)[0][0], f.sheet_gradients(s)[0].norm()))
                .unzip()
        };
        let (values, gradients) = fields.iter().map(sample).unzip();
        Ok(SobolevSamples { m, cell_volume: mesh.simplex_volume(), values, gradients })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyTails {
    /// `sup_k ∫_{h_k ≥ t} h_k` at each level.
    pub sup_tails: Vec<f64>,
    pub sup_l1: f64,
    pub equi_integrable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevReport {
    pub p: f64,
    pub p_star: f64,
    pub levels: Vec<f64>,
    pub values: FamilyTails,
    pub gradients: FamilyTails,
    pub critical: FamilyTails,
    /// `sup_{j ≥ 1} j^p·meas{|g_k| > j}` per member.
    pub chebyshev: Vec<f64>,
    pub hypothesis_holds: bool,
    pub conclusion_holds: bool,
}

fn family_tails(family: &[Vec<f64>], vol: f64, levels: &[f64], threshold: f64) -> FamilyTails {
    let sup_tails: Vec<f64> = levels
        .iter()
        .map(|&t| family.iter().map(|h| distribution_tail(h, vol, t)).fold(0.0, f64::max))
        .collect();
    let sup_l1 = family.iter().map(|h| h.iter().sum::<f64>() * vol).fold(0.0, f64::max);
    let last = sup_tails.last().copied().unwrap_or(0.0);
    FamilyTails { equi_integrable: last <= threshold * sup_l1, sup_tails, sup_l1 }
}

/// Tails of `|g_k|^p`, `|∇g_k|^p` and `|g_k|^{p*}` at the given levels; a
/// family is flagged equi-integrable when its tail at the largest level is at
/// most `threshold` times its largest `L¹` norm.
pub fn sobolev_critical_check(seq: &SobolevSamples, p: f64, levels: &[f64], threshold: f64) -> Result<SobolevReport> {
    let m = seq.m as f64;
    if !(p >= 1.0) || p >= m {
        return Err(QvarError::InvalidExponent(format!("need 1 ≤ p < m, got p = {p}, m = {m}")));
    }
    if seq.values.len() != seq.gradients.len()
        || seq.values.iter().zip(&seq.gradients).any(|(v, g)| v.len() != g.len())
    {
        return Err(invalid!("values and gradients do not share the grid"));
    }
    let p_star = m * p / (m - p);
    let vol = seq.cell_volume;
    let powered = |fam: &[Vec<f64>], e: f64| -> Vec<Vec<f64>> {
        fam.iter().map(|h| h.iter().map(|v| v.abs().powf(e)).collect()).collect()
    };
    let values = family_tails(&powered(&seq.values, p), vol, levels, threshold);
    let gradients = family_tails(&powered(&seq.gradients, p), vol, levels, threshold);
    let critical = family_tails(&powered(&seq.values, p_star), vol, levels, threshold);
    let chebyshev = seq
        .values
        .iter()
        .map(|g| {
            let top = g.iter().fold(0.0_f64, |a, v| a.max(v.abs())).floor() as usize;
            (1..=top)
                .map(|j| {
                    let meas = g.iter().filter(|v| v.abs() > j as f64).count() as f64 * vol;
                    (j as f64).powf(p) * meas
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(SobolevReport {
        p,
        p_star,
        levels: levels.to_vec(),
        hypothesis_holds: values.equi_integrable && gradients.equi_integrable,
        conclusion_holds: critical.equi_integrable,
        values,
        gradients,
        critical,
        chebyshev,
    })
}

#[derive(Deserialize)]
struct Row {
    k: usize,
    cell_index: usize,
    value: f64,
}

/// Reads `(k, cell_index, value)` rows into `samples[k][cell_index]`; every
/// member must cover the same cells exactly once.
pub fn read_sequence_csv<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for rec in rdr.deserialize::<Row>() {
        let row = rec.map_err(|e| invalid!("csv: {e}"))?;
        if rows.len() <= row.k {
            rows.resize(row.k + 1, Vec::new());
        }
        let member = &mut rows[row.k];
        if member.len() <= row.cell_index {
            member.resize(row.cell_index + 1, None);
        }
        if member[row.cell_index].replace(row.value).is_some() {
            return Err(invalid!("duplicate row k = {}, cell {}", row.k, row.cell_index));
        }
    }
    let cells = rows.first().map_or(0, Vec::len);
    rows.into_iter()
        .enumerate()
        .map(|(k, member)| {
            if member.len() != cells || member.iter().any(Option::is_none) {
                return Err(invalid!("member {k} does not cover cells 0..{cells}"));
            }
            Ok(member.into_iter().flatten().collect())
        })
        .collect()
}
