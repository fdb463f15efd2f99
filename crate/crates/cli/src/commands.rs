use std::fs::File;
use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use qvar_core::convexity_lab::{
    necessity_experiment, polyconvexity_certificate, quasiconvexity_test, rank_one_min, semiellipticity_test,
    NecessityReport, OptimizerConfig, QCVerdict, Status,
};
use qvar_core::currents::{pair_boundary, pair_graph, stokes_residual, DifferentialForm, DEFAULT_MAX_DEGREE};
use qvar_core::equiint::{biting_truncations, dlvp_check, read_sequence_csv, SampledFunctionSeq, TailSchedule};
use qvar_core::integrands::{energy_with_order, IntegrandSpec, QuadraticIntegrand};
use qvar_core::minors::PolyaffineFn;
use qvar_core::qfield::{
    blowup_residual, fold_sequence, weak_convergence_report, AffineQMap, QFieldSequence, QSheetField,
    WeakConvergenceReport,
};
use qvar_core::qspace::{optimal_matching, QPoint};
use qvar_core::rng::stream_rng;

use crate::{CliError, Command, Report};

fn parse<T: DeserializeOwned>(config: Value) -> Result<T, CliError> {
    serde_json::from_value(config).map_err(|e| CliError::Config(e.to_string()))
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn dispatch(cmd: Command, config: Value, seed: Option<u64>) -> Result<Report, CliError> {
    match cmd {
        Command::Metric => metric(parse(config)?),
        Command::Energy => energy(parse(config)?),
        Command::QcTest => qc_test(parse(config)?, seed),
        Command::Semielliptic => semielliptic(parse(config)?, seed),
        Command::RankOne => rank_one(parse(config)?),
        Command::PolyconvexCert => polyconvex_cert(parse(config)?),
        Command::Stokes => stokes(parse(config)?, seed),
        Command::NullLagrangian => null_lagrangian(parse(config)?),
        Command::Fold => fold(parse(config)?),
        Command::Lsc => lsc(parse(config)?),
        Command::Blowup => blowup(parse(config)?),
        Command::Biting => biting(parse(config)?),
        Command::Dlvp => dlvp(parse(config)?),
    }
}

fn qpoint(points: &[Vec<f64>]) -> Result<QPoint, CliError> {
    let n = points.first().map_or(0, Vec::len);
    Ok(QPoint::new(n, points)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricConfig {
    t1: Vec<Vec<f64>>,
    t2: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct MetricResult {
    g: f64,
    matching: Vec<usize>,
}

fn metric(c: MetricConfig) -> Result<Report, CliError> {
    let (a, b) = (qpoint(&c.t1)?, qpoint(&c.t2)?);
    let (matching, cost) = optimal_matching(&a, &b)?;
    let g = cost.sqrt();
    Report::new(&MetricResult { g, matching }, format!("G = {g:.16e}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EnergyConfig {
    integrand: IntegrandSpec,
    field: QSheetField,
    #[serde(default = "default_order")]
    order: usize,
}

fn default_order() -> usize {
    4
}

#[derive(Serialize)]
struct EnergyResult {
    energy: f64,
}

fn energy(c: EnergyConfig) -> Result<Report, CliError> {
    let f = c.integrand.build(c.field.m(), c.field.n())?;
    let e = energy_with_order(f.as_ref(), &c.field, c.order)?;
    Report::new(&EnergyResult { energy: e }, format!("energy = {e:.16e}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QcConfig {
    integrand: IntegrandSpec,
    affine: AffineQMap,
    #[serde(default)]
    optimizer: OptimizerConfig,
}

fn verdict_summary(v: &QCVerdict) -> String {
    let status = match v.status {
        Status::Violation => "violation",
        Status::NoViolationFound => "no-violation-found",
    };
    format!("{status}, margin = {:.6e}", v.margin)
}

fn qc_test(mut c: QcConfig, seed: Option<u64>) -> Result<Report, CliError> {
    if let Some(s) = seed {
        c.optimizer.seed = s;
    }
    let f = c.integrand.build(c.affine.m(), c.affine.n())?;
    let v = quasiconvexity_test(f.as_ref(), &c.affine, &c.optimizer)?;
    Report::new(&v, verdict_summary(&v))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SemiellipticConfig {
    m: usize,
    n: usize,
    matrix: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: usize,
    #[serde(default)]
    optimizer: OptimizerConfig,
}

fn semielliptic(mut c: SemiellipticConfig, seed: Option<u64>) -> Result<Report, CliError> {
    if let Some(s) = seed {
        c.optimizer.seed = s;
    }
    let a = QuadraticIntegrand::from_rows(c.m, c.n, &c.matrix)?;
    let v = semiellipticity_test(&a, c.q, &c.optimizer)?;
    Report::new(&v, verdict_summary(&v))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FormConfig {
    m: usize,
    n: usize,
    matrix: Vec<Vec<f64>>,
}

fn rank_one(c: FormConfig) -> Result<Report, CliError> {
    let r = rank_one_min(&QuadraticIntegrand::from_rows(c.m, c.n, &c.matrix)?);
    let summary = format!("rank-one minimum = {:.16e}", r.value);
    Report::new(&r, summary)
}

fn polyconvex_cert(c: FormConfig) -> Result<Report, CliError> {
    let cert = polyconvexity_certificate(&QuadraticIntegrand::from_rows(c.m, c.n, &c.matrix)?);
    let summary = format!(
        "{}, min eigenvalue = {:.6e}",
        if cert.feasible { "certificate" } else { "infeasible" },
        cert.min_eigenvalue
    );
    Report::new(&cert, summary)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StokesConfig {
    field: QSheetField,
    /// An (m−1)-form; random forms are drawn from the seed when absent.
    #[serde(default)]
    form: Option<DifferentialForm>,
    #[serde(default = "one")]
    random_forms: usize,
    #[serde(default = "default_max_degree")]
    max_degree: u32,
}

fn one() -> usize {
    1
}

fn default_max_degree() -> u32 {
    DEFAULT_MAX_DEGREE
}

#[derive(Serialize)]
struct StokesEntry {
    form: DifferentialForm,
    graph_pairing: f64,
    boundary_pairing: f64,
    residual: f64,
}

#[derive(Serialize)]
struct StokesResult {
    max_abs_residual: f64,
    entries: Vec<StokesEntry>,
}

fn stokes(c: StokesConfig, seed: Option<u64>) -> Result<Report, CliError> {
    let (m, n) = (c.field.m(), c.field.n());
    if m == 0 {
        return Err(config_err("field dimension must be positive"));
    }
    let forms = match c.form {
        Some(f) => vec![f],
        None => {
            let mut rng = stream_rng(seed.unwrap_or(0), 0);
            (0..c.random_forms).map(|_| DifferentialForm::random(m, n, m - 1, c.max_degree, &mut rng)).collect()
        }
    };
    let entries = forms
        .into_iter()
        .map(|form| {
            Ok(StokesEntry {
                graph_pairing: pair_graph(&c.field, &form.exterior_derivative())?,
                boundary_pairing: pair_boundary(&c.field, &form)?,
                residual: stokes_residual(&c.field, &form)?,
                form,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let max_abs_residual = entries.iter().map(|e| e.residual.abs()).fold(0.0, f64::max);
    Report::new(
        &StokesResult { max_abs_residual, entries },
        format!("max |residual| = {max_abs_residual:.3e}"),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NullLagrangianConfig {
    polyaffine: PolyaffineFn,
    w1: QSheetField,
    w2: QSheetField,
}

#[derive(Serialize)]
struct GapResult {
    gap: f64,
}

fn null_lagrangian(c: NullLagrangianConfig) -> Result<Report, CliError> {
    let p = PolyaffineFn::new(c.polyaffine.m, c.polyaffine.n, c.polyaffine.c0, c.polyaffine.zeta)?;
    let gap = qvar_core::currents::null_lagrangian_gap(&p, &c.w1, &c.w2)?;
    Report::new(&GapResult { gap }, format!("gap = {gap:.3e}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FoldConfig {
    affine: AffineQMap,
    competitors: Vec<QSheetField>,
    k: usize,
    r: f64,
}

#[derive(Serialize)]
struct FoldResult {
    boundary_sup_distance: f64,
    field: QSheetField,
}

fn fold(c: FoldConfig) -> Result<Report, CliError> {
    let field = fold_sequence(&c.affine, &c.competitors, c.k, c.r)?;
    let boundary_sup_distance = field.boundary_sup_distance(|x| c.affine.eval(x))?;
    Report::new(
        &FoldResult { boundary_sup_distance, field },
        format!("boundary trace distance = {boundary_sup_distance:.3e}"),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LscConfig {
    integrand: IntegrandSpec,
    affine: AffineQMap,
    competitors: Vec<QSheetField>,
    ks: Vec<usize>,
    r: f64,
    #[serde(default = "two")]
    p: f64,
    #[serde(default)]
    csv: Option<PathBuf>,
}

fn two() -> f64 {
    2.0
}

#[derive(Serialize)]
struct LscResult {
    necessity: NecessityReport,
    weak_convergence: WeakConvergenceReport,
    lower_semicontinuity_fails: bool,
}

fn lsc(c: LscConfig) -> Result<Report, CliError> {
    let f = c.integrand.build(c.affine.m(), c.affine.n())?;
    let necessity = necessity_experiment(f.as_ref(), &c.affine, &c.competitors, &c.ks, c.r)?;
    let folds = c
        .ks
        .iter()
        .map(|&k| fold_sequence(&c.affine, &c.competitors, k, c.r))
        .collect::<Result<Vec<_>, _>>()?;
    let nw = c.competitors.first().map_or(1, |w| w.mesh().cells_per_side());
    let target = QSheetField::sample_affine(
        &c.affine,
        qvar_core::mesh::Mesh::new(qvar_core::mesh::Cube::centered(c.affine.m(), c.r), nw)?,
    )?;
    let weak_convergence = weak_convergence_report(&QFieldSequence::new(folds, c.p)?, &target)?;
    let last = necessity.folded_energies.last().copied().unwrap_or(necessity.affine_energy);
    let lower_semicontinuity_fails = last < necessity.affine_energy - 1e-12;
    let csv = c.csv.map(|path| {
        let rows = c
            .ks
            .iter()
            .zip(&necessity.folded_energies)
            .zip(&weak_convergence.distances)
            .map(|((k, e), d)| vec![k.to_string(), format!("{e:.16e}"), format!("{d:.16e}")])
            .collect();
        (path, vec!["k".into(), "energy".into(), "lp_distance".into()], rows)
    });
    let summary = format!(
        "F(u) = {:.6e}, last folded energy = {last:.6e}, weak convergence consistent: {}",
        necessity.affine_energy, weak_convergence.consistent_with_weak_convergence
    );
    let mut report = Report::new(&LscResult { necessity, weak_convergence, lower_semicontinuity_fails }, summary)?;
    report.csv = csv;
    Ok(report)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlowupConfig {
    field: QSheetField,
    x0: Vec<f64>,
    model: AffineQMap,
    rhos: Vec<f64>,
    #[serde(default = "two")]
    p: f64,
}

#[derive(Serialize)]
struct BlowupResult {
    rhos: Vec<f64>,
    residuals: Vec<f64>,
    monotone: bool,
}

fn blowup(c: BlowupConfig) -> Result<Report, CliError> {
    let residuals = c
        .rhos
        .iter()
        .map(|&rho| blowup_residual(&c.field, &c.x0, &c.model, rho, c.p))
        .collect::<Result<Vec<_>, _>>()?;
    let monotone = residuals.windows(2).all(|w| w[1] <= w[0]);
    let summary = format!("{} radii, monotone: {monotone}", residuals.len());
    Report::new(&BlowupResult { rhos: c.rhos, residuals, monotone }, summary)
}

fn unit() -> f64 {
    1.0
}

/// Samples inline or as `(k, cell_index, value)` CSV rows.
fn load_sequence(
    measure: f64,
    samples: Option<Vec<Vec<f64>>>,
    csv: Option<PathBuf>,
    p: f64,
) -> Result<SampledFunctionSeq, CliError> {
    let samples = match (samples, csv) {
        (Some(s), None) => s,
        (None, Some(path)) => {
            let file = File::open(&path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            read_sequence_csv(file)?
        }
        _ => return Err(config_err("give exactly one of \"samples\" and \"csv\"")),
    };
    Ok(SampledFunctionSeq::new(measure, samples, p)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BitingConfig {
    #[serde(default = "unit")]
    measure: f64,
    #[serde(default)]
    samples: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    csv: Option<PathBuf>,
    #[serde(default = "unit")]
    p: f64,
    #[serde(default)]
    schedule_c: Option<f64>,
    #[serde(default)]
    csv_out: Option<PathBuf>,
}

fn biting(c: BitingConfig) -> Result<Report, CliError> {
    let seq = load_sequence(c.measure, c.samples, c.csv, c.p)?;
    let schedule = match c.schedule_c {
        Some(v) => TailSchedule { c: v },
        None => TailSchedule::calibrated(&seq),
    };
    let rep = biting_truncations(&seq, schedule)?;
    let csv = c.csv_out.map(|path| {
        let rows = rep
            .indices
            .iter()
            .zip(&rep.levels)
            .zip(&rep.truncated_mass)
            .enumerate()
            .map(|(j, ((k, t), mass))| vec![j.to_string(), k.to_string(), format!("{t:.16e}"), format!("{mass:.16e}")])
            .collect();
        (path, vec!["j".into(), "k".into(), "level".into(), "truncated_mass".into()], rows)
    });
    let summary = format!("{} truncations selected", rep.indices.len());
    let mut report = Report::new(&rep, summary)?;
    report.csv = csv;
    Ok(report)
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum PhiSpec {
    /// `t^exponent`.
    Power { exponent: f64 },
    /// `t·ln(1 + t)`.
    TLogT,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DlvpConfig {
    #[serde(default = "unit")]
    measure: f64,
    #[serde(default)]
    samples: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    csv: Option<PathBuf>,
    #[serde(default = "unit")]
    p: f64,
    phi: PhiSpec,
    cap: f64,
}

fn dlvp(c: DlvpConfig) -> Result<Report, CliError> {
    let seq = load_sequence(c.measure, c.samples, c.csv, c.p)?;
    let rep = match c.phi {
        PhiSpec::Power { exponent } => {
            if !(exponent > 1.0) {
                return Err(config_err("a superlinear power needs exponent > 1"));
            }
            dlvp_check(&seq, &move |t: f64| t.powf(exponent), c.cap)
        }
        PhiSpec::TLogT => dlvp_check(&seq, &|t: f64| t * t.ln_1p(), c.cap),
    };
    let summary = format!("sup = {:.6e}, bounded by cap: {}", rep.sup, rep.bounded);
    Report::new(&rep, summary)
}
