//! Convergence and efficiency studies: reference solutions, global errors,
//! timing, order fits and CSV/JSON output for log-log plots.

use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::integrators::{integrate, IntegrationError, Method, Scheme};
use crate::matfun::Vector;
use crate::problems::Problem;

/// Smallest accepted ratio h_min / h_ref.
pub const MIN_REFINEMENT: usize = 32;
/// Relative agreement required between the two reference integrations.
pub const REFERENCE_TOLERANCE: f64 = 1e-9;
/// Errors at or below `FLOOR_FACTOR · u · ‖y_ref‖∞` count as roundoff.
pub const FLOOR_FACTOR: f64 = 100.0;
pub const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error("unreliable reference: mverk41 and erk-krogstad4 differ by {discrepancy:.3e} (relative) at h = {h:e}, tolerance {tolerance:e}")]
    UnreliableReference { discrepancy: f64, h: f64, tolerance: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Fine-step solution at the end of `p`'s time span.
///
/// Integrates with MVERK41 at h_min/refinement and cross-checks against the
/// Krogstad scheme at the same stepsize. When the problem carries a closed
/// form, that value is returned instead (after the same cross-check), so the
/// reference does not carry the fine run's accumulated roundoff.
pub fn reference_solution(p: &Problem, h_min: f64, refinement: usize) -> Result<Vector, HarnessError> {
    if refinement < MIN_REFINEMENT {
        return Err(HarnessError::Config(format!(
            "reference refinement must be at least {MIN_REFINEMENT}, got {refinement}"
        )));
    }
    let h = h_min / refinement as f64;
    let t_end = p.t_span().1;
    let primary = integrate(&Method::Mverk41.scheme(), p, h, t_end)?.final_state;
    let check = integrate(&Method::ErkKrogstad4.scheme(), p, h, t_end)?.final_state;
    let scale = primary.amax().max(f64::MIN_POSITIVE);
    let discrepancy = (&primary - &check).amax() / scale;
    if discrepancy.is_nan() || discrepancy > REFERENCE_TOLERANCE {
        return Err(HarnessError::UnreliableReference {
            discrepancy,
            h,
            tolerance: REFERENCE_TOLERANCE,
        });
    }
    Ok(p.exact_solution(t_end).unwrap_or(primary))
}

/// ‖y_num − y_ref‖∞.
pub fn global_error(y_num: &Vector, y_ref: &Vector) -> Result<f64, HarnessError> {
    if y_num.len() != y_ref.len() {
        return Err(HarnessError::DimensionMismatch {
            expected: y_ref.len(),
            found: y_num.len(),
        });
    }
    Ok(y_num.iter().zip(y_ref.iter()).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Roundoff floor for errors against `y_ref`.
pub fn roundoff_floor(y_ref: &Vector) -> f64 {
    FLOOR_FACTOR * UNIT_ROUNDOFF * y_ref.amax().max(1.0)
}

fn inf_as_null<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

fn null_as_inf<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// One (method, h) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: i32,
    pub h: f64,
    pub steps: usize,
    /// +∞ (null in JSON) when the run diverged.
    #[serde(serialize_with = "inf_as_null", deserialize_with = "null_as_inf")]
    pub global_error: f64,
    /// Cache build plus stepping, seconds (median of the repetitions).
    pub wall_time_total: f64,
    /// Cache build alone, seconds.
    pub wall_time_cache: f64,
    pub diverged: bool,
    /// Error at or below the roundoff floor; excluded from the order fit.
    pub at_floor: bool,
}

impl ConvergenceRow {
    pub fn step_time(&self) -> f64 {
        self.wall_time_total - self.wall_time_cache
    }

    pub fn per_step_time(&self) -> f64 {
        self.step_time() / self.steps.max(1) as f64
    }

    fn usable(&self) -> bool {
        !self.diverged && !self.at_floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub problem: String,
    pub method: String,
    /// Sorted by decreasing h.
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of log GE against log h over usable rows.
    pub fitted_order: Option<f64>,
    /// Slopes between consecutive rows; None where either row is unusable.
    pub pairwise_orders: Vec<Option<f64>>,
}

impl ConvergenceReport {
    pub fn new(problem: impl Into<String>, method: impl Into<String>, mut rows: Vec<ConvergenceRow>) -> Self {
        rows.sort_by(|a, b| b.h.total_cmp(&a.h));
        let fitted_order = fit_order(&rows);
        let pairwise_orders = rows
            .windows(2)
            .map(|w| {
                (w[0].usable() && w[1].usable())
                    .then(|| (w[0].global_error / w[1].global_error).ln() / (w[0].h / w[1].h).ln())
            })
            .collect();
        Self {
            problem: problem.into(),
            method: method.into(),
            rows,
            fitted_order,
            pairwise_orders,
        }
    }

    /// Whether every row sits at the roundoff floor (the method is exact here).
    pub fn all_at_floor(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.at_floor)
    }

    /// GE(h)/GE(h/2) for consecutive usable rows.
    pub fn error_ratios(&self) -> Vec<Option<f64>> {
        self.rows
            .windows(2)
            .map(|w| (w[0].usable() && w[1].usable()).then(|| w[0].global_error / w[1].global_error))
            .collect()
    }
}

/// Least-squares slope of log(GE) on log(h); needs two usable rows.
pub fn fit_order(rows: &[ConvergenceRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.usable())
        .map(|r| (r.h.ln(), r.global_error.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    /// One run at a time; wall times are comparable across methods.
    #[default]
    Sequential,
    /// Independent (method, h) runs on all cores.
    Parallel,
}

impl std::str::FromStr for TimingMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "parallel" => Ok(Self::Parallel),
            other => Err(HarnessError::Config(format!(
                "timing mode must be `sequential` or `parallel`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub refinement: usize,
    /// Timing repetitions per (method, h); the median is reported.
    pub repetitions: usize,
    pub timing: TimingMode,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            refinement: MIN_REFINEMENT,
            repetitions: 3,
            timing: TimingMode::Sequential,
        }
    }
}

fn stepsize(k: i32) -> f64 {
    2f64.powi(-k)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Runs one (method, k) cell: integrate `repetitions` times, keep the last
/// state and the median timings.
fn measure(
    p: &Problem,
    scheme: &Scheme,
    k: i32,
    y_ref: &Vector,
    repetitions: usize,
) -> Result<ConvergenceRow, HarnessError> {
    let h = stepsize(k);
    let t_end = p.t_span().1;
    let floor = roundoff_floor(y_ref);
    let mut totals = Vec::with_capacity(repetitions);
    let mut caches = Vec::with_capacity(repetitions);
    let mut last = None;
    for _ in 0..repetitions.max(1) {
        match integrate(scheme, p, h, t_end) {
            Ok(tr) => {
                totals.push(tr.total_time().as_secs_f64());
                caches.push(tr.cache_time.as_secs_f64());
                last = Some(tr);
            }
            Err(IntegrationError::Divergence { .. }) => {
                let steps = crate::integrators::step_count(p.t_span().0, t_end, h)?;
                return Ok(ConvergenceRow {
                    k,
                    h,
                    steps,
                    global_error: f64::INFINITY,
                    wall_time_total: 0.0,
                    wall_time_cache: 0.0,
                    diverged: true,
                    at_floor: false,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let tr = last.expect("at least one repetition");
    let err = global_error(&tr.final_state, y_ref)?;
    let diverged = !err.is_finite();
    let at_floor = !diverged && err <= floor;
    Ok(ConvergenceRow {
        k,
        h,
        steps: tr.steps,
        global_error: if diverged {
            f64::INFINITY
        } else if err == 0.0 {
            floor
        } else {
            err
        },
        wall_time_total: median(totals),
        wall_time_cache: median(caches),
        diverged,
        at_floor,
    })
}

fn k_values(k_range: &RangeInclusive<i32>) -> Result<Vec<i32>, HarnessError> {
    if k_range.is_empty() {
        return Err(HarnessError::Config(format!(
            "empty stepsize range {}..{}",
            k_range.start(),
            k_range.end()
        )));
    }
    Ok(k_range.clone().collect())
}

/// Convergence study of one method on h = 2^{−k}, k ∈ `k_range`, against a
/// freshly computed reference.
pub fn convergence_study(
    p: &Problem,
    method: &str,
    scheme: &Scheme,
    k_range: RangeInclusive<i32>,
    cfg: &StudyConfig,
) -> Result<ConvergenceReport, HarnessError> {
    let ks = k_values(&k_range)?;
    let y_ref = reference_solution(p, stepsize(*k_range.end()), cfg.refinement)?;
    let mut reports = studies_against(p, &[(method.to_string(), scheme.clone())], &ks, &y_ref, cfg)?;
    Ok(reports.remove(0))
}

/// Studies for several methods sharing one reference solution.
pub fn run_studies(
    p: &Problem,
    methods: &[(String, Scheme)],
    k_range: RangeInclusive<i32>,
    cfg: &StudyConfig,
) -> Result<(Vector, Vec<ConvergenceReport>), HarnessError> {
    if methods.is_empty() {
        return Err(HarnessError::Config("no methods selected".into()));
    }
    let ks = k_values(&k_range)?;
    let y_ref = reference_solution(p, stepsize(*k_range.end()), cfg.refinement)?;
    let reports = studies_against(p, methods, &ks, &y_ref, cfg)?;
    Ok((y_ref, reports))
}

/// Studies against a given reference state.
pub fn studies_against(
    p: &Problem,
    methods: &[(String, Scheme)],
    ks: &[i32],
    y_ref: &Vector,
    cfg: &StudyConfig,
) -> Result<Vec<ConvergenceReport>, HarnessError> {
    if y_ref.len() != p.dim() {
        return Err(HarnessError::DimensionMismatch {
            expected: p.dim(),
            found: y_ref.len(),
        });
    }
    for &k in ks {
        crate::integrators::step_count(p.t_span().0, p.t_span().1, stepsize(k))?;
    }
    let cells: Vec<(usize, i32)> = (0..methods.len()).flat_map(|m| ks.iter().map(move |&k| (m, k))).collect();
    let run = |&(m, k): &(usize, i32)| measure(p, &methods[m].1, k, y_ref, cfg.repetitions);

    let results: Vec<Result<ConvergenceRow, HarnessError>> = match cfg.timing {
        TimingMode::Sequential => cells.iter().map(run).collect(),
        TimingMode::Parallel => {
            let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cells.len());
            let next = AtomicUsize::new(0);
            let slots: Mutex<Vec<Option<Result<ConvergenceRow, HarnessError>>>> =
                Mutex::new((0..cells.len()).map(|_| None).collect());
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= cells.len() {
                            break;
                        }
                        let r = run(&cells[i]);
                        slots.lock().expect("result slots")[i] = Some(r);
                    });
                }
            });
            slots
                .into_inner()
                .expect("result slots")
                .into_iter()
                .map(|r| r.expect("every cell ran"))
                .collect()
        }
    };

    let mut per_method: Vec<Vec<ConvergenceRow>> = vec![Vec::new(); methods.len()];
    for ((m, _), r) in cells.iter().zip(results) {
        per_method[*m].push(r?);
    }
    Ok(methods
        .iter()
        .zip(per_method)
        .map(|((name, _), rows)| ConvergenceReport::new(p.label(), name.clone(), rows))
        .collect())
}

/// One point of an error-versus-cost plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub method: String,
    pub k: i32,
    pub h: f64,
    pub global_error: f64,
    pub wall_time_total: f64,
    pub wall_time_cache: f64,
    pub per_step_time: f64,
}

/// Flattens reports of one problem into rows ordered by method, then by
/// decreasing h.
pub fn efficiency_table(reports: &[ConvergenceReport]) -> Result<Vec<EfficiencyRow>, HarnessError> {
    if let Some(first) = reports.first() {
        if let Some(other) = reports.iter().find(|r| r.problem != first.problem) {
            return Err(HarnessError::Config(format!(
                "efficiency table mixes problems `{}` and `{}`",
                first.problem, other.problem
            )));
        }
    }
    let mut rows: Vec<EfficiencyRow> = reports
        .iter()
        .flat_map(|rep| {
            rep.rows.iter().map(|r| EfficiencyRow {
                method: rep.method.clone(),
                k: r.k,
                h: r.h,
                global_error: r.global_error,
                wall_time_total: r.wall_time_total,
                wall_time_cache: r.wall_time_cache,
                per_step_time: r.per_step_time(),
            })
        })
        .collect();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(b.h.total_cmp(&a.h)));
    Ok(rows)
}

/// A CSV line; header
/// `problem,method,k,h,steps,global_error,wall_time_total_s,wall_time_cache_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub problem: String,
    pub method: String,
    pub k: i32,
    pub h: f64,
    pub steps: usize,
    pub global_error: f64,
    pub wall_time_total_s: f64,
    pub wall_time_cache_s: f64,
}

pub fn csv_rows(reports: &[ConvergenceReport]) -> Vec<CsvRow> {
    reports
        .iter()
        .flat_map(|rep| {
            rep.rows.iter().map(|r| CsvRow {
                problem: rep.problem.clone(),
                method: rep.method.clone(),
                k: r.k,
                h: r.h,
                steps: r.steps,
                global_error: r.global_error,
                wall_time_total_s: r.wall_time_total,
                wall_time_cache_s: r.wall_time_cache,
            })
        })
        .collect()
}

pub fn write_csv<W: Write>(out: W, reports: &[ConvergenceReport]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let rows = csv_rows(reports);
    if rows.is_empty() {
        w.write_record([
            "problem",
            "method",
            "k",
            "h",
            "steps",
            "global_error",
            "wall_time_total_s",
            "wall_time_cache_s",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<CsvRow>, _>>()?)
}

/// Everything needed to reproduce a run, plus its results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// The fully resolved run configuration.
    pub config: serde_json::Value,
    pub environment: Environment,
    pub reports: Vec<ConvergenceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub problem: String,
    pub dimension: usize,
    pub parameters: serde_json::Value,
    pub t_span: (f64, f64),
    pub reference_norm: f64,
    pub roundoff_floor: f64,
    /// Custom coefficients file and its contents, when one was used.
    pub tableau: Option<serde_json::Value>,
    pub crate_version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn capture(p: &Problem, y_ref: &Vector, tableau: Option<serde_json::Value>) -> Self {
        Self {
            problem: p.label().to_string(),
            dimension: p.dim(),
            parameters: serde_json::to_value(p.params()).unwrap_or_default(),
            t_span: p.t_span(),
            reference_norm: y_ref.amax(),
            roundoff_floor: roundoff_floor(y_ref),
            tableau,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

pub fn write_json<W: Write>(out: W, report: &RunReport) -> Result<(), HarnessError> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}

pub fn read_json<R: Read>(input: R) -> Result<RunReport, HarnessError> {
    Ok(serde_json::from_reader(input)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: i32, err: f64) -> ConvergenceRow {
        ConvergenceRow {
            k,
            h: stepsize(k),
            steps: 1 << k,
            global_error: err,
            wall_time_total: 2e-3,
            wall_time_cache: 1e-3,
            diverged: !err.is_finite(),
            at_floor: false,
        }
    }

    #[test]
    fn global_error_is_max_norm() {
        let a = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(global_error(&a, &a).unwrap(), 0.0);
        let b = Vector::from_vec(vec![1.001, 2.0, 3.0]);
        assert!((global_error(&b, &a).unwrap() - 1e-3).abs() < 1e-15);
        assert!(matches!(
            global_error(&Vector::zeros(2), &a),
            Err(HarnessError::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let rows: Vec<_> = (4..=8).map(|k| row(k, 3.0 * stepsize(k).powi(4))).collect();
        let rep = ConvergenceReport::new("p", "m", rows);
        assert!((rep.fitted_order.unwrap() - 4.0).abs() < 1e-12);
        for r in rep.error_ratios() {
            assert!((r.unwrap() - 16.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fit_skips_diverged_and_floor_rows() {
        let mut rows: Vec<_> = (4..=8).map(|k| row(k, stepsize(k).powi(4))).collect();
        rows[0] = row(4, f64::INFINITY);
        rows[4].at_floor = true;
        rows[4].global_error = 1.0;
        let rep = ConvergenceReport::new("p", "m", rows);
        assert!((rep.fitted_order.unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(rep.pairwise_orders[0], None);
        assert_eq!(rep.pairwise_orders[3], None);
        assert!(fit_order(&rep.rows[..1]).is_none());
    }

    #[test]
    fn rows_sorted_by_decreasing_h() {
        let rep = ConvergenceReport::new("p", "m", vec![row(6, 1e-6), row(4, 1e-4), row(5, 1e-5)]);
        let ks: Vec<_> = rep.rows.iter().map(|r| r.k).collect();
        assert_eq!(ks, [4, 5, 6]);
    }

    #[test]
    fn efficiency_table_orders_and_rejects_mixed_problems() {
        let a = ConvergenceReport::new("p", "sverk41", vec![row(5, 1e-5), row(4, 1e-4)]);
        let b = ConvergenceReport::new("p", "mverk41", vec![row(4, 2e-4), row(5, 2e-5)]);
        let table = efficiency_table(&[a.clone(), b]).unwrap();
        let keys: Vec<_> = table.iter().map(|r| (r.method.as_str(), r.k)).collect();
        assert_eq!(keys, [("mverk41", 4), ("mverk41", 5), ("sverk41", 4), ("sverk41", 5)]);
        let single = efficiency_table(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.len(), 2);
        assert_eq!(single[0].global_error, a.rows[0].global_error);
        let c = ConvergenceReport::new("q", "rk4", vec![row(4, 1.0)]);
        assert!(matches!(efficiency_table(&[a, c]), Err(HarnessError::Config(_))));
    }

    #[test]
    fn csv_and_json_round_trip() {
        let reports = vec![
            ConvergenceReport::new("p", "m1", vec![row(4, 0.1 + 0.2), row(5, f64::INFINITY)]),
            ConvergenceReport::new("p", "m2", vec![row(4, 1.0 / 3.0)]),
        ];
        let mut buf = Vec::new();
        write_csv(&mut buf, &reports).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("problem,method,k,h,steps,global_error,wall_time_total_s,wall_time_cache_s\n"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), csv_rows(&reports));

        let run = RunReport {
            config: serde_json::json!({"problem": "p"}),
            environment: Environment::capture(
                &crate::problems::scalar_toy(1.0, crate::problems::ToyKind::Linear),
                &Vector::from_vec(vec![1.0]),
                None,
            ),
            reports,
        };
        let mut buf = Vec::new();
        write_json(&mut buf, &run).unwrap();
        assert_eq!(read_json(buf.as_slice()).unwrap(), run);
    }

    #[test]
    fn reference_rejects_small_refinement() {
        let p = crate::problems::scalar_toy(1.0, crate::problems::ToyKind::Linear);
        assert!(matches!(reference_solution(&p, 0.1, 16), Err(HarnessError::Config(_))));
    }

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
