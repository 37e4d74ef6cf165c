//! Condition means with t-based confidence intervals and OLS regressions
//! with heteroskedasticity-consistent (HC1) standard errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::experiment::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AvgReward,
    SpeakingConsistency,
    ListeningConsistency,
    BetweenAgentDivergence,
    WithinAgentDivergence,
    SignalingDivergence,
    ActionPredictability,
    MessagePredictability,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::AvgReward,
        Metric::SpeakingConsistency,
        Metric::ListeningConsistency,
        Metric::BetweenAgentDivergence,
        Metric::WithinAgentDivergence,
        Metric::SignalingDivergence,
        Metric::ActionPredictability,
        Metric::MessagePredictability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AvgReward => "avg_reward",
            Metric::SpeakingConsistency => "speaking_consistency",
            Metric::ListeningConsistency => "listening_consistency",
            Metric::BetweenAgentDivergence => "between_agent_divergence",
            Metric::WithinAgentDivergence => "within_agent_divergence",
            Metric::SignalingDivergence => "signaling_divergence",
            Metric::ActionPredictability => "action_predictability",
            Metric::MessagePredictability => "message_predictability",
        }
    }

    pub fn of(self, row: &ResultRow) -> f64 {
        match self {
            Metric::AvgReward => row.avg_reward,
            Metric::SpeakingConsistency => row.speaking_consistency,
            Metric::ListeningConsistency => row.listening_consistency,
            Metric::BetweenAgentDivergence => row.between_agent_divergence,
            Metric::WithinAgentDivergence => row.within_agent_divergence,
            Metric::SignalingDivergence => row.signaling_divergence,
            Metric::ActionPredictability => row.action_predictability,
            Metric::MessagePredictability => row.message_predictability,
        }
    }
}

/// Mean of a group with a 95% Student-t interval when `n >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// `None` when the group has a single value.
    pub half_width: Option<f64>,
}

impl CiSummary {
    pub fn low(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean - h)
    }

    pub fn high(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean + h)
    }
}

pub fn aggregate_ci(values: &[f64]) -> Result<CiSummary> {
    let n = values.len();
    if n == 0 {
        return Err(Error::NoData("cannot summarize an empty group".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(CiSummary {
            n,
            mean,
            sd: 0.0,
            half_width: None,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok(CiSummary {
        n,
        mean,
        sd,
        half_width: Some(t * sd / (n as f64).sqrt()),
    })
}

/// Identifies one experimental condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionKey {
    pub experiment_id: String,
    pub topology_kind: String,
    pub topology_param: Option<f64>,
    pub supervision_rate: f64,
}

impl ConditionKey {
    fn of(row: &ResultRow) -> Self {
        ConditionKey {
            experiment_id: row.experiment_id.clone(),
            topology_kind: row.topology_kind.clone(),
            topology_param: row.topology_param,
            supervision_rate: row.supervision_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub key: ConditionKey,
    pub n_runs: usize,
    pub mean_avg_degree: f64,
    pub mean_global_edges: f64,
    /// Indexed like [`Metric::ALL`].
    pub metrics: Vec<CiSummary>,
}

impl ConditionSummary {
    pub fn metric(&self, m: Metric) -> &CiSummary {
        let i = Metric::ALL.iter().position(|&x| x == m).expect("known metric");
        &self.metrics[i]
    }
}

/// Groups rows by condition in order of first appearance.
pub fn group_by_condition(rows: &[ResultRow]) -> Vec<(ConditionKey, Vec<&ResultRow>)> {
    let mut groups: Vec<(ConditionKey, Vec<&ResultRow>)> = Vec::new();
    for row in rows {
        let key = ConditionKey::of(row);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    groups
}

pub fn summarize(rows: &[ResultRow]) -> Result<Vec<ConditionSummary>> {
    if rows.is_empty() {
        return Err(Error::NoData("no result rows to summarize".into()));
    }
    group_by_condition(rows)
        .into_iter()
        .map(|(key, members)| {
            let n = members.len() as f64;
            let metrics = Metric::ALL
                .iter()
                .map(|m| aggregate_ci(&members.iter().map(|r| m.of(r)).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>>>()?;
            if members.len() < 2 {
                log::warn!("condition {key:?} has a single run; confidence interval unavailable");
            }
            Ok(ConditionSummary {
                key,
                n_runs: members.len(),
                mean_avg_degree: members.iter().map(|r| r.realized_avg_degree).sum::<f64>() / n,
                mean_global_edges: members.iter().map(|r| r.n_global_edges as f64).sum::<f64>() / n,
                metrics,
            })
        })
        .collect()
}

const KEY_COLUMNS: [&str; 7] = [
    "experiment_id",
    "topology_kind",
    "topology_param",
    "supervision_rate",
    "n_runs",
    "mean_avg_degree",
    "mean_global_edges",
];

fn summary_header() -> Vec<String> {
    let mut cols: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    for m in Metric::ALL {
        for suffix in ["mean", "ci_low", "ci_high"] {
            cols.push(format!("{}_{suffix}", m.name()));
        }
    }
    cols
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary_csv(path: &Path, rows: &[ConditionSummary]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::NoData(format!("nothing to write to {}", path.display())));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(summary_header()).map_err(|e| Error::csv(path, e))?;
    for s in rows {
        let mut rec = vec![
            s.key.experiment_id.clone(),
            s.key.topology_kind.clone(),
            opt_field(s.key.topology_param),
            s.key.supervision_rate.to_string(),
            s.n_runs.to_string(),
            s.mean_avg_degree.to_string(),
            s.mean_global_edges.to_string(),
        ];
        for ci in &s.metrics {
            rec.push(ci.mean.to_string());
            rec.push(opt_field(ci.low()));
            rec.push(opt_field(ci.high()));
        }
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<ConditionSummary>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != summary_header() {
        return Err(Error::Parse(format!("{} is not a summary table", path.display())));
    }
    let bad = |what: &str| Error::Parse(format!("{}: bad {what}", path.display()));
    let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
    let opt = |s: &str, what: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, what).map(Some)
        }
    };
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let n_runs: usize = rec[4].parse().map_err(|_| bad("n_runs"))?;
        let metrics = Metric::ALL
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let base = KEY_COLUMNS.len() + 3 * i;
                let mean = num(&rec[base], m.name())?;
                let low = opt(&rec[base + 1], m.name())?;
                Ok(CiSummary {
                    n: n_runs,
                    mean,
                    sd: f64::NAN,
                    half_width: low.map(|l| mean - l),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(ConditionSummary {
            key: ConditionKey {
                experiment_id: rec[0].to_string(),
                topology_kind: rec[1].to_string(),
                topology_param: opt(&rec[2], "topology_param")?,
                supervision_rate: num(&rec[3], "supervision_rate")?,
            },
            n_runs,
            mean_avg_degree: num(&rec[5], "mean_avg_degree")?,
            mean_global_edges: num(&rec[6], "mean_global_edges")?,
            metrics,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub robust_se: Vec<f64>,
    pub classical_se: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub n: usize,
}

impl RegressionResult {
    pub fn term(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == name)
    }
}

/// Householder QR of an `n x k` row-major matrix. Returns the upper
/// triangular `R` (k x k) and `Q^T y`.
fn householder_qr(x: &[Vec<f64>], y: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = x.len();
    let k = x[0].len();
    let mut a: Vec<Vec<f64>> = x.to_vec();
    let mut b = y.to_vec();
    let scale = x
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for j in 0..k {
        let norm = (j..n).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
        if norm <= 1e-10 * scale * (n as f64).sqrt() {
            return Err(Error::SingularDesign { column: j });
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|i| a[i][j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in j..k {
                let dot: f64 = (j..n).map(|i| v[i - j] * a[i][c]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in j..n {
                    a[i][c] -= f * v[i - j];
                }
            }
            let dot: f64 = (j..n).map(|i| v[i - j] * b[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..n {
                b[i] -= f * v[i - j];
            }
        }
    }
    let r = (0..k).map(|i| a[i][..k].to_vec()).collect();
    Ok((r, b[..k].to_vec()))
}

/// Inverse of an upper triangular matrix.
fn invert_upper(r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = r.len();
    let mut inv = vec![vec![0.0; k]; k];
    for col in 0..k {
        for row in (0..=col).rev() {
            let rhs = if row == col { 1.0 } else { 0.0 };
            let s: f64 = (row + 1..=col).map(|j| r[row][j] * inv[j][col]).sum();
            inv[row][col] = (rhs - s) / r[row][row];
        }
    }
    inv
}

/// Least squares fit of `y` on the columns of `x` (rows are observations,
/// include a constant column for an intercept).
pub fn ols_hc1(terms: &[&str], x: &[Vec<f64>], y: &[f64]) -> Result<RegressionResult> {
    let n = y.len();
    let k = terms.len();
    if x.len() != n || x.iter().any(|row| row.len() != k) {
        return Err(Error::InsufficientData("design matrix shape mismatch".into()));
    }
    if n <= k || n < 4 {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {k} coefficients"
        )));
    }
    if let Some(v) = x.iter().flatten().chain(y).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "regression input",
            detail: v.to_string(),
        });
    }
    let (r, qty) = householder_qr(x, y)?;
    let r_inv = invert_upper(&r);
    let coefficients: Vec<f64> = (0..k)
        .map(|i| (i..k).map(|j| r_inv[i][j] * qty[j]).sum())
        .collect();
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(row, yi)| yi - row.iter().zip(&coefficients).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    // (X'X)^-1 = R^-1 R^-T
    let xtx_inv: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| (i.max(j)..k).map(|l| r_inv[i][l] * r_inv[j][l]).sum())
                .collect()
        })
        .collect();
    // meat = sum_i e_i^2 x_i x_i'
    let mut meat = vec![vec![0.0; k]; k];
    for (row, e) in x.iter().zip(&residuals) {
        let e2 = e * e;
        for i in 0..k {
            for j in 0..k {
                meat[i][j] += e2 * row[i] * row[j];
            }
        }
    }
    let dof = (n - k) as f64;
    let hc1 = n as f64 / dof;
    let sigma2 = residuals.iter().map(|e| e * e).sum::<f64>() / dof;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut robust_se = Vec::with_capacity(k);
    let mut classical_se = Vec::with_capacity(k);
    for i in 0..k {
        let mut v = 0.0;
        for a in 0..k {
            for b in 0..k {
                v += xtx_inv[i][a] * meat[a][b] * xtx_inv[b][i];
            }
        }
        robust_se.push((hc1 * v).max(0.0).sqrt());
        classical_se.push((sigma2 * xtx_inv[i][i]).max(0.0).sqrt());
    }
    let t_stats: Vec<f64> = coefficients
        .iter()
        .zip(&robust_se)
        .map(|(b, se)| if *se > 0.0 { b / se } else { f64::INFINITY * b.signum() })
        .collect();
    let p_values = t_stats
        .iter()
        .map(|t| {
            if t.is_finite() {
                2.0 * (1.0 - normal.cdf(t.abs()))
            } else {
                0.0
            }
        })
        .collect();
    Ok(RegressionResult {
        terms: terms.iter().map(|s| s.to_string()).collect(),
        coefficients,
        robust_se,
        classical_se,
        t_stats,
        p_values,
        residuals,
        n,
    })
}

/// `y ~ 1 + factor + supervision` with HC1 standard errors and
/// normal-approximation p-values.
pub fn ols_robust(y: &[f64], factor: &[f64], supervision: &[f64]) -> Result<RegressionResult> {
    if factor.len() != y.len() || supervision.len() != y.len() {
        return Err(Error::InsufficientData("regression columns differ in length".into()));
    }
    let x: Vec<Vec<f64>> = factor
        .iter()
        .zip(supervision)
        .map(|(&f, &s)| vec![1.0, f, s])
        .collect();
    ols_hc1(&["intercept", "factor", "supervision"], &x, y)
}

/// Explanatory variable of an experiment's regressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    RealizedAvgDegree,
    GlobalConnectionProbability,
}

impl Factor {
    pub fn name(self) -> &'static str {
        match self {
            Factor::RealizedAvgDegree => "realized_avg_degree",
            Factor::GlobalConnectionProbability => "global_connection_probability",
        }
    }

    pub fn of(self, row: &ResultRow) -> f64 {
        match self {
            Factor::RealizedAvgDegree => row.realized_avg_degree,
            Factor::GlobalConnectionProbability => row.topology_param.unwrap_or(0.0),
        }
    }
}

/// Fitted models an experiment calls for, as (response, factor) pairs.
pub fn planned_regressions(experiment_id: &str) -> Vec<(Metric, Factor)> {
    match experiment_id {
        "2" => vec![
            (Metric::SpeakingConsistency, Factor::RealizedAvgDegree),
            (Metric::ListeningConsistency, Factor::RealizedAvgDegree),
        ],
        "3" => vec![
            (Metric::SignalingDivergence, Factor::GlobalConnectionProbability),
            (Metric::BetweenAgentDivergence, Factor::GlobalConnectionProbability),
            (Metric::WithinAgentDivergence, Factor::GlobalConnectionProbability),
        ],
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub experiment_id: String,
    pub response: Metric,
    pub factor: Factor,
    pub result: RegressionResult,
}

/// Fits `response ~ 1 + factor + supervision_rate` on per-run rows.
pub fn fit(rows: &[&ResultRow], response: Metric, factor: Factor) -> Result<RegressionResult> {
    let y: Vec<f64> = rows.iter().map(|r| response.of(r)).collect();
    let f: Vec<f64> = rows.iter().map(|r| factor.of(r)).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.supervision_rate).collect();
    ols_robust(&y, &f, &s)
}

pub fn write_regression_csv(path: &Path, models: &[FittedModel]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "experiment_id",
        "response",
        "factor",
        "n",
        "term",
        "estimate",
        "robust_se",
        "t",
        "p_value",
    ])
    .map_err(|e| Error::csv(path, e))?;
    for m in models {
        let r = &m.result;
        for i in 0..r.terms.len() {
            w.write_record([
                m.experiment_id.clone(),
                m.response.name().to_string(),
                m.factor.name().to_string(),
                r.n.to_string(),
                r.terms[i].clone(),
                r.coefficients[i].to_string(),
                r.robust_se[i].to_string(),
                r.t_stats[i].to_string(),
                r.p_values[i].to_string(),
            ])
            .map_err(|e| Error::csv(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Files produced by [`analyze`].
#[derive(Debug, Clone, Default)]
pub struct AnalysisOutputs {
    pub summaries: Vec<PathBuf>,
    pub regressions: Vec<PathBuf>,
    pub models: Vec<FittedModel>,
}

/// Writes `summary_exp<id>.csv` for every experiment present in `rows`,
/// and `regression_exp<id>.csv` where the experiment defines regressions.
pub fn analyze(rows: &[ResultRow], out_dir: &Path) -> Result<AnalysisOutputs> {
    if rows.is_empty() {
        return Err(Error::NoData("results table is empty".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut ids: Vec<&str> = Vec::new();
    for r in rows {
        if !ids.contains(&r.experiment_id.as_str()) {
            ids.push(&r.experiment_id);
        }
    }
    let mut outputs = AnalysisOutputs::default();
    for id in ids {
        let subset: Vec<ResultRow> = rows.iter().filter(|r| r.experiment_id == id).cloned().collect();
        let path = out_dir.join(format!("summary_exp{id}.csv"));
        write_summary_csv(&path, &summarize(&subset)?)?;
        outputs.summaries.push(path);

        let plan = planned_regressions(id);
        if plan.is_empty() {
            continue;
        }
        let refs: Vec<&ResultRow> = subset.iter().collect();
        let mut models = Vec::new();
        for (response, factor) in plan {
            match fit(&refs, response, factor) {
                Ok(result) => models.push(FittedModel {
                    experiment_id: id.to_string(),
                    response,
                    factor,
                    result,
                }),
                Err(e) => log::warn!("experiment {id}: cannot fit {}: {e}", response.name()),
            }
        }
        if !models.is_empty() {
            let path = out_dir.join(format!("regression_exp{id}.csv"));
            write_regression_csv(&path, &models)?;
            outputs.regressions.push(path);
            outputs.models.extend(models);
        }
    }
    Ok(outputs)
}
