//! Unbiased pass@k estimation, per-type accuracy and report rendering.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{SampleResult, SimOutcome};
use crate::TemperatureKey;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("pass@k undefined for n={n}, c={c}, k={k} (need 1 <= k <= n, c <= n)")]
    Domain { n: u64, c: u64, k: u64 },
    #[error("no problem outcomes to aggregate")]
    EmptyInput,
    #[error("k={k} exceeds the sample count n={n} of task `{task_id}`")]
    KExceedsN { task_id: String, n: u64, k: u64 },
    #[error("task `{0}` has no circuit type mapping")]
    UnmappedTaskId(String),
}

/// Probability that at least one of `k` samples drawn without replacement
/// from `n` (of which `c` are correct) passes: `1 - C(n-c, k) / C(n, k)`.
///
/// Evaluated as `1 - prod_{i=n-c+1..=n} (1 - k/i)`, which never forms a
/// binomial coefficient and so stays finite for large `n`.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if k == 0 || k > n || c > n {
        return Err(MetricsError::Domain { n, c, k });
    }
    if c == 0 {
        return Ok(0.0);
    }
    if k > n - c {
        return Ok(1.0);
    }
    if k == 1 {
        return Ok(c as f64 / n as f64);
    }
    let kf = k as f64;
    let miss: f64 = (n - c + 1..=n).map(|i| 1.0 - kf / i as f64).product();
    Ok(1.0 - miss)
}

/// Per-task (n, c) counts at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemOutcome {
    pub task_id: String,
    pub temperature: f64,
    pub n: u64,
    pub c: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_type: Option<String>,
}

/// Mean of per-problem pass@k.
pub fn aggregate_pass_at_k(outcomes: &[ProblemOutcome], k: u64) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut total = 0.0;
    for o in outcomes {
        if k > o.n {
            return Err(MetricsError::KExceedsN { task_id: o.task_id.clone(), n: o.n, k });
        }
        total += pass_at_k(o.n, o.c, k)?;
    }
    Ok(total / outcomes.len() as f64)
}

/// Groups sample results into (task, temperature) outcomes, sorted by
/// temperature then task id.
pub fn outcomes_from_results(results: &[SampleResult]) -> Vec<ProblemOutcome> {
    let mut counts: BTreeMap<(TemperatureKey, &str), (u64, u64)> = BTreeMap::new();
    for r in results {
        let entry = counts.entry((TemperatureKey::new(r.temperature), r.task_id.as_str())).or_default();
        entry.0 += 1;
        if r.sim == SimOutcome::Pass {
            entry.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|((t, task_id), (n, c))| ProblemOutcome {
            task_id: task_id.to_string(),
            temperature: t.value(),
            n,
            c,
            circuit_type: None,
        })
        .collect()
}

/// A percentage held as an integer number of hundredths of a percent, so
/// table arithmetic is exact. Rounding is half away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Percent(i64);

impl Percent {
    pub fn from_hundredths(h: i64) -> Self {
        Percent(h)
    }

    pub fn hundredths(self) -> i64 {
        self.0
    }

    /// `num / den` as a fraction of one, rounded to 0.01%.
    pub fn from_ratio(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
        let scaled = num.abs() * 10_000;
        let q = (2 * scaled + den) / (2 * den);
        Percent((num.signum() * q) as i64)
    }

    pub fn from_fraction(x: f64) -> Self {
        Percent((x * 10_000.0).round() as i64)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Difference between two success ratios, rounded once at the end.
    pub fn ratio_difference(s1: u64, t1: u64, s2: u64, t2: u64) -> Self {
        let num = s1 as i128 * t2 as i128 - s2 as i128 * t1 as i128;
        Percent::from_ratio(num, t1 as i128 * t2 as i128)
    }

    /// Rendered with an explicit sign, e.g. `+22.48%` or `-0.95%`.
    pub fn signed(self) -> String {
        let sign = if self.0 < 0 { '-' } else { '+' };
        format!("{sign}{}", Percent(self.0.abs()))
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}%", abs / 100, abs % 100)
    }
}

/// One row of the per-circuit-type table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeRow {
    pub circuit_type: String,
    pub problems: u64,
    pub tries: u64,
    pub successes: u64,
}

impl TypeRow {
    pub fn accuracy(&self) -> Percent {
        if self.tries == 0 {
            return Percent(0);
        }
        Percent::from_ratio(self.successes as i128, self.tries as i128)
    }
}

/// Per-type problems, tries (all samples at all temperatures) and passes.
/// Rows are sorted by type name.
pub fn accuracy_by_type(
    results: &[SampleResult],
    type_map: &HashMap<String, String>,
) -> Result<Vec<TypeRow>, MetricsError> {
    struct Acc<'a> {
        tasks: BTreeSet<&'a str>,
        tries: u64,
        successes: u64,
    }
    let mut by_type: BTreeMap<&str, Acc<'_>> = BTreeMap::new();
    for r in results {
        let ty = type_map.get(&r.task_id).ok_or_else(|| MetricsError::UnmappedTaskId(r.task_id.clone()))?;
        let acc = by_type.entry(ty.as_str()).or_insert_with(|| Acc { tasks: BTreeSet::new(), tries: 0, successes: 0 });
        acc.tasks.insert(r.task_id.as_str());
        acc.tries += 1;
        if r.sim == SimOutcome::Pass {
            acc.successes += 1;
        }
    }
    Ok(by_type
        .into_iter()
        .map(|(ty, acc)| TypeRow {
            circuit_type: ty.to_string(),
            problems: acc.tasks.len() as u64,
            tries: acc.tries,
            successes: acc.successes,
        })
        .collect())
}

/// Aggregate pass@k for one temperature of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRow {
    pub temperature: f64,
    pub problems: u64,
    /// k -> mean pass@k in `[0, 1]`.
    pub pass_at_k: BTreeMap<u64, f64>,
}

/// Everything reported for one model or run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub temperatures: Vec<TemperatureRow>,
    #[serde(default)]
    pub by_type: Vec<TypeRow>,
}

impl RunReport {
    /// Aggregates results into per-temperature pass@k. Problems with fewer
    /// than `k` samples are left out of that k's mean with a warning.
    pub fn from_results(
        label: impl Into<String>,
        results: &[SampleResult],
        ks: &[u64],
        type_map: Option<&HashMap<String, String>>,
    ) -> Result<Self, MetricsError> {
        let label = label.into();
        let outcomes = outcomes_from_results(results);
        let mut per_temp: BTreeMap<TemperatureKey, Vec<ProblemOutcome>> = BTreeMap::new();
        for o in outcomes {
            per_temp.entry(TemperatureKey::new(o.temperature)).or_default().push(o);
        }
        let mut temperatures = Vec::new();
        for (t, outs) in per_temp {
            let mut pass = BTreeMap::new();
            for &k in ks {
                let eligible: Vec<ProblemOutcome> = outs.iter().filter(|o| o.n >= k).cloned().collect();
                let skipped = outs.len() - eligible.len();
                if skipped > 0 {
                    log::warn!(
                        "{label}: t={}: {skipped} problem(s) have fewer than {k} samples; excluded from pass@{k}",
                        t.value()
                    );
                }
                if !eligible.is_empty() {
                    pass.insert(k, aggregate_pass_at_k(&eligible, k)?);
                }
            }
            temperatures.push(TemperatureRow { temperature: t.value(), problems: outs.len() as u64, pass_at_k: pass });
        }
        let by_type = match type_map {
            Some(map) => accuracy_by_type(results, map)?,
            None => Vec::new(),
        };
        Ok(RunReport { label, temperatures, by_type })
    }

    fn row(&self, t: TemperatureKey) -> Option<&TemperatureRow> {
        self.temperatures.iter().find(|r| TemperatureKey::new(r.temperature) == t)
    }

    /// Best pass@k over all temperatures, per k.
    pub fn best(&self) -> BTreeMap<u64, f64> {
        let mut best: BTreeMap<u64, f64> = BTreeMap::new();
        for row in &self.temperatures {
            for (&k, &v) in &row.pass_at_k {
                let e = best.entry(k).or_insert(v);
                if v > *e {
                    *e = v;
                }
            }
        }
        best
    }
}

/// Improvement of the primary run over another run at one temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub label: String,
    pub baseline: String,
    pub temperature: f64,
    pub deltas: BTreeMap<u64, Percent>,
}

/// Per-type accuracy of every run side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeComparisonRow {
    pub circuit_type: String,
    pub problems: u64,
    pub tries: u64,
    pub successes: Vec<Option<u64>>,
    pub accuracy: Vec<Option<Percent>>,
    /// First run minus second, from the exact ratios.
    pub difference: Option<Percent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Plain,
    Markdown,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain" => Ok(ReportFormat::Plain),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format `{other}` (plain, markdown, json)")),
        }
    }
}

/// The full evaluation report. The first run is the primary one; the
/// others are baselines it is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<u64>,
    pub runs: Vec<RunReport>,
}

impl EvalReport {
    pub fn new(ks: &[u64], runs: Vec<RunReport>) -> Self {
        let ks: BTreeSet<u64> = ks.iter().copied().collect();
        EvalReport { ks: ks.into_iter().collect(), runs }
    }

    fn temperatures(&self) -> Vec<TemperatureKey> {
        let set: BTreeSet<TemperatureKey> =
            self.runs.iter().flat_map(|r| r.temperatures.iter().map(|t| TemperatureKey::new(t.temperature))).collect();
        set.into_iter().collect()
    }

    /// Primary minus each baseline, as a difference of the displayed
    /// percentages.
    pub fn delta_rows(&self) -> Vec<DeltaRow> {
        let Some((primary, baselines)) = self.runs.split_first() else {
            return Vec::new();
        };
        let mut rows = Vec::new();
        for base in baselines {
            for t in self.temperatures() {
                let (Some(p), Some(b)) = (primary.row(t), base.row(t)) else {
                    continue;
                };
                let deltas = self
                    .ks
                    .iter()
                    .filter_map(|k| {
                        let (pv, bv) = (p.pass_at_k.get(k)?, b.pass_at_k.get(k)?);
                        let d = Percent::from_fraction(*pv).0 - Percent::from_fraction(*bv).0;
                        Some((*k, Percent(d)))
                    })
                    .collect();
                rows.push(DeltaRow {
                    label: primary.label.clone(),
                    baseline: base.label.clone(),
                    temperature: t.value(),
                    deltas,
                });
            }
        }
        rows
    }

    pub fn type_rows(&self) -> Vec<TypeComparisonRow> {
        let types: BTreeSet<&str> =
            self.runs.iter().flat_map(|r| r.by_type.iter().map(|t| t.circuit_type.as_str())).collect();
        types
            .into_iter()
            .map(|ty| {
                let per_run: Vec<Option<&TypeRow>> =
                    self.runs.iter().map(|r| r.by_type.iter().find(|t| t.circuit_type == ty)).collect();
                let first = per_run.iter().flatten().next().expect("type present in some run");
                let difference = match (per_run.first(), per_run.get(1)) {
                    (Some(Some(a)), Some(Some(b))) if a.tries > 0 && b.tries > 0 => {
                        Some(Percent::ratio_difference(a.successes, a.tries, b.successes, b.tries))
                    }
                    _ => None,
                };
                TypeComparisonRow {
                    circuit_type: ty.to_string(),
                    problems: first.problems,
                    tries: first.tries,
                    successes: per_run.iter().map(|r| r.map(|t| t.successes)).collect(),
                    accuracy: per_run.iter().map(|r| r.map(TypeRow::accuracy)).collect(),
                    difference,
                }
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn fmt_pct(v: Option<&f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| Percent::from_fraction(*v).to_string())
}

struct Table {
    title: String,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn markdown(&self, out: &mut String) {
        out.push_str(&format!("## {}\n\n", self.title));
        out.push_str(&format!("| {} |\n", self.headers.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(self.headers.len())));
        for row in &self.rows {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        out.push('\n');
    }

    fn plain(&self, out: &mut String) {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            format!("{}\n", padded.join("  ").trim_end())
        };
        out.push_str(&self.title);
        out.push('\n');
        out.push_str(&line(&self.headers));
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out.push('\n');
    }
}

impl EvalReport {
    fn tables(&self) -> Vec<Table> {
        let mut tables = Vec::new();
        let k_headers = |prefix: &str| -> Vec<String> { self.ks.iter().map(|k| format!("{prefix}{k}")).collect() };

        let mut summary = Table {
            title: "pass@k by temperature".to_string(),
            headers: ["Run", "Temperature"].map(String::from).into_iter().chain(k_headers("pass@")).collect(),
            rows: Vec::new(),
        };
        for run in &self.runs {
            for row in &run.temperatures {
                let mut cells = vec![run.label.clone(), row.temperature.to_string()];
                cells.extend(self.ks.iter().map(|k| fmt_pct(row.pass_at_k.get(k))));
                summary.rows.push(cells);
            }
        }
        tables.push(summary);

        let deltas = self.delta_rows();
        if !deltas.is_empty() {
            let mut t = Table {
                title: "Improvement over baseline".to_string(),
                headers: ["Run", "Baseline", "Temperature"]
                    .map(String::from)
                    .into_iter()
                    .chain(k_headers("k="))
                    .collect(),
                rows: Vec::new(),
            };
            for d in deltas {
                let mut cells = vec![d.label, d.baseline, d.temperature.to_string()];
                cells.extend(self.ks.iter().map(|k| d.deltas.get(k).map_or("-".to_string(), |p| p.signed())));
                t.rows.push(cells);
            }
            tables.push(t);
        }

        let type_rows = self.type_rows();
        if !type_rows.is_empty() {
            let mut headers: Vec<String> = ["Circuit type", "Problems", "Tries"].map(String::from).into();
            headers.extend(self.runs.iter().map(|r| format!("{} successes", r.label)));
            headers.extend(self.runs.iter().map(|r| format!("{} accuracy", r.label)));
            if self.runs.len() >= 2 {
                headers.push("Difference".to_string());
            }
            let mut t = Table { title: "Accuracy by circuit type".to_string(), headers, rows: Vec::new() };
            for row in type_rows {
                let mut cells = vec![row.circuit_type.clone(), row.problems.to_string(), row.tries.to_string()];
                cells.extend(row.successes.iter().map(|s| s.map_or("-".to_string(), |s| s.to_string())));
                cells.extend(row.accuracy.iter().map(|a| a.map_or("-".to_string(), |a| a.to_string())));
                if self.runs.len() >= 2 {
                    cells.push(row.difference.map_or("-".to_string(), Percent::signed));
                }
                t.rows.push(cells);
            }
            tables.push(t);
        }

        if self.runs.len() >= 2 {
            let mut t = Table {
                title: "Comparison with other runs".to_string(),
                headers: ["Run", "Temperature"].map(String::from).into_iter().chain(k_headers("pass@")).collect(),
                rows: Vec::new(),
            };
            let primary = &self.runs[0];
            for row in &primary.temperatures {
                let mut cells = vec![primary.label.clone(), row.temperature.to_string()];
                cells.extend(self.ks.iter().map(|k| fmt_pct(row.pass_at_k.get(k))));
                t.rows.push(cells);
            }
            for other in &self.runs[1..] {
                let best = other.best();
                let mut cells = vec![other.label.clone(), "best".to_string()];
                cells.extend(self.ks.iter().map(|k| fmt_pct(best.get(k))));
                t.rows.push(cells);
            }
            tables.push(t);
        }
        tables
    }
}

/// Renders the report. Ordering is fixed: temperatures and k ascending,
/// circuit types alphabetical.
pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => {
            let mut out = String::from("# Evaluation report\n\n");
            for t in report.tables() {
                t.markdown(&mut out);
            }
            out
        }
        ReportFormat::Plain => {
            let mut out = String::new();
            for t in report.tables() {
                t.plain(&mut out);
            }
            out
        }
    }
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        assert_eq!(pass_at_k(20, 0, 1).unwrap(), 0.0);
        assert_eq!(pass_at_k(20, 20, 5).unwrap(), 1.0);
        assert_eq!(pass_at_k(20, 5, 1).unwrap(), 0.25);
        assert!((pass_at_k(20, 5, 10).unwrap() - (1.0 - 3003.0 / 184756.0)).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(pass_at_k(5, 1, 0).is_err());
        assert!(pass_at_k(5, 1, 6).is_err());
        assert!(pass_at_k(5, 6, 1).is_err());
        assert!(pass_at_k(0, 0, 1).is_err());
    }

    #[test]
    fn large_n_stays_finite() {
        let v = pass_at_k(200, 3, 100).unwrap();
        assert!(v.is_finite() && v > 0.0 && v < 1.0);
    }

    #[test]
    fn aggregate() {
        let o = |id: &str, n, c| ProblemOutcome { task_id: id.into(), temperature: 0.2, n, c, circuit_type: None };
        assert_eq!(aggregate_pass_at_k(&[o("a", 4, 1), o("b", 4, 3)], 1).unwrap(), 0.5);
        assert_eq!(aggregate_pass_at_k(&[o("a", 20, 0), o("b", 20, 0)], 10).unwrap(), 0.0);
        assert_eq!(aggregate_pass_at_k(&[], 1), Err(MetricsError::EmptyInput));
        assert!(matches!(aggregate_pass_at_k(&[o("a", 20, 0), o("b", 3, 0)], 5), Err(MetricsError::KExceedsN { .. })));
    }

    #[test]
    fn percent_rounding() {
        assert_eq!(Percent::from_ratio(95, 240).to_string(), "39.58%");
        assert_eq!(Percent::from_ratio(61, 1560).to_string(), "3.91%");
        assert_eq!(Percent::from_ratio(1, 420).to_string(), "0.24%");
        assert_eq!(Percent::from_ratio(317, 600).to_string(), "52.83%");
        // exact half rounds up
        assert_eq!(Percent::from_ratio(51, 480).to_string(), "10.63%");
        assert_eq!(Percent::ratio_difference(1, 420, 5, 420).signed(), "-0.95%");
        assert_eq!(Percent::from_hundredths(2248).signed(), "+22.48%");
        assert_eq!(Percent::from_hundredths(0).signed(), "+0.00%");
    }

    fn run(label: &str, cells: &[(f64, [f64; 3])]) -> RunReport {
        RunReport {
            label: label.into(),
            temperatures: cells
                .iter()
                .map(|(t, v)| TemperatureRow {
                    temperature: *t,
                    problems: 143,
                    pass_at_k: [1, 5, 10].into_iter().zip(v.iter().copied()).collect(),
                })
                .collect(),
            by_type: Vec::new(),
        }
    }

    #[test]
    fn delta_row_rendering() {
        let report = EvalReport::new(
            &[1, 5, 10],
            vec![run("proposed", &[(0.2, [0.4059, 0.4342, 0.4424])]), run("base", &[(0.2, [0.1811, 0.3486, 0.4119])])],
        );
        let md = render_report(&report, ReportFormat::Markdown);
        assert!(md.contains("| proposed | base | 0.2 | +22.48% | +8.56% | +3.05% |"), "{md}");
    }

    #[test]
    fn single_temperature_markdown_shape() {
        let report = EvalReport::new(&[10, 1, 5], vec![run("m", &[(0.5, [0.1, 0.2, 0.3])])]);
        let md = render_report(&report, ReportFormat::Markdown);
        assert!(md.contains("| Run | Temperature | pass@1 | pass@5 | pass@10 |"));
        assert!(md.contains("| m | 0.5 | 10.00% | 20.00% | 30.00% |"));
        let plain = render_report(&report, ReportFormat::Plain);
        assert!(plain.contains("30.00%"));
    }

    #[test]
    fn json_round_trip() {
        let mut r = run("proposed", &[(0.2, [0.4059, 0.4342, 0.4424]), (0.8, [0.1993, 0.4244, 0.5064])]);
        r.by_type.push(TypeRow { circuit_type: "fsm".into(), problems: 26, tries: 1560, successes: 61 });
        let report = EvalReport::new(&[1, 5, 10], vec![r]);
        let text = render_report(&report, ReportFormat::Json);
        assert_eq!(EvalReport::from_json(&text).unwrap(), report);
    }
}
