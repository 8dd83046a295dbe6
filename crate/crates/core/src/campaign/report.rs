use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{AttackRecord, RecordStatus};

/// Summary of all records at one budget. Means skip failed records and
/// records without the relevant field.
#[derive(Clone, Debug, PartialEq)]
pub struct BudgetAggregate {
    pub budget: usize,
    pub total: usize,
    pub failed: usize,
    pub mean_fitness_before: Option<f64>,
    pub mean_fitness_after: Option<f64>,
    pub mean_metric_after: Option<f64>,
    pub median_metric_after: Option<f64>,
    pub accuracy_after: Option<f64>,
    pub success_rate: Option<f64>,
    pub mean_realized_marks: Option<f64>,
    pub mean_evaluations: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Groups records by budget, ascending.
pub fn aggregate(records: &[AttackRecord]) -> Vec<BudgetAggregate> {
    let mut by_budget: BTreeMap<usize, Vec<&AttackRecord>> = BTreeMap::new();
    for r in records {
        by_budget.entry(r.budget).or_default().push(r);
    }
    by_budget
        .into_iter()
        .map(|(budget, rs)| {
            let ok: Vec<&AttackRecord> = rs.iter().copied().filter(|r| r.status == RecordStatus::Ok).collect();
            let col = |f: fn(&AttackRecord) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
            let metric_after = col(|r| r.metric_after);
            let correct = col(|r| r.correct_after.map(|c| if c { 1.0 } else { 0.0 }));
            BudgetAggregate {
                budget,
                total: rs.len(),
                failed: rs.len() - ok.len(),
                mean_fitness_before: mean(&col(|r| r.fitness_before)),
                mean_fitness_after: mean(&col(|r| r.fitness_after)),
                mean_metric_after: mean(&metric_after),
                median_metric_after: median(&metric_after),
                accuracy_after: mean(&correct),
                success_rate: mean(&ok.iter().map(|r| if r.success() { 1.0 } else { 0.0 }).collect::<Vec<_>>()),
                mean_realized_marks: mean(&col(|r| Some(r.realized_marks as f64))),
                mean_evaluations: mean(&col(|r| Some(r.evaluations as f64))),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn aggregates_csv(aggs: &[BudgetAggregate]) -> String {
    let mut out = String::from(
        "budget,total,failed,mean_fitness_before,mean_fitness_after,mean_metric_after,median_metric_after,accuracy_after,success_rate,mean_realized_marks,mean_evaluations\n",
    );
    for a in aggs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            a.budget,
            a.total,
            a.failed,
            cell(a.mean_fitness_before),
            cell(a.mean_fitness_after),
            cell(a.mean_metric_after),
            cell(a.median_metric_after),
            cell(a.accuracy_after),
            cell(a.success_rate),
            cell(a.mean_realized_marks),
            cell(a.mean_evaluations),
        );
    }
    out
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no records at budget 0; nothing to normalize against")]
    NoBaseline,
    #[error("no records")]
    Empty,
}

/// One budget's headline value next to its ratio to the budget-0 value.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub budget: usize,
    /// Mean metric for generate campaigns, accuracy for classify campaigns.
    pub value: Option<f64>,
    /// `value / baseline`; `None` when either is missing or the baseline is 0.
    pub normalized: Option<f64>,
}

/// Headline value per budget, normalized to the unperturbed baseline.
pub fn report(records: &[AttackRecord]) -> Result<Vec<ReportRow>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let aggs = aggregate(records);
    let headline = |a: &BudgetAggregate| a.mean_metric_after.or(a.accuracy_after);
    let base = aggs
        .iter()
        .find(|a| a.budget == 0)
        .ok_or(ReportError::NoBaseline)
        .map(headline)?;
    Ok(aggs
        .iter()
        .map(|a| {
            let value = headline(a);
            let normalized = match (value, base) {
                (Some(v), Some(b)) if b != 0.0 => Some(v / b),
                _ => None,
            };
            ReportRow {
                budget: a.budget,
                value,
                normalized,
            }
        })
        .collect())
}

pub fn normalized_report(records: &[AttackRecord]) -> Result<String, ReportError> {
    let mut out = String::from("budget,value,normalized\n");
    for row in report(records)? {
        let _ = writeln!(out, "{},{},{}", row.budget, cell(row.value), cell(row.normalized));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, budget: usize, metric_after: f64, fitness: (f64, f64)) -> AttackRecord {
        AttackRecord {
            id: id.into(),
            budget,
            status: RecordStatus::Ok,
            error: None,
            original: "x".into(),
            perturbed: "x".into(),
            realized_marks: budget,
            genome_len: budget + 1,
            fitness_before: Some(fitness.0),
            fitness_after: Some(fitness.1),
            output_before: None,
            output_after: None,
            metric: None,
            metric_before: None,
            metric_after: Some(metric_after),
            label: None,
            correct_before: None,
            correct_after: None,
            generations: 0,
            evaluations: 1,
        }
    }

    #[test]
    fn aggregates_and_normalization() {
        let rs = vec![
            rec("a", 0, 100.0, (1.0, 1.0)),
            rec("b", 0, 50.0, (1.0, 1.0)),
            rec("a", 1, 40.0, (1.0, 0.5)),
            rec("b", 1, 20.0, (1.0, 1.0)),
        ];
        let aggs = aggregate(&rs);
        assert_eq!(aggs.len(), 2);
        assert_eq!(aggs[0].mean_metric_after, Some(75.0));
        assert_eq!(aggs[1].median_metric_after, Some(30.0));
        assert_eq!(aggs[1].success_rate, Some(0.5));
        let rows = report(&rs).unwrap();
        assert_eq!(rows[1].normalized, Some(0.4));
        let csv = normalized_report(&rs).unwrap();
        assert_eq!(csv, "budget,value,normalized\n0,75.000000,1.000000\n1,30.000000,0.400000\n");
        assert!(aggregates_csv(&aggs).lines().nth(1).unwrap().starts_with("0,2,0,1.000000,"));
    }

    #[test]
    fn zero_baseline_leaves_cell_empty() {
        let rs = vec![rec("a", 0, 0.0, (0.0, 0.0)), rec("a", 2, 3.0, (0.0, 0.0))];
        assert_eq!(normalized_report(&rs).unwrap(), "budget,value,normalized\n0,0.000000,\n2,3.000000,\n");
    }

    #[test]
    fn missing_baseline_is_an_error() {
        assert!(matches!(report(&[rec("a", 1, 1.0, (0.0, 0.0))]), Err(ReportError::NoBaseline)));
        assert!(matches!(report(&[]), Err(ReportError::Empty)));
    }

    #[test]
    fn failed_records_are_counted_not_averaged() {
        let mut bad = rec("b", 0, 0.0, (0.0, 0.0));
        bad.status = RecordStatus::Failed;
        let aggs = aggregate(&[rec("a", 0, 10.0, (1.0, 1.0)), bad]);
        assert_eq!((aggs[0].total, aggs[0].failed), (2, 1));
        assert_eq!(aggs[0].mean_metric_after, Some(10.0));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
