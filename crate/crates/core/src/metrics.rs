//! Unbiased pass@k estimation and aggregation into the result-table shape.
//!
//! The estimator core is generic over the floating-point scalar via
//! [`num_traits::Float`]; the table layer uses the crate-level [`Score`]
//! alias (`f64`). Percentages are kept at full precision internally and
//! rounded to one decimal only when rendered.

use std::collections::BTreeMap;

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

use crate::model::{EvalRecord, ModelError, PassKTable, Suite};

/// Concrete scalar used by the table and reporting layers.
pub type Score = f64;

/// pass@k parameters: which k values to report and how many samples are
/// generated per problem.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PassKParams {
    pub ks: Vec<u32>,
    pub n: u32,
}

impl Default for PassKParams {
    fn default() -> Self {
        PassKParams {
            ks: vec![1, 5, 10],
            n: 15,
        }
    }
}

impl PassKParams {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.ks.is_empty() {
            return Err(MetricsError::Domain("ks must not be empty".into()));
        }
        if !self.ks.windows(2).all(|w| w[0] < w[1]) {
            return Err(MetricsError::Domain(
                "ks must be strictly increasing".into(),
            ));
        }
        let max_k = *self.ks.last().expect("ks non-empty");
        if self.ks[0] < 1 {
            return Err(MetricsError::Domain("every k must be >= 1".into()));
        }
        if max_k > self.n {
            return Err(MetricsError::Domain(format!(
                "k = {max_k} exceeds n = {}",
                self.n
            )));
        }
        Ok(())
    }
}

/// Probability that at least one of k samples drawn (without replacement)
/// from n generated samples, c of which are correct, passes.
///
/// Computed as `1 - prod_{i=n-c+1..=n} (1 - k/i)`, which avoids the
/// overflow-prone binomial ratio `C(n-c, k) / C(n, k)` while remaining
/// exact in the degenerate cases: the product is empty for `c = 0`
/// (result 0) and contains a zero factor whenever `k > n - c` (result 1).
pub fn pass_at_k<F: Float + FromPrimitive>(n: u32, c: u32, k: u32) -> Result<F, MetricsError> {
    if c > n {
        return Err(MetricsError::Domain(format!("c = {c} exceeds n = {n}")));
    }
    if k < 1 || k > n {
        return Err(MetricsError::Domain(format!(
            "k = {k} outside [1, n = {n}]"
        )));
    }
    let one = F::one();
    let kf = F::from_u32(k).expect("k fits the scalar");
    let mut miss = one;
    for i in (n - c + 1)..=n {
        let fi = F::from_u32(i).expect("i fits the scalar");
        miss = miss * (one - kf / fi);
    }
    Ok(one - miss)
}

/// Mean pass@k over problems, as a percentage per k.
pub fn aggregate(
    records: &[EvalRecord],
    params: &PassKParams,
) -> Result<BTreeMap<u32, Score>, MetricsError> {
    params.validate()?;
    if records.is_empty() {
        return Err(MetricsError::EmptyRecords);
    }
    let max_k = *params.ks.last().expect("ks non-empty");
    for r in records {
        if r.n() < max_k {
            return Err(MetricsError::KExceedsN {
                problem_id: r.problem_id().to_string(),
                k: max_k,
                n: r.n(),
            });
        }
    }
    let mut out = BTreeMap::new();
    for &k in &params.ks {
        let mut sum: Score = 0.0;
        for r in records {
            sum += pass_at_k::<Score>(r.n(), r.c(), k)?;
        }
        out.insert(k, sum / records.len() as Score * 100.0);
    }
    Ok(out)
}

/// Builds the two-suite result table from per-suite record lists.
///
/// A suite with no records is allowed only when `allow_empty_suite` is
/// set, in which case its row is omitted.
pub fn build_table(
    model_label: &str,
    per_suite: &BTreeMap<Suite, Vec<EvalRecord>>,
    params: &PassKParams,
    allow_empty_suite: bool,
) -> Result<PassKTable, MetricsError> {
    let mut rows = BTreeMap::new();
    for suite in [Suite::Machine, Suite::Human] {
        match per_suite.get(&suite) {
            Some(records) if !records.is_empty() => {
                rows.insert(suite, aggregate(records, params)?);
            }
            _ if allow_empty_suite => {}
            _ => {
                return Err(MetricsError::Domain(format!(
                    "suite {suite} has no records (pass allow_empty_suite to skip it)"
                )))
            }
        }
    }
    Ok(PassKTable::new(model_label, rows)?)
}

/// Cellwise difference `a - b` between two tables of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable {
    pub label_a: String,
    pub label_b: String,
    pub rows: BTreeMap<Suite, BTreeMap<u32, Score>>,
    pub max_delta: Score,
    pub max_cell: (Suite, u32),
}

pub fn compare_tables(a: &PassKTable, b: &PassKTable) -> Result<DeltaTable, MetricsError> {
    let shape = |t: &PassKTable| -> Vec<(Suite, Vec<u32>)> {
        t.rows
            .iter()
            .map(|(s, cells)| (*s, cells.keys().copied().collect()))
            .collect()
    };
    if shape(a) != shape(b) {
        return Err(MetricsError::ShapeMismatch {
            a: format!("{:?}", shape(a)),
            b: format!("{:?}", shape(b)),
        });
    }
    let mut rows = BTreeMap::new();
    let mut max_delta = Score::NEG_INFINITY;
    let mut max_cell = None;
    for (suite, cells_a) in &a.rows {
        let cells_b = &b.rows[suite];
        let mut deltas = BTreeMap::new();
        for (k, va) in cells_a {
            let d = va - cells_b[k];
            if d > max_delta {
                max_delta = d;
                max_cell = Some((*suite, *k));
            }
            deltas.insert(*k, d);
        }
        rows.insert(*suite, deltas);
    }
    let max_cell = max_cell.ok_or_else(|| MetricsError::Domain("empty tables".into()))?;
    Ok(DeltaTable {
        label_a: a.model_label.clone(),
        label_b: b.model_label.clone(),
        rows,
        max_delta,
        max_cell,
    })
}

fn k_columns(rows: &BTreeMap<Suite, BTreeMap<u32, Score>>) -> Vec<u32> {
    let mut ks: Vec<u32> = rows.values().flat_map(|c| c.keys().copied()).collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Aligned plain-text render, one decimal per cell.
pub fn render_table_text(table: &PassKTable) -> String {
    let ks = k_columns(&table.rows);
    let mut out = String::new();
    let suite_width = table
        .rows
        .keys()
        .map(|s| s.label().len())
        .chain(["suite".len()])
        .max()
        .unwrap_or(5);
    out.push_str(&format!("model: {}\n", table.model_label));
    out.push_str(&format!("{:<suite_width$}", "suite"));
    for k in &ks {
        out.push_str(&format!("  {:>8}", format!("pass@{k}")));
    }
    out.push('\n');
    for (suite, cells) in &table.rows {
        out.push_str(&format!("{:<suite_width$}", suite.label()));
        for k in &ks {
            match cells.get(k) {
                Some(v) => out.push_str(&format!("  {:>8}", format!("{v:.1}"))),
                None => out.push_str(&format!("  {:>8}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

/// CSV render with header `model,suite,k,value`, one row per (suite, k).
pub fn render_table_csv(table: &PassKTable) -> String {
    let mut out = String::from("model,suite,k,value\n");
    for (suite, cells) in &table.rows {
        for (k, v) in cells {
            out.push_str(&format!(
                "{},{},{k},{v:.1}\n",
                table.model_label,
                suite.label()
            ));
        }
    }
    out
}

/// Text render of a delta table, with a trailing max-delta summary line.
pub fn render_delta_text(delta: &DeltaTable) -> String {
    let ks = k_columns(&delta.rows);
    let suite_width = delta
        .rows
        .keys()
        .map(|s| s.label().len())
        .chain(["suite".len()])
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    out.push_str(&format!(
        "delta: {} - {}\n",
        delta.label_a, delta.label_b
    ));
    out.push_str(&format!("{:<suite_width$}", "suite"));
    for k in &ks {
        out.push_str(&format!("  {:>8}", format!("pass@{k}")));
    }
    out.push('\n');
    for (suite, cells) in &delta.rows {
        out.push_str(&format!("{:<suite_width$}", suite.label()));
        for k in &ks {
            match cells.get(k) {
                Some(v) => out.push_str(&format!("  {:>8}", format!("{v:+.1}"))),
                None => out.push_str(&format!("  {:>8}", "-")),
            }
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "max delta {:.1} at ({}, pass@{})\n",
        delta.max_delta,
        delta.max_cell.0.label(),
        delta.max_cell.1
    ));
    out
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error("problem '{problem_id}': k = {k} exceeds its n = {n}")]
    KExceedsN { problem_id: String, k: u32, n: u32 },
    #[error("table shapes differ: {a} vs {b}")]
    ShapeMismatch { a: String, b: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, n: u32, c: u32) -> EvalRecord {
        EvalRecord::new(id, n, c).unwrap()
    }

    #[test]
    fn spot_values() {
        let eps = 1e-12;
        assert!((pass_at_k::<f64>(15, 15, 1).unwrap() - 1.0).abs() < eps);
        assert!(pass_at_k::<f64>(15, 0, 10).unwrap().abs() < eps);
        assert!((pass_at_k::<f64>(15, 5, 1).unwrap() - 1.0 / 3.0).abs() < eps);
        assert!((pass_at_k::<f64>(15, 1, 5).unwrap() - 1.0 / 3.0).abs() < eps);
    }

    #[test]
    fn generic_over_scalar() {
        let v32: f32 = pass_at_k(15, 5, 1).unwrap();
        let v64: f64 = pass_at_k(15, 5, 1).unwrap();
        assert!((f64::from(v32) - v64).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert!(pass_at_k::<f64>(10, 11, 1).is_err());
        assert!(pass_at_k::<f64>(10, 5, 0).is_err());
        assert!(pass_at_k::<f64>(10, 5, 11).is_err());
    }

    #[test]
    fn monotone_in_k_and_c() {
        for n in 1..=15u32 {
            for c in 0..=n {
                let mut prev = -1.0f64;
                for k in 1..=n {
                    let v = pass_at_k::<f64>(n, c, k).unwrap();
                    assert!(v >= prev - 1e-12, "n={n} c={c} k={k}");
                    assert!((0.0..=1.0 + 1e-12).contains(&v));
                    prev = v;
                }
            }
            for k in 1..=n {
                let mut prev = -1.0f64;
                for c in 0..=n {
                    let v = pass_at_k::<f64>(n, c, k).unwrap();
                    assert!(v >= prev - 1e-12);
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn aggregate_mean_of_extremes() {
        let records = vec![rec("a", 15, 15), rec("b", 15, 0)];
        let params = PassKParams {
            ks: vec![1],
            n: 15,
        };
        let out = aggregate(&records, &params).unwrap();
        assert!((out[&1] - 50.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_single_record_equals_its_own() {
        let records = vec![rec("a", 15, 7)];
        let params = PassKParams::default();
        let out = aggregate(&records, &params).unwrap();
        for &k in &params.ks {
            let expected = pass_at_k::<f64>(15, 7, k).unwrap() * 100.0;
            assert!((out[&k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_permutation_invariant() {
        let a = vec![rec("a", 15, 3), rec("b", 15, 9), rec("c", 15, 0)];
        let b = vec![a[2].clone(), a[0].clone(), a[1].clone()];
        let params = PassKParams::default();
        assert_eq!(aggregate(&a, &params).unwrap(), aggregate(&b, &params).unwrap());
    }

    #[test]
    fn aggregate_rejects_small_n() {
        let records = vec![rec("a", 5, 2)];
        let params = PassKParams::default();
        assert!(matches!(
            aggregate(&records, &params),
            Err(MetricsError::KExceedsN { .. })
        ));
    }

    #[test]
    fn aggregate_rejects_empty() {
        assert!(matches!(
            aggregate(&[], &PassKParams::default()),
            Err(MetricsError::EmptyRecords)
        ));
    }

    #[test]
    fn delta_of_table_with_itself_is_zero() {
        let mut per_suite = BTreeMap::new();
        per_suite.insert(Suite::Human, vec![rec("a", 15, 7)]);
        per_suite.insert(Suite::Machine, vec![rec("b", 15, 2)]);
        let t = build_table("m", &per_suite, &PassKParams::default(), false).unwrap();
        let d = compare_tables(&t, &t).unwrap();
        assert_eq!(d.max_delta, 0.0);
        assert!(d.rows.values().flat_map(|c| c.values()).all(|v| *v == 0.0));
    }

    #[test]
    fn delta_shape_mismatch() {
        let mut rows_a = BTreeMap::new();
        rows_a.insert(Suite::Human, BTreeMap::from([(1u32, 10.0)]));
        let a = PassKTable::new("a", rows_a).unwrap();
        let mut rows_b = BTreeMap::new();
        rows_b.insert(Suite::Human, BTreeMap::from([(5u32, 10.0)]));
        let b = PassKTable::new("b", rows_b).unwrap();
        assert!(matches!(
            compare_tables(&a, &b),
            Err(MetricsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn headline_delta_renders_23_9() {
        // 44.0 vs 20.1 at (Machine, pass@1)
        let mk = |label: &str, v1: f64, v5: f64, v10: f64| {
            let mut rows = BTreeMap::new();
            rows.insert(
                Suite::Machine,
                BTreeMap::from([(1u32, v1), (5u32, v5), (10u32, v10)]),
            );
            PassKTable::new(label, rows).unwrap()
        };
        let mev = mk("mev", 44.0, 60.1, 63.6);
        let base = mk("baseline", 20.1, 45.4, 55.2);
        let d = compare_tables(&mev, &base).unwrap();
        assert_eq!(d.max_cell, (Suite::Machine, 1));
        let text = render_delta_text(&d);
        assert!(text.contains("max delta 23.9 at (Verilog-Machine, pass@1)"), "{text}");
    }

    #[test]
    fn csv_render_shape() {
        let mut per_suite = BTreeMap::new();
        per_suite.insert(Suite::Human, vec![rec("a", 15, 15)]);
        per_suite.insert(Suite::Machine, vec![rec("b", 15, 0)]);
        let t = build_table("m", &per_suite, &PassKParams::default(), false).unwrap();
        let csv = render_table_csv(&t);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "model,suite,k,value");
        assert_eq!(lines.len(), 1 + 6);
        assert!(lines.contains(&"m,Verilog-Human,1,100.0"));
        assert!(lines.contains(&"m,Verilog-Machine,10,0.0"));
    }

    #[test]
    fn params_validation() {
        assert!(PassKParams { ks: vec![1, 5, 10], n: 15 }.validate().is_ok());
        assert!(PassKParams { ks: vec![5, 1], n: 15 }.validate().is_err());
        assert!(PassKParams { ks: vec![1, 20], n: 15 }.validate().is_err());
        assert!(PassKParams { ks: vec![], n: 15 }.validate().is_err());
    }
}
