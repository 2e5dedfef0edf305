//! Report artifacts derived from a fitted model: the cluster matrix, the
//! distribution of cluster memberships, and per-period membership averages.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::events::fmt_f64;
use crate::features::RowLabel;
use crate::wnmf::FactorModel;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportScale {
    Linear,
    Log10,
}

/// The k x m cluster matrix with labels, either raw (rows sum to one) or on
/// a log10 scale floored at -4.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub table: Array2<f64>,
    pub feature_names: Vec<String>,
    pub scale: ReportScale,
    /// Cells whose value was exactly zero, rendered at the log floor.
    pub sentinel_cells: Vec<(usize, usize)>,
}

/// Log-scale plot floor: values at or below 1e-4 (and exact zeros) clamp here.
pub const LOG_FLOOR: f64 = -4.0;

/// Emits the cluster matrix of a normalized model.
pub fn cluster_report(
    model: &FactorModel,
    feature_names: &[String],
    scale: ReportScale,
) -> Result<ClusterReport> {
    if !model.normalized {
        return Err(Error::validation(
            "model is not normalized; run normalize_clusters first",
        ));
    }
    if feature_names.len() != model.v.ncols() {
        return Err(Error::shape(format!(
            "{} feature names for {} columns",
            feature_names.len(),
            model.v.ncols()
        )));
    }
    let mut sentinel_cells = Vec::new();
    let table = match scale {
        ReportScale::Linear => model.v.clone(),
        ReportScale::Log10 => {
            let mut t = model.v.clone();
            for ((i, j), value) in t.indexed_iter_mut() {
                if *value > 0.0 {
                    *value = value.log10().max(LOG_FLOOR);
                } else {
                    *value = LOG_FLOOR;
                    sentinel_cells.push((i, j));
                }
            }
            t
        }
    };
    Ok(ClusterReport {
        table,
        feature_names: feature_names.to_vec(),
        scale,
        sentinel_cells,
    })
}

/// Per-cluster histogram of row-normalized memberships over the ten bins
/// [0, 0.1), ..., [0.9, 1.0].
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipDistribution {
    /// k x 10 fractions; each row sums to one when any row was used.
    pub bins: Array2<f64>,
    pub n_rows_used: usize,
    /// Rows of U with zero sum, excluded from the histogram.
    pub n_rows_skipped: usize,
}

pub const N_BINS: usize = 10;

pub fn membership_distribution(model: &FactorModel) -> MembershipDistribution {
    let k = model.u.ncols();
    let mut counts = Array2::<f64>::zeros((k, N_BINS));
    let mut used = 0usize;
    let mut skipped = 0usize;
    for row in model.u.rows() {
        let total: f64 = row.sum();
        if total <= 0.0 {
            skipped += 1;
            continue;
        }
        used += 1;
        for (cluster, &value) in row.iter().enumerate() {
            let share = value / total;
            let bin = ((share * N_BINS as f64) as usize).min(N_BINS - 1); // top bin closed
            counts[[cluster, bin]] += 1.0;
        }
    }
    if used > 0 {
        counts.mapv_inplace(|c| c / used as f64);
    }
    MembershipDistribution {
        bins: counts,
        n_rows_used: used,
        n_rows_skipped: skipped,
    }
}

/// Average un-normalized membership vector per activity period.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipSeries {
    /// One k-vector per period.
    pub values: Vec<Vec<f64>>,
    /// Periods with no rows, reported as all-zero.
    pub empty_periods: Vec<usize>,
}

/// Averages the rows of U per period. `period_count` extends the series past
/// the last labeled period; by default it ends there.
pub fn membership_timeseries(
    model: &FactorModel,
    row_labels: &[RowLabel],
    period_count: Option<usize>,
) -> Result<MembershipSeries> {
    if row_labels.len() != model.u.nrows() {
        return Err(Error::shape(format!(
            "{} row labels for {} membership rows",
            row_labels.len(),
            model.u.nrows()
        )));
    }
    let derived = row_labels.iter().map(|l| l.period + 1).max().unwrap_or(0);
    let n_periods = period_count.unwrap_or(derived).max(derived);
    let k = model.u.ncols();

    let mut sums = vec![vec![0.0f64; k]; n_periods];
    let mut counts = vec![0usize; n_periods];
    for (row, label) in model.u.rows().into_iter().zip(row_labels) {
        let acc = &mut sums[label.period];
        for (slot, &value) in acc.iter_mut().zip(row.iter()) {
            *slot += value;
        }
        counts[label.period] += 1;
    }

    let mut empty_periods = Vec::new();
    for (period, (acc, &count)) in sums.iter_mut().zip(&counts).enumerate() {
        if count == 0 {
            empty_periods.push(period);
        } else {
            for slot in acc.iter_mut() {
                *slot /= count as f64;
            }
        }
    }
    Ok(MembershipSeries {
        values: sums,
        empty_periods,
    })
}

fn cluster_header(k: usize, first: &str) -> Vec<String> {
    let mut header = vec![first.to_string()];
    header.extend((1..=k).map(|i| format!("c{i}")));
    header
}

/// Cluster matrix CSV: `cluster,<feature names>`, one row per cluster.
pub fn write_cluster_csv<W: Write>(writer: W, report: &ClusterReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["cluster".to_string()];
    header.extend(report.feature_names.iter().cloned());
    wtr.write_record(&header)?;
    for (i, row) in report.table.rows().into_iter().enumerate() {
        let mut record = vec![format!("c{}", i + 1)];
        record.extend(row.iter().map(|&v| fmt_f64(v)));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses a cluster matrix CSV back into its value table.
pub fn read_cluster_csv<R: Read>(reader: R) -> Result<(Array2<f64>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let feature_names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let m = feature_names.len();
    let mut values = Vec::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        for j in 0..m {
            let cell = record.get(j + 1).unwrap_or("");
            values.push(cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad value {cell:?}"),
            })?);
        }
        rows += 1;
    }
    let table = Array2::from_shape_vec((rows, m), values)
        .map_err(|e| Error::shape(e.to_string()))?;
    Ok((table, feature_names))
}

/// Distribution CSV: `bin_start,bin_end,c1..ck`, ten rows.
pub fn write_distribution_csv<W: Write>(
    writer: W,
    dist: &MembershipDistribution,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let k = dist.bins.nrows();
    let mut header = vec!["bin_start".to_string(), "bin_end".to_string()];
    header.extend((1..=k).map(|i| format!("c{i}")));
    wtr.write_record(&header)?;
    for bin in 0..N_BINS {
        let mut record = vec![
            fmt_f64(bin as f64 / N_BINS as f64),
            fmt_f64((bin + 1) as f64 / N_BINS as f64),
        ];
        record.extend((0..k).map(|c| fmt_f64(dist.bins[[c, bin]])));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Time series CSV: `period,c1..ck`.
pub fn write_timeseries_csv<W: Write>(writer: W, series: &MembershipSeries) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let k = series.values.first().map_or(0, Vec::len);
    wtr.write_record(&cluster_header(k, "period"))?;
    for (period, values) in series.values.iter().enumerate() {
        let mut record = vec![period.to_string()];
        record.extend(values.iter().map(|&v| fmt_f64(v)));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Activity CSV: `period,students`.
pub fn write_activity_csv<W: Write>(writer: W, counts: &[(usize, usize)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["period", "students"])?;
    for &(period, students) in counts {
        wtr.write_record([period.to_string(), students.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wnmf::{fit, normalize_clusters, FitOptions};
    use ndarray::array;

    fn model_from(u: Array2<f64>, v: Array2<f64>) -> FactorModel {
        let k = v.nrows();
        FactorModel {
            u,
            v,
            k,
            objective_trace: vec![1.0],
            seed: 0,
            restart: 0,
            converged: true,
            iterations: 1,
            normalized: false,
            degenerate_rows: Vec::new(),
            bound_toggles: 0,
            bound_overrides: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn names(m: usize) -> Vec<String> {
        (1..=m).map(|j| format!("f{j}")).collect()
    }

    #[test]
    fn cluster_report_requires_a_normalized_model() {
        let model = model_from(array![[1.0]], array![[2.0, 2.0]]);
        let err = cluster_report(&model, &names(2), ReportScale::Linear).unwrap_err();
        assert!(err.to_string().contains("normalize_clusters"), "{err}");
    }

    #[test]
    fn linear_report_is_the_normalized_v() {
        let model = model_from(array![[1.0, 1.0]], array![[2.0, 2.0], [1.0, 3.0]]);
        let (norm, _) = normalize_clusters(&model);
        let report = cluster_report(&norm, &names(2), ReportScale::Linear).unwrap();
        assert_eq!(report.table, norm.v);
        for row in report.table.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_scale_maps_and_clamps() {
        let mut model = model_from(array![[1.0]], array![[0.001, 0.999, 0.0]]);
        model.normalized = true; // hand-built row, treated as normalized
        let report = cluster_report(&model, &names(3), ReportScale::Log10).unwrap();
        assert!((report.table[[0, 0]] - (-3.0)).abs() < 1e-12);
        assert!(report.table[[0, 1]] < 0.0 && report.table[[0, 1]] > -0.001);
        assert_eq!(report.table[[0, 2]], LOG_FLOOR);
        assert_eq!(report.sentinel_cells, vec![(0, 2)]);
        // a tiny positive value clamps without being flagged
        let mut model = model_from(array![[1.0]], array![[1e-7, 1.0]]);
        model.normalized = true;
        let report = cluster_report(&model, &names(2), ReportScale::Log10).unwrap();
        assert_eq!(report.table[[0, 0]], LOG_FLOOR);
        assert!(report.sentinel_cells.is_empty());
    }

    #[test]
    fn one_hot_row_lands_in_the_extreme_bins() {
        let model = model_from(array![[1.0, 0.0, 0.0]], Array2::ones((3, 2)));
        let dist = membership_distribution(&model);
        assert_eq!(dist.n_rows_used, 1);
        assert_eq!(dist.bins[[0, 9]], 1.0); // full membership: closed top bin
        assert_eq!(dist.bins[[1, (0)]], 1.0);
        assert_eq!(dist.bins[[2, (0)]], 1.0);
    }

    #[test]
    fn hand_binned_distribution() {
        let model = model_from(
            array![[0.5, 0.5], [0.9, 0.1], [0.2, 0.8], [0.5, 0.5]],
            Array2::ones((2, 2)),
        );
        let dist = membership_distribution(&model);
        let c1 = dist.bins.row(0);
        assert_eq!(c1[2], 0.25); // [0.2, 0.3)
        assert_eq!(c1[5], 0.5); // [0.5, 0.6)
        assert_eq!(c1[9], 0.25); // [0.9, 1.0]
        for cluster in 0..2 {
            let total: f64 = dist.bins.row(cluster).sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn distribution_skips_and_counts_zero_rows() {
        let model = model_from(array![[0.0, 0.0], [0.3, 0.7]], Array2::ones((2, 2)));
        let dist = membership_distribution(&model);
        assert_eq!(dist.n_rows_used, 1);
        assert_eq!(dist.n_rows_skipped, 1);
    }

    #[test]
    fn distribution_is_invariant_under_row_rescaling() {
        let base = model_from(array![[0.4, 0.6], [0.9, 0.1]], Array2::ones((2, 2)));
        let mut scaled = base.clone();
        scaled.u.row_mut(0).mapv_inplace(|v| v * 37.5);
        assert_eq!(
            membership_distribution(&base).bins,
            membership_distribution(&scaled).bins
        );
    }

    fn labels(periods: &[usize]) -> Vec<RowLabel> {
        periods
            .iter()
            .enumerate()
            .map(|(i, &p)| RowLabel {
                student_id: format!("s{i}"),
                period: p,
            })
            .collect()
    }

    #[test]
    fn timeseries_averages_unnormalized_rows() {
        let model = model_from(array![[1.0, 0.0], [0.0, 1.0], [4.0, 6.0]], Array2::ones((2, 2)));
        let series = membership_timeseries(&model, &labels(&[0, 0, 1]), None).unwrap();
        assert_eq!(series.values[0], vec![0.5, 0.5]);
        assert_eq!(series.values[1], vec![4.0, 6.0]);
        assert!(series.empty_periods.is_empty());
    }

    #[test]
    fn timeseries_flags_empty_periods_and_extends() {
        let model = model_from(array![[2.0, 4.0]], Array2::ones((2, 2)));
        let series = membership_timeseries(&model, &labels(&[1]), Some(4)).unwrap();
        assert_eq!(series.values.len(), 4);
        assert_eq!(series.empty_periods, vec![0, 2, 3]);
        assert_eq!(series.values[0], vec![0.0, 0.0]);
        assert_eq!(series.values[1], vec![2.0, 4.0]);
    }

    #[test]
    fn timeseries_over_one_period_is_the_column_mean() {
        let model = model_from(array![[1.0, 3.0], [3.0, 5.0]], Array2::ones((2, 2)));
        let series = membership_timeseries(&model, &labels(&[0, 0]), None).unwrap();
        assert_eq!(series.values, vec![vec![2.0, 4.0]]);
    }

    #[test]
    fn timeseries_rejects_label_mismatch() {
        let model = model_from(array![[1.0, 3.0], [3.0, 5.0]], Array2::ones((2, 2)));
        assert!(membership_timeseries(&model, &labels(&[0]), None).is_err());
    }

    #[test]
    fn cluster_csv_round_trips_bit_exactly() {
        let x = array![
            [1.0, 0.2, 0.7],
            [0.3, 0.9, 0.4],
            [0.8, 0.1, 0.5],
            [0.2, 0.7, 0.3]
        ];
        let w = Array2::ones(x.dim());
        let model = fit(&x, &w, 2, &FitOptions { restarts: 1, seed: 3, ..FitOptions::default() })
            .unwrap();
        let (norm, _) = normalize_clusters(&model);
        let report = cluster_report(&norm, &names(3), ReportScale::Linear).unwrap();
        let mut buf = Vec::new();
        write_cluster_csv(&mut buf, &report).unwrap();
        let (table, feature_names) = read_cluster_csv(buf.as_slice()).unwrap();
        assert_eq!(table, norm.v);
        assert_eq!(feature_names, names(3));
    }
}
