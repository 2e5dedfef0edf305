//! Per-(student, period) behavior features and the masked feature matrix.
//!
//! The fourteen features, all aggregated over one activity period:
//!
//! | id  | meaning                                  |
//! |-----|------------------------------------------|
//! | f1  | hours inside the school window (8-16)    |
//! | f2  | hours outside the school window          |
//! | f3  | hours doing exercises (dwell)            |
//! | f4  | hours reading texts (dwell)              |
//! | f5  | hours taking quizzes                     |
//! | f6  | hours in language subjects               |
//! | f7  | hours in societal subjects               |
//! | f8  | hours in science subjects                |
//! | f9  | average session length in hours          |
//! | f10 | average quiz score in [0,1] (maskable)   |
//! | f11..f14 | exercise hours per Bloom group      |
//!
//! f10 is the only feature that can be missing; rows without a quiz get
//! value 0 and mask 0 there.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime, TimeZone};
use chrono_tz::Tz;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::events::fmt_f64;
use crate::session::{SessionKind, StudentPeriodEntry};
use crate::Result;

/// Regroups a six-level Bloom taxonomy level into the four working groups:
/// Remember/Understand, Apply, Analyze/Evaluate, Create.
pub fn bloom_group(raw_level: u8) -> Result<u8> {
    match raw_level {
        1 | 2 => Ok(1),
        3 => Ok(2),
        4 | 5 => Ok(3),
        6 => Ok(4),
        other => Err(Error::validation(format!(
            "bloom level {other} outside 1..=6"
        ))),
    }
}

/// Canonical raw level for a group, for serializing events back out.
/// Inverse of [`bloom_group`] up to the regrouping.
pub fn bloom_group_representative(group: u8) -> u8 {
    match group {
        1 => 1,
        2 => 3,
        3 => 4,
        _ => 6,
    }
}

/// Subject classes used by f6/f7/f8.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectClass {
    Language,
    Societal,
    Science,
}

/// Which features to compute and how to interpret local time.
#[derive(Debug, Clone)]
pub struct FeatureSpec {
    /// Ordered subset of 1..=14, no duplicates.
    pub feature_ids: Vec<u8>,
    /// Local-time school window, start < end.
    pub school_hours: (NaiveTime, NaiveTime),
    pub subject_map: BTreeMap<String, SubjectClass>,
    pub timezone: Tz,
}

pub const DEFAULT_TIMEZONE: Tz = chrono_tz::Europe::Copenhagen;

pub fn default_school_hours() -> (NaiveTime, NaiveTime) {
    (
        NaiveTime::from_hms_opt(8, 0, 0).unwrap(),
        NaiveTime::from_hms_opt(16, 0, 0).unwrap(),
    )
}

impl FeatureSpec {
    pub fn new(feature_ids: Vec<u8>, subject_map: BTreeMap<String, SubjectClass>) -> Result<Self> {
        let spec = FeatureSpec {
            feature_ids,
            school_hours: default_school_hours(),
            subject_map,
            timezone: DEFAULT_TIMEZONE,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_ids.is_empty() {
            return Err(Error::validation("feature id list is empty"));
        }
        let mut seen = [false; 15];
        for &id in &self.feature_ids {
            if !(1..=14).contains(&id) {
                return Err(Error::validation(format!("feature id {id} outside 1..=14")));
            }
            if seen[id as usize] {
                return Err(Error::validation(format!("duplicate feature id {id}")));
            }
            seen[id as usize] = true;
        }
        if self.school_hours.0 >= self.school_hours.1 {
            return Err(Error::validation(
                "school window start must precede its end",
            ));
        }
        Ok(())
    }

    /// Column index of a feature id in this spec's layout, if selected.
    pub fn column_of(&self, feature_id: u8) -> Option<usize> {
        self.feature_ids.iter().position(|&id| id == feature_id)
    }
}

pub fn feature_name(id: u8) -> String {
    format!("f{id}")
}

/// The masked feature matrix: X >= 0, W in {0,1}, one row per active
/// (student, period) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub x: Array2<f64>,
    pub w: Array2<f64>,
    pub row_labels: Vec<RowLabel>,
    pub col_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowLabel {
    pub student_id: String,
    pub period: usize,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.dim() != self.w.dim() {
            return Err(Error::shape(format!(
                "X is {:?} but W is {:?}",
                self.x.dim(),
                self.w.dim()
            )));
        }
        if self.row_labels.len() != self.x.nrows() || self.col_labels.len() != self.x.ncols() {
            return Err(Error::shape(format!(
                "labels ({}, {}) do not match matrix {:?}",
                self.row_labels.len(),
                self.col_labels.len(),
                self.x.dim()
            )));
        }
        for &v in self.x.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(format!(
                    "matrix entries must be finite and non-negative, found {v}"
                )));
            }
        }
        for &v in self.w.iter() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::validation(format!(
                    "mask entries must be 0 or 1, found {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Resolves a naive local datetime to UTC seconds. Ambiguous times (fall
/// back) take the earlier instant; nonexistent times (spring forward) snap
/// to the end of the gap.
pub(crate) fn local_instant(tz: &Tz, naive: NaiveDateTime) -> i64 {
    match tz.from_local_datetime(&naive) {
        chrono::LocalResult::Single(dt) => dt.timestamp(),
        chrono::LocalResult::Ambiguous(first, _) => first.timestamp(),
        chrono::LocalResult::None => {
            let mut probe = naive;
            loop {
                probe += Duration::minutes(15);
                if let Some(dt) = tz.from_local_datetime(&probe).earliest() {
                    return dt.timestamp();
                }
            }
        }
    }
}

fn local_date_of(tz: &Tz, utc_seconds: i64) -> NaiveDate {
    tz.timestamp_opt(utc_seconds, 0)
        .single()
        .expect("utc to local is total")
        .date_naive()
}

/// Splits the interval `[start, end]` (UTC seconds, real-valued) into seconds
/// inside and outside the local-time window, walking each local day the
/// interval touches.
pub fn window_split(
    start: f64,
    end: f64,
    tz: &Tz,
    window: (NaiveTime, NaiveTime),
) -> (f64, f64) {
    if !(end > start) {
        return (0.0, 0.0);
    }
    let mut inside = 0.0;
    let mut cur = start;
    while cur < end {
        let date = local_date_of(tz, cur.floor() as i64);
        let next_midnight =
            local_instant(tz, date.succ_opt().expect("date range").and_time(NaiveTime::MIN))
                as f64;
        let win_start = local_instant(tz, date.and_time(window.0)) as f64;
        let win_end = local_instant(tz, date.and_time(window.1)) as f64;
        let seg_end = next_midnight.min(end);
        let lo = cur.max(win_start);
        let hi = seg_end.min(win_end);
        if hi > lo {
            inside += hi - lo;
        }
        // guard against a pathological zone keeping us on the same day
        cur = if seg_end > cur { seg_end } else { cur + 3600.0 };
    }
    let total = end - start;
    (inside, total - inside)
}

const SECONDS_PER_HOUR: f64 = 3600.0;

/// Computes one feature row and its mask for an entry.
pub fn extract_row(entry: &StudentPeriodEntry, spec: &FeatureSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    if entry.sessions.is_empty() {
        return Err(Error::validation(format!(
            "entry ({}, {}) has no sessions",
            entry.student_id, entry.period_index
        )));
    }

    let mut in_window_s = 0.0;
    let mut out_window_s = 0.0;
    let mut kind_s = [0.0f64; 3]; // exercise, text, quiz
    let mut class_s = [0.0f64; 3]; // language, societal, science
    let mut total_duration_s = 0.0;
    let mut bloom_s = [0.0f64; 4];
    let mut quiz_score_sum = 0.0;
    let mut quiz_count = 0usize;

    for session in &entry.sessions {
        let (start, end) = session.extent();
        let (inside, outside) = window_split(start, end, &spec.timezone, spec.school_hours);
        in_window_s += inside;
        out_window_s += outside;

        kind_s[0] += session.per_kind_seconds.exercise;
        kind_s[1] += session.per_kind_seconds.text;
        kind_s[2] += session.per_kind_seconds.quiz;

        let class = spec.subject_map.get(&session.subject).ok_or_else(|| {
            Error::config(format!(
                "subject {:?} is not in the subject map",
                session.subject
            ))
        })?;
        class_s[match class {
            SubjectClass::Language => 0,
            SubjectClass::Societal => 1,
            SubjectClass::Science => 2,
        }] += session.duration;

        total_duration_s += session.duration;
        for (acc, s) in bloom_s.iter_mut().zip(session.bloom_seconds) {
            *acc += s;
        }
        if session.kind == SessionKind::Quiz {
            if let Some(score) = session.quiz_score {
                quiz_score_sum += score;
                quiz_count += 1;
            }
        }
    }

    let mean_duration_h = total_duration_s / entry.sessions.len() as f64 / SECONDS_PER_HOUR;

    let mut values = Vec::with_capacity(spec.feature_ids.len());
    let mut mask = Vec::with_capacity(spec.feature_ids.len());
    for &id in &spec.feature_ids {
        let (value, present) = match id {
            1 => (in_window_s / SECONDS_PER_HOUR, true),
            2 => (out_window_s / SECONDS_PER_HOUR, true),
            3 => (kind_s[0] / SECONDS_PER_HOUR, true),
            4 => (kind_s[1] / SECONDS_PER_HOUR, true),
            5 => (kind_s[2] / SECONDS_PER_HOUR, true),
            6 => (class_s[0] / SECONDS_PER_HOUR, true),
            7 => (class_s[1] / SECONDS_PER_HOUR, true),
            8 => (class_s[2] / SECONDS_PER_HOUR, true),
            9 => (mean_duration_h, true),
            10 => {
                if quiz_count == 0 {
                    (0.0, false)
                } else {
                    (quiz_score_sum / quiz_count as f64, true)
                }
            }
            11..=14 => (bloom_s[(id - 11) as usize] / SECONDS_PER_HOUR, true),
            _ => unreachable!("validated feature id"),
        };
        values.push(value);
        mask.push(if present { 1.0 } else { 0.0 });
    }
    Ok((values, mask))
}

/// Assembles X and W over all entries, rows in canonical order
/// (period, then student).
pub fn build_matrix(entries: &[StudentPeriodEntry], spec: &FeatureSpec) -> Result<FeatureMatrix> {
    spec.validate()?;
    if entries.is_empty() {
        return Err(Error::validation("no entries to featurize"));
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        (entries[a].period_index, &entries[a].student_id)
            .cmp(&(entries[b].period_index, &entries[b].student_id))
    });

    let n = entries.len();
    let m = spec.feature_ids.len();
    let mut x = Array2::zeros((n, m));
    let mut w = Array2::zeros((n, m));
    let mut row_labels = Vec::with_capacity(n);
    for (row, &idx) in order.iter().enumerate() {
        let entry = &entries[idx];
        let (values, mask) = extract_row(entry, spec)?;
        for j in 0..m {
            x[[row, j]] = values[j];
            w[[row, j]] = mask[j];
        }
        row_labels.push(RowLabel {
            student_id: entry.student_id.clone(),
            period: entry.period_index,
        });
    }
    let col_labels = spec.feature_ids.iter().map(|&id| feature_name(id)).collect();
    let matrix = FeatureMatrix {
        x,
        w,
        row_labels,
        col_labels,
    };
    matrix.validate()?;
    Ok(matrix)
}

/// Writes X (or W via `as_mask`) in the matrix CSV layout:
/// `student_id,period,<feature names>`.
fn write_labeled_csv<W: Write>(
    writer: W,
    values: &Array2<f64>,
    row_labels: &[RowLabel],
    col_labels: &[String],
    as_mask: bool,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["student_id".to_string(), "period".to_string()];
    header.extend(col_labels.iter().cloned());
    wtr.write_record(&header)?;
    for (i, label) in row_labels.iter().enumerate() {
        let mut record = vec![label.student_id.clone(), label.period.to_string()];
        for j in 0..values.ncols() {
            let v = values[[i, j]];
            record.push(if as_mask {
                format!("{}", v as i64)
            } else {
                fmt_f64(v)
            });
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_matrix_csv<W: Write>(writer: W, matrix: &FeatureMatrix) -> Result<()> {
    write_labeled_csv(
        writer,
        &matrix.x,
        &matrix.row_labels,
        &matrix.col_labels,
        false,
    )
}

pub fn write_mask_csv<W: Write>(writer: W, matrix: &FeatureMatrix) -> Result<()> {
    write_labeled_csv(
        writer,
        &matrix.w,
        &matrix.row_labels,
        &matrix.col_labels,
        true,
    )
}

fn read_labeled_csv<R: Read>(reader: R) -> Result<(Array2<f64>, Vec<RowLabel>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 3 || &headers[0] != "student_id" || &headers[1] != "period" {
        return Err(Error::Parse {
            line: 1,
            message: "matrix CSV must start with student_id,period".into(),
        });
    }
    let col_labels: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let m = col_labels.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut row_labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != m + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", m + 2, record.len()),
            });
        }
        row_labels.push(RowLabel {
            student_id: record[0].to_string(),
            period: record[1].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad period {:?}", &record[1]),
            })?,
        });
        for j in 0..m {
            rows.push(record[j + 2].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad value {:?}", &record[j + 2]),
            })?);
        }
    }
    let n = row_labels.len();
    let values = Array2::from_shape_vec((n, m), rows)
        .map_err(|e| Error::shape(e.to_string()))?;
    Ok((values, row_labels, col_labels))
}

/// Reads a matrix from its X and mask CSV files.
pub fn read_matrix_csv<R1: Read, R2: Read>(x_reader: R1, w_reader: R2) -> Result<FeatureMatrix> {
    let (x, row_labels, col_labels) = read_labeled_csv(x_reader)?;
    let (w, w_rows, w_cols) = read_labeled_csv(w_reader)?;
    if w_rows != row_labels || w_cols != col_labels {
        return Err(Error::validation(
            "matrix and mask files have different labels",
        ));
    }
    let matrix = FeatureMatrix {
        x,
        w,
        row_labels,
        col_labels,
    };
    matrix.validate()?;
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{EventKind, RawEvent};
    use crate::session::{assign_periods, build_sessions, PeriodCalendar};

    fn subject_map() -> BTreeMap<String, SubjectClass> {
        [
            ("danish".to_string(), SubjectClass::Language),
            ("history".to_string(), SubjectClass::Societal),
            ("physics".to_string(), SubjectClass::Science),
        ]
        .into_iter()
        .collect()
    }

    fn spec_1_to_10() -> FeatureSpec {
        FeatureSpec::new((1..=10).collect(), subject_map()).unwrap()
    }

    fn epoch() -> NaiveDate {
        NaiveDate::from_ymd_opt(2015, 1, 8).unwrap()
    }

    /// UTC timestamp of a Copenhagen local time (CET, winter).
    fn cph_winter_ts(d: u32, h: u32, min: u32) -> i64 {
        NaiveDate::from_ymd_opt(2015, 1, d)
            .unwrap()
            .and_hms_opt(h - 1, min, 0) // CET = UTC+1
            .unwrap()
            .and_utc()
            .timestamp()
    }

    fn text_event(t: i64, subject: &str) -> RawEvent {
        RawEvent {
            student_id: "s1".into(),
            timestamp: t,
            subject: subject.into(),
            kind: EventKind::Text,
            bloom_group: None,
            quiz_score: None,
            quiz_duration: None,
        }
    }

    /// Text events every 5 minutes so `[t0, t0 + len_s]` merges into one session.
    fn text_chain(t0: i64, len_s: i64, subject: &str) -> Vec<RawEvent> {
        (0..=len_s / 300)
            .map(|i| text_event(t0 + i * 300, subject))
            .collect()
    }

    fn entry_from_events(events: &[RawEvent]) -> StudentPeriodEntry {
        let sessions = build_sessions(events, 600.0).unwrap();
        let calendar = PeriodCalendar::weekly(epoch(), 112).unwrap();
        let (mut entries, dropped) = assign_periods(&sessions, &calendar);
        assert_eq!(dropped, 0);
        assert_eq!(entries.len(), 1);
        entries.remove(0)
    }

    #[test]
    fn bloom_regrouping_table() {
        assert_eq!(bloom_group(1).unwrap(), 1);
        assert_eq!(bloom_group(2).unwrap(), 1);
        assert_eq!(bloom_group(3).unwrap(), 2);
        assert_eq!(bloom_group(4).unwrap(), 3);
        assert_eq!(bloom_group(5).unwrap(), 3);
        assert_eq!(bloom_group(6).unwrap(), 4);
        assert!(bloom_group(0).is_err());
        assert!(bloom_group(7).is_err());
        for g in 1..=4 {
            assert_eq!(bloom_group(bloom_group_representative(g)).unwrap(), g);
        }
    }

    #[test]
    fn single_in_school_text_session() {
        // Danish text, 08:30-09:30 local, built from a merged chain of events.
        let t0 = cph_winter_ts(12, 8, 30);
        let entry = entry_from_events(&text_chain(t0, 3600, "danish"));
        let (values, mask) = extract_row(&entry, &spec_1_to_10()).unwrap();
        assert!((values[0] - 1.0).abs() < 1e-12, "f1 = {}", values[0]); // in-school hour
        assert_eq!(values[1], 0.0); // f2
        assert_eq!(values[2], 0.0); // f3 exercises
        assert!((values[3] - 1.0).abs() < 1e-12); // f4 text dwell
        assert_eq!(values[4], 0.0); // f5 quizzes
        assert!((values[5] - 1.0).abs() < 1e-12); // f6 language
        assert_eq!(values[6], 0.0);
        assert_eq!(values[7], 0.0);
        assert!((values[8] - 1.0).abs() < 1e-12); // f9 mean length
        assert_eq!(values[9], 0.0); // f10 masked
        assert_eq!(mask[9], 0.0);
        assert!(mask[..9].iter().all(|&b| b == 1.0));
    }

    #[test]
    fn quiz_scores_average_unweighted() {
        let t0 = cph_winter_ts(12, 10, 0);
        let mut q1 = text_event(t0, "danish");
        q1.kind = EventKind::Quiz;
        q1.quiz_score = Some(0.6);
        q1.quiz_duration = Some(120.0);
        let mut q2 = text_event(t0 + 2000, "danish");
        q2.kind = EventKind::Quiz;
        q2.quiz_score = Some(0.8);
        q2.quiz_duration = Some(600.0);
        let entry = entry_from_events(&[q1, q2]);
        let (values, mask) = extract_row(&entry, &spec_1_to_10()).unwrap();
        assert!((values[9] - 0.7).abs() < 1e-12);
        assert_eq!(mask[9], 1.0);
    }

    #[test]
    fn session_straddling_the_window_start_splits_evenly() {
        // 07:30-08:30 local -> half in, half out.
        let t0 = cph_winter_ts(12, 7, 30);
        let entry = entry_from_events(&text_chain(t0, 3600, "danish"));
        let (values, _) = extract_row(&entry, &spec_1_to_10()).unwrap();
        assert!((values[0] - 0.5).abs() < 1e-12, "f1 = {}", values[0]);
        assert!((values[1] - 0.5).abs() < 1e-12, "f2 = {}", values[1]);
    }

    #[test]
    fn midnight_spanning_session_stays_out_of_window() {
        let t0 = cph_winter_ts(12, 23, 30);
        let entry = entry_from_events(&text_chain(t0, 3600, "danish"));
        let (values, _) = extract_row(&entry, &spec_1_to_10()).unwrap();
        assert_eq!(values[0], 0.0);
        assert!((values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_split_handles_dst_spring_forward() {
        // 2015-03-29, Europe/Copenhagen: 02:00 CET jumps to 03:00 CEST.
        // UTC 00:00..08:00 is local 01:00 CET .. 10:00 CEST; the school window
        // starts at 08:00 CEST = 06:00 UTC, so 2 of the 8 hours are inside.
        let start = NaiveDate::from_ymd_opt(2015, 3, 29)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
            .and_utc()
            .timestamp() as f64;
        let (inside, outside) = window_split(
            start,
            start + 8.0 * 3600.0,
            &DEFAULT_TIMEZONE,
            default_school_hours(),
        );
        assert!((inside - 2.0 * 3600.0).abs() < 1e-9, "inside = {inside}");
        assert!((outside - 6.0 * 3600.0).abs() < 1e-9);
    }

    #[test]
    fn unmapped_subject_is_a_config_error_naming_it() {
        let t0 = cph_winter_ts(12, 10, 0);
        let entry = entry_from_events(&[text_event(t0, "latin")]);
        let err = extract_row(&entry, &spec_1_to_10()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("latin"), "{err}");
    }

    #[test]
    fn build_matrix_orders_rows_and_masks_f10() {
        let events = vec![
            text_event(cph_winter_ts(9, 10, 0), "danish"),
            text_event(cph_winter_ts(16, 10, 0), "danish"),
            {
                let mut e = text_event(cph_winter_ts(9, 11, 0), "physics");
                e.student_id = "s0".into();
                e
            },
            {
                let mut e = text_event(cph_winter_ts(16, 11, 0), "physics");
                e.student_id = "s0".into();
                e
            },
        ];
        let sessions = build_sessions(&events, 600.0).unwrap();
        let calendar = PeriodCalendar::weekly(epoch(), 112).unwrap();
        let (entries, _) = assign_periods(&sessions, &calendar);
        let matrix = build_matrix(&entries, &spec_1_to_10()).unwrap();
        assert_eq!(matrix.n_rows(), 4);
        assert_eq!(matrix.n_cols(), 10);
        let labels: Vec<(usize, &str)> = matrix
            .row_labels
            .iter()
            .map(|l| (l.period, l.student_id.as_str()))
            .collect();
        assert_eq!(labels, vec![(0, "s0"), (0, "s1"), (1, "s0"), (1, "s1")]);
        // only the f10 column may be masked
        for j in 0..9 {
            assert!(matrix.w.column(j).iter().all(|&v| v == 1.0));
        }
        assert!(matrix.w.column(9).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn experiment_layouts_have_expected_widths() {
        let spec7 = FeatureSpec::new(vec![6, 7, 8, 11, 12, 13, 14], subject_map()).unwrap();
        assert_eq!(spec7.feature_ids.len(), 7);
        assert_eq!(spec7.column_of(11), Some(3));
        let spec10 = spec_1_to_10();
        assert_eq!(spec10.column_of(10), Some(9));
        assert!(spec10.column_of(11).is_none());
    }

    #[test]
    fn rejects_bad_feature_lists() {
        assert!(FeatureSpec::new(vec![], subject_map()).is_err());
        assert!(FeatureSpec::new(vec![1, 1], subject_map()).is_err());
        assert!(FeatureSpec::new(vec![15], subject_map()).is_err());
    }

    #[test]
    fn matrix_csv_round_trips_bit_exactly() {
        let events = vec![
            text_event(cph_winter_ts(9, 10, 0), "danish"),
            text_event(cph_winter_ts(9, 10, 7), "danish"),
        ];
        let sessions = build_sessions(&events, 600.0).unwrap();
        let calendar = PeriodCalendar::weekly(epoch(), 112).unwrap();
        let (entries, _) = assign_periods(&sessions, &calendar);
        let matrix = build_matrix(&entries, &spec_1_to_10()).unwrap();

        let mut x_buf = Vec::new();
        let mut w_buf = Vec::new();
        write_matrix_csv(&mut x_buf, &matrix).unwrap();
        write_mask_csv(&mut w_buf, &matrix).unwrap();
        let back = read_matrix_csv(x_buf.as_slice(), w_buf.as_slice()).unwrap();
        assert_eq!(back, matrix);
    }
}
