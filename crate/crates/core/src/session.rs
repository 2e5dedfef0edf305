//! Sessionization: merging raw events into sessions and weekly periods.
//!
//! Two consecutive non-quiz events of one student belong to the same session
//! when they share a subject and their timestamps differ by less than the gap
//! threshold (600 s by default). Quiz events are carved out of the merge
//! stream first and each becomes a singleton session whose duration is the
//! logged quiz time, so non-quiz events on either side of a quiz may still
//! merge.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::events::{fmt_f64, EventKind, RawEvent};
use crate::Result;

/// Session kind: the common kind of the merged events, or `Mixed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Text,
    Exercise,
    Quiz,
    Mixed,
}

impl SessionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionKind::Text => "text",
            SessionKind::Exercise => "exercise",
            SessionKind::Quiz => "quiz",
            SessionKind::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text" => Some(SessionKind::Text),
            "exercise" => Some(SessionKind::Exercise),
            "quiz" => Some(SessionKind::Quiz),
            "mixed" => Some(SessionKind::Mixed),
            _ => None,
        }
    }
}

/// Seconds attributed to each event kind within a session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindSeconds {
    pub text: f64,
    pub exercise: f64,
    pub quiz: f64,
}

impl KindSeconds {
    pub fn total(&self) -> f64 {
        self.text + self.exercise + self.quiz
    }
}

/// A merged contiguous activity interval for one student in one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub student_id: String,
    pub subject: String,
    /// UTC seconds of the first event.
    pub start: i64,
    /// UTC seconds of the session end (`start + duration`, rounded).
    pub end: i64,
    pub kind: SessionKind,
    /// Seconds. Last event minus first for merged sessions; the logged quiz
    /// time for quiz sessions.
    pub duration: f64,
    pub quiz_score: Option<f64>,
    pub per_kind_seconds: KindSeconds,
    /// Seconds of exercise dwell per Bloom group (groups 1..=4).
    pub bloom_seconds: [f64; 4],
}

impl Session {
    /// Real-valued temporal extent `[start, start + duration]` used for
    /// time-of-day overlap computations.
    pub fn extent(&self) -> (f64, f64) {
        let s = self.start as f64;
        (s, s + self.duration)
    }

    fn sort_key(&self) -> (&str, i64, i64, SessionKind, &str) {
        (
            self.student_id.as_str(),
            self.start,
            self.end,
            self.kind,
            self.subject.as_str(),
        )
    }
}

/// Merges raw events into sessions.
///
/// Events are sorted per student by timestamp (stable, so equal timestamps
/// keep input order). Per-event dwell time is the time to the next event in
/// the same session; the last event of a session contributes zero dwell.
/// Output is in canonical order (student, start, end).
pub fn build_sessions(events: &[RawEvent], gap_seconds: f64) -> Result<Vec<Session>> {
    if !(gap_seconds > 0.0) {
        return Err(Error::validation(format!(
            "gap threshold must be positive, got {gap_seconds}"
        )));
    }

    let mut per_student: BTreeMap<&str, Vec<&RawEvent>> = BTreeMap::new();
    for event in events {
        per_student.entry(&event.student_id).or_default().push(event);
    }

    let mut sessions = Vec::new();
    for (_, mut student_events) in per_student {
        student_events.sort_by_key(|e| e.timestamp);

        let mut run: Vec<&RawEvent> = Vec::new();
        for event in student_events {
            if event.kind == EventKind::Quiz {
                sessions.push(quiz_session(event));
                continue;
            }
            // timestamps are sorted, so the difference is >= 0
            let joins = |prev: &RawEvent| {
                prev.subject == event.subject
                    && ((event.timestamp - prev.timestamp) as f64) < gap_seconds
            };
            match run.last() {
                Some(prev) if joins(prev) => run.push(event),
                Some(_) => {
                    sessions.push(merged_session(&run));
                    run.clear();
                    run.push(event);
                }
                None => run.push(event),
            }
        }
        if !run.is_empty() {
            sessions.push(merged_session(&run));
        }
    }

    sessions.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(sessions)
}

fn quiz_session(event: &RawEvent) -> Session {
    let duration = event.quiz_duration.unwrap_or(0.0);
    Session {
        student_id: event.student_id.clone(),
        subject: event.subject.clone(),
        start: event.timestamp,
        end: event.timestamp + duration.round() as i64,
        kind: SessionKind::Quiz,
        duration,
        quiz_score: event.quiz_score,
        per_kind_seconds: KindSeconds {
            quiz: duration,
            ..KindSeconds::default()
        },
        bloom_seconds: [0.0; 4],
    }
}

fn merged_session(run: &[&RawEvent]) -> Session {
    let first = run[0];
    let last = run[run.len() - 1];
    let mut per_kind = KindSeconds::default();
    let mut bloom = [0.0; 4];
    for pair in run.windows(2) {
        let dwell = (pair[1].timestamp - pair[0].timestamp) as f64;
        match pair[0].kind {
            EventKind::Text => per_kind.text += dwell,
            EventKind::Exercise => {
                per_kind.exercise += dwell;
                if let Some(g) = pair[0].bloom_group {
                    bloom[(g - 1) as usize] += dwell;
                }
            }
            EventKind::Quiz => unreachable!("quizzes are carved out before merging"),
        }
    }
    let kind = if run.iter().all(|e| e.kind == first.kind) {
        match first.kind {
            EventKind::Text => SessionKind::Text,
            EventKind::Exercise => SessionKind::Exercise,
            EventKind::Quiz => unreachable!(),
        }
    } else {
        SessionKind::Mixed
    };
    Session {
        student_id: first.student_id.clone(),
        subject: first.subject.clone(),
        start: first.timestamp,
        end: last.timestamp,
        kind,
        duration: (last.timestamp - first.timestamp) as f64,
        quiz_score: None,
        per_kind_seconds: per_kind,
        bloom_seconds: bloom,
    }
}

/// Weekly (by default) activity period grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodCalendar {
    /// Start date of period 0 (midnight UTC).
    pub epoch: NaiveDate,
    /// Days per period.
    pub period_length: u32,
    pub period_count: usize,
}

impl PeriodCalendar {
    pub fn new(epoch: NaiveDate, period_length: u32, period_count: usize) -> Result<Self> {
        if period_length < 1 {
            return Err(Error::validation("period length must be >= 1 day"));
        }
        if period_count < 1 {
            return Err(Error::validation("period count must be >= 1"));
        }
        Ok(PeriodCalendar {
            epoch,
            period_length,
            period_count,
        })
    }

    /// Weekly calendar starting at `epoch`.
    pub fn weekly(epoch: NaiveDate, period_count: usize) -> Result<Self> {
        Self::new(epoch, 7, period_count)
    }

    pub fn epoch_timestamp(&self) -> i64 {
        self.epoch.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp()
    }

    /// Period containing a UTC timestamp, or `None` when out of range.
    pub fn period_of(&self, timestamp: i64) -> Option<usize> {
        let offset = timestamp - self.epoch_timestamp();
        if offset < 0 {
            return None;
        }
        let idx = (offset / (i64::from(self.period_length) * 86_400)) as usize;
        (idx < self.period_count).then_some(idx)
    }
}

/// All sessions of one student that start within one activity period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentPeriodEntry {
    pub student_id: String,
    pub period_index: usize,
    pub sessions: Vec<Session>,
}

/// Assigns each session to the period containing its start time.
///
/// Returns entries in canonical order (period, student) plus the number of
/// sessions dropped for starting outside the calendar.
pub fn assign_periods(
    sessions: &[Session],
    calendar: &PeriodCalendar,
) -> (Vec<StudentPeriodEntry>, usize) {
    let mut grouped: BTreeMap<(usize, &str), Vec<&Session>> = BTreeMap::new();
    let mut dropped = 0usize;
    for session in sessions {
        match calendar.period_of(session.start) {
            Some(period) => grouped
                .entry((period, &session.student_id))
                .or_default()
                .push(session),
            None => dropped += 1,
        }
    }
    let entries = grouped
        .into_iter()
        .map(|((period_index, student_id), mut group)| {
            group.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
            StudentPeriodEntry {
                student_id: student_id.to_string(),
                period_index,
                sessions: group.into_iter().cloned().collect(),
            }
        })
        .collect();
    (entries, dropped)
}

/// Distinct active students per period, including zeros for idle periods.
pub fn activity_counts(
    entries: &[StudentPeriodEntry],
    period_count: usize,
) -> Vec<(usize, usize)> {
    let mut counts = vec![0usize; period_count];
    for entry in entries {
        if entry.period_index < period_count {
            counts[entry.period_index] += 1; // one entry per (student, period)
        }
    }
    counts.into_iter().enumerate().collect()
}

pub const SESSIONS_HEADER: [&str; 14] = [
    "student_id",
    "subject",
    "start",
    "end",
    "kind",
    "duration",
    "score",
    "text_s",
    "exercise_s",
    "quiz_s",
    "bloom1_s",
    "bloom2_s",
    "bloom3_s",
    "bloom4_s",
];

pub fn write_sessions_csv<W: Write>(writer: W, sessions: &[Session]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SESSIONS_HEADER)?;
    for s in sessions {
        wtr.write_record([
            s.student_id.as_str(),
            s.subject.as_str(),
            &s.start.to_string(),
            &s.end.to_string(),
            s.kind.as_str(),
            &fmt_f64(s.duration),
            &s.quiz_score.map(fmt_f64).unwrap_or_default(),
            &fmt_f64(s.per_kind_seconds.text),
            &fmt_f64(s.per_kind_seconds.exercise),
            &fmt_f64(s.per_kind_seconds.quiz),
            &fmt_f64(s.bloom_seconds[0]),
            &fmt_f64(s.bloom_seconds[1]),
            &fmt_f64(s.bloom_seconds[2]),
            &fmt_f64(s.bloom_seconds[3]),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_sessions_csv<R: Read>(reader: R) -> Result<Vec<Session>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers()?;
        if headers.len() != SESSIONS_HEADER.len() {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected {} session columns, found {}",
                    SESSIONS_HEADER.len(),
                    headers.len()
                ),
            });
        }
    }
    let mut sessions = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse { line, message };
        let field = |idx: usize| record.get(idx).unwrap_or("").trim();
        let num = |idx: usize| -> Result<f64> {
            field(idx)
                .parse::<f64>()
                .map_err(|_| parse_err(format!("bad number {:?} in column {idx}", field(idx))))
        };
        let session = Session {
            student_id: field(0).to_string(),
            subject: field(1).to_string(),
            start: field(2)
                .parse()
                .map_err(|_| parse_err(format!("bad start {:?}", field(2))))?,
            end: field(3)
                .parse()
                .map_err(|_| parse_err(format!("bad end {:?}", field(3))))?,
            kind: SessionKind::parse(field(4))
                .ok_or_else(|| parse_err(format!("unknown session kind {:?}", field(4))))?,
            duration: num(5)?,
            quiz_score: if field(6).is_empty() { None } else { Some(num(6)?) },
            per_kind_seconds: KindSeconds {
                text: num(7)?,
                exercise: num(8)?,
                quiz: num(9)?,
            },
            bloom_seconds: [num(10)?, num(11)?, num(12)?, num(13)?],
        };
        sessions.push(session);
    }
    Ok(sessions)
}
