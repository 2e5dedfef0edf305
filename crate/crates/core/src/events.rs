//! Raw event log records and their CSV layout.
//!
//! The input CSV is `student_id,timestamp,subject,kind,bloom,score,duration`
//! with a header row. `timestamp` is integer UTC seconds. `bloom` carries the
//! six-level taxonomy level of the exercise (1..=6) and is regrouped to the
//! four working groups on ingest; `score`/`duration` are present exactly for
//! quiz records. Empty fields mean "absent".

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::{bloom_group, bloom_group_representative};
use crate::Result;

/// What a log record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Text,
    Exercise,
    Quiz,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Text => "text",
            EventKind::Exercise => "exercise",
            EventKind::Quiz => "quiz",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "text" => Some(EventKind::Text),
            "exercise" => Some(EventKind::Exercise),
            "quiz" => Some(EventKind::Quiz),
            _ => None,
        }
    }
}

/// One page access or quiz completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub student_id: String,
    /// UTC seconds.
    pub timestamp: i64,
    pub subject: String,
    pub kind: EventKind,
    /// Working Bloom group 1..=4; only on exercises.
    pub bloom_group: Option<u8>,
    /// Final quiz score in [0,1]; only on quizzes.
    pub quiz_score: Option<f64>,
    /// Total quiz time in seconds; only on quizzes.
    pub quiz_duration: Option<f64>,
}

impl RawEvent {
    /// Checks the record-level invariants: score/duration iff quiz, bloom
    /// only on exercises, score in [0,1], non-negative times.
    pub fn validate(&self) -> Result<()> {
        if self.timestamp < 0 {
            return Err(Error::validation(format!(
                "negative timestamp {} for student {}",
                self.timestamp, self.student_id
            )));
        }
        match self.kind {
            EventKind::Quiz => {
                let score = self.quiz_score.ok_or_else(|| {
                    Error::validation("quiz event without a score".to_string())
                })?;
                let duration = self.quiz_duration.ok_or_else(|| {
                    Error::validation("quiz event without a duration".to_string())
                })?;
                if !(0.0..=1.0).contains(&score) {
                    return Err(Error::validation(format!(
                        "quiz score {score} outside [0,1]"
                    )));
                }
                if !duration.is_finite() || duration < 0.0 {
                    return Err(Error::validation(format!(
                        "negative or non-finite quiz duration {duration}"
                    )));
                }
                if self.bloom_group.is_some() {
                    return Err(Error::validation(
                        "bloom group on a quiz event".to_string(),
                    ));
                }
            }
            EventKind::Text | EventKind::Exercise => {
                if self.quiz_score.is_some() || self.quiz_duration.is_some() {
                    return Err(Error::validation(format!(
                        "score/duration on a non-quiz {} event",
                        self.kind.as_str()
                    )));
                }
                if self.kind == EventKind::Text && self.bloom_group.is_some() {
                    return Err(Error::validation(
                        "bloom group on a text event".to_string(),
                    ));
                }
                if let Some(g) = self.bloom_group {
                    if !(1..=4).contains(&g) {
                        return Err(Error::validation(format!("bloom group {g} outside 1..=4")));
                    }
                }
            }
        }
        Ok(())
    }
}

pub const EVENTS_HEADER: [&str; 7] = [
    "student_id",
    "timestamp",
    "subject",
    "kind",
    "bloom",
    "score",
    "duration",
];

/// Parses the documented event CSV, in input order.
///
/// Raw Bloom levels (1..=6) are regrouped to the four working groups.
/// Any malformed line fails the whole parse with its line number.
pub fn parse_events<R: Read>(reader: R) -> Result<Vec<RawEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    {
        let headers = rdr.headers()?;
        if headers.len() != EVENTS_HEADER.len()
            || headers.iter().zip(EVENTS_HEADER).any(|(h, want)| h != want)
        {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "unexpected header {:?}; expected {:?}",
                    headers.iter().collect::<Vec<_>>(),
                    EVENTS_HEADER
                ),
            });
        }
    }

    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse { line, message };

        let field = |idx: usize| record.get(idx).unwrap_or("").trim();

        let student_id = field(0).to_string();
        if student_id.is_empty() {
            return Err(parse_err("empty student_id".to_string()));
        }
        let timestamp: i64 = field(1)
            .parse()
            .map_err(|_| parse_err(format!("bad timestamp {:?}", field(1))))?;
        let subject = field(2).to_string();
        if subject.is_empty() {
            return Err(parse_err("empty subject".to_string()));
        }
        let kind = EventKind::parse(field(3))
            .ok_or_else(|| parse_err(format!("unknown kind {:?}", field(3))))?;

        let opt_field = |idx: usize| {
            let v = field(idx);
            if v.is_empty() {
                None
            } else {
                Some(v)
            }
        };

        let bloom_group = match opt_field(4) {
            Some(v) => {
                let raw: u8 = v
                    .parse()
                    .map_err(|_| parse_err(format!("bad bloom level {v:?}")))?;
                Some(
                    bloom_group(raw)
                        .map_err(|e| parse_err(e.to_string()))?,
                )
            }
            None => None,
        };
        let quiz_score = match opt_field(5) {
            Some(v) => Some(
                v.parse::<f64>()
                    .map_err(|_| parse_err(format!("bad score {v:?}")))?,
            ),
            None => None,
        };
        let quiz_duration = match opt_field(6) {
            Some(v) => Some(
                v.parse::<f64>()
                    .map_err(|_| parse_err(format!("bad duration {v:?}")))?,
            ),
            None => None,
        };

        let event = RawEvent {
            student_id,
            timestamp,
            subject,
            kind,
            bloom_group,
            quiz_score,
            quiz_duration,
        };
        event
            .validate()
            .map_err(|e| parse_err(e.to_string()))?;
        events.push(event);
    }
    Ok(events)
}

/// Writes events back to the documented CSV layout.
///
/// Bloom groups are emitted as their canonical raw-level representative
/// (group 1 -> level 1, 2 -> 3, 3 -> 4, 4 -> 6), so the file round-trips
/// through [`parse_events`].
pub fn write_events_csv<W: Write>(writer: W, events: &[RawEvent]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(EVENTS_HEADER)?;
    for e in events {
        wtr.write_record([
            e.student_id.as_str(),
            &e.timestamp.to_string(),
            e.subject.as_str(),
            e.kind.as_str(),
            &e.bloom_group
                .map(|g| bloom_group_representative(g).to_string())
                .unwrap_or_default(),
            &e.quiz_score.map(fmt_f64).unwrap_or_default(),
            &e.quiz_duration.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Fixed decimal serialization: 17 significant digits, bit-exact on re-parse.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
