//! Tabular exports: one feedback row per (session, engine) and the per-session
//! ranked lists used for overlap analysis.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::Sessions;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("rankings row {row}: {reason}")]
    Rankings { row: usize, reason: String },
}

pub const FEEDBACK_HEADER: [&str; 12] = [
    "session_id",
    "created_at",
    "age",
    "gender",
    "visiting_style",
    "position",
    "engine",
    "accuracy",
    "diversity",
    "novelty",
    "serendipity",
    "submitted_at",
];

pub const RANKINGS_HEADER: [&str; 5] = ["session_id", "engine", "rank", "painting_id", "score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRow {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub age: Option<String>,
    pub gender: Option<String>,
    pub visiting_style: String,
    /// 0-based position of the engine in the session's order.
    pub position: usize,
    pub engine: String,
    pub accuracy: u8,
    pub diversity: u8,
    pub novelty: u8,
    pub serendipity: u8,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub session_id: String,
    pub engine: String,
    /// 1-based.
    pub rank: usize,
    pub painting_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportBundle {
    pub feedback: Vec<FeedbackRow>,
    /// session → engine → ranked painting ids, completed sessions only.
    pub rankings: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

/// Every submitted feedback form, including those of unfinished sessions.
pub fn feedback_rows(sessions: &Sessions) -> Vec<FeedbackRow> {
    let mut rows = Vec::new();
    for s in sessions.values() {
        for (position, f) in s.feedback.iter().enumerate() {
            rows.push(FeedbackRow {
                session_id: s.id.clone(),
                created_at: s.created_at,
                age: s.demographics.age.clone(),
                gender: s.demographics.gender.clone(),
                visiting_style: s.visiting_style.to_string(),
                position,
                engine: f.engine.to_string(),
                accuracy: f.feedback.accuracy,
                diversity: f.feedback.diversity,
                novelty: f.feedback.novelty,
                serendipity: f.feedback.serendipity,
                submitted_at: f.at,
            });
        }
    }
    rows
}

pub fn ranking_rows(sessions: &Sessions) -> Vec<RankingRow> {
    let mut rows = Vec::new();
    for s in sessions.values().filter(|s| s.is_complete()) {
        for (engine, list) in &s.rankings {
            for (i, (pid, score)) in list.iter().enumerate() {
                rows.push(RankingRow {
                    session_id: s.id.clone(),
                    engine: engine.to_string(),
                    rank: i + 1,
                    painting_id: pid.clone(),
                    score: *score,
                });
            }
        }
    }
    rows
}

pub fn rankings_map(sessions: &Sessions) -> BTreeMap<String, BTreeMap<String, Vec<String>>> {
    let mut out: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    for row in ranking_rows(sessions) {
        out.entry(row.session_id)
            .or_default()
            .entry(row.engine)
            .or_default()
            .push(row.painting_id);
    }
    out
}

pub fn bundle(sessions: &Sessions) -> ExportBundle {
    ExportBundle {
        feedback: feedback_rows(sessions),
        rankings: rankings_map(sessions),
    }
}

fn to_csv<T: Serialize>(header: &[&str], rows: &[T]) -> Result<String, ExportError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| ExportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn feedback_csv(sessions: &Sessions) -> Result<String, ExportError> {
    to_csv(&FEEDBACK_HEADER, &feedback_rows(sessions))
}

pub fn rankings_csv(sessions: &Sessions) -> Result<String, ExportError> {
    to_csv(&RANKINGS_HEADER, &ranking_rows(sessions))
}

/// Reads a rankings CSV back into session → engine → ids, ordered by rank.
pub fn read_rankings_csv(reader: impl Read) -> Result<BTreeMap<String, BTreeMap<String, Vec<String>>>, ExportError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut ranked: BTreeMap<String, BTreeMap<String, Vec<(usize, String)>>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<RankingRow>().enumerate() {
        let row = row?;
        if row.rank == 0 {
            return Err(ExportError::Rankings {
                row: i + 1,
                reason: "rank must be ≥ 1".into(),
            });
        }
        ranked
            .entry(row.session_id)
            .or_default()
            .entry(row.engine)
            .or_default()
            .push((row.rank, row.painting_id));
    }
    let mut out = BTreeMap::new();
    for (session, engines) in ranked {
        let mut per = BTreeMap::new();
        for (engine, mut items) in engines {
            items.sort();
            for (k, (rank, _)) in items.iter().enumerate() {
                if *rank != k + 1 {
                    return Err(ExportError::Rankings {
                        row: 0,
                        reason: format!("session {session} engine {engine}: ranks are not 1..n"),
                    });
                }
            }
            per.insert(engine, items.into_iter().map(|(_, id)| id).collect());
        }
        out.insert(session, per);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_store_gives_header_only() {
        let s = Sessions::new();
        assert_eq!(feedback_csv(&s).unwrap(), FEEDBACK_HEADER.join(",") + "\n");
        assert_eq!(rankings_csv(&s).unwrap(), RANKINGS_HEADER.join(",") + "\n");
        assert!(read_rankings_csv(rankings_csv(&s).unwrap().as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn rankings_csv_reorders_by_rank() {
        let text = "session_id,engine,rank,painting_id,score\ns,lda,2,b,0.1\ns,lda,1,a,0.2\n";
        let m = read_rankings_csv(text.as_bytes()).unwrap();
        assert_eq!(m["s"]["lda"], vec!["a", "b"]);
        let gap = "session_id,engine,rank,painting_id,score\ns,lda,2,b,0.1\n";
        assert!(read_rankings_csv(gap.as_bytes()).is_err());
    }
}
