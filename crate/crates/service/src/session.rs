//! Study sessions as a state machine driven by logged events.
//!
//! Commands validate against the current [`Session`] and produce an
//! [`EventKind`]; [`apply`] is the only place state changes, so replaying the
//! log rebuilds sessions exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use artrec_core::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("session {0:?} not found")]
    NotFound(String),
    #[error("visiting_style is required (one of ant, fish, grasshopper, butterfly)")]
    MissingVisitingStyle,
    #[error("unknown visiting style {0:?} (expected ant, fish, grasshopper or butterfly)")]
    InvalidVisitingStyle(String),
    #[error("ratings were already submitted for this session")]
    AlreadyRated,
    #[error("missing ratings for {}", .0.join(", "))]
    MissingRatings(Vec<String>),
    #[error("painting {0:?} was not part of the elicitation set")]
    UnexpectedRating(String),
    #[error("painting {0:?} rated twice")]
    DuplicateRating(String),
    #[error("rating for {id:?} must be in 1..=5 (got {value})")]
    RatingOutOfRange { id: String, value: i64 },
    #[error("ratings must be submitted before recommendations")]
    RatingsRequired,
    #[error("engine index {0} out of range 0..5")]
    IndexOutOfRange(usize),
    #[error("engine {requested} is not available yet; submit feedback for engine {current} first")]
    OutOfOrder { requested: usize, current: usize },
    #[error("engine {0} was already reviewed and cannot be revisited")]
    AlreadyReviewed(usize),
    #[error("engine {0} has not been served in this session")]
    EngineNotServed(String),
    #[error("feedback for engine {0} was already submitted")]
    DuplicateFeedback(String),
    #[error("{field} must be in 1..=5 (got {value})")]
    FeedbackOutOfRange { field: &'static str, value: i64 },
    #[error("unknown engine {0:?}")]
    UnknownEngine(String),
    #[error("session is already complete")]
    Complete,
    #[error("event log inconsistent at seq {seq}: {reason}")]
    Inconsistent { seq: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitingStyle {
    Ant,
    Fish,
    Grasshopper,
    Butterfly,
}

impl VisitingStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            VisitingStyle::Ant => "ant",
            VisitingStyle::Fish => "fish",
            VisitingStyle::Grasshopper => "grasshopper",
            VisitingStyle::Butterfly => "butterfly",
        }
    }
}

impl FromStr for VisitingStyle {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ant" => Ok(VisitingStyle::Ant),
            "fish" => Ok(VisitingStyle::Fish),
            "grasshopper" => Ok(VisitingStyle::Grasshopper),
            "butterfly" => Ok(VisitingStyle::Butterfly),
            _ => Err(SessionError::InvalidVisitingStyle(s.to_string())),
        }
    }
}

impl fmt::Display for VisitingStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: Option<String>,
    pub gender: Option<String>,
}

/// Answers to the four quality questions, each on a 1–5 Likert scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub accuracy: u8,
    pub diversity: u8,
    pub novelty: u8,
    pub serendipity: u8,
}

impl Feedback {
    /// Validates raw integers, naming the first field out of range.
    pub fn new(accuracy: i64, diversity: i64, novelty: i64, serendipity: i64) -> Result<Self, SessionError> {
        let check = |field: &'static str, value: i64| {
            if (1..=5).contains(&value) {
                Ok(value as u8)
            } else {
                Err(SessionError::FeedbackOutOfRange { field, value })
            }
        };
        Ok(Self {
            accuracy: check("accuracy", accuracy)?,
            diversity: check("diversity", diversity)?,
            novelty: check("novelty", novelty)?,
            serendipity: check("serendipity", serendipity)?,
        })
    }
}

/// Where a participant is in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Elicitation,
    Engine(usize),
    Done,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Elicitation => f.write_str("elicitation"),
            Step::Engine(i) => write!(f, "engine_{i}"),
            Step::Done => f.write_str("done"),
        }
    }
}

impl Serialize for Step {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

pub type RankedList = Vec<(String, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Served {
    pub engine: Engine,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub engine: Engine,
    pub feedback: Feedback,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub demographics: Demographics,
    pub visiting_style: VisitingStyle,
    pub engine_order: Vec<Engine>,
    pub elicitation: Vec<String>,
    pub ratings: Option<Vec<(String, u8)>>,
    pub ratings_at: Option<DateTime<Utc>>,
    pub rankings: BTreeMap<Engine, RankedList>,
    pub served: Vec<Served>,
    pub feedback: Vec<FeedbackEntry>,
    pub completed_at: Option<DateTime<Utc>>,
}

/// What a recommendation request resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// First time this engine is shown; must be logged.
    Serve(Engine),
    /// Already served and awaiting feedback; same list again.
    Repeat(Engine),
}

impl Session {
    pub fn step(&self) -> Step {
        if self.completed_at.is_some() {
            Step::Done
        } else if self.ratings.is_none() {
            Step::Elicitation
        } else {
            Step::Engine(self.feedback.len())
        }
    }

    pub fn is_complete(&self) -> bool {
        self.completed_at.is_some()
    }

    /// Validates a full ratings submission against the elicitation set.
    pub fn check_ratings(&self, ratings: &[(String, i64)]) -> Result<Vec<(String, u8)>, SessionError> {
        if self.ratings.is_some() {
            return Err(SessionError::AlreadyRated);
        }
        let expected: BTreeSet<&str> = self.elicitation.iter().map(String::as_str).collect();
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(ratings.len());
        for (id, value) in ratings {
            if !expected.contains(id.as_str()) {
                return Err(SessionError::UnexpectedRating(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(SessionError::DuplicateRating(id.clone()));
            }
            if !(1..=5).contains(value) {
                return Err(SessionError::RatingOutOfRange {
                    id: id.clone(),
                    value: *value,
                });
            }
            out.push((id.clone(), *value as u8));
        }
        let missing: Vec<String> = self
            .elicitation
            .iter()
            .filter(|id| !seen.contains(id.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(SessionError::MissingRatings(missing));
        }
        Ok(out)
    }

    pub fn check_recommendation(&self, index: usize) -> Result<Delivery, SessionError> {
        if index >= self.engine_order.len() {
            return Err(SessionError::IndexOutOfRange(index));
        }
        if self.ratings.is_none() {
            return Err(SessionError::RatingsRequired);
        }
        let current = self.feedback.len();
        if index < current {
            return Err(SessionError::AlreadyReviewed(index));
        }
        if index > current {
            return Err(SessionError::OutOfOrder {
                requested: index,
                current,
            });
        }
        let engine = self.engine_order[index];
        if self.served.len() > index {
            Ok(Delivery::Repeat(engine))
        } else {
            Ok(Delivery::Serve(engine))
        }
    }

    pub fn check_feedback(&self, engine: Engine) -> Result<(), SessionError> {
        if self.is_complete() {
            return Err(SessionError::Complete);
        }
        if self.feedback.iter().any(|f| f.engine == engine) {
            return Err(SessionError::DuplicateFeedback(engine.to_string()));
        }
        match self.served.get(self.feedback.len()) {
            Some(s) if s.engine == engine => Ok(()),
            _ => Err(SessionError::EngineNotServed(engine.to_string())),
        }
    }

    /// Top-r list for the engine at `index`, if ratings are in.
    pub fn ranking_at(&self, index: usize) -> Option<&RankedList> {
        self.engine_order.get(index).and_then(|e| self.rankings.get(e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated {
        demographics: Demographics,
        visiting_style: VisitingStyle,
        engine_order: Vec<Engine>,
        elicitation: Vec<String>,
    },
    RatingsSubmitted {
        ratings: Vec<(String, u8)>,
        rankings: BTreeMap<Engine, RankedList>,
    },
    RecommendationsServed {
        index: usize,
        engine: Engine,
    },
    FeedbackSubmitted {
        engine: Engine,
        feedback: Feedback,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub session_id: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

pub type Sessions = BTreeMap<String, Session>;

/// Applies one event. Rechecks the flow rules so a damaged log is reported
/// rather than silently producing an impossible session.
pub fn apply(sessions: &mut Sessions, event: &Event) -> Result<(), SessionError> {
    let bad = |reason: String| SessionError::Inconsistent {
        seq: event.seq,
        reason,
    };
    if let EventKind::SessionCreated {
        demographics,
        visiting_style,
        engine_order,
        elicitation,
    } = &event.kind
    {
        if sessions.contains_key(&event.session_id) {
            return Err(bad(format!("session {} created twice", event.session_id)));
        }
        sessions.insert(
            event.session_id.clone(),
            Session {
                id: event.session_id.clone(),
                created_at: event.at,
                demographics: demographics.clone(),
                visiting_style: *visiting_style,
                engine_order: engine_order.clone(),
                elicitation: elicitation.clone(),
                ratings: None,
                ratings_at: None,
                rankings: BTreeMap::new(),
                served: Vec::new(),
                feedback: Vec::new(),
                completed_at: None,
            },
        );
        return Ok(());
    }
    let session = sessions
        .get_mut(&event.session_id)
        .ok_or_else(|| bad(format!("unknown session {}", event.session_id)))?;
    match &event.kind {
        EventKind::SessionCreated { .. } => unreachable!(),
        EventKind::RatingsSubmitted { ratings, rankings } => {
            let raw: Vec<(String, i64)> = ratings.iter().map(|(id, r)| (id.clone(), *r as i64)).collect();
            session.check_ratings(&raw).map_err(|e| bad(e.to_string()))?;
            session.ratings = Some(ratings.clone());
            session.ratings_at = Some(event.at);
            session.rankings = rankings.clone();
        }
        EventKind::RecommendationsServed { index, engine } => {
            match session.check_recommendation(*index).map_err(|e| bad(e.to_string()))? {
                Delivery::Serve(e) if e == *engine => {}
                other => return Err(bad(format!("unexpected serve of {engine} ({other:?})"))),
            }
            session.served.push(Served {
                engine: *engine,
                at: event.at,
            });
        }
        EventKind::FeedbackSubmitted { engine, feedback } => {
            session.check_feedback(*engine).map_err(|e| bad(e.to_string()))?;
            session.feedback.push(FeedbackEntry {
                engine: *engine,
                feedback: *feedback,
                at: event.at,
            });
            if session.feedback.len() == session.engine_order.len() {
                session.completed_at = Some(event.at);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(seq: u64, kind: EventKind) -> Event {
        Event {
            seq,
            at: DateTime::from_timestamp(1_700_000_000 + seq as i64, 0).unwrap(),
            session_id: "s1".into(),
            kind,
        }
    }

    fn created() -> Sessions {
        let mut s = Sessions::new();
        apply(
            &mut s,
            &event(
                1,
                EventKind::SessionCreated {
                    demographics: Demographics::default(),
                    visiting_style: VisitingStyle::Fish,
                    engine_order: Engine::ALL.to_vec(),
                    elicitation: vec!["a".into(), "b".into()],
                },
            ),
        )
        .unwrap();
        s
    }

    fn rated() -> Sessions {
        let mut s = created();
        let rankings = Engine::ALL.iter().map(|&e| (e, vec![("c".to_string(), 0.5)])).collect();
        apply(
            &mut s,
            &event(
                2,
                EventKind::RatingsSubmitted {
                    ratings: vec![("a".into(), 3), ("b".into(), 5)],
                    rankings,
                },
            ),
        )
        .unwrap();
        s
    }

    #[test]
    fn visiting_style_parse() {
        assert_eq!("Butterfly".parse::<VisitingStyle>().unwrap(), VisitingStyle::Butterfly);
        assert!(matches!("bee".parse::<VisitingStyle>(), Err(SessionError::InvalidVisitingStyle(_))));
    }

    #[test]
    fn ratings_coverage() {
        let s = &created()["s1"];
        let missing = s.check_ratings(&[("a".into(), 3)]).unwrap_err();
        assert_eq!(missing, SessionError::MissingRatings(vec!["b".into()]));
        assert!(missing.to_string().contains('b'));
        assert_eq!(
            s.check_ratings(&[("a".into(), 6), ("b".into(), 1)]),
            Err(SessionError::RatingOutOfRange { id: "a".into(), value: 6 })
        );
        assert_eq!(
            s.check_ratings(&[("a".into(), 1), ("z".into(), 1)]),
            Err(SessionError::UnexpectedRating("z".into()))
        );
        assert_eq!(
            s.check_ratings(&[("a".into(), 1), ("a".into(), 1)]),
            Err(SessionError::DuplicateRating("a".into()))
        );
        assert!(s.check_ratings(&[("b".into(), 2), ("a".into(), 1)]).is_ok());
    }

    #[test]
    fn sequential_flow() {
        let mut s = created();
        assert_eq!(s["s1"].check_recommendation(0), Err(SessionError::RatingsRequired));
        s = rated();
        assert_eq!(s["s1"].step(), Step::Engine(0));
        assert_eq!(s["s1"].check_recommendation(0), Ok(Delivery::Serve(Engine::Lda)));
        assert_eq!(
            s["s1"].check_recommendation(1),
            Err(SessionError::OutOfOrder { requested: 1, current: 0 })
        );
        assert_eq!(s["s1"].check_recommendation(5), Err(SessionError::IndexOutOfRange(5)));
        assert_eq!(
            s["s1"].check_feedback(Engine::Lda),
            Err(SessionError::EngineNotServed("lda".into()))
        );
        apply(&mut s, &event(3, EventKind::RecommendationsServed { index: 0, engine: Engine::Lda })).unwrap();
        assert_eq!(s["s1"].check_recommendation(0), Ok(Delivery::Repeat(Engine::Lda)));
        assert_eq!(
            s["s1"].check_feedback(Engine::Bert),
            Err(SessionError::EngineNotServed("bert".into()))
        );
        let fb = Feedback::new(4, 3, 2, 5).unwrap();
        apply(&mut s, &event(4, EventKind::FeedbackSubmitted { engine: Engine::Lda, feedback: fb })).unwrap();
        assert_eq!(s["s1"].check_feedback(Engine::Lda), Err(SessionError::DuplicateFeedback("lda".into())));
        assert_eq!(s["s1"].check_recommendation(0), Err(SessionError::AlreadyReviewed(0)));
        assert_eq!(s["s1"].step(), Step::Engine(1));
    }

    #[test]
    fn fifth_feedback_completes() {
        let mut s = rated();
        let fb = Feedback::new(1, 2, 3, 4).unwrap();
        let mut seq = 3;
        for (i, e) in Engine::ALL.into_iter().enumerate() {
            apply(&mut s, &event(seq, EventKind::RecommendationsServed { index: i, engine: e })).unwrap();
            apply(&mut s, &event(seq + 1, EventKind::FeedbackSubmitted { engine: e, feedback: fb })).unwrap();
            seq += 2;
        }
        assert!(s["s1"].is_complete());
        assert_eq!(s["s1"].step(), Step::Done);
        assert_eq!(s["s1"].check_feedback(Engine::Lda), Err(SessionError::Complete));
    }

    #[test]
    fn feedback_range() {
        assert_eq!(
            Feedback::new(1, 0, 3, 4),
            Err(SessionError::FeedbackOutOfRange { field: "diversity", value: 0 })
        );
    }

    #[test]
    fn inconsistent_log_detected() {
        let mut s = rated();
        let err = apply(&mut s, &event(9, EventKind::RecommendationsServed { index: 1, engine: Engine::Bert }));
        assert!(matches!(err, Err(SessionError::Inconsistent { seq: 9, .. })));
    }

    #[test]
    fn event_json_shape() {
        let e = event(3, EventKind::RecommendationsServed { index: 0, engine: Engine::LdaResnet });
        let json = serde_json::to_string(&e).unwrap();
        assert!(json.contains(r#""kind":"recommendations_served""#), "{json}");
        assert!(json.contains(r#""engine":"lda+resnet""#));
        assert_eq!(serde_json::from_str::<Event>(&json).unwrap(), e);
        assert_eq!(Step::Engine(2).to_string(), "engine_2");
    }
}
