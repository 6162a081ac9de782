//! The study: corpus, matrices and live sessions behind one writer lock.

use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard};

use artrec_core::corpus::{sample_elicitation, CorpusError};
use artrec_core::recsys::{engine_rankings, EngineMatrices, FusionMode, RecError, UserRatings};
use artrec_core::{load_corpus, Corpus, Engine, Painting};
use chrono::Utc;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ServiceConfig};
use crate::matrices::{load_all, MatrixError};
use crate::session::{apply, Delivery, Demographics, Event, EventKind, Feedback, Session, SessionError, Sessions, Step};
use crate::store::{EventLog, StoreError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rec(#[from] RecError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("similarity matrices do not list the corpus paintings in corpus order")]
    MatrixOrder,
    #[error("r = {r} leaves no room: corpus has {m} paintings and {groups} are elicited")]
    RTooLarge { r: usize, m: usize, groups: usize },
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub r: usize,
    pub fusion: FusionMode,
    pub seed: u64,
    pub data_dir: PathBuf,
    pub snapshot_every: u64,
    pub durable: bool,
}

impl StudyOptions {
    pub fn from_config(cfg: &ServiceConfig) -> Self {
        Self {
            r: cfg.r,
            fusion: cfg.fusion,
            seed: cfg.seed,
            data_dir: cfg.data_dir.clone(),
            snapshot_every: cfg.snapshot_every,
            durable: cfg.durable,
        }
    }
}

/// Painting fields shown to participants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaintingCard {
    pub id: String,
    pub title: String,
    pub artist: String,
    pub date: String,
    pub image_ref: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl PaintingCard {
    fn new(p: &Painting, score: Option<f64>) -> Self {
        Self {
            id: p.id.clone(),
            title: p.title.clone(),
            artist: p.artist.clone(),
            date: p.date.clone(),
            image_ref: p.image_ref.clone(),
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendations {
    pub index: usize,
    pub engine_id: Engine,
    pub paintings: Vec<PaintingCard>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionStatus {
    pub session_id: String,
    pub step: Step,
    pub engines_total: usize,
    pub engines_reviewed: usize,
    pub complete: bool,
}

impl SessionStatus {
    fn of(s: &Session) -> Self {
        Self {
            session_id: s.id.clone(),
            step: s.step(),
            engines_total: s.engine_order.len(),
            engines_reviewed: s.feedback.len(),
            complete: s.is_complete(),
        }
    }
}

struct Inner {
    sessions: Sessions,
    log: EventLog,
}

pub struct Study {
    corpus: Corpus,
    matrices: EngineMatrices,
    opts: StudyOptions,
    inner: Mutex<Inner>,
}

fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Seed for a session's elicitation draw, derived from its id.
pub fn elicitation_seed(session_id: &str) -> u64 {
    let d = digest(&[b"elicitation", session_id.as_bytes()]);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Uniform random permutation of the five engines for one session.
pub fn engine_order(seed: u64, session_id: &str) -> Vec<Engine> {
    let d = digest(&[b"engine-order", &seed.to_le_bytes(), session_id.as_bytes()]);
    let mut rng = ChaCha8Rng::from_seed(d);
    let mut order = Engine::ALL.to_vec();
    order.shuffle(&mut rng);
    order
}

fn session_id(seed: u64, n: u64) -> String {
    let d = digest(&[b"session", &seed.to_le_bytes(), &n.to_le_bytes()]);
    d[..10].iter().map(|b| format!("{b:02x}")).collect()
}

impl Study {
    pub fn new(corpus: Corpus, matrices: EngineMatrices, opts: StudyOptions) -> Result<Self, StudyError> {
        for e in Engine::BASE {
            let m = matrices.get(e)?;
            if !m.ids().iter().map(String::as_str).eq(corpus.ids()) {
                return Err(StudyError::MatrixOrder);
            }
        }
        let groups = corpus.story_groups().count();
        if groups == 0 {
            return Err(CorpusError::NoStoryGroups.into());
        }
        if opts.r == 0 || opts.r + groups > corpus.len() {
            return Err(StudyError::RTooLarge {
                r: opts.r,
                m: corpus.len(),
                groups,
            });
        }
        let (log, replayed) = EventLog::open(&opts.data_dir, opts.snapshot_every, opts.durable)?;
        tracing::info!(
            sessions = replayed.sessions.len(),
            events = replayed.events_replayed,
            "event log replayed"
        );
        Ok(Self {
            corpus,
            matrices,
            opts,
            inner: Mutex::new(Inner {
                sessions: replayed.sessions,
                log,
            }),
        })
    }

    /// Loads corpus and matrices named in the config, then replays the log.
    pub fn open(cfg: &ServiceConfig) -> Result<Self, StudyError> {
        cfg.validate()?;
        let corpus = load_corpus(&cfg.corpus)?;
        let e = &cfg.embeddings;
        let matrices = load_all(
            [e.lda.as_deref(), e.bert.as_deref(), e.resnet.as_deref()],
            &corpus,
            cfg.cache_dir.as_deref(),
        )?;
        Self::new(corpus, matrices, StudyOptions::from_config(cfg))
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn options(&self) -> &StudyOptions {
        &self.opts
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // a panic mid-request leaves the state as it was after the last applied event
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn commit(inner: &mut Inner, session_id: &str, kind: EventKind) -> Result<(), StudyError> {
        let event = Event {
            seq: inner.log.next_seq(),
            at: Utc::now(),
            session_id: session_id.to_string(),
            kind,
        };
        inner.log.append(&event)?;
        apply(&mut inner.sessions, &event)?;
        if let Err(e) = inner.log.maybe_snapshot(&inner.sessions) {
            tracing::warn!(error = %e, "snapshot failed; the log alone remains authoritative");
        }
        Ok(())
    }

    pub fn create_session(
        &self,
        demographics: Demographics,
        visiting_style: Option<&str>,
    ) -> Result<SessionStatus, StudyError> {
        let style = visiting_style.ok_or(SessionError::MissingVisitingStyle)?.parse()?;
        let mut inner = self.lock();
        let mut n = inner.sessions.len() as u64;
        let id = loop {
            let id = session_id(self.opts.seed, n);
            if !inner.sessions.contains_key(&id) {
                break id;
            }
            n += 1;
        };
        let elicitation = sample_elicitation(&self.corpus, elicitation_seed(&id))?
            .into_iter()
            .map(|p| p.id.clone())
            .collect();
        let kind = EventKind::SessionCreated {
            demographics,
            visiting_style: style,
            engine_order: engine_order(self.opts.seed, &id),
            elicitation,
        };
        Self::commit(&mut inner, &id, kind)?;
        Ok(SessionStatus::of(&inner.sessions[&id]))
    }

    pub fn status(&self, id: &str) -> Result<SessionStatus, StudyError> {
        let inner = self.lock();
        Ok(SessionStatus::of(get(&inner.sessions, id)?))
    }

    pub fn session(&self, id: &str) -> Result<Session, StudyError> {
        Ok(get(&self.lock().sessions, id)?.clone())
    }

    /// Copy of every session, for export and tests.
    pub fn sessions(&self) -> Sessions {
        self.lock().sessions.clone()
    }

    pub fn elicitation(&self, id: &str) -> Result<Vec<PaintingCard>, StudyError> {
        let inner = self.lock();
        let s = get(&inner.sessions, id)?;
        if s.ratings.is_some() {
            return Err(SessionError::AlreadyRated.into());
        }
        Ok(s.elicitation.iter().map(|pid| self.card(pid, None)).collect())
    }

    pub fn submit_ratings(&self, id: &str, ratings: &[(String, i64)]) -> Result<SessionStatus, StudyError> {
        let mut inner = self.lock();
        let s = get(&inner.sessions, id)?;
        let checked = s.check_ratings(ratings)?;
        let user = UserRatings::new(checked.iter().cloned())?;
        let rankings = engine_rankings(&user, &self.matrices, self.opts.r, self.opts.fusion)?
            .into_iter()
            .map(|(e, r)| (e, r.items))
            .collect();
        Self::commit(
            &mut inner,
            id,
            EventKind::RatingsSubmitted {
                ratings: checked,
                rankings,
            },
        )?;
        Ok(SessionStatus::of(&inner.sessions[id]))
    }

    pub fn recommendations(&self, id: &str, index: usize) -> Result<Recommendations, StudyError> {
        let mut inner = self.lock();
        let s = get(&inner.sessions, id)?;
        let engine = match s.check_recommendation(index)? {
            Delivery::Repeat(e) => e,
            Delivery::Serve(e) => {
                Self::commit(&mut inner, id, EventKind::RecommendationsServed { index, engine: e })?;
                e
            }
        };
        let s = &inner.sessions[id];
        let list = s.ranking_at(index).expect("rankings stored with ratings");
        Ok(Recommendations {
            index,
            engine_id: engine,
            paintings: list.iter().map(|(pid, score)| self.card(pid, Some(*score))).collect(),
        })
    }

    pub fn submit_feedback(&self, id: &str, engine: &str, feedback: Feedback) -> Result<SessionStatus, StudyError> {
        let engine: Engine = engine
            .parse()
            .map_err(|_| SessionError::UnknownEngine(engine.to_string()))?;
        let mut inner = self.lock();
        get(&inner.sessions, id)?.check_feedback(engine)?;
        Self::commit(&mut inner, id, EventKind::FeedbackSubmitted { engine, feedback })?;
        Ok(SessionStatus::of(&inner.sessions[id]))
    }

    /// Forces a snapshot of the current state.
    pub fn snapshot(&self) -> Result<(), StudyError> {
        let mut inner = self.lock();
        let Inner { sessions, log } = &mut *inner;
        log.snapshot(sessions)?;
        Ok(())
    }

    fn card(&self, painting_id: &str, score: Option<f64>) -> PaintingCard {
        let p = self.corpus.get(painting_id).expect("session ids come from the corpus");
        PaintingCard::new(p, score)
    }
}

fn get<'a>(sessions: &'a Sessions, id: &str) -> Result<&'a Session, SessionError> {
    sessions.get(id).ok_or_else(|| SessionError::NotFound(id.to_string()))
}
