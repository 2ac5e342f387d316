use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{EngineError, SessionSpec, TestSession};
use crate::ims::Repository;
use crate::irt::EstimationStatus;

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Created {
        spec: SessionSpec,
        total_questions: usize,
        /// Full form in fixed mode, the first item in adaptive mode.
        form: Vec<String>,
    },
    QuestionServed {
        item_id: String,
        position: usize,
    },
    AnswerScored {
        item_id: String,
        choice_id: String,
        u: u8,
    },
    Estimated {
        theta: f64,
        standard_error: f64,
        status: EstimationStatus,
        iterations: usize,
    },
}

/// Line-delimited JSON event logs, one file per session: `<dir>/<session id>.jsonl`.
#[derive(Debug, Clone)]
pub struct SessionLog {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionLog {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, session_id: &str) -> Option<PathBuf> {
        valid_id(session_id).then(|| self.dir.join(format!("{session_id}.jsonl")))
    }

    /// Appends the session's events from `from_seq` on; returns the new persisted count.
    pub fn append(&self, session: &TestSession, from_seq: usize) -> Result<usize, EngineError> {
        let io = |e: std::io::Error| EngineError::Io(e.to_string());
        let path = self
            .path(session.id())
            .ok_or_else(|| EngineError::Io(format!("session id '{}' is not a valid file name", session.id())))?;
        fs::create_dir_all(&self.dir).map_err(io)?;
        let mut out = String::new();
        for event in session.events().iter().skip(from_seq) {
            out.push_str(&serde_json::to_string(event).expect("events serialize"));
            out.push('\n');
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        f.write_all(out.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)?;
        Ok(session.events().len())
    }

    pub fn read(&self, session_id: &str) -> Result<Vec<SessionEvent>, EngineError> {
        let path = self
            .path(session_id)
            .filter(|p| p.exists())
            .ok_or_else(|| EngineError::NotFound(session_id.to_string()))?;
        read_events(&path)
    }
}

pub fn read_events(path: &Path) -> Result<Vec<SessionEvent>, EngineError> {
    let file = fs::File::open(path).map_err(|e| EngineError::Io(e.to_string()))?;
    let mut events = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| EngineError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: SessionEvent = serde_json::from_str(&line).map_err(|e| EngineError::CorruptLog {
            seq: n as u64,
            message: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}

/// Rebuilds a session by re-running its logged answers through the state machine.
///
/// The regenerated events must reproduce the log, which may stop short of the
/// last regenerated event if the process died between two writes.
pub fn replay(events: &[SessionEvent], repo: &Repository) -> Result<TestSession, EngineError> {
    let corrupt = |seq: u64, message: &str| EngineError::CorruptLog {
        seq,
        message: message.to_string(),
    };
    let (first, rest) = events.split_first().ok_or_else(|| corrupt(0, "empty log"))?;
    let EventKind::Created { spec, .. } = &first.kind else {
        return Err(corrupt(first.seq, "first event is not 'created'"));
    };
    let competence = repo
        .competence(&spec.competence_ref)
        .ok_or_else(|| corrupt(first.seq, "competence no longer exists"))?;
    let mut session = TestSession::start(spec.clone(), competence, &repo.items, first.timestamp)?;
    for event in rest {
        if let EventKind::AnswerScored { item_id, choice_id, u } = &event.kind {
            session.submit_answer(item_id, choice_id, event.timestamp)?;
            if session.answers().last().map(|a| a.u) != Some(*u) {
                return Err(corrupt(event.seq, "score differs from the log"));
            }
        }
    }
    let regenerated = session.events();
    if regenerated.len() < events.len() || regenerated[..events.len()] != *events {
        return Err(corrupt(events.len() as u64, "replayed events differ from the log"));
    }
    Ok(session)
}

/// Loads `<dir>/<id>.jsonl` and replays it against `repo`.
pub fn resume_session(log: &SessionLog, session_id: &str, repo: &Repository) -> Result<TestSession, EngineError> {
    replay(&log.read(session_id)?, repo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SelectionMode;
    use crate::fixtures;
    use crate::irt::EstimationConfig;

    fn spec(id: &str) -> SessionSpec {
        SessionSpec {
            session_id: id.into(),
            learner_ref: fixtures::SAMPLE_LEARNER_ID.into(),
            competence_ref: "sql".into(),
            mode: SelectionMode::FixedByImportance,
            config: EstimationConfig::default().with_theta_initial(1.0),
            shuffle_seed: Some(7),
        }
    }

    fn t(secs: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_717_000_000 + secs, 0).unwrap()
    }

    fn answer_next(s: &mut TestSession, at: DateTime<Utc>) {
        let item = s.current_item().unwrap().clone();
        s.submit_answer(&item.id, &fixtures::scripted_choice(&item), at).unwrap();
    }

    #[test]
    fn resume_after_three_answers() {
        let dir = tempfile::tempdir().unwrap();
        let log = SessionLog::new(dir.path());
        let repo = fixtures::repository().unwrap();
        let mut s = TestSession::start(spec("abc"), repo.competence("sql").unwrap(), &repo.items, t(0)).unwrap();
        let mut persisted = log.append(&s, 0).unwrap();
        for k in 1..=3 {
            answer_next(&mut s, t(k));
            persisted = log.append(&s, persisted).unwrap();
        }
        let resumed = resume_session(&log, "abc", &repo).unwrap();
        assert_eq!(resumed.cursor(), 3);
        assert_eq!(resumed.events(), s.events());
        assert_eq!(resumed.shuffle_seed(), Some(7));
    }

    #[test]
    fn resumed_run_matches_an_uninterrupted_one() {
        let dir = tempfile::tempdir().unwrap();
        let log = SessionLog::new(dir.path());
        let repo = fixtures::repository().unwrap();
        let competence = repo.competence("sql").unwrap();

        let mut straight = TestSession::start(spec("x1"), competence, &repo.items, t(0)).unwrap();
        for k in 1..=20 {
            answer_next(&mut straight, t(k));
        }

        let mut first = TestSession::start(spec("x2"), competence, &repo.items, t(0)).unwrap();
        for k in 1..=7 {
            answer_next(&mut first, t(k));
        }
        log.append(&first, 0).unwrap();
        drop(first);
        let mut resumed = resume_session(&log, "x2", &repo).unwrap();
        for k in 8..=20 {
            answer_next(&mut resumed, t(k));
        }
        let a = straight.outcome().unwrap();
        let b = resumed.outcome().unwrap();
        assert_eq!(a.estimate.theta.to_bits(), b.estimate.theta.to_bits());
        assert_eq!(a.estimate.trace, b.estimate.trace);
    }

    #[test]
    fn unknown_session_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let log = SessionLog::new(dir.path());
        let repo = fixtures::repository().unwrap();
        assert_eq!(
            resume_session(&log, "nope", &repo).unwrap_err(),
            EngineError::NotFound("nope".into())
        );
        assert!(matches!(resume_session(&log, "../etc", &repo), Err(EngineError::NotFound(_))));
    }

    #[test]
    fn tampered_log_is_rejected() {
        let repo = fixtures::repository().unwrap();
        let mut s = TestSession::start(spec("t"), repo.competence("sql").unwrap(), &repo.items, t(0)).unwrap();
        answer_next(&mut s, t(1));
        let mut events = s.events().to_vec();
        if let EventKind::AnswerScored { u, .. } = &mut events[2].kind {
            *u = 1 - *u;
        }
        assert!(matches!(replay(&events, &repo), Err(EngineError::CorruptLog { .. })));
    }

    #[test]
    fn events_are_self_describing_json_lines() {
        let repo = fixtures::repository().unwrap();
        let s = TestSession::start(spec("j"), repo.competence("sql").unwrap(), &repo.items, t(0)).unwrap();
        let line = serde_json::to_string(&s.events()[1]).unwrap();
        assert_eq!(
            line,
            r#"{"seq":1,"timestamp":"2024-05-29T16:26:40Z","kind":"question_served","item_id":"q1","position":0}"#
        );
    }
}
