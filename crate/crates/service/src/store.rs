//! Single-file ranking store.
//!
//! The ranking table is replaced wholesale by each scoring run. Curator
//! decisions live in an append-only log keyed by profile id, so they
//! survive re-scoring; a case's status is derived from the log.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use homonym_core::ranking::{ProfileDetail, RankedProfile};
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no ranked case for profile {0}")]
    NotFound(String),
    #[error("profile {pid} is already resolved as {current}")]
    Conflict { pid: String, current: Status },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("database: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("stored data is corrupt: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Open,
    Confirmed,
    FalsePositive,
    Unclear,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Open => "open",
            Status::Confirmed => "confirmed",
            Status::FalsePositive => "false-positive",
            Status::Unclear => "unclear",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Status::Open),
            "confirmed" => Ok(Status::Confirmed),
            "false-positive" => Ok(Status::FalsePositive),
            "unclear" => Ok(Status::Unclear),
            other => Err(StoreError::Invalid(format!("unknown status {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCase {
    pub pid: String,
    pub p: f64,
    pub rank: usize,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved_by: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolved_at: Option<DateTime<Utc>>,
    /// Resolved earlier, but the latest scoring run rates it higher than
    /// when it was resolved.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reopened_candidate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub seq: i64,
    pub pid: String,
    pub status: Status,
    pub curator: String,
    pub resolved_at: DateTime<Utc>,
    pub p_at_resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionStats {
    pub open: usize,
    pub confirmed: usize,
    pub false_positive: usize,
    pub unclear: usize,
    /// confirmed / (confirmed + false-positive); absent until one of the
    /// two has been recorded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision_over_determined: Option<f64>,
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS ranking (
    pid TEXT PRIMARY KEY,
    p REAL NOT NULL,
    rank INTEGER NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS profile_detail (
    pid TEXT PRIMARY KEY,
    detail TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS resolutions (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    pid TEXT NOT NULL,
    status TEXT NOT NULL,
    curator TEXT NOT NULL,
    resolved_at TEXT NOT NULL,
    p_at_resolution REAL NOT NULL
);
CREATE INDEX IF NOT EXISTS resolutions_pid ON resolutions(pid);
CREATE TRIGGER IF NOT EXISTS resolutions_no_update BEFORE UPDATE ON resolutions
BEGIN SELECT RAISE(ABORT, 'resolution log is append-only'); END;
CREATE TRIGGER IF NOT EXISTS resolutions_no_delete BEFORE DELETE ON resolutions
BEGIN SELECT RAISE(ABORT, 'resolution log is append-only'); END;
";

/// All access goes through one connection, which also serializes writes.
pub struct Store {
    conn: Mutex<Connection>,
}

impl Store {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        Self::init(Connection::open(path)?)
    }

    pub fn open_in_memory() -> Result<Self, StoreError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, StoreError> {
        conn.execute_batch(SCHEMA)?;
        Ok(Store { conn: Mutex::new(conn) })
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        // a panic while holding the lock cannot leave sqlite inconsistent
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Atomically swaps in a new ranking and the matching profile details.
    pub fn replace_ranking(&self, ranking: &[RankedProfile], details: &[ProfileDetail]) -> Result<(), StoreError> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        tx.execute("DELETE FROM ranking", [])?;
        tx.execute("DELETE FROM profile_detail", [])?;
        {
            let mut ins = tx.prepare("INSERT INTO ranking (pid, p, rank) VALUES (?1, ?2, ?3)")?;
            for r in ranking {
                ins.execute(params![r.profile_id, r.p_homonym, r.rank as i64])?;
            }
            let mut det = tx.prepare("INSERT INTO profile_detail (pid, detail) VALUES (?1, ?2)")?;
            for d in details {
                let json = serde_json::to_string(d).map_err(|e| StoreError::Corrupt(e.to_string()))?;
                det.execute(params![d.pid, json])?;
            }
        }
        tx.execute(
            "INSERT INTO meta (key, value) VALUES ('scored_at', ?1)
             ON CONFLICT(key) DO UPDATE SET value = excluded.value",
            params![Utc::now().to_rfc3339()],
        )?;
        tx.commit()?;
        Ok(())
    }

    pub fn set_meta(&self, key: &str, value: &str) -> Result<(), StoreError> {
        self.conn().execute(
            "INSERT INTO meta (key, value) VALUES (?1, ?2)
             ON CONFLICT(key) DO UPDATE SET value = excluded.value",
            params![key, value],
        )?;
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Result<Option<String>, StoreError> {
        Ok(self
            .conn()
            .query_row("SELECT value FROM meta WHERE key = ?1", params![key], |r| r.get(0))
            .optional()?)
    }

    const CASE_QUERY: &'static str = "
        SELECT r.pid, r.p, r.rank, l.status, l.curator, l.resolved_at, l.p_at_resolution
        FROM ranking r
        LEFT JOIN resolutions l ON l.seq = (SELECT MIN(seq) FROM resolutions WHERE pid = r.pid)";

    fn case_from_row(row: &rusqlite::Row<'_>) -> rusqlite::Result<(String, f64, i64, Option<String>, Option<String>, Option<String>, Option<f64>)> {
        Ok((row.get(0)?, row.get(1)?, row.get(2)?, row.get(3)?, row.get(4)?, row.get(5)?, row.get(6)?))
    }

    fn build_case(
        raw: (String, f64, i64, Option<String>, Option<String>, Option<String>, Option<f64>),
    ) -> Result<RankedCase, StoreError> {
        let (pid, p, rank, status, curator, at, p_then) = raw;
        let status = status.as_deref().map(Status::from_str).transpose()?.unwrap_or(Status::Open);
        let resolved_at = at
            .map(|s| DateTime::parse_from_rfc3339(&s).map(|d| d.with_timezone(&Utc)))
            .transpose()
            .map_err(|e| StoreError::Corrupt(e.to_string()))?;
        Ok(RankedCase {
            pid,
            p,
            rank: rank as usize,
            status,
            resolved_by: curator,
            resolved_at,
            reopened_candidate: p_then.is_some_and(|then| p > then),
        })
    }

    /// The first `limit` cases in rank order, optionally restricted to one
    /// status.
    pub fn top(&self, limit: usize, status: Option<Status>) -> Result<Vec<RankedCase>, StoreError> {
        if limit == 0 {
            return Err(StoreError::Invalid("limit must be at least 1".into()));
        }
        let conn = self.conn();
        let sql = match status {
            None => format!("{} ORDER BY r.rank LIMIT ?1", Self::CASE_QUERY),
            Some(Status::Open) => format!("{} WHERE l.status IS NULL ORDER BY r.rank LIMIT ?1", Self::CASE_QUERY),
            Some(_) => format!("{} WHERE l.status = ?2 ORDER BY r.rank LIMIT ?1", Self::CASE_QUERY),
        };
        let mut stmt = conn.prepare(&sql)?;
        let limit = limit.min(i64::MAX as usize) as i64;
        let rows: Vec<_> = match status {
            Some(s) if s != Status::Open => stmt
                .query_map(params![limit, s.as_str()], Self::case_from_row)?
                .collect::<Result<_, _>>()?,
            _ => stmt.query_map(params![limit], Self::case_from_row)?.collect::<Result<_, _>>()?,
        };
        rows.into_iter().map(Self::build_case).collect()
    }

    pub fn case(&self, pid: &str) -> Result<RankedCase, StoreError> {
        let raw = self
            .conn()
            .query_row(&format!("{} WHERE r.pid = ?1", Self::CASE_QUERY), params![pid], Self::case_from_row)
            .optional()?
            .ok_or_else(|| StoreError::NotFound(pid.to_string()))?;
        Self::build_case(raw)
    }

    pub fn detail(&self, pid: &str) -> Result<ProfileDetail, StoreError> {
        let json: String = self
            .conn()
            .query_row("SELECT detail FROM profile_detail WHERE pid = ?1", params![pid], |r| r.get(0))
            .optional()?
            .ok_or_else(|| StoreError::NotFound(pid.to_string()))?;
        serde_json::from_str(&json).map_err(|e| StoreError::Corrupt(e.to_string()))
    }

    /// Records a curator decision. Re-submitting the current status is a
    /// no-op; any other change of a resolved case is a conflict.
    pub fn resolve(&self, pid: &str, status: Status, curator: &str) -> Result<RankedCase, StoreError> {
        self.resolve_at(pid, status, curator, Utc::now())
    }

    pub fn resolve_at(&self, pid: &str, status: Status, curator: &str, at: DateTime<Utc>) -> Result<RankedCase, StoreError> {
        if status == Status::Open {
            return Err(StoreError::Invalid("a case cannot be resolved as open".into()));
        }
        if curator.trim().is_empty() {
            return Err(StoreError::Invalid("curator must not be empty".into()));
        }
        {
            let mut conn = self.conn();
            let tx = conn.transaction()?;
            let p: f64 = tx
                .query_row("SELECT p FROM ranking WHERE pid = ?1", params![pid], |r| r.get(0))
                .optional()?
                .ok_or_else(|| StoreError::NotFound(pid.to_string()))?;
            let current: Option<String> = tx
                .query_row(
                    "SELECT status FROM resolutions WHERE pid = ?1 ORDER BY seq LIMIT 1",
                    params![pid],
                    |r| r.get(0),
                )
                .optional()?;
            match current.as_deref().map(Status::from_str).transpose()? {
                Some(s) if s == status => {}
                Some(s) => {
                    return Err(StoreError::Conflict {
                        pid: pid.to_string(),
                        current: s,
                    })
                }
                None => {
                    tx.execute(
                        "INSERT INTO resolutions (pid, status, curator, resolved_at, p_at_resolution)
                         VALUES (?1, ?2, ?3, ?4, ?5)",
                        params![pid, status.as_str(), curator, at.to_rfc3339(), p],
                    )?;
                }
            }
            tx.commit()?;
        }
        self.case(pid)
    }

    pub fn log(&self) -> Result<Vec<Resolution>, StoreError> {
        let conn = self.conn();
        let mut stmt =
            conn.prepare("SELECT seq, pid, status, curator, resolved_at, p_at_resolution FROM resolutions ORDER BY seq")?;
        let rows: Vec<(i64, String, String, String, String, f64)> = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?)))?
            .collect::<Result<_, _>>()?;
        rows.into_iter()
            .map(|(seq, pid, status, curator, at, p)| {
                Ok(Resolution {
                    seq,
                    pid,
                    status: status.parse()?,
                    curator,
                    resolved_at: DateTime::parse_from_rfc3339(&at)
                        .map_err(|e| StoreError::Corrupt(e.to_string()))?
                        .with_timezone(&Utc),
                    p_at_resolution: p,
                })
            })
            .collect()
    }

    pub fn stats(&self) -> Result<ResolutionStats, StoreError> {
        let conn = self.conn();
        let open: i64 = conn.query_row(
            "SELECT COUNT(*) FROM ranking r WHERE NOT EXISTS (SELECT 1 FROM resolutions l WHERE l.pid = r.pid)",
            [],
            |r| r.get(0),
        )?;
        let mut stmt = conn.prepare("SELECT status, COUNT(DISTINCT pid) FROM resolutions GROUP BY status")?;
        let counts: BTreeMap<String, i64> = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?
            .collect::<Result<_, _>>()?;
        let get = |s: Status| counts.get(s.as_str()).copied().unwrap_or(0) as usize;
        let (confirmed, false_positive) = (get(Status::Confirmed), get(Status::FalsePositive));
        let determined = confirmed + false_positive;
        Ok(ResolutionStats {
            open: open as usize,
            confirmed,
            false_positive,
            unclear: get(Status::Unclear),
            precision_over_determined: (determined > 0).then(|| confirmed as f64 / determined as f64),
        })
    }
}

/// Current statuses obtained by replaying a resolution log.
pub fn replay(log: &[Resolution]) -> BTreeMap<String, Status> {
    let mut out = BTreeMap::new();
    for r in log {
        out.entry(r.pid.clone()).or_insert(r.status);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(entries: &[(&str, f64)]) -> Vec<RankedProfile> {
        entries
            .iter()
            .enumerate()
            .map(|(i, (pid, p))| RankedProfile {
                profile_id: pid.to_string(),
                p_homonym: *p,
                rank: i + 1,
            })
            .collect()
    }

    fn store() -> Store {
        let s = Store::open_in_memory().unwrap();
        s.replace_ranking(&ranked(&[("a", 0.9), ("b", 0.7), ("c", 0.4), ("d", 0.2)]), &[])
            .unwrap();
        s
    }

    #[test]
    fn top_preserves_rank_order() {
        let s = store();
        let all = s.top(10, None).unwrap();
        assert_eq!(all.iter().map(|c| c.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert!(all.iter().all(|c| c.status == Status::Open));
        assert_eq!(s.top(2, None).unwrap().len(), 2);
        assert!(matches!(s.top(0, None), Err(StoreError::Invalid(_))));
    }

    #[test]
    fn open_filter_hides_resolved() {
        let s = store();
        s.resolve("a", Status::Confirmed, "ann").unwrap();
        s.resolve("c", Status::Confirmed, "ann").unwrap();
        let open: Vec<String> = s.top(100, Some(Status::Open)).unwrap().into_iter().map(|c| c.pid).collect();
        assert_eq!(open, vec!["b", "d"]);
        let confirmed: Vec<String> = s.top(100, Some(Status::Confirmed)).unwrap().into_iter().map(|c| c.pid).collect();
        assert_eq!(confirmed, vec!["a", "c"]);
    }

    #[test]
    fn resolution_transitions() {
        let s = store();
        let c = s.resolve("a", Status::Confirmed, "ann").unwrap();
        assert_eq!(c.status, Status::Confirmed);
        assert_eq!(c.resolved_by.as_deref(), Some("ann"));
        assert!(c.resolved_at.is_some());
        // same status again: accepted, no new log entry
        s.resolve("a", Status::Confirmed, "bob").unwrap();
        assert_eq!(s.log().unwrap().len(), 1);
        assert_eq!(s.case("a").unwrap().resolved_by.as_deref(), Some("ann"));
        assert!(matches!(
            s.resolve("a", Status::FalsePositive, "bob"),
            Err(StoreError::Conflict { current: Status::Confirmed, .. })
        ));
        assert!(matches!(s.resolve("zz", Status::Confirmed, "ann"), Err(StoreError::NotFound(_))));
        assert!(matches!(s.resolve("b", Status::Open, "ann"), Err(StoreError::Invalid(_))));
        assert!(matches!(s.resolve("b", Status::Unclear, " "), Err(StoreError::Invalid(_))));
    }

    #[test]
    fn stats_precision_over_determined() {
        let s = Store::open_in_memory().unwrap();
        let pids: Vec<String> = (0..100).map(|i| format!("p{i:03}")).collect();
        let entries: Vec<(&str, f64)> = pids.iter().map(|p| (p.as_str(), 0.5)).collect();
        s.replace_ranking(&ranked(&entries), &[]).unwrap();
        assert_eq!(s.stats().unwrap().precision_over_determined, None);
        for (i, pid) in pids.iter().enumerate() {
            let status = match i {
                0..=73 => Status::Confirmed,
                74..=85 => Status::FalsePositive,
                _ => Status::Unclear,
            };
            s.resolve(pid, status, "team").unwrap();
        }
        let st = s.stats().unwrap();
        assert_eq!((st.confirmed, st.false_positive, st.unclear, st.open), (74, 12, 14, 0));
        let p = st.precision_over_determined.unwrap();
        assert!((p - 74.0 / 86.0).abs() < 1e-12);
        assert_eq!(format!("{p:.3}"), "0.860");
    }

    #[test]
    fn single_confirmation_gives_full_precision() {
        let s = store();
        s.resolve("b", Status::Confirmed, "ann").unwrap();
        s.resolve("c", Status::Unclear, "ann").unwrap();
        let st = s.stats().unwrap();
        assert_eq!(st.precision_over_determined, Some(1.0));
        assert_eq!(st.open, 2);
    }

    #[test]
    fn rescoring_keeps_resolutions_and_flags_reopened() {
        let s = store();
        s.resolve("b", Status::FalsePositive, "ann").unwrap();
        s.resolve("c", Status::Confirmed, "ann").unwrap();
        s.replace_ranking(&ranked(&[("b", 0.95), ("a", 0.9), ("c", 0.1), ("e", 0.05)]), &[])
            .unwrap();
        let b = s.case("b").unwrap();
        assert_eq!((b.rank, b.status, b.reopened_candidate), (1, Status::FalsePositive, true));
        let c = s.case("c").unwrap();
        assert_eq!((c.status, c.reopened_candidate), (Status::Confirmed, false));
        assert!(matches!(s.case("d"), Err(StoreError::NotFound(_))));
        assert_eq!(s.top(10, None).unwrap().len(), 4);
    }

    #[test]
    fn replayed_log_matches_statuses() {
        let s = store();
        s.resolve("a", Status::Confirmed, "ann").unwrap();
        s.resolve("b", Status::Unclear, "bob").unwrap();
        s.resolve("b", Status::Unclear, "bob").unwrap();
        let _ = s.resolve("b", Status::Confirmed, "bob");
        let replayed = replay(&s.log().unwrap());
        for case in s.top(10, None).unwrap() {
            assert_eq!(replayed.get(&case.pid).copied().unwrap_or(Status::Open), case.status);
        }
        let conn = s.conn();
        assert!(conn.execute("DELETE FROM resolutions", []).is_err());
        assert!(conn.execute("UPDATE resolutions SET status = 'open'", []).is_err());
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.sqlite");
        {
            let s = Store::open(&path).unwrap();
            s.replace_ranking(&ranked(&[("a", 0.9)]), &[]).unwrap();
            s.resolve("a", Status::Confirmed, "ann").unwrap();
            s.set_meta("model", "m.json").unwrap();
        }
        let s = Store::open(&path).unwrap();
        assert_eq!(s.case("a").unwrap().status, Status::Confirmed);
        assert_eq!(s.meta("model").unwrap().as_deref(), Some("m.json"));
        assert!(s.meta("scored_at").unwrap().is_some());
    }
}
