//! Gold labels from curation history.
//!
//! A profile is *homonym* when a curator split it during the observation
//! interval `(t1, t2]`. Other profiles are *non-homonym* when they were
//! checked by a curator before `t1`: they carry person information or a
//! name with a 4-digit disambiguation suffix. Everything else is
//! unlabeled. Profiles with fewer than two publications or two coauthors
//! are dropped from both classes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ProfileId, Snapshot};

#[derive(Debug, Error)]
pub enum GoldError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("train ratio must lie in (0, 1), got {0}")]
    BadRatio(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrectionKind {
    Split,
    Merge,
    Redistribute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionEvent {
    pub kind: CorrectionKind,
    #[serde(rename = "source")]
    pub source_profile_id: ProfileId,
    #[serde(rename = "ts")]
    pub timestamp: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    NonHomonym,
    Homonym,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Homonym => "homonym",
            Label::NonHomonym => "non-homonym",
        }
    }

    pub fn is_homonym(self) -> bool {
        self == Label::Homonym
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "homonym" => Ok(Label::Homonym),
            "non-homonym" => Ok(Label::NonHomonym),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelBasis {
    SplitEvent,
    PersonInfo,
    FourDigitName,
}

impl LabelBasis {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelBasis::SplitEvent => "split-event",
            LabelBasis::PersonInfo => "person-info",
            LabelBasis::FourDigitName => "four-digit-name",
        }
    }
}

impl FromStr for LabelBasis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "split-event" => Ok(LabelBasis::SplitEvent),
            "person-info" => Ok(LabelBasis::PersonInfo),
            "four-digit-name" => Ok(LabelBasis::FourDigitName),
            other => Err(format!("unknown label basis {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub profile_id: ProfileId,
    pub label: Label,
    pub basis: LabelBasis,
}

/// Observation interval `(t1, t2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub t1: NaiveDate,
    pub t2: NaiveDate,
}

impl Interval {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.t1 < d && d <= self.t2
    }
}

/// Events that could not be used, reported rather than silently dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventWarnings {
    pub unknown_profiles: Vec<ProfileId>,
    pub outside_interval: usize,
}

/// Whether a name ends in a whitespace-separated token of exactly four
/// digits, e.g. `"Wei Wang 0004"`.
pub fn has_four_digit_suffix(name: &str) -> bool {
    match name.trim_end().rsplit_once(char::is_whitespace) {
        Some((head, last)) => !head.trim().is_empty() && last.len() == 4 && last.bytes().all(|b| b.is_ascii_digit()),
        None => false,
    }
}

pub fn label_profiles(
    snap: &Snapshot,
    events: &[CorrectionEvent],
    interval: Interval,
) -> (Vec<LabeledExample>, EventWarnings) {
    let mut warnings = EventWarnings::default();
    let mut split_sources = BTreeSet::new();
    for ev in events {
        if !interval.contains(ev.timestamp) {
            warnings.outside_interval += 1;
            continue;
        }
        if !snap.profiles.contains_key(&ev.source_profile_id) {
            warnings.unknown_profiles.push(ev.source_profile_id.clone());
            continue;
        }
        if ev.kind == CorrectionKind::Split {
            split_sources.insert(ev.source_profile_id.as_str());
        }
    }
    let labeled = snap
        .profiles
        .values()
        .filter_map(|prof| {
            let (label, basis) = if split_sources.contains(prof.profile_id.as_str()) {
                (Label::Homonym, LabelBasis::SplitEvent)
            } else if prof.has_person_info {
                (Label::NonHomonym, LabelBasis::PersonInfo)
            } else if prof.names.iter().any(|n| has_four_digit_suffix(n)) {
                (Label::NonHomonym, LabelBasis::FourDigitName)
            } else {
                return None;
            };
            Some(LabeledExample {
                profile_id: prof.profile_id.clone(),
                label,
                basis,
            })
        })
        .collect();
    (labeled, warnings)
}

/// At least two publications and two distinct coauthors at `t1`.
pub fn is_nontrivial(snap: &Snapshot, id: &str) -> bool {
    snap.profile_view(id)
        .map(|v| v.titles.len() >= 2 && v.coauthors.len() >= 2)
        .unwrap_or(false)
}

pub fn filter_trivial(snap: &Snapshot, examples: Vec<LabeledExample>) -> Vec<LabeledExample> {
    examples
        .into_iter()
        .filter(|e| is_nontrivial(snap, &e.profile_id))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<ProfileId>,
    pub test: Vec<ProfileId>,
}

/// Random partition with `floor(ratio * n)` training profiles.
pub fn split_train_test(examples: &[LabeledExample], ratio: f64, seed: u64) -> Result<SplitManifest, GoldError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(GoldError::BadRatio(ratio));
    }
    let mut ids: Vec<ProfileId> = examples.iter().map(|e| e.profile_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    // the epsilon keeps exact products such as 0.8 * 10 from rounding down
    let n_train = ((ratio * ids.len() as f64) + 1e-9).floor() as usize;
    let test = ids.split_off(n_train);
    Ok(SplitManifest { seed, train: ids, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub homonym: usize,
    pub non_homonym: usize,
    pub total: usize,
    pub by_basis: BTreeMap<String, usize>,
    /// Homonym share in percent; 0 for an empty set.
    pub prevalence_percent: f64,
}

pub fn dataset_report(examples: &[LabeledExample]) -> DatasetReport {
    let homonym = examples.iter().filter(|e| e.label.is_homonym()).count();
    let total = examples.len();
    let mut by_basis = BTreeMap::new();
    for e in examples {
        *by_basis.entry(e.basis.as_str().to_string()).or_insert(0) += 1;
    }
    DatasetReport {
        homonym,
        non_homonym: total - homonym,
        total,
        by_basis,
        prevalence_percent: if total == 0 { 0.0 } else { 100.0 * homonym as f64 / total as f64 },
    }
}

impl fmt::Display for DatasetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} homonym / {} non-homonym ({} total)",
            self.homonym, self.non_homonym, self.total
        )?;
        for (basis, n) in &self.by_basis {
            writeln!(f, "  {basis}: {n}")?;
        }
        // two decimals first so that rounding to one decimal is visible
        write!(
            f,
            "prevalence {:.2}% (one decimal: {:.1}%)",
            self.prevalence_percent, self.prevalence_percent
        )
    }
}

pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<CorrectionEvent>, GoldError> {
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| GoldError::Parse {
            line: no + 1,
            message: e.to_string(),
        })?;
        out.push(ev);
    }
    Ok(out)
}

pub fn write_events<W: Write>(mut w: W, events: &[CorrectionEvent]) -> Result<(), GoldError> {
    for ev in events {
        writeln!(w, "{}", serde_json::to_string(ev).expect("event serializes"))?;
    }
    Ok(())
}

/// `profile_id <TAB> label <TAB> basis`, one example per line.
pub fn write_labels_tsv<W: Write>(mut w: W, examples: &[LabeledExample]) -> Result<(), GoldError> {
    for e in examples {
        writeln!(w, "{}\t{}\t{}", e.profile_id, e.label.as_str(), e.basis.as_str())?;
    }
    Ok(())
}

pub fn read_labels_tsv<R: BufRead>(reader: R) -> Result<Vec<LabeledExample>, GoldError> {
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| GoldError::Parse { line: no + 1, message };
        let mut cols = line.split('\t');
        let (Some(pid), Some(label), Some(basis), None) = (cols.next(), cols.next(), cols.next(), cols.next()) else {
            return Err(err("expected three tab-separated columns".into()));
        };
        out.push(LabeledExample {
            profile_id: pid.to_string(),
            label: label.parse().map_err(err)?,
            basis: basis.parse().map_err(err)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{test_record as rec, ProfileMetadata};

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn interval() -> Interval {
        Interval {
            t1: date("2014-01-01"),
            t2: date("2018-01-01"),
        }
    }

    fn split(pid: &str, ts: &str) -> CorrectionEvent {
        CorrectionEvent {
            kind: CorrectionKind::Split,
            source_profile_id: pid.into(),
            timestamp: date(ts),
        }
    }

    /// Fixture with hand-computed outcomes:
    ///
    /// | pid | pubs | coauthors | evidence          | label        | after filter |
    /// |-----|------|-----------|-------------------|--------------|--------------|
    /// | h1  | 2    | 2         | split 2015        | homonym      | kept         |
    /// | h2  | 1    | 5         | split 2016        | homonym      | dropped      |
    /// | h3  | 3    | 2         | split 2013 (early)| unlabeled    | -            |
    /// | n1  | 2    | 2         | person info       | non-homonym  | kept         |
    /// | n2  | 3    | 2         | "Wei Wang 0004"   | non-homonym  | kept         |
    /// | n3  | 10   | 1         | person info       | non-homonym  | dropped      |
    /// | u1  | 2    | 2         | none              | unlabeled    | -            |
    /// | both| 2    | 2         | split + info      | homonym      | kept         |
    fn fixture() -> (Snapshot, Vec<CorrectionEvent>) {
        let mut pubs = vec![
            rec("h1a", 2010, "v", &["h1", "a", "b"]),
            rec("h1b", 2011, "v", &["h1", "a"]),
            rec("h2a", 2010, "v", &["h2", "a", "b", "c", "d", "e"]),
            rec("h3a", 2010, "v", &["h3", "a"]),
            rec("h3b", 2010, "v", &["h3", "b"]),
            rec("h3c", 2010, "v", &["h3"]),
            rec("n1a", 2010, "v", &["n1", "c"]),
            rec("n1b", 2012, "v", &["n1", "d"]),
            rec("n2a", 2010, "v", &["n2", "c", "d"]),
            rec("n2b", 2012, "v", &["n2", "c"]),
            rec("n2c", 2013, "v", &["n2"]),
            rec("u1a", 2010, "v", &["u1", "a"]),
            rec("u1b", 2010, "v", &["u1", "b"]),
            rec("ba", 2010, "v", &["both", "a"]),
            rec("bb", 2010, "v", &["both", "e"]),
        ];
        for i in 0..10 {
            pubs.push(rec(&format!("n3{i}"), 2000 + i, "v", &["n3", "e"]));
        }
        let mut snap = Snapshot::from_publications(pubs).unwrap();
        snap.apply_metadata(vec![
            ProfileMetadata { pid: "n1".into(), names: vec![], person_info: true },
            ProfileMetadata { pid: "n2".into(), names: vec!["Wei Wang 0004".into()], person_info: false },
            ProfileMetadata { pid: "n3".into(), names: vec![], person_info: true },
            ProfileMetadata { pid: "both".into(), names: vec![], person_info: true },
        ]);
        let events = vec![
            split("h1", "2015-03-01"),
            split("h2", "2016-07-01"),
            split("h3", "2013-05-01"),
            split("both", "2017-12-31"),
            split("ghost", "2015-01-01"),
            CorrectionEvent {
                kind: CorrectionKind::Merge,
                source_profile_id: "n1".into(),
                timestamp: date("2015-01-01"),
            },
        ];
        (snap, events)
    }

    fn labels_of(examples: &[LabeledExample]) -> BTreeMap<&str, (Label, LabelBasis)> {
        examples.iter().map(|e| (e.profile_id.as_str(), (e.label, e.basis))).collect()
    }

    #[test]
    fn labels_follow_rules() {
        let (snap, events) = fixture();
        let (labeled, warn) = label_profiles(&snap, &events, interval());
        let m = labels_of(&labeled);
        assert_eq!(m["h1"], (Label::Homonym, LabelBasis::SplitEvent));
        assert_eq!(m["h2"], (Label::Homonym, LabelBasis::SplitEvent));
        assert_eq!(m["n1"], (Label::NonHomonym, LabelBasis::PersonInfo));
        assert_eq!(m["n2"], (Label::NonHomonym, LabelBasis::FourDigitName));
        assert_eq!(m["both"], (Label::Homonym, LabelBasis::SplitEvent));
        assert!(!m.contains_key("h3") && !m.contains_key("u1") && !m.contains_key("a"));
        assert_eq!(labeled.len(), 6);
        assert_eq!(warn.unknown_profiles, vec!["ghost".to_string()]);
        assert_eq!(warn.outside_interval, 1);

        let kept = filter_trivial(&snap, labeled);
        let ids: Vec<&str> = kept.iter().map(|e| e.profile_id.as_str()).collect();
        assert_eq!(ids, vec!["both", "h1", "n1", "n2"]);
        let report = dataset_report(&kept);
        assert_eq!((report.homonym, report.non_homonym, report.total), (2, 2, 4));
        assert_eq!(report.by_basis["split-event"], 2);
    }

    #[test]
    fn filter_is_order_independent() {
        let (snap, events) = fixture();
        let (labeled, _) = label_profiles(&snap, &events, interval());
        let after = filter_trivial(&snap, labeled);
        // filter first: restrict the snapshot's profiles, then label
        let mut restricted = snap.clone();
        restricted.profiles.retain(|id, _| is_nontrivial(&snap, id));
        let (before, _) = label_profiles(&restricted, &events, interval());
        assert_eq!(before, after);
    }

    #[test]
    fn four_digit_rule() {
        assert!(has_four_digit_suffix("Wei Wang 0004"));
        assert!(has_four_digit_suffix("Wei Wang 0004 "));
        assert!(!has_four_digit_suffix("Wei Wang"));
        assert!(!has_four_digit_suffix("0004"));
        assert!(!has_four_digit_suffix("Wei Wang 00042"));
        assert!(!has_four_digit_suffix("Wei Wang 004"));
        assert!(!has_four_digit_suffix("Wei Wang0004"));
    }

    fn n_examples(n: usize) -> Vec<LabeledExample> {
        (0..n)
            .map(|i| LabeledExample {
                profile_id: format!("p{i:05}"),
                label: if i % 10 == 0 { Label::Homonym } else { Label::NonHomonym },
                basis: if i % 10 == 0 { LabelBasis::SplitEvent } else { LabelBasis::PersonInfo },
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ex = n_examples(10);
        let s = split_train_test(&ex, 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert_eq!(s, split_train_test(&ex, 0.8, 1).unwrap());
        let mut all: Vec<_> = s.train.iter().chain(&s.test).cloned().collect();
        all.sort();
        assert_eq!(all, ex.iter().map(|e| e.profile_id.clone()).collect::<Vec<_>>());
        assert_ne!(s.train, split_train_test(&ex, 0.8, 2).unwrap().train);
        assert!(split_train_test(&ex, 1.0, 1).is_err());
        assert!(split_train_test(&ex, 0.0, 1).is_err());
    }

    #[test]
    fn gold_collection_scale_bookkeeping() {
        let mut ex: Vec<LabeledExample> = Vec::new();
        for i in 0..24_378 {
            ex.push(LabeledExample {
                profile_id: format!("p{i}"),
                label: if i < 2_802 { Label::Homonym } else { Label::NonHomonym },
                basis: if i < 2_802 { LabelBasis::SplitEvent } else { LabelBasis::PersonInfo },
            });
        }
        let r = dataset_report(&ex);
        assert_eq!((r.homonym, r.non_homonym, r.total), (2_802, 21_576, 24_378));
        assert!((r.prevalence_percent - 11.494).abs() < 1e-3);
        assert!(r.to_string().contains("prevalence 11.49% (one decimal: 11.5%)"));
        let s = split_train_test(&ex, 0.8, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (19_502, 4_876));
    }

    #[test]
    fn empty_report() {
        let r = dataset_report(&[]);
        assert_eq!((r.total, r.prevalence_percent), (0, 0.0));
    }

    #[test]
    fn tsv_and_event_io() {
        let (snap, events) = fixture();
        let (labeled, _) = label_profiles(&snap, &events, interval());
        let mut buf = Vec::new();
        write_labels_tsv(&mut buf, &labeled).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().any(|l| l == "h1\thomonym\tsplit-event"));
        assert_eq!(read_labels_tsv(buf.as_slice()).unwrap(), labeled);

        let mut ev = Vec::new();
        write_events(&mut ev, &events).unwrap();
        let first = String::from_utf8(ev.clone()).unwrap();
        assert!(first.starts_with(r#"{"kind":"Split","source":"h1","ts":"2015-03-01"}"#));
        assert_eq!(read_events(ev.as_slice()).unwrap(), events);
        assert!(read_labels_tsv("a\thomonym\n".as_bytes()).is_err());
    }
}
