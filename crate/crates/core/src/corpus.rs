//! In-memory bibliographic snapshot: publications, venues and the author
//! profiles derived from their author lists.
//!
//! Two input formats are supported: JSON Lines (one publication per line)
//! and a small XML subset modelled on dblp records. Profiles are never read
//! directly; they are the inverse index of the author lists, optionally
//! enriched by a profile metadata JSONL file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ProfileId = String;
pub type PubId = String;
pub type VenueId = String;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate publication id {0:?}")]
    DuplicatePublication(PubId),
    #[error("{count} malformed record(s) in strict mode; first: {first}")]
    Malformed { count: usize, first: String },
    #[error("unknown profile id {0:?}")]
    UnknownProfile(ProfileId),
    #[error("unknown input format {0:?} (expected jsonl or xml)")]
    UnknownFormat(String),
    #[error("snapshot encoding: {0}")]
    Encoding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Jsonl,
    Xml,
}

impl FromStr for InputFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(InputFormat::Jsonl),
            "xml" | "xml-subset" => Ok(InputFormat::Xml),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorRef {
    pub pid: ProfileId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    #[serde(rename = "id")]
    pub pub_id: PubId,
    #[serde(default)]
    pub title: String,
    pub year: i32,
    #[serde(rename = "venue")]
    pub venue_id: VenueId,
    pub authors: Vec<AuthorRef>,
}

impl PublicationRecord {
    fn validate(&self) -> Result<(), String> {
        if self.pub_id.is_empty() {
            return Err("empty publication id".into());
        }
        if self.year <= 0 {
            return Err(format!("{}: non-positive year {}", self.pub_id, self.year));
        }
        if self.authors.is_empty() {
            return Err(format!("{}: no authors", self.pub_id));
        }
        if self.authors.iter().any(|a| a.pid.is_empty()) {
            return Err(format!("{}: author without pid", self.pub_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorProfile {
    pub profile_id: ProfileId,
    pub names: Vec<String>,
    pub publications: BTreeSet<PubId>,
    /// Homepage URL or affiliation present in the person record.
    pub has_person_info: bool,
}

/// One line of the optional profile metadata file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileMetadata {
    pub pid: ProfileId,
    #[serde(default)]
    pub names: Vec<String>,
    #[serde(default)]
    pub person_info: bool,
}

/// Malformed input encountered while parsing. Malformed records are
/// skipped but always counted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub records: usize,
    pub malformed: usize,
    pub messages: Vec<String>,
    /// Metadata lines naming a pid that has no publications.
    pub orphan_metadata: usize,
}

impl ParseReport {
    fn malformed(&mut self, msg: String) {
        self.malformed += 1;
        if self.messages.len() < 20 {
            self.messages.push(msg);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub timestamp: Option<NaiveDate>,
    pub publications: BTreeMap<PubId, PublicationRecord>,
    pub profiles: BTreeMap<ProfileId, AuthorProfile>,
    pub venues: BTreeMap<VenueId, BTreeSet<PubId>>,
}

/// Raw inputs a profile's features are computed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileView {
    /// Titles in publication-id order.
    pub titles: Vec<String>,
    pub venues: BTreeSet<VenueId>,
    /// One entry per publication, in publication-id order.
    pub years: Vec<i32>,
    pub coauthors: BTreeSet<ProfileId>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub strict: bool,
}

impl Snapshot {
    /// Builds a snapshot from publication records, deriving profiles and the
    /// venue index.
    pub fn from_publications<I>(pubs: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = PublicationRecord>,
    {
        let mut snap = Snapshot::default();
        for p in pubs {
            snap.insert(p)?;
        }
        snap.fill_missing_names();
        Ok(snap)
    }

    fn insert(&mut self, p: PublicationRecord) -> Result<(), CorpusError> {
        if self.publications.contains_key(&p.pub_id) {
            return Err(CorpusError::DuplicatePublication(p.pub_id));
        }
        self.venues
            .entry(p.venue_id.clone())
            .or_default()
            .insert(p.pub_id.clone());
        for a in &p.authors {
            let prof = self
                .profiles
                .entry(a.pid.clone())
                .or_insert_with(|| AuthorProfile {
                    profile_id: a.pid.clone(),
                    names: Vec::new(),
                    publications: BTreeSet::new(),
                    has_person_info: false,
                });
            prof.publications.insert(p.pub_id.clone());
            if !a.name.is_empty() && !prof.names.contains(&a.name) {
                prof.names.push(a.name.clone());
            }
        }
        self.publications.insert(p.pub_id.clone(), p);
        Ok(())
    }

    /// Applies profile metadata. Returns how many lines named unknown
    /// profiles (these are ignored: profiles only exist through authorship).
    pub fn apply_metadata<I>(&mut self, meta: I) -> usize
    where
        I: IntoIterator<Item = ProfileMetadata>,
    {
        let mut orphans = 0;
        for m in meta {
            match self.profiles.get_mut(&m.pid) {
                Some(prof) => {
                    prof.has_person_info |= m.person_info;
                    for n in m.names {
                        if !n.is_empty() && !prof.names.contains(&n) {
                            prof.names.push(n);
                        }
                    }
                }
                None => orphans += 1,
            }
        }
        self.fill_missing_names();
        orphans
    }

    fn fill_missing_names(&mut self) {
        for prof in self.profiles.values_mut() {
            if prof.names.is_empty() {
                prof.names.push(prof.profile_id.clone());
            }
        }
    }

    pub fn profile(&self, id: &str) -> Result<&AuthorProfile, CorpusError> {
        self.profiles
            .get(id)
            .ok_or_else(|| CorpusError::UnknownProfile(id.to_string()))
    }

    pub fn profile_view(&self, id: &str) -> Result<ProfileView, CorpusError> {
        let prof = self.profile(id)?;
        let mut view = ProfileView {
            titles: Vec::with_capacity(prof.publications.len()),
            venues: BTreeSet::new(),
            years: Vec::with_capacity(prof.publications.len()),
            coauthors: BTreeSet::new(),
        };
        for pub_id in &prof.publications {
            let p = &self.publications[pub_id];
            view.titles.push(p.title.clone());
            view.venues.insert(p.venue_id.clone());
            view.years.push(p.year);
            view.coauthors.extend(
                p.authors
                    .iter()
                    .filter(|a| a.pid != prof.profile_id)
                    .map(|a| a.pid.clone()),
            );
        }
        Ok(view)
    }

    /// Publications of a profile in publication-id order.
    pub fn publications_of<'a>(
        &'a self,
        prof: &'a AuthorProfile,
    ) -> impl Iterator<Item = &'a PublicationRecord> + 'a {
        prof.publications.iter().map(move |id| &self.publications[id])
    }

    /// Checks referential integrity across the three maps.
    pub fn check_integrity(&self) -> Result<(), String> {
        for (vid, pubs) in &self.venues {
            for pid in pubs {
                match self.publications.get(pid) {
                    Some(p) if &p.venue_id == vid => {}
                    _ => return Err(format!("venue {vid} lists stray publication {pid}")),
                }
            }
        }
        for p in self.publications.values() {
            if !self
                .venues
                .get(&p.venue_id)
                .is_some_and(|s| s.contains(&p.pub_id))
            {
                return Err(format!("publication {} missing from venue index", p.pub_id));
            }
            for a in &p.authors {
                match self.profiles.get(&a.pid) {
                    Some(prof) if prof.publications.contains(&p.pub_id) => {}
                    _ => return Err(format!("{} author {} not indexed", p.pub_id, a.pid)),
                }
            }
        }
        for prof in self.profiles.values() {
            if prof.publications.is_empty() || prof.names.is_empty() {
                return Err(format!("profile {} is empty", prof.profile_id));
            }
            for pid in &prof.publications {
                let ok = self
                    .publications
                    .get(pid)
                    .is_some_and(|p| p.authors.iter().any(|a| a.pid == prof.profile_id));
                if !ok {
                    return Err(format!("profile {} lists stray {pid}", prof.profile_id));
                }
            }
        }
        Ok(())
    }

    /// Writes the snapshot; `.bin` paths use a binary encoding, anything
    /// else the tagged JSON Lines form (see [`Snapshot::load`]).
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(file);
        if is_bin(path) {
            bincode::serialize_into(&mut w, self).map_err(|e| CorpusError::Encoding(e.to_string()))?;
        } else {
            let enc = |e: serde_json::Error| CorpusError::Encoding(e.to_string());
            let header = SnapshotLine::Header {
                timestamp: self.timestamp,
            };
            writeln!(w, "{}", serde_json::to_string(&header).map_err(enc)?)
                .map_err(|e| io_err(path, e))?;
            for p in self.publications.values() {
                let line = serde_json::to_string(&SnapshotLine::Pub(p.clone())).map_err(enc)?;
                writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
            }
            for prof in self.profiles.values() {
                let meta = ProfileMetadata {
                    pid: prof.profile_id.clone(),
                    names: prof.names.clone(),
                    person_info: prof.has_person_info,
                };
                let line = serde_json::to_string(&SnapshotLine::Profile(meta)).map_err(enc)?;
                writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
            }
        }
        w.flush().map_err(|e| io_err(path, e))
    }

    /// Loads a snapshot written by [`Snapshot::save`].
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|e| io_err(path, e))?;
        let reader = BufReader::new(file);
        if is_bin(path) {
            return bincode::deserialize_from(reader).map_err(|e| CorpusError::Encoding(e.to_string()));
        }
        let mut pubs = Vec::new();
        let mut meta = Vec::new();
        let mut timestamp = None;
        for (no, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| io_err(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SnapshotLine = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Encoding(format!("line {}: {e}", no + 1)))?;
            match parsed {
                SnapshotLine::Header { timestamp: t } => timestamp = t,
                SnapshotLine::Pub(p) => pubs.push(p),
                SnapshotLine::Profile(m) => meta.push(m),
            }
        }
        let mut snap = Snapshot::from_publications(pubs)?;
        snap.timestamp = timestamp;
        snap.apply_metadata(meta);
        Ok(snap)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SnapshotLine {
    Header { timestamp: Option<NaiveDate> },
    Pub(PublicationRecord),
    Profile(ProfileMetadata),
}

fn is_bin(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses a publications file (and optional profile metadata) into a
/// snapshot.
pub fn parse_snapshot(
    pubs_path: &Path,
    format: InputFormat,
    profiles_path: Option<&Path>,
    opts: ParseOptions,
) -> Result<(Snapshot, ParseReport), CorpusError> {
    let file = File::open(pubs_path).map_err(|e| io_err(pubs_path, e))?;
    let mut report = ParseReport::default();
    let records = match format {
        InputFormat::Jsonl => read_publications_jsonl(BufReader::new(file), &mut report)
            .map_err(|e| io_err(pubs_path, e))?,
        InputFormat::Xml => read_publications_xml(BufReader::new(file), &mut report),
    };
    let meta = match profiles_path {
        Some(p) => {
            let f = File::open(p).map_err(|e| io_err(p, e))?;
            read_metadata_jsonl(BufReader::new(f), &mut report).map_err(|e| io_err(p, e))?
        }
        None => Vec::new(),
    };
    if opts.strict && report.malformed > 0 {
        return Err(CorpusError::Malformed {
            count: report.malformed,
            first: report.messages.first().cloned().unwrap_or_default(),
        });
    }
    let mut snap = Snapshot::from_publications(records)?;
    report.orphan_metadata = snap.apply_metadata(meta);
    Ok((snap, report))
}

pub fn read_publications_jsonl<R: BufRead>(
    reader: R,
    report: &mut ParseReport,
) -> std::io::Result<Vec<PublicationRecord>> {
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.records += 1;
        match serde_json::from_str::<PublicationRecord>(&line) {
            Ok(p) => match p.validate() {
                Ok(()) => out.push(p),
                Err(msg) => report.malformed(format!("line {}: {msg}", no + 1)),
            },
            Err(e) => report.malformed(format!("line {}: {e}", no + 1)),
        }
    }
    Ok(out)
}

pub fn read_metadata_jsonl<R: BufRead>(
    reader: R,
    report: &mut ParseReport,
) -> std::io::Result<Vec<ProfileMetadata>> {
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ProfileMetadata>(&line) {
            Ok(m) if !m.pid.is_empty() => out.push(m),
            Ok(_) => report.malformed(format!("profiles line {}: empty pid", no + 1)),
            Err(e) => report.malformed(format!("profiles line {}: {e}", no + 1)),
        }
    }
    Ok(out)
}

const RECORD_ELEMENTS: &[&[u8]] = &[
    b"article",
    b"inproceedings",
    b"proceedings",
    b"book",
    b"incollection",
    b"phdthesis",
    b"mastersthesis",
];

#[derive(Default)]
struct PartialRecord {
    key: String,
    venue_attr: Option<String>,
    title: String,
    year: Option<String>,
    venue: Option<String>,
    journal: Option<String>,
    booktitle: Option<String>,
    authors: Vec<(Option<String>, String)>,
}

impl PartialRecord {
    fn finish(self) -> Result<PublicationRecord, String> {
        let year = self
            .year
            .as_deref()
            .map(str::trim)
            .ok_or_else(|| format!("{}: missing year", self.key))?
            .parse::<i32>()
            .map_err(|e| format!("{}: bad year: {e}", self.key))?;
        let venue_id = self
            .venue_attr
            .or(self.venue)
            .or(self.journal)
            .or(self.booktitle)
            .map(|v| v.trim().to_string())
            .ok_or_else(|| format!("{}: missing venue", self.key))?;
        let authors = self
            .authors
            .into_iter()
            .map(|(pid, name)| {
                let name = name.trim().to_string();
                AuthorRef {
                    pid: pid.unwrap_or_else(|| name.clone()),
                    name,
                }
            })
            .collect();
        let rec = PublicationRecord {
            pub_id: self.key,
            title: self.title.trim().to_string(),
            year,
            venue_id,
            authors,
        };
        rec.validate()?;
        Ok(rec)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum XmlField {
    Title,
    Year,
    Venue,
    Journal,
    Booktitle,
    Author,
    Other,
}

/// Reads dblp-style records. Each record element carries a `key`
/// attribute and an optional `venue` attribute; children are `author`
/// (with optional `pid` attribute), `title`, `year` and one of `venue`,
/// `journal` or `booktitle`. Inline markup inside titles is flattened.
pub fn read_publications_xml<R: BufRead>(reader: R, report: &mut ParseReport) -> Vec<PublicationRecord> {
    let mut xml = Reader::from_reader(reader);
    let mut buf = Vec::new();
    let mut out = Vec::new();
    let mut current: Option<PartialRecord> = None;
    let mut field: Option<XmlField> = None;
    let mut author_pid: Option<String> = None;
    let mut text = String::new();

    loop {
        match xml.read_event_into(&mut buf) {
            Ok(Event::Start(e)) => {
                let name = e.name().as_ref().to_vec();
                if current.is_none() {
                    if RECORD_ELEMENTS.contains(&name.as_slice()) {
                        let mut rec = PartialRecord::default();
                        for attr in e.attributes().flatten() {
                            let val = attr.unescape_value().map(|v| v.into_owned()).unwrap_or_default();
                            match attr.key.as_ref() {
                                b"key" => rec.key = val,
                                b"venue" => rec.venue_attr = Some(val),
                                _ => {}
                            }
                        }
                        current = Some(rec);
                    }
                } else if field.is_none() {
                    let f = match name.as_slice() {
                        b"title" => XmlField::Title,
                        b"year" => XmlField::Year,
                        b"venue" => XmlField::Venue,
                        b"journal" => XmlField::Journal,
                        b"booktitle" => XmlField::Booktitle,
                        b"author" => {
                            author_pid = e
                                .attributes()
                                .flatten()
                                .find(|a| a.key.as_ref() == b"pid")
                                .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()));
                            XmlField::Author
                        }
                        _ => XmlField::Other,
                    };
                    field = Some(f);
                    text.clear();
                }
            }
            Ok(Event::Text(t)) => {
                if field.is_some() {
                    match t.unescape() {
                        Ok(s) => text.push_str(&s),
                        Err(_) => text.push_str(&String::from_utf8_lossy(&t)),
                    }
                }
            }
            Ok(Event::End(e)) => {
                let name = e.name().as_ref().to_vec();
                let Some(rec) = current.as_mut() else { continue };
                let closes_field = matches!(
                    (field, name.as_slice()),
                    (Some(XmlField::Title), b"title")
                        | (Some(XmlField::Year), b"year")
                        | (Some(XmlField::Venue), b"venue")
                        | (Some(XmlField::Journal), b"journal")
                        | (Some(XmlField::Booktitle), b"booktitle")
                        | (Some(XmlField::Author), b"author")
                );
                if closes_field {
                    let value = std::mem::take(&mut text);
                    match field.take() {
                        Some(XmlField::Title) => rec.title = value,
                        Some(XmlField::Year) => rec.year = Some(value),
                        Some(XmlField::Venue) => rec.venue = Some(value),
                        Some(XmlField::Journal) => rec.journal = Some(value),
                        Some(XmlField::Booktitle) => rec.booktitle = Some(value),
                        Some(XmlField::Author) => rec.authors.push((author_pid.take(), value)),
                        _ => {}
                    }
                } else if field == Some(XmlField::Other) && !is_inline(&name) {
                    field = None;
                } else if field.is_none() && RECORD_ELEMENTS.contains(&name.as_slice()) {
                    report.records += 1;
                    match current.take().expect("record open").finish() {
                        Ok(p) => out.push(p),
                        Err(msg) => report.malformed(msg),
                    }
                }
            }
            Ok(Event::Eof) => break,
            Err(e) => {
                report.malformed(format!("xml error at byte {}: {e}", xml.buffer_position()));
                break;
            }
            _ => {}
        }
        buf.clear();
    }
    if current.is_some() {
        report.records += 1;
        report.malformed("unterminated record at end of input".into());
    }
    out
}

fn is_inline(name: &[u8]) -> bool {
    matches!(name, b"i" | b"sub" | b"sup" | b"tt" | b"b")
}

/// Reads the entire file into memory; used by the CLI for small auxiliary
/// inputs.
pub fn read_to_string(path: &Path) -> Result<String, CorpusError> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| io_err(path, e))?;
    Ok(s)
}


#[cfg(test)]
pub(crate) use tests::rec as test_record;
