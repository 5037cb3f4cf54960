//! Fixed-width profile vectorization.
//!
//! A profile is mapped to the concatenation of up to five feature groups,
//! always in the order B, C, T, V, Y:
//!
//! | group | width | content                                                  |
//! |-------|-------|----------------------------------------------------------|
//! | B     | 3     | publications, coauthors, coauthor-coauthor edges         |
//! | C     | 7     | cluster count, five largest cluster sizes, entropy h     |
//! | T     | 12    | cosine geometry of the per-title document vectors        |
//! | V     | 13    | venue count, cosine geometry of the venue vectors        |
//! | Y     | 4     | year span, distinct years, largest gap, mode gap         |

mod geometry;
mod scaler;
mod years;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::corpus::{CorpusError, ProfileView, Snapshot, VenueId};
use crate::embed::{embed_document, tokenize_title, DocVector, WordEmbedding};
use crate::graph::{build_local_graph, cluster_coauthors, CoauthorClustering, EdgeMode, LocalCoauthorGraph};

pub use geometry::{features_geom, gonzalez_center_count, gonzalez_center_count_by, percentiles, CENTER_RADIUS, PERCENTILES};
pub use scaler::Scaler;
pub use years::features_years;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("empty point set")]
    EmptyPointSet,
    #[error("profile has no publication years")]
    NoYears,
    #[error("dimension mismatch: expected {0}, got {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid feature group selection {0:?}")]
    InvalidGroups(String),
    #[error("group set {wanted} is not contained in {available}")]
    NotASubset { wanted: GroupSet, available: GroupSet },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("encoding: {0}")]
    Encoding(String),
}

impl PartialEq for FeatureError {
    fn eq(&self, other: &Self) -> bool {
        use FeatureError::*;
        match (self, other) {
            (EmptyPointSet, EmptyPointSet) | (NoYears, NoYears) | (EmptyTrainingSet, EmptyTrainingSet) => true,
            (DimensionMismatch(a, b), DimensionMismatch(c, d)) => a == c && b == d,
            (InvalidGroups(a), InvalidGroups(b)) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureGroup {
    B,
    C,
    T,
    V,
    Y,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 5] = [FeatureGroup::B, FeatureGroup::C, FeatureGroup::T, FeatureGroup::V, FeatureGroup::Y];

    pub fn width(self) -> usize {
        match self {
            FeatureGroup::B => 3,
            FeatureGroup::C => 7,
            FeatureGroup::T => 12,
            FeatureGroup::V => 13,
            FeatureGroup::Y => 4,
        }
    }

    pub fn letter(self) -> char {
        match self {
            FeatureGroup::B => 'B',
            FeatureGroup::C => 'C',
            FeatureGroup::T => 'T',
            FeatureGroup::V => 'V',
            FeatureGroup::Y => 'Y',
        }
    }

    /// Names of the group's dimensions, in vector order.
    pub fn dimension_names(self) -> Vec<String> {
        let geom = |prefix: &str| {
            let mut v = vec![format!("{prefix}.diameter"), format!("{prefix}.centers_r0.5")];
            v.extend(PERCENTILES.iter().map(|p| format!("{prefix}.pairwise_p{p}")));
            v.extend(PERCENTILES.iter().map(|p| format!("{prefix}.centroid_p{p}")));
            v
        };
        match self {
            FeatureGroup::B => vec!["B.publications".into(), "B.coauthors".into(), "B.coauthor_edges".into()],
            FeatureGroup::C => {
                let mut v = vec!["C.clusters".to_string()];
                v.extend((1..=5).map(|i| format!("C.cluster_size_{i}")));
                v.push("C.entropy".into());
                v
            }
            FeatureGroup::T => geom("T"),
            FeatureGroup::V => {
                let mut v = vec!["V.venues".to_string()];
                v.extend(geom("V"));
                v
            }
            FeatureGroup::Y => vec!["Y.span".into(), "Y.distinct_years".into(), "Y.largest_gap".into(), "Y.mode_gap".into()],
        }
    }
}

/// Non-empty ordered subset of the feature groups, written like `BCTVY`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupSet(u8);

impl GroupSet {
    pub const FULL: GroupSet = GroupSet(0b11111);

    /// Ablation rows reported for the production classifier.
    pub const ABLATIONS: [&'static str; 7] = ["B", "BC", "BT", "BV", "BY", "BTV", "BCTVY"];

    pub fn from_groups(groups: &[FeatureGroup]) -> Result<Self, FeatureError> {
        let mut bits = 0u8;
        for g in groups {
            bits |= 1 << (*g as u8);
        }
        if bits == 0 {
            return Err(FeatureError::InvalidGroups(String::new()));
        }
        Ok(GroupSet(bits))
    }

    pub fn contains(self, g: FeatureGroup) -> bool {
        self.0 & (1 << g as u8) != 0
    }

    pub fn groups(self) -> impl Iterator<Item = FeatureGroup> {
        FeatureGroup::ALL.into_iter().filter(move |g| self.contains(*g))
    }

    pub fn width(self) -> usize {
        self.groups().map(FeatureGroup::width).sum()
    }

    /// Start offset of each included group inside the vector.
    pub fn offsets(self) -> Vec<(FeatureGroup, usize)> {
        let mut at = 0;
        self.groups()
            .map(|g| {
                let o = (g, at);
                at += g.width();
                o
            })
            .collect()
    }

    pub fn dimension_names(self) -> Vec<String> {
        self.groups().flat_map(FeatureGroup::dimension_names).collect()
    }

    pub fn is_subset_of(self, other: GroupSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Column indices of `self` inside vectors laid out as `available`.
    pub fn columns_in(self, available: GroupSet) -> Result<Vec<usize>, FeatureError> {
        if !self.is_subset_of(available) {
            return Err(FeatureError::NotASubset {
                wanted: self,
                available,
            });
        }
        Ok(available
            .offsets()
            .into_iter()
            .filter(|(g, _)| self.contains(*g))
            .flat_map(|(g, at)| at..at + g.width())
            .collect())
    }
}

impl fmt::Display for GroupSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.groups().try_for_each(|g| write!(f, "{}", g.letter()))
    }
}

impl FromStr for GroupSet {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut groups = Vec::new();
        for c in s.trim().chars() {
            let g = match c.to_ascii_uppercase() {
                'B' => FeatureGroup::B,
                'C' => FeatureGroup::C,
                'T' => FeatureGroup::T,
                'V' => FeatureGroup::V,
                'Y' => FeatureGroup::Y,
                _ => return Err(FeatureError::InvalidGroups(s.to_string())),
            };
            if groups.contains(&g) {
                return Err(FeatureError::InvalidGroups(s.to_string()));
            }
            groups.push(g);
        }
        GroupSet::from_groups(&groups).map_err(|_| FeatureError::InvalidGroups(s.to_string()))
    }
}

impl Serialize for GroupSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub groups: GroupSet,
}

impl FeatureVector {
    /// Restricts the vector to a subset of its groups.
    pub fn select(&self, groups: GroupSet) -> Result<FeatureVector, FeatureError> {
        let cols = groups.columns_in(self.groups)?;
        Ok(FeatureVector {
            values: cols.iter().map(|&c| self.values[c]).collect(),
            groups,
        })
    }
}

pub fn features_basic(view: &ProfileView, g: &LocalCoauthorGraph) -> [f64; 3] {
    [view.titles.len() as f64, view.coauthors.len() as f64, g.edges.len() as f64]
}

pub fn features_clusters(c: &CoauthorClustering) -> [f64; 7] {
    let mut out = [0.0; 7];
    out[0] = c.k() as f64;
    for (slot, &n) in out[1..6].iter_mut().zip(&c.sizes) {
        *slot = n as f64;
    }
    out[6] = c.entropy;
    out
}

pub fn features_titles<S: AsRef<str>>(e: &WordEmbedding, titles: &[S]) -> Result<[f64; 12], FeatureError> {
    let docs: Vec<DocVector> = titles
        .iter()
        .map(|t| embed_document(e, &tokenize_title(t.as_ref())))
        .collect();
    features_geom(&docs)
}

pub fn features_venues(venue_vectors: &[DocVector]) -> Result<[f64; 13], FeatureError> {
    let geom = features_geom(venue_vectors)?;
    let mut out = [0.0; 13];
    out[0] = venue_vectors.len() as f64;
    out[1..].copy_from_slice(&geom);
    Ok(out)
}

/// Which titles represent a venue.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VenueScope {
    /// Every title the snapshot lists for the venue.
    #[default]
    Snapshot,
    /// Only the profile's own titles in that venue.
    Profile,
}

impl FromStr for VenueScope {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "snapshot" | "all" => Ok(VenueScope::Snapshot),
            "profile" => Ok(VenueScope::Profile),
            other => Err(FeatureError::InvalidGroups(format!("venue scope {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorizerOptions {
    #[serde(default)]
    pub edges: EdgeMode,
    #[serde(default)]
    pub venue_scope: VenueScope,
}

fn venue_vector<'a, I>(e: &WordEmbedding, titles: I) -> DocVector
where
    I: IntoIterator<Item = &'a str>,
{
    let tokens: Vec<String> = titles.into_iter().flat_map(tokenize_title).collect();
    embed_document(e, &tokens)
}

/// Vectorizes profiles of one snapshot against one embedding. Venue
/// vectors are computed once at construction.
pub struct Vectorizer<'a> {
    snapshot: &'a Snapshot,
    embedding: &'a WordEmbedding,
    options: VectorizerOptions,
    venue_cache: BTreeMap<VenueId, DocVector>,
}

impl<'a> Vectorizer<'a> {
    pub fn new(snapshot: &'a Snapshot, embedding: &'a WordEmbedding, options: VectorizerOptions) -> Self {
        let venue_cache = match options.venue_scope {
            VenueScope::Snapshot => snapshot
                .venues
                .par_iter()
                .map(|(vid, pubs)| {
                    let titles = pubs.iter().map(|p| snapshot.publications[p].title.as_str());
                    (vid.clone(), venue_vector(embedding, titles))
                })
                .collect(),
            VenueScope::Profile => BTreeMap::new(),
        };
        Vectorizer {
            snapshot,
            embedding,
            options,
            venue_cache,
        }
    }

    pub fn snapshot(&self) -> &Snapshot {
        self.snapshot
    }

    pub fn options(&self) -> VectorizerOptions {
        self.options
    }

    pub fn vectorize(&self, id: &str, groups: GroupSet) -> Result<FeatureVector, FeatureError> {
        let view = self.snapshot.profile_view(id)?;
        let mut values = Vec::with_capacity(groups.width());
        let needs_graph = groups.contains(FeatureGroup::B) || groups.contains(FeatureGroup::C);
        let graph = if needs_graph {
            Some(build_local_graph(self.snapshot, id, self.options.edges)?)
        } else {
            None
        };
        for g in groups.groups() {
            match g {
                FeatureGroup::B => values.extend(features_basic(&view, graph.as_ref().expect("graph built"))),
                FeatureGroup::C => values.extend(features_clusters(&cluster_coauthors(graph.as_ref().expect("graph built")))),
                FeatureGroup::T => values.extend(features_titles(self.embedding, &view.titles)?),
                FeatureGroup::V => values.extend(features_venues(&self.venue_vectors(id, &view)?)?),
                FeatureGroup::Y => values.extend(features_years(&view.years)?),
            }
        }
        debug_assert_eq!(values.len(), groups.width());
        Ok(FeatureVector { values, groups })
    }

    fn venue_vectors(&self, id: &str, view: &ProfileView) -> Result<Vec<DocVector>, FeatureError> {
        match self.options.venue_scope {
            VenueScope::Snapshot => Ok(view.venues.iter().map(|v| self.venue_cache[v].clone()).collect()),
            VenueScope::Profile => {
                let prof = self.snapshot.profile(id)?;
                let mut by_venue: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
                for p in self.snapshot.publications_of(prof) {
                    by_venue.entry(&p.venue_id).or_default().push(&p.title);
                }
                Ok(by_venue
                    .into_values()
                    .map(|titles| venue_vector(self.embedding, titles))
                    .collect())
            }
        }
    }

    /// Vectorizes many profiles in parallel; output order follows `ids`.
    pub fn vectorize_many(&self, ids: &[String], groups: GroupSet) -> Result<Vec<FeatureVector>, FeatureError> {
        ids.par_iter().map(|id| self.vectorize(id, groups)).collect()
    }
}
