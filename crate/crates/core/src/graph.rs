//! Local coauthor networks and their connected-component clustering.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, ProfileId, Snapshot};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("cluster size must be positive, got {0}")]
    NonPositiveSize(usize),
    #[error("unknown edge mode {0:?} (expected induced or local-pubs-only)")]
    UnknownEdgeMode(String),
}

/// Which publications contribute coauthor-coauthor edges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeMode {
    /// Any co-authorship in the snapshot.
    #[default]
    Induced,
    /// Only co-authorships on the center's own publications.
    LocalPubsOnly,
}

impl FromStr for EdgeMode {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "induced" | "global" => Ok(EdgeMode::Induced),
            "local-pubs-only" | "local" => Ok(EdgeMode::LocalPubsOnly),
            other => Err(GraphError::UnknownEdgeMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalCoauthorGraph {
    pub center: ProfileId,
    pub nodes: BTreeSet<ProfileId>,
    /// Unordered pairs stored with the smaller id first.
    pub edges: BTreeSet<(ProfileId, ProfileId)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoauthorClustering {
    /// Connected components, largest first.
    pub clusters: Vec<BTreeSet<ProfileId>>,
    pub sizes: Vec<usize>,
    pub entropy: f64,
}

impl CoauthorClustering {
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }
}

pub fn build_local_graph(
    snap: &Snapshot,
    id: &str,
    mode: EdgeMode,
) -> Result<LocalCoauthorGraph, CorpusError> {
    let center = snap.profile(id)?;
    let nodes = snap.profile_view(id)?.coauthors;
    let mut edges = BTreeSet::new();
    let mut add_pairs = |authors: &mut dyn Iterator<Item = &ProfileId>| {
        let members: BTreeSet<&ProfileId> = authors.filter(|a| nodes.contains(*a)).collect();
        let members: Vec<_> = members.into_iter().collect();
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                edges.insert(((*a).clone(), (*b).clone()));
            }
        }
    };
    match mode {
        EdgeMode::LocalPubsOnly => {
            for p in snap.publications_of(center) {
                add_pairs(&mut p.authors.iter().map(|a| &a.pid));
            }
        }
        EdgeMode::Induced => {
            let mut seen = BTreeSet::new();
            for q in &nodes {
                for pub_id in &snap.profiles[q].publications {
                    if seen.insert(pub_id) {
                        add_pairs(&mut snap.publications[pub_id].authors.iter().map(|a| &a.pid));
                    }
                }
            }
        }
    }
    Ok(LocalCoauthorGraph {
        center: center.profile_id.clone(),
        nodes,
        edges,
    })
}

/// Connected components of the graph with the center already removed.
/// Components are ordered by size descending, ties by their smallest member.
pub fn cluster_coauthors(g: &LocalCoauthorGraph) -> CoauthorClustering {
    let nodes: Vec<&ProfileId> = g.nodes.iter().collect();
    let index: BTreeMap<&ProfileId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut uf = UnionFind::<usize>::new(nodes.len());
    for (a, b) in &g.edges {
        if let (Some(&ia), Some(&ib)) = (index.get(a), index.get(b)) {
            uf.union(ia, ib);
        }
    }
    let mut comps: BTreeMap<usize, BTreeSet<ProfileId>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        comps.entry(uf.find(i)).or_default().insert((*n).clone());
    }
    let mut clusters: Vec<BTreeSet<ProfileId>> = comps.into_values().collect();
    clusters.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.first().cmp(&b.first())));
    let sizes: Vec<usize> = clusters.iter().map(BTreeSet::len).collect();
    let entropy = cluster_entropy(&sizes).expect("component sizes are positive");
    CoauthorClustering {
        clusters,
        sizes,
        entropy,
    }
}

/// Normalized entropy of the cluster size distribution:
/// `h = 1/ln(k) * sum_i (n_i/N) ln(N/n_i)`, defined as 0 for `k <= 1`.
pub fn cluster_entropy(sizes: &[usize]) -> Result<f64, GraphError> {
    if let Some(&bad) = sizes.iter().find(|&&n| n == 0) {
        return Err(GraphError::NonPositiveSize(bad));
    }
    let k = sizes.len();
    if k <= 1 {
        return Ok(0.0);
    }
    // Uniform sizes evaluate to exactly 1; summing k copies of ln(k)/k need not.
    if sizes.iter().all(|&n| n == sizes[0]) {
        return Ok(1.0);
    }
    let total = sizes.iter().sum::<usize>() as f64;
    let sum: f64 = sizes
        .iter()
        .map(|&n| {
            let share = n as f64 / total;
            share * (total / n as f64).ln()
        })
        .sum();
    Ok((sum / (k as f64).ln()).clamp(0.0, 1.0))
}
