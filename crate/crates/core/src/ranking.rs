//! Scoring every eligible profile of a snapshot and the per-profile detail
//! shown to curators.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, ProfileId, PubId, Snapshot, VenueId};
use crate::features::Vectorizer;
use crate::golddata::is_nontrivial;
use crate::graph::{build_local_graph, cluster_coauthors, EdgeMode};
use crate::model::{ModelArtifact, ModelError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedProfile {
    pub profile_id: ProfileId,
    pub p_homonym: f64,
    pub rank: usize,
}

/// Scores every profile with at least two publications and two coauthors
/// and ranks by descending homonym probability, ties by profile id.
pub fn score_all(vectorizer: &Vectorizer<'_>, model: &ModelArtifact) -> Result<Vec<RankedProfile>, ModelError> {
    model.check_layout()?;
    if vectorizer.options() != model.vectorizer {
        return Err(ModelError::Layout(format!(
            "vectorizer options {:?} differ from training options {:?}",
            vectorizer.options(),
            model.vectorizer
        )));
    }
    let snap = vectorizer.snapshot();
    let ids: Vec<&ProfileId> = snap.profiles.keys().filter(|id| is_nontrivial(snap, id)).collect();
    let mut scored: Vec<(f64, &ProfileId)> = ids
        .par_iter()
        .map(|id| {
            let fv = vectorizer
                .vectorize(id, model.groups)
                .map_err(|e| ModelError::Layout(e.to_string()))?;
            Ok((model.predict(&fv.values)?.p_homonym(), *id))
        })
        .collect::<Result<_, ModelError>>()?;
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (p, id))| RankedProfile {
            profile_id: id.clone(),
            p_homonym: p,
            rank: i + 1,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicationDetail {
    pub id: PubId,
    pub title: String,
    pub year: i32,
    pub venue: VenueId,
    /// Index into `clusters` of the coauthor cluster this publication
    /// belongs to; `None` for single-author papers.
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDetail {
    pub pid: ProfileId,
    pub names: Vec<String>,
    pub publications: Vec<PublicationDetail>,
    pub clusters: Vec<Vec<ProfileId>>,
    pub cluster_sizes: Vec<usize>,
    pub entropy: f64,
    pub year_histogram: BTreeMap<i32, usize>,
    pub venues: BTreeMap<VenueId, usize>,
    pub p_homonym: Option<f64>,
}

pub fn profile_detail(
    snap: &Snapshot,
    id: &str,
    edges: EdgeMode,
    p_homonym: Option<f64>,
) -> Result<ProfileDetail, CorpusError> {
    let prof = snap.profile(id)?;
    let clustering = cluster_coauthors(&build_local_graph(snap, id, edges)?);
    let member: BTreeMap<&str, usize> = clustering
        .clusters
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |pid| (pid.as_str(), i)))
        .collect();
    let mut year_histogram = BTreeMap::new();
    let mut venues = BTreeMap::new();
    let publications = snap
        .publications_of(prof)
        .map(|p| {
            *year_histogram.entry(p.year).or_insert(0) += 1;
            *venues.entry(p.venue_id.clone()).or_insert(0) += 1;
            // all coauthors of one paper are adjacent, hence in one cluster
            let cluster = p
                .authors
                .iter()
                .find(|a| a.pid != prof.profile_id)
                .and_then(|a| member.get(a.pid.as_str()).copied());
            PublicationDetail {
                id: p.pub_id.clone(),
                title: p.title.clone(),
                year: p.year,
                venue: p.venue_id.clone(),
                cluster,
            }
        })
        .collect();
    Ok(ProfileDetail {
        pid: prof.profile_id.clone(),
        names: prof.names.clone(),
        publications,
        clusters: clustering.clusters.iter().map(|c| c.iter().cloned().collect()).collect(),
        cluster_sizes: clustering.sizes.clone(),
        entropy: clustering.entropy,
        year_histogram,
        venues,
        p_homonym,
    })
}
