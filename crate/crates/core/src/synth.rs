//! Synthetic bibliography with planted homonyms, for end-to-end runs
//! without the real database.
//!
//! Persons belong to a topic (own title vocabulary and venues) and to a
//! coauthor community inside that topic. A homonym profile is made by
//! giving two persons from different topics, with shifted careers, the
//! same profile id; a Split event on that id is the gold label. Some
//! single persons work in two topics, which makes them look like
//! homonyms, so the task is not trivially separable.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorRef, CorpusError, ProfileId, ProfileMetadata, PublicationRecord, Snapshot};
use crate::golddata::{CorrectionEvent, CorrectionKind, Interval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub persons: usize,
    pub topics: usize,
    pub words_per_topic: usize,
    pub generic_words: usize,
    pub venues_per_topic: usize,
    pub general_venues: usize,
    pub community_size: usize,
    pub homonym_pairs: usize,
    /// Share of single persons publishing in a second topic.
    pub interdisciplinary_rate: f64,
    /// Share of single persons with a second community in their own topic.
    pub moved_rate: f64,
    /// Share of single-person profiles with neither person info nor a
    /// 4-digit name, hence unlabeled.
    pub unlabeled_rate: f64,
    pub first_year: i32,
    pub t1: NaiveDate,
    pub t2: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            persons: 2_400,
            topics: 16,
            words_per_topic: 40,
            generic_words: 30,
            venues_per_topic: 4,
            general_venues: 6,
            community_size: 10,
            homonym_pairs: 230,
            interdisciplinary_rate: 0.04,
            moved_rate: 0.3,
            unlabeled_rate: 0.10,
            first_year: 1980,
            t1: NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date"),
            t2: NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date"),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn interval(&self) -> Interval {
        Interval { t1: self.t1, t2: self.t2 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub snapshot: Snapshot,
    pub metadata: Vec<ProfileMetadata>,
    pub events: Vec<CorrectionEvent>,
    /// Profiles that really are homonyms, i.e. the planted merges.
    pub homonyms: BTreeSet<ProfileId>,
}

#[derive(Debug, Clone)]
struct Person {
    topic: usize,
    community: usize,
    /// Second coauthor community and the share of lead papers written there.
    second: Option<((usize, usize), f64)>,
    start: i32,
    end: i32,
    lead_papers: usize,
    name: String,
}

const SYLLABLES: &[&str] = &[
    "ba", "ce", "di", "fo", "gu", "ha", "ki", "lo", "mu", "ne", "pi", "ra", "se", "ti", "vo", "za", "bru", "cla",
    "dre", "fli", "gro", "ple", "sta", "tri", "qua", "xen", "lum", "mor", "nix", "tal",
];
const FIRST: &[&str] = &[
    "Wei", "Anna", "Jan", "Maria", "Lei", "Peter", "Yuki", "Sara", "Ali", "Mehmet", "Olga", "Juan", "Kim", "Ravi",
    "Elena", "Tom", "Aisha", "Chen", "Ivan", "Lena",
];
const LAST: &[&str] = &[
    "Wang", "Schmidt", "Kowalski", "Garcia", "Li", "Novak", "Tanaka", "Silva", "Khan", "Yilmaz", "Petrov", "Rossi",
    "Zhang", "Nguyen", "Kumar", "Muller", "Cohen", "Berg", "Sato", "Lopez",
];

fn vocabulary(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = rng.random_range(2..=3);
        let w: String = (0..k).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = BTreeSet::new();
    let topic_words: Vec<Vec<String>> = (0..cfg.topics)
        .map(|_| vocabulary(&mut rng, cfg.words_per_topic, &mut taken))
        .collect();
    let generic = vocabulary(&mut rng, cfg.generic_words, &mut taken);
    let topic_venues: Vec<Vec<String>> = (0..cfg.topics)
        .map(|t| (0..cfg.venues_per_topic).map(|v| format!("venue/t{t}v{v}")).collect())
        .collect();
    let general_venues: Vec<String> = (0..cfg.general_venues).map(|v| format!("venue/general{v}")).collect();
    let zipf = Zipf::new(cfg.words_per_topic as f64, 1.0).expect("valid zipf");
    let productivity = LogNormal::<f64>::new(1.4, 1.0).expect("valid lognormal");

    let per_topic = (cfg.persons / cfg.topics).max(1);
    let communities_per_topic = per_topic.div_ceil(cfg.community_size).max(1);
    let last_year = cfg.t1.format("%Y").to_string().parse::<i32>().expect("year") - 1;
    let mut persons: Vec<Person> = (0..cfg.persons)
        .map(|i| {
            let topic = i % cfg.topics;
            let start = rng.random_range(cfg.first_year..=last_year - 2);
            let end = (start + rng.random_range(3..=18)).min(last_year);
            Person {
                topic,
                community: rng.random_range(0..communities_per_topic),
                second: None,
                start,
                end,
                lead_papers: (productivity.sample(&mut rng).round() as usize).clamp(1, 80),
                name: format!("{} {}", FIRST.choose(&mut rng).expect("x"), LAST.choose(&mut rng).expect("x")),
            }
        })
        .collect();

    // planted merges: (kept, absorbed), disjoint topics, shifted careers
    let mut order: Vec<usize> = (0..cfg.persons).collect();
    order.shuffle(&mut rng);
    let mut median = persons.iter().map(|p| p.lead_papers).collect::<Vec<_>>();
    median.sort_unstable();
    let cutoff = median[median.len() / 2];
    let mut used = vec![false; cfg.persons];
    let mut merges: Vec<(usize, usize)> = Vec::new();
    for &a in &order {
        if merges.len() == cfg.homonym_pairs {
            break;
        }
        if used[a] || persons[a].lead_papers > cutoff {
            continue;
        }
        let partner = order.iter().copied().find(|&b| {
            !used[b]
                && b != a
                && persons[b].topic != persons[a].topic
                && persons[b].lead_papers <= cutoff
                && (persons[b].start - persons[a].start).abs() >= 6
        });
        if let Some(b) = partner {
            used[a] = true;
            used[b] = true;
            merges.push((a, b));
        }
    }
    for (i, p) in persons.iter_mut().enumerate() {
        if used[i] {
            continue;
        }
        if rng.random_bool(cfg.interdisciplinary_rate) {
            let t = (p.topic + rng.random_range(1..cfg.topics)) % cfg.topics;
            p.second = Some(((t, rng.random_range(0..communities_per_topic)), 0.3));
        } else if rng.random_bool(cfg.moved_rate) {
            // changed groups within the same field
            let c = (p.community + rng.random_range(1..communities_per_topic.max(2))) % communities_per_topic;
            p.second = Some(((p.topic, c), 0.4));
        }
    }

    let mut members: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, p) in persons.iter().enumerate() {
        members.entry((p.topic, p.community)).or_default().push(i);
        if let Some((sec, _)) = p.second {
            members.entry(sec).or_default().push(i);
        }
    }

    let mut owner: Vec<ProfileId> = (0..cfg.persons).map(|i| format!("p{i:05}")).collect();
    for &(a, b) in &merges {
        owner[b] = owner[a].clone();
    }

    let mut pubs = Vec::new();
    for (i, p) in persons.iter().enumerate() {
        for k in 0..p.lead_papers {
            let (topic, community) = match p.second {
                Some((sec, share)) if rng.random_bool(share) => sec,
                _ => (p.topic, p.community),
            };
            let year = rng.random_range(p.start..=p.end);
            let n_coauthors = [1usize, 1, 2, 2, 2, 3, 3, 4].choose(&mut rng).copied().expect("x");
            let mut authors = vec![i];
            for _ in 0..n_coauthors {
                // occasional collaboration with a neighbouring community
                let c = if rng.random_bool(0.1) {
                    rng.random_range(0..communities_per_topic)
                } else {
                    community
                };
                let active: Vec<usize> = members
                    .get(&(topic, c))
                    .map(|m| {
                        m.iter()
                            .copied()
                            .filter(|&m| persons[m].start <= year && year <= persons[m].end)
                            .collect()
                    })
                    .unwrap_or_default();
                if let Ok(&c) = active.choose_weighted(&mut rng, |&m| persons[m].lead_papers as f64) {
                    authors.push(c);
                }
            }
            let mut refs: Vec<AuthorRef> = Vec::new();
            for a in authors {
                if refs.iter().all(|r| r.pid != owner[a]) {
                    refs.push(AuthorRef {
                        pid: owner[a].clone(),
                        name: persons[a].name.clone(),
                    });
                }
            }
            let words = rng.random_range(3..=7);
            let title: Vec<&str> = (0..words)
                .map(|_| {
                    if rng.random_bool(0.75) {
                        topic_words[topic][zipf.sample(&mut rng) as usize - 1].as_str()
                    } else {
                        generic.choose(&mut rng).expect("x").as_str()
                    }
                })
                .collect();
            let venue = if rng.random_bool(0.85) {
                topic_venues[topic].choose(&mut rng)
            } else {
                general_venues.choose(&mut rng)
            };
            pubs.push(PublicationRecord {
                pub_id: format!("pub/{i:05}/{k}"),
                title: title.join(" "),
                year,
                venue_id: venue.expect("x").clone(),
                authors: refs,
            });
        }
    }
    let mut snapshot = Snapshot::from_publications(pubs)?;
    snapshot.timestamp = Some(cfg.t1);

    let homonyms: BTreeSet<ProfileId> = merges.iter().map(|&(a, _)| owner[a].clone()).collect();
    let absorbed: BTreeSet<usize> = merges.iter().map(|&(_, b)| b).collect();
    let mut metadata = Vec::new();
    for (i, p) in persons.iter().enumerate() {
        if absorbed.contains(&i) || !snapshot.profiles.contains_key(&owner[i]) {
            continue;
        }
        let pid = owner[i].clone();
        let (names, person_info) = if homonyms.contains(&pid) {
            (vec![p.name.clone()], rng.random_bool(0.3))
        } else {
            let r: f64 = rng.random();
            if r < cfg.unlabeled_rate {
                (vec![p.name.clone()], false)
            } else if r < cfg.unlabeled_rate + (1.0 - cfg.unlabeled_rate) * 0.6 {
                (vec![p.name.clone()], true)
            } else {
                (vec![format!("{} {:04}", p.name, rng.random_range(1..=30))], false)
            }
        };
        metadata.push(ProfileMetadata { pid, names, person_info });
    }
    snapshot.apply_metadata(metadata.clone());

    let days = (cfg.t2 - cfg.t1).num_days().max(1);
    let in_interval = |rng: &mut ChaCha8Rng| cfg.t1 + Duration::days(rng.random_range(1..=days));
    let mut events: Vec<CorrectionEvent> = homonyms
        .iter()
        .map(|pid| CorrectionEvent {
            kind: CorrectionKind::Split,
            source_profile_id: pid.clone(),
            timestamp: in_interval(&mut rng),
        })
        .collect();
    let pids: Vec<&ProfileId> = snapshot.profiles.keys().collect();
    for _ in 0..pids.len() / 20 {
        let kind = if rng.random_bool(0.5) { CorrectionKind::Merge } else { CorrectionKind::Redistribute };
        events.push(CorrectionEvent {
            kind,
            source_profile_id: (*pids.choose(&mut rng).expect("x")).clone(),
            timestamp: in_interval(&mut rng),
        });
    }
    // splits already resolved before t1, and references to profiles that
    // do not exist at t1
    for _ in 0..pids.len() / 100 {
        events.push(CorrectionEvent {
            kind: CorrectionKind::Split,
            source_profile_id: (*pids.choose(&mut rng).expect("x")).clone(),
            timestamp: cfg.t1 - Duration::days(rng.random_range(0..2000)),
        });
    }
    for k in 0..5 {
        events.push(CorrectionEvent {
            kind: CorrectionKind::Split,
            source_profile_id: format!("gone/{k}"),
            timestamp: in_interval(&mut rng),
        });
    }
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.source_profile_id.cmp(&b.source_profile_id)));

    Ok(SynthCorpus {
        snapshot,
        metadata,
        events,
        homonyms,
    })
}
