use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use homonym_core::corpus::{parse_snapshot, InputFormat, ParseOptions, ProfileId, Snapshot};
use homonym_core::embed::{train_word_embeddings, SkipGramParams, WordEmbedding};
use homonym_core::experiment::{
    prepare_dataset, read_feature_rows, run_seeds, title_corpus, vectorize_all, write_feature_rows,
};
use homonym_core::features::{GroupSet, VectorizerOptions, VenueScope, Vectorizer};
use homonym_core::golddata::{
    dataset_report, filter_trivial, is_nontrivial, label_profiles, read_events, read_labels_tsv, split_train_test,
    write_events, write_labels_tsv, Interval, SplitManifest,
};
use homonym_core::graph::{build_local_graph, cluster_coauthors, EdgeMode};
use homonym_core::metrics::RunMetrics;
use homonym_core::mlp::NetworkConfig;
use homonym_core::model::ModelArtifact;
use homonym_core::ranking::{profile_detail, score_all};
use homonym_core::synth::{generate, SynthConfig};
use homonym_service::Store;

#[derive(Parser)]
#[command(name = "homonym", version, about = "Detect homonymous author profiles in a bibliography")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse publication records into a snapshot file.
    Ingest {
        #[arg(long)]
        pubs: PathBuf,
        /// JSON Lines profile metadata (pid, names, person_info).
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long, default_value = "jsonl")]
        format: InputFormat,
        /// Fail on any malformed record instead of skipping it.
        #[arg(long)]
        strict: bool,
        /// Output path; `.bin` selects the binary encoding.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the coauthor clusters of one profile as JSON.
    Cluster {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        pid: String,
        #[arg(long, default_value = "induced")]
        edges: EdgeMode,
    },
    /// Train skip-gram title embeddings.
    TrainEmbeddings {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        dimensions: Option<usize>,
        #[arg(long)]
        min_frequency: Option<u64>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f32>,
        #[arg(long)]
        min_learning_rate: Option<f32>,
        #[arg(long)]
        subsampling: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        negative: Option<usize>,
    },
    /// Write feature vectors as JSON Lines.
    Vectorize {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value = "BCTVY")]
        groups: GroupSet,
        #[command(flatten)]
        vectorizer: VectorizerArgs,
        /// Only vectorize the profiles in this label file; default is every
        /// profile with at least two publications and two coauthors.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive gold labels from correction events.
    BuildGold {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value = "2014-01-01")]
        t1: NaiveDate,
        #[arg(long, default_value = "2018-01-01")]
        t2: NaiveDate,
        #[arg(long)]
        out: PathBuf,
        /// Also write a train/test split manifest.
        #[arg(long)]
        split_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        train_ratio: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        /// Keep profiles with fewer than two publications or coauthors.
        #[arg(long)]
        keep_trivial: bool,
    },
    /// Train one model per seed and report mean ± std test metrics.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value = "BCTVY")]
        groups: GroupSet,
        #[arg(long, default_value_t = 25)]
        seeds: u64,
        #[arg(long)]
        out_dir: PathBuf,
        /// Split manifest from `build-gold --split-out`; otherwise an 80/20
        /// split is drawn from `--split-seed`.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        class_weighting: bool,
        #[arg(long)]
        epochs: Option<usize>,
        /// Must match the options the features were computed with.
        #[command(flatten)]
        vectorizer: VectorizerArgs,
    },
    /// Score a saved model on labeled features.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Restrict to the test side of this split manifest.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Score all profiles and replace the ranking in a store.
    Rank {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Store curator detail only for the top N profiles.
        #[arg(long)]
        detail_limit: Option<usize>,
    },
    /// Serve the ranking API and, optionally, the curator UI.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with planted homonyms.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        persons: Option<usize>,
        #[arg(long)]
        homonym_pairs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args, Clone, Copy)]
struct VectorizerArgs {
    #[arg(long, default_value = "induced")]
    edges: EdgeMode,
    #[arg(long, default_value = "snapshot")]
    venue_scope: VenueScope,
}

impl From<VectorizerArgs> for VectorizerOptions {
    fn from(a: VectorizerArgs) -> Self {
        VectorizerOptions {
            edges: a.edges,
            venue_scope: a.venue_scope,
        }
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Ingest {
            pubs,
            profiles,
            format,
            strict,
            out,
        } => {
            let (snap, report) = parse_snapshot(&pubs, format, profiles.as_deref(), ParseOptions { strict })?;
            eprintln!(
                "{} records, {} malformed, {} orphan metadata lines",
                report.records, report.malformed, report.orphan_metadata
            );
            for m in &report.messages {
                eprintln!("  {m}");
            }
            snap.save(&out)?;
            eprintln!(
                "{} publications, {} profiles, {} venues -> {}",
                snap.publications.len(),
                snap.profiles.len(),
                snap.venues.len(),
                out.display()
            );
        }
        Command::Cluster { snapshot, pid, edges } => {
            let snap = Snapshot::load(&snapshot)?;
            let c = cluster_coauthors(&build_local_graph(&snap, &pid, edges)?);
            let json = serde_json::json!({
                "pid": pid,
                "k": c.k(),
                "clusters": c.clusters,
                "sizes": c.sizes,
                "h": c.entropy,
            });
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::TrainEmbeddings {
            snapshot,
            seed,
            out,
            dimensions,
            min_frequency,
            window,
            learning_rate,
            min_learning_rate,
            subsampling,
            iterations,
            epochs,
            negative,
        } => {
            let d = SkipGramParams::default();
            let params = SkipGramParams {
                dimensions: dimensions.unwrap_or(d.dimensions),
                min_frequency: min_frequency.unwrap_or(d.min_frequency),
                window: window.unwrap_or(d.window),
                learning_rate: learning_rate.unwrap_or(d.learning_rate),
                min_learning_rate: min_learning_rate.unwrap_or(d.min_learning_rate),
                subsampling: subsampling.unwrap_or(d.subsampling),
                iterations: iterations.unwrap_or(d.iterations),
                epochs: epochs.unwrap_or(d.epochs),
                negative: negative.unwrap_or(d.negative),
            };
            let snap = Snapshot::load(&snapshot)?;
            let e = train_word_embeddings(&title_corpus(&snap), &params, seed)?;
            e.save(&out)?;
            eprintln!("{} words x {} dimensions -> {}", e.vocabulary().len(), e.dimension(), out.display());
        }
        Command::Vectorize {
            snapshot,
            embeddings,
            groups,
            vectorizer,
            labels,
            out,
        } => {
            let snap = Snapshot::load(&snapshot)?;
            let e = WordEmbedding::load(&embeddings)?;
            let ids: Vec<ProfileId> = match labels {
                Some(path) => read_labels(&path)?.into_iter().map(|l| l.profile_id).collect(),
                None => snap.profiles.keys().filter(|id| is_nontrivial(&snap, id)).cloned().collect(),
            };
            let vz = Vectorizer::new(&snap, &e, vectorizer.into());
            let rows = vectorize_all(&vz, &ids, groups)?;
            let mut w = create(&out)?;
            write_feature_rows(&mut w, &rows)?;
            w.flush()?;
            eprintln!("{} profiles x {} features -> {}", rows.len(), groups.width(), out.display());
        }
        Command::BuildGold {
            snapshot,
            events,
            t1,
            t2,
            out,
            split_out,
            train_ratio,
            split_seed,
            keep_trivial,
        } => {
            if t1 >= t2 {
                bail!("t1 ({t1}) must be before t2 ({t2})");
            }
            let snap = Snapshot::load(&snapshot)?;
            let evs = read_events(BufReader::new(open(&events)?))?;
            let (labeled, warnings) = label_profiles(&snap, &evs, Interval { t1, t2 });
            if warnings.outside_interval > 0 {
                eprintln!("{} events outside ({t1}, {t2}] ignored", warnings.outside_interval);
            }
            if !warnings.unknown_profiles.is_empty() {
                eprintln!(
                    "{} events name profiles missing from the snapshot, e.g. {}",
                    warnings.unknown_profiles.len(),
                    warnings.unknown_profiles[0]
                );
            }
            let labels = if keep_trivial { labeled } else { filter_trivial(&snap, labeled) };
            let mut w = create(&out)?;
            write_labels_tsv(&mut w, &labels)?;
            w.flush()?;
            eprintln!("{}", dataset_report(&labels));
            if let Some(path) = split_out {
                let split = split_train_test(&labels, train_ratio, split_seed)?;
                std::fs::write(&path, serde_json::to_string_pretty(&split)?)
                    .with_context(|| format!("writing {}", path.display()))?;
                eprintln!("split: {} train / {} test", split.train.len(), split.test.len());
            }
        }
        Command::Train {
            features,
            labels,
            groups,
            seeds,
            out_dir,
            split,
            split_seed,
            class_weighting,
            epochs,
            vectorizer,
        } => {
            if seeds < 2 {
                bail!("at least two seeds are needed for a standard deviation");
            }
            let feats = read_feature_rows(BufReader::new(open(&features)?))?;
            let labels = read_labels(&labels)?;
            let split = match split {
                Some(path) => read_split(&path)?,
                None => split_train_test(&labels, 0.8, split_seed)?,
            };
            let data = prepare_dataset(&feats, &labels, &split, groups)?;
            let mut cfg = NetworkConfig::new(groups.width(), 0);
            cfg.class_weighting = class_weighting;
            if let Some(n) = epochs {
                cfg.epochs = n;
            }
            let seed_list: Vec<u64> = (0..seeds).collect();
            let mut result = run_seeds(&data, &cfg, &seed_list, true)?;
            let net = result.runs[0].network.take().expect("networks kept");
            let model = ModelArtifact::new(groups, vectorizer.into(), data.scaler.clone(), net)?;

            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            model.save(&out_dir.join("model.json"))?;
            std::fs::write(out_dir.join("results.json"), serde_json::to_string_pretty(&result)?)?;
            std::fs::write(out_dir.join("split.json"), serde_json::to_string_pretty(&split)?)?;
            eprintln!(
                "{} train / {} test, {} seeds -> {}",
                data.train.len(),
                data.test.len(),
                seeds,
                out_dir.display()
            );
            println!("{:<6} {:>11} {:>11} {:>11} {:>11} {:>11}", "", "precision", "recall", "F1", "MCC", "AUROC");
            println!("{}", result.table_row());
        }
        Command::Evaluate {
            model,
            features,
            labels,
            split,
        } => {
            let model = ModelArtifact::load(&model)?;
            let feats = read_feature_rows(BufReader::new(open(&features)?))?;
            let labels = read_labels(&labels)?;
            let label_of: BTreeMap<&str, bool> =
                labels.iter().map(|l| (l.profile_id.as_str(), l.label.is_homonym())).collect();
            let ids: Vec<&str> = match split {
                Some(path) => {
                    let s = read_split(&path)?;
                    s.test.iter().map(|id| label_pid(&label_of, id)).collect::<Result<_>>()?
                }
                None => label_of.keys().copied().collect(),
            };
            let mut scores = Vec::with_capacity(ids.len());
            let mut truth = Vec::with_capacity(ids.len());
            for id in ids {
                let fv = feats.get(id).with_context(|| format!("no features for labeled profile {id}"))?;
                scores.push(model.predict(&fv.select(model.groups)?.values)?.p_homonym());
                truth.push(label_of[id]);
            }
            let m = RunMetrics::evaluate(&scores, &truth)?;
            let json = serde_json::json!({
                "groups": model.groups,
                "profiles": scores.len(),
                "homonyms": truth.iter().filter(|&&t| t).count(),
                "metrics": m,
            });
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::Rank {
            snapshot,
            model,
            embeddings,
            store,
            detail_limit,
        } => {
            let snap = Snapshot::load(&snapshot)?;
            let artifact = ModelArtifact::load(&model)?;
            let e = WordEmbedding::load(&embeddings)?;
            let vz = Vectorizer::new(&snap, &e, artifact.vectorizer);
            let ranking = score_all(&vz, &artifact)?;
            let n_detail = detail_limit.unwrap_or(ranking.len()).min(ranking.len());
            let details = ranking[..n_detail]
                .iter()
                .map(|r| profile_detail(&snap, &r.profile_id, artifact.vectorizer.edges, Some(r.p_homonym)))
                .collect::<Result<Vec<_>, _>>()?;
            let db = Store::open(&store)?;
            db.replace_ranking(&ranking, &details)?;
            db.set_meta("model", &model.display().to_string())?;
            db.set_meta("snapshot", &snapshot.display().to_string())?;
            eprintln!("{} profiles ranked -> {}", ranking.len(), store.display());
            for r in ranking.iter().take(10) {
                println!("{:>4} {:.4} {}", r.rank, r.p_homonym, r.profile_id);
            }
        }
        Command::Serve {
            store,
            port,
            host,
            static_dir,
        } => {
            if !store.exists() {
                bail!("store {} does not exist; run `rank` first", store.display());
            }
            let db = Arc::new(Store::open(&store)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(homonym_service::serve(db, SocketAddr::new(host, port), static_dir))?;
        }
        Command::Synth {
            out_dir,
            persons,
            homonym_pairs,
            seed,
        } => {
            let mut cfg = SynthConfig {
                seed,
                ..Default::default()
            };
            if let Some(n) = persons {
                cfg.persons = n;
            }
            if let Some(n) = homonym_pairs {
                cfg.homonym_pairs = n;
            }
            let corpus = generate(&cfg)?;
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            let mut w = create(&out_dir.join("pubs.jsonl"))?;
            for p in corpus.snapshot.publications.values() {
                writeln!(w, "{}", serde_json::to_string(p)?)?;
            }
            w.flush()?;
            let mut w = create(&out_dir.join("profiles.jsonl"))?;
            for m in &corpus.metadata {
                writeln!(w, "{}", serde_json::to_string(m)?)?;
            }
            w.flush()?;
            let mut w = create(&out_dir.join("events.jsonl"))?;
            write_events(&mut w, &corpus.events)?;
            w.flush()?;
            let truth: Vec<&str> = corpus.homonyms.iter().map(String::as_str).collect();
            std::fs::write(out_dir.join("homonyms.txt"), truth.join("\n") + "\n")?;
            eprintln!(
                "{} publications, {} profiles, {} planted homonyms -> {}",
                corpus.snapshot.publications.len(),
                corpus.snapshot.profiles.len(),
                corpus.homonyms.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_labels(path: &Path) -> Result<Vec<homonym_core::golddata::LabeledExample>> {
    read_labels_tsv(BufReader::new(open(path)?)).with_context(|| format!("reading {}", path.display()))
}

fn read_split(path: &Path) -> Result<SplitManifest> {
    serde_json::from_reader(BufReader::new(open(path)?)).with_context(|| format!("reading {}", path.display()))
}

fn label_pid<'a>(label_of: &BTreeMap<&'a str, bool>, id: &str) -> Result<&'a str> {
    label_of
        .get_key_value(id)
        .map(|(k, _)| *k)
        .with_context(|| format!("split names unlabeled profile {id}"))
}
