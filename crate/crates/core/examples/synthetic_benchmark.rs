//! Runs the full pipeline on a synthetic corpus and prints the result
//! table. `cargo run --release -p homonym-core --example synthetic_benchmark [seeds]`

use std::time::Instant;

use homonym_core::experiment::{run_synthetic_pipeline, PipelineConfig};
use homonym_core::golddata::dataset_report;
use homonym_core::metrics::TABLE_HEADER;

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(25);
    let cfg = PipelineConfig {
        model_seeds: (0..seeds).collect(),
        group_sets: ["B", "BC", "BT", "BV", "BY", "BTV", "BCTVY"]
            .iter()
            .map(|g| g.parse().unwrap())
            .collect(),
        ..Default::default()
    };
    let start = Instant::now();
    let out = run_synthetic_pipeline(&cfg).expect("pipeline runs");
    println!("{}", dataset_report(&out.labels));
    println!("{TABLE_HEADER}");
    for r in &out.results {
        println!("{}", r.table_row());
    }
    println!("elapsed {:.1?}", start.elapsed());
}
