//! Writes synthetic evaluation fixtures (triple-pair dataset and NLI
//! benchmark) into a directory, for driving the CLI without real data.
//!
//! Usage: `cargo run -p debias-core --example gen_fixtures -- <dir> [seed]`

use debias_core::nli::write_benchmark;
use debias_core::stereoset::write_triples;
use debias_core::synthetic::{synthetic_nli_benchmark, synthetic_stereoset};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = std::path::PathBuf::from(args.next().unwrap_or_else(|| "data".to_string()));
    let seed: u64 = args
        .next()
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(9);
    std::fs::create_dir_all(&dir).expect("create output directory");

    let triples = synthetic_stereoset(50, seed);
    write_triples(&dir.join("stereoset.jsonl"), &triples).expect("write stereoset");
    let benchmark = synthetic_nli_benchmark(200, seed);
    write_benchmark(&dir.join("benchmark.jsonl"), &benchmark).expect("write benchmark");

    // Trimmed probe inputs for fast grid runs; the embedded defaults cover
    // the full 164 x 33 probe set.
    let occupations: Vec<String> = debias_core::data::default_occupations()
        .into_iter()
        .take(10)
        .collect();
    std::fs::write(
        dir.join("occupations-small.txt"),
        occupations.join("\n") + "\n",
    )
    .expect("write occupations");
    let templates = debias_core::data::default_templates().expect("embedded templates");
    let lines: Vec<String> = templates[..4]
        .iter()
        .map(|t| serde_json::to_string(t).expect("serialize template"))
        .collect();
    std::fs::write(dir.join("templates-small.jsonl"), lines.join("\n") + "\n")
        .expect("write templates");

    eprintln!(
        "wrote {} triple pairs, {} benchmark examples, and trimmed probe inputs to {}",
        triples.len(),
        benchmark.len(),
        dir.display()
    );
}
