//! Replays the checked-in fuzz corpus through the two parser entry points.
//! The full fuzzers live under `fuzz/`; this keeps the seeds exercised in
//! the ordinary test run.

use capstream::config::{CsvSchemaKind, RunConfig};
use capstream::ingest::ingest_reader;

fn corpus_dir(target: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target)
}

#[test]
fn config_corpus_parses_or_errors_cleanly() {
    let dir = corpus_dir("fuzz_config_parse");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        if let Ok(text) = std::str::from_utf8(&bytes) {
            if let Ok(raw) = RunConfig::from_toml_str(text) {
                let _ = raw.resolve();
            }
        }
        seen += 1;
    }
    assert!(seen >= 4, "corpus seeds missing");
}

#[test]
fn ingest_corpus_parses_or_errors_cleanly() {
    let dir = corpus_dir("fuzz_ingest_csv");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        for schema in [CsvSchemaKind::Precomputed, CsvSchemaKind::Features] {
            let _ = ingest_reader(bytes.as_slice(), schema, "corpus");
        }
        seen += 1;
    }
    assert!(seen >= 4, "corpus seeds missing");
}
