#![no_main]

use libfuzzer_sys::fuzz_target;

use capstream::config::CsvSchemaKind;
use capstream::ingest::ingest_reader;

// Stream ingestion must reject malformed bytes with a row-addressed error,
// never a panic. Accepted rows must satisfy the schema invariants.
fuzz_target!(|data: &[u8]| {
    for schema in [CsvSchemaKind::Precomputed, CsvSchemaKind::Features] {
        if let Ok(rows) = ingest_reader(data, schema, "fuzz") {
            let mut last_t = i64::MIN;
            for row in &rows {
                assert!(row.t > last_t, "time index must strictly increase");
                last_t = row.t;
                match schema {
                    CsvSchemaKind::Precomputed => {
                        assert!(row.mu_hat.is_some() && row.v.is_some());
                        assert!(row.x.is_none());
                    }
                    CsvSchemaKind::Features => {
                        assert!(row.x.is_some());
                        assert!(row.mu_hat.is_none() && row.v.is_none());
                    }
                }
            }
        }
    }
});
