use std::path::Path;

use kgc_core::graph::load_graph;
use kgc_core::synth::{synthetic_dataset, write_dataset};

fn data_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/synthetic"))
}

#[test]
fn bundled_files_match_the_generator() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(&synthetic_dataset(0), tmp.path()).unwrap();
    for f in ["triples.tsv", "entities.tsv"] {
        let bundled = std::fs::read_to_string(data_dir().join(f)).unwrap();
        let fresh = std::fs::read_to_string(tmp.path().join(f)).unwrap();
        assert_eq!(bundled, fresh, "{f} differs from synthetic_dataset(0)");
    }
}

#[test]
fn bundled_files_load() {
    let kg = load_graph(&data_dir().join("triples.tsv"), &data_dir().join("entities.tsv")).unwrap();
    assert_eq!(kg.num_entities(), 60);
    assert_eq!(kg.triples().len(), 200);
    assert_eq!(kg.duplicates_dropped(), 0);
}

#[test]
fn bundled_config_resolves_next_to_the_data() {
    let c = kgc_core::pipeline::RunConfig::load(&data_dir().join("run.json")).unwrap();
    assert_eq!(c, kgc_core::pipeline::synthetic_config(data_dir(), 0));
}
