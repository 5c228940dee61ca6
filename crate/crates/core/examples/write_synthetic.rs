use std::path::{Path, PathBuf};

fn main() {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("data/synthetic"), PathBuf::from);
    let kg = kgc_core::synth::synthetic_dataset(0);
    kgc_core::synth::write_dataset(&kg, &dir).expect("write dataset");
    kgc_core::pipeline::synthetic_config(Path::new(""), 0)
        .save(&dir.join("run.json"))
        .expect("write config");
    println!("wrote {} entities and {} triples to {}", kg.num_entities(), kg.triples().len(), dir.display());
}
