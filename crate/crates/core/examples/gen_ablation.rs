//! Writes the ablation record sets under `fixtures/ablation/`.
//!
//! ```text
//! cargo run -p defect-sage-core --example gen_ablation
//! ```
//!
//! Each configuration is defined by a confusion matrix (rows: reference
//! class, columns: predicted class) chosen so its aggregates land on the
//! published table. Records are expanded from the matrix and shuffled with a
//! fixed seed.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const CLASSES: [&str; 4] = ["Lack of fusion porosity", "Gas porosity", "Keyhole porosity", "Balling"];

const CONFIGS: [(&str, &str, [[u32; 4]; 4]); 4] = [
    ("A", "Base vision-language model", [[54, 5, 11, 0], [14, 60, 26, 0], [1, 15, 4, 0], [0, 0, 0, 10]]),
    ("B", "Base model + unconstrained dynamic retrieval", [[20, 0, 26, 24], [16, 0, 5, 79], [4, 0, 4, 12], [8, 0, 2, 0]]),
    ("C", "Base model + ontology-guided knowledge base", [[42, 22, 5, 1], [18, 82, 0, 0], [3, 6, 11, 0], [0, 0, 1, 9]]),
    ("D", "Knowledge base + targeted retrieval (integrated)", [[43, 25, 0, 2], [8, 92, 0, 0], [3, 0, 17, 0], [1, 0, 1, 8]]),
];

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/ablation");
    fs::create_dir_all(&dir).unwrap();
    let mut entries = Vec::new();
    for (seed, (id, description, matrix)) in CONFIGS.iter().enumerate() {
        let mut pairs = Vec::new();
        for (r, row) in matrix.iter().enumerate() {
            for (p, &count) in row.iter().enumerate() {
                pairs.extend(std::iter::repeat_n((r, p), count as usize));
            }
        }
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed as u64 + 1));
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(["item_id", "reference", "predicted"]).unwrap();
        for (i, (r, p)) in pairs.iter().enumerate() {
            writer.write_record([format!("img_{:03}", i + 1).as_str(), CLASSES[*r], CLASSES[*p]]).unwrap();
        }
        let file = format!("config_{}.csv", id.to_lowercase());
        fs::write(dir.join(&file), writer.into_inner().unwrap()).unwrap();
        entries.push(json!({ "config_id": id, "description": description, "records_path": file }));
    }
    let manifest = json!({ "classes": CLASSES, "configurations": entries });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap() + "\n").unwrap();
    println!("wrote {}", dir.display());
}
