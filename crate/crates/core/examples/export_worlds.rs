//! Write the bundled verification worlds as JSON files.
//!
//! `cargo run -p textcause --example export_worlds [DIR]` (default
//! `crates/core/worlds`).

use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("worlds"),
        PathBuf::from,
    );
    std::fs::create_dir_all(&dir)?;
    for spec in textcause::bundled_worlds() {
        let path = dir.join(format!("{}.json", spec.name));
        std::fs::write(&path, spec.to_json()? + "\n")?;
        println!("{}", path.display());
    }
    Ok(())
}
