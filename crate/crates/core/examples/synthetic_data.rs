//! Procedural clean and shifted datasets, written as PCDS files and a CSV
//! dump.
//!
//! Usage: `cargo run --release --example synthetic_data -- [out_dir]`

use std::path::PathBuf;

use sen::data::{build_dataset, read_dataset, DatasetSpec, DomainProfile, ShapeFamily};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> sen::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/synthetic_data".into()));
    for (name, profile, seed) in [("clean", DomainProfile::CLEAN, 1), ("shifted", DomainProfile::SHIFTED, 2)] {
        let splits = build_dataset(&DatasetSpec::classification(20, profile, 64, seed))?;
        let dir = out.join(name);
        std::fs::create_dir_all(&dir)?;
        splits.write(&dir)?;
        splits.test.export_csv(std::fs::File::create(dir.join("test.csv"))?)?;
        let back = read_dataset(&dir.join("train.pcds"))?;
        assert_eq!(back, splits.train);
        println!(
            "{name:<8} {profile}: {}/{}/{} clouds in {}",
            splits.train.len(),
            splits.val.len(),
            splits.test.len(),
            dir.display()
        );
    }
    let families: Vec<&str> = ShapeFamily::ALL.iter().map(|f| f.name()).collect();
    println!("classes: {}", families.join(", "));

    let seg = build_dataset(&DatasetSpec::segmentation(10, DomainProfile::SHIFTED, 64, 3))?;
    println!("segmentation: {} training clouds with {} part labels", seg.train.len(), seg.train.num_classes);
    Ok(())
}
