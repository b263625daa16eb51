//! Clean-to-shifted classification: source-only baseline against SEN.
//!
//! Usage: `cargo run --release --example domain_adaptation -- [epochs] [per_class] [seed]`
//!
//! Small synthetic sets train with batch 8 so each epoch takes several steps.

use std::time::Instant;

use sen::data::{build_dataset, DatasetSpec, DomainProfile};
use sen::train::{evaluate, train, Method, TrainConfig};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> sen::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let epochs = args.first().copied().unwrap_or(10) as usize;
    let per_class = args.get(1).copied().unwrap_or(40) as usize;
    let seed = args.get(2).copied().unwrap_or(0);

    let source = build_dataset(&DatasetSpec::classification(per_class, DomainProfile::CLEAN, 64, 100 + seed))?;
    let target = build_dataset(&DatasetSpec::classification(per_class, DomainProfile::SHIFTED, 64, 200 + seed))?;
    println!(
        "source train {} / target train {} / target test {}",
        source.train.len(),
        target.train.len(),
        target.test.len()
    );

    for method in [Method::SourceOnly, Method::Sen] {
        let mut cfg = TrainConfig::classification();
        cfg.epochs = epochs;
        cfg.seed = seed;
        cfg.batch_size = 8;
        cfg.method = method;
        let started = Instant::now();
        let report = train(&cfg, &source.train, &target.train.clouds, &target.test)?;
        let last = report.final_record().expect("at least one epoch");
        println!(
            "{:<12} target acc {:.3} (teacher {:.3}), source test acc {:.3}, {:.1}s",
            method.as_str(),
            last.student_metric,
            last.teacher_metric,
            evaluate(&report.student, &source.test, 64)?,
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
