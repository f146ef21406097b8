//! Uniformity, angle histograms and collapse detection.
//!
//! Trains the plain center loss with a large step so it collapses, then
//! prints what the monitor sees.

use msc_occ::data::AugmentationPolicy;
use msc_occ::diagnostics::{angular_histogram, collapse_monitor, confidence_stats, uniformity, Frame};
use msc_occ::geometry::compute_center;
use msc_occ::losses::{LossConfig, Objective};
use msc_occ::synthetic::CapBenchmark;
use msc_occ::trainer::{train, TrainConfig};

fn main() -> msc_occ::error::Result<()> {
    let (train_fs, test_fs) = CapBenchmark::default().generate()?;
    let raw = test_fs.to_matrix();
    let labels = test_fs.labels().expect("labeled");
    let c = compute_center(train_fs.to_matrix().iter_rows())?;

    for frame in [Frame::Origin, Frame::MeanShifted] {
        let u = uniformity(&raw, frame, &c, 10_000, 0)?;
        let h = angular_histogram(&raw, &c, frame, labels, 12)?;
        println!("{:<13} uniformity {u:.4}", frame.name());
        println!("  normal    {:?}", h.normal);
        println!("  anomalous {:?}", h.anomalous);
    }
    let conf = confidence_stats(&raw, labels, 8)?;
    println!("norm bins   {:?}", conf.bin_edges.iter().map(|e| format!("{e:.2}")).collect::<Vec<_>>());

    let cfg = TrainConfig {
        loss: LossConfig::new(Objective::Center),
        epochs: 20,
        batch_size: 32,
        learning_rate: 0.5,
        seed: 11,
        augment: AugmentationPolicy::jitter(0.05, 12),
        ..TrainConfig::default()
    };
    let (_, history) = train(&train_fs, Some(&test_fs), &cfg)?;
    let report = collapse_monitor(&history, None, 0.1);
    print!("{}", report.to_csv());
    match report.collapse_epoch {
        Some(e) => println!("collapsed at epoch {e} ({:?})", report.reason.unwrap()),
        None => println!("no collapse"),
    }
    Ok(())
}
