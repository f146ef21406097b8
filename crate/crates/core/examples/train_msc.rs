//! Epoch-by-epoch training log with per-epoch snapshots, then a checkpoint
//! round trip through a temporary file.

use msc_occ::adapter::{load_checkpoint, save_checkpoint};
use msc_occ::data::AugmentationPolicy;
use msc_occ::losses::{LossConfig, Objective};
use msc_occ::synthetic::CapBenchmark;
use msc_occ::trainer::{train, TrainConfig};

fn main() -> msc_occ::error::Result<()> {
    let (train_fs, test_fs) = CapBenchmark::default().generate()?;
    let cfg = TrainConfig {
        loss: LossConfig::new(Objective::Msc),
        epochs: 15,
        learning_rate: 2e-2,
        snapshot_every: 5,
        augment: AugmentationPolicy::jitter(0.05, 7),
        ..TrainConfig::default()
    };
    let (params, history) = train(&train_fs, Some(&test_fs), &cfg)?;

    println!("epoch      loss   unif(o)  unif(ms)  aug(o)  aug(ms)     auc");
    for r in history.records() {
        println!(
            "{:>5} {:>9} {:>9.4} {:>9.4} {:>7.4} {:>8.4} {:>7.4}",
            r.epoch,
            r.loss.map_or("-".into(), |l| format!("{l:.4}")),
            r.uniformity_origin,
            r.uniformity_shifted,
            r.aug_similarity_origin,
            r.aug_similarity_shifted,
            r.val_auc.unwrap_or(f64::NAN),
        );
    }
    println!("snapshots at epochs {:?}", history.snapshots.iter().map(|s| s.epoch).collect::<Vec<_>>());

    let path = std::env::temp_dir().join(format!("msc-example-{}.msca", std::process::id()));
    save_checkpoint(&params, &path)?;
    let back = load_checkpoint(&path)?;
    std::fs::remove_file(&path)?;
    println!("checkpoint round trip exact: {}", back == params);
    Ok(())
}
