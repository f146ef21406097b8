//! Train an adapter on synthetic features and score a held-out set.
//!
//! cargo run --example quickstart

use msc_occ::scoring::{evaluate, Gallery};
use msc_occ::synthetic::CapBenchmark;
use msc_occ::trainer::{train, TrainConfig};

fn main() -> msc_occ::error::Result<()> {
    let bench = CapBenchmark { n_train: 256, n_test_normal: 128, n_test_anomalous: 128, ..Default::default() };
    let (train_fs, test_fs) = bench.generate()?;

    let cfg = TrainConfig { epochs: 10, ..TrainConfig::default() };
    let (params, history) = train(&train_fs, Some(&test_fs), &cfg)?;

    let gallery = Gallery::from_train(&train_fs.to_matrix(), &params)?;
    let report = evaluate(&test_fs, &params, &gallery, 2)?;

    println!("objective      {}", cfg.loss.objective);
    println!("initial AUC    {:.4}", history.initial.val_auc.unwrap_or(f64::NAN));
    println!("final AUC      {:.4}", report.roc_auc.unwrap_or(f64::NAN));
    println!("final loss     {:.4}", history.last().loss.unwrap_or(f64::NAN));
    Ok(())
}
