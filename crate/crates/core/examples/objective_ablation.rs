//! Same data, same seed, every objective.

use msc_occ::data::AugmentationPolicy;
use msc_occ::losses::{LossConfig, Objective};
use msc_occ::synthetic::CapBenchmark;
use msc_occ::trainer::{grad_check, train, TrainConfig};

fn main() -> msc_occ::error::Result<()> {
    let bench = CapBenchmark { n_train: 256, n_test_normal: 128, n_test_anomalous: 128, ..Default::default() };
    let (train_fs, test_fs) = bench.generate()?;

    println!("{:<12} {:>9} {:>8} {:>10} {:>10}", "objective", "gradchk", "AUC", "unif(ms)", "collapsed");
    for obj in Objective::ALL {
        let loss = LossConfig::new(obj);
        let gc = grad_check(&loss, 3, 1e-4, 0)?;
        let cfg = TrainConfig {
            loss,
            epochs: 10,
            augment: AugmentationPolicy::jitter(0.05, 1),
            ..TrainConfig::default()
        };
        let (_, h) = train(&train_fs, Some(&test_fs), &cfg)?;
        let last = h.last();
        println!(
            "{:<12} {:>9.1e} {:>8.4} {:>10.4} {:>10}",
            obj.name(),
            gc.max_rel_err,
            last.val_auc.unwrap_or(f64::NAN),
            last.uniformity_shifted,
            h.collapsed()
        );
    }
    Ok(())
}
