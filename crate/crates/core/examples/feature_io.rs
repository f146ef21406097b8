//! Write a labeled feature set as binary and CSV, read both back and check
//! they agree. Also shows format detection from the file extension.
//!
//! With a directory argument the synthetic benchmark is written there as
//! `train.mscf` and `test.mscf` for use with the `msc` binary:
//!
//! cargo run --example feature_io -- data/

use msc_occ::data::{load_feature_set, save_feature_set, Format};
use msc_occ::synthetic::CapBenchmark;

fn main() -> msc_occ::error::Result<()> {
    if let Some(dir) = std::env::args_os().nth(1) {
        let dir = std::path::PathBuf::from(dir);
        std::fs::create_dir_all(&dir)?;
        let (train_fs, test_fs) = CapBenchmark::default().generate()?;
        save_feature_set(&train_fs, &dir.join("train.mscf"), Format::Binary)?;
        save_feature_set(&test_fs, &dir.join("test.mscf"), Format::Binary)?;
        println!("wrote {} train and {} test rows to {}", train_fs.len(), test_fs.len(), dir.display());
        return Ok(());
    }

    let (_, test_fs) = CapBenchmark { n_test_normal: 4, n_test_anomalous: 4, ..Default::default() }.generate()?;
    let dir = std::env::temp_dir().join(format!("msc-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    for name in ["test.mscf", "test.csv"] {
        let path = dir.join(name);
        let format = Format::from_path(&path);
        save_feature_set(&test_fs, &path, format)?;
        let back = load_feature_set(&path, format)?;
        let bytes = std::fs::metadata(&path)?.len();
        println!("{name:<10} {format:?}  {bytes:>6} bytes  rows {}  identical {}", back.len(), back == test_fs);
    }
    println!("{}", std::fs::read_to_string(dir.join("test.csv"))?.lines().next().unwrap_or(""));
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
