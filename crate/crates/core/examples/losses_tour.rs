//! Evaluate every objective on one batch, then rescale the embeddings to
//! show which losses ignore feature norms.

use msc_occ::geometry::{compute_center, Matrix};
use msc_occ::losses::{batch_loss, LossConfig, Objective};
use msc_occ::synthetic::CapBenchmark;

fn main() -> msc_occ::error::Result<()> {
    let (train_fs, _) = CapBenchmark { n_train: 64, ..Default::default() }.generate()?;
    let raw = train_fs.to_matrix();
    let center = compute_center(raw.iter_rows())?;

    // Rows 0..B are first views, rows B..2B their partners.
    let b = 8;
    let mut batch = Matrix::zeros(2 * b, raw.cols());
    for i in 0..b {
        batch.row_mut(i).copy_from_slice(raw.row(2 * i));
        batch.row_mut(i + b).copy_from_slice(raw.row(2 * i + 1));
    }
    let mut scaled = batch.clone();
    for (i, row) in scaled.as_mut_slice().chunks_mut(raw.cols()).enumerate() {
        let s = 0.5 + 0.25 * i as f64;
        row.iter_mut().for_each(|x| *x *= s);
    }

    println!("{:<12} {:>12} {:>12}", "objective", "loss", "rescaled");
    for obj in Objective::ALL {
        let cfg = LossConfig::new(obj);
        let a = batch_loss(&batch, &center, &cfg)?.value;
        let s = batch_loss(&scaled, &center, &cfg)?.value;
        println!("{:<12} {a:>12.6} {s:>12.6}", obj.name());
    }
    Ok(())
}
