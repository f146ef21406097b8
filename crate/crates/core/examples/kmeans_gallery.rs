//! Compress the training gallery with k-means and compare detection quality
//! and gallery size against the full kNN gallery.

use msc_occ::adapter::AdapterParams;
use msc_occ::scoring::{evaluate, kmeans_compress, Gallery};
use msc_occ::synthetic::CapBenchmark;

fn main() -> msc_occ::error::Result<()> {
    // Wide cap spanning every tangent direction, so the AUC is not saturated.
    let bench = CapBenchmark { cap_deg: 60.0, intrinsic_dim: None, ..Default::default() };
    let (train_fs, test_fs) = bench.generate()?;
    let params = AdapterParams::zeros(bench.dim, bench.dim);

    let full = Gallery::from_train(&train_fs.to_matrix(), &params)?;
    let r = evaluate(&test_fs, &params, &full, 2)?;
    println!("full     size {:>4}  AUC {:.4}", full.len(), r.roc_auc.unwrap());

    for k in [1, 5, 10, 100] {
        let g = kmeans_compress(full.exemplars(), k, 13, 100)?;
        let nn = 2.min(g.len());
        let r = evaluate(&test_fs, &params, &g, nn)?;
        println!("k-means  size {:>4}  AUC {:.4}", g.len(), r.roc_auc.unwrap());
    }
    Ok(())
}
