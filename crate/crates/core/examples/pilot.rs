//! Five-seed pilot of the planted-pair experiment on the desk configuration.
//!
//! ```text
//! cargo run --release -p debias-core --example pilot -- [seeds] [fraction]
//! ```
//!
//! Prints per-seed metrics for standard, feature-split and CAM training and
//! the median exclusive-mAP gap of feature-split over standard. The
//! acceptance threshold for that gap is half the median printed here for
//! seeds 101..=105 at fraction 0.05.

use debias_core::data::GenConfig;
use debias_core::experiment::{datasets, median, run_method};
use debias_core::train::{Method, TrainConfig};

fn main() -> debias_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: Vec<u64> = args
        .next()
        .map_or_else(|| vec![101, 102, 103, 104, 105], |s| s.split(',').map(|x| x.parse().expect("seed list")).collect());
    let fraction: f64 = args.next().map_or(0.05, |s| s.parse().expect("fraction"));
    let base = TrainConfig::default();
    let mut gaps = Vec::new();
    for seed in seeds {
        let data = datasets(&GenConfig::desk_default(seed).with_exclusive_fraction(fraction))?;
        let mut ex = Vec::new();
        for method in [Method::Standard, Method::OursFeatureSplit, Method::OursCam] {
            let run = run_method(&data, &base, method, seed)?;
            let r = &run.report;
            println!(
                "seed {seed} {method:<20} exclusive {:.4} cooccur {:.4} cosine {:.4} overlap {:.5}",
                r.exclusive_map.unwrap_or(f64::NAN),
                r.cooccur_map.unwrap_or(f64::NAN),
                r.mean_cosine.unwrap_or(f64::NAN),
                r.mean_cam_overlap_cooccur.unwrap_or(f64::NAN),
            );
            ex.push(r.exclusive_map.unwrap_or(f64::NAN));
        }
        gaps.push(ex[1] - ex[0]);
    }
    println!("feature-split gaps {gaps:?}");
    println!("median gap {:.5}", median(&gaps).unwrap_or(f64::NAN));
    Ok(())
}
