//! Per-operator latency shares of each block before and after the rewrites.
//!
//! `cargo run --example latency_breakdown [-- path/to/calibration.json]`

use std::path::PathBuf;

use xamba::models::{default_block, Mode, Variant};
use xamba::npusim::{cost_graph, speedup, CostConfig};
use xamba::passes::{apply_passes, default_tables};

fn main() -> xamba::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from);
    let cfg = CostConfig::load(path.as_deref())?;
    let tables = default_tables();
    let runs: [(Variant, Mode, &[&str]); 6] = [
        (Variant::Mamba2, Mode::Prefill, &["cumba"]),
        (Variant::Mamba2, Mode::Prefill, &["reduba"]),
        (Variant::Mamba2, Mode::Prefill, &["cumba", "reduba"]),
        (Variant::Mamba, Mode::Prefill, &["actiba"]),
        (Variant::Mamba, Mode::Decode, &["actiba"]),
        (Variant::Mamba2, Mode::Decode, &["actiba"]),
    ];
    for (variant, mode, passes) in runs {
        let base = default_block(variant, mode, 42)?;
        let opt = apply_passes(&base, passes, &tables)?;
        let (rb, ro) = (cost_graph(&base, &cfg)?, cost_graph(&opt, &cfg)?);
        println!(
            "{} + {}: {:.2} us -> {:.2} us, speedup {:.2}x",
            base.name,
            passes.join("+"),
            rb.total_us,
            ro.total_us,
            speedup(&rb, &ro)?
        );
        for (label, report) in [("baseline", &rb), ("rewritten", &ro)] {
            let top: Vec<String> = report
                .ranked()
                .into_iter()
                .take(6)
                .map(|(k, s)| format!("{k} {:.1}%", 100.0 * s))
                .collect();
            println!("  {label:<9} {}", top.join(", "));
        }
    }
    Ok(())
}
