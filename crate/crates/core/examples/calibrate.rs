//! Fits the cost model to the measured speedup ratios and prints the fit.
//!
//! `cargo run --example calibrate` reports the committed calibration;
//! `cargo run --example calibrate -- --fit [--write]` runs the search starting
//! from it and optionally overwrites `calibration/lnl.json`.

use std::path::Path;

use xamba::npusim::{calibrate_multistart, evaluate_targets, CostConfig, Evaluation, Workload};

fn show(e: &Evaluation) {
    for a in &e.ratios {
        println!(
            "  {:<24} target {:>4.2}  model {:>6.3}  err {:>5.1}%",
            a.name,
            a.target,
            a.value,
            100.0 * a.rel_err
        );
    }
    println!("  mamba2 CumSum share      {:.3}", e.cumsum_share);
    println!("  dominant CumSum fraction {:.5}", e.dominant_cumsum);
    println!("  mamba top-2 shares       {} / {}", e.mamba_top2[0], e.mamba_top2[1]);
    println!("  worst relative error     {:.1}%", 100.0 * e.max_rel_err());
}

fn main() -> xamba::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let workload = Workload::new(42)?;
    let start = CostConfig::load(None)?;
    println!("committed calibration {}", start.hash());
    show(&evaluate_targets(&start, &workload)?);
    if !args.iter().any(|a| a == "--fit") {
        return Ok(());
    }
    let out = calibrate_multistart(&start, &workload)?;
    println!(
        "\nfitted calibration {} ({} evaluations)",
        out.config.hash(),
        out.evaluations
    );
    show(&out.evaluation);
    println!("{}", out.config.to_json());
    if args.iter().any(|a| a == "--write") {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../calibration/lnl.json");
        std::fs::write(&path, out.config.to_json() + "\n")?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
