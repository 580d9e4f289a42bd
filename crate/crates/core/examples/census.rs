//! Operator counts of the prefill blocks before and after every rewrite.

use xamba::graph::census;
use xamba::models::{default_block, Mode, Variant};
use xamba::passes::{apply_passes, default_tables};

fn main() -> xamba::Result<()> {
    let tables = default_tables();
    for variant in [Variant::Mamba, Variant::Mamba2] {
        let g = default_block(variant, Mode::Prefill, 42)?;
        let r = apply_passes(&g, &["cumba", "reduba", "actiba"], &tables)?;
        let (before, after) = (census(&g), census(&r));
        println!("{variant:?} ({} -> {} nodes)", g.len(), r.len());
        let mut ops: Vec<&String> = before.keys().chain(after.keys()).collect();
        ops.sort();
        ops.dedup();
        for op in ops {
            let b = before.get(op).copied().unwrap_or(0);
            let a = after.get(op).copied().unwrap_or(0);
            println!("  {op:<14} {b:>4} {a:>4}");
        }
    }
    Ok(())
}
