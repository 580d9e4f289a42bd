//! Prefix sums as a lower-triangular matrix product, checked on a small
//! tensor and on the Mamba-2 block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xamba::graph::census;
use xamba::models::{default_block, Mode, Variant};
use xamba::passes::{apply_cumba, apply_reduba, check_equivalence, cumba_mask, EquivalenceConfig};
use xamba::tensor::{cumsum_ref, matmul};
use xamba::Tensor;

fn main() -> xamba::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Tensor::new(vec![6, 3], (0..18).map(|_| rng.gen_range(-4..=4) as f32).collect())?;
    let mask = cumba_mask(6)?;
    let via_mask = matmul(&mask.tensor, &x)?;
    println!("mask (6x6):");
    for i in 0..6 {
        println!("  {:?}", mask.tensor.row(i));
    }
    println!("cumsum(X) == M @ X: {}", via_mask == cumsum_ref(&x)?);

    let g = default_block(Variant::Mamba2, Mode::Prefill, 42)?;
    let rewritten = apply_reduba(&apply_cumba(&g)?)?;
    let before = census(&g);
    let after = census(&rewritten);
    for op in ["CumSum", "ReduceSum", "MatMul", "VecMat"] {
        println!(
            "{op:<10} {:>3} -> {:>3}",
            before.get(op).copied().unwrap_or(0),
            after.get(op).copied().unwrap_or(0)
        );
    }
    let report = check_equivalence(&g, &rewritten, &EquivalenceConfig::default())?;
    println!(
        "block equivalence over {} inputs: passed={} max_abs_diff={:e}",
        report.samples, report.passed, report.max_abs_diff
    );
    Ok(())
}
