//! Column sums as a ones-vector product; one mask per reduced length is shared
//! by every ReduceSum in the graph.

use std::collections::BTreeMap;

use xamba::graph::{census, OpKind};
use xamba::models::{default_block, Mode, Variant};
use xamba::passes::{apply_reduba, reduba_mask};
use xamba::tensor::{cumsum_ref, reducesum_ref, vecmat};
use xamba::Tensor;

fn main() -> xamba::Result<()> {
    let x = Tensor::from_fn(5, 4, |i, j| (i * 4 + j) as f32 - 7.5)?;
    let sum = reducesum_ref(&x)?;
    println!("ReduceSum(X)      {:?}", sum.data());
    println!("ones @ X          {:?}", vecmat(&reduba_mask(5)?.tensor, &x)?.data());
    println!("last row of cumsum {:?}", cumsum_ref(&x)?.row(4));

    let g = default_block(Variant::Mamba2, Mode::Prefill, 42)?;
    let r = apply_reduba(&g)?;
    let mut masks: BTreeMap<usize, usize> = BTreeMap::new();
    for n in &r.nodes {
        if let OpKind::Const { value } = &n.kind {
            if n.attrs.get("mask").and_then(|v| v.as_str()) == Some("reduba") {
                let users = r.consumers(n.id).len();
                *masks.entry(value.len()).or_default() += users;
            }
        }
    }
    println!(
        "Mamba-2: {} ReduceSum rewritten into {} VecMat",
        census(&g).get("ReduceSum").copied().unwrap_or(0),
        census(&r).get("VecMat").copied().unwrap_or(0)
    );
    for (m, users) in masks {
        println!("  ones[1,{m}] shared by {users} VecMat");
    }
    Ok(())
}
