//! Fits SiLU and Softplus lookup tables, shows how error falls with the
//! segment count, and round-trips a table through the C-LUT format.

use xamba::plu::{deserialize, eval, fit_uniform, max_error, serialize, PluFunc};

fn main() -> xamba::Result<()> {
    for func in [PluFunc::Silu, PluFunc::Softplus] {
        println!("{}:", func.name());
        for s in [2, 8, 16, 32, 64, 128] {
            let t = fit_uniform(func, 1.0, -8.0, 8.0, s)?;
            let (e, at) = max_error(&t, 200_001);
            println!("  S={s:<4} max error {e:.3e} at x={at:+.3}");
        }
    }
    let t = fit_uniform(PluFunc::Silu, 1.0, -8.0, 8.0, 64)?;
    let bytes = serialize(&t);
    let back = deserialize(&bytes)?;
    println!("C-LUT file: {} bytes, roundtrip exact: {}", bytes.len(), back == t);
    for x in [-12.0f32, -1.0, 0.3, 5.0, 20.0] {
        println!("  silu({x:+}) = {:+.5}  table {:+.5}", t.exact(x), eval(&t, x)?);
    }
    Ok(())
}
