//! Compresses the CumBA mask with zero value compression and writes it to a
//! file.

use xamba::passes::cumba_mask;
use xamba::zvc::{compress, decompress, density, from_bytes, header_bytes, to_bytes, ValueWidth};

fn main() -> xamba::Result<()> {
    for m in [16, 64, 256] {
        let mask = cumba_mask(m)?;
        let z = compress(&mask.tensor, ValueWidth::W16);
        println!(
            "m={m:<4} density {:.4}  dense {:>7} B  compressed {:>6} B  ratio {:.3}",
            density(&z),
            z.dense_bytes(),
            z.compressed_bytes(),
            z.compressed_bytes() as f64 / z.dense_bytes() as f64
        );
    }
    let mask = cumba_mask(256)?;
    let z = compress(&mask.tensor, ValueWidth::W32);
    let bytes = to_bytes(&z);
    let path = std::env::temp_dir().join("cumba_mask_256.zvc");
    std::fs::write(&path, &bytes)?;
    let back = decompress(&from_bytes(&std::fs::read(&path)?)?)?;
    println!(
        "wrote {} ({} B = {} header + {} payload), roundtrip exact: {}",
        path.display(),
        bytes.len(),
        header_bytes(2),
        z.compressed_bytes(),
        back == *mask.tensor
    );
    Ok(())
}
