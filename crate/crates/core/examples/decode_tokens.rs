//! Token-by-token Mamba decoding with a state cache, and the modelled
//! tokens/s before and after ActiBA.

use xamba::models::{build_block, MambaConfig, Mode, SsmParams, StateCache};
use xamba::npusim::{cost_graph, tokens_per_second, CostConfig};
use xamba::passes::{apply_actiba, default_tables};
use xamba::Tensor;

fn main() -> xamba::Result<()> {
    let cfg = MambaConfig::mamba();
    let params = SsmParams::random(&cfg, 42)?;
    let decode = build_block(&cfg, &params, Mode::Decode)?;
    let prefill = build_block(&cfg, &params, Mode::Prefill)?;

    let tokens = Tensor::from_fn(cfg.seq_len, cfg.d_model, |t, j| ((t * 7 + j) as f32 * 0.37).sin())?;
    let mut cache = StateCache::zeros(&cfg)?;
    let mut worst = 0.0f32;
    let full = xamba::graph::execute(
        &prefill,
        std::slice::from_ref(&tokens),
        xamba::graph::ExecOptions::for_graph(&prefill),
    )?;
    for t in 0..cfg.seq_len {
        let y = cache.step(&decode, &tokens.slice(0, t, 1)?)?;
        let want = full[0].slice(0, t, 1)?;
        for (a, b) in y.data().iter().zip(want.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    println!("{} decode steps match prefill to {worst:e}", cfg.seq_len);

    let cost = CostConfig::load(None)?;
    let base = tokens_per_second(&cost_graph(&decode, &cost)?, 1)?;
    let fast = tokens_per_second(&cost_graph(&apply_actiba(&decode, &default_tables())?, &cost)?, 1)?;
    println!(
        "modelled tokens/s: baseline {base:.0}, ActiBA {fast:.0} ({:.2}x)",
        fast / base
    );
    Ok(())
}
