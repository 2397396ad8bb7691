//! Walk through the blank-infilling data pipeline on a tiny window:
//! patching, span sampling, corruption, permutation, special tokens,
//! two-level positions and the attention mask.
//!
//!     cargo run --example infilling_dataflow

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use timegrain::attention::GlmMask;
use timegrain::embedding::{
    build_infilling_instance, sample_spans, window_and_patch, Target, Token,
};

fn main() -> timegrain::Result<()> {
    // a toy series long enough for one window of 8 patches x 4 points
    let series: Vec<f64> = (0..32).map(|t| (t as f64 * 0.4).sin()).collect();
    let windows = window_and_patch(&series, 32, 32, 4, 0)?;
    let (pm, stats) = windows[0].standardized()?;
    println!(
        "window of {} patches x {} points, mean {:.3}, stdev {:.3}",
        pm.n_patches(),
        pm.patch_len(),
        stats.mean,
        stats.stdev
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spans = sample_spans(pm.n_patches(), 0.375, (1, 3), false, &mut rng)?;
    println!("sampled spans {:?}, presentation order {:?}", spans.spans(), spans.order());

    let inst = build_infilling_instance(&pm, &spans)?;
    let render = |t: &Token<f64>| match t {
        Token::Patch(_) => "patch",
        Token::Mask => "[M]  ",
        Token::Start => "[S]  ",
    };
    println!("\n idx  token  pos1 pos2 target");
    for i in 0..inst.n_tokens() {
        let target = if i >= inst.part_a_len {
            match &inst.targets[i - inst.part_a_len] {
                Target::Patch(_) => "next patch",
                Target::End => "[E]",
            }
        } else {
            "-"
        };
        let part = if i < inst.part_a_len { "A" } else { "B" };
        println!(
            " {i:3}{part}  {}  {:3}  {:3}  {target}",
            render(&inst.tokens[i]),
            inst.pos1[i],
            inst.pos2[i]
        );
    }

    let mask = GlmMask::for_instance(&inst);
    println!("\nattention mask (rows attend to columns):");
    for i in 0..mask.n_tokens() {
        let row: String = (0..mask.n_tokens())
            .map(|j| if mask.allows(i, j) { '#' } else { '.' })
            .collect();
        println!(" {row}");
    }

    // reassembling Part B targets through the inverse permutation
    // reproduces the original patches exactly
    let recon = inst.reconstruct()?;
    assert_eq!(recon.data(), pm.patches.data());
    println!("\nreconstruction through the inverse permutation: exact");
    Ok(())
}
