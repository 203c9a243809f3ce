//! Register stained sections into a back-lit reconstruction and carry their
//! expression masks along.

use histostack::image::SegmentationMask;
use histostack::metrics::dice;
use histostack::phantom::{generate, PhantomSpec};
use histostack::recon::{map_masks, reconstruct_backlit, reconstruct_ish, IshConfig, ReconConfig};

fn main() -> histostack::Result<()> {
    let ph = generate(&PhantomSpec {
        dims: [48, 48, 32],
        ..Default::default()
    })?;
    let backlit = reconstruct_backlit(&ph.backlit, &ph.blockface, &ReconConfig::default())?;
    let ish = reconstruct_ish(&ph.ish, &ph.backlit, &backlit, &IshConfig::default())?;
    let mapped = map_masks(&ph.truth.masks, &ish)?;

    // truth masks in reconstruction space come from the expression volume
    let mut scores = Vec::new();
    for (z, m) in mapped.iter().enumerate() {
        let truth = SegmentationMask::threshold(&ph.truth.expression.slice(z), 0.5);
        if truth.count() > 20 {
            scores.push(dice(m, &truth)?);
        }
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    println!("{} stained sections, {} iterations", ish.chains.len(), ish.iterations());
    println!("mask Dice against truth: mean {mean:.3} over {} slices", scores.len());
    Ok(())
}
