//! Clean a noisy section: downscale, median filter, speck removal.

use histostack::image::{preprocess_section, pyramid, Image2D, PreprocessConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> histostack::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = Image2D::from_fn(128, 96, [2.0, 2.0], |x, y| {
        let r = (x as f64 - 64.0).hypot(y as f64 - 48.0);
        let tissue = if r < 36.0 { 0.6 } else { 0.0 };
        // salt noise across the slide
        let speck = if rng.gen_bool(0.01) { 0.9 } else { 0.0 };
        f64::max(tissue, speck)
    })?;
    let count = |im: &Image2D| im.pixels().iter().filter(|v| **v > 0.0).count();

    let cfg = PreprocessConfig {
        downscale: 2,
        median_radius: 1,
        morph_radius: 2,
    };
    let clean = preprocess_section(&img, &cfg)?;
    println!("input   {}x{} @ {:?} µm, {} nonzero", img.width(), img.height(), img.spacing(), count(&img));
    println!("cleaned {}x{} @ {:?} µm, {} nonzero", clean.width(), clean.height(), clean.spacing(), count(&clean));

    for (k, level) in pyramid(&clean, 3)?.iter().enumerate() {
        println!("pyramid level {k}: {}x{}", level.width(), level.height());
    }
    Ok(())
}
