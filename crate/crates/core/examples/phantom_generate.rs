//! Generate a small synthetic study and write it to disk.
//!
//! cargo run --example phantom_generate -- [out_dir]

use histostack::phantom::{generate, PhantomSpec};

fn main() -> histostack::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "phantom_out".into());
    let spec = PhantomSpec {
        seed: 7,
        dims: [64, 64, 32],
        ..Default::default()
    };
    let ph = generate(&spec)?;
    let files = ph.write(std::path::Path::new(&out))?;
    println!("{} sections per stack, gene {}", ph.backlit.len(), spec.ish.gene);
    println!("landmarks: {} points", ph.truth.landmarks.point_count());
    println!("annotators: {}", ph.truth.annotations.len());
    println!("block-face manifest: {}", files.blockface.display());
    println!("back-lit manifest:   {}", files.backlit.display());
    println!("stained manifest:    {}", files.ish.display());
    println!("mask manifest:       {}", files.masks.display());
    Ok(())
}
