//! Rebuild a phantom back-lit stack against its block-face reference and
//! compare the recovered transforms with ground truth.

use histostack::image::Raster;
use histostack::phantom::{generate, mean_corner_displacement, mean_landmark_error, PhantomSpec};
use histostack::recon::{reconstruct_backlit, ReconConfig};
use histostack::transform::TransformChain;

fn main() -> histostack::Result<()> {
    let ph = generate(&PhantomSpec {
        dims: [64, 64, 32],
        ..Default::default()
    })?;
    let grid = *ph.blockface.sections[0].grid();
    let truth = &ph.truth.backlit_chains;
    let identity = vec![TransformChain::identity(2); truth.len()];
    println!("raw stack: corner error {:.2} px", mean_corner_displacement(&identity, truth, &grid));

    let state = reconstruct_backlit(&ph.backlit, &ph.blockface, &ReconConfig::default())?;
    for (i, chains) in state.history.iter().enumerate() {
        println!(
            "iteration {i}: corner error {:.3} px, landmark error {:.3} px",
            mean_corner_displacement(chains, truth, &grid),
            mean_landmark_error(chains, truth, &ph.truth.landmarks, &grid, ph.backlit.slice_thickness)
        );
    }
    println!("fallbacks: {}", state.fallbacks().len());
    Ok(())
}
