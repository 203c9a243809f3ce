//! Demons registration of a smoothly warped section back onto the original.

use histostack::image::Raster;
use histostack::phantom::{generate, PhantomSpec};
use histostack::registration::{register_deformable, DeformableRegParams};
use histostack::transform::{jacobian_min_det, warp_image, DisplacementField, TransformChain};

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

fn main() -> histostack::Result<()> {
    let ph = generate(&PhantomSpec {
        dims: [64, 64, 32],
        ..Default::default()
    })?;
    let fixed = ph.blockface.sections[16].clone();
    let grid = *fixed.grid();
    let e = grid.extent();
    let warp = DisplacementField::from_fn(grid, |p| {
        let k = std::f64::consts::TAU / (e[0] / 2.0);
        [1.5 * grid.spacing[0] * (k * p[1]).sin(), 1.0 * grid.spacing[1] * (k * p[0]).cos(), 0.0]
    });
    let moving = warp_image(&fixed, &TransformChain::single(warp), &grid)?;

    let fit = register_deformable(&moving, &fixed, &DeformableRegParams::default(), &TransformChain::identity(2))?;
    let chain = fit.chain(&TransformChain::identity(2))?;
    let aligned = warp_image(&moving, &chain, &grid)?;

    println!("energy {:.5} -> {:.5} after {} updates", fit.energy_before, fit.energy_after, fit.iterations);
    println!("MSE to fixed: {:.5} -> {:.5}", mse(moving.pixels(), fixed.pixels()), mse(aligned.pixels(), fixed.pixels()));
    println!("min Jacobian determinant {:.3}", jacobian_min_det(&fit.field));
    Ok(())
}
