//! Recover a known rotation + translation between two sections with NMI.

use histostack::image::Raster;
use histostack::metrics::nmi;
use histostack::phantom::{generate, PhantomSpec};
use histostack::registration::{center_of_mass_init, register_affine, AffineRegParams};
use histostack::transform::{warp_image, Affine, TransformChain};

fn main() -> histostack::Result<()> {
    let ph = generate(&PhantomSpec {
        dims: [64, 64, 32],
        ..Default::default()
    })?;
    let fixed = ph.blockface.sections[16].clone();
    let grid = *fixed.grid();
    let (c, sp) = (grid.center(), grid.spacing);
    let th = 6f64.to_radians();
    // 4 px right, 3 px up
    let truth = Affine::new(2, &[th.cos(), -th.sin(), th.sin(), th.cos()], &[4.0 * sp[0], -3.0 * sp[1]], &[c[0], c[1]])?;
    let moving = warp_image(&fixed, &TransformChain::single(truth), fixed.grid())?;

    let init = center_of_mass_init(&moving, &fixed)?;
    let fit = register_affine(&moving, &fixed, &AffineRegParams::default(), &init)?;
    let aligned = warp_image(&moving, &TransformChain::single(fit.transform), &grid)?;

    println!("objective (-NMI): {:.4} -> {:.4}", fit.initial_objective, fit.objective);
    println!("NMI before {:.4}, after {:.4}", nmi(&moving, &fixed, 64)?, nmi(&aligned, &fixed, 64)?);
    // moving(x) = fixed(truth(x)), so truth after the fit should be the identity
    let mut worst: f64 = 0.0;
    for (x, y) in [(0, 0), (63, 0), (0, 63), (63, 63)] {
        let p = grid.point(x, y, 0);
        let q = truth.apply(fit.transform.apply(p));
        worst = worst.max(((q[0] - p[0]) / sp[0]).hypot((q[1] - p[1]) / sp[1]));
    }
    println!("worst corner error {worst:.3} px");
    Ok(())
}
