//! Map a volume onto a rescaled, rotated copy of itself.

use histostack::image::{Image3D, Raster};
use histostack::phantom::{generate, PhantomSpec};
use histostack::recon::{map_to_template, TemplateConfig};
use histostack::transform::{warp_image, Affine, TransformChain};

fn main() -> histostack::Result<()> {
    let ph = generate(&PhantomSpec {
        dims: [48, 48, 32],
        ..Default::default()
    })?;
    let volume: &Image3D = &ph.truth.volume;
    let c = volume.grid().center();
    let (s, th) = (1.05, 4f64.to_radians());
    let lin = [s * th.cos(), -s * th.sin(), 0.0, s * th.sin(), s * th.cos(), 0.0, 0.0, 0.0, 1.0];
    let template = warp_image(volume, &TransformChain::single(Affine::new(3, &lin, &[0.0; 3], &c)?), volume.grid())?;

    let m = map_to_template(volume, &template, &TemplateConfig::default())?;
    println!("NMI after affine {:.4}, after deformable {:.4}", m.nmi_affine, m.nmi_deformable);
    println!("chain: {} elements", m.chain.len());
    Ok(())
}
