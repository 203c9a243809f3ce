//! Build, compose, invert and save a transform chain.

use histostack::image::Grid;
use histostack::transform::io::{read_chain, write_chain};
use histostack::transform::{compose, Affine, DisplacementField, TransformChain};

fn main() -> histostack::Result<()> {
    let grid = Grid::new_2d(32, 32, [10.0, 10.0])?;
    let field = DisplacementField::from_fn(grid, |p| [5.0 * (p[1] / 50.0).sin(), 0.0, 0.0]);
    let shift = Affine::translation(2, &[20.0, -15.0]);
    let rot = Affine::new(2, &[0.0, -1.0, 1.0, 0.0], &[0.0, 0.0], &[160.0, 160.0])?;

    // compose(a, b) applies b first
    let chain = compose(&TransformChain::single(rot), &TransformChain::new(2, vec![field.into(), shift.into()])?)?;
    let p = [100.0, 120.0, 0.0];
    let q = chain.apply(p);
    let back = chain.apply_inverse(q)?;
    println!("{p:?} -> {q:?} -> {back:?}");

    let dir = tempfile_dir();
    let path = write_chain(&chain, &dir, "example")?;
    let reread = read_chain(&path)?;
    println!("wrote {} ({} elements)", path.display(), reread.len());
    println!("reread maps to {:?}", reread.apply(p));
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join("histostack_transforms_io");
    std::fs::create_dir_all(&d).expect("temp dir");
    d
}
