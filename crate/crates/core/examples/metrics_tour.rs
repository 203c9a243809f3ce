//! Dice, NMI and the contrastive loss on toy inputs.

use histostack::image::{Image2D, SegmentationMask};
use histostack::metrics::{dice, info_nce, nmi, DiceRow, FeatureBatch};

fn main() -> histostack::Result<()> {
    let disk = |cx: f64, r: f64| {
        SegmentationMask::new_2d(32, 32, (0..1024).map(|i| ((i % 32) as f64 - cx).hypot((i / 32) as f64 - 16.0) < r).collect())
    };
    let scores = [dice(&disk(16.0, 8.0)?, &disk(16.0, 8.0)?)?, dice(&disk(16.0, 8.0)?, &disk(18.0, 8.0)?)?, dice(&disk(16.0, 8.0)?, &disk(16.0, 6.0)?)?];
    println!("{}", DiceRow::from_scores("model vs gt*", &scores));

    let a = Image2D::from_fn(32, 32, [1.0, 1.0], |x, y| ((x + y) % 8) as f64 / 7.0)?;
    let inverted = Image2D::from_fn(32, 32, [1.0, 1.0], |x, y| 1.0 - ((x + y) % 8) as f64 / 7.0)?;
    let flat = Image2D::from_fn(32, 32, [1.0, 1.0], |x, _| x as f64 / 31.0)?;
    println!("NMI(a, a) = {:.4}", nmi(&a, &a, 64)?);
    println!("NMI(a, 1 - a) = {:.4}", nmi(&a, &inverted, 64)?);
    println!("NMI(a, ramp) = {:.4}", nmi(&a, &flat, 64)?);

    // two views per sample, rows (2k, 2k+1)
    let v = vec![
        vec![1.0, 0.1, 0.0],
        vec![0.9, 0.2, 0.0],
        vec![0.0, 1.0, 0.1],
        vec![0.1, 0.9, 0.0],
        vec![0.0, 0.0, 1.0],
        vec![0.1, 0.0, 0.8],
    ];
    for tau in [0.1, 0.5, 1.0] {
        let l = info_nce(&FeatureBatch::new(v.clone(), tau)?)?;
        println!("InfoNCE tau {tau}: {:.4}", l.loss);
    }
    Ok(())
}
