use histostack::image::{Grid, Image2D, Point, Raster};
use histostack::transform::io::{read_chain, write_chain};
use histostack::transform::{
    compose, invert_affine, jacobian_min_det, warp_image, Affine, DisplacementField, Transform, TransformChain,
};
use proptest::prelude::*;

fn affine_2d() -> impl Strategy<Value = Affine> {
    (-0.5f64..0.5, 0.7f64..1.4, 0.7f64..1.4, -0.3f64..0.3, -20.0f64..20.0, -20.0f64..20.0).prop_map(
        |(th, sx, sy, sh, tx, ty)| {
            let (c, s) = (th.cos(), th.sin());
            let lin = [c * sx, c * sh * sx - s * sy, s * sx, s * sh * sx + c * sy];
            Affine::new(2, &lin, &[tx, ty], &[16.0, 12.0]).unwrap()
        },
    )
}

fn point_2d() -> impl Strategy<Value = Point> {
    (-50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y)| [x, y, 0.0])
}

fn close(a: Point, b: Point, tol: f64) -> bool {
    (0..3).all(|k| (a[k] - b[k]).abs() <= tol)
}

fn smooth_field(grid: Grid, amp: f64) -> DisplacementField {
    let e = grid.extent();
    DisplacementField::from_fn(grid, |p| {
        [
            amp * (std::f64::consts::TAU * p[1] / e[1]).sin(),
            amp * (std::f64::consts::TAU * p[0] / e[0]).cos(),
            0.0,
        ]
    })
}

proptest! {
    #[test]
    fn affine_inverse_round_trips(a in affine_2d(), p in point_2d()) {
        let inv = invert_affine(&a).unwrap();
        prop_assert!(close(inv.apply(a.apply(p)), p, 1e-9));
        prop_assert!(close(a.compose(&inv).apply(p), p, 1e-9));
    }

    #[test]
    fn compose_applies_second_argument_first(a in affine_2d(), b in affine_2d(), p in point_2d()) {
        let ab = compose(&TransformChain::single(a), &TransformChain::single(b)).unwrap();
        prop_assert!(close(ab.apply(p), a.apply(b.apply(p)), 1e-9));
        prop_assert!(close(a.compose(&b).apply(p), a.apply(b.apply(p)), 1e-9));
    }

    #[test]
    fn chain_inverse_undoes_chain(a in affine_2d(), amp in 0.0f64..1.5, x in 4.0f64..28.0, y in 4.0f64..20.0) {
        let grid = Grid::new_2d(32, 24, [1.0, 1.0]).unwrap();
        let chain = TransformChain::new(2, vec![Transform::Field(smooth_field(grid, amp).into()), Transform::Affine(a)]).unwrap();
        let p = [x, y, 0.0];
        let back = chain.apply_inverse(chain.apply(p)).unwrap();
        // the fixed-point solve stops once a step drops below 0.01 voxel
        prop_assert!(close(back, p, 0.02), "{back:?} vs {p:?}");
    }

    #[test]
    fn small_smooth_fields_are_diffeomorphic(amp in 0.0f64..0.9) {
        // |grad u| <= amp * 2 pi / extent stays well below 1 on a 32 px grid
        let grid = Grid::new_2d(32, 32, [1.0, 1.0]).unwrap();
        prop_assert!(jacobian_min_det(&smooth_field(grid, amp)) > 0.0);
    }
}

#[test]
fn folding_field_has_negative_jacobian() {
    let grid = Grid::new_2d(32, 32, [1.0, 1.0]).unwrap();
    let f = DisplacementField::from_fn(grid, |p| [-2.0 * (p[0] - 16.0), 0.0, 0.0]);
    assert!(jacobian_min_det(&f) < 0.0);
}

#[test]
fn chain_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::new_2d(20, 16, [2.0, 2.0]).unwrap();
    let a = Affine::new(2, &[1.01, 0.02, -0.03, 0.98], &[1.5, -2.25], &[20.0, 16.0]).unwrap();
    let chain = TransformChain::new(
        2,
        vec![Transform::Field(smooth_field(grid, 0.75).into()), Transform::Affine(a)],
    )
    .unwrap();
    let path = write_chain(&chain, dir.path(), "slice_0001").unwrap();
    let back = read_chain(&path).unwrap();
    assert_eq!(back.len(), 2);
    for p in [[3.0, 4.0, 0.0], [30.0, 10.0, 0.0]] {
        // fields are stored as float32
        assert!(close(back.apply(p), chain.apply(p), 1e-5));
    }
    // writing what was read reproduces the files byte for byte
    let dir2 = tempfile::tempdir().unwrap();
    let again = write_chain(&back, dir2.path(), "slice_0001").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    for name in ["slice_0001_0_field.raw", "slice_0001_1.affine"] {
        assert_eq!(
            std::fs::read(dir.path().join(name)).unwrap(),
            std::fs::read(dir2.path().join(name)).unwrap()
        );
    }
}

#[test]
fn warping_by_a_translation_then_its_inverse_restores_the_interior() {
    let img = Image2D::from_fn(40, 30, [1.0, 1.0], |x, y| 0.5 + 0.3 * (x as f64 / 5.0).sin() * (y as f64 / 7.0).cos())
        .unwrap();
    let t = Affine::translation(2, &[3.0, -2.0]);
    let there = warp_image(&img, &TransformChain::single(t), img.grid()).unwrap();
    let back = warp_image(&there, &TransformChain::single(invert_affine(&t).unwrap()), img.grid()).unwrap();
    for y in 3..27 {
        for x in 4..36 {
            assert!((back.get(x, y) - img.get(x, y)).abs() < 1e-12);
        }
    }
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let img = Image2D::filled(8, 8, [1.0, 1.0], 0.5).unwrap();
    let chain3 = TransformChain::identity(3);
    assert!(warp_image(&img, &chain3, img.grid()).is_err());
    assert!(compose(&TransformChain::identity(2), &chain3).is_err());
}

#[test]
fn singular_affine_is_rejected() {
    assert!(Affine::new(2, &[1.0, 2.0, 2.0, 4.0], &[0.0, 0.0], &[0.0, 0.0]).is_err());
    let flat = Affine::new(2, &[1.0, 0.0, 0.0, 1e-3], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
    assert!(invert_affine(&flat).is_ok());
}

#[test]
fn field_inverse_composes_to_near_identity() {
    let grid = Grid::new_2d(48, 48, [1.0, 1.0]).unwrap();
    let f = smooth_field(grid, 1.2);
    let inv = f.inverse();
    let mut worst: f64 = 0.0;
    for y in 8..40 {
        for x in 8..40 {
            let p = grid.point(x, y, 0);
            let q = f.apply(inv.apply(p));
            worst = worst.max((q[0] - p[0]).hypot(q[1] - p[1]));
        }
    }
    assert!(worst < 0.05, "worst {worst}");
    assert_eq!(*inv.grid(), grid);
}
