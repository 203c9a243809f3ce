use histostack::image::{Grid, Point};
use histostack::landmarks::{
    agreement_report, map_landmarks, pairwise_displacement, read_landmarks_csv, write_landmarks_csv, Direction,
    LandmarkSet, Mode,
};
use histostack::transform::{Affine, TransformChain};
use proptest::prelude::*;

fn points(offset: f64) -> [Point; 10] {
    std::array::from_fn(|i| [100.0 * i as f64 + offset, 50.0 + offset, 240.0])
}

#[test]
fn csv_round_trip_keeps_annotator_order() {
    let dir = tempfile::tempdir().unwrap();
    let sets = vec![
        LandmarkSet::canonical("zed", &points(0.0)),
        LandmarkSet::canonical("amy", &points(12.5)),
    ];
    let p = dir.path().join("lm.csv");
    write_landmarks_csv(&sets, &p).unwrap();
    let back = read_landmarks_csv(&p).unwrap();
    assert_eq!(back, sets);
    let header = std::fs::read_to_string(&p).unwrap();
    assert!(header.starts_with("name,point_index,x_um,y_um,z_um,annotator"));
}

#[test]
fn malformed_csv_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "name,point_index,x_um,y_um,z_um,annotator\nMB,0,1,2,oops,a\n").unwrap();
    let err = read_landmarks_csv(&p).unwrap_err();
    assert!(err.to_string().contains("bad.csv"), "{err}");
}

#[test]
fn forward_then_inverse_returns_to_start() {
    let a = Affine::new(
        3,
        &[0.98, 0.05, 0.0, -0.04, 1.03, 0.01, 0.0, 0.02, 1.0],
        &[30.0, -12.0, 5.0],
        &[500.0, 500.0, 300.0],
    )
    .unwrap();
    let chain = TransformChain::single(a);
    let set = LandmarkSet::canonical("a", &points(3.0));
    let there = map_landmarks(&set, &chain, Direction::Forward, None).unwrap();
    let back = map_landmarks(&there.set, &chain, Direction::Inverse, None).unwrap();
    for (name, d) in pairwise_displacement(&set, &back.set).unwrap() {
        assert!(d < 1e-9, "{name}: {d}");
    }
}

#[test]
fn two_d_chains_are_rejected() {
    let set = LandmarkSet::canonical("a", &points(0.0));
    assert!(map_landmarks(&set, &TransformChain::identity(2), Direction::Forward, None).is_err());
}

#[test]
fn points_past_the_volume_are_listed() {
    let grid = Grid::new_3d([10, 10, 10], [100.0, 100.0, 50.0]).unwrap();
    let set = LandmarkSet::canonical("a", &points(0.0));
    let mapped = map_landmarks(&set, &TransformChain::identity(3), Direction::Forward, Some(&grid)).unwrap();
    // x reaches 900 µm only for the last two-point landmark
    assert_eq!(mapped.outside, Vec::<String>::new());
    let shifted = TransformChain::single(Affine::translation(3, &[150.0, 0.0, 0.0]));
    let mapped = map_landmarks(&set, &shifted, Direction::Forward, Some(&grid)).unwrap();
    assert_eq!(mapped.outside, vec!["intersection ALIC/AC".to_string()]);
    assert_eq!(mapped.set.point_count(), 10);
}

#[test]
fn report_matches_brute_force() {
    let manual: Vec<LandmarkSet> = [0.0, 30.0, 100.0]
        .iter()
        .enumerate()
        .map(|(i, o)| LandmarkSet::canonical(format!("m{i}"), &points(*o)))
        .collect();
    let auto = LandmarkSet::canonical("auto", &points(10.0));
    let r = agreement_report(&manual, &auto).unwrap();
    let diag = std::f64::consts::SQRT_2 / 100.0;
    // closest manual pair is 30 µm apart, manual-auto offsets are 10, 20, 90
    for e in &r.manual_manual {
        assert_eq!(e.mode, Mode::ManualManual);
        assert!((e.displacement_100um - 30.0 * diag).abs() < 1e-12);
    }
    for e in &r.manual_auto {
        assert_eq!(e.mode, Mode::ManualAuto);
        assert!((e.displacement_100um - 20.0 * diag).abs() < 1e-12);
    }
    assert_eq!(r.entries().count(), 14);
    assert!(r.to_table().contains("manual-auto"));
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    let rows = json.as_array().unwrap();
    assert_eq!(rows.len(), 14);
    assert_eq!(rows[0]["mode"], "manual-manual");
    assert_eq!(rows[13]["mode"], "manual-auto");
}

#[test]
fn single_annotator_is_rejected() {
    let manual = vec![LandmarkSet::canonical("m", &points(0.0))];
    let auto = LandmarkSet::canonical("auto", &points(0.0));
    assert!(agreement_report(&manual, &auto).is_err());
}

proptest! {
    #[test]
    fn report_is_translation_invariant(
        offs in prop::collection::vec(-80.0f64..80.0, 3),
        shift in prop::array::uniform3(-500.0f64..500.0),
    ) {
        let manual: Vec<LandmarkSet> = offs.iter().enumerate()
            .map(|(i, o)| LandmarkSet::canonical(format!("m{i}"), &points(*o))).collect();
        let auto = LandmarkSet::canonical("auto", &points(5.0));
        let t = TransformChain::single(Affine::translation(3, &shift));
        let mv = |s: &LandmarkSet| map_landmarks(s, &t, Direction::Forward, None).unwrap().set;
        let a = agreement_report(&manual, &auto).unwrap();
        let b = agreement_report(&manual.iter().map(mv).collect::<Vec<_>>(), &mv(&auto)).unwrap();
        // ties may reorder, so match rows by landmark and mode
        for x in a.entries() {
            let y = b.entries().find(|y| y.landmark == x.landmark && y.mode == x.mode).unwrap();
            prop_assert!((x.displacement_100um - y.displacement_100um).abs() < 1e-9);
        }
    }
}
