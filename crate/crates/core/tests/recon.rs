use std::sync::OnceLock;

use histostack::image::{Image2D, Raster, SegmentationMask};
use histostack::manifest::SectionStack;
use histostack::phantom::{generate, mean_corner_displacement, Phantom, PhantomSpec};
use histostack::recon::{
    map_masks, map_to_template, read_log_jsonl, reconstruct_backlit, reconstruct_ish, render_stack, write_log_jsonl,
    IshConfig, ReconConfig, ReconstructionState, TemplateConfig, TransformKind,
};
use histostack::transform::TransformChain;
use histostack::Error;

fn phantom() -> &'static Phantom {
    static P: OnceLock<Phantom> = OnceLock::new();
    P.get_or_init(|| {
        generate(&PhantomSpec {
            seed: 21,
            dims: [40, 40, 32],
            blobs: 10,
            ..Default::default()
        })
        .unwrap()
    })
}

fn backlit_state() -> &'static ReconstructionState {
    static S: OnceLock<ReconstructionState> = OnceLock::new();
    S.get_or_init(|| {
        let ph = phantom();
        reconstruct_backlit(&ph.backlit, &ph.blockface, &ReconConfig::default()).unwrap()
    })
}

#[test]
fn log_has_one_record_per_slice_and_iteration() {
    let state = backlit_state();
    let n = phantom().backlit.len();
    let iterations = ReconConfig::default().schedule.last_iteration() + 1;
    assert_eq!(state.iterations(), iterations);
    assert_eq!(state.log.len(), n * iterations);
    for it in 0..iterations {
        let slices: Vec<u32> = state.log.iter().filter(|r| r.iteration == it).map(|r| r.slice).collect();
        assert_eq!(slices, state.indices);
    }
    assert!(state.log.iter().filter(|r| r.iteration >= 3).all(|r| r.kind == TransformKind::Deformable));
    assert!(state.fallbacks().is_empty());
}

#[test]
fn every_refinement_keeps_or_lowers_its_objective() {
    for r in &backlit_state().log {
        if let (Some(b), Some(a)) = (r.objective_before, r.objective_after) {
            assert!(a <= b + 1e-12, "iteration {} slice {}: {b} -> {a}", r.iteration, r.slice);
        }
    }
}

#[test]
fn reconstruction_beats_the_raw_stack() {
    let ph = phantom();
    let state = backlit_state();
    let grid = *ph.blockface.sections[0].grid();
    let identity = vec![TransformChain::identity(2); state.chains.len()];
    let before = mean_corner_displacement(&identity, &ph.truth.backlit_chains, &grid);
    let after = mean_corner_displacement(&state.chains, &ph.truth.backlit_chains, &grid);
    assert!(after < 0.5 * before, "{before} -> {after}");
    assert_eq!(state.volume.dims(), [40, 40, 32]);
}

#[test]
fn log_survives_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("it.jsonl");
    write_log_jsonl(&backlit_state().log, &p).unwrap();
    assert_eq!(read_log_jsonl(&p).unwrap(), backlit_state().log);
    assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), backlit_state().log.len());
}

#[test]
fn render_with_identity_stacks_sections() {
    let ph = phantom();
    let grid = backlit_state().grid;
    let chains = vec![TransformChain::identity(2); ph.blockface.len()];
    let vol = render_stack(&ph.blockface, &chains, &grid).unwrap();
    for z in [0, 15, 31] {
        assert_eq!(vol.slice(z).pixels(), ph.blockface.sections[z].pixels());
    }
    assert!(render_stack(&ph.blockface, &chains[1..], &grid).is_err());
}

#[test]
fn missing_blockface_is_reported_by_index() {
    let ph = phantom();
    let bf = SectionStack::new(
        ph.blockface.indices[..30].to_vec(),
        ph.blockface.sections[..30].to_vec(),
        ph.blockface.slice_thickness,
    )
    .unwrap();
    match reconstruct_backlit(&ph.backlit, &bf, &ReconConfig::default()) {
        Err(Error::MissingCounterpart(v)) => assert_eq!(v, vec![30, 31]),
        other => panic!("{:?}", other.map(|s| s.indices)),
    }
}

#[test]
fn blank_section_falls_back_without_aborting() {
    let ph = phantom();
    let mut bl = ph.backlit.clone();
    bl.sections[4] = Image2D::filled(40, 40, bl.sections[4].spacing(), 0.0).unwrap();
    let mut config = ReconConfig::default();
    config.schedule.phases.truncate(2);
    config.schedule.phases[1].last = 1;
    let state = reconstruct_backlit(&bl, &ph.blockface, &config).unwrap();
    let fallbacks = state.fallbacks();
    assert!(!fallbacks.is_empty());
    assert!(fallbacks.iter().all(|r| r.slice == 4));
    assert_eq!(state.chains.len(), 32);
}

#[test]
fn stained_sections_and_masks_reach_reconstruction_space() {
    let ph = phantom();
    let state = backlit_state();
    let ish = reconstruct_ish(&ph.ish, &ph.backlit, state, &IshConfig::default()).unwrap();
    assert_eq!(ish.chains.len(), 32);
    assert_eq!(ish.iterations(), 1 + IshConfig::default().deformable_iterations);
    let mapped = map_masks(&ph.truth.masks, &ish).unwrap();
    assert_eq!(mapped.len(), 32);
    assert!(mapped.iter().all(|m| m.grid().same_shape(&ish.grid)));
    let total: usize = mapped.iter().map(SegmentationMask::count).sum();
    assert!(total > 0);
    assert!(map_masks(&ph.truth.masks[1..], &ish).is_err());
}

#[test]
fn mapping_a_volume_onto_itself_is_near_identity() {
    let vol = &phantom().truth.volume;
    let m = map_to_template(vol, vol, &TemplateConfig::default()).unwrap();
    assert!(m.nmi_deformable >= m.nmi_affine - 1e-12);
    let grid = vol.grid();
    let mut worst: f64 = 0.0;
    for (x, y, z) in [(5, 5, 5), (20, 20, 16), (34, 30, 26)] {
        let p = grid.point(x, y, z);
        let q = m.chain.apply(p);
        let d: f64 = (0..3).map(|k| ((q[k] - p[k]) / grid.spacing[k]).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(d);
    }
    assert!(worst < 0.5, "worst {worst} voxels");
}
