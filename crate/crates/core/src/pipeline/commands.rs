use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{must_exist, required, PipelineConfig};
use crate::error::{io_err, Error, Result};
use crate::image::io::{load_mask_png, read_volume, write_mask_volume, write_volume};
use crate::image::{Grid, Image3D, Raster, SegmentationMask};
use crate::landmarks::{agreement_report, read_landmarks_csv};
use crate::manifest::{check_counterparts, Modality, SectionStack, StackManifest};
use crate::metrics::{dice, info_nce, read_feature_csv, DiceRow};
use crate::phantom::generate;
use crate::recon::{map_to_template, reconstruct_backlit, reconstruct_ish, write_log_jsonl, ReconstructionState};
use crate::transform::io::{read_chain, write_chain};
use crate::transform::{warp_image, warp_mask};

/// What a command produced. Warnings turn a success into exit code 2.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.warnings.is_empty() {
            0
        } else {
            2
        }
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

/// Index of a reconstruction run, stored as `reconstruction.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconSummary {
    pub dims: [usize; 2],
    pub spacing_um: [f64; 2],
    pub slice_thickness_um: f64,
    /// Back-lit slice indices; every volume has one z-plane per entry.
    pub indices: Vec<u32>,
    pub backlit: StackOutput,
    pub ish: Vec<StackOutput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackOutput {
    pub name: String,
    pub gene: Option<String>,
    pub indices: Vec<u32>,
    /// Width and height of the input sections.
    pub section_dims: [usize; 2],
    /// Chain files relative to the reconstruction directory, one per index.
    pub chains: Vec<PathBuf>,
    pub volume: PathBuf,
    pub log: PathBuf,
    pub fallbacks: usize,
}

pub const SUMMARY_FILE: &str = "reconstruction.json";

impl ReconSummary {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new_2d(self.dims[0], self.dims[1], self.spacing_um)
    }

    pub fn ish_for(&self, gene: Option<&str>) -> Result<&StackOutput> {
        match gene {
            Some(g) => self.ish.iter().find(|s| s.gene.as_deref() == Some(g)),
            None if self.ish.len() == 1 => self.ish.first(),
            None => None,
        }
        .ok_or_else(|| Error::Manifest(format!("no stained stack for gene {gene:?} in the reconstruction")))
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn load_manifest(path: &Path) -> Result<StackManifest> {
    must_exist(path)?;
    let m = StackManifest::load(path)?;
    m.validate()?;
    Ok(m)
}

fn gene_of(manifest: &StackManifest, path: &Path) -> String {
    manifest.gene.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().trim_start_matches("ish_").to_string())
            .unwrap_or_else(|| "gene".into())
    })
}

fn volume_grid(plane: &Grid, planes: usize, thickness: f64) -> Result<Grid> {
    Grid::new_3d([plane.dims[0], plane.dims[1], planes], [plane.spacing[0], plane.spacing[1], thickness])
}

/// One plane per reference index; planes without a section stay zero.
fn embed_values(values: &[Vec<f64>], indices: &[u32], reference: &[u32], plane: usize) -> Vec<f64> {
    let mut out = vec![0.0; plane * reference.len()];
    for (v, idx) in values.iter().zip(indices) {
        if let Some(z) = reference.iter().position(|r| r == idx) {
            out[z * plane..(z + 1) * plane].copy_from_slice(v);
        }
    }
    out
}

fn write_stack_outputs(
    state: &ReconstructionState,
    stack: &SectionStack,
    name: &str,
    gene: Option<String>,
    reference: &[u32],
    root: &Path,
    outcome: &mut Outcome,
) -> Result<StackOutput> {
    let dir = root.join(name);
    let chain_dir = dir.join("chains");
    fs::create_dir_all(&chain_dir).map_err(io_err(&chain_dir))?;
    let mut chains = Vec::new();
    for (idx, chain) in state.indices.iter().zip(&state.chains) {
        let p = write_chain(chain, &chain_dir, &format!("slice_{idx:04}"))?;
        chains.push(p.strip_prefix(root).unwrap_or(&p).to_path_buf());
    }
    let planes: Vec<Vec<f64>> = state.volume.slices().iter().map(|s| s.pixels().to_vec()).collect();
    let g3 = volume_grid(&state.grid, reference.len(), stack.slice_thickness)?;
    let vol = Image3D::from_parts_clamped(g3, embed_values(&planes, &state.indices, reference, state.grid.len()));
    let volume = dir.join("volume");
    write_volume(&vol, &volume)?;
    let log = dir.join("iterations.jsonl");
    write_log_jsonl(&state.log, &log)?;
    let fallbacks = state.fallbacks();
    for r in &fallbacks {
        outcome.warn(format!(
            "{name}: slice {} iteration {} kept its previous chain ({})",
            r.slice,
            r.iteration,
            r.fallback.as_deref().unwrap_or("")
        ));
    }
    let s0 = &stack.sections[0];
    outcome.outputs.extend([volume.with_extension("json"), log.clone()]);
    Ok(StackOutput {
        name: name.into(),
        gene,
        indices: state.indices.clone(),
        section_dims: [s0.width(), s0.height()],
        chains,
        volume: volume.strip_prefix(root).unwrap_or(&volume).to_path_buf(),
        log: log.strip_prefix(root).unwrap_or(&log).to_path_buf(),
        fallbacks: fallbacks.len(),
    })
}

/// Back-lit reconstruction followed by every stained stack.
pub fn cmd_reconstruct(cfg: &PipelineConfig, dry_run: bool) -> Result<Outcome> {
    cfg.validate()?;
    let bf_path = required(&cfg.paths.blockface, "blockface")?;
    let bl_path = required(&cfg.paths.backlit, "backlit")?;
    let bf_m = load_manifest(bf_path)?;
    let bl_m = load_manifest(bl_path)?;
    check_counterparts(&bl_m, Modality::Backlit, &bf_m, Modality::Blockface)?;
    let mut ish_m = Vec::new();
    for p in &cfg.paths.ish {
        let m = load_manifest(p)?;
        check_counterparts(&m, Modality::Ish, &bl_m, Modality::Backlit)?;
        ish_m.push((gene_of(&m, p), m));
    }
    let mut outcome = Outcome::default();
    if dry_run {
        println!(
            "reconstruct: {} back-lit sections, {} stained stacks, {} iterations -> {}",
            bl_m.indices(Modality::Backlit).len(),
            ish_m.len(),
            cfg.recon.schedule.last_iteration() + 1,
            cfg.output_dir.display()
        );
        return Ok(outcome);
    }

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    outcome.outputs.push(cfg.write_snapshot(out)?);
    let bf = bf_m.load_stack(Modality::Blockface)?;
    let bl = bl_m.load_stack(Modality::Backlit)?;
    log::info!("reconstructing {} back-lit sections", bl.len());
    let state = reconstruct_backlit(&bl, &bf, &cfg.recon)?;
    let reference = state.indices.clone();
    let backlit = write_stack_outputs(&state, &bl, "backlit", None, &reference, out, &mut outcome)?;

    let mut ish = Vec::new();
    for (gene, m) in &ish_m {
        let stack = m.load_stack(Modality::Ish)?;
        log::info!("registering {} {gene} sections", stack.len());
        let s = reconstruct_ish(&stack, &bl, &state, &cfg.ish)?;
        ish.push(write_stack_outputs(
            &s,
            &stack,
            &format!("ish_{gene}"),
            Some(gene.clone()),
            &reference,
            out,
            &mut outcome,
        )?);
    }
    let summary = ReconSummary {
        dims: [state.grid.dims[0], state.grid.dims[1]],
        spacing_um: [state.grid.spacing[0], state.grid.spacing[1]],
        slice_thickness_um: bl.slice_thickness,
        indices: reference,
        backlit,
        ish,
    };
    let p = out.join(SUMMARY_FILE);
    write_json(&summary, &p)?;
    outcome.outputs.push(p);
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateReport {
    pub nmi_affine: f64,
    pub nmi_deformable: f64,
    /// Paths relative to the output directory.
    pub chain: PathBuf,
    pub volumes: Vec<PathBuf>,
}

/// 3D registration of the back-lit volume to the template, then every
/// reconstructed volume resampled into template space.
pub fn cmd_map_template(cfg: &PipelineConfig, dry_run: bool) -> Result<Outcome> {
    cfg.validate()?;
    let template_stem = required(&cfg.paths.template, "template")?;
    must_exist(&template_stem.with_extension("json"))?;
    let recon_dir = cfg.reconstruction_dir();
    must_exist(&recon_dir.join(SUMMARY_FILE))?;
    let summary = ReconSummary::load(&recon_dir)?;
    let mut outcome = Outcome::default();
    if dry_run {
        println!(
            "map-template: {} volumes from {} onto {}",
            1 + summary.ish.len(),
            recon_dir.display(),
            template_stem.display()
        );
        return Ok(outcome);
    }
    let template = read_volume(template_stem)?;
    let volume = read_volume(&recon_dir.join(&summary.backlit.volume))?;
    let mapping = map_to_template(&volume, &template, &cfg.template)?;
    if mapping.nmi_deformable <= mapping.nmi_affine {
        outcome.warn("deformable template stage did not improve NMI; affine only".into());
    }

    let out = cfg.output_dir.join("template");
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    outcome.outputs.push(cfg.write_snapshot(&cfg.output_dir)?);
    let chain = write_chain(&mapping.chain, &out, "to_reconstruction")?;
    let mut volumes = Vec::new();
    for s in std::iter::once(&summary.backlit).chain(&summary.ish) {
        let v = read_volume(&recon_dir.join(&s.volume))?;
        let warped = warp_image(&v, &mapping.chain, template.grid())?;
        let stem = out.join(&s.name);
        write_volume(&warped, &stem)?;
        volumes.push(stem);
    }
    let rel = |p: &Path| p.strip_prefix(&cfg.output_dir).unwrap_or(p).to_path_buf();
    let report = TemplateReport {
        nmi_affine: mapping.nmi_affine,
        nmi_deformable: mapping.nmi_deformable,
        chain: rel(&chain),
        volumes: volumes.iter().map(|v| rel(v)).collect(),
    };
    let rp = out.join("report.json");
    write_json(&report, &rp)?;
    outcome.outputs.push(chain);
    outcome.outputs.extend(volumes);
    outcome.outputs.push(rp);
    Ok(outcome)
}

fn load_masks(manifest: &StackManifest) -> Result<Vec<(u32, SegmentationMask)>> {
    manifest
        .entries(Modality::Mask)
        .map(|e| Ok((e.index, load_mask_png(&manifest.resolve(e))?)))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dice: Option<DiceRow>,
    /// Per-slice Dice scores that entered the aggregate.
    #[serde(default)]
    pub dice_scores: Vec<(u32, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub landmarks: Option<crate::landmarks::DisplacementReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub info_nce: Option<f64>,
}

/// Dice of predicted against reference masks, landmark agreement, and
/// the contrastive loss of a feature batch; whichever inputs are set.
pub fn cmd_evaluate(cfg: &PipelineConfig, dry_run: bool) -> Result<Outcome> {
    cfg.validate()?;
    let p = &cfg.paths;
    let masks = p.masks.is_some() || p.reference_masks.is_some();
    let lms = p.manual_landmarks.is_some() || p.auto_landmarks.is_some();
    if !masks && !lms && p.features.is_none() {
        return Err(Error::InvalidParameter(
            "nothing to evaluate: set masks + reference_masks, manual_landmarks + auto_landmarks, or features".into(),
        ));
    }
    let mut report = EvaluationReport::default();
    let mut outcome = Outcome::default();
    let mask_manifests = if masks {
        Some((
            load_manifest(required(&p.masks, "masks")?)?,
            load_manifest(required(&p.reference_masks, "reference_masks")?)?,
        ))
    } else {
        None
    };
    let landmark_paths = if lms {
        let m = required(&p.manual_landmarks, "manual_landmarks")?;
        let a = required(&p.auto_landmarks, "auto_landmarks")?;
        must_exist(m)?;
        must_exist(a)?;
        Some((m, a))
    } else {
        None
    };
    if let Some(f) = &p.features {
        must_exist(f)?;
    }
    if dry_run {
        println!("evaluate: inputs present");
        return Ok(outcome);
    }

    if let Some((pred_m, ref_m)) = mask_manifests {
        let pred = load_masks(&pred_m)?;
        let reference = load_masks(&ref_m)?;
        for (idx, a) in &pred {
            let Some((_, b)) = reference.iter().find(|(i, _)| i == idx) else {
                outcome.warn(format!("slice {idx}: no reference mask; excluded"));
                continue;
            };
            match dice(a, b) {
                Ok(d) => report.dice_scores.push((*idx, d)),
                Err(e) => outcome.warn(format!("slice {idx}: {e}; excluded")),
            }
        }
        let scores: Vec<f64> = report.dice_scores.iter().map(|(_, d)| *d).collect();
        let row = DiceRow::from_scores(cfg.dice_label.clone(), &scores);
        println!("{row}");
        report.dice = Some(row);
    }
    if let Some((m, a)) = landmark_paths {
        let manual = read_landmarks_csv(m)?;
        let auto = read_landmarks_csv(a)?;
        let auto = auto
            .into_iter()
            .next()
            .ok_or_else(|| Error::Landmarks(format!("{} holds no landmark set", a.display())))?;
        let r = agreement_report(&manual, &auto)?;
        print!("{}", r.to_table());
        report.landmarks = Some(r);
    }
    if let Some(f) = &p.features {
        let batch = read_feature_csv(f, cfg.temperature)?;
        let loss = info_nce(&batch)?.loss;
        println!("info_nce: {loss:.10}");
        report.info_nce = Some(loss);
    }

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    outcome.outputs.push(cfg.write_snapshot(out)?);
    let rp = out.join("evaluation.json");
    write_json(&report, &rp)?;
    outcome.outputs.push(rp);
    Ok(outcome)
}

/// Generate a synthetic study plus a ready-to-run config pointing at it.
pub fn cmd_phantom(cfg: &PipelineConfig, dry_run: bool) -> Result<Outcome> {
    cfg.validate()?;
    let spec = cfg.resolved().phantom;
    let mut outcome = Outcome::default();
    if dry_run {
        println!(
            "phantom: {}x{}x{} sections, seed {} -> {}",
            spec.dims[0],
            spec.dims[1],
            spec.dims[2],
            spec.seed,
            cfg.output_dir.display()
        );
        return Ok(outcome);
    }
    let out = &cfg.output_dir;
    let phantom = generate(&spec)?;
    let files = phantom.write(out)?;
    outcome.outputs.push(cfg.write_snapshot(out)?);

    let rel = |p: &Path| p.strip_prefix(out).unwrap_or(p).to_path_buf();
    let mut run = cfg.clone();
    run.output_dir = PathBuf::from("reconstruction");
    run.paths.blockface = Some(rel(&files.blockface));
    run.paths.backlit = Some(rel(&files.backlit));
    run.paths.ish = vec![rel(&files.ish)];
    run.paths.template = Some(rel(&files.volume));
    run.paths.masks = Some(rel(&files.masks));
    run.paths.reference_masks = Some(rel(&files.masks));
    run.paths.manual_landmarks = Some(rel(&files.annotations));
    run.paths.auto_landmarks = Some(rel(&files.landmarks));
    run.paths.reconstruction = None;
    let pipeline = out.join("pipeline.toml");
    fs::write(&pipeline, run.to_toml()?).map_err(io_err(&pipeline))?;
    outcome.outputs.extend([files.blockface, files.backlit, files.ish, files.masks, pipeline]);
    Ok(outcome)
}

/// Bring externally produced section masks into reconstruction space and,
/// when a template mapping exists, into template space.
pub fn cmd_segment_import(cfg: &PipelineConfig, dry_run: bool) -> Result<Outcome> {
    cfg.validate()?;
    let manifest = load_manifest(required(&cfg.paths.masks, "masks")?)?;
    let recon_dir = cfg.reconstruction_dir();
    must_exist(&recon_dir.join(SUMMARY_FILE))?;
    let summary = ReconSummary::load(&recon_dir)?;
    let stack = summary.ish_for(manifest.gene.as_deref())?;

    let have = manifest.indices(Modality::Mask);
    let missing: Vec<u32> = stack.indices.iter().copied().filter(|i| !have.contains(i)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingCounterpart(missing));
    }
    let masks = load_masks(&manifest)?;
    let mut bad = Vec::new();
    for (idx, m) in &masks {
        if m.grid().dims[0] != stack.section_dims[0] || m.grid().dims[1] != stack.section_dims[1] {
            bad.push(format!("{idx} ({}x{})", m.grid().dims[0], m.grid().dims[1]));
        }
    }
    if !bad.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "masks do not match {}x{} sections: slices {}",
            stack.section_dims[0],
            stack.section_dims[1],
            bad.join(", ")
        )));
    }
    let mut outcome = Outcome::default();
    if dry_run {
        println!("segment-import: {} masks into {}", masks.len(), stack.name);
        return Ok(outcome);
    }

    let grid = summary.grid()?;
    let mut planes = Vec::new();
    let mut indices = Vec::new();
    for (idx, chain_path) in stack.indices.iter().zip(&stack.chains) {
        let chain = read_chain(&recon_dir.join(chain_path))?;
        let (_, m) = masks.iter().find(|(i, _)| i == idx).expect("checked above");
        // rescale to section spacing so physical coordinates line up
        let m = SegmentationMask::new(
            Grid::new_2d(m.grid().dims[0], m.grid().dims[1], summary.spacing_um)?,
            m.bits().to_vec(),
        )?;
        planes.push(warp_mask(&m, &chain, &grid)?.to_values());
        indices.push(*idx);
    }
    let g3 = volume_grid(&grid, summary.indices.len(), summary.slice_thickness_um)?;
    let values = embed_values(&planes, &indices, &summary.indices, grid.len());
    let recon_mask = SegmentationMask::new(g3, values.iter().map(|v| *v >= 0.5).collect())?;

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    outcome.outputs.push(cfg.write_snapshot(out)?);
    let gene = stack.gene.clone().unwrap_or_else(|| "mask".into());
    let stem = out.join(format!("masks_{gene}_reconstruction"));
    write_mask_volume(&recon_mask, &stem)?;
    outcome.outputs.push(stem);

    let chain_path = recon_dir.join("template").join("to_reconstruction.chain.json");
    if chain_path.exists() {
        let chain = read_chain(&chain_path)?;
        let template_grid = *read_volume(&recon_dir.join("template").join(&summary.backlit.name))?.grid();
        let mapped = warp_mask(&recon_mask, &chain, &template_grid)?;
        let stem = out.join(format!("masks_{gene}_template"));
        write_mask_volume(&mapped, &stem)?;
        outcome.outputs.push(stem);
    } else {
        outcome.warn(format!(
            "no template mapping under {}; wrote reconstruction-space masks only",
            recon_dir.display()
        ));
    }
    Ok(outcome)
}
