//! Synthetic ground truth: a textured ellipsoidal "brain" sliced into
//! blockface, backlit and ISH-like stacks with recorded per-slice
//! perturbations, expression masks and landmarks.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::image::io::{save_mask_png, save_section_png, write_volume};
use crate::image::{Grid, Image2D, Image3D, Point, Raster, SegmentationMask};
use crate::landmarks::{write_landmarks_csv, LandmarkSet};
use crate::manifest::{Modality, SectionEntry, SectionStack, StackManifest};
use crate::transform::io::write_chain;
use crate::transform::{warp_image, Affine, DisplacementField, TransformChain};

/// Per-slice geometric perturbation ranges (uniform draws in `[-max, max]`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub max_translation_px: f64,
    pub max_rotation_deg: f64,
    pub max_shear: f64,
    /// Amplitude of a sinusoidal in-plane warp; 0 disables it.
    pub warp_amplitude_px: f64,
    pub warp_period_px: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            max_translation_px: 15.0,
            max_rotation_deg: 10.0,
            max_shear: 0.0,
            warp_amplitude_px: 0.0,
            warp_period_px: 32.0,
        }
    }
}

impl Perturbation {
    pub fn none() -> Self {
        Perturbation {
            max_translation_px: 0.0,
            max_rotation_deg: 0.0,
            max_shear: 0.0,
            warp_amplitude_px: 0.0,
            warp_period_px: 32.0,
        }
    }

    fn is_zero(&self) -> bool {
        self.max_translation_px == 0.0
            && self.max_rotation_deg == 0.0
            && self.max_shear == 0.0
            && self.warp_amplitude_px == 0.0
    }

    fn validate(&self) -> Result<()> {
        let v = [
            self.max_translation_px,
            self.max_rotation_deg,
            self.max_shear,
            self.warp_amplitude_px,
        ];
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(self.warp_period_px > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid perturbation {self:?}")));
        }
        if self.max_shear >= 0.5 {
            return Err(Error::InvalidParameter("max_shear must be < 0.5".into()));
        }
        Ok(())
    }
}

/// ISH-like modality: extra mounting perturbation, inverted gamma-mapped
/// tissue contrast with per-slice jitter, and expression blobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IshSpec {
    pub gene: String,
    pub perturbation: Perturbation,
    /// Gamma drawn per slice from this range.
    pub gamma: [f64; 2],
    /// Per-slice contrast factor drawn from `1 +- contrast_jitter`.
    pub contrast_jitter: f64,
    pub expression_blobs: usize,
    /// When false the tissue term keeps backlit polarity and unit contrast.
    pub invert: bool,
}

impl Default for IshSpec {
    fn default() -> Self {
        IshSpec {
            gene: "SYN1".into(),
            perturbation: Perturbation {
                max_translation_px: 5.0,
                max_rotation_deg: 4.0,
                max_shear: 0.02,
                warp_amplitude_px: 0.0,
                warp_period_px: 32.0,
            },
            gamma: [0.8, 1.25],
            contrast_jitter: 0.3,
            expression_blobs: 6,
            invert: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub seed: u64,
    /// Width, height, number of slices.
    pub dims: [usize; 3],
    pub spacing_um: [f64; 2],
    pub slice_thickness_um: f64,
    /// Texture blobs inside the tissue.
    pub blobs: usize,
    pub perturbation: Perturbation,
    pub ish: IshSpec,
    /// Simulated manual annotators and their placement noise (µm, per axis SD).
    pub annotators: usize,
    pub annotator_sd_um: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            seed: 1,
            dims: [128, 128, 60],
            spacing_um: [20.0, 20.0],
            slice_thickness_um: 20.0,
            blobs: 48,
            perturbation: Perturbation::default(),
            ish: IshSpec::default(),
            annotators: 3,
            annotator_sd_um: 40.0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| *d < 32) {
            return Err(Error::InvalidParameter(format!("phantom dims {:?} must be >= 32", self.dims)));
        }
        if self.spacing_um.iter().any(|s| !(*s > 0.0)) || !(self.slice_thickness_um > 0.0) {
            return Err(Error::InvalidParameter("phantom spacing must be positive".into()));
        }
        let g = self.ish.gamma;
        if !(g[0] > 0.0 && g[1] >= g[0]) || !(0.0..1.0).contains(&self.ish.contrast_jitter) {
            return Err(Error::InvalidParameter("invalid ISH intensity ranges".into()));
        }
        if !(self.annotator_sd_um >= 0.0) {
            return Err(Error::InvalidParameter("annotator_sd_um must be >= 0".into()));
        }
        self.perturbation.validate()?;
        self.ish.perturbation.validate()
    }
}

#[derive(Clone, Debug)]
pub struct PhantomTruth {
    pub volume: Image3D,
    pub expression: Image3D,
    /// Reference grid to backlit section, per slice.
    pub backlit_chains: Vec<TransformChain>,
    /// Reference grid to ISH section, per slice.
    pub ish_chains: Vec<TransformChain>,
    /// Expression masks in ISH section space.
    pub masks: Vec<SegmentationMask>,
    pub landmarks: LandmarkSet,
    /// Noisy copies of the landmarks, one per simulated annotator.
    pub annotations: Vec<LandmarkSet>,
}

#[derive(Clone, Debug)]
pub struct Phantom {
    pub spec: PhantomSpec,
    pub blockface: SectionStack,
    pub backlit: SectionStack,
    pub ish: SectionStack,
    pub truth: PhantomTruth,
}

/// Paths written by [`Phantom::write`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomFiles {
    pub blockface: PathBuf,
    pub backlit: PathBuf,
    pub ish: PathBuf,
    pub masks: PathBuf,
    pub landmarks: PathBuf,
    pub annotations: PathBuf,
    pub volume: PathBuf,
}

struct Blob {
    center: [f64; 3],
    sigma: [f64; 3],
    amplitude: f64,
}

impl Blob {
    fn at(&self, p: [f64; 3]) -> f64 {
        let q: f64 = (0..3).map(|k| ((p[k] - self.center[k]) / self.sigma[k]).powi(2)).sum();
        self.amplitude * (-0.5 * q).exp()
    }
}

/// Ellipsoid geometry in voxel coordinates.
struct Shape {
    center: [f64; 3],
    semi: [f64; 3],
}

impl Shape {
    fn new(dims: [usize; 3]) -> Self {
        let d = dims.map(|v| v as f64);
        Shape {
            center: [(d[0] - 1.0) / 2.0, (d[1] - 1.0) / 2.0, (d[2] - 1.0) / 2.0],
            semi: [0.38 * d[0], 0.32 * d[1], 0.6 * d[2]],
        }
    }

    fn radius(&self, p: [f64; 3]) -> f64 {
        (0..3)
            .map(|k| ((p[k] - self.center[k]) / self.semi[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Voxel position of normalised ellipsoid coordinates.
    fn voxel(&self, u: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|k| self.center[k] + u[k] * self.semi[k])
    }

    fn support(&self, p: [f64; 3]) -> f64 {
        1.0 / (1.0 + ((self.radius(p) - 1.0) * 15.0).exp())
    }

    fn random_inside(&self, rng: &mut ChaCha8Rng, max_r: f64) -> [f64; 3] {
        loop {
            let u: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-max_r..max_r));
            if u.iter().map(|v| v * v).sum::<f64>() < max_r * max_r {
                return self.voxel(u);
            }
        }
    }
}

/// Normalised ellipsoid positions of the ten canonical landmark points.
const LANDMARK_POSITIONS: [[f64; 3]; 10] = [
    [0.0, 0.1, -0.2],
    [0.1, 0.0, 0.0],
    [0.0, -0.2, 0.1],
    [0.0, -0.35, 0.0],
    [-0.15, 0.25, 0.3],
    [0.15, 0.25, 0.3],
    [-0.25, 0.15, 0.2],
    [0.25, 0.15, 0.2],
    [-0.3, 0.05, -0.3],
    [0.3, 0.05, -0.3],
];

fn draw(rng: &mut ChaCha8Rng, max: f64) -> f64 {
    if max > 0.0 {
        rng.gen_range(-max..=max)
    } else {
        0.0
    }
}

/// Backward perturbation chain (sinusoidal warp first, then affine about the
/// slice centre). The slice seen through it is the perturbed section.
fn perturbation_chain(rng: &mut ChaCha8Rng, p: &Perturbation, grid: &Grid) -> Result<TransformChain> {
    let theta = draw(rng, p.max_rotation_deg).to_radians();
    let tx = draw(rng, p.max_translation_px) * grid.spacing[0];
    let ty = draw(rng, p.max_translation_px) * grid.spacing[1];
    let shear = draw(rng, p.max_shear);
    let phase = [rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU)];
    if p.is_zero() {
        return Ok(TransformChain::identity(2));
    }
    let c = grid.center();
    let (s, co) = theta.sin_cos();
    let linear = [co, co * shear - s, s, s * shear + co];
    let affine = Affine::new(2, &linear, &[tx, ty], &[c[0], c[1]])?;
    let mut elements = Vec::new();
    if p.warp_amplitude_px > 0.0 {
        let k = std::f64::consts::TAU / p.warp_period_px;
        let (a, sx, sy) = (p.warp_amplitude_px, grid.spacing[0], grid.spacing[1]);
        let field = DisplacementField::from_fn(*grid, |q| {
            [
                a * sx * (k * q[1] / sy + phase[0]).sin(),
                a * sy * (k * q[0] / sx + phase[1]).sin(),
                0.0,
            ]
        });
        elements.push(field.into());
    }
    elements.push(affine.into());
    TransformChain::new(2, elements)
}

/// Build the phantom described by `spec`. Deterministic in `spec.seed`.
pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dims = spec.dims;
    let spacing3 = [spec.spacing_um[0], spec.spacing_um[1], spec.slice_thickness_um];
    let shape = Shape::new(dims);
    let minor = dims[0].min(dims[1]) as f64;

    let blobs: Vec<Blob> = (0..spec.blobs)
        .map(|i| {
            // alternate coarse and fine structures so every scale has texture
            let scale = if i % 2 == 0 { rng.gen_range(0.05..0.12) } else { rng.gen_range(0.02..0.05) };
            Blob {
                center: shape.random_inside(&mut rng, 0.85),
                sigma: [
                    scale * minor * rng.gen_range(0.6..1.6),
                    scale * minor * rng.gen_range(0.6..1.6),
                    (scale * dims[2] as f64 * rng.gen_range(0.8..2.0)).max(1.5),
                ],
                amplitude: rng.gen_range(-0.3..0.45),
            }
        })
        .collect();
    let expression_blobs: Vec<Blob> = (0..spec.ish.expression_blobs)
        .map(|_| Blob {
            center: shape.random_inside(&mut rng, 0.6),
            sigma: [
                rng.gen_range(0.03..0.06) * minor,
                rng.gen_range(0.03..0.06) * minor,
                rng.gen_range(0.04..0.1) * dims[2] as f64,
            ],
            amplitude: 1.4,
        })
        .collect();

    let tissue = |x: usize, y: usize, z: usize| -> (f64, f64) {
        let p = [x as f64, y as f64, z as f64];
        let support = shape.support(p);
        let r = shape.radius(p);
        let cortex = 0.25 * (-((r - 0.85) / 0.06).powi(2)).exp();
        let tex: f64 = blobs.iter().map(|b| b.at(p)).sum();
        (support * (0.35 + cortex + tex).clamp(0.05, 1.0), support)
    };
    let volume = Image3D::from_fn(dims, spacing3, |x, y, z| tissue(x, y, z).0)?;
    let support = Image3D::from_fn(dims, spacing3, |x, y, z| tissue(x, y, z).1)?;
    let expression = Image3D::from_fn(dims, spacing3, |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        (shape.support(p) * expression_blobs.iter().map(|b| b.at(p)).sum::<f64>()).clamp(0.0, 1.0)
    })?;

    let slice_grid = *volume.slice(0).grid();
    let mut bf = Vec::new();
    let mut bl = Vec::new();
    let mut ish = Vec::new();
    let mut masks = Vec::new();
    let mut bl_truth = Vec::new();
    let mut ish_truth = Vec::new();
    for z in 0..dims[2] {
        let orig = volume.slice(z);
        let p_bl = perturbation_chain(&mut rng, &spec.perturbation, &slice_grid)?;
        let h_ish = perturbation_chain(&mut rng, &spec.ish.perturbation, &slice_grid)?;
        let gamma = rng.gen_range(spec.ish.gamma[0]..=spec.ish.gamma[1]);
        let contrast = 1.0 + draw(&mut rng, spec.ish.contrast_jitter);

        let ish_orig = {
            let (s, e) = (support.slice(z), expression.slice(z));
            let values = orig
                .pixels()
                .iter()
                .zip(s.pixels())
                .zip(e.pixels())
                .map(|((t, s), e)| {
                    let tissue = if spec.ish.invert {
                        0.05 + 0.5 * contrast * (1.0 - t).max(0.0).powf(gamma)
                    } else {
                        *t
                    };
                    (s * tissue + 0.45 * s * e).clamp(0.0, 1.0)
                })
                .collect();
            Image2D::from_parts(slice_grid, values)?
        };
        // ISH sections carry the backlit perturbation plus their own mounting error
        let p_ish = crate::transform::compose(&p_bl, &h_ish)?;
        bl.push(warp_image(&orig, &p_bl, &slice_grid)?);
        ish.push(warp_image(&ish_orig, &p_ish, &slice_grid)?);
        masks.push(SegmentationMask::threshold(&warp_image(&expression.slice(z), &p_ish, &slice_grid)?, 0.5));
        bl_truth.push(p_bl.inverse()?);
        ish_truth.push(p_ish.inverse()?);
        bf.push(orig);
    }

    let points: [Point; 10] = LANDMARK_POSITIONS.map(|u| {
        let v = shape.voxel(u);
        let k = v[2].round().clamp(0.0, dims[2] as f64 - 1.0);
        [v[0] * spacing3[0], v[1] * spacing3[1], k * spacing3[2]]
    });
    let landmarks = LandmarkSet::canonical("truth", &points);
    let annotations = (0..spec.annotators)
        .map(|a| {
            let noisy: [Point; 10] = points.map(|p| {
                let mut q = p;
                for v in q.iter_mut() {
                    *v += spec.annotator_sd_um * gaussian(&mut rng);
                }
                q
            });
            LandmarkSet::canonical(format!("annotator{}", a + 1), &noisy)
        })
        .collect();

    let indices: Vec<u32> = (0..dims[2] as u32).collect();
    let t = spec.slice_thickness_um;
    Ok(Phantom {
        spec: spec.clone(),
        blockface: SectionStack::new(indices.clone(), bf, t)?,
        backlit: SectionStack::new(indices.clone(), bl, t)?,
        ish: SectionStack::new(indices, ish, t)?,
        truth: PhantomTruth {
            volume,
            expression,
            backlit_chains: bl_truth,
            ish_chains: ish_truth,
            masks,
            landmarks,
            annotations,
        },
    })
}

/// Standard normal draw (Box–Muller).
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl Phantom {
    /// Write section PNGs, manifests, ground-truth chains, volumes and
    /// landmark CSVs under `dir`. Backlit and ISH files are stored inverted
    /// (dark tissue on a bright slide) and flagged so in their manifests.
    pub fn write(&self, dir: &Path) -> Result<PhantomFiles> {
        let sub = |name: &str| -> Result<PathBuf> {
            let p = dir.join(name);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
            Ok(p)
        };
        let sections = sub("sections")?;
        let truth = sub("truth")?;
        let gene = self.spec.ish.gene.clone();
        let sp = self.spec.spacing_um;
        let thick = self.spec.slice_thickness_um;

        let write_stack = |stack: &SectionStack, modality: Modality, prefix: &str, invert: bool| -> Result<PathBuf> {
            let mut m = StackManifest::new(sp, thick);
            m.invert = invert;
            if modality == Modality::Ish {
                m.gene = Some(gene.clone());
            }
            for (i, img) in stack.indices.iter().zip(&stack.sections) {
                let name = format!("{prefix}_{i:03}.png");
                save_section_png(img, &sections.join(&name), invert)?;
                m.sections.push(SectionEntry {
                    index: *i,
                    modality,
                    path: PathBuf::from("sections").join(name),
                    bit_depth: Some(16),
                });
            }
            let path = dir.join(format!("{prefix}.json"));
            m.save(&path)?;
            Ok(path)
        };
        let blockface = write_stack(&self.blockface, Modality::Blockface, "blockface", false)?;
        let backlit = write_stack(&self.backlit, Modality::Backlit, "backlit", true)?;
        let ish = write_stack(&self.ish, Modality::Ish, &format!("ish_{gene}"), true)?;

        let mut mm = StackManifest::new(sp, thick);
        mm.gene = Some(gene.clone());
        for (i, mask) in self.ish.indices.iter().zip(&self.truth.masks) {
            let name = format!("mask_{gene}_{i:03}.png");
            save_mask_png(mask, &sections.join(&name))?;
            mm.sections.push(SectionEntry {
                index: *i,
                modality: Modality::Mask,
                path: PathBuf::from("sections").join(name),
                bit_depth: Some(8),
            });
        }
        let masks = dir.join(format!("masks_{gene}.json"));
        mm.save(&masks)?;

        for (i, (b, h)) in self.truth.backlit_chains.iter().zip(&self.truth.ish_chains).enumerate() {
            write_chain(b, &truth, &format!("backlit_{i:03}"))?;
            write_chain(h, &truth, &format!("ish_{i:03}"))?;
        }
        let volume = truth.join("volume");
        write_volume(&self.truth.volume, &volume)?;
        write_volume(&self.truth.expression, &truth.join("expression"))?;
        let landmarks = dir.join("landmarks_truth.csv");
        write_landmarks_csv(std::slice::from_ref(&self.truth.landmarks), &landmarks)?;
        let annotations = dir.join("landmarks_manual.csv");
        write_landmarks_csv(&self.truth.annotations, &annotations)?;
        Ok(PhantomFiles {
            blockface,
            backlit,
            ish,
            masks,
            landmarks,
            annotations,
            volume,
        })
    }
}

fn in_pixels(a: Point, b: Point, grid: &Grid) -> f64 {
    ((a[0] - b[0]) / grid.spacing[0]).hypot((a[1] - b[1]) / grid.spacing[1])
}

/// Mean distance (pixels) between the four grid corners mapped by
/// `recovered` and by `truth`, over all slices.
pub fn mean_corner_displacement(recovered: &[TransformChain], truth: &[TransformChain], grid: &Grid) -> f64 {
    let (w, h) = (grid.dims[0] - 1, grid.dims[1] - 1);
    let corners = [grid.point(0, 0, 0), grid.point(w, 0, 0), grid.point(0, h, 0), grid.point(w, h, 0)];
    let mut total = 0.0;
    for (r, t) in recovered.iter().zip(truth) {
        for c in corners {
            total += in_pixels(r.apply(c), t.apply(c), grid);
        }
    }
    total / (4 * recovered.len()) as f64
}

/// Mean distance (pixels) between landmark points mapped into section
/// space by `recovered` and by `truth`; each point uses the slice nearest
/// its depth.
pub fn mean_landmark_error(
    recovered: &[TransformChain],
    truth: &[TransformChain],
    landmarks: &LandmarkSet,
    grid: &Grid,
    slice_thickness: f64,
) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for lm in landmarks.landmarks() {
        for p in &lm.points {
            let k = ((p[2] / slice_thickness).round().max(0.0) as usize).min(recovered.len() - 1);
            let q = [p[0], p[1], 0.0];
            total += in_pixels(recovered[k].apply(q), truth[k].apply(q), grid);
            n += 1;
        }
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PhantomSpec {
        PhantomSpec {
            dims: [48, 40, 32],
            blobs: 12,
            ..Default::default()
        }
    }

    #[test]
    fn every_slice_has_tissue() {
        let p = generate(&small()).unwrap();
        for s in &p.blockface.sections {
            assert!(s.pixels().iter().any(|v| *v > 0.2));
        }
    }

    #[test]
    fn zero_perturbation_keeps_backlit_equal_to_blockface() {
        let spec = PhantomSpec {
            perturbation: Perturbation::none(),
            ..small()
        };
        let p = generate(&spec).unwrap();
        assert_eq!(p.backlit.sections, p.blockface.sections);
    }

    #[test]
    fn degenerate_spec_errors() {
        let spec = PhantomSpec {
            dims: [16, 64, 64],
            ..Default::default()
        };
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn landmarks_inside_tissue() {
        let p = generate(&small()).unwrap();
        let v = &p.truth.volume;
        for lm in p.truth.landmarks.landmarks() {
            for q in &lm.points {
                assert!(v.sample_physical(*q) > 0.04, "{} outside tissue", lm.name);
            }
        }
    }
}
