use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::phantom::PhantomSpec;
use crate::recon::{IshConfig, ReconConfig, TemplateConfig};

/// Input locations. Relative paths resolve against the config file's
/// directory (or the working directory when no file is given).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub blockface: Option<PathBuf>,
    pub backlit: Option<PathBuf>,
    /// One stained-section manifest per gene.
    pub ish: Vec<PathBuf>,
    /// Template volume stem (`<stem>.json` + `<stem>.raw`).
    pub template: Option<PathBuf>,
    /// Directory holding a previous `reconstruct` run; defaults to the
    /// output directory.
    pub reconstruction: Option<PathBuf>,
    /// Predicted masks manifest (segment-import, evaluate).
    pub masks: Option<PathBuf>,
    /// Reference masks manifest for Dice evaluation.
    pub reference_masks: Option<PathBuf>,
    pub manual_landmarks: Option<PathBuf>,
    pub auto_landmarks: Option<PathBuf>,
    /// Feature-batch CSV for the contrastive loss.
    pub features: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 means all available cores.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub bins: usize,
    /// Temperature used when evaluating feature batches.
    pub temperature: f64,
    /// Row label for the Dice report.
    pub dice_label: String,
    pub paths: Paths,
    pub recon: ReconConfig,
    pub ish: IshConfig,
    pub template: TemplateConfig,
    pub phantom: PhantomSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            threads: 0,
            output_dir: PathBuf::from("out"),
            bins: crate::metrics::DEFAULT_BINS,
            temperature: 0.5,
            dice_label: "model vs gt*".into(),
            paths: Paths::default(),
            recon: ReconConfig::default(),
            ish: IshConfig::default(),
            template: TemplateConfig::default(),
            phantom: PhantomSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Load a config file and make its relative paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.blockface,
            &mut paths.backlit,
            &mut paths.template,
            &mut paths.reconstruction,
            &mut paths.masks,
            &mut paths.reference_masks,
            &mut paths.manual_landmarks,
            &mut paths.auto_landmarks,
            &mut paths.features,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        paths.ish.iter_mut().for_each(fix);
        fix(&mut self.output_dir);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidParameter(format!("cannot serialise config: {e}")))
    }

    /// Snapshot with the effective seed and thread count spelled out.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        out.phantom.seed = self.seed;
        if out.threads == 0 {
            out.threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        }
        out
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("resolved_config.toml");
        std::fs::write(&path, self.resolved().to_toml()?).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidParameter(format!("bins must be >= 2, got {}", self.bins)));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidParameter(format!("temperature {}", self.temperature)));
        }
        self.recon.validate()?;
        self.ish.affine.validate()?;
        self.ish.deformable.validate()?;
        self.template.affine.validate()?;
        self.template.deformable.validate()?;
        self.phantom.validate()
    }

    pub fn reconstruction_dir(&self) -> PathBuf {
        self.paths.reconstruction.clone().unwrap_or_else(|| self.output_dir.clone())
    }
}

/// The path, or an error naming the missing setting.
pub(crate) fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidParameter(format!("paths.{key} is not set")))
}

pub(crate) fn must_exist(p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Io {
            path: p.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not found"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = PipelineConfig::default();
        let text = c.to_toml().unwrap();
        let back = PipelineConfig::from_toml(&text, Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = PipelineConfig::from_toml("seed = 7\n[recon]\nsmoothing_sigma = 2.0\n", Path::new("x")).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.recon.smoothing_sigma, 2.0);
        assert_eq!(c.recon.schedule.last_iteration(), 6);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(PipelineConfig::from_toml("sead = 7\n", Path::new("x")).is_err());
    }

    #[test]
    fn resolved_snapshot_is_explicit() {
        let r = PipelineConfig::default().resolved();
        assert!(r.threads >= 1);
        assert_eq!(r.phantom.seed, r.seed);
    }
}
