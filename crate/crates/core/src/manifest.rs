//! Stack manifests: the ordered list of section files for each modality.
//!
//! JSON layout:
//!
//! ```json
//! {
//!   "sections": [{"index": 0, "modality": "backlit", "path": "bl_000.png"}],
//!   "spacing_um": [20.0, 20.0],
//!   "slice_thickness_um": 50.0,
//!   "gene": "PVALB"
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::image::io::load_section;
use crate::image::Image2D;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Blockface,
    Backlit,
    Ish,
    Mask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionEntry {
    pub index: u32,
    pub modality: Modality,
    pub path: PathBuf,
    /// Bit depth of the file as acquired, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit_depth: Option<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub sections: Vec<SectionEntry>,
    pub spacing_um: [f64; 2],
    pub slice_thickness_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gene: Option<String>,
    /// Grayscale files show dark tissue on a bright slide and are inverted on load.
    #[serde(default)]
    pub invert: bool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl StackManifest {
    pub fn new(spacing_um: [f64; 2], slice_thickness_um: f64) -> Self {
        StackManifest {
            sections: Vec::new(),
            spacing_um,
            slice_thickness_um,
            gene: None,
            invert: false,
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut m: StackManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(io_err(path))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slice_thickness_um > 0.0) || self.spacing_um.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Manifest("spacing and slice thickness must be positive".into()));
        }
        for modality in [Modality::Blockface, Modality::Backlit, Modality::Ish, Modality::Mask] {
            let idx = self.indices(modality);
            if let Some(w) = idx.windows(2).find(|w| w[1] <= w[0]) {
                return Err(Error::Manifest(format!(
                    "{modality:?} slice indices not strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if !self.indices(Modality::Backlit).is_empty() {
            check_counterparts(self, Modality::Ish, self, Modality::Backlit)?;
        }
        Ok(())
    }

    pub fn entries(&self, modality: Modality) -> impl Iterator<Item = &SectionEntry> {
        self.sections.iter().filter(move |e| e.modality == modality)
    }

    pub fn indices(&self, modality: Modality) -> Vec<u32> {
        self.entries(modality).map(|e| e.index).collect()
    }

    pub fn resolve(&self, entry: &SectionEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// Read every section of one modality into memory.
    pub fn load_stack(&self, modality: Modality) -> Result<SectionStack> {
        let mut stack = SectionStack {
            indices: Vec::new(),
            sections: Vec::new(),
            slice_thickness: self.slice_thickness_um,
        };
        for e in self.entries(modality) {
            stack.indices.push(e.index);
            stack.sections.push(load_section(&self.resolve(e), self.spacing_um, self.invert)?);
        }
        if stack.sections.is_empty() {
            return Err(Error::Manifest(format!("no {modality:?} sections in manifest")));
        }
        Ok(stack)
    }
}

/// Every `wanted` index in `a` must have a `have` entry with the same index in `b`.
pub fn check_counterparts(
    a: &StackManifest,
    wanted: Modality,
    b: &StackManifest,
    have: Modality,
) -> Result<()> {
    let present: BTreeSet<u32> = b.indices(have).into_iter().collect();
    let missing: Vec<u32> = a.indices(wanted).into_iter().filter(|i| !present.contains(i)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingCounterpart(missing))
    }
}

/// Sections of one modality held in memory, in slice order.
#[derive(Clone, Debug)]
pub struct SectionStack {
    pub indices: Vec<u32>,
    pub sections: Vec<Image2D>,
    pub slice_thickness: f64,
}

impl SectionStack {
    pub fn new(indices: Vec<u32>, sections: Vec<Image2D>, slice_thickness: f64) -> Result<Self> {
        if indices.len() != sections.len() {
            return Err(Error::Manifest("index and section counts differ".into()));
        }
        if let Some(w) = indices.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Manifest(format!(
                "slice indices not strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(SectionStack {
            indices,
            sections,
            slice_thickness,
        })
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn position(&self, index: u32) -> Option<usize> {
        self.indices.iter().position(|i| *i == index)
    }
}
