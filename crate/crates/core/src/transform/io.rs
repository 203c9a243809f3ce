//! Transform files.
//!
//! * Affine: four text lines: `dim d`, the row-major `d x d` matrix, the
//!   translation, the centre.
//! * Field: `<stem>.json` header `{dims, spacing_um, components}` plus
//!   `<stem>.raw` little-endian float32 vectors, x fastest, components
//!   interleaved per point.
//! * Chain: `<stem>.chain.json` listing element files in application order.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Affine, DisplacementField, Transform, TransformChain};
use crate::error::{io_err, Error, Result};
use crate::image::io::read_f32_le;
use crate::image::Grid;

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

pub fn format_affine(a: &Affine) -> String {
    format!(
        "dim {}\n{}\n{}\n{}\n",
        a.dim(),
        join(&a.linear()),
        join(&a.translation_vec()),
        join(&a.center())
    )
}

pub fn parse_affine(text: &str, path: &Path) -> Result<Affine> {
    let err = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| err("empty affine file".into()))?;
    let dim: usize = header
        .strip_prefix("dim")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| err(format!("bad header line {header:?}")))?;
    let mut numbers = |expected: usize, what: &str| -> Result<Vec<f64>> {
        let line = lines.next().ok_or_else(|| err(format!("missing {what} line")))?;
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| err(format!("{what}: {e}"))))
            .collect::<Result<_>>()?;
        if v.len() != expected {
            return Err(err(format!("{what}: expected {expected} values, found {}", v.len())));
        }
        Ok(v)
    };
    let linear = numbers(dim * dim, "matrix")?;
    let translation = numbers(dim, "translation")?;
    let center = numbers(dim, "center")?;
    Affine::new(dim, &linear, &translation, &center)
}

pub fn write_affine(a: &Affine, path: &Path) -> Result<()> {
    fs::write(path, format_affine(a)).map_err(io_err(path))
}

pub fn read_affine(path: &Path) -> Result<Affine> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_affine(&text, path)
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    dims: Vec<usize>,
    spacing_um: Vec<f64>,
    components: String,
}

pub fn write_field(f: &DisplacementField, stem: &Path) -> Result<()> {
    let g = f.grid();
    let n = g.ndim;
    let header = FieldHeader {
        dims: g.dims[..n].to_vec(),
        spacing_um: g.spacing[..n].to_vec(),
        components: "xyz"[..n].to_string(),
    };
    let json = stem.with_extension("json");
    let raw = stem.with_extension("raw");
    fs::write(&json, serde_json::to_string_pretty(&header)?).map_err(io_err(&json))?;
    let bytes: Vec<u8> = f
        .vectors()
        .iter()
        .flat_map(|v| v[..n].iter().flat_map(|c| (*c as f32).to_le_bytes()).collect::<Vec<_>>())
        .collect();
    fs::write(&raw, bytes).map_err(io_err(&raw))
}

pub fn read_field(stem: &Path) -> Result<DisplacementField> {
    let json = stem.with_extension("json");
    let raw = stem.with_extension("raw");
    let text = fs::read_to_string(&json).map_err(io_err(&json))?;
    let h: FieldHeader = serde_json::from_str(&text)?;
    let n = h.dims.len();
    if !(n == 2 || n == 3) || h.spacing_um.len() != n || h.components.len() != n {
        return Err(Error::Parse {
            path: json,
            msg: "inconsistent field header".into(),
        });
    }
    let grid = if n == 2 {
        Grid::new_2d(h.dims[0], h.dims[1], [h.spacing_um[0], h.spacing_um[1]])?
    } else {
        Grid::new_3d([h.dims[0], h.dims[1], h.dims[2]], [h.spacing_um[0], h.spacing_um[1], h.spacing_um[2]])?
    };
    let flat = read_f32_le(&raw, grid.len() * n)?;
    let vectors = flat
        .chunks_exact(n)
        .map(|c| {
            let mut v = [0.0; 3];
            v[..n].copy_from_slice(c);
            v
        })
        .collect();
    DisplacementField::new(grid, vectors)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ElementRef {
    Affine { path: PathBuf },
    Field { path: PathBuf },
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainFile {
    dim: usize,
    elements: Vec<ElementRef>,
}

/// Write `<dir>/<stem>.chain.json` and one file per element next to it.
pub fn write_chain(chain: &TransformChain, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut elements = Vec::new();
    for (k, t) in chain.elements().iter().enumerate() {
        match t {
            Transform::Affine(a) => {
                let name = PathBuf::from(format!("{stem}_{k}.affine"));
                write_affine(a, &dir.join(&name))?;
                elements.push(ElementRef::Affine { path: name });
            }
            Transform::Field(f) => {
                let name = PathBuf::from(format!("{stem}_{k}_field"));
                write_field(f, &dir.join(&name))?;
                elements.push(ElementRef::Field { path: name });
            }
        }
    }
    let path = dir.join(format!("{stem}.chain.json"));
    let file = ChainFile {
        dim: chain.dim(),
        elements,
    };
    fs::write(&path, serde_json::to_string_pretty(&file)?).map_err(io_err(&path))?;
    Ok(path)
}

pub fn read_chain(path: &Path) -> Result<TransformChain> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: ChainFile = serde_json::from_str(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let elements = file
        .elements
        .iter()
        .map(|e| {
            Ok(match e {
                ElementRef::Affine { path } => Transform::Affine(read_affine(&dir.join(path))?),
                ElementRef::Field { path } => Transform::Field(Arc::new(read_field(&dir.join(path))?)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TransformChain::new(file.dim, elements)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_text_layout() {
        let a = Affine::new(2, &[1.0, 0.5, 0.0, 2.0], &[3.0, -4.0], &[10.0, 20.0]).unwrap();
        assert_eq!(format_affine(&a), "dim 2\n1 0.5 0 2\n3 -4\n10 20\n");
        let back = parse_affine(&format_affine(&a), Path::new("x")).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn malformed_affine_rejected() {
        assert!(parse_affine("dim 2\n1 0 0\n0 0\n0 0\n", Path::new("x")).is_err());
        assert!(parse_affine("2\n1 0 0 1\n0 0\n0 0\n", Path::new("x")).is_err());
    }

    #[test]
    fn chain_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new_2d(6, 5, [2.0, 2.0]).unwrap();
        let f = DisplacementField::from_fn(g, |p| [0.25 * p[0], -0.5, 0.0]);
        let chain = TransformChain::new(
            2,
            vec![f.into(), Affine::rotation_2d(0.25, [4.0, 4.0]).into()],
        )
        .unwrap();
        let path = write_chain(&chain, dir.path(), "slice_0003").unwrap();
        let back = read_chain(&path).unwrap();
        for p in [[1.0, 2.0, 0.0], [7.5, 3.0, 0.0]] {
            let (a, b) = (chain.apply(p), back.apply(p));
            assert!((a[0] - b[0]).abs() < 1e-5 && (a[1] - b[1]).abs() < 1e-5);
        }
    }
}
