//! Named anatomical landmarks, mapping through transform chains, and
//! annotator agreement reports.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::image::{Grid, Point};
use crate::transform::TransformChain;

/// Report unit: 100 µm.
pub const REPORT_UNIT_UM: f64 = 100.0;

/// The template landmark set: name and number of points.
pub const CANONICAL_LANDMARKS: [(&str, usize); 7] = [
    ("anterior commissure", 1),
    ("anterior thalamus", 1),
    ("midline", 1),
    ("CC", 1),
    ("MB", 2),
    ("STN", 2),
    ("intersection ALIC/AC", 2),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Landmark {
    pub name: String,
    /// One or two physical points (µm).
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    pub annotator: String,
    landmarks: Vec<Landmark>,
}

impl LandmarkSet {
    pub fn new(annotator: impl Into<String>, landmarks: Vec<Landmark>) -> Result<Self> {
        let mut seen = HashSet::new();
        for lm in &landmarks {
            if !seen.insert(lm.name.as_str()) {
                return Err(Error::Landmarks(format!("duplicate landmark '{}'", lm.name)));
            }
            if !(1..=2).contains(&lm.points.len()) {
                return Err(Error::Landmarks(format!(
                    "landmark '{}' has {} points, expected 1 or 2",
                    lm.name,
                    lm.points.len()
                )));
            }
            if lm.points.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Landmarks(format!("landmark '{}' has non-finite coordinates", lm.name)));
            }
        }
        Ok(LandmarkSet {
            annotator: annotator.into(),
            landmarks,
        })
    }

    /// Canonical set from the ten points in [`CANONICAL_LANDMARKS`] order.
    pub fn canonical(annotator: impl Into<String>, points: &[Point; 10]) -> Self {
        let mut it = points.iter();
        let landmarks = CANONICAL_LANDMARKS
            .iter()
            .map(|(name, n)| Landmark {
                name: name.to_string(),
                points: it.by_ref().take(*n).copied().collect(),
            })
            .collect();
        LandmarkSet::new(annotator, landmarks).expect("canonical names are unique")
    }

    pub fn landmarks(&self) -> &[Landmark] {
        &self.landmarks
    }

    pub fn get(&self, name: &str) -> Option<&Landmark> {
        self.landmarks.iter().find(|l| l.name == name)
    }

    pub fn point_count(&self) -> usize {
        self.landmarks.iter().map(|l| l.points.len()).sum()
    }

    /// Same set with every point replaced by `f(point)`.
    pub fn map_points(&self, mut f: impl FnMut(Point) -> Result<Point>) -> Result<LandmarkSet> {
        let landmarks = self
            .landmarks
            .iter()
            .map(|l| {
                Ok(Landmark {
                    name: l.name.clone(),
                    points: l.points.iter().map(|p| f(*p)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LandmarkSet {
            annotator: self.annotator.clone(),
            landmarks,
        })
    }
}

/// Which way to push points through a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `chain.apply`: reference space to moving space.
    Forward,
    /// Fixed-point inverse of every element: moving space back to reference.
    Inverse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MappedLandmarks {
    pub set: LandmarkSet,
    /// Landmarks with at least one point outside `bounds`.
    pub outside: Vec<String>,
}

/// Push every point through a 3D chain. Points landing outside `bounds`
/// are kept and listed in `outside`.
pub fn map_landmarks(
    lm: &LandmarkSet,
    chain: &TransformChain,
    direction: Direction,
    bounds: Option<&Grid>,
) -> Result<MappedLandmarks> {
    if chain.dim() != 3 {
        return Err(Error::DimensionMismatch(format!("landmarks need a 3D chain, got {}D", chain.dim())));
    }
    let set = lm.map_points(|p| match direction {
        Direction::Forward => Ok(chain.apply(p)),
        Direction::Inverse => chain.apply_inverse(p),
    })?;
    let outside = match bounds {
        None => Vec::new(),
        Some(g) => set
            .landmarks
            .iter()
            .filter(|l| l.points.iter().any(|p| !g.contains_index(g.to_index(*p))))
            .map(|l| l.name.clone())
            .collect(),
    };
    for name in &outside {
        log::warn!("landmark '{name}' maps outside the volume");
    }
    Ok(MappedLandmarks { set, outside })
}

fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Per-landmark distance in 100 µm units, point distances averaged within a
/// landmark. Order follows `a`.
pub fn pairwise_displacement(a: &LandmarkSet, b: &LandmarkSet) -> Result<Vec<(String, f64)>> {
    if a.landmarks.len() != b.landmarks.len() {
        return Err(Error::Landmarks(format!(
            "sets '{}' and '{}' have {} and {} landmarks",
            a.annotator,
            b.annotator,
            a.landmarks.len(),
            b.landmarks.len()
        )));
    }
    a.landmarks
        .iter()
        .map(|la| {
            let lb = b
                .get(&la.name)
                .ok_or_else(|| Error::Landmarks(format!("'{}' missing from set '{}'", la.name, b.annotator)))?;
            if lb.points.len() != la.points.len() {
                return Err(Error::Landmarks(format!("'{}' has mismatched point counts", la.name)));
            }
            let mean = la.points.iter().zip(&lb.points).map(|(p, q)| distance(*p, *q)).sum::<f64>()
                / la.points.len() as f64;
            Ok((la.name.clone(), mean / REPORT_UNIT_UM))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "manual-manual")]
    ManualManual,
    #[serde(rename = "manual-auto")]
    ManualAuto,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::ManualManual => "manual-manual",
            Mode::ManualAuto => "manual-auto",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub landmark: String,
    pub mode: Mode,
    pub displacement_100um: f64,
}

/// Best manual-manual and median manual-auto displacement per landmark,
/// each list sorted ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplacementReport {
    pub manual_manual: Vec<ReportEntry>,
    pub manual_auto: Vec<ReportEntry>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sorted(mut v: Vec<ReportEntry>) -> Vec<ReportEntry> {
    v.sort_by(|a, b| {
        a.displacement_100um
            .total_cmp(&b.displacement_100um)
            .then_with(|| a.landmark.cmp(&b.landmark))
    });
    v
}

/// Compare manual annotations with each other (minimum over annotator pairs)
/// and with the automatic mapping (median over annotators).
pub fn agreement_report(manual: &[LandmarkSet], auto: &LandmarkSet) -> Result<DisplacementReport> {
    if manual.len() < 2 {
        return Err(Error::Landmarks(format!("need at least 2 manual sets, got {}", manual.len())));
    }
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for i in 0..manual.len() {
        for j in i + 1..manual.len() {
            for (name, d) in pairwise_displacement(&manual[i], &manual[j])? {
                let e = best.entry(name).or_insert(f64::INFINITY);
                *e = e.min(d);
            }
        }
    }
    let mut to_auto: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for m in manual {
        for (name, d) in pairwise_displacement(m, auto)? {
            to_auto.entry(name).or_default().push(d);
        }
    }
    Ok(DisplacementReport {
        manual_manual: sorted(
            best.into_iter()
                .map(|(landmark, d)| ReportEntry {
                    landmark,
                    mode: Mode::ManualManual,
                    displacement_100um: d,
                })
                .collect(),
        ),
        manual_auto: sorted(
            to_auto
                .into_iter()
                .map(|(landmark, mut d)| ReportEntry {
                    landmark,
                    mode: Mode::ManualAuto,
                    displacement_100um: median(&mut d),
                })
                .collect(),
        ),
    })
}

impl DisplacementReport {
    pub fn entries(&self) -> impl Iterator<Item = &ReportEntry> {
        self.manual_manual.iter().chain(&self.manual_auto)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries().collect::<Vec<_>>())?)
    }

    /// Plain-text table, one block per mode, smallest displacement first.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (title, rows) in [("manual-manual (best)", &self.manual_manual), ("manual-auto (median)", &self.manual_auto)] {
            let _ = writeln!(out, "{title}");
            for r in rows {
                let _ = writeln!(out, "  {:<24} {:>8.3}", r.landmark, r.displacement_100um);
            }
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    name: String,
    point_index: usize,
    x_um: f64,
    y_um: f64,
    z_um: f64,
    annotator: String,
}

/// Read `name,point_index,x_um,y_um,z_um,annotator` rows, one set per
/// annotator in order of first appearance.
pub fn read_landmarks_csv(path: &Path) -> Result<Vec<LandmarkSet>> {
    let parse = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse(e.to_string()))?;
    let mut order: Vec<String> = Vec::new();
    let mut by_annotator: BTreeMap<String, Vec<(String, usize, Point)>> = BTreeMap::new();
    for row in reader.deserialize::<CsvRow>() {
        let r = row.map_err(|e| parse(e.to_string()))?;
        if !by_annotator.contains_key(&r.annotator) {
            order.push(r.annotator.clone());
        }
        by_annotator
            .entry(r.annotator)
            .or_default()
            .push((r.name, r.point_index, [r.x_um, r.y_um, r.z_um]));
    }
    order
        .into_iter()
        .map(|annotator| {
            let rows = by_annotator.remove(&annotator).expect("recorded annotator");
            let mut names: Vec<String> = Vec::new();
            let mut points: BTreeMap<String, Vec<(usize, Point)>> = BTreeMap::new();
            for (name, idx, p) in rows {
                if !points.contains_key(&name) {
                    names.push(name.clone());
                }
                points.entry(name).or_default().push((idx, p));
            }
            let landmarks = names
                .into_iter()
                .map(|name| {
                    let mut pts = points.remove(&name).expect("recorded name");
                    pts.sort_by_key(|(i, _)| *i);
                    if pts.iter().enumerate().any(|(k, (i, _))| *i != k) {
                        return Err(parse(format!("landmark '{name}' of '{annotator}' has bad point indices")));
                    }
                    Ok(Landmark {
                        name,
                        points: pts.into_iter().map(|(_, p)| p).collect(),
                    })
                })
                .collect::<Result<_>>()?;
            LandmarkSet::new(annotator, landmarks)
        })
        .collect()
}

pub fn write_landmarks_csv(sets: &[LandmarkSet], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    for set in sets {
        for lm in &set.landmarks {
            for (i, p) in lm.points.iter().enumerate() {
                w.serialize(CsvRow {
                    name: lm.name.clone(),
                    point_index: i,
                    x_um: p[0],
                    y_um: p[1],
                    z_um: p[2],
                    annotator: set.annotator.clone(),
                })
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    msg: e.to_string(),
                })?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}
