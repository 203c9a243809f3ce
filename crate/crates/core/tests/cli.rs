use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use histostack::image::io::{read_mask_volume, save_mask_png};
use histostack::image::SegmentationMask;
use histostack::manifest::StackManifest;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histostack"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "seed = 3\nthreads = 1\n\n[phantom]\ndims = [40, 40, 32]\nblobs = 10\n";

/// A phantom plus one reconstruction, shared by every test that needs it.
struct Study {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Study {
    fn pipeline(&self) -> PathBuf {
        self.root.join("pipeline.toml")
    }
    fn recon(&self) -> PathBuf {
        self.root.join("reconstruction")
    }
    fn masks(&self) -> StackManifest {
        let p = fs::read_dir(&self.root)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.file_name().unwrap().to_str().unwrap().starts_with("masks_"))
            .unwrap();
        StackManifest::load(&p).unwrap()
    }
}

fn study() -> &'static Study {
    static S: OnceLock<Study> = OnceLock::new();
    S.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("study");
        let cfg = dir.path().join("small.toml");
        fs::write(&cfg, SMALL).unwrap();
        let o = run(&["--config", s(&cfg), "--output-dir", s(&root), "phantom"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let study = Study { _dir: dir, root };
        let o = run(&["--config", s(&study.pipeline()), "reconstruct"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        study
    })
}

/// Copy of the mask manifest with its sections rewritten by `edit`.
fn edited_masks(dir: &Path, edit: impl Fn(usize, &SegmentationMask) -> Option<SegmentationMask>) -> PathBuf {
    let src = study().masks();
    let mut m = src.clone();
    m.sections.clear();
    for (k, e) in src.sections.iter().enumerate() {
        let mask = histostack::image::io::load_mask_png(&src.resolve(e)).unwrap();
        if let Some(new) = edit(k, &mask) {
            let name = format!("m_{k:03}.png");
            save_mask_png(&new, &dir.join(&name)).unwrap();
            let mut e = e.clone();
            e.path = name.into();
            m.sections.push(e);
        }
    }
    let p = dir.join("masks.json");
    m.save(&p).unwrap();
    p
}

#[test]
fn reconstruct_writes_the_documented_layout() {
    let r = study().recon();
    for p in ["reconstruction.json", "resolved_config.toml", "backlit/iterations.jsonl", "backlit/chains/slice_0000.chain.json"] {
        assert!(r.join(p).exists(), "{p}");
    }
    let ish = fs::read_dir(&r).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_str().unwrap().starts_with("ish_"));
    assert_eq!(ish.count(), 1);
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = run(&["--config", s(&study().pipeline()), "--output-dir", s(&out), "--dry-run", "reconstruct"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("reconstruct: 32 back-lit sections"));
    assert!(!out.exists());
    let o = run(&["--output-dir", s(&out), "--dry-run", "phantom"]);
    assert_eq!(code(&o), 0);
    assert!(!out.exists());
}

#[test]
fn missing_blockface_is_a_hard_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--output-dir", s(dir.path()), "reconstruct", "--blockface", "/no/such/bf.json", "--backlit", "/no/such/bl.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/no/such/bf.json"), "{}", stderr(&o));
    let o = run(&["--output-dir", s(dir.path()), "reconstruct"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("paths.blockface"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seeed = 4\n").unwrap();
    let o = run(&["--config", s(&cfg), "phantom"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seeed"), "{}", stderr(&o));
}

#[test]
fn map_template_needs_a_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--output-dir",
        s(dir.path()),
        "map-template",
        "--template",
        s(&study().root.join("truth/volume")),
        "--reconstruction",
        s(&dir.path().join("empty")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("reconstruction.json"), "{}", stderr(&o));
}

#[test]
fn evaluate_on_the_phantom_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--config", s(&study().pipeline()), "--output-dir", s(dir.path()), "evaluate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("evaluation.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("manual-auto"));
}

#[test]
fn evaluate_warns_on_mismatched_mask_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = edited_masks(dir.path(), |k, m| {
        Some(if k == 2 { SegmentationMask::new_2d(10, 10, vec![true; 100]).unwrap() } else { m.clone() })
    });
    let o = run(&[
        "--config",
        s(&study().pipeline()),
        "--output-dir",
        s(&dir.path().join("eval")),
        "evaluate",
        "--reference-masks",
        s(&bad),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("slice 2"), "{}", stderr(&o));
}

#[test]
fn segment_import_without_template_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--config",
        s(&study().pipeline()),
        "--output-dir",
        s(dir.path()),
        "segment-import",
        "--reconstruction",
        s(&study().recon()),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let gene = study().masks().gene.unwrap();
    let vol = read_mask_volume(&dir.path().join(format!("masks_{gene}_reconstruction"))).unwrap();
    assert_eq!(vol.grid().dims, [40, 40, 32]);
    assert!(vol.count() > 0);
}

#[test]
fn empty_masks_import_as_an_empty_volume() {
    let dir = tempfile::tempdir().unwrap();
    let zeros = edited_masks(dir.path(), |_, m| Some(SegmentationMask::zeros(*m.grid())));
    let out = dir.path().join("out");
    let o = run(&[
        "--config",
        s(&study().pipeline()),
        "--output-dir",
        s(&out),
        "segment-import",
        "--masks",
        s(&zeros),
        "--reconstruction",
        s(&study().recon()),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let gene = study().masks().gene.unwrap();
    assert_eq!(read_mask_volume(&out.join(format!("masks_{gene}_reconstruction"))).unwrap().count(), 0);
}

#[test]
fn segment_import_rejects_missing_and_misshapen_masks() {
    let dir = tempfile::tempdir().unwrap();
    let short = edited_masks(dir.path(), |k, m| (k != 7).then(|| m.clone()));
    let o = run(&["--config", s(&study().pipeline()), "--output-dir", s(&dir.path().join("a")), "segment-import", "--masks", s(&short), "--reconstruction", s(&study().recon())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains('7'), "{}", stderr(&o));
    assert!(!dir.path().join("a").exists());

    let dir = tempfile::tempdir().unwrap();
    let odd = edited_masks(dir.path(), |k, m| {
        Some(if k == 5 { SegmentationMask::new_2d(20, 40, vec![false; 800]).unwrap() } else { m.clone() })
    });
    let o = run(&["--config", s(&study().pipeline()), "--output-dir", s(&dir.path().join("b")), "segment-import", "--masks", s(&odd), "--reconstruction", s(&study().recon())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("5 (20x40)"), "{}", stderr(&o));
}
