//! Dataset manifests: a text file listing, per line, the four view images,
//! optionally the three label files, and a provenance tag. Fields are
//! tab-separated; blank lines and `#` comments are skipped. Paths resolve
//! relative to the manifest's directory and must exist at load time.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{
    decode_disp_png, decode_flow_png, decode_pfm, decode_pfm_flow, encode_disp_png,
    encode_flow_png, encode_pfm, encode_pfm_flow, Image, Provenance, SceneFlowField, SceneSample,
};
use crate::error::{DwarfError, Result};

/// On-disk label encoding: float maps, or the 16-bit sparse PNG pair.
/// Float maps hold any value; the PNG codecs bound range and precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GtFormat {
    Pfm,
    Kitti,
}

impl FromStr for GtFormat {
    type Err = DwarfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pfm" => Ok(GtFormat::Pfm),
            "kitti" => Ok(GtFormat::Kitti),
            other => Err(DwarfError::invalid(format!(
                "unknown label format {other:?}, expected pfm or kitti"
            ))),
        }
    }
}

impl fmt::Display for GtFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GtFormat::Pfm => "pfm",
            GtFormat::Kitti => "kitti",
        })
    }
}

#[derive(Clone, Debug)]
pub struct GtPaths {
    pub d1: PathBuf,
    pub f1: PathBuf,
    pub d2: PathBuf,
}

#[derive(Clone, Debug)]
pub struct ManifestEntry {
    /// First-left, first-right, second-left, second-right.
    pub images: [PathBuf; 4],
    pub gt: Option<GtPaths>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub entries: Vec<ManifestEntry>,
}

impl Dataset {
    /// Indices of labelled entries, split by provenance: (ground truth,
    /// teacher predictions).
    pub fn pools(&self) -> (Vec<usize>, Vec<usize>) {
        let mut gt = Vec::new();
        let mut px = Vec::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.gt.is_some() {
                match e.provenance {
                    Provenance::Gt => gt.push(i),
                    Provenance::Px => px.push(i),
                }
            }
        }
        (gt, px)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Load one entry's images and labels. Unlabelled entries come back
    /// with an all-invalid field. No visibility mask is stored on disk.
    pub fn load_sample(&self, index: usize) -> Result<SceneSample> {
        let entry = self
            .entries
            .get(index)
            .ok_or_else(|| DwarfError::invalid(format!("sample index {index} out of range")))?;
        let mut images = entry.images.iter().map(|p| Image::load(p));
        let l1 = images.next().unwrap()?;
        let r1 = images.next().unwrap()?;
        let l2 = images.next().unwrap()?;
        let r2 = images.next().unwrap()?;
        for (img, path) in [&r1, &l2, &r2].into_iter().zip(&entry.images[1..]) {
            if img.width != l1.width || img.height != l1.height {
                return Err(DwarfError::shape(
                    "load_sample",
                    format!(
                        "{} is {}x{}, expected {}x{}",
                        path.display(),
                        img.width,
                        img.height,
                        l1.width,
                        l1.height
                    ),
                ));
            }
        }

        let gt = match &entry.gt {
            Some(paths) => load_labels(paths, l1.width, l1.height)?,
            None => {
                let mut f = SceneFlowField::zeros(l1.width, l1.height);
                f.valid.iter_mut().for_each(|v| *v = false);
                f
            }
        };
        Ok(SceneSample {
            l1,
            r1,
            l2,
            r2,
            gt,
            noc: None,
            provenance: entry.provenance,
        })
    }
}

fn is_pfm(path: &Path) -> bool {
    path.extension().map_or(false, |e| e.eq_ignore_ascii_case("pfm"))
}

fn load_labels(paths: &GtPaths, width: usize, height: usize) -> Result<SceneFlowField> {
    let mut field = SceneFlowField::zeros(width, height);
    let mut valid = vec![true; width * height];

    let check = |name: &Path, w: usize, h: usize| -> Result<()> {
        if w != width || h != height {
            return Err(DwarfError::shape(
                "load_labels",
                format!("{} is {w}x{h}, expected {width}x{height}", name.display()),
            ));
        }
        Ok(())
    };

    for (path, target) in [(&paths.d1, &mut field.d1), (&paths.d2, &mut field.d2)] {
        let bytes = std::fs::read(path)?;
        if is_pfm(path) {
            let (w, h, values) = decode_pfm(&bytes)?;
            check(path, w, h)?;
            *target = values;
        } else {
            let (w, h, values, mask) = decode_disp_png(&bytes)?;
            check(path, w, h)?;
            *target = values;
            for (v, m) in valid.iter_mut().zip(&mask) {
                *v &= m;
            }
        }
    }

    let bytes = std::fs::read(&paths.f1)?;
    if is_pfm(&paths.f1) {
        let (w, h, u, v) = decode_pfm_flow(&bytes)?;
        check(&paths.f1, w, h)?;
        field.u = u;
        field.v = v;
    } else {
        let map = decode_flow_png(&bytes)?;
        check(&paths.f1, map.width, map.height)?;
        field.u = map.u;
        field.v = map.v;
        for (v, m) in valid.iter_mut().zip(&map.valid) {
            *v &= m;
        }
    }
    field.valid = valid;
    Ok(field)
}

pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let fail = |line: usize, message: String| DwarfError::Manifest {
        path: path.display().to_string(),
        line,
        message,
    };

    let mut entries = Vec::new();
    for (num, raw) in text.lines().enumerate() {
        let num = num + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 && fields.len() != 8 {
            return Err(fail(
                num,
                format!("expected 5 or 8 fields, found {}", fields.len()),
            ));
        }
        let provenance = match *fields.last().unwrap() {
            "gt" => Provenance::Gt,
            "px" => Provenance::Px,
            other => return Err(fail(num, format!("unknown provenance tag {other:?}"))),
        };
        let resolve = |field: &str| -> Result<PathBuf> {
            let p = dir.join(field);
            if !p.is_file() {
                return Err(fail(num, format!("missing file {}", p.display())));
            }
            Ok(p)
        };
        let images = [
            resolve(fields[0])?,
            resolve(fields[1])?,
            resolve(fields[2])?,
            resolve(fields[3])?,
        ];
        let gt = if fields.len() == 8 {
            Some(GtPaths {
                d1: resolve(fields[4])?,
                f1: resolve(fields[5])?,
                d2: resolve(fields[6])?,
            })
        } else {
            None
        };
        entries.push(ManifestEntry {
            images,
            gt,
            provenance,
        });
    }
    Ok(Dataset { entries })
}

/// Writes samples into a directory and accumulates manifest lines.
pub struct DatasetWriter {
    root: PathBuf,
    format: GtFormat,
    lines: Vec<String>,
}

impl DatasetWriter {
    pub fn create(root: impl Into<PathBuf>, format: GtFormat) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(DatasetWriter {
            root,
            format,
            lines: Vec::new(),
        })
    }

    /// Write one sample's files under `stem` and record its line.
    pub fn push(&mut self, stem: &str, sample: &SceneSample) -> Result<()> {
        if stem.is_empty() || stem.contains(|c: char| c == '/' || c == '\\' || c.is_whitespace()) {
            return Err(DwarfError::invalid(format!("bad sample stem {stem:?}")));
        }
        let mut names = Vec::new();
        for (suffix, img) in [
            ("l1", &sample.l1),
            ("r1", &sample.r1),
            ("l2", &sample.l2),
            ("r2", &sample.r2),
        ] {
            let name = format!("{stem}_{suffix}.png");
            img.save(&self.root.join(&name))?;
            names.push(name);
        }

        let gt = &sample.gt;
        let (w, h) = (gt.width, gt.height);
        match self.format {
            GtFormat::Pfm => {
                for (suffix, bytes) in [
                    ("d1.pfm", encode_pfm(&gt.d1, w, h)?),
                    ("f1.pfm", encode_pfm_flow(&gt.u, &gt.v, w, h)?),
                    ("d2.pfm", encode_pfm(&gt.d2, w, h)?),
                ] {
                    let name = format!("{stem}_{suffix}");
                    std::fs::write(self.root.join(&name), bytes)?;
                    names.push(name);
                }
            }
            GtFormat::Kitti => {
                for (suffix, bytes) in [
                    ("d1.png", encode_disp_png(&gt.d1, &gt.valid, w, h)?),
                    ("f1.png", encode_flow_png(&gt.u, &gt.v, &gt.valid, w, h)?),
                    ("d2.png", encode_disp_png(&gt.d2, &gt.valid, w, h)?),
                ] {
                    let name = format!("{stem}_{suffix}");
                    std::fs::write(self.root.join(&name), bytes)?;
                    names.push(name);
                }
            }
        }
        names.push(sample.provenance.to_string());
        self.lines.push(names.join("\t"));
        Ok(())
    }

    /// Write the manifest and return its path.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.root.join("manifest.txt");
        std::fs::write(&path, self.lines.join("\n") + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_scene, make_proxy_sample, ProxyNoise, SceneSpec};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn scene() -> SceneSample {
        let mut rng = StdRng::seed_from_u64(21);
        let spec = SceneSpec::random(32, 24, 2, &mut rng);
        generate_scene(&spec, 0).unwrap()
    }

    #[test]
    fn float_format_round_trips_labels_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let sample = scene();
        let mut writer = DatasetWriter::create(dir.path(), GtFormat::Pfm).unwrap();
        writer.push("s0", &sample).unwrap();
        let manifest = writer.finish().unwrap();

        let dataset = load_manifest(&manifest).unwrap();
        assert_eq!(dataset.len(), 1);
        let back = dataset.load_sample(0).unwrap();
        assert_eq!(back.provenance, Provenance::Gt);
        assert_eq!(back.gt.u, sample.gt.u);
        assert_eq!(back.gt.d1, sample.gt.d1);
        assert_eq!(back.gt.d2, sample.gt.d2);
        assert!(back.gt.valid.iter().all(|&v| v));
        // Images pass through 8-bit quantization.
        for (a, b) in back.l1.data.iter().zip(&sample.l1.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn sparse_format_round_trips_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let sample = scene();
        let mut writer = DatasetWriter::create(dir.path(), GtFormat::Kitti).unwrap();
        writer.push("s0", &sample).unwrap();
        let dataset = load_manifest(&writer.finish().unwrap()).unwrap();
        let back = dataset.load_sample(0).unwrap();
        assert!(back.gt.valid.iter().all(|&v| v));
        for i in 0..sample.gt.len() {
            assert!((back.gt.u[i] - sample.gt.u[i]).abs() <= 1.0 / 128.0);
            assert!((back.gt.d1[i] - sample.gt.d1[i]).abs() <= 1.0 / 512.0);
            assert!((back.gt.d2[i] - sample.gt.d2[i]).abs() <= 1.0 / 512.0);
        }
    }

    #[test]
    fn provenance_and_pools_are_preserved() {
        let dir = tempfile::tempdir().unwrap();
        let sample = scene();
        let px = make_proxy_sample(&sample, &ProxyNoise::default(), 5).unwrap();
        let mut writer = DatasetWriter::create(dir.path(), GtFormat::Pfm).unwrap();
        writer.push("a", &sample).unwrap();
        writer.push("b", &px).unwrap();
        writer.push("c", &sample).unwrap();
        let dataset = load_manifest(&writer.finish().unwrap()).unwrap();
        let (gt, px_pool) = dataset.pools();
        assert_eq!(gt, vec![0, 2]);
        assert_eq!(px_pool, vec![1]);
        assert_eq!(dataset.load_sample(1).unwrap().provenance, Provenance::Px);
    }

    #[test]
    fn unlabelled_lines_load_with_invalid_fields() {
        let dir = tempfile::tempdir().unwrap();
        let sample = scene();
        let mut writer = DatasetWriter::create(dir.path(), GtFormat::Pfm).unwrap();
        writer.push("s0", &sample).unwrap();
        let manifest_path = writer.finish().unwrap();
        let text = format!(
            "# comment line\n\ns0_l1.png\ts0_r1.png\ts0_l2.png\ts0_r2.png\tgt\n{}",
            std::fs::read_to_string(&manifest_path).unwrap()
        );
        std::fs::write(&manifest_path, text).unwrap();

        let dataset = load_manifest(&manifest_path).unwrap();
        assert_eq!(dataset.len(), 2);
        let bare = dataset.load_sample(0).unwrap();
        assert!(bare.gt.valid.iter().all(|&v| !v));
        let (gt, px) = dataset.pools();
        assert_eq!(gt, vec![1]);
        assert!(px.is_empty());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");

        std::fs::write(&path, "# header\na b c\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
        assert!(err.to_string().contains("5 or 8 fields"), "{err}");

        std::fs::write(&path, "a\tb\tc\td\tmaybe\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("provenance"), "{err}");

        std::fs::write(&path, "a.png\tb.png\tc.png\td.png\tgt\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("missing file"), "{err}");
        assert!(err.to_string().contains(":1"), "{err}");
    }

    #[test]
    fn negative_labels_need_the_float_format() {
        let dir = tempfile::tempdir().unwrap();
        let mut sample = scene();
        sample.gt.d1[0] = -2.0;
        let mut writer = DatasetWriter::create(dir.path().join("k"), GtFormat::Kitti).unwrap();
        assert!(writer.push("s0", &sample).is_err());
        let mut writer = DatasetWriter::create(dir.path().join("p"), GtFormat::Pfm).unwrap();
        writer.push("s0", &sample).unwrap();
    }
}
