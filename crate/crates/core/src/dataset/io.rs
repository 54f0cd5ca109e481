use std::fs;
use std::io::ErrorKind as IoKind;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BoundingBox, Dataset, ImageRecord, Provenance, Role};
use crate::error::{Error, Result};
use crate::BBox;

pub const MANIFEST_FILE: &str = "manifest.json";

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    name: String,
    role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth_scale: Option<f64>,
    records: Vec<ManifestRecord>,
}

// Unknown keys (poses, normals, ...) are accepted and dropped.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<PathBuf>,
    #[serde(default)]
    provenance: Provenance,
}

/// How [`write_dataset`] treats image, mask and depth files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WriteMode {
    /// Copy files under the output directory.
    Copy,
    /// Point the manifest at the existing files.
    #[default]
    Reference,
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest_path = absolute(manifest_path)?;
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| Error::Manifest {
        path: manifest_path.clone(),
        source,
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("/")).to_path_buf();
    let records = resolve_records(&base, manifest.records)?;
    Ok(Dataset::new(manifest.name, manifest.role, records)?.with_depth_scale(manifest.depth_scale))
}

fn resolve_records(base: &Path, entries: Vec<ManifestRecord>) -> Result<Vec<ImageRecord>> {
    entries
        .into_par_iter()
        .map(|entry| resolve_record(base, entry))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

fn resolve_record(base: &Path, entry: ManifestRecord) -> Result<ImageRecord> {
    let image_path = base.join(&entry.image);
    let (width, height) = dimensions(&image_path)?;

    let companion = |path: &Option<PathBuf>, what: &str| -> Result<Option<PathBuf>> {
        let Some(rel) = path else { return Ok(None) };
        let path = base.join(rel);
        if !path.is_file() {
            return Err(Error::Record {
                id: entry.id.clone(),
                message: format!("{what} file {} not found", path.display()),
            });
        }
        let dims = dimensions(&path)?;
        if dims != (width, height) {
            return Err(Error::Record {
                id: entry.id.clone(),
                message: format!(
                    "{what} {} is {}x{} but the image is {width}x{height}",
                    path.display(),
                    dims.0,
                    dims.1
                ),
            });
        }
        Ok(Some(path))
    };
    let mask_path = companion(&entry.mask, "mask")?;
    let depth_path = companion(&entry.depth, "depth")?;

    let boxes = match &entry.labels {
        Some(rel) => read_labels(&base.join(rel))?,
        None => Vec::new(),
    };

    Ok(ImageRecord {
        id: entry.id,
        image_path,
        boxes,
        mask_path,
        depth_path,
        provenance: entry.provenance,
        width,
        height,
    })
}

fn dimensions(path: &Path) -> Result<(u32, u32)> {
    if !path.is_file() {
        return Err(Error::io(path, std::io::Error::new(IoKind::NotFound, "file not found")));
    }
    image::image_dimensions(path).map_err(|e| Error::image(path, e))
}

fn read_labels(path: &Path) -> Result<Vec<BBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut boxes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let parsed = parse_label_line(line).map_err(|message| Error::Label {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        })?;
        let Some((class_id, cx, cy, w, h)) = parsed else {
            continue;
        };
        match BoundingBox::clamped(class_id, cx, cy, w, h) {
            Some((b, false)) => boxes.push(b),
            Some((b, true)) => {
                log::warn!("{}:{}: box clamped to the image bounds", path.display(), idx + 1);
                boxes.push(b);
            }
            None => {
                return Err(Error::Label {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: "box lies entirely outside the image".into(),
                })
            }
        }
    }
    Ok(boxes)
}

/// `class cx cy w h` as read from a label line.
pub type LabelFields = (u32, f64, f64, f64, f64);

/// Parses one `class cx cy w h` line. Blank lines yield `Ok(None)`.
pub fn parse_label_line(line: &str) -> std::result::Result<Option<LabelFields>, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.is_empty() {
        return Ok(None);
    }
    if fields.len() != 5 {
        return Err(format!("expected 5 fields 'class cx cy w h', found {}", fields.len()));
    }
    let class_id = fields[0]
        .parse::<u32>()
        .map_err(|_| format!("invalid class id '{}'", fields[0]))?;
    let mut v = [0.0f64; 4];
    for (slot, text) in v.iter_mut().zip(&fields[1..]) {
        *slot = text.parse().map_err(|_| format!("invalid coordinate '{text}'"))?;
    }
    Ok(Some((class_id, v[0], v[1], v[2], v[3])))
}

pub fn format_label_line(b: &BBox) -> String {
    format!("{} {:.6} {:.6} {:.6} {:.6}", b.class_id, b.cx, b.cy, b.w, b.h)
}

/// Writes labels and a manifest under `out_dir`, returning the manifest path.
///
/// Paths inside `out_dir` are stored relative to it so output trees can be
/// compared byte for byte; anything else is stored as an absolute path.
pub fn write_dataset(d: &Dataset, out_dir: &Path, mode: WriteMode) -> Result<PathBuf> {
    let out = absolute(out_dir)?;
    let labels_dir = out.join("labels");
    fs::create_dir_all(&labels_dir).map_err(|e| Error::io(&labels_dir, e))?;
    if mode == WriteMode::Copy {
        for sub in ["images", "masks", "depth"] {
            let p = out.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
    }

    let entries = d
        .records()
        .par_iter()
        .map(|r| write_record(r, &out, mode))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let manifest = Manifest {
        name: d.name.clone(),
        role: d.role,
        depth_scale: d.depth_scale,
        records: entries,
    };
    let path = out.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn write_record(r: &ImageRecord, out: &Path, mode: WriteMode) -> Result<ManifestRecord> {
    if r.id.is_empty() || r.id.contains(['/', '\\']) || r.id.starts_with('.') {
        return Err(Error::Record {
            id: r.id.clone(),
            message: "id cannot be used as a file name".into(),
        });
    }
    let labels = out.join("labels").join(format!("{}.txt", r.id));
    let mut text = String::new();
    for b in &r.boxes {
        text.push_str(&format_label_line(b));
        text.push('\n');
    }
    fs::write(&labels, text).map_err(|e| Error::io(&labels, e))?;

    let place = |src: &Path, sub: &str| -> Result<PathBuf> {
        match mode {
            WriteMode::Reference => Ok(src.to_path_buf()),
            WriteMode::Copy => {
                let ext = src.extension().and_then(|e| e.to_str()).unwrap_or("png");
                let dst = out.join(sub).join(format!("{}.{ext}", r.id));
                if dst != src {
                    fs::copy(src, &dst).map_err(|e| Error::io(src, e))?;
                }
                Ok(dst)
            }
        }
    };
    let image = place(&r.image_path, "images")?;
    let mask = r.mask_path.as_deref().map(|p| place(p, "masks")).transpose()?;
    let depth = r.depth_path.as_deref().map(|p| place(p, "depth")).transpose()?;

    Ok(ManifestRecord {
        id: r.id.clone(),
        image: manifest_path(out, &image)?,
        labels: Some(PathBuf::from("labels").join(format!("{}.txt", r.id))),
        mask: mask.map(|p| manifest_path(out, &p)).transpose()?,
        depth: depth.map(|p| manifest_path(out, &p)).transpose()?,
        provenance: r.provenance,
    })
}

fn manifest_path(out: &Path, path: &Path) -> Result<PathBuf> {
    let abs = absolute(path)?;
    Ok(match abs.strip_prefix(out) {
        Ok(rel) => rel.to_path_buf(),
        Err(_) => abs,
    })
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

/// Builds a dataset from a render export directory.
///
/// Expects `images/` (PNG or JPEG) and optionally `labels/<stem>.txt`,
/// `masks/<stem>.png` and `depth/<stem>.png`. A trailing frame number in the
/// file stem is zero-padded to six digits to form the record id, so id order
/// matches frame order.
pub fn ingest_render_dir(dir: &Path, name: &str, role: Role) -> Result<Dataset> {
    let root = absolute(dir)?;
    let images_dir = if root.join("images").is_dir() {
        root.join("images")
    } else {
        root.clone()
    };
    let mut images: Vec<PathBuf> = fs::read_dir(&images_dir)
        .map_err(|e| Error::io(&images_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    images.sort();

    let existing = |sub: &str, stem: &str, ext: &str| {
        let p = root.join(sub).join(format!("{stem}.{ext}"));
        p.is_file().then_some(p)
    };
    let entries = images
        .into_iter()
        .map(|image| {
            let stem = image
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            ManifestRecord {
                id: frame_id(&stem),
                labels: existing("labels", &stem, "txt"),
                mask: existing("masks", &stem, "png"),
                depth: existing("depth", &stem, "png"),
                image,
                provenance: Provenance::Rendered,
            }
        })
        .collect();
    let records = resolve_records(&root, entries)?;
    Dataset::new(name, role, records)
}

fn frame_id(stem: &str) -> String {
    let digits = stem.len() - stem.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return stem.to_string();
    }
    let (prefix, number) = stem.split_at(stem.len() - digits);
    format!("{prefix}{number:0>6}")
}
