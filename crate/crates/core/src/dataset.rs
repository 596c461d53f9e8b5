//! On-disk dataset layout:
//!
//! ```text
//! images/<stem>.png
//! groundtruth/<stem>/<annotator>.png   (one or more, nonzero = boundary)
//! groundtruth/<stem>/dontcare.png      (optional)
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imagecore::io::{read_mask_png, read_png, write_mask_png, write_png8};
use crate::imagecore::{AnnotationSet, ImageGrid};

pub const DONTCARE_FILE: &str = "dontcare.png";

#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub stem: String,
    pub image: ImageGrid<f64>,
    pub annotations: AnnotationSet,
}

fn named<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn png_stems(dir: &Path) -> Result<Vec<String>> {
    let entries = named(dir, std::fs::read_dir(dir).map_err(Error::from))?;
    let mut stems = Vec::new();
    for e in entries {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "png") {
            if let Some(s) = p.file_stem().and_then(|s| s.to_str()) {
                stems.push(s.to_string());
            }
        }
    }
    stems.sort();
    Ok(stems)
}

/// Sorted stems of `images/*.png`.
pub fn list_stems(root: impl AsRef<Path>) -> Result<Vec<String>> {
    png_stems(&root.as_ref().join("images"))
}

/// Annotator files of one image, sorted by name, `dontcare.png` excluded.
fn annotator_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let files: Vec<PathBuf> = png_stems(dir)?
        .into_iter()
        .filter(|s| format!("{s}.png") != DONTCARE_FILE)
        .map(|s| dir.join(format!("{s}.png")))
        .collect();
    if files.is_empty() {
        return Err(Error::Format(format!("{}: no annotator maps", dir.display())));
    }
    Ok(files)
}

/// Read the annotation set of `stem` from a ground-truth root.
pub fn load_annotations(gt_root: impl AsRef<Path>, stem: &str) -> Result<AnnotationSet> {
    let dir = gt_root.as_ref().join(stem);
    let mut masks = Vec::new();
    for f in annotator_files(&dir)? {
        masks.push(named(&f, read_mask_png(&f))?);
    }
    let dc_path = dir.join(DONTCARE_FILE);
    let dontcare = if dc_path.exists() {
        Some(named(&dc_path, read_mask_png(&dc_path))?)
    } else {
        None
    };
    let (w, h) = masks[0].dims();
    named(&dir, AnnotationSet::new(w, h, masks, dontcare))
}

pub fn load_item(root: impl AsRef<Path>, stem: &str) -> Result<DatasetItem> {
    let root = root.as_ref();
    let img_path = root.join("images").join(format!("{stem}.png"));
    let image = named(&img_path, read_png::<f64>(&img_path))?;
    let annotations = load_annotations(root.join("groundtruth"), stem)?;
    if annotations.dims() != image.dims() {
        return Err(Error::Format(format!(
            "{}: annotation size differs from the image",
            root.join("groundtruth").join(stem).display()
        )));
    }
    Ok(DatasetItem {
        stem: stem.to_string(),
        image,
        annotations,
    })
}

pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<DatasetItem>> {
    let root = root.as_ref();
    let stems = list_stems(root)?;
    if stems.is_empty() {
        return Err(Error::Format(format!("{}: no images", root.join("images").display())));
    }
    stems.iter().map(|s| load_item(root, s)).collect()
}

/// Write one image and its annotations in the dataset layout.
pub fn write_item(root: impl AsRef<Path>, stem: &str, image: &ImageGrid<f64>, ann: &AnnotationSet) -> Result<()> {
    let root = root.as_ref();
    let img_dir = root.join("images");
    let gt_dir = root.join("groundtruth").join(stem);
    std::fs::create_dir_all(&img_dir)?;
    std::fs::create_dir_all(&gt_dir)?;
    write_png8(image, img_dir.join(format!("{stem}.png")))?;
    for (i, m) in ann.annotators().iter().enumerate() {
        write_mask_png(m, gt_dir.join(format!("{i}.png")))?;
    }
    if let Some(dc) = ann.dontcare() {
        write_mask_png(dc, gt_dir.join(DONTCARE_FILE))?;
    }
    Ok(())
}
