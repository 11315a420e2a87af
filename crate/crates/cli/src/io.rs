//! Manifest loading and 8-bit PNG decode/encode.
//!
//! A manifest is a JSON document:
//!
//! ```json
//! {
//!   "num_classes": 10,
//!   "entries": [
//!     { "path": "img/0001.png", "class_id": 3,
//!       "boxes": [ { "class_id": 3, "cx": 12.0, "cy": 9.5, "w": 8.0, "h": 6.0 } ] }
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory. `boxes` is
//! optional and uses absolute pixel coordinates in center form; each box may
//! also be written as an array `[class_id, cx, cy, w, h]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ricap_core::detect::BBox;
use ricap_core::ImageTensor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub class_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BBox>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub num_classes: usize,
    pub entries: Vec<ManifestEntry>,
}

/// A manifest with its entry paths resolved on disk.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: DatasetManifest,
    pub resolved: Vec<PathBuf>,
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_reader(BufReader::new(file)).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    if manifest.num_classes == 0 {
        return Err(CliError::Validation(format!(
            "{}: num_classes must be at least 1",
            path.display()
        )));
    }
    if manifest.entries.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: manifest has no entries",
            path.display()
        )));
    }
    let base = path.parent().unwrap_or(Path::new(""));
    let mut resolved = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let full = base.join(&entry.path);
        if !full.is_file() {
            return Err(CliError::Validation(format!(
                "manifest entry {} does not exist (looked for {})",
                entry.path,
                full.display()
            )));
        }
        if entry.class_id >= manifest.num_classes {
            return Err(CliError::Validation(format!(
                "{}: class id {} out of range for {} classes",
                entry.path, entry.class_id, manifest.num_classes
            )));
        }
        for b in entry.boxes.iter().flatten() {
            b.validate()
                .map_err(|e| CliError::Validation(format!("{}: {e}", entry.path)))?;
        }
        resolved.push(full);
    }
    Ok(LoadedManifest { manifest, resolved })
}

fn image_error(path: &Path, reason: impl ToString) -> CliError {
    CliError::Image {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Decodes an 8-bit grayscale, RGB or RGBA PNG (palette images are expanded)
/// into a planar image.
pub fn decode_image(path: &Path) -> Result<ImageTensor<u8>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| image_error(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_error(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_error(path, e))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(image_error(
            path,
            format!("only 8-bit PNGs are supported, got {:?}", info.bit_depth),
        ));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(image_error(
                path,
                format!("unsupported color type {other:?}"),
            ))
        }
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let interleaved = &buf[..info.buffer_size()];
    let planar = ImageTensor::from_fn(channels, height, width, |c, y, x| {
        interleaved[(y * width + x) * channels + c]
    })?;
    Ok(planar)
}

pub fn encode_png(image: &ImageTensor<u8>) -> Result<Vec<u8>> {
    let (channels, height, width) = image.shape();
    let color = match channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => png::ColorType::Rgba,
    };
    let mut interleaved = Vec::with_capacity(image.data().len());
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                interleaved.push(image.get(c, y, x));
            }
        }
    }
    let mut bytes = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut bytes, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let to_err = |e: png::EncodingError| CliError::Validation(format!("PNG encoding failed: {e}"));
        let mut writer = encoder.write_header().map_err(to_err)?;
        writer.write_image_data(&interleaved).map_err(to_err)?;
        writer.finish().map_err(to_err)?;
    }
    Ok(bytes)
}

pub fn encode_image(image: &ImageTensor<u8>, path: &Path) -> Result<()> {
    let bytes = encode_png(image)?;
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(&bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

/// Decodes every manifest image and checks that they share one shape.
pub fn load_images(loaded: &LoadedManifest) -> Result<Vec<ImageTensor<u8>>> {
    let mut images: Vec<ImageTensor<u8>> = Vec::with_capacity(loaded.resolved.len());
    for path in &loaded.resolved {
        let img = decode_image(path)?;
        if let Some(first) = images.first() {
            if first.shape() != img.shape() {
                return Err(CliError::Validation(format!(
                    "{}: shape (c, h, w) = {:?} differs from {:?} of {}",
                    path.display(),
                    img.shape(),
                    first.shape(),
                    loaded.resolved[0].display()
                )));
            }
        }
        images.push(img);
    }
    Ok(images)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_all_channel_counts() {
        let dir = tempfile::tempdir().unwrap();
        for channels in [1, 3, 4] {
            let img = ImageTensor::from_fn(channels, 5, 7, |c, y, x| (c * 50 + y * 9 + x * 3) as u8).unwrap();
            let path = dir.path().join(format!("c{channels}.png"));
            encode_image(&img, &path).unwrap();
            let back = decode_image(&path).unwrap();
            assert_eq!(back, img);
            encode_image(&back, &path).unwrap();
            assert_eq!(decode_image(&path).unwrap(), img);
        }
    }

    #[test]
    fn undecodable_file_is_an_image_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(decode_image(&path), Err(CliError::Image { .. })));
    }

    #[test]
    fn manifest_errors_name_the_problem() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.json");
        std::fs::write(&m, r#"{"num_classes": 2, "entries": [{"path": "missing.png", "class_id": 0}]}"#).unwrap();
        let err = load_manifest(&m).unwrap_err().to_string();
        assert!(err.contains("missing.png"), "{err}");

        std::fs::write(&m, "{ nope").unwrap();
        assert!(matches!(load_manifest(&m), Err(CliError::Json { .. })));

        let img = ImageTensor::filled(1, 2, 2, 0u8).unwrap();
        encode_image(&img, &dir.path().join("a.png")).unwrap();
        std::fs::write(&m, r#"{"num_classes": 2, "entries": [{"path": "a.png", "class_id": 2}]}"#).unwrap();
        assert!(load_manifest(&m).unwrap_err().to_string().contains("class id 2"));
    }

    #[test]
    fn boxes_accept_array_form() {
        let dir = tempfile::tempdir().unwrap();
        encode_image(&ImageTensor::filled(3, 8, 8, 0u8).unwrap(), &dir.path().join("a.png")).unwrap();
        let m = dir.path().join("m.json");
        std::fs::write(
            &m,
            r#"{"num_classes": 2, "entries": [{"path": "a.png", "class_id": 1, "boxes": [[1, 4.0, 4.0, 2.0, 3.0]]}]}"#,
        )
        .unwrap();
        let loaded = load_manifest(&m).unwrap();
        let boxes = loaded.manifest.entries[0].boxes.as_ref().unwrap();
        assert_eq!(boxes[0], BBox::new(1, 4.0, 4.0, 2.0, 3.0).unwrap());
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        encode_image(&ImageTensor::filled(3, 4, 4, 1u8).unwrap(), &dir.path().join("a.png")).unwrap();
        encode_image(&ImageTensor::filled(3, 4, 5, 1u8).unwrap(), &dir.path().join("b.png")).unwrap();
        let m = dir.path().join("m.json");
        std::fs::write(
            &m,
            r#"{"num_classes": 1, "entries": [{"path": "a.png", "class_id": 0}, {"path": "b.png", "class_id": 0}]}"#,
        )
        .unwrap();
        let loaded = load_manifest(&m).unwrap();
        assert!(matches!(load_images(&loaded), Err(CliError::Validation(_))));
    }
}
