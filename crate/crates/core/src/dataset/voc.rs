//! PASCAL VOC annotation documents.
//!
//! VOC boxes are 1-based inclusive integer pixel indices. On read, a VOC box
//! `(xmin, ymin, xmax, ymax)` becomes the continuous box
//! `(xmin - 1, ymin - 1, xmax, ymax)`; on write the inverse is applied after
//! rounding each coordinate half-up.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use quick_xml::escape::escape;
use serde::Deserialize;

use super::{Annotation, Dataset, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Deserialize)]
struct VocDocument {
    filename: Option<String>,
    size: Option<VocSize>,
    #[serde(rename = "object", default)]
    objects: Vec<VocObject>,
}

#[derive(Debug, Deserialize)]
struct VocSize {
    width: u32,
    height: u32,
    depth: Option<u8>,
}

#[derive(Debug, Deserialize)]
struct VocObject {
    name: String,
    bndbox: VocBndBox,
}

#[derive(Debug, Deserialize)]
struct VocBndBox {
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

/// Reads every `*.xml` annotation document in `directory`.
///
/// Each document must name an image file located next to it. Image headers
/// are read to confirm the file is decodable and agrees with the declared
/// size. Images come back sorted by image id, which is the image file stem.
pub fn load_voc(directory: &Path) -> Result<Dataset> {
    let entries = fs::read_dir(directory).map_err(|e| Error::io(directory, e))?;
    let mut docs: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(directory, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) && path.is_file() {
            docs.push(path);
        }
    }
    docs.sort();

    let mut parsed = docs
        .iter()
        .map(|p| read_document(p))
        .collect::<Result<Vec<_>>>()?;
    parsed.sort_by(|a, b| a.0.image_id.cmp(&b.0.image_id));

    let mut d = Dataset::default();
    for (record, anns) in parsed {
        if d.images.last().is_some_and(|last| last.image_id == record.image_id) {
            return Err(Error::InvalidDataset(format!(
                "image id {:?} is annotated twice",
                record.image_id
            )));
        }
        d.images.push(record);
        d.annotations.extend(anns);
    }
    Ok(d)
}

fn read_document(path: &Path) -> Result<(ImageRecord, Vec<Annotation>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: VocDocument =
        quick_xml::de::from_str(&text).map_err(|e| Error::voc(path, e.to_string()))?;

    let size = doc
        .size
        .ok_or_else(|| Error::voc(path, "missing <size> element"))?;
    if size.width == 0 || size.height == 0 {
        return Err(Error::voc(path, "image size must be positive"));
    }
    let filename = doc
        .filename
        .filter(|f| !f.trim().is_empty())
        .ok_or_else(|| Error::voc(path, "missing <filename> element"))?;
    let filename = filename.trim();
    let image_path = path.with_file_name(filename);
    let image_id = Path::new(filename)
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::voc(path, format!("bad filename {filename:?}")))?
        .to_owned();

    let (width, height, channels) = probe_image(&image_path)?;
    if (width, height) != (size.width, size.height) {
        return Err(Error::voc(
            path,
            format!(
                "declared size {}x{} differs from image {}x{}",
                size.width, size.height, width, height
            ),
        ));
    }
    if let Some(depth) = size.depth {
        if depth != channels && depth != 0 {
            warn!(
                "{}: declared depth {depth} but image has {channels} channels",
                path.display()
            );
        }
    }

    let mut anns = Vec::with_capacity(doc.objects.len());
    for obj in doc.objects {
        let label = obj.name.trim();
        if label.is_empty() {
            return Err(Error::voc(path, "object with empty <name>"));
        }
        let b = &obj.bndbox;
        let bbox = BBox::new(b.xmin - 1.0, b.ymin - 1.0, b.xmax, b.ymax).map_err(|_| {
            Error::voc(
                path,
                format!(
                    "bad bndbox ({}, {}, {}, {})",
                    b.xmin, b.ymin, b.xmax, b.ymax
                ),
            )
        })?;
        match bbox.clip(width as f64, height as f64) {
            Some(clipped) => anns.push(Annotation::new(image_id.clone(), label, clipped)),
            None => warn!(
                "{}: dropping {label} box outside the image bounds",
                path.display()
            ),
        }
    }

    Ok((
        ImageRecord {
            image_id,
            file_path: image_path,
            width,
            height,
            channels,
        },
        anns,
    ))
}

/// Width, height and channel count from the image header.
fn probe_image(path: &Path) -> Result<(u32, u32, u8)> {
    use image::ImageDecoder;
    let img_err = |source| Error::Image {
        path: path.to_owned(),
        source,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoder = reader.into_decoder().map_err(img_err)?;
    let (w, h) = decoder.dimensions();
    let channels = match decoder.color_type().channel_count() {
        1 | 2 => 1,
        _ => 3,
    };
    Ok((w, h, channels))
}

#[inline]
fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// VOC integer coordinates for a continuous box.
pub fn to_voc_coords(b: &BBox) -> [i64; 4] {
    [
        round_half_up(b.x_min) + 1,
        round_half_up(b.y_min) + 1,
        round_half_up(b.x_max),
        round_half_up(b.y_max),
    ]
}

/// Renders one image's annotation document.
pub fn render_document(image: &ImageRecord, anns: &[&Annotation]) -> String {
    let filename = image
        .file_path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("{}.png", image.image_id));
    let folder = image
        .file_path
        .parent()
        .and_then(|p| p.file_name())
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut s = String::new();
    s.push_str("<annotation>\n");
    let _ = writeln!(s, "\t<folder>{}</folder>", escape(folder.as_str()));
    let _ = writeln!(s, "\t<filename>{}</filename>", escape(filename.as_str()));
    s.push_str("\t<size>\n");
    let _ = writeln!(s, "\t\t<width>{}</width>", image.width);
    let _ = writeln!(s, "\t\t<height>{}</height>", image.height);
    let _ = writeln!(s, "\t\t<depth>{}</depth>", image.channels);
    s.push_str("\t</size>\n");
    s.push_str("\t<segmented>0</segmented>\n");
    for a in anns {
        let [xmin, ymin, xmax, ymax] = to_voc_coords(&a.bbox);
        s.push_str("\t<object>\n");
        let _ = writeln!(s, "\t\t<name>{}</name>", escape(a.label.as_str()));
        s.push_str("\t\t<pose>Unspecified</pose>\n");
        s.push_str("\t\t<truncated>0</truncated>\n");
        s.push_str("\t\t<difficult>0</difficult>\n");
        s.push_str("\t\t<bndbox>\n");
        let _ = writeln!(s, "\t\t\t<xmin>{xmin}</xmin>");
        let _ = writeln!(s, "\t\t\t<ymin>{ymin}</ymin>");
        let _ = writeln!(s, "\t\t\t<xmax>{xmax}</xmax>");
        let _ = writeln!(s, "\t\t\t<ymax>{ymax}</ymax>");
        s.push_str("\t\t</bndbox>\n");
        s.push_str("\t</object>\n");
    }
    s.push_str("</annotation>\n");
    s
}

/// Writes `<image_id>.xml` for every image of `d` into `directory`.
///
/// Only annotation documents are written; image files are the caller's
/// responsibility and are expected under the file name recorded in each
/// [`ImageRecord`].
pub fn write_voc(d: &Dataset, directory: &Path) -> Result<()> {
    fs::create_dir_all(directory).map_err(|e| Error::io(directory, e))?;
    let by_image = d.annotations_by_image();
    for img in &d.images {
        let anns = by_image.get(img.image_id.as_str()).map_or(&[][..], |v| v);
        let path = directory.join(format!("{}.xml", img.image_id));
        fs::write(&path, render_document(img, anns)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
