//! Artifact writing: atomic file creation, grayscale previews, key=value
//! reports.

use crate::error::CliResult;
use biphoton_core::events::EventStream;
use biphoton_core::image::ScalarImage;
use std::path::Path;

/// Run a writer against a temporary sibling path, then rename into place, so
/// partially written artifacts are never observed.
fn atomic(
    path: &Path,
    write: impl FnOnce(&Path) -> Result<(), biphoton_core::Error>,
) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("bin")
    ));
    write(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_events_atomic(stream: &EventStream, path: &Path) -> CliResult<()> {
    atomic(path, |p| biphoton_core::event_io::write_events(stream, p))
}

pub fn write_scalar_atomic(img: &ScalarImage, path: &Path) -> CliResult<()> {
    atomic(path, |p| biphoton_core::field_io::write_scalar(img, p))
}

pub fn write_csv_atomic(img: &ScalarImage, path: &Path) -> CliResult<()> {
    atomic(path, |p| img.write_csv(p))
}

pub fn write_text_atomic(text: &str, path: &Path) -> CliResult<()> {
    atomic(path, |p| {
        std::fs::write(p, text).map_err(biphoton_core::Error::Io)
    })
}

/// 8-bit grayscale preview with per-image max normalization. Quantitative
/// data lives in the binary/CSV artifacts only.
pub fn write_png_preview(img: &ScalarImage, path: &Path) -> CliResult<()> {
    let (ny, nx) = img.data().dim();
    let max = img.max().max(f64::MIN_POSITIVE);
    let mut buf = image::GrayImage::new(nx as u32, ny as u32);
    for ((iy, ix), &v) in img.data().indexed_iter() {
        let g = (v.max(0.0) / max * 255.0).round().clamp(0.0, 255.0) as u8;
        buf.put_pixel(ix as u32, iy as u32, image::Luma([g]));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("png.tmp");
    buf.save_with_format(&tmp, image::ImageFormat::Png)
        .map_err(|e| {
            crate::error::CliError::Data(biphoton_core::Error::Parse(format!(
                "png encode: {e}"
            )))
        })?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Filename tag for a plane: "z+0.0425m".
pub fn z_tag(z: f64) -> String {
    format!("z{z:+.4}m")
}
