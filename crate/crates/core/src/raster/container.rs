//! Raster container: a JSON header next to a raw little-endian f32 payload.
//!
//! `{name}.json` carries shape and georeferencing; `{name}.f32` holds
//! `width_px * height_px` row-major values. The same container serves
//! elevation grids, normalized images, and radio maps; only the value
//! validation differs at load time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::raster::{ElevationGrid, NormalizedImage};
use crate::Result;

/// Header fields of a raster container.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterHeader {
    pub width_px: usize,
    pub height_px: usize,
    pub resolution_m: f64,
    pub origin_x_m: f64,
    pub origin_y_m: f64,
    /// Payload encoding; always "f32le".
    pub dtype: String,
}

fn json_path(base: &Path) -> PathBuf {
    let mut p = base.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

fn payload_path(base: &Path) -> PathBuf {
    let mut p = base.as_os_str().to_owned();
    p.push(".f32");
    PathBuf::from(p)
}

/// Write header and payload for `base` (extensions are appended).
pub fn write_raster(
    base: &Path,
    width_px: usize,
    height_px: usize,
    resolution_m: f64,
    origin_x_m: f64,
    origin_y_m: f64,
    values: &[f32],
) -> Result<()> {
    let header = RasterHeader {
        width_px,
        height_px,
        resolution_m,
        origin_x_m,
        origin_y_m,
        dtype: "f32le".to_string(),
    };
    let jp = json_path(base);
    let mut text = serde_json::to_string_pretty(&header)
        .map_err(|e| CoreError::MalformedArtifact {
            path: jp.clone(),
            reason: e.to_string(),
        })?;
    text.push('\n');
    fs::write(&jp, text).map_err(|e| CoreError::io(&jp, e))?;

    let pp = payload_path(base);
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&pp, bytes).map_err(|e| CoreError::io(&pp, e))?;
    Ok(())
}

/// Read header and payload for `base`; validates shape against payload length.
pub fn read_raster(base: &Path) -> Result<(RasterHeader, Vec<f32>)> {
    let jp = json_path(base);
    let text = fs::read_to_string(&jp).map_err(|e| CoreError::io(&jp, e))?;
    let header: RasterHeader =
        serde_json::from_str(&text).map_err(|e| CoreError::MalformedContainer {
            path: jp.clone(),
            reason: format!("header: {e}"),
        })?;
    if header.dtype != "f32le" {
        return Err(CoreError::MalformedContainer {
            path: jp,
            reason: format!("unsupported dtype {:?}", header.dtype),
        });
    }
    if header.width_px == 0 || header.height_px == 0 || !(header.resolution_m > 0.0) {
        return Err(CoreError::MalformedContainer {
            path: jp,
            reason: "non-positive dimensions or resolution".to_string(),
        });
    }
    let pp = payload_path(base);
    let bytes = fs::read(&pp).map_err(|e| CoreError::io(&pp, e))?;
    let expect = header.width_px * header.height_px * 4;
    if bytes.len() != expect {
        return Err(CoreError::MalformedContainer {
            path: pp,
            reason: format!("payload is {} bytes, header implies {}", bytes.len(), expect),
        });
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, values))
}

/// Load an elevation grid; rejects NaN or negative heights.
pub fn load_grid(base: &Path) -> Result<ElevationGrid> {
    let (h, values) = read_raster(base)?;
    if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(CoreError::MalformedContainer {
            path: payload_path(base),
            reason: format!("height {bad} is not finite and non-negative"),
        });
    }
    ElevationGrid::new(
        h.width_px,
        h.height_px,
        h.resolution_m,
        h.origin_x_m,
        h.origin_y_m,
        values,
    )
}

/// Save an elevation grid.
pub fn save_grid(base: &Path, grid: &ElevationGrid) -> Result<()> {
    write_raster(
        base,
        grid.width_px,
        grid.height_px,
        grid.resolution_m,
        grid.origin_x_m,
        grid.origin_y_m,
        &grid.heights,
    )
}

/// Load a normalized image; rejects values outside `[0, 1]`.
pub fn load_image(base: &Path) -> Result<NormalizedImage> {
    let (h, values) = read_raster(base)?;
    if h.width_px != h.height_px {
        return Err(CoreError::MalformedContainer {
            path: json_path(base),
            reason: "normalized images must be square".to_string(),
        });
    }
    if let Some(bad) = values
        .iter()
        .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
    {
        return Err(CoreError::MalformedContainer {
            path: payload_path(base),
            reason: format!("value {bad} outside [0, 1]"),
        });
    }
    Ok(NormalizedImage {
        px: h.width_px,
        resolution_m: h.resolution_m,
        origin_x_m: h.origin_x_m,
        origin_y_m: h.origin_y_m,
        values,
    })
}

/// Save a normalized image.
pub fn save_image(base: &Path, img: &NormalizedImage) -> Result<()> {
    write_raster(
        base,
        img.px,
        img.px,
        img.resolution_m,
        img.origin_x_m,
        img.origin_y_m,
        &img.values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn grid_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("scene");
        let grid = ElevationGrid::new(
            3,
            2,
            2.5,
            -10.0,
            4.0,
            vec![0.0, 1.5, 20.25, 0.125, 7.0, 3.5],
        )
        .unwrap();
        save_grid(&base, &grid).unwrap();
        let back = load_grid(&base).unwrap();
        assert_eq!(grid, back);
    }

    #[test]
    fn rejects_malformed_header() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("bad");
        fs::write(json_path(&base), "{\"width_px\": 2}").unwrap();
        fs::write(payload_path(&base), [0u8; 8]).unwrap();
        match load_grid(&base) {
            Err(CoreError::MalformedContainer { .. }) => {}
            other => panic!("expected MalformedContainer, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_header_keys() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("extra");
        fs::write(
            json_path(&base),
            r#"{"width_px":1,"height_px":1,"resolution_m":1.0,"origin_x_m":0.0,"origin_y_m":0.0,"dtype":"f32le","surprise":1}"#,
        )
        .unwrap();
        fs::write(payload_path(&base), 1.0f32.to_le_bytes()).unwrap();
        assert!(load_grid(&base).is_err());
    }

    #[test]
    fn rejects_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("short");
        let grid = ElevationGrid::new(2, 2, 1.0, 0.0, 0.0, vec![0.0; 4]).unwrap();
        save_grid(&base, &grid).unwrap();
        fs::write(payload_path(&base), [0u8; 12]).unwrap();
        match load_grid(&base) {
            Err(CoreError::MalformedContainer { reason, .. }) => {
                assert!(reason.contains("12 bytes"), "reason: {reason}");
            }
            other => panic!("expected MalformedContainer, got {other:?}"),
        }
    }

    #[test]
    fn rejects_nan_and_negative_heights() {
        let dir = tempfile::tempdir().unwrap();
        for (name, bad) in [("nan", f32::NAN), ("neg", -3.0)] {
            let base = dir.path().join(name);
            write_raster(&base, 2, 1, 1.0, 0.0, 0.0, &[1.0, bad]).unwrap();
            assert!(load_grid(&base).is_err(), "{name} heights must be rejected");
        }
    }

    #[test]
    fn image_values_validated() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("img");
        write_raster(&base, 2, 2, 1.0, 0.0, 0.0, &[0.0, 0.5, 1.0, 1.5]).unwrap();
        assert!(load_image(&base).is_err());
    }
}
