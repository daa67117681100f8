//! Rendering wavefield snapshots as 8-bit grayscale frames.

use std::path::Path;

use image::{GrayImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdtd::WavefieldState;
use crate::material::{MaterialField, Rect};

/// Scalar rendered per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameQuantity {
    VelocityMagnitude,
    Vz,
    /// `−(σxx + σzz)/2`
    Pressure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    PerSequence,
    PerFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub quantity: FrameQuantity,
    pub normalization: Normalization,
    pub gamma: f64,
    pub pixels_per_cell: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            quantity: FrameQuantity::VelocityMagnitude,
            normalization: Normalization::PerSequence,
            gamma: 0.5,
            pixels_per_cell: 1,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Configuration(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.pixels_per_cell == 0 {
            return Err(Error::Configuration(
                "pixels_per_cell must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Unquantized scalar image, row-major, `height` rows of `width` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    /// s
    pub time: f64,
}

impl RawImage {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// 8-bit grayscale frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    /// Position in the sequence it was normalized with.
    pub frame_index: usize,
}

/// Cell window `(i0, j0, width, height)` covered by `view`.
pub fn view_cells(field: &MaterialField, view: &Rect) -> Result<(usize, usize, usize, usize)> {
    let dx = field.dx;
    let i0 = (view.x0 / dx).round();
    let j0 = (view.z0 / dx).round();
    let i1 = (view.x1() / dx).round();
    let j1 = (view.z1() / dx).round();
    if i0 < 0.0 || j0 < 0.0 || i1 > field.nx as f64 || j1 > field.nz as f64 || i1 <= i0 || j1 <= j0
    {
        return Err(Error::Configuration(format!(
            "view [{:.4e}, {:.4e}] × [{:.4e}, {:.4e}] m is not inside the {} × {} cell grid",
            view.x0,
            view.x1(),
            view.z0,
            view.z1(),
            field.nx,
            field.nz
        )));
    }
    Ok((
        i0 as usize,
        j0 as usize,
        (i1 - i0) as usize,
        (j1 - j0) as usize,
    ))
}

/// Samples the chosen quantity at cell centres inside `view`, replicating
/// each cell into a `pixels_per_cell` square. Void cells are 0.
pub fn extract_snapshot(
    state: &WavefieldState,
    field: &MaterialField,
    view: &Rect,
    spec: &FrameSpec,
) -> Result<RawImage> {
    spec.validate()?;
    let (i0, j0, w, h) = view_cells(field, view)?;
    let nx = field.nx;
    let cell_value = |i: usize, j: usize| -> f64 {
        if field.is_void(i, j) {
            return 0.0;
        }
        let vz = || 0.5 * (state.vz[j * nx + i] + state.vz[(j + 1) * nx + i]);
        match spec.quantity {
            FrameQuantity::VelocityMagnitude => {
                let vx = 0.5 * (state.vx[j * (nx + 1) + i] + state.vx[j * (nx + 1) + i + 1]);
                let vz = vz();
                (vx * vx + vz * vz).sqrt()
            }
            FrameQuantity::Vz => vz(),
            FrameQuantity::Pressure => -0.5 * (state.sxx[j * nx + i] + state.szz[j * nx + i]),
        }
    };

    let ppc = spec.pixels_per_cell;
    let (width, height) = (w * ppc, h * ppc);
    let mut data = Vec::with_capacity(width * height);
    for j in j0..j0 + h {
        let row: Vec<f64> = (i0..i0 + w).map(|i| cell_value(i, j)).collect();
        for _ in 0..ppc {
            for v in &row {
                data.extend(std::iter::repeat_n(*v, ppc));
            }
        }
    }
    Ok(RawImage {
        width,
        height,
        data,
        time: state.time,
    })
}

/// `round(255 · (|v| / scope_max)^γ)`; an all-zero scope renders black.
fn quantize(value: f64, scope_max: f64, gamma: f64) -> u8 {
    if scope_max <= 0.0 {
        return 0;
    }
    let x = (value.abs() / scope_max).min(1.0);
    (255.0 * x.powf(gamma)).round().clamp(0.0, 255.0) as u8
}

/// Quantizes a sequence of raw images to 8 bits. Signed quantities are
/// rendered by magnitude.
pub fn normalize_sequence(raw: &[RawImage], spec: &FrameSpec) -> Result<Vec<ImageFrame>> {
    spec.validate()?;
    let global = raw.iter().map(RawImage::max_abs).fold(0.0, f64::max);
    Ok(raw
        .iter()
        .enumerate()
        .map(|(frame_index, img)| {
            let scope = match spec.normalization {
                Normalization::PerSequence => global,
                Normalization::PerFrame => img.max_abs(),
            };
            ImageFrame {
                width: img.width,
                height: img.height,
                pixels: img
                    .data
                    .iter()
                    .map(|v| quantize(*v, scope, spec.gamma))
                    .collect(),
                frame_index,
            }
        })
        .collect())
}

/// Writes a lossless 8-bit grayscale PNG.
pub fn encode_image(frame: &ImageFrame, path: &Path) -> Result<()> {
    let img = GrayImage::from_raw(
        frame.width as u32,
        frame.height as u32,
        frame.pixels.clone(),
    )
    .ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        message: format!(
            "{} pixels do not fill a {} × {} frame",
            frame.pixels.len(),
            frame.width,
            frame.height
        ),
    })?;
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Reads an 8-bit grayscale image back as a frame with index 0.
pub fn decode_image(path: &Path) -> Result<ImageFrame> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    let gray = img.into_luma8();
    Ok(ImageFrame {
        width: gray.width() as usize,
        height: gray.height() as usize,
        pixels: gray.into_raw(),
        frame_index: 0,
    })
}
