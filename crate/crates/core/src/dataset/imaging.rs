use image::{Rgb, RgbImage, Rgba, RgbaImage};
use sprite_nn::{Shape, Tensor};

use super::Pose;
use crate::error::{Error, Result};

/// Side length of the canonical square canvas.
pub const CANVAS: u32 = 64;

/// Pixels of a source sheet, as decoded.
#[derive(Clone, Debug, PartialEq)]
pub enum SheetPixels {
    Rgb(RgbImage),
    Rgba(RgbaImage),
}

impl SheetPixels {
    pub fn dimensions(&self) -> (u32, u32) {
        match self {
            SheetPixels::Rgb(i) => i.dimensions(),
            SheetPixels::Rgba(i) => i.dimensions(),
        }
    }
}

/// Sheet geometry: one row per pose (in `pose_order`), one column per frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    pub cell_width: u32,
    pub cell_height: u32,
    pub rows: u32,
    pub columns: u32,
    pub pose_order: Vec<Pose>,
}

impl GridLayout {
    pub fn validate(&self) -> Result<()> {
        if self.cell_width == 0 || self.cell_height == 0 || self.rows == 0 || self.columns == 0 {
            return Err(Error::Config("sheet layout dimensions must be positive".into()));
        }
        if self.pose_order.len() != self.rows as usize {
            return Err(Error::Config(format!(
                "pose_order lists {} poses but the sheet has {} rows",
                self.pose_order.len(),
                self.rows
            )));
        }
        let mut seen = self.pose_order.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.pose_order.len() {
            return Err(Error::Config("pose_order repeats a pose".into()));
        }
        if self.cell_width > CANVAS || self.cell_height > CANVAS {
            return Err(Error::Config(format!(
                "cells of {}x{} do not fit the {CANVAS}x{CANVAS} canvas",
                self.cell_width, self.cell_height
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawSheet {
    pub pixels: SheetPixels,
    pub layout: GridLayout,
    /// Background color made transparent. Required for RGB sheets; never
    /// guessed, since a sprite may legitimately use any color.
    pub key_color: Option<[u8; 3]>,
}

/// A single sliced cell, already carrying an alpha channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SheetCell {
    pub pose: Pose,
    pub frame_index: usize,
    pub pixels: RgbaImage,
}

/// Cuts a sheet into its pose x frame cells, synthesizing alpha where needed.
pub fn slice_sheet(sheet: &RawSheet) -> Result<Vec<SheetCell>> {
    let layout = &sheet.layout;
    layout.validate()?;
    let (w, h) = sheet.pixels.dimensions();
    let (ew, eh) = (layout.cell_width * layout.columns, layout.cell_height * layout.rows);
    if (w, h) != (ew, eh) {
        return Err(Error::Invalid(format!(
            "sheet is {w}x{h} but the layout needs {ew}x{eh}"
        )));
    }
    let key = sheet.key_color;
    if key.is_none() && matches!(sheet.pixels, SheetPixels::Rgb(_)) {
        return Err(Error::Config(
            "RGB sheets need a declared key color to derive transparency".into(),
        ));
    }
    let mut cells = Vec::with_capacity((layout.rows * layout.columns) as usize);
    for (row, &pose) in layout.pose_order.iter().enumerate() {
        for col in 0..layout.columns {
            let (x0, y0) = (col * layout.cell_width, row as u32 * layout.cell_height);
            let cell = match &sheet.pixels {
                SheetPixels::Rgb(img) => {
                    let sub = image::imageops::crop_imm(img, x0, y0, layout.cell_width, layout.cell_height).to_image();
                    synthesize_alpha(&sub, key.unwrap_or_default())
                }
                SheetPixels::Rgba(img) => {
                    let mut sub =
                        image::imageops::crop_imm(img, x0, y0, layout.cell_width, layout.cell_height).to_image();
                    if let Some(k) = key {
                        for p in sub.pixels_mut() {
                            if p.0[..3] == k {
                                p.0[3] = 0;
                            }
                        }
                    }
                    sub
                }
            };
            cells.push(SheetCell {
                pose,
                frame_index: col as usize,
                pixels: cell,
            });
        }
    }
    Ok(cells)
}

/// Adds an alpha channel: pixels equal to `key` become fully transparent,
/// everything else opaque.
pub fn synthesize_alpha(cell: &RgbImage, key: [u8; 3]) -> RgbaImage {
    RgbaImage::from_fn(cell.width(), cell.height(), |x, y| {
        let Rgb([r, g, b]) = *cell.get_pixel(x, y);
        let a = if key == [r, g, b] { 0 } else { 255 };
        Rgba([r, g, b, a])
    })
}

/// Centers `cell` on a transparent canvas; odd margins put the extra pixel
/// on the right/bottom.
pub fn pad_to_canvas(cell: &RgbaImage, canvas: u32) -> Result<RgbaImage> {
    let (w, h) = cell.dimensions();
    if w > canvas || h > canvas {
        return Err(Error::Invalid(format!(
            "cell {w}x{h} exceeds the {canvas}x{canvas} canvas"
        )));
    }
    let mut out = RgbaImage::from_pixel(canvas, canvas, Rgba([0, 0, 0, 0]));
    image::imageops::replace(&mut out, cell, ((canvas - w) / 2) as i64, ((canvas - h) / 2) as i64);
    Ok(out)
}

pub fn normalize_value(p: u8) -> f32 {
    p as f32 / 127.5 - 1.0
}

/// Inverse of [`normalize_value`], clamping and rounding halves up.
pub fn denormalize_value(v: f32) -> u8 {
    let x = ((v.clamp(-1.0, 1.0) + 1.0) * 127.5 + 0.5).floor();
    x.clamp(0.0, 255.0) as u8
}

/// Converts a canvas-sized RGBA image to a 4-channel tensor in [-1, 1].
pub fn normalize(img: &RgbaImage) -> Result<Tensor> {
    if img.dimensions() != (CANVAS, CANVAS) {
        let (w, h) = img.dimensions();
        return Err(Error::Invalid(format!(
            "expected a {CANVAS}x{CANVAS} image, got {w}x{h}"
        )));
    }
    let n = CANVAS as usize;
    Ok(Tensor::from_fn(Shape::new(4, n, n), |c, y, x| {
        normalize_value(img.get_pixel(x as u32, y as u32).0[c])
    }))
}

/// Converts a 3- or 4-channel tensor back to 8-bit RGBA. Three-channel
/// tensors come back fully opaque.
pub fn denormalize(t: &Tensor) -> Result<RgbaImage> {
    let c = t.channels();
    if c != 3 && c != 4 {
        return Err(Error::Invalid(format!("cannot render a {c}-channel tensor")));
    }
    Ok(RgbaImage::from_fn(t.width() as u32, t.height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let mut px = [255u8; 4];
        for (ch, p) in px.iter_mut().enumerate().take(c) {
            *p = denormalize_value(t.get(ch, y, x));
        }
        Rgba(px)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout(cw: u32, ch: u32) -> GridLayout {
        GridLayout {
            cell_width: cw,
            cell_height: ch,
            rows: 4,
            columns: 3,
            pose_order: Pose::ALL.to_vec(),
        }
    }

    #[test]
    fn slices_pose_rows_and_frame_columns() {
        let img = RgbImage::from_fn(72, 128, |x, y| Rgb([(x / 24) as u8, (y / 32) as u8, 7]));
        let sheet = RawSheet {
            pixels: SheetPixels::Rgb(img),
            layout: layout(24, 32),
            key_color: Some([9, 9, 9]),
        };
        let cells = slice_sheet(&sheet).unwrap();
        assert_eq!(cells.len(), 12);
        for cell in &cells {
            assert_eq!(cell.pixels.dimensions(), (24, 32));
            let row = Pose::ALL.iter().position(|p| *p == cell.pose).unwrap() as u8;
            assert_eq!(cell.pixels.get_pixel(5, 5).0, [cell.frame_index as u8, row, 7, 255]);
        }
    }

    #[test]
    fn slicing_rejects_mismatched_sheet() {
        let sheet = RawSheet {
            pixels: SheetPixels::Rgba(RgbaImage::new(70, 128)),
            layout: layout(24, 32),
            key_color: None,
        };
        assert!(slice_sheet(&sheet).is_err());
    }

    #[test]
    fn rgb_sheet_without_key_is_rejected() {
        let sheet = RawSheet {
            pixels: SheetPixels::Rgb(RgbImage::new(72, 128)),
            layout: layout(24, 32),
            key_color: None,
        };
        assert!(matches!(slice_sheet(&sheet), Err(Error::Config(_))));
    }

    #[test]
    fn key_color_becomes_transparent() {
        let img = RgbImage::from_fn(4, 4, |x, _| if x < 2 { Rgb([0, 128, 128]) } else { Rgb([10, 20, 30]) });
        let out = synthesize_alpha(&img, [0, 128, 128]);
        assert_eq!(out.get_pixel(0, 0).0[3], 0);
        assert_eq!(out.get_pixel(3, 0).0, [10, 20, 30, 255]);
    }

    #[test]
    fn padding_centers_with_floor_offsets() {
        let cell = RgbaImage::from_pixel(24, 31, Rgba([1, 2, 3, 255]));
        let out = pad_to_canvas(&cell, 64).unwrap();
        // (64-24)/2 = 20, (64-31)/2 = 16
        assert_eq!(out.get_pixel(20, 16).0, [1, 2, 3, 255]);
        assert_eq!(out.get_pixel(19, 16).0[3], 0);
        assert_eq!(out.get_pixel(20, 15).0[3], 0);
        assert_eq!(out.get_pixel(43, 46).0[3], 255);
        assert_eq!(out.get_pixel(44, 46).0[3], 0);
        assert_eq!(out.get_pixel(43, 47).0[3], 0);
        assert!(pad_to_canvas(&RgbaImage::new(65, 10), 64).is_err());
    }

    #[test]
    fn normalization_endpoints() {
        assert_eq!(normalize_value(0), -1.0);
        assert_eq!(normalize_value(255), 1.0);
        assert_eq!(denormalize_value(0.0), 128);
        assert_eq!(denormalize_value(-3.0), 0);
        assert_eq!(denormalize_value(3.0), 255);
    }

    #[test]
    fn three_channel_tensors_render_opaque() {
        let t = Tensor::full(Shape::new(3, 2, 2), 1.0);
        assert_eq!(denormalize(&t).unwrap().get_pixel(1, 1).0, [255, 255, 255, 255]);
        assert!(denormalize(&Tensor::zeros(Shape::new(2, 2, 2))).is_err());
    }

    proptest! {
        #[test]
        fn byte_round_trip_is_exact(p in any::<u8>()) {
            prop_assert_eq!(denormalize_value(normalize_value(p)), p);
        }

        #[test]
        fn image_round_trip_is_exact(seed in any::<u64>()) {
            let mut s = seed | 1;
            let img = RgbaImage::from_fn(64, 64, |_, _| {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                Rgba((s as u32).to_le_bytes())
            });
            let t = normalize(&img).unwrap();
            prop_assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert_eq!(denormalize(&t).unwrap(), img);
        }
    }
}
