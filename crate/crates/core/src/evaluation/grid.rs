//! Comparison grids: one row per example, one labeled column per image kind.

use image::{Rgba, RgbaImage};
use sprite_nn::Tensor;

use crate::dataset::denormalize;
use crate::error::{Error, Result};

/// 3x5 glyphs, one 3-bit row per entry, most significant bit leftmost.
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_uppercase() {
        'A' => [2, 5, 7, 5, 5],
        'B' => [6, 5, 6, 5, 6],
        'C' => [3, 4, 4, 4, 3],
        'D' => [6, 5, 5, 5, 6],
        'E' => [7, 4, 6, 4, 7],
        'F' => [7, 4, 6, 4, 4],
        'G' => [3, 4, 5, 5, 3],
        'H' => [5, 5, 7, 5, 5],
        'I' => [7, 2, 2, 2, 7],
        'J' => [1, 1, 1, 5, 2],
        'K' => [5, 5, 6, 5, 5],
        'L' => [4, 4, 4, 4, 7],
        'M' => [5, 7, 7, 5, 5],
        'N' => [6, 5, 5, 5, 5],
        'O' => [2, 5, 5, 5, 2],
        'P' => [6, 5, 6, 4, 4],
        'Q' => [2, 5, 5, 6, 3],
        'R' => [6, 5, 6, 5, 5],
        'S' => [3, 4, 2, 1, 6],
        'T' => [7, 2, 2, 2, 2],
        'U' => [5, 5, 5, 5, 7],
        'V' => [5, 5, 5, 5, 2],
        'W' => [5, 5, 7, 7, 5],
        'X' => [5, 5, 2, 5, 5],
        'Y' => [5, 5, 2, 2, 2],
        'Z' => [7, 1, 2, 4, 7],
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [6, 1, 2, 4, 7],
        '3' => [6, 1, 2, 1, 6],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 6, 1, 6],
        '6' => [3, 4, 7, 5, 7],
        '7' => [7, 1, 2, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 6],
        '-' => [0, 0, 7, 0, 0],
        '.' => [0, 0, 0, 0, 2],
        ':' => [0, 2, 0, 2, 0],
        '=' => [0, 7, 0, 7, 0],
        '(' => [2, 4, 4, 4, 2],
        ')' => [2, 1, 1, 1, 2],
        '/' => [1, 1, 2, 4, 4],
        '_' => [0, 0, 0, 0, 7],
        ' ' => [0; 5],
        _ => [7, 1, 2, 0, 2],
    }
}

const TEXT_SCALE: u32 = 2;
const ADVANCE: u32 = 4 * TEXT_SCALE;
const PADDING: u32 = 3;
/// Height of the label strip above the images.
pub const LABEL_BAND: u32 = 5 * TEXT_SCALE + 2 * PADDING;

fn draw_text(img: &mut RgbaImage, text: &str, x0: u32, y0: u32, max_width: u32) {
    let fit = (max_width / ADVANCE) as usize;
    for (i, c) in text.chars().take(fit).enumerate() {
        let gx = x0 + i as u32 * ADVANCE;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..3u32 {
                if bits >> (2 - col) & 1 == 1 {
                    for dy in 0..TEXT_SCALE {
                        for dx in 0..TEXT_SCALE {
                            img.put_pixel(
                                gx + col * TEXT_SCALE + dx,
                                y0 + row as u32 * TEXT_SCALE + dy,
                                Rgba([0, 0, 0, 255]),
                            );
                        }
                    }
                }
            }
        }
    }
}

/// Lays out `rows` (each with one image per label) at an integer `scale`,
/// beneath a white band carrying the column labels. Transparent sprite
/// pixels stay transparent.
pub fn render_grid(rows: &[Vec<&Tensor>], labels: &[&str], scale: u32) -> Result<RgbaImage> {
    if rows.is_empty() || labels.is_empty() {
        return Err(Error::Invalid("cannot render an empty grid".into()));
    }
    if scale == 0 {
        return Err(Error::Invalid("grid scale must be at least 1".into()));
    }
    let side = rows[0][0].height() as u32;
    for (r, row) in rows.iter().enumerate() {
        if row.len() != labels.len() {
            return Err(Error::Invalid(format!(
                "grid row {r} has {} images for {} labels",
                row.len(),
                labels.len()
            )));
        }
        if let Some(t) = row.iter().find(|t| t.height() as u32 != side || t.width() as u32 != side) {
            return Err(Error::Invalid(format!("grid images must all be {side}x{side}, got {}", t.shape())));
        }
    }
    let cell = side * scale;
    let width = cell * labels.len() as u32;
    let mut out = RgbaImage::new(width, LABEL_BAND + cell * rows.len() as u32);
    for y in 0..LABEL_BAND {
        for x in 0..width {
            out.put_pixel(x, y, Rgba([255, 255, 255, 255]));
        }
    }
    for (col, label) in labels.iter().enumerate() {
        let text_w = (label.chars().count() as u32 * ADVANCE).min(cell);
        let x0 = col as u32 * cell + (cell - text_w) / 2;
        draw_text(&mut out, label, x0, PADDING, cell);
    }
    for (r, row) in rows.iter().enumerate() {
        for (c, t) in row.iter().enumerate() {
            let img = denormalize(t)?;
            let (ox, oy) = (c as u32 * cell, LABEL_BAND + r as u32 * cell);
            for (x, y, px) in img.enumerate_pixels() {
                for dy in 0..scale {
                    for dx in 0..scale {
                        out.put_pixel(ox + x * scale + dx, oy + y * scale + dy, *px);
                    }
                }
            }
        }
    }
    Ok(out)
}
