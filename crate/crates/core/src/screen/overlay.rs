use image::{Rgba, RgbaImage};

use super::encode::UiElementList;
use super::tree::Rect;

/// Box colours, cycled by presentation index.
pub const SOM_PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [240, 50, 230],
    [0, 128, 128],
    [170, 110, 40],
];

const BORDER: i32 = 2;
const GLYPH_SCALE: i32 = 2;
const GLYPH_ADVANCE: i32 = 12;
const TAG_PAD: i32 = 2;

// 5x7 digits, one row per byte, bit 4 is the leftmost column.
const DIGITS: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OverlayError {
    #[error("image has zero area")]
    EmptyImage,
    #[error("element {index} at {bounds} lies outside the {width}x{height} image")]
    OutOfBounds {
        index: usize,
        bounds: Rect,
        width: u32,
        height: u32,
    },
}

/// Draws a numbered box for every listed element. `scale` maps a11y
/// coordinates onto the image (1.0 when the screenshot is unscaled).
pub fn overlay_som(image: &RgbaImage, elements: &UiElementList, scale: f64) -> Result<RgbaImage, OverlayError> {
    let (width, height) = image.dimensions();
    if width == 0 || height == 0 {
        return Err(OverlayError::EmptyImage);
    }
    let boxes = elements
        .elements
        .iter()
        .map(|e| {
            let bounds = e.bounds.scaled(scale);
            let inside = bounds.left >= 0
                && bounds.top >= 0
                && bounds.right <= width as i32
                && bounds.bottom <= height as i32;
            if inside {
                Ok((e.index, bounds))
            } else {
                Err(OverlayError::OutOfBounds {
                    index: e.index,
                    bounds,
                    width,
                    height,
                })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = image.clone();
    for (index, bounds) in boxes {
        let [r, g, b] = SOM_PALETTE[index % SOM_PALETTE.len()];
        let color = Rgba([r, g, b, 255]);
        draw_border(&mut out, bounds, color);
        draw_tag(&mut out, bounds, index, color);
    }
    Ok(out)
}

fn fill(img: &mut RgbaImage, left: i32, top: i32, right: i32, bottom: i32, color: Rgba<u8>) {
    let (w, h) = (img.width() as i32, img.height() as i32);
    for y in top.max(0)..bottom.min(h) {
        for x in left.max(0)..right.min(w) {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn draw_border(img: &mut RgbaImage, r: Rect, color: Rgba<u8>) {
    let t = BORDER;
    fill(img, r.left, r.top, r.right, r.top + t, color);
    fill(img, r.left, r.bottom - t, r.right, r.bottom, color);
    fill(img, r.left, r.top, r.left + t, r.bottom, color);
    fill(img, r.right - t, r.top, r.right, r.bottom, color);
}

fn draw_tag(img: &mut RgbaImage, r: Rect, index: usize, color: Rgba<u8>) {
    let digits: Vec<usize> = index
        .to_string()
        .bytes()
        .map(|b| usize::from(b - b'0'))
        .collect();
    let glyph_w = 5 * GLYPH_SCALE;
    let glyph_h = 7 * GLYPH_SCALE;
    let tag_w = 2 * TAG_PAD + (digits.len() as i32 - 1) * GLYPH_ADVANCE + glyph_w;
    let tag_h = 2 * TAG_PAD + glyph_h;
    fill(img, r.left, r.top, r.left + tag_w, r.top + tag_h, color);
    let white = Rgba([255, 255, 255, 255]);
    for (k, &d) in digits.iter().enumerate() {
        let x0 = r.left + TAG_PAD + k as i32 * GLYPH_ADVANCE;
        let y0 = r.top + TAG_PAD;
        for (row, bits) in DIGITS[d].iter().enumerate() {
            for col in 0..5 {
                if bits & (0x10 >> col) != 0 {
                    let x = x0 + col * GLYPH_SCALE;
                    let y = y0 + row as i32 * GLYPH_SCALE;
                    fill(img, x, y, x + GLYPH_SCALE, y + GLYPH_SCALE, white);
                }
            }
        }
    }
}
