//! Deterministic table rasterizer.
//!
//! Glyphs come from the embedded 8x8 bitmap font, scaled with
//! nearest-neighbour sampling to `font_size_pt` at `dpi`. Layout:
//!
//! * glyph size `g = round(font_size_pt * dpi / 72)` (square, monospace)
//! * row height `h = round(g * row_scale)`
//! * column width `(max chars in column + 2) * g`
//! * 1 px grid lines around every cell
//!
//! so an `R`-row table (header excluded) with column widths `w_j` renders to
//! `sum(w_j) + cols + 1` by `(R + 1) * h + R + 2` pixels.

use font8x8::{UnicodeFonts, BASIC_FONTS, BLOCK_FONTS, BOX_FONTS, GREEK_FONTS, HIRAGANA_FONTS, LATIN_FONTS, MISC_FONTS};
use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use serde::{Deserialize, Serialize};

use crate::table::Table;

use super::truncate::truncate;
use super::ObservationError;

pub const MAX_DIMENSION_PX: u32 = 1 << 15;

const BACKGROUND: [u8; 3] = [255, 255, 255];
const HEADER_SHADE: [u8; 3] = [221, 221, 221];
const INK: [u8; 3] = [0, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Jpeg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub max_rows: usize,
    pub max_cols: usize,
    pub font_size_pt: u32,
    pub row_scale: f64,
    pub dpi: u32,
    pub format: ImageFormat,
    pub jpeg_quality: u8,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            max_rows: 30,
            max_cols: 10,
            font_size_pt: 8,
            row_scale: 1.2,
            dpi: 200,
            format: ImageFormat::Jpeg,
            jpeg_quality: 90,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), ObservationError> {
        if self.max_rows < 1 || self.max_cols < 1 {
            return Err(ObservationError::InvalidConfig("max_rows and max_cols must be >= 1".into()));
        }
        if self.dpi == 0 || self.font_size_pt == 0 {
            return Err(ObservationError::InvalidConfig("dpi and font_size_pt must be > 0".into()));
        }
        if !(self.row_scale.is_finite() && self.row_scale >= 1.0) {
            return Err(ObservationError::InvalidConfig("row_scale must be >= 1".into()));
        }
        if !(1..=100).contains(&self.jpeg_quality) {
            return Err(ObservationError::InvalidConfig("jpeg_quality must be in 1..=100".into()));
        }
        Ok(())
    }

    /// Edge length of one glyph cell in pixels.
    pub fn glyph_px(&self) -> u32 {
        ((self.font_size_pt as f64 * self.dpi as f64 / 72.0).round() as u32).max(1)
    }

    pub fn row_height_px(&self) -> u32 {
        ((self.glyph_px() as f64 * self.row_scale).round() as u32).max(self.glyph_px())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub bytes: Vec<u8>,
    pub width_px: u32,
    pub height_px: u32,
    pub truncated: bool,
}

fn glyph(c: char) -> [u8; 8] {
    const ELLIPSIS: [u8; 8] = [0, 0, 0, 0, 0, 0, 0b0100_1001, 0];
    const MISSING: [u8; 8] = [0x7E, 0x42, 0x42, 0x42, 0x42, 0x42, 0x7E, 0x00];
    if c == '…' {
        return ELLIPSIS;
    }
    BASIC_FONTS
        .get(c)
        .or_else(|| LATIN_FONTS.get(c))
        .or_else(|| GREEK_FONTS.get(c))
        .or_else(|| BOX_FONTS.get(c))
        .or_else(|| BLOCK_FONTS.get(c))
        .or_else(|| MISC_FONTS.get(c))
        .or_else(|| HIRAGANA_FONTS.get(c))
        .unwrap_or(MISSING)
}

struct Canvas {
    width: u32,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: u32, height: u32) -> Self {
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&BACKGROUND);
        }
        Canvas { width, pixels }
    }

    fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = ((y * self.width + x) * 3) as usize;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    fn fill(&mut self, x: u32, y: u32, w: u32, h: u32, rgb: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, rgb);
            }
        }
    }

    fn draw_glyph(&mut self, c: char, x: u32, y: u32, size: u32) {
        let bits = glyph(c);
        for dy in 0..size {
            let row = bits[(dy * 8 / size) as usize];
            for dx in 0..size {
                if (row >> (dx * 8 / size)) & 1 == 1 {
                    self.put(x + dx, y + dy, INK);
                }
            }
        }
    }
}

/// Pixel dimensions and per-column widths for an (already truncated) table.
pub fn layout(table: &Table, cfg: &RenderConfig) -> (Vec<u32>, u32, u32) {
    let g = cfg.glyph_px() as u64;
    let col_widths: Vec<u64> = (0..table.n_cols())
        .map(|j| {
            let header = table.headers()[j].chars().count();
            let cells = table.rows().iter().map(|r| r[j].to_string().chars().count());
            (cells.fold(header, usize::max) as u64 + 2) * g
        })
        .collect();
    let width = col_widths.iter().sum::<u64>() + table.n_cols() as u64 + 1;
    let rows = table.n_rows() as u64;
    let height = (rows + 1) * cfg.row_height_px() as u64 + rows + 2;
    let clamp = |v: u64| v.min(u32::MAX as u64) as u32;
    (col_widths.into_iter().map(clamp).collect(), clamp(width), clamp(height))
}

/// Truncates per `cfg` and rasterizes to JPEG. Identical input and config
/// produce identical bytes.
pub fn render_image(table: &Table, cfg: &RenderConfig) -> Result<RenderedImage, ObservationError> {
    cfg.validate()?;
    let (table, truncated) = truncate(table, cfg.max_rows, cfg.max_cols);
    let (col_widths, width, height) = layout(&table, cfg);
    if width > MAX_DIMENSION_PX || height > MAX_DIMENSION_PX {
        return Err(ObservationError::TableTooLargeForPixelBudget { width, height });
    }
    let g = cfg.glyph_px();
    let row_h = cfg.row_height_px();
    let mut canvas = Canvas::new(width, height);

    canvas.fill(0, 0, width, 1, INK);
    let mut y = 1;
    let header_cells: Vec<String> = table.headers().to_vec();
    let body = table.rows().iter().map(|r| r.iter().map(|c| c.to_string()).collect::<Vec<_>>());
    for (i, cells) in std::iter::once(header_cells).chain(body).enumerate() {
        if i == 0 {
            canvas.fill(0, y, width, row_h, HEADER_SHADE);
        }
        canvas.fill(0, y, 1, row_h, INK);
        let mut x = 1;
        for (j, text) in cells.iter().enumerate() {
            let text_y = y + (row_h - g) / 2;
            for (k, ch) in text.chars().enumerate() {
                canvas.draw_glyph(ch, x + g * (k as u32 + 1), text_y, g);
            }
            x += col_widths[j];
            canvas.fill(x, y, 1, row_h, INK);
            x += 1;
        }
        y += row_h;
        canvas.fill(0, y, width, 1, INK);
        y += 1;
    }
    debug_assert_eq!(y, height);

    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, cfg.jpeg_quality)
        .encode(&canvas.pixels, width, height, ExtendedColorType::Rgb8)
        .map_err(|e| ObservationError::Encode(e.to_string()))?;
    Ok(RenderedImage { bytes, width_px: width, height_px: height, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::fixtures::writers;

    #[test]
    fn default_metrics() {
        let cfg = RenderConfig::default();
        // 8pt at 200 dpi = 22.2 px, row scale 1.2 -> 26.4 px
        assert_eq!(cfg.glyph_px(), 22);
        assert_eq!(cfg.row_height_px(), 26);
    }

    #[test]
    fn writers_render_is_deterministic() {
        let cfg = RenderConfig::default();
        let a = render_image(&writers(), &cfg).unwrap();
        let b = render_image(&writers(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.bytes[..2], &[0xFF, 0xD8]);
        // Writer: max("others (11)"=11 chars) + 2 = 13 glyphs; Episodes: 8 + 2 = 10.
        assert_eq!(a.width_px, 13 * 22 + 10 * 22 + 3);
        assert_eq!(a.height_px, 6 * 26 + 7);
    }

    #[test]
    fn decodes_to_stated_size() {
        let img = render_image(&writers(), &RenderConfig::default()).unwrap();
        let decoded = image::load_from_memory(&img.bytes).unwrap();
        assert_eq!((decoded.width(), decoded.height()), (img.width_px, img.height_px));
    }

    #[test]
    fn pixel_budget() {
        let t = Table::new(vec!["x".into()], vec![vec!["y".repeat(2000).into()]]).unwrap();
        assert!(matches!(
            render_image(&t, &RenderConfig::default()),
            Err(ObservationError::TableTooLargeForPixelBudget { .. })
        ));
    }

    #[test]
    fn invalid_config() {
        let cfg = RenderConfig { dpi: 0, ..RenderConfig::default() };
        assert!(render_image(&writers(), &cfg).is_err());
    }
}
