//! Deterministic RGB8 rendering of candle windows, plus binary PPM I/O.
//!
//! Layout: candle `i` occupies columns
//! `[margin + i * (candle_px + gap_px), margin + i * (candle_px + gap_px) + candle_px)`,
//! so an `n`-candle image is `2 * margin + n * candle_px + (n - 1) * gap_px`
//! wide. Prices map to rows with
//! `y(p) = margin + floor((max_high - p) * (height - 2 * margin - 1) / (max_high - min_low) + 0.5)`;
//! a window with `max_high == min_low` maps every price to the middle row.
//! The wick is a one-pixel column at the candle center and the body is drawn
//! over it. There is no anti-aliasing, so every non-background pixel belongs
//! to exactly one candle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{price_bounds, Candle, CandleWindow};
use crate::pattern::PatternMatch;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("cannot render an empty window")]
    EmptyWindow,
    #[error("invalid render spec: {0}")]
    BadSpec(String),
    #[error("pattern span {span} ending at {end_index} does not match window ending at {window_end} with {window_len} candles")]
    SpanMismatch {
        span: usize,
        end_index: usize,
        window_end: usize,
        window_len: usize,
    },
    #[error("malformed PPM header: {0}")]
    MalformedHeader(String),
    #[error("PPM pixel data truncated: expected {expected} bytes, found {found}")]
    TruncatedPixelData { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn to_array(self) -> [u8; 3] {
        [self.0, self.1, self.2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSpec {
    pub candle_px: usize,
    pub gap_px: usize,
    pub margin_px: usize,
    pub height_px: usize,
    pub up_color: Rgb,
    pub down_color: Rgb,
    pub wick_color: Rgb,
    pub background: Rgb,
    pub annotation_tint: Rgb,
}

impl Default for RenderSpec {
    fn default() -> Self {
        Self {
            candle_px: 5,
            gap_px: 2,
            margin_px: 5,
            height_px: 128,
            up_color: Rgb(0, 168, 0),
            down_color: Rgb(200, 0, 0),
            wick_color: Rgb(0, 0, 0),
            background: Rgb(255, 255, 255),
            annotation_tint: Rgb(255, 235, 160),
        }
    }
}

impl RenderSpec {
    pub fn validate(&self) -> Result<(), RasterError> {
        if self.candle_px < 3 || self.candle_px.is_multiple_of(2) {
            return Err(RasterError::BadSpec(format!(
                "candle_px {} must be odd and >= 3",
                self.candle_px
            )));
        }
        if self.gap_px == 0 {
            return Err(RasterError::BadSpec("gap_px must be >= 1".into()));
        }
        if self.height_px <= 2 * self.margin_px + 2 {
            return Err(RasterError::BadSpec(format!(
                "height {} too small for margin {}",
                self.height_px, self.margin_px
            )));
        }
        let palette = self.palette();
        for i in 0..palette.len() {
            for j in i + 1..palette.len() {
                if palette[i] == palette[j] {
                    return Err(RasterError::BadSpec(format!(
                        "palette colors {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `[up, down, wick, background, tint]`.
    pub fn palette(&self) -> [Rgb; 5] {
        [
            self.up_color,
            self.down_color,
            self.wick_color,
            self.background,
            self.annotation_tint,
        ]
    }

    pub fn image_width(&self, n_candles: usize) -> usize {
        2 * self.margin_px + n_candles * self.candle_px + n_candles.saturating_sub(1) * self.gap_px
    }

    /// First column of candle `i`.
    pub fn candle_x(&self, i: usize) -> usize {
        self.margin_px + i * (self.candle_px + self.gap_px)
    }

    /// Number of price quanta between `margin` and `height - margin - 1`.
    pub fn row_span(&self) -> usize {
        self.height_px - 2 * self.margin_px - 1
    }

    pub fn middle_row(&self) -> usize {
        self.margin_px + round_half_up(self.row_span() as f64 / 2.0) as usize
    }

    /// Row of price `p` on the axis `[min_low, max_high]`.
    pub fn price_to_row(&self, p: f64, min_low: f64, max_high: f64) -> usize {
        if max_high <= min_low {
            return self.middle_row();
        }
        let span = self.row_span() as f64;
        let r = round_half_up((max_high - p) * span / (max_high - min_low));
        self.margin_px + r.clamp(0.0, span) as usize
    }

    /// Inverse of [`price_to_row`](Self::price_to_row) (exact at row centers).
    pub fn row_to_price(&self, row: usize, min_low: f64, max_high: f64) -> f64 {
        let span = self.row_span() as f64;
        max_high - (row as f64 - self.margin_px as f64) * (max_high - min_low) / span
    }
}

pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Row-major RGB8 bitmap, origin top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RasterImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&color.to_array());
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        Rgb(self.pixels[i], self.pixels[i + 1], self.pixels[i + 2])
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c.to_array());
    }

    /// Copies columns `[x0, x1]` (inclusive) at full height.
    pub fn crop_columns(&self, x0: usize, x1: usize) -> RasterImage {
        let w = x1 - x0 + 1;
        let mut pixels = Vec::with_capacity(w * self.height * 3);
        for y in 0..self.height {
            let row = y * self.width * 3;
            pixels.extend_from_slice(&self.pixels[row + x0 * 3..row + (x1 + 1) * 3]);
        }
        RasterImage {
            width: w,
            height: self.height,
            pixels,
        }
    }

    /// Nearest-neighbor resample; source pixel for target `x` is
    /// `floor((x + 0.5) * width / new_width)`.
    pub fn resize_nearest(&self, new_width: usize, new_height: usize) -> RasterImage {
        let mut out = RasterImage::filled(new_width, new_height, Rgb(0, 0, 0));
        for y in 0..new_height {
            let sy = (((y as f64 + 0.5) * self.height as f64 / new_height as f64) as usize)
                .min(self.height - 1);
            for x in 0..new_width {
                let sx = (((x as f64 + 0.5) * self.width as f64 / new_width as f64) as usize)
                    .min(self.width - 1);
                out.set(x, y, self.get(sx, sy));
            }
        }
        out
    }

    /// Planar `[3][height][width]` floats in `[0, 1]`.
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        let mut out = vec![0.0f32; 3 * plane];
        for (i, px) in self.pixels.chunks_exact(3).enumerate() {
            for ch in 0..3 {
                out[ch * plane + i] = f32::from(px[ch]) / 255.0;
            }
        }
        out
    }

    /// RGBA bytes, for canvas `ImageData`.
    pub fn to_rgba(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 4);
        for px in self.pixels.chunks_exact(3) {
            out.extend_from_slice(px);
            out.push(255);
        }
        out
    }
}

fn render_candles(
    candles: &[Candle],
    spec: &RenderSpec,
    fill: Rgb,
) -> Result<RasterImage, RasterError> {
    spec.validate()?;
    let (lo, hi) = price_bounds(candles).ok_or(RasterError::EmptyWindow)?;
    let mut img = RasterImage::filled(spec.image_width(candles.len()), spec.height_px, fill);
    let half = spec.candle_px / 2;
    for (i, c) in candles.iter().enumerate() {
        let x0 = spec.candle_x(i);
        let y_high = spec.price_to_row(c.high, lo, hi);
        let y_low = spec.price_to_row(c.low, lo, hi);
        for y in y_high..=y_low {
            img.set(x0 + half, y, spec.wick_color);
        }
        let color = if c.close >= c.open {
            spec.up_color
        } else {
            spec.down_color
        };
        let y_top = spec.price_to_row(c.open.max(c.close), lo, hi);
        let y_bottom = spec.price_to_row(c.open.min(c.close), lo, hi);
        for y in y_top..=y_bottom {
            for x in x0..x0 + spec.candle_px {
                img.set(x, y, color);
            }
        }
    }
    Ok(img)
}

/// Renders a full history chart on the plain background.
pub fn render_window(window: &CandleWindow, spec: &RenderSpec) -> Result<RasterImage, RasterError> {
    render_candles(&window.candles, spec, spec.background)
}

/// Renders only the pattern's candles, on their own price scale, with the
/// annotation tint in place of the background.
pub fn render_pattern(
    window: &CandleWindow,
    pattern: &PatternMatch,
    spec: &RenderSpec,
) -> Result<RasterImage, RasterError> {
    if window.is_empty() {
        return Err(RasterError::EmptyWindow);
    }
    if pattern.span == 0
        || pattern.span > window.len()
        || pattern.end_index != window.source_end_index
    {
        return Err(RasterError::SpanMismatch {
            span: pattern.span,
            end_index: pattern.end_index,
            window_end: window.source_end_index,
            window_len: window.len(),
        });
    }
    let crop = &window.candles[window.len() - pattern.span..];
    render_candles(crop, spec, spec.annotation_tint)
}

/// Binary PPM: `P6\n{w} {h}\n255\n` followed by raw RGB bytes.
pub fn write_ppm(image: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

pub fn read_ppm(bytes: &[u8]) -> Result<RasterImage, RasterError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => {
                    return Err(RasterError::MalformedHeader("unexpected end of header".into()))
                }
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| RasterError::MalformedHeader("non-ASCII header".into()))?,
        );
    }
    if fields[0] != "P6" {
        return Err(RasterError::MalformedHeader(format!("magic {:?}", fields[0])));
    }
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| RasterError::MalformedHeader(format!("bad {what} {s:?}")))
    };
    let width = parse(fields[1], "width")?;
    let height = parse(fields[2], "height")?;
    if parse(fields[3], "maxval")? != 255 {
        return Err(RasterError::MalformedHeader("maxval must be 255".into()));
    }
    // Exactly one whitespace byte separates the header from the data.
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(RasterError::MalformedHeader("missing separator after maxval".into()));
    }
    pos += 1;
    let expected = width * height * 3;
    let data = &bytes[pos..];
    if data.len() < expected {
        return Err(RasterError::TruncatedPixelData {
            expected,
            found: data.len(),
        });
    }
    Ok(RasterImage {
        width,
        height,
        pixels: data[..expected].to_vec(),
    })
}
