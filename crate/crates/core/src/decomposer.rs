//! Splits rendered charts into per-candle column extents, cuts sliding
//! sub-charts of `k` candles, and parses rendered charts back into OHLC.
//!
//! Segmentation relies on the renderer's layout: every candle column holds at
//! least one non-background pixel and neighbouring candles are separated by at
//! least one background column.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{RasterImage, RenderSpec, Rgb};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecomposeError {
    #[error("no candle columns found")]
    NoCandlesFound,
    #[error("need at least {needed} candles, found {found}")]
    TooFewCandles { needed: usize, found: usize },
    #[error("pixel ({x},{y}) has color {color:?} outside the render palette")]
    UnknownColor { x: usize, y: usize, color: Rgb },
    #[error("degenerate price axis but candles occupy {rows} distinct rows")]
    DegenerateAxis { rows: usize },
    #[error("candle {index} has no body pixels")]
    MissingBody { index: usize },
    #[error("sub-chart size and stride must be >= 1")]
    BadWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandleExtent {
    /// Inclusive.
    pub x_start: usize,
    /// Inclusive.
    pub x_end: usize,
    pub index: usize,
}

impl CandleExtent {
    pub fn width(&self) -> usize {
        self.x_end - self.x_start + 1
    }

    pub fn center(&self) -> usize {
        self.x_start + (self.x_end - self.x_start) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParsedCandle {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub direction: BodyDirection,
}

fn is_blank(c: Rgb, spec: &RenderSpec) -> bool {
    c == spec.background || c == spec.annotation_tint
}

/// Maximal runs of columns holding any non-background, non-tint pixel.
pub fn segment_columns(
    image: &RasterImage,
    spec: &RenderSpec,
) -> Result<Vec<CandleExtent>, DecomposeError> {
    let occupied: Vec<bool> = (0..image.width)
        .map(|x| (0..image.height).any(|y| !is_blank(image.get(x, y), spec)))
        .collect();
    let mut extents = Vec::new();
    let mut run_start = None;
    for x in 0..=image.width {
        let occ = occupied.get(x).copied().unwrap_or(false);
        match (occ, run_start) {
            (true, None) => run_start = Some(x),
            (false, Some(s)) => {
                extents.push(CandleExtent {
                    x_start: s,
                    x_end: x - 1,
                    index: extents.len(),
                });
                run_start = None;
            }
            _ => {}
        }
    }
    if extents.is_empty() {
        return Err(DecomposeError::NoCandlesFound);
    }
    Ok(extents)
}

/// Number of sub-charts produced for `n` candles.
pub fn subchart_count(n: usize, k: usize, stride: usize) -> usize {
    if k == 0 || stride == 0 || n < k {
        0
    } else {
        (n - k) / stride + 1
    }
}

/// Sliding crops of `k` consecutive candles at full height and original
/// pixel scale. Each crop extends `gap_px / 2` columns past its outer
/// candles (clamped to the image); tint pixels are replaced by background.
pub fn subcharts(
    image: &RasterImage,
    spec: &RenderSpec,
    k: usize,
    stride: usize,
) -> Result<Vec<RasterImage>, DecomposeError> {
    if k == 0 || stride == 0 {
        return Err(DecomposeError::BadWindow);
    }
    let extents = segment_columns(image, spec)?;
    let n = extents.len();
    if n < k {
        return Err(DecomposeError::TooFewCandles { needed: k, found: n });
    }
    let pad = spec.gap_px / 2;
    let mut out = Vec::with_capacity(subchart_count(n, k, stride));
    let mut s = 0;
    while s + k <= n {
        let x0 = extents[s].x_start.saturating_sub(pad);
        let x1 = (extents[s + k - 1].x_end + pad).min(image.width - 1);
        let mut crop = image.crop_columns(x0, x1);
        for px in crop.pixels.chunks_exact_mut(3) {
            if Rgb(px[0], px[1], px[2]) == spec.annotation_tint {
                px.copy_from_slice(&spec.background.to_array());
            }
        }
        out.push(crop);
        s += stride;
    }
    Ok(out)
}

/// Recovers OHLC from a rendered chart given its true price axis
/// `(min_low, max_high)`. Each recovered price is within one row quantum
/// `(max_high - min_low) / (height - 2 * margin - 1)` of the original.
pub fn inverse_parse(
    image: &RasterImage,
    spec: &RenderSpec,
    price_axis: (f64, f64),
) -> Result<Vec<ParsedCandle>, DecomposeError> {
    let (min_low, max_high) = price_axis;
    let palette = spec.palette();
    for y in 0..image.height {
        for x in 0..image.width {
            let c = image.get(x, y);
            if !palette.contains(&c) {
                return Err(DecomposeError::UnknownColor { x, y, color: c });
            }
        }
    }
    let extents = segment_columns(image, spec)?;

    struct Rows {
        high: usize,
        low: usize,
        top: usize,
        bottom: usize,
        dir: BodyDirection,
    }
    let mut rows = Vec::with_capacity(extents.len());
    for e in &extents {
        let cx = e.center();
        let occupied: Vec<usize> = (0..image.height)
            .filter(|&y| !is_blank(image.get(cx, y), spec))
            .collect();
        // An edge column only ever carries body pixels.
        let body: Vec<(usize, Rgb)> = (0..image.height)
            .map(|y| (y, image.get(e.x_start, y)))
            .filter(|&(_, c)| c == spec.up_color || c == spec.down_color)
            .collect();
        let (Some(&high), Some(&low)) = (occupied.first(), occupied.last()) else {
            return Err(DecomposeError::MissingBody { index: e.index });
        };
        let (Some(&(top, top_color)), Some(&(bottom, _))) = (body.first(), body.last()) else {
            return Err(DecomposeError::MissingBody { index: e.index });
        };
        let dir = if top_color == spec.up_color {
            BodyDirection::Up
        } else {
            BodyDirection::Down
        };
        rows.push(Rows {
            high,
            low,
            top,
            bottom,
            dir,
        });
    }

    if max_high <= min_low {
        let mut distinct: Vec<usize> = rows
            .iter()
            .flat_map(|r| [r.high, r.low, r.top, r.bottom])
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() > 1 {
            return Err(DecomposeError::DegenerateAxis {
                rows: distinct.len(),
            });
        }
    }

    let price = |row: usize| {
        if max_high <= min_low {
            min_low
        } else {
            spec.row_to_price(row, min_low, max_high)
        }
    };
    Ok(rows
        .iter()
        .map(|r| {
            let (top, bottom) = (price(r.top), price(r.bottom));
            let (open, close) = match r.dir {
                BodyDirection::Up => (bottom, top),
                BodyDirection::Down => (top, bottom),
            };
            ParsedCandle {
                open,
                high: price(r.high),
                low: price(r.low),
                close,
                direction: r.dir,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{synth_series, window, Candle, CandleWindow, SynthParams};
    use crate::raster::{render_pattern, render_window};
    use crate::pattern::{PatternKind, PatternMatch};

    fn synth_window(seed: u64, n: usize) -> CandleWindow {
        let s = synth_series(seed, n, &SynthParams::default()).unwrap();
        window(&s, n - 1, n).unwrap()
    }

    #[test]
    fn segments_match_layout() {
        let spec = RenderSpec::default();
        for n in [1, 3, 30] {
            let img = render_window(&synth_window(n as u64, n), &spec).unwrap();
            let ext = segment_columns(&img, &spec).unwrap();
            assert_eq!(ext.len(), n);
            for (i, e) in ext.iter().enumerate() {
                assert_eq!(e.x_start, spec.candle_x(i));
                assert_eq!(e.width(), spec.candle_px);
                assert_eq!(e.index, i);
            }
        }
    }

    #[test]
    fn blank_image_has_no_candles() {
        let spec = RenderSpec::default();
        let img = RasterImage::filled(20, 20, spec.background);
        assert_eq!(segment_columns(&img, &spec), Err(DecomposeError::NoCandlesFound));
        let tinted = RasterImage::filled(20, 20, spec.annotation_tint);
        assert_eq!(segment_columns(&tinted, &spec), Err(DecomposeError::NoCandlesFound));
    }

    #[test]
    fn subchart_counts() {
        let spec = RenderSpec::default();
        let img = render_window(&synth_window(1, 30), &spec).unwrap();
        let subs = subcharts(&img, &spec, 3, 1).unwrap();
        assert_eq!(subs.len(), 28);
        for s in &subs {
            assert_eq!(segment_columns(s, &spec).unwrap().len(), 3);
            assert_eq!(s.width, 3 * 5 + 2 * 2 + 2);
        }
        assert_eq!(subcharts(&img, &spec, 3, 2).unwrap().len(), 14);
        assert_eq!(subchart_count(30, 3, 1), 28);

        let three = render_window(&synth_window(2, 3), &spec).unwrap();
        let one = subcharts(&three, &spec, 3, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0], three.crop_columns(spec.margin_px - 1, three.width - spec.margin_px));

        let two = render_window(&synth_window(2, 2), &spec).unwrap();
        assert_eq!(
            subcharts(&two, &spec, 3, 1),
            Err(DecomposeError::TooFewCandles { needed: 3, found: 2 })
        );
    }

    #[test]
    fn subcharts_drop_tint() {
        let spec = RenderSpec::default();
        let w = synth_window(4, 30);
        let img = render_pattern(&w, &PatternMatch::new(PatternKind::MorningStar, 29), &spec)
            .unwrap();
        let subs = subcharts(&img, &spec, 3, 1).unwrap();
        assert_eq!(subs.len(), 1);
        assert!(subs[0]
            .pixels
            .chunks_exact(3)
            .all(|p| Rgb(p[0], p[1], p[2]) != spec.annotation_tint));
    }

    #[test]
    fn flat_candle_parses_flat() {
        let spec = RenderSpec::default();
        let w = CandleWindow {
            candles: vec![Candle::new(0, 7.0, 7.0, 7.0, 7.0)],
            source_end_index: 0,
        };
        let img = render_window(&w, &spec).unwrap();
        let p = inverse_parse(&img, &spec, (7.0, 7.0)).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].open, p[0].high, p[0].low, p[0].close), (7.0, 7.0, 7.0, 7.0));
        assert_eq!(p[0].direction, BodyDirection::Up);
    }

    #[test]
    fn degenerate_axis_with_tall_candles() {
        let spec = RenderSpec::default();
        let img = render_window(&synth_window(3, 5), &spec).unwrap();
        assert!(matches!(
            inverse_parse(&img, &spec, (1.0, 1.0)),
            Err(DecomposeError::DegenerateAxis { .. })
        ));
    }

    #[test]
    fn unknown_color_rejected() {
        let spec = RenderSpec::default();
        let mut img = render_window(&synth_window(3, 5), &spec).unwrap();
        img.set(0, 0, Rgb(1, 2, 3));
        assert!(matches!(
            inverse_parse(&img, &spec, (1.0, 2.0)),
            Err(DecomposeError::UnknownColor { x: 0, y: 0, .. })
        ));
    }

    #[test]
    fn round_trip_within_quantum() {
        let spec = RenderSpec::default();
        for seed in 0..20 {
            let w = synth_window(seed, 30);
            let (lo, hi) = w.price_bounds().unwrap();
            let q = (hi - lo) / spec.row_span() as f64;
            let img = render_window(&w, &spec).unwrap();
            let parsed = inverse_parse(&img, &spec, (lo, hi)).unwrap();
            for (c, p) in w.candles.iter().zip(&parsed) {
                for (t, r) in [(c.open, p.open), (c.high, p.high), (c.low, p.low), (c.close, p.close)] {
                    assert!((t - r).abs() <= q, "seed {seed}: {t} vs {r} (q={q})");
                }
                if c.close > c.open {
                    assert_eq!(p.direction, BodyDirection::Up);
                } else if c.close < c.open {
                    assert_eq!(p.direction, BodyDirection::Down);
                }
            }
        }
    }
}
