//! WebAssembly bindings for the static demo page in `www/`.

use candlenet::decomposer::{inverse_parse, subcharts, BodyDirection};
use candlenet::labeling::HISTORY_LEN;
use candlenet::market_data::{synth_series, window, CandleWindow, SynthParams};
use candlenet::pattern::{detect_all, PatternRuleParams};
use candlenet::raster::{render_window, RasterImage, RenderSpec};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// The last 30 candles of a seeded synthetic series, rendered once.
#[wasm_bindgen]
pub struct Chart {
    window: CandleWindow,
    spec: RenderSpec,
    image: RasterImage,
    patterns: String,
    pieces: Vec<RasterImage>,
}

#[wasm_bindgen]
impl Chart {
    /// `length` candles are generated so that patterns near the window start
    /// still have their trend context; only the last 30 are drawn.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, length: u32, volatility: f64) -> Result<Chart, JsError> {
        let params = SynthParams { volatility, ..SynthParams::default() };
        let length = (length as usize).max(HISTORY_LEN);
        let series = synth_series(u64::from(seed), length, &params).map_err(js_err)?;
        let win = window(&series, series.len() - 1, HISTORY_LEN).map_err(js_err)?;
        let spec = RenderSpec::default();
        let image = render_window(&win, &spec).map_err(js_err)?;
        let start = win.source_start_index();
        let found: Vec<serde_json::Value> = detect_all(&series, &PatternRuleParams::default())
            .into_iter()
            .filter(|m| m.end_index + 1 >= start + m.span)
            .map(|m| {
                serde_json::json!({
                    "kind": m.kind,
                    "direction": m.direction,
                    "first": m.start_index() - start,
                    "last": m.end_index - start,
                    "x0": spec.candle_x(m.start_index() - start),
                    "x1": spec.candle_x(m.end_index - start) + spec.candle_px - 1,
                })
            })
            .collect();
        let pieces = subcharts(&image, &spec, 3, 1).map_err(js_err)?;
        Ok(Chart {
            window: win,
            spec,
            image,
            patterns: serde_json::Value::from(found).to_string(),
            pieces,
        })
    }

    pub fn width(&self) -> u32 {
        self.image.width as u32
    }

    pub fn height(&self) -> u32 {
        self.image.height as u32
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.image.to_rgba()
    }

    /// JSON array of `{kind, direction, first, last, x0, x1}` in window
    /// coordinates.
    pub fn patterns(&self) -> String {
        self.patterns.clone()
    }

    pub fn subchart_count(&self) -> u32 {
        self.pieces.len() as u32
    }

    pub fn subchart_width(&self, index: u32) -> u32 {
        self.pieces.get(index as usize).map_or(0, |p| p.width as u32)
    }

    pub fn subchart_rgba(&self, index: u32) -> Vec<u8> {
        self.pieces.get(index as usize).map_or_else(Vec::new, RasterImage::to_rgba)
    }

    /// Parses the rendered pixels back to prices and returns JSON with the
    /// per-candle truth, the recovered values and the worst error in units
    /// of one pixel quantum.
    pub fn parse_back(&self) -> Result<String, JsError> {
        let (lo, hi) = self.window.price_bounds().ok_or_else(|| js_err("empty window"))?;
        let parsed = inverse_parse(&self.image, &self.spec, (lo, hi)).map_err(js_err)?;
        let quantum = (hi - lo) / self.spec.row_span() as f64;
        let mut worst = 0.0f64;
        let mut direction_errors = 0;
        let rows: Vec<serde_json::Value> = self
            .window
            .candles
            .iter()
            .zip(&parsed)
            .map(|(c, p)| {
                for (a, b) in [(c.open, p.open), (c.high, p.high), (c.low, p.low), (c.close, p.close)] {
                    worst = worst.max((a - b).abs());
                }
                let up = p.direction == BodyDirection::Up;
                if c.open != c.close && up != (c.close > c.open) {
                    direction_errors += 1;
                }
                serde_json::json!({
                    "true": [c.open, c.high, c.low, c.close],
                    "parsed": [p.open, p.high, p.low, p.close],
                })
            })
            .collect();
        let worst_quanta = if quantum > 0.0 { worst / quantum } else { 0.0 };
        Ok(serde_json::json!({
            "candles": rows,
            "quantum": quantum,
            "worst_error": worst,
            "worst_error_quanta": worst_quanta,
            "direction_errors": direction_errors,
        })
        .to_string())
    }
}
