//! OHLC series: CSV ingestion, seeded synthetic generation and window slicing.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketDataError {
    #[error("header has no column named {0:?}")]
    MissingColumn(String),
    #[error("bad row at line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("timestamps not strictly increasing at line {line} ({prev} then {next})")]
    NonMonotonicDates { line: usize, prev: i64, next: i64 },
    #[error("invalid candle at position {index}: {reason}")]
    InvalidCandle { index: usize, reason: String },
    #[error("bad synthetic parameters: {0}")]
    BadParams(String),
    #[error("window [{start}, {end_index}] out of range for series of length {len}")]
    OutOfRange { start: i64, end_index: usize, len: usize },
    #[error("csv error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, MarketDataError>;

/// One OHLC bar. `timestamp` is a day index (days since 1970-01-01) for
/// calendar-dated input, or whatever integer clock the source used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candle {
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl Candle {
    pub fn new(timestamp: i64, open: f64, high: f64, low: f64, close: f64) -> Self {
        Self {
            timestamp,
            open,
            high,
            low,
            close,
        }
    }

    /// Checks positivity, finiteness and `low <= min(open, close) <= max(open, close) <= high`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !v.is_finite() {
                return Err(format!("{name} is not finite"));
            }
            if v <= 0.0 {
                return Err(format!("{name} = {v} is not positive"));
            }
        }
        if self.low > self.high {
            return Err(format!("low {} > high {}", self.low, self.high));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above body", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below body", self.high));
        }
        Ok(())
    }

    pub fn body(&self) -> f64 {
        (self.close - self.open).abs()
    }

    pub fn range(&self) -> f64 {
        self.high - self.low
    }

    pub fn upper_wick(&self) -> f64 {
        self.high - self.open.max(self.close)
    }

    pub fn lower_wick(&self) -> f64 {
        self.open.min(self.close) - self.low
    }

    pub fn is_bullish(&self) -> bool {
        self.close > self.open
    }

    pub fn is_bearish(&self) -> bool {
        self.close < self.open
    }

    /// Multiplies all four prices by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            timestamp: self.timestamp,
            open: self.open * factor,
            high: self.high * factor,
            low: self.low * factor,
            close: self.close * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    symbol: String,
    candles: Vec<Candle>,
}

impl Series {
    /// Validates every candle and the strict timestamp ordering.
    pub fn new(symbol: impl Into<String>, candles: Vec<Candle>) -> Result<Self> {
        for (i, c) in candles.iter().enumerate() {
            c.validate()
                .map_err(|reason| MarketDataError::InvalidCandle { index: i, reason })?;
        }
        for (i, pair) in candles.windows(2).enumerate() {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(MarketDataError::NonMonotonicDates {
                    line: i + 1,
                    prev: pair[0].timestamp,
                    next: pair[1].timestamp,
                });
            }
        }
        Ok(Self {
            symbol: symbol.into(),
            candles,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn candles(&self) -> &[Candle] {
        &self.candles
    }

    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Candle> {
        self.candles.get(index)
    }

    /// Returns a copy with every price multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.symbol.clone(),
            self.candles.iter().map(|c| c.scaled(factor)).collect(),
        )
    }
}

impl std::ops::Index<usize> for Series {
    type Output = Candle;

    fn index(&self, index: usize) -> &Candle {
        &self.candles[index]
    }
}

/// A contiguous slice of a series ending at `source_end_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandleWindow {
    pub candles: Vec<Candle>,
    pub source_end_index: usize,
}

impl CandleWindow {
    pub fn len(&self) -> usize {
        self.candles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candles.is_empty()
    }

    /// Index of the first candle in the parent series.
    pub fn source_start_index(&self) -> usize {
        self.source_end_index + 1 - self.candles.len()
    }

    /// `(min_low, max_high)` over the window.
    pub fn price_bounds(&self) -> Option<(f64, f64)> {
        price_bounds(&self.candles)
    }

    /// The trailing `n` candles as their own window.
    pub fn tail(&self, n: usize) -> Option<CandleWindow> {
        if n == 0 || n > self.candles.len() {
            return None;
        }
        Some(CandleWindow {
            candles: self.candles[self.candles.len() - n..].to_vec(),
            source_end_index: self.source_end_index,
        })
    }
}

pub fn price_bounds(candles: &[Candle]) -> Option<(f64, f64)> {
    if candles.is_empty() {
        return None;
    }
    let lo = candles.iter().map(|c| c.low).fold(f64::INFINITY, f64::min);
    let hi = candles
        .iter()
        .map(|c| c.high)
        .fold(f64::NEG_INFINITY, f64::max);
    Some((lo, hi))
}

/// Returns `series[end_index - w + 1 ..= end_index]`.
pub fn window(series: &Series, end_index: usize, w: usize) -> Result<CandleWindow> {
    let start = end_index as i64 - w as i64 + 1;
    if w == 0 || start < 0 || end_index >= series.len() {
        return Err(MarketDataError::OutOfRange {
            start,
            end_index,
            len: series.len(),
        });
    }
    Ok(CandleWindow {
        candles: series.candles[start as usize..=end_index].to_vec(),
        source_end_index: end_index,
    })
}

/// CSV header names for each field. Defaults follow the usual exchange
/// download layout `Date,Open,High,Low,Close`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            date: "Date".into(),
            open: "Open".into(),
            high: "High".into(),
            low: "Low".into(),
            close: "Close".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadRowPolicy {
    Strict,
    #[default]
    SkipWithWarning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvImport {
    pub series: Series,
    pub skipped: Vec<SkippedRow>,
}

/// Parses a date cell: a bare integer is taken as-is, otherwise the leading
/// `YYYY-MM-DD` is converted to days since 1970-01-01.
pub fn parse_timestamp(cell: &str) -> Option<i64> {
    let cell = cell.trim();
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    let date = NaiveDate::parse_from_str(cell.get(..10)?, "%Y-%m-%d").ok()?;
    Some(date.signed_duration_since(epoch()).num_days())
}

pub fn format_timestamp(day_index: i64) -> String {
    match epoch().checked_add_signed(chrono::Duration::days(day_index)) {
        Some(d) => d.format("%Y-%m-%d").to_string(),
        None => day_index.to_string(),
    }
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

/// Parses a header + rows CSV into a validated series.
///
/// Rows with unparseable or invariant-violating prices fail the whole parse
/// under [`BadRowPolicy::Strict`] and are dropped (and listed in
/// [`CsvImport::skipped`]) otherwise. Out-of-order dates always fail.
pub fn parse_csv(
    text: &str,
    symbol: &str,
    columns: &ColumnMap,
    policy: BadRowPolicy,
) -> Result<CsvImport> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| MarketDataError::Csv(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MarketDataError::MissingColumn(name.to_string()))
    };
    let idx = [
        col(&columns.date)?,
        col(&columns.open)?,
        col(&columns.high)?,
        col(&columns.low)?,
        col(&columns.close)?,
    ];

    let mut candles: Vec<Candle> = Vec::new();
    let mut skipped = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        // Line 1 is the header.
        let line = row_no + 2;
        let record = record.map_err(|e| MarketDataError::Csv(e.to_string()))?;
        match parse_row(&record, &idx) {
            Ok(candle) => {
                if let Some(prev) = candles.last() {
                    if candle.timestamp <= prev.timestamp {
                        return Err(MarketDataError::NonMonotonicDates {
                            line,
                            prev: prev.timestamp,
                            next: candle.timestamp,
                        });
                    }
                }
                candles.push(candle);
            }
            Err(reason) => match policy {
                BadRowPolicy::Strict => return Err(MarketDataError::BadRow { line, reason }),
                BadRowPolicy::SkipWithWarning => skipped.push(SkippedRow { line, reason }),
            },
        }
    }
    Ok(CsvImport {
        series: Series::new(symbol, candles)?,
        skipped,
    })
}

fn parse_row(record: &csv::StringRecord, idx: &[usize; 5]) -> std::result::Result<Candle, String> {
    let cell = |i: usize| record.get(idx[i]).ok_or_else(|| "missing field".to_string());
    let ts = parse_timestamp(cell(0)?).ok_or_else(|| format!("bad date {:?}", cell(0).unwrap_or("")))?;
    let mut prices = [0.0; 4];
    for (k, p) in prices.iter_mut().enumerate() {
        let raw = cell(k + 1)?;
        *p = raw
            .parse::<f64>()
            .map_err(|_| format!("unparseable number {raw:?}"))?;
    }
    let candle = Candle::new(ts, prices[0], prices[1], prices[2], prices[3]);
    candle.validate()?;
    Ok(candle)
}

/// Formats a price with at most 9 fractional digits, trailing zeros trimmed.
pub fn format_price(p: f64) -> String {
    let s = format!("{p:.9}");
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// Writes `Date,Open,High,Low,Close` with ISO dates.
pub fn write_csv(series: &Series) -> String {
    let mut out = String::from("Date,Open,High,Low,Close\n");
    for c in series.candles() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            format_timestamp(c.timestamp),
            format_price(c.open),
            format_price(c.high),
            format_price(c.low),
            format_price(c.close)
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub start_price: f64,
    /// Per-step log drift.
    pub drift: f64,
    /// Per-step log volatility.
    pub volatility: f64,
    /// Scale of the log-normal wick extensions beyond the body.
    pub wick_scale: f64,
    /// Day index of the first candle.
    pub start_timestamp: i64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            start_price: 100.0,
            drift: 0.0,
            volatility: 0.02,
            wick_scale: 0.01,
            // 2017-01-01
            start_timestamp: 17_167,
        }
    }
}

/// Geometric random walk.
///
/// `open[0] = start_price`, `open[t] = close[t-1]`,
/// `close[t] = open[t] * exp(drift + volatility * z)`, then
/// `high = max(open, close) * exp(wick_scale * |z_hi|)` and
/// `low = min(open, close) * exp(-wick_scale * |z_lo|)`. Per step the
/// normals are drawn in the order `z, z_hi, z_lo`.
pub fn synth_series(seed: u64, n: usize, params: &SynthParams) -> Result<Series> {
    if n == 0 {
        return Err(MarketDataError::BadParams("n must be at least 1".into()));
    }
    if !(params.volatility.is_finite() && params.volatility >= 0.0) {
        return Err(MarketDataError::BadParams(format!(
            "volatility {} must be finite and non-negative",
            params.volatility
        )));
    }
    if !(params.start_price.is_finite() && params.start_price > 0.0) {
        return Err(MarketDataError::BadParams(format!(
            "start price {} must be positive",
            params.start_price
        )));
    }
    if !(params.wick_scale.is_finite() && params.wick_scale >= 0.0) {
        return Err(MarketDataError::BadParams(format!(
            "wick scale {} must be finite and non-negative",
            params.wick_scale
        )));
    }
    if !params.drift.is_finite() {
        return Err(MarketDataError::BadParams("drift must be finite".into()));
    }

    let mut rng = SeededRng::new(seed);
    let mut candles = Vec::with_capacity(n);
    let mut open = params.start_price;
    for t in 0..n {
        let z = rng.normal();
        let z_hi = rng.normal().abs();
        let z_lo = rng.normal().abs();
        let close = open * (params.drift + params.volatility * z).exp();
        let high = open.max(close) * (params.wick_scale * z_hi).exp();
        let low = open.min(close) * (-params.wick_scale * z_lo).exp();
        candles.push(Candle::new(
            params.start_timestamp + t as i64,
            open,
            high,
            low,
            close,
        ));
        open = close;
    }
    Series::new(format!("SYN{seed}"), candles)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Date,Open,High,Low,Close\n";

    #[test]
    fn parses_single_row() {
        let text = format!("{HEADER}2017-01-03,100.0,102.0,99.0,101.0\n");
        let out = parse_csv(&text, "X", &ColumnMap::default(), BadRowPolicy::Strict).unwrap();
        assert_eq!(out.series.len(), 1);
        let c = out.series[0];
        assert_eq!((c.open, c.high, c.low, c.close), (100.0, 102.0, 99.0, 101.0));
        assert_eq!(format_timestamp(c.timestamp), "2017-01-03");
    }

    #[test]
    fn low_above_high_is_bad_row_in_strict_mode() {
        let text = format!("{HEADER}2017-01-03,100.0,102.0,103.0,101.0\n");
        let err = parse_csv(&text, "X", &ColumnMap::default(), BadRowPolicy::Strict).unwrap_err();
        assert!(matches!(err, MarketDataError::BadRow { line: 2, .. }));
    }

    #[test]
    fn skip_policy_drops_bad_rows() {
        let text = format!(
            "{HEADER}2017-01-03,100,102,99,101\n2017-01-04,NaN,1,1,1\n2017-01-05,101,103,100,102\n"
        );
        let out = parse_csv(&text, "X", &ColumnMap::default(), BadRowPolicy::default()).unwrap();
        assert_eq!(out.series.len(), 2);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].line, 3);
    }

    #[test]
    fn thirty_rows_are_strictly_increasing() {
        let mut text = HEADER.to_string();
        for d in 0..30 {
            text.push_str(&format!("{},10,11,9,10.5\n", format_timestamp(17_000 + d)));
        }
        let s = parse_csv(&text, "X", &ColumnMap::default(), BadRowPolicy::Strict)
            .unwrap()
            .series;
        assert_eq!(s.len(), 30);
        assert!(s.candles().windows(2).all(|w| w[1].timestamp > w[0].timestamp));
    }

    #[test]
    fn missing_column() {
        let text = "Date,Open,Max,Min,Close\n2017-01-03,1,2,0.5,1\n";
        let err = parse_csv(text, "X", &ColumnMap::default(), BadRowPolicy::Strict).unwrap_err();
        assert_eq!(err, MarketDataError::MissingColumn("High".into()));
        let map = ColumnMap {
            high: "Max".into(),
            low: "Min".into(),
            ..ColumnMap::default()
        };
        assert_eq!(parse_csv(text, "X", &map, BadRowPolicy::Strict).unwrap().series.len(), 1);
    }

    #[test]
    fn out_of_order_dates_fail() {
        let text = format!("{HEADER}2017-01-04,1,2,0.5,1\n2017-01-03,1,2,0.5,1\n");
        let err = parse_csv(&text, "X", &ColumnMap::default(), BadRowPolicy::default()).unwrap_err();
        assert!(matches!(err, MarketDataError::NonMonotonicDates { line: 3, .. }));
    }

    #[test]
    fn price_formatting_trims() {
        assert_eq!(format_price(100.0), "100");
        assert_eq!(format_price(1.5), "1.5");
        assert_eq!(format_price(0.1234567891234), "0.123456789");
    }

    #[test]
    fn synth_is_deterministic() {
        let p = SynthParams::default();
        let a = synth_series(7, 100, &p).unwrap();
        let b = synth_series(7, 100, &p).unwrap();
        assert_eq!(write_csv(&a), write_csv(&b));
        assert_eq!(a, b);
        let c = synth_series(8, 100, &p).unwrap();
        assert!(a.candles().iter().zip(c.candles()).any(|(x, y)| x != y));
    }

    #[test]
    fn degenerate_walk_is_flat() {
        let p = SynthParams {
            volatility: 0.0,
            wick_scale: 0.0,
            ..SynthParams::default()
        };
        let s = synth_series(1, 20, &p).unwrap();
        for c in s.candles() {
            assert_eq!((c.open, c.high, c.low, c.close), (100.0, 100.0, 100.0, 100.0));
        }
    }

    #[test]
    fn synth_rejects_bad_params() {
        let p = SynthParams::default();
        assert!(synth_series(1, 0, &p).is_err());
        for bad in [
            SynthParams { volatility: -0.1, ..p },
            SynthParams { start_price: 0.0, ..p },
            SynthParams { start_price: -5.0, ..p },
        ] {
            assert!(matches!(synth_series(1, 10, &bad), Err(MarketDataError::BadParams(_))));
        }
    }

    #[test]
    fn window_slices() {
        let s = synth_series(1, 100, &SynthParams::default()).unwrap();
        let w = window(&s, 50, 30).unwrap();
        assert_eq!(w.len(), 30);
        assert_eq!(w.source_start_index(), 21);
        assert_eq!(w.candles[..], s.candles()[21..=50]);

        let short = synth_series(1, 30, &SynthParams::default()).unwrap();
        assert_eq!(window(&short, 29, 30).unwrap().candles, short.candles());
        assert!(matches!(window(&short, 10, 30), Err(MarketDataError::OutOfRange { .. })));
        assert!(window(&short, 30, 1).is_err());
        assert!(window(&short, 5, 0).is_err());
    }
}
