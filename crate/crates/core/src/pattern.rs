//! Rule-based candlestick pattern detection.
//!
//! Every predicate is built from ratios of price differences, so results are
//! invariant to rescaling the series. Per-candle quantities:
//! `body = |close - open|`, `range = high - low`,
//! `upper_wick = high - max(open, close)`, `lower_wick = min(open, close) - low`.
//!
//! Trend context is taken from the `trend_lookback` closes immediately before
//! the pattern's first candle. With `m` their mean and `o` the first pattern
//! open, the context is *down* when `m > o` and `(m - o) / o >= trend_min_slope_frac`,
//! and *up* when `m < o` and `(o - m) / o >= trend_min_slope_frac`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{Candle, Series};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("{kind} at index {end_index} needs {needed} candles of history (series length {len})")]
    OutOfRange {
        kind: PatternKind,
        end_index: usize,
        needed: usize,
        len: usize,
    },
    #[error("invalid rule parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatternKind {
    Doji,
    Hammer,
    InvertedHammer,
    ShootingStar,
    BullishEngulfing,
    BearishEngulfing,
    MorningStar,
    EveningStar,
    ThreeWhiteSoldiers,
    ThreeBlackCrows,
}

impl PatternKind {
    /// Catalog order; `detect_all` reports kinds in this order per index.
    pub const ALL: [PatternKind; 10] = [
        PatternKind::Doji,
        PatternKind::Hammer,
        PatternKind::InvertedHammer,
        PatternKind::ShootingStar,
        PatternKind::BullishEngulfing,
        PatternKind::BearishEngulfing,
        PatternKind::MorningStar,
        PatternKind::EveningStar,
        PatternKind::ThreeWhiteSoldiers,
        PatternKind::ThreeBlackCrows,
    ];

    pub fn span(self) -> usize {
        use PatternKind::*;
        match self {
            Doji | Hammer | InvertedHammer | ShootingStar => 1,
            BullishEngulfing | BearishEngulfing => 2,
            MorningStar | EveningStar | ThreeWhiteSoldiers | ThreeBlackCrows => 3,
        }
    }

    pub fn direction(self) -> Direction {
        use PatternKind::*;
        match self {
            Doji => Direction::Neutral,
            Hammer | InvertedHammer | BullishEngulfing | MorningStar | ThreeWhiteSoldiers => {
                Direction::Bullish
            }
            ShootingStar | BearishEngulfing | EveningStar | ThreeBlackCrows => Direction::Bearish,
        }
    }

    pub fn name(self) -> &'static str {
        use PatternKind::*;
        match self {
            Doji => "Doji",
            Hammer => "Hammer",
            InvertedHammer => "InvertedHammer",
            ShootingStar => "ShootingStar",
            BullishEngulfing => "BullishEngulfing",
            BearishEngulfing => "BearishEngulfing",
            MorningStar => "MorningStar",
            EveningStar => "EveningStar",
            ThreeWhiteSoldiers => "ThreeWhiteSoldiers",
            ThreeBlackCrows => "ThreeBlackCrows",
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Bullish,
    Bearish,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatternMatch {
    pub kind: PatternKind,
    /// Index of the pattern's last candle.
    pub end_index: usize,
    pub span: usize,
    pub direction: Direction,
}

impl PatternMatch {
    pub fn new(kind: PatternKind, end_index: usize) -> Self {
        Self {
            kind,
            end_index,
            span: kind.span(),
            direction: kind.direction(),
        }
    }

    pub fn start_index(&self) -> usize {
        self.end_index + 1 - self.span
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternRuleParams {
    pub doji_body_frac: f64,
    pub long_wick_mult: f64,
    pub short_wick_frac: f64,
    pub star_gap_frac: f64,
    pub trend_lookback: usize,
    pub trend_min_slope_frac: f64,
}

impl Default for PatternRuleParams {
    fn default() -> Self {
        Self {
            doji_body_frac: 0.05,
            long_wick_mult: 2.0,
            short_wick_frac: 0.15,
            star_gap_frac: 0.3,
            trend_lookback: 5,
            trend_min_slope_frac: 0.0,
        }
    }
}

impl PatternRuleParams {
    pub fn validate(&self) -> Result<(), PatternError> {
        let ratios = [
            ("doji_body_frac", self.doji_body_frac),
            ("long_wick_mult", self.long_wick_mult),
            ("short_wick_frac", self.short_wick_frac),
            ("star_gap_frac", self.star_gap_frac),
        ];
        for (name, v) in ratios {
            if !(v.is_finite() && v > 0.0) {
                return Err(PatternError::BadParams(format!("{name} = {v} must be > 0")));
            }
        }
        if !(self.trend_min_slope_frac.is_finite() && self.trend_min_slope_frac >= 0.0) {
            return Err(PatternError::BadParams(
                "trend_min_slope_frac must be >= 0".into(),
            ));
        }
        if self.trend_lookback == 0 {
            return Err(PatternError::BadParams("trend_lookback must be >= 1".into()));
        }
        Ok(())
    }

    /// Smallest `end_index` at which `kind` can be evaluated.
    pub fn min_end_index(&self, kind: PatternKind) -> usize {
        kind.span() - 1 + self.trend_lookback
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trend {
    Up,
    Down,
    Flat,
}

fn trend_before(context: &[Candle], first_open: f64, min_slope: f64) -> Trend {
    let mean = context.iter().map(|c| c.close).sum::<f64>() / context.len() as f64;
    if mean > first_open && (mean - first_open) / first_open >= min_slope {
        Trend::Down
    } else if mean < first_open && (first_open - mean) / first_open >= min_slope {
        Trend::Up
    } else {
        Trend::Flat
    }
}

fn is_doji(c: &Candle, p: &PatternRuleParams) -> bool {
    let range = c.range();
    range == 0.0 || c.body() <= p.doji_body_frac * range
}

fn inverted_hammer_shape(c: &Candle, p: &PatternRuleParams) -> bool {
    let range = c.range();
    range > 0.0
        && c.upper_wick() >= p.long_wick_mult * c.body()
        && c.lower_wick() <= p.short_wick_frac * range
}

fn hammer_shape(c: &Candle, p: &PatternRuleParams) -> bool {
    let range = c.range();
    let body = c.body();
    range > 0.0
        && body > 0.0
        && c.lower_wick() >= p.long_wick_mult * body
        && c.upper_wick() <= p.short_wick_frac * range
}

fn engulfs(outer: &Candle, inner: &Candle) -> bool {
    let (olo, ohi) = (outer.open.min(outer.close), outer.open.max(outer.close));
    let (ilo, ihi) = (inner.open.min(inner.close), inner.open.max(inner.close));
    olo < ilo && ohi > ihi
}

fn body_midpoint(c: &Candle) -> f64 {
    0.5 * (c.open + c.close)
}

fn within_body(price: f64, c: &Candle) -> bool {
    price >= c.open.min(c.close) && price <= c.open.max(c.close)
}

/// Evaluates one pattern predicate with `end_index` as the last pattern candle.
pub fn match_at(
    series: &Series,
    end_index: usize,
    kind: PatternKind,
    params: &PatternRuleParams,
) -> Result<Option<PatternMatch>, PatternError> {
    let needed = params.min_end_index(kind);
    if end_index < needed || end_index >= series.len() {
        return Err(PatternError::OutOfRange {
            kind,
            end_index,
            needed: needed + 1,
            len: series.len(),
        });
    }
    let span = kind.span();
    let candles = series.candles();
    let first = end_index + 1 - span;
    let pat = &candles[first..=end_index];
    let context = &candles[first - params.trend_lookback..first];
    let trend = || trend_before(context, pat[0].open, params.trend_min_slope_frac);

    use PatternKind::*;
    let hit = match kind {
        Doji => is_doji(&pat[0], params),
        Hammer => hammer_shape(&pat[0], params) && trend() == Trend::Down,
        InvertedHammer => inverted_hammer_shape(&pat[0], params) && trend() == Trend::Down,
        ShootingStar => inverted_hammer_shape(&pat[0], params) && trend() == Trend::Up,
        BullishEngulfing => pat[0].is_bearish() && pat[1].is_bullish() && engulfs(&pat[1], &pat[0]),
        BearishEngulfing => pat[0].is_bullish() && pat[1].is_bearish() && engulfs(&pat[1], &pat[0]),
        MorningStar => {
            pat[0].is_bearish()
                && pat[1].body() <= params.star_gap_frac * pat[0].body()
                && pat[2].is_bullish()
                && pat[2].close > body_midpoint(&pat[0])
                && trend() == Trend::Down
        }
        EveningStar => {
            pat[0].is_bullish()
                && pat[1].body() <= params.star_gap_frac * pat[0].body()
                && pat[2].is_bearish()
                && pat[2].close < body_midpoint(&pat[0])
                && trend() == Trend::Up
        }
        ThreeWhiteSoldiers => {
            pat.iter().all(Candle::is_bullish)
                && pat.windows(2).all(|w| {
                    w[1].close > w[0].close && within_body(w[1].open, &w[0])
                })
        }
        ThreeBlackCrows => {
            pat.iter().all(Candle::is_bearish)
                && pat.windows(2).all(|w| {
                    w[1].close < w[0].close && within_body(w[1].open, &w[0])
                })
        }
    };
    Ok(hit.then(|| PatternMatch::new(kind, end_index)))
}

/// All matches over every admissible index, ordered by `(end_index, kind)`.
pub fn detect_all(series: &Series, params: &PatternRuleParams) -> Vec<PatternMatch> {
    let mut out = Vec::new();
    for end_index in 0..series.len() {
        for kind in PatternKind::ALL {
            if end_index < params.min_end_index(kind) {
                continue;
            }
            if let Ok(Some(m)) = match_at(series, end_index, kind, params) {
                out.push(m);
            }
        }
    }
    out
}

/// One JSON object per match: `{"kind":..,"end_index":..,"span":..,"direction":..}`.
pub fn to_json_lines(matches: &[PatternMatch]) -> String {
    let mut out = String::new();
    for m in matches {
        out.push_str(&serde_json::to_string(m).expect("serializable match"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{synth_series, SynthParams};

    fn series_of(candles: &[(f64, f64, f64, f64)]) -> Series {
        Series::new(
            "T",
            candles
                .iter()
                .enumerate()
                .map(|(i, &(o, h, l, c))| Candle::new(i as i64, o, h, l, c))
                .collect(),
        )
        .unwrap()
    }

    fn flat(n: usize, price: f64) -> Vec<(f64, f64, f64, f64)> {
        vec![(price, price, price, price); n]
    }

    #[test]
    fn doji_by_hand() {
        let mut c = flat(5, 100.0);
        c.push((100.0, 101.0, 99.0, 100.02));
        let s = series_of(&c);
        let m = match_at(&s, 5, PatternKind::Doji, &PatternRuleParams::default())
            .unwrap()
            .unwrap();
        assert_eq!(m.direction, Direction::Neutral);
        assert_eq!(m.span, 1);
    }

    #[test]
    fn bullish_engulfing_by_hand() {
        let mut c: Vec<_> = (0..5).map(|i| {
            let p = 120.0 - 2.0 * i as f64;
            (p, p + 1.0, p - 3.0, p - 2.0)
        }).collect();
        c.push((105.0, 106.0, 99.0, 100.0));
        c.push((99.0, 107.0, 98.0, 106.0));
        let s = series_of(&c);
        let p = PatternRuleParams::default();
        let m = match_at(&s, 6, PatternKind::BullishEngulfing, &p).unwrap().unwrap();
        assert_eq!(m.direction, Direction::Bullish);
        assert_eq!(m.start_index(), 5);
        assert_eq!(match_at(&s, 6, PatternKind::BearishEngulfing, &p).unwrap(), None);
    }

    #[test]
    fn hammer_needs_down_context() {
        // lower wick 6, body 1, upper wick 0.1
        let hammer = (100.0, 101.1, 94.0, 101.0);
        let mut down: Vec<_> = (0..5).map(|i| {
            let p = 110.0 - i as f64;
            (p + 0.5, p + 1.0, p - 1.0, p)
        }).collect();
        down.push(hammer);
        let p = PatternRuleParams::default();
        assert!(match_at(&series_of(&down), 5, PatternKind::Hammer, &p).unwrap().is_some());

        let mut up: Vec<_> = (0..5).map(|i| {
            let p = 90.0 + i as f64;
            (p - 0.5, p + 1.0, p - 1.0, p)
        }).collect();
        up.push(hammer);
        assert!(match_at(&series_of(&up), 5, PatternKind::Hammer, &p).unwrap().is_none());
    }

    #[test]
    fn shooting_star_needs_up_context() {
        // upper wick 6, body 0.5, lower wick 0.1
        let star = (100.0, 106.0, 99.4, 99.5);
        let mut up: Vec<_> = (0..5).map(|i| {
            let p = 90.0 + i as f64;
            (p - 0.5, p + 1.0, p - 1.0, p)
        }).collect();
        up.push(star);
        let s = series_of(&up);
        let p = PatternRuleParams::default();
        assert!(match_at(&s, 5, PatternKind::ShootingStar, &p).unwrap().is_some());
        assert!(match_at(&s, 5, PatternKind::InvertedHammer, &p).unwrap().is_none());
    }

    #[test]
    fn morning_star_and_soldiers() {
        let mut c: Vec<_> = (0..5).map(|i| {
            let p = 120.0 - 2.0 * i as f64;
            (p, p + 0.5, p - 2.5, p - 2.0)
        }).collect();
        c.push((110.0, 110.5, 101.5, 102.0));
        c.push((101.0, 102.0, 100.0, 101.5));
        c.push((102.0, 108.5, 101.5, 108.0));
        let s = series_of(&c);
        let p = PatternRuleParams::default();
        assert!(match_at(&s, 7, PatternKind::MorningStar, &p).unwrap().is_some());
        assert!(match_at(&s, 7, PatternKind::EveningStar, &p).unwrap().is_none());

        let mut c = flat(5, 100.0);
        c.push((100.0, 102.5, 99.5, 102.0));
        c.push((101.0, 104.5, 100.5, 104.0));
        c.push((103.0, 106.5, 102.5, 106.0));
        let s = series_of(&c);
        assert!(match_at(&s, 7, PatternKind::ThreeWhiteSoldiers, &p).unwrap().is_some());
        assert!(match_at(&s, 7, PatternKind::ThreeBlackCrows, &p).unwrap().is_none());
    }

    #[test]
    fn insufficient_history_is_out_of_range() {
        let s = series_of(&flat(10, 1.0));
        let p = PatternRuleParams::default();
        assert!(matches!(
            match_at(&s, 4, PatternKind::Doji, &p),
            Err(PatternError::OutOfRange { .. })
        ));
        assert!(match_at(&s, 6, PatternKind::ThreeBlackCrows, &p).is_err());
        assert!(match_at(&s, 7, PatternKind::ThreeBlackCrows, &p).is_ok());
        assert!(match_at(&s, 10, PatternKind::Doji, &p).is_err());
    }

    #[test]
    fn constant_series_only_doji() {
        let s = series_of(&flat(40, 50.0));
        let p = PatternRuleParams::default();
        let m = detect_all(&s, &p);
        assert_eq!(m.len(), 35);
        assert!(m.iter().all(|m| m.kind == PatternKind::Doji));
        assert_eq!(m[0].end_index, 5);
        assert_eq!(m.last().unwrap().end_index, 39);
    }

    #[test]
    fn detect_all_is_ordered() {
        let s = synth_series(11, 300, &SynthParams::default()).unwrap();
        let m = detect_all(&s, &PatternRuleParams::default());
        assert!(!m.is_empty());
        assert!(m.windows(2).all(|w| (w[0].end_index, w[0].kind) < (w[1].end_index, w[1].kind)));
    }

    #[test]
    fn json_line_shape() {
        let line = to_json_lines(&[PatternMatch::new(PatternKind::Hammer, 12)]);
        assert_eq!(
            line,
            "{\"kind\":\"Hammer\",\"end_index\":12,\"span\":1,\"direction\":\"Bullish\"}\n"
        );
    }

    #[test]
    fn params_validation() {
        assert!(PatternRuleParams::default().validate().is_ok());
        let bad = PatternRuleParams { trend_lookback: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PatternRuleParams { doji_body_frac: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
