//! Turns pattern occurrences into labeled samples with a strong/weak
//! trend-strength target.
//!
//! A move is *strong* when the close `horizon` candles after the pattern is at
//! least `strength_mult` average true ranges away from the pattern's close.
//! Ties (including the constant-series case `0 >= 0`) count as strong.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{window, CandleWindow, Series};
use crate::pattern::{detect_all, Direction, PatternKind, PatternMatch, PatternRuleParams};

/// Default history window length, pattern candles included.
pub const HISTORY_LEN: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("index {index} out of range: {reason}")]
    OutOfRange { index: usize, reason: String },
    #[error("invalid labeler parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrengthLabel {
    Strong,
    Weak,
}

impl StrengthLabel {
    /// Strong = 1, Weak = 0.
    pub fn as_target(self) -> f32 {
        match self {
            StrengthLabel::Strong => 1.0,
            StrengthLabel::Weak => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelerParams {
    pub horizon: usize,
    pub atr_period: usize,
    pub strength_mult: f64,
}

impl Default for LabelerParams {
    fn default() -> Self {
        Self {
            horizon: 5,
            atr_period: 14,
            strength_mult: 1.0,
        }
    }
}

impl LabelerParams {
    pub fn validate(&self) -> Result<(), LabelError> {
        if self.horizon == 0 {
            return Err(LabelError::BadParams("horizon must be >= 1".into()));
        }
        if self.atr_period == 0 {
            return Err(LabelError::BadParams("atr_period must be >= 1".into()));
        }
        if !(self.strength_mult.is_finite() && self.strength_mult > 0.0) {
            return Err(LabelError::BadParams("strength_mult must be > 0".into()));
        }
        Ok(())
    }
}

/// Mean true range over candles `i - n + 1 ..= i`. Needs `i >= n` so every
/// term has a previous close.
pub fn atr(series: &Series, i: usize, n: usize) -> Result<f64, LabelError> {
    if n == 0 || i < n || i >= series.len() {
        return Err(LabelError::OutOfRange {
            index: i,
            reason: format!("atr over {n} candles needs {n} <= i < {}", series.len()),
        });
    }
    let c = series.candles();
    let total: f64 = (i + 1 - n..=i)
        .map(|t| {
            let prev_close = c[t - 1].close;
            (c[t].high - c[t].low)
                .max((c[t].high - prev_close).abs())
                .max((c[t].low - prev_close).abs())
        })
        .sum();
    Ok(total / n as f64)
}

pub fn trend_strength(
    series: &Series,
    end_index: usize,
    params: &LabelerParams,
) -> Result<StrengthLabel, LabelError> {
    if end_index + params.horizon >= series.len() {
        return Err(LabelError::OutOfRange {
            index: end_index,
            reason: format!("no {}-candle future", params.horizon),
        });
    }
    let scale = atr(series, end_index, params.atr_period)?;
    let c = series.candles();
    let moved = (c[end_index + params.horizon].close - c[end_index].close).abs();
    Ok(if moved >= params.strength_mult * scale {
        StrengthLabel::Strong
    } else {
        StrengthLabel::Weak
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample_id: String,
    pub symbol: String,
    /// Ends at `pattern.end_index`; the pattern candles are its tail.
    pub history: CandleWindow,
    pub pattern: PatternMatch,
    pub strength: StrengthLabel,
}

impl LabeledSample {
    pub fn end_index(&self) -> usize {
        self.pattern.end_index
    }

    pub fn pattern_window(&self) -> CandleWindow {
        self.history
            .tail(self.pattern.span)
            .expect("pattern span fits inside history")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<LabeledSample>,
    pub total_matches: usize,
    /// Matches dropped for lack of history or future candles.
    pub excluded: usize,
}

impl SampleSet {
    pub fn class_balance(&self) -> ClassBalance {
        ClassBalance::of(self.samples.iter().map(|s| s.strength))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassBalance {
    pub strong: usize,
    pub weak: usize,
}

impl ClassBalance {
    pub fn of(labels: impl IntoIterator<Item = StrengthLabel>) -> Self {
        let mut b = ClassBalance::default();
        for l in labels {
            match l {
                StrengthLabel::Strong => b.strong += 1,
                StrengthLabel::Weak => b.weak += 1,
            }
        }
        b
    }
}

pub fn sample_id(symbol: &str, end_index: usize, kind: PatternKind) -> String {
    format!("{symbol}:{end_index}:{kind}")
}

/// One sample per detected pattern that has a full `w`-candle history, an
/// ATR lookback and a `horizon`-candle future.
pub fn build_samples(
    series: &Series,
    pattern_params: &PatternRuleParams,
    labeler: &LabelerParams,
    w: usize,
) -> SampleSet {
    let matches = detect_all(series, pattern_params);
    let total_matches = matches.len();
    let mut samples = Vec::new();
    for m in matches {
        let Ok(history) = window(series, m.end_index, w) else {
            continue;
        };
        if history.len() < m.span {
            continue;
        }
        let Ok(strength) = trend_strength(series, m.end_index, labeler) else {
            continue;
        };
        samples.push(LabeledSample {
            sample_id: sample_id(series.symbol(), m.end_index, m.kind),
            symbol: series.symbol().to_string(),
            history,
            pattern: m,
            strength,
        });
    }
    let excluded = total_matches - samples.len();
    SampleSet {
        samples,
        total_matches,
        excluded,
    }
}

/// One line of a dataset's `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub symbol: String,
    pub end_index: usize,
    pub kind: PatternKind,
    pub span: usize,
    pub direction: Direction,
    pub strength: StrengthLabel,
    pub history_image_path: Option<String>,
    pub pattern_image_path: Option<String>,
}

impl ManifestRecord {
    pub fn from_sample(s: &LabeledSample) -> Self {
        Self {
            sample_id: s.sample_id.clone(),
            symbol: s.symbol.clone(),
            end_index: s.pattern.end_index,
            kind: s.pattern.kind,
            span: s.pattern.span,
            direction: s.pattern.direction,
            strength: s.strength,
            history_image_path: None,
            pattern_image_path: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{synth_series, Candle, SynthParams};

    fn constant(n: usize) -> Series {
        Series::new("C", (0..n).map(|i| Candle::new(i as i64, 10.0, 10.0, 10.0, 10.0)).collect())
            .unwrap()
    }

    #[test]
    fn atr_constant_is_zero() {
        let s = constant(20);
        for i in 1..20 {
            assert_eq!(atr(&s, i, 1).unwrap(), 0.0);
        }
        assert_eq!(atr(&s, 14, 14).unwrap(), 0.0);
    }

    #[test]
    fn atr_two_candle_toy() {
        let s = Series::new(
            "T",
            vec![
                Candle::new(0, 100.0, 100.0, 100.0, 100.0),
                Candle::new(1, 102.0, 106.0, 101.0, 105.0),
            ],
        )
        .unwrap();
        assert_eq!(atr(&s, 1, 1).unwrap(), 6.0);
        assert!(atr(&s, 0, 1).is_err());
        assert!(atr(&s, 1, 2).is_err());
    }

    #[test]
    fn strength_thresholds() {
        // closes: flat at 100 with range 2 so atr = 2; then jump by 5.
        let mut candles: Vec<Candle> = (0..20)
            .map(|i| Candle::new(i, 100.0, 101.0, 99.0, 100.0))
            .collect();
        candles[19] = Candle::new(19, 104.0, 106.0, 104.0, 105.0);
        let s = Series::new("T", candles).unwrap();
        let p = LabelerParams { horizon: 4, atr_period: 14, strength_mult: 1.0 };
        assert_eq!(atr(&s, 15, 14).unwrap(), 2.0);
        assert_eq!(trend_strength(&s, 15, &p).unwrap(), StrengthLabel::Strong);
        // Zero move with positive atr.
        let p1 = LabelerParams { horizon: 1, ..p };
        assert_eq!(trend_strength(&s, 15, &p1).unwrap(), StrengthLabel::Weak);
        // k larger than move/atr = 2.5
        let p3 = LabelerParams { strength_mult: 3.0, ..p };
        assert_eq!(trend_strength(&s, 15, &p3).unwrap(), StrengthLabel::Weak);
        assert!(trend_strength(&s, 16, &p).is_err());
    }

    #[test]
    fn constant_series_is_strong_by_convention() {
        let s = constant(30);
        assert_eq!(
            trend_strength(&s, 20, &LabelerParams::default()).unwrap(),
            StrengthLabel::Strong
        );
    }

    #[test]
    fn constant_sixty_gives_twenty_six_samples() {
        let s = constant(60);
        let set = build_samples(&s, &PatternRuleParams::default(), &LabelerParams::default(), 30);
        assert_eq!(set.samples.len(), 26);
        assert_eq!(set.samples[0].end_index(), 29);
        assert_eq!(set.samples[25].end_index(), 54);
        assert!(set.samples.iter().all(|s| s.strength == StrengthLabel::Strong));
        // Doji matches at 5..=59.
        assert_eq!(set.total_matches, 55);
        assert_eq!(set.excluded, 29);
        assert_eq!(set.samples[0].sample_id, "C:29:Doji");
        assert_eq!(set.class_balance(), ClassBalance { strong: 26, weak: 0 });
    }

    #[test]
    fn early_matches_excluded() {
        let s = constant(60);
        let set = build_samples(&s, &PatternRuleParams::default(), &LabelerParams::default(), 30);
        assert!(set.samples.iter().all(|x| x.end_index() != 20));
    }

    #[test]
    fn no_matches_no_samples() {
        let s = constant(4);
        let set = build_samples(&s, &PatternRuleParams::default(), &LabelerParams::default(), 30);
        assert!(set.samples.is_empty());
        assert_eq!(set.excluded, 0);
    }

    #[test]
    fn samples_carry_pattern_tail() {
        let s = synth_series(5, 400, &SynthParams::default()).unwrap();
        let set = build_samples(&s, &PatternRuleParams::default(), &LabelerParams::default(), 30);
        assert!(!set.samples.is_empty());
        for x in &set.samples {
            assert_eq!(x.history.len(), 30);
            assert_eq!(x.history.source_end_index, x.end_index());
            let tail = x.pattern_window();
            assert_eq!(tail.candles[..], s.candles()[x.pattern.start_index()..=x.end_index()]);
            assert!(x.end_index() + 5 < s.len());
        }
    }
}
