use candlenet::decomposer::{segment_columns, subchart_count, subcharts};
use candlenet::labeling::{trend_strength, LabelerParams};
use candlenet::market_data::{parse_csv, synth_series, window, write_csv, BadRowPolicy, Candle, ColumnMap, Series, SynthParams};
use candlenet::metrics::{evaluate, roc_auc};
use candlenet::pattern::{detect_all, match_at, PatternKind, PatternMatch, PatternRuleParams};
use candlenet::raster::{render_window, RenderSpec};
use proptest::prelude::*;

/// Candles on an integer tick grid: exact under power-of-two and integer scaling.
fn tick_candles(max_len: usize) -> impl Strategy<Value = Vec<Candle>> {
    prop::collection::vec((-2i32..=2, -4i32..=4, 0i32..=3, 0i32..=3), 1..max_len).prop_map(|steps| {
        let mut prev = 500.0;
        steps
            .into_iter()
            .enumerate()
            .map(|(t, (gap, body, up, down))| {
                let open: f64 = prev + f64::from(gap);
                let close = open + f64::from(body);
                prev = close;
                Candle::new(
                    t as i64,
                    open,
                    open.max(close) + f64::from(up),
                    open.min(close) - f64::from(down),
                    close,
                )
            })
            .collect()
    })
}

fn series(candles: Vec<Candle>) -> Series {
    Series::new("P", candles).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..120, vol in 0.0f64..0.08) {
        let s = synth_series(seed, n, &SynthParams { volatility: vol, ..SynthParams::default() }).unwrap();
        let text = write_csv(&s);
        let back = parse_csv(&text, s.symbol(), &ColumnMap::default(), BadRowPolicy::Strict).unwrap();
        prop_assert!(back.skipped.is_empty());
        prop_assert_eq!(back.series.len(), n);
        for (a, b) in s.candles().iter().zip(back.series.candles()) {
            prop_assert_eq!(a.timestamp, b.timestamp);
            for (x, y) in [(a.open, b.open), (a.high, b.high), (a.low, b.low), (a.close, b.close)] {
                prop_assert!((x - y).abs() <= 5e-10 * x.abs().max(1.0));
            }
        }
        prop_assert_eq!(write_csv(&back.series), text);
    }

    #[test]
    fn synth_candles_are_valid(seed in any::<u64>(), n in 1usize..300, vol in 0.0f64..0.2, wick in 0.0f64..0.05) {
        let params = SynthParams { volatility: vol, wick_scale: wick, ..SynthParams::default() };
        let s = synth_series(seed, n, &params).unwrap();
        prop_assert_eq!(s.len(), n);
        prop_assert_eq!(s[0].open, params.start_price);
        for w in s.candles().windows(2) {
            prop_assert!(w[1].timestamp > w[0].timestamp);
            prop_assert_eq!(w[1].open, w[0].close);
        }
        for c in s.candles() {
            prop_assert!(c.low > 0.0 && c.low <= c.open.min(c.close) && c.high >= c.open.max(c.close));
        }
        prop_assert_eq!(&s, &synth_series(seed, n, &params).unwrap());
    }

    #[test]
    fn patterns_scale_invariant(candles in tick_candles(80), k in -6i32..6) {
        let s = series(candles);
        let p = PatternRuleParams::default();
        let base = detect_all(&s, &p);
        prop_assert_eq!(&base, &detect_all(&s.scaled(2f64.powi(k)).unwrap(), &p));
        prop_assert_eq!(&base, &detect_all(&s.scaled(1000.0).unwrap(), &p));
    }

    #[test]
    fn patterns_shift_with_prefix(candles in tick_candles(60), prefix in tick_candles(12)) {
        let p = PatternRuleParams::default();
        let k = prefix.len();
        let first_open = candles[0].open;
        let offset = prefix.last().unwrap().close - first_open;
        let mut joined: Vec<Candle> = prefix.into_iter().map(|c| Candle { open: c.open - offset, high: c.high - offset, low: c.low - offset, close: c.close - offset, ..c }).collect();
        joined.extend(candles.iter().enumerate().map(|(t, c)| Candle { timestamp: (k + t) as i64, ..*c }));
        let shifted: Vec<PatternMatch> = detect_all(&series(candles), &p)
            .into_iter()
            .map(|m| PatternMatch::new(m.kind, m.end_index + k))
            .collect();
        let with_prefix: Vec<PatternMatch> = detect_all(&series(joined), &p)
            .into_iter()
            .filter(|m| m.end_index + 1 >= k + m.span + p.trend_lookback)
            .collect();
        prop_assert_eq!(shifted, with_prefix);
    }

    #[test]
    fn match_at_is_local(candles in tick_candles(60), pick in any::<prop::sample::Index>(), victim in any::<prop::sample::Index>(), bump in 1i32..5) {
        let p = PatternRuleParams::default();
        let s = series(candles.clone());
        let kind = PatternKind::ALL[pick.index(PatternKind::ALL.len())];
        prop_assume!(s.len() > p.min_end_index(kind));
        let end = p.min_end_index(kind) + pick.index(s.len() - p.min_end_index(kind));
        let lo = end + 1 - kind.span() - p.trend_lookback;
        let v = victim.index(s.len());
        prop_assume!(v < lo || v > end);
        let mut mutated = candles;
        let b = f64::from(bump);
        let c = mutated[v];
        mutated[v] = Candle { open: c.open + b, high: c.high + 2.0 * b, low: c.low, close: c.close - b.min(c.close - c.low), ..c };
        let m = series(mutated);
        prop_assert_eq!(match_at(&s, end, kind, &p).unwrap(), match_at(&m, end, kind, &p).unwrap());
    }

    #[test]
    fn strength_scale_invariant(seed in any::<u64>(), k in -8i32..8) {
        let s = synth_series(seed, 60, &SynthParams::default()).unwrap();
        let scaled = s.scaled(2f64.powi(k)).unwrap();
        let lp = LabelerParams::default();
        for i in lp.atr_period..60 - lp.horizon {
            prop_assert_eq!(trend_strength(&s, i, &lp).unwrap(), trend_strength(&scaled, i, &lp).unwrap());
        }
    }

    #[test]
    fn render_deterministic_and_scale_free(seed in any::<u64>(), n in 1usize..40, k in -6i32..6) {
        let spec = RenderSpec::default();
        let s = synth_series(seed, n, &SynthParams::default()).unwrap();
        let w = window(&s, n - 1, n).unwrap();
        let img = render_window(&w, &spec).unwrap();
        prop_assert_eq!(img.width, spec.image_width(n));
        prop_assert_eq!(&img, &render_window(&w, &spec).unwrap());
        let ws = window(&s.scaled(2f64.powi(k)).unwrap(), n - 1, n).unwrap();
        prop_assert_eq!(&img, &render_window(&ws, &spec).unwrap());
    }

    #[test]
    fn subchart_count_law(seed in any::<u64>(), n in 1usize..40, k in 1usize..6, stride in 1usize..5) {
        let spec = RenderSpec::default();
        let s = synth_series(seed, n, &SynthParams::default()).unwrap();
        let img = render_window(&window(&s, n - 1, n).unwrap(), &spec).unwrap();
        prop_assert_eq!(segment_columns(&img, &spec).unwrap().len(), n);
        match subcharts(&img, &spec, k, stride) {
            Ok(pieces) => {
                prop_assert!(n >= k);
                prop_assert_eq!(pieces.len(), (n - k) / stride + 1);
                prop_assert_eq!(pieces.len(), subchart_count(n, k, stride));
                for piece in &pieces {
                    prop_assert_eq!(segment_columns(piece, &spec).unwrap().len(), k);
                    prop_assert_eq!(piece.height, img.height);
                }
            }
            Err(_) => prop_assert!(n < k),
        }
    }

    #[test]
    fn auc_order_invariant(pairs in prop::collection::vec((0u8..20, any::<bool>()), 2..60)) {
        let probs: Vec<f64> = pairs.iter().map(|(p, _)| f64::from(*p) / 20.0).collect();
        let labels: Vec<bool> = pairs.iter().map(|(_, y)| *y).collect();
        let squashed: Vec<f64> = probs.iter().map(|p| (3.0 * p).exp() / (1.0 + (3.0 * p).exp())).collect();
        prop_assert_eq!(roc_auc(&probs, &labels), roc_auc(&squashed, &labels));
    }

    #[test]
    fn metric_identities(pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..60), t in 0.0f64..1.0) {
        let probs: Vec<f64> = pairs.iter().map(|(p, _)| *p).collect();
        let labels: Vec<bool> = pairs.iter().map(|(_, y)| *y).collect();
        let r = evaluate(&probs, &labels, t).unwrap();
        let c = r.confusion;
        prop_assert_eq!(c.total(), probs.len());
        prop_assert_eq!(r.accuracy, (c.tp + c.tn) as f64 / probs.len() as f64);
        for m in [r.accuracy, r.f1].into_iter().chain(r.auc) {
            prop_assert!((0.0..=1.0).contains(&m));
        }
        if c.tp + c.fp > 0 && c.tp + c.fn_ > 0 && c.tp > 0 {
            let precision = c.tp as f64 / (c.tp + c.fp) as f64;
            let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
            prop_assert!((r.f1 - 2.0 * precision * recall / (precision + recall)).abs() < 1e-12);
        }
    }
}
