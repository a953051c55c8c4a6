//! Rolling-window technical indicators over daily price sequences.
//!
//! Every indicator returns a [`Windowed`] sequence: the index of the first
//! defined value plus the values from that index to the end of the input.
//! Indices are always positions in the original input.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndicatorError {
    #[error("window {window} needs at least {needed} points, got {len}")]
    WindowTooLarge { window: usize, needed: usize, len: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("input sequences have different lengths")]
    LengthMismatch,
}

/// Values of an indicator from its first defined index onward.
#[derive(Debug, Clone, PartialEq)]
pub struct Windowed {
    pub start: usize,
    pub values: Vec<f64>,
}

impl Windowed {
    /// Value at input index `d`, if defined there.
    pub fn get(&self, d: usize) -> Option<f64> {
        d.checked_sub(self.start).and_then(|i| self.values.get(i).copied())
    }

    /// Length of the input the indicator was computed on.
    pub fn input_len(&self) -> usize {
        self.start + self.values.len()
    }

    /// Elementwise difference over the indices where both are defined.
    pub fn minus(&self, other: &Windowed) -> Windowed {
        let start = self.start.max(other.start);
        let end = self.input_len().min(other.input_len());
        let values = (start..end)
            .map(|d| self.values[d - self.start] - other.values[d - other.start])
            .collect();
        Windowed { start, values }
    }

    /// EMA of this sequence, seeded by the mean of its first `w` defined values.
    pub fn ema(&self, w: usize) -> Result<Windowed, IndicatorError> {
        let inner = ema(&self.values, w)?;
        Ok(Windowed {
            start: self.start + inner.start,
            values: inner.values,
        })
    }
}

fn check_window(len: usize, w: usize, needed: usize) -> Result<(), IndicatorError> {
    if w == 0 {
        return Err(IndicatorError::InvalidWindow("window must be at least 1".into()));
    }
    if len < needed {
        return Err(IndicatorError::WindowTooLarge { window: w, needed, len });
    }
    Ok(())
}

fn check_aligned(seqs: &[&[f64]]) -> Result<usize, IndicatorError> {
    let n = seqs[0].len();
    if seqs.iter().any(|s| s.len() != n) {
        return Err(IndicatorError::LengthMismatch);
    }
    Ok(n)
}

/// Simple moving average, defined from index `w-1`.
pub fn sma(close: &[f64], w: usize) -> Result<Windowed, IndicatorError> {
    check_window(close.len(), w, w)?;
    let wf = w as f64;
    let mut sum: f64 = close[..w].iter().sum();
    let mut values = Vec::with_capacity(close.len() - w + 1);
    values.push(sum / wf);
    for d in w..close.len() {
        sum += close[d] - close[d - w];
        values.push(sum / wf);
    }
    Ok(Windowed { start: w - 1, values })
}

/// Exponential moving average with `alpha = 2/(w+1)`, seeded at index `w-1`
/// by the SMA of the first `w` points.
pub fn ema(close: &[f64], w: usize) -> Result<Windowed, IndicatorError> {
    check_window(close.len(), w, w)?;
    let alpha = 2.0 / (w as f64 + 1.0);
    let mut prev = close[..w].iter().sum::<f64>() / w as f64;
    let mut values = Vec::with_capacity(close.len() - w + 1);
    values.push(prev);
    for &c in &close[w..] {
        prev += alpha * (c - prev);
        values.push(prev);
    }
    Ok(Windowed { start: w - 1, values })
}

/// Linearly weighted moving average: weight `w` on the newest point down to
/// 1 on the oldest, normalized by `w(w+1)/2`.
pub fn wma(close: &[f64], w: usize) -> Result<Windowed, IndicatorError> {
    check_window(close.len(), w, w)?;
    let norm = (w * (w + 1)) as f64 / 2.0;
    // numerator = sum_k (k+1) * close[d-w+1+k]; plain = sum over the window
    let mut numerator: f64 = close[..w]
        .iter()
        .enumerate()
        .map(|(k, c)| (k + 1) as f64 * c)
        .sum();
    let mut plain: f64 = close[..w].iter().sum();
    let mut values = Vec::with_capacity(close.len() - w + 1);
    values.push(numerator / norm);
    for d in w..close.len() {
        numerator += w as f64 * close[d] - plain;
        plain += close[d] - close[d - w];
        values.push(numerator / norm);
    }
    Ok(Windowed { start: w - 1, values })
}

/// True range, defined from index 1.
pub fn true_range(high: &[f64], low: &[f64], close: &[f64]) -> Result<Windowed, IndicatorError> {
    let n = check_aligned(&[high, low, close])?;
    check_window(n, 1, 2)?;
    let values = (1..n)
        .map(|d| {
            let prev = close[d - 1];
            (high[d] - low[d])
                .max((high[d] - prev).abs())
                .max((low[d] - prev).abs())
        })
        .collect();
    Ok(Windowed { start: 1, values })
}

/// Average true range: EMA of the true range, defined from index `w`.
pub fn atr(high: &[f64], low: &[f64], close: &[f64], w: usize) -> Result<Windowed, IndicatorError> {
    let n = check_aligned(&[high, low, close])?;
    check_window(n, w, w + 1)?;
    true_range(high, low, close)?.ema(w)
}

/// Chaikin accumulation/distribution line, defined from index 0. Days with
/// `high == low` add nothing.
pub fn ad_line(
    high: &[f64],
    low: &[f64],
    close: &[f64],
    volume: &[f64],
) -> Result<Windowed, IndicatorError> {
    check_aligned(&[high, low, close, volume])?;
    let mut acc = 0.0;
    let values = (0..high.len())
        .map(|d| {
            let range = high[d] - low[d];
            if range > 0.0 {
                acc += ((close[d] - low[d]) - (high[d] - close[d])) / range * volume[d];
            }
            acc
        })
        .collect();
    Ok(Windowed { start: 0, values })
}

/// Commodity channel index on the summed price `H + L + C`, defined from
/// index `w-1`. A window with zero mean absolute deviation yields 0.
pub fn cci(high: &[f64], low: &[f64], close: &[f64], w: usize) -> Result<Windowed, IndicatorError> {
    let n = check_aligned(&[high, low, close])?;
    check_window(n, w, w)?;
    let typical: Vec<f64> = (0..n).map(|d| high[d] + low[d] + close[d]).collect();
    let mean = sma(&typical, w)?;
    let values = mean
        .values
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let d = i + w - 1;
            let window = &typical[d + 1 - w..=d];
            let mad = window.iter().map(|t| (t - m).abs()).sum::<f64>() / w as f64;
            if mad > 0.0 {
                (typical[d] - m) / (0.015 * mad)
            } else {
                0.0
            }
        })
        .collect();
    Ok(Windowed { start: w - 1, values })
}

/// Rate of change `(C_d - C_{d-w}) / C_{d-w}`, defined from index `w`.
pub fn roc(close: &[f64], w: usize) -> Result<Windowed, IndicatorError> {
    check_window(close.len(), w, w + 1)?;
    let values = (w..close.len())
        .map(|d| (close[d] - close[d - w]) / close[d - w])
        .collect();
    Ok(Windowed { start: w, values })
}

/// Momentum `C_d - C_{d-w}`, defined from index `w`.
pub fn mom(close: &[f64], w: usize) -> Result<Windowed, IndicatorError> {
    check_window(close.len(), w, w + 1)?;
    let values = (w..close.len()).map(|d| close[d] - close[d - w]).collect();
    Ok(Windowed { start: w, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacdPeriods {
    pub fast: usize,
    pub slow: usize,
    pub signal: usize,
}

impl Default for MacdPeriods {
    fn default() -> Self {
        Self {
            fast: 12,
            slow: 26,
            signal: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Macd {
    pub line: Windowed,
    pub signal: Windowed,
    pub histogram: Windowed,
}

/// MACD with the conventional 12/26/9 periods.
pub fn macd(close: &[f64]) -> Result<Macd, IndicatorError> {
    macd_with(close, MacdPeriods::default())
}

pub fn macd_with(close: &[f64], p: MacdPeriods) -> Result<Macd, IndicatorError> {
    if p.fast >= p.slow {
        return Err(IndicatorError::InvalidWindow(format!(
            "MACD fast period {} must be below slow period {}",
            p.fast, p.slow
        )));
    }
    check_window(close.len(), p.slow, p.slow + p.signal - 1)?;
    let line = ema(close, p.fast)?.minus(&ema(close, p.slow)?);
    let signal = line.ema(p.signal)?;
    let histogram = line.minus(&signal);
    Ok(Macd {
        line,
        signal,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub mid: Windowed,
    pub up: Windowed,
    pub down: Windowed,
}

/// Bollinger bands: SMA plus/minus `k` rolling population standard deviations.
pub fn bollinger(close: &[f64], w: usize, k: f64) -> Result<Bands, IndicatorError> {
    let mid = sma(close, w)?;
    let std: Vec<f64> = mid
        .values
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let window = &close[i..i + w];
            (window.iter().map(|c| (c - m).powi(2)).sum::<f64>() / w as f64).sqrt()
        })
        .collect();
    let shifted = |sign: f64| Windowed {
        start: mid.start,
        values: mid.values.iter().zip(&std).map(|(m, s)| m + sign * k * s).collect(),
    };
    Ok(Bands {
        up: shifted(1.0),
        down: shifted(-1.0),
        mid,
    })
}

/// Rolling extreme via a monotone deque. `keep_back(back, new)` decides
/// whether `back` can stay in front of `new`.
fn rolling_extreme(xs: &[f64], w: usize, keep_back: impl Fn(f64, f64) -> bool) -> Vec<f64> {
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut out = Vec::with_capacity(xs.len() + 1 - w);
    for (d, &x) in xs.iter().enumerate() {
        while dq.back().is_some_and(|&b| !keep_back(xs[b], x)) {
            dq.pop_back();
        }
        dq.push_back(d);
        if dq[0] + w <= d {
            dq.pop_front();
        }
        if d + 1 >= w {
            out.push(xs[dq[0]]);
        }
    }
    out
}

pub fn rolling_min(xs: &[f64], w: usize) -> Result<Windowed, IndicatorError> {
    check_window(xs.len(), w, w)?;
    Ok(Windowed {
        start: w - 1,
        values: rolling_extreme(xs, w, |b, x| b < x),
    })
}

pub fn rolling_max(xs: &[f64], w: usize) -> Result<Windowed, IndicatorError> {
    check_window(xs.len(), w, w)?;
    Ok(Windowed {
        start: w - 1,
        values: rolling_extreme(xs, w, |b, x| b > x),
    })
}

/// Stochastic oscillator `(C - LL)/(HH - LL)` with rolling min of low and
/// max of high over `w` days; a flat range yields 0.5.
pub fn stoch_osc(
    high: &[f64],
    low: &[f64],
    close: &[f64],
    w: usize,
) -> Result<Windowed, IndicatorError> {
    check_aligned(&[high, low, close])?;
    let ll = rolling_min(low, w)?;
    let hh = rolling_max(high, w)?;
    let values = ll
        .values
        .iter()
        .zip(&hh.values)
        .enumerate()
        .map(|(i, (&lo, &hi))| {
            let c = close[i + w - 1];
            if hi > lo {
                (c - lo) / (hi - lo)
            } else {
                0.5
            }
        })
        .collect();
    Ok(Windowed { start: w - 1, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RollingStat {
    Mean,
    Median,
    /// Sample standard deviation of daily log returns.
    Volatility,
}

pub fn rolling_stat(close: &[f64], w: usize, stat: RollingStat) -> Result<Windowed, IndicatorError> {
    match stat {
        RollingStat::Mean => sma(close, w),
        RollingStat::Median => {
            check_window(close.len(), w, w)?;
            let mut buf = vec![0.0; w];
            let values = close
                .windows(w)
                .map(|win| {
                    buf.copy_from_slice(win);
                    buf.sort_by(f64::total_cmp);
                    if w % 2 == 1 {
                        buf[w / 2]
                    } else {
                        0.5 * (buf[w / 2 - 1] + buf[w / 2])
                    }
                })
                .collect();
            Ok(Windowed { start: w - 1, values })
        }
        RollingStat::Volatility => {
            if w < 2 {
                return Err(IndicatorError::InvalidWindow(
                    "volatility needs a window of at least 2 returns".into(),
                ));
            }
            check_window(close.len(), w, w + 1)?;
            let returns: Vec<f64> = close.windows(2).map(|p| (p[1] / p[0]).ln()).collect();
            let values = returns
                .windows(w)
                .map(|win| {
                    let m = win.iter().sum::<f64>() / w as f64;
                    (win.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (w as f64 - 1.0)).sqrt()
                })
                .collect();
            Ok(Windowed { start: w, values })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close_to(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn sma_small() {
        let s = sma(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(s.start, 1);
        assert_eq!(s.values, vec![1.5, 2.5]);
        assert_eq!(s.get(0), None);
        assert_eq!(s.get(2), Some(2.5));
        assert!(matches!(
            sma(&[1.0, 2.0], 3),
            Err(IndicatorError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn constant_inputs() {
        let c = vec![42.5; 60];
        for w in [1, 5, 13] {
            assert!(sma(&c, w).unwrap().values.iter().all(|v| close_to(*v, 42.5)));
            assert!(ema(&c, w).unwrap().values.iter().all(|v| close_to(*v, 42.5)));
            assert!(wma(&c, w).unwrap().values.iter().all(|v| close_to(*v, 42.5)));
            assert!(mom(&c, w).unwrap().values.iter().all(|v| *v == 0.0));
            assert!(roc(&c, w).unwrap().values.iter().all(|v| *v == 0.0));
            assert!(atr(&c, &c, &c, w).unwrap().values.iter().all(|v| *v == 0.0));
            assert!(cci(&c, &c, &c, w).unwrap().values.iter().all(|v| *v == 0.0));
        }
        let m = macd(&c).unwrap();
        for v in m.line.values.iter().chain(&m.signal.values).chain(&m.histogram.values) {
            assert!(v.abs() < 1e-12);
        }
        let b = bollinger(&c, 5, 2.0).unwrap();
        assert_eq!(b.up, b.mid);
        assert_eq!(b.down, b.mid);
        assert!(rolling_stat(&c, 20, RollingStat::Median)
            .unwrap()
            .values
            .iter()
            .all(|v| *v == 42.5));
        assert!(rolling_stat(&c, 20, RollingStat::Volatility)
            .unwrap()
            .values
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn window_one_is_identity() {
        let c = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        assert_eq!(ema(&c, 1).unwrap().values, c.to_vec());
        assert_eq!(wma(&c, 1).unwrap().values, c.to_vec());
    }

    #[test]
    fn wma_hand_value() {
        let w = wma(&[1.0, 2.0, 3.0], 2).unwrap();
        assert!(close_to(w.get(2).unwrap(), 8.0 / 3.0));
    }

    #[test]
    fn atr_alternating_close() {
        let c: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { 2.0 }).collect();
        let a = atr(&c, &c, &c, 5).unwrap();
        assert_eq!(a.start, 5);
        assert!(a.values.iter().all(|v| close_to(*v, 1.0)));
    }

    #[test]
    fn ad_line_degenerate_cases() {
        let h = [2.0, 3.0, 4.0];
        let l = [1.0, 1.0, 2.0];
        let v = [10.0, 20.0, 5.0];
        assert_eq!(ad_line(&h, &l, &h, &v).unwrap().values, vec![10.0, 30.0, 35.0]);
        let mid: Vec<f64> = h.iter().zip(&l).map(|(a, b)| (a + b) / 2.0).collect();
        assert!(ad_line(&h, &l, &mid, &v).unwrap().values.iter().all(|x| *x == 0.0));
        let flat = [5.0, 5.0, 5.0];
        assert!(ad_line(&flat, &flat, &flat, &v).unwrap().values.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn cci_linear_ramp_hand_value() {
        // H = L = C = d + 1, so the summed price is 3(d + 1): 3, 6, 9, 12.
        // Window 3 at d = 3: mean 9, mean abs dev 2, CCI = (12 - 9)/(0.015 * 2) = 100.
        let c = [1.0, 2.0, 3.0, 4.0];
        let x = cci(&c, &c, &c, 3).unwrap();
        assert!(close_to(x.get(2).unwrap(), 100.0));
        assert!(close_to(x.get(3).unwrap(), 100.0));
    }

    #[test]
    fn roc_and_mom_hand_values() {
        assert!(close_to(roc(&[100.0, 110.0], 1).unwrap().values[0], 0.10));
        let geo: Vec<f64> = (0..10).map(|i| 2.0 * 1.05f64.powi(i)).collect();
        assert!(roc(&geo, 1).unwrap().values.iter().all(|v| close_to(*v, 0.05)));
        let ramp: Vec<f64> = (0..10).map(|i| 5.0 + 0.5 * i as f64).collect();
        assert!(mom(&ramp, 3).unwrap().values.iter().all(|v| close_to(*v, 1.5)));
    }

    #[test]
    fn stoch_extremes() {
        let h = [5.0, 6.0, 7.0, 8.0];
        let l = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(stoch_osc(&h, &l, &[5.0, 6.0, 7.0, 8.0], 3).unwrap().values, vec![1.0, 1.0]);
        assert_eq!(stoch_osc(&h, &l, &[5.0, 6.0, 1.0, 2.0], 3).unwrap().values, vec![0.0, 0.0]);
        let f = [3.0; 4];
        assert_eq!(stoch_osc(&f, &f, &f, 2).unwrap().values, vec![0.5; 3]);
    }

    #[test]
    fn median_small() {
        assert_eq!(rolling_stat(&[1.0, 3.0, 2.0], 3, RollingStat::Median).unwrap().values, vec![2.0]);
        assert_eq!(rolling_stat(&[1.0, 4.0], 2, RollingStat::Median).unwrap().values, vec![2.5]);
    }

    #[test]
    fn macd_rejects_bad_periods() {
        let c = vec![1.0; 100];
        let bad = MacdPeriods {
            fast: 26,
            slow: 12,
            signal: 9,
        };
        assert!(matches!(macd_with(&c, bad), Err(IndicatorError::InvalidWindow(_))));
        assert!(matches!(macd(&c[..30]), Err(IndicatorError::WindowTooLarge { .. })));
        let m = macd(&c[..34]).unwrap();
        assert_eq!(m.signal.start, 33);
    }

    #[test]
    fn misaligned_inputs() {
        assert_eq!(
            cci(&[1.0, 2.0], &[1.0], &[1.0, 2.0], 1),
            Err(IndicatorError::LengthMismatch)
        );
    }
}
