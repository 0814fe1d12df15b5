use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attention::AttentionMap;
use crate::error::{Error, Result};

/// Histogram valley search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdParams {
    pub bins: usize,
    /// Width of the centered moving average.
    pub smoothing_window: usize,
    /// Rise above the running minimum, as a fraction of the peak, that confirms a valley.
    pub prominence: f64,
    /// Bins within this fraction of the peak above the valley floor count as floor.
    pub floor_tolerance: f64,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams {
            bins: 256,
            smoothing_window: 5,
            prominence: 0.05,
            floor_tolerance: 0.01,
        }
    }
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 3 {
            return Err(Error::invalid("histogram needs at least 3 bins"));
        }
        if self.smoothing_window == 0 {
            return Err(Error::invalid("smoothing window must be positive"));
        }
        if !(self.prominence > 0.0 && self.prominence < 1.0) {
            return Err(Error::invalid("prominence must lie in (0, 1)"));
        }
        if !(self.floor_tolerance >= 0.0 && self.floor_tolerance < self.prominence) {
            return Err(Error::invalid("floor_tolerance must lie in [0, prominence)"));
        }
        Ok(())
    }
}

/// Selected threshold and the histogram geometry behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub value: f64,
    /// Valley position in bins from `lo` (may be fractional on a flat floor).
    pub bin: f64,
    pub bin_width: f64,
    pub lo: f64,
    pub peak_bin: usize,
}

/// Counts per bin over `[min, max]`.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<u64> {
    let width = (hi - lo) / bins as f64;
    values
        .par_chunks(4096)
        .map(|chunk| {
            let mut h = vec![0u64; bins];
            for &v in chunk {
                let b = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1);
                h[b as usize] += 1;
            }
            h
        })
        .reduce(
            || vec![0u64; bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Centered moving average; windows are truncated at the ends.
pub fn smooth(h: &[u64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..h.len())
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + window - half).min(h.len());
            h[a..b].iter().sum::<u64>() as f64 / (b - a) as f64
        })
        .collect()
}

/// Walk away from `peak` in `step` direction and return the valley floor
/// `(first, last)` bin range, confirmed once the curve climbs back by `rise`.
fn walk(s: &[f64], peak: usize, step: isize, rise: f64, tol: f64) -> Option<(usize, usize)> {
    let n = s.len() as isize;
    let mut min = s[peak];
    let mut at = peak as isize;
    let mut i = peak as isize + step;
    while i >= 0 && i < n {
        let v = s[i as usize];
        if v < min {
            min = v;
            at = i;
        } else if v - min >= rise {
            // floor: contiguous bins near the minimum, strictly between peak and the rise
            let (lo, hi) = if step > 0 { (peak + 1, i as usize - 1) } else { (i as usize + 1, peak - 1) };
            let (mut a, mut b) = (at as usize, at as usize);
            while a > lo && s[a - 1] <= min + tol {
                a -= 1;
            }
            while b < hi && s[b + 1] <= min + tol {
                b += 1;
            }
            return Some((a, b));
        }
        i += step;
    }
    None
}

/// Valley threshold over raw values.
///
/// The largest smoothed peak is located first; the search then moves toward
/// higher scores for the adjacent valley, and toward lower scores if the peak
/// is the top mode.
pub fn auto_threshold_values(values: &[f64], params: &ThresholdParams) -> Result<Threshold> {
    params.validate()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Err(Error::NoValley);
    }
    let h = histogram(values, params.bins, lo, hi);
    let s = smooth(&h, params.smoothing_window);
    let mut peak = 0;
    for i in 1..s.len() {
        if s[i] > s[peak] {
            peak = i;
        }
    }
    let rise = params.prominence * s[peak];
    let tol = params.floor_tolerance * s[peak];
    let (a, b) = walk(&s, peak, 1, rise, tol)
        .or_else(|| walk(&s, peak, -1, rise, tol))
        .ok_or(Error::NoValley)?;
    let bin = (a + b) as f64 / 2.0;
    let bin_width = (hi - lo) / params.bins as f64;
    Ok(Threshold {
        value: lo + (bin + 0.5) * bin_width,
        bin,
        bin_width,
        lo,
        peak_bin: peak,
    })
}

/// Valley threshold over the covered pixels of an attention map.
pub fn auto_threshold(map: &AttentionMap, params: &ThresholdParams) -> Result<Threshold> {
    auto_threshold_values(&map.covered_values(), params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn mixture(seed: u64, n: usize, m1: f64, m2: f64, s: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Normal::new(m1, s).unwrap();
        let b = Normal::new(m2, s).unwrap();
        (0..n)
            .map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) })
            .collect()
    }

    #[test]
    fn bimodal_valley_near_midpoint() {
        let v = mixture(1, 20000, 0.1, 0.8, 0.02);
        let t = auto_threshold_values(&v, &ThresholdParams::default()).unwrap();
        assert!((t.value - 0.45).abs() <= 2.0 * t.bin_width, "{t:?}");
    }

    #[test]
    fn degenerate_inputs_have_no_valley() {
        assert!(matches!(
            auto_threshold_values(&[0.3; 100], &ThresholdParams::default()),
            Err(Error::NoValley)
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = Normal::new(0.0, 1.0).unwrap();
        let uni: Vec<f64> = (0..50000).map(|_| n.sample(&mut rng)).collect();
        assert!(matches!(
            auto_threshold_values(&uni, &ThresholdParams::default()),
            Err(Error::NoValley)
        ));
    }

    #[test]
    fn shift_moves_threshold() {
        let v = mixture(3, 20000, 0.1, 0.6, 0.05);
        let p = ThresholdParams::default();
        let t0 = auto_threshold_values(&v, &p).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + 0.075).collect();
        let t1 = auto_threshold_values(&shifted, &p).unwrap();
        assert!((t1.value - t0.value - 0.075).abs() <= t0.bin_width);
    }

    #[test]
    fn top_mode_peak_searches_downward() {
        // dominant mode on the high side
        let mut v = mixture(4, 4000, 0.2, 0.2, 0.03);
        v.extend(mixture(5, 16000, 0.8, 0.8, 0.03));
        let t = auto_threshold_values(&v, &ThresholdParams::default()).unwrap();
        assert!(t.value > 0.3 && t.value < 0.7, "{t:?}");
    }

    #[test]
    fn smoothing_truncates_at_edges() {
        let s = smooth(&[5, 0, 0, 0, 5], 5);
        assert_eq!(s[0], 5.0 / 3.0);
        assert_eq!(s[2], 2.0);
    }
}
