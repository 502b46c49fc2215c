use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Pearson correlation; `r` is `None` when either side has zero variance or
/// fewer than two points are given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: Option<f64>,
    pub n: usize,
}

impl Correlation {
    pub fn is_undefined(&self) -> bool {
        self.r.is_none()
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Correlation {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return Correlation { r: None, n };
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs[..n].iter().zip(&ys[..n]) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = if sxx > 0.0 && syy > 0.0 {
        Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
    } else {
        None
    };
    Correlation { r, n }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Sample mean with a percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
}

impl Interval {
    pub fn excludes_zero(&self) -> bool {
        self.lo > 0.0 || self.hi < 0.0
    }
}

pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Interval {
    let n = values.len();
    let m = mean(values);
    if n < 2 || resamples == 0 {
        return Interval {
            mean: m,
            lo: m,
            hi: m,
            level,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Interval {
        mean: m,
        lo: pick(tail),
        hi: pick(1.0 - tail),
        level,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Interval excludes zero on the expected side.
    Confirmed,
    /// Interval straddles zero.
    Inconclusive,
    /// Interval excludes zero on the wrong side.
    Contradicted,
}

pub fn verdict(ci: &Interval, expected: Direction) -> Verdict {
    let (right, wrong) = match expected {
        Direction::Positive => (ci.lo > 0.0, ci.hi < 0.0),
        Direction::Negative => (ci.hi < 0.0, ci.lo > 0.0),
    };
    if right {
        Verdict::Confirmed
    } else if wrong {
        Verdict::Contradicted
    } else {
        Verdict::Inconclusive
    }
}

/// Fixed-width histogram over `[min, max]` of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
    pub n: usize,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        let bins = bins.max(1);
        if finite.is_empty() {
            return Self {
                edges: vec![0.0; bins + 1],
                counts: vec![0; bins],
                min: 0.0,
                max: 0.0,
                max_abs: 0.0,
                n: 0,
            };
        }
        let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if max > min {
            (max - min) / bins as f64
        } else {
            1.0
        };
        let edges = (0..=bins).map(|k| min + k as f64 * width).collect();
        let mut counts = vec![0; bins];
        for v in &finite {
            let k = (((v - min) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self {
            edges,
            counts,
            min,
            max,
            max_abs: min.abs().max(max.abs()),
            n: finite.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_edge_cases() {
        let r = pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).r.unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0], &[2.0, 2.0]).is_undefined());
        assert!(pearson(&[1.0], &[2.0]).is_undefined());
    }

    #[test]
    fn bootstrap_brackets_the_mean() {
        let v: Vec<f64> = (0..200).map(|k| (k as f64 * 0.77).sin() + 0.3).collect();
        let ci = bootstrap_mean_ci(&v, 2000, 0.95, 1);
        assert!(ci.lo < ci.mean && ci.mean < ci.hi);
        assert!(ci.excludes_zero());
        assert_eq!(verdict(&ci, Direction::Positive), Verdict::Confirmed);
        assert_eq!(verdict(&ci, Direction::Negative), Verdict::Contradicted);
        assert_eq!(ci, bootstrap_mean_ci(&v, 2000, 0.95, 1));
    }

    #[test]
    fn histogram_counts_everything() {
        let h = Histogram::new(&[0.0, 0.5, 1.0, -2.0, f64::NAN], 4);
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        assert_eq!(h.max_abs, 2.0);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
