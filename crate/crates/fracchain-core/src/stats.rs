//! Batch-means error bars and small accumulators for MCMC observables.

use serde::{Deserialize, Serialize};

/// Scalar estimate with a batch-means standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub batches: usize,
}

impl Estimate {
    /// |value - target| measured in standard errors (capped stderr floor).
    pub fn sigmas_from(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.stderr.max(1e-300)
    }
}

/// Collects per-sweep samples of one scalar observable into a fixed number
/// of equal batches.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_sums: Vec<f64>,
    batch_counts: Vec<u64>,
    per_batch: u64,
    seen: u64,
}

impl BatchMeans {
    pub fn new(total_samples: u64, batches: usize) -> Self {
        let batches = batches.max(2);
        let per_batch = (total_samples / batches as u64).max(1);
        BatchMeans {
            batch_sums: vec![0.0; batches],
            batch_counts: vec![0; batches],
            per_batch,
            seen: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        let b = ((self.seen / self.per_batch) as usize).min(self.batch_sums.len() - 1);
        self.batch_sums[b] += x;
        self.batch_counts[b] += 1;
        self.seen += 1;
    }

    pub fn batch_means(&self) -> Vec<f64> {
        self.batch_sums
            .iter()
            .zip(&self.batch_counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&s, &c)| s / c as f64)
            .collect()
    }

    pub fn estimate(&self) -> Estimate {
        estimate_from_batches(&self.batch_means())
    }

    /// True when batch means drift monotonically (fewer than two direction
    /// changes), a cheap non-equilibration signal.
    pub fn drifting(&self) -> bool {
        let means = self.batch_means();
        if means.len() < 6 {
            return false;
        }
        let mut changes = 0;
        let mut last_sign = 0i8;
        for w in means.windows(2) {
            let d = w[1] - w[0];
            let sign = if d > 0.0 { 1 } else { -1 };
            if last_sign != 0 && sign != last_sign {
                changes += 1;
            }
            last_sign = sign;
        }
        changes < 2
    }
}

/// Mean and standard error of a set of (batch) means, e.g. merged across
/// independent chains.
pub fn estimate_from_batches(means: &[f64]) -> Estimate {
    let n = means.len();
    let mean = means.iter().sum::<f64>() / n as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n.saturating_sub(1)).max(1) as f64;
    Estimate {
        value: mean,
        stderr: (var / n as f64).sqrt(),
        batches: n,
    }
}

/// Ratio a/b with first-order error propagation.
pub fn ratio_estimate(a: Estimate, b: Estimate) -> Estimate {
    let value = a.value / b.value;
    let rel = ((a.stderr / a.value).powi(2) + (b.stderr / b.value).powi(2)).sqrt();
    Estimate {
        value,
        stderr: (value * rel).abs(),
        batches: a.batches.min(b.batches),
    }
}

/// Kahan-compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_means_basic() {
        let mut bm = BatchMeans::new(1000, 20);
        for i in 0..1000 {
            bm.push(if i % 2 == 0 { 1.0 } else { 3.0 });
        }
        let est = bm.estimate();
        assert!((est.value - 2.0).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
        assert_eq!(est.batches, 20);
    }

    #[test]
    fn drift_detection() {
        let mut bm = BatchMeans::new(200, 20);
        for i in 0..200 {
            bm.push(i as f64);
        }
        assert!(bm.drifting());
        let mut bm2 = BatchMeans::new(200, 20);
        for i in 0..200 {
            bm2.push(if i % 3 == 0 { 1.0 } else { -1.0 });
        }
        assert!(!bm2.drifting());
    }

    #[test]
    fn kahan_handles_small_terms() {
        let mut k = Kahan::default();
        k.add(1.0);
        for _ in 0..1_000_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-10)).abs() < 1e-13);
    }
}
