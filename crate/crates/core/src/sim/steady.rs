//! Empirical steadiness test for a node's queue-length trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest least-squares growth rate (requests per slot) of a steady queue.
pub const MAX_SLOPE: f64 = 0.01;
/// Largest final backlog of a steady queue.
pub const MAX_FINAL_LENGTH: u64 = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Steadiness {
    Steady,
    Unsteady,
}

/// Running least-squares fit of queue length against slot index.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrendAccumulator {
    n: f64,
    sum_t: f64,
    sum_tt: f64,
    sum_y: f64,
    sum_ty: f64,
    last: u64,
}

impl TrendAccumulator {
    pub fn push(&mut self, t: u64, y: u64) {
        let (t, yf) = (t as f64, y as f64);
        self.n += 1.0;
        self.sum_t += t;
        self.sum_tt += t * t;
        self.sum_y += yf;
        self.sum_ty += t * yf;
        self.last = y;
    }

    pub fn len(&self) -> usize {
        self.n as usize
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0.0
    }

    pub fn slope(&self) -> f64 {
        let denom = self.n * self.sum_tt - self.sum_t * self.sum_t;
        if denom <= 0.0 {
            0.0
        } else {
            (self.n * self.sum_ty - self.sum_t * self.sum_y) / denom
        }
    }

    pub fn last(&self) -> u64 {
        self.last
    }

    pub fn classify(&self) -> Steadiness {
        if self.slope() > MAX_SLOPE || self.last > MAX_FINAL_LENGTH {
            Steadiness::Unsteady
        } else {
            Steadiness::Steady
        }
    }
}

/// Classifies a full trace, ignoring its first `warmup` entries.
pub fn steady_classifier(trace: &[u64], warmup: usize) -> Result<Steadiness> {
    let required = 2 * warmup.max(1);
    if trace.len() < required {
        return Err(Error::ShortTrace {
            len: trace.len(),
            required,
        });
    }
    let mut acc = TrendAccumulator::default();
    for (t, &y) in trace.iter().enumerate().skip(warmup) {
        acc.push(t as u64, y);
    }
    Ok(acc.classify())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_trace_is_steady() {
        assert_eq!(
            steady_classifier(&[0; 100], 20).unwrap(),
            Steadiness::Steady
        );
    }

    #[test]
    fn linear_growth_is_unsteady() {
        let trace: Vec<u64> = (0..100).collect();
        assert_eq!(steady_classifier(&trace, 20).unwrap(), Steadiness::Unsteady);
    }

    #[test]
    fn large_final_backlog_is_unsteady() {
        let mut trace = vec![3u64; 1000];
        trace[999] = 51;
        assert_eq!(
            steady_classifier(&trace, 200).unwrap(),
            Steadiness::Unsteady
        );
    }

    #[test]
    fn short_trace_rejected() {
        assert!(matches!(
            steady_classifier(&[0; 30], 20),
            Err(Error::ShortTrace { .. })
        ));
    }

    #[test]
    fn slope_of_exact_line() {
        let mut acc = TrendAccumulator::default();
        for t in 10..50 {
            acc.push(t, 3 * t + 7);
        }
        assert!((acc.slope() - 3.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn bounded_periodic_traces_are_steady(period in 1usize..20, amp in 0u64..40, len in 400usize..2000) {
            let trace: Vec<u64> = (0..len).map(|t| amp * ((t % period) as u64) / period as u64).collect();
            prop_assert_eq!(steady_classifier(&trace, len / 5).unwrap(), Steadiness::Steady);
        }
    }
}
