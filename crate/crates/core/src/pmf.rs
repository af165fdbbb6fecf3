//! Probability mass functions over the non-negative integers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;

const NORMALIZATION_TOL: f64 = 1e-9;

/// A normalized PMF over `n = 0, 1, 2, ...` with a bound on the mass that
/// lies beyond the stored support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    mass: Vec<f64>,
    truncation_tail: f64,
}

impl DiscretePmf {
    pub fn new(mass: Vec<f64>, truncation_tail: f64) -> Result<Self> {
        if let Some((i, &p)) = mass
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::InvalidPmf(format!("mass {p} at n = {i}")));
        }
        if !(0.0..=1.0).contains(&truncation_tail) {
            return Err(Error::InvalidPmf(format!("tail {truncation_tail}")));
        }
        let total = neumaier_sum(mass.iter().copied()) + truncation_tail;
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidPmf(format!("total mass {total}")));
        }
        Ok(DiscretePmf {
            mass,
            truncation_tail,
        })
    }

    /// Rescales non-negative weights to sum to `1 - truncation_tail`.
    pub fn normalized(weights: Vec<f64>, truncation_tail: f64) -> Result<Self> {
        let total = neumaier_sum(weights.iter().copied());
        if !(total > 0.0) {
            return Err(Error::InvalidPmf("no mass to normalize".into()));
        }
        let scale = (1.0 - truncation_tail) / total;
        Self::new(
            weights.into_iter().map(|w| w * scale).collect(),
            truncation_tail,
        )
    }

    pub fn point_mass(n: usize) -> Self {
        let mut mass = vec![0.0; n + 1];
        mass[n] = 1.0;
        DiscretePmf {
            mass,
            truncation_tail: 0.0,
        }
    }

    /// Empirical PMF from a histogram of counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("histogram"));
        }
        let mut mass: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        while mass.len() > 1 && mass.last() == Some(&0.0) {
            mass.pop();
        }
        Self::new(mass, 0.0)
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn truncation_tail(&self) -> f64 {
        self.truncation_tail
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// `P(X = n)`, zero beyond the stored support.
    pub fn get(&self, n: usize) -> f64 {
        self.mass.get(n).copied().unwrap_or(0.0)
    }

    pub fn cdf(&self, n: usize) -> f64 {
        neumaier_sum(self.mass.iter().take(n + 1).copied())
    }

    pub fn mean(&self) -> f64 {
        neumaier_sum(self.mass.iter().enumerate().map(|(n, p)| n as f64 * p))
    }

    /// Smallest `n` with `P(X <= n) >= q`.
    pub fn quantile(&self, q: f64) -> usize {
        let mut acc = 0.0;
        for (n, p) in self.mass.iter().enumerate() {
            acc += p;
            if acc >= q {
                return n;
            }
        }
        self.mass.len().saturating_sub(1)
    }

    /// `P(X > n)` over the stored support plus the truncation tail.
    pub fn tail_beyond(&self, n: usize) -> f64 {
        neumaier_sum(self.mass.iter().skip(n + 1).copied()) + self.truncation_tail
    }

    /// Total-variation distance over the union of both supports.
    pub fn total_variation(&self, other: &DiscretePmf) -> f64 {
        let len = self.len().max(other.len());
        0.5 * neumaier_sum((0..len).map(|n| (self.get(n) - other.get(n)).abs()))
    }

    /// Drops trailing entries below `eps`, moving their mass into the tail.
    pub fn trimmed(&self, eps: f64) -> Self {
        let mut end = self.mass.len();
        while end > 1 && self.mass[end - 1] < eps {
            end -= 1;
        }
        let dropped = neumaier_sum(self.mass[end..].iter().copied());
        DiscretePmf {
            mass: self.mass[..end].to_vec(),
            truncation_tail: self.truncation_tail + dropped,
        }
    }

    /// `n,probability` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,probability\n");
        for (n, p) in self.mass.iter().enumerate() {
            out.push_str(&format!("{n},{p:e}\n"));
        }
        out
    }
}

/// Mixes PMFs with non-negative weights that need not sum to one.
/// The result is normalized over the total weight.
pub fn mix(components: &[(f64, &DiscretePmf)]) -> Result<DiscretePmf> {
    let total: f64 = neumaier_sum(components.iter().map(|(w, _)| *w));
    if !(total > 0.0) {
        return Err(Error::Empty("mixture weights"));
    }
    let len = components.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    let mut mass = vec![0.0; len];
    let mut tail = 0.0;
    for (w, pmf) in components {
        let w = w / total;
        for (acc, p) in mass.iter_mut().zip(pmf.mass()) {
            *acc += w * p;
        }
        tail += w * pmf.truncation_tail();
    }
    DiscretePmf::normalized(mass, tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unnormalized() {
        assert!(DiscretePmf::new(vec![0.5, 0.4], 0.0).is_err());
        assert!(DiscretePmf::new(vec![0.5, 0.4], 0.1).is_ok());
        assert!(DiscretePmf::new(vec![1.2, -0.2], 0.0).is_err());
    }

    #[test]
    fn summary_statistics() {
        let p = DiscretePmf::new(vec![0.25, 0.5, 0.25], 0.0).unwrap();
        assert!((p.mean() - 1.0).abs() < 1e-15);
        assert_eq!(p.quantile(0.5), 1);
        assert_eq!(p.quantile(0.95), 2);
        assert!((p.tail_beyond(0) - 0.75).abs() < 1e-15);
        assert!((p.cdf(1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn total_variation_between_point_masses() {
        let a = DiscretePmf::point_mass(0);
        let b = DiscretePmf::point_mass(3);
        assert_eq!(a.total_variation(&b), 1.0);
        assert_eq!(a.total_variation(&a), 0.0);
    }

    #[test]
    fn counts_to_pmf() {
        let p = DiscretePmf::from_counts(&[1, 3, 0, 0]).unwrap();
        assert_eq!(p.mass(), &[0.25, 0.75]);
        assert!(DiscretePmf::from_counts(&[0, 0]).is_err());
    }

    #[test]
    fn mixture_weights_renormalize() {
        let a = DiscretePmf::point_mass(0);
        let b = DiscretePmf::point_mass(2);
        let m = mix(&[(0.2, &a), (0.6, &b)]).unwrap();
        assert!((m.get(0) - 0.25).abs() < 1e-15);
        assert!((m.get(2) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let csv = DiscretePmf::point_mass(1).to_csv();
        assert_eq!(csv, "n,probability\n0,0e0\n1,1e0\n");
    }
}
