//! Finite offspring distributions given as an explicit outcome list.

use rand::Rng;

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Outcomes `(probability, offspring sequence)` with a cumulative table for
/// sampling by inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct Enumerated<T> {
    outcomes: Vec<(f64, Vec<T>)>,
    cumulative: Vec<f64>,
}

impl<T: Clone> Enumerated<T> {
    pub fn new(outcomes: Vec<(f64, Vec<T>)>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidLaw("empty outcome list".into()));
        }
        let mut cumulative = Vec::with_capacity(outcomes.len());
        let mut acc = 0.0;
        for (p, _) in &outcomes {
            if !(*p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidLaw(format!("invalid probability {p}")));
            }
            acc += p;
            cumulative.push(acc);
        }
        if (acc - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidLaw(format!(
                "probabilities sum to {acc}, not 1"
            )));
        }
        Ok(Enumerated {
            outcomes,
            cumulative,
        })
    }

    pub fn outcomes(&self) -> &[(f64, Vec<T>)] {
        &self.outcomes
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u: f64 = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        // u < total always, but guard against trailing zero-probability entries
        let i = i.min(self.outcomes.len() - 1);
        if self.outcomes[i].0 == 0.0 {
            (0..=i)
                .rev()
                .find(|&j| self.outcomes[j].0 > 0.0)
                .unwrap_or(i)
        } else {
            i
        }
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<T>) {
        let i = self.sample_index(rng);
        out.extend_from_slice(&self.outcomes[i].1);
    }

    /// Expectation of `f` over the outcome list.
    pub fn expect<F: Fn(&[T]) -> f64>(&self, f: F) -> f64 {
        self.outcomes.iter().map(|(p, xs)| p * f(xs)).sum()
    }
}
