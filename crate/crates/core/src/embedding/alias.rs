use rand::Rng;

use super::EmbeddingError;

/// Walker/Vose alias table: O(n) construction, O(1) draws.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    probabilities: Vec<f64>,
    aliases: Vec<u32>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self, EmbeddingError> {
        if weights.is_empty() {
            return Err(EmbeddingError::EmptyWeights);
        }
        if let Some((index, &w)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(EmbeddingError::NonPositiveWeight { index, weight: w });
        }
        Ok(Self::from_positive(weights))
    }

    /// Same as [`AliasTable::new`] for weights already known to be positive.
    pub(crate) fn from_positive(weights: &[f64]) -> Self {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut aliases: Vec<u32> = (0..n as u32).collect();

        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for (i, &p) in scaled.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            aliases[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            scaled[i] = 1.0;
        }
        Self { probabilities: scaled, aliases }
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn aliases(&self) -> &[u32] {
        &self.aliases
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.probabilities.len());
        if rng.gen::<f64>() < self.probabilities[i] {
            i
        } else {
            self.aliases[i] as usize
        }
    }

    /// Exact probability mass the table assigns to each outcome.
    pub fn implied_distribution(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut mass = vec![0.0; self.len()];
        for (i, (&p, &a)) in self.probabilities.iter().zip(&self.aliases).enumerate() {
            mass[i] += p / n;
            mass[a as usize] += (1.0 - p) / n;
        }
        mass
    }
}
