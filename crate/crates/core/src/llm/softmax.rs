use crate::numeric::Real;

use super::LlmError;

/// Temperature-scaled softmax.
///
/// For `temperature > 0` this is `exp(z_i / T) / Σ_j exp(z_j / T)`, evaluated
/// after subtracting `max(z)` so large logits cannot overflow. At
/// `temperature == 0` the distribution is the arg-max limit: mass is split
/// evenly across the maximal logits.
pub fn softmax_temperature<T: Real>(logits: &[T], temperature: T) -> Result<Vec<T>, LlmError> {
    if logits.is_empty() {
        return Err(LlmError::InvalidInput("logit vector is empty".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(LlmError::InvalidInput("logits must be finite".into()));
    }
    if !temperature.is_finite() || temperature < T::zero() {
        return Err(LlmError::InvalidInput("temperature must be a finite value >= 0".into()));
    }

    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    if temperature == T::zero() {
        let n_max = logits.iter().filter(|&&z| z == max).count();
        let share = T::one() / T::from_int(n_max as i64);
        return Ok(logits.iter().map(|&z| if z == max { share } else { T::zero() }).collect());
    }

    let exps: Vec<T> = logits.iter().map(|&z| ((z - max) / temperature).exp()).collect();
    // The maximal entry contributes exp(0) = 1, so the sum is at least 1.
    let sum: T = exps.iter().copied().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Indices of the maximal entries.
pub fn argmax_set<T: Real>(values: &[T]) -> Vec<usize> {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    values.iter().enumerate().filter(|(_, &v)| v == max).map(|(i, _)| i).collect()
}
