use super::sets::{AvgVector, MaxDist, TopK};
use super::QueryError;

/// Share of the full-data top-k found in the sample's top-k. An empty
/// sample-side cell scores 0.
pub fn precision_at_k(sample: &TopK, full: &TopK) -> f64 {
    if sample.empty || full.indices.is_empty() {
        return 0.0;
    }
    let hits = sample
        .indices
        .iter()
        .filter(|i| full.indices.contains(i))
        .count();
    hits as f64 / full.indices.len() as f64
}

/// `1 - a.b / (|a| |b|)`, clamped to [0, 1]. An empty side or a zero vector
/// scores 1.
pub fn cosine_distance(a: &AvgVector, b: &AvgVector) -> Result<f64, QueryError> {
    if a.values.len() != b.values.len() {
        return Err(QueryError::DimensionMismatch(
            a.values.len(),
            b.values.len(),
        ));
    }
    if a.empty || b.empty {
        return Ok(1.0);
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let saa: f64 = a.values.iter().map(|x| x * x).sum();
    let sbb: f64 = b.values.iter().map(|x| x * x).sum();
    if saa == 0.0 || sbb == 0.0 {
        return Ok(1.0);
    }
    // one square root keeps a == b exactly at distance 0
    Ok((1.0 - dot / (saa * sbb).sqrt()).clamp(0.0, 1.0))
}

/// Square root of the base-2 Jensen-Shannon divergence. An empty side
/// scores 1.
pub fn js_distance(p: &MaxDist, q: &MaxDist) -> Result<f64, QueryError> {
    if p.values.len() != q.values.len() {
        return Err(QueryError::DimensionMismatch(
            p.values.len(),
            q.values.len(),
        ));
    }
    if p.empty || q.empty {
        return Ok(1.0);
    }
    for v in [&p.values, &q.values] {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || v.iter().any(|&x| x < 0.0) {
            return Err(QueryError::NotNormalized(sum));
        }
    }
    // D(a || m) with 0 log 0 := 0
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (x / (0.5 * (x + y))).log2())
            .sum()
    };
    let divergence = 0.5 * (kl_to_mid(&p.values, &q.values) + kl_to_mid(&q.values, &p.values));
    Ok(divergence.clamp(0.0, 1.0).sqrt())
}
