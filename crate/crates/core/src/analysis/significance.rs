use crate::error::{MassError, Result};

/// Smallest `k` such that the `k` largest `|v_i|` reach `fraction` of the
/// total absolute mass. Ties go to the lower index.
pub fn significant_count(v: &[f64], fraction: f64) -> Result<usize> {
    Ok(significant_indices(v, fraction)?.len())
}

/// Indices of the significant entries, largest magnitude first.
pub fn significant_indices(v: &[f64], fraction: f64) -> Result<Vec<usize>> {
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total == 0.0 || !total.is_finite() {
        return Err(MassError::ZeroVector);
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    let target = fraction * total;
    let mut acc = 0.0;
    for (k, &i) in order.iter().enumerate() {
        acc += v[i].abs();
        // Guard against rounding at fraction = 1.
        if acc >= target || k + 1 == v.len() {
            return Ok(order[..=k].to_vec());
        }
    }
    Ok(order)
}
