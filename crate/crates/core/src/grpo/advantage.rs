use super::GrpoError;

/// Groups whose population std falls below this get all-zero advantages.
const DEGENERATE_STD: f64 = 1e-12;

/// Standardises rewards within a group: `(R_i - mean) / std`, population std.
pub fn compute_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    let n = rewards.len();
    if n < 2 {
        return Err(GrpoError::GroupTooSmall(n));
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    let var = centered.iter().map(|c| c * c).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if !(std >= DEGENERATE_STD) {
        return Ok(vec![0.0; n]);
    }
    Ok(centered.into_iter().map(|c| c / std).collect())
}
