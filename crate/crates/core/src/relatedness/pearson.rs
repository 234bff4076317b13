use super::RelatednessError;

/// Sample Pearson correlation coefficient.
///
/// Co-moments are accumulated in one pass with symmetric updates
/// (`w·dx·dy`), so swapping the arguments gives a bit-identical result.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, RelatednessError> {
    if x.len() != y.len() {
        return Err(RelatednessError::DegenerateInput(format!(
            "vectors differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(RelatednessError::DegenerateInput(format!(
            "need at least 3 pairs, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RelatednessError::DegenerateInput(
            "non-finite value".into(),
        ));
    }
    let (mut mx, mut my) = (0.0, 0.0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
        let n = (i + 1) as f64;
        let dx = xi - mx;
        let dy = yi - my;
        let w = (n - 1.0) / n;
        sxx += w * (dx * dx);
        syy += w * (dy * dy);
        sxy += w * (dx * dy);
        mx += dx / n;
        my += dy / n;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(RelatednessError::DegenerateInput(
            "constant vector".into(),
        ));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.clamp(-1.0, 1.0))
}
