use crate::error::{Error, Result};

/// Mean absolute error `1/n * sum |y_i - y_hat_i|`.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Dimension(format!(
            "mae over {} targets and {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Input("mae of an empty vector".into()));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}
