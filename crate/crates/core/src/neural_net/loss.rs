use super::NetError;

/// `(1/b) * ||u - u_hat||^2` and its gradient `(2/b) * (u_hat - u)` with
/// respect to `u_hat`.
pub fn mse_loss(u_hat: &[f64], u: &[f64], bits: u32) -> Result<(f64, Vec<f64>), NetError> {
    if u_hat.len() != u.len() {
        return Err(NetError::DimensionMismatch {
            expected: u.len(),
            got: u_hat.len(),
        });
    }
    let b = bits as f64;
    let loss = u_hat
        .iter()
        .zip(u)
        .map(|(p, t)| (t - p) * (t - p))
        .sum::<f64>()
        / b;
    let grad = u_hat
        .iter()
        .zip(u)
        .map(|(p, t)| 2.0 * (p - t) / b)
        .collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let u = [0.0, 1.0, 0.0];
        let (loss, grad) = mse_loss(&u, &u, 4).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn uniform_prediction_against_one_hot() {
        let u_hat = [1.0 / 16.0; 16];
        let mut u = [0.0; 16];
        u[3] = 1.0;
        let (loss, _) = mse_loss(&u_hat, &u, 4).unwrap();
        assert!((loss - 0.234375).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let u_hat = [0.1, 0.25, 0.4, 0.05, 0.2];
        let u = [0.0, 0.0, 1.0, 0.0, 0.0];
        let (_, grad) = mse_loss(&u_hat, &u, 3).unwrap();
        let h = 1e-6;
        for i in 0..u_hat.len() {
            let mut up = u_hat;
            let mut down = u_hat;
            up[i] += h;
            down[i] -= h;
            let fd =
                (mse_loss(&up, &u, 3).unwrap().0 - mse_loss(&down, &u, 3).unwrap().0) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() / grad[i].abs() < 1e-8,
                "{fd} vs {}",
                grad[i]
            );
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(mse_loss(&[0.5, 0.5], &[1.0], 1).is_err());
    }
}
