use alloc::vec::Vec;

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(libm::exp).collect()
}

/// Cross-entropy against a soft target, `−Σ_k ỹ_k log softmax(z)_k`, and its
/// gradient `softmax(z) − ỹ` with respect to the logits.
pub fn soft_ce_loss(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(logits.len(), target.len());
    let log_p = log_softmax(logits);
    let loss = -log_p
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(lp, t)| t * lp)
        .sum::<f64>();
    let grad = log_p
        .iter()
        .zip(target)
        .map(|(&lp, &t)| libm::exp(lp) - t)
        .collect();
    (loss, grad)
}

/// `ln(n_k / Σ n)` per class.
pub fn log_prior(counts: &[u64]) -> Vec<f64> {
    let total = counts.iter().sum::<u64>() as f64;
    counts
        .iter()
        .map(|&n| libm::log(n as f64 / total))
        .collect()
}

/// Balanced (prior-adjusted) softmax: add the log class prior to the logits.
/// Applied during training only; inference uses the raw logits.
pub fn balanced_ce_adjust(logits: &[f64], counts: &[u64]) -> Vec<f64> {
    logits
        .iter()
        .zip(log_prior(counts))
        .map(|(z, a)| z + a)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    #[allow(clippy::approx_constant)]
    fn uniform_logits_one_hot_target() {
        let mut t = vec![0.0; 10];
        t[3] = 1.0;
        let (loss, _) = soft_ce_loss(&[0.7; 10], &t);
        assert!((loss - libm::log(10.0)).abs() < 1e-12);
        assert!((loss - 2.302_585).abs() < 1e-6);
    }

    #[test]
    fn stationary_at_own_softmax() {
        let z = [0.3, -1.2, 2.0, 0.0];
        let (_, g) = soft_ce_loss(&z, &softmax(&z));
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn large_logits_stay_finite() {
        let (loss, g) = soft_ce_loss(&[1000.0, -1000.0], &[0.0, 1.0]);
        assert!((loss - 2000.0).abs() < 1e-9);
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn balanced_adjustment() {
        let adj = balanced_ce_adjust(&[1.0, 2.0], &[99, 1]);
        assert!((adj[0] - (1.0 + libm::log(0.99))).abs() < 1e-15);
        assert!((adj[1] - (2.0 + libm::log(0.01))).abs() < 1e-15);
        let z = [0.4, -0.1, 1.5];
        let shifted = softmax(&balanced_ce_adjust(&z, &[7, 7, 7]));
        for (a, b) in shifted.iter().zip(softmax(&z)) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
