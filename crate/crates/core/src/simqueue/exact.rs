use super::{SimError, SteadyStateVector};

/// Closed-form M/M/c stationary law truncated to `l` states.
#[derive(Debug, Clone, PartialEq)]
pub struct MmcSolution {
    pub probs: SteadyStateVector,
    /// `P(N >= l)`.
    pub tail_mass: f64,
    /// Erlang-C probability that an arrival waits.
    pub wait_probability: f64,
    /// Untruncated `E[N]`.
    pub mean_l: f64,
}

/// Birth-death solution of M/M/c with arrival rate `lambda`, per-server rate `mu`.
pub fn mmc_exact(lambda: f64, mu: f64, c: usize, l: usize) -> Result<MmcSolution, SimError> {
    if !(lambda > 0.0 && mu > 0.0 && lambda.is_finite() && mu.is_finite()) {
        return Err(SimError::InvalidSpec(format!(
            "rates must be positive (lambda={lambda}, mu={mu})"
        )));
    }
    if c == 0 || l == 0 {
        return Err(SimError::InvalidSpec("c and l must be >= 1".into()));
    }
    let a = lambda / mu;
    let rho = a / c as f64;
    if rho >= 1.0 {
        return Err(SimError::Unstable(rho));
    }
    // log q_j with q_j = a^j / j! for j <= c; q_j = q_c rho^(j-c) beyond.
    let mut log_q = Vec::with_capacity(c + 1);
    log_q.push(0.0f64);
    for j in 1..=c {
        log_q.push(log_q[j - 1] + a.ln() - (j as f64).ln());
    }
    let log_geo_tail = log_q[c] - (-rho).ln_1p();
    let max_log = log_q[..c]
        .iter()
        .copied()
        .chain(std::iter::once(log_geo_tail))
        .fold(f64::NEG_INFINITY, f64::max);
    let norm = log_q[..c].iter().map(|v| (v - max_log).exp()).sum::<f64>()
        + (log_geo_tail - max_log).exp();
    let log_norm = max_log + norm.ln();

    let log_p = |j: usize| -> f64 {
        if j <= c {
            log_q[j] - log_norm
        } else {
            log_q[c] + (j - c) as f64 * rho.ln() - log_norm
        }
    };
    let probs: Vec<f64> = (0..l).map(|j| log_p(j).exp()).collect();
    let wait_probability = (log_geo_tail - log_norm).exp();
    let tail_mass = if l >= c {
        (log_p(l) - (-rho).ln_1p()).exp()
    } else {
        (l..c).map(|j| log_p(j).exp()).sum::<f64>() + wait_probability
    };
    let mean_l = a + wait_probability * rho / (1.0 - rho);
    Ok(MmcSolution {
        probs: SteadyStateVector(probs),
        tail_mass,
        wait_probability,
        mean_l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mm1_is_geometric() {
        let s = mmc_exact(0.5, 1.0, 1, 10).unwrap();
        for (j, p) in s.probs.as_slice().iter().enumerate() {
            assert!((p - 0.5f64.powi(j as i32 + 1)).abs() < 1e-15);
        }
        assert!((s.tail_mass - 0.5f64.powi(10)).abs() < 1e-15);
        assert!((s.wait_probability - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mm2_erlang_c_is_one_third() {
        let s = mmc_exact(1.0, 1.0, 2, 10).unwrap();
        assert!((s.wait_probability - 1.0 / 3.0).abs() < 1e-14);
        assert!((s.mean_l - 4.0 / 3.0).abs() < 1e-14);
        // P0 = 1/3, P1 = 1/3, P_j = (1/3) 2^-(j-1)
        assert!((s.probs.as_slice()[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((s.probs.as_slice()[3] - 1.0 / 12.0).abs() < 1e-14);
    }

    #[test]
    fn mass_and_littles_law() {
        for &(lambda, mu, c) in &[(1.0, 0.3, 4usize), (1.0, 0.11, 10), (2.0, 5.0, 1), (1.0, 1.0, 3)] {
            for &l in &[2usize, 5, 50, 500] {
                let s = mmc_exact(lambda, mu, c, l).unwrap();
                assert!((s.probs.total() + s.tail_mass - 1.0).abs() < 1e-12);
            }
            let s = mmc_exact(lambda, mu, c, 2000).unwrap();
            // L = lambda * W with W = Wq + 1/mu and Wq = C / (c mu - lambda).
            let w = s.wait_probability / (c as f64 * mu - lambda) + 1.0 / mu;
            assert!((s.probs.mean() - lambda * w).abs() < 1e-10);
            assert!((s.mean_l - lambda * w).abs() < 1e-10);
        }
    }

    #[test]
    fn unstable_rejected() {
        assert!(matches!(mmc_exact(2.0, 1.0, 2, 10), Err(SimError::Unstable(_))));
        assert!(mmc_exact(1.0, 0.0, 2, 10).is_err());
    }
}
