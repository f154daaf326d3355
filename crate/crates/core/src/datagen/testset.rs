use serde::{Deserialize, Serialize};

use super::DatagenError;
use crate::dists::{fit_h2_balanced, Dist, ParametricDist};
use crate::simqueue::QueueSpec;
use crate::SystemKind;

/// `0.01, 0.06, ..., 0.96`.
pub const UTILIZATION_GRID: [f64; 20] = {
    let mut g = [0.0; 20];
    let mut i = 0;
    while i < 20 {
        g[i] = (1.0 + 5.0 * i as f64) / 100.0;
        i += 1;
    }
    g
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub spec: QueueSpec,
    pub rho: f64,
    pub families: Vec<String>,
}

fn unit_law(tag: &str) -> Result<Dist, DatagenError> {
    let p = match tag {
        "M" => ParametricDist::exponential_with_mean(1.0)?,
        "E4" => ParametricDist::erlang_with_mean(4, 1.0)?,
        "LN(0.25)" => ParametricDist::lognormal_with_mean_scv(1.0, 0.25)?,
        "LN(4)" => ParametricDist::lognormal_with_mean_scv(1.0, 4.0)?,
        "H2(4)" => fit_h2_balanced(1.0, 4.0)?,
        "G(4)" => ParametricDist::gamma_with_mean_scv(1.0, 4.0)?,
        other => return Err(DatagenError::Invalid(format!("unknown family {other}"))),
    };
    Ok(Dist::Parametric(p))
}

const ARRIVALS: [&str; 5] = ["E4", "LN(0.25)", "H2(4)", "LN(4)", "G(4)"];
const SERVICES: [&str; 6] = ["M", "E4", "LN(0.25)", "H2(4)", "LN(4)", "G(4)"];

/// External benchmark grid with unit arrival rate. Two-server specs split
/// the capacity `1 / rho` evenly between the servers.
pub fn build_testset2(kind: SystemKind) -> Result<Vec<TestSpec>, DatagenError> {
    let mut out = Vec::new();
    for a in ARRIVALS {
        let arrival = unit_law(a)?;
        match kind {
            SystemKind::Ggc => {
                for s in SERVICES {
                    let service = unit_law(s)?;
                    for c in 1..=10usize {
                        for rho in UTILIZATION_GRID {
                            let mu = 1.0 / (c as f64 * rho);
                            out.push(TestSpec {
                                spec: QueueSpec::homogeneous(
                                    arrival.clone(),
                                    service.scaled(mu)?,
                                    c,
                                )?,
                                rho,
                                families: vec![a.into(), s.into()],
                            });
                        }
                    }
                }
            }
            SystemKind::Gg2 => {
                for s1 in SERVICES {
                    for s2 in SERVICES {
                        for rho in UTILIZATION_GRID {
                            let half = 0.5 / rho;
                            out.push(TestSpec {
                                spec: QueueSpec::heterogeneous(
                                    arrival.clone(),
                                    unit_law(s1)?.scaled(half)?,
                                    unit_law(s2)?.scaled(half)?,
                                )?,
                                rho,
                                families: vec![a.into(), s1.into(), s2.into()],
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(build_testset2(SystemKind::Ggc).unwrap().len(), 6000);
        assert_eq!(build_testset2(SystemKind::Gg2).unwrap().len(), 3600);
    }

    #[test]
    fn grid_points() {
        assert_eq!(UTILIZATION_GRID.len(), 20);
        assert!((UTILIZATION_GRID[0] - 0.01).abs() < 1e-15);
        assert!((UTILIZATION_GRID[19] - 0.96).abs() < 1e-15);
        for w in UTILIZATION_GRID.windows(2) {
            assert!((w[1] - w[0] - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn offered_load_matches_grid() {
        for kind in [SystemKind::Ggc, SystemKind::Gg2] {
            for t in build_testset2(kind).unwrap() {
                assert!((t.spec.offered_load() - t.rho).abs() < 1e-9);
                assert!((t.spec.arrival.mean() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn family_shapes() {
        for (tag, want) in [("E4", 0.25), ("LN(0.25)", 0.25), ("H2(4)", 4.0), ("LN(4)", 4.0), ("G(4)", 4.0), ("M", 1.0)] {
            let m = unit_law(tag).unwrap().moments(2).unwrap();
            assert!((m[0] - 1.0).abs() < 1e-12);
            assert!((m[1] - 1.0 - want).abs() < 1e-9, "{tag}");
        }
    }
}
