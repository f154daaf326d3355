use serde::{Deserialize, Serialize};

use crate::SystemKind;

/// Row attributes that decide its evaluation group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeta {
    pub scv_arrival: f64,
    /// One entry for GI/GI/c, two for GI/GI_i/2.
    pub scv_services: Vec<f64>,
    /// Target rho for GI/GI/c, measured average busy fraction for GI/GI_i/2.
    pub rho: f64,
    pub c: usize,
}

/// Evaluation group: SCV flags (true = above 1), utilization quartile 1..=4
/// and, for GI/GI/c only, whether `c >= 6`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentKey {
    pub arrival_high: bool,
    pub service_high: Vec<bool>,
    pub rho_q: u8,
    pub servers_high: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmented {
    pub key: SegmentKey,
    /// Utilization fell outside [0.01, 0.95] and was clamped to the nearest band.
    pub flagged: bool,
}

const RHO_MIN: f64 = 0.01;
const RHO_MAX: f64 = 0.95;

fn rho_quartile(rho: f64) -> u8 {
    if rho < 0.25 {
        1
    } else if rho < 0.5 {
        2
    } else if rho < 0.75 {
        3
    } else {
        4
    }
}

pub fn segment(meta: &SegmentMeta) -> Segmented {
    let flagged = !(RHO_MIN..=RHO_MAX).contains(&meta.rho) || meta.rho.is_nan();
    let heterogeneous = meta.scv_services.len() == 2;
    Segmented {
        key: SegmentKey {
            arrival_high: meta.scv_arrival > 1.0,
            service_high: meta.scv_services.iter().map(|s| *s > 1.0).collect(),
            rho_q: rho_quartile(meta.rho),
            servers_high: (!heterogeneous).then_some(meta.c >= 6),
        },
        flagged,
    }
}

/// The 32 groups of a system kind in report order.
pub fn all_keys(kind: SystemKind) -> Vec<SegmentKey> {
    let flags = [false, true];
    let mut keys = Vec::with_capacity(32);
    match kind {
        SystemKind::Ggc => {
            for a in flags {
                for s in flags {
                    for q in 1..=4 {
                        for c in flags {
                            keys.push(SegmentKey {
                                arrival_high: a,
                                service_high: vec![s],
                                rho_q: q,
                                servers_high: Some(c),
                            });
                        }
                    }
                }
            }
        }
        SystemKind::Gg2 => {
            for a in flags {
                for s1 in flags {
                    for s2 in flags {
                        for q in 1..=4 {
                            keys.push(SegmentKey {
                                arrival_high: a,
                                service_high: vec![s1, s2],
                                rho_q: q,
                                servers_high: None,
                            });
                        }
                    }
                }
            }
        }
    }
    keys
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn meta(ca2: f64, cs2: &[f64], rho: f64, c: usize) -> SegmentMeta {
        SegmentMeta {
            scv_arrival: ca2,
            scv_services: cs2.to_vec(),
            rho,
            c,
        }
    }

    #[test]
    fn homogeneous_example() {
        let s = segment(&meta(0.5, &[3.0], 0.6, 7));
        assert_eq!(
            s.key,
            SegmentKey {
                arrival_high: false,
                service_high: vec![true],
                rho_q: 3,
                servers_high: Some(true),
            }
        );
        assert!(!s.flagged);
    }

    #[test]
    fn quartile_boundaries_are_left_closed() {
        assert_eq!(segment(&meta(1.0, &[1.0], 0.25, 1)).key.rho_q, 2);
        assert_eq!(segment(&meta(1.0, &[1.0], 0.2499, 1)).key.rho_q, 1);
        assert_eq!(segment(&meta(1.0, &[1.0], 0.5, 1)).key.rho_q, 3);
        assert_eq!(segment(&meta(1.0, &[1.0], 0.95, 1)).key.rho_q, 4);
        assert!(!segment(&meta(1.0, &[1.0], 0.95, 1)).flagged);
    }

    #[test]
    fn out_of_domain_rho_is_clamped_and_flagged() {
        let hi = segment(&meta(1.0, &[1.0], 0.955, 1));
        assert_eq!(hi.key.rho_q, 4);
        assert!(hi.flagged);
        let lo = segment(&meta(1.0, &[1.0], 0.005, 1));
        assert_eq!(lo.key.rho_q, 1);
        assert!(lo.flagged);
    }

    #[test]
    fn each_kind_has_32_groups() {
        for kind in [SystemKind::Ggc, SystemKind::Gg2] {
            let keys = all_keys(kind);
            assert_eq!(keys.len(), 32);
            assert_eq!(keys.iter().collect::<HashSet<_>>().len(), 32);
        }
    }

    #[test]
    fn segmentation_image_covers_all_keys() {
        let mut seen = HashSet::new();
        for &ca2 in &[0.5, 2.0] {
            for &cs2 in &[0.5, 2.0] {
                for &rho in &[0.1, 0.3, 0.6, 0.9] {
                    for &c in &[2usize, 8] {
                        seen.insert(segment(&meta(ca2, &[cs2], rho, c)).key);
                    }
                    for &cs2b in &[0.5, 2.0] {
                        seen.insert(segment(&meta(ca2, &[cs2, cs2b], rho, 2)).key);
                    }
                }
            }
        }
        let expected: HashSet<_> = all_keys(SystemKind::Ggc)
            .into_iter()
            .chain(all_keys(SystemKind::Gg2))
            .collect();
        assert_eq!(seen, expected);
    }
}
