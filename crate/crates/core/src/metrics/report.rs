use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{all_keys, segment, EvalPair, MetricsError, RemDenominator, SegmentKey, SegmentMeta};
use crate::SystemKind;

pub const DEFAULT_PERCENTILES: [f64; 6] = [25.0, 50.0, 75.0, 90.0, 99.0, 99.9];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub key: SegmentKey,
    pub count: usize,
    /// Rows whose utilization was clamped into this group.
    pub flagged: usize,
    pub pare: Vec<f64>,
    /// Zero-denominator exclusions summed over all percentiles.
    pub pare_excluded: usize,
    pub rem: f64,
    pub rem_excluded: usize,
}

/// Per-group PARE and REM table, one row per segment key.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub kind: SystemKind,
    pub percentiles: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

pub fn report(
    pairs: &EvalPair,
    metas: &[SegmentMeta],
    kind: SystemKind,
    percentiles: &[f64],
    denominator: RemDenominator,
) -> Result<Report, MetricsError> {
    if metas.len() != pairs.len() {
        return Err(MetricsError::RowCount {
            truth: pairs.len(),
            pred: metas.len(),
        });
    }
    let mut groups: BTreeMap<SegmentKey, (Vec<usize>, usize)> = BTreeMap::new();
    for (i, m) in metas.iter().enumerate() {
        let s = segment(m);
        let entry = groups.entry(s.key).or_default();
        entry.0.push(i);
        entry.1 += s.flagged as usize;
    }
    let mut rows = Vec::with_capacity(32);
    for key in all_keys(kind) {
        let (idx, flagged) = groups.remove(&key).unwrap_or_default();
        let sub = pairs.subset(&idx);
        let mut pare = Vec::with_capacity(percentiles.len());
        let mut pare_excluded = 0;
        for &p in percentiles {
            let r = sub.pare(p)?;
            pare.push(r.value);
            pare_excluded += r.excluded;
        }
        let rem = sub.rem(denominator);
        rows.push(ReportRow {
            key,
            count: idx.len(),
            flagged,
            pare,
            pare_excluded,
            rem: rem.value,
            rem_excluded: rem.excluded,
        });
    }
    Ok(Report {
        kind,
        percentiles: percentiles.to_vec(),
        rows,
    })
}

fn level(high: bool) -> &'static str {
    if high {
        "High"
    } else {
        "Low"
    }
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        String::new()
    }
}

impl Report {
    pub fn header(&self) -> String {
        let mut cols: Vec<String> = match self.kind {
            SystemKind::Ggc => vec!["arrival_scv".into(), "service_scv".into()],
            SystemKind::Gg2 => vec![
                "arrival_scv".into(),
                "service1_scv".into(),
                "service2_scv".into(),
            ],
        };
        cols.push("rho_q".into());
        if self.kind == SystemKind::Ggc {
            cols.push("servers".into());
        }
        cols.push("count".into());
        cols.extend(self.percentiles.iter().map(|p| format!("pare_{p}")));
        cols.extend(
            ["rem", "pare_excluded", "rem_excluded", "flagged"]
                .iter()
                .map(|s| s.to_string()),
        );
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            let mut fields = vec![level(r.key.arrival_high).to_string()];
            fields.extend(r.key.service_high.iter().map(|h| level(*h).to_string()));
            fields.push(r.key.rho_q.to_string());
            if let Some(c) = r.key.servers_high {
                fields.push(level(c).to_string());
            }
            fields.push(r.count.to_string());
            fields.extend(r.pare.iter().map(|v| cell(*v)));
            fields.push(cell(r.rem));
            fields.push(r.pare_excluded.to_string());
            fields.push(r.rem_excluded.to_string());
            fields.push(r.flagged.to_string());
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pmf(j: usize, l: usize) -> Vec<f64> {
        let mut v = vec![0.0; l];
        v[j] = 1.0;
        v
    }

    #[test]
    fn header_fixture() {
        let pair = EvalPair::new(vec![], vec![]).unwrap();
        let r = report(&pair, &[], SystemKind::Ggc, &DEFAULT_PERCENTILES, RemDenominator::Predicted)
            .unwrap();
        assert_eq!(
            r.header(),
            "arrival_scv,service_scv,rho_q,servers,count,pare_25,pare_50,pare_75,pare_90,\
             pare_99,pare_99.9,rem,pare_excluded,rem_excluded,flagged"
        );
        let r = report(&pair, &[], SystemKind::Gg2, &DEFAULT_PERCENTILES, RemDenominator::Predicted)
            .unwrap();
        assert!(r.header().starts_with("arrival_scv,service1_scv,service2_scv,rho_q,count,"));
        // empty groups still produce 32 rows with zero counts
        assert_eq!(r.rows.len(), 32);
        assert!(r.rows.iter().all(|row| row.count == 0));
        assert_eq!(r.to_csv().lines().count(), 33);
    }

    #[test]
    fn rows_land_in_their_group() {
        let truth = vec![pmf(2, 10), pmf(4, 10)];
        let pred = vec![pmf(3, 10), pmf(4, 10)];
        let pair = EvalPair::new(truth, pred).unwrap();
        let metas = vec![
            SegmentMeta {
                scv_arrival: 0.5,
                scv_services: vec![3.0],
                rho: 0.6,
                c: 7,
            },
            SegmentMeta {
                scv_arrival: 2.0,
                scv_services: vec![0.3],
                rho: 0.1,
                c: 1,
            },
        ];
        let r = report(&pair, &metas, SystemKind::Ggc, &[50.0], RemDenominator::Predicted).unwrap();
        let populated: Vec<&ReportRow> = r.rows.iter().filter(|row| row.count > 0).collect();
        assert_eq!(populated.len(), 2);
        let first = populated
            .iter()
            .find(|row| !row.key.arrival_high)
            .unwrap();
        assert_eq!(first.pare, vec![50.0]);
        assert!((first.rem - 100.0 / 3.0).abs() < 1e-12);
        let csv = r.to_csv();
        assert!(csv.contains("Low,High,3,High,1,50.00,33.33,0,0,0"));
    }

    #[test]
    fn meta_count_must_match() {
        let pair = EvalPair::new(vec![pmf(0, 3)], vec![pmf(0, 3)]).unwrap();
        assert!(report(&pair, &[], SystemKind::Ggc, &[50.0], RemDenominator::Predicted).is_err());
    }
}
