use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    exact_mmc_instance, gen_gg2_spec, gen_ggc_spec, label, row_seed, DatagenError, GenConfig,
    Instance, InstanceMeta, LabelConfig, SpecFamily, DEFAULT_MOMENTS,
};
use crate::dists::DistError;
use crate::seed::derive_seed;
use crate::SystemKind;

pub const SCHEMA_VERSION: u32 = 1;

/// First line of every dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub v: u32,
    pub system: SystemKind,
    pub n: usize,
    pub l: usize,
}

impl DatasetHeader {
    pub fn new(system: SystemKind, n: usize, l: usize) -> Self {
        DatasetHeader {
            v: SCHEMA_VERSION,
            system,
            n,
            l,
        }
    }

    pub fn feature_dim(&self) -> usize {
        super::feature_dim(self.system, self.n)
    }

    fn check_row(&self, row: &Instance, line: usize) -> Result<(), DatagenError> {
        if row.features.len() != self.feature_dim() || row.label.len() != self.l {
            return Err(DatagenError::Header(format!(
                "line {line}: row has {} features and {} label entries, header declares {} and {}",
                row.features.len(),
                row.label.len(),
                self.feature_dim(),
                self.l
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub rows: Vec<Instance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    pub fn labels(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.label.clone()).collect()
    }

    pub fn metas(&self) -> Vec<&InstanceMeta> {
        self.rows.iter().map(|r| &r.meta).collect()
    }

    /// Rebuilds every row's features from its stored moments with `n` moments.
    pub fn with_moments(&self, n: usize) -> Result<Dataset, DatagenError> {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.features = super::features_from_moments(
                    self.header.system,
                    &r.meta.moments,
                    r.meta.c,
                    n,
                )?;
                r.meta.n_moments = n;
                Ok(r)
            })
            .collect::<Result<_, DatagenError>>()?;
        Ok(Dataset {
            header: DatasetHeader { n, ..self.header },
            rows,
        })
    }

    /// Rows `[start, end)` under the same header.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            header: self.header,
            rows: self.rows[start..end].to_vec(),
        }
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatagenError> {
    let io = |source| DatagenError::Io { row: 0, source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| DatagenError::Header("empty dataset file".into()))?
        .map_err(io)?;
    let header: DatasetHeader =
        serde_json::from_str(&first).map_err(|source| DatagenError::Parse { line: 1, source })?;
    if header.v != SCHEMA_VERSION {
        return Err(DatagenError::Header(format!(
            "schema version {} unsupported (expected {SCHEMA_VERSION})",
            header.v
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|source| DatagenError::Io { row: i, source })?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Instance = serde_json::from_str(&line)
            .map_err(|source| DatagenError::Parse { line: i + 2, source })?;
        header.check_row(&row, i + 2)?;
        rows.push(row);
    }
    Ok(Dataset { header, rows })
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), DatagenError> {
    let io = |row| move |source| DatagenError::Io { row, source };
    let mut w = BufWriter::new(File::create(path).map_err(io(0))?);
    let header = serde_json::to_string(&data.header).expect("header serializes");
    writeln!(w, "{header}").map_err(io(0))?;
    for (i, row) in data.rows.iter().enumerate() {
        data.header.check_row(row, i + 2)?;
        let line = serde_json::to_string(row).expect("rows serialize");
        writeln!(w, "{line}").map_err(io(i))?;
    }
    w.flush().map_err(io(data.rows.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOptions {
    pub system: SystemKind,
    pub count: usize,
    pub master_seed: u64,
    pub gen: GenConfig,
    /// `label.sim.seed` is ignored; each row derives its own.
    pub label: LabelConfig,
    pub n_moments: usize,
    /// Also emit each two-server row with its service blocks exchanged.
    pub augment_swap: bool,
    /// Label Markovian GI/GI/c rows with the closed form instead of simulating.
    pub exact_labels: bool,
    pub max_attempts: usize,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
}

impl GenerateOptions {
    pub fn new(system: SystemKind, count: usize, master_seed: u64) -> Self {
        GenerateOptions {
            system,
            count,
            master_seed,
            gen: GenConfig::default(),
            label: LabelConfig::default(),
            n_moments: DEFAULT_MOMENTS,
            augment_swap: false,
            exact_labels: false,
            max_attempts: 100,
            jobs: 0,
        }
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader::new(self.system, self.n_moments, self.label.sim.truncation)
    }

    fn rows_per_index(&self) -> usize {
        if self.augment_swap && self.system == SystemKind::Gg2 {
            2
        } else {
            1
        }
    }

    fn validate(&self) -> Result<(), DatagenError> {
        if self.count < 1 {
            return Err(DatagenError::Invalid("count must be >= 1".into()));
        }
        if !(1..=super::STORED_MOMENTS).contains(&self.n_moments) {
            return Err(DatagenError::Invalid(format!(
                "n_moments must lie in 1..={}",
                super::STORED_MOMENTS
            )));
        }
        if self.exact_labels
            && (self.system != SystemKind::Ggc || self.gen.family != SpecFamily::Markovian)
        {
            return Err(DatagenError::Invalid(
                "exact labels require the Markovian GI/GI/c family".into(),
            ));
        }
        if self.max_attempts < 1 {
            return Err(DatagenError::Invalid("max_attempts must be >= 1".into()));
        }
        self.label.sim.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenerateSummary {
    /// Logical rows already present when the run started.
    pub resumed: usize,
    /// Logical rows produced by this run.
    pub generated: usize,
    /// Candidate specs discarded (sampler budget or truncation tolerance).
    pub rejected: usize,
}

/// Produces the accepted instance(s) for logical row `index`, plus the
/// number of rejected attempts.
pub fn generate_row(
    opts: &GenerateOptions,
    index: usize,
) -> Result<(Vec<Instance>, usize), DatagenError> {
    for attempt in 0..opts.max_attempts {
        let seed = row_seed(opts.master_seed, index as u64, attempt as u64);
        if opts.exact_labels {
            let inst =
                exact_mmc_instance(seed, &opts.gen, opts.label.sim.truncation, opts.n_moments)?;
            if inst.meta.tail_mass > opts.label.delta {
                continue;
            }
            return Ok((vec![inst], attempt));
        }
        let spec_seed = derive_seed(seed, &[0]);
        let drawn = match opts.system {
            SystemKind::Ggc => gen_ggc_spec(spec_seed, &opts.gen),
            SystemKind::Gg2 => gen_gg2_spec(spec_seed, &opts.gen),
        };
        let (spec, target_rho) = match drawn {
            Ok(v) => v,
            Err(DatagenError::Dist(DistError::ResampleNeeded(_))) => continue,
            Err(e) => return Err(e),
        };
        let mut cfg = opts.label.clone();
        cfg.sim.seed = derive_seed(seed, &[1]);
        let labeled = label(&spec, &cfg)?;
        if labeled.flagged {
            continue;
        }
        let r = labeled.result;
        let inst = Instance::build(
            &spec,
            target_rho,
            seed,
            r.probs.into_vec(),
            r.tail_mass,
            &r.busy,
            false,
            opts.n_moments,
        )?;
        let mut out = vec![inst];
        if opts.rows_per_index() == 2 {
            let sw = out[0].swapped();
            out.push(sw);
        }
        return Ok((out, attempt));
    }
    Err(DatagenError::Exhausted {
        row: index,
        attempts: opts.max_attempts,
    })
}

fn run_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn generate_range(
    opts: &GenerateOptions,
    range: std::ops::Range<usize>,
) -> Result<(Vec<Instance>, usize), DatagenError> {
    let parts: Vec<(Vec<Instance>, usize)> = range
        .into_par_iter()
        .map(|i| generate_row(opts, i))
        .collect::<Result<_, _>>()?;
    let rejected = parts.iter().map(|p| p.1).sum();
    Ok((parts.into_iter().flat_map(|p| p.0).collect(), rejected))
}

/// Builds a dataset without touching the filesystem.
pub fn generate_in_memory(opts: &GenerateOptions) -> Result<(Dataset, GenerateSummary), DatagenError> {
    opts.validate()?;
    let (rows, rejected) = run_pool(opts.jobs, || generate_range(opts, 0..opts.count))?;
    Ok((
        Dataset {
            header: opts.header(),
            rows,
        },
        GenerateSummary {
            resumed: 0,
            generated: opts.count,
            rejected,
        },
    ))
}

/// Complete rows already on disk; truncates a partially written tail.
fn resume_point(path: &Path, opts: &GenerateOptions) -> Result<usize, DatagenError> {
    let io = |source| DatagenError::Io { row: 0, source };
    let mut file = OpenOptions::new().read(true).write(true).open(path).map_err(io)?;
    let mut reader = BufReader::new(&mut file);
    let mut line = String::new();
    let mut offset = reader.read_line(&mut line).map_err(io)? as u64;
    if !line.ends_with('\n') {
        // header never completed
        drop(reader);
        file.set_len(0).map_err(io)?;
        return Ok(usize::MAX);
    }
    let header: DatasetHeader = serde_json::from_str(line.trim_end())
        .map_err(|source| DatagenError::Parse { line: 1, source })?;
    if header != opts.header() {
        return Err(DatagenError::Header(format!(
            "existing file declares {header:?}, this run needs {:?}",
            opts.header()
        )));
    }
    let rpi = opts.rows_per_index();
    let mut complete = 0usize;
    let mut keep = offset;
    loop {
        line.clear();
        let n = reader
            .read_line(&mut line)
            .map_err(|source| DatagenError::Io { row: complete, source })?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        match serde_json::from_str::<Instance>(line.trim_end()) {
            Ok(row) if header.check_row(&row, complete + 2).is_ok() => {}
            _ => break,
        }
        complete += 1;
        offset += n as u64;
        if complete.is_multiple_of(rpi) {
            keep = offset;
        }
    }
    drop(reader);
    file.set_len(keep).map_err(io)?;
    Ok(complete / rpi)
}

/// Writes `opts.count` logical rows to `path`, continuing from any complete
/// rows an earlier run left behind. Output is identical to an uninterrupted
/// run with the same options.
pub fn generate_dataset(path: &Path, opts: &GenerateOptions) -> Result<GenerateSummary, DatagenError> {
    opts.validate()?;
    let mut start = 0;
    let exists = path.metadata().map(|m| m.len() > 0).unwrap_or(false);
    if exists {
        start = resume_point(path, opts)?;
    }
    let io = |row| move |source| DatagenError::Io { row, source };
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io(0))?;
    if !exists || start == usize::MAX {
        start = 0;
        let header = serde_json::to_string(&opts.header()).expect("header serializes");
        writeln!(file, "{header}").map_err(io(0))?;
    }
    let mut summary = GenerateSummary {
        resumed: start.min(opts.count),
        ..Default::default()
    };
    let chunk = 64.max(4 * opts.jobs.max(rayon::current_num_threads()));
    let mut next = start;
    while next < opts.count {
        let end = (next + chunk).min(opts.count);
        let (rows, rejected) = run_pool(opts.jobs, || generate_range(opts, next..end))?;
        let mut w = BufWriter::new(&mut file);
        for (k, row) in rows.iter().enumerate() {
            let line = serde_json::to_string(row).expect("rows serialize");
            writeln!(w, "{line}").map_err(io(next + k / opts.rows_per_index()))?;
        }
        w.flush().map_err(io(end))?;
        summary.generated += end - next;
        summary.rejected += rejected;
        next = end;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::PhSamplerConfig;
    use crate::simqueue::SimConfig;

    fn small(system: SystemKind, count: usize) -> GenerateOptions {
        let mut o = GenerateOptions::new(system, count, 11);
        o.gen.ph = PhSamplerConfig {
            max_order: 10,
            ..Default::default()
        };
        o.label.sim = SimConfig {
            num_arrivals: 5_000,
            truncation: 500,
            ..Default::default()
        };
        o.jobs = 1;
        o
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        let o = small(SystemKind::Ggc, 12);
        generate_dataset(&a, &o).unwrap();
        generate_dataset(&b, &o).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let d = read_dataset(&a).unwrap();
        assert_eq!(d.len(), 12);
        assert_eq!(d.header, DatasetHeader::new(SystemKind::Ggc, 4, 500));
        for r in &d.rows {
            assert_eq!(r.features.len(), 9);
            assert!(r.features[0].abs() < 1e-12);
            assert!(r.meta.tail_mass <= 1e-3);
            assert!(r.label.iter().sum::<f64>() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn resume_after_truncation_matches_full_run() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full.jsonl");
        let part = dir.path().join("part.jsonl");
        let o = small(SystemKind::Gg2, 10);
        generate_dataset(&full, &o).unwrap();
        let bytes = std::fs::read(&full).unwrap();
        // cut in the middle of the fifth row
        let cut = bytes
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == b'\n')
            .nth(5)
            .unwrap()
            .0
            - 40;
        std::fs::write(&part, &bytes[..cut]).unwrap();
        let s = generate_dataset(&part, &o).unwrap();
        assert_eq!(s.resumed, 4);
        assert_eq!(s.generated, 6);
        assert_eq!(std::fs::read(&part).unwrap(), bytes);
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        generate_dataset(&p, &small(SystemKind::Ggc, 2)).unwrap();
        let err = generate_dataset(&p, &small(SystemKind::Gg2, 2)).unwrap_err();
        assert!(matches!(err, DatagenError::Header(_)));
    }

    #[test]
    fn augmentation_doubles_rows() {
        let mut o = small(SystemKind::Gg2, 3);
        o.augment_swap = true;
        let (d, _) = generate_in_memory(&o).unwrap();
        assert_eq!(d.len(), 6);
        for pair in d.rows.chunks(2) {
            assert!(!pair[0].meta.swapped && pair[1].meta.swapped);
            assert_eq!(pair[0].label, pair[1].label);
            let r = &pair[0].meta.service_rates;
            assert!(r[0] >= r[1]);
        }
    }

    #[test]
    fn exact_labels_need_markovian_family() {
        let mut o = small(SystemKind::Ggc, 3);
        o.exact_labels = true;
        assert!(generate_in_memory(&o).is_err());
        o.gen.family = SpecFamily::Markovian;
        let (d, _) = generate_in_memory(&o).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.rows.iter().all(|r| r.meta.family == "M/M"));
    }

    #[test]
    fn moments_can_be_rebuilt() {
        let (d, _) = generate_in_memory(&small(SystemKind::Ggc, 3)).unwrap();
        let d2 = d.with_moments(2).unwrap();
        assert_eq!(d2.header.feature_dim(), 5);
        for (a, b) in d.rows.iter().zip(&d2.rows) {
            assert_eq!(&a.features[..2], &b.features[..2]);
            assert_eq!(&a.features[4..6], &b.features[2..4]);
            assert_eq!(a.features[8], b.features[4]);
        }
        assert_eq!(d2.with_moments(4).unwrap().features(), d.features());
    }
}
