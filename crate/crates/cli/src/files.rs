use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use qsurrogate_core::datagen::{read_dataset, Dataset, DatasetHeader, InstanceMeta, TestSpec};
use qsurrogate_core::dists::Dist;
use qsurrogate_core::metrics::SegmentMeta;
use qsurrogate_core::simqueue::QueueSpec;
use serde::Serialize;
use serde_json::Value;

/// Version written in the header line of every JSON-lines output.
pub const FORMAT_VERSION: u32 = 1;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn json_lines(path: &Path) -> Result<Vec<(usize, Value)>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{}:{}: invalid JSON", path.display(), i + 1))
                .map(|v| (i + 1, v))
        })
        .collect()
}

/// Header lines carry a `v` field and no row payload.
fn is_header(v: &Value) -> bool {
    v.get("v").is_some() && v.get("probs").is_none() && v.get("features").is_none()
}

fn first_line_is_dataset_header(path: &Path) -> Result<bool> {
    let text = read_text(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    Ok(serde_json::from_str::<DatasetHeader>(first).is_ok())
}

/// Reads a dataset file if the first line is a dataset header.
pub fn try_dataset(path: &Path) -> Result<Option<Dataset>> {
    if first_line_is_dataset_header(path)? {
        Ok(Some(read_dataset(path)?))
    } else {
        Ok(None)
    }
}

fn numbers(v: &Value, path: &Path, line: usize) -> Result<Vec<f64>> {
    serde_json::from_value(v.clone())
        .with_context(|| format!("{}:{line}: expected an array of numbers", path.display()))
}

/// Feature rows from a dataset file or from lines of numeric arrays.
pub fn read_features(path: &Path) -> Result<Vec<Vec<f64>>> {
    if let Some(d) = try_dataset(path)? {
        return Ok(d.features());
    }
    let mut rows = Vec::new();
    for (line, v) in json_lines(path)? {
        match &v {
            Value::Array(_) => rows.push(numbers(&v, path, line)?),
            Value::Object(o) if o.contains_key("features") => {
                rows.push(numbers(&o["features"], path, line)?)
            }
            _ if is_header(&v) => {}
            _ => bail!("{}:{line}: expected a feature array", path.display()),
        }
    }
    Ok(rows)
}

/// Probability rows from a dataset file (labels), prediction or simulation
/// output, or plain lines of numeric arrays.
pub fn read_prob_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    if let Some(d) = try_dataset(path)? {
        return Ok(d.labels());
    }
    let mut rows = Vec::new();
    for (line, v) in json_lines(path)? {
        match &v {
            Value::Array(_) => rows.push(numbers(&v, path, line)?),
            Value::Object(o) if o.contains_key("probs") => {
                rows.push(numbers(&o["probs"], path, line)?)
            }
            _ if is_header(&v) => {}
            _ => bail!("{}:{line}: expected a probability array", path.display()),
        }
    }
    Ok(rows)
}

/// Segment attributes from a dataset file, instance metadata lines or
/// bare segment records.
pub fn read_metas(path: &Path) -> Result<Vec<SegmentMeta>> {
    if let Some(d) = try_dataset(path)? {
        return Ok(d.metas().iter().map(|m| m.segment_meta()).collect());
    }
    let mut out = Vec::new();
    for (line, v) in json_lines(path)? {
        if let Ok(m) = serde_json::from_value::<InstanceMeta>(v.clone()) {
            out.push(m.segment_meta());
        } else if let Ok(m) = serde_json::from_value::<SegmentMeta>(v.clone()) {
            out.push(m);
        } else if let Some(m) = v.get("meta") {
            let m: InstanceMeta = serde_json::from_value(m.clone())
                .with_context(|| format!("{}:{line}: invalid row metadata", path.display()))?;
            out.push(m.segment_meta());
        } else if !is_header(&v) {
            bail!("{}:{line}: expected segment metadata", path.display());
        }
    }
    Ok(out)
}

/// One spec as a JSON document, or JSON lines of specs or test-set entries.
pub fn read_specs(path: &Path) -> Result<Vec<QueueSpec>> {
    let text = read_text(path)?;
    if let Ok(spec) = serde_json::from_str::<QueueSpec>(&text) {
        return Ok(vec![spec]);
    }
    let mut out = Vec::new();
    for (line, v) in json_lines(path)? {
        if v.get("spec").is_some() {
            let t: TestSpec = serde_json::from_value(v)
                .with_context(|| format!("{}:{line}: invalid test-set entry", path.display()))?;
            out.push(t.spec);
        } else if is_header(&v) {
            continue;
        } else {
            out.push(
                serde_json::from_value(v)
                    .with_context(|| format!("{}:{line}: invalid queue spec", path.display()))?,
            );
        }
    }
    if out.is_empty() {
        bail!("{}: no queue specs found", path.display());
    }
    Ok(out)
}

pub fn read_dist(path: &Path) -> Result<Dist> {
    serde_json::from_str(&read_text(path)?)
        .with_context(|| format!("{}: invalid distribution", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Header line followed by one compact JSON record per row.
pub fn write_json_lines<H: Serialize, R: Serialize>(
    path: &Path,
    header: &H,
    rows: &[R],
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", serde_json::to_string(header)?)?;
    for r in rows {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
}

/// Pretty JSON document with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}
