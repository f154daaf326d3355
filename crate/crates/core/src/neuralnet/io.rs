use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{Layer, Mlp};
use super::train::to_matrix;
use super::NnError;
use crate::SystemKind;

const MAGIC: &[u8; 4] = b"QSNN";
pub const MODEL_VERSION: u32 = 1;

/// Trained network plus the feature layout it expects.
///
/// Binary layout, little-endian: magic `QSNN`, `u32` version, `u8` system
/// (0 = ggc, 1 = gg2), `u32` moments per distribution, `u32` input width,
/// `u32` layer count, one `u32` width per layer, then `f32` input shift and
/// scale vectors, then each layer's weights (row-major, `in x out`) followed
/// by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub system: SystemKind,
    pub n_moments: usize,
    pub mlp: Mlp<f32>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        if self.pos + n > self.buf.len() {
            return Err(NnError::Format(format!(
                "file truncated at byte {} (needed {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, NnError> {
        Ok(self
            .take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.mlp;
        let mut out = Vec::with_capacity(32 + 4 * (m.num_params() + 2 * m.input_dim()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.push(match self.system {
            SystemKind::Ggc => 0,
            SystemKind::Gg2 => 1,
        });
        let widths = m.widths();
        for v in [self.n_moments, m.input_dim(), widths.len()]
            .into_iter()
            .chain(widths.iter().copied())
        {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let floats = m
            .input_mean
            .iter()
            .chain(m.input_scale.iter())
            .chain(m.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter())));
        for v in floats {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NnError::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(NnError::Format(format!(
                "model version {version} unsupported (expected {MODEL_VERSION})"
            )));
        }
        let system = match r.take(1)?[0] {
            0 => SystemKind::Ggc,
            1 => SystemKind::Gg2,
            other => return Err(NnError::Format(format!("unknown system tag {other}"))),
        };
        let n_moments = r.u32()? as usize;
        let input_dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        if count == 0 || count > 1024 {
            return Err(NnError::Format(format!("implausible layer count {count}")));
        }
        let widths = (0..count)
            .map(|_| r.u32().map(|w| w as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let input_mean = Array1::from(r.f32s(input_dim)?);
        let input_scale = Array1::from(r.f32s(input_dim)?);
        let mut layers = Vec::with_capacity(count);
        let mut fan_in = input_dim;
        for &w in &widths {
            let weights = Array2::from_shape_vec((fan_in, w), r.f32s(fan_in * w)?)
                .map_err(|e| NnError::Format(e.to_string()))?;
            layers.push(Layer {
                w: weights,
                b: Array1::from(r.f32s(w)?),
            });
            fan_in = w;
        }
        if r.pos != buf.len() {
            return Err(NnError::Format(format!(
                "{} trailing bytes after the last layer",
                buf.len() - r.pos
            )));
        }
        let mlp = Mlp {
            input_mean,
            input_scale,
            layers,
        };
        if !mlp.all_finite() {
            return Err(NnError::Format("non-finite parameter".into()));
        }
        Ok(ModelFile {
            system,
            n_moments,
            mlp,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_bytes()).map_err(NnError::Io)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_bytes(&std::fs::read(path).map_err(NnError::Io)?)
    }

    /// Expected feature width.
    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    /// Probability rows for feature rows, computed in `f32` and widened.
    pub fn predict(&self, features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, NnError> {
        if features.is_empty() {
            return Ok(Vec::new());
        }
        let x = to_matrix(features)?;
        let p = self.mlp.infer_batch(x.view())?;
        Ok(p.rows()
            .into_iter()
            .map(|r| r.iter().map(|v| *v as f64).collect())
            .collect())
    }
}
