//! Versioned flat-text model files.
//!
//! ```text
//! vaicam-ensemble <version> <state_mode> <w0,w1,...,wL> <N>
//! input_mean <values...>
//! input_std <values...>
//! target_mean <values...>
//! target_std <values...>
//! member <i>
//! weights <layer> <row-major values...>
//! bias <layer> <values...>
//! ...
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a load
//! reproduces the saved model bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::ensemble::{EnsembleModel, ModelNorm};
use super::mlp::{Dense, Mlp};
use super::norm::NormStats;
use super::{ModelError, StateMode};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "vaicam-ensemble";

fn join(values: impl IntoIterator<Item = f64>) -> String {
    let mut out = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v}").expect("string write");
    }
    out
}

pub fn write_model<W: Write>(model: &EnsembleModel, mut w: W) -> Result<(), ModelError> {
    let norm = model.norm.as_ref().ok_or(ModelError::NotReady)?;
    let widths = model.widths();
    let topology = widths
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",");
    writeln!(
        w,
        "{MAGIC} {MODEL_FORMAT_VERSION} {} {topology} {}",
        model.mode.as_str(),
        model.members.len()
    )?;
    writeln!(w, "input_mean {}", join(norm.input.mean.iter().copied()))?;
    writeln!(w, "input_std {}", join(norm.input.std.iter().copied()))?;
    writeln!(w, "target_mean {}", join(norm.target.mean.iter().copied()))?;
    writeln!(w, "target_std {}", join(norm.target.std.iter().copied()))?;
    for (i, m) in model.members.iter().enumerate() {
        writeln!(w, "member {i}")?;
        for (l, layer) in m.layers.iter().enumerate() {
            writeln!(w, "weights {l} {}", join(layer.weights.iter().copied()))?;
            writeln!(w, "bias {l} {}", join(layer.bias.iter().copied()))?;
        }
    }
    Ok(())
}

pub fn save_model(model: &EnsembleModel, path: &Path) -> Result<(), ModelError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<EnsembleModel, ModelError> {
    read_model(std::fs::File::open(path)?)
}

struct Lines<R: BufRead> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self, what: &str) -> Result<String, ModelError> {
        self.line += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(ModelError::Format(format!(
                "unexpected end of file, expected {what}"
            ))),
        }
    }

    /// Reads a `<tag> [index] <floats...>` line.
    fn floats(
        &mut self,
        tag: &str,
        index: Option<usize>,
        expected: usize,
    ) -> Result<Vec<f64>, ModelError> {
        let line = self.next(tag)?;
        let mut parts = line.split_ascii_whitespace();
        if parts.next() != Some(tag) {
            return Err(self.err(format!("expected `{tag}`")));
        }
        if let Some(i) = index {
            if parts.next().and_then(|p| p.parse::<usize>().ok()) != Some(i) {
                return Err(self.err(format!("expected `{tag} {i}`")));
            }
        }
        let values = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|e| self.err(format!("bad number `{p}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != expected {
            return Err(self.err(format!(
                "`{tag}` has {} values, expected {expected}",
                values.len()
            )));
        }
        Ok(values)
    }

    fn err(&self, msg: String) -> ModelError {
        ModelError::Format(format!("line {}: {msg}", self.line))
    }
}

pub fn read_model<R: Read>(r: R) -> Result<EnsembleModel, ModelError> {
    let mut lines = Lines {
        inner: BufReader::new(r).lines(),
        line: 0,
    };
    let header = lines.next("header")?;
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC {
        return Err(ModelError::Format(format!("not a model file: `{header}`")));
    }
    let version: u32 = fields[1]
        .parse()
        .map_err(|_| ModelError::Format(format!("bad version `{}`", fields[1])))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelError::Format(format!(
            "model format version {version} is not supported (expected {MODEL_FORMAT_VERSION})"
        )));
    }
    let mode: StateMode = fields[2].parse().map_err(ModelError::Format)?;
    let widths = fields[3]
        .split(',')
        .map(|w| w.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| ModelError::Format(format!("bad topology `{}`", fields[3])))?;
    let n: usize = fields[4]
        .parse()
        .map_err(|_| ModelError::Format(format!("bad member count `{}`", fields[4])))?;
    if widths.len() < 2
        || widths[0] != mode.input_dim()
        || widths[widths.len() - 1] != mode.state_dim()
    {
        return Err(ModelError::Format(format!(
            "topology {widths:?} does not fit {} state mode",
            mode.as_str()
        )));
    }

    let (n_in, n_out) = (mode.input_dim(), mode.state_dim());
    let input = NormStats::new(
        Array1::from(lines.floats("input_mean", None, n_in)?),
        Array1::from(lines.floats("input_std", None, n_in)?),
    )?;
    let target = NormStats::new(
        Array1::from(lines.floats("target_mean", None, n_out)?),
        Array1::from(lines.floats("target_std", None, n_out)?),
    )?;

    let mut members = Vec::with_capacity(n);
    for i in 0..n {
        let tag = lines.next("member")?;
        if tag.trim() != format!("member {i}") {
            return Err(lines.err(format!("expected `member {i}`")));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, w) in widths.windows(2).enumerate() {
            let weights = lines.floats("weights", Some(l), w[0] * w[1])?;
            let bias = lines.floats("bias", Some(l), w[1])?;
            layers.push(Dense {
                weights: Array2::from_shape_vec((w[0], w[1]), weights).expect("checked length"),
                bias: Array1::from(bias),
            });
        }
        members.push(Mlp { layers });
    }
    Ok(EnsembleModel {
        mode,
        members,
        norm: Some(ModelNorm { input, target }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NetworkConfig;

    fn model() -> EnsembleModel {
        let cfg = NetworkConfig {
            neurons_per_layer: 6,
            n_estimators: 2,
            ..Default::default()
        };
        let mut m = EnsembleModel::init(StateMode::Dynamic, &cfg, 11);
        m.norm = Some(ModelNorm {
            input: NormStats::new(
                Array1::from(vec![0.1, -0.2, 0.3, 12.5, -0.01]),
                Array1::from(vec![1e-3, 0.02, 0.1, 4.0, 3e-3]),
            )
            .unwrap(),
            target: NormStats::new(
                Array1::from(vec![1e-5, 0.0, 1e-4, 0.01]),
                Array1::from(vec![1e-4, 0.01, 1e-3, 0.1]),
            )
            .unwrap(),
        });
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut buf = Vec::new();
        write_model(&model(), &mut buf).unwrap();
        let text =
            String::from_utf8(buf)
                .unwrap()
                .replacen("vaicam-ensemble 1 ", "vaicam-ensemble 2 ", 1);
        assert!(matches!(
            read_model(text.as_bytes()),
            Err(ModelError::Format(_))
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut buf = Vec::new();
        write_model(&model(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(7).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            read_model(cut.as_bytes()),
            Err(ModelError::Format(_))
        ));
    }

    #[test]
    fn untrained_model_cannot_be_saved() {
        let cfg = NetworkConfig {
            neurons_per_layer: 4,
            ..Default::default()
        };
        let m = EnsembleModel::init(StateMode::Static, &cfg, 0);
        assert!(matches!(
            write_model(&m, Vec::new()),
            Err(ModelError::NotReady)
        ));
    }
}
