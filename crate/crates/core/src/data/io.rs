//! CSV files for rollouts and datasets.
//!
//! Each file starts with one `#` line carrying the schema version and the
//! metadata needed to interpret the columns, followed by a column header and
//! one row per record. Floats use shortest round-trip formatting.

use std::collections::HashMap;
use std::fmt::Display;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::dataset::{Dataset, Split, Transition};
use super::reference::ReferenceKind;
use super::rollout::{Rollout, RolloutMeta, RolloutSample};
use super::DataError;
use crate::control::ControllerKind;
use crate::model::{StateMode, StateSample};

pub const DATA_SCHEMA_VERSION: u32 = 1;
const ROLLOUT_MAGIC: &str = "vaicam-rollout";
const DATASET_MAGIC: &str = "vaicam-dataset";
const ROLLOUT_COLUMNS: &str = "t,z,z_dot,v,f_z,x_f_z,x_c_star_z,h_r_z,cost";

fn header(magic: &str, meta: &[(&str, String)]) -> String {
    let mut h = format!("# {magic} {DATA_SCHEMA_VERSION}");
    for (k, v) in meta {
        h.push_str(&format!(" {k}={v}"));
    }
    h
}

fn format_err(line: usize, msg: impl Display) -> DataError {
    DataError::Format(format!("line {line}: {msg}"))
}

/// Parses `# <magic> <version> key=value...`.
fn parse_header(line: &str, magic: &str) -> Result<HashMap<String, String>, DataError> {
    let mut parts = line.split_ascii_whitespace();
    if parts.next() != Some("#") || parts.next() != Some(magic) {
        return Err(format_err(1, format!("expected a `{magic}` header")));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format_err(1, "missing schema version"))?;
    if version != DATA_SCHEMA_VERSION {
        return Err(format_err(
            1,
            format!("schema version {version} is not supported (expected {DATA_SCHEMA_VERSION})"),
        ));
    }
    parts
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| format_err(1, format!("bad header field `{kv}`")))
        })
        .collect()
}

fn field<T: FromStr>(meta: &HashMap<String, String>, key: &str) -> Result<T, DataError>
where
    T::Err: Display,
{
    let raw = meta
        .get(key)
        .ok_or_else(|| format_err(1, format!("header lacks `{key}`")))?;
    raw.parse()
        .map_err(|e| format_err(1, format!("bad `{key}`: {e}")))
}

fn parse_row(line: &str, n: usize, line_no: usize) -> Result<Vec<f64>, DataError> {
    let values = line
        .split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|e| format_err(line_no, format!("bad number `{c}`: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != n {
        return Err(format_err(
            line_no,
            format!("{} columns, expected {n}", values.len()),
        ));
    }
    Ok(values)
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn write_rollout<W: Write>(r: &Rollout, mut w: W) -> Result<(), DataError> {
    let m = &r.meta;
    let activation = m.activation.map_or("none".to_string(), |a| a.to_string());
    writeln!(
        w,
        "{}",
        header(
            ROLLOUT_MAGIC,
            &[
                ("mode", m.mode.as_str().into()),
                ("kind", m.kind.as_str().into()),
                ("controller", m.controller.as_str().into()),
                ("seed", m.seed.to_string()),
                ("velocity", m.velocity.to_string()),
                ("dt", m.dt.to_string()),
                ("activation", activation),
            ],
        )
    )?;
    writeln!(w, "{ROLLOUT_COLUMNS}")?;
    for s in &r.samples {
        let st = &s.state;
        writeln!(
            w,
            "{}",
            join(&[s.t, st.z, st.z_dot, st.v, st.f_z, st.x_f_z, s.x_c_z, s.h_r_z, s.cost])
        )?;
    }
    Ok(())
}

pub fn read_rollout<R: Read>(r: R) -> Result<Rollout, DataError> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| format_err(1, "empty file"))??;
    let meta = parse_header(&first, ROLLOUT_MAGIC)?;
    let columns = lines
        .next()
        .ok_or_else(|| format_err(2, "missing column header"))??;
    if columns.trim() != ROLLOUT_COLUMNS {
        return Err(format_err(2, format!("unexpected columns `{columns}`")));
    }
    let activation = match meta.get("activation").map(String::as_str) {
        Some("none") => None,
        _ => Some(field::<usize>(&meta, "activation")?),
    };
    let meta = RolloutMeta {
        kind: field::<ReferenceKind>(&meta, "kind")?,
        seed: field(&meta, "seed")?,
        controller: field::<ControllerKind>(&meta, "controller")?,
        velocity: field(&meta, "velocity")?,
        mode: field::<StateMode>(&meta, "mode")?,
        dt: field(&meta, "dt")?,
        activation,
    };
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_row(&line, 9, i + 3)?;
        samples.push(RolloutSample {
            t: v[0],
            state: StateSample {
                z: v[1],
                z_dot: v[2],
                v: v[3],
                f_z: v[4],
                x_f_z: v[5],
            },
            x_c_z: v[6],
            h_r_z: v[7],
            cost: v[8],
        });
    }
    if let Some(a) = meta.activation {
        if a >= samples.len() {
            return Err(format_err(
                1,
                format!("activation {a} beyond {} samples", samples.len()),
            ));
        }
    }
    Ok(Rollout { meta, samples })
}

fn dataset_columns(mode: StateMode) -> String {
    let mut cols = vec!["rollout".to_string(), "step".to_string()];
    cols.extend(mode.state_names().iter().map(|s| s.to_string()));
    cols.push("x_f_z".into());
    cols.extend(mode.state_names().iter().map(|s| format!("d_{s}")));
    cols.join(",")
}

pub fn write_dataset<W: Write>(d: &Dataset, mut w: W) -> Result<(), DataError> {
    writeln!(
        w,
        "{}",
        header(
            DATASET_MAGIC,
            &[
                ("mode", d.mode.as_str().into()),
                ("split", d.split.as_str().into()),
                ("norm_source", d.norm_source.clone()),
            ],
        )
    )?;
    writeln!(w, "{}", dataset_columns(d.mode))?;
    for t in &d.tuples {
        let mut row = d.mode.features(&t.state);
        row.push(t.state.x_f_z);
        row.extend(t.delta_features(d.mode));
        writeln!(w, "{},{},{}", t.rollout, t.step, join(&row))?;
    }
    Ok(())
}

/// Reads a dataset, failing unless its state mode is `expected`.
pub fn read_dataset<R: Read>(r: R, expected: StateMode) -> Result<Dataset, DataError> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| format_err(1, "empty file"))??;
    let meta = parse_header(&first, DATASET_MAGIC)?;
    let mode: StateMode = field(&meta, "mode")?;
    if mode != expected {
        return Err(format_err(
            1,
            format!(
                "file holds {} data, expected {}",
                mode.as_str(),
                expected.as_str()
            ),
        ));
    }
    let split: Split = field(&meta, "split")?;
    let norm_source: String = field(&meta, "norm_source")?;
    let columns = lines
        .next()
        .ok_or_else(|| format_err(2, "missing column header"))??;
    if columns.trim() != dataset_columns(mode) {
        return Err(format_err(2, format!("unexpected columns `{columns}`")));
    }
    let n = mode.state_dim();
    let mut tuples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = i + 3;
        let mut cells = line.splitn(3, ',');
        let mut id = |what: &str| -> Result<u32, DataError> {
            cells
                .next()
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| format_err(line_no, format!("bad {what} index")))
        };
        let (rollout, step) = (id("rollout")?, id("step")?);
        let rest = cells
            .next()
            .ok_or_else(|| format_err(line_no, "missing values"))?;
        let v = parse_row(rest, 2 * n + 1, line_no)?;
        let base = StateSample {
            x_f_z: v[n],
            ..Default::default()
        };
        let state = mode.apply_delta(&base, &v[..n]);
        let d = &v[n + 1..];
        let delta = match mode {
            StateMode::Static => [d[0], d[1], 0.0, d[2]],
            StateMode::Dynamic => [d[0], d[1], d[2], d[3]],
        };
        tuples.push(Transition {
            rollout,
            step,
            state,
            delta,
        });
    }
    Ok(Dataset {
        mode,
        split,
        norm_source,
        tuples,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, DataError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn save_rollout(r: &Rollout, path: &Path) -> Result<(), DataError> {
    let mut w = create(path)?;
    write_rollout(r, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_rollout(path: &Path) -> Result<Rollout, DataError> {
    read_rollout(std::fs::File::open(path)?)
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut w = create(path)?;
    write_dataset(d, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path, expected: StateMode) -> Result<Dataset, DataError> {
    read_dataset(std::fs::File::open(path)?, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::assemble_dataset;

    fn rollout(mode: StateMode, activation: Option<usize>) -> Rollout {
        Rollout {
            meta: RolloutMeta {
                kind: ReferenceKind::SinePosition,
                seed: 42,
                controller: ControllerKind::Vaicam,
                velocity: 0.35,
                mode,
                dt: 0.01,
                activation,
            },
            samples: (0..25)
                .map(|k| {
                    let t = k as f64 * 0.01;
                    RolloutSample {
                        t,
                        state: StateSample {
                            z: -1e-3 * t.sin() - 1.0 / 3.0,
                            z_dot: 1e-3 * t.cos(),
                            v: if mode == StateMode::Dynamic {
                                0.35 + 0.1 * t
                            } else {
                                0.0
                            },
                            f_z: 12.0 + std::f64::consts::PI * t,
                            x_f_z: -0.0123456789 * (1.0 + t),
                        },
                        x_c_z: -0.011 - 1e-17 * k as f64,
                        h_r_z: -15.0 - t,
                        cost: 0.1 * k as f64,
                    }
                })
                .collect(),
        }
    }

    fn round_trip_rollout(r: &Rollout) -> Rollout {
        let mut buf = Vec::new();
        write_rollout(r, &mut buf).unwrap();
        read_rollout(buf.as_slice()).unwrap()
    }

    #[test]
    fn rollout_round_trip_is_exact() {
        for (mode, act) in [(StateMode::Dynamic, Some(3)), (StateMode::Static, None)] {
            let r = rollout(mode, act);
            assert_eq!(round_trip_rollout(&r), r);
        }
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        for mode in [StateMode::Static, StateMode::Dynamic] {
            let d = assemble_dataset(&[rollout(mode, Some(0))], Split::Validation).unwrap();
            let mut buf = Vec::new();
            write_dataset(&d, &mut buf).unwrap();
            assert_eq!(read_dataset(buf.as_slice(), mode).unwrap(), d);
        }
    }

    #[test]
    fn empty_dataset_round_trip() {
        let d = Dataset::empty(StateMode::Dynamic, Split::Test);
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice(), StateMode::Dynamic).unwrap(), d);
    }

    #[test]
    fn mode_mismatch_is_a_format_error() {
        let d = assemble_dataset(&[rollout(StateMode::Dynamic, Some(0))], Split::Train).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert!(matches!(
            read_dataset(buf.as_slice(), StateMode::Static),
            Err(DataError::Format(_))
        ));
    }

    #[test]
    fn malformed_files_are_rejected() {
        let mut buf = Vec::new();
        write_rollout(&rollout(StateMode::Dynamic, Some(0)), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cases = [
            String::new(),
            text.replacen("vaicam-rollout 1", "vaicam-rollout 9", 1),
            text.replacen("t,z,", "t,y,", 1),
            format!("{text}1,2,3\n"),
            format!("{text}1,2,3,4,5,6,7,8,x\n"),
        ];
        for c in &cases {
            assert!(
                matches!(read_rollout(c.as_bytes()), Err(DataError::Format(_))),
                "{c:.60}"
            );
        }
    }

    #[test]
    fn save_creates_directories() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/r.csv");
        let r = rollout(StateMode::Static, Some(1));
        save_rollout(&r, &path).unwrap();
        assert_eq!(load_rollout(&path).unwrap(), r);
    }
}
