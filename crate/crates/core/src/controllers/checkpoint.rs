//! Binary checkpoint format.
//!
//! ```text
//! PILECTL v1 <KIND> <input_dim> <attention_input_dim|-> <zscore|none>\n
//! <name> <rows> <cols>\n            (one line per tensor: theta then psi)
//! \n
//! <f64 LE payload: tensors in declared order, row-major>
//! <f64 LE: 7 means, 7 stds>         (zscore only)
//! ```

use std::fs;
use std::path::Path;

use super::network::ControllerParams;
use super::spec::{ControllerKind, ControllerSpec};
use crate::error::{CheckpointError, Error, Result};
use crate::numerics::{Matrix, ParamSet};
use crate::signals::{NormStats, EXTENDED_DIM};

pub const MAGIC: &str = "PILECTL";
pub const VERSION: &str = "v1";

pub fn encode_checkpoint(params: &ControllerParams) -> Vec<u8> {
    let spec = &params.spec;
    let mut out = format!(
        "{MAGIC} {VERSION} {} {} {} {}\n",
        spec.kind.tag(),
        spec.input_dim,
        spec.attention_input_dim
            .map_or_else(|| "-".to_string(), |a| a.to_string()),
        if params.norm.is_some() { "zscore" } else { "none" }
    )
    .into_bytes();
    for set in params.param_sets() {
        for (name, m) in set.tensors() {
            out.extend_from_slice(format!("{name} {} {}\n", m.rows(), m.cols()).as_bytes());
        }
    }
    out.push(b'\n');
    for set in params.param_sets() {
        for (_, m) in set.tensors() {
            for v in m.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    if let Some(n) = &params.norm {
        for v in n.mean.iter().chain(&n.std) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ControllerParams, CheckpointError> {
    let header_err = |m: &str| CheckpointError::Header(m.to_string());
    let (first, mut rest) = split_line(bytes).ok_or_else(|| header_err("missing header line"))?;
    let fields: Vec<&str> = first.split(' ').collect();
    if fields.first() != Some(&MAGIC) {
        return Err(header_err("wrong magic string"));
    }
    if fields.len() != 6 {
        return Err(CheckpointError::Header(format!("expected 6 header fields, found {}", fields.len())));
    }
    if fields[1] != VERSION {
        return Err(CheckpointError::Header(format!("unsupported version {}", fields[1])));
    }
    let kind = ControllerKind::ALL
        .into_iter()
        .find(|k| k.tag() == fields[2])
        .ok_or_else(|| CheckpointError::Header(format!("unknown kind {}", fields[2])))?;
    let input_dim: usize = fields[3]
        .parse()
        .map_err(|_| CheckpointError::Header(format!("bad input_dim {}", fields[3])))?;
    let attention_input_dim = match fields[4] {
        "-" => None,
        a => Some(
            a.parse()
                .map_err(|_| CheckpointError::Header(format!("bad attention_input_dim {a}")))?,
        ),
    };
    let zscore = match fields[5] {
        "zscore" => true,
        "none" => false,
        other => return Err(CheckpointError::Header(format!("bad norm field {other}"))),
    };
    let spec = ControllerSpec::new(kind, input_dim, attention_input_dim)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    let mut template = ControllerParams::zeros(spec).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let expected: Vec<(String, (usize, usize))> = template
        .param_sets()
        .iter()
        .flat_map(|s| s.tensors().map(|(n, m)| (n.to_string(), m.shape())).collect::<Vec<_>>())
        .collect();

    let mut declared = Vec::new();
    loop {
        let (line, tail) = split_line(rest).ok_or_else(|| header_err("unterminated tensor table"))?;
        rest = tail;
        if line.is_empty() {
            break;
        }
        let parts: Vec<&str> = line.split(' ').collect();
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| CheckpointError::Header(format!("bad tensor line {line:?}")))
        };
        if parts.len() != 3 {
            return Err(CheckpointError::Header(format!("bad tensor line {line:?}")));
        }
        declared.push((parts[0].to_string(), (parse(parts[1])?, parse(parts[2])?)));
    }
    if declared.len() != expected.len() {
        return Err(CheckpointError::Header(format!(
            "{} tensors declared, {} expected for {kind}",
            declared.len(),
            expected.len()
        )));
    }
    for ((dn, ds), (en, es)) in declared.iter().zip(&expected) {
        if dn != en || ds != es {
            return Err(CheckpointError::ShapeMismatch {
                name: dn.clone(),
                expected: *es,
                found: *ds,
            });
        }
    }

    let n_values = template.param_count() + if zscore { 2 * EXTENDED_DIM } else { 0 };
    let need = n_values * 8;
    if rest.len() < need {
        return Err(CheckpointError::Truncated {
            expected: need,
            found: rest.len(),
        });
    }
    if rest.len() > need {
        return Err(CheckpointError::Trailing(rest.len() - need));
    }
    let mut values = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    for set in template.param_sets_mut() {
        fill_set(set, &mut values);
    }
    if zscore {
        let mut mean = [0.0; EXTENDED_DIM];
        let mut std = [0.0; EXTENDED_DIM];
        mean.iter_mut().for_each(|m| *m = values.next().unwrap_or(0.0));
        std.iter_mut().for_each(|s| *s = values.next().unwrap_or(1.0));
        template.norm = Some(NormStats { mean, std });
    }
    Ok(template)
}

fn fill_set(set: &mut ParamSet, values: &mut impl Iterator<Item = f64>) {
    for i in 0..set.len() {
        let m: &mut Matrix = set.tensor_mut(i);
        for v in m.values_mut() {
            *v = values.next().unwrap_or(0.0);
        }
    }
}

fn split_line(bytes: &[u8]) -> Option<(&str, &[u8])> {
    let pos = bytes.iter().position(|&b| b == b'\n')?;
    let line = std::str::from_utf8(&bytes[..pos]).ok()?;
    Some((line, &bytes[pos + 1..]))
}

pub fn save_checkpoint(params: &ControllerParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ControllerParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_checkpoint(&bytes)?)
}
