//! Demonstration CSV files and the on-disk dataset store.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Demonstration, Record, Sample, Variant};
use crate::error::{Error, Result};
use crate::signals::{ControlVector, ExtendedSensorVector, EXTENDED_DIM};

pub const DEMO_CSV_HEADER: [&str; 12] = [
    "t_s", "theta1_rad", "theta2_rad", "p_d_bar", "p_t_bar", "p_l_bar", "p_b_bar", "a_norm", "u_theta1",
    "u_theta2", "u_g", "fill",
];

const SAMPLE_HEADER: [&str; 11] = [
    "demo", "theta1_rad", "theta2_rad", "p_d_bar", "p_t_bar", "p_l_bar", "p_b_bar", "a_norm", "u_theta1",
    "u_theta2", "u_g",
];

const MANIFEST: &str = "manifest.txt";
const SAMPLES: &str = "samples.csv";

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line().saturating_sub(1) as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            row,
            msg: format!("{other:?}"),
        },
    }
}

fn fmt_row(values: impl IntoIterator<Item = f64>) -> Vec<String> {
    values.into_iter().map(|v| v.to_string()).collect()
}

pub fn write_demonstration(demo: &Demonstration, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(DEMO_CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for r in &demo.records {
        let vals = std::iter::once(r.t)
            .chain(r.obs.0)
            .chain(r.u.to_array())
            .chain(std::iter::once(r.fill));
        w.write_record(fmt_row(vals)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads one demonstration; the id is the file stem and the rate is inferred
/// from the timestamps.
pub fn read_demonstration(path: impl AsRef<Path>) -> Result<Demonstration> {
    let path = path.as_ref();
    let parse_err = |row: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        msg,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(DEMO_CSV_HEADER) {
        return Err(parse_err(0, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != DEMO_CSV_HEADER.len() {
            return Err(parse_err(row, format!("expected 12 fields, found {}", rec.len())));
        }
        let mut v = [0.0; 12];
        for (k, field) in rec.iter().enumerate() {
            v[k] = field
                .trim()
                .parse()
                .map_err(|_| parse_err(row, format!("bad number {field:?} in column {}", DEMO_CSV_HEADER[k])))?;
        }
        let mut obs = [0.0; EXTENDED_DIM];
        obs.copy_from_slice(&v[1..8]);
        records.push(Record {
            t: v[0],
            obs: ExtendedSensorVector(obs),
            u: ControlVector::new(v[8], v[9], v[10]),
            fill: v[11],
        });
    }
    if records.len() < 2 {
        return Err(parse_err(records.len(), "need at least 2 rows to infer the sample rate".into()));
    }
    let span = records[records.len() - 1].t - records[0].t;
    if !(span > 0.0) {
        return Err(parse_err(2, "time not strictly increasing".into()));
    }
    let rate = (records.len() - 1) as f64 / span;
    let demo = Demonstration {
        id: path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned()),
        sample_rate_hz: (rate * 1e6).round() / 1e6,
        records,
    };
    demo.validate().map_err(|e| match e {
        Error::Parse { row, msg, .. } => parse_err(row, msg),
        other => other,
    })?;
    Ok(demo)
}

/// All `*.csv` demonstrations in `dir`, sorted by id.
pub fn load_demonstrations(dir: impl AsRef<Path>) -> Result<Vec<Demonstration>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "csv") {
            paths.push(p);
        }
    }
    let mut demos = paths.iter().map(read_demonstration).collect::<Result<Vec<_>>>()?;
    demos.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(demos)
}

/// Writes `manifest.txt` and `samples.csv` into `dir`. Samples are stored raw;
/// the manifest carries the z-score statistics applied at training time.
pub fn write_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let manifest = format!(
        "variant = {}\ndemos = {}\ndemo_samples = {}\nsamples = {}\nnorm_mean = {}\nnorm_std = {}\n",
        dataset.variant,
        dataset.demo_ids().join(","),
        dataset
            .demos
            .iter()
            .map(|(_, r)| r.len().to_string())
            .collect::<Vec<_>>()
            .join(","),
        dataset.len(),
        join(&dataset.norm_stats.mean),
        join(&dataset.norm_stats.std),
    );
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;

    let spath = dir.join(SAMPLES);
    let mut w = csv::Writer::from_path(&spath).map_err(|e| csv_err(&spath, e))?;
    w.write_record(SAMPLE_HEADER).map_err(|e| csv_err(&spath, e))?;
    for (id, range) in &dataset.demos {
        for s in &dataset.samples[range.clone()] {
            let mut row = vec![id.clone()];
            row.extend(fmt_row(s.obs.0.into_iter().chain(s.u.to_array())));
            w.write_record(&row).map_err(|e| csv_err(&spath, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&spath, e))
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let mut variant = None;
    let mut declared = None;
    for (i, line) in text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else { continue };
        match k.trim() {
            "variant" => variant = Some(v.trim().parse::<Variant>()?),
            "samples" => {
                declared = Some(v.trim().parse::<usize>().map_err(|_| Error::Parse {
                    path: mpath.clone(),
                    row: i + 1,
                    msg: format!("bad sample count {v:?}"),
                })?)
            }
            _ => {}
        }
    }
    let variant = variant.ok_or_else(|| Error::Parse {
        path: mpath.clone(),
        row: 0,
        msg: "missing variant".into(),
    })?;

    let spath = dir.join(SAMPLES);
    let mut rdr = csv::Reader::from_path(&spath).map_err(|e| csv_err(&spath, e))?;
    let mut parts: Vec<(String, Vec<Sample>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(&spath, e))?;
        let err = |msg: String| Error::Parse {
            path: spath.clone(),
            row: i + 1,
            msg,
        };
        if rec.len() != SAMPLE_HEADER.len() {
            return Err(err(format!("expected {} fields, found {}", SAMPLE_HEADER.len(), rec.len())));
        }
        let mut v = [0.0; 10];
        for (k, f) in rec.iter().skip(1).enumerate() {
            v[k] = f.parse().map_err(|_| err(format!("bad number {f:?}")))?;
        }
        let mut obs = [0.0; EXTENDED_DIM];
        obs.copy_from_slice(&v[..7]);
        let sample = Sample {
            obs: ExtendedSensorVector(obs),
            u: ControlVector::new(v[7], v[8], v[9]),
        };
        match parts.last_mut() {
            Some((id, s)) if id == &rec[0] => s.push(sample),
            _ => parts.push((rec[0].to_string(), vec![sample])),
        }
    }
    let ds = Dataset::from_parts(variant, parts)?;
    if let Some(n) = declared {
        if n != ds.len() {
            return Err(Error::Parse {
                path: mpath,
                row: 0,
                msg: format!("manifest declares {n} samples, store has {}", ds.len()),
            });
        }
    }
    Ok(ds)
}
