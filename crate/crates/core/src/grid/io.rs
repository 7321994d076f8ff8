//! RDV1 value files and CSV export.
//!
//! An RDV1 file is one header line of space-separated `key=value` pairs
//! starting with the magic token `RDV1`, a newline, then exactly
//! `prod(counts)` little-endian `f64` values in row-major order (last
//! dimension fastest). Example header:
//!
//! ```text
//! RDV1 dim=2 labels=z1,z2 lower=-10,-8 upper=10,8 counts=15,15 periodic=0,0 time=-1
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Grid, ValueFunction};
use crate::error::{Error, Result};

const MAGIC: &str = "RDV1";

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn header(v: &ValueFunction) -> String {
    let g = v.grid();
    format!(
        "{MAGIC} dim={} labels={} lower={} upper={} counts={} periodic={} time={}\n",
        g.dim(),
        g.labels().join(","),
        join((0..g.dim()).map(|d| g.lower(d))),
        join((0..g.dim()).map(|d| g.upper(d))),
        join(g.counts()),
        join(g.periodic().iter().map(|&p| u8::from(p))),
        v.time()
    )
}

pub fn write_value(v: &ValueFunction, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(header(v).as_bytes())?;
    for x in v.values() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str, n: usize) -> Result<Vec<T>> {
    let out: Vec<T> = s
        .split(',')
        .map(|t| t.parse::<T>().map_err(|_| Error::Format(format!("bad entry '{t}' in {key}"))))
        .collect::<Result<_>>()?;
    if out.len() != n {
        return Err(Error::Format(format!("{key} lists {} entries, expected {n}", out.len())));
    }
    Ok(out)
}

pub fn read_value(path: impl AsRef<Path>) -> Result<ValueFunction> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header line".into()));
    }
    let line = std::str::from_utf8(&line[..line.len() - 1])
        .map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let mut tokens = line.split(' ');
    match tokens.next() {
        Some(MAGIC) => {}
        Some(m) if m.starts_with("RDV") => {
            return Err(Error::Format(format!("unknown version '{m}'")));
        }
        _ => return Err(Error::Format("not an RDV file".into())),
    }
    let fields: HashMap<&str, &str> = tokens
        .filter(|t| !t.is_empty())
        .map(|t| t.split_once('=').ok_or_else(|| Error::Format(format!("bad header token '{t}'"))))
        .collect::<Result<_>>()?;
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| Error::Format(format!("header lacks '{k}'")));
    let dim: usize = get("dim")?.parse().map_err(|_| Error::Format("bad dim".into()))?;
    let labels: Vec<String> = parse_list("labels", get("labels")?, dim)?;
    let lower: Vec<f64> = parse_list("lower", get("lower")?, dim)?;
    let upper: Vec<f64> = parse_list("upper", get("upper")?, dim)?;
    let counts: Vec<usize> = parse_list("counts", get("counts")?, dim)?;
    let periodic: Vec<u8> = parse_list("periodic", get("periodic")?, dim)?;
    let time: f64 = get("time")?.parse().map_err(|_| Error::Format("bad time".into()))?;
    let bounds: Vec<_> = lower.into_iter().zip(upper).collect();
    let periodic: Vec<bool> = periodic.into_iter().map(|p| p != 0).collect();
    let grid = Grid::new(&bounds, &counts, &periodic, &labels)?;

    let n = grid.len();
    let mut payload = Vec::with_capacity(n * 8);
    r.read_to_end(&mut payload)?;
    if payload.len() != n * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            n * 8
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    ValueFunction::new(grid, values, time)
}

/// Writes one CSV row per grid point: the coordinates followed by the value.
pub fn write_csv(v: &ValueFunction, path: impl AsRef<Path>) -> Result<()> {
    let g = v.grid();
    let mut w = csv::Writer::from_path(path)?;
    let mut head: Vec<String> = g.labels().to_vec();
    head.push("value".into());
    w.write_record(&head)?;
    let mut row = Vec::with_capacity(g.dim() + 1);
    for (flat, val) in v.values().iter().enumerate() {
        row.clear();
        row.extend(g.point(flat).into_iter().map(|x| x.to_string()));
        row.push(val.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ValueFunction {
        let g = Grid::new(
            &[(-1.5, 2.25), (0.1, 6.4)],
            &[4, 5],
            &[false, true],
            &["a", "theta"],
        )
        .unwrap();
        ValueFunction::from_fn(g, -0.3, |z| (z[0] * 1.7).exp() - z[1].cos() / 3.0).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = std::env::temp_dir().join(format!("rdv-rt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.rdv");
        let v = sample();
        write_value(&v, &path).unwrap();
        let back = read_value(&path).unwrap();
        assert_eq!(back.grid(), v.grid());
        assert_eq!(back.time().to_bits(), v.time().to_bits());
        for (a, b) in back.values().iter().zip(v.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = std::env::temp_dir().join(format!("rdv-tr-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.rdv");
        write_value(&sample(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_value(&path), Err(Error::Format(_))));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn nan_entry_is_reported_by_index() {
        let dir = std::env::temp_dir().join(format!("rdv-nan-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.rdv");
        let v = sample();
        write_value(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let head_len = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
        let at = head_len + 7 * 8;
        bytes[at..at + 8].copy_from_slice(&f64::NAN.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_value(&path), Err(Error::NonFiniteValue(7))));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = std::env::temp_dir().join(format!("rdv-ver-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.rdv");
        write_value(&sample(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[3] = b'9';
        std::fs::write(&path, &bytes).unwrap();
        match read_value(&path) {
            Err(Error::Format(msg)) => assert!(msg.contains("version")),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::remove_dir_all(dir).ok();
    }
}
