//! File formats: path CSV, report CSV, JSON sidecars, atomic writes.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, TmaError};
use crate::model::TmaModel;
use crate::stationary::{Method, SeriesPath};

/// 17 significant digits; parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| TmaError::Io(e.error))?;
    Ok(())
}

/// `index,e,y[,alpha]`, one row per value.
pub fn path_to_csv(path: &SeriesPath) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let with_alpha = path.alpha.is_some();
    let mut header = vec!["index", "e", "y"];
    if with_alpha {
        header.push("alpha");
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, y) in path.values.iter().enumerate() {
        let mut row = vec![
            (path.start + i as i64).to_string(),
            fmt_f64(path.innovation_at(i)),
            fmt_f64(*y),
        ];
        if let Some(alpha) = &path.alpha {
            row.push(alpha[i].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| TmaError::Io(e.into_error()))
}

/// Reads a path CSV back. The file holds no pre-sample innovations, so the
/// first `q` rows only supply innovations and the path starts at row `q`.
pub fn path_from_csv(text: &str, model: &TmaModel, seed: u64) -> Result<SeriesPath> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (ci, ce, cy) = match (col("index"), col("e"), col("y")) {
        (Some(i), Some(e), Some(y)) => (i, e, y),
        _ => return Err(TmaError::Parse("path CSV needs index, e and y columns".into())),
    };
    let ca = col("alpha");
    let mut index = Vec::new();
    let mut e = Vec::new();
    let mut y = Vec::new();
    let mut alpha = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |c: usize| -> Result<f64> {
            rec[c]
                .trim()
                .parse::<f64>()
                .map_err(|err| TmaError::Parse(format!("'{}': {err}", &rec[c])))
        };
        index.push(
            rec[ci]
                .trim()
                .parse::<i64>()
                .map_err(|err| TmaError::Parse(err.to_string()))?,
        );
        e.push(num(ce)?);
        y.push(num(cy)?);
        if let Some(c) = ca {
            alpha.push(
                rec[c]
                    .trim()
                    .parse::<u8>()
                    .map_err(|err| TmaError::Parse(err.to_string()))?,
            );
        }
    }
    let q = model.q();
    if y.len() <= q {
        return Err(TmaError::Parse(format!(
            "path CSV has {} rows, need more than q = {q}",
            y.len()
        )));
    }
    if index.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(TmaError::Parse("path CSV indices are not consecutive".into()));
    }
    Ok(SeriesPath {
        start: index[q],
        values: y.split_off(q),
        innovations: e,
        alpha: ca.map(|_| alpha.split_off(q)),
        q,
        burn_in: 0,
        seed,
        model_hash: model.hash(),
        method: if ca.is_some() {
            Method::ClosedForm
        } else {
            Method::Recursive
        },
    })
}

/// Generic numeric table with a header row.
pub fn table_to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| TmaError::Io(e.into_error()))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn csv_err(e: csv::Error) -> TmaError {
    TmaError::Parse(e.to_string())
}
