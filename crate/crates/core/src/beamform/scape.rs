//! The energyscape: a direction x range intensity matrix, plus its binary
//! and CSV file formats.

use std::path::Path;

use super::DirectionList;
use crate::error::{Error, Result};
use crate::ioutil::{atomic_write, read_bytes};

/// Direction x range intensity matrix produced by beamforming + envelope
/// detection. Rows follow the direction-list order, columns are range bins
/// of `range_resolution` meters each.
#[derive(Debug, Clone, PartialEq)]
pub struct Energyscape {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    /// Meters per range bin: c / (2 * fs).
    pub range_resolution: f64,
    /// Direction of each row, when known (lost through the file formats).
    pub directions: Option<DirectionList>,
}

impl Energyscape {
    pub fn zeros(rows: usize, cols: usize, range_resolution: f64) -> Self {
        Energyscape {
            values: vec![0.0; rows * cols],
            rows,
            cols,
            range_resolution,
            directions: None,
        }
    }

    pub fn from_values(
        values: Vec<f64>,
        rows: usize,
        cols: usize,
        range_resolution: f64,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::parameter(format!(
                "value count {} does not fill {}x{}",
                values.len(),
                rows,
                cols
            )));
        }
        Ok(Energyscape {
            values,
            rows,
            cols,
            range_resolution,
            directions: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Row-major flat view.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Row and column of the largest cell.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, v) in self.values.iter().enumerate() {
            if *v > best.1 {
                best = (i, *v);
            }
        }
        (best.0 / self.cols, best.0 % self.cols)
    }
}

// ---------------------------------------------------------------------------
// Binary dump: u32 rows, u32 cols, f32 range_resolution (little-endian),
// then row-major f32 values.
// ---------------------------------------------------------------------------

pub fn write_energyscape(path: &Path, scape: &Energyscape) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + scape.values.len() * 4);
    buf.extend_from_slice(&(scape.rows as u32).to_le_bytes());
    buf.extend_from_slice(&(scape.cols as u32).to_le_bytes());
    buf.extend_from_slice(&(scape.range_resolution as f32).to_le_bytes());
    for v in &scape.values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    atomic_write(path, &buf)
}

pub fn read_energyscape(path: &Path) -> Result<Energyscape> {
    let buf = read_bytes(path)?;
    if buf.len() < 12 {
        return Err(Error::format(path, "truncated energyscape header"));
    }
    let rows = u32::from_le_bytes(buf[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let range_resolution = f32::from_le_bytes(buf[8..12].try_into().unwrap()) as f64;
    let expect = 12 + rows * cols * 4;
    if buf.len() != expect {
        return Err(Error::format(
            path,
            format!("expected {} bytes, found {}", expect, buf.len()),
        ));
    }
    let values = buf[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Energyscape::from_values(values, rows, cols, range_resolution)
}

// ---------------------------------------------------------------------------
// CSV alternative: header line "rows,cols,range_resolution", then one line
// of comma-separated values per row. Values are written at f32 precision.
// ---------------------------------------------------------------------------

pub fn write_energyscape_csv(path: &Path, scape: &Energyscape) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "{},{},{}\n",
        scape.rows,
        scape.cols,
        scape.range_resolution as f32
    ));
    for r in 0..scape.rows {
        let row: Vec<String> = scape.row(r).iter().map(|v| (*v as f32).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_energyscape_csv(path: &Path) -> Result<Energyscape> {
    let text = String::from_utf8(read_bytes(path)?)
        .map_err(|_| Error::format(path, "not valid UTF-8"))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty file"))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 3 {
        return Err(Error::format(path, "header must be rows,cols,range_resolution"));
    }
    let rows: usize = fields[0]
        .trim()
        .parse()
        .map_err(|_| Error::format(path, "bad row count"))?;
    let cols: usize = fields[1]
        .trim()
        .parse()
        .map_err(|_| Error::format(path, "bad column count"))?;
    let range_resolution: f64 = fields[2]
        .trim()
        .parse::<f32>()
        .map_err(|_| Error::format(path, "bad range resolution"))? as f64;
    let mut values = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        for tok in line.split(',') {
            let v: f32 = tok
                .trim()
                .parse()
                .map_err(|_| Error::format(path, format!("bad value in row {}", i)))?;
            values.push(v as f64);
        }
    }
    Energyscape::from_values(values, rows, cols, range_resolution)
}
