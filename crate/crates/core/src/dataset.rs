use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::encoding::BitVector;
use crate::error::{Error, Result};

pub const DATASET_SCHEMA: &str = "# schema_version=1 artifact=dataset";

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: BitVector,
    pub y: f64,
    /// 0 for the initial data, otherwise the loop that proposed the point.
    pub loop_index: usize,
}

/// Append-only set of observations, unique by input vector.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    n_bits: usize,
    rows: Vec<Observation>,
    index: HashMap<BitVector, usize>,
}

impl Dataset {
    pub fn new(n_bits: usize) -> Self {
        Dataset {
            n_bits,
            rows: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn contains(&self, x: &BitVector) -> bool {
        self.index.contains_key(x)
    }

    pub fn get(&self, x: &BitVector) -> Option<&Observation> {
        self.index.get(x).map(|&i| &self.rows[i])
    }

    pub fn push(&mut self, x: BitVector, y: f64, loop_index: usize) -> Result<()> {
        if x.len() != self.n_bits {
            return Err(Error::LengthMismatch {
                expected: self.n_bits,
                actual: x.len(),
            });
        }
        if !y.is_finite() {
            return Err(Error::param("y", format!("non-finite value {y} for {x}")));
        }
        if self.index.contains_key(&x) {
            return Err(Error::DuplicatePoint(x.to_string()));
        }
        self.index.insert(x.clone(), self.rows.len());
        self.rows.push(Observation { x, y, loop_index });
        Ok(())
    }

    pub fn ys(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.y)
    }

    pub fn min_y(&self) -> Option<f64> {
        self.ys().reduce(f64::min)
    }

    /// Writes `x1..xN,y,loop` with a schema comment line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{DATASET_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.n_bits).map(|i| format!("x{i}")).collect();
        header.push("y".into());
        header.push("loop".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.x.as_slice().iter().map(|b| b.to_string()).collect();
            rec.push(row.y.to_string());
            rec.push(row.loop_index.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let raw = read_raw_csv(path)?;
        let mut data = Dataset::new(raw.n_bits);
        for row in raw.rows {
            data.push(row.x, row.y, row.loop_index)?;
        }
        Ok(data)
    }
}

/// Dataset rows exactly as they appear in a file, duplicates included.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub n_bits: usize,
    pub rows: Vec<Observation>,
}

pub fn read_raw_csv(path: &Path) -> Result<RawDataset> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = r.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let n_bits = cols.iter().take_while(|c| c.starts_with('x')).count();
    for (i, c) in cols.iter().take(n_bits).enumerate() {
        if *c != format!("x{}", i + 1) {
            return Err(Error::Schema(format!(
                "{}: expected column x{} but found `{c}`",
                path.display(),
                i + 1
            )));
        }
    }
    if cols.len() != n_bits + 2 || cols[n_bits] != "y" || cols[n_bits + 1] != "loop" {
        return Err(Error::Schema(format!(
            "{}: header must be x1..xN,y,loop",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| {
            Error::Schema(format!("{}: row {}: {what}", path.display(), line + 1))
        };
        let bits = rec
            .iter()
            .take(n_bits)
            .map(|v| match v {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                _ => Err(bad("bit columns must be 0 or 1")),
            })
            .collect::<Result<Vec<u8>>>()?;
        let y: f64 = rec[n_bits].parse().map_err(|_| bad("y is not a number"))?;
        let loop_index: usize = rec[n_bits + 1]
            .parse()
            .map_err(|_| bad("loop is not a non-negative integer"))?;
        rows.push(Observation {
            x: BitVector::from_bits(&bits),
            y,
            loop_index,
        });
    }
    Ok(RawDataset { n_bits, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_wrong_length() {
        let mut d = Dataset::new(3);
        d.push(BitVector::from_bits(&[1, 0, 1]), 0.5, 0).unwrap();
        assert!(matches!(
            d.push(BitVector::from_bits(&[1, 0, 1]), 0.7, 1),
            Err(Error::DuplicatePoint(_))
        ));
        assert!(matches!(
            d.push(BitVector::from_bits(&[1, 0]), 0.7, 1),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut d = Dataset::new(4);
        d.push(BitVector::from_bits(&[1, 0, 1, 1]), -0.25, 0).unwrap();
        d.push(BitVector::from_bits(&[0, 0, 0, 1]), 1.0 / 3.0, 2).unwrap();
        d.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(DATASET_SCHEMA));
        assert!(text.contains("x1,x2,x3,x4,y,loop"));
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back.rows(), d.rows());
    }
}
