//! Line-delimited JSON run traces.
//!
//! The first line holds a [`TraceHeader`] with everything reporting needs
//! (site layout, orientation, initial data); each further line is one
//! completed [`LoopRecord`]. A torn final line is ignored on read, so an
//! interrupted run can be resumed from its last complete loop.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::driver::{run_label, LoopRecord, RunConfig, RunKind};
use crate::encoding::{BitVector, DesignSpace, SiteSpec};
use crate::error::{Error, Result};
use crate::objective::Orientation;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialPoint {
    pub x: BitVector,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub run: String,
    pub kind: RunKind,
    pub sigma2: Option<f64>,
    pub master_seed: u64,
    pub lambda: f64,
    pub loops: usize,
    pub batch_size: usize,
    pub orientation: Orientation,
    /// Success cutoff, reported orientation.
    pub threshold: f64,
    pub sites: Vec<SiteSpec>,
    pub initial: Vec<InitialPoint>,
}

impl TraceHeader {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: RunKind,
        sigma2: Option<f64>,
        master_seed: u64,
        lambda: f64,
        loops: usize,
        batch_size: usize,
        orientation: Orientation,
        threshold: f64,
        space: &DesignSpace,
        initial: &Dataset,
    ) -> Self {
        TraceHeader {
            schema_version: TRACE_SCHEMA_VERSION,
            run: run_label(kind, sigma2),
            kind,
            sigma2,
            master_seed,
            lambda,
            loops,
            batch_size,
            orientation,
            threshold,
            sites: space.sites().to_vec(),
            initial: initial
                .rows()
                .iter()
                .map(|r| InitialPoint { x: r.x.clone(), y: r.y })
                .collect(),
        }
    }

    pub fn for_run(cfg: &RunConfig, kind: RunKind, sigma2: Option<f64>, initial: &Dataset) -> Self {
        Self::new(
            kind,
            sigma2,
            cfg.master_seed,
            cfg.lambda,
            cfg.loops,
            cfg.batch_size,
            cfg.objective.orientation,
            cfg.threshold,
            &cfg.space,
            initial,
        )
    }

    pub fn space(&self) -> Result<DesignSpace> {
        DesignSpace::new(self.sites.clone())
    }

    pub fn initial_dataset(&self) -> Result<Dataset> {
        let mut d = Dataset::new(self.space()?.total_bits());
        for p in &self.initial {
            d.push(p.x.clone(), p.y, 0)?;
        }
        Ok(d)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TraceLine {
    Header(TraceHeader),
    Loop(LoopRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<LoopRecord>,
}

impl Trace {
    /// Dataset after the last recorded loop.
    pub fn final_dataset(&self) -> Result<Dataset> {
        let mut d = self.header.initial_dataset()?;
        for r in &self.records {
            for p in &r.proposals {
                d.push(p.x.clone(), p.y, r.loop_index)?;
            }
        }
        Ok(d)
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() == self.header.loops
    }
}

pub struct TraceWriter {
    file: File,
}

impl TraceWriter {
    pub fn create(path: &Path, header: &TraceHeader) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = TraceWriter { file };
        w.write_line(&TraceLine::Header(header.clone()))?;
        Ok(w)
    }

    /// Reopens an existing trace, dropping a torn final line if present.
    pub fn append(path: &Path, complete: &Trace) -> Result<Self> {
        let mut w = TraceWriter::create(path, &complete.header)?;
        for r in &complete.records {
            w.write(r)?;
        }
        Ok(w)
    }

    pub fn write(&mut self, record: &LoopRecord) -> Result<()> {
        self.write_line(&TraceLine::Loop(record.clone()))
    }

    fn write_line(&mut self, line: &TraceLine) -> Result<()> {
        let mut text = serde_json::to_string(line)?;
        text.push('\n');
        self.file.write_all(text.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Reads a trace, validating the schema and the loop sequence.
pub fn read_trace(path: &Path) -> Result<Trace> {
    let file = OpenOptions::new()
        .read(true)
        .open(path)
        .map_err(|e| Error::file(path, e))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        lines.push(line?);
    }
    let schema = |msg: String| Error::Schema(format!("{}: {msg}", path.display()));
    let mut parsed = Vec::with_capacity(lines.len());
    for (n, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TraceLine>(line) {
            Ok(l) => parsed.push(l),
            // an interrupted writer can only tear the final line
            Err(_) if n + 1 == lines.len() && n > 0 => break,
            Err(e) => return Err(schema(format!("line {}: {e}", n + 1))),
        }
    }
    let mut iter = parsed.into_iter();
    let header = match iter.next() {
        Some(TraceLine::Header(h)) => h,
        _ => return Err(schema("first line must be a header".into())),
    };
    if header.schema_version != TRACE_SCHEMA_VERSION {
        return Err(schema(format!(
            "unsupported schema version {}",
            header.schema_version
        )));
    }
    let mut records = Vec::new();
    for line in iter {
        match line {
            TraceLine::Loop(r) => {
                if r.loop_index != records.len() + 1 {
                    return Err(schema(format!(
                        "expected loop {} but found loop {}",
                        records.len() + 1,
                        r.loop_index
                    )));
                }
                records.push(r);
            }
            TraceLine::Header(_) => return Err(schema("repeated header".into())),
        }
    }
    if records.len() > header.loops {
        return Err(schema("more loops than declared".into()));
    }
    Ok(Trace { header, records })
}
