//! Plot-ready metric tables computed from run traces alone.
//!
//! Values are restored to the objective's declared orientation. Every CSV
//! starts with a `# schema_version=...` comment line.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::driver::RunKind;
use crate::encoding::{decode, BitVector, DesignSpace};
use crate::error::{Error, Result};
use crate::objective::Orientation;
use crate::trace::Trace;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const Y_HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteHistogramRow {
    pub run: String,
    pub site: String,
    pub category: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub run: String,
    pub loop_index: usize,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YHistogramRow {
    pub run: String,
    pub source: &'static str,
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AboveThresholdRow {
    pub run: String,
    pub loop_index: usize,
    pub indices: Vec<usize>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub run: String,
    pub sigma2: Option<f64>,
    pub loops_completed: usize,
    pub points_added: usize,
    pub shortfall_loops: usize,
    pub best_initial: f64,
    pub best_final: f64,
    pub above_threshold: usize,
    pub distinct_site_values: usize,
    pub final_r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub site_names: Vec<String>,
    pub threshold: f64,
    pub site_histograms: Vec<SiteHistogramRow>,
    pub r2_series: Vec<SeriesRow>,
    pub best_so_far: Vec<SeriesRow>,
    pub y_histograms: Vec<YHistogramRow>,
    pub above_threshold: Vec<AboveThresholdRow>,
    pub summary: Vec<SummaryRow>,
}

/// Number of distinct (site, category) pairs among `points`.
pub fn distinct_site_values<'a>(
    space: &DesignSpace,
    points: impl IntoIterator<Item = &'a BitVector>,
) -> Result<usize> {
    let mut seen = BTreeSet::new();
    for x in points {
        for (s, c) in decode(space, x)?.indices.into_iter().enumerate() {
            seen.insert((s, c));
        }
    }
    Ok(seen.len())
}

/// Per-site category counts among `points`, all categories included.
pub fn site_histograms<'a>(
    space: &DesignSpace,
    points: impl IntoIterator<Item = &'a BitVector>,
) -> Result<Vec<Vec<usize>>> {
    let mut counts: Vec<Vec<usize>> = space
        .sites()
        .iter()
        .map(|s| vec![0; s.cardinality])
        .collect();
    for x in points {
        let d = decode(space, x)?;
        if !d.feasible {
            return Err(Error::Schema(format!("trace contains infeasible point {x}")));
        }
        for (s, c) in d.indices.into_iter().enumerate() {
            counts[s][c] += 1;
        }
    }
    Ok(counts)
}

pub fn build_report(traces: &[Trace], threshold: f64) -> Result<ReportBundle> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Schema("no traces given".into()))?;
    let sites = first.header.sites.clone();
    if let Some(t) = traces.iter().find(|t| t.header.sites != sites) {
        return Err(Error::Schema(format!(
            "trace `{}` uses a different design space",
            t.header.run
        )));
    }
    let space = first.header.space()?;
    // canonical order: BO runs by ascending σ², then the baseline
    let mut ordered: Vec<&Trace> = traces.iter().collect();
    ordered.sort_by(|a, b| {
        let key = |t: &Trace| (t.header.kind == RunKind::Baseline, t.header.sigma2.unwrap_or(0.0));
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    });
    if let Some(w) = ordered.windows(2).find(|w| w[0].header.run == w[1].header.run) {
        return Err(Error::Schema(format!("run `{}` given twice", w[0].header.run)));
    }
    let mut bundle = ReportBundle {
        site_names: sites.iter().map(|s| s.name.clone()).collect(),
        threshold,
        ..Default::default()
    };

    // shared bin edges so initial and added histograms line up across runs
    let all_y: Vec<f64> = traces
        .iter()
        .flat_map(|t| {
            let o = t.header.orientation;
            t.header
                .initial
                .iter()
                .map(move |p| o.reported(p.y))
                .chain(t.records.iter().flat_map(move |r| r.proposals.iter().map(move |p| o.reported(p.y))))
        })
        .collect();
    let lo = all_y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all_y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / Y_HISTOGRAM_BINS as f64 } else { 1.0 };

    for trace in ordered {
        let h = &trace.header;
        let o = h.orientation;
        let run = h.run.clone();
        let added: Vec<(usize, &BitVector, f64)> = trace
            .records
            .iter()
            .flat_map(|r| r.proposals.iter().map(move |p| (r.loop_index, &p.x, p.y)))
            .collect();

        let counts = site_histograms(&space, added.iter().map(|(_, x, _)| *x))?;
        for (s, per_site) in counts.iter().enumerate() {
            for (c, &count) in per_site.iter().enumerate() {
                bundle.site_histograms.push(SiteHistogramRow {
                    run: run.clone(),
                    site: sites[s].name.clone(),
                    category: c,
                    count,
                });
            }
        }

        for r in &trace.records {
            bundle.r2_series.push(SeriesRow {
                run: run.clone(),
                loop_index: r.loop_index,
                value: r.r2,
            });
        }

        let initial_best = h
            .initial
            .iter()
            .map(|p| p.y)
            .fold(f64::INFINITY, f64::min);
        let mut best = initial_best;
        bundle.best_so_far.push(SeriesRow {
            run: run.clone(),
            loop_index: 0,
            value: Some(o.reported(best)),
        });
        for r in &trace.records {
            for p in &r.proposals {
                best = best.min(p.y);
            }
            if best != r.best_so_far {
                return Err(Error::Schema(format!(
                    "run `{run}` loop {}: recorded best {} disagrees with the data",
                    r.loop_index, r.best_so_far
                )));
            }
            bundle.best_so_far.push(SeriesRow {
                run: run.clone(),
                loop_index: r.loop_index,
                value: Some(o.reported(best)),
            });
        }

        let bin_of = |y: f64| (((y - lo) / width) as usize).min(Y_HISTOGRAM_BINS - 1);
        let mut initial_bins = [0usize; Y_HISTOGRAM_BINS];
        for p in &h.initial {
            initial_bins[bin_of(o.reported(p.y))] += 1;
        }
        let mut added_bins = [0usize; Y_HISTOGRAM_BINS];
        for (_, _, y) in &added {
            added_bins[bin_of(o.reported(*y))] += 1;
        }
        for (source, bins) in [("initial", initial_bins), ("added", added_bins)] {
            for (b, &count) in bins.iter().enumerate() {
                bundle.y_histograms.push(YHistogramRow {
                    run: run.clone(),
                    source,
                    bin: b,
                    lo: lo + b as f64 * width,
                    hi: lo + (b + 1) as f64 * width,
                    count,
                });
            }
        }

        let mut above: Vec<AboveThresholdRow> = added
            .iter()
            .filter(|(_, _, y)| o.at_least_as_good(o.reported(*y), threshold))
            .map(|&(loop_index, x, y)| {
                Ok(AboveThresholdRow {
                    run: run.clone(),
                    loop_index,
                    indices: decode(&space, x)?.indices,
                    y: o.reported(y),
                })
            })
            .collect::<Result<_>>()?;
        // best first, then by site indices
        above.sort_by(|a, b| {
            let by_value = match o {
                Orientation::Maximize => b.y.total_cmp(&a.y),
                Orientation::Minimize => a.y.total_cmp(&b.y),
            };
            by_value.then_with(|| a.indices.cmp(&b.indices))
        });
        let n_above = above.len();
        bundle.above_threshold.extend(above);

        bundle.summary.push(SummaryRow {
            run: run.clone(),
            sigma2: h.sigma2,
            loops_completed: trace.records.len(),
            points_added: added.len(),
            shortfall_loops: trace.records.iter().filter(|r| r.shortfall).count(),
            best_initial: o.reported(initial_best),
            best_final: o.reported(best),
            above_threshold: n_above,
            distinct_site_values: distinct_site_values(&space, added.iter().map(|(_, x, _)| *x))?,
            final_r2: trace.records.last().and_then(|r| r.r2),
        });
    }
    Ok(bundle)
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn csv_writer(path: &Path, artifact: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# schema_version={REPORT_SCHEMA_VERSION} artifact={artifact}")?;
    Ok(csv::Writer::from_writer(out))
}

impl ReportBundle {
    /// Writes every table into `dir` and returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let mut written = Vec::new();

        let path = dir.join("site_histograms.csv");
        let mut w = csv_writer(&path, "site_histograms")?;
        w.write_record(["run", "site", "category", "count"])?;
        for r in &self.site_histograms {
            w.write_record([r.run.clone(), r.site.clone(), r.category.to_string(), r.count.to_string()])?;
        }
        w.flush()?;
        written.push(path);

        for (name, rows, column) in [
            ("r2_series", &self.r2_series, "r2"),
            ("best_so_far", &self.best_so_far, "best"),
        ] {
            let path = dir.join(format!("{name}.csv"));
            let mut w = csv_writer(&path, name)?;
            w.write_record(["run", "loop", column])?;
            for r in rows {
                w.write_record([r.run.clone(), r.loop_index.to_string(), opt(r.value)])?;
            }
            w.flush()?;
            written.push(path);
        }

        let path = dir.join("y_histograms.csv");
        let mut w = csv_writer(&path, "y_histograms")?;
        w.write_record(["run", "source", "bin", "lo", "hi", "count"])?;
        for r in &self.y_histograms {
            w.write_record([
                r.run.clone(),
                r.source.to_string(),
                r.bin.to_string(),
                format!("{:?}", r.lo),
                format!("{:?}", r.hi),
                r.count.to_string(),
            ])?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join("above_threshold.csv");
        let mut w = csv_writer(&path, &format!("above_threshold threshold={:?}", self.threshold))?;
        let mut header = vec!["run".to_string(), "loop".to_string()];
        header.extend(self.site_names.iter().cloned());
        header.push("y".into());
        w.write_record(&header)?;
        for r in &self.above_threshold {
            let mut rec = vec![r.run.clone(), r.loop_index.to_string()];
            rec.extend(r.indices.iter().map(|i| i.to_string()));
            rec.push(format!("{:?}", r.y));
            w.write_record(&rec)?;
        }
        w.flush()?;
        written.push(path);

        let path = dir.join("summary.csv");
        let mut w = csv_writer(&path, "summary")?;
        w.write_record([
            "run",
            "sigma2",
            "loops_completed",
            "points_added",
            "shortfall_loops",
            "best_initial",
            "best_final",
            "above_threshold",
            "distinct_site_values",
            "final_r2",
        ])?;
        for r in &self.summary {
            w.write_record([
                r.run.clone(),
                opt(r.sigma2),
                r.loops_completed.to_string(),
                r.points_added.to_string(),
                r.shortfall_loops.to_string(),
                format!("{:?}", r.best_initial),
                format!("{:?}", r.best_final),
                r.above_threshold.to_string(),
                r.distinct_site_values.to_string(),
                opt(r.final_r2),
            ])?;
        }
        w.flush()?;
        written.push(path);
        Ok(written)
    }
}
