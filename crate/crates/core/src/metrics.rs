//! Per-vehicle packet delivery rate, latency statistics and report files.
//!
//! PDR for one vehicle is `received / (transmitted + dropped)`, counting only
//! messages of the RSU the vehicle is measured against. Vehicles with an
//! empty denominator are kept out of the PDR population and reported
//! separately.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::NodeId;

/// CDF grid step for the PDR table.
pub const PDR_CDF_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct VehicleCounters {
    pub received: u64,
    pub transmitted: u64,
    pub dropped: u64,
}

impl VehicleCounters {
    pub fn denominator(&self) -> u64 {
        self.transmitted + self.dropped
    }

    /// `PDR > 0.9` decided in integers so that every consumer agrees.
    pub fn pdr_above_0_9(&self) -> bool {
        self.denominator() > 0 && 10 * self.received > 9 * self.denominator()
    }
}

/// `None` when the vehicle had nothing addressed to it.
pub fn pdr(c: &VehicleCounters) -> Option<f64> {
    let den = c.denominator();
    (den > 0).then(|| c.received as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleRecord {
    pub vehicle: NodeId,
    pub rsu: NodeId,
    pub counters: VehicleCounters,
}

impl VehicleRecord {
    pub fn pdr(&self) -> Option<f64> {
        pdr(&self.counters)
    }
}

/// Metrics of a single run.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MetricsReport {
    pub seed: u64,
    /// In-range vehicles, ascending id.
    pub vehicles: Vec<VehicleRecord>,
    /// RSU-to-vehicle latencies in ms, one per delivered message.
    pub latency_ms: Vec<u64>,
}

impl MetricsReport {
    pub fn population(&self) -> impl Iterator<Item = &VehicleRecord> {
        self.vehicles
            .iter()
            .filter(|v| v.counters.denominator() > 0)
    }

    pub fn pdr_values(&self) -> Vec<f64> {
        self.population().filter_map(|v| v.pdr()).collect()
    }

    pub fn summary(&self) -> Summary {
        Summary::from_reports(std::slice::from_ref(self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RsuSummary {
    pub rsu: NodeId,
    pub vehicles: usize,
    pub fraction_pdr_above_0_9: Option<f64>,
    pub min_pdr: Option<f64>,
}

/// Pooled statistics over one or more runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub runs: usize,
    pub vehicles: usize,
    /// In range but with no RSU message in the measured interval.
    pub excluded_vehicles: usize,
    pub fraction_pdr_above_0_9: Option<f64>,
    /// Standard error of the per-run fractions.
    pub fraction_pdr_above_0_9_stderr: Option<f64>,
    pub min_pdr: Option<f64>,
    pub mean_pdr: Option<f64>,
    pub latency_samples: usize,
    pub mean_latency_ms: Option<f64>,
    pub mean_latency_ms_stderr: Option<f64>,
    pub max_latency_ms: Option<u64>,
    pub per_rsu: Vec<RsuSummary>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn stderr(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Some((var / xs.len() as f64).sqrt())
}

fn fraction_above(records: &[&VehicleRecord]) -> Option<f64> {
    (!records.is_empty()).then(|| {
        records
            .iter()
            .filter(|v| v.counters.pdr_above_0_9())
            .count() as f64
            / records.len() as f64
    })
}

fn min_pdr(records: &[&VehicleRecord]) -> Option<f64> {
    records
        .iter()
        .filter_map(|v| v.pdr())
        .min_by(f64::total_cmp)
}

impl Summary {
    pub fn from_reports(reports: &[MetricsReport]) -> Self {
        let pop: Vec<&VehicleRecord> = reports.iter().flat_map(|r| r.population()).collect();
        let excluded = reports.iter().map(|r| r.vehicles.len()).sum::<usize>() - pop.len();

        let per_run_fraction: Vec<f64> = reports
            .iter()
            .filter_map(|r| fraction_above(&r.population().collect::<Vec<_>>()))
            .collect();
        let per_run_latency: Vec<f64> = reports
            .iter()
            .filter(|r| !r.latency_ms.is_empty())
            .map(|r| r.latency_ms.iter().sum::<u64>() as f64 / r.latency_ms.len() as f64)
            .collect();

        let latency_total: u64 = reports.iter().flat_map(|r| &r.latency_ms).sum();
        let latency_samples: usize = reports.iter().map(|r| r.latency_ms.len()).sum();

        let mut rsus: Vec<NodeId> = pop.iter().map(|v| v.rsu).collect();
        rsus.sort_unstable();
        rsus.dedup();
        let per_rsu = rsus
            .into_iter()
            .map(|rsu| {
                let sub: Vec<&VehicleRecord> =
                    pop.iter().copied().filter(|v| v.rsu == rsu).collect();
                RsuSummary {
                    rsu,
                    vehicles: sub.len(),
                    fraction_pdr_above_0_9: fraction_above(&sub),
                    min_pdr: min_pdr(&sub),
                }
            })
            .collect();

        let pdrs: Vec<f64> = pop.iter().filter_map(|v| v.pdr()).collect();
        Summary {
            runs: reports.len(),
            vehicles: pop.len(),
            excluded_vehicles: excluded,
            fraction_pdr_above_0_9: fraction_above(&pop),
            fraction_pdr_above_0_9_stderr: stderr(&per_run_fraction),
            min_pdr: min_pdr(&pop),
            mean_pdr: mean(&pdrs),
            latency_samples,
            mean_latency_ms: (latency_samples > 0)
                .then(|| latency_total as f64 / latency_samples as f64),
            mean_latency_ms_stderr: stderr(&per_run_latency),
            max_latency_ms: reports
                .iter()
                .flat_map(|r| r.latency_ms.iter().copied())
                .max(),
            per_rsu,
        }
    }
}

/// Pools runs (e.g. one per seed) into a single summary.
pub fn summarize(reports: &[MetricsReport]) -> Summary {
    Summary::from_reports(reports)
}

/// `(latency_ms, probability)` per 1 ms bin from 1 ms up to the largest
/// sample; empty when there are no samples.
pub fn latency_pdf(samples: &[u64]) -> Vec<(u64, f64)> {
    let Some(&max) = samples.iter().max() else {
        return Vec::new();
    };
    let mut counts = vec![0u64; max as usize + 1];
    for s in samples {
        counts[*s as usize] += 1;
    }
    let n = samples.len() as f64;
    counts
        .iter()
        .enumerate()
        .skip(1)
        .map(|(ms, c)| (ms as u64, *c as f64 / n))
        .collect()
}

/// `(pdr, fraction of vehicles with PDR <= pdr)` on a 0.01 grid.
pub fn pdr_cdf(pdrs: &[f64]) -> Vec<(f64, f64)> {
    let steps = (1.0 / PDR_CDF_STEP).round() as usize;
    (0..=steps)
        .map(|i| {
            let x = i as f64 / steps as f64;
            let frac = if pdrs.is_empty() {
                0.0
            } else {
                pdrs.iter().filter(|p| **p <= x).count() as f64 / pdrs.len() as f64
            };
            (x, frac)
        })
        .collect()
}

/// `%g`-style rendering with six significant digits.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.5e}", x);
    // rounding can bump the exponent (9.999995 -> 1.00000e1)
    let (mantissa, e) = sci.split_once('e').expect("scientific format");
    let e: i32 = e.parse().expect("exponent");
    if (-4..6).contains(&e) {
        let decimals = (5 - e).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        format!("{}e{}", trim_zeros(mantissa), e)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn round6(x: f64) -> f64 {
    fmt6(x).parse().unwrap_or(x)
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    #[serde(flatten)]
    summary: &'a Summary,
}

fn rounded(summary: &Summary) -> Summary {
    let r = |o: Option<f64>| o.map(round6);
    Summary {
        fraction_pdr_above_0_9: r(summary.fraction_pdr_above_0_9),
        fraction_pdr_above_0_9_stderr: r(summary.fraction_pdr_above_0_9_stderr),
        min_pdr: r(summary.min_pdr),
        mean_pdr: r(summary.mean_pdr),
        mean_latency_ms: r(summary.mean_latency_ms),
        mean_latency_ms_stderr: r(summary.mean_latency_ms_stderr),
        per_rsu: summary
            .per_rsu
            .iter()
            .map(|s| RsuSummary {
                fraction_pdr_above_0_9: r(s.fraction_pdr_above_0_9),
                min_pdr: r(s.min_pdr),
                ..s.clone()
            })
            .collect(),
        ..summary.clone()
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, w: BufWriter<fs::File>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| Error::io(path, e))
}

/// Writes `pdr.csv`, `pdr_cdf.csv`, `latency_pdf.csv` and `summary.json`
/// for the pooled runs. Returns the paths written.
pub fn write_report(reports: &[MetricsReport], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e: std::io::Error| Error::io(p.clone(), e)
    };
    let mut written = Vec::new();

    let path = out_dir.join("pdr.csv");
    let mut w = create(&path)?;
    writeln!(w, "seed,vehicle_id,rsu_id,received,transmitted,dropped,pdr").map_err(io(&path))?;
    for r in reports {
        for v in &r.vehicles {
            let c = &v.counters;
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.seed,
                v.vehicle,
                v.rsu,
                c.received,
                c.transmitted,
                c.dropped,
                v.pdr().map(fmt6).unwrap_or_default()
            )
            .map_err(io(&path))?;
        }
    }
    finish(&path, w)?;
    written.push(path);

    let pdrs: Vec<f64> = reports.iter().flat_map(|r| r.pdr_values()).collect();
    let path = out_dir.join("pdr_cdf.csv");
    let mut w = create(&path)?;
    writeln!(w, "pdr,cumulative_fraction").map_err(io(&path))?;
    if !pdrs.is_empty() {
        for (x, f) in pdr_cdf(&pdrs) {
            writeln!(w, "{},{}", fmt6(x), fmt6(f)).map_err(io(&path))?;
        }
    }
    finish(&path, w)?;
    written.push(path);

    let samples: Vec<u64> = reports
        .iter()
        .flat_map(|r| r.latency_ms.iter().copied())
        .collect();
    let path = out_dir.join("latency_pdf.csv");
    let mut w = create(&path)?;
    writeln!(w, "bin_ms,density").map_err(io(&path))?;
    for (ms, d) in latency_pdf(&samples) {
        writeln!(w, "{},{}", ms, fmt6(d)).map_err(io(&path))?;
    }
    finish(&path, w)?;
    written.push(path);

    let path = out_dir.join("summary.json");
    let summary = rounded(&summarize(reports));
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &SummaryFile { summary: &summary })
        .map_err(|e| Error::io(&path, e.into()))?;
    writeln!(w).map_err(io(&path))?;
    finish(&path, w)?;
    written.push(path);

    Ok(written)
}
