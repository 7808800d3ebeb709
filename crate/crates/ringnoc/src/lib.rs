//! Command-line driver for `ringnoc-core`: run specifications, parallel
//! sweeps and CSV output.

pub mod spec;

use std::io::Write;

use rayon::prelude::*;
use ringnoc_core::{RouterDesign, SimConfig, SimError, Simulation, StatsReport};

pub use spec::{RunSpec, Settings, SpecError, SweepRange};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Usage = 1,
    Fault = 2,
    Undrained = 3,
}

/// Outcome of one simulation.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub config: SimConfig,
    pub traced: bool,
    pub result: Result<StatsReport, SimError>,
}

impl RunRecord {
    pub fn exit(&self) -> Exit {
        match &self.result {
            Err(_) => Exit::Fault,
            Ok(r) if r.undrained => Exit::Undrained,
            Ok(_) => Exit::Ok,
        }
    }
}

/// Worst exit code over all records: any fault beats any undrained run.
pub fn exit_code<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> Exit {
    let severity = |e: &Exit| match e {
        Exit::Ok => 0,
        Exit::Undrained => 1,
        Exit::Fault | Exit::Usage => 2,
    };
    records
        .into_iter()
        .map(RunRecord::exit)
        .max_by_key(severity)
        .unwrap_or(Exit::Ok)
}

fn run_one(spec: &RunSpec, config: SimConfig) -> RunRecord {
    let result = match &spec.trace {
        Some(events) => Simulation::with_trace(config.clone(), events.clone())
            .map_err(SimError::from)
            .and_then(|mut s| s.run()),
        None => ringnoc_core::run_simulation(config.clone()),
    };
    RunRecord {
        config,
        traced: spec.trace.is_some(),
        result,
    }
}

/// Runs every rate of `spec` in parallel; records come back in rate order.
pub fn run_spec(spec: &RunSpec) -> Vec<RunRecord> {
    spec.rates()
        .into_par_iter()
        .map(|rate| {
            run_one(
                spec,
                SimConfig {
                    rate,
                    ..spec.config.clone()
                },
            )
        })
        .collect()
}

/// Runs base1, base2 and ring on identical traffic at every rate of `spec`.
pub fn run_compare(spec: &RunSpec) -> Vec<RunRecord> {
    let jobs: Vec<SimConfig> = spec
        .rates()
        .into_iter()
        .flat_map(|rate| {
            RouterDesign::ALL.into_iter().map(move |design| SimConfig {
                rate,
                design,
                vcs_per_buffer: None,
                ..spec.config.clone()
            })
        })
        .collect();
    jobs.into_par_iter().map(|c| run_one(spec, c)).collect()
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

fn row(rec: &RunRecord) -> Vec<String> {
    let c = &rec.config;
    let pattern = if rec.traced {
        "trace".into()
    } else {
        c.pattern.to_string()
    };
    let mut row = vec![
        c.design.to_string(),
        pattern,
        c.k.to_string(),
        fmt_f64(c.rate),
        c.seed.to_string(),
    ];
    let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    match &rec.result {
        Ok(r) => row.extend([
            r.packets_delivered.to_string(),
            fmt_f64(r.avg_latency),
            opt(r.min_latency),
            opt(r.max_latency),
            fmt_f64(r.throughput),
            r.undrained.to_string(),
        ]),
        Err(_) => row.extend(["", "NaN", "", "", "NaN", "fault"].map(String::from)),
    }
    row
}

/// Writes one CSV row per record under the standard header.
pub fn write_csv<W: Write>(out: W, records: &[RunRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(StatsReport::CSV_HEADER)?;
    for rec in records {
        w.write_record(row(rec))?;
    }
    w.flush()?;
    Ok(())
}

/// Like [`write_csv`] with a trailing `normalized_latency` column: each
/// row's latency over base1's at the same rate.
pub fn write_compare_csv<W: Write>(out: W, records: &[RunRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = StatsReport::CSV_HEADER.to_vec();
    header.push("normalized_latency");
    w.write_record(&header)?;
    let latency = |r: &RunRecord| r.result.as_ref().map_or(f64::NAN, |s| s.avg_latency);
    for rec in records {
        let base = records
            .iter()
            .find(|b| b.config.design == RouterDesign::Base1 && b.config.rate == rec.config.rate)
            .map_or(f64::NAN, latency);
        let mut fields = row(rec);
        fields.push(fmt_f64(latency(rec) / base));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
