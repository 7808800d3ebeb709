//! Run specifications from command-line flags and `key=value` files.

use std::path::{Path, PathBuf};

use clap::Args;
use ringnoc_core::{ConfigError, NodeId, RouterDesign, SimConfig, TrafficPattern};

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key=value`")]
    Malformed { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("--sweep and --trace cannot be combined")]
    SweepWithTrace,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace {path}: {source}")]
    Trace {
        path: PathBuf,
        source: ringnoc_core::traffic::TraceError,
    },
}

/// Inclusive `start:step:end` injection-rate range.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRange {
    pub start: f64,
    pub step: f64,
    pub end: f64,
}

impl SweepRange {
    pub fn rates(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

impl std::str::FromStr for SweepRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts[..] else {
            return Err("expected start:step:end".into());
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
        let r = SweepRange {
            start: num(a)?,
            step: num(b)?,
            end: num(c)?,
        };
        if r.step.is_nan() || r.step <= 0.0 {
            return Err("step must be positive".into());
        }
        if !(0.0..=1.0).contains(&r.start) || !(r.start..=1.0).contains(&r.end) {
            return Err("need 0 <= start <= end <= 1".into());
        }
        Ok(r)
    }
}

fn parse_nodes(s: &str) -> Result<Vec<NodeId>, String> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| x.trim().parse::<NodeId>().map_err(|e| format!("`{x}`: {e}")))
        .collect()
}

/// Every setting a run accepts. Unset fields fall back to a config file and
/// then to the simulator defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// Router microarchitecture: base1, base2 or ring.
    #[arg(long)]
    pub design: Option<RouterDesign>,
    /// uniform, transpose, bitcomp, shuffle, hotspot or asymmetric.
    #[arg(long)]
    pub pattern: Option<TrafficPattern>,
    /// Mesh radix.
    #[arg(long)]
    pub k: Option<usize>,
    /// Offered load in flits/cycle/node.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Rate sweep as start:step:end.
    #[arg(long)]
    pub sweep: Option<SweepRange>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub warmup: Option<u64>,
    #[arg(long)]
    pub measure: Option<u64>,
    #[arg(long)]
    pub max_drain: Option<u64>,
    #[arg(long)]
    pub packet_len: Option<usize>,
    #[arg(long)]
    pub vc_depth: Option<usize>,
    /// VCs per buffer (default 8 for base1/base2, 2 for ring).
    #[arg(long)]
    pub vcs: Option<usize>,
    #[arg(long)]
    pub link_latency: Option<u64>,
    #[arg(long)]
    pub hotspot_fraction: Option<f64>,
    /// Comma-separated hotspot node ids (default: the 2x2 center).
    #[arg(long, value_parser = parse_nodes)]
    pub hotspot_nodes: Option<Vec<NodeId>>,
    /// Packet trace (`cycle,src,dest,size_flits` per line).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// CSV output path (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key=value` file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn bad(key: &str, value: &str, reason: impl ToString) -> SpecError {
    SpecError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.to_string(),
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SpecError>
where
    T::Err: ToString,
{
    value.parse().map_err(|e: T::Err| bad(key, value, e))
}

impl Settings {
    /// Parses a config file body. Keys use the flag names, with `-` or `_`.
    pub fn from_config_text(text: &str) -> Result<Self, SpecError> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (key, value) = t.split_once('=').ok_or(SpecError::Malformed { line })?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            match key.as_str() {
                "design" => s.design = Some(parse(&key, value)?),
                "pattern" => s.pattern = Some(parse(&key, value)?),
                "k" => s.k = Some(parse(&key, value)?),
                "rate" => s.rate = Some(parse(&key, value)?),
                "sweep" => s.sweep = Some(parse(&key, value)?),
                "seed" => s.seed = Some(parse(&key, value)?),
                "warmup" => s.warmup = Some(parse(&key, value)?),
                "measure" => s.measure = Some(parse(&key, value)?),
                "max_drain" => s.max_drain = Some(parse(&key, value)?),
                "packet_len" => s.packet_len = Some(parse(&key, value)?),
                "vc_depth" => s.vc_depth = Some(parse(&key, value)?),
                "vcs" => s.vcs = Some(parse(&key, value)?),
                "link_latency" => s.link_latency = Some(parse(&key, value)?),
                "hotspot_fraction" => s.hotspot_fraction = Some(parse(&key, value)?),
                "hotspot_nodes" => s.hotspot_nodes = Some(parse_nodes(value).map_err(|e| bad(&key, value, e))?),
                "trace" => s.trace = Some(value.into()),
                "out" => s.out = Some(value.into()),
                _ => return Err(SpecError::UnknownKey { line, key }),
            }
        }
        Ok(s)
    }

    pub fn from_config_file(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_config_text(&text)
    }

    /// Fields set in `self` win over those in `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            design: self.design.or(base.design),
            pattern: self.pattern.or(base.pattern),
            k: self.k.or(base.k),
            rate: self.rate.or(base.rate),
            sweep: self.sweep.or(base.sweep),
            seed: self.seed.or(base.seed),
            warmup: self.warmup.or(base.warmup),
            measure: self.measure.or(base.measure),
            max_drain: self.max_drain.or(base.max_drain),
            packet_len: self.packet_len.or(base.packet_len),
            vc_depth: self.vc_depth.or(base.vc_depth),
            vcs: self.vcs.or(base.vcs),
            link_latency: self.link_latency.or(base.link_latency),
            hotspot_fraction: self.hotspot_fraction.or(base.hotspot_fraction),
            hotspot_nodes: self.hotspot_nodes.or(base.hotspot_nodes),
            trace: self.trace.or(base.trace),
            out: self.out.or(base.out),
            config: self.config.or(base.config),
        }
    }

    /// Reads `--config` if given and layers the flags on top.
    pub fn resolve(self) -> Result<RunSpec, SpecError> {
        let merged = match &self.config {
            Some(path) => {
                let file = Settings::from_config_file(path)?;
                self.over(file)
            }
            None => self,
        };
        merged.into_spec()
    }

    pub fn into_spec(self) -> Result<RunSpec, SpecError> {
        if self.sweep.is_some() && self.trace.is_some() {
            return Err(SpecError::SweepWithTrace);
        }
        let d = SimConfig::default();
        let mut config = SimConfig {
            k: self.k.unwrap_or(d.k),
            design: self.design.unwrap_or(d.design),
            vc_depth: self.vc_depth.unwrap_or(d.vc_depth),
            vcs_per_buffer: self.vcs,
            packet_len: self.packet_len.unwrap_or(d.packet_len),
            rate: self.rate.unwrap_or(d.rate),
            pattern: self.pattern.unwrap_or(d.pattern),
            warmup: self.warmup.unwrap_or(d.warmup),
            measure: self.measure.unwrap_or(d.measure),
            max_drain: self.max_drain.unwrap_or(d.max_drain),
            seed: self.seed.unwrap_or(d.seed),
            link_latency: self.link_latency.unwrap_or(d.link_latency),
            ..d
        };
        if let Some(f) = self.hotspot_fraction {
            config.pattern_params.hotspot_fraction = f;
        }
        if let Some(n) = self.hotspot_nodes {
            config.pattern_params.hotspot_nodes = n;
        }
        let trace = match &self.trace {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
                    path: path.clone(),
                    source,
                })?;
                let events =
                    ringnoc_core::load_trace(&text, config.k * config.k).map_err(|source| SpecError::Trace {
                        path: path.clone(),
                        source,
                    })?;
                // Unless told otherwise, measure the whole trace.
                if self.warmup.is_none() {
                    config.warmup = 0;
                }
                if self.measure.is_none() {
                    config.measure = events.last().map_or(1, |e| e.cycle + 1);
                }
                Some(events)
            }
            None => None,
        };
        config.validate()?;
        if let Some(s) = &self.sweep {
            for rate in s.rates() {
                SimConfig { rate, ..config.clone() }.validate()?;
            }
        }
        Ok(RunSpec {
            config,
            sweep: self.sweep.map(|s| s.rates()),
            trace,
            out: self.out,
        })
    }
}

/// A fully validated request for one or more runs.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub config: SimConfig,
    pub sweep: Option<Vec<f64>>,
    pub trace: Option<Vec<ringnoc_core::TraceEvent>>,
    pub out: Option<PathBuf>,
}

impl RunSpec {
    /// Injection rates to run, in output order.
    pub fn rates(&self) -> Vec<f64> {
        self.sweep.clone().unwrap_or_else(|| vec![self.config.rate])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grid() {
        let r: SweepRange = "0.01:0.01:0.5".parse().unwrap();
        let rates = r.rates();
        assert_eq!(rates.len(), 50);
        assert_eq!(rates[0], 0.01);
        assert_eq!(rates[29], 0.3);
        assert_eq!(rates[49], 0.5);
        assert!(rates.windows(2).all(|w| w[0] < w[1]));
        assert!("0.1:0:0.5".parse::<SweepRange>().is_err());
        assert!("0.5:0.1:0.1".parse::<SweepRange>().is_err());
        assert!("0.1:0.1".parse::<SweepRange>().is_err());
    }

    #[test]
    fn config_text() {
        let s = Settings::from_config_text("# run\ndesign = ring\npattern=transpose\nmax-drain=5\n\nvcs=3").unwrap();
        assert_eq!(s.design, Some(RouterDesign::Ring));
        assert_eq!(s.pattern, Some(TrafficPattern::Transpose));
        assert_eq!(s.max_drain, Some(5));
        assert_eq!(s.vcs, Some(3));
    }

    #[test]
    fn config_errors_name_the_offender() {
        let e = Settings::from_config_text("k=8\nspeed=3").unwrap_err();
        assert!(matches!(e, SpecError::UnknownKey { line: 2, ref key } if key == "speed"));
        let e = Settings::from_config_text("k=eight").unwrap_err();
        assert!(e.to_string().contains("`k`"), "{e}");
        assert!(matches!(
            Settings::from_config_text("k"),
            Err(SpecError::Malformed { line: 1 })
        ));
    }

    #[test]
    fn flags_override_file() {
        let file = Settings::from_config_text("k=4\nrate=0.2\nseed=9").unwrap();
        let cli = Settings {
            rate: Some(0.3),
            ..Settings::default()
        };
        let spec = cli.over(file).into_spec().unwrap();
        assert_eq!((spec.config.k, spec.config.rate, spec.config.seed), (4, 0.3, 9));
    }

    #[test]
    fn sweep_and_trace_are_exclusive() {
        let s = Settings {
            sweep: Some("0.1:0.1:0.2".parse().unwrap()),
            trace: Some("t.txt".into()),
            ..Settings::default()
        };
        assert!(matches!(s.into_spec(), Err(SpecError::SweepWithTrace)));
    }

    #[test]
    fn invalid_numbers_rejected_up_front() {
        let s = Settings {
            k: Some(1),
            ..Settings::default()
        };
        assert!(matches!(
            s.into_spec(),
            Err(SpecError::Config(ConfigError::MeshTooSmall(1)))
        ));
        let s = Settings {
            rate: Some(1.5),
            ..Settings::default()
        };
        assert!(s.into_spec().is_err());
        let s = Settings {
            packet_len: Some(9),
            ..Settings::default()
        };
        assert!(matches!(
            s.into_spec(),
            Err(SpecError::Config(ConfigError::VcTooShallow { .. }))
        ));
    }
}
