//! The (irradiance, temperature, load) -> duty-cycle dataset.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cuk::duty_for_mpp;
use crate::error::{Error, Result};
use crate::fmt::{exact, sig};
use crate::kv::KvDoc;
use crate::panel::{mpp_estimate, EnvCondition, PanelSpec};
use crate::stats::Histogram;

pub const CSV_HEADER: &str = "irradiance_wm2,temperature_c,load_ohm,duty";

/// Significant digits written to the dataset CSV.
pub const CSV_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRecord {
    pub irradiance: f64,
    pub temperature: f64,
    pub load_resistance: f64,
    pub duty_cycle: f64,
}

impl DatasetRecord {
    pub fn inputs(&self) -> [f64; 3] {
        [self.irradiance, self.temperature, self.load_resistance]
    }
}

/// One evenly spaced axis: `min, min + step, ...` while `<= max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Axis> {
        if !(step > 0.0) || !(max >= min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::invalid(
                "grid axis",
                format!("min {min}, max {max}, step {step}"),
            ));
        }
        Ok(Axis { min, max, step })
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.value(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub irradiance: Axis,
    pub temperature: Axis,
    pub loads: Vec<f64>,
}

impl GridSpec {
    /// 91 irradiance x 112 temperature x 10 load points = 101 920 records.
    pub fn desk() -> GridSpec {
        GridSpec {
            irradiance: Axis {
                min: 100.0,
                max: 1000.0,
                step: 10.0,
            },
            temperature: Axis {
                min: 5.11,
                max: 60.93,
                step: 0.5,
            },
            loads: default_loads(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Axis::new(self.irradiance.min, self.irradiance.max, self.irradiance.step)?;
        Axis::new(self.temperature.min, self.temperature.max, self.temperature.step)?;
        if self.irradiance.min <= 0.0 {
            return Err(Error::invalid("grid", "irradiance must be positive"));
        }
        if self.loads.is_empty() || self.loads.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid("grid", "loads must be a non-empty list of positive ohms"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.irradiance.len() * self.temperature.len() * self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// 1, 3, ..., 19 ohm.
pub fn default_loads() -> Vec<f64> {
    (0..10).map(|k| 1.0 + 2.0 * k as f64).collect()
}

/// Labels every grid point with the duty cycle that puts the panel at its
/// estimated maximum power point. Ordering: irradiance outer, temperature
/// middle, load inner.
pub fn generate(spec: &PanelSpec, grid: &GridSpec) -> Result<Vec<DatasetRecord>> {
    grid.validate()?;
    let gs = grid.irradiance.values();
    let ts = grid.temperature.values();
    let chunks: Vec<Vec<DatasetRecord>> = gs
        .par_iter()
        .map(|&g| {
            let mut out = Vec::with_capacity(ts.len() * grid.loads.len());
            for &t in &ts {
                let env = EnvCondition::new(g, t)?;
                let m = mpp_estimate(spec, &env);
                for &r in &grid.loads {
                    out.push(DatasetRecord {
                        irradiance: g,
                        temperature: t,
                        load_resistance: r,
                        duty_cycle: duty_for_mpp(m.v, m.p, r)?,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Record indices of a train/validation partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Split {
    pub fn select<T: Clone>(idx: &[usize], items: &[T]) -> Vec<T> {
        idx.iter().map(|&k| items[k].clone()).collect()
    }
}

/// Seeded shuffle, then the first `floor(n * train_fraction)` indices train.
pub fn split(n_records: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    if n_records < 2 {
        return Err(Error::InsufficientData(format!(
            "{n_records} record(s); a split needs at least 2"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain {
            what: "train fraction",
            value: train_fraction,
            bound: "(0, 1)",
        });
    }
    let mut idx: Vec<usize> = (0..n_records).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n_records as f64 * train_fraction).floor() as usize).clamp(1, n_records - 1);
    let validation = idx.split_off(n_train);
    Ok(Split {
        train: idx,
        validation,
    })
}

/// Per-feature min-max bounds mapped onto [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn normalize(&self, x: f64) -> f64 {
        2.0 * (x - self.min) / (self.max - self.min) - 1.0
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        self.min + (y + 1.0) * 0.5 * (self.max - self.min)
    }
}

pub const FEATURE_NAMES: [&str; 3] = ["irradiance", "temperature", "load"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    pub inputs: [Range; 3],
    pub target: Range,
}

impl NormalizationParams {
    /// Bounds observed in `records` (the training split).
    pub fn fit(records: &[DatasetRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("normalization needs at least one record"));
        }
        let bounds = |f: &dyn Fn(&DatasetRecord) -> f64| {
            records.iter().fold(
                Range {
                    min: f64::INFINITY,
                    max: f64::NEG_INFINITY,
                },
                |r, rec| Range {
                    min: r.min.min(f(rec)),
                    max: r.max.max(f(rec)),
                },
            )
        };
        let params = NormalizationParams {
            inputs: [
                bounds(&|r| r.irradiance),
                bounds(&|r| r.temperature),
                bounds(&|r| r.load_resistance),
            ],
            target: bounds(&|r| r.duty_cycle),
        };
        params.validate()
    }

    pub fn validate(self) -> Result<Self> {
        for (name, r) in FEATURE_NAMES.iter().zip(&self.inputs) {
            if !(r.max > r.min) {
                return Err(Error::DegenerateFeature(name.to_string()));
            }
        }
        if !(self.target.max > self.target.min) {
            return Err(Error::DegenerateFeature("duty".into()));
        }
        Ok(self)
    }

    pub fn normalize_inputs(&self, x: [f64; 3]) -> [f64; 3] {
        [
            self.inputs[0].normalize(x[0]),
            self.inputs[1].normalize(x[1]),
            self.inputs[2].normalize(x[2]),
        ]
    }

    pub fn normalize_target(&self, d: f64) -> f64 {
        self.target.normalize(d)
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        self.target.denormalize(y)
    }

    pub fn normalize(&self, r: &DatasetRecord) -> ([f64; 3], f64) {
        (self.normalize_inputs(r.inputs()), self.normalize_target(r.duty_cycle))
    }

    pub fn denormalize(&self, x: [f64; 3], y: f64) -> DatasetRecord {
        DatasetRecord {
            irradiance: self.inputs[0].denormalize(x[0]),
            temperature: self.inputs[1].denormalize(x[1]),
            load_resistance: self.inputs[2].denormalize(x[2]),
            duty_cycle: self.target.denormalize(y),
        }
    }

    /// `key = value` lines, full precision.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (name, r) in FEATURE_NAMES.iter().zip(&self.inputs) {
            s += &format!("{name}_min = {}\n{name}_max = {}\n", exact(r.min), exact(r.max));
        }
        s += &format!(
            "duty_min = {}\nduty_max = {}\n",
            exact(self.target.min),
            exact(self.target.max)
        );
        s
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        Self::from_section(&doc, "")
    }

    pub fn from_section(doc: &KvDoc, section: &str) -> Result<Self> {
        let mut r = doc.reader(section);
        let mut range = |name: &str| -> Result<Range> {
            Ok(Range {
                min: r.req(&format!("{name}_min"))?,
                max: r.req(&format!("{name}_max"))?,
            })
        };
        let params = NormalizationParams {
            inputs: [range("irradiance")?, range("temperature")?, range("load")?],
            target: range("duty")?,
        };
        r.finish(&[])?;
        params.validate()
    }
}

/// Histograms per axis plus the (load, G, T, D) rows behind the 3D view.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub irradiance: Histogram,
    pub temperature: Histogram,
    pub duty: Histogram,
    /// Rows grouped by load, grid order preserved inside each group.
    pub correlation: Vec<DatasetRecord>,
}

pub const DEFAULT_BINS: usize = 50;

pub fn summarize(records: &[DatasetRecord], bins: usize) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Empty("cannot summarize an empty dataset"));
    }
    let col = |f: fn(&DatasetRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let mut correlation = records.to_vec();
    correlation.sort_by(|a, b| a.load_resistance.total_cmp(&b.load_resistance));
    Ok(Summary {
        irradiance: Histogram::auto(&col(|r| r.irradiance), bins),
        temperature: Histogram::auto(&col(|r| r.temperature), bins),
        duty: Histogram::auto(&col(|r| r.duty_cycle), bins),
        correlation,
    })
}

/// Max minus min duty over records whose irradiance lies in `[lo, hi]`.
pub fn duty_spread(records: &[DatasetRecord], lo: f64, hi: f64) -> Option<f64> {
    let (mn, mx) = records
        .iter()
        .filter(|r| r.irradiance >= lo && r.irradiance <= hi)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            (a.min(r.duty_cycle), b.max(r.duty_cycle))
        });
    (mx >= mn).then_some(mx - mn)
}

/// Duty spread in the band `[0.9 g, 1.1 g]`.
pub fn duty_spread_near(records: &[DatasetRecord], g: f64) -> Option<f64> {
    duty_spread(records, 0.9 * g, 1.1 * g)
}

pub fn write_csv<W: Write>(records: &[DatasetRecord], w: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{}",
            sig(r.irradiance, CSV_DIGITS),
            sig(r.temperature, CSV_DIGITS),
            sig(r.load_resistance, CSV_DIGITS),
            sig(r.duty_cycle, CSV_DIGITS)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<DatasetRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::invalid(
            "dataset CSV header",
            format!("expected `{CSV_HEADER}`, found `{header}`"),
        ));
    }
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let mut v = [0.0; 4];
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = row
                .get(j)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: k + 2,
                    msg: format!("bad number in column {}", j + 1),
                })?;
        }
        out.push(DatasetRecord {
            irradiance: v[0],
            temperature: v[1],
            load_resistance: v[2],
            duty_cycle: v[3],
        });
    }
    Ok(out)
}

/// One index per line.
pub fn write_indices<W: Write>(idx: &[usize], w: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    for k in idx {
        writeln!(w, "{k}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_indices(text: &str, n_records: usize) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let i: usize = l.trim().parse().map_err(|_| Error::Parse {
                line: k + 1,
                msg: format!("bad index `{l}`"),
            })?;
            if i >= n_records {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("index {i} out of range for {n_records} records"),
                });
            }
            Ok(i)
        })
        .collect()
}

pub fn write_correlation_csv<W: Write>(rows: &[DatasetRecord], w: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(w);
    writeln!(w, "load_ohm,irradiance_wm2,temperature_c,duty")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            sig(r.load_resistance, CSV_DIGITS),
            sig(r.irradiance, CSV_DIGITS),
            sig(r.temperature, CSV_DIGITS),
            sig(r.duty_cycle, CSV_DIGITS)
        )?;
    }
    w.flush()?;
    Ok(())
}
