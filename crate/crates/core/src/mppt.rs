//! Closed-loop MPPT: Perturb & Observe, the ANN duty predictor and a
//! quasi-static day simulation of the panel + Cuk converter plant.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::ann::MlpNetwork;
use crate::cuk::{clamp_duty, operating_point, DUTY_MAX, DUTY_MIN};
use crate::dataset::NormalizationParams;
use crate::error::{Error, Result};
use crate::fmt::sig;
use crate::panel::{mpp_solve, EnvCondition, PanelSpec, PowerPoint};
use crate::solar::IrradianceSample;
use crate::stats::stddev;

pub const DEFAULT_PO_STEP: f64 = 0.005;
pub const DEFAULT_CONTROL_PERIOD_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoState {
    pub duty: f64,
    pub step: f64,
    pub last_power: f64,
    /// +1 or -1.
    pub last_direction: i8,
}

impl PoState {
    pub fn new(duty: f64, step: f64) -> Result<Self> {
        if !(DUTY_MIN..=DUTY_MAX).contains(&duty) {
            return Err(Error::Domain {
                what: "initial duty",
                value: duty,
                bound: "[0.05, 0.95]",
            });
        }
        if !(step > 0.0) {
            return Err(Error::Domain {
                what: "P&O step",
                value: step,
                bound: "> 0",
            });
        }
        Ok(PoState {
            duty,
            step,
            last_power: 0.0,
            last_direction: 1,
        })
    }
}

/// Fixed-step hill climbing: keep going while power does not drop, turn
/// around when it does. A perturbation that the duty limits would swallow is
/// reversed instead, otherwise a flat (dark) power reading parks the
/// tracker on a limit for good.
pub fn po_step(state: PoState, measured_power: f64) -> PoState {
    let mut direction = if measured_power >= state.last_power {
        state.last_direction
    } else {
        -state.last_direction
    };
    if clamp_duty(state.duty + direction as f64 * state.step) == state.duty {
        direction = -direction;
    }
    PoState {
        duty: clamp_duty(state.duty + direction as f64 * state.step),
        step: state.step,
        last_power: measured_power,
        last_direction: direction,
    }
}

/// Network plus the normalization it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnController {
    pub net: MlpNetwork,
    pub norm: NormalizationParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnDuty {
    pub duty: f64,
    /// Some normalized input left [-1.5, 1.5], that is the training range
    /// widened by a quarter of its width on each side.
    pub out_of_envelope: bool,
}

/// Normalized magnitude beyond which an input counts as out of envelope.
pub const ENVELOPE_LIMIT: f64 = 1.5;

impl AnnController {
    pub fn new(net: MlpNetwork, norm: NormalizationParams) -> Result<Self> {
        if net.input_size() != 3 || net.output_size() != 1 {
            return Err(Error::Shape(format!(
                "duty predictor needs 3 inputs and 1 output, network is {:?}",
                net.layer_sizes()
            )));
        }
        Ok(AnnController { net, norm })
    }

    pub fn duty(&self, irradiance: f64, temperature: f64, load: f64) -> Result<AnnDuty> {
        let x = self.norm.normalize_inputs([irradiance, temperature, load]);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("controller input".into()));
        }
        let y = self.net.predict(&x)?[0];
        Ok(AnnDuty {
            duty: clamp_duty(self.norm.denormalize_target(y)),
            out_of_envelope: x.iter().any(|v| v.abs() > ENVELOPE_LIMIT),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub time_h: f64,
    pub irradiance: f64,
    pub temperature: f64,
    pub load: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayProfile {
    pub samples: Vec<ProfileSample>,
    /// Used where a sample carries no load.
    pub load: f64,
}

/// Cell temperature rise per W/m² above ambient.
pub const CELL_HEATING: f64 = 0.03;

impl DayProfile {
    pub fn new(samples: Vec<ProfileSample>, load: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("day profile"));
        }
        if !(load > 0.0) {
            return Err(Error::Domain {
                what: "load resistance",
                value: load,
                bound: "> 0",
            });
        }
        for w in samples.windows(2) {
            if !(w[1].time_h > w[0].time_h) {
                return Err(Error::invalid(
                    "day profile",
                    format!("time must increase strictly ({} then {})", w[0].time_h, w[1].time_h),
                ));
            }
        }
        for s in &samples {
            EnvCondition::new(s.irradiance, s.temperature)?;
            if let Some(r) = s.load {
                if !(r > 0.0) {
                    return Err(Error::Domain {
                        what: "load resistance",
                        value: r,
                        bound: "> 0",
                    });
                }
            }
        }
        Ok(DayProfile { samples, load })
    }

    /// Clear-sky irradiance with cell temperature `ambient + 0.03 G`.
    pub fn from_irradiance(profile: &[IrradianceSample], ambient_c: f64, load: f64) -> Result<Self> {
        let samples = profile
            .iter()
            .map(|s| ProfileSample {
                time_h: s.time_h,
                irradiance: s.irradiance,
                temperature: ambient_c + CELL_HEATING * s.irradiance,
                load: None,
            })
            .collect();
        DayProfile::new(samples, load)
    }

    /// Zero-order hold: the last sample at or before `t`.
    fn index_at(&self, t: f64) -> usize {
        self.samples
            .partition_point(|s| s.time_h <= t + 1e-12)
            .saturating_sub(1)
    }

    pub fn start(&self) -> f64 {
        self.samples[0].time_h
    }

    pub fn end(&self) -> f64 {
        self.samples.last().expect("non-empty").time_h
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_h,irradiance_wm2,temperature_c,load_ohm")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{}",
                sig(s.time_h, 9),
                sig(s.irradiance, 9),
                sig(s.temperature, 9),
                sig(s.load.unwrap_or(self.load), 9)
            )?;
        }
        Ok(())
    }

    /// Reads `time_h,irradiance_wm2,temperature_c[,load_ohm]`.
    pub fn read_csv<R: Read>(r: R, default_load: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let with_load = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            ["time_h", "irradiance_wm2", "temperature_c"] => false,
            ["time_h", "irradiance_wm2", "temperature_c", "load_ohm"] => true,
            _ => {
                return Err(Error::invalid(
                    "profile CSV header",
                    format!("found `{}`", header.join(",")),
                ))
            }
        };
        let mut samples = Vec::new();
        for (k, row) in rdr.records().enumerate() {
            let row = row?;
            let num = |j: usize| -> Result<f64> {
                row.get(j)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: k + 2,
                        msg: format!("bad number in column {}", j + 1),
                    })
            };
            samples.push(ProfileSample {
                time_h: num(0)?,
                irradiance: num(1)?,
                temperature: num(2)?,
                load: if with_load { Some(num(3)?) } else { None },
            });
        }
        DayProfile::new(samples, default_load)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Controller<'a> {
    PerturbObserve { initial_duty: f64, step: f64 },
    Ann(&'a AnnController),
}

impl Controller<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::PerturbObserve { .. } => "po",
            Controller::Ann(_) => "ann",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSeries {
    pub time_h: Vec<f64>,
    pub duty: Vec<f64>,
    /// Panel side.
    pub v: Vec<f64>,
    pub i: Vec<f64>,
    pub p: Vec<f64>,
    /// Oracle maximum available at each tick.
    pub p_mpp: Vec<f64>,
    /// DC-link (converter output) magnitude, lossless: `sqrt(p R)`.
    pub v_link: Vec<f64>,
    pub i_link: Vec<f64>,
}

/// Metrics. The `*_stddev` values are taken over tick-to-tick increments so
/// that the slow daily trend, common to any tracker, does not mask the
/// fluctuation each controller adds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunMetrics {
    pub tracking_efficiency: f64,
    pub duty_stddev: f64,
    pub power_stddev: f64,
    pub link_current_stddev: f64,
    pub link_voltage_stddev: f64,
    pub energy_wh: f64,
    pub available_energy_wh: f64,
    pub out_of_envelope_ticks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub controller: String,
    pub series: RunSeries,
    pub metrics: RunMetrics,
}

fn increments_stddev(xs: &[f64]) -> f64 {
    let d: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    stddev(&d)
}

/// Ticks every `control_period_s` from the profile's first to last sample.
/// At each tick the controller sets a duty, the plant settles at the
/// intersection of the panel curve and the reflected load, and P&O observes
/// the resulting power for its next decision.
pub fn simulate_day(
    profile: &DayProfile,
    spec: &PanelSpec,
    controller: &Controller<'_>,
    control_period_s: f64,
) -> Result<RunReport> {
    if !(control_period_s > 0.0) {
        return Err(Error::Domain {
            what: "control period",
            value: control_period_s,
            bound: "> 0 s",
        });
    }
    let dt_h = control_period_s / 3600.0;
    let ticks = ((profile.end() - profile.start()) / dt_h + 1e-9).floor() as usize + 1;

    let mut po = match controller {
        Controller::PerturbObserve { initial_duty, step } => Some(PoState::new(*initial_duty, *step)?),
        Controller::Ann(_) => None,
    };
    let mut oracle: HashMap<usize, PowerPoint> = HashMap::new();
    let mut ann_cache: Option<(usize, u64, f64)> = None;
    let mut s = RunSeries::default();
    let mut out_of_envelope = 0;

    for k in 0..ticks {
        let t = profile.start() + k as f64 * dt_h;
        let idx = profile.index_at(t);
        let sample = profile.samples[idx];
        let env = EnvCondition::new(sample.irradiance, sample.temperature)?;
        let load = sample.load.unwrap_or(profile.load);

        let duty = match (controller, &po) {
            (Controller::Ann(ann), _) => match ann_cache {
                Some((i, r, d)) if i == idx && r == load.to_bits() => d,
                _ => {
                    let out = ann.duty(env.irradiance, env.temperature, load)?;
                    if out.out_of_envelope {
                        out_of_envelope += 1;
                    }
                    ann_cache = Some((idx, load.to_bits(), out.duty));
                    out.duty
                }
            },
            (_, Some(state)) => state.duty,
            _ => unreachable!("P&O state exists for the P&O controller"),
        };
        let op = operating_point(spec, &env, duty, load)?;
        if let Some(state) = po.as_mut() {
            *state = po_step(*state, op.p);
        }
        let best = *oracle.entry(idx).or_insert_with(|| mpp_solve(spec, &env));
        let v_link = (op.p * load).sqrt();

        s.time_h.push(t);
        s.duty.push(duty);
        s.v.push(op.v);
        s.i.push(op.i);
        s.p.push(op.p);
        s.p_mpp.push(best.p);
        s.v_link.push(v_link);
        s.i_link.push(v_link / load);
    }

    let energy: f64 = s.p.iter().sum::<f64>() * dt_h;
    let available: f64 = s.p_mpp.iter().sum::<f64>() * dt_h;
    let metrics = RunMetrics {
        tracking_efficiency: if available > 0.0 { energy / available } else { 0.0 },
        duty_stddev: increments_stddev(&s.duty),
        power_stddev: increments_stddev(&s.p),
        link_current_stddev: increments_stddev(&s.i_link),
        link_voltage_stddev: increments_stddev(&s.v_link),
        energy_wh: energy,
        available_energy_wh: available,
        out_of_envelope_ticks: out_of_envelope,
    };
    Ok(RunReport {
        controller: controller.name().to_string(),
        series: s,
        metrics,
    })
}

impl RunReport {
    /// Every `stride`-th tick, starting with the first.
    pub fn write_csv<W: Write>(&self, w: W, stride: usize) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "time_h,duty,v_panel,i_panel,p_panel,p_mpp,v_link,i_link")?;
        let s = &self.series;
        for k in (0..s.time_h.len()).step_by(stride.max(1)) {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                sig(s.time_h[k], 9),
                sig(s.duty[k], 9),
                sig(s.v[k], 9),
                sig(s.i[k], 9),
                sig(s.p[k], 9),
                sig(s.p_mpp[k], 9),
                sig(s.v_link[k], 9),
                sig(s.i_link[k], 9)
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metrics_kv(&self) -> String {
        let m = &self.metrics;
        format!(
            "controller = {}\nticks = {}\ntracking_efficiency = {}\nduty_stddev = {}\npower_stddev = {}\n\
             link_current_stddev = {}\nlink_voltage_stddev = {}\nenergy_wh = {}\navailable_energy_wh = {}\n\
             out_of_envelope_ticks = {}\n",
            self.controller,
            self.series.time_h.len(),
            sig(m.tracking_efficiency, 9),
            sig(m.duty_stddev, 9),
            sig(m.power_stddev, 9),
            sig(m.link_current_stddev, 9),
            sig(m.link_voltage_stddev, 9),
            sig(m.energy_wh, 9),
            sig(m.available_energy_wh, 9),
            m.out_of_envelope_ticks
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Winner {
    A,
    B,
    Tie,
}

impl Winner {
    fn swapped(self) -> Winner {
        match self {
            Winner::A => Winner::B,
            Winner::B => Winner::A,
            Winner::Tie => Winner::Tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: &'static str,
    pub a: f64,
    pub b: f64,
    pub higher_is_better: bool,
    pub winner: Winner,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<MetricRow>,
    pub time_h: Vec<f64>,
    /// `a - b` per tick.
    pub duty_diff: Vec<f64>,
    pub link_current_diff: Vec<f64>,
    pub link_voltage_diff: Vec<f64>,
    pub power_diff: Vec<f64>,
}

impl Comparison {
    pub fn winner(&self, name: &str) -> Option<Winner> {
        self.rows.iter().find(|r| r.name == name).map(|r| r.winner)
    }

    pub fn winner_label(&self, w: Winner) -> &str {
        match w {
            Winner::A => &self.label_a,
            Winner::B => &self.label_b,
            Winner::Tie => "tie",
        }
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!("a = {}\nb = {}\n", self.label_a, self.label_b);
        for r in &self.rows {
            s += &format!(
                "{0}.a = {1}\n{0}.b = {2}\n{0}.better = {3}\n{0}.winner = {4}\n",
                r.name,
                sig(r.a, 9),
                sig(r.b, 9),
                if r.higher_is_better { "higher" } else { "lower" },
                self.winner_label(r.winner)
            );
        }
        s
    }

    /// Every `stride`-th tick, starting with the first.
    pub fn write_differences_csv<W: Write>(&self, w: W, stride: usize) -> Result<()> {
        let mut w = std::io::BufWriter::new(w);
        writeln!(w, "time_h,duty_diff,i_link_diff,v_link_diff,p_diff")?;
        for k in (0..self.time_h.len()).step_by(stride.max(1)) {
            writeln!(
                w,
                "{},{},{},{},{}",
                sig(self.time_h[k], 9),
                sig(self.duty_diff[k], 9),
                sig(self.link_current_diff[k], 9),
                sig(self.link_voltage_diff[k], 9),
                sig(self.power_diff[k], 9)
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Side-by-side metrics with a winner per metric and the per-tick
/// differences `a - b`. No aggregate score.
pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    let (sa, sb) = (&a.series, &b.series);
    if sa.time_h.len() != sb.time_h.len() {
        return Err(Error::Alignment(format!(
            "{} has {} ticks, {} has {}",
            a.controller,
            sa.time_h.len(),
            b.controller,
            sb.time_h.len()
        )));
    }
    if let Some(k) = (0..sa.time_h.len()).find(|&k| (sa.time_h[k] - sb.time_h[k]).abs() > 1e-9) {
        return Err(Error::Alignment(format!(
            "tick {k} at {} h vs {} h",
            sa.time_h[k], sb.time_h[k]
        )));
    }
    let (ma, mb) = (&a.metrics, &b.metrics);
    let row = |name, a: f64, b: f64, higher_is_better: bool| {
        let winner = if a == b {
            Winner::Tie
        } else if (a > b) == higher_is_better {
            Winner::A
        } else {
            Winner::B
        };
        MetricRow {
            name,
            a,
            b,
            higher_is_better,
            winner,
        }
    };
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>();
    Ok(Comparison {
        label_a: a.controller.clone(),
        label_b: b.controller.clone(),
        rows: vec![
            row("tracking_efficiency", ma.tracking_efficiency, mb.tracking_efficiency, true),
            row("energy_wh", ma.energy_wh, mb.energy_wh, true),
            row("duty_stddev", ma.duty_stddev, mb.duty_stddev, false),
            row("link_current_stddev", ma.link_current_stddev, mb.link_current_stddev, false),
            row("link_voltage_stddev", ma.link_voltage_stddev, mb.link_voltage_stddev, false),
            row("power_stddev", ma.power_stddev, mb.power_stddev, false),
        ],
        time_h: sa.time_h.clone(),
        duty_diff: diff(&sa.duty, &sb.duty),
        link_current_diff: diff(&sa.i_link, &sb.i_link),
        link_voltage_diff: diff(&sa.v_link, &sb.v_link),
        power_diff: diff(&sa.p, &sb.p),
    })
}

impl Comparison {
    /// The same comparison with the arguments swapped.
    pub fn swapped(&self) -> Comparison {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect();
        Comparison {
            label_a: self.label_b.clone(),
            label_b: self.label_a.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| MetricRow {
                    a: r.b,
                    b: r.a,
                    winner: r.winner.swapped(),
                    ..r.clone()
                })
                .collect(),
            time_h: self.time_h.clone(),
            duty_diff: neg(&self.duty_diff),
            link_current_diff: neg(&self.link_current_diff),
            link_voltage_diff: neg(&self.link_voltage_diff),
            power_diff: neg(&self.power_diff),
        }
    }
}

/// Best duty on a static plant by scanning `[DUTY_MIN, DUTY_MAX]` at
/// `resolution`.
pub fn duty_scan_optimum(
    spec: &PanelSpec,
    env: &EnvCondition,
    load: f64,
    resolution: f64,
) -> Result<(f64, f64)> {
    let n = ((DUTY_MAX - DUTY_MIN) / resolution + 1e-9).floor() as usize;
    let mut best = (DUTY_MIN, f64::NEG_INFINITY);
    for k in 0..=n {
        let d = DUTY_MIN + k as f64 * resolution;
        let p = operating_point(spec, env, d, load)?.p;
        if p > best.1 {
            best = (d, p);
        }
    }
    Ok(best)
}
