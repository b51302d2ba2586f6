//! Clear-sky irradiance estimate and pyranometer calibration.
//!
//! Sun position follows the usual declination / equation-of-time chain:
//!
//! ```text
//! B     = 360/365 (d - 81)                       [deg]
//! EoT   = 9.87 sin 2B - 7.53 cos B - 1.5 sin B   [min]
//! TC    = 4 (lon - 15 tz) + EoT                  [min]
//! LST   = LT + TC/60
//! HRA   = 15 (LST - 12)                          [deg]
//! decl  = 23.45 sin(360/365 (284 + d))           [deg]
//! elev  = asin(sin decl sin lat + cos decl cos lat cos HRA)
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fmt::sig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteConfig {
    pub latitude: f64,
    pub longitude: f64,
    pub timezone: f64,
    pub day_of_year: u32,
}

impl SiteConfig {
    pub fn new(latitude: f64, longitude: f64, timezone: f64, day_of_year: u32) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::Domain {
                what: "latitude",
                value: latitude,
                bound: "[-90, 90]",
            });
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::Domain {
                what: "longitude",
                value: longitude,
                bound: "[-180, 180]",
            });
        }
        if !(-12.0..=14.0).contains(&timezone) {
            return Err(Error::Domain {
                what: "timezone",
                value: timezone,
                bound: "[-12, 14]",
            });
        }
        if !(1..=366).contains(&day_of_year) {
            return Err(Error::Domain {
                what: "day_of_year",
                value: day_of_year as f64,
                bound: "[1, 366]",
            });
        }
        Ok(SiteConfig {
            latitude,
            longitude,
            timezone,
            day_of_year,
        })
    }

    /// Joinville, Brazil, day 91 of the year.
    pub fn joinville() -> Self {
        SiteConfig {
            latitude: -26.2348783,
            longitude: -48.886931,
            timezone: -3.0,
            day_of_year: 91,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolarConstants {
    pub sun_surface_irradiance: f64,
    pub sun_radius: f64,
    pub earth_sun_distance: f64,
    pub atmospheric_loss_fraction: f64,
}

impl SolarConstants {
    pub fn new(
        sun_surface_irradiance: f64,
        sun_radius: f64,
        earth_sun_distance: f64,
        atmospheric_loss_fraction: f64,
    ) -> Result<Self> {
        for (what, v) in [
            ("sun_surface_irradiance", sun_surface_irradiance),
            ("sun_radius", sun_radius),
            ("earth_sun_distance", earth_sun_distance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain {
                    what,
                    value: v,
                    bound: "> 0",
                });
            }
        }
        if !(0.0..=1.0).contains(&atmospheric_loss_fraction) {
            return Err(Error::Domain {
                what: "atmospheric_loss_fraction",
                value: atmospheric_loss_fraction,
                bound: "[0, 1]",
            });
        }
        Ok(SolarConstants {
            sun_surface_irradiance,
            sun_radius,
            earth_sun_distance,
            atmospheric_loss_fraction,
        })
    }

    /// 62.3 MW/m² at the photosphere, R = 695 000 km, d = 149.5 Gm, 30 % loss.
    pub fn standard() -> Self {
        SolarConstants {
            sun_surface_irradiance: 62.3e6,
            sun_radius: 695e6,
            earth_sun_distance: 149.5e9,
            atmospheric_loss_fraction: 0.30,
        }
    }

    pub fn direct_fraction(&self) -> f64 {
        1.0 - self.atmospheric_loss_fraction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AirMassModel {
    #[default]
    Secant,
    KastenYoung,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectModel {
    #[default]
    FlatTransmission,
    Empirical,
}

impl std::str::FromStr for AirMassModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "secant" => Ok(AirMassModel::Secant),
            "kasten_young" => Ok(AirMassModel::KastenYoung),
            _ => Err(Error::invalid("air mass model", s)),
        }
    }
}

impl std::str::FromStr for DirectModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat_transmission" => Ok(DirectModel::FlatTransmission),
            "empirical" => Ok(DirectModel::Empirical),
            _ => Err(Error::invalid("direct irradiance model", s)),
        }
    }
}

impl AirMassModel {
    pub fn name(self) -> &'static str {
        match self {
            AirMassModel::Secant => "secant",
            AirMassModel::KastenYoung => "kasten_young",
        }
    }
}

impl DirectModel {
    pub fn name(self) -> &'static str {
        match self {
            DirectModel::FlatTransmission => "flat_transmission",
            DirectModel::Empirical => "empirical",
        }
    }
}

/// Irradiance at the top of the atmosphere, by inverse-square dilution of the
/// photosphere irradiance.
pub fn extraterrestrial_irradiance(c: &SolarConstants) -> f64 {
    let ratio = c.sun_radius / c.earth_sun_distance;
    c.sun_surface_irradiance * ratio * ratio
}

/// Declination in degrees.
pub fn declination(day_of_year: u32) -> f64 {
    23.45 * (360.0 / 365.0 * (284.0 + day_of_year as f64)).to_radians().sin()
}

/// Equation of time in minutes.
pub fn equation_of_time(day_of_year: u32) -> f64 {
    let b = (360.0 / 365.0 * (day_of_year as f64 - 81.0)).to_radians();
    9.87 * (2.0 * b).sin() - 7.53 * b.cos() - 1.5 * b.sin()
}

/// Minutes to add to local clock time to obtain local solar time.
pub fn time_correction(site: &SiteConfig) -> f64 {
    let meridian = 15.0 * site.timezone;
    4.0 * (site.longitude - meridian) + equation_of_time(site.day_of_year)
}

/// Hour angle in degrees at the given local clock time (hours).
pub fn hour_angle(site: &SiteConfig, local_clock_time: f64) -> f64 {
    let solar_time = local_clock_time + time_correction(site) / 60.0;
    15.0 * (solar_time - 12.0)
}

/// Local clock time (hours) at which the sun crosses the meridian.
pub fn solar_noon(site: &SiteConfig) -> f64 {
    12.0 - time_correction(site) / 60.0
}

/// Solar elevation above the horizon in degrees.
pub fn solar_elevation(site: &SiteConfig, local_clock_time: f64) -> f64 {
    let decl = declination(site.day_of_year).to_radians();
    let lat = site.latitude.to_radians();
    let hra = hour_angle(site, local_clock_time).to_radians();
    let s = decl.sin() * lat.sin() + decl.cos() * lat.cos() * hra.cos();
    s.clamp(-1.0, 1.0).asin().to_degrees()
}

pub fn air_mass(zenith_deg: f64, model: AirMassModel) -> Result<f64> {
    match model {
        AirMassModel::Secant => {
            if !(0.0..90.0).contains(&zenith_deg) {
                return Err(Error::Domain {
                    what: "zenith angle",
                    value: zenith_deg,
                    bound: "[0, 90) degrees for the secant model",
                });
            }
            Ok(1.0 / zenith_deg.to_radians().cos())
        }
        AirMassModel::KastenYoung => {
            if !(0.0..96.0).contains(&zenith_deg) {
                return Err(Error::Domain {
                    what: "zenith angle",
                    value: zenith_deg,
                    bound: "[0, 96) degrees for the Kasten-Young model",
                });
            }
            let z = zenith_deg;
            Ok(1.0 / (z.to_radians().cos() + 0.50572 * (96.07995 - z).powf(-1.6364)))
        }
    }
}

/// Direct beam irradiance at normal incidence.
pub fn direct_irradiance(
    air_mass: f64,
    extraterrestrial: f64,
    constants: &SolarConstants,
    model: DirectModel,
) -> f64 {
    match model {
        DirectModel::FlatTransmission => extraterrestrial * constants.direct_fraction(),
        DirectModel::Empirical => 1353.0 * 0.7f64.powf(air_mass.max(0.0).powf(0.678)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClearSkyOptions {
    pub air_mass: AirMassModel,
    pub direct: DirectModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrradianceSample {
    pub time_h: f64,
    pub irradiance: f64,
}

/// Sample times `start, start + step, ...` up to and including `end`.
pub fn time_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Domain {
            what: "step",
            value: step,
            bound: "> 0",
        });
    }
    if !(start < end) {
        return Err(Error::invalid(
            "time window",
            format!("start {start} must precede end {end}"),
        ));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}

/// Clear-sky irradiance on a horizontal surface over a window of local clock
/// time.
pub fn clear_sky_profile(
    site: &SiteConfig,
    constants: &SolarConstants,
    options: ClearSkyOptions,
    start: f64,
    end: f64,
    step: f64,
) -> Result<Vec<IrradianceSample>> {
    let h0 = extraterrestrial_irradiance(constants);
    time_grid(start, end, step)?
        .into_iter()
        .map(|t| {
            let elevation = solar_elevation(site, t);
            let irradiance = if elevation <= 0.0 {
                0.0
            } else {
                let am = air_mass(90.0 - elevation, options.air_mass)?;
                direct_irradiance(am, h0, constants, options.direct)
                    * elevation.to_radians().sin()
            };
            Ok(IrradianceSample {
                time_h: t,
                irradiance,
            })
        })
        .collect()
}

pub fn write_profile_csv<W: Write>(profile: &[IrradianceSample], mut w: W) -> Result<()> {
    writeln!(w, "time_h,irradiance_wm2")?;
    for s in profile {
        writeln!(w, "{},{}", sig(s.time_h, 9), sig(s.irradiance, 9))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSample {
    pub time_h: f64,
    pub volts: f64,
}

pub fn read_sensor_csv<R: Read>(r: R) -> Result<Vec<SensorSample>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["time_h", "volts"] {
        return Err(Error::invalid(
            "sensor CSV header",
            format!("expected `time_h,volts`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let parse = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: k + 2,
                    msg: format!("bad number in column {}", i + 1),
                })
        };
        out.push(SensorSample {
            time_h: parse(0)?,
            volts: parse(1)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorCalibration {
    /// W/m² per volt.
    pub gain: f64,
    /// W/m².
    pub offset: f64,
    pub fit_residual_rms: f64,
    pub pairs: usize,
}

impl SensorCalibration {
    pub fn irradiance(&self, volts: f64) -> f64 {
        self.gain * volts + self.offset
    }
}

/// Fits `irradiance = gain * volts + offset` on sensor samples inside
/// `window`, each paired with the nearest reference sample no further than
/// half the reference step away.
pub fn calibrate_sensor(
    samples: &[SensorSample],
    reference: &[IrradianceSample],
    window: (f64, f64),
) -> Result<SensorCalibration> {
    if reference.is_empty() {
        return Err(Error::InsufficientData("empty reference profile".into()));
    }
    let step = reference
        .windows(2)
        .map(|w| w[1].time_h - w[0].time_h)
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let half = if step.is_finite() { step / 2.0 } else { 0.0 };

    let (lo, hi) = window;
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for s in samples.iter().filter(|s| s.time_h >= lo && s.time_h <= hi) {
        let k = reference.partition_point(|r| r.time_h < s.time_h);
        let nearest = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter_map(|j| reference.get(j))
            .min_by(|a, b| {
                (a.time_h - s.time_h)
                    .abs()
                    .total_cmp(&(b.time_h - s.time_h).abs())
            });
        if let Some(r) = nearest {
            if (r.time_h - s.time_h).abs() <= half + 1e-12 {
                pairs.push((s.volts, r.irradiance));
            }
        }
    }
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} aligned sample(s) in window [{lo}, {hi}], need at least 2",
            pairs.len()
        )));
    }
    if pairs.iter().all(|&(_, g)| g == 0.0) {
        return Err(Error::InsufficientData(
            "reference irradiance is zero throughout the window".into(),
        ));
    }

    let n = pairs.len() as f64;
    let mv = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mg = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mv) * (p.0 - mv)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mv) * (p.1 - mg)).sum();
    if sxx <= f64::EPSILON * mv.abs().max(1.0) * n {
        return Err(Error::DegenerateFit(
            "sensor voltage has zero variance in the window".into(),
        ));
    }
    let gain = sxy / sxx;
    if !(gain > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "fitted gain {gain} is not positive"
        )));
    }
    let offset = mg - gain * mv;
    let rss: f64 = pairs
        .iter()
        .map(|&(v, g)| {
            let r = g - (gain * v + offset);
            r * r
        })
        .sum();
    Ok(SensorCalibration {
        gain,
        offset,
        fit_residual_rms: (rss / n).sqrt(),
        pairs: pairs.len(),
    })
}
