//! PV module model built from datasheet values only.
//!
//! The maximum power point is corrected from STC with the linear temperature
//! coefficients, a current linear in irradiance and a voltage logarithmic in
//! irradiance. The full curve uses the explicit single-exponential form
//!
//! ```text
//! I(V) = Isc' (1 - C1 (exp(V / (C2 Voc')) - 1))
//! C2   = (Vmpp/Voc - 1) / ln(1 - Impp/Isc)
//! C1   = (1 - Impp/Isc) exp(-Vmpp / (C2 Voc))
//! ```
//!
//! which passes through (0, Isc) and (Vmpp, Impp) at STC and is nearly zero
//! at Voc.

use crate::error::{Error, Result};
use crate::kv::KvDoc;

const BOLTZMANN: f64 = 1.380_649e-23;
const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
const KELVIN_OFFSET: f64 = 273.15;

/// Floor on corrected voltages, as a fraction of the STC value.
const VOLTAGE_FLOOR: f64 = 0.05;

/// Oracle scan resolution in volts.
pub const SCAN_RESOLUTION: f64 = 1e-3;

/// Single-cell thermal voltage kT/q at a cell temperature in °C.
pub fn thermal_voltage(temperature_c: f64) -> f64 {
    BOLTZMANN * (temperature_c + KELVIN_OFFSET) / ELEMENTARY_CHARGE
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelSpec {
    pub p_max: f64,
    pub efficiency: f64,
    pub v_mpp: f64,
    pub i_mpp: f64,
    pub v_oc: f64,
    pub i_sc: f64,
    /// Fraction per °C, negative.
    pub beta_voc: f64,
    /// Fraction per °C, positive.
    pub alpha_isc: f64,
    pub n_cells: u32,
    pub g_stc: f64,
    pub t_stc: f64,
}

const FIELDS: [&str; 11] = [
    "p_max",
    "efficiency",
    "v_mpp",
    "i_mpp",
    "v_oc",
    "i_sc",
    "beta_voc",
    "alpha_isc",
    "n_cells",
    "g_stc",
    "t_stc",
];

impl PanelSpec {
    /// Yingli YL150P-17B, 150 W polycrystalline, 36 cells.
    pub fn yl150p_17b() -> Self {
        PanelSpec {
            p_max: 150.0,
            efficiency: 0.15,
            v_mpp: 18.5,
            i_mpp: 8.12,
            v_oc: 22.9,
            i_sc: 8.61,
            beta_voc: -0.0037,
            alpha_isc: 0.0006,
            n_cells: 36,
            g_stc: 1000.0,
            t_stc: 25.0,
        }
    }

    pub fn validate(self) -> Result<Self> {
        let bad = |reason: String| Err(Error::invalid("panel spec", reason));
        if !(0.0 < self.v_mpp && self.v_mpp < self.v_oc) {
            return bad(format!("need 0 < v_mpp ({}) < v_oc ({})", self.v_mpp, self.v_oc));
        }
        if !(0.0 < self.i_mpp && self.i_mpp < self.i_sc) {
            return bad(format!("need 0 < i_mpp ({}) < i_sc ({})", self.i_mpp, self.i_sc));
        }
        if !(self.p_max > 0.0) || ((self.v_mpp * self.i_mpp - self.p_max) / self.p_max).abs() >= 0.02 {
            return bad(format!(
                "v_mpp * i_mpp = {} differs from p_max = {} by 2% or more",
                self.v_mpp * self.i_mpp,
                self.p_max
            ));
        }
        if !(self.beta_voc < 0.0 && self.alpha_isc > 0.0) {
            return bad("need beta_voc < 0 < alpha_isc".into());
        }
        if self.n_cells == 0 || !(self.g_stc > 0.0) {
            return bad("n_cells and g_stc must be positive".into());
        }
        Ok(self)
    }

    /// Reads `key = value` lines with the field names of this struct. Keys
    /// that are absent keep the YL150P-17B value.
    pub fn from_kv(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let mut r = doc.reader("");
        let d = PanelSpec::yl150p_17b();
        let spec = PanelSpec {
            p_max: r.or("p_max", d.p_max)?,
            efficiency: r.or("efficiency", d.efficiency)?,
            v_mpp: r.or("v_mpp", d.v_mpp)?,
            i_mpp: r.or("i_mpp", d.i_mpp)?,
            v_oc: r.or("v_oc", d.v_oc)?,
            i_sc: r.or("i_sc", d.i_sc)?,
            beta_voc: r.or("beta_voc", d.beta_voc)?,
            alpha_isc: r.or("alpha_isc", d.alpha_isc)?,
            n_cells: r.or("n_cells", d.n_cells)?,
            g_stc: r.or("g_stc", d.g_stc)?,
            t_stc: r.or("t_stc", d.t_stc)?,
        };
        r.finish(&[])?;
        spec.validate()
    }

    pub fn to_kv(&self) -> String {
        let values = [
            self.p_max,
            self.efficiency,
            self.v_mpp,
            self.i_mpp,
            self.v_oc,
            self.i_sc,
            self.beta_voc,
            self.alpha_isc,
            self.n_cells as f64,
            self.g_stc,
            self.t_stc,
        ];
        FIELDS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    fn c2(&self) -> f64 {
        (self.v_mpp / self.v_oc - 1.0) / (1.0 - self.i_mpp / self.i_sc).ln()
    }

    fn c1(&self) -> f64 {
        (1.0 - self.i_mpp / self.i_sc) * (-self.v_mpp / (self.c2() * self.v_oc)).exp()
    }

    fn delta_t(&self, env: &EnvCondition) -> f64 {
        env.temperature - self.t_stc
    }

    /// Voltage shift from irradiance, `n_cells * Vt * ln(G/Gstc)`.
    fn log_irradiance_term(&self, env: &EnvCondition) -> f64 {
        self.n_cells as f64 * thermal_voltage(env.temperature) * (env.irradiance / self.g_stc).ln()
    }

    fn current_scale(&self, env: &EnvCondition) -> f64 {
        (env.irradiance / self.g_stc) * (1.0 + self.alpha_isc * self.delta_t(env))
    }

    /// Short-circuit current corrected for irradiance and temperature.
    pub fn i_sc_at(&self, env: &EnvCondition) -> f64 {
        self.i_sc * self.current_scale(env)
    }

    /// Open-circuit voltage corrected for irradiance and temperature.
    pub fn v_oc_at(&self, env: &EnvCondition) -> f64 {
        let v = if env.irradiance > 0.0 {
            self.v_oc * (1.0 + self.beta_voc * self.delta_t(env)) + self.log_irradiance_term(env)
        } else {
            f64::NEG_INFINITY
        };
        v.max(VOLTAGE_FLOOR * self.v_oc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvCondition {
    /// W/m².
    pub irradiance: f64,
    /// Cell temperature, °C.
    pub temperature: f64,
}

impl EnvCondition {
    pub fn new(irradiance: f64, temperature: f64) -> Result<Self> {
        if !(irradiance >= 0.0 && irradiance.is_finite()) {
            return Err(Error::Domain {
                what: "irradiance",
                value: irradiance,
                bound: ">= 0",
            });
        }
        if !(-40.0..=100.0).contains(&temperature) {
            return Err(Error::Domain {
                what: "temperature",
                value: temperature,
                bound: "[-40, 100] °C",
            });
        }
        Ok(EnvCondition {
            irradiance,
            temperature,
        })
    }

    pub fn stc() -> Self {
        EnvCondition {
            irradiance: 1000.0,
            temperature: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerPoint {
    pub v: f64,
    pub i: f64,
    pub p: f64,
}

/// Maximum power point from the datasheet correction model.
pub fn mpp_estimate(spec: &PanelSpec, env: &EnvCondition) -> PowerPoint {
    let floor = VOLTAGE_FLOOR * spec.v_mpp;
    if env.irradiance <= 0.0 {
        return PowerPoint {
            v: floor,
            i: 0.0,
            p: 0.0,
        };
    }
    let i = spec.i_mpp * spec.current_scale(env);
    let v = (spec.v_mpp * (1.0 + spec.beta_voc * spec.delta_t(env)) + spec.log_irradiance_term(env))
        .max(floor);
    PowerPoint { v, i, p: v * i }
}

/// The explicit I-V curve at one environment condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvCurve {
    i_sc: f64,
    v_oc: f64,
    c1: f64,
    c2: f64,
}

impl IvCurve {
    pub fn new(spec: &PanelSpec, env: &EnvCondition) -> Self {
        IvCurve {
            i_sc: spec.i_sc_at(env),
            v_oc: spec.v_oc_at(env),
            c1: spec.c1(),
            c2: spec.c2(),
        }
    }

    pub fn i_sc(&self) -> f64 {
        self.i_sc
    }

    pub fn v_oc(&self) -> f64 {
        self.v_oc
    }

    pub fn current(&self, v: f64) -> f64 {
        let i = self.i_sc * (1.0 - self.c1 * ((v / (self.c2 * self.v_oc)).exp() - 1.0));
        i.max(0.0)
    }

    /// Brute-force maximum of V*I(V) over [0, Voc'] at 1 mV; ties go to the
    /// lower voltage.
    pub fn scan_mpp(&self) -> PowerPoint {
        let steps = (self.v_oc / SCAN_RESOLUTION).floor() as usize;
        let mut best = PowerPoint::default();
        for k in 0..=steps {
            let v = k as f64 * SCAN_RESOLUTION;
            let i = self.current(v);
            let p = v * i;
            if p > best.p {
                best = PowerPoint { v, i, p };
            }
        }
        best
    }
}

pub fn iv_current(spec: &PanelSpec, env: &EnvCondition, v: f64) -> f64 {
    IvCurve::new(spec, env).current(v)
}

pub fn mpp_solve(spec: &PanelSpec, env: &EnvCondition) -> PowerPoint {
    IvCurve::new(spec, env).scan_mpp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> PanelSpec {
        PanelSpec::yl150p_17b()
    }

    #[test]
    fn stc_reproduces_datasheet() {
        let m = mpp_estimate(&spec(), &EnvCondition::stc());
        assert_eq!(m.v, 18.5);
        assert_eq!(m.i, 8.12);
        assert!((m.p - 150.22).abs() < 1e-9);
    }

    #[test]
    fn half_sun() {
        let env = EnvCondition::new(500.0, 25.0).unwrap();
        let m = mpp_estimate(&spec(), &env);
        assert!((m.i - 4.06).abs() < 1e-12);
        // Vt(298.15 K) = 0.025693 V by hand; 18.5 + 36 * 0.025693 * ln 0.5
        assert!((thermal_voltage(25.0) - 0.0256926).abs() < 1e-6);
        assert!((m.v - 17.858885).abs() < 1e-5, "{}", m.v);
    }

    #[test]
    fn hot_cell() {
        let env = EnvCondition::new(1000.0, 35.0).unwrap();
        let m = mpp_estimate(&spec(), &env);
        assert!((m.v - 17.8155).abs() < 1e-9, "{}", m.v);
    }

    #[test]
    fn dark_panel_gives_zero_power_at_floor_voltage() {
        let env = EnvCondition::new(0.0, 25.0).unwrap();
        let m = mpp_estimate(&spec(), &env);
        assert_eq!(m.i, 0.0);
        assert_eq!(m.p, 0.0);
        assert!((m.v - 0.925).abs() < 1e-12);
        assert_eq!(mpp_solve(&spec(), &env).p, 0.0);
    }

    #[test]
    fn env_validation() {
        assert!(EnvCondition::new(-1.0, 25.0).is_err());
        assert!(EnvCondition::new(100.0, 120.0).is_err());
        assert!(EnvCondition::new(f64::NAN, 25.0).is_err());
    }

    #[test]
    fn curve_anchors_at_stc() {
        let c = IvCurve::new(&spec(), &EnvCondition::stc());
        assert_eq!(c.current(0.0), 8.61);
        assert!(((c.current(18.5) - 8.12) / 8.12).abs() < 0.005);
        assert!(c.current(22.9) <= 0.02 * 8.61);
    }

    #[test]
    fn oracle_at_stc() {
        // Brute-force scan evaluated independently: 150.713 W at 18.924 V.
        let m = mpp_solve(&spec(), &EnvCondition::stc());
        assert!(((m.p - 150.2) / 150.2).abs() < 0.01, "{m:?}");
        assert!((m.v - 18.924).abs() < 2e-3, "{m:?}");
    }

    #[test]
    fn oracle_beats_every_scanned_voltage() {
        let env = EnvCondition::new(640.0, 41.0).unwrap();
        let c = IvCurve::new(&spec(), &env);
        let m = c.scan_mpp();
        let mut v = 0.0;
        while v <= c.v_oc() {
            assert!(m.p >= v * c.current(v));
            v += 0.0137;
        }
    }

    #[test]
    fn spec_validation_and_kv() {
        let s = spec();
        let back = PanelSpec::from_kv(&s.to_kv()).unwrap();
        assert_eq!(back, s);
        assert!(PanelSpec::from_kv("v_mpp = 30\n").is_err());
        assert!(matches!(
            PanelSpec::from_kv("vmpp = 18\n"),
            Err(Error::UnknownKey(_))
        ));
        let odd = PanelSpec {
            p_max: 200.0,
            ..s
        };
        assert!(odd.validate().is_err());
    }

    #[test]
    fn estimate_and_oracle_agree_in_dataset_envelope() {
        let s = spec();
        for g in (200..=1000).step_by(50) {
            for t in [5.0, 15.0, 25.0, 35.0, 45.0, 55.0, 61.0] {
                let env = EnvCondition::new(g as f64, t).unwrap();
                let a = mpp_estimate(&s, &env).p;
                let b = mpp_solve(&s, &env).p;
                assert!(((a - b) / b).abs() < 0.05, "G={g} T={t}: {a} vs {b}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn curve_is_non_increasing(g in 50.0f64..1200.0, t in -10.0f64..80.0) {
            let env = EnvCondition::new(g, t).unwrap();
            let c = IvCurve::new(&spec(), &env);
            let top = 1.2 * c.v_oc();
            let mut prev = c.current(0.0);
            for k in 1..=1000 {
                let i = c.current(top * k as f64 / 1000.0);
                prop_assert!(i <= prev);
                prev = i;
            }
        }
    }

    proptest! {
        #[test]
        fn power_rises_with_irradiance(g1 in 100.0f64..1000.0, dg in 1.0f64..200.0, t in 5.0f64..61.0) {
            let s = spec();
            let a = mpp_estimate(&s, &EnvCondition::new(g1, t).unwrap()).p;
            let b = mpp_estimate(&s, &EnvCondition::new(g1 + dg, t).unwrap()).p;
            prop_assert!(b > a);
        }

        #[test]
        fn temperature_lowers_voltage_raises_current(g in 100.0f64..1000.0, t in 5.0f64..60.0, dt in 0.5f64..20.0) {
            let s = spec();
            let a = mpp_estimate(&s, &EnvCondition::new(g, t).unwrap());
            let b = mpp_estimate(&s, &EnvCondition::new(g, t + dt).unwrap());
            prop_assert!(b.v < a.v);
            prop_assert!(b.i > a.i);
        }
    }
}
