//! RRAM cell read-endurance physics.
//!
//! A read (spike) stresses the cell with the voltage it sees. A cell in the
//! high-resistance state loses it once the vertical filament gap closes; a
//! cell in a low-resistance state loses it through lateral filament growth.
//! Endurance is the transition time expressed in spike durations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-bit synapse encoding: one high-resistance state and three low ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResistanceState {
    Hrs,
    Lrs1,
    Lrs2,
    Lrs3,
}

impl ResistanceState {
    pub const ALL: [ResistanceState; 4] = [Self::Hrs, Self::Lrs1, Self::Lrs2, Self::Lrs3];

    pub fn is_hrs(self) -> bool {
        self == Self::Hrs
    }

    /// Quantization level, 0 (HRS) through 3.
    pub fn level(self) -> u8 {
        match self {
            Self::Hrs => 0,
            Self::Lrs1 => 1,
            Self::Lrs2 => 2,
            Self::Lrs3 => 3,
        }
    }

    pub fn from_level(level: u8) -> Self {
        match level {
            0 => Self::Hrs,
            1 => Self::Lrs1,
            2 => Self::Lrs2,
            _ => Self::Lrs3,
        }
    }
}

/// Constants of the filament-gap dynamics governing HRS retention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrsModelParams {
    /// Attempt velocity, m/s.
    pub nu0: f64,
    /// Activation energy, eV.
    #[serde(rename = "Ea")]
    pub ea: f64,
    /// Atomic hopping distance, m.
    pub a0: f64,
    /// Oxide thickness, m.
    #[serde(rename = "L")]
    pub l: f64,
    pub gamma0: f64,
    pub beta: f64,
    /// Initial filament gap, m.
    pub g0: f64,
    /// Gap at which the cell has left HRS, m.
    pub g_min: f64,
    /// Electron charge over Boltzmann constant, K/V.
    pub q_over_k: f64,
}

impl Default for HrsModelParams {
    /// Calibrated so that HRS endurance stays below LRS endurance over
    /// 0.3 V..1.2 V and lies within one decade of it at 0.57 V, 25 °C.
    fn default() -> Self {
        Self {
            nu0: 1.2e7,
            ea: 1.3,
            a0: 0.25e-9,
            l: 5e-9,
            gamma0: 18.5,
            beta: 1.0,
            g0: 1.7e-9,
            g_min: 0.1e-9,
            q_over_k: 11_604.518,
        }
    }
}

impl HrsModelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu0", self.nu0),
            ("a0", self.a0),
            ("L", self.l),
            ("g0", self.g0),
            ("g_min", self.g_min),
            ("gamma0", self.gamma0),
            ("q_over_k", self.q_over_k),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Model(format!("{name} must be positive, got {value}")));
            }
        }
        if !self.ea.is_finite() || !self.beta.is_finite() {
            return Err(Error::Model("Ea and beta must be finite".into()));
        }
        if self.g_min >= self.g0 {
            return Err(Error::Model(format!(
                "g_min ({}) must be below g0 ({})",
                self.g_min, self.g0
            )));
        }
        Ok(())
    }

    /// Local field-enhancement factor at gap `g`.
    pub fn gamma(&self, g: f64) -> f64 {
        let x = g / self.g0;
        self.gamma0 - self.beta * x * x * x
    }

    /// Closing speed of the filament gap (the magnitude of dg/dt) in m/s.
    pub fn gap_closing_rate(&self, g: f64, v: f64, temp_k: f64) -> f64 {
        let thermal = (-self.ea * self.q_over_k / temp_k).exp();
        let field = self.gamma(g) * self.a0 / self.l * v * self.q_over_k / temp_k;
        self.nu0 * thermal * field.sinh()
    }
}

/// `t = 10^(slope * v + intercept)` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrsModelParams {
    pub slope: f64,
    pub intercept: f64,
}

impl Default for LrsModelParams {
    fn default() -> Self {
        Self {
            slope: -14.7,
            intercept: 6.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeDuration {
    /// Seconds.
    pub duration: f64,
}

impl Default for SpikeDuration {
    fn default() -> Self {
        Self { duration: 1e-3 }
    }
}

/// Everything the endurance computation needs about the device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub hrs: HrsModelParams,
    pub lrs: LrsModelParams,
    pub spike: SpikeDuration,
    /// Longest HRS transition the integrator will follow, seconds.
    pub horizon: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            hrs: HrsModelParams::default(),
            lrs: LrsModelParams::default(),
            spike: SpikeDuration::default(),
            horizon: 1e12,
        }
    }
}

/// Flat key-value view of [`DeviceParams`]; absent keys keep their defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceParamsFile {
    nu0: Option<f64>,
    #[serde(rename = "Ea")]
    ea: Option<f64>,
    a0: Option<f64>,
    #[serde(rename = "L")]
    l: Option<f64>,
    gamma0: Option<f64>,
    beta: Option<f64>,
    g0: Option<f64>,
    g_min: Option<f64>,
    q_over_k: Option<f64>,
    slope: Option<f64>,
    intercept: Option<f64>,
    duration: Option<f64>,
    horizon: Option<f64>,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        self.hrs.validate()?;
        if !(self.lrs.slope.is_finite() && self.lrs.intercept.is_finite()) {
            return Err(Error::Model("LRS slope and intercept must be finite".into()));
        }
        if !(self.spike.duration.is_finite() && self.spike.duration > 0.0) {
            return Err(Error::Model(format!(
                "spike duration must be positive, got {}",
                self.spike.duration
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Model("integration horizon must be positive".into()));
        }
        Ok(())
    }

    /// Parses the flat `key = value` device-parameter format.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: DeviceParamsFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("device parameters: {e}")))?;
        let mut p = DeviceParams::default();
        let h = &mut p.hrs;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(h.nu0, file.nu0);
        set!(h.ea, file.ea);
        set!(h.a0, file.a0);
        set!(h.l, file.l);
        set!(h.gamma0, file.gamma0);
        set!(h.beta, file.beta);
        set!(h.g0, file.g0);
        set!(h.g_min, file.g_min);
        set!(h.q_over_k, file.q_over_k);
        set!(p.lrs.slope, file.slope);
        set!(p.lrs.intercept, file.intercept);
        set!(p.spike.duration, file.duration);
        set!(p.horizon, file.horizon);
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Renders the parameters in the same flat format [`Self::load`] reads.
    pub fn to_toml_string(&self) -> String {
        let h = &self.hrs;
        format!(
            "nu0 = {:e}\nEa = {:?}\na0 = {:e}\nL = {:e}\ngamma0 = {:?}\nbeta = {:?}\n\
             g0 = {:e}\ng_min = {:e}\nq_over_k = {:?}\nslope = {:?}\nintercept = {:?}\n\
             duration = {:e}\nhorizon = {:e}\n",
            h.nu0,
            h.ea,
            h.a0,
            h.l,
            h.gamma0,
            h.beta,
            h.g0,
            h.g_min,
            h.q_over_k,
            self.lrs.slope,
            self.lrs.intercept,
            self.spike.duration,
            self.horizon,
        )
    }
}

fn check_voltage(v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("cell voltage must be positive and finite, got {v}")))
    }
}

/// LRS retention time in seconds at cell voltage `v`.
pub fn lrs_transition_time(v: f64, p: &LrsModelParams) -> Result<f64> {
    check_voltage(v)?;
    Ok(10f64.powf(p.slope * v + p.intercept))
}

/// Outcome of integrating the HRS filament-gap dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HrsTransition {
    /// The gap reached `g_min` after this many seconds.
    Reached(f64),
    /// The gap was still open when the integration horizon ran out.
    ExceedsHorizon(f64),
}

impl HrsTransition {
    /// Transition time, saturated at the horizon.
    pub fn seconds(self) -> f64 {
        match self {
            HrsTransition::Reached(t) | HrsTransition::ExceedsHorizon(t) => t,
        }
    }

    pub fn exceeds_horizon(self) -> bool {
        matches!(self, HrsTransition::ExceedsHorizon(_))
    }
}

const MAX_GAP_CHANGE: f64 = 0.01;

/// Integrates dg/dt from `g0` down to `g_min` with classical RK4.
///
/// A step is halved whenever it would move the gap by more than 1 %; it is
/// doubled again once steps become small. The crossing of `g_min` is located
/// by linear interpolation inside the final step.
pub fn hrs_transition_time(
    v: f64,
    temp_k: f64,
    p: &HrsModelParams,
    horizon: f64,
) -> Result<HrsTransition> {
    check_voltage(v)?;
    if !(temp_k.is_finite() && temp_k > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive kelvin, got {temp_k}")));
    }
    p.validate()?;

    let rate0 = p.gap_closing_rate(p.g0, v, temp_k);
    if !(rate0 > 0.0) {
        if p.gamma(p.g0) <= 0.0 || rate0.is_nan() {
            return Err(Error::Model(format!(
                "filament gap does not close at g0 (gamma = {}, v = {v})",
                p.gamma(p.g0)
            )));
        }
        // exp(-Ea/kT) underflowed: the gap is effectively frozen
        return Ok(HrsTransition::ExceedsHorizon(horizon));
    }
    if !rate0.is_finite() {
        return Err(Error::Numerical(format!("gap closing rate overflowed at v = {v}")));
    }

    let f = |g: f64| -p.gap_closing_rate(g, v, temp_k);
    let mut g = p.g0;
    let mut t = 0.0;
    let mut dt = MAX_GAP_CHANGE * p.g0 / rate0;

    loop {
        if t >= horizon {
            return Ok(HrsTransition::ExceedsHorizon(horizon));
        }
        let k1 = f(g);
        let k2 = f(g + 0.5 * dt * k1);
        let k3 = f(g + 0.5 * dt * k2);
        let k4 = f(g + dt * k3);
        let next = g + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() {
            return Err(Error::Numerical(format!("gap integration diverged at t = {t}")));
        }
        let change = (g - next).abs() / g;
        if change > MAX_GAP_CHANGE {
            dt *= 0.5;
            continue;
        }
        if next <= p.g_min {
            return Ok(HrsTransition::Reached(t + dt * (g - p.g_min) / (g - next)));
        }
        if next >= g {
            // a non-closing gap below g0; gamma turned non-positive part way
            return Err(Error::Model(format!("filament gap stalled at g = {g:e} m")));
        }
        g = next;
        t += dt;
        if change < 0.25 * MAX_GAP_CHANGE {
            dt *= 2.0;
        }
    }
}

/// Read endurance in spikes: transition time over spike duration.
///
/// The three LRS levels share one law. LRS endurance has no temperature term.
pub fn read_endurance(
    state: ResistanceState,
    v: f64,
    temp_k: f64,
    params: &DeviceParams,
) -> Result<f64> {
    let seconds = if state.is_hrs() {
        hrs_transition_time(v, temp_k, &params.hrs, params.horizon)?.seconds()
    } else {
        lrs_transition_time(v, &params.lrs)?
    };
    Ok(seconds / params.spike.duration)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROOM: f64 = 298.15;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    /// Composite Simpson quadrature of dt = dg / rate(g); independent of the RK4 path.
    fn quadrature_time(v: f64, temp_k: f64, p: &HrsModelParams) -> f64 {
        let n = 20_000;
        let h = (p.g0 - p.g_min) / n as f64;
        let inv = |g: f64| 1.0 / p.gap_closing_rate(g, v, temp_k);
        let mut acc = inv(p.g_min) + inv(p.g0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * inv(p.g_min + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn lrs_examples() {
        let p = LrsModelParams::default();
        let t = lrs_transition_time(0.408, &p).unwrap();
        assert!(rel(t, 10f64.powf(-14.7 * 0.408 + 6.7)) < 1e-15);
        assert!((t - 5.04).abs() < 0.01, "{t}");
        let t = lrs_transition_time(0.57, &p).unwrap();
        assert!((t - 0.0209).abs() < 1e-4, "{t}");
        let flat = LrsModelParams {
            slope: 0.0,
            intercept: 0.0,
        };
        assert_eq!(lrs_transition_time(3.3, &flat).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_voltage() {
        let p = LrsModelParams::default();
        for v in [0.0, -0.1, f64::NAN, f64::INFINITY] {
            assert!(matches!(lrs_transition_time(v, &p), Err(Error::Domain(_))));
        }
        let h = HrsModelParams::default();
        assert!(matches!(hrs_transition_time(0.5, 0.0, &h, 1e12), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_rate_closed_form() {
        let p = HrsModelParams {
            beta: 0.0,
            ..Default::default()
        };
        for v in [0.3, 0.57, 1.0] {
            let t = hrs_transition_time(v, ROOM, &p, 1e12).unwrap().seconds();
            let x = p.gamma0 * p.a0 * p.q_over_k * v / (p.l * ROOM);
            let closed = (p.g0 - p.g_min) * (p.ea * p.q_over_k / ROOM).exp() / (p.nu0 * x.sinh());
            assert!(rel(t, closed) < 1e-3, "v={v}: {t} vs {closed}");
        }
    }

    #[test]
    fn matches_quadrature_with_feedback() {
        let p = HrsModelParams::default();
        for v in [0.3, 0.57, 0.9, 1.2] {
            for temp in [273.15, ROOM, 350.0] {
                let t = hrs_transition_time(v, temp, &p, 1e30).unwrap().seconds();
                let q = quadrature_time(v, temp, &p);
                assert!(rel(t, q) < 1e-4, "v={v} T={temp}: {t} vs {q}");
            }
        }
    }

    #[test]
    fn hrs_below_lrs_at_reference_corner() {
        let d = DeviceParams::default();
        let h = read_endurance(ResistanceState::Hrs, 0.57, ROOM, &d).unwrap();
        let l = read_endurance(ResistanceState::Lrs2, 0.57, ROOM, &d).unwrap();
        assert!(h < l);
        assert!(l / h < 10.0, "HRS {h} vs LRS {l}");
    }

    #[test]
    fn non_closing_gap_is_a_model_error() {
        let p = HrsModelParams {
            gamma0: 1.0,
            beta: 2.0,
            ..Default::default()
        };
        assert!(matches!(hrs_transition_time(0.5, ROOM, &p, 1e12), Err(Error::Model(_))));
    }

    #[test]
    fn saturates_at_horizon() {
        let p = HrsModelParams::default();
        let r = hrs_transition_time(0.3, ROOM, &p, 1e-6).unwrap();
        assert!(r.exceeds_horizon());
        assert_eq!(r.seconds(), 1e-6);
    }

    #[test]
    fn endurance_examples() {
        let d = DeviceParams::default();
        let e = read_endurance(ResistanceState::Lrs1, 0.408, ROOM, &d).unwrap();
        assert!(rel(e, 5040.0) < 0.01, "{e}");
        let e = read_endurance(ResistanceState::Lrs3, 0.57, ROOM, &d).unwrap();
        assert!((e - 21.0).abs() < 0.5, "{e}");
        let slow = DeviceParams {
            spike: SpikeDuration { duration: 2e-3 },
            ..d
        };
        for s in ResistanceState::ALL {
            let a = read_endurance(s, 0.6, ROOM, &d).unwrap();
            let b = read_endurance(s, 0.6, ROOM, &slow).unwrap();
            assert!(rel(b, a / 2.0) < 1e-12);
        }
    }

    #[test]
    fn lrs_levels_share_one_law() {
        let d = DeviceParams::default();
        let e1 = read_endurance(ResistanceState::Lrs1, 0.5, ROOM, &d).unwrap();
        let e3 = read_endurance(ResistanceState::Lrs3, 0.5, 350.0, &d).unwrap();
        assert_eq!(e1, e3);
    }

    #[test]
    fn param_file_overrides_and_rejects_unknown_keys() {
        let p = DeviceParams::from_toml_str("Ea = 1.1\nslope = -12.0\nduration = 2e-3\n").unwrap();
        assert_eq!(p.hrs.ea, 1.1);
        assert_eq!(p.lrs.slope, -12.0);
        assert_eq!(p.spike.duration, 2e-3);
        assert_eq!(p.hrs.g0, HrsModelParams::default().g0);
        assert!(DeviceParams::from_toml_str("gamma = 3.0\n").is_err());
        assert!(DeviceParams::from_toml_str("g_min = 5e-9\n").is_err());

        let d = DeviceParams::default();
        assert_eq!(DeviceParams::from_toml_str(&d.to_toml_string()).unwrap(), d);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn transition_times_fall_with_voltage(v1 in 0.3f64..1.2, dv in 0.01f64..0.5) {
                let v2 = v1 + dv;
                let l = LrsModelParams::default();
                prop_assert!(lrs_transition_time(v2, &l).unwrap() < lrs_transition_time(v1, &l).unwrap());
                let h = HrsModelParams::default();
                let t1 = hrs_transition_time(v1, ROOM, &h, 1e30).unwrap().seconds();
                let t2 = hrs_transition_time(v2, ROOM, &h, 1e30).unwrap().seconds();
                prop_assert!(t2 < t1);
            }

            #[test]
            fn hrs_falls_with_temperature(v in 0.3f64..1.2, t1 in 273.15f64..360.0, dt in 1.0f64..20.0) {
                let h = HrsModelParams::default();
                let a = hrs_transition_time(v, t1, &h, 1e30).unwrap().seconds();
                let b = hrs_transition_time(v, t1 + dt, &h, 1e30).unwrap().seconds();
                prop_assert!(b < a);
            }

            #[test]
            fn hrs_endurance_below_lrs_in_operating_range(v in 0.3f64..=1.2) {
                let d = DeviceParams::default();
                let h = read_endurance(ResistanceState::Hrs, v, ROOM, &d).unwrap();
                let l = read_endurance(ResistanceState::Lrs1, v, ROOM, &d).unwrap();
                prop_assert!(h < l, "v={} hrs={} lrs={}", v, h, l);
            }

            #[test]
            fn endurance_homogeneous_in_spike_duration(v in 0.3f64..1.2, k in 0.1f64..10.0) {
                let d = DeviceParams::default();
                let scaled = DeviceParams { spike: SpikeDuration { duration: d.spike.duration * k }, ..d };
                for s in [ResistanceState::Hrs, ResistanceState::Lrs2] {
                    let a = read_endurance(s, v, ROOM, &d).unwrap();
                    let b = read_endurance(s, v, ROOM, &scaled).unwrap();
                    prop_assert!(((b * k - a) / a).abs() < 1e-12);
                }
            }
        }
    }
}
