//! Time and energy model of a LoRa sensor node.
//!
//! Each operation runs some of the phases sensing, preprocessing, prediction
//! and training on the microcontroller, then transmits a payload. Phases are
//! billed at MCU active power; airtime at radio transmit power plus MCU
//! active power (the MCU stays awake while the radio sends). The remainder of
//! the hour is billed at MCU sleep power.
//!
//! Four node configurations are compared:
//!
//! 1. on-device learning: all four phases, 20 B result
//! 2. prediction only: sensing, preprocessing, prediction, 20 B result plus
//!    the 1024 B spectrum for cloud retraining (one 1044 B payload)
//! 3. vibration sensor: sensing and preprocessing, 1024 B spectrum
//! 4. acceleration sensor: sensing only, 2048 B raw window

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OdlError, Result};

pub const RESULT_BYTES: usize = 20;
pub const SPECTRUM_BYTES: usize = 1024;
pub const RAW_WINDOW_BYTES: usize = 2048;
pub const SECONDS_PER_HOUR: f64 = 3600.0;
pub const CSV_HEADER: &str = "case,ops_per_hour,active_s,energy_mwh";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDurations {
    pub sensing: f64,
    pub preprocessing: f64,
    pub prediction: f64,
    pub training: f64,
}

impl Default for PhaseDurations {
    fn default() -> Self {
        Self {
            sensing: 0.50,
            preprocessing: 0.010,
            prediction: 4.0 * 0.004,
            training: 0.008,
        }
    }
}

/// LoRa PHY parameters for the detailed airtime formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraPhy {
    pub spreading_factor: u32,
    pub bandwidth_hz: f64,
    /// Coding rate denominator offset: 1 means 4/5 ... 4 means 4/8.
    pub coding_rate: u32,
    pub preamble_symbols: u32,
    pub explicit_header: bool,
    pub crc: bool,
    pub low_data_rate_optimize: bool,
    pub max_payload_bytes: usize,
}

impl Default for LoraPhy {
    fn default() -> Self {
        Self {
            spreading_factor: 7,
            bandwidth_hz: 125_000.0,
            coding_rate: 1,
            preamble_symbols: 8,
            explicit_header: true,
            crc: true,
            low_data_rate_optimize: false,
            max_payload_bytes: 255,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AirtimeMode {
    /// `8 * bytes / bitrate`
    #[default]
    Simplified,
    /// Symbol-level LoRa airtime with preamble and header, split into
    /// packets of at most `max_payload_bytes`.
    Detailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerProfile {
    pub mcu_active_mw: f64,
    pub mcu_sleep_mw: f64,
    pub lora_tx_mw: f64,
    pub lora_bitrate_bps: f64,
    pub phase_durations_s: PhaseDurations,
    #[serde(default)]
    pub airtime_mode: AirtimeMode,
    #[serde(default)]
    pub lora_phy: LoraPhy,
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self {
            // midpoint of 104.5..117.3 mW
            mcu_active_mw: (104.5 + 117.3) / 2.0,
            mcu_sleep_mw: 6.9,
            lora_tx_mw: 174.1,
            lora_bitrate_bps: 5470.0,
            phase_durations_s: PhaseDurations::default(),
            airtime_mode: AirtimeMode::Simplified,
            lora_phy: LoraPhy::default(),
        }
    }
}

impl PowerProfile {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mcu_active_mw", self.mcu_active_mw),
            ("mcu_sleep_mw", self.mcu_sleep_mw),
            ("lora_tx_mw", self.lora_tx_mw),
            ("lora_bitrate_bps", self.lora_bitrate_bps),
            ("phase_durations_s.sensing", self.phase_durations_s.sensing),
            ("phase_durations_s.preprocessing", self.phase_durations_s.preprocessing),
            ("phase_durations_s.prediction", self.phase_durations_s.prediction),
            ("phase_durations_s.training", self.phase_durations_s.training),
            ("lora_phy.bandwidth_hz", self.lora_phy.bandwidth_hz),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OdlError::config(format!("profile field `{name}` must be positive, got {v}")));
            }
        }
        let phy = &self.lora_phy;
        if !(6..=12).contains(&phy.spreading_factor) {
            return Err(OdlError::config("profile field `lora_phy.spreading_factor` must be in 6..=12"));
        }
        if !(1..=4).contains(&phy.coding_rate) {
            return Err(OdlError::config("profile field `lora_phy.coding_rate` must be in 1..=4"));
        }
        if phy.max_payload_bytes == 0 {
            return Err(OdlError::config("profile field `lora_phy.max_payload_bytes` must be positive"));
        }
        Ok(())
    }

    /// Loads a JSON profile. Every top-level constant is required; unknown
    /// fields are rejected. Error messages name the offending field.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| OdlError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let profile: PowerProfile = serde_path_to_error::deserialize(de).map_err(|e| {
            OdlError::config(format!("profile {}: field `{}`: {}", path.display(), e.path(), e.inner()))
        })?;
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CaseId {
    OnDeviceLearning = 1,
    PredictionOnly = 2,
    VibrationSensor = 3,
    AccelerationSensor = 4,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [
        CaseId::OnDeviceLearning,
        CaseId::PredictionOnly,
        CaseId::VibrationSensor,
        CaseId::AccelerationSensor,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn spec(self) -> CaseSpec {
        let (phases, payload_bytes) = match self {
            CaseId::OnDeviceLearning => (Phases::all(), RESULT_BYTES),
            CaseId::PredictionOnly => (
                Phases {
                    training: false,
                    ..Phases::all()
                },
                RESULT_BYTES + SPECTRUM_BYTES,
            ),
            CaseId::VibrationSensor => (
                Phases {
                    sensing: true,
                    preprocessing: true,
                    prediction: false,
                    training: false,
                },
                SPECTRUM_BYTES,
            ),
            CaseId::AccelerationSensor => (
                Phases {
                    sensing: true,
                    preprocessing: false,
                    prediction: false,
                    training: false,
                },
                RAW_WINDOW_BYTES,
            ),
        };
        CaseSpec {
            id: self,
            phases,
            payload_bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phases {
    pub sensing: bool,
    pub preprocessing: bool,
    pub prediction: bool,
    pub training: bool,
}

impl Phases {
    pub fn all() -> Self {
        Self {
            sensing: true,
            preprocessing: true,
            prediction: true,
            training: true,
        }
    }

    pub fn compute_seconds(&self, d: &PhaseDurations) -> f64 {
        [
            (self.sensing, d.sensing),
            (self.preprocessing, d.preprocessing),
            (self.prediction, d.prediction),
            (self.training, d.training),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, s)| s)
        .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: CaseId,
    pub phases: Phases,
    pub payload_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: CaseId,
    pub ops_per_hour: f64,
    pub active_seconds_per_hour: f64,
    pub energy_mwh_per_hour: f64,
    /// Active time fits in the hour.
    pub feasible: bool,
}

/// Seconds on air for `payload_bytes`.
pub fn lora_airtime(payload_bytes: i64, profile: &PowerProfile) -> Result<f64> {
    if payload_bytes < 0 {
        return Err(OdlError::invalid(format!("payload must be >= 0 bytes, got {payload_bytes}")));
    }
    let bytes = payload_bytes as usize;
    Ok(match profile.airtime_mode {
        AirtimeMode::Simplified => 8.0 * bytes as f64 / profile.lora_bitrate_bps,
        AirtimeMode::Detailed => detailed_airtime(bytes, &profile.lora_phy),
    })
}

fn packet_airtime(payload: usize, phy: &LoraPhy) -> f64 {
    let sf = phy.spreading_factor as f64;
    let t_sym = 2f64.powi(phy.spreading_factor as i32) / phy.bandwidth_hz;
    let t_preamble = (phy.preamble_symbols as f64 + 4.25) * t_sym;
    let ih = if phy.explicit_header { 0.0 } else { 1.0 };
    let crc = if phy.crc { 1.0 } else { 0.0 };
    let de = if phy.low_data_rate_optimize { 1.0 } else { 0.0 };
    let num = 8.0 * payload as f64 - 4.0 * sf + 28.0 + 16.0 * crc - 20.0 * ih;
    let den = 4.0 * (sf - 2.0 * de);
    let payload_symbols = 8.0 + ((num / den).ceil() * (phy.coding_rate as f64 + 4.0)).max(0.0);
    t_preamble + payload_symbols * t_sym
}

fn detailed_airtime(bytes: usize, phy: &LoraPhy) -> f64 {
    if bytes == 0 {
        return 0.0;
    }
    let full = bytes / phy.max_payload_bytes;
    let rest = bytes % phy.max_payload_bytes;
    let mut t = full as f64 * packet_airtime(phy.max_payload_bytes, phy);
    if rest > 0 {
        t += packet_airtime(rest, phy);
    }
    t
}

/// Active seconds and active energy (mW*s) of a single operation.
pub fn per_op_cost(case: &CaseSpec, profile: &PowerProfile) -> Result<(f64, f64)> {
    let compute = case.phases.compute_seconds(&profile.phase_durations_s);
    let air = lora_airtime(case.payload_bytes as i64, profile)?;
    let energy = compute * profile.mcu_active_mw + air * (profile.lora_tx_mw + profile.mcu_active_mw);
    Ok((compute + air, energy))
}

/// Projects one hour of operation without enforcing feasibility.
///
/// When the requested activity exceeds the hour, no sleep time remains and
/// `feasible` is false; values then describe the demanded (not achievable)
/// workload, which is what a log-scale sweep plot shows.
pub fn project_case(case: &CaseSpec, profile: &PowerProfile, ops_per_hour: f64) -> Result<CaseReport> {
    if !(ops_per_hour >= 0.0 && ops_per_hour.is_finite()) {
        return Err(OdlError::invalid(format!("ops per hour must be >= 0, got {ops_per_hour}")));
    }
    let (op_seconds, op_energy) = per_op_cost(case, profile)?;
    let active = ops_per_hour * op_seconds;
    let sleep_seconds = (SECONDS_PER_HOUR - active).max(0.0);
    let energy_mws = ops_per_hour * op_energy + sleep_seconds * profile.mcu_sleep_mw;
    Ok(CaseReport {
        case: case.id,
        ops_per_hour,
        active_seconds_per_hour: active,
        energy_mwh_per_hour: energy_mws / SECONDS_PER_HOUR,
        feasible: active <= SECONDS_PER_HOUR,
    })
}

/// Time and energy of one hour at `ops_per_hour`; errors if the operations
/// do not fit in the hour.
pub fn case_energy(case: &CaseSpec, profile: &PowerProfile, ops_per_hour: f64) -> Result<CaseReport> {
    let report = project_case(case, profile, ops_per_hour)?;
    if !report.feasible {
        return Err(OdlError::InfeasibleWorkload {
            active_seconds: report.active_seconds_per_hour,
        });
    }
    Ok(report)
}

/// One report per (case, ops) pair, case-major. Infeasible points are kept
/// (flagged) so the sweep covers the whole grid.
pub fn workload_sweep(cases: &[CaseId], profile: &PowerProfile, ops_list: &[f64]) -> Result<Vec<CaseReport>> {
    if ops_list.is_empty() {
        return Err(OdlError::invalid("workload sweep needs at least one ops value"));
    }
    profile.validate()?;
    let mut rows = Vec::with_capacity(cases.len() * ops_list.len());
    for case in cases {
        let spec = case.spec();
        for &ops in ops_list {
            rows.push(project_case(&spec, profile, ops)?);
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(mut out: W, rows: &[CaseReport]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.case.number(),
            r.ops_per_hour,
            r.active_seconds_per_hour,
            r.energy_mwh_per_hour
        )?;
    }
    out.flush()
}

/// Parameter memory of a K-instance ensemble sharing one projection:
/// `bytes_per_value * (n N + K N^2 + K N m)`.
pub fn memory_usage(n: usize, hidden: usize, m: usize, instances: usize, bytes_per_value: usize) -> Result<usize> {
    if n == 0 || hidden == 0 || m == 0 || instances == 0 || bytes_per_value == 0 {
        return Err(OdlError::invalid("memory_usage needs positive dimensions"));
    }
    Ok(bytes_per_value * (n * hidden + instances * hidden * hidden + instances * hidden * m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simplified_airtime() {
        let p = PowerProfile::default();
        assert_eq!(lora_airtime(0, &p).unwrap(), 0.0);
        assert!((lora_airtime(20, &p).unwrap() - 160.0 / 5470.0).abs() < 1e-12);
        assert!((lora_airtime(20, &p).unwrap() - 0.02925).abs() < 1e-5);
        assert!((lora_airtime(2048, &p).unwrap() - 2.9956).abs() < 1e-3);
        assert!(lora_airtime(-1, &p).is_err());
    }

    #[test]
    fn detailed_airtime_sf7() {
        let p = PowerProfile {
            airtime_mode: AirtimeMode::Detailed,
            ..Default::default()
        };
        // SF7/125 kHz, CR 4/5, 8-symbol preamble, explicit header, CRC:
        // Tsym = 1.024 ms, preamble 12.544 ms,
        // 20 B -> 8 + ceil((160 - 28 + 28 + 16) / 28) * 5 = 8 + 7 * 5 = 43 symbols.
        let t = lora_airtime(20, &p).unwrap();
        assert!((t - (12.25 + 43.0) * 1.024e-3).abs() < 1e-12, "{t}");
        // More bytes never take less time; 256 B needs a second packet.
        let a = lora_airtime(255, &p).unwrap();
        let b = lora_airtime(256, &p).unwrap();
        assert!(b > a);
        assert_eq!(lora_airtime(0, &p).unwrap(), 0.0);
    }

    #[test]
    fn idle_hour_is_sleep_only() {
        let p = PowerProfile::default();
        for case in CaseId::ALL {
            let r = case_energy(&case.spec(), &p, 0.0).unwrap();
            assert!((r.energy_mwh_per_hour - 6.9).abs() < 1e-12);
            assert_eq!(r.active_seconds_per_hour, 0.0);
        }
    }

    #[test]
    fn payloads_per_case() {
        let bytes: Vec<usize> = CaseId::ALL.iter().map(|c| c.spec().payload_bytes).collect();
        assert_eq!(bytes, vec![20, 1044, 1024, 2048]);
    }

    #[test]
    fn infeasible_workload_is_an_error() {
        let p = PowerProfile::default();
        let err = case_energy(&CaseId::AccelerationSensor.spec(), &p, 3600.0).unwrap_err();
        assert!(matches!(err, OdlError::InfeasibleWorkload { .. }));
        assert!(case_energy(&CaseId::OnDeviceLearning.spec(), &p, 3600.0).is_ok());
        assert!(project_case(&CaseId::OnDeviceLearning.spec(), &p, -1.0).is_err());
    }

    #[test]
    fn memory_formula() {
        assert_eq!(memory_usage(256, 32, 256, 4, 4).unwrap(), 180_224);
        assert_eq!(memory_usage(256, 32, 256, 4, 4).unwrap(), 176 * 1024);
        assert_eq!(memory_usage(1, 1, 1, 1, 4).unwrap(), 12);
        let k1 = memory_usage(16, 8, 16, 1, 4).unwrap();
        let k2 = memory_usage(16, 8, 16, 2, 4).unwrap();
        let shared = 4 * 16 * 8;
        assert_eq!(k2 - shared, 2 * (k1 - shared));
        assert!(memory_usage(0, 1, 1, 1, 4).is_err());
    }

    #[test]
    fn sweep_cardinality_and_csv() {
        let p = PowerProfile::default();
        let rows = workload_sweep(&CaseId::ALL, &p, &[1.0, 60.0, 3600.0]).unwrap();
        assert_eq!(rows.len(), 12);
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        assert_eq!(text.lines().count(), 13);
        assert!(workload_sweep(&CaseId::ALL, &p, &[]).is_err());
    }

    #[test]
    fn case1_slope_is_smallest() {
        let p = PowerProfile::default();
        let slope = |c: CaseId| per_op_cost(&c.spec(), &p).unwrap().1 - per_op_cost(&c.spec(), &p).unwrap().0 * p.mcu_sleep_mw;
        assert!(slope(CaseId::OnDeviceLearning) < slope(CaseId::AccelerationSensor));
        let comm = |c: CaseId| lora_airtime(c.spec().payload_bytes as i64, &p).unwrap() * (p.lora_tx_mw + p.mcu_active_mw);
        assert!(comm(CaseId::OnDeviceLearning) <= 20.0 / 1024.0 * comm(CaseId::VibrationSensor) + 1e-15);
    }

    #[test]
    fn profile_json_names_bad_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let mut v = serde_json::to_value(PowerProfile::default()).unwrap();
        v.as_object_mut().unwrap().remove("lora_tx_mw");
        std::fs::write(&path, v.to_string()).unwrap();
        let err = PowerProfile::from_json_file(&path).unwrap_err();
        assert!(err.to_string().contains("lora_tx_mw"), "{err}");

        let mut v = serde_json::to_value(PowerProfile::default()).unwrap();
        v["mcu_sleep_mw"] = serde_json::json!(-1.0);
        std::fs::write(&path, v.to_string()).unwrap();
        let err = PowerProfile::from_json_file(&path).unwrap_err();
        assert!(err.to_string().contains("mcu_sleep_mw"), "{err}");

        std::fs::write(&path, serde_json::to_string(&PowerProfile::default()).unwrap()).unwrap();
        assert_eq!(PowerProfile::from_json_file(&path).unwrap(), PowerProfile::default());
    }

    fn arb_profile() -> impl Strategy<Value = PowerProfile> {
        (50.0f64..200.0, 1.0f64..20.0, 50.0f64..300.0, 1000.0f64..20000.0, 0.01f64..1.0, 0.001f64..0.05)
            .prop_map(|(act, sleep, tx, bps, sense, other)| PowerProfile {
                mcu_active_mw: act,
                mcu_sleep_mw: sleep,
                lora_tx_mw: tx,
                lora_bitrate_bps: bps,
                phase_durations_s: PhaseDurations {
                    sensing: sense,
                    preprocessing: other,
                    prediction: other,
                    training: other,
                },
                ..Default::default()
            })
    }

    proptest! {
        #[test]
        fn energy_is_affine_in_workload(profile in arb_profile(), ops in 0.0f64..500.0) {
            for case in CaseId::ALL {
                let spec = case.spec();
                let r = project_case(&spec, &profile, ops).unwrap();
                prop_assume!(r.feasible);
                let (sec, mws) = per_op_cost(&spec, &profile).unwrap();
                let floor = profile.mcu_sleep_mw;
                let per_op = (mws - sec * profile.mcu_sleep_mw) / SECONDS_PER_HOUR;
                let expected = floor + ops * per_op;
                prop_assert!((r.energy_mwh_per_hour - expected).abs() <= 1e-9 * expected);
            }
        }

        #[test]
        fn energy_is_monotone_in_workload(profile in arb_profile(), a in 0.0f64..4000.0, b in 0.0f64..4000.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for case in CaseId::ALL {
                let spec = case.spec();
                let e_lo = project_case(&spec, &profile, lo).unwrap().energy_mwh_per_hour;
                let e_hi = project_case(&spec, &profile, hi).unwrap().energy_mwh_per_hour;
                prop_assert!(e_hi >= e_lo - 1e-12);
            }
        }
    }
}
