//! Synthetic 13-channel powertrain test-bench data.
//!
//! A drive-cycle speed profile ([`gen_cycle`]) is pushed through a
//! first-order vehicle model ([`simulate`]) at 10 Hz. Fast channels are
//! logged at 10 Hz, thermal channels and SoC at 1 Hz, and everything is
//! resampled to [`OUTPUT_RATE`]. Anomalies are injected by perturbing the
//! plant or the speed sensor, never by editing the output.

mod cycle;
mod vehicle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::GroundTruth;
use crate::preprocess::{assemble_sequence, Sequence};
use crate::rng::{derive_stream, SeedRng};

pub use cycle::*;
pub use vehicle::*;

/// Rate of the assembled sequences (Hz).
pub const OUTPUT_RATE: f64 = 2.0;

pub const CHANNEL_NAMES: [&str; 13] = [
    "vehicle_speed",
    "edu_torque",
    "left_axle_torque",
    "right_axle_torque",
    "edu_current",
    "edu_voltage",
    "hvb_current",
    "hvb_voltage",
    "hvb_temperature",
    "hvb_soc",
    "edu_rotor_temperature",
    "edu_stator_temperature",
    "inverter_temperature",
];

pub fn channel_names() -> Vec<String> {
    CHANNEL_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    WheelDiameter,
    RecuperationOff,
    BatterySimulator,
    CoolingLoss,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 4] = [
        AnomalyKind::WheelDiameter,
        AnomalyKind::RecuperationOff,
        AnomalyKind::BatterySimulator,
        AnomalyKind::CoolingLoss,
    ];

    /// Channels (indices into [`CHANNEL_NAMES`]) the anomaly is visible in.
    pub fn root_cause_channels(self) -> Vec<usize> {
        match self {
            AnomalyKind::WheelDiameter => vec![0],
            AnomalyKind::RecuperationOff => vec![1, 2, 3, 9],
            AnomalyKind::BatterySimulator => vec![4, 5, 6, 7],
            AnomalyKind::CoolingLoss => vec![10, 11, 12],
        }
    }

    /// Magnitude at which the injector is a no-op.
    pub fn neutral_magnitude(self) -> f64 {
        match self {
            AnomalyKind::WheelDiameter => 1.0,
            AnomalyKind::RecuperationOff => 1.0,
            AnomalyKind::BatterySimulator => 0.0,
            AnomalyKind::CoolingLoss => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::WheelDiameter => "wheel_diameter",
            AnomalyKind::RecuperationOff => "recuperation_off",
            AnomalyKind::BatterySimulator => "battery_simulator",
            AnomalyKind::CoolingLoss => "cooling_loss",
        }
    }
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown anomaly type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Onset {
    Start,
    Midpoint,
}

/// What to inject and how strongly.
///
/// Magnitude meaning per kind: wheel diameter factor on reported speed;
/// fraction of regenerative torque left; blend towards the battery
/// simulator; cooling conductance factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub kind: AnomalyKind,
    pub onset: Onset,
    pub magnitude: f64,
}

impl AnomalySpec {
    pub fn new(kind: AnomalyKind, onset: Onset, magnitude: f64) -> Result<Self> {
        let spec = Self { kind, onset, magnitude };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.onset == Onset::Midpoint && self.kind != AnomalyKind::CoolingLoss {
            return Err(Error::InvalidArgument(format!(
                "{} only supports onset at start",
                self.kind
            )));
        }
        let m = self.magnitude;
        let ok = match self.kind {
            AnomalyKind::WheelDiameter => m > 0.0 && m.is_finite(),
            AnomalyKind::RecuperationOff | AnomalyKind::BatterySimulator => (0.0..=1.0).contains(&m),
            AnomalyKind::CoolingLoss => m > 0.0 && m <= 1.0,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "{} magnitude {m} out of range",
                self.kind
            )));
        }
        Ok(())
    }

    /// Plant modifications for a run of `len` output steps.
    pub fn effects(&self, len: usize) -> Effects {
        let mut fx = Effects::default();
        match self.kind {
            AnomalyKind::WheelDiameter => fx.wheel_factor = self.magnitude,
            AnomalyKind::RecuperationOff => fx.regen_fraction = self.magnitude,
            AnomalyKind::BatterySimulator => fx.battery_blend = self.magnitude,
            AnomalyKind::CoolingLoss => {
                fx.cooling_factor = self.magnitude;
                fx.cooling_onset = match self.onset {
                    Onset::Start => 0.0,
                    Onset::Midpoint => midpoint(len) as f64 / OUTPUT_RATE,
                };
            }
        }
        fx
    }

    pub fn ground_truth(&self, len: usize) -> GroundTruth {
        let rc = self.kind.root_cause_channels();
        match self.onset {
            Onset::Start => GroundTruth::ts_anomaly(len, rc),
            Onset::Midpoint => GroundTruth::subseq_anomaly(len, midpoint(len), len - 1, rc),
        }
    }
}

fn midpoint(len: usize) -> usize {
    len / 2
}

/// Default injector strengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Magnitudes {
    pub wheel_diameter: f64,
    pub recuperation_off: f64,
    pub battery_simulator: f64,
    pub cooling_loss: f64,
}

impl Default for Magnitudes {
    fn default() -> Self {
        Self {
            wheel_diameter: 1.15,
            recuperation_off: 0.0,
            battery_simulator: 1.0,
            cooling_loss: 0.3,
        }
    }
}

impl Magnitudes {
    pub fn get(&self, kind: AnomalyKind) -> f64 {
        match kind {
            AnomalyKind::WheelDiameter => self.wheel_diameter,
            AnomalyKind::RecuperationOff => self.recuperation_off,
            AnomalyKind::BatterySimulator => self.battery_simulator,
            AnomalyKind::CoolingLoss => self.cooling_loss,
        }
    }
}

/// Test anomalies per cycle class and kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyCounts {
    pub wheel_diameter: usize,
    pub recuperation_off: usize,
    pub battery_simulator: usize,
    pub cooling_loss: usize,
}

impl Default for AnomalyCounts {
    fn default() -> Self {
        Self {
            wheel_diameter: 2,
            recuperation_off: 1,
            battery_simulator: 2,
            cooling_loss: 1,
        }
    }
}

impl AnomalyCounts {
    pub fn get(&self, kind: AnomalyKind) -> usize {
        match kind {
            AnomalyKind::WheelDiameter => self.wheel_diameter,
            AnomalyKind::RecuperationOff => self.recuperation_off,
            AnomalyKind::BatterySimulator => self.battery_simulator,
            AnomalyKind::CoolingLoss => self.cooling_loss,
        }
    }

    pub fn per_class(&self) -> usize {
        AnomalyKind::ALL.iter().map(|k| self.get(*k)).sum()
    }
}

/// Ranges the initial state is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitRanges {
    pub soc: (f64, f64),
    /// deg C, shared by all thermal masses
    pub temperature: (f64, f64),
}

impl Default for InitRanges {
    fn default() -> Self {
        Self {
            soc: (0.45, 0.95),
            temperature: (25.0, 60.0),
        }
    }
}

impl InitRanges {
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> InitState {
        let mut temp = || rng.random_range(self.temperature.0..=self.temperature.1);
        let battery_temp = temp();
        let rotor_temp = temp();
        let stator_temp = temp();
        let inverter_temp = temp();
        InitState {
            soc: rng.random_range(self.soc.0..=self.soc.1),
            battery_temp,
            rotor_temp,
            stator_temp,
            inverter_temp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub seed: u64,
    /// Training budget in desk-scale "hours"; the normal pool is
    /// `budget_hours * sequences_per_hour` sequences.
    pub budget_hours: f64,
    pub sequences_per_hour: f64,
    pub val_fraction: f64,
    /// Use built-in classes `0..cycle_classes`.
    pub cycle_classes: usize,
    /// Hold-time scale applied to every cycle. Charge and heat capacities
    /// are scaled by the same factor.
    pub duration_scale: f64,
    pub anomaly_ratio: f64,
    pub anomalies_per_class: AnomalyCounts,
    pub magnitudes: Magnitudes,
    pub init: InitRanges,
    pub vehicle: VehicleParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            budget_hours: 64.0,
            sequences_per_hour: 3.125,
            val_fraction: 0.2,
            cycle_classes: CYCLE_CLASSES,
            duration_scale: 1.0,
            anomaly_ratio: 0.063,
            anomalies_per_class: AnomalyCounts::default(),
            magnitudes: Magnitudes::default(),
            init: InitRanges::default(),
            vehicle: VehicleParams::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.budget_hours > 0.0 && self.sequences_per_hour > 0.0) {
            return bad("budget must be positive");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if self.cycle_classes == 0 || self.cycle_classes > CYCLE_CLASSES {
            return bad("cycle_classes out of range");
        }
        if !(self.duration_scale > 0.0 && self.duration_scale <= 1.0) {
            return bad("duration_scale must lie in (0, 1]");
        }
        if !(self.anomaly_ratio > 0.0 && self.anomaly_ratio < 1.0) {
            return bad("anomaly_ratio must lie in (0, 1)");
        }
        if AnomalyKind::ALL.iter().any(|k| self.anomalies_per_class.get(*k) == 0) {
            return bad("every anomaly type needs at least one sequence per class");
        }
        let (s0, s1) = self.init.soc;
        if !(0.0 < s0 && s0 <= s1 && s1 < 1.0) {
            return bad("initial SoC range must lie in (0, 1)");
        }
        if self.init.temperature.0 > self.init.temperature.1 {
            return bad("empty temperature range");
        }
        for kind in AnomalyKind::ALL {
            AnomalySpec {
                kind,
                onset: Onset::Start,
                magnitude: self.magnitudes.get(kind),
            }
            .validate()?;
        }
        self.vehicle.validate()
    }

    pub fn pool_size(&self) -> usize {
        (self.budget_hours * self.sequences_per_hour).round().max(2.0) as usize
    }

    /// (train, val) normal counts.
    pub fn split_sizes(&self) -> (usize, usize) {
        let pool = self.pool_size();
        let val = ((pool as f64 * self.val_fraction).round() as usize).clamp(1, pool - 1);
        (pool - val, val)
    }

    pub fn test_anomalies(&self) -> usize {
        self.anomalies_per_class.per_class() * self.cycle_classes
    }

    pub fn test_normals(&self) -> usize {
        let na = self.test_anomalies() as f64;
        (na * (1.0 - self.anomaly_ratio) / self.anomaly_ratio).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// Offset separating the RNG streams of each group of sequences.
    fn stream_base(self, anomalous: bool) -> u64 {
        match (self, anomalous) {
            (Split::Train, _) => 0,
            (Split::Val, _) => 1 << 32,
            (Split::Test, false) => 2 << 32,
            (Split::Test, true) => 3 << 32,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sidecar for one generated sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub id: String,
    pub split: Split,
    pub rate: f64,
    pub cycle_class: usize,
    pub cycle_name: String,
    pub init_state: InitState,
    pub anomaly: Option<AnomalySpec>,
    pub ground_truth: GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub sequence: Sequence,
    pub meta: SequenceMeta,
}

/// One sequence request.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRequest {
    pub id: String,
    pub split: Split,
    pub cycle_class: usize,
    pub anomaly: Option<AnomalySpec>,
    pub stream: u64,
}

/// Initial states tried before a cycle is declared infeasible.
const MAX_INIT_ATTEMPTS: usize = 16;

/// Simulates one request. The draws for cycle jitter, initial state, speed
/// profile and sensor noise come from one stream in a fixed order, so an
/// anomalous run and its normal twin (same stream) see identical inputs.
pub fn generate_sequence(cfg: &DatasetConfig, req: &SequenceRequest) -> Result<Record> {
    if let Some(a) = &req.anomaly {
        a.validate()?;
    }
    let mut rng: SeedRng = derive_stream(cfg.seed, req.stream);
    let spec = standard_cycle(req.cycle_class)
        .scaled(cfg.duration_scale)
        .jittered(&mut rng);
    let vp = cfg.vehicle.time_compressed(cfg.duration_scale);
    let mut last_err = None;
    for _ in 0..MAX_INIT_ATTEMPTS {
        let init = cfg.init.draw(&mut rng);
        let profile = gen_cycle(&spec, SIM_RATE, &mut rng);
        let len = output_len(profile.len(), OUTPUT_RATE);
        let fx = req.anomaly.map(|a| a.effects(len)).unwrap_or_default();
        match simulate(&profile, &vp, &init, &fx, &mut rng) {
            Ok(run) => {
                let sequence = assemble_sequence(req.id.clone(), &run.channels, OUTPUT_RATE)?;
                debug_assert_eq!(sequence.len(), len);
                let ground_truth = match &req.anomaly {
                    Some(a) => a.ground_truth(len),
                    None => GroundTruth::normal(len),
                };
                return Ok(Record {
                    meta: SequenceMeta {
                        id: req.id.clone(),
                        split: req.split,
                        rate: OUTPUT_RATE,
                        cycle_class: req.cycle_class,
                        cycle_name: spec.name.clone(),
                        init_state: init,
                        anomaly: req.anomaly,
                        ground_truth,
                    },
                    sequence,
                });
            }
            Err(e @ Error::InfeasibleCycle(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Every sequence the config describes, in a fixed order.
pub fn dataset_requests(cfg: &DatasetConfig) -> Result<Vec<SequenceRequest>> {
    cfg.validate()?;
    let classes = cfg.cycle_classes;
    let (n_train, n_val) = cfg.split_sizes();
    let mut out = Vec::new();
    let normals = |split: Split, n: usize, out: &mut Vec<SequenceRequest>| {
        for i in 0..n {
            out.push(SequenceRequest {
                id: format!("{split}_{i:04}"),
                split,
                cycle_class: i % classes,
                anomaly: None,
                stream: split.stream_base(false) + i as u64,
            });
        }
    };
    normals(Split::Train, n_train, &mut out);
    normals(Split::Val, n_val, &mut out);
    normals(Split::Test, cfg.test_normals(), &mut out);
    let mut i = 0u64;
    for class in 0..classes {
        for kind in AnomalyKind::ALL {
            for rep in 0..cfg.anomalies_per_class.get(kind) {
                // alternate onsets so both span types appear
                let onset = if kind == AnomalyKind::CoolingLoss && (class + rep) % 3 == 0 {
                    Onset::Midpoint
                } else {
                    Onset::Start
                };
                out.push(SequenceRequest {
                    id: format!("test_{kind}_{class}_{rep}"),
                    split: Split::Test,
                    cycle_class: class,
                    anomaly: Some(AnomalySpec::new(kind, onset, cfg.magnitudes.get(kind))?),
                    stream: Split::Test.stream_base(true) + i,
                });
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Generates every sequence of the dataset.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Vec<Record>> {
    dataset_requests(cfg)?
        .iter()
        .map(|req| generate_sequence(cfg, req))
        .collect()
}
