//! First-order powertrain model: longitudinal dynamics, a single-speed EDU,
//! an affine-OCV battery and lumped thermal masses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::RawChannel;
use crate::rng::standard_normal;

use super::CHANNEL_NAMES;

/// Simulation and fast-channel sampling rate (Hz).
pub const SIM_RATE: f64 = 10.0;
/// Slow channels (temperatures, SoC) are logged every this many steps.
pub const SLOW_DECIMATION: usize = 10;
const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// m
    pub wheel_radius: f64,
    pub gear_ratio: f64,
    pub rolling_coeff: f64,
    /// Cd * frontal area, m^2
    pub drag_area: f64,
    /// kg/m^3
    pub air_density: f64,
    /// Motor + inverter efficiency, both directions.
    pub efficiency: f64,
    /// Nm at the EDU
    pub max_motor_torque: f64,
    /// Nm at the EDU
    pub max_regen_torque: f64,
    /// W drawn while moving
    pub aux_power: f64,
    /// A*h
    pub battery_capacity: f64,
    /// Open-circuit voltage at SoC 0, V
    pub ocv_empty: f64,
    /// Open-circuit voltage gain per unit SoC, V
    pub ocv_slope: f64,
    /// Ohm
    pub internal_resistance: f64,
    /// Ohm, HVB to EDU
    pub cable_resistance: f64,
    /// J/K
    pub battery_heat_capacity: f64,
    /// W/K
    pub battery_cooling: f64,
    /// J/K
    pub rotor_heat_capacity: f64,
    /// J/K
    pub stator_heat_capacity: f64,
    /// J/K
    pub inverter_heat_capacity: f64,
    /// W/K for rotor, stator and inverter; the loop they share.
    pub rotor_cooling: f64,
    pub stator_cooling: f64,
    pub inverter_cooling: f64,
    /// W per (rad/s)^2
    pub rotor_loss: f64,
    /// W per Nm^2
    pub stator_loss: f64,
    /// W per A and W per A^2
    pub inverter_loss: (f64, f64),
    /// deg C
    pub ambient: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1800.0,
            wheel_radius: 0.33,
            gear_ratio: 9.0,
            rolling_coeff: 0.012,
            drag_area: 0.65,
            air_density: 1.2,
            efficiency: 0.9,
            max_motor_torque: 300.0,
            max_regen_torque: 150.0,
            aux_power: 300.0,
            battery_capacity: 120.0,
            ocv_empty: 350.0,
            ocv_slope: 60.0,
            internal_resistance: 0.08,
            cable_resistance: 0.01,
            battery_heat_capacity: 6.0e4,
            battery_cooling: 40.0,
            rotor_heat_capacity: 6000.0,
            stator_heat_capacity: 7500.0,
            inverter_heat_capacity: 3600.0,
            rotor_cooling: 10.0,
            stator_cooling: 25.0,
            inverter_cooling: 30.0,
            rotor_loss: 5e-4,
            stator_loss: 0.02,
            inverter_loss: (2.0, 0.01),
            ambient: 25.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.mass,
            self.wheel_radius,
            self.gear_ratio,
            self.rolling_coeff,
            self.drag_area,
            self.air_density,
            self.max_motor_torque,
            self.max_regen_torque,
            self.battery_capacity,
            self.ocv_empty,
            self.internal_resistance,
            self.cable_resistance,
            self.battery_heat_capacity,
            self.battery_cooling,
            self.rotor_heat_capacity,
            self.stator_heat_capacity,
            self.inverter_heat_capacity,
            self.rotor_cooling,
            self.stator_cooling,
            self.inverter_cooling,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("vehicle parameters must be positive".into()));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidArgument("efficiency must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Thermal time constants `C / k` in seconds: battery, rotor, stator,
    /// inverter.
    pub fn time_constants(&self) -> [f64; 4] {
        [
            self.battery_heat_capacity / self.battery_cooling,
            self.rotor_heat_capacity / self.rotor_cooling,
            self.stator_heat_capacity / self.stator_cooling,
            self.inverter_heat_capacity / self.inverter_cooling,
        ]
    }

    /// Charge and heat capacities multiplied by `factor`, so that slow
    /// states evolve as much over a cycle shortened by `factor`.
    pub fn time_compressed(&self, factor: f64) -> Self {
        Self {
            battery_capacity: self.battery_capacity * factor,
            battery_heat_capacity: self.battery_heat_capacity * factor,
            rotor_heat_capacity: self.rotor_heat_capacity * factor,
            stator_heat_capacity: self.stator_heat_capacity * factor,
            inverter_heat_capacity: self.inverter_heat_capacity * factor,
            ..*self
        }
    }
}

/// State at the first step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitState {
    /// fraction in (0, 1)
    pub soc: f64,
    pub battery_temp: f64,
    pub rotor_temp: f64,
    pub stator_temp: f64,
    pub inverter_temp: f64,
}

/// Modifications applied by an anomaly injector. The default is a normal
/// run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effects {
    /// Reported speed = factor * true speed.
    pub wheel_factor: f64,
    /// Fraction of the regenerative torque limit still available.
    pub regen_fraction: f64,
    /// Blend from the real battery (0) to the simulator (1).
    pub battery_blend: f64,
    /// Cooling conductance multiplier for the EDU/inverter loop.
    pub cooling_factor: f64,
    /// Time (s) from which `cooling_factor` applies.
    pub cooling_onset: f64,
}

impl Default for Effects {
    fn default() -> Self {
        Self {
            wheel_factor: 1.0,
            regen_fraction: 1.0,
            battery_blend: 0.0,
            cooling_factor: 1.0,
            cooling_onset: 0.0,
        }
    }
}

/// Battery simulator: flat open-circuit voltage, stiff source.
const SIMULATOR_VOLTAGE: f64 = 395.0;
const SIMULATOR_RESISTANCE: f64 = 0.02;

/// Noise-free internal states, one entry per simulation step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Truth {
    /// m/s
    pub speed: Vec<f64>,
    pub edu_torque: Vec<f64>,
    pub edu_current: Vec<f64>,
    pub hvb_current: Vec<f64>,
    pub hvb_voltage: Vec<f64>,
    pub soc: Vec<f64>,
    /// battery, rotor, stator, inverter
    pub temps: [Vec<f64>; 4],
    /// W at the EDU shaft
    pub mech_power: Vec<f64>,
    /// W at the battery terminals
    pub battery_power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRun {
    /// Measured channels in output order, fast ones at [`SIM_RATE`], slow
    /// ones every [`SLOW_DECIMATION`] steps.
    pub channels: Vec<RawChannel>,
    pub truth: Truth,
}

/// Steps at the output rate produced from `sim_steps` simulation steps.
pub fn output_len(sim_steps: usize, out_rate: f64) -> usize {
    if sim_steps == 0 {
        return 0;
    }
    let last_slow = ((sim_steps - 1) / SLOW_DECIMATION * SLOW_DECIMATION) as f64 / SIM_RATE;
    (last_slow * out_rate + 1e-9).floor() as usize + 1
}

fn infeasible(step: usize, what: String) -> Error {
    Error::InfeasibleCycle(format!("step {step}: {what}"))
}

/// Runs the plant over `profile` (m/s at [`SIM_RATE`]).
pub fn simulate<R: Rng + ?Sized>(
    profile: &[f64],
    vp: &VehicleParams,
    init: &InitState,
    fx: &Effects,
    rng: &mut R,
) -> Result<RawRun> {
    vp.validate()?;
    if !(init.soc > 0.0 && init.soc < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "initial SoC {} outside (0, 1)",
            init.soc
        )));
    }
    if profile.len() < 2 * SLOW_DECIMATION {
        return Err(Error::InsufficientSamples {
            need: 2 * SLOW_DECIMATION,
            got: profile.len(),
        });
    }
    let n = profile.len();
    let dt = 1.0 / SIM_RATE;
    let mut truth = Truth::default();
    let mut fast: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 8];
    let mut slow: Vec<Vec<f64>> = vec![Vec::with_capacity(n / SLOW_DECIMATION + 1); 5];
    let mut slow_t = Vec::new();

    let mut soc = init.soc;
    let mut temps = [init.battery_temp, init.rotor_temp, init.stator_temp, init.inverter_temp];
    let caps = [
        vp.battery_heat_capacity,
        vp.rotor_heat_capacity,
        vp.stator_heat_capacity,
        vp.inverter_heat_capacity,
    ];
    let ocv_blend = |soc: f64| {
        let real = vp.ocv_empty + vp.ocv_slope * soc;
        (1.0 - fx.battery_blend) * real + fx.battery_blend * SIMULATOR_VOLTAGE
    };
    let r_batt = (1.0 - fx.battery_blend) * vp.internal_resistance + fx.battery_blend * SIMULATOR_RESISTANCE;

    for k in 0..n {
        let t = k as f64 * dt;
        let v = profile[k];
        let accel = (profile[(k + 1).min(n - 1)] - profile[k.saturating_sub(1)])
            / (dt * ((k + 1).min(n - 1) - k.saturating_sub(1)) as f64);
        let moving = v > 0.05;
        let rolling = if moving {
            vp.rolling_coeff * vp.mass * GRAVITY
        } else {
            0.0
        };
        let force = vp.mass * accel + rolling + 0.5 * vp.air_density * vp.drag_area * v * v;
        let demand = force * vp.wheel_radius / vp.gear_ratio;
        let torque = if demand >= 0.0 {
            demand.min(vp.max_motor_torque)
        } else {
            demand.max(-vp.max_regen_torque * fx.regen_fraction)
        };
        let omega = v / vp.wheel_radius * vp.gear_ratio;
        let mech = torque * omega;
        let edu_power = if mech >= 0.0 {
            mech / vp.efficiency
        } else {
            mech * vp.efficiency
        };
        let aux = if moving { vp.aux_power } else { 0.0 };
        let power = edu_power + aux;

        let ocv = ocv_blend(soc);
        let disc = ocv * ocv - 4.0 * r_batt * power;
        if disc < 0.0 {
            return Err(infeasible(k, format!("battery cannot deliver {power:.0} W")));
        }
        let current = if power == 0.0 {
            0.0
        } else {
            (ocv - disc.sqrt()) / (2.0 * r_batt)
        };
        let voltage = ocv - current * r_batt;
        let edu_voltage = voltage - current * vp.cable_resistance;
        let edu_current = edu_power / edu_voltage;

        let cool = if t >= fx.cooling_onset { fx.cooling_factor } else { 1.0 };
        let heat = [
            current * current * r_batt,
            vp.rotor_loss * omega * omega,
            vp.stator_loss * torque * torque,
            vp.inverter_loss.0 * edu_current.abs() + vp.inverter_loss.1 * edu_current * edu_current,
        ];
        let conductance = [
            vp.battery_cooling,
            vp.rotor_cooling * cool,
            vp.stator_cooling * cool,
            vp.inverter_cooling * cool,
        ];

        truth.speed.push(v);
        truth.edu_torque.push(torque);
        truth.edu_current.push(edu_current);
        truth.hvb_current.push(current);
        truth.hvb_voltage.push(voltage);
        truth.soc.push(soc);
        for (j, temp) in temps.iter().enumerate() {
            truth.temps[j].push(*temp);
        }
        truth.mech_power.push(mech);
        truth.battery_power.push(voltage * current);

        // fast sensors
        let split = 0.01 * standard_normal(rng);
        let axle = torque * vp.gear_ratio / 2.0;
        fast[0].push(fx.wheel_factor * v * 3.6 + 0.05 * standard_normal(rng));
        fast[1].push(torque * (1.0 + 0.005 * standard_normal(rng)));
        fast[2].push(axle * (1.0 + split) * (1.0 + 0.005 * standard_normal(rng)));
        fast[3].push(axle * (1.0 - split) * (1.0 + 0.005 * standard_normal(rng)));
        fast[4].push(edu_current + 0.5 * standard_normal(rng));
        fast[5].push(edu_voltage + 0.2 * standard_normal(rng));
        fast[6].push(current + 0.5 * standard_normal(rng));
        fast[7].push(voltage + 0.2 * standard_normal(rng));
        if k % SLOW_DECIMATION == 0 {
            slow_t.push(t);
            slow[0].push(temps[0] + 0.05 * standard_normal(rng));
            slow[1].push(100.0 * soc + 0.01 * standard_normal(rng));
            for j in 1..4 {
                slow[j + 1].push(temps[j] + 0.05 * standard_normal(rng));
            }
        }

        soc -= current * dt / (3600.0 * vp.battery_capacity);
        if !(soc > 0.0 && soc < 1.0) {
            return Err(infeasible(k, format!("state of charge left (0, 1): {soc:.4}")));
        }
        for j in 0..4 {
            temps[j] += dt / caps[j] * (heat[j] - conductance[j] * (temps[j] - vp.ambient));
        }
    }

    let fast_t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let slow_rate = SIM_RATE / SLOW_DECIMATION as f64;
    // output order: speed, 3 torques, EDU I/V, HVB I/V, HVB temp, SoC, 3 temps
    let mut fast = fast.into_iter();
    let mut slow = slow.into_iter();
    let channels = CHANNEL_NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let (timestamps, values, native_rate) = if i < 8 {
                (fast_t.clone(), fast.next().expect("fast channel"), SIM_RATE)
            } else {
                (slow_t.clone(), slow.next().expect("slow channel"), slow_rate)
            };
            RawChannel {
                name: name.to_string(),
                timestamps,
                values,
                native_rate,
            }
        })
        .collect();
    Ok(RawRun { channels, truth })
}
