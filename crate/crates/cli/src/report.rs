//! JSON run reports.

use serde::{Deserialize, Serialize};
use switchmargin_core::lyapunov::{AlgorithmConfig, LowerBoundReport};
use switchmargin_core::ode::IntegratorConfig;
use switchmargin_core::periodic::{MarginReport, UpperBoundConfig};
use switchmargin_core::switching::{ReplayMode, SwitchingSignal};

use crate::problem::ProblemEcho;

pub const DETERMINISM_NOTE: &str =
    "no random numbers are used; identical inputs give identical reports apart from `meta.timestamp`";

/// Wall-clock data, the only part of a report that varies between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamp {
    pub started_unix_s: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub determinism: String,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerResult {
    pub settings: AlgorithmConfig,
    pub report: LowerBoundReport,
    pub cache: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstSwitchResult {
    pub delta: f64,
    pub x0: Vec<f64>,
    pub t_f: f64,
    pub level: usize,
    pub delta_certified: f64,
    pub integrator: IntegratorConfig,
    pub signal: SwitchingSignal,
    pub diverged: bool,
    pub final_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperResult {
    pub x0: Vec<f64>,
    pub t_f: f64,
    pub settings: UpperBoundConfig,
    pub gap: f64,
    pub report: MarginReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResult {
    pub delta: f64,
    pub t_f: f64,
    pub level: usize,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub integrator: IntegratorConfig,
    pub signal: SwitchingSignal,
    pub peak_worst: f64,
    pub peak_nominal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub source: String,
    pub cycles: usize,
    pub mode: ReplayMode,
    pub x0: Vec<f64>,
    pub level: Option<usize>,
    pub integrator: IntegratorConfig,
    pub signal: SwitchingSignal,
    pub diverged: bool,
    pub final_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandResult {
    MarginLower(LowerResult),
    WorstSwitch(WorstSwitchResult),
    MarginUpper(Box<UpperResult>),
    Impulse(ImpulseResult),
    Simulate(SimulateResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub meta: Meta,
    pub problem: ProblemEcho,
    pub result: CommandResult,
}
