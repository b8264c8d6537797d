//! Discrete-event timing: devices with FIFO compute queues, per-link
//! transmission queues and a global event clock.

mod kernel;
mod scenario;

pub use kernel::{
    simulate, Direction, Event, EventKind, EventQueue, Job, JobTiming, Resource, Site, Task, TaskTiming,
};
pub use scenario::{plan_job, run_scenario, run_trial, RunReport};

use serde::{Deserialize, Serialize};

use crate::error::{MegError, Result};
use crate::protocol::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceClass {
    Ue,
    Es,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub id: Site,
    pub class: DeviceClass,
    /// Abstract work units per second.
    pub compute_rate: f64,
}

impl DeviceSpec {
    pub fn ue(compute_rate: f64) -> Self {
        Self {
            id: Site::Ue,
            class: DeviceClass::Ue,
            compute_rate,
        }
    }

    pub fn es(index: usize, compute_rate: f64) -> Self {
        Self {
            id: Site::Es(index),
            class: DeviceClass::Es,
            compute_rate,
        }
    }
}

/// The UE and its edge servers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Devices {
    pub ue: DeviceSpec,
    pub es: Vec<DeviceSpec>,
}

impl Devices {
    pub fn new(ue_rate: f64, es_rates: &[f64]) -> Self {
        Self {
            ue: DeviceSpec::ue(ue_rate),
            es: es_rates.iter().enumerate().map(|(i, &r)| DeviceSpec::es(i, r)).collect(),
        }
    }

    pub fn get(&self, site: Site) -> Result<&DeviceSpec> {
        match site {
            Site::Ue => Ok(&self.ue),
            Site::Es(i) => self
                .es
                .get(i)
                .ok_or_else(|| MegError::param("devices", format!("no edge server ES{i}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for d in std::iter::once(&self.ue).chain(&self.es) {
            if !(d.compute_rate > 0.0) || !d.compute_rate.is_finite() {
                return Err(MegError::param(format!("{} compute_rate", d.id), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Work units per action kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkModel {
    pub infer_cost: f64,
    pub generate_cost: f64,
    pub decode_cost: f64,
    pub sketch_cost: f64,
    pub complete_cost: f64,
    pub merge_cost: f64,
    pub split_cost: f64,
    pub select_cost: f64,
}

impl Default for WorkModel {
    fn default() -> Self {
        Self {
            infer_cost: 100.0,
            generate_cost: 1000.0,
            decode_cost: 10.0,
            sketch_cost: 10.0,
            complete_cost: 10.0,
            merge_cost: 1.0,
            split_cost: 1.0,
            select_cost: 1.0,
        }
    }
}

impl WorkModel {
    pub fn zero() -> Self {
        Self {
            infer_cost: 0.0,
            generate_cost: 0.0,
            decode_cost: 0.0,
            sketch_cost: 0.0,
            complete_cost: 0.0,
            merge_cost: 0.0,
            split_cost: 0.0,
            select_cost: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let costs = [
            ("infer_cost", self.infer_cost),
            ("generate_cost", self.generate_cost),
            ("decode_cost", self.decode_cost),
            ("sketch_cost", self.sketch_cost),
            ("complete_cost", self.complete_cost),
            ("merge_cost", self.merge_cost),
            ("split_cost", self.split_cost),
            ("select_cost", self.select_cost),
        ];
        for (name, c) in costs {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(MegError::param(format!("work.{name}"), "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Work units for one compute action. Cooperative actions carry only
    /// their share of the full cost.
    pub fn cost(&self, action: &Action) -> f64 {
        match action {
            Action::Infer => self.infer_cost,
            Action::Generate { .. } => self.generate_cost,
            Action::PartialGenerate { lo, hi, dim } => self.generate_cost * (hi - lo) as f64 / *dim as f64,
            Action::Decode => self.decode_cost,
            Action::Sketch => self.sketch_cost,
            Action::PartialSketch { tiles, .. } => self.sketch_cost / *tiles as f64,
            Action::Complete => self.complete_cost,
            Action::Split { .. } => self.split_cost,
            Action::Merge | Action::Stitch => self.merge_cost,
            Action::Select => self.select_cost,
            Action::Transmit(_) => 0.0,
        }
    }
}

/// `cost(action) / compute_rate` seconds.
pub fn compute_time(action: &Action, work: &WorkModel, device: &DeviceSpec) -> f64 {
    work.cost(action) / device.compute_rate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compute_time_examples() {
        let mut work = WorkModel::zero();
        work.generate_cost = 100.0;
        let ue = DeviceSpec::ue(100.0);
        let es = DeviceSpec::es(0, 1000.0);
        let gen = Action::Generate { es: None };
        assert_eq!(compute_time(&gen, &work, &ue), 1.0);
        assert_eq!(compute_time(&Action::Decode, &work, &ue), 0.0);
        assert!((compute_time(&gen, &work, &ue) / compute_time(&gen, &work, &es) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn partial_cost_is_proportional() {
        let work = WorkModel::default();
        let part = Action::PartialGenerate { lo: 0, hi: 4, dim: 16 };
        assert_eq!(work.cost(&part), work.generate_cost / 4.0);
    }

    #[test]
    fn nonpositive_rates_rejected() {
        assert!(Devices::new(0.0, &[1.0]).validate().is_err());
        assert!(Devices::new(1.0, &[-1.0]).validate().is_err());
        assert!(Devices::new(1.0, &[1.0]).validate().is_ok());
    }
}
