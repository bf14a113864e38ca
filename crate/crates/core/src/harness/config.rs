//! JSON run configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::estimators::EstimatorKind;
use crate::geometry::{AntennaLayout, LayoutKind};
use crate::scenario::ScenarioParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    MseSweep,
    SeSweep,
    KappaTable,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::MseSweep => "mse-sweep",
            Experiment::SeSweep => "se-sweep",
            Experiment::KappaTable => "kappa-table",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse-sweep" => Ok(Experiment::MseSweep),
            "se-sweep" => Ok(Experiment::SeSweep),
            "kappa-table" => Ok(Experiment::KappaTable),
            other => Err(HarnessError::Config(format!(
                "unknown experiment '{other}' (expected mse-sweep|se-sweep|kappa-table)"
            ))),
        }
    }
}

/// A scalar or a list in the JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrConfig {
    pub ul_serving_db: f64,
    pub ul_cross_db: f64,
    pub dl_serving_db: f64,
    pub neighbor_distance: f64,
    pub neighbor_distance_overrides: Option<Vec<f64>>,
    pub path_loss_exponent: f64,
}

impl Default for SnrConfig {
    fn default() -> Self {
        let p = ScenarioParams::default();
        Self {
            ul_serving_db: p.ul_serving_db,
            ul_cross_db: p.ul_cross_db,
            dl_serving_db: p.dl_serving_db,
            neighbor_distance: p.neighbor_distance,
            neighbor_distance_overrides: None,
            path_loss_exponent: p.path_loss_exponent,
        }
    }
}

pub const DEFAULT_NT_GRID: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 256];
pub const DEFAULT_NP_GRID: [usize; 6] = [100, 250, 500, 1000, 3000, 6000];

/// Contents of the `--config` file. Omitted keys take desk-scale defaults;
/// omitted grids depend on the experiment (see [`RunConfig::nt_grid`] and
/// [`RunConfig::np_grid`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `"ula"`, `"upa"`, `"both"` or a list.
    pub layout: OneOrMany<String>,
    pub nt: Option<OneOrMany<usize>>,
    /// UPA row count; near-square panels when absent.
    pub m: Option<usize>,
    pub cells: usize,
    pub snr: SnrConfig,
    pub r_h: f64,
    pub r_v: f64,
    pub trials: u64,
    pub drops: u64,
    pub np: Option<OneOrMany<usize>>,
    pub seed: u64,
    pub estimators: Vec<String>,
    /// Sample matrices per drop used to fit the viaQ weights.
    pub calibration_samples: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ScenarioParams::default();
        Self {
            layout: OneOrMany::One("both".into()),
            nt: None,
            m: None,
            cells: p.cells,
            snr: SnrConfig::default(),
            r_h: p.r_h,
            r_v: p.r_v,
            trials: 500,
            drops: 10,
            np: None,
            seed: 42,
            estimators: EstimatorKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            calibration_samples: 20,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn layouts(&self) -> Result<Vec<LayoutKind>, HarnessError> {
        let mut out = Vec::new();
        for name in self.layout.to_vec() {
            match name.to_ascii_lowercase().as_str() {
                "ula" => out.push(LayoutKind::Ula),
                "upa" => out.push(LayoutKind::Upa),
                "both" => out.extend([LayoutKind::Ula, LayoutKind::Upa]),
                other => return Err(HarnessError::Config(format!("unknown layout '{other}'"))),
            }
        }
        out.dedup();
        if out.is_empty() {
            return Err(HarnessError::Config("layout list is empty".into()));
        }
        Ok(out)
    }

    /// Antenna counts; the MSE sweep defaults to 128, the others to the
    /// 2..256 grid.
    pub fn nt_grid(&self, experiment: Experiment) -> Vec<usize> {
        match (&self.nt, experiment) {
            (Some(v), _) => v.to_vec(),
            (None, Experiment::MseSweep) => vec![128],
            (None, _) => DEFAULT_NT_GRID.to_vec(),
        }
    }

    /// Pilot counts; the MSE sweep defaults to the full grid, the others to 3000.
    pub fn np_grid(&self, experiment: Experiment) -> Vec<usize> {
        match (&self.np, experiment) {
            (Some(v), _) => v.to_vec(),
            (None, Experiment::MseSweep) => DEFAULT_NP_GRID.to_vec(),
            (None, _) => vec![3000],
        }
    }

    pub fn estimator_kinds(&self) -> Result<Vec<EstimatorKind>, HarnessError> {
        let mut out = Vec::new();
        for name in &self.estimators {
            let k: EstimatorKind = name.parse()?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        if out.is_empty() {
            return Err(HarnessError::Config("estimator list is empty".into()));
        }
        Ok(out)
    }

    /// Replaces the estimator list from a comma-separated CLI value.
    pub fn set_estimators(&mut self, list: &str) -> Result<(), HarnessError> {
        self.estimators = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        self.estimator_kinds().map(|_| ())
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            cells: self.cells,
            ul_serving_db: self.snr.ul_serving_db,
            ul_cross_db: self.snr.ul_cross_db,
            dl_serving_db: self.snr.dl_serving_db,
            neighbor_distance: self.snr.neighbor_distance,
            neighbor_distance_overrides: self.snr.neighbor_distance_overrides.clone(),
            path_loss_exponent: self.snr.path_loss_exponent,
            r_h: self.r_h,
            r_v: self.r_v,
        }
    }

    pub fn build_layout(&self, kind: LayoutKind, nt: usize) -> Result<AntennaLayout, HarnessError> {
        Ok(match kind {
            LayoutKind::Ula => AntennaLayout::ula(nt)?,
            LayoutKind::Upa => match self.m {
                Some(rows) => AntennaLayout::upa_with_rows(nt, rows)?,
                None => AntennaLayout::upa_near_square(nt)?,
            },
            LayoutKind::Generic => {
                return Err(HarnessError::Config("generic layouts are not available in sweeps".into()))
            }
        })
    }

    pub fn validate(&self, experiment: Experiment) -> Result<(), HarnessError> {
        if self.trials < 2 {
            return Err(HarnessError::Config("trials must be at least 2".into()));
        }
        if self.drops == 0 {
            return Err(HarnessError::Config("drops must be at least 1".into()));
        }
        if experiment != Experiment::MseSweep && self.cells < 1 {
            return Err(HarnessError::Config("cells must be at least 1".into()));
        }
        let nt = self.nt_grid(experiment);
        let np = self.np_grid(experiment);
        if nt.is_empty() || np.is_empty() {
            return Err(HarnessError::Config("sweep grids must be nonempty".into()));
        }
        if nt.contains(&0) || np.contains(&0) {
            return Err(HarnessError::Config("grid values must be positive".into()));
        }
        if self.calibration_samples == 0 {
            return Err(HarnessError::Config("calibration_samples must be positive".into()));
        }
        self.scenario_params().validate()?;
        for kind in self.layouts()? {
            for &n in &nt {
                self.build_layout(kind, n)?;
            }
        }
        self.estimator_kinds()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_grids() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.nt_grid(Experiment::MseSweep), vec![128]);
        assert_eq!(c.np_grid(Experiment::SeSweep), vec![3000]);
        assert_eq!(c.np_grid(Experiment::MseSweep), DEFAULT_NP_GRID.to_vec());
        assert_eq!(c.layouts().unwrap(), vec![LayoutKind::Ula, LayoutKind::Upa]);
        assert_eq!(c.estimator_kinds().unwrap().len(), 4);
        c.validate(Experiment::SeSweep).unwrap();
    }

    #[test]
    fn scalar_or_list_keys() {
        let c = RunConfig::from_json(
            r#"{"layout": "upa", "nt": 64, "m": 4, "np": [100, 3000], "estimators": ["ala", "viaq"],
                "snr": {"dl_serving_db": 10}}"#,
        )
        .unwrap();
        assert_eq!(c.layouts().unwrap(), vec![LayoutKind::Upa]);
        assert_eq!(c.nt_grid(Experiment::SeSweep), vec![64]);
        assert_eq!(c.np_grid(Experiment::SeSweep), vec![100, 3000]);
        assert_eq!(c.build_layout(LayoutKind::Upa, 64).unwrap().rows(), Some(4));
        assert_eq!(c.snr.dl_serving_db, 10.0);
        assert_eq!(c.snr.ul_serving_db, -7.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let bad = [
            r#"{"trials": 1}"#,
            r#"{"nt": []}"#,
            r#"{"layout": "ring"}"#,
            r#"{"estimators": ["mmse"]}"#,
            r#"{"r_h": 1.5}"#,
            r#"{"layout": "upa", "nt": 6, "m": 4}"#,
        ];
        for text in bad {
            let c = RunConfig::from_json(text).unwrap();
            assert!(c.validate(Experiment::MseSweep).is_err(), "{text}");
        }
    }

    #[test]
    fn estimator_override() {
        let mut c = RunConfig::default();
        c.set_estimators("ideal, ala").unwrap();
        assert_eq!(c.estimator_kinds().unwrap(), vec![EstimatorKind::Ideal, EstimatorKind::Ala]);
        assert!(c.set_estimators("ala,nope").is_err());
    }

    #[test]
    fn experiment_names() {
        for e in [Experiment::MseSweep, Experiment::SeSweep, Experiment::KappaTable] {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("plot".parse::<Experiment>().is_err());
    }
}
