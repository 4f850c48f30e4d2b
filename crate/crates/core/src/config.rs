//! Scenario files: a TOML document mirroring [`ScenarioGrid`] plus the road
//! network to run it on.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::ScenarioGrid;
use crate::mechanisms::Mechanism;
use crate::netgraph::{make_grid, NetError, RoadNetwork};
use crate::pricing::{Tariff, TariffConfig};
use crate::simengine::{SplitScheme, DEFAULT_VOT_SET};
use crate::units::{Money, Ppm, Seconds, ValueOfTime};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Shapley,
    Goalprog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkSpec {
    Grid {
        rows: usize,
        cols: usize,
        edge_miles: f64,
        speed_mph: f64,
    },
    File {
        file: PathBuf,
    },
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::Grid {
            rows: 10,
            cols: 10,
            edge_miles: 0.2,
            speed_mph: 20.0,
        }
    }
}

impl NetworkSpec {
    /// Relative network files resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<RoadNetwork, ConfigError> {
        match self {
            NetworkSpec::Grid {
                rows,
                cols,
                edge_miles,
                speed_mph,
            } => Ok(make_grid(*rows, *cols, *edge_miles, *speed_mph)?),
            NetworkSpec::File { file } => {
                let path = base.join(file);
                let f = std::fs::File::open(&path).map_err(|source| ConfigError::Read { path, source })?;
                Ok(RoadNetwork::read_csv(f)?)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioFile {
    pub mechanisms: Vec<Mechanism>,
    pub max_wait_s: Vec<Seconds>,
    pub mar: Vec<f64>,
    pub fleet_size: Vec<usize>,
    pub change_fee_usd: Vec<f64>,
    pub discount_factor: Vec<f64>,
    pub detour_factor: Vec<f64>,
    pub seeds: Vec<u64>,
    pub value_of_time_usd_per_min: Vec<f64>,
    pub horizon_s: Seconds,
    pub split_scheme: SplitName,
    pub goalprog_thresholds: Vec<f64>,
    pub tariff: TariffConfig,
    pub network: NetworkSpec,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        let t = TariffConfig::default();
        ScenarioFile {
            mechanisms: vec![Mechanism::Sro, Mechanism::Pcp, Mechanism::Ccp],
            max_wait_s: vec![240],
            mar: vec![0.0, 0.5, 1.0],
            fleet_size: vec![30],
            change_fee_usd: vec![t.change_fee_usd],
            discount_factor: vec![t.discount_factor],
            detour_factor: vec![t.detour_factor],
            seeds: vec![1],
            value_of_time_usd_per_min: DEFAULT_VOT_SET.to_vec(),
            horizon_s: 1800,
            split_scheme: SplitName::Shapley,
            goalprog_thresholds: vec![0.05, 0.10, 0.15, 0.20],
            tariff: t,
            network: NetworkSpec::default(),
        }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_grid(&self) -> Result<ScenarioGrid, ConfigError> {
        let tariff = Tariff::try_from(&self.tariff).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let split = match self.split_scheme {
            SplitName::Shapley => SplitScheme::Shapley,
            SplitName::Goalprog => SplitScheme::Goalprog {
                thresholds: self.goalprog_thresholds.iter().map(|&x| Ppm::from_f64(x)).collect(),
            },
        };
        let grid = ScenarioGrid {
            mechanisms: self.mechanisms.clone(),
            max_waits: self.max_wait_s.clone(),
            mars: self.mar.clone(),
            fleet_sizes: self.fleet_size.clone(),
            change_fees: self.change_fee_usd.iter().map(|&x| Money::from_dollars(x)).collect(),
            discount_factors: self.discount_factor.iter().map(|&x| Ppm::from_f64(x)).collect(),
            detour_factors: self.detour_factor.iter().map(|&x| Ppm::from_f64(x)).collect(),
            seeds: self.seeds.clone(),
            value_of_time_set: self
                .value_of_time_usd_per_min
                .iter()
                .map(|&x| ValueOfTime::from_usd_per_min(x))
                .collect(),
            split,
            tariff,
            horizon: self.horizon_s,
        };
        grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let f = ScenarioFile::parse(
            r#"
            mechanisms = ["sro", "CCP"]
            mar = [0.0, 0.4, 1.0]
            split_scheme = "goalprog"
            [tariff]
            change_fee_usd = 1.5
            [network]
            rows = 4
            cols = 5
            edge_miles = 0.25
            speed_mph = 15.0
            "#,
        )
        .unwrap();
        let g = f.to_grid().unwrap();
        assert_eq!(g.mechanisms, vec![Mechanism::Sro, Mechanism::Ccp]);
        assert_eq!(g.tariff.change_fee, Money(1500));
        assert!(matches!(g.split, SplitScheme::Goalprog { ref thresholds } if thresholds.len() == 4));
        let net = f.network.build(Path::new(".")).unwrap();
        assert_eq!(net.node_count(), 20);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ScenarioFile::parse("fleet = [3]").is_err());
        let f = ScenarioFile::parse("mar = [0.5, 0.2]").unwrap();
        assert!(matches!(f.to_grid(), Err(ConfigError::Invalid(_))));
        let f = ScenarioFile::parse("[tariff]\ndiscount_factor = 1.5").unwrap();
        assert!(f.to_grid().is_err());
    }

    #[test]
    fn network_file_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        let net = make_grid(2, 3, 0.1, 10.0).unwrap();
        let mut buf = Vec::new();
        net.write_csv(&mut buf).unwrap();
        std::fs::write(dir.path().join("net.csv"), buf).unwrap();
        let f = ScenarioFile::parse("[network]\nfile = \"net.csv\"").unwrap();
        assert_eq!(f.network.build(dir.path()).unwrap().node_count(), 6);
    }
}
