//! Scenario files: one perturbed system, analysis overrides, integration
//! settings and initial conditions, stored as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::averaging::{average, average_auto, AveragedModel, AveragingError};
use crate::classifier::{classify, Classification, ClassifierConfig};
use crate::integrator::{IntegratorConfig, IntegratorError};
use crate::model::{ModelError, PerturbTerm, PhaseLaw, SystemSpec};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("scenario {name}: {source}")]
    Model { name: String, source: ModelError },
    #[error("scenario {name}: {source}")]
    Averaging { name: String, source: AveragingError },
    #[error("scenario {name}: {source}")]
    Integrator { name: String, source: IntegratorError },
    #[error("scenario {name}: {message}")]
    Invalid { name: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub h: f64,
    pub q: u32,
    pub kappa: u32,
    pub s: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub x: f64,
    pub y: f64,
}

/// Qualitative outcome recorded for regression checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOutcome {
    Stable,
    Unstable,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub outcome: ExpectedOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub system: SystemSection,
    #[serde(rename = "term", default)]
    pub terms: Vec<PerturbTerm>,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub run: IntegratorConfig,
    #[serde(rename = "initial", default)]
    pub initial: Vec<InitialCondition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

/// Averaged model and verdict for one scenario.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub spec: SystemSpec,
    pub model: AveragedModel,
    pub classification: Classification,
}

impl Scenario {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario =
            toml::from_str(text).map_err(|e| ScenarioError::Parse { path: origin.to_string(), message: e.to_string() })?;
        sc.spec()?;
        sc.run
            .validate()
            .map_err(|source| ScenarioError::Integrator { name: sc.name.clone(), source })?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn spec(&self) -> Result<SystemSpec, ScenarioError> {
        let model_err = |source| ScenarioError::Model { name: self.name.clone(), source };
        let phase = PhaseLaw::new(self.system.kappa, self.system.q, self.system.s.clone()).map_err(model_err)?;
        SystemSpec::new(self.system.h, phase, self.terms.clone()).map_err(model_err)
    }

    /// Averaging orders, `2q` unless overridden.
    pub fn orders(&self) -> (usize, usize) {
        let two_q = 2 * self.system.q as usize;
        (self.analysis.n.unwrap_or(two_q), self.analysis.m.unwrap_or(two_q))
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        let mut cfg = ClassifierConfig::default();
        if let Some(d) = self.analysis.delta0 {
            cfg.delta0 = d;
        }
        cfg
    }

    pub fn averaged_model(&self, spec: &SystemSpec) -> Result<AveragedModel, ScenarioError> {
        let (n, m) = self.orders();
        let res = match self.analysis.l {
            Some(l) => average(spec, l, n, m),
            None => average_auto(spec, n, m),
        };
        res.map_err(|source| ScenarioError::Averaging { name: self.name.clone(), source })
    }

    /// Runs averaging and classification.
    pub fn analyze(&self) -> Result<Analysis, ScenarioError> {
        let spec = self.spec()?;
        let model = self.averaged_model(&spec)?;
        let classification = classify(&model, &self.classifier_config());
        Ok(Analysis { spec, model, classification })
    }
}
