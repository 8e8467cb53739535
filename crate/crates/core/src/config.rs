//! Experiment configuration (JSON, versioned).

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::DEFAULT_NEGLIGIBLE_REL;
use crate::design::{DesignMode, ParameterSpec, DEFAULT_LEVELS};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::report::Presentation;
use crate::transforms::TransformSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub parameters: Vec<ParameterConfig>,
    pub model: Model,
    pub design: DesignConfig,
    #[serde(default)]
    pub analyses: Vec<AnalysisConfig>,
    #[serde(default = "default_negligible_rel")]
    pub negligible_rel: f64,
}

fn default_negligible_rel() -> f64 {
    DEFAULT_NEGLIGIBLE_REL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterConfig {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default = "default_levels")]
    pub levels: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

fn default_levels() -> u32 {
    DEFAULT_LEVELS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub mode: DesignMode,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub name: String,
    /// A model output, or the name of an earlier analysis to build on.
    pub output: String,
    #[serde(default)]
    pub transforms: Vec<TransformConfig>,
    #[serde(default = "default_presentations")]
    pub presentations: Vec<Presentation>,
}

fn default_presentations() -> Vec<Presentation> {
    vec![Presentation::Sigma]
}

/// Transform as written in a config: parameters are referenced by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformConfig {
    Identity,
    NaturalLog,
    DivideByProduct {
        #[serde(default)]
        parameters: Vec<String>,
        #[serde(default = "unit")]
        constant: f64,
    },
    Affine {
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn unit() -> f64 {
    1.0
}

/// An analysis with its transform chain expanded down to a model output.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedAnalysis {
    pub name: String,
    pub model_output: String,
    pub chain: Vec<TransformSpec>,
    pub presentations: Vec<Presentation>,
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            config_error(
                if path == "." { "<root>".to_string() } else { path },
                format!("{inner} (line {}, column {})", inner.line(), inner.column()),
            )
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config { path: field, message } => config_error(format!("{}: {field}", path.display()), message),
            other => other,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn k(&self) -> usize {
        self.parameters.len()
    }

    pub fn parameter_specs(&self) -> Vec<ParameterSpec> {
        self.parameters
            .iter()
            .map(|p| ParameterSpec {
                name: p.name.clone(),
                x_min: p.min,
                x_max: p.max,
                levels: p.levels,
            })
            .collect()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_error(
                "schema_version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.parameters.is_empty() {
            return Err(config_error("parameters", "at least one parameter is required"));
        }
        let mut names = HashSet::new();
        for (i, (p, spec)) in self.parameters.iter().zip(self.parameter_specs()).enumerate() {
            if p.name.trim().is_empty() {
                return Err(config_error(format!("parameters[{i}].name"), "name must not be empty"));
            }
            if !names.insert(p.name.as_str()) {
                return Err(config_error(format!("parameters[{i}].name"), format!("duplicate parameter name `{}`", p.name)));
            }
            spec.validate().map_err(|e| {
                let field = match e {
                    Error::InvalidGrid { .. } => "levels",
                    _ => "max",
                };
                config_error(format!("parameters[{i}].{field}"), e.to_string())
            })?;
        }
        let k = self.k();
        if self.design.replicates == 0 {
            return Err(config_error("design.replicates", "must be at least 1"));
        }
        if self.design.mode == DesignMode::SecondOrder && k < 2 {
            return Err(config_error("design.mode", "second_order needs at least 2 parameters"));
        }
        match &self.model {
            Model::Analytic { function, output } => {
                function
                    .check_dimension(k)
                    .map_err(|e| config_error("model.function", e.to_string()))?;
                if output.is_empty() {
                    return Err(config_error("model.output", "output name must not be empty"));
                }
            }
            Model::External(spec) => {
                if spec.command.is_empty() {
                    return Err(config_error("model.command", "command must not be empty"));
                }
                if spec.outputs.is_empty() {
                    return Err(config_error("model.outputs", "at least one output is required"));
                }
                let mut seen = HashSet::new();
                for (i, o) in spec.outputs.iter().enumerate() {
                    if o == "point_id" || o.is_empty() || !seen.insert(o) {
                        return Err(config_error(format!("model.outputs[{i}]"), format!("invalid or duplicate output `{o}`")));
                    }
                }
                if spec.max_parallel == 0 {
                    return Err(config_error("model.max_parallel", "must be at least 1"));
                }
                if spec.batch_size == 0 {
                    return Err(config_error("model.batch_size", "must be at least 1"));
                }
                if !(spec.timeout_s > 0.0 && spec.timeout_s.is_finite()) {
                    return Err(config_error("model.timeout_s", "must be positive"));
                }
            }
        }
        if !(0.0..1.0).contains(&self.negligible_rel) {
            return Err(config_error("negligible_rel", "must lie in [0, 1)"));
        }
        self.resolve_analyses().map(|_| ())
    }

    /// Expand every analysis into a model output plus a transform chain.
    pub fn resolve_analyses(&self) -> Result<Vec<ResolvedAnalysis>> {
        let outputs = self.model.output_names();
        let mut resolved: Vec<ResolvedAnalysis> = Vec::new();
        for (n, a) in self.analyses.iter().enumerate() {
            let at = |field: &str| format!("analyses[{n}].{field}");
            if a.name.is_empty() || a.name.contains(['/', '\\']) {
                return Err(config_error(at("name"), "name must be non-empty and usable as a file name"));
            }
            if resolved.iter().any(|r| r.name == a.name) || (outputs.contains(&a.name) && !(a.output == a.name && a.transforms.is_empty())) {
                return Err(config_error(at("name"), format!("name `{}` clashes with another output", a.name)));
            }
            let (model_output, mut chain) = if outputs.contains(&a.output) {
                (a.output.clone(), Vec::new())
            } else if let Some(prev) = resolved.iter().find(|r| r.name == a.output) {
                (prev.model_output.clone(), prev.chain.clone())
            } else {
                return Err(config_error(
                    at("output"),
                    format!("`{}` is neither a model output nor an earlier analysis", a.output),
                ));
            };
            for (t, tc) in a.transforms.iter().enumerate() {
                chain.push(match tc {
                    TransformConfig::Identity => TransformSpec::Identity,
                    TransformConfig::NaturalLog => TransformSpec::NaturalLog,
                    TransformConfig::Affine { scale, offset } => TransformSpec::Affine { scale: *scale, offset: *offset },
                    TransformConfig::DivideByProduct { parameters, constant } => {
                        let mut idx = Vec::with_capacity(parameters.len());
                        for (q, name) in parameters.iter().enumerate() {
                            let i = self.parameters.iter().position(|p| &p.name == name).ok_or_else(|| {
                                config_error(format!("analyses[{n}].transforms[{t}].parameters[{q}]"), format!("unknown parameter `{name}`"))
                            })?;
                            idx.push(i);
                        }
                        if *constant == 0.0 || !constant.is_finite() {
                            return Err(config_error(format!("analyses[{n}].transforms[{t}].constant"), "must be finite and nonzero"));
                        }
                        TransformSpec::DivideByProduct { parameters: idx, constant: *constant }
                    }
                });
            }
            if a.presentations.is_empty() {
                return Err(config_error(at("presentations"), "at least one presentation is required"));
            }
            resolved.push(ResolvedAnalysis {
                name: a.name.clone(),
                model_output,
                chain,
                presentations: a.presentations.clone(),
            });
        }
        Ok(resolved)
    }

    /// Hash of everything that determines which runs exist and what they
    /// produce: parameters, model, design mode and replicate count. The seed
    /// is carried by the plan itself; analyses are post-processing only.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            schema_version: u32,
            parameters: Vec<ParameterSpec>,
            model: &'a Model,
            mode: DesignMode,
            replicates: usize,
        }
        let hashed = Hashed {
            schema_version: self.schema_version,
            parameters: self.parameter_specs(),
            model: &self.model,
            mode: self.design.mode,
            replicates: self.design.replicates,
        };
        let bytes = serde_json::to_vec(&hashed).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
