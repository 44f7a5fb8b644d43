//! Run configuration: a TOML file, optionally starting from a named preset,
//! with `--set section.key=value` overrides applied last.

use std::path::Path;

use msff_core::eval::{AblationOptions, EvalOptions};
use msff_core::model::ModelConfig;
use msff_core::synth::GenConfig;
use msff_core::train::TrainConfig;
use msff_core::{Error, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// File name of the effective configuration written into every output directory.
pub const CONFIG_ECHO: &str = "config.toml";

/// Starting point for the `model` section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// The published architecture at 256 px.
    #[default]
    Full,
    /// Narrow 64 px network for CPU experiments.
    Micro,
}

impl Preset {
    pub fn model(self) -> ModelConfig {
        match self {
            Preset::Full => ModelConfig::default(),
            Preset::Micro => ModelConfig::micro(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub generator: GenConfig,
    pub eval: EvalOptions,
    pub ablation: AblationOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Full,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            generator: GenConfig::default(),
            eval: EvalOptions::default(),
            ablation: AblationOptions::default(),
        }
    }
}

/// A `key.path=value` override; the value is parsed as a TOML literal and
/// falls back to a plain string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl std::str::FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
        let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
        if path.iter().any(String::is_empty) {
            return Err(format!("malformed key `{key}`"));
        }
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        Ok(Self { path, value })
    }
}

fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_path(table: &mut Table, o: &Override) -> Result<()> {
    let key = o.path.join(".");
    let (last, parents) = o.path.split_last().expect("nonempty path");
    let mut cur = table;
    for p in parents {
        cur = match cur.entry(p.clone()).or_insert_with(|| Value::Table(Table::new())) {
            Value::Table(t) => t,
            _ => return Err(Error::config(key, format!("`{p}` is not a section"))),
        };
    }
    cur.insert(last.clone(), o.value.clone());
    Ok(())
}

fn defaults_for(preset: Preset) -> Table {
    let base = RunConfig {
        preset,
        model: preset.model(),
        ..RunConfig::default()
    };
    Table::try_from(&base).expect("defaults serialize to TOML")
}

/// Field named in a serde error message, if any (``unknown field `x` ``).
fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "config".into())
}

fn user_table(path: Option<&Path>, overrides: &[Override]) -> Result<Table> {
    let mut user = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<Table>()
                .map_err(|e| Error::format(p, "syntax", e.message().to_string()))?
        }
        None => Table::new(),
    };
    for o in overrides {
        set_path(&mut user, o)?;
    }
    Ok(user)
}

/// Whether the file or overrides choose a model (a `model` section or a preset).
pub fn specifies_model(path: Option<&Path>, overrides: &[Override]) -> Result<bool> {
    let user = user_table(path, overrides)?;
    Ok(user.contains_key("model") || user.contains_key("preset"))
}

/// Builds the effective configuration. Precedence: `--set` overrides, then the
/// file, then the preset's defaults. Every section is validated.
pub fn load_config(path: Option<&Path>, overrides: &[Override]) -> Result<RunConfig> {
    let user = user_table(path, overrides)?;
    let preset: Preset = match user.get("preset") {
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("preset", e.message().to_string()))?,
        None => Preset::default(),
    };
    let mut table = defaults_for(preset);
    merge(&mut table, user);
    let config: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(field_of(e.message()), e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.generator.validate()?;
        self.eval.validate()?;
        self.ablation.validate()
    }

    /// Writes the configuration as TOML into `dir`.
    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        let path = dir.join(CONFIG_ECHO);
        let text = toml::to_string_pretty(self).map_err(|e| Error::config("config", e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(s: &str) -> Override {
        s.parse().unwrap()
    }

    #[test]
    fn overrides_parse_toml_literals() {
        assert_eq!(set("train.learning_rate=0.01").value, Value::Float(0.01));
        assert_eq!(set("model.use_aomr=false").value, Value::Boolean(false));
        assert_eq!(set("train.optimizer=sgd").value, Value::String("sgd".into()));
        assert_eq!(
            set("generator.palm_scale=[1.0, 1.1]").value.as_array().unwrap().len(),
            2
        );
        assert!("train.seed".parse::<Override>().is_err());
        assert!("train..seed=1".parse::<Override>().is_err());
    }

    #[test]
    fn preset_then_overrides() {
        let c = load_config(
            None,
            &[set("preset=micro"), set("model.num_msff=3"), set("train.seed=5")],
        )
        .unwrap();
        assert_eq!(
            c.model,
            ModelConfig {
                num_msff: 3,
                ..ModelConfig::micro()
            }
        );
        assert_eq!(c.train.seed, 5);
        assert_eq!(load_config(None, &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_and_invalid_fields_are_named() {
        match load_config(None, &[set("train.learnig_rate=1")]) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "learnig_rate"),
            other => panic!("{other:?}"),
        }
        match load_config(None, &[set("train.learning_rate=-1.0")]) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "learning_rate"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn echo_reloads_to_the_same_config() {
        let dir = tempfile::tempdir().unwrap();
        let c = load_config(None, &[set("preset=micro"), set("train.max_steps=7")]).unwrap();
        c.write_echo(dir.path()).unwrap();
        assert_eq!(load_config(Some(&dir.path().join(CONFIG_ECHO)), &[]).unwrap(), c);
    }
}
