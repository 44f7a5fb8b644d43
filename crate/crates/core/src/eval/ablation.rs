use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalOptions, EvalReport};
use crate::error::{Error, Result};
use crate::hands::prepare_hands;
use crate::model::{init_model, ModelConfig};
use crate::synth::Sample;
use crate::train::{train, TrainConfig};

/// One configuration of the ablation and cascade-depth sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    DelSshfr,
    DelTp,
    DelAt,
    DelLw,
    DelAomr,
    /// Full model with this many fusion modules.
    Msff(usize),
}

impl Variant {
    /// The six component ablations followed by the depths 1 to 4.
    pub fn standard_sweep() -> Vec<Variant> {
        let mut out = vec![
            Variant::Full,
            Variant::DelSshfr,
            Variant::DelTp,
            Variant::DelAt,
            Variant::DelLw,
            Variant::DelAomr,
        ];
        out.extend((1..=4).map(Variant::Msff));
        out
    }

    pub fn name(&self) -> String {
        match self {
            Variant::Full => "full".into(),
            Variant::DelSshfr => "del_sshfr".into(),
            Variant::DelTp => "del_tp".into(),
            Variant::DelAt => "del_at".into(),
            Variant::DelLw => "del_lw".into(),
            Variant::DelAomr => "del_aomr".into(),
            Variant::Msff(n) => format!("msff_{n}"),
        }
    }

    /// `base` with this variant's switch applied.
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        match *self {
            Variant::Full => {}
            Variant::DelSshfr => c.use_sshfr = false,
            Variant::DelTp => c.use_transpose = false,
            Variant::DelAt => c.use_attention = false,
            Variant::DelLw => c.use_losswise = false,
            Variant::DelAomr => c.use_aomr = false,
            Variant::Msff(n) => c.num_msff = n,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationOptions {
    pub variants: Vec<Variant>,
    /// Share of images (taken from the end) held out for evaluation.
    pub eval_fraction: f64,
}

impl Default for AblationOptions {
    fn default() -> Self {
        Self {
            variants: Variant::standard_sweep(),
            eval_fraction: 0.25,
        }
    }
}

impl AblationOptions {
    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::config("variants", "needs at least one variant"));
        }
        if self.variants.contains(&Variant::Msff(0)) {
            return Err(Error::config("variants", "a cascade needs at least one fusion module"));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(Error::config("eval_fraction", "must lie strictly between 0 and 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub variant: String,
    pub model: ModelConfig,
    pub parameter_count: usize,
    /// Total loss of the last training step.
    pub final_loss: Option<f64>,
    pub train_seconds: f64,
    pub report: Option<EvalReport>,
    /// Why the variant did not complete.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub train_images: usize,
    pub eval_images: usize,
    pub train: TrainConfig,
    pub entries: Vec<AblationEntry>,
}

fn split(samples: &[Sample], fraction: f64) -> Result<(&[Sample], &[Sample])> {
    if samples.is_empty() {
        return Err(Error::Argument("ablation needs at least one image".into()));
    }
    if samples.len() == 1 {
        return Ok((samples, samples));
    }
    let held = ((samples.len() as f64 * fraction).ceil() as usize).clamp(1, samples.len() - 1);
    Ok(samples.split_at(samples.len() - held))
}

fn run_variant(
    train_set: &[Sample],
    eval_set: &[Sample],
    model: &ModelConfig,
    config: &TrainConfig,
    options: &EvalOptions,
) -> Result<(Option<f64>, EvalReport)> {
    let hands = prepare_hands(train_set, model, config.margin, config.sigma)?;
    let state = train(&hands, model, config)?;
    let report = evaluate(eval_set, &state.params, model, options)?;
    Ok((state.history.last().map(|r| r.total_loss), report))
}

/// Trains and evaluates every requested variant from the same seed. A failing
/// variant is recorded with its error and the sweep continues.
pub fn run_ablation(
    samples: &[Sample],
    base: &ModelConfig,
    config: &TrainConfig,
    options: &AblationOptions,
    eval: &EvalOptions,
) -> Result<AblationReport> {
    base.validate()?;
    config.validate()?;
    options.validate()?;
    eval.validate()?;
    let (train_set, eval_set) = split(samples, options.eval_fraction)?;
    let entries = options
        .variants
        .iter()
        .map(|variant| {
            let model = variant.apply(base);
            let parameter_count = init_model::<f32>(&model, config.seed).map_or(0, |p| p.scalar_count());
            let start = Instant::now();
            let outcome = run_variant(train_set, eval_set, &model, config, eval);
            let train_seconds = start.elapsed().as_secs_f64();
            let (final_loss, report, error) = match outcome {
                Ok((loss, report)) => (loss, Some(report), None),
                Err(e) => {
                    log::warn!("variant {} failed: {e}", variant.name());
                    (None, None, Some(e.to_string()))
                }
            };
            AblationEntry {
                variant: variant.name(),
                model,
                parameter_count,
                final_loss,
                train_seconds,
                report,
                error,
            }
        })
        .collect();
    Ok(AblationReport {
        train_images: train_set.len(),
        eval_images: eval_set.len(),
        train: config.clone(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_has_ten_distinct_variants() {
        let sweep = Variant::standard_sweep();
        assert_eq!(sweep.len(), 10);
        let mut names: Vec<_> = sweep.iter().map(Variant::name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 10);
    }

    #[test]
    fn each_variant_flips_one_switch() {
        let base = ModelConfig::micro();
        assert_eq!(Variant::Full.apply(&base), base);
        assert!(!Variant::DelAt.apply(&base).use_attention);
        assert!(!Variant::DelSshfr.apply(&base).use_sshfr);
        assert_eq!(Variant::Msff(4).apply(&base).num_msff, 4);
        let del_lw = Variant::DelLw.apply(&base);
        assert_eq!(
            ModelConfig {
                use_losswise: true,
                ..del_lw
            },
            base
        );
    }

    #[test]
    fn variant_names_round_trip_through_serde() {
        let v: Variant = serde_json::from_str("\"del_aomr\"").unwrap();
        assert_eq!(v, Variant::DelAomr);
        let v: Variant = serde_json::from_str("{\"msff\":3}").unwrap();
        assert_eq!(v, Variant::Msff(3));
    }
}
