//! Source training and the two ways of adding a class to a trained source.

use std::collections::BTreeSet;

use crate::datagen::{FeatureNorm, WindowSet};
use crate::error::{Error, Result};
use crate::nncore::rng::tag;
use crate::nncore::Rng;
use crate::training::{train, TrainConfig, TrainingLog};

use super::adapter::{AdapterInput, NeuralAdapter};
use super::composite::AdapterComposite;
use super::sedcnn::{SedCnn, SedCnnConfig};

fn check_classes(data: &WindowSet, names: &[String], what: &str) -> Result<()> {
    let data_names: Vec<&str> = data.classes.iter().map(|c| c.name.as_str()).collect();
    let model_names: Vec<&str> = names.iter().map(String::as_str).collect();
    if data_names != model_names {
        return Err(Error::Data(format!(
            "{what} classes {data_names:?} do not match model classes {model_names:?}"
        )));
    }
    Ok(())
}

/// Fresh source model for the classes of `train_set`, using `norm` for inputs.
pub fn build_source(config: &SedCnnConfig, train_set: &WindowSet, norm: FeatureNorm, rng: &mut Rng) -> Result<SedCnn> {
    let names: Vec<String> = train_set.classes.iter().map(|c| c.name.clone()).collect();
    let cfg = SedCnnConfig {
        input_mels: train_set.mels,
        input_frames: train_set.frames,
        num_classes: names.len(),
        ..config.clone()
    };
    let mut model = SedCnn::new(cfg, names, &mut rng.derive(tag("init")))?;
    model.norm = norm;
    Ok(model)
}

pub fn train_source(
    model: &mut SedCnn,
    train_set: &WindowSet,
    val_set: &WindowSet,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainingLog> {
    check_classes(train_set, &model.class_names, "training")?;
    check_classes(val_set, &model.class_names, "validation")?;
    train(model, train_set, val_set, config, &mut rng.derive(tag("train")), &BTreeSet::new())
}

/// Expanded copy of `source` with a freshly initialized output for `new_class`.
/// The same `rng` gives the same expansion for both transfer methods.
pub fn expand_source(source: &SedCnn, new_class: &str, rng: &Rng) -> Result<SedCnn> {
    source.migrate(new_class, &mut rng.derive(tag("migrate")))
}

/// Fine-tunes every weight of the expanded model on the N+1 class data.
pub fn train_simple_tl(
    source: &SedCnn,
    new_class: &str,
    train_set: &WindowSet,
    val_set: &WindowSet,
    config: &TrainConfig,
    rng: &Rng,
) -> Result<(SedCnn, TrainingLog)> {
    let mut target = expand_source(source, new_class, rng)?;
    check_classes(train_set, &target.class_names, "training")?;
    check_classes(val_set, &target.class_names, "validation")?;
    let log = train(
        &mut target,
        train_set,
        val_set,
        config,
        &mut rng.derive(tag("simple")),
        &BTreeSet::new(),
    )?;
    Ok((target, log))
}

/// Trains adapter and expanded target jointly on the summed output while the
/// source stays frozen.
pub fn train_adapter_tl(
    source: &SedCnn,
    new_class: &str,
    train_set: &WindowSet,
    val_set: &WindowSet,
    config: &TrainConfig,
    hidden: usize,
    input: AdapterInput,
    rng: &Rng,
) -> Result<(AdapterComposite, TrainingLog)> {
    let target = expand_source(source, new_class, rng)?;
    check_classes(train_set, &target.class_names, "training")?;
    check_classes(val_set, &target.class_names, "validation")?;
    let n = source.num_classes();
    let adapter = NeuralAdapter::new(n, hidden, n + 1, input, &mut rng.derive(tag("adapter")))?;
    let mut model = AdapterComposite::compose(source.clone(), adapter, target)?;
    let frozen = model.source_param_names();
    let log = train(&mut model, train_set, val_set, config, &mut rng.derive(tag("adapter-tl")), &frozen)?;
    Ok((model, log))
}
