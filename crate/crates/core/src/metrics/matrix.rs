//! Leave-one-out experiment matrix and output ablation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{generate_dataset, EventClass, FeatureNorm, GenConfig, Regime, SplitCounts, WindowSet};
use crate::error::{Error, Result};
use crate::format::write_file;
use crate::models::{
    build_source, parameter_hash, save_composite, save_model, train_adapter_tl, train_simple_tl, train_source,
    AdapterComposite, AdapterInput, SedCnnConfig, ADAPTER_HIDDEN,
};
use crate::nncore::rng::tag;
use crate::nncore::{derive_seed, Rng};
use crate::training::{predict_all, TrainConfig, Trainable, TrainingLog};

use super::f1::{f1_segment, F1Report};
use super::report::{emit_report, ReportFormat, ReportRow};

/// Which outputs of an N+1 class model to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassSubset {
    All,
    /// The first N, previously learned, classes.
    Ds,
    /// The last class.
    New,
}

impl ClassSubset {
    pub fn indices(self, num_classes: usize) -> Vec<usize> {
        match self {
            ClassSubset::All => (0..num_classes).collect(),
            ClassSubset::Ds => (0..num_classes.saturating_sub(1)).collect(),
            ClassSubset::New => num_classes.checked_sub(1).into_iter().collect(),
        }
    }
}

impl std::str::FromStr for ClassSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(ClassSubset::All),
            "ds" => Ok(ClassSubset::Ds),
            "new" => Ok(ClassSubset::New),
            _ => Err(Error::Config(format!("unknown class subset `{s}` (all, ds, new)"))),
        }
    }
}

/// Scores a model on `data` over the given output indices.
pub fn evaluate<M: Trainable>(model: &M, data: &WindowSet, subset: &[usize], threshold: f64) -> Result<F1Report> {
    if model.num_outputs() != data.num_classes() {
        return Err(Error::Data(format!(
            "model has {} outputs but the data has {} classes",
            model.num_outputs(),
            data.num_classes()
        )));
    }
    let preds = predict_all(model, data, 64)?;
    f1_segment(&preds, data.labels(), data.num_classes(), threshold, subset)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationScores {
    pub f1_a: f64,
    pub f1_b: f64,
    pub f1_c: f64,
}

/// Micro F1 over all N+1 classes of the adapter output, target output and
/// their merge, each thresholded on its own.
pub fn run_ablation(model: &AdapterComposite, data: &WindowSet, threshold: f64) -> Result<AblationScores> {
    let k = model.num_classes();
    if data.num_classes() != k {
        return Err(Error::Data(format!(
            "composite has {k} outputs but the data has {} classes",
            data.num_classes()
        )));
    }
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(64) {
        let (x, _) = data.batch(chunk)?;
        let (pa, pb, pc) = model.logits(&x)?.probabilities();
        a.extend_from_slice(pa.data());
        b.extend_from_slice(pb.data());
        c.extend_from_slice(pc.data());
    }
    let all: Vec<usize> = (0..k).collect();
    let score = |p: &[f32]| f1_segment(p, data.labels(), k, threshold, &all).map(|r| r.micro_f1);
    Ok(AblationScores {
        f1_a: score(&a)?,
        f1_b: score(&b)?,
        f1_c: score(&c)?,
    })
}

/// Everything a matrix run needs besides the classes and the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub counts: SplitCounts,
    pub generator: GenConfig,
    /// Input geometry is taken from the generator.
    pub model: SedCnnConfig,
    pub adapter_hidden: usize,
    pub adapter_input: AdapterInput,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn new(regime: Regime, counts: SplitCounts) -> Self {
        ExperimentConfig {
            regime,
            counts,
            generator: GenConfig::default(),
            model: SedCnnConfig::default(),
            adapter_hidden: ADAPTER_HIDDEN,
            adapter_input: AdapterInput::Logits,
            train: TrainConfig::default(),
        }
    }

    pub fn model_config(&self) -> SedCnnConfig {
        SedCnnConfig {
            input_mels: self.generator.mels,
            input_frames: self.generator.frames_per_second,
            ..self.model.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodScores {
    pub ds: F1Report,
    pub new: F1Report,
    pub all: F1Report,
    pub epochs: usize,
    pub best_epoch: usize,
}

/// One leave-one-out scenario: source trained on N classes, one class added.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub index: usize,
    pub scenario: String,
    pub source_classes: Vec<String>,
    pub new_class: String,
    pub seed: u64,
    pub ms_ds: F1Report,
    pub source_epochs: usize,
    pub simple: MethodScores,
    pub adapter: MethodScores,
    pub ablation: AblationScores,
    pub source_hash: String,
    pub source_frozen: bool,
}

impl ScenarioReport {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            scenario: self.scenario.clone(),
            values: [
                self.ms_ds.micro_f1,
                self.simple.ds.micro_f1,
                self.simple.new.micro_f1,
                self.simple.all.micro_f1,
                self.adapter.ds.micro_f1,
                self.adapter.new.micro_f1,
                self.adapter.all.micro_f1,
                self.ablation.f1_a,
                self.ablation.f1_b,
                self.ablation.f1_c,
            ],
        }
    }
}

/// `C1C2C3`-style id from the 1-based positions of the source classes.
pub fn scenario_id(num_classes: usize, held_out: usize) -> String {
    (0..num_classes)
        .filter(|&i| i != held_out)
        .map(|i| format!("C{}", i + 1))
        .collect()
}

fn method_scores<M: Trainable>(model: &M, test: &WindowSet, log: &TrainingLog, threshold: f64) -> Result<MethodScores> {
    let k = model.num_outputs();
    Ok(MethodScores {
        ds: evaluate(model, test, &ClassSubset::Ds.indices(k), threshold)?,
        new: evaluate(model, test, &ClassSubset::New.indices(k), threshold)?,
        all: evaluate(model, test, &ClassSubset::All.indices(k), threshold)?,
        epochs: log.epochs_run(),
        best_epoch: log.best_epoch,
    })
}

fn write_log(out: Option<&Path>, name: &str, log: &TrainingLog) -> Result<()> {
    match out {
        Some(dir) => log.write_csv(&dir.join("logs").join(format!("{name}.log.csv"))),
        None => Ok(()),
    }
}

/// Runs the scenario that holds out `classes[held_out]`.
pub fn run_scenario(
    classes: &[EventClass],
    held_out: usize,
    config: &ExperimentConfig,
    master_seed: u64,
    out: Option<&Path>,
) -> Result<ScenarioReport> {
    let scenario = scenario_id(classes.len(), held_out);
    let seed = derive_seed(master_seed, tag(&scenario));
    let source_classes: Vec<EventClass> =
        classes.iter().enumerate().filter(|&(i, _)| i != held_out).map(|(_, c)| c.clone()).collect();
    let new_class = classes[held_out].clone();
    let mut target_classes = source_classes.clone();
    target_classes.push(new_class.clone());

    let ds = generate_dataset(&source_classes, config.regime, config.counts, derive_seed(seed, tag("ds")), &config.generator)?;
    let dt = generate_dataset(&target_classes, config.regime, config.counts, derive_seed(seed, tag("dt")), &config.generator)?;
    let norm = FeatureNorm::fit(&ds.train);
    let ds_train = WindowSet::from_dataset(&ds.train, &source_classes)?;
    let ds_val = WindowSet::from_dataset(&ds.val, &source_classes)?;
    let ds_test = WindowSet::from_dataset(&ds.test, &source_classes)?;
    let dt_train = WindowSet::from_dataset(&dt.train, &target_classes)?;
    let dt_val = WindowSet::from_dataset(&dt.val, &target_classes)?;
    let dt_test = WindowSet::from_dataset(&dt.test, &target_classes)?;
    let threshold = config.train.threshold;

    let rng = Rng::new(seed);
    let mut source = build_source(&config.model_config(), &ds_train, norm, &mut rng.derive(tag("source")))?;
    let source_log = train_source(&mut source, &ds_train, &ds_val, &config.train, &mut rng.derive(tag("source")))?;
    write_log(out, &format!("{scenario}_source"), &source_log)?;
    let ms_ds = evaluate(&source, &ds_test, &ClassSubset::All.indices(source.num_classes()), threshold)?;
    let source_hash = parameter_hash(&source);

    let tl_rng = rng.derive(tag("transfer"));
    let (simple, simple_log) =
        train_simple_tl(&source, &new_class.name, &dt_train, &dt_val, &config.train, &tl_rng)?;
    write_log(out, &format!("{scenario}_simple"), &simple_log)?;
    let (adapter, adapter_log) = train_adapter_tl(
        &source,
        &new_class.name,
        &dt_train,
        &dt_val,
        &config.train,
        config.adapter_hidden,
        config.adapter_input,
        &tl_rng,
    )?;
    write_log(out, &format!("{scenario}_adapter"), &adapter_log)?;
    let source_frozen = parameter_hash(&adapter.source) == source_hash;
    if !source_frozen {
        return Err(Error::Training("source parameters changed during adapter training".into()));
    }

    if let Some(dir) = out {
        save_model(&source, &dir.join("models").join(format!("{scenario}_source.sedm")))?;
        save_model(&simple, &dir.join("models").join(format!("{scenario}_simple.sedm")))?;
        save_composite(&adapter, &dir.join("models").join(format!("{scenario}_adapter.sedm")))?;
    }

    Ok(ScenarioReport {
        index: held_out,
        scenario,
        source_classes: source_classes.iter().map(|c| c.name.clone()).collect(),
        new_class: new_class.name.clone(),
        seed,
        ms_ds,
        source_epochs: source_log.epochs_run(),
        simple: method_scores(&simple, &dt_test, &simple_log, threshold)?,
        adapter: method_scores(&adapter, &dt_test, &adapter_log, threshold)?,
        ablation: run_ablation(&adapter, &dt_test, threshold)?,
        source_hash,
        source_frozen,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixResult {
    pub scenarios: Vec<ScenarioReport>,
    pub overall: ReportRow,
}

impl MatrixResult {
    /// Scenario rows followed by the overall row.
    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows: Vec<ReportRow> = self.scenarios.iter().map(ScenarioReport::row).collect();
        rows.push(self.overall.clone());
        rows
    }
}

/// Holds out every class in turn. With `out`, each scenario's JSON report is
/// written to `reports/` as soon as it finishes, and `matrix.csv` and
/// `matrix.md` once all are done.
pub fn run_matrix(
    classes: &[EventClass],
    config: &ExperimentConfig,
    master_seed: u64,
    out: Option<&Path>,
) -> Result<MatrixResult> {
    if classes.len() < 2 {
        return Err(Error::Config(format!(
            "the matrix needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let mut scenarios = Vec::with_capacity(classes.len());
    for held_out in 0..classes.len() {
        let report = run_scenario(classes, held_out, config, master_seed, out).map_err(|e| Error::Scenario {
            scenario: scenario_id(classes.len(), held_out),
            source: Box::new(e),
        })?;
        if let Some(dir) = out {
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Format(format!("scenario report: {e}")))?;
            write_file(
                &dir.join("reports").join(format!("scenario_{}_{}.json", held_out + 1, report.scenario)),
                json.as_bytes(),
            )?;
        }
        scenarios.push(report);
    }
    let rows: Vec<ReportRow> = scenarios.iter().map(ScenarioReport::row).collect();
    let overall = ReportRow::mean(&rows).expect("at least two scenarios");
    let result = MatrixResult { scenarios, overall };
    if let Some(dir) = out {
        let rows = result.rows();
        emit_report(&rows, ReportFormat::Csv, &dir.join("reports").join("matrix.csv"))?;
        emit_report(&rows, ReportFormat::Markdown, &dir.join("reports").join("matrix.md"))?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets() {
        assert_eq!(ClassSubset::All.indices(3), vec![0, 1, 2]);
        assert_eq!(ClassSubset::Ds.indices(3), vec![0, 1]);
        assert_eq!(ClassSubset::New.indices(3), vec![2]);
    }

    #[test]
    fn scenario_ids() {
        assert_eq!(scenario_id(4, 3), "C1C2C3");
        assert_eq!(scenario_id(4, 0), "C2C3C4");
        assert_eq!(scenario_id(2, 1), "C1");
    }

    #[test]
    fn matrix_needs_two_classes() {
        let cfg = ExperimentConfig::new(Regime::Clean, SplitCounts::DESK_CLEAN);
        assert!(run_matrix(&EventClass::list(&["a"]), &cfg, 0, None).is_err());
    }
}
