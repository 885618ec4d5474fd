//! Task evaluation: train each method on a scenario and score it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{self, MlpModel, OutputKind, TrainConfig};
use crate::datasets::{build_task, class_ids, SampleSource, TaskData, TaskName};
use crate::ensemble::{EnsembleConfig, OdlEnsemble};
use crate::error::{OdlError, Result};
use crate::exec::Exec;
use crate::metrics::{auc, classification_accuracy, ClassMapping, MetricReport};
use crate::oselm::DEFAULT_DELTA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Ensemble initialised and trained on the deployed environment.
    Odl,
    /// Same ensemble trained on the silent environment, prediction only.
    OselmFrozen,
    /// Backprop autoencoder trained on the silent environment.
    DnnAe,
    /// Backprop classifier trained on the silent environment.
    DnnClassifier,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Odl, Method::OselmFrozen, Method::DnnAe, Method::DnnClassifier];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Odl => "odl",
            Method::OselmFrozen => "oselm-frozen",
            Method::DnnAe => "dnn-ae",
            Method::DnnClassifier => "dnn-classifier",
        }
    }

    pub fn supports(self, task: TaskName) -> bool {
        match self {
            Method::Odl | Method::OselmFrozen => true,
            Method::DnnAe => !task.is_classification(),
            Method::DnnClassifier => task.is_classification(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = OdlError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            OdlError::invalid(format!(
                "unknown method {s:?}; expected one of {}",
                Method::ALL.map(|m| m.as_str()).join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub hidden: usize,
    pub instances: usize,
    pub delta: f64,
    pub seed: u64,
    pub scenarios: usize,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            hidden: 32,
            instances: 4,
            delta: DEFAULT_DELTA,
            seed: 0,
            scenarios: 1,
            exec: Exec::Sequential,
        }
    }
}

/// Result of one scenario. `scores` holds anomaly scores for AUC tasks,
/// `classes` the mapped predicted class of each evaluation sample for the
/// classification task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub report: MetricReport,
    pub scores: Option<Vec<f64>>,
    pub classes: Option<Vec<Option<u32>>>,
}

fn ensemble_for(data: &TaskData, opts: &EvalOptions, seed: u64) -> EnsembleConfig {
    EnsembleConfig {
        inputs: data.eval.dim(),
        hidden: opts.hidden,
        instances: opts.instances,
        delta: opts.delta,
        seed,
    }
}

/// Evaluate one prepared scenario.
pub fn evaluate_scenario(data: &TaskData, method: Method, opts: &EvalOptions, seed: u64) -> Result<ScenarioOutcome> {
    let task = data.task;
    if !method.supports(task) {
        return Err(OdlError::config(format!(
            "method {method} does not apply to task {task} ({})",
            if task.is_classification() {
                "classification task"
            } else {
                "anomaly detection task"
            }
        )));
    }
    let train = match method {
        Method::Odl => &data.train,
        _ => &data.reference_train,
    };
    let train_x = train.spectra();
    let eval_x = data.eval.spectra();
    let inner = opts.exec;

    let mut report = MetricReport {
        task: task.to_string(),
        method: method.to_string(),
        auc: None,
        accuracy: None,
        n_train: train_x.len(),
        n_eval: eval_x.len(),
        seed,
    };

    if task.is_classification() {
        let truth_train = class_ids(train).ok_or_else(|| OdlError::invalid("training stream lacks class labels"))?;
        let truth_eval = data
            .eval_classes()
            .ok_or_else(|| OdlError::invalid("evaluation stream lacks class labels"))?;
        let (predicted, mapping) = match method {
            Method::DnnClassifier => {
                let mut classes: Vec<u32> = truth_train.clone();
                classes.sort_unstable();
                classes.dedup();
                let idx: Vec<usize> = truth_train
                    .iter()
                    .map(|c| classes.binary_search(c).expect("class present"))
                    .collect();
                let layers = baseline::classifier_layers(train_x[0].len(), classes.len());
                let mut model = MlpModel::new(&layers, OutputKind::Softmax, seed)?;
                baseline::train_classifier(&mut model, &train_x, &idx, &TrainConfig::classifier(seed))?;
                let pred = eval_x
                    .iter()
                    .map(|x| model.predict_class(x))
                    .collect::<Result<Vec<_>>>()?;
                (pred, ClassMapping::identity(&classes))
            }
            _ => {
                let mut ens = OdlEnsemble::<f64>::new(ensemble_for(data, opts, seed))?;
                ens.kmeans_init(&train_x, inner)?;
                let on_train: Vec<usize> = ens.predict_batch(&train_x, inner)?.iter().map(|d| d.class).collect();
                let mapping = ClassMapping::greedy(&on_train, &truth_train)?;
                let pred = ens.predict_batch(&eval_x, inner)?.iter().map(|d| d.class).collect();
                (pred, mapping)
            }
        };
        let acc = classification_accuracy(&predicted, &truth_eval, &mapping)?;
        report.accuracy = Some(acc.accuracy);
        return Ok(ScenarioOutcome {
            report,
            scores: None,
            classes: Some(predicted.iter().map(|&k| mapping.get(k)).collect()),
        });
    }

    let scores: Vec<f64> = match method {
        Method::DnnAe => {
            let layers = baseline::autoencoder_layers(train_x[0].len());
            let mut model = MlpModel::new(&layers, OutputKind::Linear, seed)?;
            baseline::train_autoencoder(&mut model, &train_x, &TrainConfig::autoencoder(seed))?;
            eval_x
                .iter()
                .map(|x| model.reconstruction_error(x))
                .collect::<Result<_>>()?
        }
        _ => baseline::frozen_oselm_baseline(ensemble_for(data, opts, seed), &train_x, &eval_x, inner)?.1,
    };
    report.auc = Some(auc(&scores, &data.eval_anomalous())?);
    Ok(ScenarioOutcome {
        report,
        scores: Some(scores),
        classes: None,
    })
}

/// Run `opts.scenarios` scenarios with seeds `opts.seed + i`, in parallel
/// when `opts.exec` allows. Output order follows the scenario index.
pub fn evaluate<S: SampleSource + ?Sized>(
    task: TaskName,
    method: Method,
    source: &S,
    opts: &EvalOptions,
) -> Result<Vec<ScenarioOutcome>> {
    if opts.scenarios == 0 {
        return Err(OdlError::config("at least one scenario is required"));
    }
    if !method.supports(task) {
        return Err(OdlError::config(format!("method {method} does not apply to task {task}")));
    }
    opts.exec
        .map_range(opts.scenarios, |i| {
            let seed = opts.seed.wrapping_add(i as u64);
            let data = build_task(task, source, seed)?;
            evaluate_scenario(&data, method, opts, seed)
        })
        .into_iter()
        .collect()
}

/// Mean and population standard deviation of the scenario metrics.
pub fn summarize(outcomes: &[ScenarioOutcome]) -> Option<(f64, f64)> {
    let vals: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.report.auc.or(o.report.accuracy))
        .collect();
    if vals.is_empty() {
        return None;
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::FanScene;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }

    #[test]
    fn incompatible_pairs_are_rejected() {
        let scene = FanScene::default();
        let opts = EvalOptions::default();
        assert!(evaluate(TaskName::FourSpeeds, Method::DnnAe, &scene, &opts).is_err());
        assert!(evaluate(TaskName::Rpm0, Method::DnnClassifier, &scene, &opts).is_err());
    }

    #[test]
    fn scenarios_are_deterministic_and_order_independent() {
        let scene = FanScene::default();
        let seq = EvalOptions {
            scenarios: 3,
            seed: 10,
            ..EvalOptions::default()
        };
        let par = EvalOptions {
            exec: Exec::Parallel,
            ..seq
        };
        let a = evaluate(TaskName::Rpm2000, Method::Odl, &scene, &seq).unwrap();
        let b = evaluate(TaskName::Rpm2000, Method::Odl, &scene, &par).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(a[1].report.seed, 11);
        assert!(summarize(&a).is_some());
    }

    fn mean_auc(task: TaskName, method: Method, scene: &FanScene) -> f64 {
        let opts = EvalOptions {
            scenarios: 3,
            seed: 20,
            exec: Exec::Parallel,
            ..EvalOptions::default()
        };
        summarize(&evaluate(task, method, scene, &opts).unwrap()).unwrap().0
    }

    #[test]
    fn frozen_baseline_matches_odl_without_shift() {
        let mut scene = FanScene::default();
        scene.noise_source.amplitude = 0.0;
        let odl = mean_auc(TaskName::Rpm2000, Method::Odl, &scene);
        let frozen = mean_auc(TaskName::Rpm2000, Method::OselmFrozen, &scene);
        assert!((odl - frozen).abs() < 0.05, "odl {odl} frozen {frozen}");
    }

    #[test]
    fn frozen_baseline_falls_behind_under_shift() {
        let scene = FanScene::default();
        let odl = mean_auc(TaskName::Rpm2500, Method::Odl, &scene);
        let frozen = mean_auc(TaskName::Rpm2500, Method::OselmFrozen, &scene);
        assert!(frozen < odl, "odl {odl} frozen {frozen}");
    }
}
