//! JSON checkpoint container.
//!
//! One document per model, discriminated by `model_kind`. Floats are
//! written with shortest round-trip formatting, so save then load is
//! value-exact for 64-bit models.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::{MlpModel, OutputKind};
use crate::ensemble::{EnsembleConfig, Mode, OdlEnsemble};
use crate::error::{OdlError, Result};
use crate::oselm::{HiddenProjection, OselmInstance};
use crate::scalar::Real;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceState {
    pub beta: Vec<f64>,
    pub p: Vec<f64>,
    pub trained_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    pub precision: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub hidden: usize,
    pub m: usize,
    pub seed: u64,
    pub delta: f64,
    pub alpha: Vec<f64>,
    pub bias: Vec<f64>,
    pub instances: Vec<InstanceState>,
    pub mode: Mode,
    pub centroids: Vec<Vec<f64>>,
    pub centroid_counts: Vec<u64>,
    pub initialized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpState {
    pub layer_sizes: Vec<usize>,
    pub output: OutputKind,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "kebab-case")]
pub enum ModelState {
    OdlEnsemble(EnsembleState),
    Mlp(MlpState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    #[serde(flatten)]
    pub model: ModelState,
}

fn widen<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn narrow<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

impl Checkpoint {
    pub fn from_ensemble<T: Real>(ens: &OdlEnsemble<T>) -> Self {
        let cfg = ens.config();
        let proj = ens.projection();
        Self {
            format_version: FORMAT_VERSION,
            model: ModelState::OdlEnsemble(EnsembleState {
                precision: T::NAME.to_string(),
                n: cfg.inputs,
                hidden: cfg.hidden,
                m: cfg.inputs,
                seed: cfg.seed,
                delta: cfg.delta,
                alpha: widen(proj.alpha()),
                bias: widen(proj.bias()),
                instances: ens
                    .instances()
                    .iter()
                    .map(|i| InstanceState {
                        beta: widen(i.beta()),
                        p: widen(i.p()),
                        trained_count: i.trained_count(),
                    })
                    .collect(),
                mode: ens.mode(),
                centroids: ens.centroids().iter().map(|c| widen(c)).collect(),
                centroid_counts: ens.centroid_counts().to_vec(),
                initialized: ens.is_initialized(),
            }),
        }
    }

    pub fn from_mlp(model: &MlpModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model: ModelState::Mlp(MlpState {
                layer_sizes: model.layer_sizes().to_vec(),
                output: model.output_kind(),
                weights: model.weights().to_vec(),
                biases: model.biases().to_vec(),
            }),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.model {
            ModelState::OdlEnsemble(_) => "odl-ensemble",
            ModelState::Mlp(_) => "mlp",
        }
    }

    pub fn to_ensemble<T: Real>(&self) -> Result<OdlEnsemble<T>> {
        let s = match &self.model {
            ModelState::OdlEnsemble(s) => s,
            _ => {
                return Err(OdlError::config(format!(
                    "checkpoint holds a {} model, not an ensemble",
                    self.kind()
                )))
            }
        };
        if s.precision != T::NAME {
            return Err(OdlError::config(format!(
                "checkpoint precision is {}, requested {}",
                s.precision,
                T::NAME
            )));
        }
        if s.n != s.m {
            return Err(OdlError::config("autoencoder checkpoint requires n = m"));
        }
        let config = EnsembleConfig {
            inputs: s.n,
            hidden: s.hidden,
            instances: s.instances.len(),
            delta: s.delta,
            seed: s.seed,
        };
        let proj = HiddenProjection::from_parts(s.n, s.hidden, narrow(&s.alpha), narrow(&s.bias))?;
        let instances = s
            .instances
            .iter()
            .map(|i| OselmInstance::from_parts(s.hidden, s.m, narrow(&i.beta), narrow(&i.p), i.trained_count))
            .collect::<Result<Vec<_>>>()?;
        OdlEnsemble::from_parts(
            config,
            proj,
            instances,
            s.mode,
            s.centroids.iter().map(|c| narrow(c)).collect(),
            s.centroid_counts.clone(),
            s.initialized,
        )
    }

    pub fn to_mlp(&self) -> Result<MlpModel> {
        match &self.model {
            ModelState::Mlp(s) => {
                MlpModel::from_parts(s.layer_sizes.clone(), s.weights.clone(), s.biases.clone(), s.output)
            }
            _ => Err(OdlError::config("checkpoint does not hold an mlp model")),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| OdlError::format(path, Some(e.line()), e.to_string()))?;
        if ck.format_version != FORMAT_VERSION {
            return Err(OdlError::format(
                path,
                None,
                format!("unsupported format_version {}", ck.format_version),
            ));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| OdlError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| OdlError::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained(seed: u64) -> OdlEnsemble<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = EnsembleConfig {
            inputs: 10,
            hidden: 5,
            instances: 3,
            delta: 0.01,
            seed,
        };
        let xs: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..10).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let mut ens = OdlEnsemble::new(cfg).unwrap();
        ens.kmeans_init(&xs, Exec::Sequential).unwrap();
        ens.set_mode(Mode::Train);
        ens.train_step(&xs[3]).unwrap();
        ens
    }

    #[test]
    fn ensemble_round_trip_is_exact() {
        let ens = trained(3);
        let ck = Checkpoint::from_ensemble(&ens);
        let text = ck.to_json();
        assert!(text.contains("\"model_kind\":\"odl-ensemble\""));
        let back = Checkpoint::from_json(&text, Path::new("mem")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_ensemble::<f64>().unwrap(), ens);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let ens = trained(4);
        Checkpoint::from_ensemble(&ens).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap().to_ensemble::<f64>().unwrap();
        assert_eq!(loaded, ens);
        assert!(Checkpoint::load(&dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn mlp_round_trip_is_exact() {
        let m = MlpModel::new(&[6, 3, 6], OutputKind::Linear, 9).unwrap();
        let ck = Checkpoint::from_mlp(&m);
        assert_eq!(ck.kind(), "mlp");
        let back = Checkpoint::from_json(&ck.to_json(), Path::new("mem")).unwrap();
        assert_eq!(back.to_mlp().unwrap(), m);
        assert!(back.to_ensemble::<f64>().is_err());
    }

    #[test]
    fn precision_and_version_are_checked() {
        let ck = Checkpoint::from_ensemble(&trained(5));
        assert!(ck.to_ensemble::<f32>().is_err());
        let text = ck.to_json().replace("\"format_version\":1", "\"format_version\":99");
        assert!(Checkpoint::from_json(&text, Path::new("mem")).is_err());
        assert!(Checkpoint::from_json("{", Path::new("mem")).is_err());
    }
}
