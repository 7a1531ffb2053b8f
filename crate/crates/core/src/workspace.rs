//! On-disk layout of a run and the gen / train / experiment steps.
//!
//! ```text
//! <root>/data/<COND>_<role>.spds
//! <root>/models/<COND>.spmlp
//! <root>/models/<COND>_history.csv
//! <root>/reports/<ID>/<axis>_sweep.csv, manifest.txt
//! ```
//!
//! Every seed is derived from the master seed, so a workspace is a pure
//! function of its [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use crate::baseband::Simulator;
use crate::config::RunConfig;
use crate::dataset::{build_dataset, load_dataset, save_dataset, Dataset, DatasetSpec, NnCondition, Role};
use crate::harness::{run_experiment, ExperimentBundle, ExperimentId};
use crate::mlp::{self, train_with_progress, EpochReport, ModelMeta, TrainHistory, TrainedModel};
use crate::rng::{self, tag};
use crate::{Error, Result};

const ROLES: [Role; 3] = [Role::Train, Role::Val, Role::Test];

fn condition_index(c: NnCondition) -> u64 {
    NnCondition::ALL.iter().position(|&x| x == c).unwrap() as u64
}

fn role_index(r: Role) -> u64 {
    ROLES.iter().position(|&x| x == r).unwrap() as u64
}

/// Config keys that do not influence a trained model.
fn affects_training(line: &str) -> bool {
    !(line.starts_with("sweep.") || line.starts_with("data.test_size"))
}

fn training_echo(text: &str) -> Vec<&str> {
    text.lines().filter(|l| affects_training(l)).collect()
}

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
    cfg: RunConfig,
    sim: Simulator,
}

impl Workspace {
    /// Workspace rooted at `cfg.workspace`. Nothing is written until a step runs.
    pub fn open(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let sim = Simulator::new(cfg.sim.clone())?;
        Ok(Self { root: cfg.workspace.clone(), cfg, sim })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn dataset_path(&self, cond: NnCondition, role: Role) -> PathBuf {
        self.root.join("data").join(format!("{cond}_{role}.spds"))
    }

    pub fn model_path(&self, cond: NnCondition) -> PathBuf {
        self.root.join("models").join(format!("{cond}.spmlp"))
    }

    pub fn history_path(&self, cond: NnCondition) -> PathBuf {
        self.root.join("models").join(format!("{cond}_history.csv"))
    }

    pub fn report_dir(&self, id: ExperimentId) -> PathBuf {
        self.root.join("reports").join(id.name())
    }

    pub fn dataset_spec(&self, cond: NnCondition, role: Role) -> DatasetSpec {
        let size = match role {
            Role::Train => self.cfg.train_size,
            Role::Val => self.cfg.val_size,
            Role::Test => self.cfg.test_size,
        };
        let seed = rng::derive_seed(self.cfg.master_seed, condition_index(cond) * 3 + role_index(role), tag::EXAMPLE);
        DatasetSpec::for_condition(cond, role, size, seed)
    }

    /// Seeds for weight initialization and batch shuffling.
    pub fn training_seeds(&self, cond: NnCondition) -> (u64, u64) {
        let i = condition_index(cond);
        (
            rng::derive_seed(self.cfg.master_seed, i, tag::INIT),
            rng::derive_seed(self.cfg.master_seed, i, tag::SHUFFLE),
        )
    }

    /// Build a dataset and write it to its path.
    pub fn generate(&self, cond: NnCondition, role: Role) -> Result<Dataset> {
        let ds = build_dataset(&self.dataset_spec(cond, role), &self.sim)?;
        let path = self.dataset_path(cond, role);
        fs::create_dir_all(path.parent().unwrap())?;
        save_dataset(&ds, &path)?;
        Ok(ds)
    }

    /// Load a dataset written by [`Workspace::generate`] under this config.
    pub fn load_dataset(&self, cond: NnCondition, role: Role) -> Result<Dataset> {
        let path = self.dataset_path(cond, role);
        if !path.exists() {
            return Err(Error::MissingDataset {
                name: format!("{cond}_{role}"),
                condition: cond.to_string(),
                role: role.to_string(),
                path: path.display().to_string(),
            });
        }
        let ds = load_dataset(&path)?;
        if ds.spec != self.dataset_spec(cond, role) || ds.sim != self.cfg.sim {
            return Err(Error::Config(format!(
                "{} was generated under a different configuration; rerun `specsense gen --condition {cond} --role {role}`",
                path.display()
            )));
        }
        Ok(ds)
    }

    /// Load the dataset if it is present and current, otherwise generate it.
    pub fn ensure_dataset(&self, cond: NnCondition, role: Role) -> Result<Dataset> {
        match self.load_dataset(cond, role) {
            Ok(ds) => Ok(ds),
            Err(_) => self.generate(cond, role),
        }
    }

    /// Train on the stored train/val sets; writes the model and history CSV.
    pub fn train(
        &self,
        cond: NnCondition,
        progress: &mut dyn FnMut(&EpochReport),
    ) -> Result<(TrainedModel, TrainHistory)> {
        let train_set = self.load_dataset(cond, Role::Train)?;
        let val_set = self.load_dataset(cond, Role::Val)?;
        self.train_on(cond, &train_set, &val_set, progress)
    }

    fn train_on(
        &self,
        cond: NnCondition,
        train_set: &Dataset,
        val_set: &Dataset,
        progress: &mut dyn FnMut(&EpochReport),
    ) -> Result<(TrainedModel, TrainHistory)> {
        let (init_seed, shuffle_seed) = self.training_seeds(cond);
        let tcfg = mlp::TrainConfig { shuffle_seed, ..self.cfg.train.clone() };
        let (params, history) = train_with_progress(&tcfg, train_set, val_set, init_seed, progress)?;
        let model = TrainedModel {
            params,
            meta: ModelMeta {
                config_echo: self.cfg.to_text(),
                best_epoch: history.best_epoch as u32,
                best_val_loss: history.best_val_loss(),
            },
        };
        let path = self.model_path(cond);
        fs::create_dir_all(path.parent().unwrap())?;
        mlp::save_model(&model, &path)?;
        fs::write(self.history_path(cond), history.to_csv())?;
        Ok((model, history))
    }

    /// Load a trained model; it must have been trained under this config.
    pub fn load_model(&self, cond: NnCondition) -> Result<TrainedModel> {
        let path = self.model_path(cond);
        if !path.exists() {
            return Err(Error::MissingModel { name: cond.to_string(), path: path.display().to_string() });
        }
        let model = mlp::load_model(&path)?;
        let current = self.cfg.to_text();
        if training_echo(&model.meta.config_echo) != training_echo(&current) {
            return Err(Error::Config(format!(
                "{} was trained under a different configuration; rerun `specsense train --condition {cond}`",
                path.display()
            )));
        }
        Ok(model)
    }

    /// Load the model if present and current, otherwise generate data and train.
    pub fn ensure_model(&self, cond: NnCondition, progress: &mut dyn FnMut(&EpochReport)) -> Result<TrainedModel> {
        if let Ok(m) = self.load_model(cond) {
            return Ok(m);
        }
        let train_set = self.ensure_dataset(cond, Role::Train)?;
        let val_set = self.ensure_dataset(cond, Role::Val)?;
        Ok(self.train_on(cond, &train_set, &val_set, progress)?.0)
    }

    /// Run an experiment with the stored models and write its bundle.
    pub fn experiment(&self, id: ExperimentId) -> Result<ExperimentBundle> {
        let models = id
            .required_models()
            .iter()
            .map(|&c| Ok((c, self.load_model(c)?.params)))
            .collect::<Result<Vec<_>>>()?;
        let bundle = run_experiment(id, &self.cfg, &self.sim, &models)?;
        bundle.write_to(self.report_dir(id))?;
        Ok(bundle)
    }
}
