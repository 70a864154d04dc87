use std::path::{Path, PathBuf};

use mf_core::features::Task;
use mf_neural::{checkpoint, ModelParams};

use crate::error::{GenError, Result};

/// The three task models. Loaded checkpoints are read-only snapshots.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    pub basic_melody: Option<ModelParams<f32>>,
    pub rhythm: Option<ModelParams<f32>>,
    pub melody: Option<ModelParams<f32>>,
}

impl ModelSet {
    fn slot(&mut self, task: Task) -> &mut Option<ModelParams<f32>> {
        match task {
            Task::BasicMelody => &mut self.basic_melody,
            Task::Rhythm => &mut self.rhythm,
            Task::Melody => &mut self.melody,
        }
    }

    pub fn get(&self, task: Task) -> Result<&ModelParams<f32>> {
        match task {
            Task::BasicMelody => self.basic_melody.as_ref(),
            Task::Rhythm => self.rhythm.as_ref(),
            Task::Melody => self.melody.as_ref(),
        }
        .ok_or(GenError::ModelMissing(task))
    }

    pub fn insert(&mut self, params: ModelParams<f32>) {
        let task = params.config.task;
        *self.slot(task) = Some(params);
    }

    pub fn is_complete(&self) -> bool {
        Task::ALL.iter().all(|&t| self.get(t).is_ok())
    }

    pub fn checkpoint_path(dir: &Path, task: Task) -> PathBuf {
        dir.join(format!("{task}.json"))
    }

    /// Loads whichever checkpoints exist in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = ModelSet::default();
        for task in Task::ALL {
            let path = Self::checkpoint_path(dir, task);
            if path.exists() {
                let p = checkpoint::load(&path)?;
                if p.config.task != task {
                    return Err(GenError::InvalidRequest(format!("{} holds a {} model", path.display(), p.config.task)));
                }
                set.insert(p);
            }
        }
        Ok(set)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(mf_neural::NeuralError::from)?;
        for task in Task::ALL {
            if let Ok(p) = self.get(task) {
                checkpoint::save(&Self::checkpoint_path(dir, task), p)?;
            }
        }
        Ok(())
    }
}
