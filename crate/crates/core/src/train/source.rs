use std::path::PathBuf;

use crate::data::{case_name, list_cases, load_case, synth_dataset_case, VolumeSample};
use crate::error::{Error, Result};

use super::config::{RunConfig, SyntheticSpec};

/// Where cases come from: a directory of case folders or generated phantoms.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Directory(PathBuf),
    Synthetic(SyntheticSpec),
}

impl DataSource {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        match (&cfg.data_root, cfg.synthetic) {
            (Some(root), None) => Ok(Self::Directory(root.clone())),
            (None, Some(spec)) => Ok(Self::Synthetic(spec)),
            _ => Err(Error::Config("set exactly one of data_root and synthetic".into())),
        }
    }

    pub fn case_ids(&self) -> Result<Vec<String>> {
        match self {
            Self::Directory(root) => list_cases(root).map_err(|e| Error::Data(e.to_string())),
            Self::Synthetic(spec) => Ok((0..spec.cases).map(case_name).collect()),
        }
    }

    pub fn load(&self, case_id: &str) -> Result<VolumeSample> {
        match self {
            Self::Directory(root) => load_case(root.join(case_id), case_id),
            Self::Synthetic(spec) => {
                let index = (0..spec.cases)
                    .find(|&i| case_name(i) == case_id)
                    .ok_or_else(|| Error::Data(format!("no synthetic case named {case_id}")))?;
                Ok(synth_dataset_case(spec.seed, index, spec.dims)?.sample)
            }
        }
    }
}
