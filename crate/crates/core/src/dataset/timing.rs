//! Per-image extraction timings written next to each descriptor file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DescriptorSet, Subset};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTiming {
    pub image_id: String,
    pub seconds: f64,
}

/// JSON sidecar `<subset>.timing.json` holding extraction seconds per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSidecar {
    pub method_tag: String,
    pub subset: Subset,
    pub per_image: Vec<ImageTiming>,
}

impl TimingSidecar {
    pub fn total_seconds(&self) -> f64 {
        self.per_image.iter().map(|t| t.seconds).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self
            .per_image
            .iter()
            .find(|t| !(t.seconds >= 0.0 && t.seconds.is_finite()))
        {
            return Err(Error::Integrity(format!(
                "timing for {} is not a finite non-negative value",
                t.image_id
            )));
        }
        Ok(())
    }

    /// Ensures the sidecar describes exactly the rows of `set`, in order.
    pub fn check_against(&self, set: &DescriptorSet) -> Result<()> {
        let ids: Vec<&str> = self.per_image.iter().map(|t| t.image_id.as_str()).collect();
        let expected: Vec<&str> = set.image_ids().iter().map(String::as_str).collect();
        if self.subset != set.subset() || self.method_tag != set.method_tag() || ids != expected {
            return Err(Error::Integrity(format!(
                "timing sidecar ({}, {}) does not match descriptor file ({}, {})",
                self.method_tag,
                self.subset,
                set.method_tag(),
                set.subset()
            )));
        }
        Ok(())
    }

    pub fn path_for(scene_dir: &Path, subset: Subset) -> PathBuf {
        scene_dir.join(format!("{subset}.timing.json"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let t: TimingSidecar = serde_json::from_str(&read_to_string(path)?)?;
        t.validate()?;
        Ok(t)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        write_atomic(path, s.as_bytes())
    }
}
