//! Pair retrieval metrics per scene and their dataset-level means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_truth::GroundTruthMatrix;
use crate::retrieval::PairRanking;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

/// Denominator of AP@k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApNormalizer {
    /// `min(k, total_positives)`.
    #[default]
    MinKPositives,
    /// `k`.
    K,
}

/// `rel[r] = 1` iff the r-th ranked pair is a ground-truth match.
pub fn relevance_vector(ranking: &PairRanking, gt: &GroundTruthMatrix, k: usize) -> Result<Vec<bool>> {
    if ranking.entries.len() < k {
        return Err(Error::Config(format!(
            "ranking of scene {} has {} entries, {k} requested",
            ranking.scene_id,
            ranking.entries.len()
        )));
    }
    ranking.entries[..k]
        .iter()
        .map(|e| {
            gt.get(e.index_a, e.index_b).map(|l| l.is_match).ok_or_else(|| {
                Error::Integrity(format!(
                    "scene {}: no ground-truth label for pair ({}, {})",
                    gt.scene_id, e.index_a, e.index_b
                ))
            })
        })
        .collect()
}

fn hits(rel: &[bool], k: usize) -> usize {
    rel[..k].iter().filter(|r| **r).count()
}

/// TP / k over the first `k` entries.
pub fn precision_at_k(rel: &[bool], k: usize) -> f64 {
    assert!(k >= 1 && rel.len() >= k, "precision_at_k needs 1 <= k <= |rel|");
    hits(rel, k) as f64 / k as f64
}

/// 1 iff any of the first `k` entries is relevant.
pub fn recall_at_k(rel: &[bool], k: usize) -> f64 {
    assert!(k >= 1 && rel.len() >= k, "recall_at_k needs 1 <= k <= |rel|");
    if rel[..k].iter().any(|r| *r) {
        1.0
    } else {
        0.0
    }
}

/// `Σ_{r≤k} rel_r · P@r / norm`; `None` when the scene has no positives.
pub fn average_precision_at_k(
    rel: &[bool],
    k: usize,
    total_positives: usize,
    normalizer: ApNormalizer,
) -> Option<f64> {
    assert!(k >= 1 && rel.len() >= k, "average_precision_at_k needs 1 <= k <= |rel|");
    if total_positives == 0 {
        return None;
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (r, relevant) in rel[..k].iter().enumerate() {
        if *relevant {
            tp += 1;
            sum += tp as f64 / (r + 1) as f64;
        }
    }
    let norm = match normalizer {
        ApNormalizer::MinKPositives => k.min(total_positives),
        ApNormalizer::K => k,
    };
    Some(sum / norm as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub p_at_k: f64,
    pub r_at_k: f64,
    /// Absent when the scene has no ground-truth positives.
    pub ap_at_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    pub scene_id: String,
    pub method_tag: String,
    pub total_positives: usize,
    pub elapsed_seconds: f64,
    /// Matching time plus descriptor extraction time, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_seconds: Option<f64>,
    pub per_k: Vec<MetricsAtK>,
}

impl SceneMetrics {
    pub fn at(&self, k: usize) -> Option<&MetricsAtK> {
        self.per_k.iter().find(|m| m.k == k)
    }
}

/// Checks that `ks` is non-empty, strictly ascending and starts at ≥ 1.
pub fn validate_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "k list must be non-empty, ascending and >= 1, got {ks:?}"
        )));
    }
    Ok(())
}

/// Metrics of one scene for every `k`, from a ranking of length ≥ max(k).
pub fn scene_metrics(
    ranking: &PairRanking,
    gt: &GroundTruthMatrix,
    ks: &[usize],
    normalizer: ApNormalizer,
) -> Result<SceneMetrics> {
    validate_ks(ks)?;
    if ranking.scene_id != gt.scene_id {
        return Err(Error::Integrity(format!(
            "ranking for scene {} evaluated against ground truth of {}",
            ranking.scene_id, gt.scene_id
        )));
    }
    let k_max = *ks.last().expect("non-empty");
    let rel = relevance_vector(ranking, gt, k_max)?;
    let total_positives = gt.total_positives();
    let per_k = ks
        .iter()
        .map(|&k| MetricsAtK {
            k,
            p_at_k: precision_at_k(&rel, k),
            r_at_k: recall_at_k(&rel, k),
            ap_at_k: average_precision_at_k(&rel, k, total_positives, normalizer),
        })
        .collect();
    Ok(SceneMetrics {
        scene_id: ranking.scene_id.clone(),
        method_tag: ranking.method_tag.clone(),
        total_positives,
        elapsed_seconds: ranking.elapsed_seconds,
        total_seconds: None,
        per_k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetricsAtK {
    pub k: usize,
    pub p_at_k: f64,
    pub r_at_k: f64,
    /// Absent when every scene is excluded.
    pub map_at_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub dataset_tag: String,
    pub method_tag: String,
    pub scene_count: usize,
    /// Scenes without positives, left out of the mAP means.
    pub ap_excluded_scenes: usize,
    pub per_k: Vec<DatasetMetricsAtK>,
    /// Mean matching seconds per scene.
    pub mu_t: f64,
    /// Population standard deviation of matching seconds.
    pub sigma_t: f64,
    /// Mean of matching plus extraction seconds, when every scene reports extraction time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_t_total: Option<f64>,
}

impl DatasetMetrics {
    pub fn at(&self, k: usize) -> Option<&DatasetMetricsAtK> {
        self.per_k.iter().find(|m| m.k == k)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Arithmetic means over scenes; all scenes must report the same k list.
pub fn aggregate_dataset(dataset_tag: &str, scenes: &[SceneMetrics]) -> Result<DatasetMetrics> {
    let first = scenes
        .first()
        .ok_or_else(|| Error::Config("cannot aggregate an empty scene list".into()))?;
    let ks: Vec<usize> = first.per_k.iter().map(|m| m.k).collect();
    for s in scenes {
        if s.per_k.iter().map(|m| m.k).ne(ks.iter().copied()) {
            return Err(Error::Config(format!(
                "scene {} reports a different k list",
                s.scene_id
            )));
        }
        if s.method_tag != first.method_tag {
            return Err(Error::Config(format!(
                "cannot aggregate methods {} and {}",
                first.method_tag, s.method_tag
            )));
        }
    }
    let per_k = ks
        .iter()
        .enumerate()
        .map(|(idx, &k)| DatasetMetricsAtK {
            k,
            p_at_k: mean(scenes.iter().map(|s| s.per_k[idx].p_at_k)).expect("non-empty"),
            r_at_k: mean(scenes.iter().map(|s| s.per_k[idx].r_at_k)).expect("non-empty"),
            map_at_k: mean(scenes.iter().filter_map(|s| s.per_k[idx].ap_at_k)),
        })
        .collect();
    let mu_t = mean(scenes.iter().map(|s| s.elapsed_seconds)).expect("non-empty");
    let var = mean(scenes.iter().map(|s| (s.elapsed_seconds - mu_t).powi(2))).expect("non-empty");
    let mu_t_total = if scenes.iter().all(|s| s.total_seconds.is_some()) {
        mean(scenes.iter().filter_map(|s| s.total_seconds))
    } else {
        None
    };
    Ok(DatasetMetrics {
        dataset_tag: dataset_tag.to_string(),
        method_tag: first.method_tag.clone(),
        scene_count: scenes.len(),
        ap_excluded_scenes: scenes.iter().filter(|s| s.total_positives == 0).count(),
        per_k,
        mu_t,
        sigma_t: var.sqrt(),
        mu_t_total,
    })
}

/// Status counts summed over scenes, keyed by status name.
pub fn status_totals<'a>(gts: impl IntoIterator<Item = &'a GroundTruthMatrix>) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for gt in gts {
        for (s, n) in gt.status_counts() {
            *out.entry(s.as_str().to_string()).or_insert(0) += n;
        }
    }
    out
}
