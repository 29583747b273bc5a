//! Orchestration behind the command line: ground truth per scene, rankings,
//! metrics, result tables, plot data and qualitative listings.
//!
//! Output layout under `out`:
//!
//! ```text
//! ground_truth/<scene>.jsonl          label cache, header line + row-major labels
//! ground_truth/summary.json           status counts per scene
//! rankings/<method>/<scene>.jsonl     top-k pairs with image ids
//! eval/<method>/scenes.{json,csv,md}  per-scene metrics
//! eval/<method>/datasets.json         per-dataset metrics
//! report/table.{json,csv,md}          one row per (dataset, method)
//! plots/<dataset>_p10_r10.csv         P@10 and R@10 by method
//! qualitative/<method>/<scene>_top<k>.{json,md}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    load_scene, read_descriptor_path, DescriptorSet, Scene, Subset, TimingSidecar,
};
use crate::error::{Error, Result};
use crate::fsutil::{file_token, read_to_string, write_atomic};
use crate::geometry::GeometryConfig;
use crate::ground_truth::{
    label_scene_cached, CacheOutcome, CorrespondenceStore, DirectoryStore, GroundTruthMatrix,
    LabelStatus, NoCorrespondences,
};
use crate::metrics::{
    aggregate_dataset, scene_metrics, validate_ks, ApNormalizer, DatasetMetrics, SceneMetrics,
};
use crate::retrieval::{top_k_pairs, PairRanking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest_dir: PathBuf,
    /// `(method_tag, descriptor directory)`, one entry per method.
    pub descriptors: Vec<(String, PathBuf)>,
    pub correspondences: Option<PathBuf>,
    pub out: PathBuf,
    pub ks: Vec<usize>,
    pub geometry: GeometryConfig,
    pub seed: u64,
    pub formats: BTreeSet<ReportFormat>,
    pub ap_normalizer: ApNormalizer,
}

impl RunConfig {
    pub fn new(manifest_dir: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        RunConfig {
            manifest_dir: manifest_dir.into(),
            descriptors: Vec::new(),
            correspondences: None,
            out: out.into(),
            ks: crate::metrics::DEFAULT_KS.to_vec(),
            geometry: GeometryConfig::default(),
            seed: 0,
            formats: [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown]
                .into_iter()
                .collect(),
            ap_normalizer: ApNormalizer::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_ks(&self.ks)?;
        self.geometry
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut tags = BTreeSet::new();
        for (tag, _) in &self.descriptors {
            if tag.is_empty() || !tags.insert(tag.as_str()) {
                return Err(Error::Config(format!("empty or repeated method tag `{tag}`")));
            }
        }
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        tempfile::NamedTempFile::new_in(&self.out).map_err(|e| {
            Error::Config(format!("output directory {} is not writable: {e}", self.out.display()))
        })?;
        Ok(())
    }

    pub fn descriptor_dir(&self, method_tag: &str) -> Result<&Path> {
        self.descriptors
            .iter()
            .find(|(t, _)| t == method_tag)
            .map(|(_, d)| d.as_path())
            .ok_or_else(|| {
                Error::Config(format!("no descriptor directory given for method `{method_tag}`"))
            })
    }

    pub fn ground_truth_path(&self, scene_id: &str) -> PathBuf {
        self.out
            .join("ground_truth")
            .join(format!("{}.jsonl", file_token(scene_id)))
    }

    fn store(&self) -> Box<dyn CorrespondenceStore> {
        match &self.correspondences {
            Some(dir) if dir.is_dir() => Box::new(DirectoryStore::new(dir)),
            Some(dir) => {
                log::warn!(
                    "correspondence directory {} not found; every view-compatible pair becomes {}",
                    dir.display(),
                    LabelStatus::InsufficientMatches.as_str()
                );
                Box::new(NoCorrespondences)
            }
            None => {
                log::warn!(
                    "no correspondence directory; every view-compatible pair becomes {}",
                    LabelStatus::InsufficientMatches.as_str()
                );
                Box::new(NoCorrespondences)
            }
        }
    }
}

/// Parses `tag=dir`.
pub fn parse_descriptor_arg(arg: &str) -> Result<(String, PathBuf)> {
    match arg.split_once('=') {
        Some((tag, dir)) if !tag.trim().is_empty() && !dir.trim().is_empty() => {
            Ok((tag.trim().to_string(), PathBuf::from(dir.trim())))
        }
        _ => Err(Error::Config(format!(
            "--descriptors expects <method_tag>=<dir>, got `{arg}`"
        ))),
    }
}

/// Parses a comma-separated list of `k` values.
pub fn parse_ks(arg: &str) -> Result<Vec<usize>> {
    let ks = arg
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid k value `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_ks(&ks)?;
    Ok(ks)
}

pub fn parse_formats(arg: &str) -> Result<BTreeSet<ReportFormat>> {
    let set: BTreeSet<_> = arg
        .split(',')
        .map(ReportFormat::from_str)
        .collect::<Result<_>>()?;
    if set.is_empty() {
        return Err(Error::Config("no report format selected".into()));
    }
    Ok(set)
}

/// Manifests under `dir`: `<dir>/<name>/manifest.json` and `<dir>/*.json`.
pub fn discover_manifests(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "manifest directory {} does not exist",
            dir.display()
        )));
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            let m = path.join("manifest.json");
            if m.is_file() {
                found.push(m);
            }
        } else if path.extension().is_some_and(|e| e == "json") {
            found.push(path);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Config(format!(
            "no scene manifests found in {} (expected <scene>/manifest.json or *.json)",
            dir.display()
        )));
    }
    Ok(found)
}

/// Loads every scene, ordered by scene id.
pub fn load_scenes(dir: &Path) -> Result<Vec<Scene>> {
    let mut scenes = discover_manifests(dir)?
        .iter()
        .map(|p| load_scene(p))
        .collect::<Result<Vec<_>>>()?;
    scenes.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    if let Some(w) = scenes.windows(2).find(|w| w[0].scene_id == w[1].scene_id) {
        return Err(Error::Config(format!("scene id `{}` declared twice", w[0].scene_id)));
    }
    Ok(scenes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSummary {
    pub scene_id: String,
    pub fingerprint: String,
    pub pairs: usize,
    pub positives: usize,
    pub status_counts: BTreeMap<LabelStatus, usize>,
}

/// Builds (or reuses) the ground-truth cache of every scene.
pub fn cmd_ground_truth(config: &RunConfig) -> Result<Vec<(GroundTruthMatrix, CacheOutcome)>> {
    config.validate()?;
    let scenes = load_scenes(&config.manifest_dir)?;
    ground_truth_for(config, &scenes)
}

fn ground_truth_for(
    config: &RunConfig,
    scenes: &[Scene],
) -> Result<Vec<(GroundTruthMatrix, CacheOutcome)>> {
    let store = config.store();
    let mut out = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let (gt, outcome) = label_scene_cached(
            scene,
            store.as_ref(),
            &config.geometry,
            config.seed,
            &config.ground_truth_path(&scene.scene_id),
        )?;
        log::info!(
            "{}: ground truth {} ({} positives of {})",
            scene.scene_id,
            if outcome == CacheOutcome::Hit { "cached" } else { "computed" },
            gt.total_positives(),
            gt.labels.len()
        );
        out.push((gt, outcome));
    }
    let summary: Vec<GroundTruthSummary> = out
        .iter()
        .map(|(gt, _)| GroundTruthSummary {
            scene_id: gt.scene_id.clone(),
            fingerprint: gt.fingerprint.clone(),
            pairs: gt.labels.len(),
            positives: gt.total_positives(),
            status_counts: gt.status_counts(),
        })
        .collect();
    write_json(&config.out.join("ground_truth").join("summary.json"), &summary)?;
    Ok(out)
}

/// Human-readable status table for the ground-truth step.
pub fn format_status_summary(gts: &[GroundTruthMatrix]) -> String {
    let mut s = String::from("scene");
    for st in LabelStatus::ALL {
        let _ = write!(s, "\t{}", st.as_str());
    }
    s.push('\n');
    for gt in gts {
        s.push_str(&gt.scene_id);
        let counts = gt.status_counts();
        for st in LabelStatus::ALL {
            let _ = write!(s, "\t{}", counts.get(&st).copied().unwrap_or(0));
        }
        s.push('\n');
    }
    s
}

/// Loads the A and B descriptor files of a scene and checks them against its image lists.
pub fn load_scene_descriptors(
    dir: &Path,
    method_tag: &str,
    scene: &Scene,
) -> Result<(DescriptorSet, DescriptorSet, Option<f64>)> {
    let scene_dir = dir.join(file_token(&scene.scene_id));
    let mut sets = Vec::with_capacity(2);
    let mut extraction = Some(0.0);
    for subset in [Subset::A, Subset::B] {
        let path = scene_dir.join(format!("{subset}.vprd"));
        if !path.is_file() {
            return Err(Error::Config(format!(
                "method {method_tag}: missing descriptor file {}",
                path.display()
            )));
        }
        let set = read_descriptor_path(&path)?;
        if set.subset() != subset {
            return Err(Error::Integrity(format!(
                "{} declares subset {}",
                path.display(),
                set.subset()
            )));
        }
        if set.method_tag() != method_tag {
            return Err(Error::Integrity(format!(
                "{} declares method `{}`, expected `{method_tag}`",
                path.display(),
                set.method_tag()
            )));
        }
        check_ids(&path, set.image_ids(), &scene.ids(subset))?;
        let timing_path = TimingSidecar::path_for(&scene_dir, subset);
        extraction = match (extraction, timing_path.is_file()) {
            (Some(total), true) => {
                let t = TimingSidecar::read(&timing_path)?;
                t.check_against(&set)?;
                Some(total + t.total_seconds())
            }
            _ => None,
        };
        sets.push(set);
    }
    let b = sets.pop().expect("two sets");
    let a = sets.pop().expect("two sets");
    Ok((a, b, extraction))
}

fn check_ids(path: &Path, found: &[String], expected: &[String]) -> Result<()> {
    if found == expected {
        return Ok(());
    }
    let f: BTreeSet<&String> = found.iter().collect();
    let e: BTreeSet<&String> = expected.iter().collect();
    let missing: Vec<&&String> = e.difference(&f).collect();
    let extra: Vec<&&String> = f.difference(&e).collect();
    let misplaced: Vec<&String> = found
        .iter()
        .zip(expected)
        .filter(|(a, b)| a != b && e.contains(a))
        .map(|(a, _)| a)
        .collect();
    Err(Error::Integrity(format!(
        "{}: image ids disagree with the manifest; missing {missing:?}, unexpected {extra:?}, out of order {misplaced:?}",
        path.display()
    )))
}

/// Result of evaluating one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEvaluation {
    pub method_tag: String,
    pub scenes: Vec<SceneMetrics>,
    pub datasets: Vec<DatasetMetrics>,
    /// Ground-truth fingerprint per scene id.
    pub gt_fingerprints: BTreeMap<String, String>,
}

/// Ranks the scene pairs of one method at `max(k)` and dumps the rankings.
pub fn cmd_rank(config: &RunConfig, method_tag: &str) -> Result<Vec<PairRanking>> {
    config.validate()?;
    let scenes = load_scenes(&config.manifest_dir)?;
    scenes
        .iter()
        .map(|s| rank_scene(config, method_tag, s).map(|(r, _)| r))
        .collect()
}

fn rank_scene(config: &RunConfig, method_tag: &str, scene: &Scene) -> Result<(PairRanking, Option<f64>)> {
    let dir = config.descriptor_dir(method_tag)?;
    let (a, b, extraction) = load_scene_descriptors(dir, method_tag, scene)?;
    let k_max = *config.ks.last().expect("validated");
    let ranking = top_k_pairs(&scene.scene_id, &a, &b, k_max)?;
    ranking.write_jsonl(
        &config
            .out
            .join("rankings")
            .join(file_token(method_tag))
            .join(format!("{}.jsonl", file_token(&scene.scene_id))),
        a.image_ids(),
        b.image_ids(),
    )?;
    Ok((ranking, extraction))
}

/// Evaluates every configured method and writes per-method files and the result table.
pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<MethodEvaluation>> {
    config.validate()?;
    if config.descriptors.is_empty() {
        return Err(Error::Config("no --descriptors given".into()));
    }
    let scenes = load_scenes(&config.manifest_dir)?;
    let gts: Vec<GroundTruthMatrix> = ground_truth_for(config, &scenes)?
        .into_iter()
        .map(|(g, _)| g)
        .collect();
    let mut evaluations = Vec::new();
    for (method_tag, _) in &config.descriptors {
        let mut per_scene = Vec::with_capacity(scenes.len());
        for (scene, gt) in scenes.iter().zip(&gts) {
            let (ranking, extraction) = rank_scene(config, method_tag, scene)?;
            let mut m = scene_metrics(&ranking, gt, &config.ks, config.ap_normalizer)?;
            m.total_seconds = extraction.map(|e| e + m.elapsed_seconds);
            per_scene.push(m);
        }
        let mut by_dataset: BTreeMap<String, Vec<SceneMetrics>> = BTreeMap::new();
        for (scene, m) in scenes.iter().zip(&per_scene) {
            by_dataset
                .entry(scene.dataset_tag.as_str().to_string())
                .or_default()
                .push(m.clone());
        }
        let datasets = by_dataset
            .iter()
            .map(|(tag, ms)| aggregate_dataset(tag, ms))
            .collect::<Result<Vec<_>>>()?;
        let eval = MethodEvaluation {
            method_tag: method_tag.clone(),
            scenes: per_scene,
            datasets,
            gt_fingerprints: gts
                .iter()
                .map(|g| (g.scene_id.clone(), g.fingerprint.clone()))
                .collect(),
        };
        write_method_files(config, &eval)?;
        evaluations.push(eval);
    }
    write_table(config, &scenes, &evaluations)?;
    Ok(evaluations)
}

fn method_dir(config: &RunConfig, method_tag: &str) -> PathBuf {
    config.out.join("eval").join(file_token(method_tag))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::io("<csv>", e.into());
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(r).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<csv>", std::io::Error::other(e.to_string())))
}

fn markdown(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = format!("| {} |\n", header.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

/// Fraction in percent with two decimals.
pub fn percent(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn opt_percent(v: Option<f64>) -> String {
    v.map(percent).unwrap_or_else(|| "n/a".into())
}

fn write_tabular(
    config: &RunConfig,
    stem: &Path,
    header: &[String],
    rows: &[Vec<String>],
    json: &impl Serialize,
) -> Result<()> {
    for f in &config.formats {
        match f {
            ReportFormat::Csv => write_atomic(&stem.with_extension("csv"), &csv_bytes(header, rows)?)?,
            ReportFormat::Json => write_json(&stem.with_extension("json"), json)?,
            ReportFormat::Markdown => {
                write_atomic(&stem.with_extension("md"), markdown(header, rows).as_bytes())?
            }
        }
    }
    Ok(())
}

fn write_method_files(config: &RunConfig, eval: &MethodEvaluation) -> Result<()> {
    let dir = method_dir(config, &eval.method_tag);
    write_json(&dir.join("datasets.json"), &eval.datasets)?;
    let mut header = vec!["scene".to_string(), "positives".to_string()];
    for k in &config.ks {
        header.push(format!("P@{k}"));
    }
    for k in &config.ks {
        header.push(format!("R@{k}"));
    }
    for k in &config.ks {
        header.push(format!("AP@{k}"));
    }
    header.push("t".into());
    let rows: Vec<Vec<String>> = eval
        .scenes
        .iter()
        .map(|m| {
            let mut r = vec![m.scene_id.clone(), m.total_positives.to_string()];
            r.extend(m.per_k.iter().map(|x| percent(x.p_at_k)));
            r.extend(m.per_k.iter().map(|x| percent(x.r_at_k)));
            r.extend(m.per_k.iter().map(|x| opt_percent(x.ap_at_k)));
            r.push(format!("{:.6}", m.elapsed_seconds));
            r
        })
        .collect();
    write_tabular(config, &dir.join("scenes"), &header, &rows, &eval.scenes)
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset_tag: String,
    pub method_tag: String,
    pub metrics: DatasetMetrics,
    /// Distinct ground-truth fingerprints of the dataset's scenes.
    pub gt_fingerprints: Vec<String>,
}

/// Result table rows, ordered by dataset then method order of the run.
pub fn table_rows(evaluations: &[MethodEvaluation], scenes_by_dataset: &BTreeMap<String, Vec<String>>) -> Vec<TableRow> {
    let mut rows = Vec::new();
    for (dataset, scene_ids) in scenes_by_dataset {
        for eval in evaluations {
            if let Some(m) = eval.datasets.iter().find(|d| &d.dataset_tag == dataset) {
                let fps: BTreeSet<String> = scene_ids
                    .iter()
                    .filter_map(|s| eval.gt_fingerprints.get(s).cloned())
                    .collect();
                rows.push(TableRow {
                    dataset_tag: dataset.clone(),
                    method_tag: eval.method_tag.clone(),
                    metrics: m.clone(),
                    gt_fingerprints: fps.into_iter().collect(),
                });
            }
        }
    }
    rows
}

fn write_table(config: &RunConfig, scenes: &[Scene], evaluations: &[MethodEvaluation]) -> Result<()> {
    let mut scenes_by_dataset: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in scenes {
        scenes_by_dataset
            .entry(s.dataset_tag.as_str().to_string())
            .or_default()
            .push(s.scene_id.clone());
    }
    let rows = table_rows(evaluations, &scenes_by_dataset);
    let map_ks: Vec<usize> = config.ks.iter().copied().filter(|k| *k > 1).collect();
    let mut header = vec!["dataset".to_string(), "method".to_string(), "scenes".to_string()];
    header.extend(config.ks.iter().map(|k| format!("P@{k}")));
    header.extend(config.ks.iter().map(|k| format!("R@{k}")));
    header.extend(map_ks.iter().map(|k| format!("mAP@{k}")));
    header.extend(["mu_t".to_string(), "sigma_t".to_string(), "ap_excluded".to_string()]);
    let display: Vec<Vec<String>> = rows
        .iter()
        .map(|row| {
            let m = &row.metrics;
            let mut r = vec![
                row.dataset_tag.clone(),
                row.method_tag.clone(),
                m.scene_count.to_string(),
            ];
            r.extend(config.ks.iter().map(|k| percent(m.at(*k).expect("k").p_at_k)));
            r.extend(config.ks.iter().map(|k| percent(m.at(*k).expect("k").r_at_k)));
            r.extend(map_ks.iter().map(|k| opt_percent(m.at(*k).expect("k").map_at_k)));
            r.push(format!("{:.4}", m.mu_t));
            r.push(format!("{:.4}", m.sigma_t));
            r.push(m.ap_excluded_scenes.to_string());
            r
        })
        .collect();
    write_tabular(config, &config.out.join("report").join("table"), &header, &display, &rows)
}

/// Writes `plots/<dataset>_p10_r10.csv` for the given methods from their stored evaluations.
pub fn cmd_plotdata(config: &RunConfig, methods: &[String]) -> Result<Vec<PathBuf>> {
    if methods.is_empty() {
        return Err(Error::Config("plotdata needs at least one method".into()));
    }
    let mut by_dataset: BTreeMap<String, Vec<(String, f64, f64)>> = BTreeMap::new();
    for method in methods {
        let path = method_dir(config, method).join("datasets.json");
        if !path.is_file() {
            return Err(Error::Config(format!(
                "no evaluation found for method `{method}` ({}); run `evaluate` first",
                path.display()
            )));
        }
        let datasets: Vec<DatasetMetrics> = serde_json::from_str(&read_to_string(&path)?)?;
        for d in datasets {
            let at10 = d.at(10).ok_or_else(|| {
                Error::Config(format!("evaluation of `{method}` has no k = 10 entry"))
            })?;
            by_dataset
                .entry(d.dataset_tag.clone())
                .or_default()
                .push((method.clone(), at10.p_at_k, at10.r_at_k));
        }
    }
    let mut written = Vec::new();
    for (dataset, rows) in by_dataset {
        let rows: Vec<Vec<String>> = rows
            .into_iter()
            .map(|(m, p, r)| vec![m, p.to_string(), r.to_string()])
            .collect();
        let header = ["method_tag", "p_at_10", "r_at_10"].map(String::from);
        let path = config
            .out
            .join("plots")
            .join(format!("{}_p10_r10.csv", file_token(&dataset)));
        write_atomic(&path, &csv_bytes(&header, &rows)?)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitativeEntry {
    pub rank: usize,
    pub image_id_a: String,
    pub image_id_b: String,
    pub file_path_a: String,
    pub file_path_b: String,
    pub similarity: f64,
    pub status: LabelStatus,
    pub is_match: bool,
}

/// Top-`k` listing of one scene with ground-truth verdicts.
pub fn cmd_qualitative(
    config: &RunConfig,
    method_tag: &str,
    scene_id: &str,
    k: usize,
) -> Result<Vec<QualitativeEntry>> {
    config.validate()?;
    let scenes = load_scenes(&config.manifest_dir)?;
    let scene = scenes
        .iter()
        .find(|s| s.scene_id == scene_id)
        .ok_or_else(|| Error::Config(format!("unknown scene `{scene_id}`")))?;
    let gt = ground_truth_for(config, std::slice::from_ref(scene))?
        .pop()
        .expect("one scene")
        .0;
    let (a, b, _) = load_scene_descriptors(config.descriptor_dir(method_tag)?, method_tag, scene)?;
    let ranking = top_k_pairs(scene_id, &a, &b, k)?;
    let entries: Vec<QualitativeEntry> = ranking
        .entries
        .iter()
        .enumerate()
        .map(|(r, e)| {
            let label = gt.get(e.index_a, e.index_b).ok_or_else(|| {
                Error::Integrity(format!("missing label ({}, {})", e.index_a, e.index_b))
            })?;
            Ok(QualitativeEntry {
                rank: r + 1,
                image_id_a: label.image_id_a.clone(),
                image_id_b: label.image_id_b.clone(),
                file_path_a: scene.images_a[e.index_a].record.file_path.clone(),
                file_path_b: scene.images_b[e.index_b].record.file_path.clone(),
                similarity: e.similarity,
                status: label.status,
                is_match: label.is_match,
            })
        })
        .collect::<Result<_>>()?;
    let stem = config
        .out
        .join("qualitative")
        .join(file_token(method_tag))
        .join(format!("{}_top{k}", file_token(scene_id)));
    write_json(&stem.with_extension("json"), &entries)?;
    let header = ["rank", "image A", "image B", "similarity", "status"].map(String::from);
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|e| {
            vec![
                e.rank.to_string(),
                e.file_path_a.clone(),
                e.file_path_b.clone(),
                format!("{:.6}", e.similarity),
                format!("{}{}", if e.is_match { "match " } else { "" }, e.status.as_str()),
            ]
        })
        .collect();
    write_atomic(&stem.with_extension("md"), markdown(&header, &rows).as_bytes())?;
    Ok(entries)
}
