use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vpr_pairs::dataset::{split_scene, SceneManifest, SplitPolicy, Subset};
use vpr_pairs::fsutil::read_to_string;
use vpr_pairs::geometry::GeometryConfig;
use vpr_pairs::metrics::ApNormalizer;
use vpr_pairs::report::{
    cmd_evaluate, cmd_ground_truth, cmd_plotdata, cmd_qualitative, cmd_rank, format_status_summary,
    parse_descriptor_arg, parse_formats, parse_ks, percent, RunConfig,
};
use vpr_pairs::synthetic::{write_synthetic_dataset, SyntheticDatasetSpec};
use vpr_pairs::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "vpr-pairs", version, about = "Image pair retrieval evaluation for place recognition descriptors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Directory holding `<scene>/manifest.json` or `*.json` scene manifests.
    #[arg(long)]
    manifest_dir: PathBuf,
    /// Descriptor directory of a method, `<method_tag>=<dir>`; repeatable.
    #[arg(long = "descriptors", value_name = "TAG=DIR")]
    descriptors: Vec<String>,
    /// Directory of `<scene>/<a>__<b>.vprc` correspondence files.
    #[arg(long)]
    correspondences: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Retrieval set sizes.
    #[arg(long, default_value = "1,5,10")]
    k: String,
    /// Maximum view direction angle in degrees (inclusive).
    #[arg(long, default_value_t = 75.0)]
    tau_view: f64,
    /// Maximum rotation deviation in degrees (exclusive).
    #[arg(long, default_value_t = 10.0)]
    tau_dev: f64,
    /// Sampson inlier threshold in pixels.
    #[arg(long, default_value_t = 0.25)]
    tau_in: f64,
    #[arg(long, default_value_t = 1000)]
    ransac_iters: usize,
    #[arg(long, default_value_t = 0.999)]
    ransac_confidence: f64,
    #[arg(long, default_value_t = 15)]
    min_correspondences: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report formats: csv, json, markdown.
    #[arg(long, default_value = "csv,json,markdown")]
    format: String,
    #[arg(long, value_enum, default_value_t = Normalizer::MinKPositives)]
    ap_normalizer: Normalizer,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Normalizer {
    MinKPositives,
    K,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Assign A/B subsets to the images of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Inclusive index ranges for A, e.g. `0-29`; with --b-ranges replaces contiguous halves.
        #[arg(long, value_delimiter = ',')]
        a_ranges: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        b_ranges: Vec<String>,
        /// Per-subset cap for contiguous halves (uniform subsampling).
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Label every A×B pair of every scene and cache the result.
    #[command(alias = "gt")]
    GroundTruth(Common),
    /// Rank descriptor pairs of one method and dump the rankings.
    Rank {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
    },
    /// Compute metrics for every method and write the result tables.
    Evaluate(Common),
    /// Top-k listing of one scene with ground-truth verdicts.
    Qualitative {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
        #[arg(long)]
        scene: String,
        #[arg(long = "top", default_value_t = 5)]
        top: usize,
    },
    /// P@10 / R@10 per method and dataset from stored evaluations.
    Plotdata {
        #[command(flatten)]
        common: Common,
        /// Methods to include; defaults to every --descriptors tag.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Write a synthetic demo dataset (two camera rings, two descriptor methods).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(&c.manifest_dir, &c.out);
    cfg.descriptors = c
        .descriptors
        .iter()
        .map(|d| parse_descriptor_arg(d))
        .collect::<Result<_>>()?;
    cfg.correspondences = c.correspondences.clone();
    cfg.ks = parse_ks(&c.k)?;
    cfg.geometry = GeometryConfig {
        tau_view_deg: c.tau_view,
        tau_dev_deg: c.tau_dev,
        tau_in: c.tau_in,
        ransac_max_iters: c.ransac_iters,
        ransac_confidence: c.ransac_confidence,
        min_correspondences: c.min_correspondences,
    };
    cfg.seed = c.seed;
    cfg.formats = parse_formats(&c.format)?;
    cfg.ap_normalizer = match c.ap_normalizer {
        Normalizer::MinKPositives => ApNormalizer::MinKPositives,
        Normalizer::K => ApNormalizer::K,
    };
    Ok(cfg)
}

fn parse_range(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("invalid index range `{s}`, expected `start-end`"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn split(manifest: &Path, output: &Path, a: &[String], b: &[String], cap: Option<usize>) -> Result<()> {
    let mut m = SceneManifest::from_json(&read_to_string(manifest)?)?;
    let policy = if a.is_empty() && b.is_empty() {
        SplitPolicy::ContiguousHalves { cap }
    } else {
        SplitPolicy::ExplicitRanges {
            a: a.iter().map(|r| parse_range(r)).collect::<Result<_>>()?,
            b: b.iter().map(|r| parse_range(r)).collect::<Result<_>>()?,
        }
    };
    let (sa, sb) = split_scene(&m.images, &policy)?;
    let mut images = Vec::with_capacity(sa.len() + sb.len());
    for (subset, list) in [(Subset::A, sa), (Subset::B, sb)] {
        for mut img in list {
            img.subset = subset;
            images.push(img);
        }
    }
    m.images = images;
    m.validate()?;
    m.write(output)?;
    println!("{}: |A| = {}, |B| = {}", m.scene_id, m.subset_records(Subset::A).count(), m.subset_records(Subset::B).count());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split { manifest, output, a_ranges, b_ranges, cap } => {
            split(&manifest, &output, &a_ranges, &b_ranges, cap)
        }
        Command::GroundTruth(c) => {
            let cfg = run_config(&c)?;
            let gts: Vec<_> = cmd_ground_truth(&cfg)?.into_iter().map(|(g, _)| g).collect();
            print!("{}", format_status_summary(&gts));
            Ok(())
        }
        Command::Rank { common, method } => {
            let cfg = run_config(&common)?;
            for r in cmd_rank(&cfg, &method)? {
                println!("{}\t{} pairs\t{:.6} s", r.scene_id, r.entries.len(), r.elapsed_seconds);
            }
            Ok(())
        }
        Command::Evaluate(c) => {
            let cfg = run_config(&c)?;
            for e in cmd_evaluate(&cfg)? {
                for d in &e.datasets {
                    let cells: Vec<String> = d
                        .per_k
                        .iter()
                        .map(|m| format!("P@{k} {} R@{k} {}", percent(m.p_at_k), percent(m.r_at_k), k = m.k))
                        .collect();
                    println!("{}\t{}\t{}\tmu_t {:.4} s", d.dataset_tag, e.method_tag, cells.join("  "), d.mu_t);
                }
            }
            println!("report written to {}", cfg.out.join("report").display());
            Ok(())
        }
        Command::Qualitative { common, method, scene, top } => {
            let cfg = run_config(&common)?;
            for e in cmd_qualitative(&cfg, &method, &scene, top)? {
                println!(
                    "{}\t{}\t{}\t{:.6}\t{}",
                    e.rank,
                    e.file_path_a,
                    e.file_path_b,
                    e.similarity,
                    e.status.as_str()
                );
            }
            Ok(())
        }
        Command::Plotdata { common, methods } => {
            let cfg = run_config(&common)?;
            let methods = if methods.is_empty() {
                cfg.descriptors.iter().map(|(t, _)| t.clone()).collect()
            } else {
                methods
            };
            for p in cmd_plotdata(&cfg, &methods)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Synth { out, seed } => {
            let layout = write_synthetic_dataset(&out, &SyntheticDatasetSpec::demo(seed))?;
            println!("manifests:       {}", layout.manifest_dir.display());
            println!("correspondences: {}", layout.correspondence_dir.display());
            for (tag, dir) in &layout.descriptor_dirs {
                println!("descriptors:     {tag}={}", dir.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
