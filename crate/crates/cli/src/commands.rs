//! One function per subcommand. Each reads its inputs, refuses any that
//! were produced under a different config, and writes its outputs
//! atomically with provenance sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use seqrl_analysis::report::{figures, read_metrics_csv, write_metrics_csv, AnalysisReport};
use seqrl_core::data::io::{decode_container, encode_container};
use seqrl_core::data::TrajectoryDataset;
use seqrl_core::env::{generate_dataset, GameSpec, SynthEnv};
use seqrl_core::fusion::{
    frequency_fusion_map, last_percent_distribution, relabel_dataset, simple_fusion_map, FusionMap,
};
use seqrl_core::metrics::aggregate_metrics;
use seqrl_core::seed::derive_seed;
use seqrl_eval::score::NormalizationBaseline;
use seqrl_eval::scores::{read_scores_csv, score_rows, summarize, write_scores_csv};
use seqrl_eval::{evaluate, Agent, Selection, TargetReturn};
use seqrl_models::train::{loss_log_csv, train as fit};
use seqrl_models::{Arch, Checkpoint};

use crate::artifact::{check_input, sidecar_path, Outputs, SIDECAR_SUFFIX};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const SUITE_MANIFEST: &str = "suite.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const DATASET_EXT: &str = "sqtd";

/// A loaded config and its hash.
pub struct Ctx {
    pub config: RunConfig,
    pub hash: String,
}

impl Ctx {
    pub fn new(config: RunConfig) -> Self {
        let hash = config.hash();
        Self { config, hash }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub spec: GameSpec,
    pub baseline: NormalizationBaseline,
    /// File name inside the suite directory.
    pub dataset: String,
    pub episodes: usize,
    pub transitions: usize,
    pub max_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub config_hash: String,
    pub games: Vec<SuiteEntry>,
}

impl SuiteManifest {
    pub fn game(&self, name: &str) -> CliResult<&SuiteEntry> {
        self.games
            .iter()
            .find(|g| g.spec.name == name)
            .ok_or_else(|| CliError::config(format!("game {name:?} is not in the suite")))
    }
}

/// What the trainer stores in the checkpoint header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub game: String,
    pub max_return: f64,
    pub fusion: Option<FusionMap>,
    pub config_hash: String,
    pub spec: GameSpec,
    pub baseline: NormalizationBaseline,
    pub arch: Arch,
    pub context: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub report: AnalysisReport,
}

/// File name only, so that provenance does not depend on where a run lives.
fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))
}

fn read_string(path: &Path) -> CliResult<String> {
    String::from_utf8(read(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn gen_suite(ctx: &Ctx, out: &Path) -> CliResult<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let mut outputs = Outputs::new(&ctx.hash, "gen-suite", json!({}));
    let mut games = Vec::new();
    for spec in cfg.games()? {
        let seed = derive_seed(cfg.seed, spec.seed);
        let mut ds = generate_dataset(&spec, cfg.policy(), cfg.suite.episodes, seed)?;
        if cfg.suite.sample_fraction < 1.0 {
            ds = ds.sample_fraction(cfg.suite.sample_fraction, derive_seed(seed, 0x5A3F))?;
        }
        let baseline = NormalizationBaseline::synthetic(&spec, cfg.suite.baseline_episodes, derive_seed(seed, 0xBA5E))?;
        let file = format!("{}.{DATASET_EXT}", spec.name);
        outputs.write(&out.join(&file), &encode_container(&ds)?)?;
        log::info!(
            "{}: {} episodes, {} transitions, random {:.3}, expert {:.3}",
            spec.name,
            ds.episodes().len(),
            ds.total_transitions(),
            baseline.random_score,
            baseline.human_score
        );
        games.push(SuiteEntry {
            baseline,
            dataset: file,
            episodes: ds.episodes().len(),
            transitions: ds.total_transitions(),
            max_return: ds.max_return(),
            spec,
        });
    }
    let manifest = SuiteManifest {
        config_hash: ctx.hash.clone(),
        games,
    };
    outputs.write(&out.join(SUITE_MANIFEST), &json_bytes(&manifest)?)?;
    Ok(outputs.commit())
}

pub fn load_suite(ctx: &Ctx, data: &Path) -> CliResult<SuiteManifest> {
    let path = data.join(SUITE_MANIFEST);
    check_input(&path, &ctx.hash)?;
    let manifest: SuiteManifest = serde_json::from_slice(&read(&path)?)?;
    if manifest.config_hash != ctx.hash {
        return Err(CliError::data(format!("{} belongs to config {}", path.display(), manifest.config_hash)));
    }
    Ok(manifest)
}

pub fn load_dataset(ctx: &Ctx, data: &Path, entry: &SuiteEntry) -> CliResult<TrajectoryDataset> {
    let path = data.join(&entry.dataset);
    check_input(&path, &ctx.hash)?;
    Ok(decode_container(&read(&path)?)?)
}

pub fn stats(ctx: &Ctx, data: &Path, frames: usize, seed: u64, out: &Path) -> CliResult<Vec<PathBuf>> {
    let manifest = load_suite(ctx, data)?;
    let mut rows = Vec::new();
    for (i, entry) in manifest.games.iter().enumerate() {
        let ds = load_dataset(ctx, data, entry)?;
        rows.push(aggregate_metrics(&ds, frames, derive_seed(seed, i as u64))?);
    }
    let mut outputs = Outputs::new(&ctx.hash, "stats", json!({"frames": frames, "seed": seed}));
    outputs.write(out, write_metrics_csv(&rows)?.as_bytes())?;
    Ok(outputs.commit())
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub game: String,
    pub arch: Arch,
    pub context: usize,
    pub seed: u64,
    pub map: Option<PathBuf>,
    pub out: PathBuf,
}

/// Loss log written next to a checkpoint.
pub fn loss_log_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("loss.csv")
}

pub fn train(ctx: &Ctx, a: &TrainArgs) -> CliResult<Vec<PathBuf>> {
    let manifest = load_suite(ctx, &a.data)?;
    let entry = manifest.game(&a.game)?;
    let mut ds = load_dataset(ctx, &a.data, entry)?;
    let fusion = match &a.map {
        Some(path) => {
            check_input(path, &ctx.hash)?;
            let map = FusionMap::from_json(&read_string(path)?)?;
            ds = relabel_dataset(&ds, &map)?;
            Some(map)
        }
        None => None,
    };
    let model = ctx.config.model_config(a.arch, ds.action_space_size(), a.context)?;
    let tc = ctx.config.train_config(a.seed);
    let outcome = fit(&model, &tc, &ds, |epoch, loss| {
        log::info!("{} {} K={}: epoch {epoch} loss {loss:.5}", a.game, a.arch.name(), a.context)
    })?;
    let meta = CheckpointMeta {
        game: a.game.clone(),
        max_return: ds.max_return(),
        fusion,
        config_hash: ctx.hash.clone(),
        spec: entry.spec.clone(),
        baseline: entry.baseline.clone(),
        arch: a.arch,
        context: a.context,
        seed: a.seed,
    };
    let ck = Checkpoint {
        config: model,
        params: outcome.params,
        meta: serde_json::to_value(&meta)?,
    };
    let args = json!({
        "game": a.game, "model": a.arch.name(), "context": a.context, "seed": a.seed,
        "map": a.map.as_deref().map(file_name),
    });
    let mut outputs = Outputs::new(&ctx.hash, "train", args);
    outputs.write(&a.out, &ck.to_bytes()?)?;
    outputs.write(&loss_log_path(&a.out), loss_log_csv(&outcome.log).as_bytes())?;
    Ok(outputs.commit())
}

pub struct EvalArgs {
    pub ckpt: PathBuf,
    pub episodes: Option<usize>,
    pub seed: u64,
    pub target: Option<TargetReturn>,
    pub selection: Option<Selection>,
    pub baselines: Option<PathBuf>,
    pub out: PathBuf,
}

/// `game,random_score,human_score` rows.
pub fn read_baselines(path: &Path) -> CliResult<Vec<NormalizationBaseline>> {
    let text = read_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("game,random_score,human_score") {
        return Err(CliError::data(format!("{}: expected header game,random_score,human_score", path.display())));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| CliError::data(format!("{}: bad number {s:?}", path.display())))
            };
            match f.as_slice() {
                [g, r, h] => Ok(NormalizationBaseline::new(*g, num(r)?, num(h)?)?),
                _ => Err(CliError::data(format!("{}: bad row {l:?}", path.display()))),
            }
        })
        .collect()
}

pub fn load_checkpoint(ctx: &Ctx, path: &Path) -> CliResult<(Checkpoint, CheckpointMeta)> {
    check_input(path, &ctx.hash)?;
    let ck = Checkpoint::from_bytes(&read(path)?)?;
    let meta: CheckpointMeta = serde_json::from_value(ck.meta.clone())?;
    if meta.config_hash != ctx.hash {
        return Err(CliError::data(format!("{} belongs to config {}", path.display(), meta.config_hash)));
    }
    Ok((ck, meta))
}

pub fn eval(ctx: &Ctx, a: &EvalArgs) -> CliResult<Vec<PathBuf>> {
    let (ck, meta) = load_checkpoint(ctx, &a.ckpt)?;
    let agent = Agent::from_checkpoint(&ck)?;
    let baseline = match &a.baselines {
        Some(path) => read_baselines(path)?
            .into_iter()
            .find(|b| b.game == meta.game)
            .ok_or_else(|| CliError::data(format!("{} has no row for {}", path.display(), meta.game)))?,
        None => meta.baseline.clone(),
    };
    let mut cfg = ctx.config.eval_config(a.seed);
    if let Some(n) = a.episodes {
        cfg.episodes = n;
    }
    if let Some(t) = a.target {
        cfg.target = t;
    }
    if let Some(s) = a.selection {
        cfg.selection = s;
    }
    let mut env = SynthEnv::new(meta.spec.clone())?;
    let returns = evaluate(&agent, &mut env, &cfg)?;
    let rows = score_rows(&meta.game, meta.arch.name(), &returns, &baseline)?;
    if let Some(s) = summarize(&rows).first() {
        log::info!(
            "{} {}: raw {:.3} ± {:.3}, normalized {:.2} (filtered {:.2})",
            s.game,
            s.model,
            s.raw_mean,
            s.raw_std,
            s.normalized_mean,
            s.filtered_normalized_mean
        );
    }
    let args = json!({
        "ckpt": file_name(&a.ckpt), "episodes": cfg.episodes, "seed": a.seed,
        "target": cfg.target, "select": cfg.selection,
        "baselines": a.baselines.as_deref().map(file_name),
    });
    let mut outputs = Outputs::new(&ctx.hash, "eval", args);
    outputs.write(&a.out, write_scores_csv(&rows)?.as_bytes())?;
    Ok(outputs.commit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Simple,
    Frequency,
    File,
}

impl std::str::FromStr for Strategy {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "simple" => Ok(Self::Simple),
            "frequency" => Ok(Self::Frequency),
            "file" => Ok(Self::File),
            other => Err(CliError::config(format!("unknown strategy {other:?}"))),
        }
    }
}

pub struct FuseArgs {
    pub data: PathBuf,
    pub game: String,
    pub strategy: Strategy,
    pub target: Option<usize>,
    pub map: Option<PathBuf>,
    pub map_out: PathBuf,
    pub data_out: Option<PathBuf>,
}

pub fn fuse(ctx: &Ctx, a: &FuseArgs) -> CliResult<Vec<PathBuf>> {
    let manifest = load_suite(ctx, &a.data)?;
    let ds = load_dataset(ctx, &a.data, manifest.game(&a.game)?)?;
    let names = ds.action_names().to_vec();
    let map = match a.strategy {
        Strategy::Simple => simple_fusion_map(&names)?,
        Strategy::Frequency => {
            let dist = last_percent_distribution(&ds, ctx.config.fusion.tail_fraction)?;
            frequency_fusion_map(&dist, a.target.unwrap_or(ctx.config.fusion.target), &names)?
        }
        Strategy::File => {
            let path = a
                .map
                .as_ref()
                .ok_or_else(|| CliError::config("--strategy file needs --map"))?;
            let map = FusionMap::from_json(&read_string(path)?)?;
            if map.action_names != names {
                return Err(CliError::config(format!(
                    "map covers actions {:?}, {} has {:?}",
                    map.action_names, a.game, names
                )));
            }
            map
        }
    };
    log::info!("{}: {} → {} actions", a.game, map.primitive_count(), map.fused_count());
    let relabelled = relabel_dataset(&ds, &map)?;
    let data_out = a.data_out.clone().unwrap_or_else(|| {
        a.data
            .join(format!("{}.{}.{DATASET_EXT}", a.game, map.strategy))
    });
    let args = json!({"game": a.game, "strategy": map.strategy, "fused": map.fused_count()});
    let mut outputs = Outputs::new(&ctx.hash, "fuse", args);
    outputs.write(&a.map_out, format!("{}\n", map.to_json()?).as_bytes())?;
    outputs.write(&data_out, &encode_container(&relabelled)?)?;
    Ok(outputs.commit())
}

pub struct AnalyzeArgs {
    pub metrics: PathBuf,
    pub scores: Vec<PathBuf>,
    pub trees: Option<usize>,
    pub folds: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn analyze(ctx: &Ctx, a: &AnalyzeArgs) -> CliResult<Vec<PathBuf>> {
    check_input(&a.metrics, &ctx.hash)?;
    let metrics = read_metrics_csv(&read_string(&a.metrics)?)?;
    let mut scores = Vec::new();
    for path in &a.scores {
        check_input(path, &ctx.hash)?;
        scores.extend(read_scores_csv(&read_string(path)?)?);
    }
    let mut cfg = ctx.config.analysis_config(a.seed);
    if let Some(t) = a.trees {
        cfg.trees = t;
    }
    if let Some(k) = a.folds {
        cfg.folds = k;
    }
    let report = seqrl_analysis::analyze(&metrics, &scores, &cfg)?;
    let file = ReportFile {
        config_hash: ctx.hash.clone(),
        report,
    };
    let args = json!({"trees": cfg.trees, "folds": cfg.folds, "seed": a.seed, "scores": a.scores.len()});
    let mut outputs = Outputs::new(&ctx.hash, "analyze", args);
    outputs.write(&a.out.join(ANALYSIS_FILE), &json_bytes(&file)?)?;
    for (name, svg) in figures(&file.report) {
        outputs.write(&a.out.join(name), svg.as_bytes())?;
    }
    Ok(outputs.commit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "svg" => Ok(Self::Svg),
            other => Err(CliError::config(format!("unknown format {other:?}"))),
        }
    }
}

/// Config hashes of every artifact in `dir`: from each provenance sidecar
/// and from the analysis report itself.
fn hashes_in(dir: &Path) -> CliResult<Vec<(PathBuf, String)>> {
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for path in entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(SIDECAR_SUFFIX) {
            let p: crate::artifact::Provenance = serde_json::from_slice(&read(&path)?)?;
            out.push((path, p.config_hash));
        } else if path.is_file() && !sidecar_path(&path).exists() {
            return Err(CliError::data(format!("{} has no provenance", path.display())));
        }
    }
    Ok(out)
}

fn csv_table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v}"))
}

/// Regenerates tables or figures from the analysis in `dir`. `expected`
/// pins the config hash when the caller knows it.
pub fn report(dir: &Path, format: Format, expected: Option<&str>) -> CliResult<Vec<PathBuf>> {
    let path = dir.join(ANALYSIS_FILE);
    let file: ReportFile = serde_json::from_slice(&read(&path)?)?;
    let hash = expected.unwrap_or(&file.config_hash).to_string();
    if file.config_hash != hash {
        return Err(CliError::data(format!("{} belongs to config {}, expected {hash}", path.display(), file.config_hash)));
    }
    for (p, h) in hashes_in(dir)? {
        if h != hash {
            return Err(CliError::data(format!("{} belongs to config {h}, report is for {hash}", p.display())));
        }
    }
    file.report.validate()?;
    let r = &file.report;
    let mut outputs = Outputs::new(&hash, "report", json!({"format": format!("{format:?}").to_lowercase()}));
    match format {
        Format::Json => outputs.write(&dir.join("report.json"), &json_bytes(r)?)?,
        Format::Svg => {
            for (name, svg) in figures(r) {
                outputs.write(&dir.join(name), svg.as_bytes())?;
            }
        }
        Format::Csv => {
            let names = &r.features.feature_names;
            let imp = csv_table(
                &["feature", "importance", "mean_abs_shap"],
                names
                    .iter()
                    .enumerate()
                    .map(|(f, n)| vec![n.clone(), r.regression.importances[f].to_string(), r.shap.mean_abs[f].to_string()]),
            );
            outputs.write(&dir.join("importances.csv"), imp.as_bytes())?;
            let cv = csv_table(
                &["fold", "rmse"],
                r.regression
                    .fold_rmse
                    .iter()
                    .enumerate()
                    .map(|(k, v)| vec![k.to_string(), v.to_string()]),
            );
            outputs.write(&dir.join("folds.csv"), cv.as_bytes())?;
            let mut header = vec!["game", r.target_label.as_str()];
            header.extend(names.iter().map(String::as_str));
            let features = csv_table(
                &header,
                r.features.games.iter().enumerate().map(|(i, g)| {
                    let mut row = vec![g.clone(), r.target[i].to_string()];
                    row.extend(r.features.values[i].iter().map(f64::to_string));
                    row
                }),
            );
            outputs.write(&dir.join("features.csv"), features.as_bytes())?;
            let shap = csv_table(
                &[&["game"], names.iter().map(String::as_str).collect::<Vec<_>>().as_slice()].concat(),
                r.features.games.iter().enumerate().map(|(i, g)| {
                    let mut row = vec![g.clone()];
                    row.extend(r.shap.values[i].iter().map(f64::to_string));
                    row
                }),
            );
            outputs.write(&dir.join("shap.csv"), shap.as_bytes())?;
            let c = &r.correlation;
            let corr = csv_table(
                &["row", "column", "r", "strength"],
                (0..c.labels.len()).flat_map(|i| {
                    (0..c.labels.len()).map(move |j| {
                        vec![
                            c.labels[i].clone(),
                            c.labels[j].clone(),
                            cell(c.values[i][j]),
                            c.categories[i][j].map_or(String::new(), |s| s.to_string()),
                        ]
                    })
                }),
            );
            outputs.write(&dir.join("correlation.csv"), corr.as_bytes())?;
        }
    }
    Ok(outputs.commit())
}

/// Checkpoint file name for one grid cell.
pub fn checkpoint_name(game: &str, arch: Arch, context: usize, seed: u64) -> String {
    format!("{game}-{}-k{context}-s{seed}.sqck", arch.name())
}

/// Every stage in order under `out`: `data/`, `metrics.csv`,
/// `checkpoints/`, `scores/` and `analysis/`.
pub fn run(ctx: &Ctx, out: &Path) -> CliResult<()> {
    let cfg = &ctx.config;
    let data = out.join("data");
    gen_suite(ctx, &data)?;
    stats(ctx, &data, cfg.stats.frames, cfg.seed, &out.join("metrics.csv"))?;
    let mut scores = Vec::new();
    for spec in cfg.games()? {
        for &arch in &cfg.model.archs {
            for &context in &cfg.model.contexts {
                for &seed in &cfg.model.seeds {
                    let name = checkpoint_name(&spec.name, arch, context, seed);
                    let ckpt = out.join("checkpoints").join(&name);
                    train(
                        ctx,
                        &TrainArgs {
                            data: data.clone(),
                            game: spec.name.clone(),
                            arch,
                            context,
                            seed,
                            map: None,
                            out: ckpt.clone(),
                        },
                    )?;
                    let score = out.join("scores").join(name.replace(".sqck", ".csv"));
                    eval(
                        ctx,
                        &EvalArgs {
                            ckpt,
                            episodes: None,
                            seed,
                            target: None,
                            selection: None,
                            baselines: None,
                            out: score.clone(),
                        },
                    )?;
                    scores.push(score);
                }
            }
        }
    }
    let analysis = out.join("analysis");
    analyze(
        ctx,
        &AnalyzeArgs {
            metrics: out.join("metrics.csv"),
            scores,
            trees: None,
            folds: None,
            seed: cfg.seed,
            out: analysis.clone(),
        },
    )?;
    for format in [Format::Json, Format::Csv, Format::Svg] {
        report(&analysis, format, Some(&ctx.hash))?;
    }
    Ok(())
}
