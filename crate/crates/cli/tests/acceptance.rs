//! End-to-end acceptance battery. Prints one PASS/FAIL line per criterion
//! and fails if any criterion does.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use seqrl_analysis::report::read_metrics_csv;
use seqrl_analysis::{categorize_correlation, pearson_matrix, random_forest_cv, AnalysisReport, ForestConfig, Strength};
use seqrl_cli::commands::{self, Ctx, ReportFile, SuiteManifest};
use seqrl_cli::RunConfig;
use seqrl_core::actions::canonical_prefix;
use seqrl_core::data::{compute_rtg, FRAME_PIXELS, FRAME_SIDE};
use seqrl_core::env::{generate_dataset, GameSpec, Policy};
use seqrl_core::fusion::{frequency_fusion_trace, reference, relabel_dataset, simple_fusion_map, FusionMap};
use seqrl_core::metrics::{compression_ratio, feature_count, image_entropy};
use seqrl_eval::scores::read_scores_csv;
use seqrl_eval::{normalized_score, NormalizationBaseline};
use seqrl_models::gradcheck::{check_point, gradient_check, random_batch, Oracle, JITTER};
use seqrl_models::graph::Graph;
use seqrl_models::kernels::scan;
use seqrl_models::model::predict;
use seqrl_models::params::hippo_legt_diagonal;
use seqrl_models::train::{dataset_accuracy, train};
use seqrl_models::{init_model, Arch, ModelConfig, ParamStore, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn report_line(id: usize, title: &str, o: &Outcome, took: Duration) {
    let mark = if o.pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout();
    writeln!(out, "[{mark}] {id:>2} {title}: {} ({:.1}s)", o.detail, took.as_secs_f64()).unwrap();
    out.flush().unwrap();
}

fn tiny(arch: Arch) -> ModelConfig {
    ModelConfig::tiny(arch, 6, 4, 64)
}

fn gradients() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for arch in [Arch::Dt, Arch::Dm] {
        let c = tiny(arch);
        let r64 = gradient_check::<f64>(&c, 7, Oracle::Wide).unwrap();
        let r32 = gradient_check::<f32>(&c, 11, Oracle::Wide).unwrap();
        let native = gradient_check::<f32>(&c, 11, Oracle::Native).unwrap();
        let groups = init_model::<f64>(&c, 7).unwrap().len();
        pass &= r64.groups.len() == groups && r32.groups.len() == groups;
        pass &= r64.max_rel_error() < 1e-6 && r32.max_rel_error() < 1e-3;
        parts.push(format!(
            "{} f64 {:.1e} f32 {:.1e} (f32-native {:.1e}) over {groups} groups",
            arch.name(),
            r64.max_rel_error(),
            r32.max_rel_error(),
            native.max_rel_error()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn causality() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for arch in [Arch::Dt, Arch::Dm] {
        let c = ModelConfig {
            dropout: 0.0,
            ..ModelConfig::tiny(arch, 6, 8, 64)
        };
        let m = c.action_space_size;
        let store: ParamStore<f64> = check_point(&c, 21, JITTER).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let mut worst = 0.0f64;
        for trial in 0..100u64 {
            let base = random_batch(&c, 2, 5000 + trial);
            let row = rng.random_range(0..2);
            let t = rng.random_range(1..c.context);
            let i = row * c.context + t;
            let mut changed = base.clone();
            match trial % 3 {
                0 => changed.rtg[i] += 3.0,
                1 => rng.fill(changed.state_stack_mut(row, t)),
                _ => changed.actions[i] = ((changed.actions[i] as usize + 1) % m) as u8,
            }
            let (a, b) = (predict(&store, &c, &base).unwrap(), predict(&store, &c, &changed).unwrap());
            let lo = row * c.context * m;
            for j in lo..lo + t * m {
                worst = worst.max((a[j] - b[j]).abs());
            }
        }
        pass &= worst <= 1e-6;
        parts.push(format!("{} max earlier-logit change {worst:.1e}", arch.name()));
    }
    outcome(pass, parts.join("; "))
}

/// y_t = Σ_{s ≤ t} Σ_k C_t[k] · exp(Σ_{s < r ≤ t} Δ_r·A[k]) · Δ_s·B_s[k]·x_s + D·x_t
fn unrolled_ssm(seq: usize, e: usize, n: usize, v: &BTreeMap<&str, Vec<f64>>) -> Vec<f64> {
    let (x, delta, a_log, b, c, d) = (&v["x"], &v["delta"], &v["a_log"], &v["b"], &v["c"], &v["d"]);
    let rows = x.len() / e;
    let mut y = vec![0.0; rows * e];
    for start in (0..rows).step_by(seq) {
        for t in start..start + seq {
            for ch in 0..e {
                let mut acc = d[ch] * x[t * e + ch];
                for s in start..=t {
                    for k in 0..n {
                        let a = -a_log[ch * n + k].exp();
                        let decay: f64 = (s + 1..=t).map(|r| delta[r * e + ch]).sum::<f64>() * a;
                        acc += c[t * n + k] * decay.exp() * delta[s * e + ch] * b[s * n + k] * x[s * e + ch];
                    }
                }
                y[t * e + ch] = acc;
            }
        }
    }
    y
}

fn ssm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (batch, seq) = (rng.random_range(1..=3), rng.random_range(1..=32));
        let (e, n) = (rng.random_range(1..=5), rng.random_range(1..=8));
        let rows = batch * seq;
        let mut draw = |len: usize, lo: f64, hi: f64| (0..len).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>();
        let v: BTreeMap<&str, Vec<f64>> = [
            ("x", draw(rows * e, -2.0, 2.0)),
            ("delta", draw(rows * e, 0.01, 1.0)),
            ("a_log", draw(e * n, -1.0, 2.0)),
            ("b", draw(rows * n, -1.0, 1.0)),
            ("c", draw(rows * n, -1.0, 1.0)),
            ("d", draw(e, -1.0, 1.0)),
        ]
        .into_iter()
        .collect();
        let mut g = Graph::<f64>::new();
        let inputs = scan::Inputs {
            x: g.constant(&[rows, e], v["x"].clone()),
            delta: g.constant(&[rows, e], v["delta"].clone()),
            a_log: g.constant(&[e, n], v["a_log"].clone()),
            b: g.constant(&[rows, n], v["b"].clone()),
            c: g.constant(&[rows, n], v["c"].clone()),
            d: g.constant(&[e], v["d"].clone()),
        };
        let y = g.selective_scan(inputs, batch, seq).unwrap();
        let want = unrolled_ssm(seq, e, n, &v);
        worst = g.value(y).iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let hippo_exact = [1usize, 4, 16, 64]
        .iter()
        .all(|&n| hippo_legt_diagonal(n) == (1..=n).map(|k| -(k as f64)).collect::<Vec<_>>());
    let mut c = tiny(Arch::Dm);
    c.ssm_state = 16;
    let store = init_model::<f64>(&c, 1).unwrap();
    let init_ok = (0..c.n_layers).all(|l| {
        store.ssm_a(l).unwrap().iter().enumerate().all(|(i, &a)| {
            let want = -((i % 16 + 1) as f64);
            (a - want).abs() <= 1e-12 * want.abs()
        })
    });
    outcome(
        worst <= 1e-5 && hippo_exact && init_ok,
        format!("max-abs {worst:.1e} over 100 cases; HiPPO diagonal exact {hippo_exact}; model A init {init_ok}"),
    )
}

fn learnability() -> Outcome {
    let spec = GameSpec {
        name: "Scripted".into(),
        action_space_size: 6,
        grid: (12, 12),
        texture_level: 0.0,
        reward_sparsity: 4,
        max_episode_len: 40,
        fire_required: false,
        seed: 3,
        n_targets: 3,
    };
    let ds = generate_dataset(&spec, Policy::ScriptedExpert { epsilon: 0.0 }, 100, 17).unwrap();
    let tc = TrainConfig {
        batch_size: 8,
        warmup_tokens: 8 * 4 * 10,
        ..TrainConfig::default()
    };
    let mut pass = tc.max_epochs <= 5;
    let mut parts = Vec::new();
    for arch in [Arch::Dt, Arch::Dm] {
        let c = tiny(arch);
        let out = train(&c, &tc, &ds, |_, _| {}).unwrap();
        let acc = dataset_accuracy(&out.params, &c, &ds, 256).unwrap();
        pass &= acc >= 0.95;
        parts.push(format!("{} {:.1}%", arch.name(), 100.0 * acc));
    }
    outcome(pass, format!("{} epochs: {}", tc.max_epochs, parts.join(", ")))
}

fn rtg_and_scoring() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.random_range(1..200);
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..10.0)).collect();
        let got = compute_rtg(&rewards).unwrap();
        for t in 0..len {
            let want: f64 = rewards[t..].iter().sum();
            worst = worst.max((got[t] - want).abs() / want.abs().max(1.0));
        }
    }
    let b = NormalizationBaseline::new("Breakout", 1.7, 30.5).unwrap();
    let lo = normalized_score(1.7, &b).unwrap();
    let hi = normalized_score(30.5, &b).unwrap();
    let mid = normalized_score(16.1, &b).unwrap();
    let table = NormalizationBaseline::atari("Breakout").map(|t| (t.random_score, t.human_score));
    let pass = worst <= 1e-6 && lo == 0.0 && hi == 100.0 && (mid - 50.0).abs() <= 1e-9 && table == Some((1.7, 30.5));
    outcome(
        pass,
        format!("rtg rel {worst:.1e} over 1000 episodes; Breakout 1.7→{lo}, 30.5→{hi}, 16.1→{mid}"),
    )
}

fn metric_goldens() -> Outcome {
    const CONSTANT_RATIO: f64 = 243.31034482758622;
    const NOISE_RATIO: f64 = 0.9984434696476582;
    const BLOB_FEATURES: usize = 1;
    let s = FRAME_SIDE;
    let noise = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..FRAME_PIXELS).map(|_| rng.random::<u8>()).collect::<Vec<u8>>()
    };
    let constant = vec![0u8; FRAME_PIXELS];
    let uniform: Vec<u8> = (0..=255).collect();
    let mut blob = vec![0u8; FRAME_PIXELS];
    for y in 30..35 {
        for x in 30..35 {
            blob[y * s + x] = 255;
        }
    }
    let c_ratio = compression_ratio(&constant, s, s);
    let checks = [
        ("entropy(constant)=0", image_entropy(&constant, s, s) == 0.0),
        ("entropy(uniform)=8", (image_entropy(&uniform, 16, 16) - 8.0).abs() <= 1e-9),
        ("ratio(constant)>ratio(noise)", (0..20).all(|seed| c_ratio > compression_ratio(&noise(seed), s, s))),
        ("features(constant)=0", feature_count(&constant, s, s) == 0),
        ("ratio(constant) golden", c_ratio == CONSTANT_RATIO),
        ("ratio(noise 42) golden", compression_ratio(&noise(42), s, s) == NOISE_RATIO),
        ("features(blob) golden", feature_count(&blob, s, s) == BLOB_FEATURES),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    if failed.is_empty() {
        outcome(true, format!("{} checks", checks.len()))
    } else {
        outcome(false, format!("failed: {}", failed.join(", ")))
    }
}

fn named_groups(map: &FusionMap) -> Vec<Vec<String>> {
    let mut groups: Vec<Vec<String>> = map
        .groups
        .iter()
        .map(|g| {
            let mut names: Vec<String> = g.iter().map(|&i| map.action_names[i].clone()).collect();
            names.sort();
            names
        })
        .collect();
    groups.sort();
    groups
}

fn expected(groups: &[&[&str]]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = groups
        .iter()
        .map(|g| {
            let mut names: Vec<String> = g.iter().map(|s| s.to_string()).collect();
            names.sort();
            names
        })
        .collect();
    out.sort();
    out
}

fn membership_round_trip(map: &FusionMap) -> bool {
    (0..map.primitive_count()).all(|a| {
        map.fused_id_of(a)
            .and_then(|f| map.group(f).map(|g| g.contains(&a)))
            .unwrap_or(false)
    })
}

fn fusion() -> Outcome {
    let hero_names = canonical_prefix(18).unwrap();
    let hero = simple_fusion_map(&hero_names).unwrap();
    let hero_ok = named_groups(&hero)
        == expected(&[
            &["NOOP"],
            &["FIRE"],
            &["UP", "UPFIRE"],
            &["RIGHT", "RIGHTFIRE"],
            &["LEFT", "LEFTFIRE"],
            &["DOWN", "DOWNFIRE"],
            &["UPRIGHT", "UPRIGHTFIRE"],
            &["UPLEFT", "UPLEFTFIRE"],
            &["DOWNRIGHT", "DOWNRIGHTFIRE"],
            &["DOWNLEFT", "DOWNLEFTFIRE"],
        ]);
    let kfm_names: Vec<String> = [
        "NOOP",
        "UP",
        "RIGHT",
        "LEFT",
        "DOWN",
        "DOWNRIGHT",
        "DOWNLEFT",
        "RIGHTFIRE",
        "LEFTFIRE",
        "DOWNFIRE",
        "UPRIGHTFIRE",
        "UPLEFTFIRE",
        "DOWNRIGHTFIRE",
        "DOWNLEFTFIRE",
    ]
    .map(String::from)
    .to_vec();
    let kfm = simple_fusion_map(&kfm_names).unwrap();
    let kfm_ok = named_groups(&kfm)
        == expected(&[
            &["NOOP"],
            &["UP"],
            &["RIGHT", "RIGHTFIRE"],
            &["LEFT", "LEFTFIRE"],
            &["DOWN", "DOWNFIRE"],
            &["DOWNRIGHT", "DOWNRIGHTFIRE"],
            &["DOWNLEFT", "DOWNLEFTFIRE"],
            &["UPRIGHTFIRE"],
            &["UPLEFTFIRE"],
        ]);

    let (freq, merges) = frequency_fusion_trace(&reference::hero_distribution(), 10, &hero_names).unwrap();
    let mut first: Vec<&str> = merges[0]
        .left
        .iter()
        .chain(&merges[0].right)
        .map(|&i| hero_names[i].as_str())
        .collect();
    first.sort_unstable();
    let freq_ok = first == ["UP", "UPFIRE"] && freq.fused_count() == 10 && freq.is_partition();

    let mut round_trip = true;
    for map in [&hero, &kfm, &freq] {
        round_trip &= membership_round_trip(map);
        round_trip &= FusionMap::from_json(&map.to_json().unwrap()).ok().as_ref() == Some(map);
    }
    let spec = GameSpec {
        name: "Fuse".into(),
        action_space_size: 18,
        grid: (16, 16),
        texture_level: 0.0,
        reward_sparsity: 2,
        max_episode_len: 30,
        fire_required: false,
        seed: 9,
        n_targets: 2,
    };
    let ds = generate_dataset(&spec, Policy::ScriptedExpert { epsilon: 0.5 }, 6, 4).unwrap();
    let relabelled = relabel_dataset(&ds, &hero).unwrap();
    for (orig, new) in ds.episodes().iter().zip(relabelled.episodes()) {
        for (&a, &f) in orig.actions().iter().zip(new.actions()) {
            round_trip &= hero.group(f as usize).is_ok_and(|g| g.contains(&(a as usize)));
        }
    }
    outcome(
        hero_ok && kfm_ok && freq_ok && round_trip,
        format!(
            "hero simple {hero_ok} ({} groups), kungfumaster simple {kfm_ok} ({} groups), first frequency merge {first:?}, round trip {round_trip}",
            hero.fused_count(),
            kfm.fused_count()
        ),
    )
}

/// r = Σ_{i<j} (a_i − a_j)(b_i − b_j) / sqrt(Σ_{i<j} (a_i − a_j)² · Σ_{i<j} (b_i − b_j)²)
fn pearson_pairwise(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            let (da, db) = (a[i] - a[j], b[i] - b[j]);
            ab += da * db;
            aa += da * da;
            bb += db * db;
        }
    }
    ab / (aa * bb).sqrt()
}

fn analysis_battery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let x: Vec<Vec<f64>> = (0..12).map(|_| (0..6).map(|_| rng.random()).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| 10.0 * r[0] + noise.sample(&mut rng)).collect();
    let names: Vec<String> = (1..=6).map(|f| format!("x{f}")).collect();
    let (report, _) = random_forest_cv(&x, &y, &names, &ForestConfig::default(), 6, 7).unwrap();
    let sum: f64 = report.importances.iter().sum();
    let forest_ok = report.importances[0] > 0.8 && (sum - 1.0).abs() <= 1e-9;

    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let cols: Vec<(String, Vec<f64>)> = (0..7)
            .map(|j| (format!("c{j}"), (0..12).map(|_| rng.random_range(-5.0..5.0)).collect()))
            .collect();
        let m = pearson_matrix(&cols).unwrap();
        for i in 0..cols.len() {
            for j in 0..cols.len() {
                let want = if i == j { 1.0 } else { pearson_pairwise(&cols[i].1, &cols[j].1) };
                worst = worst.max((m.get(i, j).unwrap() - want).abs());
            }
        }
    }
    let labels_ok = categorize_correlation(0.43).ok() == Some(Strength::Moderate)
        && categorize_correlation(-0.28).ok() == Some(Strength::Weak)
        && Strength::Moderate.to_string() == "moderate"
        && Strength::Weak.to_string() == "weak";
    outcome(
        forest_ok && worst <= 1e-12 && labels_ok,
        format!(
            "importance(x1) {:.3}, Σ {sum:.12}; pearson max dev {worst:.1e}; 0.43→moderate, −0.28→weak {labels_ok}",
            report.importances[0]
        ),
    )
}

fn run_pipeline(out: &Path) -> std::io::Result<std::process::Output> {
    Command::new(env!("CARGO_BIN_EXE_seqrl"))
        .args(["--profile", "ci", "run", "--out"])
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
}

fn validate_run(out: &Path) -> Result<String, String> {
    let ctx = Ctx::new(RunConfig::profile("ci").map_err(|x| x.to_string())?);
    let read = |p: PathBuf| std::fs::read(&p).map_err(|x| format!("{}: {x}", p.display()));

    let manifest: SuiteManifest =
        serde_json::from_slice(&read(out.join("data").join("suite.json"))?).map_err(|x| format!("suite.json: {x}"))?;
    let metrics = read_metrics_csv(&String::from_utf8_lossy(&read(out.join("metrics.csv"))?))
        .map_err(|x| format!("metrics.csv: {x}"))?;
    if metrics.len() != manifest.games.len() || metrics.len() != 3 {
        return Err(format!("{} metric rows for {} games", metrics.len(), manifest.games.len()));
    }

    let mut checkpoints = 0;
    for entry in std::fs::read_dir(out.join("checkpoints")).map_err(|x| x.to_string())? {
        let path = entry.map_err(|x| x.to_string())?.path();
        if path.extension().is_some_and(|x| x == "sqck") {
            commands::load_checkpoint(&ctx, &path).map_err(|x| x.to_string())?;
            checkpoints += 1;
        }
    }
    let mut score_rows = 0;
    for entry in std::fs::read_dir(out.join("scores")).map_err(|x| x.to_string())? {
        let path = entry.map_err(|x| x.to_string())?.path();
        if path.extension().is_some_and(|x| x == "csv") {
            let rows = read_scores_csv(&String::from_utf8_lossy(&read(path)?)).map_err(|x| x.to_string())?;
            if rows.iter().any(|r| !r.raw_score.is_finite() || !r.normalized_score.is_finite()) {
                return Err("non-finite score".into());
            }
            score_rows += rows.len();
        }
    }
    if checkpoints != 6 || score_rows != 60 {
        return Err(format!("{checkpoints} checkpoints, {score_rows} score rows"));
    }

    let analysis = out.join("analysis");
    let file: ReportFile =
        serde_json::from_slice(&read(analysis.join("analysis.json"))?).map_err(|x| format!("analysis.json: {x}"))?;
    file.report.validate().map_err(|x| x.to_string())?;
    if file.config_hash != ctx.hash {
        return Err("analysis belongs to another config".into());
    }
    let regen: AnalysisReport =
        serde_json::from_slice(&read(analysis.join("report.json"))?).map_err(|x| format!("report.json: {x}"))?;
    if regen != file.report {
        return Err("report.json differs from analysis.json".into());
    }
    for name in ["importances.csv", "folds.csv", "features.csv", "shap.csv", "correlation.csv"] {
        let bytes = read(analysis.join(name))?;
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        let width = rdr.headers().map_err(|x| format!("{}: {x}", name))?.len();
        for rec in rdr.records() {
            if rec.map_err(|x| format!("{}: {x}", name))?.len() != width {
                return Err(format!("{name}: ragged row"));
            }
        }
    }
    for name in ["importances.svg", "shap.svg", "correlation.svg"] {
        let text = String::from_utf8_lossy(&read(analysis.join(name))?).into_owned();
        if !text.trim_start().starts_with("<svg") || !text.trim_end().ends_with("</svg>") {
            return Err(format!("{name} is not an svg document"));
        }
    }
    let r = &file.report;
    let sum: f64 = r.regression.importances.iter().sum();
    Ok(format!(
        "{} games, {checkpoints} checkpoints, {score_rows} score rows, importances Σ {sum:.12}, {}×{} correlation",
        metrics.len(),
        r.correlation.labels.len(),
        r.correlation.labels.len()
    ))
}

fn pipeline(out: &Path) -> Outcome {
    let started = Instant::now();
    let result = run_pipeline(out);
    let took = started.elapsed();
    match result {
        Ok(o) if o.status.success() => match validate_run(out) {
            Ok(detail) => outcome(
                took < Duration::from_secs(30 * 60),
                format!("{detail}; ran in {:.0}s", took.as_secs_f64()),
            ),
            Err(msg) => outcome(false, msg),
        },
        Ok(o) => outcome(
            false,
            format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr).trim()),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&dir) else { continue };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(bytes) = std::fs::read(&path) {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), bytes);
            }
        }
    }
    out
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    if let Err(o) = run_pipeline(second).map_err(|e| e.to_string()).and_then(|o| {
        if o.status.success() {
            Ok(())
        } else {
            Err(String::from_utf8_lossy(&o.stderr).trim().to_string())
        }
    }) {
        return outcome(false, format!("second run failed: {o}"));
    }
    let (a, b) = (files_under(first), files_under(second));
    if a.is_empty() {
        return outcome(false, "first run produced no files");
    }
    let differing: Vec<String> = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| k.display().to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let checkpoints = a.keys().filter(|k| k.extension().is_some_and(|x| x == "sqck")).count();
    let csvs = a.keys().filter(|k| k.extension().is_some_and(|x| x == "csv")).count();
    if differing.is_empty() {
        outcome(
            true,
            format!("{} files identical ({checkpoints} checkpoints, {csvs} csv)", a.len()),
        )
    } else {
        outcome(false, format!("differing: {}", differing.join(", ")))
    }
}

type Check<'a> = Box<dyn FnOnce() -> Outcome + 'a>;

#[test]
fn acceptance_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("run-a"), dir.path().join("run-b"));
    let mut budgets: Vec<(usize, &str, Option<Duration>, Check)> = vec![
        (1, "gradient check", Some(Duration::from_secs(120)), Box::new(gradients)),
        (2, "causality", Some(Duration::from_secs(60)), Box::new(causality)),
        (3, "ssm oracle", None, Box::new(ssm_oracle)),
        (4, "learnability", Some(Duration::from_secs(600)), Box::new(learnability)),
        (5, "rtg and scoring", None, Box::new(rtg_and_scoring)),
        (6, "frame metrics", None, Box::new(metric_goldens)),
        (7, "action fusion", None, Box::new(fusion)),
        (8, "analysis battery", None, Box::new(analysis_battery)),
        (9, "ci pipeline", None, Box::new(|| pipeline(&first))),
        (10, "determinism", None, Box::new(|| determinism(&first, &second))),
    ];
    let mut failed = Vec::new();
    for (id, title, budget, check) in budgets.drain(..) {
        let started = Instant::now();
        let mut o = check();
        let took = started.elapsed();
        if let Some(limit) = budget {
            if took > limit {
                o.pass = false;
                o.detail.push_str(&format!("; over the {}s budget", limit.as_secs()));
            }
        }
        report_line(id, title, &o, took);
        if !o.pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

