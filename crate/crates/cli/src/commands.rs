use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use hieeg::evalx::{
    abstraction_run, aggregate, evaluate_suite, init_embedder, read_records, span_bins_report, train_mode,
    write_records, write_report, write_span_table, write_wordcloud, LevelData, WaySetting,
};
use hieeg::hierarchy::io::{read_dag, read_hypernym_paths, write_dag};
use hieeg::hierarchy::{broad_word_scores, build_dag, filter_broad_words, primary_paths, remove_named_nodes};
use hieeg::metalearn::{read_checkpoint, write_checkpoint, FeatureStore};
use hieeg::montage::{align_layouts, read_alignment, read_layout, write_alignment};
use hieeg::preprocess::heeg::{read_keyed, write_keyed, KeyedTensor, Tensor};
use hieeg::preprocess::manifest::{read_manifest, write_manifest};
use hieeg::preprocess::{extract_word_windows, preprocess_recording, read_recording, SampleManifest, TARGET_RATE};
use hieeg::sampler::{
    make_splits, read_episodes, sample_eval_suite, write_episodes, ClassPool, EpisodeSuite, Split, SplitData,
    TrainSampler,
};
use hieeg::seed::stream_seed;
use hieeg::synth::{bayes_oracle_accuracy, gen_hierarchy_gaussians};
use hieeg::{Error, Result};
use ndarray::Array2;

use crate::config::RunConfig;
use crate::meta::Outputs;
use crate::{Cli, Command};

/// Stacks equally sized flattened windows into one `f32` row per sample.
fn flatten_rows(windows: &[Vec<f64>], rate: u32) -> Result<Tensor> {
    let dim = windows.first().map_or(0, Vec::len);
    let mut data = Array2::<f32>::zeros((windows.len(), dim));
    for (mut row, w) in data.rows_mut().into_iter().zip(windows) {
        if w.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                got: w.len(),
            });
        }
        row.iter_mut().zip(w).for_each(|(d, v)| *d = *v as f32);
    }
    Ok(Tensor { data, rate })
}

fn need(flag: Option<&PathBuf>, fallback: Option<&PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or(fallback)
        .cloned()
        .ok_or_else(|| Error::InvalidArgument(format!("missing --{what} (or paths.{what} in the config)")))
}

fn split_dir(root: &Path, split: Split) -> PathBuf {
    root.join(split.as_str())
}

/// Reads `<splits>/<split>/{dag.json,manifest.csv}` as a DAG and word pool.
fn load_split(root: &Path, split: Split) -> Result<LevelData> {
    let dir = split_dir(root, split);
    let dag = read_dag(&dir.join("dag.json"))?;
    let manifest = read_manifest(&dir.join("manifest.csv"))?;
    let leaves: BTreeSet<&str> = dag.leaves().into_iter().collect();
    let pool = ClassPool::from_rows(&manifest.rows, |w| leaves.contains(w))?;
    Ok(LevelData { dag, pool })
}

fn write_split(out: &mut Outputs, prefix: &str, s: &SplitData) -> Result<()> {
    let dir = format!("{prefix}/{}", s.split.as_str());
    write_dag(&out.file(&format!("{dir}/dag.json"))?, &s.dag)?;
    write_manifest(
        &out.file(&format!("{dir}/manifest.csv"))?,
        &SampleManifest::new(s.rows.clone())?,
    )
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
        cfg.synth.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.run.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(Error::InvalidArgument("--jobs must be positive".into()));
    }
    // a second initialisation in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    let mut out = Outputs::new(&cfg.run.out_dir)?;
    let p = &cfg.paths;
    let seed = cfg.run.seed;

    match &cli.command {
        Command::BuildDag { hypernyms, manifest } => {
            let records = read_hypernym_paths(&need(hypernyms.as_ref(), p.hypernyms.as_ref(), "hypernyms")?)?;
            let words: BTreeSet<String> = match manifest.as_ref().or(p.manifest.as_ref()) {
                Some(m) => read_manifest(m)?.words().into_iter().map(String::from).collect(),
                None => records.iter().map(|r| r.word.clone()).collect(),
            };
            let (dag, skipped) = build_dag(&records, &words)?;
            let (dag, dropped) = remove_named_nodes(&dag, &cfg.hierarchy.discarded)?;
            write_dag(&out.file("dag.json")?, &dag)?;
            let mut lines: Vec<String> = skipped.iter().map(|w| format!("{w},no_hypernym_record")).collect();
            lines.extend(dropped.iter().map(|w| format!("{w},unreachable_after_discard")));
            write_csv(
                &out.file("dropped_words.csv")?,
                &["word", "reason"],
                lines.iter().map(|l| l.splitn(2, ',').map(String::from).collect()),
            )?;
            log::info!("dag: {} nodes, {} leaves", dag.len(), dag.leaf_count());
        }
        Command::FilterDag { dag } => {
            let dag = read_dag(&need(dag.as_ref(), p.dag.as_ref(), "dag")?)?;
            let scores = broad_word_scores(&dag);
            let (filtered, removed) = filter_broad_words(&dag, cfg.hierarchy.broad_threshold)?;
            let removed: BTreeSet<String> = removed.into_iter().collect();
            write_dag(&out.file("dag_filtered.json")?, &filtered)?;
            write_csv(
                &out.file("broad_words.csv")?,
                &["word", "parent", "parent_span", "siblings", "metric", "removed"],
                scores.iter().map(|s| {
                    vec![
                        s.word.clone(),
                        s.parent.clone(),
                        s.parent_span.to_string(),
                        s.siblings.to_string(),
                        s.metric.to_string(),
                        removed.contains(&s.word).to_string(),
                    ]
                }),
            )?;
        }
        Command::AlignMontage { reference, targets } => {
            let reference = read_layout(&need(reference.as_ref(), p.reference_layout.as_ref(), "reference")?)?;
            let targets = if targets.is_empty() { &p.target_layouts } else { targets };
            let layouts = targets.iter().map(|t| read_layout(t)).collect::<Result<Vec<_>>>()?;
            let map = align_layouts(&reference, &layouts, cfg.montage.neighbors)?;
            write_alignment(&out.file("alignment.csv")?, &map)?;
        }
        Command::Preprocess { manifest, alignment } => {
            let mpath = need(manifest.as_ref(), p.manifest.as_ref(), "manifest")?;
            let manifest = read_manifest(&mpath)?;
            let map = read_alignment(&need(alignment.as_ref(), p.alignment.as_ref(), "alignment")?)?;
            let base = mpath.parent().map(Path::to_path_buf).unwrap_or_default();
            let mut by_uri: BTreeMap<&str, Vec<_>> = BTreeMap::new();
            for r in &manifest.rows {
                by_uri.entry(r.recording_uri.as_str()).or_default().push(r.clone());
            }
            let mut windows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            let mut skipped = Vec::new();
            let mut metas = BTreeMap::new();
            for (uri, rows) in by_uri {
                let raw = read_recording(&base.join(uri))?;
                let layout = raw.layout.clone().ok_or_else(|| {
                    Error::Layout(format!("recording `{uri}` has no layout in its .channels sidecar"))
                })?;
                let (rec, meta) = preprocess_recording(&raw, &map, &layout, &cfg.preprocess)?;
                let (ws, sk) = extract_word_windows(&rec, &rows)?;
                for (id, w) in ws {
                    windows.insert(id, w.iter().copied().collect());
                }
                skipped.extend(sk);
                metas.insert(uri.to_string(), meta);
            }
            // manifest order
            let mut keys = Vec::new();
            let mut rows = Vec::new();
            for r in &manifest.rows {
                if let Some(w) = windows.remove(&r.sample_id) {
                    keys.push(r.sample_id.clone());
                    rows.push(w);
                }
            }
            let tensor = flatten_rows(&rows, TARGET_RATE)?;
            write_keyed(&out.file("windows.heeg")?, &KeyedTensor { keys, tensor })?;
            write_csv(
                &out.file("skipped_windows.csv")?,
                &["sample_id", "reason"],
                skipped.iter().map(|s| vec![s.sample_id.clone(), s.reason.clone()]),
            )?;
            out.write_json("preprocess_meta.json", &metas)?;
            if !skipped.is_empty() {
                log::warn!("{} windows skipped", skipped.len());
            }
        }
        Command::MakeSplits {
            manifest,
            hypernyms,
            dag,
        } => {
            let manifest = read_manifest(&need(manifest.as_ref(), p.manifest.as_ref(), "manifest")?)?;
            let records = read_hypernym_paths(&need(hypernyms.as_ref(), p.hypernyms.as_ref(), "hypernyms")?)?;
            let dag = read_dag(&need(dag.as_ref(), p.dag.as_ref(), "dag")?)?;
            let splits = make_splits(&manifest, &records, &dag, &cfg.splits, seed)?;
            for s in [&splits.train, &splits.validation, &splits.test] {
                write_split(&mut out, "splits", s)?;
            }
        }
        Command::SampleEpisodes { splits, split, count } => {
            let root = need(splits.as_ref(), p.splits.as_ref(), "splits")?;
            let data = load_split(&root, *split)?;
            let name = format!("{}_episodes.jsonl", split.as_str());
            match split {
                Split::MetaTrain => {
                    let sampler =
                        TrainSampler::new(&data.dag, &data.pool, stream_seed(seed, "meta-train", 0), &cfg.sampler)?;
                    let eps = (0..*count as u64)
                        .map(|i| sampler.episode(i))
                        .collect::<Result<Vec<_>>>()?;
                    write_episodes(&out.file(&name)?, &eps)?;
                }
                Split::MetaValidation | Split::MetaTest => {
                    let instances = if *split == Split::MetaTest {
                        cfg.eval.test_instances
                    } else {
                        cfg.eval.val_instances
                    };
                    let (suite, rejections) = sample_eval_suite(
                        &data.dag,
                        &data.pool,
                        *split,
                        instances,
                        stream_seed(seed, split.as_str(), 0),
                        &cfg.sampler,
                    )?;
                    write_episodes(&out.file(&name)?, &suite.episodes)?;
                    write_csv(
                        &out.file(&format!("{}_rejections.csv", split.as_str()))?,
                        &["node", "instance", "reason"],
                        rejections
                            .iter()
                            .map(|r| vec![r.node.clone(), r.instance.to_string(), r.reason.clone()]),
                    )?;
                }
            }
        }
        Command::Train { mode, splits, windows } => {
            let root = need(splits.as_ref(), p.splits.as_ref(), "splits")?;
            let train = load_split(&root, Split::MetaTrain)?;
            let store =
                FeatureStore::from_keyed(&read_keyed(&need(windows.as_ref(), p.windows.as_ref(), "windows")?)?)?;
            let init = init_embedder(store.dim(), &cfg.adapt, seed)?;
            let pcfg = cfg.pipeline(cfg.eval.test_instances);
            let (params, losses) = train_mode(*mode, &init, &train, &store, &pcfg, seed)?;
            write_checkpoint(
                &out.file(&format!("{}.hmlc", mode.as_str()))?,
                &params,
                *mode,
                losses.len() as u64,
            )?;
            write_csv(
                &out.file(&format!("{}_train_log.csv", mode.as_str()))?,
                &["step", "loss"],
                losses
                    .iter()
                    .enumerate()
                    .map(|(i, l)| vec![i.to_string(), format!("{l:.17}")]),
            )?;
        }
        Command::Evaluate {
            suite,
            checkpoint,
            splits,
            split,
            windows,
        } => {
            let episodes = read_episodes(&need(suite.as_ref(), p.suite.as_ref(), "suite")?)?;
            let (params, header) = read_checkpoint(&need(checkpoint.as_ref(), p.checkpoint.as_ref(), "checkpoint")?)?;
            let root = need(splits.as_ref(), p.splits.as_ref(), "splits")?;
            let data = load_split(&root, *split)?;
            let store =
                FeatureStore::from_keyed(&read_keyed(&need(windows.as_ref(), p.windows.as_ref(), "windows")?)?)?;
            let suite = EpisodeSuite {
                split: *split,
                instances_per_node: cfg.eval.test_instances,
                episodes,
            };
            let pcfg = cfg.pipeline(cfg.eval.test_instances);
            let records = evaluate_suite(&params, &suite, &data.dag, &store, header.mode, &pcfg)?;
            let stem = format!("{}_{}", header.mode.as_str(), split.as_str());
            write_records(&out.file(&format!("{stem}_records.csv"))?, &records)?;
            let report = aggregate(&records)?;
            for suffix in ["_grid.csv", "_nodes.csv", "_suite.csv", ".json"] {
                out.file(&format!("{stem}_report{suffix}"))?;
            }
            write_report(&out.dir, &format!("{stem}_report"), &report)?;
        }
        Command::AnalyzeSpan { records } => {
            let records = read_records(&need(records.as_ref(), p.records.as_ref(), "records")?)?;
            let report = aggregate(&records)?;
            let span = span_bins_report(&report, &cfg.eval.span_bins)?;
            write_span_table(&out.file("span_bins.csv")?, &span)?;
            let mut cells: BTreeSet<(hieeg::metalearn::Mode, WaySetting)> = BTreeSet::new();
            cells.extend(span.wordcloud.iter().map(|w| (w.mode, w.setting)));
            for (mode, setting) in cells {
                let name = format!("wordcloud_{}_{}.csv", mode.as_str(), setting);
                write_wordcloud(&out.file(&name)?, &span, mode, setting)?;
            }
            out.write_json("span_report.json", &span)?;
        }
        Command::AnalyzeAbstraction {
            levels,
            modes,
            hypernyms,
            splits,
            windows,
        } => {
            let records = read_hypernym_paths(&need(hypernyms.as_ref(), p.hypernyms.as_ref(), "hypernyms")?)?;
            let root = need(splits.as_ref(), p.splits.as_ref(), "splits")?;
            let train = load_split(&root, Split::MetaTrain)?;
            let test = load_split(&root, Split::MetaTest)?;
            let store =
                FeatureStore::from_keyed(&read_keyed(&need(windows.as_ref(), p.windows.as_ref(), "windows")?)?)?;
            let levels = levels.clone().unwrap_or_else(|| cfg.abstraction.levels.clone());
            let modes = modes.clone().unwrap_or_else(|| cfg.abstraction.modes.clone());
            let pcfg = cfg.pipeline(cfg.eval.test_instances);
            let reports = abstraction_run(
                &train,
                &test,
                &primary_paths(&records),
                &store,
                &levels,
                &modes,
                &pcfg,
                seed,
            )?;
            let mut summary = Vec::new();
            for r in &reports {
                let stem = format!("level_{}", r.level);
                match &r.report {
                    Some(rep) => {
                        write_records(&out.file(&format!("{stem}/records.csv"))?, &r.records)?;
                        for suffix in ["_grid.csv", "_nodes.csv", "_suite.csv", ".json"] {
                            out.file(&format!("{stem}/report{suffix}"))?;
                        }
                        write_report(&out.dir.join(&stem), "report", rep)?;
                        for s in &rep.suite {
                            summary.push(vec![
                                r.level.to_string(),
                                String::new(),
                                r.train_classes.to_string(),
                                r.test_classes.to_string(),
                                format!("{:.6}", r.overlap),
                                s.mode.as_str().into(),
                                s.setting.to_string(),
                                format!("{:.6}", s.stats.mean),
                                format!("{:.6}", s.stats.std),
                            ]);
                        }
                    }
                    None => summary.push(vec![
                        r.level.to_string(),
                        r.skipped.clone().unwrap_or_default(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                    ]),
                }
            }
            write_csv(
                &out.file("abstraction_summary.csv")?,
                &[
                    "level",
                    "skipped",
                    "train_classes",
                    "test_classes",
                    "overlap",
                    "mode",
                    "way",
                    "mean",
                    "std",
                ],
                summary,
            )?;
        }
        Command::SynthGen => {
            let data = gen_hierarchy_gaussians(&cfg.synth)?;
            data.write(&out.dir)?;
            for f in ["hypernyms.txt", "manifest.csv", "windows.heeg", "means.json"] {
                out.file(f)?;
            }
            let (train_words, test_words) = data.stratified_split(1, cfg.synth.seed)?;
            for (split, words) in [(Split::MetaTrain, &train_words), (Split::MetaTest, &test_words)] {
                let level = data.level_data(words)?;
                let rows: Vec<_> = data
                    .manifest
                    .rows
                    .iter()
                    .filter(|r| words.contains(&r.word))
                    .cloned()
                    .collect();
                write_split(
                    &mut out,
                    "splits",
                    &SplitData {
                        split,
                        dag: level.dag,
                        pool: level.pool,
                        words: words.clone(),
                        subjects: rows.iter().map(|r| r.subject.clone()).collect(),
                        rows,
                    },
                )?;
            }
        }
        Command::Oracle { levels, trials } => {
            let levels = levels.clone().unwrap_or_else(|| cfg.oracle.levels.clone());
            let trials = trials.unwrap_or(cfg.oracle.trials);
            let mut settings = vec![WaySetting::Variable];
            settings.extend(cfg.eval.fixed_ways.iter().map(|&w| WaySetting::Fixed(w)));
            let mut rows = Vec::new();
            for &h in &levels {
                for &s in &settings {
                    match bayes_oracle_accuracy(&cfg.synth, h, s, trials, &cfg.sampler) {
                        Ok(acc) => rows.push(vec![h.to_string(), s.to_string(), format!("{acc:.6}"), String::new()]),
                        Err(e @ (Error::PruneTooDeep { .. } | Error::EmptySplit(_))) => {
                            rows.push(vec![h.to_string(), s.to_string(), String::new(), e.to_string()])
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            write_csv(
                &out.file("oracle.csv")?,
                &["level", "way", "normalized_accuracy", "skipped"],
                rows,
            )?;
        }
    }
    let args = argv.into_iter().skip(1).collect();
    out.finish(cli.command.name(), args, &cfg, jobs)?;
    Ok(())
}
