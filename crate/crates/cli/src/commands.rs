//! Subcommand bodies. Each resolves its settings, runs the pipeline step and
//! writes its artefacts with the resolved settings echoed in a header.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;

use hltf_core::car::{rerank_all, write_explanations, CarConfig, CategoryIndex};
use hltf_core::data::{
    filter_min_activity, ingest_events, open_source, read_matrix, read_vocabulary_tokens,
    temporal_split, to_binary_matrix, write_matrix, write_vocabulary_tokens, Schema, TokenIndex,
};
use hltf_core::eval::{
    evaluate_lists, exclude_seen, run_experiment, ExperimentConfig, ExperimentData, Report,
    PAIR_BUDGET,
};
use hltf_core::hierarchy::{hlta_forest, ExportMeta, HierarchyExport};
use hltf_core::ltm::write_model;
use hltf_core::recommend::{
    read_lists, train_base, write_lists, BaseParams, RecommenderKind, WrmfConfig,
};
use hltf_core::synth::{matrix_to_log, multi_taste, PlantedConfig, PlantedHierarchy, TasteConfig};
use hltf_core::{BinaryMatrix, LearnerConfig, NodeId, RankedList};

use crate::args::{
    BaseArgs, EvaluateArgs, ExperimentArgs, LearnArgs, PrepareArgs, RecommendArgs, SynthArgs,
};
use crate::error::{read_err, write_err, CliError, CliResult};
use crate::settings::Settings;

/// File names inside a prepared data directory.
pub mod layout {
    pub const TRAIN: &str = "train.hbm";
    pub const VALID: &str = "valid.hbm";
    pub const TEST: &str = "test.hbm";
    pub const USERS: &str = "users.tsv";
    pub const ITEMS: &str = "items.tsv";
    pub const MANIFEST: &str = "manifest.txt";
    pub const MODEL: &str = "model.hltm";
    pub const EXPORT: &str = "hierarchy.json";
    pub const TIMINGS: &str = "timings.tsv";
    pub const BASE_LISTS: &str = "base.lists";
    pub const CAR_LISTS: &str = "car.lists";
    pub const EXPLANATIONS: &str = "car.explanations";
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(write_err(dir))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(write_err(path))
}

/// Buffers `body` and writes it in one go so a failed run leaves no half file.
fn write_with<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut Vec<u8>) -> hltf_core::Result<()>,
{
    let mut buf = Vec::new();
    body(&mut buf).map_err(|e| match e {
        hltf_core::Error::Io(io) => {
            CliError::Internal(format!("cannot write {}: {io}", path.display()))
        }
        other => other.into(),
    })?;
    write_bytes(path, &buf)
}

pub fn load_matrix(path: &Path) -> CliResult<BinaryMatrix> {
    let f = fs::File::open(path).map_err(read_err(path))?;
    read_matrix(f).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_vocab(path: &Path) -> CliResult<TokenIndex> {
    let f = fs::File::open(path).map_err(read_err(path))?;
    read_vocabulary_tokens(f).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_export(path: &Path) -> CliResult<HierarchyExport> {
    let text = fs::read_to_string(path).map_err(read_err(path))?;
    HierarchyExport::from_json(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn parse_delimiter(s: &str) -> CliResult<u8> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        _ if s.len() == 1 => Ok(s.as_bytes()[0]),
        _ => Err(CliError::Usage(format!(
            "delimiter must be one byte or `tab`, got {s:?}"
        ))),
    }
}

pub fn prepare(a: PrepareArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s = Settings::load(config, "prepare")?;
    let events: PathBuf = s.path("events", a.events)?;
    let out: PathBuf = s.path("out", a.out)?;
    let delimiter: String = s.get("delimiter", a.delimiter, ",".into())?;
    let schema = Schema {
        delimiter: parse_delimiter(&delimiter)?,
        user_column: s.get("user-column", a.user_column, 0)?,
        item_column: s.get("item-column", a.item_column, 1)?,
        time_column: s.get("time-column", a.time_column, 2)?,
        has_header: s.switch("header", a.header)?,
    };
    let min_user: usize = s.get("min-user-events", a.min_user_events, 0)?;
    let min_item: usize = s.get("min-item-events", a.min_item_events, 0)?;
    let split: Vec<f64> = s.list("split", a.split, &[0.7, 0.15, 0.15])?;
    s.finish()?;
    if split.len() != 3 {
        return Err(CliError::Usage(format!(
            "--split needs three fractions, got {}",
            split.len()
        )));
    }

    let source = open_source(&events)?;
    let (log, report) = ingest_events(source, &schema)?;
    let log = filter_min_activity(&log, min_user, min_item);
    let parts = temporal_split(&log, (split[0], split[1], split[2]))?;
    let (train, vocab) = to_binary_matrix(&parts.train)?;
    let (valid, dropped_valid) = vocab.map_log(&parts.valid);
    let (test, dropped_test) = vocab.map_log(&parts.test);

    create_dir(&out)?;
    for (name, m) in [
        (layout::TRAIN, &train),
        (layout::VALID, &valid),
        (layout::TEST, &test),
    ] {
        write_with(&out.join(name), |w| write_matrix(m, w))?;
    }
    write_with(&out.join(layout::USERS), |w| {
        write_vocabulary_tokens(&vocab.users, w)
    })?;
    write_with(&out.join(layout::ITEMS), |w| {
        write_vocabulary_tokens(&vocab.items, w)
    })?;

    let mut manifest = s.header("prepare");
    let stats = [
        ("rows", report.rows.to_string()),
        ("malformed_rows", report.malformed.to_string()),
        ("events_after_filter", log.len().to_string()),
        ("train_events", parts.train.len().to_string()),
        ("valid_events", parts.valid.len().to_string()),
        ("test_events", parts.test.len().to_string()),
        ("valid_dropped_unknown", dropped_valid.to_string()),
        ("test_dropped_unknown", dropped_test.to_string()),
        ("train_cut", parts.cuts.0.to_string()),
        ("valid_cut", parts.cuts.1.to_string()),
        ("users", train.n_users().to_string()),
        ("items", train.n_items().to_string()),
        ("train_nnz", train.nnz().to_string()),
        ("valid_nnz", valid.nnz().to_string()),
        ("test_nnz", test.nnz().to_string()),
        ("train_density", format!("{:.6e}", train.density())),
    ];
    for (k, v) in stats {
        manifest.push_str(&format!("{k} = {v}\n"));
    }
    write_bytes(&out.join(layout::MANIFEST), manifest.as_bytes())?;
    info!(
        "prepared {} users x {} items ({} train cells) in {}",
        train.n_users(),
        train.n_items(),
        train.nnz(),
        out.display()
    );
    Ok(())
}

pub fn learn(a: LearnArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s = Settings::load(config, "learn")?;
    let data: PathBuf = s.path("data", a.data)?;
    let out: PathBuf = s.path("out", a.out)?;
    let tau: usize = s.get("tau", a.tau, 20)?;
    let d = LearnerConfig::default();
    let cfg = LearnerConfig {
        delta: s.get("delta", a.delta, d.delta)?,
        max_size: s.get("max-size", a.max_size, d.max_size)?,
        em_steps: s.get("em-steps", a.em_steps, d.em_steps)?,
        seed: s.get("seed", a.seed, d.seed)?,
    };
    let reps: usize = s.get("reps", a.reps, 10)?;
    let dataset: String = s.get("dataset", a.dataset, String::new())?;
    s.finish()?;
    cfg.validate()?;
    if tau == 0 {
        return Err(CliError::Usage("--tau must be at least 1".into()));
    }

    let train = load_matrix(&data.join(layout::TRAIN))?;
    let items = load_vocab(&data.join(layout::ITEMS))?;
    if items.len() != train.n_items() {
        return Err(CliError::Data(format!(
            "{} lists {} items but the training matrix has {}",
            layout::ITEMS,
            items.len(),
            train.n_items()
        )));
    }
    let mut m = hlta_forest(&train, tau, &cfg)?;
    m.set_item_labels(items.tokens().to_vec())?;

    create_dir(&out)?;
    let header = s.header("learn");
    for level in 1..=m.depth() {
        write_with(&out.join(format!("layer-{level}.model")), |w| {
            write_model(&m.layer_model(level), w)
        })?;
        let mut manifest = header.clone();
        manifest.push_str("# category\tsize\tchildren\n");
        for j in 0..m.level_len(level) {
            let node = NodeId::latent(level, j);
            let children: Vec<String> = m
                .children(node)
                .into_iter()
                .map(|c| {
                    if c.is_item() {
                        items.token(c.index).to_string()
                    } else {
                        c.to_string()
                    }
                })
                .collect();
            manifest.push_str(&format!(
                "{node}\t{}\t{}\n",
                m.items_under(node).len(),
                children.join(",")
            ));
        }
        write_bytes(
            &out.join(format!("layer-{level}.manifest")),
            manifest.as_bytes(),
        )?;
    }
    write_with(&out.join(layout::MODEL), |w| {
        write_model(&m.stacked_model(), w)
    })?;
    let meta = ExportMeta {
        dataset,
        config: s.echo().iter().cloned().collect::<BTreeMap<_, _>>(),
        ..Default::default()
    };
    let export = m.export(reps, meta);
    write_bytes(&out.join(layout::EXPORT), export.to_json().as_bytes())?;
    write_bytes(&out.join(layout::TIMINGS), m.timings.table().as_bytes())?;

    let mut manifest = header;
    manifest.push_str(&format!("levels = {}\n", m.depth()));
    for level in 1..=m.depth() {
        manifest.push_str(&format!(
            "level_{level}_categories = {}\n",
            m.level_len(level)
        ));
    }
    manifest.push_str(&format!("top_edges = {}\n", export.top_edges.len()));
    write_bytes(&out.join(layout::MANIFEST), manifest.as_bytes())?;
    eprint!("{}", m.timings.table());
    info!(
        "learned {} levels ({:?} categories) into {}",
        m.depth(),
        (1..=m.depth()).map(|l| m.level_len(l)).collect::<Vec<_>>(),
        out.display()
    );
    Ok(())
}

fn base_params(s: &mut Settings, a: BaseArgs) -> CliResult<(RecommenderKind, BaseParams)> {
    let kind: String = s.get("recommender", a.recommender, "wrmf".into())?;
    let kind: RecommenderKind = kind.parse()?;
    let d = BaseParams::default();
    let params = BaseParams {
        neighbors: s.get("neighbors", a.neighbors, d.neighbors)?,
        wrmf: WrmfConfig {
            factors: s.get("factors", a.factors, d.wrmf.factors)?,
            reg: s.get("reg", a.reg, d.wrmf.reg)?,
            confidence: s.get("confidence", a.confidence, d.wrmf.confidence)?,
            iters: s.get("iters", a.iters, d.wrmf.iters)?,
            seed: s.get("seed", a.seed, d.wrmf.seed)?,
        },
    };
    params.wrmf.validate()?;
    Ok((kind, params))
}

/// Category index from a learned model directory, checked against the item
/// vocabulary of the data.
fn load_index(model: &Path, items: &TokenIndex) -> CliResult<CategoryIndex> {
    let export = load_export(&model.join(layout::EXPORT))?;
    if export.item_tokens()? != items.tokens() {
        return Err(CliError::Data(format!(
            "{} was learned on a different item vocabulary",
            model.join(layout::EXPORT).display()
        )));
    }
    Ok(CategoryIndex::from_export(&export)?)
}

fn lists_file(
    header: &str,
    lists: &[RankedList],
    users: &TokenIndex,
    items: &TokenIndex,
    path: &Path,
) -> CliResult<()> {
    write_with(path, |w| {
        w.extend_from_slice(header.as_bytes());
        write_lists(lists, users, items, w)
    })
}

pub fn recommend(a: RecommendArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s = Settings::load(config, "recommend")?;
    let data: PathBuf = s.path("data", a.data)?;
    let model: Option<PathBuf> = s.path_opt("model", a.model)?;
    let out: PathBuf = s.path("out", a.out)?;
    let (kind, params) = base_params(&mut s, a.base)?;
    let k: usize = s.get("k", a.k, 50)?;
    let pool: usize = s.get("pool", a.pool, 500)?;
    let car = s.switch("car", a.car)?;
    let level: Option<u32> = s.optional("level", a.level)?;
    let alpha: usize = s.get("alpha", a.alpha, 5)?;
    s.finish()?;
    if k == 0 {
        return Err(CliError::Usage("--k must be at least 1".into()));
    }
    if car && model.is_none() {
        return Err(CliError::Usage(
            "--car needs --model (a directory written by `learn`)".into(),
        ));
    }

    let train = load_matrix(&data.join(layout::TRAIN))?;
    let users = load_vocab(&data.join(layout::USERS))?;
    let items = load_vocab(&data.join(layout::ITEMS))?;
    let index = match (&model, car) {
        (Some(m), true) => Some(load_index(m, &items)?),
        _ => None,
    };
    let base = train_base(kind, &train, &params)?.recommend_all(pool.max(k));

    create_dir(&out)?;
    let header = s.header("recommend");
    let top: Vec<RankedList> = base.iter().map(|l| l.truncated(k)).collect();
    lists_file(&header, &top, &users, &items, &out.join(layout::BASE_LISTS))?;
    if let Some(index) = index {
        let level = level.unwrap_or(index.depth());
        let cfg = CarConfig { level, alpha, k };
        let lists = rerank_all(&base, &train, &index, &cfg)?;
        let mut header = header;
        header.push_str(&format!("# car_level = {level}\n"));
        lists_file(
            &header,
            &lists,
            &users,
            &items,
            &out.join(layout::CAR_LISTS),
        )?;
        write_with(&out.join(layout::EXPLANATIONS), |w| {
            w.extend_from_slice(header.as_bytes());
            write_explanations(&lists, &index, level, &users, &items, w)
        })?;
    }
    info!(
        "wrote lists for {} users into {}",
        base.len(),
        out.display()
    );
    Ok(())
}

fn truth_matrix(data: &Path, truth: &str) -> CliResult<BinaryMatrix> {
    let path = match truth {
        "test" => data.join(layout::TEST),
        "valid" | "validation" => data.join(layout::VALID),
        other => PathBuf::from(other),
    };
    load_matrix(&path)
}

pub fn evaluate(a: EvaluateArgs, config: Option<&Path>) -> CliResult<String> {
    let mut s = Settings::load(config, "evaluate")?;
    let data: PathBuf = s.path("data", a.data)?;
    let truth_name: String = s.get("truth", a.truth, "test".into())?;
    let cutoffs: Vec<usize> = s.list("cutoffs", a.cutoffs, &[10, 50])?;
    let pair_budget: usize = s.get("pair-budget", a.pair_budget, PAIR_BUDGET)?;
    let seed: u64 = s.get("seed", a.seed, 0)?;
    let out: Option<PathBuf> = s.path_opt("out", a.out)?;
    let lists = if a.lists.is_empty() {
        s.list::<String>("lists", None, &[])?
            .into_iter()
            .map(PathBuf::from)
            .collect()
    } else {
        let shown = a
            .lists
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(",");
        s.get("lists", Some(shown), String::new())?;
        a.lists
    };
    s.finish()?;
    if lists.is_empty() {
        return Err(CliError::Usage(
            "at least one --lists file is needed".into(),
        ));
    }
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(CliError::Usage("cutoffs must be positive".into()));
    }

    let users = load_vocab(&data.join(layout::USERS))?;
    let items = load_vocab(&data.join(layout::ITEMS))?;
    let mut truth = truth_matrix(&data, &truth_name)?;
    let train_path = data.join(layout::TRAIN);
    if train_path.exists() {
        truth = exclude_seen(&truth, &load_matrix(&train_path)?);
    }
    if truth.n_users() != users.len() || truth.n_items() != items.len() {
        return Err(CliError::Data(
            "truth matrix does not match the data vocabularies".into(),
        ));
    }

    let mut report = Report::new(format!("evaluation against {truth_name}")).with_config(s.echo());
    for path in &lists {
        let f = fs::File::open(path).map_err(read_err(path))?;
        let recs = read_lists(f, &users, &items)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        for &n in &cutoffs {
            let cut: Vec<RankedList> = recs.iter().map(|l| l.truncated(n)).collect();
            report
                .rows
                .push(evaluate_lists(&name, &cut, &truth, n, pair_budget, seed)?);
        }
    }
    if let Some(out) = out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        write_bytes(&out, report.to_tsv().as_bytes())?;
    }
    Ok(report.to_text())
}

pub fn experiment(a: ExperimentArgs, config: Option<&Path>) -> CliResult<String> {
    let mut s = Settings::load(config, "experiment")?;
    let data: PathBuf = s.path("data", a.data)?;
    let model: PathBuf = s.path("model", a.model)?;
    let out: PathBuf = s.path("out", a.out)?;
    let (recommender, params) = base_params(&mut s, a.base)?;
    let d = ExperimentConfig::default();
    let seed = params.wrmf.seed;
    let cfg = ExperimentConfig {
        recommender,
        params,
        cutoffs: s.list("cutoffs", a.cutoffs, &d.cutoffs)?,
        levels: s.list("levels", a.levels, &d.levels)?,
        alphas: s.list("alphas", a.alphas, &d.alphas)?,
        pool: s.get("pool", a.pool, d.pool)?,
        max_recall_drop: s.get("max-recall-drop", a.max_recall_drop, d.max_recall_drop)?,
        pair_budget: s.get("pair-budget", a.pair_budget, d.pair_budget)?,
        include_cold: s.switch("include-cold", a.include_cold)?,
        seed,
    };
    s.finish()?;

    let items = load_vocab(&data.join(layout::ITEMS))?;
    let index = load_index(&model, &items)?;
    let sets = ExperimentData {
        train: load_matrix(&data.join(layout::TRAIN))?,
        valid: load_matrix(&data.join(layout::VALID))?,
        test: load_matrix(&data.join(layout::TEST))?,
    };
    let outcome = run_experiment(&sets, &index, &cfg)?;
    create_dir(&out)?;
    let with_paths = |r: &Report| {
        let mut r = r.clone();
        r.config
            .insert(0, ("model".into(), model.display().to_string()));
        r.config
            .insert(0, ("data".into(), data.display().to_string()));
        r
    };
    let table = with_paths(&outcome.table);
    write_bytes(&out.join("table.tsv"), table.to_tsv().as_bytes())?;
    write_bytes(
        &out.join("sweep.tsv"),
        with_paths(&outcome.sweep).to_tsv().as_bytes(),
    )?;
    write_bytes(
        &out.join("validation.tsv"),
        with_paths(&outcome.validation).to_tsv().as_bytes(),
    )?;
    let text = table.to_text();
    write_bytes(&out.join("table.txt"), text.as_bytes())?;
    Ok(text)
}

pub fn synth(a: SynthArgs, config: Option<&Path>) -> CliResult<()> {
    let mut s = Settings::load(config, "synth")?;
    let kind: String = s.get("kind", a.kind, "taste".into())?;
    let seed: u64 = s.get("seed", a.seed, 0)?;
    let out: PathBuf = s.path("out", a.out)?;
    let log = match kind.as_str() {
        "taste" => {
            let d = TasteConfig::default();
            let users = s.get("users", a.users, d.users)?;
            multi_taste(&TasteConfig { users, ..d }, seed).log
        }
        "two-level" | "three-level" | "three-level-wide" => {
            let cfg = match kind.as_str() {
                "two-level" => PlantedConfig::two_level(),
                "three-level" => PlantedConfig::three_level(),
                _ => PlantedConfig::three_level_wide(),
            };
            let users = s.get("users", a.users, 2000)?;
            let h = PlantedHierarchy::new(&cfg);
            matrix_to_log(&h.sample(users, seed), seed)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown synth kind {other:?} (expected taste, two-level, three-level or three-level-wide)"
            )))
        }
    };
    s.finish()?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = fs::File::create(&out).map_err(write_err(&out))?;
    let mut w = BufWriter::new(file);
    let body = (|| -> std::io::Result<()> {
        w.write_all(s.header("synth").as_bytes())?;
        for e in &log.events {
            writeln!(w, "{},{},{}", e.user, e.item, e.timestamp)?;
        }
        w.flush()
    })();
    body.map_err(write_err(&out))?;
    info!("wrote {} events to {}", log.len(), out.display());
    Ok(())
}
