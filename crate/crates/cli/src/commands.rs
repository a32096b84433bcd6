use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use densratio::bootstrap::{bootstrap, sample_size_sweep, write_sweep_csv};
use densratio::curation::{compose_filters, ComposeMode, Filter, TieRule};
use densratio::embedding::{self, EmbeddingFormat, EmbeddingMatrix, Modality, PairedCorpus};
use densratio::kl::{self, MomentSummary, References};
use densratio::ngram::{decile_coverage, decile_groups, read_captions_jsonl, write_coverage_csv, GroupBy};
use densratio::ratio::{self, Calibration, Flavor, ScoreModel};
use densratio::toy::{self, DualEncoder, IwlConfig, MixtureWorld, TrainConfig};
use densratio::{Error, MetricKind, MetricVector, Result};

use crate::args::*;
use crate::provenance::Provenance;

const SEED_ENV: &str = "DENSRATIO_SEED";

fn resolve_seed(prov: &mut Provenance, flag: Option<u64>) -> Result<u64> {
    let (value, source) = match flag {
        Some(s) => (s, "flag"),
        None => match std::env::var(SEED_ENV) {
            Ok(v) => (
                v.trim()
                    .parse()
                    .map_err(|_| Error::contract(format!("{SEED_ENV}={v:?} is not a u64")))?,
                "env",
            ),
            Err(_) => (0, "default"),
        },
    };
    prov.seed = Some(crate::provenance::SeedRecord { value, source });
    Ok(value)
}

fn create(prov: &mut Provenance, path: &Path) -> Result<BufWriter<File>> {
    if prov.inputs.iter().any(|i| Path::new(&i.path) == path) || same_file_as_input(prov, path) {
        return Err(Error::contract(format!("output {} would overwrite an input", path.display())));
    }
    prov.output(path);
    Ok(BufWriter::new(File::create(path)?))
}

fn same_file_as_input(prov: &Provenance, path: &Path) -> bool {
    let Ok(out) = path.canonicalize() else { return false };
    prov.inputs
        .iter()
        .any(|i| Path::new(&i.path).canonicalize().is_ok_and(|p| p == out))
}

fn read_embeddings(prov: &mut Provenance, path: &Path, modality: Modality) -> Result<EmbeddingMatrix> {
    prov.input(path)?;
    Ok(embedding::load_auto(path)?.with_modality(modality))
}

fn read_unit(prov: &mut Provenance, path: &Path, modality: Modality) -> Result<EmbeddingMatrix> {
    read_embeddings(prov, path, modality)?.normalize()
}

fn read_metric(prov: &mut Provenance, path: &Path) -> Result<MetricVector> {
    prov.input(path)?;
    MetricVector::read_csv(BufReader::new(File::open(path)?), MetricKind::External)
}

fn read_json<T: serde::de::DeserializeOwned>(prov: &mut Provenance, path: &Path) -> Result<T> {
    prov.input(path)?;
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn write_json<T: serde::Serialize>(prov: &mut Provenance, path: &Path, value: &T) -> Result<()> {
    let mut w = create(prov, path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn score_model(prov: &mut Provenance, m: &ModelArgs) -> Result<ScoreModel> {
    let flavor: Flavor = m.flavor.parse()?;
    let model = ScoreModel::new(m.scale, m.bias, flavor, m.nu)?;
    prov.param("model", model);
    Ok(model)
}

fn paired_refs(prov: &mut Provenance, r: &RefPairArgs) -> Result<PairedCorpus> {
    let texts = read_unit(prov, &r.ref_texts, Modality::Text)?;
    let images = read_unit(prov, &r.ref_images, Modality::Image)?;
    PairedCorpus::new(images, texts)
}

pub fn ingest(a: &IngestArgs, prov: &mut Provenance) -> Result<()> {
    prov.input(&a.input)?;
    let format = match &a.format {
        Some(f) => f.parse()?,
        None => EmbeddingFormat::from_path(&a.input)
            .ok_or_else(|| Error::contract("cannot infer input format; pass --format"))?,
    };
    let mut m = embedding::load(&a.input, format)?;
    if let Some(md) = &a.modality {
        m = m.with_modality(md.parse()?);
    }
    if let Some(path) = &a.norms_out {
        let mut w = create(prov, path)?;
        m.raw_norms().write_csv(&mut w)?;
        w.flush()?;
    }
    if a.normalize {
        m = m.normalize()?;
    }
    prov.param("n", m.n());
    prov.param("dim", m.dim());
    prov.param("normalized", a.normalize);
    let out_format = EmbeddingFormat::from_path(&a.out).unwrap_or(EmbeddingFormat::Emb1);
    // route through create() for the overwrite guard
    drop(create(prov, &a.out)?);
    m.save(&a.out, out_format)
}

pub fn score(a: &ScoreArgs, prov: &mut Provenance) -> Result<()> {
    let model = score_model(prov, &a.model)?;
    let calibration: Calibration = match &a.calibration {
        Some(c) => c.parse()?,
        None => model.flavor.default_calibration(),
    };
    prov.param("calibration", calibration);
    let texts = read_unit(prov, &a.texts, Modality::Text)?;
    let images = read_unit(prov, &a.images, Modality::Image)?;
    let ratios = ratio::ratio_matrix(&texts, &images, &model, calibration)?;
    let mut w = create(prov, &a.out)?;
    ratio::write_ratio_csv(&mut w, &texts, &images, &ratios, &model, calibration)?;
    w.flush()?;
    Ok(())
}

pub fn kl(a: &KlArgs, prov: &mut Provenance) -> Result<()> {
    let kind: MetricKind = a.metric.parse()?;
    let qm: Modality = a.query_modality.parse()?;
    prov.param("metric", kind);
    prov.param("query_modality", qm);
    let metric = match kind {
        MetricKind::RawNorm => read_embeddings(prov, &a.queries, qm)?.raw_norms(),
        MetricKind::Conformity => kl::conformity(&read_unit(prov, &a.queries, qm)?)?,
        MetricKind::DKl | MetricKind::DKlr | MetricKind::DC | MetricKind::DW => {
            let model = score_model(prov, &a.model)?;
            let queries = read_unit(prov, &a.queries, qm)?;
            let other_path = a
                .refs
                .as_ref()
                .ok_or_else(|| Error::contract(format!("{kind} needs --refs")))?;
            let other = read_unit(prov, other_path, qm.other())?;
            let same = match (&a.refs_same, kind) {
                (Some(p), _) => read_unit(prov, p, qm)?,
                (None, MetricKind::DC | MetricKind::DW) => {
                    return Err(Error::contract(format!("{kind} needs --refs-same")))
                }
                // the log-sum-exp estimators only touch the other modality
                (None, _) => queries.clone(),
            };
            kl::compute_metric(kind, &queries, References { other: &other, same: &same }, &model)?
        }
        other => return Err(Error::contract(format!("kl cannot compute {other}"))),
    };
    let mut w = create(prov, &a.out)?;
    metric.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn moments(a: &MomentsArgs, prov: &mut Provenance) -> Result<()> {
    let texts = read_unit(prov, &a.texts, Modality::Text)?;
    let images = read_unit(prov, &a.images, Modality::Image)?;
    let summary = MomentSummary::new(&texts, &images)?;
    write_json(prov, &a.out, &summary)
}

pub fn bootstrap_cmd(a: &BootstrapArgs, prov: &mut Provenance) -> Result<()> {
    let kind: MetricKind = a.metric.parse()?;
    let qm: Modality = a.query_modality.parse()?;
    let seed = resolve_seed(prov, a.seed)?;
    let model = score_model(prov, &a.model)?;
    prov.param("metric", kind);
    prov.param("resamples", a.resamples);
    let queries = read_unit(prov, &a.queries, qm)?;
    let refs = paired_refs(prov, &a.refs)?;
    let report = bootstrap(&queries, &refs, kind, &model, a.resamples, seed)?;
    for warning in &report.warnings {
        log::warn!("{warning}");
    }
    let mut w = create(prov, &a.out)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn sweep(a: &SweepArgs, prov: &mut Provenance) -> Result<()> {
    let kind: MetricKind = a.metric.parse()?;
    let qm: Modality = a.query_modality.parse()?;
    let seed = resolve_seed(prov, a.seed)?;
    let model = score_model(prov, &a.model)?;
    prov.param("metric", kind);
    prov.param("sizes", &a.sizes);
    prov.param("repeats", a.repeats);
    prov.param("resamples", a.resamples);
    let queries = read_unit(prov, &a.queries, qm)?;
    let refs = paired_refs(prov, &a.refs)?;
    let rows = sample_size_sweep(&queries, &refs, kind, &model, &a.sizes, a.repeats, a.resamples, seed)?;
    let mut w = create(prov, &a.out)?;
    write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    Ok(())
}

fn read_pool_ids(prov: &mut Provenance, path: &Path) -> Result<Vec<String>> {
    prov.input(path)?;
    let mut ids = Vec::new();
    for (lineno, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let id = v
            .get("id")
            .and_then(|id| id.as_str())
            .ok_or_else(|| Error::data(format!("{}:{}: missing string \"id\"", path.display(), lineno + 1)))?;
        ids.push(id.to_string());
    }
    Ok(ids)
}

/// `0.25` keeps a top fraction; `>=0.3` keeps values at or above a threshold.
fn parse_filter(rule: &str, metric: MetricVector, tie_rule: TieRule) -> Result<Filter> {
    let bad = || Error::contract(format!("cannot parse --keep {rule:?}"));
    if let Some(t) = rule.strip_prefix(">=") {
        let min_value = t.trim().parse().map_err(|_| bad())?;
        Ok(Filter::Threshold { metric, min_value, tie_rule })
    } else {
        let keep_fraction = rule.trim().parse().map_err(|_| bad())?;
        Ok(Filter::TopFraction { metric, keep_fraction, tie_rule })
    }
}

pub fn curate(a: &CurateArgs, prov: &mut Provenance) -> Result<()> {
    if a.metric.len() != a.keep.len() {
        return Err(Error::contract("give exactly one --keep per --metric"));
    }
    let mode: ComposeMode = a.mode.parse()?;
    let tie_rule: TieRule = a.tie_rule.parse()?;
    prov.param("keep", &a.keep);
    prov.param("mode", &a.mode);
    prov.param("tie_rule", tie_rule);
    let ids = read_pool_ids(prov, &a.pairs)?;
    let filters = a
        .metric
        .iter()
        .zip(&a.keep)
        .map(|(path, rule)| parse_filter(rule, read_metric(prov, path)?, tie_rule))
        .collect::<Result<Vec<_>>>()?;
    let manifest = compose_filters(&ids, &filters, mode)?;
    for warning in &manifest.warnings {
        log::warn!("{warning}");
    }
    prov.param("pool_size", ids.len());
    prov.param("kept", manifest.len());
    let mut w = create(prov, &a.out)?;
    manifest.write_jsonl(&mut w)?;
    w.flush()?;
    if let Some(path) = &a.ids_out {
        let mut w = create(prov, path)?;
        manifest.write_ids(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn ngram(a: &NgramArgs, prov: &mut Provenance) -> Result<()> {
    let group_by: GroupBy = a.group_by.parse()?;
    prov.param("group_by", group_by);
    prov.param("orders", &a.orders);
    prov.param("k_max", a.k_max);
    prov.input(&a.captions)?;
    let captions = read_captions_jsonl(BufReader::new(File::open(&a.captions)?))?;
    let metric = read_metric(prov, &a.metric)?;
    let groups = decile_groups(&metric, &captions, group_by)?;
    let points = decile_coverage(&groups, &a.orders, a.k_max)?;
    let mut w = create(prov, &a.out)?;
    write_coverage_csv(&mut w, &points)?;
    w.flush()?;
    Ok(())
}

pub fn toy_gen(a: &ToyGenArgs, prov: &mut Provenance) -> Result<()> {
    let seed = resolve_seed(prov, a.seed)?;
    let layout = a.layout.clone().unwrap_or_else(|| if a.d == 2 { "ring" } else { "random" }.into());
    let mut world = match layout.as_str() {
        "ring" => {
            let mut w = MixtureWorld::ring(a.k, a.d, a.radius, a.var)?;
            w.seed = seed;
            w
        }
        "random" => MixtureWorld::random(a.k, a.d, a.radius, a.var, seed)?,
        other => return Err(Error::contract(format!("unknown layout {other:?}"))),
    };
    if let Some(p) = &a.priors {
        world.priors = p.clone();
        world.validate()?;
    }
    prov.param("layout", &layout);
    write_json(prov, &a.out, &world)?;
    if let (Some(n), Some(path)) = (a.samples, &a.samples_out) {
        let (labels, images) = world.sample_pairs(n, seed)?;
        let mut w = create(prov, path)?;
        let cols: Vec<String> = (0..world.d).map(|c| format!("x{c}")).collect();
        writeln!(w, "label,{}", cols.join(","))?;
        for (l, row) in labels.iter().zip(images.outer_iter()) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{l},{}", vals.join(","))?;
        }
        w.flush()?;
    } else if a.samples.is_some() != a.samples_out.is_some() {
        return Err(Error::contract("--samples and --samples-out go together"));
    }
    Ok(())
}

fn recipe(prov: &mut Provenance, r: &RecipeArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match &r.train_config {
        Some(path) => read_json(prov, path)?,
        None => TrainConfig::default(),
    };
    if let Some(o) = &r.objective {
        cfg.flavor = o.parse()?;
    }
    if let Some(s) = r.steps {
        cfg.steps = s;
    }
    if let Some(b) = r.batch {
        cfg.batch = b;
    }
    if let Some(lr) = r.lr {
        cfg.lr = lr;
    }
    cfg.seed = resolve_seed(prov, r.seed)?;
    cfg.validate()?;
    prov.param("train", &cfg);
    Ok(cfg)
}

fn read_world(prov: &mut Provenance, path: &Path) -> Result<MixtureWorld> {
    let world: MixtureWorld = read_json(prov, path)?;
    world.validate()?;
    Ok(world)
}

pub fn toy_train(a: &ToyTrainArgs, prov: &mut Provenance) -> Result<()> {
    let world = read_world(prov, &a.config)?;
    let cfg = recipe(prov, &a.recipe)?;
    let out = toy::train(&world, &cfg, None)?;
    let mut w = create(prov, &a.out)?;
    out.model.write_to(&mut w)?;
    w.flush()?;
    if let Some(path) = &a.losses {
        let mut w = create(prov, path)?;
        writeln!(w, "step,loss")?;
        for (s, l) in out.losses.iter().enumerate() {
            writeln!(w, "{s},{l}")?;
        }
        w.flush()?;
    }
    prov.param("final_loss", out.losses.last());
    Ok(())
}

pub fn toy_eval(a: &ToyEvalArgs, prov: &mut Provenance) -> Result<()> {
    let world = read_world(prov, &a.config)?;
    prov.input(&a.params)?;
    let model = DualEncoder::load(&a.params)?;
    let seed = resolve_seed(prov, a.seed)?;
    let calibration: Calibration = match &a.calibration {
        Some(c) => c.parse()?,
        None => model.flavor.default_calibration(),
    };
    prov.param("n_test", a.n_test);
    let report = toy::evaluate_with(&model, &world, a.n_test, seed, calibration)?;
    write_json(prov, &a.out, &report)?;
    match (a.grid_label, &a.grid_out) {
        (Some(label), Some(path)) => {
            let grid = toy::ratio_grid(&world, Some(&model), label, a.grid_extent, a.grid_resolution)?;
            let mut w = create(prov, path)?;
            toy::write_grid_csv(&mut w, &grid)?;
            w.flush()?;
        }
        (None, None) => {}
        _ => return Err(Error::contract("--grid-label and --grid-out go together")),
    }
    Ok(())
}

pub fn iwl_weights(a: &IwlWeightsArgs, prov: &mut Provenance) -> Result<()> {
    let images = read_unit(prov, &a.images, Modality::Image)?;
    let prompts = read_unit(prov, &a.prompt, Modality::Text)?;
    let row = match &a.prompt_id {
        Some(id) => prompts
            .position(id)
            .ok_or_else(|| Error::contract(format!("prompt id {id:?} not found")))?,
        None => 0,
    };
    prov.param("prompt_id", &prompts.ids()[row]);
    prov.param("scale", a.scale);
    let weights = ratio::iwl_weights(&images, prompts.row(row), a.scale)?
        .with_param("prompt_id", &prompts.ids()[row]);
    let mut w = create(prov, &a.out)?;
    weights.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn iwl_demo(a: &IwlDemoArgs, prov: &mut Provenance) -> Result<()> {
    let world = read_world(prov, &a.config)?;
    let train = recipe(prov, &a.recipe)?;
    let mut cfg = IwlConfig {
        prompt_label: a.prompt_label,
        weight_scale: a.weight_scale,
        n_test: a.n_test,
        ..IwlConfig::default()
    };
    cfg.reference.flavor = train.flavor;
    if let Some(s) = a.reference_steps {
        cfg.reference.steps = s;
    }
    // a recipe file or --steps sets the budget; otherwise the demo's shorter default
    let steps = if a.recipe.steps.is_some() || a.recipe.train_config.is_some() {
        train.steps
    } else {
        cfg.train.steps
    };
    cfg.train = TrainConfig { steps, ..train };
    prov.param("iwl", &cfg);
    let report = toy::iwl_demo(&world, &cfg)?;
    write_json(prov, &a.out, &report)
}

pub fn correlate(a: &CorrelateArgs, prov: &mut Provenance) -> Result<()> {
    let metrics = a
        .metrics
        .iter()
        .map(|p| read_metric(prov, p))
        .collect::<Result<Vec<_>>>()?;
    let order = metrics[0].ids.clone();
    let aligned = metrics
        .iter()
        .map(|m| {
            let lookup = m.by_id();
            let values = order
                .iter()
                .map(|id| {
                    lookup.get(id.as_str()).copied().ok_or_else(|| {
                        Error::contract(format!("metric {} has no value for {id:?}", m.kind))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            MetricVector::new(order.clone(), values, m.kind, m.modality)
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = kl::metric_correlations(&aligned)?;
    write_json(prov, &a.out, &matrix)
}

pub fn primary_output(cmd: &Command) -> PathBuf {
    match cmd {
        Command::Ingest(a) => &a.out,
        Command::Score(a) => &a.out,
        Command::Kl(a) => &a.out,
        Command::Moments(a) => &a.out,
        Command::Bootstrap(a) => &a.out,
        Command::Sweep(a) => &a.out,
        Command::Curate(a) => &a.out,
        Command::Ngram(a) => &a.out,
        Command::ToyGen(a) => &a.out,
        Command::ToyTrain(a) => &a.out,
        Command::ToyEval(a) => &a.out,
        Command::IwlWeights(a) => &a.out,
        Command::IwlDemo(a) => &a.out,
        Command::Correlate(a) => &a.out,
        }
        .clone()
}
