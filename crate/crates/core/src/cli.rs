//! The `bidb` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::media_io::{self, load_media, read_annotations, write_world};
use crate::metrics::{self, cmc, rank_table, rank_tables_csv, roc, RankTable, ThresholdSweep, ALL_CONDITIONS};
use crate::nn::{train_attribute_head, train_identity_head, Head, IdentityHead, TrainConfig};
use crate::pipeline::{attribute_dataset, identity_dataset, probe_conditions, split_by_condition};
use crate::provenance::{manifest_path_for, RunManifest};
use crate::report::{cmc_svg, roc_svg, Panel};
use crate::scoring::{format_score, fuse, score_all_with, ScoreMatrix};
use crate::synth::generate_world;
use crate::templates::{
    build_gallery_with, canonical_order, embed_all, FrameSampler, TRAIN_FRAMES_PER_VIDEO,
};
use crate::verify::{all_passed, verify_matrix};

#[derive(Debug, Parser)]
#[command(name = "bidb", version, about = "Body identification benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world on disk.
    Synth(SynthArgs),
    /// Train an attribute or identity head.
    Train(TrainArgs),
    /// Embed media into templates.
    Embed(EmbedArgs),
    /// Score probe media against a gallery.
    Score(ScoreArgs),
    /// Average two score matrices.
    Fuse(FuseArgs),
    /// Rank table, CMC and ROC curves, and plots.
    Report(ReportArgs),
    /// Check a score matrix against the metric invariants.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed; overrides the config file.
    #[arg(long, env = "BIDB_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeadKind {
    Attribute,
    Identity,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub kind: HeadKind,
    /// Training media manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Annotation CSV; defaults to `annotations.csv` beside the manifest.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Attribute head whose first encoder layer seeds the identity head.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Output `BIDH` file; the loss curve goes to `<out>.loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Threads {
    /// Worker threads for embedding and scoring; output does not depend on it.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: u16,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Identity head (`BIDH`).
    #[arg(long)]
    pub head: PathBuf,
    /// Output CSV: `owner_id,source_count,e_0,...`.
    #[arg(long)]
    pub out: PathBuf,
    /// Average media templates into one template per identity.
    #[arg(long)]
    pub by_identity: bool,
    #[command(flatten)]
    pub threads: Threads,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long)]
    pub probes: PathBuf,
    #[arg(long)]
    pub head: PathBuf,
    /// Output CSV; a `BIDS` copy is written beside it with extension `.bids`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub threads: Threads,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `NAME=PATH` of a score matrix; repeat per model.
    #[arg(long = "matrix", required = true, value_parser = parse_named)]
    pub matrices: Vec<(String, PathBuf)>,
    /// Probe manifest supplying each probe's condition.
    #[arg(long)]
    pub probes: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub matrix: PathBuf,
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=PATH, got `{s}`"))?;
    if name.is_empty() || path.is_empty() {
        return Err(format!("expected NAME=PATH, got `{s}`"));
    }
    Ok((name.to_owned(), PathBuf::from(path)))
}

/// Parses arguments and runs; usage errors exit through clap with code 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let recorded: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match run(cli.command, recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, args: Vec<String>) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a, args),
        Command::Train(a) => train(a, args),
        Command::Embed(a) => embed(a, args),
        Command::Score(a) => score(a, args),
        Command::Fuse(a) => fuse_cmd(a, args),
        Command::Report(a) => report(a, args),
        Command::Verify(a) => verify(a),
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn record_config(m: &mut RunManifest, common: &Common) -> Result<()> {
    if let Some(p) = &common.config {
        m.config = Some(p.to_string_lossy().into_owned());
        m.input_file(p)?;
    }
    Ok(())
}

fn pool(threads: &Threads) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.threads as usize)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn synth(a: SynthArgs, args: Vec<String>) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    if let Some(seed) = a.common.seed {
        cfg.world.seed = seed;
    }
    cfg.world.validate()?;
    if a.out.exists() {
        let non_empty = std::fs::read_dir(&a.out)
            .map_err(|e| Error::io(&a.out, e))?
            .next()
            .is_some();
        if non_empty && !a.force {
            return Err(Error::Ingestion(format!(
                "output directory {} is not empty (use --force)",
                a.out.display()
            )));
        }
    }
    create_dir(&a.out)?;
    let world = generate_world(&cfg.world)?;
    write_world(&world, &a.out)?;
    let frozen = a.out.join("config.toml");
    write(&frozen, cfg.to_toml())?;

    let mut m = RunManifest::new("synth", args);
    record_config(&mut m, &a.common)?;
    m.seed = Some(cfg.world.seed);
    for f in [
        media_io::WORLD_MANIFEST,
        media_io::TRAIN_MANIFEST,
        media_io::GALLERY_MANIFEST,
        media_io::PROBE_MANIFEST,
        media_io::ANNOTATIONS,
        media_io::FEATURE_DIR,
        "config.toml",
    ] {
        m.output(&a.out.join(f));
    }
    m.write(&a.out.join("run.json"))?;
    eprintln!(
        "wrote {} train, {} gallery, {} probe media to {}",
        world.train.len(),
        world.gallery.len(),
        world.probes.len(),
        a.out.display()
    );
    Ok(())
}

fn train_config(a: &TrainArgs, cfg: &RunConfig) -> TrainConfig {
    let mut t = match a.kind {
        HeadKind::Attribute => cfg.attribute_train().clone(),
        HeadKind::Identity => cfg.train.clone(),
    };
    if let Some(seed) = a.common.seed {
        t.seed = seed;
    }
    if let Some(e) = a.epochs {
        t.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        t.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        t.batch_size = b;
    }
    t
}

fn train(a: TrainArgs, args: Vec<String>) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let tcfg = train_config(&a, &cfg);
    tcfg.validate()?;
    if tcfg.epochs == 0 {
        eprintln!("warning: 0 epochs; writing the initialized head untrained");
    }
    let media = load_media(&a.manifest)?;
    let sampler = FrameSampler::Partitioned {
        per_video: TRAIN_FRAMES_PER_VIDEO,
        seed: tcfg.seed,
    };
    let mut m = RunManifest::new("train", args);
    record_config(&mut m, &a.common)?;
    m.seed = Some(tcfg.seed);
    m.input_manifest(&a.manifest)?;

    let (head, report) = match a.kind {
        HeadKind::Attribute => {
            if a.init.is_some() {
                return Err(Error::config("init", "only identity heads take --init"));
            }
            let ann_path = a.annotations.clone().unwrap_or_else(|| {
                a.manifest
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join(media_io::ANNOTATIONS)
            });
            m.input_file(&ann_path)?;
            let annotations = read_annotations(&ann_path)?;
            let data = attribute_dataset(&media, &annotations, sampler)?;
            let (h, r) = train_attribute_head(&data, &tcfg)?;
            (Head::Attribute(h), r)
        }
        HeadKind::Identity => {
            let init = match &a.init {
                Some(p) => {
                    m.input_file(p)?;
                    Some(Head::load(p)?.into_attribute()?)
                }
                None => None,
            };
            let (data, classes) = identity_dataset(&media, sampler)?;
            eprintln!("{} identity classes, {} samples", classes.len(), data.len());
            let (h, r) = train_identity_head(&data, &tcfg, init.as_ref())?;
            (Head::Identity(h), r)
        }
    };
    if let Some(last) = report.epochs.last() {
        eprintln!(
            "epoch {}: train loss {:.6}, validation loss {:.6}{}",
            last.epoch,
            last.train_loss,
            last.validation_loss,
            last.validation_accuracy
                .map(|acc| format!(", validation accuracy {acc:.4}"))
                .unwrap_or_default()
        );
    }
    head.save(&a.out)?;
    let loss = loss_path(&a.out);
    write(&loss, report.to_csv())?;
    m.output(&a.out);
    m.output(&loss);
    m.write(&manifest_path_for(&a.out))
}

fn loss_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".loss.csv");
    out.with_file_name(name)
}

fn load_identity_head(path: &Path) -> Result<IdentityHead> {
    Head::load(path)?.into_identity()
}

fn embed(a: EmbedArgs, args: Vec<String>) -> Result<()> {
    let head = load_identity_head(&a.head)?;
    let media = load_media(&a.manifest)?;
    let pool = pool(&a.threads)?;
    let templates = if a.by_identity {
        build_gallery_with(&media, &head, FrameSampler::EverySixth, Some(&pool))?
            .templates()
            .cloned()
            .collect()
    } else {
        embed_all(&media, &head, FrameSampler::EverySixth, Some(&pool))?
    };
    let mut out = String::from("owner_id,source_count");
    for i in 0..head.embedding_dim() {
        out.push_str(&format!(",e_{i}"));
    }
    out.push('\n');
    for t in &templates {
        out.push_str(&format!("{},{}", t.owner_id, t.source_count));
        for v in &t.vector {
            out.push(',');
            out.push_str(&format_score(*v));
        }
        out.push('\n');
    }
    write(&a.out, out)?;
    let mut m = RunManifest::new("embed", args);
    m.input_manifest(&a.manifest)?;
    m.input_file(&a.head)?;
    m.output(&a.out);
    m.write(&manifest_path_for(&a.out))
}

fn score(a: ScoreArgs, args: Vec<String>) -> Result<()> {
    let head = load_identity_head(&a.head)?;
    let gallery_media = load_media(&a.gallery)?;
    let probe_media = load_media(&a.probes)?;
    let pool = pool(&a.threads)?;
    let gallery = build_gallery_with(&gallery_media, &head, FrameSampler::EverySixth, Some(&pool))?;
    let probes = embed_all(&probe_media, &head, FrameSampler::EverySixth, Some(&pool))?;
    let truth: BTreeMap<String, String> = canonical_order(&probe_media)?
        .iter()
        .map(|m| (m.media_id.clone(), m.identity_id.clone()))
        .collect();
    let matrix = score_all_with(&probes, &gallery, Some(&pool))?.with_ground_truth(&truth)?;
    let bids = a.out.with_extension("bids");
    matrix.save_csv(&a.out)?;
    matrix.save_bids(&bids)?;
    eprintln!(
        "{} probes x {} gallery identities, {} mated",
        matrix.probes(),
        matrix.gallery_len(),
        matrix.mated_count()
    );
    let mut m = RunManifest::new("score", args);
    m.input_manifest(&a.gallery)?;
    m.input_manifest(&a.probes)?;
    m.input_file(&a.head)?;
    m.output(&a.out);
    m.output(&bids);
    m.write(&manifest_path_for(&a.out))
}

fn fuse_cmd(a: FuseArgs, args: Vec<String>) -> Result<()> {
    let first = ScoreMatrix::load(&a.first)?;
    let second = ScoreMatrix::load(&a.second)?;
    let fused = fuse(&first, &second)?;
    let bids = a.out.with_extension("bids");
    fused.save_csv(&a.out)?;
    fused.save_bids(&bids)?;
    let mut m = RunManifest::new("fuse", args);
    m.input_file(&a.first)?;
    m.input_file(&a.second)?;
    m.output(&a.out);
    m.output(&bids);
    m.write(&manifest_path_for(&a.out))
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Rank tables and curves for named matrices split by probe condition.
pub struct ModelReport {
    pub name: String,
    pub table: RankTable,
    /// Condition (pooled first) to sub-matrix.
    pub matrices: Vec<(String, ScoreMatrix)>,
}

pub fn model_report(
    name: &str,
    matrix: &ScoreMatrix,
    conditions: &BTreeMap<String, String>,
) -> Result<ModelReport> {
    let parts = split_by_condition(matrix, conditions)?;
    let table = rank_table(&parts)?;
    let mut ordered: Vec<(String, ScoreMatrix)> = vec![(ALL_CONDITIONS.to_owned(), matrix.clone())];
    let mut keys: Vec<&String> = parts.keys().collect();
    keys.sort_by_key(|c| metrics::condition_order(c));
    for k in keys {
        ordered.push((k.clone(), parts[k].clone()));
    }
    Ok(ModelReport {
        name: name.to_owned(),
        table,
        matrices: ordered,
    })
}

fn report(a: ReportArgs, args: Vec<String>) -> Result<()> {
    let probe_records = media_io::read_manifest(&a.probes)?;
    let conditions: BTreeMap<String, String> = probe_records
        .iter()
        .map(|r| (r.media_id.clone(), r.condition.clone()))
        .collect();
    let mut m = RunManifest::new("report", args);
    m.input_file(&a.probes)?;
    let mut reports = Vec::new();
    for (name, path) in &a.matrices {
        if reports.iter().any(|r: &ModelReport| &r.name == name) {
            return Err(Error::config("matrix", format!("duplicate model name `{name}`")));
        }
        m.input_file(path)?;
        let matrix = ScoreMatrix::load(path)?;
        reports.push(model_report(name, &matrix, &conditions)?);
    }
    create_dir(&a.out)?;
    let curves_dir = a.out.join("curves");
    create_dir(&curves_dir)?;

    let table_path = a.out.join("rank_table.csv");
    let tables: Vec<(String, RankTable)> = reports
        .iter()
        .map(|r| (r.name.clone(), r.table.clone()))
        .collect();
    write(&table_path, rank_tables_csv(&tables))?;
    m.output(&table_path);

    let mut cmc_panels: Vec<Panel<metrics::CmcCurve>> = Vec::new();
    let mut roc_panels: Vec<Panel<metrics::RocCurve>> = Vec::new();
    for r in &reports {
        for (condition, sub) in &r.matrices {
            let c = cmc(sub)?;
            let o = roc(sub, &ThresholdSweep::Observed)?;
            let stem = format!("{}-{}", file_safe(&r.name), file_safe(condition));
            let cp = curves_dir.join(format!("cmc-{stem}.csv"));
            let rp = curves_dir.join(format!("roc-{stem}.csv"));
            write(&cp, c.to_csv())?;
            write(&rp, o.to_csv())?;
            m.output(&cp);
            m.output(&rp);
            match cmc_panels.iter_mut().find(|p| &p.condition == condition) {
                Some(p) => p.curves.push((r.name.clone(), c)),
                None => cmc_panels.push(Panel {
                    condition: condition.clone(),
                    curves: vec![(r.name.clone(), c)],
                }),
            }
            match roc_panels.iter_mut().find(|p| &p.condition == condition) {
                Some(p) => p.curves.push((r.name.clone(), o)),
                None => roc_panels.push(Panel {
                    condition: condition.clone(),
                    curves: vec![(r.name.clone(), o)],
                }),
            }
        }
    }
    let order = |c: &String| {
        if c == ALL_CONDITIONS {
            (0, String::new())
        } else {
            let (i, s) = metrics::condition_order(c);
            (i + 1, s)
        }
    };
    cmc_panels.sort_by_key(|p| order(&p.condition));
    roc_panels.sort_by_key(|p| order(&p.condition));
    let cmc_path = a.out.join("cmc.svg");
    let roc_path = a.out.join("roc.svg");
    write(&cmc_path, cmc_svg(&cmc_panels))?;
    write(&roc_path, roc_svg(&roc_panels))?;
    m.output(&cmc_path);
    m.output(&roc_path);
    m.write(&a.out.join("run.json"))?;
    print!("{}", rank_tables_csv(&tables));
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let matrix = ScoreMatrix::load(&a.matrix)?;
    let checks = verify_matrix(&matrix);
    for c in &checks {
        println!("{}", c.line());
    }
    if all_passed(&checks) {
        Ok(())
    } else {
        Err(Error::Invariant(format!("{}", a.matrix.display())))
    }
}

/// Probe conditions of a media list, for callers building reports in code.
pub fn conditions_of(probes: &[crate::templates::MediaItem]) -> BTreeMap<String, String> {
    probe_conditions(probes)
}
