//! Command-line front end. Every subcommand reads the optional TOML config first; flags given
//! on the command line win over config values, and `--seed` wins over every seed in the file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::load_checkpoint;
use crate::data::{build_vocabulary, load_manifest, Split, Vocabulary};
use crate::error::{invalid, Error, Result};
use crate::eval::{
    export_rating_tasks, filter_effect_report, lab_l2, remap_spread, StudyKind, StudyRecord,
};
use crate::generator::{BackboneConfig, EditModel, GeneratorKind, ModelConfig, Precision, Readout};
use crate::image::Image;
use crate::service::{serve, ModelRegistry, ModelSpec, ServeConfig};
use crate::synth::{generate_corpus, CorpusOptions, ImageSource, TemplateBank, TransformKind};
use crate::text::{load_pretrained_embeddings, TextEncoderKind};
use crate::training::{run_training, TrainConfig, TrainData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "textedit", version, about = "Text-guided global image editing")]
pub struct Cli {
    /// Seed for every random choice; overrides seeds in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with defaults for any subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic paired corpus with known global edits.
    SynthData(SynthArgs),
    /// Build a vocabulary from a manifest's training descriptions and the template bank.
    BuildVocab(VocabArgs),
    /// Train a generator and write best.ckpt and history.csv.
    Train(TrainArgs),
    /// Score a checkpoint on a manifest split.
    Eval(EvalArgs),
    /// Edit one image with a text instruction.
    Edit(EditArgs),
    /// Run each filter of a filter-bank model alone and write a report.
    ProbeFilters(ProbeArgs),
    /// Turn study records into anonymized rating tasks.
    ExportStudy(StudyArgs),
    /// Serve models over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of pairs to generate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Side length of the square images.
    #[arg(long)]
    pub size: Option<usize>,
    /// Comma-separated edit kinds.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<TransformKind>>,
    /// Use photos from this directory instead of procedural textures.
    #[arg(long)]
    pub images: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    /// Dataset manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Where to write the vocabulary JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Drop words seen fewer times than this.
    #[arg(long)]
    pub min_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Vocabulary JSON; built from the manifest when left out.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Directory for the checkpoint and history.
    #[arg(long)]
    pub out: PathBuf,
    /// bucket, e2e or filterbank.
    #[arg(long)]
    pub kind: Option<GeneratorKind>,
    /// Number of passes over the training split.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Pairs per optimizer step.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Comma-separated encoder widths for a smaller backbone.
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    /// Word vectors in whitespace-separated text form.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Zero wall-clock times in the history so reruns match byte for byte.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to score.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// fusion or argmax.
    #[arg(long, default_value = "fusion")]
    pub mode: Readout,
    /// Write the report JSON here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    /// Checkpoint to edit with.
    #[arg(long)]
    pub model: PathBuf,
    /// Input image (PNG or JPEG).
    #[arg(long)]
    pub image: PathBuf,
    /// Edit instruction.
    #[arg(long)]
    pub text: String,
    /// Where to write the edited PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// fusion or argmax.
    #[arg(long, default_value = "fusion")]
    pub mode: Readout,
    /// Print the branch weights.
    #[arg(long)]
    pub weights: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Filter-bank checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Images to probe.
    #[arg(long, num_args = 1.., required = true)]
    pub images: Vec<PathBuf>,
    /// Directory for previews and the CSV report.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// JSON array of study records.
    #[arg(long)]
    pub records: PathBuf,
    /// standalone or pairwise.
    #[arg(long)]
    pub kind: StudyKind,
    /// Where to write the task JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// `id=path/to.ckpt` or `id=identity`; repeatable.
    #[arg(long = "model")]
    pub models: Vec<String>,
    /// Bind address.
    #[arg(long)]
    pub host: Option<String>,
    /// Listen port.
    #[arg(long)]
    pub port: Option<u16>,
}

/// Shape of the `--config` file. Every section is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub seed: Option<u64>,
    pub synth: SynthSection,
    pub vocab: VocabSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n: usize,
    pub size: usize,
    pub kinds: Vec<TransformKind>,
    pub images: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n: 200,
            size: 64,
            kinds: TransformKind::EDITS.to_vec(),
            images: None,
            out: PathBuf::from("synth"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub min_count: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        Self { min_count: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: GeneratorKind,
    /// Encoder widths; the full eight-stage network when empty.
    pub widths: Vec<usize>,
    pub branches: usize,
    pub filter_kernel: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub encoder: TextEncoderKind,
    pub precision: Precision,
    pub embeddings: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let base = ModelConfig::full(GeneratorKind::Filterbank, 2);
        Self {
            kind: base.kind,
            widths: Vec::new(),
            branches: base.branches,
            filter_kernel: base.filter_kernel,
            embed_dim: base.text.embed_dim,
            hidden: base.text.hidden,
            encoder: base.text.kind,
            precision: base.precision,
            embeddings: None,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        let mut cfg = ModelConfig::full(self.kind, vocab_size);
        if !self.widths.is_empty() {
            cfg.backbone = BackboneConfig::miniature(&self.widths);
        }
        cfg.branches = self.branches;
        cfg.filter_kernel = self.filter_kernel;
        cfg.text.embed_dim = self.embed_dim;
        cfg.text.hidden = self.hidden;
        cfg.text.kind = self.encoder;
        cfg.precision = self.precision;
        cfg
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    match cli.command {
        Command::SynthData(a) => synth_data(a, &config, seed),
        Command::BuildVocab(a) => build_vocab(a, &config),
        Command::Train(a) => train(a, &config, cli.seed.or(config.seed)),
        Command::Eval(a) => eval(a),
        Command::Edit(a) => edit(a),
        Command::ProbeFilters(a) => probe_filters(a),
        Command::ExportStudy(a) => export_study(a, seed),
        Command::Serve(a) => serve_cmd(a, &config),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn synth_data(a: SynthArgs, config: &AppConfig, seed: u64) -> Result<()> {
    let s = &config.synth;
    let size = a.size.unwrap_or(s.size);
    let mut opts = CorpusOptions::new(
        a.n.unwrap_or(s.n),
        a.kinds.unwrap_or_else(|| s.kinds.clone()),
        seed,
    );
    opts.height = size;
    opts.width = size;
    if let Some(dir) = a.images.or_else(|| s.images.clone()) {
        opts.source = ImageSource::Directory(dir);
    }
    let out = a.out.unwrap_or_else(|| s.out.clone());
    let manifest = generate_corpus(&opts, &out)?;
    let c = manifest.counts();
    println!(
        "wrote {} pairs to {} (train {}, val {}, test {})",
        manifest.records.len(),
        out.display(),
        c.train,
        c.val,
        c.test
    );
    Ok(())
}

fn vocabulary_for(manifest_path: &Path, min_count: usize) -> Result<Vocabulary> {
    let manifest = load_manifest(manifest_path)?;
    let mut phrases = TemplateBank::default().all_phrases()?;
    phrases.extend(
        manifest
            .records_in(Split::Train)
            .flat_map(|r| r.descriptions.iter().cloned()),
    );
    build_vocabulary(&phrases, min_count)
}

fn build_vocab(a: VocabArgs, config: &AppConfig) -> Result<()> {
    let vocab = vocabulary_for(&a.manifest, a.min_count.unwrap_or(config.vocab.min_count))?;
    ensure_parent(&a.out)?;
    vocab.save(&a.out)?;
    println!("wrote {} tokens to {}", vocab.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs, config: &AppConfig, seed: Option<u64>) -> Result<()> {
    let mut tc = config.train.clone();
    if let Some(s) = seed {
        tc.seed = s;
    }
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(b) = a.batch_size {
        tc.batch_size = b;
    }
    tc.deterministic |= a.deterministic;
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => vocabulary_for(&a.manifest, config.vocab.min_count)?,
    };
    let mut section = config.model.clone();
    if let Some(k) = a.kind {
        section.kind = k;
    }
    if let Some(w) = a.widths {
        section.widths = w;
    }
    let model_config = section.model_config(vocab.len());
    let model = EditModel::new(model_config, vocab, tc.seed)?;
    if let Some(path) = a.embeddings.or(section.embeddings) {
        let (table, cov) =
            load_pretrained_embeddings(&path, &model.vocab, model.config.text.embed_dim, tc.seed)?;
        model.store.set("text.embedding", &table)?;
        log::info!(
            "pretrained vectors cover {}/{} tokens",
            cov.found,
            cov.total
        );
    }
    let manifest = load_manifest(&a.manifest)?;
    let data = TrainData::from_manifest(&manifest)?;
    let out = run_training(&tc, model, &data, &a.out)?;
    let best = &out.history[out.best_epoch.saturating_sub(1)];
    println!(
        "best epoch {} (val {:.5}); checkpoint {}; history {}",
        out.best_epoch,
        best.val_g_loss,
        out.checkpoint.display(),
        out.history_path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub pairs: usize,
    /// Mean Lab distance between the unedited input and the target.
    pub input_lab_l2: f64,
    pub output_lab_l2: f64,
    /// Fractional reduction of the mean Lab distance achieved by the model.
    pub relative_improvement: f64,
    pub mean_remap_spread: f64,
}

fn eval(a: EvalArgs) -> Result<()> {
    let (model, _) = load_checkpoint(&a.model)?;
    let manifest = load_manifest(&a.manifest)?;
    let pairs = manifest.load_split(a.split)?;
    if pairs.is_empty() {
        return Err(invalid(format!("the {:?} split is empty", a.split)));
    }
    let (mut base, mut ours, mut spread) = (0.0, 0.0, 0.0);
    for p in &pairs {
        let text = p.descriptions.first().map(String::as_str).unwrap_or("");
        let out = model.edit(&p.input, text, a.mode, None)?;
        base += lab_l2(&p.input, &p.target)?;
        ours += lab_l2(&out.image, &p.target)?;
        spread += remap_spread(&p.input, &out.image)?.spread;
    }
    let n = pairs.len() as f64;
    let report = EvalReport {
        split: a.split,
        pairs: pairs.len(),
        input_lab_l2: base / n,
        output_lab_l2: ours / n,
        relative_improvement: if base > 0.0 { 1.0 - ours / base } else { 0.0 },
        mean_remap_spread: spread / n,
    };
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(out) = &a.out {
        write_file(out, json + "\n")?;
    }
    Ok(())
}

fn edit(a: EditArgs) -> Result<()> {
    let (model, _) = load_checkpoint(&a.model)?;
    let image = Image::load(&a.image)?;
    let out = model.edit(&image, &a.text, a.mode, None)?;
    ensure_parent(&a.out)?;
    out.image.save(&a.out)?;
    if a.weights {
        if let Some(w) = &out.weights {
            println!("{}", serde_json::to_string(w)?);
        }
    }
    Ok(())
}

fn probe_filters(a: ProbeArgs) -> Result<()> {
    let (model, _) = load_checkpoint(&a.model)?;
    let images = a
        .images
        .iter()
        .map(Image::load)
        .collect::<Result<Vec<_>>>()?;
    let report = filter_effect_report(&model, &images, &a.out)?;
    println!("wrote {} probes to {}", report.rows.len(), a.out.display());
    Ok(())
}

fn export_study(a: StudyArgs, seed: u64) -> Result<()> {
    let text = std::fs::read_to_string(&a.records).map_err(|e| Error::io(&a.records, e))?;
    let records: Vec<StudyRecord> = serde_json::from_str(&text)
        .map_err(|e| invalid(format!("{}: {e}", a.records.display())))?;
    let export = export_rating_tasks(&records, a.kind, seed)?;
    write_file(&a.out, serde_json::to_string_pretty(&export)? + "\n")?;
    println!("wrote {} tasks to {}", export.tasks.len(), a.out.display());
    Ok(())
}

fn serve_cmd(a: ServeArgs, config: &AppConfig) -> Result<()> {
    let mut sc = config.serve.clone();
    if !a.models.is_empty() {
        sc.models = a
            .models
            .iter()
            .map(|s| ModelSpec::parse(s))
            .collect::<Result<_>>()?;
    }
    if let Some(h) = a.host {
        sc.host = h;
    }
    if let Some(p) = a.port {
        sc.port = p;
    }
    let registry = ModelRegistry::load(&sc.models)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(serve(registry, &sc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flags_and_subcommands_are_usage_errors() {
        assert_eq!(run(["textedit", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["textedit", "edit", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["textedit", "--help"]), EXIT_OK);
    }

    #[test]
    fn config_file_round_trips_through_toml() {
        let mut cfg = AppConfig {
            seed: Some(9),
            ..AppConfig::default()
        };
        cfg.model.widths = vec![8, 16];
        cfg.serve.models = vec![ModelSpec::parse("stub=identity").unwrap()];
        let text = toml::to_string(&cfg).unwrap();
        let back: AppConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.seed, Some(9));
        assert_eq!(back.model.widths, vec![8, 16]);
        assert_eq!(back.serve.models, cfg.serve.models);
        assert!(toml::from_str::<AppConfig>("nonsense = 1").is_err());
    }

    #[test]
    fn missing_input_files_are_runtime_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("none.ckpt");
        let code = run([
            "textedit".as_ref(),
            "edit".as_ref(),
            "--model".as_ref(),
            missing.as_os_str(),
            "--image".as_ref(),
            missing.as_os_str(),
            "--text".as_ref(),
            "brighter".as_ref(),
            "--out".as_ref(),
            dir.path().join("o.png").as_os_str(),
        ] as [&std::ffi::OsStr; 10]);
        assert_eq!(code, EXIT_RUNTIME);
    }
}
