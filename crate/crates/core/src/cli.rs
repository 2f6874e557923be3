//! Command-line front end. `main` forwards to [`main_with`]; everything
//! else is testable without spawning a process.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{evaluate_model, multi_run, MultiRunConfig, DEFAULT_THRESHOLD};
use crate::io::{
    import_csv_timeseries, load_sequences, read_sequence_file, split_dataset, synth_dataset,
    write_sequence_file, CsvSchema, DatasetManifest, EmbeddingSequence, ManifestEntry,
    SynthPattern,
};
use crate::model::{load_model, predict, save_model};
use crate::pipeline::{
    cohort_blastulation_curve, derive_label, parse_annotations, parse_grid, select_frames,
    CohortMember, FrameIndex, PaddedBatch, DEFAULT_MAX_LEN,
};
use crate::train::{
    grad_check, tiny_problem, train, ClassWeightMode, GradCheckOptions, ModelConfig, Stencil,
    TinyConfig, TrainConfig, GRADCHECK_TOLERANCE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "seqfuse",
    version,
    about = "LSTM + multi-head attention sequence classifier"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum Command {
    /// Convert a long-format CSV time series into .embs files plus a manifest.
    Import(ImportArgs),
    /// Write a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Train on a manifest, holding out a test split.
    Train(TrainArgs),
    /// Score a model on a labelled manifest.
    Evaluate(EvaluateArgs),
    /// Class probabilities and attention importance per sequence.
    Predict(PredictArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Cohort blastulation proportion over a time grid.
    Stats(StatsArgs),
    /// Repeated split/train/evaluate with mean ± std.
    Multirun(MultirunArgs),
}

#[derive(Debug, Args, PartialEq)]
pub struct ImportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// `series=<col>[,time=<col>][,label=<col>][,features=a|b|c]`
    #[arg(long)]
    pub schema: CsvSchema,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, PartialEq)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub len: usize,
    #[arg(long, default_value = "separable")]
    pub pattern: SynthPattern,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Architecture and optimizer flags shared by `train` and `multirun`.
#[derive(Debug, Args, PartialEq)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.3)]
    pub dropout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stratify the train/test split by class.
    #[arg(long)]
    pub stratify: bool,
    /// Exclude padded positions from attention keys.
    #[arg(long)]
    pub mask_padding: bool,
    /// Number of stacked LSTM layers.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 256)]
    pub hidden: usize,
    #[arg(long, default_value_t = 8)]
    pub heads: usize,
    /// Plain LSTM baseline without the attention branch.
    #[arg(long)]
    pub no_attention: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_ratio: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// `balanced`, `uniform`, or comma-separated per-class weights.
    #[arg(long, default_value = "balanced")]
    pub class_weights: ClassWeightMode,
    /// Subsample frames every this many hours before padding.
    #[arg(long)]
    pub select_every: Option<f64>,
}

impl TrainFlags {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            max_len: self.max_len,
            hidden: vec![self.hidden; self.layers],
            heads: self.heads,
            attention: !self.no_attention,
            mask_padding: self.mask_padding,
            ..ModelConfig::default()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch,
            max_epochs: self.epochs,
            patience: self.patience,
            dropout: self.dropout,
            seed: self.seed,
            class_weights: self.class_weights.clone(),
            validation_fraction: self.val_fraction,
        }
    }
}

#[derive(Debug, Args, PartialEq)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Per-epoch history TSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Where the held-out test manifest goes; defaults to `<out>.test.tsv`.
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    /// Train on every entry instead of holding out a test split.
    #[arg(long)]
    pub no_split: bool,
}

#[derive(Debug, Args, PartialEq)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Human-readable report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// `key=value` report.
    #[arg(long)]
    pub kv: Option<PathBuf>,
    /// `fpr<TAB>tpr` ROC points.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    #[arg(long)]
    pub select_every: Option<f64>,
}

#[derive(Debug, Args, PartialEq)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// A single `.embs` file or a manifest.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub select_every: Option<f64>,
}

#[derive(Debug, Args, PartialEq)]
pub struct GradcheckArgs {
    /// Built-in tiny problem (the default).
    #[arg(long, conflicts_with = "config")]
    pub tiny: bool,
    /// TOML file overriding the tiny problem and check options.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, PartialEq)]
pub struct StatsArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// `start:end:step` in hours, inclusive.
    #[arg(long, default_value = "0:168:1")]
    pub grid: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write `video_id<TAB>label` derived from the stages.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args, PartialEq)]
pub struct MultirunArgs {
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Same split for every run; only initialization and shuffling vary.
    #[arg(long)]
    pub fixed_split: bool,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[command(flatten)]
    pub flags: TrainFlags,
}

/// Parses argv (program name first).
pub fn parse_args<I, T>(argv: I) -> std::result::Result<Command, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv).map(|c| c.command)
}

/// Parses and runs, printing to `out` and `err`, and returns the exit code.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = match parse_args(argv) {
        Ok(cmd) => cmd,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match run(&cmd, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Keeps the frames chosen by daily selection, at most `max_frames`.
fn subsample(
    seq: &EmbeddingSequence,
    delta_t: f64,
    max_frames: usize,
) -> Result<EmbeddingSequence> {
    let index = FrameIndex::new(seq.timestamps())?;
    let sel = select_frames(&index, delta_t, max_frames)?;
    Ok(EmbeddingSequence {
        frames: sel.indices.iter().map(|&i| seq.frames[i].clone()).collect(),
        ..seq.clone()
    })
}

fn prepare(
    seqs: Vec<EmbeddingSequence>,
    select_every: Option<f64>,
    max_len: usize,
) -> Result<Vec<EmbeddingSequence>> {
    match select_every {
        Some(dt) => seqs.iter().map(|s| subsample(s, dt, max_len)).collect(),
        None => Ok(seqs),
    }
}

fn load_input(path: &Path) -> Result<Vec<EmbeddingSequence>> {
    if path.extension().is_some_and(|e| e == "embs") {
        Ok(vec![read_sequence_file(path)?])
    } else {
        load_sequences(&DatasetManifest::load(path)?)
    }
}

/// Executes one command. Returns the exit code for commands whose outcome
/// is a verdict (`gradcheck`); domain errors come back as `Err`.
pub fn run(cmd: &Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Import(a) => {
            let seqs = import_csv_timeseries(&a.csv, &a.schema)?;
            std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
            let mut entries = Vec::with_capacity(seqs.len());
            for s in &seqs {
                let name = format!("{}.embs", s.video_id);
                if name.contains(['/', '\\']) {
                    return Err(Error::InvalidInput(format!(
                        "series id {:?} is not a file name",
                        s.video_id
                    )));
                }
                let path = a.out_dir.join(&name);
                write_sequence_file(s, &path)?;
                entries.push(ManifestEntry {
                    path,
                    video_id: s.video_id.clone(),
                    label: s.label,
                    n_frames: s.len(),
                });
            }
            let manifest_path = a.out_dir.join("manifest.tsv");
            DatasetManifest::new(entries)?.save(&manifest_path)?;
            emit(
                out,
                &format!(
                    "imported {} sequences into {}\n",
                    seqs.len(),
                    manifest_path.display()
                ),
            )?;
        }
        Command::Synth(a) => {
            let data = synth_dataset(a.n, a.dim, a.len, a.pattern, a.seed)?;
            let manifest = data.write_to(&a.out_dir)?;
            let path = a.out_dir.join("manifest.tsv");
            manifest.save(&path)?;
            emit(
                out,
                &format!(
                    "wrote {} {} sequences, manifest {}\n",
                    a.n,
                    a.pattern,
                    path.display()
                ),
            )?;
        }
        Command::Train(a) => {
            let manifest = DatasetManifest::load(&a.manifest)?;
            let (train_manifest, test_manifest) = if a.no_split {
                (manifest, None)
            } else {
                let split = split_dataset(
                    &manifest,
                    a.flags.train_ratio,
                    a.flags.seed,
                    a.flags.stratify,
                )?;
                (
                    manifest.subset(&split.train_ids),
                    Some(manifest.subset(&split.test_ids)),
                )
            };
            let seqs = prepare(
                load_sequences(&train_manifest)?,
                a.flags.select_every,
                a.flags.max_len,
            )?;
            let batch = PaddedBatch::from_sequences(&seqs, a.flags.max_len)?;
            let outcome = train(&batch, &a.flags.model_config(), &a.flags.train_config())?;
            save_model(&outcome.model, &a.out)?;
            if let Some(h) = &a.history {
                write_file(h, &outcome.history.to_tsv())?;
            }
            let mut msg = format!(
                "trained on {} sequences, {} epochs ({:?}), best epoch {}, model {}\n",
                batch.len(),
                outcome.history.epochs.len(),
                outcome.history.stop,
                outcome.history.best_epoch,
                a.out.display()
            );
            if let Some(test) = test_manifest {
                let path = a
                    .test_manifest
                    .clone()
                    .unwrap_or_else(|| with_suffix(&a.out, ".test.tsv"));
                test.save(&path)?;
                let _ = writeln!(
                    msg,
                    "test manifest ({} sequences) {}",
                    test.len(),
                    path.display()
                );
            }
            emit(out, &msg)?;
        }
        Command::Evaluate(a) => {
            let model = load_model(&a.model)?;
            let seqs = load_sequences(&DatasetManifest::load(&a.manifest)?)?;
            let seqs = prepare(seqs, a.select_every, model.arch.max_len)?;
            let (report, _) = evaluate_model(&model, &seqs, a.threshold)?;
            let text = report.to_text();
            if let Some(p) = &a.report {
                write_file(p, &text)?;
            }
            if let Some(p) = &a.kv {
                write_file(p, &report.to_key_values())?;
            }
            if let Some(p) = &a.roc {
                let tsv = report.roc_tsv().ok_or_else(|| {
                    Error::InvalidInput("no ROC curve for this evaluation".into())
                })?;
                write_file(p, &tsv)?;
            }
            emit(out, &text)?;
        }
        Command::Predict(a) => {
            let model = load_model(&a.model)?;
            let seqs = prepare(load_input(&a.input)?, a.select_every, model.arch.max_len)?;
            let preds = predict(&model, &seqs, a.threshold)?;
            let mut table = String::from("video_id\tprobs\tclass\timportance\n");
            let join = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x:.6}"))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            for p in &preds {
                let importance = p
                    .importance
                    .as_deref()
                    .map_or_else(|| "NA".to_owned(), join);
                let _ = writeln!(
                    table,
                    "{}\t{}\t{}\t{}",
                    p.video_id,
                    join(&p.probs),
                    p.class,
                    importance
                );
            }
            match &a.out {
                Some(path) => write_file(path, &table)?,
                None => emit(out, &table)?,
            }
        }
        Command::Gradcheck(a) => {
            let (tiny, options) = match &a.config {
                Some(path) => GradcheckFile::load(path)?.into_parts()?,
                None => (TinyConfig::default(), GradCheckOptions::default()),
            };
            let (model, batch, weights) = tiny_problem(&tiny)?;
            let report = grad_check(&model, &batch, &weights, &options)?;
            let mut text = String::new();
            for g in &report.groups {
                let _ = writeln!(
                    text,
                    "{:<22} {:>4} coords  max rel error {:.3e}",
                    g.name, g.checked, g.max_rel_error
                );
            }
            let passed = report.passed(GRADCHECK_TOLERANCE);
            let _ = writeln!(
                text,
                "max relative error {:.3e} ({})",
                report.max_rel_error(),
                if passed { "pass" } else { "FAIL" }
            );
            emit(out, &text)?;
            return Ok(if passed { EXIT_OK } else { EXIT_FAILURE });
        }
        Command::Stats(a) => {
            let text = std::fs::read_to_string(&a.annotations)
                .map_err(|e| Error::io(&a.annotations, e))?;
            let videos = parse_annotations(&text)?;
            let cohort = videos
                .iter()
                .map(CohortMember::from_annotations)
                .collect::<Result<Vec<_>>>()?;
            let curve = cohort_blastulation_curve(&cohort, &parse_grid(&a.grid)?)?;
            let mut table = String::from("hours\tproportion\tactive\n");
            for p in &curve {
                let _ = writeln!(table, "{}\t{:.6}\t{}", p.time, p.proportion, p.active);
            }
            if let Some(path) = &a.labels {
                let mut labels = String::from("video_id\tlabel\n");
                for v in &videos {
                    let _ = writeln!(labels, "{}\t{}", v.video_id, derive_label(&v.annotations)?);
                }
                write_file(path, &labels)?;
            }
            match &a.out {
                Some(path) => write_file(path, &table)?,
                None => emit(out, &table)?,
            }
        }
        Command::Multirun(a) => {
            let seqs = load_sequences(&DatasetManifest::load(&a.manifest)?)?;
            let seqs = prepare(seqs, a.flags.select_every, a.flags.max_len)?;
            let cfg = MultiRunConfig {
                runs: a.runs,
                base_seed: a.flags.seed,
                train_ratio: a.flags.train_ratio,
                stratify: a.flags.stratify,
                fixed_split: a.fixed_split,
                threshold: a.threshold,
                model: a.flags.model_config(),
                train: a.flags.train_config(),
            };
            let outcome = multi_run(&seqs, &cfg)?;
            let mut text = outcome.aggregate.to_text();
            for (r, rep) in outcome.reports.iter().enumerate() {
                let _ = writeln!(text, "run {r}: accuracy {:.4}", rep.accuracy);
            }
            if let Some(p) = &a.report {
                write_file(p, &text)?;
                write_file(&with_suffix(p, ".kv"), &outcome.aggregate.to_key_values())?;
            }
            emit(out, &text)?;
        }
    }
    Ok(EXIT_OK)
}

/// `gradcheck --config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GradcheckFile {
    seq_len: Option<usize>,
    input_dim: Option<usize>,
    hidden: Option<Vec<usize>>,
    heads: Option<usize>,
    classes: Option<usize>,
    attention: Option<bool>,
    mask_padding: Option<bool>,
    batch: Option<usize>,
    seed: Option<u64>,
    epsilon: Option<f64>,
    /// `two_point` or `four_point`.
    stencil: Option<String>,
    max_coords: Option<usize>,
}

impl GradcheckFile {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    fn into_parts(self) -> Result<(TinyConfig, GradCheckOptions)> {
        let d = TinyConfig::default();
        let tiny = TinyConfig {
            seq_len: self.seq_len.unwrap_or(d.seq_len),
            input_dim: self.input_dim.unwrap_or(d.input_dim),
            hidden: self.hidden.unwrap_or(d.hidden),
            heads: self.heads.unwrap_or(d.heads),
            classes: self.classes.unwrap_or(d.classes),
            attention: self.attention.unwrap_or(d.attention),
            mask_padding: self.mask_padding.unwrap_or(d.mask_padding),
            batch: self.batch.unwrap_or(d.batch),
            seed: self.seed.unwrap_or(d.seed),
        };
        let o = GradCheckOptions::default();
        let stencil = match self.stencil.as_deref() {
            None | Some("two_point") => Stencil::TwoPoint,
            Some("four_point") => Stencil::FourPoint,
            Some(s) => return Err(Error::InvalidInput(format!("unknown stencil {s:?}"))),
        };
        let options = GradCheckOptions {
            epsilon: self.epsilon.unwrap_or(o.epsilon),
            stencil,
            max_coords_per_matrix: self.max_coords.or(o.max_coords_per_matrix),
            seed: o.seed,
        };
        Ok((tiny, options))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> std::result::Result<Command, clap::Error> {
        parse_args(std::iter::once("seqfuse").chain(args.split_whitespace()))
    }

    #[test]
    fn train_defaults() {
        let Command::Train(a) = parse("train --manifest m.tsv --out model.sqfm --seed 7").unwrap()
        else {
            panic!("not train");
        };
        assert_eq!(a.flags.seed, 7);
        let t = a.flags.train_config();
        assert_eq!(
            (t.learning_rate, t.batch_size, t.max_epochs, t.patience),
            (1e-3, 16, 20, 20)
        );
        assert_eq!(t.dropout, 0.3);
        assert_eq!(a.flags.model_config(), ModelConfig::default());
    }

    #[test]
    fn usage_errors() {
        assert!(parse("").is_err());
        let e = parse("train --manifest m --out o --lr abc").unwrap_err();
        assert!(e.to_string().contains("--lr"), "{e}");
        assert!(parse("train --manifest m").is_err());
        assert!(parse("synth --n 3 --out-dir d --bogus").is_err());
        assert!(parse("gradcheck --tiny --config c.toml").is_err());
        assert!(parse("synth --n 3 --out-dir d --pattern zigzag").is_err());
    }

    #[test]
    fn exit_codes() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(main_with(["seqfuse"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(main_with(["seqfuse", "--help"], &mut o, &mut e), EXIT_OK);
        let mut e = Vec::new();
        assert_eq!(
            main_with(
                [
                    "seqfuse",
                    "evaluate",
                    "--manifest",
                    "/nonexistent/m.tsv",
                    "--model",
                    "x"
                ],
                &mut o,
                &mut e
            ),
            EXIT_FAILURE
        );
        let msg = String::from_utf8(e).unwrap();
        assert!(
            msg.starts_with("error: ") && msg.lines().count() == 1,
            "{msg}"
        );
    }

    #[test]
    fn gradcheck_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.toml");
        std::fs::write(&path, "hidden = [4, 4]\nheads = 4\nmask_padding = true\nstencil = \"four_point\"\nepsilon = 1e-3\n").unwrap();
        let (tiny, opts) = GradcheckFile::load(&path).unwrap().into_parts().unwrap();
        assert_eq!(tiny.hidden, vec![4, 4]);
        assert_eq!(opts.stencil, Stencil::FourPoint);
        std::fs::write(&path, "heads = 2\nunknown = 1\n").unwrap();
        assert!(GradcheckFile::load(&path).is_err());
    }
}
