//! Command-line front end. Settings are layered: built-in defaults, then `PQVAE_SEED`, then
//! the `--config` file, then `--set key=value` overrides, then dedicated flags.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{train_kmeans_pq, train_scalar_quantizer, ScalarQuantizer, SQ_MAGIC};
use crate::config::{parse_sweep, RunConfig};
use crate::entropy::{build_smoothed_dictionary, CompressedFeature, DictRef, EntropyDictionary, DICT_MAGIC, STREAM_MAGIC};
use crate::error::{config_err, format_err, Error, Result};
use crate::eval::{
    emit_report, evaluate_codec, evaluate_scalar, mean_distortion, run_sweep, zero_shot_classify, RDPoint, ReportMeta,
    Scheme, Selection, SweepData,
};
use crate::format::{peek_magic, read_file, write_file};
use crate::model::{compress, decompress, index_histogram, train, CodecParams, PARAMS_MAGIC};
use crate::pq::{SharedCodebook, CODEBOOK_MAGIC};
use crate::store::{
    generate_factorial, generate_synthetic, load_dataset, load_text_embeddings, read_matrix_header, save_dataset,
    save_text_embeddings, split_with, EmbeddingDataset, FactorialSpec, SplitMode, SyntheticSpec, TextEmbeddingMatrix,
    EMB_MAGIC, TXE_MAGIC,
};

#[derive(Debug, Parser)]
#[command(name = "pqvae", version, about = "Shared-codebook product-quantized feature codec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its class text embeddings.
    Synth(SynthArgs),
    /// Split a dataset into train and test files.
    Split(SplitArgs),
    /// Train a codec or scalar quantizer.
    Train(Common),
    /// Compress every feature of a dataset into its own stream file.
    Compress(Common),
    /// Reconstruct a dataset from a directory of stream files.
    Decompress(DecompressArgs),
    /// Measure rate, distortion and zero-shot accuracy.
    Eval(EvalArgs),
    /// Train and evaluate a grid of configurations and pick the cheapest admissible one.
    Sweep(SweepArgs),
    /// Print the header of any file this tool reads or writes.
    Inspect {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

/// Settings shared by the configurable commands.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    #[arg(long)]
    pub quantizer: Option<PathBuf>,
    /// Directory all outputs are written to.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    pub spread: f64,
    /// Draw factorial data with this many factors instead of clusters.
    #[arg(long)]
    pub factors: Option<usize>,
    /// Choices per factor.
    #[arg(long, default_value_t = 8)]
    pub options: usize,
    /// Vectors to draw in factorial mode.
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Share of rows (or of classes, when splitting by label) that go to the train file.
    #[arg(long, default_value_t = 0.8)]
    pub fraction: f64,
    /// auto, label, row or stratified.
    #[arg(long, default_value = "auto")]
    pub mode: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by `compress`.
    #[arg(long)]
    pub streams: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Treat `--data` as reconstructions and compare them with this original dataset.
    #[arg(long)]
    pub against: Option<PathBuf>,
    /// Manifest written by `compress`, for the rate of `--against` evaluations.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Data to fit the scalar Huffman dictionary on; defaults to `--data`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Timestamp recorded in the JSON report.
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Sweep description: shared settings plus one `cell key=value ...` line per cell.
    #[arg(long)]
    pub sweep: PathBuf,
    /// Held-out data the cells are measured on.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub timestamp: Option<String>,
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(c) => cmd_train(&c),
        Command::Compress(c) => cmd_compress(&c),
        Command::Decompress(a) => cmd_decompress(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Inspect { files } => {
            for f in files {
                print!("{}", inspect(&f)?);
            }
            Ok(())
        }
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("PQVAE_SEED") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| config_err!("PQVAE_SEED={v:?} is not an integer")),
        Err(_) => Ok(None),
    }
}

fn seed_or_env(flag: Option<u64>) -> Result<u64> {
    Ok(flag.or(env_seed()?).unwrap_or(0))
}

/// Layer the configuration sources and validate the result.
pub fn resolve_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(seed) = env_seed()? {
        cfg.train.seed = seed;
    }
    if let Some(path) = &c.config {
        let text = fs::read_to_string(path).map_err(|e| config_err!("{}: {e}", path.display()))?;
        cfg.apply_text(&text)?;
    }
    for s in &c.set {
        cfg.apply_override(s)?;
    }
    if let Some(seed) = c.seed {
        cfg.train.seed = seed;
    }
    let pairs = [
        (&c.data, &mut cfg.dataset),
        (&c.text, &mut cfg.text),
        (&c.params, &mut cfg.params),
        (&c.codebook, &mut cfg.codebook),
        (&c.dictionary, &mut cfg.dictionary),
        (&c.quantizer, &mut cfg.quantizer),
        (&c.out, &mut cfg.out),
    ];
    for (flag, slot) in pairs {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| config_err!("missing {what} (flag --{what} or config key)"))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    required(&cfg.out, "out")
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn load_features(path: &Path, normalize: bool) -> Result<EmbeddingDataset> {
    let ds = load_dataset(path)?;
    if normalize {
        ds.l2_normalized()
    } else {
        Ok(ds)
    }
}

fn load_text(cfg: &RunConfig) -> Result<Option<TextEmbeddingMatrix>> {
    cfg.text.as_deref().map(load_text_embeddings).transpose()
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let seed = seed_or_env(a.seed)?;
    let (ds, text) = match a.factors {
        Some(factors) => generate_factorial(&FactorialSpec {
            dim: a.dim,
            factors,
            options: a.options,
            count: a.count,
            spread: a.spread,
            seed,
        })?,
        None => generate_synthetic(&SyntheticSpec {
            dim: a.dim,
            num_classes: a.classes,
            per_class_count: a.per_class,
            cluster_spread: a.spread,
            seed,
        })?,
    };
    create_out(&a.out)?;
    save_dataset(&ds, &a.out.join("data.emb"))?;
    save_text_embeddings(&text, &a.out.join("text.txe"))?;
    println!("wrote {} vectors of dim {} and {} text rows to {}", ds.count(), ds.dim(), text.num_classes(), a.out.display());
    Ok(())
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let mode: SplitMode = a.mode.parse()?;
    let seed = seed_or_env(a.seed)?;
    let ds = load_dataset(&a.data)?;
    let (train, test) = split_with(&ds, a.fraction, seed, mode)?;
    create_out(&a.out)?;
    save_dataset(&train, &a.out.join("train.emb"))?;
    save_dataset(&test, &a.out.join("test.emb"))?;
    println!("train {} rows, test {} rows", train.count(), test.count());
    Ok(())
}

#[derive(Serialize)]
struct ScalarLog<'a> {
    iteration: usize,
    mse: f64,
    levels: &'a [f64],
}

fn cmd_train(c: &Common) -> Result<()> {
    let cfg = resolve_config(c)?;
    let out = out_dir(&cfg)?.to_path_buf();
    let ds = load_features(required(&cfg.dataset, "data")?, cfg.normalize)?;
    let x = ds.to_array();
    let mut log = String::new();

    match cfg.scheme {
        Scheme::ScalarQ => {
            let fit = train_scalar_quantizer(x.view(), cfg.sq_bits, cfg.seed())?;
            for (iteration, &mse) in fit.mse_trace.iter().enumerate() {
                log.push_str(&json_line(&ScalarLog { iteration, mse, levels: fit.quantizer.levels() }));
            }
            create_out(&out)?;
            fit.quantizer.save(&out.join("quantizer.sqz"))?;
            println!("scalar quantizer: {} bits, final mse {:.6e}", cfg.sq_bits, fit.mse_trace.last().unwrap());
        }
        scheme => {
            let arch = cfg.architecture(ds.dim())?;
            let outcome = match scheme {
                Scheme::PqvaeShared => train(x.view(), &arch, &cfg.train)?,
                _ => train_kmeans_pq(x.view(), &arch, &cfg.train)?,
            };
            for e in &outcome.epochs {
                log.push_str(&json_line(e));
                eprintln!(
                    "epoch {:>3} loss {:.5} cos {:.5} codebook {:.5} perplexity {:.2} reinit {}",
                    e.epoch, e.loss.total, e.loss.cosine_term, e.loss.codebook_term, e.perplexity, e.reinitialized
                );
            }
            let hist = index_histogram(x.view(), &outcome.params)?;
            let dict = build_smoothed_dictionary(&hist)?;
            create_out(&out)?;
            outcome.params.save(&out.join("model.pqm"))?;
            outcome.params.codebook.save(&out.join("codebook.pqc"))?;
            dict.save(&out.join("dictionary.pqd"))?;
            println!("{scheme}: {} -> {} bits fixed", arch.pq, crate::pq::fixed_index_bits(&arch.pq));
        }
    }
    write_file(&out.join("train_log.jsonl"), log.as_bytes())?;
    write_file(&out.join("run.cfg"), cfg.to_text().as_bytes())?;
    Ok(())
}

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn load_codec(cfg: &RunConfig) -> Result<(CodecParams, EntropyDictionary)> {
    let params = CodecParams::load(required(&cfg.params, "params")?)?;
    let dict = EntropyDictionary::load(required(&cfg.dictionary, "dictionary")?)?;
    if let Some(path) = &cfg.codebook {
        let cb = SharedCodebook::load(path)?;
        let (expected, actual) = (params.codebook.content_hash(), cb.content_hash());
        if expected != actual {
            return Err(Error::CodebookMismatch { expected, actual });
        }
    }
    Ok((params, dict))
}

const MANIFEST_HEADER: &str = "index,file,payload_bits,overhead_bits";

fn cmd_compress(c: &Common) -> Result<()> {
    let cfg = resolve_config(c)?;
    let out = out_dir(&cfg)?.to_path_buf();
    let (params, dict) = load_codec(&cfg)?;
    let ds = load_features(required(&cfg.dataset, "data")?, cfg.normalize)?;
    let x = ds.to_array();
    let streams: Vec<CompressedFeature> = x
        .outer_iter()
        .map(|row| compress(row.as_slice().expect("standard layout"), &params, &dict, cfg.dict_mode))
        .collect::<Result<_>>()?;

    let dir = out.join("streams");
    create_out(&dir)?;
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    let mut total = 0u64;
    for (i, cf) in streams.iter().enumerate() {
        let name = format!("{i:06}.pqb");
        cf.save(&dir.join(&name))?;
        total += u64::from(cf.payload_bits);
        let _ = writeln!(manifest, "{i},streams/{name},{},{}", cf.payload_bits, cf.overhead_bits());
    }
    write_file(&out.join("manifest.csv"), manifest.as_bytes())?;
    let n = streams.len().max(1) as f64;
    println!("{} features, {:.3} payload bits each, {:.4} bpd", streams.len(), total as f64 / n, total as f64 / n / ds.dim() as f64);
    Ok(())
}

struct ManifestEntry {
    file: PathBuf,
    payload_bits: u64,
    overhead_bits: u64,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = String::from_utf8(read_file(path)?).map_err(|_| format_err!("manifest is not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(format_err!("{}: missing manifest header", path.display()));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || format_err!("{}: bad manifest line {}", path.display(), n + 2);
        if f.len() != 4 || f[0].parse::<usize>().ok() != Some(n) {
            return Err(bad());
        }
        out.push(ManifestEntry {
            file: base.join(f[1]),
            payload_bits: f[2].parse().map_err(|_| bad())?,
            overhead_bits: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

fn cmd_decompress(a: &DecompressArgs) -> Result<()> {
    let cfg = resolve_config(&a.common)?;
    let out = out_dir(&cfg)?.to_path_buf();
    let (params, dict) = load_codec(&cfg)?;
    let entries = read_manifest(&a.streams.join("manifest.csv"))?;
    let mut values = Vec::with_capacity(entries.len() * params.arch.input_dim);
    for e in &entries {
        let cf = CompressedFeature::load(&e.file)?;
        let x_hat = decompress(&cf, &params, &dict)?;
        values.extend(x_hat.iter().map(|&v| v as f32));
    }
    // labels and names come from the original dataset when given
    let (labels, names) = match &cfg.dataset {
        Some(p) => {
            let like = load_dataset(p)?;
            if like.count() != entries.len() {
                return Err(Error::Data(format!("{} has {} rows, {} streams", p.display(), like.count(), entries.len())));
            }
            (like.labels().map(<[u32]>::to_vec), like.label_names().map(<[String]>::to_vec))
        }
        None => (None, None),
    };
    let recon = EmbeddingDataset::new(params.arch.input_dim, values, labels, names)?;
    create_out(&out)?;
    save_dataset(&recon, &out.join("reconstructed.emb"))?;
    println!("reconstructed {} features", recon.count());
    Ok(())
}

fn report_meta(cfg: &RunConfig, data: &EmbeddingDataset, timestamp: &Option<String>) -> ReportMeta {
    ReportMeta { seed: cfg.seed(), dataset_hash: format!("{:016x}", data.content_hash()), timestamp: timestamp.clone() }
}

fn print_point(p: &RDPoint) {
    let acc = p.accuracy.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into());
    println!("{}: bpd {:.4} payload {:.2} bits distortion {:.6} accuracy {acc}", p.scheme, p.bpd, p.payload_bits, p.distortion);
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let cfg = resolve_config(&a.common)?;
    let out = out_dir(&cfg)?.to_path_buf();
    let text = load_text(&cfg)?;
    let data = load_features(required(&cfg.dataset, "data")?, cfg.normalize)?;
    let x = data.to_array();

    let point = if let Some(orig_path) = &a.against {
        let orig = load_features(orig_path, cfg.normalize)?;
        if orig.dim() != data.dim() || orig.count() != data.count() {
            return Err(Error::Data("reconstructions and originals differ in shape".into()));
        }
        let (payload, overhead) = match &a.manifest {
            Some(m) => {
                let entries = read_manifest(m)?;
                if entries.len() != data.count() {
                    return Err(Error::Data(format!("manifest lists {} streams for {} rows", entries.len(), data.count())));
                }
                entries.iter().fold((0, 0), |(p, o), e| (p + e.payload_bits, o + e.overhead_bits))
            }
            None => (0, 0),
        };
        let mut p = RDPoint::new("reconstruction", &cfg.to_text(), data.dim(), payload, overhead, data.count());
        p.distortion = mean_distortion(orig.to_array().view(), x.view())?;
        if let Some(t) = &text {
            p.accuracy = Some(zero_shot_classify(x.view(), orig.labels(), t)?.accuracy);
        }
        p
    } else if let Some(qpath) = &cfg.quantizer {
        let q = ScalarQuantizer::load(qpath)?;
        let fit = match &a.fit {
            Some(p) => load_features(p, cfg.normalize)?.to_array(),
            None => x.clone(),
        };
        evaluate_scalar(&cfg.to_text(), &q, fit.view(), x.view(), data.labels(), text.as_ref(), cfg.sq_entropy)?.0
    } else {
        let (params, dict) = load_codec(&cfg)?;
        let scheme = cfg.scheme.to_string();
        evaluate_codec(&scheme, &cfg.to_text(), &params, &dict, x.view(), data.labels(), text.as_ref())?.0
    };
    create_out(&out)?;
    emit_report(std::slice::from_ref(&point), None, &report_meta(&cfg, &data, &a.timestamp), &out, "eval")?;
    print_point(&point);
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let base = resolve_config(&a.common)?;
    let train_ds = load_features(required(&base.dataset, "data")?, base.normalize)?;
    let test_ds = load_features(&a.test, base.normalize)?;
    if train_ds.dim() != test_ds.dim() {
        return Err(Error::Data("train and test dimensions differ".into()));
    }
    let sweep_text = fs::read_to_string(&a.sweep).map_err(|e| config_err!("{}: {e}", a.sweep.display()))?;
    let (spec, cfg) = parse_sweep(&sweep_text, &base, train_ds.dim())?;
    let out = out_dir(&cfg)?.to_path_buf();
    let text = load_text(&cfg)?;
    let (xtr, xte) = (train_ds.to_array(), test_ds.to_array());
    let data = SweepData { train: xtr.view(), test: xte.view(), test_labels: test_ds.labels(), text: text.as_ref() };
    let report = run_sweep(&spec, data)?;
    create_out(&out)?;
    emit_report(&report.points, Some(&report.selection), &report_meta(&cfg, &train_ds, &a.timestamp), &out, "sweep")?;
    for p in &report.points {
        print_point(p);
    }
    println!("{}", selection_line(&report.points, &report.selection));
    Ok(())
}

pub fn selection_line(points: &[RDPoint], s: &Selection) -> String {
    match s {
        Selection::Winner { winner, runner_ups } => {
            let p = &points[*winner];
            format!(
                "winner: cell {winner} {} bpd {:.4} distortion {:.6} config {} (runner-ups {runner_ups:?})",
                p.scheme, p.bpd, p.distortion, p.config_hash
            )
        }
        Selection::Infeasible { d_max, best_distortion } => {
            format!("infeasible: no cell reaches distortion {d_max} (best {best_distortion:.6})")
        }
        Selection::Unconstrained => "no d_max given; no winner selected".into(),
    }
}

/// Human-readable summary of a file, chosen by its magic.
pub fn inspect(path: &Path) -> Result<String> {
    let bytes = read_file(path)?;
    let magic = peek_magic(&bytes).ok_or_else(|| format_err!("{}: too short to carry a magic", path.display()))?;
    let mut s = format!("{}: ", path.display());
    match &magic {
        m if m == EMB_MAGIC || m == TXE_MAGIC => {
            let h = read_matrix_header(&bytes)?;
            let _ = write!(s, "{} v{} dim {} count {}", String::from_utf8_lossy(m), h.version, h.dim, h.count);
            if m == EMB_MAGIC {
                let ds = EmbeddingDataset::from_bytes(&bytes)?;
                let _ = write!(s, " labels {} names {}", ds.labels().is_some(), ds.label_names().map_or(0, |n| n.len()));
            } else {
                let t = TextEmbeddingMatrix::from_bytes(&bytes)?;
                let _ = write!(s, " classes {:?}", t.class_names());
            }
        }
        m if m == PARAMS_MAGIC => {
            let p = CodecParams::from_bytes(&bytes)?;
            let a = &p.arch;
            let _ = write!(
                s,
                "PQM1 input {} encoder {:?} decoder {:?} activation {} pq {} codebook {:016x}",
                a.input_dim, a.encoder_hidden, a.decoder_hidden, a.activation, a.pq, p.codebook.content_hash()
            );
        }
        m if m == CODEBOOK_MAGIC => {
            let cb = SharedCodebook::from_bytes(&bytes)?;
            let _ = write!(s, "PQC1 {} hash {:016x}", cb.config(), cb.content_hash());
        }
        m if m == STREAM_MAGIC => {
            let cf = CompressedFeature::from_bytes(&bytes)?;
            let dict = match &cf.dict {
                DictRef::External(id) => format!("external {id:08x}"),
                DictRef::Inline(_) => "inline".into(),
            };
            let _ = write!(
                s,
                "PQB1 {} codebook {:016x} dictionary {dict} payload {} bits overhead {} bits",
                cf.config, cf.codebook_hash, cf.payload_bits, cf.overhead_bits()
            );
        }
        m if m == DICT_MAGIC => {
            let d = EntropyDictionary::from_bytes(&bytes)?;
            let max = d.code_lengths().iter().max().copied().unwrap_or(0);
            let _ = write!(s, "PQD1 K {} id {:08x} longest code {max} bits", d.symbol_count(), d.id());
        }
        m if m == SQ_MAGIC => {
            let q = ScalarQuantizer::from_bytes(&bytes)?;
            let _ = write!(s, "SQZ1 {} bits scale {} offset {} levels {:?}", q.bits_per_dim(), q.scale(), q.offset(), q.levels());
        }
        m => return Err(format_err!("{}: unknown magic {:?}", path.display(), String::from_utf8_lossy(m))),
    }
    s.push('\n');
    Ok(s)
}
