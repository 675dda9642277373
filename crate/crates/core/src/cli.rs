//! Command-line surface.
//!
//! Subcommands: `fit` (append one domain to a model), `infer` (per-sample
//! predictions with routing trace), `eval` (accuracy matrix plus AA/AF/CA),
//! `ablate` (ensemble-mode × distance-kernel grid on a synthetic stream),
//! `sweep-q` (gate-threshold sweep), `synth` (write synthetic embedding
//! files).
//!
//! Results go to standard output or `--out`; diagnostics go to standard
//! error, controlled by `MOPDIL_LOG={error|info|debug}`. Exit codes:
//! 0 success, 1 usage/configuration error, 2 data error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{DistanceMode, EnsembleMode, InferenceConfig};
use crate::domain::{fit_domain, FittedMixture};
use crate::embedding::LabeledSample;
use crate::ensemble::infer;
use crate::error::{Error, Result};
use crate::io::{
    atomic_write, load_embeddings, load_model, save_embeddings, save_model, EmbeddingFile,
};
use crate::metrics::AccuracyMatrix;
use crate::synth::{generate_stream, sweep_q, SynthSpec};

#[derive(Parser)]
#[command(
    name = "mopdil",
    version,
    about = "Domain-incremental prototype routing and mixture-ensembled classification over precomputed embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one domain from an embeddings file and append it to a model
    Fit(FitArgs),
    /// Predict classes for an embeddings file, with routing trace
    Infer(InferArgs),
    /// Rebuild the accuracy matrix and report AA/AF/CA
    Eval(EvalArgs),
    /// Run the ensemble-mode x distance-kernel grid on a synthetic stream
    Ablate(AblateArgs),
    /// Sweep the gate threshold on a synthetic stream
    #[command(name = "sweep-q")]
    SweepQ(SweepQArgs),
    /// Generate synthetic embedding files from a spec
    Synth(SynthArgs),
}

/// Config fields that may override whatever a model file stores.
#[derive(Args, Default)]
struct ConfigOverrides {
    /// Gate threshold in (0, 1)
    #[arg(long)]
    q: Option<f64>,
    /// Weighting kernel: l1|l2|maha|uniform|l2gmm
    #[arg(long)]
    distance: Option<String>,
    /// Branch policy: hybrid|single|ensemble
    #[arg(long)]
    mode: Option<String>,
    /// Softmax temperature (> 0)
    #[arg(long)]
    temperature: Option<f64>,
}

impl ConfigOverrides {
    fn apply(&self, config: &mut InferenceConfig) -> Result<()> {
        if let Some(q) = self.q {
            config.q = q;
        }
        if let Some(d) = &self.distance {
            config.distance_mode = d.parse()?;
        }
        if let Some(m) = &self.mode {
            config.ensemble_mode = m.parse()?;
        }
        if let Some(t) = self.temperature {
            config.temperature = t;
        }
        config.validate()
    }
}

#[derive(Args)]
struct FitArgs {
    /// Model file to create or append to
    #[arg(long)]
    model: PathBuf,
    /// Embeddings of exactly one domain (its id must be the next unfitted id)
    #[arg(long)]
    embeddings: PathBuf,
    /// Where to write the updated model (defaults to --model)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Output CSV (defaults to standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled embeddings covering every fitted domain
    #[arg(long)]
    embeddings: PathBuf,
    /// Output JSON (defaults to standard output)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct AblateArgs {
    /// Synthetic spec file (JSON)
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for the spec
    #[arg(long)]
    seed: Option<u64>,
    /// Gate threshold in (0, 1)
    #[arg(long)]
    q: Option<f64>,
    /// Softmax temperature (> 0)
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Args)]
struct SweepQArgs {
    /// Synthetic spec file (JSON)
    #[arg(long)]
    spec: PathBuf,
    /// Comma-separated gate thresholds to sweep
    #[arg(long, default_value = "0.5,0.7,0.9,0.94,0.99")]
    q_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override for the spec
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct SynthArgs {
    /// Synthetic spec file (JSON)
    #[arg(long)]
    spec: PathBuf,
    /// Directory to write the embedding files into
    #[arg(long)]
    out: PathBuf,
    /// Seed override for the spec
    #[arg(long)]
    seed: Option<u64>,
}

/// Entry point used by the binary. Returns the process exit code.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MOPDIL_LOG", "error"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// Usage and configuration problems exit 1; data problems exit 2.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) => 1,
        _ => 2,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::SweepQ(args) => cmd_sweep_q(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn write_output(out: &Option<PathBuf>, body: &str) -> Result<()> {
    match out {
        Some(path) => atomic_write(path, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn load_spec(path: &Path, seed: Option<u64>) -> Result<SynthSpec> {
    let text = std::fs::read_to_string(path)?;
    let mut spec: SynthSpec = serde_json::from_str(&text)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let file = load_embeddings(&args.embeddings)?;
    if file.rows.is_empty() {
        return Err(Error::EmptyClass);
    }
    let domain_id = match file.rows[0].sample.domain_id {
        Some(id) => id,
        None => {
            return Err(Error::IndexOutOfRange {
                what: "domain",
                value: -1,
                limit: usize::MAX,
            })
        }
    };

    let mut mixture = if args.model.exists() {
        let mut m = load_model(&args.model)?;
        if m.dimension != file.dimension {
            return Err(Error::DimensionMismatch {
                expected: m.dimension,
                actual: file.dimension,
            });
        }
        args.overrides.apply(&mut m.config)?;
        m
    } else {
        let num_classes = file
            .rows
            .iter()
            .map(|r| r.sample.class_id)
            .max()
            .map_or(1, |c| c + 1);
        let mut config = InferenceConfig::default();
        args.overrides.apply(&mut config)?;
        FittedMixture::new(file.dimension, num_classes, config)?
    };

    // enforce the append-only contract before fitting
    let expected = mixture.len();
    if domain_id < expected {
        return Err(Error::DuplicateDomain(domain_id));
    }
    if domain_id > expected {
        return Err(Error::NonContiguousDomain {
            expected,
            got: domain_id,
        });
    }

    let samples = file.samples();
    let model = fit_domain(&samples, mixture.num_classes, &mixture.config)?;
    mixture.push_domain(model)?;
    let out = args.out.as_ref().unwrap_or(&args.model);
    save_model(&mixture, out)?;
    log::info!(
        "fitted domain {domain_id} from {} samples; model now has {} domain(s) -> {}",
        samples.len(),
        mixture.len(),
        out.display()
    );
    Ok(())
}

fn format_bool(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn cmd_infer(args: InferArgs) -> Result<()> {
    let mut mixture = load_model(&args.model)?;
    args.overrides.apply(&mut mixture.config)?;
    let file = load_embeddings(&args.embeddings)?;
    if file.dimension != mixture.dimension {
        return Err(Error::DimensionMismatch {
            expected: mixture.dimension,
            actual: file.dimension,
        });
    }

    let with_weights = mixture.config.ensemble_mode != EnsembleMode::AlwaysSingle;
    let mut out = String::from("id,selected_domain,is_id,cdf,argmax_class");
    for k in 0..mixture.num_classes {
        let _ = write!(out, ",p{k}");
    }
    if with_weights {
        for s in 0..mixture.len() {
            let _ = write!(out, ",w{s}");
        }
    }
    out.push('\n');

    for row in &file.rows {
        let pred = infer(&row.sample.embedding, &mixture)?;
        let _ = write!(
            out,
            "{},{},{},{},{}",
            row.id,
            pred.routing.selected_domain,
            format_bool(pred.routing.is_in_distribution),
            pred.routing.cdf_value,
            pred.posterior.argmax()
        );
        for p in &pred.posterior.probs {
            let _ = write!(out, ",{p}");
        }
        if with_weights {
            match &pred.weights {
                Some(w) => {
                    for v in &w.weights {
                        let _ = write!(out, ",{v}");
                    }
                }
                None => {
                    for _ in 0..mixture.len() {
                        out.push(',');
                    }
                }
            }
        }
        out.push('\n');
    }
    log::info!("inferred {} samples", file.rows.len());
    write_output(&args.out, &out)
}

/// Group labeled evaluation samples by domain, requiring every fitted
/// domain to be covered.
fn group_by_domain(
    file: &EmbeddingFile,
    mixture: &FittedMixture,
) -> Result<BTreeMap<usize, Vec<LabeledSample>>> {
    let n = mixture.len();
    let mut groups: BTreeMap<usize, Vec<LabeledSample>> = BTreeMap::new();
    for row in &file.rows {
        let domain = row.sample.domain_id.ok_or(Error::IndexOutOfRange {
            what: "domain",
            value: -1,
            limit: n,
        })?;
        if domain >= n {
            return Err(Error::IndexOutOfRange {
                what: "domain",
                value: domain as i64,
                limit: n,
            });
        }
        if row.sample.class_id >= mixture.num_classes {
            return Err(Error::IndexOutOfRange {
                what: "class",
                value: row.sample.class_id as i64,
                limit: mixture.num_classes,
            });
        }
        groups.entry(domain).or_default().push(row.sample.clone());
    }
    for domain in 0..n {
        if !groups.contains_key(&domain) {
            return Err(Error::MissingDomainSamples(domain));
        }
    }
    Ok(groups)
}

fn accuracy(mixture: &FittedMixture, samples: &[LabeledSample]) -> Result<f64> {
    let mut correct = 0usize;
    for s in samples {
        if infer(&s.embedding, mixture)?.posterior.argmax() == s.class_id {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut mixture = load_model(&args.model)?;
    args.overrides.apply(&mut mixture.config)?;
    let file = load_embeddings(&args.embeddings)?;
    if file.dimension != mixture.dimension {
        return Err(Error::DimensionMismatch {
            expected: mixture.dimension,
            actual: file.dimension,
        });
    }
    let groups = group_by_domain(&file, &mixture)?;
    let n = mixture.len();

    // Reconstruct the per-step models by truncating the append-only domain
    // list: domains are fitted independently, so the model after step j is
    // exactly the final model's first j domains.
    let mut matrix = AccuracyMatrix::new(n);
    for step in 1..=n {
        let partial = mixture.truncated(step)?;
        for (&domain, samples) in &groups {
            matrix.set(domain, step - 1, accuracy(&partial, samples)?)?;
        }
    }

    let aa = matrix.average_accuracy()?;
    let (af, ca) = if n >= 2 {
        (
            Some(matrix.average_forgetting()?),
            Some(matrix.cumulative_unseen_accuracy()?),
        )
    } else {
        (None, None)
    };
    let report = serde_json::json!({
        "num_domains": n,
        "num_classes": mixture.num_classes,
        "accuracy_matrix": matrix.rows(),
        "aa": aa,
        "af": af,
        "ca": ca,
        "config": mixture.config,
    });
    let mut body = serde_json::to_string_pretty(&report)?;
    body.push('\n');
    write_output(&args.out, &body)
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let spec = load_spec(&args.spec, args.seed)?;
    let mut config = InferenceConfig::default();
    if let Some(q) = args.q {
        config.q = q;
    }
    if let Some(t) = args.temperature {
        config.temperature = t;
    }
    config.validate()?;

    let stream = generate_stream(&spec)?;
    let mut base = FittedMixture::new(spec.dimension, spec.num_classes, config.clone())?;
    for entry in &stream {
        base.push_domain(fit_domain(&entry.train, spec.num_classes, &config)?)?;
    }
    let pooled_id: Vec<LabeledSample> = stream.iter().flat_map(|e| e.test_id.clone()).collect();
    let pooled_ood: Vec<LabeledSample> = stream.iter().flat_map(|e| e.test_ood.clone()).collect();

    let mut out =
        String::from("ensemble_mode,distance_mode,id_accuracy,ood_accuracy,mean_accuracy\n");
    for mode in EnsembleMode::ALL {
        for distance in DistanceMode::ALL {
            let mut mixture = base.clone();
            mixture.config.ensemble_mode = mode;
            mixture.config.distance_mode = distance;
            let id_acc = accuracy(&mixture, &pooled_id)?;
            let ood_acc = accuracy(&mixture, &pooled_ood)?;
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                mode,
                distance,
                id_acc,
                ood_acc,
                0.5 * (id_acc + ood_acc)
            );
        }
    }
    write_output(&args.out, &out)
}

fn cmd_sweep_q(args: SweepQArgs) -> Result<()> {
    let spec = load_spec(&args.spec, args.seed)?;
    let mut config = InferenceConfig::default();
    args.overrides.apply(&mut config)?;
    let q_values: Vec<f64> = args
        .q_grid
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad q value '{s}'")))
        })
        .collect::<Result<_>>()?;
    let points = sweep_q(&spec, &config, &q_values)?;

    let mut out = String::from("q,id_accuracy,ood_accuracy,gate_id_fraction\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.q, p.id_accuracy, p.ood_accuracy, p.gate_id_fraction
        );
    }
    write_output(&args.out, &out)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = load_spec(&args.spec, args.seed)?;
    let stream = generate_stream(&spec)?;
    std::fs::create_dir_all(&args.out)?;

    for (s, entry) in stream.iter().enumerate() {
        let path = args.out.join(format!("train_domain_{s}.csv"));
        save_embeddings(
            &path,
            &EmbeddingFile::from_samples(spec.dimension, entry.train.iter().cloned()),
        )?;
        log::info!("wrote {}", path.display());
    }
    let test_id: Vec<LabeledSample> = stream.iter().flat_map(|e| e.test_id.clone()).collect();
    let test_ood: Vec<LabeledSample> = stream.iter().flat_map(|e| e.test_ood.clone()).collect();
    let id_path = args.out.join("test_id.csv");
    save_embeddings(
        &id_path,
        &EmbeddingFile::from_samples(spec.dimension, test_id),
    )?;
    log::info!("wrote {}", id_path.display());
    let ood_path = args.out.join("test_ood.csv");
    save_embeddings(
        &ood_path,
        &EmbeddingFile::from_samples(spec.dimension, test_ood),
    )?;
    log::info!("wrote {}", ood_path.display());
    Ok(())
}
