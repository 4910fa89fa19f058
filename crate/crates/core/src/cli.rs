//! Command-line front end. Each subcommand loads its inputs, calls one
//! library entry point and prints a summary (or a JSON record with `--json`).
//!
//! Failures print one line to stderr and exit with a code from
//! [`Error::exit_code`]; `verify` exits with 1 on a signature mismatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::experiments::{
    self, default_ablation_grid, position_grid, ExperimentKind, ExperimentOutput, ExperimentSpec, NoiseMode,
    ParameterGrid,
};
use crate::imagedata::{crop_region, load_image, paste_message_with_id, sample_placement, save_image, Placement};
use crate::keys::{self, generate_key_pair, load_key, SignatureBundle};
use crate::metrics::{self, evaluate, sample_trials, KeyFeatureBackend};
use crate::networks::FeatureTaps;
use crate::training::{self, load_checkpoint, Checkpoint, TrainingData};

/// Exit code for a signature that fails verification.
pub const EXIT_MISMATCH: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "encryptgan", version, about = "Key-conditioned image steganography")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides both the training and evaluation seeds.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Dotted config override, e.g. `--set train.batch_size=2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train all networks and write checkpoints plus a loss log.
    Train {
        #[arg(long)]
        total_steps: Option<u64>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Write a public/private key pair from a disguise and a cover image.
    Keygen {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cover: PathBuf,
        #[arg(long)]
        disguise: PathBuf,
    },
    /// Paste a message into a cover and encrypt it with a public key.
    Encrypt {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cover: PathBuf,
        #[arg(long)]
        message: PathBuf,
        #[arg(long)]
        public_key: PathBuf,
        /// Top-left corner as `TOP,LEFT`.
        #[arg(long, conflicts_with = "random_placement")]
        placement: Option<String>,
        #[arg(long)]
        random_placement: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Decrypt a ciphertext with a private key.
    Decrypt {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        encrypted: PathBuf,
        #[arg(long)]
        private_key: PathBuf,
        /// Message rectangle `TOP,LEFT[,H,W]`; read from the ciphertext
        /// sidecar when omitted.
        #[arg(long)]
        placement: Option<String>,
        /// Reference message for a crop PSNR.
        #[arg(long)]
        message: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sign a secret image with a private key.
    Sign {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        secret: PathBuf,
        #[arg(long)]
        private_key: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a signature against a public key and the expected secret.
    Verify {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        signature: PathBuf,
        #[arg(long)]
        public_key: PathBuf,
        #[arg(long)]
        secret: PathBuf,
        /// Defaults to `eval.verify_threshold_db`.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Full metrics sweep over the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate one model per tap-layer set.
    Ablate {
        /// Semicolon-separated layer sets, e.g. `1,2,3;6;3,5,6`.
        #[arg(long)]
        layers: Option<String>,
        /// Reuse this checkpoint for the row whose config matches it.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Message PSNR under private-key noise.
    Sensitivity {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "source")]
        mode: SensitivityMode,
        /// Comma-separated sigmas; defaults to `eval.sensitivity_sigmas`.
        #[arg(long)]
        sigmas: Option<String>,
    },
    /// Message PSNR under ciphertext noise.
    Robustness {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        sigmas: Option<String>,
    },
    /// Message PSNR over an n×n placement grid.
    Positions {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 3)]
        grid: usize,
    },
    /// Activation montage of both generators.
    Activations {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Decrypts of one ciphertext under wrong keys.
    Wrongkeys {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5)]
        n_keys: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SensitivityMode {
    Source,
    Key,
}

/// Sidecar written next to a ciphertext.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CiphertextMetadata {
    pub placement: Placement,
    pub message_id: String,
    pub public_key: String,
}

/// Sidecar written next to a signature image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignatureMetadata {
    pub secret_ref: String,
}

/// What a subcommand reports on success.
pub struct Outcome {
    pub summary: String,
    pub record: Value,
    pub exit_code: i32,
}

impl Outcome {
    fn ok(summary: String, record: Value) -> Self {
        Self {
            summary,
            record,
            exit_code: 0,
        }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            report_error(&Error::Argument(first.to_string()), false);
            return Error::Argument(String::new()).exit_code();
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let json = cli.global.json;
    match execute(&cli) {
        Ok(out) => {
            if json {
                println!("{}", out.record);
            } else {
                println!("{}", out.summary);
            }
            out.exit_code
        }
        Err(e) => {
            report_error(&e, json);
            e.exit_code()
        }
    }
}

fn report_error(e: &Error, json: bool) {
    let message = e.to_string().replace('\n', " ");
    if json {
        eprintln!("{}", json!({"error": e.kind(), "code": e.exit_code(), "message": message}));
    } else {
        eprintln!("error[{}] code={}: {message}", e.kind(), e.exit_code());
    }
}

/// Resolves the effective config: file or defaults, then `--set`, then `--seed`.
pub fn resolve_config(global: &GlobalArgs) -> Result<Config> {
    let base = match &global.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let mut c = base.with_overrides(&global.overrides)?;
    if let Some(s) = global.seed {
        c.train.seed = s;
        c.eval.seed = s;
    }
    Ok(c)
}

// Model architecture always comes from the checkpoint.
fn open_checkpoint(global: &GlobalArgs, path: &Path) -> Result<(Config, Checkpoint, String)> {
    let ckpt = load_checkpoint(path)?;
    let mut config = resolve_config(global)?;
    config.model = ckpt.config.model.clone();
    config.data.message_size = ckpt.config.data.message_size;
    let hash = training::checkpoint_hash(path)?;
    Ok((config, ckpt, hash))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Argument(format!("bad {what} `{s}`")))
        })
        .collect()
}

fn parse_placement(s: &str, message: (usize, usize)) -> Result<Placement> {
    let v: Vec<usize> = parse_list(s, "placement")?;
    match v.as_slice() {
        [t, l] => Ok(Placement::new(*t, *l, message.0, message.1)),
        [t, l, h, w] => Ok(Placement::new(*t, *l, *h, *w)),
        _ => Err(Error::Argument(format!("placement `{s}` must be TOP,LEFT or TOP,LEFT,H,W"))),
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).expect("serializable");
    metrics::write_file(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn experiment_output(
    global: &GlobalArgs,
    kind: ExperimentKind,
    grid: ParameterGrid,
    checkpoint: Option<&Path>,
    config: &Config,
    hash: &str,
) -> Result<ExperimentOutput> {
    let spec = ExperimentSpec {
        kind,
        grid,
        checkpoint: checkpoint.map(Path::to_path_buf),
        out_dir: global.out.clone(),
        seed: config.eval.seed,
    };
    ExperimentOutput::create(&spec, config, hash)
}

fn sigma_grid(arg: &Option<String>, default: &[f32]) -> Result<Vec<f32>> {
    match arg {
        Some(s) => parse_list(s, "sigma list"),
        None => Ok(default.to_vec()),
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Train { total_steps, resume } => {
            let mut config = resolve_config(g)?;
            if let Some(n) = total_steps {
                config.train.total_steps = *n;
            }
            let resume = resume.as_deref().map(load_checkpoint).transpose()?;
            let ckpt = training::train(&config, &g.out, resume)?;
            let path = g.out.join(training::FINAL_CHECKPOINT);
            let hash = training::checkpoint_hash(&path)?;
            Ok(Outcome::ok(
                format!("trained to step {}; checkpoint {} ({hash})", ckpt.state.step, path.display()),
                json!({"command": "train", "step": ckpt.state.step, "checkpoint": path, "sha256": hash,
                       "loss_log": g.out.join(training::LOSS_LOG)}),
            ))
        }
        Command::Keygen {
            checkpoint,
            cover,
            disguise,
        } => {
            let (config, ckpt, _) = open_checkpoint(g, checkpoint)?;
            let size = config.model.image_size;
            let pair = generate_key_pair(
                &ckpt.state.nets.k,
                &load_image(cover, size)?,
                &load_image(disguise, size)?,
                &cover.display().to_string(),
                &disguise.display().to_string(),
            )?;
            let (public, private) = pair.save(&g.out)?;
            Ok(Outcome::ok(
                format!("public key {}\nprivate key {}", public.display(), private.display()),
                json!({"command": "keygen", "public_key": public, "private_key": private,
                       "keygen_checkpoint": pair.keygen_checkpoint}),
            ))
        }
        Command::Encrypt {
            checkpoint,
            cover,
            message,
            public_key,
            placement,
            random_placement,
            output,
        } => {
            let (config, ckpt, _) = open_checkpoint(g, checkpoint)?;
            let size = config.model.image_size;
            let msg = load_image(message, config.data.message_size)?;
            let p = match (placement, random_placement) {
                (Some(s), _) => parse_placement(s, msg.size())?,
                (None, true) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.eval.seed);
                    sample_placement(size, msg.size(), &mut rng)?
                }
                (None, false) => {
                    return Err(Error::Argument("encrypt needs --placement or --random-placement".into()));
                }
            };
            let comp = paste_message_with_id(&load_image(cover, size)?, &msg, p, &message.display().to_string())?;
            let (pk, _) = load_key(public_key)?;
            let enc = keys::encrypt(&ckpt.state.nets.f, &comp, &pk)?;
            let out = output.clone().unwrap_or_else(|| g.out.join("encrypted.png"));
            save_image(&enc, &out)?;
            let side = out.with_extension("json");
            write_json(
                &side,
                &CiphertextMetadata {
                    placement: p,
                    message_id: comp.message_id.clone(),
                    public_key: public_key.display().to_string(),
                },
            )?;
            Ok(Outcome::ok(
                format!("ciphertext {} (message at {},{})", out.display(), p.top, p.left),
                json!({"command": "encrypt", "encrypted": out, "metadata": side, "placement": p}),
            ))
        }
        Command::Decrypt {
            checkpoint,
            encrypted,
            private_key,
            placement,
            message,
            output,
        } => {
            let (config, ckpt, _) = open_checkpoint(g, checkpoint)?;
            let enc = load_image(encrypted, config.model.image_size)?;
            let (sk, _) = load_key(private_key)?;
            let dec = keys::decrypt(&ckpt.state.nets.g, &enc, &sk)?;
            let out = output.clone().unwrap_or_else(|| g.out.join("decrypted.png"));
            save_image(&dec, &out)?;
            let side = encrypted.with_extension("json");
            let p = match placement {
                Some(s) => Some(parse_placement(s, config.data.message_size)?),
                None if side.exists() => Some(read_json::<CiphertextMetadata>(&side)?.placement),
                None => None,
            };
            let mut record = json!({"command": "decrypt", "decrypted": out});
            let mut summary = format!("recovered {}", out.display());
            if let Some(p) = p {
                let crop = crop_region(&dec, p)?;
                let crop_path = out.with_file_name(format!(
                    "{}_message.png",
                    out.file_stem().and_then(|s| s.to_str()).unwrap_or("decrypted")
                ));
                save_image(&crop, &crop_path)?;
                record["message"] = json!(crop_path);
                record["placement"] = json!(p);
                summary.push_str(&format!("\nmessage crop {}", crop_path.display()));
                if let Some(m) = message {
                    let reference = load_image(m, (p.height, p.width))?;
                    let db = metrics::psnr(&crop, &reference, config.eval.psnr_cap)?;
                    record["message_psnr"] = json!(db);
                    summary.push_str(&format!("\nmessage PSNR {db:.2} dB"));
                }
            }
            Ok(Outcome::ok(summary, record))
        }
        Command::Sign {
            checkpoint,
            secret,
            private_key,
            output,
        } => {
            let (config, ckpt, _) = open_checkpoint(g, checkpoint)?;
            let s = load_image(secret, config.model.image_size)?;
            let (sk, _) = load_key(private_key)?;
            let bundle = keys::sign(&ckpt.state.nets.g, &s, &secret.display().to_string(), &sk)?;
            let out = output.clone().unwrap_or_else(|| g.out.join("signature.png"));
            save_image(&bundle.signature_image, &out)?;
            write_json(
                &out.with_extension("json"),
                &SignatureMetadata {
                    secret_ref: bundle.secret_ref.clone(),
                },
            )?;
            Ok(Outcome::ok(
                format!("signature {}", out.display()),
                json!({"command": "sign", "signature": out, "secret_ref": bundle.secret_ref}),
            ))
        }
        Command::Verify {
            checkpoint,
            signature,
            public_key,
            secret,
            threshold,
        } => {
            let (config, ckpt, _) = open_checkpoint(g, checkpoint)?;
            let size = config.model.image_size;
            let bundle = SignatureBundle {
                signature_image: load_image(signature, size)?,
                secret_ref: secret.display().to_string(),
            };
            let (pk, _) = load_key(public_key)?;
            let expected = load_image(secret, size)?;
            let threshold = threshold.unwrap_or(config.eval.verify_threshold_db);
            let db = keys::verification_psnr(&ckpt.state.nets.f, &bundle, &pk, &expected)?;
            let valid = db >= threshold;
            Ok(Outcome {
                summary: format!(
                    "{} (PSNR {db:.2} dB, threshold {threshold} dB)",
                    if valid { "signature valid" } else { "signature mismatch" }
                ),
                record: json!({"command": "verify", "valid": valid, "psnr": db, "threshold": threshold}),
                exit_code: if valid { 0 } else { EXIT_MISMATCH },
            })
        }
        Command::Eval { checkpoint } => {
            let (config, ckpt, hash) = open_checkpoint(g, checkpoint)?;
            let test = TrainingData::open_test(&config)?;
            let backend = KeyFeatureBackend {
                k: &ckpt.state.nets.k,
                taps: config.model.taps()?,
            };
            let mut report = evaluate(&ckpt.state.nets, &backend, &backend, &test, &config)?;
            report.checkpoint_hash = Some(hash);
            std::fs::create_dir_all(&g.out).map_err(|e| Error::io(&g.out, e))?;
            report.write_json(&g.out.join("metrics.json"))?;
            report.write_csv(&g.out.join("metrics.csv"))?;
            let a = |r, m| report.aggregate(r, m).unwrap_or(f64::NAN);
            Ok(Outcome::ok(
                format!(
                    "message PSNR {:.2} dB, SSIM {:.3}, wrong-key PSNR {:.2} dB, encryption MSE {:.4}, security MSE {:.4}, Frechet {:.4}",
                    a(metrics::Region::MessageRegion, "psnr"),
                    a(metrics::Region::MessageRegion, "ssim"),
                    report.wrong_key_message_psnr,
                    report.encryption.mse,
                    report.security.mse,
                    report.frechet,
                ),
                serde_json::from_str(&report.to_json()).expect("report json"),
            ))
        }
        Command::Ablate { layers, checkpoint } => {
            let config = resolve_config(g)?;
            let sets = match layers {
                Some(s) => s
                    .split(';')
                    .map(|set| FeatureTaps::new(parse_list(set, "layer set")?))
                    .collect::<Result<Vec<_>>>()?,
                None => default_ablation_grid(),
            };
            let reuse = checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let train_data = TrainingData::open_train(&config)?;
            let test = TrainingData::open_test(&config)?;
            let rows = experiments::run_ablation(&sets, &config, &train_data, &test, &g.out, &reuse.iter().collect::<Vec<_>>())?;
            let mut summary = String::from("layers      mse      psnr    ssim   status");
            for (r, _) in &rows {
                summary.push_str(&format!(
                    "\n{:<10} {:.5} {:7.2} {:7.3}  {}",
                    r.layers, r.message_mse, r.message_psnr, r.message_ssim, r.status
                ));
            }
            let table: Vec<_> = rows.iter().map(|(r, _)| r).collect();
            Ok(Outcome::ok(summary, json!({"command": "ablate", "rows": table})))
        }
        Command::Sensitivity {
            checkpoint,
            mode,
            sigmas,
        } => {
            let (config, ckpt, hash) = open_checkpoint(g, checkpoint)?;
            let sigmas = sigma_grid(sigmas, &config.eval.sensitivity_sigmas)?;
            let mode = match mode {
                SensitivityMode::Source => NoiseMode::NoiseOnSourceImage,
                SensitivityMode::Key => NoiseMode::NoiseOnKey,
            };
            let out = experiment_output(g, ExperimentKind::KeySensitivity, ParameterGrid::Sigmas(sigmas.clone()), Some(checkpoint), &config, &hash)?;
            let test = TrainingData::open_test(&config)?;
            let curve = experiments::run_key_sensitivity(&ckpt.state.nets, &test, &sigmas, mode, config.eval.repeats, config.eval.seed, Some(&out))?;
            Ok(curve_outcome("sensitivity", &curve))
        }
        Command::Robustness { checkpoint, sigmas } => {
            let (config, ckpt, hash) = open_checkpoint(g, checkpoint)?;
            let sigmas = sigma_grid(sigmas, &config.eval.robustness_sigmas)?;
            let out = experiment_output(g, ExperimentKind::Robustness, ParameterGrid::Sigmas(sigmas.clone()), Some(checkpoint), &config, &hash)?;
            let test = TrainingData::open_test(&config)?;
            let curve = experiments::run_robustness(&ckpt.state.nets, &test, &sigmas, config.eval.repeats, config.eval.seed, Some(&out))?;
            Ok(curve_outcome("robustness", &curve))
        }
        Command::Positions { checkpoint, grid } => {
            let (config, ckpt, hash) = open_checkpoint(g, checkpoint)?;
            let placements = position_grid(config.model.image_size, config.data.message_size, *grid)?;
            let out = experiment_output(g, ExperimentKind::PositionSweep, ParameterGrid::Placements(placements.clone()), Some(checkpoint), &config, &hash)?;
            let test = TrainingData::open_test(&config)?;
            let sweep = experiments::run_position_sweep(&ckpt.state.nets, &test, &placements, config.eval.repeats, config.eval.seed, Some(&out))?;
            let mut summary = format!("PSNR std across {} placements: {:.3} dB", sweep.rows.len(), sweep.psnr_std);
            for r in &sweep.rows {
                summary.push_str(&format!("\n({:>3},{:>3}) {:.2} dB", r.top, r.left, r.mean_message_psnr));
            }
            Ok(Outcome::ok(summary, json!({"command": "positions", "rows": sweep.rows, "psnr_std": sweep.psnr_std})))
        }
        Command::Activations { checkpoint } => {
            let (config, ckpt, hash) = open_checkpoint(g, checkpoint)?;
            let out = experiment_output(g, ExperimentKind::Activations, ParameterGrid::None, Some(checkpoint), &config, &hash)?;
            let test = TrainingData::open_test(&config)?;
            let trial = sample_trials(&test, 1, 0, config.eval.seed)?.remove(0);
            let report = experiments::visualize_activations(&ckpt.state.nets, &test, &trial, Some(&out))?;
            Ok(Outcome::ok(
                format!(
                    "montage {} ({} panels); decoder late/early message energy {:.3}",
                    out.figure("activations").display(),
                    report.panels.len(),
                    report.decoder_late_early_ratio
                ),
                json!({"command": "activations", "panels": report.panels,
                       "decoder_late_early_ratio": report.decoder_late_early_ratio}),
            ))
        }
        Command::Wrongkeys { checkpoint, n_keys } => {
            let (config, ckpt, hash) = open_checkpoint(g, checkpoint)?;
            let out = experiment_output(g, ExperimentKind::WrongKey, ParameterGrid::Count(*n_keys), Some(checkpoint), &config, &hash)?;
            let test = TrainingData::open_test(&config)?;
            let gallery = experiments::run_wrong_key_gallery(&ckpt.state.nets, &test, *n_keys, config.eval.seed, Some(&out))?;
            let mut summary = String::from("key        correct  message_psnr  cover_psnr");
            for e in &gallery.entries {
                summary.push_str(&format!("\n{:<10} {:<7}  {:12.2}  {:10.2}", e.key, e.correct, e.message_psnr, e.cover_psnr));
            }
            Ok(Outcome::ok(summary, json!({"command": "wrongkeys", "entries": gallery.entries})))
        }
    }
}

fn curve_outcome(command: &str, curve: &experiments::NoiseCurve) -> Outcome {
    let mut summary = format!(
        "{}: Spearman rho {:.3} (p = {:.2e})",
        curve.mode.as_str(),
        curve.spearman_rho,
        curve.spearman_p
    );
    for (s, p) in &curve.mean_psnr {
        summary.push_str(&format!("\nsigma {s:<6} {p:.2} dB"));
    }
    Outcome::ok(
        summary,
        json!({"command": command, "mode": curve.mode, "mean_psnr": curve.mean_psnr,
               "spearman_rho": curve.spearman_rho, "spearman_p": curve.spearman_p}),
    )
}
