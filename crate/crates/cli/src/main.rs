use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hegwas::ckks::CkksParams;
use hegwas::oracle::synth_dataset;
use hegwas_cli::audit::FileAudit;
use hegwas_cli::commands::{
    cmd_compare, cmd_compute, cmd_decrypt, cmd_encrypt, cmd_keygen, cmd_preprocess, cmd_run_all, ComputeOptions,
    EncryptOptions, RunAllOptions,
};
use hegwas_cli::input::{write_synthetic, InputPaths};
use hegwas_cli::{CliError, Result};

#[derive(Parser)]
#[command(name = "hegwas", version, about = "Semi-parallel GWAS over CKKS-encrypted data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct ParamArgs {
    #[arg(long, default_value_t = 13)]
    log_n: u32,
    #[arg(long, default_value_t = 1600)]
    log_l: u32,
    #[arg(long, default_value_t = 45)]
    log_p: u32,
    #[arg(long, default_value_t = 30)]
    log_p_small: u32,
}

impl ParamArgs {
    fn params(self) -> Result<CkksParams> {
        Ok(CkksParams::new(self.log_n, self.log_l, self.log_p, self.log_p_small)?)
    }
}

#[derive(Args, Clone)]
struct InputArgs {
    #[arg(long)]
    covariates: PathBuf,
    #[arg(long)]
    pheno: PathBuf,
    #[arg(long)]
    snps: PathBuf,
}

impl InputArgs {
    fn paths(&self) -> InputPaths {
        InputPaths {
            covariates: self.covariates.clone(),
            pheno: self.pheno.clone(),
            snps: self.snps.clone(),
        }
    }
}

#[derive(Args, Clone, Copy)]
struct EncryptArgs {
    /// Logistic-regression iterations.
    #[arg(long, default_value_t = 3)]
    kappa: usize,
    /// SNPs per batch (default: the widest that fits).
    #[arg(long)]
    tau: Option<usize>,
    /// One SNP per slot instead of a real/imaginary pair.
    #[arg(long)]
    real_only: bool,
}

#[derive(Args, Clone)]
struct ComputeArgs {
    /// Maximum resident ciphertexts in the batch cache.
    #[arg(long)]
    cache_capacity: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

impl ComputeArgs {
    fn options(&self) -> ComputeOptions {
        ComputeOptions {
            cache_capacity: self.cache_capacity,
            cache_dir: self.cache_dir.clone(),
            threads: self.threads,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Synth {
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 256)]
        k: usize,
        #[arg(long, default_value_t = 0.05)]
        effect_fraction: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate secret, public, evaluation and rotation keys.
    Keygen {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Preprocess the CSV inputs and encrypt them with the public key.
    Encrypt {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        keys: PathBuf,
        #[command(flatten)]
        enc: EncryptArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the encrypted pipeline. Needs only public material.
    Compute {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        keys: PathBuf,
        #[command(flatten)]
        compute: ComputeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt the compute outputs into results.tsv.
    Decrypt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// All phases plus an accuracy report against the cleartext reference.
    RunAll {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        enc: EncryptArgs,
        #[command(flatten)]
        compute: ComputeArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare one column of two results files.
    Compare {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "beta")]
        column: String,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.01, 0.005])]
        thresholds: Vec<f64>,
        /// Write (reference, test) pairs here.
        #[arg(long)]
        scatter: Option<PathBuf>,
    },
}

fn encrypt_options(a: EncryptArgs, seed: u64) -> EncryptOptions {
    EncryptOptions {
        kappa: a.kappa,
        tau: a.tau,
        complex_packing: !a.real_only,
        seed,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            n,
            d,
            k,
            effect_fraction,
            seed,
            out,
        } => {
            if n < 2 || k == 0 {
                return Err(CliError::Input("need n >= 2 and k >= 1".into()));
            }
            let data = synth_dataset(n, d, k, seed, effect_fraction);
            let paths = write_synthetic(&out, &data)?;
            println!("wrote {}, {}, {}", paths.covariates.display(), paths.pheno.display(), paths.snps.display());
        }
        Command::Keygen { params, seed, out } => {
            let rec = cmd_keygen(params.params()?, seed, &out)?;
            println!("keys written to {} in {:.1}s", out.display(), rec.seconds);
        }
        Command::Encrypt {
            input,
            keys,
            enc,
            seed,
            out,
        } => {
            let (pre, p) = cmd_preprocess(&input.paths())?;
            let (cfg, e) = cmd_encrypt(&pre, &keys, &out, &encrypt_options(enc, seed))?;
            println!(
                "n = {}, d = {}, k = {}, tau = {}, {} batches; preprocess {:.1}s, encrypt {:.1}s",
                cfg.n,
                cfg.d,
                cfg.k,
                cfg.tau,
                cfg.batches(),
                p.seconds,
                e.seconds
            );
        }
        Command::Compute {
            input,
            keys,
            compute,
            out,
        } => {
            let audit = FileAudit::new();
            let r = cmd_compute(&input, &keys, &out, &compute.options(), &audit)?;
            println!(
                "compute {:.1}s (prepare {:.1}s, batches {:.1}s); depth {} ct / {} pt rescales; cache {:?}",
                r.phase.seconds, r.prepare_seconds, r.batch_seconds, r.depth.ct, r.depth.pt, r.cache
            );
        }
        Command::Decrypt { input, keys, out } => {
            let (res, _, rec) = cmd_decrypt(&input, &keys, &out)?;
            println!(
                "{} SNPs decrypted in {:.1}s, {} flagged",
                res.len(),
                rec.seconds,
                res.flagged().len()
            );
        }
        Command::RunAll {
            input,
            params,
            enc,
            compute,
            seed,
            out,
        } => {
            let opts = RunAllOptions {
                params: params.params()?,
                seed,
                encrypt: encrypt_options(enc, seed),
                compute: compute.options(),
            };
            let outcome = cmd_run_all(&input.paths(), &out, &opts)?;
            print!("{}", outcome.manifest.timing_table());
            println!("{}", outcome.accuracy.summary());
        }
        Command::Compare {
            reference,
            test,
            column,
            thresholds,
            scatter,
        } => {
            let r = cmd_compare(&reference, &test, &column, &thresholds, scatter.as_deref())?;
            println!("{}", r.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
