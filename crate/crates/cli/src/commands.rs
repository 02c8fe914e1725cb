//! The pipeline phases as separate commands. Each reads and writes a
//! directory so the client (keygen, encrypt, decrypt) and the server
//! (compute) can run on different machines.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use hegwas::cache::{CacheConfig, CacheCounters, CiphertextCache};
use hegwas::ckks::security::{classify, SecurityLevel};
use hegwas::ckks::serialize::{
    load, read_ciphertext, read_evaluation_key, read_public_key, read_rotation_keys, read_secret_key, save,
    write_ciphertext, write_evaluation_key, write_public_key, write_rotation_keys, write_secret_key,
};
use hegwas::ckks::{
    Ciphertext, CkksContext, CkksParams, Depth, Evaluator, PublicKey, RotationDirection, RotationKeySet, SecretKey,
};
use hegwas::gwas::{
    batch_operands, decrypt_outputs, encrypt_inputs, pack_batches, prepare, process_batches, BatchOutput, CachedBatch,
    GwasConfig, GwasInputs, GwasResult, SnpBatch,
};
use hegwas::logreg::LogRegInputs;
use hegwas::matrix::{load_packed, save_packed, CpMatrix, MatrixEvaluator, PackedMatrix, RepMatrix};
use hegwas::oracle::{
    compare, oracle_gwas_original, oracle_logreg_approx, oracle_pipeline, AccuracyReport, CleartextDataset,
};

use crate::audit::FileAudit;
use crate::error::{CliError, Result};
use crate::input::{preprocess, read_inputs, InputPaths, Preprocessed};
use crate::manifest::{ops_table, PhaseRecord, PhaseTimer, RunManifest};

pub const SECRET_KEY: &str = "secret.key";
const PARAMS: &str = "params.json";
const PUBLIC_KEY: &str = "public.key";
const EVAL_KEY: &str = "evaluation.key";
const ROTATION_KEYS: &str = "rotation.keys";
const JOB: &str = "job.json";
const OUTPUTS: &str = "outputs.json";
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.1, 0.01, 0.005];

/// Encryption-side settings.
#[derive(Debug, Clone, Copy)]
pub struct EncryptOptions {
    pub kappa: usize,
    /// SNPs per batch; `None` picks the widest batch that fits.
    pub tau: Option<usize>,
    pub complex_packing: bool,
    pub seed: u64,
}

impl Default for EncryptOptions {
    fn default() -> Self {
        Self {
            kappa: 3,
            tau: None,
            complex_packing: true,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ComputeOptions {
    /// Resident ciphertext bound; `None` sizes it for double buffering.
    pub cache_capacity: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Job {
    params: CkksParams,
    config: GwasConfig,
    snp_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OutputMeta {
    index: usize,
    snp_count: usize,
    complex: bool,
}

/// What the compute phase reports besides its phase record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComputeReport {
    pub phase: PhaseRecord,
    pub prepare_seconds: f64,
    pub batch_seconds: f64,
    pub final_level_bits: u32,
    pub depth: Depth,
    pub cache: CacheCounters,
    pub cache_capacity: usize,
    pub files_read: Vec<PathBuf>,
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Input(format!("malformed JSON: {e}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T, audit: &FileAudit) -> Result<()> {
    audit.write(path);
    let s = serde_json::to_string_pretty(value).map_err(json_err)?;
    std::fs::write(path, s).map_err(CliError::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, audit: &FileAudit) -> Result<T> {
    audit.read(path);
    let s = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&s).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn load_ct(path: &Path, audit: &FileAudit) -> Result<Ciphertext> {
    audit.read(path);
    Ok(load(path, |r| read_ciphertext(r))?)
}

fn save_ct(path: &Path, ct: &Ciphertext, audit: &FileAudit) -> Result<()> {
    audit.write(path);
    Ok(save(path, ct, |w, c| write_ciphertext(w, c))?)
}

fn load_matrix(dir: &Path, name: &str, audit: &FileAudit) -> Result<PackedMatrix> {
    audit.read(&dir.join(format!("{name}.json")));
    let m = load_packed(dir, name)?;
    let count = match &m {
        PackedMatrix::Cp(m) => m.cols.len(),
        PackedMatrix::Ccp(_) => 1,
        PackedMatrix::Rp(m) => m.rows_ct.len(),
        PackedMatrix::Rep(m) => m.rows_ct.len(),
    };
    for i in 0..count {
        audit.read(&dir.join(format!("{name}.{i}.ct")));
    }
    Ok(m)
}

fn expect_cp(m: PackedMatrix, name: &str) -> Result<CpMatrix> {
    match m {
        PackedMatrix::Cp(m) => Ok(m),
        _ => Err(CliError::Input(format!("{name} is not column-packed"))),
    }
}

fn expect_rep(m: PackedMatrix, name: &str) -> Result<RepMatrix> {
    match m {
        PackedMatrix::Rep(m) => Ok(m),
        _ => Err(CliError::Input(format!("{name} is not row-expanded"))),
    }
}

pub fn read_params(keys: &Path, audit: &FileAudit) -> Result<CkksParams> {
    let p: CkksParams = read_json(&keys.join(PARAMS), audit)?;
    p.validate()?;
    Ok(p)
}

pub fn cmd_keygen(params: CkksParams, seed: u64, out: &Path) -> Result<PhaseRecord> {
    let timer = PhaseTimer::start("context");
    params.validate_for_keygen()?;
    match classify(params.log_n, params.log_l) {
        SecurityLevel::Accepted => {}
        SecurityLevel::Warn(msg) => log::warn!("parameters log_n = {}, log_l = {}: {msg}", params.log_n, params.log_l),
        SecurityLevel::Unknown => log::warn!("no security classification for log_n = {}", params.log_n),
    }
    create_dir(out)?;
    let audit = FileAudit::new();
    let ctx = CkksContext::new(params)?;
    let keys = ctx.keygen(seed)?;
    write_json(&out.join(PARAMS), &params, &audit)?;
    save(&out.join(SECRET_KEY), &keys.secret, |w, k| write_secret_key(w, k))?;
    save(&out.join(PUBLIC_KEY), &keys.public, |w, k| write_public_key(w, k))?;
    save(&out.join(EVAL_KEY), &keys.evaluation, |w, k| write_evaluation_key(w, k))?;
    save(&out.join(ROTATION_KEYS), &keys.rotation, |w, k| write_rotation_keys(w, k))?;
    Ok(timer.finish())
}

fn load_public_key(keys: &Path) -> Result<PublicKey> {
    Ok(load(&keys.join(PUBLIC_KEY), |r| read_public_key(r))?)
}

pub fn load_secret_key(keys: &Path) -> Result<SecretKey> {
    Ok(load(&keys.join(SECRET_KEY), |r| read_secret_key(r))?)
}

/// Reads and preprocesses the CSV inputs.
pub fn cmd_preprocess(inputs: &InputPaths) -> Result<(Preprocessed, PhaseRecord)> {
    let timer = PhaseTimer::start("preprocess");
    let raw = read_inputs(inputs)?;
    let pre = preprocess(&raw)?;
    Ok((pre, timer.finish()))
}

pub fn gwas_config(pre: &Preprocessed, slots: usize, opts: &EncryptOptions) -> Result<GwasConfig> {
    let (n, d1) = pre.x.shape();
    let mut cfg = GwasConfig::new(n, d1 - 1, pre.s.ncols(), slots);
    cfg.kappa = opts.kappa;
    cfg.complex_packing = opts.complex_packing;
    cfg.tau = opts
        .tau
        .unwrap_or_else(|| GwasConfig::max_tau(n, slots, opts.complex_packing));
    cfg.validate(slots)?;
    Ok(cfg)
}

/// Encrypts preprocessed data with the public key in `keys`.
pub fn cmd_encrypt(pre: &Preprocessed, keys: &Path, out: &Path, opts: &EncryptOptions) -> Result<(GwasConfig, PhaseRecord)> {
    let timer = PhaseTimer::start("encrypt");
    let audit = FileAudit::new();
    let params = read_params(keys, &audit)?;
    let ctx = CkksContext::new(params)?;
    let cfg = gwas_config(pre, ctx.slots(), opts)?;
    let pk = load_public_key(keys)?;
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed ^ 0x656e_6372_7970_7400);
    create_dir(out)?;
    let inputs = encrypt_inputs(&ctx, &pk, &pre.x, &pre.xtx_inv, pre.y.as_slice(), &mut rng)?;
    save_packed(out, "x", &PackedMatrix::Cp(inputs.logreg.x))?;
    save_packed(out, "xtx_inv", &PackedMatrix::Cp(inputs.logreg.xtx_inv))?;
    save_packed(out, "xt", &PackedMatrix::Rep(inputs.xt_rep))?;
    save_ct(&out.join("y.ct"), &inputs.logreg.y, &audit)?;
    save_ct(&out.join("beta0.ct"), &inputs.logreg.beta0, &audit)?;
    for batch in pack_batches(&ctx, &pk, &pre.s, &cfg, &mut rng)? {
        save_packed(out, &format!("snps.{}", batch.index), &PackedMatrix::Rep(batch.packed))?;
    }
    write_json(
        &out.join(JOB),
        &Job {
            params,
            config: cfg,
            snp_ids: pre.snp_ids.clone(),
        },
        &audit,
    )?;
    Ok((cfg, timer.finish()))
}

/// Every rotation the pipeline may issue: powers of two both ways, plus
/// conjugation.
pub fn check_rotation_keys(slots: usize, keys: &RotationKeySet) -> Result<()> {
    let mut missing = Vec::new();
    let mut amt = 1;
    while amt < slots {
        for (dir, tag) in [(RotationDirection::Right, "right"), (RotationDirection::Left, "left")] {
            if keys.get(dir, amt).is_none() {
                missing.push(format!("{tag} {amt}"));
            }
        }
        amt <<= 1;
    }
    if keys.conjugation().is_none() {
        missing.push("conjugation".into());
    }
    if missing.is_empty() {
        return Ok(());
    }
    Err(CliError::Keys(format!(
        "rotation key set is incomplete; compute needs right and left rotations by every power of two below {slots} \
         plus a conjugation key. Missing: {}. Regenerate keys with `hegwas keygen`.",
        missing.join(", ")
    )))
}

/// Server side: never opens the secret key.
pub fn cmd_compute(enc: &Path, keys: &Path, out: &Path, opts: &ComputeOptions, audit: &FileAudit) -> Result<ComputeReport> {
    let timer = PhaseTimer::start("compute");
    let job: Job = read_json(&enc.join(JOB), audit)?;
    let key_params = read_params(keys, audit)?;
    if key_params != job.params {
        return Err(CliError::Keys(
            "keys were generated with different parameters than the encrypted data".into(),
        ));
    }
    let cfg = job.config;
    let ctx = CkksContext::new(job.params)?;
    let evk_path = keys.join(EVAL_KEY);
    audit.read(&evk_path);
    let evk = load(&evk_path, |r| read_evaluation_key(r))?;
    let rot_path = keys.join(ROTATION_KEYS);
    audit.read(&rot_path);
    let rot = load(&rot_path, |r| read_rotation_keys(r))?;
    check_rotation_keys(ctx.slots(), &rot)?;
    let mev = MatrixEvaluator::new(Evaluator::new(ctx.clone(), Arc::new(evk), Arc::new(rot)));

    let inputs = GwasInputs {
        logreg: LogRegInputs {
            x: expect_cp(load_matrix(enc, "x", audit)?, "x")?,
            xtx_inv: expect_cp(load_matrix(enc, "xtx_inv", audit)?, "xtx_inv")?,
            y: load_ct(&enc.join("y.ct"), audit)?,
            beta0: load_ct(&enc.join("beta0.ct"), audit)?,
        },
        xt_rep: expect_rep(load_matrix(enc, "xt", audit)?, "xt")?,
    };

    let t = Instant::now();
    let inter = prepare(&mev, &inputs, &cfg)?;
    let ops = batch_operands(&mev, &inter, cfg.complex_packing)?;
    let prepare_seconds = t.elapsed().as_secs_f64();
    drop(inputs);

    let threads = opts.threads.max(1);
    let readers = 2;
    let capacity = opts
        .cache_capacity
        .unwrap_or((threads + 1) * cfg.n + readers + 2);
    create_dir(out)?;
    let cache_dir = opts.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
    let cache = CiphertextCache::new(CacheConfig::new(capacity, &cache_dir))?;
    let mut cached = Vec::with_capacity(cfg.batches());
    for b in 0..cfg.batches() {
        let packed = expect_rep(load_matrix(enc, &format!("snps.{b}"), audit)?, "snps")?;
        let batch = SnpBatch {
            index: b,
            snp_count: cfg.tau.min(cfg.k - b * cfg.tau),
            complex: cfg.complex_packing,
            packed,
        };
        cached.push(CachedBatch::store(&cache, batch)?);
    }
    let t = Instant::now();
    let outputs = process_batches(&mev, &ops, &cache, &cached, threads)?;
    let batch_seconds = t.elapsed().as_secs_f64();
    let counters = cache.counters();
    drop(cache);
    if opts.cache_dir.is_none() {
        let _ = std::fs::remove_dir_all(&cache_dir);
    } else {
        // spill files go with their entries; only the index is left
        let _ = std::fs::remove_file(cache_dir.join("manifest.tsv"));
    }

    let mut meta = Vec::with_capacity(outputs.len());
    let mut depth = Depth::default();
    let mut level = u32::MAX;
    for o in &outputs {
        save_ct(&out.join(format!("batch.{}.num.ct", o.index)), &o.numerator, audit)?;
        save_ct(&out.join(format!("batch.{}.den.ct", o.index)), &o.denominator, audit)?;
        if let Some(odd) = &o.denominator_odd {
            save_ct(&out.join(format!("batch.{}.den_odd.ct", o.index)), odd, audit)?;
        }
        depth = depth.max(o.depth());
        level = level.min(o.numerator.level_bits());
        meta.push(OutputMeta {
            index: o.index,
            snp_count: o.snp_count,
            complex: o.complex,
        });
    }
    save_ct(&out.join("z_prime.ct"), &inter.z_prime, audit)?;
    write_json(&out.join(OUTPUTS), &meta, audit)?;
    write_json(&out.join(JOB), &job, audit)?;

    let mut phase = timer.finish();
    phase.ops = Some(mev.stats().snapshot());
    phase.depth = Some(depth);
    let report = ComputeReport {
        phase,
        prepare_seconds,
        batch_seconds,
        final_level_bits: if level == u32::MAX { 0 } else { level },
        depth,
        cache: counters,
        cache_capacity: capacity,
        files_read: audit.log().reads,
    };
    write_json(&out.join("compute.json"), &report, audit)?;
    Ok(report)
}

/// Client side: decrypts the compute outputs and writes `results.tsv`.
pub fn cmd_decrypt(computed: &Path, keys: &Path, out: &Path) -> Result<(GwasResult, Vec<String>, PhaseRecord)> {
    let timer = PhaseTimer::start("decrypt");
    let audit = FileAudit::new();
    let job: Job = read_json(&computed.join(JOB), &audit)?;
    let meta: Vec<OutputMeta> = read_json(&computed.join(OUTPUTS), &audit)?;
    let ctx = CkksContext::new(job.params)?;
    let sk = load_secret_key(keys)?;
    let outputs = meta
        .iter()
        .map(|m| {
            let num = load_ct(&computed.join(format!("batch.{}.num.ct", m.index)), &audit)?;
            let den = load_ct(&computed.join(format!("batch.{}.den.ct", m.index)), &audit)?;
            let odd = if m.complex {
                Some(load_ct(&computed.join(format!("batch.{}.den_odd.ct", m.index)), &audit)?)
            } else {
                None
            };
            Ok(BatchOutput {
                index: m.index,
                snp_count: m.snp_count,
                complex: m.complex,
                numerator: num,
                denominator: den,
                denominator_odd: odd,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let result = decrypt_outputs(&ctx, &sk, &job.config, &outputs)?;
    create_dir(out)?;
    let path = out.join("results.tsv");
    std::fs::write(&path, results_tsv(&job.snp_ids, &result)).map_err(CliError::io(&path))?;
    let flagged = result.flagged();
    if !flagged.is_empty() {
        log::warn!("{} SNPs have denominators at the noise floor and were left as NaN", flagged.len());
    }
    Ok((result, job.snp_ids, timer.finish()))
}

pub fn results_tsv(ids: &[String], r: &GwasResult) -> String {
    let mut s = String::from("snp_id\tnumerator\tdenominator\tbeta\tstderr\tpvalue\n");
    for i in 0..r.len() {
        s.push_str(&format!(
            "{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\n",
            ids[i], r.numerator[i], r.denominator[i], r.effects[i], r.std_err[i], r.p_values[i]
        ));
    }
    s
}

/// Reads one named column of a results TSV.
pub fn read_results_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    let idx = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CliError::Input(format!("{}: no column `{column}`", path.display())))?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let v = &rec[idx];
            v.parse::<f64>().map_err(|_| CliError::Csv {
                path: path.to_path_buf(),
                line,
                msg: format!("`{v}` is not a number"),
            })
        })
        .collect()
}

pub fn cmd_compare(
    reference: &Path,
    test: &Path,
    column: &str,
    thresholds: &[f64],
    scatter: Option<&Path>,
) -> Result<AccuracyReport> {
    let a = read_results_column(reference, column)?;
    let b = read_results_column(test, column)?;
    let report = compare(&a, &b, thresholds)?;
    if let Some(p) = scatter {
        std::fs::write(p, report.to_tsv()).map_err(CliError::io(p))?;
    }
    Ok(report)
}

/// Cleartext references for a finished run: the same modified algorithm
/// without encryption, and the original weighted projection.
pub fn reference_results(pre: &Preprocessed, cfg: &GwasConfig) -> Result<(GwasResult, GwasResult)> {
    let ds = CleartextDataset {
        x: pre.x.clone(),
        s: pre.s.clone(),
        y: pre.y.clone(),
    };
    let modified = oracle_pipeline(&ds, cfg.kappa, cfg.inverse_iters, cfg.inverse_guess)?;
    let fit = oracle_logreg_approx(&ds.x, &ds.y, cfg.kappa)?;
    let original = oracle_gwas_original(&ds, fit.beta(), &fit.p_prev)?;
    let conv = |g: hegwas::oracle::GwasStats| GwasResult::assemble(g.numerator, g.denominator);
    Ok((conv(modified), conv(original)))
}

#[derive(Debug, Clone)]
pub struct RunAllOptions {
    pub params: CkksParams,
    pub seed: u64,
    pub encrypt: EncryptOptions,
    pub compute: ComputeOptions,
}

#[derive(Debug, Clone)]
pub struct RunAllOutcome {
    pub manifest: RunManifest,
    pub result: GwasResult,
    pub accuracy: AccuracyReport,
    pub compute: ComputeReport,
}

/// Runs all five phases under `out`, always leaving `manifest.json` behind.
pub fn cmd_run_all(inputs: &InputPaths, out: &Path, opts: &RunAllOptions) -> Result<RunAllOutcome> {
    create_dir(out)?;
    let mut manifest = RunManifest {
        params: opts.params,
        config: None,
        inputs: inputs.clone(),
        output_dir: out.to_path_buf(),
        seed: opts.seed,
        phases: Vec::new(),
    };
    let res = run_phases(inputs, out, opts, &mut manifest);
    manifest.complete();
    manifest.write(&out.join("manifest.json"))?;
    std::fs::write(out.join("timing.tsv"), manifest.timing_table()).map_err(CliError::io(out.join("timing.tsv")))?;
    let (result, accuracy, compute) = res?;
    Ok(RunAllOutcome {
        manifest,
        result,
        accuracy,
        compute,
    })
}

fn run_phases(
    inputs: &InputPaths,
    out: &Path,
    opts: &RunAllOptions,
    manifest: &mut RunManifest,
) -> Result<(GwasResult, AccuracyReport, ComputeReport)> {
    macro_rules! phase {
        ($name:literal, $body:expr) => {{
            let timer = PhaseTimer::start($name);
            match $body {
                Ok(v) => v,
                Err(e) => {
                    manifest.phases.push(timer.fail(&e));
                    return Err(e);
                }
            }
        }};
    }
    let (pre, rec) = phase!("preprocess", cmd_preprocess(inputs));
    manifest.phases.push(rec);
    let keys = out.join("keys");
    let rec = phase!("context", cmd_keygen(opts.params, opts.seed, &keys));
    manifest.phases.push(rec);
    let enc = out.join("encrypted");
    let (cfg, rec) = phase!("encrypt", cmd_encrypt(&pre, &keys, &enc, &opts.encrypt));
    manifest.config = Some(cfg);
    manifest.phases.push(rec);
    let computed = out.join("computed");
    let audit = FileAudit::new();
    let report = phase!("compute", cmd_compute(&enc, &keys, &computed, &opts.compute, &audit));
    manifest.phases.push(report.phase.clone());
    let (result, ids, rec) = phase!("decrypt", cmd_decrypt(&computed, &keys, out));
    manifest.phases.push(rec);

    std::fs::write(out.join("ops.tsv"), ops_table(&manifest.phases)).map_err(CliError::io(out.join("ops.tsv")))?;
    let (modified, original) = reference_results(&pre, &cfg)?;
    std::fs::write(out.join("reference.tsv"), results_tsv(&ids, &modified))
        .map_err(CliError::io(out.join("reference.tsv")))?;
    let accuracy = compare(&modified.effects, &result.effects, &DEFAULT_THRESHOLDS)?;
    let p_acc = compare(&modified.p_values, &result.p_values, &DEFAULT_THRESHOLDS)?;
    let orig_acc = compare(&original.effects, &result.effects, &DEFAULT_THRESHOLDS)?;
    let text = format!(
        "effects against the cleartext modified algorithm\n{}\n\
         p-values against the cleartext modified algorithm\n{}\n\
         effects against the original weighted algorithm\n{}",
        accuracy.summary(),
        p_acc.summary(),
        orig_acc.summary()
    );
    std::fs::write(out.join("accuracy.txt"), text).map_err(CliError::io(out.join("accuracy.txt")))?;
    std::fs::write(out.join("scatter.tsv"), accuracy.to_tsv()).map_err(CliError::io(out.join("scatter.tsv")))?;
    Ok((result, accuracy, report))
}

/// Decrypts a ciphertext file with an arbitrary key, for diagnostics.
pub fn decrypt_file(ct_path: &Path, params: CkksParams, sk: &SecretKey, len: usize) -> Result<Vec<f64>> {
    let ctx = CkksContext::new(params)?;
    let ct = load(ct_path, |r| read_ciphertext(r))?;
    let mut v = ctx.decrypt_values(&ct, sk)?;
    v.truncate(len);
    Ok(v)
}

/// Standardized cleartext matrix helper for callers that bypass CSV input.
pub fn preprocessed_from(x: DMatrix<f64>, y: Vec<f64>, s: DMatrix<f64>) -> Result<Preprocessed> {
    let xtx_inv = hegwas::oracle::inverse_checked(&(x.transpose() * &x))?;
    let k = s.ncols();
    Ok(Preprocessed {
        x,
        y: nalgebra::DVector::from_vec(y),
        s,
        xtx_inv,
        snp_ids: (0..k).map(|j| format!("rs{j}")).collect(),
    })
}
