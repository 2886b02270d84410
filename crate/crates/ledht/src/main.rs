use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ledht::config::{derive_seed, purpose, RunConfig, TestKind};
use ledht::dht::{DhtPlan, PaddedPlan, Variant};
use ledht::eval::{compare_methods, Method};
use ledht::io;
use ledht::kk::{
    forward_model, kk_retrieve, linspace_widths, stability_sweep, CarsPair, KkBackend, KkResult, LedhtBank,
    SweepBackend,
};
use ledht::learn::{apply, fit_with, LedhtMatrix, Solver};
use ledht::lineshapes::Direction;
use ledht::props::run_property_suite;
use ledht::synth::{capacity, gen_multi_peak, gen_single_peak, AugmentedView, GenConfig, TrainingSet};
use ledht::{Error, Matrix, Result};

#[derive(Parser, Debug)]
#[command(name = "ledht", version, about = "Discrete and learned Hilbert transforms for spectra")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "LEDHT_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Bin)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Bin,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Backend {
    Dht,
    DhtPad,
    Ledht,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a paired corpus.
    Gen(GenArgs),
    /// Fit a learned transform.
    Train(TrainArgs),
    /// Apply a transform to stored spectra.
    Transform(TransformArgs),
    /// Compare DHT, padded DHT and a learned transform on a test set.
    Eval(EvalArgs),
    /// Recover the complex ratio from a CARS and NRB pair.
    Kk(KkArgs),
    /// Crop-width stability sweep of the retrieved phase.
    Sweep(SweepArgs),
    /// Check the structural identities of the DHT.
    Props(PropsArgs),
    /// Count of unique peaks an N-point grid admits.
    Capacity(CapacityArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, conflicts_with = "multi")]
    single: bool,
    #[arg(long)]
    multi: bool,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    width_min: Option<f64>,
    #[arg(long)]
    width_max: Option<f64>,
    #[arg(long)]
    direction: Option<Direction>,
    /// Draw with the test seed instead of the training seed.
    #[arg(long)]
    test: bool,
    /// Output file stem.
    #[arg(long, default_value = "corpus")]
    name: String,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Stored training set; generated from the config when absent.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// auto, normal_equations or orthogonal.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long, default_value = "matrix")]
    name: String,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Backend::Ledht)]
    backend: Backend,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    pad_len: Option<usize>,
    #[arg(long, default_value = "transformed")]
    name: String,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Stored test set; generated from the config when absent.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    pad_len: Option<usize>,
    #[arg(long, default_value = "report")]
    name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Single,
    Multi,
    Cross,
}

#[derive(Args, Debug)]
struct KkArgs {
    /// CSV with an optional axis row, then the CARS row, then the NRB row.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Use the forward model of the config instead of a file.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, value_enum, default_value_t = Backend::DhtPad)]
    backend: Backend,
    /// Learned matrix; trained from the config when absent.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    pad_len: Option<usize>,
    #[arg(long)]
    subtract_one: bool,
    #[arg(long, default_value = "kk")]
    name: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Skip training the per-width learned matrices.
    #[arg(long)]
    no_ledht: bool,
    #[arg(long, default_value = "sweep")]
    name: String,
}

#[derive(Args, Debug)]
struct PropsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    signals: usize,
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[arg(long)]
    n: u64,
    #[arg(long, default_value_t = 3)]
    samples_per_fwhm: u64,
}

struct Ctx {
    cfg: RunConfig,
    hash: String,
    out: PathBuf,
    format: Format,
}

impl Ctx {
    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn tag(&self) -> Value {
        json!({ "config_hash": self.hash })
    }

    /// Sidecar carrying the config for formats that cannot embed metadata.
    fn manifest(&self, stem: &str, extra: Value) -> Result<()> {
        io::write_json(
            &self.path(&format!("{stem}.manifest.json")),
            &json!({ "config_hash": self.hash, "config": self.cfg, "artifact": extra }),
        )
    }
}

fn parse_solver(s: &str) -> Result<Solver> {
    serde_json::from_value(json!(s)).map_err(|_| Error::InvalidConfig(format!("unknown solver {s:?}")))
}

fn write_training_set(ctx: &Ctx, stem: &str, set: &TrainingSet) -> Result<Vec<PathBuf>> {
    match ctx.format {
        Format::Bin => {
            let p = ctx.path(&format!("{stem}.ldht"));
            io::save_training_set_with(&p, set, &ctx.tag())?;
            Ok(vec![p])
        }
        Format::Csv => {
            let pi = ctx.path(&format!("{stem}_inputs.csv"));
            let pt = ctx.path(&format!("{stem}_targets.csv"));
            io::write_spectra_csv(&pi, &set.inputs, None)?;
            io::write_spectra_csv(&pt, &set.targets, None)?;
            ctx.manifest(stem, json!({ "provenance": set.provenance, "params": set.params }))?;
            Ok(vec![pi, pt])
        }
        Format::Json => {
            let p = ctx.path(&format!("{stem}.json"));
            io::write_json(
                &p,
                &json!({
                    "config_hash": ctx.hash,
                    "inputs": rows_of(&set.inputs),
                    "targets": rows_of(&set.targets),
                    "params": set.params,
                    "provenance": set.provenance,
                }),
            )?;
            Ok(vec![p])
        }
    }
}

fn rows_of(m: &Matrix) -> Vec<&[f64]> {
    m.iter_rows().collect()
}

fn write_spectra(ctx: &Ctx, stem: &str, data: &Matrix, meta: Value) -> Result<PathBuf> {
    match ctx.format {
        Format::Bin => {
            let p = ctx.path(&format!("{stem}.ldht"));
            let mut meta = meta;
            meta["config_hash"] = json!(ctx.hash);
            io::save_spectra(&p, data, &meta)?;
            Ok(p)
        }
        Format::Csv => {
            let p = ctx.path(&format!("{stem}.csv"));
            io::write_spectra_csv(&p, data, None)?;
            ctx.manifest(stem, meta)?;
            Ok(p)
        }
        Format::Json => {
            let p = ctx.path(&format!("{stem}.json"));
            io::write_json(&p, &json!({ "config_hash": ctx.hash, "meta": meta, "spectra": rows_of(data) }))?;
            Ok(p)
        }
    }
}

/// Loads spectra from a container or a CSV file, by extension.
fn read_spectra(path: &Path) -> Result<(Matrix, Option<Vec<f64>>)> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        io::read_spectra_csv(path)
    } else {
        Ok((io::load_spectra(path)?, None))
    }
}

fn gen_config(ctx: &Ctx, a: &GenArgs, seed: u64) -> GenConfig {
    let mut g = ctx.cfg.gen.to_config(seed);
    if a.multi {
        g.width_min = ctx.cfg.multi.width_min;
        g.width_max = ctx.cfg.multi.width_max;
        g.count = ctx.cfg.multi.count;
    }
    if let Some(v) = a.count {
        g.count = v;
    }
    if let Some(v) = a.n {
        g.n_len = v;
    }
    if let Some(v) = a.width_min {
        g.width_min = v;
    }
    if let Some(v) = a.width_max {
        g.width_max = v;
    }
    if let Some(v) = a.direction {
        g.direction = v;
    }
    g
}

fn multi_set(ctx: &Ctx, g: &GenConfig, seed: u64) -> Result<TrainingSet> {
    let m = &ctx.cfg.multi;
    gen_multi_peak(g, m.peaks_min, m.peaks_max, (m.amp_min, m.amp_max), seed)
}

fn cmd_gen(ctx: &Ctx, a: &GenArgs) -> Result<Value> {
    let seed = if a.test { ctx.cfg.test_seed() } else { derive_seed(ctx.cfg.seed, purpose::TRAIN) };
    let g = gen_config(ctx, a, seed);
    let set = if a.multi { multi_set(ctx, &g, seed)? } else { gen_single_peak(&g)? };
    let files = write_training_set(ctx, &a.name, &set)?;
    Ok(json!({ "rows": set.len(), "n_len": set.n_len(), "files": files }))
}

fn cmd_train(ctx: &Ctx, a: &TrainArgs) -> Result<Value> {
    let base = match &a.corpus {
        Some(p) => io::load_training_set(p)?,
        None => {
            let mut g = ctx.cfg.train_config();
            if let Some(v) = a.count {
                g.count = v;
            }
            if let Some(v) = a.n {
                g.n_len = v;
            }
            gen_single_peak(&g)?
        }
    };
    let mut fit = ctx.cfg.fit.clone();
    if let Some(s) = &a.solver {
        fit.solver = parse_solver(s)?;
    }
    if let Some(l) = a.ridge {
        fit.ridge_lambda = l;
    }
    let view = AugmentedView::new(&base, ctx.cfg.augment_config())?;
    let (mut m, summary) = fit_with(&view, &fit)?;
    m.meta.config_hash = Some(ctx.hash.clone());
    for w in &summary.warnings {
        log::warn!("{w}");
    }
    let file = match ctx.format {
        Format::Bin => {
            let p = ctx.path(&format!("{}.ldht", a.name));
            io::save_matrix(&p, &m)?;
            p
        }
        Format::Csv => {
            let p = ctx.path(&format!("{}.csv", a.name));
            io::write_spectra_csv(&p, m.h(), None)?;
            ctx.manifest(&a.name, json!({ "meta": m.meta, "bias": m.bias() }))?;
            p
        }
        Format::Json => {
            let p = ctx.path(&format!("{}.json", a.name));
            io::write_json(&p, &json!({ "meta": m.meta, "bias": m.bias(), "h": rows_of(m.h()) }))?;
            p
        }
    };
    Ok(json!({ "file": file, "summary": summary }))
}

fn load_matrix_any(path: &Path) -> Result<LedhtMatrix> {
    io::load_matrix(path)
}

fn cmd_transform(ctx: &Ctx, a: &TransformArgs) -> Result<Value> {
    let (data, _) = read_spectra(&a.input)?;
    let n = data.cols();
    let out = match a.backend {
        Backend::Ledht => {
            let path = a
                .matrix
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("--matrix is required for the ledht backend".into()))?;
            apply(&load_matrix_any(path)?, &data)?
        }
        Backend::Dht | Backend::DhtPad => {
            let mut out = Matrix::zeros(data.rows(), n);
            let plan = DhtPlan::new(n);
            let padded = PaddedPlan::new(n, a.pad_len.unwrap_or_else(|| ctx.cfg.pad_len(n)));
            for (i, row) in data.iter_rows().enumerate() {
                let y = if a.backend == Backend::Dht { plan.dht(row, Variant::Marple)? } else { padded.apply(row)? };
                out.row_mut(i).copy_from_slice(&y);
            }
            out
        }
    };
    let meta = json!({ "object": "transformed", "backend": format!("{:?}", a.backend).to_lowercase() });
    let file = write_spectra(ctx, &a.name, &out, meta)?;
    Ok(json!({ "rows": out.rows(), "file": file }))
}

fn test_set(ctx: &Ctx, n_len: usize, kind: TestKind, count: Option<usize>) -> Result<TrainingSet> {
    let seed = ctx.cfg.test_seed();
    let mut g = ctx.cfg.gen.to_config(seed);
    g.n_len = n_len;
    g.count = count.unwrap_or(ctx.cfg.eval.test_count);
    match kind {
        TestKind::Single => gen_single_peak(&g),
        TestKind::Cross => {
            g.direction = ctx.cfg.eval.cross_direction;
            gen_single_peak(&g)
        }
        TestKind::Multi => {
            g.width_min = ctx.cfg.multi.width_min;
            g.width_max = ctx.cfg.multi.width_max;
            g.count = count.unwrap_or(ctx.cfg.multi.count);
            multi_set(ctx, &g, seed)
        }
    }
}

fn cmd_eval(ctx: &Ctx, a: &EvalArgs) -> Result<Value> {
    let m = load_matrix_any(&a.matrix)?;
    let kind = match a.kind {
        Some(KindArg::Single) => TestKind::Single,
        Some(KindArg::Multi) => TestKind::Multi,
        Some(KindArg::Cross) => TestKind::Cross,
        None => ctx.cfg.eval.kind,
    };
    let test = match &a.test {
        Some(p) => io::load_training_set(p)?,
        None => test_set(ctx, m.n_len(), kind, a.count)?,
    };
    if test.n_len() != m.n_len() {
        return Err(Error::InvalidInput(format!(
            "test spectra have {} samples but the matrix was trained on {}",
            test.n_len(),
            m.n_len()
        )));
    }
    let pad = a.pad_len.unwrap_or_else(|| ctx.cfg.pad_len(m.n_len()));
    let mut report = compare_methods(&test, &m, pad)?;
    report.meta["config_hash"] = json!(ctx.hash);
    report.meta["matrix_config_hash"] = json!(m.meta.config_hash);
    let json_path = ctx.path(&format!("{}.json", a.name));
    io::write_json(&json_path, &report)?;
    let csv_path = ctx.path(&format!("{}.csv", a.name));
    io::write_atomic(&csv_path, report.to_csv()?.as_bytes())?;
    let summary: Vec<Value> = Method::ALL
        .iter()
        .map(|&k| {
            let ag = report.aggregate(k);
            json!({ "method": k.as_str(), "best_fraction": report.fraction(k), "median_mse": ag.median, "mean_mse": ag.mean })
        })
        .collect();
    Ok(json!({ "spectra": report.spectra.len(), "failures": report.failures.len(), "summary": summary, "files": [json_path, csv_path] }))
}

fn read_pair(path: &Path) -> Result<CarsPair> {
    let (m, axis) = io::read_spectra_csv(path)?;
    if m.rows() != 2 {
        return Err(Error::InvalidInput(format!(
            "{} must hold exactly a CARS row and an NRB row, found {} rows",
            path.display(),
            m.rows()
        )));
    }
    let (c, b) = (m.row(0).to_vec(), m.row(1).to_vec());
    match axis {
        Some(ax) => CarsPair::with_axis(c, b, ax),
        None => CarsPair::new(c, b, None, ledht::kk::AxisDirection::Ascending),
    }
}

fn kk_training_matrix(ctx: &Ctx, n_len: usize) -> Result<LedhtMatrix> {
    let recipe = ctx.cfg.kk.train.recipe(n_len, derive_seed(ctx.cfg.seed, purpose::KK_TRAIN));
    let bank = LedhtBank::train(&[n_len], &recipe)?;
    let mut m = bank.get(n_len)?.clone();
    m.meta.config_hash = Some(ctx.hash.clone());
    Ok(m)
}

fn kk_to_csv(r: &KkResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(["index", "amplitude", "phase", "re", "im"]).map_err(err)?;
    for (i, c) in r.ratio.iter().enumerate() {
        w.write_record([
            i.to_string(),
            format!("{:e}", r.amplitude[i]),
            format!("{:e}", r.phase[i]),
            format!("{:e}", c.re),
            format!("{:e}", c.im),
        ])
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
}

fn cmd_kk(ctx: &Ctx, a: &KkArgs) -> Result<Value> {
    let pair = match &a.input {
        Some(p) => read_pair(p)?,
        None if a.synthetic => forward_model(ctx.cfg.kk.n_len, ctx.cfg.kk.chi_nr, &ctx.cfg.kk.resonances)?.0,
        None => return Err(Error::InvalidConfig("kk needs --input or --synthetic".into())),
    };
    let mut opts = ctx.cfg.kk.options.clone();
    opts.subtract_one |= a.subtract_one;
    let n = pair.len();
    let learned;
    let backend = match a.backend {
        Backend::Dht => KkBackend::Dht,
        Backend::DhtPad => KkBackend::DhtPad(a.pad_len.unwrap_or(n)),
        Backend::Ledht => {
            learned = match &a.matrix {
                Some(p) => load_matrix_any(p)?,
                None => kk_training_matrix(ctx, n)?,
            };
            KkBackend::Ledht(&learned)
        }
    };
    let r = kk_retrieve(&pair, backend, &opts)?;
    let file = match ctx.format {
        Format::Csv => {
            let p = ctx.path(&format!("{}.csv", a.name));
            io::write_atomic(&p, kk_to_csv(&r)?.as_bytes())?;
            ctx.manifest(&a.name, json!({ "backend": r.backend, "clamped": r.clamped }))?;
            p
        }
        Format::Bin | Format::Json => {
            let p = ctx.path(&format!("{}.json", a.name));
            io::write_json(&p, &json!({ "config_hash": ctx.hash, "result": r }))?;
            p
        }
    };
    Ok(json!({ "samples": n, "clamped": r.clamped.len(), "file": file }))
}

fn cmd_sweep(ctx: &Ctx, a: &SweepArgs) -> Result<Value> {
    let k = &ctx.cfg.kk;
    let s = &k.sweep;
    let (pair, _) = forward_model(k.n_len, k.chi_nr, &s.resonances)?;
    let widths = linspace_widths(s.width_from, s.width_to, s.steps);
    let mut backends = vec![SweepBackend::Dht, SweepBackend::DhtPad(None)];
    if !a.no_ledht {
        let recipe = s.train.recipe(k.n_len, derive_seed(ctx.cfg.seed, purpose::SWEEP_TRAIN));
        backends.push(SweepBackend::Ledht(LedhtBank::train(&widths, &recipe)?));
    }
    let report = stability_sweep(&pair, &widths, &backends, &s.anchors, s.crop, &k.options)?;
    let file = match ctx.format {
        Format::Csv => {
            let p = ctx.path(&format!("{}.csv", a.name));
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
            w.write_record(["backend", "anchor", "phase_mean", "phase_std", "im_mean", "im_std"]).map_err(err)?;
            for st in &report.stats {
                w.write_record([
                    st.backend.clone(),
                    st.anchor.to_string(),
                    format!("{:e}", st.phase_mean),
                    format!("{:e}", st.phase_std),
                    format!("{:e}", st.im_mean),
                    format!("{:e}", st.im_std),
                ])
                .map_err(err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
            io::write_atomic(&p, &bytes)?;
            ctx.manifest(&a.name, json!({ "widths": report.widths, "crop": report.crop }))?;
            p
        }
        Format::Bin | Format::Json => {
            let p = ctx.path(&format!("{}.json", a.name));
            io::write_json(&p, &json!({ "config_hash": ctx.hash, "report": report }))?;
            p
        }
    };
    Ok(json!({ "stats": report.stats, "file": file }))
}

fn run(cli: Cli) -> Result<(Value, bool)> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::InvalidConfig("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let needs_out = !matches!(cli.command, Command::Props(_) | Command::Capacity(_));
    if needs_out {
        std::fs::create_dir_all(&cli.out).map_err(|e| Error::InvalidConfig(format!("{}: {e}", cli.out.display())))?;
    }
    let ctx = Ctx {
        hash: cfg.hash(),
        cfg,
        out: cli.out,
        format: cli.format,
    };
    let value = match &cli.command {
        Command::Gen(a) => cmd_gen(&ctx, a)?,
        Command::Train(a) => cmd_train(&ctx, a)?,
        Command::Transform(a) => cmd_transform(&ctx, a)?,
        Command::Eval(a) => cmd_eval(&ctx, a)?,
        Command::Kk(a) => cmd_kk(&ctx, a)?,
        Command::Sweep(a) => cmd_sweep(&ctx, a)?,
        Command::Props(a) => {
            let report = run_property_suite(a.n, a.signals, ctx.cfg.seed)?;
            let ok = report.all_passed();
            return Ok((serde_json::to_value(report)?, ok));
        }
        Command::Capacity(a) => {
            if a.samples_per_fwhm == 0 || a.samples_per_fwhm > a.n {
                return Err(Error::InvalidParameter(format!(
                    "samples per FWHM must lie in [1, {}], got {}",
                    a.n, a.samples_per_fwhm
                )));
            }
            return Ok((json!(capacity(a.n, a.samples_per_fwhm)), true));
        }
    };
    Ok((value, true))
}

fn error_json(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_json("usage", &e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok((value, ok)) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("value serializes"));
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            ExitCode::from(1)
        }
    }
}
