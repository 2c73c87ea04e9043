use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;

use super::config::{resolve, DataSource, RunFile, Variant};
use super::{CliError, Command};
use crate::cdvae::{load_checkpoint, save_checkpoint, CdvaeConfig, CdvaeError, CdvaeModel};
use crate::metrics::{compute_metrics, gamma_sweep_report, paired_tests, summarize, Metric, MetricsError, MetricsReport, MetricsSummary, PairedTests, SweepEntry};
use crate::panel::{load_dataset, save_dataset, split_dataset, DataSplit, PanelDataset, PanelError};
use crate::synth::{generate_dataset, SynthError};
use crate::train::{check_gradients, train_model, StopReason, TrainConfig, TrainError};
use crate::tumor::{generate_cohort, TumorError};

/// Ablation comparisons, as `(a, b)`: each metric of `a` is tested against
/// the same metric of `b`, pairing runs by seed.
pub const ABLATION_PAIRS: [(Variant, Variant); 4] = [
    (Variant::NoIpmNoMm, Variant::Full),
    (Variant::NoIpm, Variant::Full),
    (Variant::NoIpm, Variant::NoIpmNoMm),
    (Variant::ConstantBeta, Variant::Full),
];

const DEFAULT_MULTI_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o: {e}"))
    }
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CdvaeError> for CliError {
    fn from(e: CdvaeError) -> Self {
        match e {
            CdvaeError::NonFinite(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Model(m) => m.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Overflow { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TumorError> for CliError {
    fn from(e: TumorError) -> Self {
        match e {
            TumorError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

/// Progress messages go to stderr and to `log.txt` in the run directory.
pub struct RunLog {
    file: Mutex<File>,
}

impl RunLog {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        Ok(RunLog { file: Mutex::new(File::create(dir.join("log.txt"))?) })
    }

    pub fn line(&self, msg: &str) {
        eprintln!("{msg}");
        if let Ok(mut f) = self.file.lock() {
            let _ = writeln!(f, "{msg}");
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn run_dir(out: &Path, command: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(out)?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S").to_string();
    let mut dir = out.join(format!("{command}-{stamp}"));
    let mut k = 2;
    while dir.exists() {
        dir = out.join(format!("{command}-{stamp}-{k}"));
        k += 1;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct Snapshot<'a> {
    command: &'a str,
    seeds: &'a [u64],
    config_file: Option<&'a Path>,
    overrides: &'a [String],
    config: &'a RunFile,
}

pub(super) fn dispatch(command: &Command) -> Result<PathBuf, CliError> {
    let args = command.args();
    let text = match &args.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let rf = resolve(text.as_deref(), &args.set)?;
    let seeds: Vec<u64> = match (&args.seeds, command) {
        (Some(s), _) if s.is_empty() => return Err(CliError::Validation("--seeds is empty".into())),
        (Some(s), _) => s.clone(),
        (None, Command::Ablate(_) | Command::Sweep(_)) => DEFAULT_MULTI_SEEDS.to_vec(),
        (None, Command::Generate(_)) => vec![rf.synth.seed],
        (None, Command::TumorSim(_)) => vec![rf.tumor.seed],
        (None, Command::Gradcheck(_)) => vec![rf.gradcheck.seed],
        (None, _) => vec![rf.train.seed],
    };
    let dir = run_dir(&args.out, command.name())?;
    write_json(
        &dir.join("run.json"),
        &Snapshot {
            command: command.name(),
            seeds: &seeds,
            config_file: args.config.as_deref(),
            overrides: &args.set,
            config: &rf,
        },
    )?;
    let log = RunLog::create(&dir)?;
    log.line(&format!("{} -> {}", command.name(), dir.display()));
    match command {
        Command::Generate(_) => generate(&rf, &seeds, &dir, &log)?,
        Command::TumorSim(_) => tumor_sim(&rf, &seeds, &dir, &log)?,
        Command::Train(_) => train(&rf, &seeds, &dir, &log)?,
        Command::Evaluate(_) => evaluate(&rf, &dir, &log)?,
        Command::Ablate(_) => {
            let report = run_ablation(&rf, &seeds, &dir, &log)?;
            print!("{}", report.table());
        }
        Command::Sweep(_) => {
            let csv = run_sweep(&rf, &seeds, &dir, &log)?;
            print!("{csv}");
        }
        Command::Gradcheck(_) => gradcheck(&rf, &seeds, &dir, &log)?,
    }
    Ok(dir)
}

fn generate(rf: &RunFile, seeds: &[u64], dir: &Path, log: &RunLog) -> Result<(), CliError> {
    for &seed in seeds {
        let cfg = crate::synth::SynthConfig { seed, ..rf.synth.clone() };
        let d = generate_dataset(&cfg)?;
        let path = dir.join(format!("synthetic-seed{seed}.jsonl"));
        save_dataset(&d, &path)?;
        log.line(&format!("wrote {} ({} units, {} steps)", path.display(), d.n(), d.steps()));
    }
    Ok(())
}

fn tumor_sim(rf: &RunFile, seeds: &[u64], dir: &Path, log: &RunLog) -> Result<(), CliError> {
    for &seed in seeds {
        let cfg = crate::tumor::TumorConfig { seed, ..rf.tumor.clone() };
        let d = generate_cohort(&cfg)?;
        let path = dir.join(format!("tumor-seed{seed}.jsonl"));
        save_dataset(&d, &path)?;
        log.line(&format!("wrote {} ({} patients, {} days)", path.display(), d.n(), d.steps()));
    }
    Ok(())
}

fn load_data(rf: &RunFile) -> Result<PanelDataset, CliError> {
    Ok(match rf.data.source {
        DataSource::Synthetic => generate_dataset(&rf.synth)?,
        DataSource::Tumor => generate_cohort(&rf.tumor)?,
        DataSource::File => {
            let p = rf.data.path.as_ref().ok_or_else(|| CliError::Validation("data.source is file but data.path is unset".into()))?;
            load_dataset(p)?
        }
    })
}

fn split(rf: &RunFile, d: &PanelDataset) -> Result<DataSplit, CliError> {
    let [a, b, c] = rf.data.split;
    Ok(split_dataset(d, (a, b, c), rf.data.split_seed)?)
}

fn test_metrics(model: &CdvaeModel, d: &PanelDataset, split: &DataSplit) -> Result<Option<MetricsReport>, CliError> {
    let Some(tau) = &d.tau else { return Ok(None) };
    let pred = model.predict_dataset(d, &split.test_idx)?;
    let tau = tau.select(ndarray::Axis(0), &split.test_idx);
    let y = d.y.select(ndarray::Axis(0), &split.test_idx);
    Ok(Some(compute_metrics(tau.view(), pred.tau.view(), y.view(), pred.y_factual.view())?))
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub stop_reason: StopReason,
    pub metrics: Option<MetricsReport>,
}

/// Trains one model, writing its checkpoint, log and metrics into `dir`.
fn train_one(
    model_cfg: &CdvaeConfig,
    train_cfg: &TrainConfig,
    d: &PanelDataset,
    split: &DataSplit,
    seed: u64,
    dir: &Path,
) -> Result<SeedResult, CliError> {
    fs::create_dir_all(dir)?;
    let mcfg = CdvaeConfig { seed, ..model_cfg.clone() };
    let tcfg = TrainConfig { seed, ..*train_cfg };
    let (model, log) = match train_model(&mcfg, &tcfg, d, split) {
        Ok(r) => r,
        Err(TrainError::NonFinite { epoch, iteration, source, last_good }) => {
            save_checkpoint(&last_good, &dir.join("last_good_checkpoint.json"))?;
            return Err(CliError::Numeric(format!(
                "training diverged at epoch {epoch}, iteration {iteration}: {source} (last good parameters saved in {})",
                dir.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    save_checkpoint(&model, &dir.join("checkpoint.json"))?;
    write_json(&dir.join("train_log.json"), &log)?;
    let metrics = test_metrics(&model, d, split)?;
    if let Some(m) = &metrics {
        write_json(&dir.join("metrics.json"), m)?;
    }
    Ok(SeedResult { seed, epochs: log.epochs.len(), best_epoch: log.best_epoch, stop_reason: log.stop_reason, metrics })
}

fn describe(r: &SeedResult) -> String {
    let mut s = format!("seed {} epochs {} best {} ({:?})", r.seed, r.epochs, r.best_epoch, r.stop_reason);
    if let Some(m) = &r.metrics {
        let _ = write!(s, " nrmse_tau {:.4} nrmse_y {:.4}", m.nrmse_tau, m.nrmse_y);
    }
    s
}

fn train(rf: &RunFile, seeds: &[u64], dir: &Path, log: &RunLog) -> Result<(), CliError> {
    let d = load_data(rf)?;
    let split = split(rf, &d)?;
    write_json(&dir.join("split.json"), &split)?;
    let mut results = Vec::new();
    for &seed in seeds {
        let r = train_one(&rf.model, &rf.train, &d, &split, seed, &dir.join(format!("seed-{seed}")))?;
        log.line(&describe(&r));
        results.push(r);
    }
    let metrics: Vec<MetricsReport> = results.iter().filter_map(|r| r.metrics).collect();
    #[derive(Serialize)]
    struct Summary<'a> {
        runs: &'a [SeedResult],
        metrics: Option<MetricsSummary>,
    }
    let summary = (metrics.len() == results.len() && !metrics.is_empty()).then(|| summarize(&metrics));
    write_json(&dir.join("summary.json"), &Summary { runs: &results, metrics: summary })
}

fn evaluate(rf: &RunFile, dir: &Path, log: &RunLog) -> Result<(), CliError> {
    let path = rf.checkpoint.path.as_ref().ok_or_else(|| CliError::Validation("checkpoint.path is required".into()))?;
    let model = load_checkpoint(path)?;
    let d = load_data(rf)?;
    if d.d_x() != model.config.d_x {
        return Err(CliError::Validation(format!("checkpoint expects {} covariates, data has {}", model.config.d_x, d.d_x())));
    }
    let split = split(rf, &d)?;
    let m = test_metrics(&model, &d, &split)?.ok_or_else(|| CliError::Validation("dataset has no ground-truth effects".into()))?;
    write_json(&dir.join("metrics.json"), &m)?;
    log.line(&format!("nrmse_tau {:.4} nmae_tau {:.4} nae_ate {:.4} nrmse_y {:.4}", m.nrmse_tau, m.nmae_tau, m.nae_ate, m.nrmse_y));
    Ok(())
}

fn gradcheck(rf: &RunFile, seeds: &[u64], dir: &Path, log: &RunLog) -> Result<(), CliError> {
    let mut failed = Vec::new();
    for &seed in seeds {
        let gc = crate::train::GradcheckConfig { seed, ..rf.gradcheck };
        let report = check_gradients(&gc)?;
        write_json(&dir.join(format!("gradcheck-seed{seed}.json")), &report)?;
        for t in &report.tensors {
            log.line(&format!("{:<28} {:>6} {:.3e}", t.name, t.numel, t.max_rel_error));
        }
        log.line(&format!("seed {seed}: max relative error {:.3e} (tolerance {:.1e})", report.max_rel_error, report.tolerance));
        if !report.passed {
            failed.push(seed);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("gradient check failed for seeds {failed:?}")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub runs: Vec<SeedResult>,
    pub summary: MetricsSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricTest {
    pub metric: Metric,
    pub mean_a: f64,
    pub mean_b: f64,
    #[serde(flatten)]
    pub tests: PairedTests,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub a: Variant,
    pub b: Variant,
    pub tests: Vec<MetricTest>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantResult>,
    pub comparisons: Vec<Comparison>,
}

impl AblationReport {
    /// Markdown table of mean ± std per variant and metric.
    pub fn table(&self) -> String {
        let mut s = String::from("| variant |");
        for m in Metric::ALL {
            let _ = write!(s, " {} |", m.name());
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(Metric::ALL.len()));
        s.push('\n');
        for v in &self.variants {
            let _ = write!(s, "| {} |", v.variant.name());
            for m in Metric::ALL {
                let _ = write!(s, " {:.4} ± {:.4} |", m.of(&v.summary.mean), m.of(&v.summary.std));
            }
            s.push('\n');
        }
        s
    }

    /// CSV `a,b,metric,p_t,p_wilcoxon`.
    pub fn pvalues_csv(&self) -> String {
        let mut s = String::from("a,b,metric,p_t,p_wilcoxon\n");
        for c in &self.comparisons {
            for t in &c.tests {
                let _ = writeln!(s, "{},{},{},{:.6},{:.6}", c.a.name(), c.b.name(), t.metric.name(), t.tests.p_t, t.tests.p_wilcoxon);
            }
        }
        s
    }
}

fn metrics_of(runs: &[SeedResult]) -> Result<Vec<MetricsReport>, CliError> {
    runs.iter()
        .map(|r| r.metrics.ok_or_else(|| CliError::Validation("dataset has no ground-truth effects".into())))
        .collect()
}

fn compare(a: Variant, ra: &[MetricsReport], b: Variant, rb: &[MetricsReport]) -> Result<Comparison, CliError> {
    let tests = Metric::ALL
        .iter()
        .map(|&m| {
            let va: Vec<f64> = ra.iter().map(|r| m.of(r)).collect();
            let vb: Vec<f64> = rb.iter().map(|r| m.of(r)).collect();
            Ok(MetricTest {
                metric: m,
                mean_a: va.iter().sum::<f64>() / va.len() as f64,
                mean_b: vb.iter().sum::<f64>() / vb.len() as f64,
                tests: paired_tests(&va, &vb)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(Comparison { a, b, tests })
}

/// Trains the four ablation variants for every seed on one dataset and
/// split, then tests each pair in [`ABLATION_PAIRS`]. Writes
/// `ablation.json`, `ablation_table.md` and `ablation_pvalues.csv`.
pub fn run_ablation(rf: &RunFile, seeds: &[u64], dir: &Path, log: &RunLog) -> Result<AblationReport, CliError> {
    if seeds.len() < 2 {
        return Err(CliError::Validation("ablate needs at least two seeds".into()));
    }
    let d = load_data(rf)?;
    if d.tau.is_none() {
        return Err(CliError::Validation("dataset has no ground-truth effects".into()));
    }
    let split = split(rf, &d)?;
    write_json(&dir.join("split.json"), &split)?;
    let mut variants = Vec::new();
    for v in Variant::ABLATION {
        let cfg = v.apply(&rf.model);
        let mut runs = Vec::new();
        for &seed in seeds {
            let r = train_one(&cfg, &rf.train, &d, &split, seed, &dir.join(v.name()).join(format!("seed-{seed}")))?;
            log.line(&format!("{}: {}", v.name(), describe(&r)));
            runs.push(r);
        }
        let summary = summarize(&metrics_of(&runs)?);
        variants.push(VariantResult { variant: v, runs, summary });
    }
    let lookup = |v: Variant| -> Result<Vec<MetricsReport>, CliError> {
        metrics_of(&variants.iter().find(|r| r.variant == v).expect("every variant ran").runs)
    };
    let comparisons = ABLATION_PAIRS
        .iter()
        .map(|&(a, b)| compare(a, &lookup(a)?, b, &lookup(b)?))
        .collect::<Result<Vec<_>, _>>()?;
    let report = AblationReport { seeds: seeds.to_vec(), variants, comparisons };
    write_json(&dir.join("ablation.json"), &report)?;
    fs::write(dir.join("ablation_table.md"), report.table())?;
    fs::write(dir.join("ablation_pvalues.csv"), report.pvalues_csv())?;
    Ok(report)
}

/// Trains every configured variant for every seed on a synthetic panel
/// regenerated at each `gamma1_yx` of the grid. Writes `sweep.csv` and
/// `sweep.json`; returns the CSV.
pub fn run_sweep(rf: &RunFile, seeds: &[u64], dir: &Path, log: &RunLog) -> Result<String, CliError> {
    if rf.data.source != DataSource::Synthetic {
        return Err(CliError::Validation("sweep needs data.source = synthetic".into()));
    }
    if rf.sweep.variants.is_empty() {
        return Err(CliError::Validation("sweep.variants is empty".into()));
    }
    let mut entries = Vec::new();
    #[derive(Serialize)]
    struct GammaRuns {
        gamma: f64,
        variant: Variant,
        runs: Vec<SeedResult>,
    }
    let mut all = Vec::new();
    for &gamma in &rf.sweep.gammas {
        let mut local = rf.clone();
        local.synth.gamma1_yx = gamma;
        let d = load_data(&local)?;
        let split = split(&local, &d)?;
        for &v in &rf.sweep.variants {
            let cfg = v.apply(&rf.model);
            let mut runs = Vec::new();
            for &seed in seeds {
                let sub = dir.join(format!("gamma-{gamma}")).join(v.name()).join(format!("seed-{seed}"));
                let r = train_one(&cfg, &rf.train, &d, &split, seed, &sub)?;
                log.line(&format!("gamma {gamma} {}: {}", v.name(), describe(&r)));
                runs.push(r);
            }
            let ms = metrics_of(&runs)?;
            for m in Metric::ALL {
                entries.push(SweepEntry {
                    gamma,
                    model: v.name().to_string(),
                    metric: m.name().to_string(),
                    values: ms.iter().map(|r| m.of(r)).collect(),
                });
            }
            all.push(GammaRuns { gamma, variant: v, runs });
        }
    }
    let csv = gamma_sweep_report(&entries)?;
    fs::write(dir.join("sweep.csv"), &csv)?;
    write_json(&dir.join("sweep.json"), &all)?;
    Ok(csv)
}
