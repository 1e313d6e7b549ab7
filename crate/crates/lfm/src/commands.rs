//! The CLI commands. Each one reads the resolved config, does its work and
//! writes its artifacts, plus `config.json`, into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use lfm_core::bench::median;
use lfm_core::datamodel::{
    build_longtail_counts, generate_synthetic, subset_longtail, ClassCatalog, EmbeddingSet,
    LongTailSpec, SplitTag,
};
use lfm_core::evaluate::{evaluate, shot_split, EvalReport};
use lfm_core::model::{train, TrainedHead};
use lfm_core::textguide::{build_sampling_model, imbalance_ratio};

use crate::artifacts::{to_json, AnalysisFile, HeadFile, MetricsFile, SuiteOutcome, VerifyFile};
use crate::config::{arm_label, RunConfig};
use crate::error::{CliError, CliResult};
use crate::format;
use crate::verify;

/// Where a command writes. The directory must be absent or empty unless
/// `force` is set, in which case existing files are overwritten.
#[derive(Debug, Clone)]
pub struct OutDir {
    path: PathBuf,
}

impl OutDir {
    pub fn prepare(path: &Path, force: bool) -> CliResult<Self> {
        if path.exists() {
            if !path.is_dir() {
                return Err(CliError::Config(format!(
                    "{} is not a directory",
                    path.display()
                )));
            }
            let occupied = fs::read_dir(path)?.next().is_some();
            if occupied && !force {
                return Err(CliError::Config(format!(
                    "{} is not empty; pass --force to overwrite",
                    path.display()
                )));
            }
        } else {
            fs::create_dir_all(path)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.file(name);
        fs::write(&path, contents)?;
        Ok(path)
    }

    fn echo_config(&self, config: &RunConfig) -> CliResult<PathBuf> {
        self.write("config.json", &to_json(config)?)
    }
}

/// Training data, validation data and catalog, either loaded from the files
/// in the config or generated from its synthetic spec and cut to its
/// long-tail profile.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub train: EmbeddingSet,
    pub val: Option<EmbeddingSet>,
    pub catalog: ClassCatalog,
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Config(format!("data.{key} is required")))
}

/// Cuts a balanced set down to the configured long-tail profile.
pub fn make_longtail(
    data: &EmbeddingSet,
    catalog: &ClassCatalog,
    config: &RunConfig,
) -> CliResult<(EmbeddingSet, ClassCatalog)> {
    let available = data.class_counts(catalog.num_classes())?;
    let n_max = config
        .longtail
        .n_max
        .unwrap_or_else(|| available.iter().copied().max().unwrap_or(0) as u64);
    let counts = build_longtail_counts(&LongTailSpec {
        n_max,
        gamma: config.longtail.gamma,
        classes: catalog.num_classes(),
    })?;
    Ok(subset_longtail(data, catalog, &counts, config.seed)?)
}

pub fn load_inputs(config: &RunConfig) -> CliResult<Inputs> {
    let data = &config.data;
    if data.train.is_none() {
        let synth = generate_synthetic(&config.synthetic)?;
        let (train, catalog) = make_longtail(&synth.train, &synth.catalog, config)?;
        return Ok(Inputs {
            train,
            val: Some(synth.val),
            catalog,
        });
    }
    let catalog = format::load_catalog(require(&data.catalog, "catalog")?)?;
    let train = format::load_embeddings(require(&data.train, "train")?, SplitTag::Train)?;
    train.check_catalog(&catalog)?;
    catalog.check_counts(&train)?;
    let val = match &data.val {
        Some(p) => {
            let val = format::load_embeddings(p, SplitTag::Val)?;
            val.check_catalog(&catalog)?;
            Some(val)
        }
        None => None,
    };
    Ok(Inputs {
        train,
        val,
        catalog,
    })
}

fn require_val(inputs: &Inputs) -> CliResult<&EmbeddingSet> {
    inputs
        .val
        .as_ref()
        .ok_or_else(|| CliError::Config("data.val is required".into()))
}

pub fn report(
    head: &TrainedHead,
    val: &EmbeddingSet,
    catalog: &ClassCatalog,
    config: &RunConfig,
) -> CliResult<EvalReport> {
    let split = shot_split(&catalog.counts, config.shots);
    Ok(evaluate(head, val, catalog, &split)?)
}

fn confusion_csv(report: &EvalReport) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let c = report.confusion.len();
    let mut header = vec!["true\\pred".to_string()];
    header.extend((0..c).map(|k| k.to_string()));
    w.write_record(&header)?;
    for (k, row) in report.confusion.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    Ok(
        String::from_utf8(w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)
            .expect("ascii"),
    )
}

fn write_metrics(out: &OutDir, report: &EvalReport, config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let metrics = MetricsFile::new(report, arm_label(&config.train), config);
    let mut written = vec![out.write("metrics.json", &to_json(&metrics)?)?];
    if config.eval.confusion_csv {
        written.push(out.write("confusion.csv", &confusion_csv(report)?)?);
    }
    Ok(written)
}

/// Writes a balanced synthetic set: `train.lfme`, `val.lfme`, `catalog.json`.
pub fn synth(config: &RunConfig, out: &OutDir) -> CliResult<Vec<PathBuf>> {
    let s = generate_synthetic(&config.synthetic)?;
    format::save_embeddings(&out.file("train.lfme"), &s.train)?;
    format::save_embeddings(&out.file("val.lfme"), &s.val)?;
    format::save_catalog(&out.file("catalog.json"), &s.catalog)?;
    Ok(vec![
        out.file("train.lfme"),
        out.file("val.lfme"),
        out.file("catalog.json"),
        out.echo_config(config)?,
    ])
}

/// Cuts `data.train` to the long-tail profile: `train_lt.lfme`,
/// `catalog_lt.json`.
pub fn make_lt(config: &RunConfig, out: &OutDir) -> CliResult<Vec<PathBuf>> {
    let catalog = format::load_catalog(require(&config.data.catalog, "catalog")?)?;
    let data = format::load_embeddings(require(&config.data.train, "train")?, SplitTag::Train)?;
    let (lt, lt_catalog) = make_longtail(&data, &catalog, config)?;
    format::save_embeddings(&out.file("train_lt.lfme"), &lt)?;
    format::save_catalog(&out.file("catalog_lt.json"), &lt_catalog)?;
    Ok(vec![
        out.file("train_lt.lfme"),
        out.file("catalog_lt.json"),
        out.echo_config(config)?,
    ])
}

pub fn analysis(catalog: &ClassCatalog, config: &RunConfig) -> CliResult<AnalysisFile> {
    let model = build_sampling_model(catalog, config.analyze.tau)?;
    let c = model.num_classes();
    let p_y_independent = model.independent_union_distribution();
    Ok(AnalysisFile {
        tau: config.analyze.tau,
        counts: catalog.counts.clone(),
        gamma: catalog.imbalance_factor(),
        p_first: model.p_first().to_vec(),
        p_cond: (0..c).map(|i| model.p_cond_row(i).to_vec()).collect(),
        p_y: model.effective_class_distribution(),
        gamma_prime: model.effective_imbalance_factor(),
        gamma_prime_independent: imbalance_ratio(&p_y_independent),
        p_y_independent,
        config: config.clone(),
    })
}

/// Sampling and imbalance report for the catalog: `analysis.json`, and
/// `p_cond.csv` when asked for.
pub fn analyze(config: &RunConfig, out: &OutDir) -> CliResult<Vec<PathBuf>> {
    let catalog = match &config.data.catalog {
        Some(p) => format::load_catalog(p)?,
        None => load_inputs(config)?.catalog,
    };
    let a = analysis(&catalog, config)?;
    let mut written = vec![out.write("analysis.json", &to_json(&a)?)?];
    if config.analyze.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["first\\second".to_string()];
        header.extend(catalog.names.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in catalog.names.iter().zip(&a.p_cond) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        let text = String::from_utf8(w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)
            .map_err(|e| CliError::Data(e.to_string()))?;
        written.push(out.write("p_cond.csv", &text)?);
    }
    written.push(out.echo_config(config)?);
    Ok(written)
}

/// Two-stage training: `head.json`, plus `metrics.json` when validation
/// data is available.
pub fn train_cmd(config: &RunConfig, out: &OutDir) -> CliResult<Vec<PathBuf>> {
    let inputs = load_inputs(config)?;
    let head = train(
        &inputs.train,
        &inputs.catalog,
        inputs.val.as_ref(),
        &config.train,
    )?;
    let mut written = vec![out.write("head.json", &to_json(&HeadFile::new(&head, config))?)?];
    if let Some(val) = &inputs.val {
        let r = report(&head, val, &inputs.catalog, config)?;
        written.extend(write_metrics(out, &r, config)?);
    }
    written.push(out.echo_config(config)?);
    Ok(written)
}

/// Scores `data.head` on the validation data: `metrics.json`.
pub fn eval(config: &RunConfig, out: &OutDir) -> CliResult<Vec<PathBuf>> {
    let text = fs::read_to_string(require(&config.data.head, "head")?)?;
    let file: HeadFile = serde_json::from_str(&text)?;
    let head = file.to_head()?;
    let inputs = load_inputs(config)?;
    if head.dim() != inputs.catalog.dim() {
        return Err(lfm_core::Error::DimMismatch {
            expected: inputs.catalog.dim(),
            got: head.dim(),
        }
        .into());
    }
    let r = report(&head, require_val(&inputs)?, &inputs.catalog, config)?;
    let mut written = write_metrics(out, &r, config)?;
    written.push(out.echo_config(config)?);
    Ok(written)
}

/// One row of the sweep table; accuracies are medians over the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub tau: f64,
    pub many: Option<f64>,
    pub med: Option<f64>,
    pub few: Option<f64>,
    pub all: Option<f64>,
}

fn median_opt(values: &[Option<f64>]) -> Option<f64> {
    let v: Option<Vec<f64>> = values.iter().copied().collect();
    v.filter(|v| !v.is_empty()).map(|v| median(&v))
}

pub fn sweep_rows(config: &RunConfig) -> CliResult<Vec<SweepRow>> {
    let seeds = if config.sweep.seeds.is_empty() {
        vec![config.seed]
    } else {
        config.sweep.seeds.clone()
    };
    let mut runs = Vec::with_capacity(seeds.len());
    for &s in &seeds {
        let cfg = RunConfig {
            seed: s,
            ..config.clone()
        }
        .resolve_seed_only();
        let inputs = load_inputs(&cfg)?;
        runs.push((cfg, inputs));
    }
    let mut rows = Vec::new();
    for &tau in &config.sweep.taus {
        for &alpha in &config.sweep.alphas {
            let mut groups: [Vec<Option<f64>>; 4] = Default::default();
            for (cfg, inputs) in &runs {
                let mut tc = cfg.train.clone();
                for st in [&mut tc.stage1, &mut tc.stage2] {
                    st.alpha = alpha;
                    st.tau = tau;
                }
                let head = train(&inputs.train, &inputs.catalog, None, &tc)?;
                let r = report(&head, require_val(inputs)?, &inputs.catalog, cfg)?;
                for (g, v) in groups
                    .iter_mut()
                    .zip([r.many(), r.medium(), r.few(), r.all()])
                {
                    g.push(v);
                }
            }
            let [many, med, few, all] = groups.map(|g| median_opt(&g));
            rows.push(SweepRow {
                alpha,
                tau,
                many,
                med,
                few,
                all,
            });
        }
    }
    Ok(rows)
}

/// Grid over α and τ for the configured arm: `sweep.csv`.
pub fn sweep(config: &RunConfig, out: &OutDir) -> CliResult<Vec<PathBuf>> {
    let rows = sweep_rows(config)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "tau", "many", "med", "few", "all"])?;
    let cell = |x: Option<f64>| {
        x.map(|v| format!("{:.1}", lfm_core::evaluate::round1(v)))
            .unwrap_or_default()
    };
    for r in &rows {
        w.write_record([
            r.alpha.to_string(),
            r.tau.to_string(),
            cell(r.many),
            cell(r.med),
            cell(r.few),
            cell(r.all),
        ])?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)
        .map_err(|e| CliError::Data(e.to_string()))?;
    Ok(vec![
        out.write("sweep.csv", &text)?,
        out.echo_config(config)?,
    ])
}

/// Runs the self-checks. Fails with a verification error if any suite fails;
/// the report is written either way when an output directory is given.
pub fn verify_cmd(config: &RunConfig, out: Option<&OutDir>) -> CliResult<Vec<SuiteOutcome>> {
    let suites = verify::run_all(&config.verify, config.seed);
    let passed = suites.iter().all(|s| s.passed);
    if let Some(out) = out {
        let file = VerifyFile {
            passed,
            suites: suites.clone(),
            config: config.clone(),
        };
        out.write("verify.json", &to_json(&file)?)?;
        out.echo_config(config)?;
    }
    Ok(suites)
}

impl RunConfig {
    /// Copies `seed` into the nested seeds without re-validating.
    fn resolve_seed_only(mut self) -> Self {
        self.synthetic.seed = self.seed;
        self.train.seed = self.seed;
        self
    }
}
