//! Stage runners. Every stage reads its inputs from files and writes its
//! outputs below the run's output directory, followed by a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use serde::Serialize;
use sha2::{Digest, Sha256};
use solcur::baseline::{evaluate_cv, hpo_select, overfit_gap_experiment, Protocol};
use solcur::curate::{curate_target, curation_summary};
use solcur::dataset::{
    ingest_text, protocol_filter, write_rejections, write_table, DataTable, Ingested, SchemaMapping,
};
use solcur::dedupe::{assign_intra_weights, clean_set, CleanReport};
use solcur::folds::{assign_folds, read_plan, write_plan};
use solcur::metrics::{bootstrap_ci, read_predictions, write_predictions};
use solcur::standardize::StandardizeOptions;

use crate::config::{RunConfig, Stage};
use crate::report::{emit_report, read_reports, write_reports, Layout, StoredReport};

/// Exit status 2 for configuration problems, 1 for data problems.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Data(e) => e,
        }
    }
}

pub type Outcome<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn config_err(self) -> Outcome<T>;
    fn data_err(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config_err(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn data_err(self) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

#[derive(Debug, Clone)]
pub enum Subcommand {
    Clean,
    Curate,
    Split,
    TrainEval,
    Eval {
        predictions: Vec<PathBuf>,
        method: Option<String>,
    },
    HpoDemo,
    Report {
        reports: Vec<PathBuf>,
    },
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Clean => "clean",
            Subcommand::Curate => "curate",
            Subcommand::Split => "split",
            Subcommand::TrainEval => "train-eval",
            Subcommand::Eval { .. } => "eval",
            Subcommand::HpoDemo => "hpo-demo",
            Subcommand::Report { .. } => "report",
        }
    }
}

#[derive(Serialize)]
struct InputRecord {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Seeds {
    folds: u64,
    bootstrap: u64,
    hpo: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    started_unix_s: u64,
    wall_time_s: f64,
    seeds: Seeds,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
    config: &'a RunConfig,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    out: PathBuf,
    inputs: Vec<InputRecord>,
    outputs: Vec<String>,
}

impl Run<'_> {
    fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputRecord {
            path: path.display().to_string(),
            bytes: bytes.len() as u64,
            sha256: format!("{:x}", Sha256::digest(bytes)),
        });
    }

    fn read(&mut self, path: &Path) -> Outcome<Vec<u8>> {
        let bytes = fs::read(path)
            .with_context(|| format!("reading {}", path.display()))
            .data_err()?;
        self.record_input(path, &bytes);
        Ok(bytes)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Outcome<()> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))
                .data_err()?;
        }
        fs::write(&path, bytes)
            .with_context(|| format!("writing {}", path.display()))
            .data_err()?;
        self.outputs.push(rel.to_string());
        Ok(())
    }

    fn stage_dir(stage: Stage) -> &'static str {
        match stage {
            Stage::Clean => "clean",
            Stage::Curated => "curate",
        }
    }

    /// Reads the tables a previous stage wrote, in input order.
    fn load_stage(&mut self, stage: Stage) -> Outcome<Vec<DataTable>> {
        let names: Vec<String> = self.cfg.inputs.iter().map(|i| i.dataset_name()).collect();
        if names.is_empty() {
            return Err(Failure::Config(anyhow!("no inputs configured")));
        }
        let dir = Self::stage_dir(stage);
        names
            .iter()
            .map(|name| {
                let path = self.out.join(dir).join(format!("{name}.csv"));
                if !path.exists() {
                    return Err(Failure::Data(anyhow!(
                        "{} not found; run the `{}` stage first",
                        path.display(),
                        if stage == Stage::Clean {
                            "clean"
                        } else {
                            "curate"
                        }
                    )));
                }
                let bytes = self.read(&path)?;
                let text = String::from_utf8(bytes).data_err()?;
                let ing = ingest_text(&text, name, &SchemaMapping::native()).data_err()?;
                if let Some(r) = ing.rejections.first() {
                    return Err(Failure::Data(anyhow!(
                        "{}: row {} rejected ({})",
                        path.display(),
                        r.row,
                        r.kind.as_str()
                    )));
                }
                Ok(ing.table)
            })
            .collect()
    }

    fn ingest_input(&mut self, index: usize) -> Outcome<Ingested> {
        let spec = self.cfg.inputs[index].clone();
        let bytes = self.read(&spec.path)?;
        let text = String::from_utf8(bytes)
            .with_context(|| format!("{} is not UTF-8", spec.path.display()))
            .data_err()?;
        let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
        let mapping = match &spec.schema {
            Some(m) => m.clone(),
            None => {
                let mut rdr = csv::Reader::from_reader(text.as_bytes());
                let headers: Vec<String> = rdr
                    .headers()
                    .data_err()?
                    .iter()
                    .map(str::to_string)
                    .collect();
                SchemaMapping::detect(&headers)
                    .with_context(|| format!("detecting columns of {}", spec.path.display()))
                    .data_err()?
            }
        };
        ingest_text(text, &spec.dataset_name(), &mapping)
            .with_context(|| format!("ingesting {}", spec.path.display()))
            .data_err()
    }

    fn clean(&mut self) -> Outcome<()> {
        if self.cfg.inputs.is_empty() {
            return Err(Failure::Config(anyhow!("no inputs configured")));
        }
        let opts = StandardizeOptions {
            neutralize: self.cfg.pipeline.neutralize,
        };
        let mut reports: Vec<CleanReport> = Vec::new();
        for i in 0..self.cfg.inputs.len() {
            let ing = self.ingest_input(i)?;
            let name = ing.table.name.clone();
            let mut table = ing.table;
            if self.cfg.pipeline.protocol_filter {
                let before = table.len();
                table = protocol_filter(&table);
                log::info!("{name}: protocol filter kept {} of {before}", table.len());
            }
            let outcome = clean_set(&table, opts);
            let weighted = assign_intra_weights(&outcome.table).data_err()?;

            let mut buf = Vec::new();
            write_table(&weighted, &mut buf).data_err()?;
            self.write(&format!("clean/{name}.csv"), &buf)?;

            let mut buf = Vec::new();
            write_rejections(&ing.rejections, &mut buf).data_err()?;
            self.write(&format!("clean/{name}.rejected.csv"), &buf)?;

            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["index", "smiles", "reason", "detail"])
                .data_err()?;
            for r in &outcome.removals {
                w.write_record([
                    r.index.to_string().as_str(),
                    &table.records[r.index].raw_smiles,
                    r.reason.as_str(),
                    &r.detail,
                ])
                .data_err()?;
            }
            let buf = w.into_inner().map_err(|e| anyhow!("{e}")).data_err()?;
            self.write(&format!("clean/{name}.removed.csv"), &buf)?;

            eprintln!("{}", outcome.report);
            reports.push(outcome.report);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CleanReport::CSV_HEADER).data_err()?;
        for r in &reports {
            w.write_record(r.csv_row()).data_err()?;
        }
        let buf = w.into_inner().map_err(|e| anyhow!("{e}")).data_err()?;
        self.write("clean/report.csv", &buf)?;
        let text: Vec<String> = reports.iter().map(|r| r.to_string()).collect();
        self.write("clean/report.txt", (text.join("\n") + "\n").as_bytes())
    }

    fn curate(&mut self) -> Outcome<()> {
        let tables = self.load_stage(Stage::Clean)?;
        let cfg = self.cfg.curation.to_core();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut text = String::new();
        for (i, target) in tables.iter().enumerate() {
            let others: Vec<DataTable> = tables
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, t)| t.clone())
                .collect();
            let curated = curate_target(target, &others, &cfg)
                .with_context(|| format!("curating {}", target.name))
                .data_err()?;
            let mut buf = Vec::new();
            write_table(&curated.table, &mut buf).data_err()?;
            self.write(&format!("curate/{}.csv", target.name), &buf)?;
            let summary = curation_summary(target, &curated.table);
            eprintln!("{summary}");
            text.push_str(&format!("{summary}\n"));
            w.serialize(&summary).data_err()?;
        }
        let buf = w.into_inner().map_err(|e| anyhow!("{e}")).data_err()?;
        self.write("curate/summary.csv", &buf)?;
        self.write("curate/summary.txt", text.as_bytes())
    }

    fn split(&mut self) -> Outcome<()> {
        for t in self.load_stage(self.cfg.pipeline.stage)? {
            let plan = assign_folds(&t, self.cfg.folds.k, self.cfg.seed)
                .with_context(|| format!("splitting {}", t.name))
                .data_err()?;
            let mut buf = Vec::new();
            write_plan(&plan, &mut buf).data_err()?;
            self.write(&format!("split/{}.folds.csv", t.name), &buf)?;
            eprintln!(
                "{}: {} molecules in {} folds",
                t.name,
                plan.assignment.len(),
                plan.k
            );
        }
        Ok(())
    }

    fn train_eval(&mut self) -> Outcome<()> {
        let model = self.cfg.model.to_core();
        for t in self.load_stage(self.cfg.pipeline.stage)? {
            let plan_path = self.out.join(format!("split/{}.folds.csv", t.name));
            if !plan_path.exists() {
                return Err(Failure::Data(anyhow!(
                    "{} not found; run the `split` stage first",
                    plan_path.display()
                )));
            }
            let bytes = self.read(&plan_path)?;
            let plan = read_plan(bytes.as_slice(), self.cfg.seed).data_err()?;
            let folds = evaluate_cv(&t, &plan, &model)
                .with_context(|| format!("cross-validating {}", t.name))
                .data_err()?;
            let pairs: Vec<_> = folds.into_iter().flat_map(|f| f.pairs).collect();
            let mut buf = Vec::new();
            write_predictions(&pairs, &mut buf).data_err()?;
            self.write(&format!("train-eval/{}.predictions.csv", t.name), &buf)?;
        }
        Ok(())
    }

    fn eval(&mut self, predictions: &[PathBuf], method: Option<&str>) -> Outcome<()> {
        let files: Vec<(String, PathBuf)> = if predictions.is_empty() {
            if self.cfg.inputs.is_empty() {
                return Err(Failure::Config(anyhow!(
                    "no inputs configured and no --predictions given"
                )));
            }
            self.cfg
                .inputs
                .iter()
                .map(|i| {
                    let name = i.dataset_name();
                    let path = self.out.join(format!("train-eval/{name}.predictions.csv"));
                    (name, path)
                })
                .collect()
        } else {
            predictions
                .iter()
                .map(|p| {
                    let stem = solcur::dataset::table_name(p);
                    let name = stem
                        .strip_suffix(".predictions")
                        .unwrap_or(&stem)
                        .to_string();
                    (name, p.clone())
                })
                .collect()
        };
        let method = method.unwrap_or(&self.cfg.metric.method).to_string();
        let mut rows = Vec::new();
        for (name, path) in files {
            let bytes = self.read(&path)?;
            let pairs = read_predictions(bytes.as_slice())
                .with_context(|| format!("reading {}", path.display()))
                .data_err()?;
            let report = bootstrap_ci(
                &pairs,
                self.cfg.metric.name,
                self.cfg.metric.resamples,
                self.cfg.seed,
            )
            .with_context(|| format!("evaluating {}", path.display()))
            .data_err()?;
            eprintln!(
                "{name} {method} {}: {}",
                report.metric_name.name(),
                report.formatted
            );
            rows.push(StoredReport::new(&name, &method, &report));
        }
        let mut buf = Vec::new();
        write_reports(&rows, &mut buf).data_err()?;
        self.write("eval/metrics.csv", &buf)
    }

    fn report(&mut self, extra: &[PathBuf]) -> Outcome<()> {
        let mut files = Vec::new();
        let own = self.out.join("eval/metrics.csv");
        if own.exists() {
            files.push(own);
        }
        files.extend(extra.iter().cloned());
        if files.is_empty() {
            return Err(Failure::Data(anyhow!(
                "no stored metric reports; run `eval` first"
            )));
        }
        let mut rows = Vec::new();
        for path in files {
            let bytes = self.read(&path)?;
            rows.extend(
                read_reports(bytes.as_slice())
                    .with_context(|| format!("reading {}", path.display()))
                    .data_err()?,
            );
        }
        let md = emit_report(&rows, &Layout::of(&rows));
        self.write("report.md", md.as_bytes())?;
        eprint!("{md}");
        Ok(())
    }

    fn hpo_demo(&mut self) -> Outcome<()> {
        let h = &self.cfg.hpo;
        let rows = overfit_gap_experiment(
            h.n_samples,
            h.n_features,
            &h.config_counts,
            h.trials,
            self.cfg.seed,
        )
        .context("overfitting experiment")
        .config_err()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &rows {
            eprintln!(
                "configs {:>4}: reported {:.4} holdout {:.4} gap {:+.4} (se {:.4})",
                r.configs, r.mean_reported, r.mean_holdout, r.mean_gap, r.std_err
            );
            w.serialize(r).data_err()?;
        }
        let buf = w.into_inner().map_err(|e| anyhow!("{e}")).data_err()?;
        self.write("hpo-demo/gap.csv", &buf)?;

        if self.cfg.inputs.is_empty() {
            return Ok(());
        }
        let space = self.cfg.hpo.space().config_err()?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "dataset",
            "protocol",
            "lambda",
            "radius",
            "n_bits",
            "reported_rmse",
            "holdout_rmse",
        ])
        .data_err()?;
        for t in self.load_stage(self.cfg.pipeline.stage)? {
            let plan = assign_folds(&t, self.cfg.folds.k, self.cfg.seed).data_err()?;
            for protocol in [Protocol::Naive, Protocol::Nested] {
                let out = hpo_select(&t, &plan, &space, protocol, self.cfg.seed)
                    .with_context(|| format!("selecting on {}", t.name))
                    .data_err()?;
                let name = if protocol == Protocol::Naive {
                    "naive"
                } else {
                    "nested"
                };
                eprintln!(
                    "{} {name}: reported {:.4} holdout {:.4}",
                    t.name, out.result.reported_rmse, out.result.holdout_rmse
                );
                w.write_record([
                    t.name.clone(),
                    name.to_string(),
                    out.chosen.lambda.to_string(),
                    out.chosen.radius.to_string(),
                    out.chosen.n_bits.to_string(),
                    out.result.reported_rmse.to_string(),
                    out.result.holdout_rmse.to_string(),
                ])
                .data_err()?;
            }
        }
        let buf = w.into_inner().map_err(|e| anyhow!("{e}")).data_err()?;
        self.write("hpo-demo/selection.csv", &buf)
    }
}

/// Runs one stage and writes `effective_config.toml` and
/// `manifest.<stage>.json` next to its outputs.
pub fn run_subcommand(cmd: &Subcommand, cfg: &RunConfig, config_inputs: &[PathBuf]) -> Outcome<()> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut run = Run {
        cfg,
        out: cfg.out_dir().to_path_buf(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    for p in config_inputs {
        let bytes = fs::read(p)
            .with_context(|| format!("reading {}", p.display()))
            .config_err()?;
        run.record_input(p, &bytes);
    }
    match cmd {
        Subcommand::Clean => run.clean()?,
        Subcommand::Curate => run.curate()?,
        Subcommand::Split => run.split()?,
        Subcommand::TrainEval => run.train_eval()?,
        Subcommand::Eval {
            predictions,
            method,
        } => run.eval(predictions, method.as_deref())?,
        Subcommand::HpoDemo => run.hpo_demo()?,
        Subcommand::Report { reports } => run.report(reports)?,
    }
    let effective = toml::to_string(cfg)
        .context("serializing config")
        .config_err()?;
    run.write("effective_config.toml", effective.as_bytes())?;

    let manifest = Manifest {
        tool: "solcur",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cmd.name(),
        started_unix_s: started
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        wall_time_s: clock.elapsed().as_secs_f64(),
        seeds: Seeds {
            folds: cfg.seed,
            bootstrap: cfg.seed,
            hpo: cfg.seed,
        },
        inputs: std::mem::take(&mut run.inputs),
        outputs: run.outputs.clone(),
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .context("serializing manifest")
        .config_err()?;
    run.write(
        &format!("manifest.{}.json", cmd.name()),
        (json + "\n").as_bytes(),
    )?;
    log::info!(
        "{} finished in {:.2} s",
        cmd.name(),
        clock.elapsed().as_secs_f64()
    );
    Ok(())
}
