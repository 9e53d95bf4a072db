//! Pipeline stages and their on-disk artifacts.
//!
//! `prepare` runs features, denoising, selection, windowing and the
//! autoencoders; `train` fits the classifier; `backtest` scores the held-out
//! windows for each θ; `report` collects the tables. Every artifact carries
//! the hash of the config that produced it and consumers refuse a mismatch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candlenet::autoencoder::{build_autoencoder, train_autoencoder, AutoencoderModel};
use candlenet::classifier::{ClassifierInput, ClassifierModel};
use candlenet::dataset::{make_windows, normalize, NormStats, WindowedDataset};
use candlenet::denoise::{denoise_column, DenoiseMode, WaveletConfig};
use candlenet::feature_select::{fit_gbdt, select_top_k, selection_matrix};
use candlenet::indicators::{generate_features, FeatureClass, FeatureTable};
use candlenet::market_data::{load_csv, save_csv, split_point, synthetic_sine_market};
use candlenet::nn::{Checkpoint, Tensor};
use candlenet::strategy::{run_backtest, BacktestReport, Instance, StrategyConfig};
use candlenet::trainer::{sigma_star, train_loop, TrainOutcome, Verdict};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, StageExt};

pub const TRAIN_SET: &str = "dataset_train.bin";
pub const TEST_SET: &str = "dataset_test.bin";
pub const AE_PRICE: &str = "ae_price.ckpt";
pub const AE_NON_PRICE: &str = "ae_non_price.ckpt";
pub const CLASSIFIER: &str = "classifier.ckpt";
pub const IMPORTANCE: &str = "importance.csv";
pub const FEATURES: &str = "features.csv";
pub const NORM_STATS: &str = "norm_stats.json";
pub const PREPARE_SUMMARY: &str = "prepare.json";
pub const LOSS_HISTORY: &str = "loss_history.csv";
pub const TRAINING: &str = "training.json";
pub const BACKTEST_DIR: &str = "backtest";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_COPY: &str = "config.toml";

/// Deterministic per-purpose seed.
pub fn sub_seed(seed: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("missing artifact {}: {e}; run the earlier stage first", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn check_hash(artifact: &Path, found: Option<&str>, expected: &str) -> Result<(), CliError> {
    match found {
        Some(h) if h == expected => Ok(()),
        Some(h) => Err(CliError::Config(format!(
            "{} was built with config hash {}, current config hashes to {}; rerun the producing stage",
            artifact.display(),
            &h[..h.len().min(12)],
            &expected[..12]
        ))),
        None => Err(CliError::Data(format!("{} carries no config hash", artifact.display()))),
    }
}

fn load_checkpoint(path: &Path, expected_hash: &str) -> Result<Checkpoint, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "missing artifact {}; run the earlier stage first",
            path.display()
        )));
    }
    let ckpt = Checkpoint::load(path).stage("load")?;
    check_hash(path, ckpt.meta.get("config_hash").map(String::as_str), expected_hash)?;
    Ok(ckpt)
}

fn load_dataset(path: &Path, expected_hash: &str) -> Result<WindowedDataset, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "missing artifact {}; run `prepare` first",
            path.display()
        )));
    }
    let ds = WindowedDataset::load(path).stage("load")?;
    check_hash(path, ds.meta.get("config_hash").map(String::as_str), expected_hash)?;
    Ok(ds)
}

/// Writes `manifest.json`: config hashes and the sha256 of every artifact.
pub fn write_manifest(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = cfg.run_dir();
    let mut files = Vec::new();
    collect_files(&dir, &dir, &mut files)?;
    files.sort();
    let mut artifacts = BTreeMap::new();
    for rel in files {
        if rel == MANIFEST {
            continue;
        }
        let path = dir.join(&rel);
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        artifacts.insert(rel, hex::encode(Sha256::digest(&bytes)));
    }
    #[derive(Serialize)]
    struct Manifest {
        run_id: String,
        prepare_hash: String,
        train_hash: String,
        artifacts: BTreeMap<String, String>,
    }
    write_json(
        &dir.join(MANIFEST),
        &Manifest {
            run_id: cfg.run_id(),
            prepare_hash: cfg.prepare_hash(),
            train_hash: cfg.train_hash(),
            artifacts,
        },
    )
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<(), CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).expect("under root");
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub path: PathBuf,
    pub candles: usize,
    pub first_timestamp: i64,
    pub last_timestamp: i64,
    pub timeframe: i64,
}

/// Validates the configured CSV and writes a normalised copy into the run
/// directory.
pub fn ingest(cfg: &PipelineConfig) -> Result<IngestSummary, CliError> {
    let series = load_series(cfg)?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    save_csv(&series, &dir.join("candles.csv")).stage("ingest")?;
    let summary = IngestSummary {
        path: cfg.data.path.clone(),
        candles: series.len(),
        first_timestamp: series.candles()[0].timestamp,
        last_timestamp: series.candles()[series.len() - 1].timestamp,
        timeframe: series.timeframe,
    };
    write_json(&dir.join("ingest.json"), &summary)?;
    write_manifest(cfg)?;
    Ok(summary)
}

/// Writes the synthetic two-tone market to `path`.
pub fn write_synthetic(path: &Path, candles: usize, timeframe: i64, seed: u64) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    save_csv(&synthetic_sine_market(candles, timeframe, seed), path).stage("ingest")
}

fn load_series(cfg: &PipelineConfig) -> Result<candlenet::market_data::CandleSeries, CliError> {
    load_csv(&cfg.data.path, cfg.data.timeframe, cfg.data.gaps).stage("ingest")
}

/// Denoises every column except volume (and OHLCV prices unless enabled),
/// one column per worker.
pub fn denoise_table(table: &FeatureTable, wavelet: &WaveletConfig, denoise_ohlcv: bool) -> candlenet::Result<FeatureTable> {
    let mut out = table.clone();
    let targets: Vec<usize> = table
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.name != "volume" && (denoise_ohlcv || c.class != FeatureClass::Ohlcv))
        .map(|(i, _)| i)
        .collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(targets.len().max(1));
    let results: Vec<candlenet::Result<(usize, Vec<f64>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let targets = &targets;
                s.spawn(move || {
                    targets
                        .iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|&i| denoise_column(&table.columns()[i].values, wavelet).map(|v| (i, v)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("denoise worker panicked"))
            .collect()
    });
    for r in results {
        let (i, values) = r?;
        out.columns_mut()[i].values = values;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AeSummary {
    pub in_channels: usize,
    pub code_channels: usize,
    pub encoder_params: usize,
    pub decoder_params: usize,
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub config_hash: String,
    pub candles: usize,
    pub feature_rows: usize,
    pub generated_features: usize,
    pub split_row: usize,
    pub selected_features: Vec<String>,
    pub channels: [usize; 3],
    pub train_instances: usize,
    pub test_instances: usize,
    pub train_up_share: f64,
    pub wavelet_mode: DenoiseMode,
    pub ae_price: AeSummary,
    pub ae_non_price: AeSummary,
}

fn train_group_ae(
    cfg: &PipelineConfig,
    name: &str,
    data: &Tensor,
) -> candlenet::Result<(AutoencoderModel, Vec<f64>)> {
    let in_ch = data.dim(1);
    let mut code = cfg.autoencoder.code_channels;
    if code >= in_ch {
        if in_ch < 2 {
            return Err(candlenet::Error::InvalidArgument(format!(
                "the {name} group has {in_ch} channel; raise gbdt.top_k so it holds at least 2"
            )));
        }
        log::warn!("{name} group has only {in_ch} channels; shrinking its code to {}", in_ch - 1);
        code = in_ch - 1;
    }
    let mut ae = build_autoencoder(name, in_ch, code, cfg.dataset.window, sub_seed(cfg.seed, name))?;
    let losses = train_autoencoder(&mut ae, data, &cfg.autoencoder, sub_seed(cfg.seed, &format!("{name}.batches")))?;
    Ok((ae, losses))
}

fn ae_summary(ae: &AutoencoderModel, losses: &[f64]) -> AeSummary {
    let (e, d) = ae.parameter_counts();
    AeSummary {
        in_channels: ae.in_channels,
        code_channels: ae.code_channels,
        encoder_params: e,
        decoder_params: d,
        epochs: losses.len(),
        initial_loss: losses.first().copied().unwrap_or(f64::NAN),
        final_loss: losses.last().copied().unwrap_or(f64::NAN),
    }
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        s.push_str(&format!("{},{l}\n", i + 1));
    }
    s
}

pub fn prepare(cfg: &PipelineConfig) -> Result<PrepareSummary, CliError> {
    let hash = cfg.prepare_hash();
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    write_text(&dir.join(CONFIG_COPY), &cfg.to_toml())?;

    let series = load_series(cfg)?;
    log::info!("loaded {} candles from {}", series.len(), cfg.data.path.display());
    let grid = cfg.indicators.grid()?;
    let table = generate_features(&series, &grid).stage("features")?;
    let raw_closes = table.closes().stage("features")?.to_vec();
    let generated = table.generated_names().len();

    let wavelet = cfg.wavelet.wavelet();
    log::info!("{} feature rows; denoising ({:?} mode)", table.len(), wavelet.mode);
    let denoised = denoise_table(&table, &wavelet, cfg.wavelet.denoise_ohlcv).stage("denoise")?;
    let split_row = split_point(table.len(), cfg.data.test_fraction).stage("split")?;

    log::info!("fitting feature selector on {split_row} rows");
    let (x, y) = selection_matrix(&denoised.slice_rows(0..split_row)).stage("select")?;
    let gbdt = fit_gbdt(&x, &y, &cfg.gbdt).stage("select")?;
    write_text(&dir.join(IMPORTANCE), &gbdt.importance_csv())?;
    let k = cfg.gbdt.top_k.min(generated);
    if k < cfg.gbdt.top_k {
        log::warn!("only {generated} generated features; keeping all of them");
    }
    let selected = select_top_k(&gbdt, &denoised, k).stage("select")?;
    selected.write_csv(&dir.join(FEATURES)).stage("select")?;

    let mut ds = make_windows(&selected, &raw_closes, cfg.dataset.window, cfg.dataset.stride).stage("windows")?;
    ds.meta.insert("config_hash".into(), hash.clone());
    // Train windows have their label candle before the split; test windows
    // end at or after it. The one window straddling the boundary is dropped.
    let train_n = ds.end_rows.iter().take_while(|&&r| r + 1 < split_row).count();
    let test_start = ds.end_rows.iter().take_while(|&&r| r < split_row).count();
    if train_n == 0 || test_start == ds.len() {
        return Err(CliError::Data(format!(
            "split at row {split_row} leaves no train or no test windows; use more data"
        )));
    }
    let train = ds.subset(0..train_n).stage("windows")?;
    let test = ds.subset(test_start..ds.len()).stage("windows")?;
    let stats = NormStats::fit(&train).stage("normalize")?;
    let train = normalize(&train, &stats).stage("normalize")?;
    let test = normalize(&test, &stats).stage("normalize")?;
    let groups = train.split_channels().stage("split_channels")?;
    log::info!("training autoencoders on {} windows, channels {:?}", train.len(), train.group_sizes());

    let (price, non_price) = std::thread::scope(|s| {
        let p = s.spawn(|| train_group_ae(cfg, "price", &groups.price_like));
        let n = s.spawn(|| train_group_ae(cfg, "non_price", &groups.non_price_like));
        (p.join().expect("autoencoder worker panicked"), n.join().expect("autoencoder worker panicked"))
    });
    let (ae_p, loss_p) = price.stage("autoencoder")?;
    let (ae_n, loss_n) = non_price.stage("autoencoder")?;

    train.save(&dir.join(TRAIN_SET)).stage("windows")?;
    test.save(&dir.join(TEST_SET)).stage("windows")?;
    let mut meta = BTreeMap::new();
    meta.insert("config_hash".to_string(), hash.clone());
    ae_p.to_checkpoint(meta.clone()).save(&dir.join(AE_PRICE)).stage("autoencoder")?;
    ae_n.to_checkpoint(meta).save(&dir.join(AE_NON_PRICE)).stage("autoencoder")?;
    write_text(&dir.join("ae_price_loss.csv"), &loss_csv(&loss_p))?;
    write_text(&dir.join("ae_non_price_loss.csv"), &loss_csv(&loss_n))?;

    #[derive(Serialize)]
    struct StatsFile<'a> {
        config_hash: &'a str,
        stats: &'a NormStats,
    }
    write_json(&dir.join(NORM_STATS), &StatsFile { config_hash: &hash, stats: &stats })?;

    let summary = PrepareSummary {
        config_hash: hash,
        candles: series.len(),
        feature_rows: table.len(),
        generated_features: generated,
        split_row,
        selected_features: selected.generated_names().iter().map(|s| s.to_string()).collect(),
        channels: train.group_sizes(),
        train_instances: train.len(),
        test_instances: test.len(),
        train_up_share: train.labels.iter().sum::<f64>() / train.len() as f64,
        wavelet_mode: cfg.wavelet.mode,
        ae_price: ae_summary(&ae_p, &loss_p),
        ae_non_price: ae_summary(&ae_n, &loss_n),
    };
    write_json(&dir.join(PREPARE_SUMMARY), &summary)?;
    write_manifest(cfg)?;
    Ok(summary)
}

/// Loads a prepared dataset and encodes it into classifier input.
fn encoded(cfg: &PipelineConfig, which: &str) -> Result<(WindowedDataset, ClassifierInput), CliError> {
    let dir = cfg.run_dir();
    let hash = cfg.prepare_hash();
    let ds = load_dataset(&dir.join(which), &hash)?;
    let mut ae_p = AutoencoderModel::from_checkpoint(&load_checkpoint(&dir.join(AE_PRICE), &hash)?).stage("load")?;
    let mut ae_n = AutoencoderModel::from_checkpoint(&load_checkpoint(&dir.join(AE_NON_PRICE), &hash)?).stage("load")?;
    let groups = ds.split_channels().stage("split_channels")?;
    let input = ClassifierInput {
        ohlcv: groups.ohlcv,
        price_code: ae_p.encode(&groups.price_like).stage("encode")?,
        non_price_code: ae_n.encode(&groups.non_price_like).stage("encode")?,
    };
    Ok((ds, input))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub config_hash: String,
    pub verdict: Verdict,
    pub converged: bool,
    pub epochs: usize,
    pub loss_e: f64,
    pub loss_10: f64,
    pub sigma_star: f64,
    pub zeta: f64,
    pub train_accuracy: f64,
    pub parameters: usize,
}

pub fn train(cfg: &PipelineConfig) -> Result<TrainingSummary, CliError> {
    let dir = cfg.run_dir();
    let (ds, input) = encoded(cfg, TRAIN_SET)?;
    let groups = [input.ohlcv.dim(1), input.price_code.dim(1), input.non_price_code.dim(1)];
    let mut model = ClassifierModel::new(
        groups,
        ds.window,
        cfg.classifier.clone(),
        sub_seed(cfg.seed, "classifier"),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    log::info!("training on {} windows", ds.len());
    let outcome: TrainOutcome = train_loop(&mut model, &input, &ds.labels, &cfg.train).stage("train")?;
    let last = *outcome.final_record().expect("at least one epoch");

    let sigmas = model.predict_batch(&input, 256).stage("train")?;
    let hits = sigmas
        .iter()
        .zip(&ds.labels)
        .filter(|(s, y)| (**s >= 0.5) == (**y == 1.0))
        .count();

    let hash = cfg.train_hash();
    let mut meta = BTreeMap::new();
    meta.insert("config_hash".to_string(), hash.clone());
    meta.insert("verdict".to_string(), outcome.verdict.to_string());
    model.to_checkpoint(meta).stage("train")?.save(&dir.join(CLASSIFIER)).stage("train")?;
    outcome.write_loss_csv(&dir.join(LOSS_HISTORY)).stage("train")?;
    let summary = TrainingSummary {
        config_hash: hash,
        verdict: outcome.verdict,
        converged: outcome.converged,
        epochs: outcome.history.len(),
        loss_e: last.loss_e,
        loss_10: last.loss_10,
        sigma_star: last.sigma_star,
        zeta: cfg.train.zeta,
        train_accuracy: hits as f64 / ds.len() as f64,
        parameters: model.params().iter().map(|p| p.value.len()).sum(),
    };
    write_json(&dir.join(TRAINING), &summary)?;
    write_manifest(cfg)?;
    Ok(summary)
}

/// Under-fitted verdicts become an error after artifacts are written.
pub fn gate(summary: &TrainingSummary) -> Result<(), CliError> {
    match summary.verdict {
        Verdict::WellTrained => Ok(()),
        Verdict::UnderFitted => Err(CliError::UnderFitted {
            sigma_star: summary.sigma_star,
            zeta: summary.zeta,
            advice: "train longer (train.max_epochs), enlarge the model, or lower train.zeta",
        }),
    }
}

pub fn theta_label(theta: f64) -> String {
    format!("{theta:.4}")
}

pub fn backtest(cfg: &PipelineConfig) -> Result<Vec<BacktestReport>, CliError> {
    let dir = cfg.run_dir();
    if cfg.wavelet.mode == DenoiseMode::Global {
        log::warn!("global denoising lets features see later candles; backtest figures are optimistic (set wavelet.mode = \"causal\")");
    }
    let (ds, input) = encoded(cfg, TEST_SET)?;
    let ckpt = load_checkpoint(&dir.join(CLASSIFIER), &cfg.train_hash())?;
    let mut model = ClassifierModel::from_checkpoint(&ckpt).stage("load")?;
    let sigmas = model.predict_batch(&input, 256).stage("backtest")?;
    let instances: Vec<Instance> = (0..ds.len())
        .map(|i| Instance {
            t: ds.end_timestamps[i],
            sigma: sigmas[i],
            close_now: ds.close_now[i],
            close_next: ds.close_next[i],
            label: ds.labels[i],
        })
        .collect();
    let mut reports = Vec::new();
    let out = dir.join(BACKTEST_DIR);
    for &theta in &cfg.strategy.thetas {
        let scfg = StrategyConfig {
            theta,
            fee_rate: cfg.strategy.fee_rate,
            profit_saving: cfg.strategy.profit_saving,
            initial_margin: cfg.strategy.initial_margin,
        };
        let report = run_backtest(&instances, &scfg).stage("backtest")?;
        let label = theta_label(theta);
        #[derive(Serialize)]
        struct Tagged<'a> {
            config_hash: String,
            #[serde(flatten)]
            report: &'a BacktestReport,
        }
        write_json(
            &out.join(format!("theta_{label}.json")),
            &Tagged {
                config_hash: cfg.train_hash(),
                report: &report,
            },
        )?;
        write_text(&out.join(format!("theta_{label}_ledger.csv")), &report.ledger_csv())?;
        reports.push(report);
    }
    write_manifest(cfg)?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub theta: f64,
    pub upper: f64,
    pub lower: f64,
    pub instances: usize,
    pub trades: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub converged_loss: f64,
    pub sigma_star: f64,
    pub pnl_compounding: f64,
    pub pnl_profit_saving: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub config_hash: String,
    pub verdict: Verdict,
    pub epochs: usize,
    pub rows: Vec<ReportRow>,
}

pub fn report(cfg: &PipelineConfig) -> Result<RunReport, CliError> {
    let dir = cfg.run_dir();
    let training: TrainingSummary = read_json(&dir.join(TRAINING))?;
    check_hash(&dir.join(TRAINING), Some(&training.config_hash), &cfg.train_hash())?;
    let mut rows = Vec::new();
    for &theta in &cfg.strategy.thetas {
        let path = dir.join(BACKTEST_DIR).join(format!("theta_{}.json", theta_label(theta)));
        #[derive(Deserialize)]
        struct Tagged {
            config_hash: String,
            #[serde(flatten)]
            report: BacktestReport,
        }
        let t: Tagged = read_json(&path)?;
        check_hash(&path, Some(&t.config_hash), &cfg.train_hash())?;
        let r = t.report;
        rows.push(ReportRow {
            theta: r.theta,
            upper: r.thresholds.upper,
            lower: r.thresholds.lower,
            instances: r.instances,
            trades: r.trades,
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            converged_loss: training.loss_10,
            sigma_star: sigma_star(training.loss_10).stage("report")?,
            pnl_compounding: r.pnl_compounding,
            pnl_profit_saving: r.pnl_profit_saving,
        });
    }
    let report = RunReport {
        run_id: cfg.run_id(),
        config_hash: cfg.train_hash(),
        verdict: training.verdict,
        epochs: training.epochs,
        rows,
    };
    write_json(&dir.join(REPORT_JSON), &report)?;
    let mut csv = String::from(
        "theta,upper,lower,instances,trades,accuracy,precision,recall,f1,converged_loss,sigma_star,pnl_compounding,pnl_profit_saving\n",
    );
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.theta,
            r.upper,
            r.lower,
            r.instances,
            r.trades,
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            r.converged_loss,
            r.sigma_star,
            r.pnl_compounding,
            r.pnl_profit_saving
        ));
    }
    write_text(&dir.join(REPORT_CSV), &csv)?;
    write_manifest(cfg)?;
    Ok(report)
}

/// Every stage in order. Reports are written even for an under-fitted
/// model; the verdict is returned for the caller to act on.
pub fn run_all(cfg: &PipelineConfig) -> Result<(TrainingSummary, RunReport), CliError> {
    prepare(cfg)?;
    let training = train(cfg)?;
    backtest(cfg)?;
    let report = report(cfg)?;
    Ok((training, report))
}
