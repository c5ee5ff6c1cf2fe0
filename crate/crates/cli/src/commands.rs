//! Subcommand implementations.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ter_tsf_core::data::{
    attach_texts, chronological_split, load_dataset, znorm_apply, znorm_fit, Dataset, Sample,
    SplitTag,
};
use ter_tsf_core::dpo::{
    build_pairs, dpo_loss_and_grads, dpo_step, export_pairs, import_pairs, policy_margin,
    SampleRanking,
};
use ter_tsf_core::forecaster::{
    predict_with_text, train_forecaster, ForecasterParams, TextMode, TrainExample, Vocab,
};
use ter_tsf_core::generator::{
    BackendKind, GenerationRequest, GeneratorBackend, MockBackend, RemoteBackend, ToyLm,
    ToyLmBackend,
};
use ter_tsf_core::pipeline::{emit_report, evaluate, run_pipeline, Mode, PipelineConfig, Report};
use ter_tsf_core::reward::{
    rank_candidates, reward_accuracy, reward_relevance_with, ScoredCandidate,
};
use ter_tsf_core::textualize::{assemble_prompt, SerializedSeries, SeriesMeta};
use ter_tsf_core::{Error, Result};

use crate::config::FileConfig;
use crate::{Cli, Command};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let file = cli.effective_config()?;
    match &cli.command {
        Command::Ingest {
            series,
            texts,
            domain,
            frequency,
        } => ingest(&file, series, texts, domain, frequency),
        Command::Serialize { index, lookback } => serialize(&file, *index, *lookback),
        Command::Generate {
            index,
            lookback,
            k,
            policy,
        } => generate(&file, *index, *lookback, *k, policy.as_deref()),
        Command::Score {
            candidates,
            index,
            checkpoint,
        } => score(&file, candidates, *index, checkpoint.as_deref()),
        Command::Pair { scored } => pair(&file, scored, &cli.out),
        Command::TrainForecaster { horizon } => train_forecaster_cmd(&file, *horizon, &cli.out),
        Command::TrainDpo {
            pairs,
            policy,
            steps,
            lr,
            beta,
        } => train_dpo(&file, pairs, policy.as_deref(), *steps, *lr, *beta, &cli.out),
        Command::ExportPairs => export_pairs_cmd(&file, &cli.out),
        Command::Run => run(&file, &cli.out),
        Command::Evaluate { checkpoint, policy } => {
            evaluate_cmd(&file, checkpoint, policy.as_deref())
        }
        Command::Report { report } => report_cmd(report, &cli.out),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::data(format!("serialize output: {e}")))?;
    println!("{json}");
    Ok(())
}

fn ingest(
    file: &FileConfig,
    series: &Option<PathBuf>,
    texts: &Option<PathBuf>,
    domain: &Option<String>,
    frequency: &Option<String>,
) -> Result<()> {
    let dataset = match (series, texts) {
        (Some(series), Some(texts)) => {
            let domain = domain.clone().unwrap_or_else(|| {
                series
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "series".to_string())
            });
            let frequency = frequency.as_deref().unwrap_or("monthly").parse()?;
            let (s, t) = load_dataset(series, texts, &domain, frequency)?;
            Dataset::new(s, t)
        }
        _ => file.dataset()?,
    };
    let span = dataset.series.span();
    #[derive(Serialize)]
    struct Summary<'a> {
        domain: &'a str,
        frequency: &'a str,
        points: usize,
        span_start: String,
        span_end: String,
        texts: usize,
    }
    print_json(&Summary {
        domain: &dataset.series.domain,
        frequency: dataset.series.frequency.as_str(),
        points: dataset.series.len(),
        span_start: span.0.to_string(),
        span_end: span.1.to_string(),
        texts: dataset.texts.len(),
    })
}

/// Normalized inspection window over the full series. The split tag
/// reflects where the window starts so downstream tooling can refuse
/// leaked windows.
fn select_window(
    dataset: &Dataset,
    lookback: usize,
    horizon: usize,
    index: Option<usize>,
) -> Result<Sample> {
    let series = &dataset.series;
    let n = series.len();
    if n < lookback + horizon {
        return Err(Error::data(format!(
            "series of length {n} is shorter than lookback {lookback} + horizon {horizon}"
        )));
    }
    let (train_seg, val_seg, _) = chronological_split(series, (0.7, 0.1, 0.2))?;
    let stats = znorm_fit(&train_seg)?;
    let values = znorm_apply(&series.values, &stats);
    let max_start = n - lookback - horizon;
    let start = index.unwrap_or(max_start);
    if start > max_start {
        return Err(Error::data(format!(
            "window index {start} out of range 0..={max_start}"
        )));
    }
    let split = if start + lookback <= train_seg.len() {
        SplitTag::Train
    } else if start + lookback <= train_seg.len() + val_seg.len() {
        SplitTag::Val
    } else {
        SplitTag::Test
    };
    let sample = Sample {
        id: format!("{}-{}-{}", series.domain, split.as_str(), start),
        split,
        lookback: values[start..start + lookback].to_vec(),
        horizon_truth: values[start + lookback..start + lookback + horizon].to_vec(),
        lookback_span: (
            series.timestamps[start],
            series.timestamps[start + lookback - 1],
        ),
        texts: Vec::new(),
    };
    Ok(attach_texts(sample, &dataset.texts))
}

fn window_prompt(file: &FileConfig, sample: &Sample, dataset: &Dataset) -> Result<ter_tsf_core::textualize::Prompt> {
    let meta = SeriesMeta {
        frequency: dataset.series.frequency,
        span: sample.lookback_span,
    };
    let serialized = SerializedSeries::new(&sample.lookback, &meta)?;
    assemble_prompt(
        &serialized.s_txt,
        &serialized.a_txt,
        &sample.texts,
        &file.pipeline.task_prompt,
    )
}

fn serialize(file: &FileConfig, index: Option<usize>, lookback: Option<usize>) -> Result<()> {
    let dataset = file.dataset()?;
    let lookback = lookback.unwrap_or(file.pipeline.window.lookback);
    let sample = select_window(&dataset, lookback, 0, index)?;
    let prompt = window_prompt(file, &sample, &dataset)?;
    println!("{}", prompt.rendered);
    Ok(())
}

fn load_policy(path: Option<&Path>, file: &FileConfig) -> Result<ToyLm> {
    match path {
        Some(path) => ToyLm::load(path),
        None => ToyLm::seeded(ToyLm::default_vocab(), file.pipeline.seed, 0.5),
    }
}

fn generate(
    file: &FileConfig,
    index: Option<usize>,
    lookback: Option<usize>,
    k: Option<usize>,
    policy: Option<&Path>,
) -> Result<()> {
    let dataset = file.dataset()?;
    let lookback = lookback.unwrap_or(file.pipeline.window.lookback);
    let sample = select_window(&dataset, lookback, 0, index)?;
    let prompt = window_prompt(file, &sample, &dataset)?;
    let request = GenerationRequest {
        prompt: prompt.rendered,
        k: k.unwrap_or(file.pipeline.candidates_per_sample),
        temperature: file.pipeline.generation.temperature,
        max_tokens: file.pipeline.generation.max_tokens,
        seed: file.pipeline.seed,
    };
    let candidates = match file.pipeline.backend {
        BackendKind::Mock => {
            MockBackend::new(file.pipeline.reward.keywords.clone()).generate(&request)?
        }
        BackendKind::Toy => {
            let policy = load_policy(policy, file)?;
            ToyLmBackend::new(&policy).generate(&request)?
        }
        BackendKind::Remote => RemoteBackend::from_env()?.generate(&request)?,
    };
    print_json(&candidates)
}

#[derive(Serialize, Deserialize)]
struct ScoredLine {
    sample_id: String,
    prompt: String,
    body: String,
    generation_index: usize,
    r1: f64,
    r2: f64,
    r: f64,
}

fn score(
    file: &FileConfig,
    candidates_path: &Path,
    index: Option<usize>,
    checkpoint: Option<&Path>,
) -> Result<()> {
    let dataset = file.dataset()?;
    let reward = file.pipeline.effective_reward();

    // Candidate bodies, one JSON object per line.
    #[derive(Deserialize)]
    struct CandidateLine {
        body: String,
    }
    let reader = BufReader::new(std::fs::File::open(candidates_path)?);
    let mut bodies = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CandidateLine = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("line {}: invalid candidate: {e}", i + 1)))?;
        bodies.push(parsed.body);
    }
    if bodies.is_empty() {
        return Err(Error::data("candidate file contains no candidates"));
    }

    let loaded = match checkpoint {
        Some(path) => Some(ForecasterParams::load(path)?),
        None => None,
    };
    if loaded.is_none() && reward.w1 != 0.0 {
        return Err(Error::config(
            "accuracy reward needs --checkpoint; set w1 = 0 for relevance-only scoring",
        ));
    }
    let (lookback, horizon) = match &loaded {
        Some((cfg, _)) => (cfg.lookback_len, cfg.horizon),
        None => (
            file.pipeline.window.lookback,
            file.pipeline.window.horizons[0],
        ),
    };
    let sample = select_window(&dataset, lookback, horizon, index)?;
    let prompt = window_prompt(file, &sample, &dataset)?;

    for (i, body) in bodies.iter().enumerate() {
        let r1 = match &loaded {
            Some((fcfg, params)) => {
                let prediction = predict_with_text(fcfg, params, &sample.lookback, Some(body))?;
                reward_accuracy(&sample.horizon_truth, &prediction)?
            }
            None => 0.0,
        };
        let r2 = reward_relevance_with(body, &reward);
        let line = ScoredLine {
            sample_id: sample.id.clone(),
            prompt: prompt.rendered.clone(),
            body: body.clone(),
            generation_index: i,
            r1,
            r2,
            r: reward.w1 * r1 + reward.w2 * r2,
        };
        println!(
            "{}",
            serde_json::to_string(&line).map_err(|e| Error::data(e.to_string()))?
        );
    }
    Ok(())
}

fn pair(file: &FileConfig, scored_path: &Path, out: &Path) -> Result<()> {
    let _ = file;
    let reader = BufReader::new(std::fs::File::open(scored_path)?);
    let mut lines: Vec<ScoredLine> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        lines.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("line {}: invalid scored candidate: {e}", i + 1)))?,
        );
    }
    // Group by sample id, preserving first-seen order.
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::BTreeMap<String, Vec<ScoredLine>> = Default::default();
    for line in lines {
        if !groups.contains_key(&line.sample_id) {
            order.push(line.sample_id.clone());
        }
        groups.entry(line.sample_id.clone()).or_default().push(line);
    }
    let mut rankings = Vec::new();
    for sample_id in order {
        let group = groups.remove(&sample_id).unwrap();
        if group.len() < 2 {
            continue;
        }
        let prompt = group[0].prompt.clone();
        let scored: Vec<ScoredCandidate> = group
            .into_iter()
            .map(|l| ScoredCandidate {
                candidate: ter_tsf_core::generator::CandidateText {
                    body: l.body,
                    backend_id: "scored".to_string(),
                    generation_index: l.generation_index,
                },
                r1: l.r1,
                r2: l.r2,
                r: l.r,
            })
            .collect();
        let ranking = rank_candidates(&scored)?;
        rankings.push(SampleRanking {
            sample_id,
            prompt,
            scored,
            ranking,
        });
    }
    let (pairs, skipped) = build_pairs(&rankings, 0);
    std::fs::create_dir_all(out)?;
    let path = out.join("pairs.jsonl");
    let written = export_pairs(&pairs, &path)?;
    eprintln!(
        "wrote {written} pair(s) to {} ({skipped} degenerate sample(s) skipped)",
        path.display()
    );
    Ok(())
}

/// (train, val, test) example sets plus the text vocabulary.
type PreparedExamples = (Vec<TrainExample>, Vec<TrainExample>, Vec<TrainExample>, Vocab);

/// Split, normalize, window, and resolve text sources the same way the
/// pipeline does, for one horizon.
fn prepare_examples(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    horizon: usize,
    text_mode: TextMode,
) -> Result<PreparedExamples> {
    let (train_seg, val_seg, test_seg) = chronological_split(&dataset.series, (0.7, 0.1, 0.2))?;
    let stats = znorm_fit(&train_seg)?;
    let cut = |seg: &ter_tsf_core::data::TimeSeries, tag: SplitTag| -> Vec<Sample> {
        let normalized = seg.with_values(znorm_apply(&seg.values, &stats));
        ter_tsf_core::data::make_windows(&normalized, cfg.window.lookback, horizon, cfg.window.stride, tag)
            .into_iter()
            .map(|s| attach_texts(s, &dataset.texts))
            .collect()
    };
    let to_examples = |samples: &[Sample]| -> Vec<TrainExample> {
        samples
            .iter()
            .map(|s| TrainExample {
                lookback: s.lookback.clone(),
                truth: s.horizon_truth.clone(),
                text: match text_mode {
                    TextMode::None => None,
                    _ => Some(s.joined_text().unwrap_or_default()),
                },
                split: s.split,
            })
            .collect()
    };
    let train = cut(&train_seg, SplitTag::Train);
    let val = cut(&val_seg, SplitTag::Val);
    let test = cut(&test_seg, SplitTag::Test);
    if train.is_empty() || test.is_empty() {
        return Err(Error::data(format!(
            "horizon {horizon}: splits too short for lookback {}",
            cfg.window.lookback
        )));
    }
    let corpus: Vec<String> = train.iter().filter_map(|s| s.joined_text()).collect();
    let vocab = if text_mode == TextMode::None {
        Vocab::build([], &[])
    } else {
        Vocab::build(corpus.iter().map(String::as_str), &[])
    };
    Ok((to_examples(&train), to_examples(&val), to_examples(&test), vocab))
}

fn train_forecaster_cmd(file: &FileConfig, horizon: Option<usize>, out: &Path) -> Result<()> {
    let cfg = &file.pipeline;
    let text_mode = match cfg.mode {
        Mode::TsfOnly => TextMode::None,
        Mode::TsfText => TextMode::Raw,
        _ => {
            return Err(Error::config(
                "train-forecaster supports --mode tsf_only or tsf_text; use `run` for generation modes",
            ))
        }
    };
    let dataset = file.dataset()?;
    let horizon = horizon.unwrap_or(cfg.window.horizons[0]);
    let (train, val, _, vocab) = prepare_examples(&dataset, cfg, horizon, text_mode)?;
    let fcfg = cfg.forecaster.to_config(cfg.window.lookback, horizon, text_mode);
    let (params, stats) = train_forecaster(&train, &val, &fcfg, &cfg.train, vocab, cfg.seed)?;
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("forecaster_h{horizon}.json"));
    params.save(&fcfg, &path)?;
    eprintln!("saved checkpoint to {}", path.display());
    print_json(&stats)
}

fn train_dpo(
    file: &FileConfig,
    pairs_path: &Path,
    policy_path: Option<&Path>,
    steps: Option<usize>,
    lr: Option<f64>,
    beta: Option<f64>,
    out: &Path,
) -> Result<()> {
    let pairs = import_pairs(pairs_path)?;
    if pairs.is_empty() {
        return Err(Error::data("pairs file contains no preference pairs"));
    }
    let mut dpo_cfg = file.pipeline.dpo;
    if let Some(steps) = steps {
        dpo_cfg.steps_per_round = steps;
    }
    if let Some(lr) = lr {
        dpo_cfg.learning_rate = lr;
    }
    if let Some(beta) = beta {
        dpo_cfg.beta = beta;
    }
    let mut policy = load_policy(policy_path, file)?;
    let reference = policy.clone();
    let (initial_loss, _) = dpo_loss_and_grads(&policy, &reference, &pairs, dpo_cfg.beta)?;
    let margin_of = |policy: &ToyLm| -> Result<f64> {
        let mut total = 0.0;
        for p in &pairs {
            total += policy_margin(policy, p)?;
        }
        Ok(total / pairs.len() as f64)
    };
    let initial_margin = margin_of(&policy)?;
    let mut final_loss = initial_loss;
    for _ in 0..dpo_cfg.steps_per_round {
        final_loss = dpo_step(&mut policy, &reference, &pairs, &dpo_cfg)?;
    }
    let final_margin = margin_of(&policy)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("policy.json");
    policy.save(&path)?;
    eprintln!("saved policy to {}", path.display());
    #[derive(Serialize)]
    struct DpoSummary {
        pairs: usize,
        steps: usize,
        initial_loss: f64,
        final_loss: f64,
        initial_margin: f64,
        final_margin: f64,
    }
    print_json(&DpoSummary {
        pairs: pairs.len(),
        steps: dpo_cfg.steps_per_round,
        initial_loss,
        final_loss,
        initial_margin,
        final_margin,
    })
}

fn export_pairs_cmd(file: &FileConfig, out: &Path) -> Result<()> {
    let cfg = &file.pipeline;
    if !cfg.mode.uses_generation() {
        return Err(Error::config(
            "export-pairs needs a generation mode (tsf_ter, tsf_ter_r1, tsf_ter_r12)",
        ));
    }
    let dataset = file.dataset()?;
    let run = run_pipeline(cfg, &dataset)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("pairs.jsonl");
    let written = export_pairs(&run.pairs, &path)?;
    eprintln!("wrote {written} pair(s) to {}", path.display());
    Ok(())
}

fn run(file: &FileConfig, out: &Path) -> Result<()> {
    let cfg = &file.pipeline;
    let dataset = file.dataset()?;
    let run = run_pipeline(cfg, &dataset)?;
    let mut paths = emit_report(&run.report, out)?;
    for (fcfg, params) in &run.forecasters {
        let path = out.join(format!("forecaster_h{}.json", fcfg.horizon));
        params.save(fcfg, &path)?;
        paths.push(path);
    }
    for (policy, report) in run.policies.iter().zip(&run.report.horizons) {
        if let Some(policy) = policy {
            let path = out.join(format!("policy_h{}.json", report.horizon));
            policy.save(&path)?;
            paths.push(path);
        }
    }
    if !run.pairs.is_empty() {
        let path = out.join("pairs.jsonl");
        export_pairs(&run.pairs, &path)?;
        paths.push(path);
    }
    for path in &paths {
        eprintln!("wrote {}", path.display());
    }
    println!(
        "{} mode={} backend={} seed={} avg_mse={:.6} avg_mae={:.6}",
        run.report.domain,
        run.report.mode.as_str(),
        run.report.backend.as_str(),
        run.report.seed,
        run.report.avg_mse,
        run.report.avg_mae
    );
    Ok(())
}

fn evaluate_cmd(file: &FileConfig, checkpoint: &Path, policy: Option<&Path>) -> Result<()> {
    let dataset = file.dataset()?;
    let (fcfg, params) = ForecasterParams::load(checkpoint)?;
    let cfg = &file.pipeline;
    let mut window_cfg = cfg.clone();
    window_cfg.window.lookback = fcfg.lookback_len;
    let (_, _, mut test, _) = prepare_examples(&dataset, &window_cfg, fcfg.horizon, fcfg.text_mode)?;

    if fcfg.text_mode == TextMode::Reinforced {
        // Regenerate one reinforced text per test window with the
        // configured backend.
        let toy_policy;
        let toy_backend;
        let mock_backend;
        let remote_backend;
        let backend: &dyn GeneratorBackend = match cfg.backend {
            BackendKind::Toy => {
                toy_policy = load_policy(policy, file)?;
                toy_backend = ToyLmBackend::new(&toy_policy);
                &toy_backend
            }
            BackendKind::Mock => {
                mock_backend = MockBackend::new(cfg.reward.keywords.clone());
                &mock_backend
            }
            BackendKind::Remote => {
                remote_backend = RemoteBackend::from_env()?;
                &remote_backend
            }
        };

        // Rebuild the test samples to access their prompts.
        let (train_seg, _, test_seg) = chronological_split(&dataset.series, (0.7, 0.1, 0.2))?;
        let stats = znorm_fit(&train_seg)?;
        let normalized = test_seg.with_values(znorm_apply(&test_seg.values, &stats));
        let test_samples: Vec<Sample> = ter_tsf_core::data::make_windows(
            &normalized,
            fcfg.lookback_len,
            fcfg.horizon,
            window_cfg.window.stride,
            SplitTag::Test,
        )
        .into_iter()
        .map(|s| attach_texts(s, &dataset.texts))
        .collect();

        for (i, (example, sample)) in test.iter_mut().zip(&test_samples).enumerate() {
            let prompt = window_prompt(file, sample, &dataset)?;
            let request = GenerationRequest {
                prompt: prompt.rendered,
                k: 1,
                temperature: cfg.generation.temperature,
                max_tokens: cfg.generation.max_tokens,
                seed: cfg.seed.wrapping_add(i as u64),
            };
            let mut candidates = backend.generate(&request)?;
            example.text = Some(candidates.remove(0).body);
        }
    }

    let metrics = evaluate(&fcfg, &params, &test)?;
    print_json(&metrics)
}

fn report_cmd(report_path: &Path, out: &Path) -> Result<()> {
    let report = Report::from_json(&std::fs::read_to_string(report_path)?)?;
    let paths = emit_report(&report, out)?;
    for path in &paths {
        eprintln!("wrote {}", path.display());
    }
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "domain={} mode={} seed={}", report.domain, report.mode.as_str(), report.seed)?;
    for h in &report.horizons {
        writeln!(stdout, "  horizon {:>4}: mse {:.6} mae {:.6}", h.horizon, h.mse, h.mae)?;
    }
    writeln!(stdout, "  {:>12}: mse {:.6} mae {:.6}", "average", report.avg_mse, report.avg_mae)?;
    Ok(())
}
