use std::path::{Path, PathBuf};

use crisiskd::analytics::{
    label_corpus, monthly_trend, ro_ratio, ro_table_csv, top_regions, trend_svg, GeoRecord, RegionKey, TrendBy,
};
use crisiskd::bench::{render_table, run_benchmark, speedup_vs_baseline, BenchConfig, BenchReport};
use crisiskd::corpus::{
    normalize_text, read_jsonl, train_tokenizer, write_jsonl, RawRecord, Tokenizer, DEFAULT_MAX_LENGTH,
    DEFAULT_VOCAB_SIZE,
};
use crisiskd::dataset_builder::{
    agreement_filter, attach_text, read_label_csv, stratified_validation_sample, validation_report,
    AnnotationMatrix, Label, SamplePlan,
};
use crisiskd::distill::{compare_pooling, distill_generic, distill_task, GenericDistillConfig, LossTrace, TaskDistillConfig};
use crisiskd::encoder::{DownsampleProjection, EncoderConfig, EncoderModel, ModelBundle, ModelPaths, PoolingMode};
use crisiskd::finetune::{
    finetune_run, repeat_finetune, split_stratified, Example, FinetuneConfig, SequenceClassifier, SplitSpec, Splits,
};
use crisiskd::rng;
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::config::{pick, FileConfig, DEFAULT_SEED};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

struct Ctx {
    seed: u64,
    out: PathBuf,
    file: FileConfig,
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = pick(cli.seed, file.seed, DEFAULT_SEED);
    let out = pick(cli.out.clone(), file.out.clone(), PathBuf::from("out"));
    let ctx = Ctx { seed, out, file };
    match cli.command {
        Command::BuildDataset(a) => build_dataset(&ctx, a),
        Command::Validate(a) => validate(&ctx, a),
        Command::Tokenizer(a) => tokenizer(&ctx, a),
        Command::TrainTeacher(a) => train_teacher(&ctx, a),
        Command::Finetune(a) => finetune(&ctx, a),
        Command::Distill(a) => distill(&ctx, a),
        Command::ComparePooling(a) => compare(&ctx, a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Analyze(a) => analyze(&ctx, a),
    }
}

fn require(path: &Path) -> CliResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn prepare_out(ctx: &Ctx) -> CliResult<&Path> {
    std::fs::create_dir_all(&ctx.out).map_err(|e| CliError::io(ctx.out.display().to_string(), e))?;
    Ok(&ctx.out)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(crisiskd::Error::from)?;
    write_text(path, &(text + "\n"))
}

fn to_value<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn build_dataset(ctx: &Ctx, a: BuildDatasetArgs) -> CliResult<()> {
    let matrix = AnnotationMatrix::from_csv(require(&a.annotations)?)?;
    let margin = pick(a.margin, ctx.file.sampling.margin, 0.03);
    let confidence = pick(a.confidence, ctx.file.sampling.confidence, 0.95);
    let out = prepare_out(ctx)?;
    let agreed = agreement_filter(&matrix);
    let mut manifest = RunManifest::new(
        "build-dataset",
        ctx.seed,
        json!({ "margin": margin, "confidence": confidence, "annotators": matrix.annotators() }),
    );
    manifest.input(&a.annotations)?;

    let records: Vec<RawRecord> = match &a.corpus {
        Some(path) => {
            manifest.input(require(path)?)?;
            attach_text(&agreed.records, &read_jsonl(path)?)?
        }
        None => agreed
            .records
            .iter()
            .map(|r| RawRecord {
                label: Some(r.label),
                ..RawRecord::new(r.id.clone(), String::new())
            })
            .collect(),
    };
    write_jsonl(&out.join("t_agree.jsonl"), &records)?;
    let counts: serde_json::Map<String, serde_json::Value> = agreed
        .class_counts
        .iter()
        .map(|(l, c)| (l.as_str().to_string(), json!(c)))
        .collect();
    write_json(
        &out.join("class_counts.json"),
        &json!({ "total": matrix.len(), "agreed": agreed.records.len(), "dropped": agreed.dropped, "class_counts": counts }),
    )?;
    if !agreed.records.is_empty() {
        let plan = SamplePlan::new(&agreed.class_counts, margin, confidence)?;
        let mut r = rng::stream(ctx.seed, "validation_sample");
        let sample = stratified_validation_sample(&records, |r| r.label.unwrap_or(Label::Irrelevant), &plan, &mut r)?;
        write_json(&out.join("sample_plan.json"), &plan)?;
        write_jsonl(&out.join("validation_sample.jsonl"), &sample)?;
    }
    println!(
        "agreed {} of {} rows ({} dropped)",
        agreed.records.len(),
        matrix.len(),
        agreed.dropped
    );
    manifest.write(out)?;
    Ok(())
}

fn validate(ctx: &Ctx, a: ValidateArgs) -> CliResult<()> {
    let machine = read_label_csv(require(&a.machine)?)?;
    let mut humans = Vec::new();
    for path in &a.humans {
        let name = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        humans.push((name, read_label_csv(require(path)?)?));
    }
    let report = validation_report(&machine, &humans)?;
    let out = prepare_out(ctx)?;
    write_json(&out.join("validation_report.json"), &report)?;
    for h in &report.kappa_per_human {
        println!("{}\tkappa={:.3}\t{}", h.annotator, h.kappa, h.band);
    }
    let mut manifest = RunManifest::new("validate", ctx.seed, json!({ "humans": humans.len() }));
    manifest.input(&a.machine)?;
    for p in &a.humans {
        manifest.input(p)?;
    }
    manifest.write(out)?;
    Ok(())
}

fn read_texts(path: &Path) -> CliResult<Vec<RawRecord>> {
    let records: Vec<RawRecord> = read_jsonl(require(path)?)?;
    if records.is_empty() {
        return Err(crisiskd::Error::EmptyCorpus.into());
    }
    Ok(records)
}

fn tokenizer(ctx: &Ctx, a: TokenizerArgs) -> CliResult<()> {
    let records = read_texts(&a.corpus)?;
    let vocab_size = pick(a.vocab_size, ctx.file.vocab_size, DEFAULT_VOCAB_SIZE);
    let clean: Vec<_> = records.iter().map(|r| normalize_text(&r.text)).collect();
    let tok = train_tokenizer(clean.iter(), vocab_size)?;
    let out = prepare_out(ctx)?;
    tok.save(&out.join("vocab.txt"), &out.join("merges.txt"))?;
    println!("learned {} of {} ids", tok.learned_len(), tok.vocab_size());
    let mut manifest = RunManifest::new("tokenizer", ctx.seed, json!({ "vocab_size": vocab_size }));
    manifest.input(&a.corpus)?;
    manifest.write(out)?;
    Ok(())
}

fn resolve_preset(name: &str) -> CliResult<EncoderConfig> {
    EncoderConfig::preset(name).ok_or_else(|| CliError::Usage(format!("unknown preset {name:?}")))
}

fn load_tokenizer(dir: &Path) -> CliResult<Tokenizer> {
    let paths = ModelPaths::new(require(dir)?);
    Ok(Tokenizer::load(require(&paths.vocab)?, require(&paths.merges)?)?)
}

fn load_bundle(dir: &Path) -> CliResult<ModelBundle> {
    Ok(ModelBundle::load(require(dir)?)?)
}

fn classifier_of(bundle: &ModelBundle) -> CliResult<SequenceClassifier<f32>> {
    let head = bundle
        .head
        .clone()
        .ok_or_else(|| CliError::Usage("model directory has no classification head".into()))?;
    Ok(SequenceClassifier {
        encoder: bundle.encoder.clone(),
        head,
    })
}

fn save_classifier(dir: &Path, model: &SequenceClassifier<f32>, tok: &Tokenizer, max_length: usize) -> CliResult<()> {
    ModelBundle {
        encoder: model.encoder.clone(),
        head: Some(model.head.clone()),
        tokenizer: tok.clone(),
        max_length,
    }
    .save(dir)?;
    Ok(())
}

struct Labelled {
    tokenizer: Tokenizer,
    splits: Splits<Example>,
    max_length: usize,
}

fn labelled_data(ctx: &Ctx, data: &Path, tok: Option<Tokenizer>, max_length: usize, vocab: usize) -> CliResult<Labelled> {
    let records = read_texts(data)?;
    let mut texts = Vec::with_capacity(records.len());
    for r in &records {
        let label = r
            .label
            .ok_or_else(|| crisiskd::Error::InvalidRecord(format!("record {} has no label", r.id)))?;
        texts.push((normalize_text(&r.text), label));
    }
    let tokenizer = match tok {
        Some(t) => t,
        None => train_tokenizer(texts.iter().map(|(t, _)| t), vocab)?,
    };
    let examples: Vec<Example> = texts
        .iter()
        .map(|(t, l)| Example {
            seq: tokenizer.encode(t, max_length),
            label: l.index(),
        })
        .collect();
    let spec = SplitSpec {
        seed: ctx.seed,
        ..ctx.file.split.clone().unwrap_or_default()
    };
    let splits = split_stratified(&examples, |e| e.label, &spec)?;
    Ok(Labelled {
        tokenizer,
        splits,
        max_length,
    })
}

fn finetune_config(ctx: &Ctx, a: &TrainArgs) -> FinetuneConfig {
    let base = ctx.file.finetune.clone().unwrap_or_default();
    FinetuneConfig {
        learning_rate: pick(a.learning_rate, None, base.learning_rate),
        batch_size: pick(a.batch_size, None, base.batch_size),
        max_epochs: pick(a.max_epochs, None, base.max_epochs),
        repeats: pick(a.repeats, None, base.repeats),
        seed: ctx.seed,
        ..base
    }
}

/// Architecture for a training run: from `--init`, else the preset, sized
/// to the tokenizer and sequence length.
fn training_setup(ctx: &Ctx, a: &TrainArgs, default_preset: &str) -> CliResult<(Labelled, EncoderConfig, Option<ModelBundle>)> {
    let init = a.init.as_deref().map(load_bundle).transpose()?;
    let tok = match (&a.tokenizer, &init) {
        (Some(dir), _) => Some(load_tokenizer(dir)?),
        (None, Some(b)) => Some(b.tokenizer.clone()),
        (None, None) => None,
    };
    let max_length = pick(
        a.max_length,
        ctx.file.max_length,
        init.as_ref().map_or(DEFAULT_MAX_LENGTH, |b| b.max_length),
    );
    let vocab = pick(a.vocab_size, ctx.file.vocab_size, DEFAULT_VOCAB_SIZE);
    let data = labelled_data(ctx, &a.data, tok, max_length, vocab)?;
    let config = match &init {
        Some(b) => b.encoder.config().clone().with_classes(Label::ALL.len()),
        None => {
            let name = a.preset.clone().or(ctx.file.preset.clone()).unwrap_or(default_preset.into());
            resolve_preset(&name)?
                .with_vocab(data.tokenizer.vocab_size())
                .with_max_positions(max_length)
                .with_classes(Label::ALL.len())
        }
    };
    Ok((data, config, init))
}

fn fresh_classifier(config: &EncoderConfig, init: Option<&ModelBundle>, seed: u64, stream: &str) -> CliResult<SequenceClassifier<f32>> {
    let mut r = rng::stream(seed, stream);
    let mut model = SequenceClassifier::new(config.clone(), &mut r)?;
    if let Some(b) = init {
        model.encoder.params_mut().copy_from(b.encoder.params())?;
    }
    Ok(model)
}

fn train_teacher(ctx: &Ctx, a: TrainArgs) -> CliResult<()> {
    let (data, config, init) = training_setup(ctx, &a, "teacher")?;
    let cfg = finetune_config(ctx, &a);
    let mut model = fresh_classifier(&config, init.as_ref(), ctx.seed, "teacher_init")?;
    let outcome = finetune_run(&mut model, &data.splits, &cfg, &mut rng::stream(ctx.seed, "teacher_order"))?;
    let test_f1 = model.evaluate(&data.splits.test, 64)?;
    let out = prepare_out(ctx)?;
    save_classifier(&out.join("model"), &model, &data.tokenizer, data.max_length)?;
    write_json(
        &out.join("metrics.json"),
        &json!({ "best_val_f1": outcome.best_val_f1, "best_epoch": outcome.best_epoch, "test_macro_f1": test_f1, "epochs": outcome.epochs }),
    )?;
    write_text(&out.join("loss_trace.csv"), &LossTrace::from_steps("teacher", &outcome.steps).to_csv())?;
    println!("teacher test macro F1 {test_f1:.4} (best epoch {})", outcome.best_epoch);
    let mut manifest = RunManifest::new(
        "train-teacher",
        ctx.seed,
        json!({ "encoder": to_value(&config), "finetune": to_value(&cfg), "max_length": data.max_length }),
    );
    manifest.input(&a.data)?;
    manifest.write(out)?;
    Ok(())
}

fn finetune(ctx: &Ctx, a: TrainArgs) -> CliResult<()> {
    let (data, config, init) = training_setup(ctx, &a, "s_m")?;
    let cfg = finetune_config(ctx, &a);
    let names: Vec<String> = Label::ALL.iter().map(|l| l.to_string()).collect();
    let model_name = a.preset.clone().unwrap_or_else(|| "model".into());
    let task = a.data.file_stem().map_or_else(|| "task".into(), |s| s.to_string_lossy().into_owned());
    let (report, outcomes) = match &init {
        None => repeat_finetune(&model_name, &task, &config, &data.splits, &cfg, &names)?,
        Some(bundle) => {
            // same protocol as repeat_finetune, but every repeat starts from the given encoder
            let mut scores = Vec::new();
            let mut outcomes = Vec::new();
            for r in 0..cfg.repeats {
                let mut model = fresh_classifier(&config, Some(bundle), cfg.seed, &format!("finetune_init_{r}"))?;
                let mut order = rng::stream(cfg.seed, &format!("finetune_order_{r}"));
                outcomes.push(finetune_run(&mut model, &data.splits, &cfg, &mut order)?);
                scores.push(model.evaluate(&data.splits.test, 64)?);
            }
            (crisiskd::finetune::repeat_with_ci(&model_name, &task, &scores)?, outcomes)
        }
    };
    let out = prepare_out(ctx)?;
    write_json(&out.join("metrics.json"), &report)?;
    write_text(&out.join("metrics.tsv"), &(report.tsv_row() + "\n"))?;
    write_json(&out.join("runs.json"), &outcomes)?;
    println!("{}", report.tsv_row());
    let mut manifest = RunManifest::new(
        "finetune",
        ctx.seed,
        json!({ "encoder": to_value(&config), "finetune": to_value(&cfg), "max_length": data.max_length }),
    );
    manifest.input(&a.data)?;
    if let Some(p) = &a.init {
        manifest.input(p)?;
    }
    manifest.write(out)?;
    Ok(())
}

fn pooling_mode(p: Option<PoolingArg>, default: PoolingMode) -> PoolingMode {
    match p {
        Some(PoolingArg::Mean) => PoolingMode::MeanPool,
        Some(PoolingArg::Cls) => PoolingMode::ClsToken,
        None => default,
    }
}

fn generic_config(ctx: &Ctx, lr: Option<f64>, batch: Option<usize>, epochs: Option<usize>, pooling: Option<PoolingArg>) -> GenericDistillConfig {
    let base = ctx.file.generic_distill.clone().unwrap_or_default();
    GenericDistillConfig {
        pooling: pooling_mode(pooling, base.pooling),
        learning_rate: pick(lr, None, base.learning_rate),
        batch_size: pick(batch, None, base.batch_size),
        epochs: pick(epochs, None, base.epochs),
    }
}

fn unlabelled_corpus(path: &Path, bundle: &ModelBundle) -> CliResult<Vec<crisiskd::corpus::TokenSequence>> {
    let records = read_texts(path)?;
    Ok(records
        .iter()
        .map(|r| bundle.tokenizer.encode(&normalize_text(&r.text), bundle.max_length))
        .collect())
}

fn student_config(name: &str, teacher: &ModelBundle) -> CliResult<EncoderConfig> {
    let t = teacher.encoder.config();
    Ok(resolve_preset(name)?
        .with_vocab(t.vocab_size)
        .with_max_positions(t.max_positions)
        .with_classes(t.num_classes))
}

fn distill(ctx: &Ctx, a: DistillArgs) -> CliResult<()> {
    let teacher = load_bundle(&a.teacher)?;
    let config = student_config(&a.student, &teacher)?;
    let out = prepare_out(ctx)?;
    let mut manifest;
    match a.mode {
        DistillMode::Generic => {
            let corpus_path = a
                .corpus
                .as_deref()
                .ok_or_else(|| CliError::Usage("--corpus is required for generic distillation".into()))?;
            let corpus = unlabelled_corpus(corpus_path, &teacher)?;
            let cfg = generic_config(ctx, a.learning_rate, a.batch_size, a.epochs, a.pooling);
            let mut init = rng::stream(ctx.seed, "student_init");
            let mut student = EncoderModel::new(config.clone(), &mut init)?;
            let mut projection = DownsampleProjection::new(teacher.encoder.config().hidden_size, config.hidden_size, &mut init)?;
            let trace = distill_generic(
                &teacher.encoder,
                &mut student,
                &mut projection,
                &corpus,
                &cfg,
                &mut rng::stream(ctx.seed, "generic_kd_order"),
            )?;
            ModelBundle {
                encoder: student,
                head: None,
                tokenizer: teacher.tokenizer.clone(),
                max_length: teacher.max_length,
            }
            .save(&out.join("model"))?;
            write_text(&out.join("loss_trace.csv"), &trace.to_csv())?;
            println!(
                "smoothed loss {:.6} -> {:.6}",
                trace.initial_loss().unwrap_or(f64::NAN),
                trace.final_smoothed().unwrap_or(f64::NAN)
            );
            manifest = RunManifest::new(
                "distill",
                ctx.seed,
                json!({ "mode": "generic", "student": to_value(&config), "generic_distill": to_value(&cfg) }),
            );
            manifest.input(corpus_path)?;
        }
        DistillMode::Task => {
            let data_path = a
                .data
                .as_deref()
                .ok_or_else(|| CliError::Usage("--data is required for task distillation".into()))?;
            let teacher_model = classifier_of(&teacher)?;
            let data = labelled_data(ctx, data_path, Some(teacher.tokenizer.clone()), teacher.max_length, 0)?;
            let base = ctx.file.task_distill.clone().unwrap_or_default();
            let cfg = TaskDistillConfig {
                alpha: pick(a.alpha, None, base.alpha),
                temperature: pick(a.temperature, None, base.temperature),
                learning_rate: pick(a.learning_rate, None, base.learning_rate),
                batch_size: pick(a.batch_size, None, base.batch_size),
                max_epochs: pick(a.epochs, None, base.max_epochs),
                ..base
            };
            let init = a.init.as_deref().map(load_bundle).transpose()?;
            let mut student = fresh_classifier(&config, init.as_ref(), ctx.seed, "student_init")?;
            let outcome = distill_task(
                &teacher_model,
                &teacher.tokenizer,
                &mut student,
                &data.tokenizer,
                &data.splits,
                &cfg,
                &mut rng::stream(ctx.seed, "task_kd_order"),
            )?;
            let student_f1 = student.evaluate(&data.splits.test, 64)?;
            let teacher_f1 = teacher_model.evaluate(&data.splits.test, 64)?;
            save_classifier(&out.join("model"), &student, &data.tokenizer, data.max_length)?;
            write_text(&out.join("loss_trace.csv"), &LossTrace::from_steps("task_kd", &outcome.steps).to_csv())?;
            write_json(
                &out.join("metrics.json"),
                &json!({ "student_test_macro_f1": student_f1, "teacher_test_macro_f1": teacher_f1, "best_epoch": outcome.best_epoch, "epochs": outcome.epochs }),
            )?;
            println!("student {student_f1:.4} vs teacher {teacher_f1:.4} test macro F1");
            manifest = RunManifest::new(
                "distill",
                ctx.seed,
                json!({ "mode": "task", "student": to_value(&config), "task_distill": to_value(&cfg) }),
            );
            manifest.input(data_path)?;
        }
    }
    manifest.input(&a.teacher)?;
    manifest.write(out)?;
    Ok(())
}

fn compare(ctx: &Ctx, a: ComparePoolingArgs) -> CliResult<()> {
    let teacher = load_bundle(&a.teacher)?;
    let config = student_config(&a.student, &teacher)?;
    let corpus = unlabelled_corpus(&a.corpus, &teacher)?;
    let cfg = generic_config(ctx, a.learning_rate, a.batch_size, a.epochs, None);
    let report = compare_pooling(&teacher.encoder, &config, &corpus, &cfg, ctx.seed)?;
    let out = prepare_out(ctx)?;
    write_json(
        &out.join("pooling_report.json"),
        &json!({ "mean_pool_final_loss": report.mean_pool_final_loss, "cls_final_loss": report.cls_final_loss }),
    )?;
    write_text(&out.join("loss_traces.csv"), &report.to_csv())?;
    println!(
        "mean_pool {:.6}\tcls {:.6}",
        report.mean_pool_final_loss, report.cls_final_loss
    );
    let mut manifest = RunManifest::new(
        "compare-pooling",
        ctx.seed,
        json!({ "student": to_value(&config), "generic_distill": to_value(&cfg) }),
    );
    manifest.input(&a.corpus)?;
    manifest.input(&a.teacher)?;
    manifest.write(out)?;
    Ok(())
}

fn bench_model(spec: &str, seed: u64) -> CliResult<EncoderModel<f32>> {
    let path = Path::new(spec);
    if path.is_dir() {
        return Ok(load_bundle(path)?.encoder);
    }
    let config = resolve_preset(spec)?;
    Ok(EncoderModel::new(config, &mut rng::stream(seed, &format!("bench_{spec}")))?)
}

fn bench(ctx: &Ctx, a: BenchArgs) -> CliResult<()> {
    let base = ctx.file.bench.clone().unwrap_or_default();
    let cfg = BenchConfig {
        batch_size: pick(a.batch_size, None, base.batch_size),
        iterations: pick(a.iterations, None, base.iterations),
        warmup: pick(a.warmup, None, base.warmup),
        input_length: pick(a.input_length, None, base.input_length),
        seed: ctx.seed,
    };
    let baseline_model = bench_model(&a.baseline, ctx.seed)?;
    let baseline = run_benchmark(&a.baseline, &baseline_model, &cfg)?;
    drop(baseline_model);
    let mut reports: Vec<BenchReport> = vec![baseline.clone()];
    for spec in a.models.iter().filter(|m| **m != a.baseline) {
        let model = bench_model(spec, ctx.seed)?;
        reports.push(run_benchmark(spec, &model, &cfg)?);
    }
    let speedups: Vec<f64> = reports
        .iter()
        .map(|r| speedup_vs_baseline(r, &baseline))
        .collect::<Result<_, _>>()?;
    let out = prepare_out(ctx)?;
    write_json(
        &out.join("bench.json"),
        &json!({ "baseline": a.baseline, "reports": reports, "speedups": speedups }),
    )?;
    print!("{}", render_table(&reports, &baseline)?);
    RunManifest::new("bench", ctx.seed, to_value(&cfg)).write(out)?;
    Ok(())
}

fn analyze(ctx: &Ctx, a: AnalyzeArgs) -> CliResult<()> {
    require(&a.records)?;
    let out = prepare_out(ctx)?;
    let records: Vec<GeoRecord> = match &a.model {
        Some(dir) => {
            let bundle = load_bundle(dir)?;
            let classifier = classifier_of(&bundle)?;
            let resource = a.resource_model.as_deref().map(load_bundle).transpose()?;
            let resource = resource.as_ref().map(classifier_of).transpose()?;
            let raw: Vec<RawRecord> = read_jsonl(&a.records)?;
            let labelled = label_corpus(&classifier, resource.as_ref(), &bundle.tokenizer, &raw, bundle.max_length, 64)?;
            write_jsonl(&out.join("labelled.jsonl"), &labelled)?;
            labelled
        }
        None => read_jsonl(&a.records)?,
    };
    for r in &records {
        r.validate()?;
    }
    let by = match a.by {
        GroupArg::Country => RegionKey::Country,
        GroupArg::City => RegionKey::City,
    };
    let rows = ro_ratio(&records, by);
    write_text(&out.join("ro_table.csv"), &ro_table_csv(&rows)?)?;
    for label in [Label::Request, Label::Offer] {
        let top = top_regions(&records, label, by, a.top);
        write_json(&out.join(format!("top_{}.json", label.as_str().to_lowercase())), &top)?;
    }
    let filter = (!a.resources.is_empty()).then_some(a.resources.as_slice());
    for (by, name, keys) in [(TrendBy::Label, "label", None), (TrendBy::Resource, "resource", filter)] {
        let trend = monthly_trend(&records, by, keys);
        write_text(&out.join(format!("trend_{name}.csv")), &trend.to_csv()?)?;
        write_text(&out.join(format!("trend_{name}.svg")), &trend_svg(&trend, &format!("Monthly counts by {name}")))?;
    }
    for r in rows.iter().take(a.top) {
        println!("{}\t{}\t{}\t{}", r.region, r.requests, r.offers, r.ratio_display());
    }
    let mut manifest = RunManifest::new(
        "analyze",
        ctx.seed,
        json!({ "by": format!("{:?}", a.by).to_lowercase(), "top": a.top, "resources": a.resources }),
    );
    manifest.input(&a.records)?;
    manifest.write(out)?;
    Ok(())
}
