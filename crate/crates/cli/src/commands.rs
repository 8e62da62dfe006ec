use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kdqe::corpus::{exclude_overlap, parse_documents, read_pairs, sample_corpus, write_pairs, Dataset, Example, Origin, ReadOptions, SampleConfig};
use kdqe::distill::{filter_by_variance, manifest_path_for, run_pipeline, size_subsets, FilterMode, PipelineOptions};
use kdqe::eval::{bin_variance_error, evaluate, histogram, sweep, Binning, Correlation, EvalReport};
use kdqe::manifest::{sha256_file, Manifest};
use kdqe::model::{check_gradients, gradcheck_config, load_model, save_model, ModelConfig, Student, Vocabs};
use kdqe::numerics::{AdamConfig, GradCheckConfig};
use kdqe::synthetic_bench::{run_findings_suite, PoolSizes, Scenario, SuiteConfig};
use kdqe::teacher::{label_dataset, Ensemble, PredictionTable, TeacherSource};
use kdqe::trainer::{train, TrainConfig, ValidationMetric};
use kdqe::{par, Error};

use crate::settings::Settings;
use crate::{Command, Common, Failure, TeacherArgs, TrainKnobs};

type Outcome = std::result::Result<(), Failure>;

fn common_of(cmd: &Command) -> &Common {
    match cmd {
        Command::BuildVocab { common, .. }
        | Command::Train { common, .. }
        | Command::Label { common, .. }
        | Command::Filter { common, .. }
        | Command::Distill { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Sweep { common, .. }
        | Command::Bench { common, .. }
        | Command::SampleCorpus { common, .. }
        | Command::Gradcheck { common, .. }
        | Command::Efficiency { common, .. } => common,
    }
}

pub fn run(cmd: Command) -> Outcome {
    let common = common_of(&cmd).clone();
    let mut s = Settings::load(common.config.as_deref())?;
    let threads: usize = s.get("threads", common.threads.as_deref())?;
    if threads < 1 {
        return Err(Error::Config("threads must be at least 1".into()).into());
    }
    let has_header: bool = s.get("has_header", common.has_header.as_deref())?;
    let mut ctx = Ctx { s, has_header };
    par::with_threads(threads, move || dispatch(cmd, &mut ctx))
}

struct Ctx {
    s: Settings,
    has_header: bool,
}

impl Ctx {
    fn read(&self, path: &Path) -> kdqe::Result<Dataset> {
        read_pairs(
            path,
            &ReadOptions {
                has_header: self.has_header,
                origin: Origin::Gold,
            },
        )
    }

    fn train_setup(&mut self, k: &TrainKnobs, seed: u64) -> kdqe::Result<(TrainConfig, ModelConfig)> {
        let s = &mut self.s;
        let metric: String = s.get("validation_metric", k.validation_metric.as_deref())?;
        let train = TrainConfig {
            batch_size: s.get("batch_size", k.batch_size.as_deref())?,
            max_epochs: s.get("max_epochs", k.max_epochs.as_deref())?,
            patience: s.get("patience", k.patience.as_deref())?,
            seed,
            validation_metric: ValidationMetric::parse(&metric)?,
            adam: AdamConfig {
                learning_rate: s.get("learning_rate", k.learning_rate.as_deref())?,
                ..AdamConfig::default()
            },
        };
        train.validate()?;
        let model = ModelConfig {
            source_vocab_size: 0,
            mt_vocab_size: 0,
            embedding_dim: s.get("embedding_dim", k.embedding_dim.as_deref())?,
            hidden_dim: s.get("hidden_dim", k.hidden_dim.as_deref())?,
            max_len: s.get("max_len", k.max_len.as_deref())?,
            attention_dim: s.get("attention_dim", k.attention_dim.as_deref())?,
        };
        Ok((train, model))
    }

    fn teacher(&self, t: &TeacherArgs) -> kdqe::Result<TeacherSource> {
        let ensemble = match t.teacher_models.len() {
            0 => None,
            1 => {
                return Err(Error::Config(
                    "an ensemble teacher needs at least two --teacher-model files".into(),
                ))
            }
            _ => Some(Ensemble::new(
                t.teacher_models.iter().map(load_model).collect::<kdqe::Result<Vec<_>>>()?,
            )?),
        };
        let file = t.teacher_file.as_ref().map(PredictionTable::read).transpose()?;
        match (file, ensemble) {
            (Some(f), None) => Ok(TeacherSource::File(f)),
            (None, Some(e)) => Ok(TeacherSource::Ensemble(e)),
            (Some(f), Some(e)) => Ok(TeacherSource::WithUncertainty {
                labels: Box::new(TeacherSource::File(f)),
                ensemble: e,
            }),
            (None, None) => Err(Error::Config("give --teacher-file and/or --teacher-model".into())),
        }
    }

    fn provenance(&self, command: &str, seed: Option<u64>) -> Manifest {
        let mut m = Manifest::new();
        m.set("command", command).set("version", env!("CARGO_PKG_VERSION"));
        if let Some(seed) = seed {
            m.set("seed", seed);
        }
        m
    }

    /// Appends the resolved settings and writes `<output>.manifest`.
    fn finish(&self, mut m: Manifest, output: &Path) -> kdqe::Result<()> {
        for (k, v) in self.s.resolved().entries() {
            m.set(format!("config.{k}"), v);
        }
        m.write(manifest_path_for(output))
    }
}

fn record_input(m: &mut Manifest, name: &str, path: &Path) -> kdqe::Result<()> {
    m.set(format!("input.{name}"), path.display());
    m.set(format!("input.{name}.sha256"), sha256_file(path)?);
    Ok(())
}

fn record_inputs(m: &mut Manifest, name: &str, paths: &[PathBuf]) -> kdqe::Result<()> {
    for (i, p) in paths.iter().enumerate() {
        record_input(m, &format!("{name}.{i}"), p)?;
    }
    Ok(())
}

fn fmt_corr(c: Correlation) -> String {
    match c {
        Correlation::Defined(v) => format!("{v:?}"),
        Correlation::Undefined => "undefined".into(),
    }
}

fn report_text(r: &EvalReport) -> String {
    format!(
        "n={}\npearson={}\nmse={:?}\nmae={:?}\nrmse={:?}\n",
        r.n,
        fmt_corr(r.pearson),
        r.mse,
        r.mae,
        r.rmse
    )
}

fn dispatch(cmd: Command, ctx: &mut Ctx) -> Outcome {
    match cmd {
        Command::BuildVocab { data, out, vocab_size, .. } => {
            let max: usize = ctx.s.get("vocab_size", vocab_size.as_deref())?;
            let sets = data.iter().map(|p| ctx.read(p)).collect::<kdqe::Result<Vec<_>>>()?;
            let vocabs = Vocabs::build(&sets.iter().collect::<Vec<_>>(), max)?;
            fs::write(&out, vocabs.to_text()).map_err(Error::from)?;
            let mut m = ctx.provenance("build-vocab", None);
            record_inputs(&mut m, "data", &data)?;
            m.set("source_words", vocabs.source.words().len())
                .set("mt_words", vocabs.mt.words().len());
            ctx.finish(m, &out)?;
            println!("source_words={} mt_words={}", vocabs.source.words().len(), vocabs.mt.words().len());
        }

        Command::Train {
            train: train_path,
            validation,
            out,
            vocab,
            seed,
            knobs,
            ..
        } => {
            let (tc, mc) = ctx.train_setup(&knobs, seed)?;
            let max: usize = ctx.s.get("vocab_size", knobs.vocab_size.as_deref())?;
            let train_set = ctx.read(&train_path)?;
            let val = ctx.read(&validation)?;
            let vocabs = match &vocab {
                Some(p) => Vocabs::from_text(&fs::read_to_string(p).map_err(Error::from)?)?,
                None => Vocabs::build(&[&train_set], max)?,
            };
            let init = Student::init(&mc, &vocabs, seed)?;
            let (student, report) = train(&train_set, &val, &tc, init)?;
            save_model(&student, &out)?;
            let log = log_path(&out);
            fs::write(&log, report.to_csv()).map_err(Error::from)?;
            let mut m = ctx.provenance("train", Some(seed));
            record_input(&mut m, "train", &train_path)?;
            record_input(&mut m, "validation", &validation)?;
            if let Some(p) = &vocab {
                record_input(&mut m, "vocab", p)?;
            }
            let best = report.best();
            m.set("parameters", student.config().parameter_count())
                .set("epochs", report.epochs.len())
                .set("best_epoch", report.best_epoch)
                .set("stopped_early", report.stopped_early)
                .set("best_validation_pearson", fmt_corr(best.validation.pearson))
                .set("log", log.display());
            ctx.finish(m, &out)?;
            println!(
                "best_epoch={} validation_pearson={}",
                report.best_epoch,
                fmt_corr(best.validation.pearson)
            );
        }

        Command::Label {
            input,
            out,
            teacher,
            overwrite_labels,
            ..
        } => {
            let overwrite: bool = ctx.s.get("overwrite_labels", overwrite_labels.as_deref())?;
            let pool = ctx.read(&input)?;
            let source = ctx.teacher(&teacher)?;
            let labeled = label_dataset(&pool, &source, overwrite)?;
            write_pairs(&labeled, &out)?;
            let mut m = ctx.provenance("label", None);
            record_input(&mut m, "pool", &input)?;
            record_teacher(&mut m, &teacher)?;
            m.set("teacher", source.describe()).set("output_size", labeled.len());
            ctx.finish(m, &out)?;
            println!("labeled={}", labeled.len());
        }

        Command::Filter {
            input, out, two_sided, ..
        } => {
            let mode = if two_sided {
                FilterMode::TwoSided
            } else {
                FilterMode::OneSided
            };
            let candidates = ctx.read(&input)?;
            let (kept, stats) = filter_by_variance(&candidates, mode)?;
            write_pairs(&kept, &out)?;
            let mut m = ctx.provenance("filter", None);
            record_input(&mut m, "candidates", &input)?;
            m.set("filter", mode.as_str());
            stats.record(&mut m);
            ctx.finish(m, &out)?;
            println!("kept={} dropped={} threshold={:?}", stats.kept, stats.dropped, stats.threshold);
        }

        Command::Distill {
            pool,
            out,
            teacher,
            filter,
            overwrite_labels,
            exclude,
            train: gold,
            validation,
            model_out,
            seed,
            knobs,
            ..
        } => {
            let filter = match ctx.s.raw("filter", filter.as_deref()).as_str() {
                "off" => None,
                "one-sided" => Some(FilterMode::OneSided),
                "two-sided" => Some(FilterMode::TwoSided),
                other => {
                    return Err(Error::Config(format!(
                        "filter must be off, one-sided or two-sided, got {other:?}"
                    ))
                    .into())
                }
            };
            let overwrite: bool = ctx.s.get("overwrite_labels", overwrite_labels.as_deref())?;
            let training = match (&model_out, &validation) {
                (Some(_), None) => {
                    return Err(Failure::Usage("--model-out needs --validation".into()));
                }
                (Some(_), Some(_)) => Some(ctx.train_setup(&knobs, seed)?),
                _ => None,
            };
            let raw_pool = ctx.read(&pool)?;
            let forbidden = exclude.iter().map(|p| ctx.read(p)).collect::<kdqe::Result<Vec<_>>>()?;
            let pool_set = exclude_overlap(&raw_pool, &forbidden.iter().collect::<Vec<_>>());
            let source = ctx.teacher(&teacher)?;
            let output = run_pipeline(
                &pool_set,
                &source,
                &PipelineOptions {
                    filter,
                    overwrite_labels: overwrite,
                    seed,
                },
                &out,
            )?;
            let mut m = ctx.provenance("distill", Some(seed));
            record_input(&mut m, "pool", &pool)?;
            record_inputs(&mut m, "exclude", &exclude)?;
            record_teacher(&mut m, &teacher)?;
            m.set("excluded", raw_pool.len() - pool_set.len());
            for (k, v) in output.manifest.entries() {
                m.set(k.clone(), v);
            }

            if let (Some(model_path), Some(val_path), Some((tc, mc))) = (&model_out, &validation, training) {
                let max: usize = ctx.s.get("vocab_size", knobs.vocab_size.as_deref())?;
                let mut examples: Vec<Example> = Vec::new();
                if let Some(g) = &gold {
                    examples.extend(ctx.read(g)?.examples);
                    record_input(&mut m, "train", g)?;
                }
                examples.extend(output.dataset.examples.iter().cloned());
                let combined = output.dataset.with_examples(examples);
                let val = ctx.read(val_path)?;
                record_input(&mut m, "validation", val_path)?;
                let vocabs = Vocabs::build(&[&combined], max)?;
                let (student, report) = train(&combined, &val, &tc, Student::init(&mc, &vocabs, seed)?)?;
                save_model(&student, model_path)?;
                fs::write(log_path(model_path), report.to_csv()).map_err(Error::from)?;
                m.set("model", model_path.display())
                    .set("student_train_size", combined.len())
                    .set("best_epoch", report.best_epoch)
                    .set("best_validation_pearson", fmt_corr(report.best().validation.pearson));
                println!(
                    "student best_epoch={} validation_pearson={}",
                    report.best_epoch,
                    fmt_corr(report.best().validation.pearson)
                );
            }
            ctx.finish(m, &out)?;
            println!("distilled={}", output.dataset.len());
        }

        Command::Evaluate {
            data,
            predictions,
            model,
            out,
            bins_out,
            histogram_out,
            bins,
            ..
        } => {
            let bin_count: usize = ctx.s.get("bins", bins.as_deref())?;
            let gold = ctx.read(&data)?;
            let labels = gold.labels()?;
            let (preds, vars): (Vec<f64>, Vec<Option<f64>>) = match (&predictions, &model) {
                (Some(p), _) => {
                    let table = PredictionTable::read(p)?;
                    gold.examples
                        .iter()
                        .map(|e| table.lookup(e))
                        .collect::<kdqe::Result<Vec<_>>>()?
                        .into_iter()
                        .unzip()
                }
                (None, Some(mp)) => {
                    let student = load_model(mp)?;
                    let p = student.predict_all(&gold.examples)?;
                    let n = p.len();
                    (p, vec![None; n])
                }
                (None, None) => return Err(Failure::Usage("give --predictions or --model".into())),
            };
            let report = evaluate(&preds, &labels)?;
            let text = report_text(&report);
            print!("{text}");

            let mut m = ctx.provenance("evaluate", None);
            record_input(&mut m, "data", &data)?;
            if let Some(p) = &predictions {
                record_input(&mut m, "predictions", p)?;
            }
            if let Some(p) = &model {
                record_input(&mut m, "model", p)?;
            }
            if let Some(path) = &bins_out {
                let variances: Vec<f64> = vars
                    .iter()
                    .map(|v| v.ok_or_else(|| Error::Contract("variance binning needs a variance for every prediction".into())))
                    .collect::<kdqe::Result<_>>()?;
                let b = bin_variance_error(&preds, &labels, &variances, bin_count, Binning::EqualCount)?;
                fs::write(path, b.to_csv()).map_err(Error::from)?;
                ctx.finish(m.clone(), path)?;
            }
            if let Some(path) = &histogram_out {
                let mut jsonl = histogram(&labels, bin_count, (0.0, 1.0))?.to_jsonl("labels");
                jsonl.push_str(&histogram(&preds, bin_count, (0.0, 1.0))?.to_jsonl("predictions"));
                fs::write(path, jsonl).map_err(Error::from)?;
                ctx.finish(m.clone(), path)?;
            }
            if let Some(path) = &out {
                fs::write(path, &text).map_err(Error::from)?;
                ctx.finish(m, path)?;
            }
        }

        Command::Sweep {
            pool,
            validation,
            test,
            sizes,
            repeats,
            out,
            seed,
            knobs,
            ..
        } => {
            let repeats: usize = ctx.s.get("repeats", repeats.as_deref())?;
            let (tc, mc) = ctx.train_setup(&knobs, seed)?;
            let max: usize = ctx.s.get("vocab_size", knobs.vocab_size.as_deref())?;
            let pool_set = ctx.read(&pool)?;
            let val = ctx.read(&validation)?;
            let test_set = ctx.read(&test)?;
            let subsets = size_subsets(&pool_set, &sizes, seed)?;
            let largest = subsets
                .iter()
                .max_by_key(|d| d.len())
                .ok_or_else(|| Error::Config("no subset sizes given".into()))?;
            let vocabs = Vocabs::build(&[largest], max)?;
            let table = sweep(&subsets, &val, &test_set, repeats, &tc, &mc, &vocabs)?;
            let csv = table.to_csv();
            fs::write(&out, &csv).map_err(Error::from)?;
            let mut m = ctx.provenance("sweep", Some(seed));
            record_input(&mut m, "pool", &pool)?;
            record_input(&mut m, "validation", &validation)?;
            record_input(&mut m, "test", &test)?;
            m.set(
                "sizes",
                sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            );
            ctx.finish(m, &out)?;
            print!("{csv}");
        }

        Command::Bench {
            out,
            seed,
            sigma_gold,
            sigma_teacher,
            quick,
            ..
        } => {
            let (defaults, suite) = if quick { quick_bench() } else { (Scenario::default(), SuiteConfig::default()) };
            let scenario = Scenario {
                seed,
                sigma_gold: sigma_gold.unwrap_or(defaults.sigma_gold),
                sigma_teacher: sigma_teacher.unwrap_or(defaults.sigma_teacher),
                ..defaults
            };
            let report = run_findings_suite(&scenario, &suite)?;
            report.write_csv(&out)?;
            let mut m = ctx.provenance("bench", Some(seed));
            m.set("quick", quick)
                .set("sigma_gold", scenario.sigma_gold)
                .set("sigma_teacher", scenario.sigma_teacher)
                .set("all_passed", report.all_passed());
            ctx.finish(m, &out)?;
            for r in &report.rows {
                println!("{} {} measured={:.4} threshold={}", r.status.as_str(), r.id, r.measured, r.threshold);
            }
        }

        Command::SampleCorpus {
            input,
            out,
            min_chars,
            max_chars,
            top_docs,
            ..
        } => {
            let config = SampleConfig {
                min_chars: ctx.s.get("min_chars", min_chars.as_deref())?,
                max_chars: ctx.s.get("max_chars", max_chars.as_deref())?,
                top_docs: ctx.s.get("top_docs", top_docs.as_deref())?,
            };
            let docs = parse_documents(&fs::read_to_string(&input).map_err(Error::from)?)?;
            let sample = sample_corpus(&docs, |_| true, &config)?;
            let mut text = sample.sentences.join("\n");
            if !text.is_empty() {
                text.push('\n');
            }
            fs::write(&out, text).map_err(Error::from)?;
            let mut m = ctx.provenance("sample-corpus", None);
            record_input(&mut m, "documents", &input)?;
            m.set("documents", sample.documents.len())
                .set("sentences", sample.sentences.len());
            ctx.finish(m, &out)?;
            println!("documents={} sentences={}", sample.documents.len(), sample.sentences.len());
        }

        Command::Gradcheck {
            seed, samples_per_param, ..
        } => {
            let gc = GradCheckConfig {
                samples_per_param: ctx.s.get("samples_per_param", samples_per_param.as_deref())?,
                ..GradCheckConfig::default()
            };
            let report = check_gradients(&gradcheck_config(), seed, &gc)?;
            for g in &report.groups {
                println!("{} checked={} max_rel_error={:e}", g.name, g.checked, g.max_rel_error);
            }
            println!("max_rel_error={:e}", report.max_rel_error);
            if !report.passed {
                return Err(Error::Numeric(format!(
                    "gradient check failed: max relative error {:e} >= {:e}",
                    report.max_rel_error, report.tolerance
                ))
                .into());
            }
        }

        Command::Efficiency { model, seed, knobs, .. } => {
            let student = match &model {
                Some(p) => load_model(p)?,
                None => {
                    let (_, mc) = ctx.train_setup(&knobs, seed)?;
                    let max: usize = ctx.s.get("vocab_size", knobs.vocab_size.as_deref())?;
                    let vocabs = synthetic_vocabs(max)?;
                    Student::init(&mc, &vocabs, seed)?
                }
            };
            let c = *student.config();
            let full = ModelConfig::new(30_002, 30_002);
            println!("parameters={}", c.parameter_count());
            println!(
                "full_scale_parameters={} (vocab 30002 per side, embedding {}, hidden {}, attention {})",
                full.parameter_count(),
                full.embedding_dim,
                full.hidden_dim,
                full.attention_dim
            );
            println!("model_bytes={}", kdqe::model::to_bytes(&student).len());
            let pair = twenty_token_pair(&student);
            let latency = median_latency_ms(&student, &pair, 200)?;
            println!("latency_ms_20_tokens={latency:.4}");
        }
    }
    Ok(())
}

fn quick_bench() -> (Scenario, SuiteConfig) {
    let scenario = Scenario {
        vocab_size: 300,
        junk_size: 300,
        tail_rank: 60,
        sizes: PoolSizes {
            train: 200,
            validation: 60,
            test: 60,
            unlabeled: 400,
            shifted: 200,
        },
        ..Scenario::default()
    };
    let mut suite = SuiteConfig {
        seeds: 2,
        ensemble_size: 3,
        ..SuiteConfig::default()
    };
    suite.model.embedding_dim = 8;
    suite.model.hidden_dim = 6;
    suite.model.attention_dim = 8;
    suite.model.max_len = 16;
    suite.train.max_epochs = 3;
    (scenario, suite)
}

fn record_teacher(m: &mut Manifest, t: &TeacherArgs) -> kdqe::Result<()> {
    if let Some(p) = &t.teacher_file {
        record_input(m, "teacher_file", p)?;
    }
    record_inputs(m, "teacher_model", &t.teacher_models)
}

/// `<model>.log.csv`
fn log_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".log.csv");
    PathBuf::from(s)
}

fn synthetic_vocabs(words: usize) -> kdqe::Result<Vocabs> {
    let side = |p: &str| kdqe::corpus::Vocabulary::from_words((0..words).map(|i| format!("{p}{i}")).collect(), words);
    Ok(Vocabs {
        source: side("s")?,
        mt: side("t")?,
    })
}

fn twenty_token_pair(student: &Student) -> Example {
    let v = student.vocabs();
    let pick = |voc: &kdqe::corpus::Vocabulary| {
        let words = voc.words();
        (0..20)
            .map(|i| words.get(i * 7 % words.len().max(1)).cloned().unwrap_or_else(|| format!("w{i}")))
            .collect::<Vec<_>>()
            .join(" ")
    };
    Example::new(pick(&v.source), pick(&v.mt))
}

fn median_latency_ms(student: &Student, pair: &Example, runs: usize) -> kdqe::Result<f64> {
    for _ in 0..10 {
        student.predict(pair)?;
    }
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        std::hint::black_box(student.predict(std::hint::black_box(pair))?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[runs / 2])
}
