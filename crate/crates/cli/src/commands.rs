use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nationmood::analytics::{correlate_with_cases, event_gap, weekday_rhythm, write_long};
use nationmood::corpus::{parse_case_counts, parse_holidays, parse_instant, parse_profiles, parse_query_log, ParseOptions, Prefecture, MINUTE_MS};
use nationmood::featurex::{assemble_all, read_features, write_features, FeatureRegistry, FEATURE_COUNT};
use nationmood::moodagg::{
    aggregate as aggregate_points, read_points, read_scores, relative_series, score_queries, write_points,
    write_relative, write_scores, Bucket, Granularity, Scope, DISPLAY_OFFSET_MIN,
};
use nationmood::qmm::{
    compare_label_bootstrapping, fit_sessions, top_weighted_queries, ComparisonConfig, QmmModel, SmmLabeler,
    Tokenizer, Vocabulary, WhitespaceTokenizer,
};
use nationmood::seed;
use nationmood::simgen::{describe, write_corpus, FILES};
use nationmood::smm::{
    cross_validate, feature_importance, search_hyperparams, self_report_examples, SearchSpace, SmmModel,
};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::ingest::{align_features, corpus_files, load_corpus, require, Need};
use crate::manifest::Recorder;
use crate::{
    AggregateArgs, CorrelateArgs, EventArgs, FeaturesArgs, RhythmArgs, ScoreArgs, SimulateArgs, TrainQmmArgs,
    TrainSmmArgs,
};

pub struct Context {
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub args: Vec<String>,
}

impl Context {
    fn recorder(&self, command: &str) -> Recorder {
        Recorder::new(command, &self.config_sha256, self.seed)
    }

    fn stream(&self, rec: &mut Recorder, name: &str) -> u64 {
        let s = seed::derive_str(self.seed, name);
        rec.seeds.insert(name.to_string(), s);
        s
    }

    fn finish(&self, rec: Recorder, out: &Path) -> Result<()> {
        let path = rec.finish(out, self.args.clone())?;
        log::info!("wrote {}", path.display());
        Ok(())
    }
}

fn create(out: &Path, name: &str, rec: &mut Recorder) -> Result<(BufWriter<File>, PathBuf)> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    rec.output(&path);
    Ok((BufWriter::new(File::create(&path)?), path))
}

fn write_text(out: &Path, name: &str, text: &str, rec: &mut Recorder) -> Result<()> {
    let (mut w, _) = create(out, name, rec)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(out: &Path, name: &str, value: &T, rec: &mut Recorder) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(out, name, &text, rec)
}

fn open(path: &Path, rec: &mut Recorder) -> Result<BufReader<File>> {
    require(path)?;
    rec.input(path);
    Ok(BufReader::new(File::open(path)?))
}

fn parse_scope(s: &str) -> Result<Scope> {
    s.parse().map_err(|e| CliError::Usage(format!("--scope: {e}")))
}

fn instant(flag: &str, s: &str) -> Result<i64> {
    parse_instant(s).map(|(ts, _)| ts).map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

fn date_range(from: NaiveDate, to: NaiveDate) -> Result<BTreeSet<NaiveDate>> {
    if to < from {
        return Err(CliError::Usage(format!("empty date range {from} .. {to}")));
    }
    Ok(from.iter_days().take_while(|d| *d <= to).collect())
}

pub fn simulate(ctx: &Context, a: SimulateArgs) -> Result<()> {
    let mut cfg = ctx.config.simgen.clone();
    cfg.seed = ctx.seed;
    cfg.validate()?;
    let mut rec = ctx.recorder("simulate");
    rec.seeds.insert("simgen".into(), cfg.seed);
    let counts = write_corpus(&cfg, &a.out)?;
    for f in FILES.all() {
        rec.output(&a.out.join(f));
    }
    let summary = describe(&a.out)?;
    write_text(&a.out, "sim_summary.txt", &summary.to_text(), &mut rec)?;
    let (w, _) = create(&a.out, "sim_summary.csv", &mut rec)?;
    summary.write_csv(w)?;
    print!("{}", summary.to_text());
    rec.metric("users", counts.users);
    rec.metric("sessions", counts.sessions);
    rec.metric("sensor_samples", counts.samples);
    rec.metric("queries", counts.queries);
    rec.metric("reports", counts.reports);
    rec.sessions = Some(counts.sessions);
    ctx.finish(rec, &a.out)
}

pub fn features(ctx: &Context, a: FeaturesArgs) -> Result<()> {
    let mut rec = ctx.recorder("features");
    let need = Need { sensors: true, ..Need::default() };
    for f in corpus_files(&a.input, need)? {
        rec.input(&f);
    }
    let corpus = load_corpus(&a.input, &ctx.config.ingest, need)?;
    let registry = FeatureRegistry::standard();
    let rows = assemble_all(&corpus.sessions, registry);
    let (w, _) = create(&a.out, "features.csv", &mut rec)?;
    write_features(w, registry, &rows)?;
    write_text(&a.out, "registry.json", &registry.to_json(), &mut rec)?;
    rec.metric("sessions", rows.len());
    rec.metric("features", registry.len());
    rec.metric("registry_fingerprint", &registry.fingerprint);
    rec.sessions = Some(rows.len());
    println!("{} sessions, {} features, registry {}", rows.len(), registry.len(), registry.fingerprint);
    ctx.finish(rec, &a.out)
}

pub fn train_smm(ctx: &Context, a: TrainSmmArgs) -> Result<()> {
    let mut rec = ctx.recorder("train-smm");
    let need = Need { reports: true, ..Need::default() };
    for f in corpus_files(&a.input, need)? {
        rec.input(&f);
    }
    require(&a.features)?;
    rec.input(&a.features);
    let cfg = &ctx.config.smm;
    let folds = a.folds.unwrap_or(cfg.folds);
    let mode = a.fold_mode.unwrap_or(cfg.fold_mode);
    let budget = a.search.unwrap_or(cfg.search_budget);
    cfg.hyperparams.validate()?;

    let registry = FeatureRegistry::standard();
    let rows = read_features(&a.features, registry)?;
    let corpus = load_corpus(&a.input, &ctx.config.ingest, need)?;
    let aligned = align_features(&corpus.sessions, rows, FEATURE_COUNT);
    let examples = self_report_examples(corpus.sessions.iter().zip(&aligned));
    if examples.is_empty() {
        return Err(CliError::Data("no self-reported session has sensor features".into()));
    }

    let mut hp = cfg.hyperparams.clone();
    let mut search = None;
    if budget > 0 {
        let space = SearchSpace { folds, ..SearchSpace::default() };
        let outcome = search_hyperparams(&examples, budget, ctx.stream(&mut rec, "smm-search"), &space)?;
        hp = outcome.best.clone();
        search = Some(outcome);
    }
    let report = cross_validate(&examples, &hp, folds, ctx.stream(&mut rec, "smm-cv"), mode)?;
    let model = SmmModel::fit(&examples, &hp, ctx.stream(&mut rec, "smm"), &registry.fingerprint)?;
    let importance = feature_importance(&model, registry)?;

    let (w, _) = create(&a.out, "smm_model.json", &mut rec)?;
    model.save(w)?;
    let (w, _) = create(&a.out, "smm_cv.csv", &mut rec)?;
    report.write_csv(w)?;
    write_text(&a.out, "smm_cv.txt", &report.to_text(), &mut rec)?;
    write_json(&a.out, "smm_cv.json", &report, &mut rec)?;
    let (w, _) = create(&a.out, "smm_importance.csv", &mut rec)?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["rank", "feature", "group", "importance"])?;
    for (rank, (name, v)) in importance.iter().enumerate() {
        let group = registry.index_of(name).map(|i| registry.group_of(i).as_str()).unwrap_or("");
        wr.write_record([(rank + 1).to_string(), name.clone(), group.to_string(), v.to_string()])?;
    }
    wr.flush()?;
    if let Some(outcome) = &search {
        let (w, _) = create(&a.out, "smm_search.csv", &mut rec)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["trial", "hyperparams", "accuracy", "macro_f1"])?;
        for (i, t) in outcome.trials.iter().enumerate() {
            wr.write_record([
                i.to_string(),
                serde_json::to_string(&t.hyperparams)?,
                t.report.accuracy.to_string(),
                t.report.macro_avg.f1.to_string(),
            ])?;
        }
        wr.flush()?;
    }
    print!("{}", report.to_text());
    rec.metric("examples", examples.len());
    rec.metric("accuracy", report.accuracy);
    rec.metric("macro_f1", report.macro_avg.f1);
    rec.metric("hyperparams", &hp);
    rec.sessions = Some(examples.len());
    ctx.finish(rec, &a.out)
}

pub fn train_qmm(ctx: &Context, a: TrainQmmArgs) -> Result<()> {
    if !a.with_smm && !a.no_smm && !a.compare {
        return Err(CliError::Usage("choose --with-smm, --no-smm and/or --compare".into()));
    }
    if a.with_smm && (a.model.is_none() || a.features.is_none()) {
        return Err(CliError::Usage("--with-smm needs --model and --features".into()));
    }
    if a.compare && a.features.is_none() {
        return Err(CliError::Usage("--compare needs --features".into()));
    }
    let mut rec = ctx.recorder("train-qmm");
    let need = Need { queries: true, reports: true, ..Need::default() };
    for f in corpus_files(&a.input, need)? {
        rec.input(&f);
    }
    for p in a.features.iter().chain(&a.model) {
        require(p)?;
        rec.input(p);
    }
    let cfg = &ctx.config.qmm;
    let registry = FeatureRegistry::standard();
    let smm = match &a.model {
        Some(p) => {
            let m = SmmModel::load(BufReader::new(File::open(p)?))?;
            m.check_registry(registry)?;
            Some(m)
        }
        None => None,
    };
    let rows = match &a.features {
        Some(p) => Some(read_features(p, registry)?),
        None => None,
    };
    let corpus = load_corpus(&a.input, &ctx.config.ingest, need)?;
    let aligned = rows.map(|r| align_features(&corpus.sessions, r, FEATURE_COUNT));
    let tokenizer = WhitespaceTokenizer;

    let mut outputs_text = String::new();
    if a.with_smm || a.no_smm {
        let labeler = if a.with_smm {
            Some(SmmLabeler { model: smm.as_ref().expect("checked"), features: aligned.as_deref().expect("checked") })
        } else {
            None
        };
        let (fit, labels) = fit_sessions(
            &corpus.sessions,
            labeler,
            &tokenizer,
            cfg.min_count,
            cfg.lambda,
            ctx.stream(&mut rec, "qmm"),
        )?;
        let from_smm = labels.iter().filter(|l| l.source == nationmood::smm::LabelSource::SmmPredicted).count();
        let (w, _) = create(&a.out, "qmm_model.json", &mut rec)?;
        fit.model.save(w)?;
        let (w, _) = create(&a.out, "vocab.csv", &mut rec)?;
        fit.vocabulary.write_csv(w)?;
        let (w, _) = create(&a.out, "qmm_labels.csv", &mut rec)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["user", "window_start_ms", "polarity", "source"])?;
        for l in &labels {
            let source = match l.source {
                nationmood::smm::LabelSource::SelfReport => "self_report",
                nationmood::smm::LabelSource::SmmPredicted => "smm_predicted",
            };
            wr.write_record([l.key.user.clone(), l.key.window_start.to_string(), l.polarity.to_string(), source.into()])?;
        }
        wr.flush()?;
        let top = top_weighted_queries(&fit.model, &fit.vocabulary, 20)?;
        let (w, _) = create(&a.out, "qmm_top_queries.csv", &mut rec)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["side", "rank", "token", "weight"])?;
        for (side, list) in [("positive", &top.positive), ("negative", &top.negative)] {
            for (i, (t, v)) in list.iter().enumerate() {
                wr.write_record([side.to_string(), (i + 1).to_string(), t.clone(), v.to_string()])?;
            }
        }
        wr.flush()?;
        let variant = if a.with_smm { "with_smm" } else { "without_smm" };
        outputs_text += &format!(
            "query model ({variant}): {} labels ({} from SMM), balanced training set {}, vocabulary {}, converged {}\n",
            labels.len(),
            from_smm,
            fit.train_size,
            fit.vocabulary.len(),
            fit.model.converged
        );
        rec.metric("variant", variant);
        rec.metric("labels", labels.len());
        rec.metric("labels_from_smm", from_smm);
        rec.metric("train_size", fit.train_size);
        rec.metric("vocabulary", fit.vocabulary.len());
        rec.metric("converged", fit.model.converged);
        rec.metric("vocabulary_fingerprint", &fit.vocabulary.fingerprint);
    }
    if a.compare {
        let hp = smm.as_ref().map_or_else(|| ctx.config.smm.hyperparams.clone(), |m| m.hyperparams.clone());
        let cc = ComparisonConfig {
            splits: cfg.splits,
            train_fraction: cfg.train_fraction,
            lambda: cfg.lambda,
            min_count: cfg.min_count,
            smm: hp,
            seed: ctx.stream(&mut rec, "qmm-compare"),
        };
        let features = aligned.as_deref().expect("checked");
        let cmp = compare_label_bootstrapping(&corpus.sessions, features, &tokenizer, &registry.fingerprint, &cc)?;
        let (w, _) = create(&a.out, "qmm_comparison.csv", &mut rec)?;
        cmp.write_csv(w)?;
        write_json(&a.out, "qmm_comparison.json", &cmp, &mut rec)?;
        write_text(&a.out, "qmm_comparison.txt", &cmp.summary(), &mut rec)?;
        outputs_text += &cmp.summary();
        rec.metric("accuracy_without_smm", cmp.without_mean);
        rec.metric("accuracy_with_smm", cmp.with_mean);
    }
    print!("{outputs_text}");
    rec.sessions = Some(corpus.sessions.len());
    ctx.finish(rec, &a.out)
}

pub fn score(ctx: &Context, a: ScoreArgs) -> Result<()> {
    let mut rec = ctx.recorder("score");
    let need = Need { queries: true, ..Need::default() };
    let files = corpus_files(&a.input, need)?;
    let model = QmmModel::load(open(&a.model, &mut rec)?)?;
    let vocab = Vocabulary::read_csv(open(&a.vocab, &mut rec)?, model.min_count, &model.tokenizer_id)?;
    model.check_vocabulary(&vocab)?;
    let tokenizer = WhitespaceTokenizer;
    if model.tokenizer_id != tokenizer.id() {
        return Err(CliError::Fingerprint(format!("model tokenizer {} is not {}", model.tokenizer_id, tokenizer.id())));
    }
    for f in &files {
        rec.input(f);
    }
    let opts = ParseOptions { max_bad_ratio: ctx.config.ingest.max_bad_ratio };
    let profiles = parse_profiles(&a.input.join(FILES.profiles), opts)?.records;
    let queries = parse_query_log(&a.input.join(FILES.queries), opts)?.records;
    let window = i64::from(ctx.config.ingest.window_minutes) * MINUTE_MS;
    let n_queries = queries.len();
    let scores = score_queries(&model, &vocab, &tokenizer, queries, &profiles, window)?;
    let (w, _) = create(&a.out, "scores.csv", &mut rec)?;
    write_scores(w, &scores)?;
    rec.metric("queries", n_queries);
    rec.metric("sessions", scores.len());
    rec.sessions = Some(scores.len());
    println!("scored {} sessions from {} queries", scores.len(), n_queries);
    ctx.finish(rec, &a.out)
}

pub fn aggregate(ctx: &Context, a: AggregateArgs) -> Result<()> {
    let mut rec = ctx.recorder("aggregate");
    require(&a.scores)?;
    require(&a.profiles)?;
    let baseline = match (a.relative_mode, a.baseline_from, a.baseline_to) {
        (None, _, _) => None,
        (Some(m), Some(f), Some(t)) => Some((m, date_range(f, t)?)),
        (Some(_), _, _) => return Err(CliError::Usage("--relative-mode needs --baseline-from and --baseline-to".into())),
    };
    let scores = read_scores(open(&a.scores, &mut rec)?)?;
    rec.input(&a.profiles);
    let opts = ParseOptions { max_bad_ratio: ctx.config.ingest.max_bad_ratio };
    let profiles = parse_profiles(&a.profiles, opts)?.records;
    let points = aggregate_points(&scores, &profiles, a.granularity);
    let relative = match &baseline {
        Some((mode, dates)) => Some(relative_series(&points, dates, *mode)?),
        None => None,
    };
    let (w, _) = create(&a.out, &format!("mood_{}.csv", a.granularity), &mut rec)?;
    write_points(w, &points)?;
    if let Some(r) = &relative {
        let (w, _) = create(&a.out, &format!("relative_{}.csv", a.granularity), &mut rec)?;
        write_relative(w, r)?;
        rec.metric("relative_skipped_scopes", r.skipped.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    }
    rec.metric("sessions", scores.len());
    rec.metric("points", points.len());
    rec.sessions = Some(scores.len());
    println!("aggregated {} sessions into {} points ({})", scores.len(), points.len(), a.granularity);
    ctx.finish(rec, &a.out)
}

fn scope_series(points: &[nationmood::moodagg::MoodScorePoint], scope: Scope) -> Vec<&nationmood::moodagg::MoodScorePoint> {
    points.iter().filter(|p| p.scope == scope).collect()
}

pub fn analyze_rhythm(ctx: &Context, a: RhythmArgs) -> Result<()> {
    let mut rec = ctx.recorder("analyze-rhythm");
    let scope = parse_scope(&a.scope)?;
    if a.to < a.from {
        return Err(CliError::Usage(format!("--to {} is before --from {}", a.to, a.from)));
    }
    require(&a.points)?;
    if let Some(h) = &a.holidays {
        require(h)?;
    }
    let points = read_points(open(&a.points, &mut rec)?)?;
    let holidays: BTreeSet<NaiveDate> = match &a.holidays {
        Some(h) => {
            rec.input(h);
            parse_holidays(h)?.into_iter().map(|h| h.date).collect()
        }
        None => BTreeSet::new(),
    };
    let mut daily = BTreeMap::new();
    for p in scope_series(&points, scope) {
        match p.bucket {
            Bucket::Day(d) => {
                daily.insert(d, p.mean_score);
            }
            Bucket::Start(_) => return Err(CliError::Data("rhythm analysis needs a daily aggregate".into())),
        }
    }
    let report = weekday_rhythm(&daily, &holidays, a.from, a.to)?;
    let (w, _) = create(&a.out, "rhythm.csv", &mut rec)?;
    report.write_csv(w)?;
    let (w, _) = create(&a.out, "rhythm_long.csv", &mut rec)?;
    write_long(w, &report.long_rows())?;
    write_json(&a.out, "rhythm.json", &report, &mut rec)?;
    for s in &report.weekdays {
        println!("{}: up {}/{} ({:.3})", s.weekday, s.up, s.counted, s.share);
    }
    ctx.finish(rec, &a.out)
}

pub fn analyze_correlate(ctx: &Context, a: CorrelateArgs) -> Result<()> {
    let mut rec = ctx.recorder("analyze-correlate");
    let dates = date_range(a.baseline_from, a.baseline_to)?;
    require(&a.points)?;
    require(&a.cases)?;
    let points = read_points(open(&a.points, &mut rec)?)?;
    if points.iter().any(|p| matches!(p.bucket, Bucket::Start(_))) {
        return Err(CliError::Data("correlation needs a daily aggregate".into()));
    }
    rec.input(&a.cases);
    let cases = parse_case_counts(&a.cases)?;
    let relative = relative_series(&points, &dates, a.relative_mode)?;
    let on_date: BTreeMap<Prefecture, f64> = relative
        .points
        .iter()
        .filter_map(|p| match (p.scope, p.bucket) {
            (Scope::Prefecture(pref), Bucket::Day(d)) if d == a.date => Some((pref, p.value)),
            _ => None,
        })
        .collect();
    let corr = correlate_with_cases(&on_date, &cases, a.date)?;
    let (w, _) = create(&a.out, "correlation.csv", &mut rec)?;
    corr.write_csv(w)?;
    let (w, _) = create(&a.out, "correlation_long.csv", &mut rec)?;
    write_long(w, &corr.long_rows())?;
    write_json(&a.out, "correlation.json", &corr, &mut rec)?;
    println!("pearson r = {:.4} over {} prefectures on {}", corr.r, corr.pairs.len(), corr.date);
    rec.metric("r", corr.r);
    rec.metric("pairs", corr.pairs.len());
    ctx.finish(rec, &a.out)
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct EventSummary {
    pub scope: String,
    pub target_start: String,
    pub reference_starts: Vec<String>,
    pub shock: Option<String>,
    pub pre_mean_ratio: Option<f64>,
    pub post_mean_ratio: Option<f64>,
    pub relative_drop: Option<f64>,
    pub min_drop: f64,
    pub detected: Option<bool>,
    pub max_abs_deviation: f64,
    pub omitted_buckets: usize,
}

pub fn analyze_event(ctx: &Context, a: EventArgs) -> Result<()> {
    let mut rec = ctx.recorder("analyze-event");
    let scope = parse_scope(&a.scope)?;
    let target = instant("--target", &a.target)?;
    let refs = a.references.iter().map(|r| instant("--reference", r)).collect::<Result<Vec<_>>>()?;
    let shock = a.shock.as_deref().map(|s| instant("--shock", s)).transpose()?;
    if a.granularity == Granularity::Daily {
        return Err(CliError::Usage("event analysis needs a sub-daily granularity".into()));
    }
    if !(a.length_hours > 0.0 && a.length_hours.is_finite()) {
        return Err(CliError::Usage("--length-hours must be positive".into()));
    }
    require(&a.points)?;
    let points = read_points(open(&a.points, &mut rec)?)?;
    let mut series = BTreeMap::new();
    for p in scope_series(&points, scope) {
        match p.bucket {
            Bucket::Start(ms) => {
                series.insert(ms, p.mean_score);
            }
            Bucket::Day(_) => return Err(CliError::Data("event analysis needs a sub-daily aggregate".into())),
        }
    }
    let length = (a.length_hours * 3_600_000.0).round() as i64;
    let trace = event_gap(&series, target, &refs, length, a.granularity.bucket_ms())?;
    let (pre, post) = match shock {
        Some(s) => {
            let split = s - target;
            // The bucket containing the shock counts as post-shock.
            let split = split.div_euclid(a.granularity.bucket_ms()) * a.granularity.bucket_ms();
            (trace.mean_ratio(i64::MIN, split), trace.mean_ratio(split, i64::MAX))
        }
        None => (None, None),
    };
    let relative_drop = match (pre, post) {
        (Some(p), Some(q)) if p != 0.0 => Some((p - q) / p),
        _ => None,
    };
    let summary = EventSummary {
        scope: scope.to_string(),
        target_start: a.target.clone(),
        reference_starts: a.references.clone(),
        shock: a.shock.clone(),
        pre_mean_ratio: pre,
        post_mean_ratio: post,
        relative_drop,
        min_drop: a.min_drop,
        detected: relative_drop.map(|d| d >= a.min_drop),
        max_abs_deviation: trace.points.iter().map(|p| (p.ratio - 1.0).abs()).fold(0.0, f64::max),
        omitted_buckets: trace.omitted.len(),
    };
    let (w, _) = create(&a.out, "event_gap.csv", &mut rec)?;
    trace.write_csv(w, DISPLAY_OFFSET_MIN)?;
    let (w, _) = create(&a.out, "event_gap_long.csv", &mut rec)?;
    write_long(w, &trace.long_rows(DISPLAY_OFFSET_MIN))?;
    write_json(&a.out, "event_gap.json", &summary, &mut rec)?;
    println!(
        "pre {:?} post {:?} drop {:?} detected {:?} (max |ratio-1| {:.4})",
        summary.pre_mean_ratio, summary.post_mean_ratio, summary.relative_drop, summary.detected, summary.max_abs_deviation
    );
    rec.metric("relative_drop", summary.relative_drop);
    rec.metric("max_abs_deviation", summary.max_abs_deviation);
    ctx.finish(rec, &a.out)
}
