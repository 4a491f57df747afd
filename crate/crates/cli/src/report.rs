//! Consolidated summary of the artifacts found under a run directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nationmood::analytics::{CaseCorrelation, RhythmReport};
use nationmood::qmm::Comparison;
use nationmood::smm::CvReport;
use serde::de::DeserializeOwned;

use crate::commands::{Context, EventSummary};
use crate::error::{CliError, Result};
use crate::manifest::Recorder;
use crate::ReportArgs;

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn load<T: DeserializeOwned>(files: &[PathBuf], name: &str) -> Result<Vec<(PathBuf, T)>> {
    files
        .iter()
        .filter(|p| p.file_name().is_some_and(|n| n == name))
        .map(|p| {
            let v = serde_json::from_slice(&std::fs::read(p)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            Ok((p.clone(), v))
        })
        .collect()
}

pub fn report(ctx: &Context, a: ReportArgs) -> Result<()> {
    let mut rec = Recorder::new("report", &ctx.config_sha256, ctx.seed);
    crate::ingest::require(&a.dir)?;
    let out = a.out.clone().unwrap_or_else(|| a.dir.clone());
    let mut files = Vec::new();
    walk(&a.dir, &mut files)?;
    let rel = |p: &Path| p.strip_prefix(&a.dir).unwrap_or(p).display().to_string();

    let cv: Vec<(PathBuf, CvReport)> = load(&files, "smm_cv.json")?;
    let cmp: Vec<(PathBuf, Comparison)> = load(&files, "qmm_comparison.json")?;
    let rhythm: Vec<(PathBuf, RhythmReport)> = load(&files, "rhythm.json")?;
    let corr: Vec<(PathBuf, CaseCorrelation)> = load(&files, "correlation.json")?;
    let events: Vec<(PathBuf, EventSummary)> = load(&files, "event_gap.json")?;
    if cv.is_empty() && cmp.is_empty() && rhythm.is_empty() && corr.is_empty() && events.is_empty() {
        return Err(CliError::Data(format!("no completed runs under {}", a.dir.display())));
    }

    let mut md = String::from("# Mood pipeline report\n");
    let mut rows: Vec<[String; 4]> = Vec::new();
    let mut row = |section: &str, src: &str, metric: &str, v: f64| {
        rows.push([section.into(), src.into(), metric.into(), v.to_string()]);
    };

    if !cv.is_empty() {
        md += "\n## Sensor mood model cross-validation\n\n| run | accuracy | macro-F1 | folds |\n|---|---|---|---|\n";
        for (p, r) in &cv {
            let _ = writeln!(md, "| {} | {:.3} | {:.3} | {} |", rel(p), r.accuracy, r.macro_avg.f1, r.folds);
            row("smm_cv", &rel(p), "accuracy", r.accuracy);
            row("smm_cv", &rel(p), "macro_f1", r.macro_avg.f1);
        }
    }
    if !cmp.is_empty() {
        md += "\n## Query model with and without sensor-model labels\n\n| run | without | with | delta (points) |\n|---|---|---|---|\n";
        for (p, c) in &cmp {
            let _ = writeln!(
                md,
                "| {} | {:.1}% ± {:.1} | {:.1}% ± {:.1} | {:+.1} |",
                rel(p),
                c.without_mean * 100.0,
                c.without_std * 100.0,
                c.with_mean * 100.0,
                c.with_std * 100.0,
                (c.with_mean - c.without_mean) * 100.0
            );
            row("qmm_comparison", &rel(p), "accuracy_without_smm", c.without_mean);
            row("qmm_comparison", &rel(p), "accuracy_with_smm", c.with_mean);
            row("qmm_comparison", &rel(p), "delta", c.with_mean - c.without_mean);
        }
    }
    if !rhythm.is_empty() {
        md += "\n## Weekly rhythm\n";
        for (p, r) in &rhythm {
            let _ = write!(md, "\n{} ({} .. {})\n\n| weekday | up | counted | share |\n|---|---|---|---|\n", rel(p), r.from, r.to);
            for s in &r.weekdays {
                let _ = writeln!(md, "| {} | {} | {} | {:.3} |", s.weekday, s.up, s.counted, s.share);
                row("rhythm", &rel(p), &format!("{}_up_share", s.weekday.to_lowercase()), s.share);
            }
        }
    }
    if !corr.is_empty() {
        md += "\n## Regional correlation with case counts\n\n| run | date | r | prefectures |\n|---|---|---|---|\n";
        for (p, c) in &corr {
            let _ = writeln!(md, "| {} | {} | {:.3} | {} |", rel(p), c.date, c.r, c.pairs.len());
            row("correlation", &rel(p), "r", c.r);
        }
    }
    if !events.is_empty() {
        md += "\n## Event gap\n\n| run | pre ratio | post ratio | drop | detected | max deviation |\n|---|---|---|---|---|---|\n";
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        for (p, e) in &events {
            let detected = e.detected.map_or("-".to_string(), |d| if d { "yes".into() } else { "no".into() });
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {:.4} |",
                rel(p),
                f(e.pre_mean_ratio),
                f(e.post_mean_ratio),
                f(e.relative_drop),
                detected,
                e.max_abs_deviation
            );
            if let Some(d) = e.relative_drop {
                row("event_gap", &rel(p), "relative_drop", d);
            }
            row("event_gap", &rel(p), "max_abs_deviation", e.max_abs_deviation);
        }
    }

    for p in cv.iter().map(|x| &x.0).chain(cmp.iter().map(|x| &x.0)).chain(rhythm.iter().map(|x| &x.0)) {
        rec.input(p);
    }
    for p in corr.iter().map(|x| &x.0).chain(events.iter().map(|x| &x.0)) {
        rec.input(p);
    }
    std::fs::create_dir_all(&out)?;
    let md_path = out.join("report.md");
    std::fs::write(&md_path, &md)?;
    rec.output(&md_path);
    let csv_path = out.join("report_metrics.csv");
    let mut wr = csv::Writer::from_path(&csv_path)?;
    wr.write_record(["section", "source", "metric", "value"])?;
    for r in &rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    rec.output(&csv_path);
    print!("{md}");
    let path = rec.finish(&out, ctx.args.clone())?;
    log::info!("wrote {}", path.display());
    Ok(())
}
