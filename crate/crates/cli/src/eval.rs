use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mirage::eval::{
    align, error_breakdown, load_dataset, render_category_table, render_confusion, render_errors, render_summary_table,
    score_with_bins, ErrorBreakdown, MetricReport,
};
use mirage::pipeline::read_reports;
use serde::Serialize;

use crate::run::{RunManifest, MANIFEST, REPORTS_DIR};
use crate::EvalArgs;

#[derive(Serialize)]
struct EvalOutput<'a> {
    label: &'a str,
    metrics: &'a MetricReport,
    errors: &'a ErrorBreakdown,
}

/// (reports dir, run dir)
fn locate(path: &Path) -> (PathBuf, PathBuf) {
    let nested = path.join(REPORTS_DIR);
    if nested.is_dir() {
        (nested, path.to_owned())
    } else {
        let run_dir = path.parent().map(Path::to_owned).unwrap_or_else(|| PathBuf::from("."));
        (path.to_owned(), run_dir)
    }
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    if args.bins == 0 {
        bail!("--bins must be at least 1");
    }
    let (reports_dir, run_dir) = locate(&args.reports);
    if !reports_dir.is_dir() {
        bail!("{} is not a directory", reports_dir.display());
    }
    let reports = read_reports(&reports_dir).with_context(|| format!("reading {}", reports_dir.display()))?;
    if reports.is_empty() {
        bail!("no reports in {}", reports_dir.display());
    }
    let manifest: Option<RunManifest> = fs::read_to_string(run_dir.join(MANIFEST))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok());

    // a run may cover a subsample; the manifest, when present, says which ids
    let expected: HashSet<String> = match &manifest {
        Some(m) => m.sample_ids.iter().cloned().collect(),
        None => reports.iter().map(|r| r.sample_id.clone()).collect(),
    };
    let gold: Vec<_> = load_dataset(&args.dataset)?
        .into_iter()
        .filter(|r| expected.contains(&r.id))
        .collect();
    let metrics = score_with_bins(&reports, &gold, args.bins)?;
    let errors = error_breakdown(&align(&reports, &gold)?);

    let label = args
        .label
        .clone()
        .or_else(|| {
            manifest
                .as_ref()
                .and_then(|m| m.ablation)
                .map(|a| a.display_name().to_owned())
        })
        .unwrap_or_else(|| "Full".to_owned());
    print!("{}", render_summary_table(&[(&label, &metrics)]));
    println!();
    print!("{}", render_category_table(&[(&label, &metrics)]));
    println!();
    print!("{}", render_confusion(&metrics));
    print!("{}", render_errors(&errors));

    let out = args.out.unwrap_or_else(|| run_dir.join("metrics.json"));
    let body = serde_json::to_string_pretty(&EvalOutput {
        label: &label,
        metrics: &metrics,
        errors: &errors,
    })?;
    fs::write(&out, body + "\n").with_context(|| format!("writing {}", out.display()))?;
    println!("metrics written to {}", out.display());
    Ok(())
}
