use std::fmt::Write as _;
use std::path::Path;

use bagau_core::metrics::{evaluate, MetricReport, MetricSummary};
use bagau_core::train::BEST_CHECKPOINT;
use bagau_core::{Checkpoint, Error, Result, Variant};
use serde::Serialize;

use super::predict::predict_one;
use super::{open_dataset, resolve_split, split_hash, train, write_text};
use crate::config::RunConfig;

pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TXT: &str = "ablation.txt";

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub label: String,
    pub mam: bool,
    pub afm: bool,
    pub best_epoch: Option<usize>,
    pub metrics: MetricSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationReport {
    pub split_sha256: String,
    pub test_cases: Vec<String>,
    pub rows: Vec<AblationRow>,
}

fn mark(on: bool) -> &'static str {
    if on {
        "yes"
    } else {
        "-"
    }
}

impl AblationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<34} {:>4} {:>4} {:>8} {:>8} {:>8} {:>8}",
            "Method", "MAM", "AFM", "DSC", "AVD", "Recall", "F1"
        );
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "{:<34} {:>4} {:>4} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                r.label,
                mark(r.mam),
                mark(r.afm),
                m.dsc,
                m.avd,
                m.recall,
                m.f1
            );
        }
        let _ = writeln!(s, "split sha256 {}", self.split_sha256);
        s
    }

    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }
}

/// Trains every variant under the same seed and split into `out/<variant>/`,
/// scores each best checkpoint on the shared test split, and writes the
/// comparative table.
pub fn run(base: &RunConfig, variants: &[Variant], out: &Path) -> Result<AblationReport> {
    if variants.is_empty() {
        return Err(Error::Config("no variants requested".into()));
    }
    base.echo(out)?;
    let ds = open_dataset(base)?;
    let split = resolve_split(base, &ds)?;
    let expected = split_hash(&split);
    let test: Vec<_> = split
        .test
        .iter()
        .map(|id| ds.load_case(id, true))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(variants.len());
    for &v in variants {
        let mut cfg = base.clone();
        cfg.set_variant(v);
        let dir = out.join(v.name());
        log::info!("ablation: training {}", v.name());
        let summary = train::run(&cfg, &dir, None)?;
        if summary.split_hash != expected {
            return Err(Error::Data(format!(
                "variant {} trained on split {} instead of {}",
                v.name(),
                summary.split_hash,
                expected
            )));
        }
        let ck = Checkpoint::load(dir.join(BEST_CHECKPOINT))?;
        let scored = test
            .iter()
            .map(|c| {
                let p = predict_one(&ck, c, cfg.precision, cfg.train.threshold)?;
                Ok((c.case_id.clone(), p.mask, c.mask.clone().expect("loaded with mask")))
            })
            .collect::<Result<Vec<_>>>()?;
        let report: MetricReport = evaluate(&scored, cfg.eval.connectivity)?;
        report.save(dir.join("report"))?;
        rows.push(AblationRow {
            variant: v,
            label: v.label().to_string(),
            mam: v.uses_mam(),
            afm: v.uses_afm(),
            best_epoch: summary.best_epoch,
            metrics: report.aggregate,
        });
    }
    let report = AblationReport {
        split_sha256: expected,
        test_cases: split.test,
        rows,
    };
    write_text(
        &out.join(ABLATION_JSON),
        &(serde_json::to_string_pretty(&report).expect("json") + "\n"),
    )?;
    write_text(&out.join(ABLATION_TXT), &report.to_text())?;
    if let (Some(full), Some(plain)) = (report.row(Variant::Bagau), report.row(Variant::BagauPlain)) {
        let verdict = if full.metrics.dsc >= plain.metrics.dsc {
            "holds"
        } else {
            "does not hold"
        };
        log::info!(
            "expected ordering bagau >= bagau_plain in DSC {verdict} ({:.2} vs {:.2})",
            full.metrics.dsc,
            plain.metrics.dsc
        );
    }
    Ok(report)
}
