use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::corpus::{Corpus, Sample};
use super::split::SplitSpec;
use crate::error::{Error, Result};
use crate::matcher::{build_template_matrix, classify, classify_restricted, embed_images};
use crate::prep::NormalizedImage;
use crate::scalar::Scalar;
use crate::siamese::Model;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    /// `None` when the population is empty.
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn record(&mut self, hit: bool) {
        self.total += 1;
        self.correct += usize::from(hit);
    }

    fn merged(self, other: Accuracy) -> Accuracy {
        Accuracy {
            correct: self.correct + other.correct,
            total: self.total + other.total,
        }
    }
}

/// The five `A|B` accuracies (dataset `A` recognized against label space
/// `B`), with the full-label-space confusion counts behind `D|C`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub ds_cs: Accuracy,
    pub ds_c: Accuracy,
    pub du_cu: Accuracy,
    pub du_c: Accuracy,
    pub d_c: Accuracy,
    /// `(truth, prediction) → count` over every test sample, label space `C`.
    pub confusion: BTreeMap<(u32, u32), usize>,
    /// First sample source seen for each confusion cell.
    pub exemplars: BTreeMap<(u32, u32), String>,
}

pub const REPORT_COLUMNS: [&str; 5] = ["D_s|C_s", "D_s|C", "D_u|C_u", "D_u|C", "D|C"];

fn fmt_acc(a: &Accuracy) -> String {
    a.value()
        .map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

impl EvalReport {
    pub fn columns(&self) -> [&Accuracy; 5] {
        [&self.ds_cs, &self.ds_c, &self.du_cu, &self.du_c, &self.d_c]
    }

    /// Header plus one row of accuracies; `NA` for an empty population.
    pub fn to_tsv(&self) -> String {
        let mut out = REPORT_COLUMNS.join("\t");
        out.push('\n');
        out.push_str(&self.columns().map(fmt_acc).join("\t"));
        out.push('\n');
        out
    }

    pub fn confusion_tsv(&self) -> String {
        let mut out = String::from("truth\tprediction\tcount\texemplar\n");
        for (&(t, p), &n) in &self.confusion {
            let ex = self.exemplars.get(&(t, p)).map_or("", String::as_str);
            let _ = writeln!(out, "{t}\t{p}\t{n}\t{ex}");
        }
        out
    }
}

/// Scores the held-out samples of both halves of the split.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus,
    split: &SplitSpec,
) -> Result<EvalReport> {
    let classes = corpus.class_ids();
    if classes != split.charset {
        return Err(Error::SplitMismatch(format!(
            "split covers {} classes, corpus has {}",
            split.charset.len(),
            classes.len()
        )));
    }
    let templates: Vec<(u32, &NormalizedImage)> =
        corpus.templates.iter().map(|(c, t)| (*c, t)).collect();
    let matrix = build_template_matrix(model, &templates)?;
    let seen_set = split.seen_set();
    let unseen_set = split.unseen_set();

    let mut report = EvalReport::default();
    for (is_seen, subset, set) in [
        (true, &split.seen, &seen_set),
        (false, &split.unseen, &unseen_set),
    ] {
        let samples: Vec<(u32, &Sample)> = Corpus::samples_of(&corpus.test, subset).collect();
        if samples.is_empty() {
            continue;
        }
        let imgs: Vec<&NormalizedImage> = samples.iter().map(|(_, s)| &s.image).collect();
        let feats = embed_images(model, &imgs)?;
        let mut acc_r = Accuracy::default();
        let mut acc_f = Accuracy::default();
        for ((truth, sample), f) in samples.iter().zip(&feats) {
            let pr = classify_restricted(f, &matrix, &model.head, set)?;
            let pf = classify(f, &matrix, &model.head)?;
            acc_r.record(pr.class_id == *truth);
            acc_f.record(pf.class_id == *truth);
            *report.confusion.entry((*truth, pf.class_id)).or_default() += 1;
            report
                .exemplars
                .entry((*truth, pf.class_id))
                .or_insert_with(|| sample.source.clone());
        }
        if is_seen {
            (report.ds_cs, report.ds_c) = (acc_r, acc_f);
        } else {
            (report.du_cu, report.du_c) = (acc_r, acc_f);
        }
    }
    report.d_c = report.ds_c.merged(report.du_c);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorCell {
    pub truth: u32,
    pub predicted: u32,
    pub count: usize,
    pub exemplar: String,
}

/// The `k` most frequent misclassification cells, most frequent first
/// (ties by `(truth, predicted)`).
pub fn error_report(report: &EvalReport, k: usize) -> Vec<ErrorCell> {
    let mut cells: Vec<ErrorCell> = report
        .confusion
        .iter()
        .filter(|((t, p), _)| t != p)
        .map(|(&(truth, predicted), &count)| ErrorCell {
            truth,
            predicted,
            count,
            exemplar: report
                .exemplars
                .get(&(truth, predicted))
                .cloned()
                .unwrap_or_default(),
        })
        .collect();
    cells.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then((a.truth, a.predicted).cmp(&(b.truth, b.predicted)))
    });
    cells.truncate(k);
    cells
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with(cells: &[((u32, u32), usize)]) -> EvalReport {
        let mut r = EvalReport::default();
        for &(cell, n) in cells {
            r.confusion.insert(cell, n);
            r.exemplars
                .insert(cell, format!("{}-{}.pgm", cell.0, cell.1));
        }
        r
    }

    #[test]
    fn perfect_run_has_no_errors() {
        let r = report_with(&[((0, 0), 5), ((1, 1), 5)]);
        assert!(error_report(&r, 10).is_empty());
    }

    #[test]
    fn injected_confusion_ranks_first() {
        let r = report_with(&[((0, 0), 5), ((2, 5), 4), ((5, 2), 1), ((3, 1), 2)]);
        let top = error_report(&r, 10);
        assert_eq!((top[0].truth, top[0].predicted, top[0].count), (2, 5, 4));
        assert_eq!(top[0].exemplar, "2-5.pgm");
        assert_eq!(top.len(), 3);
        assert_eq!(error_report(&r, 1).len(), 1);
    }

    #[test]
    fn tsv_marks_empty_population() {
        let mut r = EvalReport::default();
        r.ds_cs = Accuracy {
            correct: 3,
            total: 4,
        };
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("D_s|C_s\tD_s|C\tD_u|C_u\tD_u|C\tD|C\n"));
        assert!(tsv.contains("0.750000\tNA"));
    }
}
