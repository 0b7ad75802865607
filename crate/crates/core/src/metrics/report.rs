//! Per-backend score table joined with human ratings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{bleu, call_filter, iou, lex_code, map_scale, pearson, MetricError, Rating};

/// Version tag written at the top of every report.
pub const REPORT_SCHEMA: &str = "nlgp-score/1";

/// Cases whose IoU and mean usefulness differ by more than this are flagged
/// for manual triage (one step on the four-point scale).
pub const MISMATCH_THRESHOLD: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub case_id: String,
    pub rater_id: String,
    pub usefulness: Rating,
    pub coverage: Rating,
    pub precision: Rating,
    pub compatibility: Rating,
    /// Backend whose prediction was rated; without it the rating applies to
    /// every backend's prediction for the case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_id: Option<String>,
}

pub fn read_ratings(text: &str) -> Result<Vec<RatingRecord>, MetricError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| MetricError::Format {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct PredictionRow<'a> {
    pub id: &'a str,
    pub backend_id: &'a str,
    pub prediction: &'a str,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreOptions {
    /// Add call-filtered BLEU/IoU columns.
    pub call_filter: bool,
    /// Correlate against every individual rating instead of the per-case
    /// mean over raters.
    pub per_rater: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseScore {
    pub id: String,
    pub backend_id: String,
    pub bleu: f64,
    pub bleu_smoothed: f64,
    pub iou: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call_bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call_iou: Option<f64>,
    /// Mean mapped usefulness over raters.
    pub usefulness: Option<f64>,
    /// Individual mapped usefulness ratings.
    #[serde(skip)]
    pub usefulness_ratings: Vec<f64>,
    pub mismatch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub model: String,
    pub cases: usize,
    pub rated: usize,
    pub bleu: f64,
    pub bleu_smoothed: f64,
    pub iou: f64,
    /// `None` when the correlation is undefined (too few rated cases or a
    /// constant series).
    pub rho_bleu: Option<f64>,
    pub rho_bleu_smoothed: Option<f64>,
    pub rho_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call_bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub call_iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_call_bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_call_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable {
    pub schema: String,
    pub rows: Vec<ScoreRow>,
    pub cases: Vec<CaseScore>,
    /// Cases left out because the reference has no tokens.
    pub excluded: Vec<String>,
}

pub const POOLED_ROW: &str = "all models";

/// Score every prediction against its target and correlate with ratings.
/// Rows are ordered by backend id, followed by the pooled row.
pub fn score_report(
    predictions: &[PredictionRow<'_>],
    targets: &BTreeMap<String, String>,
    ratings: &[RatingRecord],
    opts: ScoreOptions,
) -> Result<ScoreTable, MetricError> {
    let mut unmatched: BTreeSet<String> = predictions
        .iter()
        .filter(|p| !targets.contains_key(p.id))
        .map(|p| format!("prediction {}", p.id))
        .collect();
    let predicted: BTreeSet<(&str, &str)> = predictions.iter().map(|p| (p.id, p.backend_id)).collect();
    for r in ratings {
        let hit = match &r.backend_id {
            Some(b) => predicted.contains(&(r.case_id.as_str(), b.as_str())),
            None => predicted.iter().any(|(id, _)| *id == r.case_id),
        };
        if !hit {
            unmatched.insert(format!("rating {}", r.case_id));
        }
    }
    if !unmatched.is_empty() {
        return Err(MetricError::JoinMismatch(unmatched.into_iter().collect()));
    }

    let mut cases = Vec::new();
    let mut excluded = Vec::new();
    let mut ordered: Vec<&PredictionRow> = predictions.iter().collect();
    ordered.sort_by(|a, b| (a.id, a.backend_id).cmp(&(b.id, b.backend_id)));
    for p in ordered {
        let target = &targets[p.id];
        let ref_tokens = lex_code(target);
        if ref_tokens.is_empty() {
            excluded.push(p.id.to_string());
            continue;
        }
        let pred_tokens = lex_code(p.prediction);
        let b = bleu(&pred_tokens, &ref_tokens)?;
        let u = iou(&pred_tokens, &ref_tokens)?;
        let (call_bleu, call_iou) = if opts.call_filter {
            let (pc, rc) = (call_filter(p.prediction), call_filter(target));
            (bleu(&pc, &rc).ok().map(|b| b.smoothed), iou(&pc, &rc).ok())
        } else {
            (None, None)
        };
        let ratings_here: Vec<f64> = ratings
            .iter()
            .filter(|r| r.case_id == p.id && r.backend_id.as_deref().is_none_or(|b| b == p.backend_id))
            .map(|r| map_scale(r.usefulness))
            .collect();
        let usefulness = (!ratings_here.is_empty()).then(|| ratings_here.iter().sum::<f64>() / ratings_here.len() as f64);
        cases.push(CaseScore {
            id: p.id.to_string(),
            backend_id: p.backend_id.to_string(),
            bleu: b.raw,
            bleu_smoothed: b.smoothed,
            iou: u,
            call_bleu,
            call_iou,
            usefulness,
            usefulness_ratings: ratings_here,
            mismatch: usefulness.is_some_and(|h| (u - h).abs() > MISMATCH_THRESHOLD),
        });
    }

    let backends: BTreeSet<&str> = cases.iter().map(|c| c.backend_id.as_str()).collect();
    let mut rows: Vec<ScoreRow> = backends
        .iter()
        .map(|b| row(b, cases.iter().filter(|c| c.backend_id == *b), opts))
        .collect();
    rows.push(row(POOLED_ROW, cases.iter(), opts));
    Ok(ScoreTable {
        schema: REPORT_SCHEMA.to_string(),
        rows,
        cases,
        excluded,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn row<'a>(name: &str, cases: impl Iterator<Item = &'a CaseScore> + Clone, opts: ScoreOptions) -> ScoreRow {
    let all: Vec<&CaseScore> = cases.collect();
    let corr = |metric: &dyn Fn(&CaseScore) -> Option<f64>| -> Option<f64> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for c in &all {
            let Some(m) = metric(c) else { continue };
            if opts.per_rater {
                for r in &c.usefulness_ratings {
                    x.push(m);
                    y.push(*r);
                }
            } else if let Some(h) = c.usefulness {
                x.push(m);
                y.push(h);
            }
        }
        pearson(&x, &y).ok()
    };
    let call = |f: &dyn Fn(&CaseScore) -> Option<f64>| -> Option<f64> {
        opts.call_filter.then(|| mean(all.iter().filter_map(|c| f(c))))
    };
    ScoreRow {
        model: name.to_string(),
        cases: all.len(),
        rated: all.iter().filter(|c| c.usefulness.is_some()).count(),
        bleu: mean(all.iter().map(|c| c.bleu)),
        bleu_smoothed: mean(all.iter().map(|c| c.bleu_smoothed)),
        iou: mean(all.iter().map(|c| c.iou)),
        rho_bleu: corr(&|c| Some(c.bleu)),
        rho_bleu_smoothed: corr(&|c| Some(c.bleu_smoothed)),
        rho_iou: corr(&|c| Some(c.iou)),
        call_bleu: call(&|c| c.call_bleu),
        call_iou: call(&|c| c.call_iou),
        rho_call_bleu: if opts.call_filter { corr(&|c| c.call_bleu) } else { None },
        rho_call_iou: if opts.call_filter { corr(&|c| c.call_iou) } else { None },
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl ScoreTable {
    /// Tab-separated table, one row per model, preceded by a schema line.
    pub fn to_tsv(&self) -> String {
        let call = self.rows.iter().any(|r| r.call_iou.is_some());
        let mut out = format!("#schema\t{}\n", self.schema);
        out.push_str("model\tcases\trated\tbleu\tbleu_smoothed\tiou\trho_bleu\trho_bleu_smoothed\trho_iou");
        if call {
            out.push_str("\tcall_bleu\tcall_iou\trho_call_bleu\trho_call_iou");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
                r.model,
                r.cases,
                r.rated,
                r.bleu,
                r.bleu_smoothed,
                r.iou,
                cell(r.rho_bleu),
                cell(r.rho_bleu_smoothed),
                cell(r.rho_iou)
            );
            if call {
                let _ = write!(
                    out,
                    "\t{}\t{}\t{}\t{}",
                    cell(r.call_bleu),
                    cell(r.call_iou),
                    cell(r.rho_call_bleu),
                    cell(r.rho_call_iou)
                );
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Cases flagged for manual triage.
    pub fn mismatches(&self) -> impl Iterator<Item = &CaseScore> {
        self.cases.iter().filter(|c| c.mismatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(case: &str, rater: &str, u: Rating, backend: Option<&str>) -> RatingRecord {
        RatingRecord {
            case_id: case.into(),
            rater_id: rater.into(),
            usefulness: u,
            coverage: u,
            precision: u,
            compatibility: u,
            backend_id: backend.map(str::to_string),
        }
    }

    fn targets() -> BTreeMap<String, String> {
        BTreeMap::from([
            ("c1".to_string(), "plt.hist(x)".to_string()),
            ("c2".to_string(), "df = pd.read_csv('a.csv')".to_string()),
            ("c3".to_string(), "print(df.head())".to_string()),
        ])
    }

    #[test]
    fn perfect_predictions_have_unit_means_and_degenerate_correlation() {
        let t = targets();
        let preds: Vec<PredictionRow> = t
            .iter()
            .map(|(id, code)| PredictionRow {
                id,
                backend_id: "natural",
                prediction: code,
            })
            .collect();
        let ratings: Vec<RatingRecord> = t.keys().map(|id| rating(id, "r1", Rating::StronglyAgree, None)).collect();
        let table = score_report(&preds, &t, &ratings, ScoreOptions::default()).unwrap();
        assert_eq!(table.rows.len(), 2);
        let r = &table.rows[0];
        assert_eq!((r.bleu_smoothed, r.iou), (1.0, 1.0));
        assert_eq!(r.rho_iou, None);
        assert_eq!(table.rows[1].model, POOLED_ROW);
    }

    #[test]
    fn two_backends_and_determinism() {
        let t = targets();
        let mut preds = Vec::new();
        for (id, code) in &t {
            preds.push(PredictionRow {
                id,
                backend_id: "b",
                prediction: "x = 1",
            });
            preds.push(PredictionRow {
                id,
                backend_id: "a",
                prediction: code,
            });
        }
        let ratings = vec![
            rating("c1", "r1", Rating::Agree, Some("a")),
            rating("c1", "r2", Rating::StronglyAgree, Some("a")),
            rating("c2", "r1", Rating::Disagree, Some("a")),
            rating("c1", "r1", Rating::StronglyAgree, Some("b")),
            rating("c2", "r1", Rating::StronglyDisagree, Some("b")),
        ];
        let opts = ScoreOptions {
            call_filter: true,
            per_rater: false,
        };
        let t1 = score_report(&preds, &t, &ratings, opts).unwrap();
        preds.reverse();
        let t2 = score_report(&preds, &t, &ratings, opts).unwrap();
        assert_eq!(t1.to_tsv(), t2.to_tsv());
        assert_eq!(t1.to_json(), t2.to_json());
        let models: Vec<&str> = t1.rows.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(models, vec!["a", "b", POOLED_ROW]);
        assert_eq!(t1.rows[2].cases, 6);
        let c1a = t1.cases.iter().find(|c| c.id == "c1" && c.backend_id == "a").unwrap();
        assert!((c1a.usefulness.unwrap() - 5.0 / 6.0).abs() < 1e-12);
        // b predicted nothing useful for c1 but was rated strongly agree.
        assert!(t1.mismatches().any(|c| c.id == "c1" && c.backend_id == "b"));
        assert!(t1.to_tsv().starts_with("#schema\tnlgp-score/1\n"));
    }

    #[test]
    fn join_mismatch_lists_ids() {
        let t = targets();
        let preds = vec![PredictionRow {
            id: "zz",
            backend_id: "a",
            prediction: "x",
        }];
        let ratings = vec![rating("c9", "r", Rating::Agree, None)];
        match score_report(&preds, &t, &ratings, ScoreOptions::default()) {
            Err(MetricError::JoinMismatch(ids)) => {
                assert_eq!(ids, vec!["prediction zz".to_string(), "rating c9".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }
}
