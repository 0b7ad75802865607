use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{AnnotationRecord, BenchError};

pub const ANNOTATORS_PER_CASE: usize = 3;
/// Largest allowed disagreement between two selected target spans, in lines.
pub const MAX_SPAN_DIFFERENCE: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acceptance {
    pub case_id: String,
    pub accepted: bool,
    pub relevant_votes: usize,
    /// Consensus target span (1-based, inclusive) of an accepted case.
    pub span: Option<(usize, usize)>,
    /// The agreeing annotator pair behind the consensus.
    pub pair: Option<(String, String)>,
}

/// Componentwise distance between spans: the larger of the start and end
/// offsets.
pub fn span_difference(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

/// Decide every case from its three annotations.
///
/// A case is accepted when at least two annotators judged it relevant and
/// some pair of them selected spans differing by at most two lines. Pairs
/// are tried in annotator-id order; the first agreeing pair gives the
/// consensus span: the shared span when equal, else the span of its first
/// annotator. Output is ordered by case id.
pub fn curation_accept(annotations: &[AnnotationRecord]) -> Result<Vec<Acceptance>, BenchError> {
    let mut by_case: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for a in annotations {
        by_case.entry(&a.case_id).or_default().push(a);
    }
    let mut out = Vec::with_capacity(by_case.len());
    for (case_id, mut anns) in by_case {
        if anns.len() != ANNOTATORS_PER_CASE {
            return Err(BenchError::WrongAnnotatorCount {
                case_id: case_id.to_string(),
                expected: ANNOTATORS_PER_CASE,
                got: anns.len(),
            });
        }
        anns.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
        let mut relevant: Vec<(&str, (usize, usize))> = Vec::new();
        for a in &anns {
            if !a.relevant {
                continue;
            }
            match a.target_line_span {
                Some((f, l)) if f >= 1 && f <= l => relevant.push((&a.annotator_id, (f, l))),
                _ => {
                    return Err(BenchError::InvalidSpan {
                        case_id: case_id.to_string(),
                        annotator_id: a.annotator_id.clone(),
                    })
                }
            }
        }
        let mut decision = Acceptance {
            case_id: case_id.to_string(),
            accepted: false,
            relevant_votes: relevant.len(),
            span: None,
            pair: None,
        };
        'pairs: for (i, (a_id, a_span)) in relevant.iter().enumerate() {
            for (b_id, b_span) in &relevant[i + 1..] {
                if span_difference(*a_span, *b_span) <= MAX_SPAN_DIFFERENCE {
                    decision.accepted = true;
                    decision.span = Some(*a_span);
                    decision.pair = Some((a_id.to_string(), b_id.to_string()));
                    break 'pairs;
                }
            }
        }
        out.push(decision);
    }
    Ok(out)
}

/// Fleiss' kappa for binary judgments (`cases x raters`). When every
/// judgment falls in one category the chance agreement is 1 and kappa is
/// taken to be 1.
pub fn fleiss_kappa(matrix: &[Vec<bool>]) -> Result<f64, BenchError> {
    let raters = matrix.first().map_or(0, Vec::len);
    if matrix.is_empty() || raters < 2 || matrix.iter().any(|r| r.len() != raters) {
        return Err(BenchError::BadMatrix);
    }
    let n = raters as f64;
    let cases = matrix.len() as f64;
    let mut yes_total = 0.0;
    let mut agreement = 0.0;
    for row in matrix {
        let yes = row.iter().filter(|v| **v).count() as f64;
        let no = n - yes;
        yes_total += yes;
        agreement += (yes * yes + no * no - n) / (n * (n - 1.0));
    }
    let p_bar = agreement / cases;
    let p_yes = yes_total / (cases * n);
    let p_e = p_yes * p_yes + (1.0 - p_yes) * (1.0 - p_yes);
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(case: &str, who: &str, relevant: bool, span: Option<(usize, usize)>) -> AnnotationRecord {
        AnnotationRecord {
            case_id: case.into(),
            annotator_id: who.into(),
            relevant,
            revised_intent: String::new(),
            target_line_span: span,
        }
    }

    fn decide(v: [(bool, Option<(usize, usize)>); 3]) -> Acceptance {
        let anns: Vec<_> = v.iter().zip(["a", "b", "c"]).map(|((r, s), w)| ann("x", w, *r, *s)).collect();
        curation_accept(&anns).unwrap().remove(0)
    }

    #[test]
    fn acceptance_examples() {
        let d = decide([(true, Some((1, 3))), (true, Some((1, 3))), (false, None)]);
        assert!(d.accepted);
        assert_eq!(d.span, Some((1, 3)));
        assert!(!decide([(true, Some((1, 3))), (false, None), (false, None)]).accepted);
        assert!(!decide([(true, Some((1, 3))), (true, Some((1, 6))), (true, Some((9, 12)))]).accepted);
        let d = decide([(true, Some((2, 5))), (true, Some((9, 12))), (true, Some((1, 4)))]);
        assert_eq!((d.accepted, d.span), (true, Some((2, 5))));
        assert_eq!(d.pair, Some(("a".into(), "c".into())));
    }

    #[test]
    fn input_errors() {
        let two = vec![ann("x", "a", true, Some((1, 1))), ann("x", "b", true, Some((1, 1)))];
        assert!(matches!(curation_accept(&two), Err(BenchError::WrongAnnotatorCount { got: 2, .. })));
        let bad = vec![
            ann("x", "a", true, None),
            ann("x", "b", true, Some((1, 1))),
            ann("x", "c", false, None),
        ];
        assert!(matches!(curation_accept(&bad), Err(BenchError::InvalidSpan { .. })));
    }

    #[test]
    fn kappa_values() {
        let agree = vec![vec![true; 3], vec![false; 3], vec![true; 3]];
        assert_eq!(fleiss_kappa(&agree).unwrap(), 1.0);
        assert_eq!(fleiss_kappa(&[vec![true; 3], vec![true; 3]]).unwrap(), 1.0);
        // 10 cases by hand: 4 unanimous yes, 2 unanimous no, 4 split 2-1.
        // P_i = 1 for unanimous, 1/3 for 2-1 splits: P-bar = (6 + 4/3) / 10 = 11/15.
        // Yes judgments: 4*3 + 2 + 2 + 1 + 1 = 18 of 30 -> p = 0.6, Pe = 0.36 + 0.16 = 0.52.
        let mut m = vec![vec![true; 3]; 4];
        m.extend(vec![vec![false; 3]; 2]);
        m.push(vec![true, true, false]);
        m.push(vec![true, false, true]);
        m.push(vec![false, false, true]);
        m.push(vec![true, false, false]);
        let expected = (11.0 / 15.0 - 0.52) / (1.0 - 0.52);
        assert!((fleiss_kappa(&m).unwrap() - expected).abs() < 1e-12);
        assert!(fleiss_kappa(&[]).is_err());
        assert!(fleiss_kappa(&[vec![true, false], vec![true]]).is_err());
    }
}
