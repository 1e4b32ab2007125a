//! Corpus characterization: token lengths, novel-token percentage, and the
//! query/summary length correlation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnnotatedTriplet;
use crate::report::render_table;
use crate::tokenize::{mean, pairwise_sum, token_types, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("text has no tokens")]
    EmptyText,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("a series is constant; correlation is undefined")]
    ZeroVariance,
    #[error("cannot summarize an empty corpus")]
    EmptyCorpus,
    #[error("triplet {id}: {field} has no tokens")]
    EmptyField { id: String, field: &'static str },
}

/// How the novel-token numerator is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NtpMode {
    /// Every token occurrence in the first string counts; membership in the
    /// second string is by type.
    #[default]
    Occurrence,
    /// Distinct types in the first string over distinct types.
    Types,
}

/// Percentage of tokens in `a` whose type does not appear in `b`.
pub fn ntp(a: &str, b: &str) -> Result<f64, StatsError> {
    ntp_with(a, b, NtpMode::Occurrence)
}

pub fn ntp_with(a: &str, b: &str, mode: NtpMode) -> Result<f64, StatsError> {
    let reference = token_types(b);
    match mode {
        NtpMode::Occurrence => {
            let tokens = tokenize(a);
            if tokens.is_empty() {
                return Err(StatsError::EmptyText);
            }
            let novel = tokens.iter().filter(|t| !reference.contains(*t)).count();
            Ok(100.0 * novel as f64 / tokens.len() as f64)
        }
        NtpMode::Types => {
            let types = token_types(a);
            if types.is_empty() {
                return Err(StatsError::EmptyText);
            }
            let novel = types.iter().filter(|t| !reference.contains(*t)).count();
            Ok(100.0 * novel as f64 / types.len() as f64)
        }
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::TooFewPoints(xs.len()));
    }
    let mx = mean(xs).unwrap_or_default();
    let my = mean(ys).unwrap_or_default();
    let dx: Vec<f64> = xs.iter().map(|x| x - mx).collect();
    let dy: Vec<f64> = ys.iter().map(|y| y - my).collect();
    let sxy = pairwise_sum(&dx.iter().zip(&dy).map(|(a, b)| a * b).collect::<Vec<_>>());
    let sxx = pairwise_sum(&dx.iter().map(|a| a * a).collect::<Vec<_>>());
    let syy = pairwise_sum(&dy.iter().map(|b| b * b).collect::<Vec<_>>());
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub mean_len_doc: f64,
    pub mean_len_query: f64,
    pub mean_len_sum: f64,
    pub ntp_sum_doc: f64,
    pub ntp_query_doc: f64,
    pub ntp_doc_sum: f64,
    pub ntp_doc_query: f64,
    pub ntp_query_sum: f64,
    pub ntp_sum_query: f64,
    /// `None` when fewer than two triplets or a length series is constant.
    pub pearson_len_query_vs_sum: Option<f64>,
}

impl CorpusStats {
    /// Column headings and values in report order.
    pub fn columns(&self) -> Vec<(&'static str, String)> {
        vec![
            ("count", self.count.to_string()),
            ("Len(doc)", format!("{:.1}", self.mean_len_doc)),
            ("Len(query)", format!("{:.1}", self.mean_len_query)),
            ("Len(sum)", format!("{:.1}", self.mean_len_sum)),
            ("NTP(sum, doc)", format!("{:.2}", self.ntp_sum_doc)),
            ("NTP(query, doc)", format!("{:.2}", self.ntp_query_doc)),
            ("NTP(doc, sum)", format!("{:.2}", self.ntp_doc_sum)),
            ("NTP(doc, query)", format!("{:.2}", self.ntp_doc_query)),
            ("NTP(query, sum)", format!("{:.2}", self.ntp_query_sum)),
            ("NTP(sum, query)", format!("{:.2}", self.ntp_sum_query)),
            (
                "Pearson(len query, len sum)",
                self.pearson_len_query_vs_sum
                    .map_or_else(|| "n/a".to_string(), |r| format!("{r:.3}")),
            ),
        ]
    }

    pub fn render(&self, label: &str) -> String {
        let cols = self.columns();
        let mut header = vec!["corpus".to_string()];
        header.extend(cols.iter().map(|(h, _)| h.to_string()));
        let mut row = vec![label.to_string()];
        row.extend(cols.into_iter().map(|(_, v)| v));
        render_table(&[header, row])
    }
}

struct TripletMeasures {
    lens: [f64; 3],
    ntps: [f64; 6],
}

fn measure(t: &AnnotatedTriplet, mode: NtpMode) -> Result<TripletMeasures, StatsError> {
    let query = t.queries.join(" ");
    let fields = [
        ("document", t.document.as_str()),
        ("queries", &query),
        ("summary", &t.summary),
    ];
    let mut lens = [0.0; 3];
    for (slot, (field, text)) in lens.iter_mut().zip(fields) {
        let n = tokenize(text).len();
        if n == 0 {
            return Err(StatsError::EmptyField {
                id: t.id.clone(),
                field,
            });
        }
        *slot = n as f64;
    }
    let (doc, sum) = (t.document.as_str(), t.summary.as_str());
    let q = query.as_str();
    Ok(TripletMeasures {
        lens,
        ntps: [
            ntp_with(sum, doc, mode)?,
            ntp_with(q, doc, mode)?,
            ntp_with(doc, sum, mode)?,
            ntp_with(doc, q, mode)?,
            ntp_with(q, sum, mode)?,
            ntp_with(sum, q, mode)?,
        ],
    })
}

/// Means over triplets of lengths and the six NTP directions.
pub fn corpus_stats(triplets: &[AnnotatedTriplet]) -> Result<CorpusStats, StatsError> {
    corpus_stats_with(triplets, NtpMode::Occurrence)
}

pub fn corpus_stats_with(
    triplets: &[AnnotatedTriplet],
    mode: NtpMode,
) -> Result<CorpusStats, StatsError> {
    use rayon::prelude::*;

    if triplets.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let measures: Vec<TripletMeasures> = triplets
        .par_iter()
        .map(|t| measure(t, mode))
        .collect::<Result<_, _>>()?;

    let column =
        |f: &dyn Fn(&TripletMeasures) -> f64| -> Vec<f64> { measures.iter().map(f).collect() };
    let m = |v: Vec<f64>| mean(&v).unwrap_or_default();

    let qlens = column(&|x| x.lens[1]);
    let slens = column(&|x| x.lens[2]);
    let pearson_len_query_vs_sum = pearson(&qlens, &slens).ok();

    Ok(CorpusStats {
        count: triplets.len(),
        mean_len_doc: m(column(&|x| x.lens[0])),
        mean_len_query: m(qlens),
        mean_len_sum: m(slens),
        ntp_sum_doc: m(column(&|x| x.ntps[0])),
        ntp_query_doc: m(column(&|x| x.ntps[1])),
        ntp_doc_sum: m(column(&|x| x.ntps[2])),
        ntp_doc_query: m(column(&|x| x.ntps[3])),
        ntp_query_sum: m(column(&|x| x.ntps[4])),
        ntp_sum_query: m(column(&|x| x.ntps[5])),
        pearson_len_query_vs_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QueryMode;
    use crate::taxonomy::QueryType;
    use proptest::prelude::*;

    #[test]
    fn self_ntp_is_zero_and_disjoint_is_full() {
        assert_eq!(ntp("the cat sat", "the cat sat").unwrap(), 0.0);
        assert_eq!(ntp("alpha beta", "gamma delta").unwrap(), 100.0);
    }

    #[test]
    fn one_novel_token_of_three() {
        // tokens(a) = the, red, fox; types(b) = {the, fox, ran}; novel = red
        let v = ntp("the red fox", "the fox ran").unwrap();
        assert!((v - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn occurrence_and_type_modes_differ_on_repeats() {
        // occurrences: red red fox -> 2 of 3 novel; types: {red, fox} -> 1 of 2
        let a = "red red fox";
        let b = "fox";
        assert!((ntp_with(a, b, NtpMode::Occurrence).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(ntp_with(a, b, NtpMode::Types).unwrap(), 50.0);
    }

    #[test]
    fn ntp_is_asymmetric() {
        assert_eq!(ntp("a b", "a b c d").unwrap(), 0.0);
        assert_eq!(ntp("a b c d", "a b").unwrap(), 50.0);
    }

    #[test]
    fn ntp_on_empty_is_error() {
        assert_eq!(ntp("  ...", "x"), Err(StatsError::EmptyText));
        assert_eq!(ntp("x", "").unwrap(), 100.0);
    }

    #[test]
    fn pearson_fixed_points() {
        let v = [1.0, 4.0, 2.0, 8.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((pearson(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&v, &neg).unwrap() + 1.0).abs() < 1e-12);
        // dx = -1,0,1; dy = -7/3,-1/3,8/3; sxy = 5, sxx = 2, syy = 114/9
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap();
        assert!((r - 15.0 / 228f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1.0], &[1.0]), Err(StatsError::TooFewPoints(1)));
        assert_eq!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(StatsError::LengthMismatch(2, 1))
        );
        assert_eq!(
            pearson(&[1.0, 1.0], &[2.0, 2.0]),
            Err(StatsError::ZeroVariance)
        );
        assert_eq!(
            pearson(&[1.0, 2.0], &[2.0, 2.0]),
            Err(StatsError::ZeroVariance)
        );
    }

    fn triplet(doc: &str, queries: &[&str], sum: &str) -> AnnotatedTriplet {
        AnnotatedTriplet {
            id: "t".into(),
            document: doc.into(),
            summary: sum.into(),
            queries: queries.iter().map(|s| s.to_string()).collect(),
            mode: QueryMode::Wh,
            query_types: vec![QueryType::Other; queries.len()],
        }
    }

    #[test]
    fn degenerate_single_triplet() {
        let s = corpus_stats(&[triplet("a b c", &["a b c"], "a b c")]).unwrap();
        assert_eq!(s.count, 1);
        assert_eq!(
            (s.mean_len_doc, s.mean_len_query, s.mean_len_sum),
            (3.0, 3.0, 3.0)
        );
        for v in [
            s.ntp_sum_doc,
            s.ntp_query_doc,
            s.ntp_doc_sum,
            s.ntp_doc_query,
            s.ntp_query_sum,
            s.ntp_sum_query,
        ] {
            assert_eq!(v, 0.0);
        }
        assert_eq!(s.pearson_len_query_vs_sum, None);
    }

    #[test]
    fn empty_corpus_is_error() {
        assert_eq!(corpus_stats(&[]), Err(StatsError::EmptyCorpus));
    }

    #[test]
    fn queries_are_joined_before_measuring() {
        let s = corpus_stats(&[triplet(
            "who went home",
            &["Who?", "Went where?"],
            "He went home.",
        )])
        .unwrap();
        assert_eq!(s.mean_len_query, 3.0);
        // query tokens who, went, where; "where" is not in the document
        assert!((s.ntp_query_doc - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn render_lists_columns_in_order() {
        let s = corpus_stats(&[triplet("a b c", &["a?"], "a b.")]).unwrap();
        let out = s.render("toy");
        let a = out.find("Len(doc)").unwrap();
        let b = out.find("NTP(sum, doc)").unwrap();
        let c = out.find("NTP(sum, query)").unwrap();
        assert!(a < b && b < c);
    }

    proptest! {
        #[test]
        fn adding_a_shared_type_never_raises_ntp(
            a in "[a-e]( [a-e]){0,8}",
            b in "[a-e]( [a-e]){0,8}",
            pick in 0usize..9,
        ) {
            let toks = tokenize(&a);
            let extra = &toks[pick % toks.len()];
            let before = ntp(&a, &b).unwrap();
            let after = ntp(&a, &format!("{b} {extra}")).unwrap();
            prop_assert!(after <= before);
            prop_assert!((0.0..=100.0).contains(&before));
        }

        #[test]
        fn pearson_is_bounded(xs in prop::collection::vec(-1e3f64..1e3, 2..20)) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.5 + (i as f64).sin()).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
