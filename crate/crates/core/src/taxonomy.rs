//! Query typing by lead word, and the wh / yes-no breakdown.
//!
//! There are 14 buckets: five auxiliary-verb groups that open yes/no
//! questions, eight wh-words, and `other`. Counts elsewhere that mention
//! "13 query types" leave out `other`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryType {
    DoDoesDid,
    IsAreWasWere,
    CanCould,
    WillWould,
    HaveHasHad,
    What,
    When,
    Where,
    WhoWhom,
    Which,
    Whose,
    Why,
    How,
    Other,
}

impl QueryType {
    /// All buckets in report column order.
    pub const ALL: [QueryType; 14] = [
        QueryType::DoDoesDid,
        QueryType::IsAreWasWere,
        QueryType::CanCould,
        QueryType::WillWould,
        QueryType::HaveHasHad,
        QueryType::What,
        QueryType::When,
        QueryType::Where,
        QueryType::WhoWhom,
        QueryType::Which,
        QueryType::Whose,
        QueryType::Why,
        QueryType::How,
        QueryType::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_yes_no(self) -> bool {
        self.index() < 5
    }

    pub fn is_wh(self) -> bool {
        (5..13).contains(&self.index())
    }

    /// Machine-readable name, as serialized.
    pub fn name(self) -> &'static str {
        match self {
            QueryType::DoDoesDid => "do_does_did",
            QueryType::IsAreWasWere => "is_are_was_were",
            QueryType::CanCould => "can_could",
            QueryType::WillWould => "will_would",
            QueryType::HaveHasHad => "have_has_had",
            QueryType::What => "what",
            QueryType::When => "when",
            QueryType::Where => "where",
            QueryType::WhoWhom => "who_whom",
            QueryType::Which => "which",
            QueryType::Whose => "whose",
            QueryType::Why => "why",
            QueryType::How => "how",
            QueryType::Other => "other",
        }
    }

    /// Column heading used in pretty tables.
    pub fn heading(self) -> &'static str {
        match self {
            QueryType::DoDoesDid => "do/does/did",
            QueryType::IsAreWasWere => "is/are/was/were",
            QueryType::CanCould => "can/could",
            QueryType::WillWould => "will/would",
            QueryType::HaveHasHad => "have/has/had",
            QueryType::What => "what",
            QueryType::When => "when",
            QueryType::Where => "where",
            QueryType::WhoWhom => "who/whom",
            QueryType::Which => "which",
            QueryType::Whose => "whose",
            QueryType::Why => "why",
            QueryType::How => "how",
            QueryType::Other => "other",
        }
    }

    fn from_head(head: &str) -> QueryType {
        match head {
            "do" | "does" | "did" => QueryType::DoDoesDid,
            "is" | "are" | "was" | "were" => QueryType::IsAreWasWere,
            "can" | "could" => QueryType::CanCould,
            "will" | "would" => QueryType::WillWould,
            "have" | "has" | "had" => QueryType::HaveHasHad,
            "what" => QueryType::What,
            "when" => QueryType::When,
            "where" => QueryType::Where,
            "who" | "whom" => QueryType::WhoWhom,
            "which" => QueryType::Which,
            "whose" => QueryType::Whose,
            "why" => QueryType::Why,
            "how" => QueryType::How,
            _ => QueryType::Other,
        }
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reduces a contracted lead token to the word it starts with:
/// `what's` -> `what`, `isn't` -> `is`, `won't` -> `will`.
fn contraction_head(token: &str) -> &str {
    let Some(pos) = token.find(['\'', '\u{2019}']) else {
        return token;
    };
    let (stem, rest) = token.split_at(pos);
    let negated =
        rest[rest.chars().next().map_or(0, char::len_utf8)..] == *"t" && stem.ends_with('n');
    if !negated {
        return stem;
    }
    match stem {
        "can" => "can",
        "won" => "will",
        "ain" => "is",
        _ => &stem[..stem.len() - 1],
    }
}

/// Classifies a query by its first token.
pub fn classify_query(query: &str) -> QueryType {
    query
        .split_whitespace()
        .find_map(tokenize::normalize_word)
        .map_or(QueryType::Other, |first| {
            QueryType::from_head(contraction_head(&first))
        })
}

/// Percentages per bucket plus the two aggregate columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTypeDistribution {
    pub percentages: [f64; 14],
    pub yes_no_aggregate: f64,
    pub wh_aggregate: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("cannot aggregate an empty list of query types")]
    Empty,
}

impl QueryTypeDistribution {
    /// Builds a distribution from already-computed bucket percentages,
    /// deriving the aggregates.
    pub fn from_percentages(percentages: [f64; 14], sample_count: usize) -> Self {
        let yes_no_aggregate = percentages[..5].iter().sum();
        let wh_aggregate = percentages[5..13].iter().sum();
        Self {
            percentages,
            yes_no_aggregate,
            wh_aggregate,
            sample_count,
        }
    }

    pub fn get(&self, t: QueryType) -> f64 {
        self.percentages[t.index()]
    }

    pub fn other(&self) -> f64 {
        self.get(QueryType::Other)
    }
}

/// Bucket counts converted to percentages of the total.
pub fn aggregate_distribution(types: &[QueryType]) -> Result<QueryTypeDistribution, TaxonomyError> {
    if types.is_empty() {
        return Err(TaxonomyError::Empty);
    }
    let mut counts = [0usize; 14];
    for t in types {
        counts[t.index()] += 1;
    }
    let total = types.len() as f64;
    let percentages = counts.map(|c| 100.0 * c as f64 / total);
    Ok(QueryTypeDistribution::from_percentages(
        percentages,
        types.len(),
    ))
}

/// One row of a breakdown report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub corpus: String,
    pub mode: String,
    pub sample_count: usize,
    #[serde(flatten)]
    pub buckets: std::collections::BTreeMap<String, f64>,
    pub yes_no_queries: f64,
    pub wh_queries: f64,
}

impl DistributionRow {
    pub fn new(corpus: &str, mode: &str, dist: &QueryTypeDistribution) -> Self {
        Self {
            corpus: corpus.to_string(),
            mode: mode.to_string(),
            sample_count: dist.sample_count,
            buckets: QueryType::ALL
                .iter()
                .map(|t| (t.name().to_string(), dist.get(*t)))
                .collect(),
            yes_no_queries: dist.yes_no_aggregate,
            wh_queries: dist.wh_aggregate,
        }
    }
}

/// Aligned text table with one row per (corpus, mode).
pub fn render_distribution_table(rows: &[(String, String, QueryTypeDistribution)]) -> String {
    let mut headings: Vec<&str> = vec!["mode", "corpus"];
    headings.extend(QueryType::ALL.iter().map(|t| t.heading()));
    headings.extend(["yes/no", "wh-"]);
    let mut table: Vec<Vec<String>> = vec![headings.iter().map(|s| s.to_string()).collect()];
    for (corpus, mode, d) in rows {
        let mut r = vec![mode.clone(), corpus.clone()];
        r.extend(d.percentages.iter().map(|p| format!("{p:.2}")));
        r.push(format!("{:.2}", d.yes_no_aggregate));
        r.push(format!("{:.2}", d.wh_aggregate));
        table.push(r);
    }
    crate::report::render_table(&table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lead_word_examples() {
        assert_eq!(classify_query("What is her book about?"), QueryType::What);
        assert_eq!(
            classify_query("Is he still alive?"),
            QueryType::IsAreWasWere
        );
        assert_eq!(classify_query("Summarize the findings."), QueryType::Other);
        assert_eq!(classify_query(""), QueryType::Other);
        assert_eq!(classify_query("  ?? "), QueryType::Other);
    }

    #[test]
    fn every_keyword_lands_in_its_bucket() {
        let cases = [
            ("Do", QueryType::DoDoesDid),
            ("does", QueryType::DoDoesDid),
            ("DID", QueryType::DoDoesDid),
            ("are", QueryType::IsAreWasWere),
            ("was", QueryType::IsAreWasWere),
            ("were", QueryType::IsAreWasWere),
            ("could", QueryType::CanCould),
            ("can", QueryType::CanCould),
            ("will", QueryType::WillWould),
            ("Would", QueryType::WillWould),
            ("has", QueryType::HaveHasHad),
            ("had", QueryType::HaveHasHad),
            ("have", QueryType::HaveHasHad),
            ("when", QueryType::When),
            ("where", QueryType::Where),
            ("who", QueryType::WhoWhom),
            ("whom", QueryType::WhoWhom),
            ("which", QueryType::Which),
            ("whose", QueryType::Whose),
            ("why", QueryType::Why),
            ("how", QueryType::How),
            ("name", QueryType::Other),
            ("describe", QueryType::Other),
            ("should", QueryType::Other),
        ];
        for (w, t) in cases {
            assert_eq!(classify_query(&format!("{w} x?")), t, "{w}");
        }
    }

    #[test]
    fn contractions_use_their_head() {
        assert_eq!(classify_query("What's the plan?"), QueryType::What);
        assert_eq!(classify_query("Who\u{2019}s coming?"), QueryType::WhoWhom);
        assert_eq!(classify_query("Isn't it late?"), QueryType::IsAreWasWere);
        assert_eq!(classify_query("Didn't she call?"), QueryType::DoDoesDid);
        assert_eq!(classify_query("Can't they?"), QueryType::CanCould);
        assert_eq!(classify_query("Won't he?"), QueryType::WillWould);
        assert_eq!(classify_query("Hasn't it?"), QueryType::HaveHasHad);
        assert_eq!(classify_query("How'd it go?"), QueryType::How);
    }

    #[test]
    fn leading_quote_is_ignored() {
        assert_eq!(classify_query("\"Why not?\""), QueryType::Why);
    }

    #[test]
    fn degenerate_and_split_distributions() {
        let d = aggregate_distribution(&[QueryType::What; 100]).unwrap();
        assert_eq!(d.get(QueryType::What), 100.0);
        assert_eq!(d.wh_aggregate, 100.0);
        assert_eq!(d.sample_count, 100);

        let d = aggregate_distribution(&[QueryType::What, QueryType::DoDoesDid]).unwrap();
        assert_eq!(d.get(QueryType::What), 50.0);
        assert_eq!(d.get(QueryType::DoDoesDid), 50.0);
        assert_eq!(d.yes_no_aggregate, 50.0);
        assert_eq!(d.wh_aggregate, 50.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(aggregate_distribution(&[]), Err(TaxonomyError::Empty));
    }

    #[test]
    fn serialized_names_match_name() {
        for t in QueryType::ALL {
            assert_eq!(
                serde_json::to_string(&t).unwrap(),
                format!("\"{}\"", t.name())
            );
        }
    }

    #[test]
    fn table_has_all_columns() {
        let d = aggregate_distribution(&[QueryType::How]).unwrap();
        let s = render_distribution_table(&[("toy".into(), "wh".into(), d)]);
        for t in QueryType::ALL {
            assert!(s.contains(t.heading()));
        }
        assert!(s.contains("100.00"));
    }

    fn any_type() -> impl Strategy<Value = QueryType> {
        (0usize..14).prop_map(|i| QueryType::ALL[i])
    }

    proptest! {
        #[test]
        fn trailing_words_do_not_change_bucket(
            head in "(what|Who|is|did|can|will|have|how|name|x)[a-z']{0,3}",
            tail in "( [a-zA-Z?,.]{1,8}){0,6}",
        ) {
            prop_assert_eq!(classify_query(&head), classify_query(&format!("{head}{tail}")));
        }

        #[test]
        fn aggregation_matches_direct_count(types in prop::collection::vec(any_type(), 1..200)) {
            let d = aggregate_distribution(&types).unwrap();
            let total: f64 = d.percentages.iter().sum();
            prop_assert!((total - 100.0).abs() < 1e-6);
            for t in QueryType::ALL {
                let n = types.iter().filter(|x| **x == t).count();
                prop_assert!((d.get(t) - 100.0 * n as f64 / types.len() as f64).abs() < 1e-12);
            }
            let yn: f64 = QueryType::ALL[..5].iter().map(|t| d.get(*t)).sum();
            prop_assert!((d.yes_no_aggregate - yn).abs() < 1e-9);
            prop_assert!((d.yes_no_aggregate + d.wh_aggregate + d.other() - 100.0).abs() < 1e-6);
        }
    }
}
