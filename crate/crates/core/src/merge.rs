//! Functional merging: ontologies are merged through the rules generated from
//! them rather than through their graphs.
//!
//! [`consolidate`] turns the rule sets of several ontologies into the rule set
//! a single merged ontology would have produced. [`verify_equivalence`] checks
//! that claim against the classical graph merge.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ontology::{merge_all, EmptyKey, MatchMode, OntologyGraph};
use crate::rulegen::{generate_rules, rule_key, Atom, GenerateError, Pattern, Production, Rule};
use crate::store::{MergerRecord, OntologyId, RuleStore, StoreError};

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("fused rule for {0} would contain its own result in the condition")]
    SelfSupporting(Atom),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

impl From<EmptyKey> for MergeError {
    fn from(e: EmptyKey) -> Self {
        MergeError::Generate(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    ConsolidatedOnly,
    BaselineOnly,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::ConsolidatedOnly => "consolidated-only",
            Side::BaselineOnly => "baseline-only",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeGroup {
    pub result: Atom,
    pub input_rules: usize,
    pub output: Rule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeReport {
    pub consolidated: Vec<Rule>,
    pub groups: Vec<MergeGroup>,
    pub equivalent: bool,
    pub mismatches: Vec<(String, Side)>,
}

fn common_source(rules: &[&Rule]) -> Option<OntologyId> {
    let first = rules.first()?.source_ontology()?;
    rules
        .iter()
        .all(|r| r.source_ontology() == Some(first))
        .then_some(first)
}

fn fuse(pattern: Pattern, members: &[&Rule]) -> Result<Rule, MergeError> {
    let condition: BTreeSet<Atom> = members
        .iter()
        .flat_map(|r| r.condition().iter().cloned())
        .collect();
    let mfc = members
        .iter()
        .map(|r| r.mfc())
        .reduce(|a, b| a.min(b))
        .expect("non-empty group");
    let mfr = members
        .iter()
        .map(|r| r.mfr())
        .reduce(|a, b| a.min(b))
        .expect("non-empty group");
    let result = members[0].result().clone();
    if condition.contains(&result) {
        return Err(MergeError::SelfSupporting(result));
    }
    Ok(Rule::new(pattern, condition, result, mfc, mfr)
        .expect("condition is non-empty and excludes the result")
        .with_source(common_source(members)))
}

fn consolidate_groups(rules: &[Rule]) -> Result<Vec<MergeGroup>, MergeError> {
    // P1 rules group by result atom; P2 rules by their full key.
    let mut groups: BTreeMap<(Pattern, String), Vec<&Rule>> = BTreeMap::new();
    for rule in rules {
        let key = match rule.pattern() {
            Pattern::P1 => rule.result().as_str().to_owned(),
            Pattern::P2 => rule_key(rule),
        };
        groups.entry((rule.pattern(), key)).or_default().push(rule);
    }
    let mut out = groups
        .into_iter()
        .map(|((pattern, _), members)| {
            Ok(MergeGroup {
                result: members[0].result().clone(),
                input_rules: members.len(),
                output: fuse(pattern, &members)?,
            })
        })
        .collect::<Result<Vec<_>, MergeError>>()?;
    out.sort_by_cached_key(|g| rule_key(&g.output));
    Ok(out)
}

/// Fuses P1 rules sharing a result into one rule over the union of their
/// conditions and deduplicates P2 rules. Membership values combine by min.
/// The output is sorted by rule key.
pub fn consolidate(rules: &[Rule]) -> Result<Vec<Rule>, MergeError> {
    Ok(consolidate_groups(rules)?
        .into_iter()
        .map(|g| g.output)
        .collect())
}

/// Consolidates the stored rules of `ontologies` and registers the result as
/// a new merger.
pub fn functional_merge<S: RuleStore + ?Sized>(
    store: &mut S,
    ontologies: &[OntologyId],
    keywords: &[String],
    table_name: &str,
) -> Result<MergerRecord, MergeError> {
    let distinct: BTreeSet<_> = ontologies.iter().collect();
    if ontologies.len() < 2 || distinct.len() != ontologies.len() {
        return Err(MergeError::Validation(
            "a merger needs at least two distinct ontologies".into(),
        ));
    }
    let mut rules = Vec::new();
    for id in ontologies {
        if store.ontology(*id).is_none() {
            return Err(StoreError::UnknownOntology(*id).into());
        }
        rules.extend(store.rules_of(*id).into_iter().map(|s| s.rule));
    }
    let consolidated = consolidate(&rules)?;
    Ok(store.create_merger(table_name, keywords, ontologies, &consolidated)?)
}

/// Compares generate-then-consolidate with merge-then-generate for two graphs.
pub fn verify_equivalence(
    g1: &OntologyGraph,
    g2: &OntologyGraph,
    mode: MatchMode,
) -> Result<MergeReport, MergeError> {
    verify_equivalence_all(&[g1, g2], mode)
}

pub fn verify_equivalence_all(
    graphs: &[&OntologyGraph],
    mode: MatchMode,
) -> Result<MergeReport, MergeError> {
    let mut generated = Vec::new();
    for g in graphs {
        generated.extend(generate_rules(g, mode)?);
    }
    let groups = consolidate_groups(&generated)?;
    let consolidated: Vec<Rule> = groups.iter().map(|g| g.output.clone()).collect();

    let baseline = generate_rules(&merge_all(graphs, mode)?, mode)?;

    let ours: BTreeSet<String> = consolidated.iter().map(rule_key).collect();
    let theirs: BTreeSet<String> = baseline.iter().map(rule_key).collect();
    let mut mismatches: Vec<(String, Side)> = ours
        .difference(&theirs)
        .map(|k| (k.clone(), Side::ConsolidatedOnly))
        .chain(
            theirs
                .difference(&ours)
                .map(|k| (k.clone(), Side::BaselineOnly)),
        )
        .collect();
    mismatches.sort();

    Ok(MergeReport {
        consolidated,
        groups,
        equivalent: mismatches.is_empty(),
        mismatches,
    })
}
