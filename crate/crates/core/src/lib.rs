//! Functional merging of ontologies.
//!
//! Ontologies are parsed from a Turtle subset ([`ontology`]), turned into
//! production rules ([`rulegen`]), stored in a file-backed knowledge base
//! ([`store`]), merged by consolidating their rules ([`merge`]) and queried
//! with fuzzy forward chaining ([`infer`]). The [`cli`] module ties the
//! pipeline together behind the `rulemerge` binary.

pub mod cli;
pub mod infer;
pub mod merge;
pub mod ontology;
pub mod rulegen;
pub mod store;

pub use infer::{forward_chain, match_mergers, Conclusion, FactSet};
pub use merge::{consolidate, functional_merge, verify_equivalence, MergeError, MergeReport};
pub use ontology::{
    concept_key, merge_graphs, parse_turtle, Iri, Literal, MatchMode, OntologyGraph, Term, Triple,
};
pub use rulegen::{generate_rules, rule_key, Atom, Membership, Pattern, Production, Rule};
pub use store::{
    MergerId, MergerRecord, MergerRow, MergerSelector, OntologyId, OntologyRecord, RuleId,
    RuleStore, Store, StoreError, StoredRule,
};
