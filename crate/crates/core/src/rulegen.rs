//! Production rules and their generation from ontology graphs.
//!
//! Two rule patterns are produced:
//!
//! * `P1`: for a class with directly attached properties,
//!   `IF <every property> THEN <class>`.
//! * `P2`: for a subclass edge, `IF <subclass> THEN <superclass>`.
//!
//! Generated rules carry membership value 1.0 for both the condition (MFC)
//! and the rule (MFR).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ontology::{concept_key, EmptyKey, Iri, MatchMode, OntologyGraph};
use crate::store::OntologyId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid atom {0:?}: must be non-empty without whitespace")]
pub struct InvalidAtom(pub String);

/// A condition or result term. Never empty, never contains whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(String);

impl Atom {
    pub fn new(token: impl Into<String>) -> Result<Self, InvalidAtom> {
        let token = token.into();
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(InvalidAtom(token));
        }
        Ok(Atom(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Atom {
    type Err = InvalidAtom;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Atom::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("membership value {0} is outside [0, 1]")]
pub struct InvalidMembership(pub f64);

/// A membership-function value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Membership(f64);

impl Membership {
    pub const ONE: Membership = Membership(1.0);

    pub fn new(value: f64) -> Result<Self, InvalidMembership> {
        if (0.0..=1.0).contains(&value) {
            // Normalises -0.0.
            Ok(Membership(value + 0.0))
        } else {
            Err(InvalidMembership(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn min(self, other: Membership) -> Membership {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }
}

impl fmt::Display for Membership {
    /// Shortest round-tripping decimal form, always with a fractional part.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_real(self.0))
    }
}

pub(crate) fn format_real(value: f64) -> String {
    let mut s = format!("{value}");
    if !s.contains('.') {
        s.push_str(".0");
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    /// Class with its directly attached properties.
    P1,
    /// Subclass edge.
    P2,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::P1 => "P1",
            Pattern::P2 => "P2",
        })
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "P1" => Ok(Pattern::P1),
            "P2" => Ok(Pattern::P2),
            other => Err(format!("unknown rule pattern {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("rule condition is empty")]
    EmptyCondition,
    #[error("rule result {0} also appears in its condition")]
    ResultInCondition(Atom),
}

/// Anything that can fire: a condition set, a result, and two membership
/// values.
pub trait Production {
    fn condition(&self) -> &BTreeSet<Atom>;
    fn result(&self) -> &Atom;
    fn mfc(&self) -> Membership;
    fn mfr(&self) -> Membership;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pattern: Pattern,
    condition: BTreeSet<Atom>,
    mfc: Membership,
    result: Atom,
    mfr: Membership,
    source_ontology: Option<OntologyId>,
}

impl Rule {
    pub fn new(
        pattern: Pattern,
        condition: impl IntoIterator<Item = Atom>,
        result: Atom,
        mfc: Membership,
        mfr: Membership,
    ) -> Result<Self, RuleError> {
        let condition: BTreeSet<Atom> = condition.into_iter().collect();
        if condition.is_empty() {
            return Err(RuleError::EmptyCondition);
        }
        if condition.contains(&result) {
            return Err(RuleError::ResultInCondition(result));
        }
        Ok(Rule {
            pattern,
            condition,
            mfc,
            result,
            mfr,
            source_ontology: None,
        })
    }

    /// A crisp rule: both membership values 1.0.
    pub fn crisp(
        pattern: Pattern,
        condition: impl IntoIterator<Item = Atom>,
        result: Atom,
    ) -> Result<Self, RuleError> {
        Rule::new(pattern, condition, result, Membership::ONE, Membership::ONE)
    }

    pub fn with_source(mut self, ontology: Option<OntologyId>) -> Self {
        self.source_ontology = ontology;
        self
    }

    pub fn pattern(&self) -> Pattern {
        self.pattern
    }

    pub fn source_ontology(&self) -> Option<OntologyId> {
        self.source_ontology
    }

    /// `IF a and b THEN c` with the condition atoms in sorted order.
    pub fn key(&self) -> String {
        rule_key(self)
    }
}

impl Production for Rule {
    fn condition(&self) -> &BTreeSet<Atom> {
        &self.condition
    }

    fn result(&self) -> &Atom {
        &self.result
    }

    fn mfc(&self) -> Membership {
        self.mfc
    }

    fn mfr(&self) -> Membership {
        self.mfr
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "IF {} THEN {}",
            condition_text(&self.condition),
            self.result
        )
    }
}

/// Sorted atoms joined by `" and "`.
pub fn condition_text(condition: &BTreeSet<Atom>) -> String {
    condition
        .iter()
        .map(Atom::as_str)
        .collect::<Vec<_>>()
        .join(" and ")
}

/// Canonical identity of a rule; membership values are not part of it.
pub fn rule_key(rule: &Rule) -> String {
    format!(
        "{}|IF {} THEN {}",
        rule.pattern,
        condition_text(&rule.condition),
        rule.result
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("concepts {first} and {second} share the key {key}")]
    KeyCollision { key: Atom, first: Iri, second: Iri },
    #[error(transparent)]
    EmptyKey(#[from] EmptyKey),
    #[error("concept {iri}: {source}")]
    InvalidRule { iri: Iri, source: RuleError },
}

struct Keyer<'g> {
    graph: &'g OntologyGraph,
    mode: MatchMode,
    by_iri: BTreeMap<Iri, Atom>,
    by_key: BTreeMap<Atom, Iri>,
}

impl Keyer<'_> {
    fn key(&mut self, iri: &Iri) -> Result<Atom, GenerateError> {
        if let Some(atom) = self.by_iri.get(iri) {
            return Ok(atom.clone());
        }
        let atom = concept_key(self.graph, iri, self.mode)?;
        if let Some(other) = self.by_key.get(&atom) {
            let (first, second) = if other < iri {
                (other.clone(), iri.clone())
            } else {
                (iri.clone(), other.clone())
            };
            return Err(GenerateError::KeyCollision {
                key: atom,
                first,
                second,
            });
        }
        self.by_key.insert(atom.clone(), iri.clone());
        self.by_iri.insert(iri.clone(), atom.clone());
        Ok(atom)
    }
}

/// Generates the P1 and P2 rules of `graph`, ordered by [`rule_key`].
pub fn generate_rules(graph: &OntologyGraph, mode: MatchMode) -> Result<Vec<Rule>, GenerateError> {
    let mut keyer = Keyer {
        graph,
        mode,
        by_iri: BTreeMap::new(),
        by_key: BTreeMap::new(),
    };
    let mut rules = Vec::new();

    for class in graph.classes() {
        let properties = graph.properties_with_domain(&class);
        if properties.is_empty() {
            continue;
        }
        let result = keyer.key(&class)?;
        let condition = properties
            .iter()
            .map(|p| keyer.key(p))
            .collect::<Result<Vec<_>, _>>()?;
        let rule = Rule::crisp(Pattern::P1, condition, result)
            .map_err(|source| GenerateError::InvalidRule { iri: class, source })?;
        rules.push(rule);
    }

    for (sub, sup) in graph.subclass_edges() {
        let condition = keyer.key(&sub)?;
        let result = keyer.key(&sup)?;
        let rule = Rule::crisp(Pattern::P2, [condition], result)
            .map_err(|source| GenerateError::InvalidRule { iri: sub, source })?;
        rules.push(rule);
    }

    rules.sort_by_cached_key(rule_key);
    rules.dedup_by(|a, b| rule_key(a) == rule_key(b));
    Ok(rules)
}
