//! Fuzzy forward chaining over a merger's rulebase.
//!
//! A rule fires when every condition atom has a positive degree. Its
//! contribution to the result is `min(mfc, mfr, degrees of the condition)`,
//! and an atom's degree is the max of its initial degree and every
//! contribution. Chaining runs until no degree changes.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::rulegen::{Atom, InvalidAtom, Membership, Production};
use crate::store::{MergerRecord, RuleId, RuleStore};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactError {
    #[error(transparent)]
    Atom(#[from] InvalidAtom),
    #[error("degree {0:?} of fact {1} is not a number in [0, 1]")]
    Degree(String, String),
}

/// Atoms known to hold, each with a degree in `(0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactSet {
    degrees: BTreeMap<Atom, f64>,
}

impl FactSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the degree of `atom`; a degree of 0 removes it.
    pub fn set(&mut self, atom: Atom, degree: Membership) {
        if degree.value() > 0.0 {
            self.degrees.insert(atom, degree.value());
        } else {
            self.degrees.remove(&atom);
        }
    }

    pub fn degree(&self, atom: &Atom) -> f64 {
        self.degrees.get(atom).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Atom, f64)> {
        self.degrees.iter().map(|(a, d)| (a, *d))
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    /// Parses `atom` or `atom:degree` items; bare atoms get degree 1.0.
    /// Only a suffix after the last `:` that parses as a number is read as
    /// a degree, so IRI atoms pass through untouched.
    pub fn parse<'a>(items: impl IntoIterator<Item = &'a str>) -> Result<Self, FactError> {
        let mut facts = FactSet::new();
        for item in items {
            let item = item.trim();
            let (atom, degree) = match item.rsplit_once(':') {
                Some((atom, degree)) if looks_numeric(degree) => {
                    let value = degree
                        .parse::<f64>()
                        .ok()
                        .and_then(|v| Membership::new(v).ok())
                        .ok_or_else(|| FactError::Degree(degree.into(), atom.into()))?;
                    (atom, value)
                }
                _ => (item, Membership::ONE),
            };
            let atom = Atom::new(atom)?;
            let current = facts.degree(&atom);
            if degree.value() > current {
                facts.set(atom, degree);
            }
        }
        Ok(facts)
    }
}

fn looks_numeric(text: &str) -> bool {
    !text.is_empty()
        && text
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conclusion {
    pub atom: Atom,
    pub degree: f64,
    /// Rules whose contribution equals the final degree, by id.
    pub supporting_rules: Vec<RuleId>,
}

fn contribution<P: Production>(rule: &P, degrees: &BTreeMap<Atom, f64>) -> Option<f64> {
    let mut strength = rule.mfc().value().min(rule.mfr().value());
    for atom in rule.condition() {
        let d = degrees.get(atom).copied().unwrap_or(0.0);
        if d <= 0.0 {
            return None;
        }
        strength = strength.min(d);
    }
    (strength > 0.0).then_some(strength)
}

/// Runs the rules to a fixpoint and returns every atom whose degree appeared
/// or increased, sorted by atom.
pub fn forward_chain<'a, P, I>(rules: I, facts: &FactSet) -> Vec<Conclusion>
where
    P: Production + 'a,
    I: IntoIterator<Item = (RuleId, &'a P)>,
{
    let rules: Vec<(RuleId, &P)> = rules.into_iter().collect();
    let mut degrees = facts.degrees.clone();

    // Degrees only grow and take values from a finite set, so this stops.
    loop {
        let mut changed = false;
        for (_, rule) in &rules {
            if let Some(c) = contribution(*rule, &degrees) {
                let slot = degrees.entry(rule.result().clone()).or_insert(0.0);
                if c > *slot {
                    *slot = c;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut support: BTreeMap<&Atom, Vec<RuleId>> = BTreeMap::new();
    for (id, rule) in &rules {
        if let Some(c) = contribution(*rule, &degrees) {
            if c == degrees[rule.result()] {
                support.entry(rule.result()).or_default().push(*id);
            }
        }
    }

    degrees
        .iter()
        .filter(|(atom, d)| **d > facts.degree(atom))
        .map(|(atom, d)| {
            let mut supporting_rules = support.remove(atom).unwrap_or_default();
            supporting_rules.sort();
            supporting_rules.dedup();
            Conclusion {
                atom: atom.clone(),
                degree: *d,
                supporting_rules,
            }
        })
        .collect()
}

/// Mergers whose keywords intersect `keywords` (case-insensitive), by id.
pub fn match_mergers<S: RuleStore + ?Sized>(store: &S, keywords: &[String]) -> Vec<MergerRecord> {
    let mut out: Vec<MergerRecord> = store
        .mergers()
        .into_iter()
        .filter(|m| keywords.iter().any(|k| m.has_keyword(k)))
        .collect();
    out.sort_by_key(|m| m.id);
    out
}
