//! Ontology graphs: the RDF data model, the structural views that rule
//! generation reads, concept keys, and the classical graph merge.

mod turtle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::rulegen::Atom;

pub use turtle::{parse_turtle, ParseError};

pub const RDF_NS: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
pub const RDFS_NS: &str = "http://www.w3.org/2000/01/rdf-schema#";
pub const OWL_NS: &str = "http://www.w3.org/2002/07/owl#";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema#";

pub mod vocab {
    pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
    pub const RDFS_SUBCLASS_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
    pub const RDFS_DOMAIN: &str = "http://www.w3.org/2000/01/rdf-schema#domain";
    pub const RDFS_RANGE: &str = "http://www.w3.org/2000/01/rdf-schema#range";
    pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";
    pub const OWL_CLASS: &str = "http://www.w3.org/2002/07/owl#Class";
    pub const OWL_DATATYPE_PROPERTY: &str = "http://www.w3.org/2002/07/owl#DatatypeProperty";
    pub const OWL_OBJECT_PROPERTY: &str = "http://www.w3.org/2002/07/owl#ObjectProperty";

    /// Every term of the rdf/rdfs/owl namespaces the parser accepts.
    pub const SUPPORTED: [&str; 8] = [
        RDF_TYPE,
        RDFS_SUBCLASS_OF,
        RDFS_DOMAIN,
        RDFS_RANGE,
        RDFS_LABEL,
        OWL_CLASS,
        OWL_DATATYPE_PROPERTY,
        OWL_OBJECT_PROPERTY,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid IRI {0:?}: {1}")]
pub struct InvalidIri(pub String, pub &'static str);

/// An absolute IRI. Compared by exact byte equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Iri(String);

impl Iri {
    pub fn new(value: impl Into<String>) -> Result<Self, InvalidIri> {
        let value = value.into();
        if value.is_empty() {
            return Err(InvalidIri(value, "empty"));
        }
        if value.chars().any(char::is_whitespace) {
            return Err(InvalidIri(value, "contains whitespace"));
        }
        if !has_scheme(&value) {
            return Err(InvalidIri(value, "not absolute (missing scheme)"));
        }
        Ok(Iri(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The part after the last `#` or `/`.
    pub fn fragment(&self) -> &str {
        match self.0.rfind(['#', '/']) {
            Some(idx) => &self.0[idx + 1..],
            None => &self.0,
        }
    }

    fn is_vocab(&self, term: &str) -> bool {
        self.0 == term
    }
}

fn has_scheme(value: &str) -> bool {
    let Some(colon) = value.find(':') else {
        return false;
    };
    let scheme = &value[..colon];
    let mut chars = scheme.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid language tag {0:?}")]
pub struct InvalidLanguageTag(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    lexical: String,
    language: Option<String>,
}

impl Literal {
    pub fn plain(lexical: impl Into<String>) -> Self {
        Literal {
            lexical: lexical.into(),
            language: None,
        }
    }

    /// Language tags must already be lowercase: `[a-z]+(-[a-z0-9]+)*`.
    pub fn with_language(
        lexical: impl Into<String>,
        tag: impl Into<String>,
    ) -> Result<Self, InvalidLanguageTag> {
        let tag = tag.into();
        if !is_language_tag(&tag) {
            return Err(InvalidLanguageTag(tag));
        }
        Ok(Literal {
            lexical: lexical.into(),
            language: Some(tag),
        })
    }

    pub fn lexical(&self) -> &str {
        &self.lexical
    }

    pub fn language(&self) -> Option<&str> {
        self.language.as_deref()
    }
}

pub(crate) fn is_language_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let Some(first) = parts.next() else {
        return false;
    };
    !first.is_empty()
        && first.chars().all(|c| c.is_ascii_lowercase())
        && parts.all(|p| {
            !p.is_empty()
                && p.chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit())
        })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
}

impl Term {
    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(iri) => Some(iri),
            Term::Literal(_) => None,
        }
    }
}

impl From<Iri> for Term {
    fn from(iri: Iri) -> Self {
        Term::Iri(iri)
    }
}

impl From<Literal> for Term {
    fn from(lit: Literal) -> Self {
        Term::Literal(lit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Iri,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Iri, predicate: Iri, object: impl Into<Term>) -> Self {
        Triple {
            subject,
            predicate,
            object: object.into(),
        }
    }
}

/// How concepts from different ontologies are identified with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchMode {
    /// Exact IRI text.
    Iri,
    /// Label, or the IRI fragment, lowercased.
    #[default]
    LocalName,
}

impl FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iri" => Ok(MatchMode::Iri),
            "localname" => Ok(MatchMode::LocalName),
            other => Err(format!(
                "unknown match mode {other:?} (expected iri or localname)"
            )),
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Iri => "iri",
            MatchMode::LocalName => "localname",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("concept key for {iri} is empty")]
pub struct EmptyKey {
    pub iri: Iri,
}

/// A set of triples plus the prefix table that was in effect while parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OntologyGraph {
    triples: BTreeSet<Triple>,
    prefixes: BTreeMap<String, Iri>,
}

impl OntologyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> Self {
        OntologyGraph {
            triples: triples.into_iter().collect(),
            prefixes: BTreeMap::new(),
        }
    }

    /// Returns false when the triple was already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        self.triples.insert(triple)
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn prefixes(&self) -> &BTreeMap<String, Iri> {
        &self.prefixes
    }

    pub(crate) fn set_prefix(&mut self, prefix: String, namespace: Iri) {
        self.prefixes.insert(prefix, namespace);
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    fn with_predicate<'a>(&'a self, predicate: &'a str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.triples
            .iter()
            .filter(move |t| t.predicate.is_vocab(predicate))
    }

    fn subjects_typed<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a Iri> + 'a {
        self.with_predicate(vocab::RDF_TYPE)
            .filter(move |t| matches!(&t.object, Term::Iri(o) if o.is_vocab(class)))
            .map(|t| &t.subject)
    }

    /// Every subject declared `owl:Class`.
    pub fn classes(&self) -> BTreeSet<Iri> {
        self.subjects_typed(vocab::OWL_CLASS).cloned().collect()
    }

    /// Every subject declared a datatype or object property.
    pub fn properties(&self) -> BTreeSet<Iri> {
        self.subjects_typed(vocab::OWL_DATATYPE_PROPERTY)
            .chain(self.subjects_typed(vocab::OWL_OBJECT_PROPERTY))
            .cloned()
            .collect()
    }

    /// Declared properties whose direct `rdfs:domain` is `class`.
    pub fn properties_with_domain(&self, class: &Iri) -> BTreeSet<Iri> {
        let declared = self.properties();
        self.with_predicate(vocab::RDFS_DOMAIN)
            .filter(|t| t.object.as_iri() == Some(class))
            .map(|t| &t.subject)
            .filter(|p| declared.contains(*p))
            .cloned()
            .collect()
    }

    /// Non-reflexive `(sub, super)` pairs from `rdfs:subClassOf`.
    pub fn subclass_edges(&self) -> BTreeSet<(Iri, Iri)> {
        self.with_predicate(vocab::RDFS_SUBCLASS_OF)
            .filter_map(|t| match &t.object {
                Term::Iri(sup) if *sup != t.subject => Some((t.subject.clone(), sup.clone())),
                _ => None,
            })
            .collect()
    }

    /// The smallest `rdfs:label` literal of `iri`, if any.
    pub fn label(&self, iri: &Iri) -> Option<&Literal> {
        self.with_predicate(vocab::RDFS_LABEL)
            .filter(|t| t.subject == *iri)
            .filter_map(|t| match &t.object {
                Term::Literal(lit) => Some(lit),
                Term::Iri(_) => None,
            })
            .min()
    }

    /// Class and property IRIs: the terms a graph merge identifies across
    /// ontologies.
    pub fn concepts(&self) -> BTreeSet<Iri> {
        let mut out = self.classes();
        out.extend(self.properties());
        for t in self.triples.iter() {
            let p = t.predicate.as_str();
            if p == vocab::RDFS_DOMAIN || p == vocab::RDFS_SUBCLASS_OF {
                out.insert(t.subject.clone());
                if let Term::Iri(o) = &t.object {
                    out.insert(o.clone());
                }
            } else if p == vocab::RDFS_RANGE {
                out.insert(t.subject.clone());
            }
        }
        out.retain(|iri| !vocab::SUPPORTED.contains(&iri.as_str()));
        out
    }

    /// One `<s> <p> <o> .` line per triple, in triple order.
    pub fn to_ntriples(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push('<');
            out.push_str(t.subject.as_str());
            out.push_str("> <");
            out.push_str(t.predicate.as_str());
            out.push_str("> ");
            match &t.object {
                Term::Iri(o) => {
                    out.push('<');
                    out.push_str(o.as_str());
                    out.push('>');
                }
                Term::Literal(lit) => {
                    out.push('"');
                    for c in lit.lexical.chars() {
                        match c {
                            '"' => out.push_str("\\\""),
                            '\\' => out.push_str("\\\\"),
                            '\n' => out.push_str("\\n"),
                            '\r' => out.push_str("\\r"),
                            '\t' => out.push_str("\\t"),
                            c => out.push(c),
                        }
                    }
                    out.push('"');
                    if let Some(tag) = &lit.language {
                        out.push('@');
                        out.push_str(tag);
                    }
                }
            }
            out.push_str(" .\n");
        }
        out
    }
}

pub fn classes_of(graph: &OntologyGraph) -> BTreeSet<Iri> {
    graph.classes()
}

pub fn properties_with_domain(graph: &OntologyGraph, class: &Iri) -> BTreeSet<Iri> {
    graph.properties_with_domain(class)
}

pub fn subclass_edges(graph: &OntologyGraph) -> BTreeSet<(Iri, Iri)> {
    graph.subclass_edges()
}

/// The atom a concept contributes to rules under `mode`.
pub fn concept_key(graph: &OntologyGraph, iri: &Iri, mode: MatchMode) -> Result<Atom, EmptyKey> {
    let token = match mode {
        MatchMode::Iri => iri.as_str().to_owned(),
        MatchMode::LocalName => {
            let raw = match graph.label(iri) {
                Some(label) => label.lexical().trim(),
                None => iri.fragment(),
            };
            raw.chars()
                .flat_map(char::to_lowercase)
                .map(|c| if c.is_whitespace() { '_' } else { c })
                .collect()
        }
    };
    Atom::new(token).map_err(|_| EmptyKey { iri: iri.clone() })
}

/// Classical merge: the triple union of `graphs` after every class and
/// property IRI has been rewritten to the smallest IRI sharing its key.
pub fn merge_graphs(
    g1: &OntologyGraph,
    g2: &OntologyGraph,
    mode: MatchMode,
) -> Result<OntologyGraph, EmptyKey> {
    merge_all(&[g1, g2], mode)
}

pub fn merge_all(graphs: &[&OntologyGraph], mode: MatchMode) -> Result<OntologyGraph, EmptyKey> {
    // Union-find over concept IRIs; IRIs sharing a key (in the graph they come
    // from) land in one component.
    let mut iris: Vec<Iri> = Vec::new();
    let mut index: BTreeMap<Iri, usize> = BTreeMap::new();
    let mut by_key: BTreeMap<Atom, usize> = BTreeMap::new();
    let mut parent: Vec<usize> = Vec::new();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for graph in graphs {
        for iri in graph.concepts() {
            let key = concept_key(graph, &iri, mode)?;
            let node = *index.entry(iri.clone()).or_insert_with(|| {
                iris.push(iri.clone());
                parent.push(parent.len());
                parent.len() - 1
            });
            match by_key.get(&key) {
                Some(&other) => {
                    let (a, b) = (find(&mut parent, node), find(&mut parent, other));
                    if a != b {
                        parent[a] = b;
                    }
                }
                None => {
                    by_key.insert(key, node);
                }
            }
        }
    }

    let mut representative: BTreeMap<usize, Iri> = BTreeMap::new();
    for (i, iri) in iris.iter().enumerate() {
        let root = find(&mut parent, i);
        representative
            .entry(root)
            .and_modify(|rep| {
                if iri < rep {
                    *rep = iri.clone();
                }
            })
            .or_insert_with(|| iri.clone());
    }
    let mut rewrite: BTreeMap<&Iri, &Iri> = BTreeMap::new();
    for (i, iri) in iris.iter().enumerate() {
        let root = find(&mut parent, i);
        rewrite.insert(iri, &representative[&root]);
    }
    let canon = |iri: &Iri| -> Iri { (*rewrite.get(iri).unwrap_or(&iri)).clone() };

    let mut merged = OntologyGraph::new();
    for graph in graphs {
        for (prefix, ns) in &graph.prefixes {
            merged
                .prefixes
                .entry(prefix.clone())
                .or_insert_with(|| ns.clone());
        }
        for t in &graph.triples {
            let object = match &t.object {
                Term::Iri(o) => Term::Iri(canon(o)),
                lit => lit.clone(),
            };
            merged.insert(Triple {
                subject: canon(&t.subject),
                predicate: canon(&t.predicate),
                object,
            });
        }
    }
    Ok(merged)
}
