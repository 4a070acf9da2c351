//! Generators and reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library except to build values, so the
//! oracles stay independent of the code they check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

use rulemerge::{
    Atom, Membership, MergerRecord, MergerRow, OntologyId, OntologyRecord, Pattern, Production,
    Rule, StoredRule,
};

pub const FIXTURE_1: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/ontology1.ttl");
pub const FIXTURE_2: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/ontology2.ttl");
pub const FIXTURE_EMPTY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/empty.ttl");
pub const FIXTURE_MALFORMED: &str =
    concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/malformed.ttl");

/// Draws `n` values from `strategy` with a fixed seed.
pub fn sample<S: Strategy>(strategy: S, n: usize) -> Vec<S::Value> {
    let mut runner = TestRunner::deterministic();
    (0..n)
        .map(|_| strategy.new_tree(&mut runner).unwrap().current())
        .collect()
}

// Random ontologies

pub const CLASS_NAMES: [&str; 12] = [
    "Plane", "Car", "Boat", "Jet", "Glider", "Truck", "Bike", "Train", "Ship", "Rocket", "Bus",
    "Tram",
];
pub const PROPERTY_NAMES: [&str; 20] = [
    "wings", "engine", "wheel", "hull", "sail", "rotor", "door", "seat", "cabin", "tail", "mast",
    "rudder", "axle", "brake", "pedal", "horn", "light", "mirror", "track", "anchor",
];
pub const NAMESPACES: [&str; 3] = [
    "http://ex.org/a#",
    "http://ex.org/b#",
    "http://ex.org/shared/",
];

const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
const RDFS_DOMAIN: &str = "http://www.w3.org/2000/01/rdf-schema#domain";
const RDFS_SUBCLASS_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
const OWL_CLASS: &str = "http://www.w3.org/2002/07/owl#Class";
const OWL_DATATYPE_PROPERTY: &str = "http://www.w3.org/2002/07/owl#DatatypeProperty";
const OWL_OBJECT_PROPERTY: &str = "http://www.w3.org/2002/07/owl#ObjectProperty";

/// A self-contained ontology in one namespace. Class and property names come
/// from disjoint pools, so keys never collide inside one ontology.
#[derive(Debug, Clone)]
pub struct OntologySpec {
    pub namespace: &'static str,
    /// Class name index to the indices of properties with that domain.
    pub classes: BTreeMap<usize, BTreeSet<usize>>,
    /// `(sub, super)` class name indices, never reflexive.
    pub edges: BTreeSet<(usize, usize)>,
    pub object_properties: BTreeSet<usize>,
    /// Write full IRIs instead of prefixed names.
    pub full_iris: bool,
}

pub fn ontology_spec() -> impl Strategy<Value = OntologySpec> {
    (
        0..NAMESPACES.len(),
        prop::collection::btree_map(
            0..CLASS_NAMES.len(),
            prop::collection::btree_set(0..PROPERTY_NAMES.len(), 0..=5),
            0..=10,
        ),
        prop::collection::vec(
            (any::<prop::sample::Index>(), any::<prop::sample::Index>()),
            0..=5,
        ),
        prop::collection::btree_set(0..PROPERTY_NAMES.len(), 0..=PROPERTY_NAMES.len()),
        any::<bool>(),
    )
        .prop_map(|(ns, classes, raw_edges, object_properties, full_iris)| {
            let ids: Vec<usize> = classes.keys().copied().collect();
            let edges = if ids.is_empty() {
                BTreeSet::new()
            } else {
                raw_edges
                    .into_iter()
                    .map(|(a, b)| (*a.get(&ids), *b.get(&ids)))
                    .filter(|(a, b)| a != b)
                    .collect()
            };
            OntologySpec {
                namespace: NAMESPACES[ns],
                classes,
                edges,
                object_properties,
                full_iris,
            }
        })
}

impl OntologySpec {
    fn properties(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut out: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for (class, props) in &self.classes {
            for p in props {
                out.entry(*p).or_default().insert(*class);
            }
        }
        out
    }

    fn term(&self, name: &str) -> String {
        if self.full_iris {
            format!("<{}{}>", self.namespace, name)
        } else {
            format!("o:{name}")
        }
    }

    pub fn to_turtle(&self) -> String {
        let mut out = format!("@prefix o: <{}> .\n# generated\n", self.namespace);
        for class in self.classes.keys() {
            let _ = writeln!(out, "{} a owl:Class .", self.term(CLASS_NAMES[*class]));
        }
        for (p, domains) in self.properties() {
            let kind = if self.object_properties.contains(&p) {
                "owl:ObjectProperty"
            } else {
                "owl:DatatypeProperty"
            };
            let domains: Vec<String> = domains.iter().map(|c| self.term(CLASS_NAMES[*c])).collect();
            let _ = writeln!(
                out,
                "{} a {kind} ;\n    rdfs:domain {} .",
                self.term(PROPERTY_NAMES[p]),
                domains.join(" , ")
            );
        }
        for (sub, sup) in &self.edges {
            let _ = writeln!(
                out,
                "{} rdfs:subClassOf {} .",
                self.term(CLASS_NAMES[*sub]),
                self.term(CLASS_NAMES[*sup])
            );
        }
        out
    }

    /// The triples the Turtle text denotes, as `(s, p, o)` IRIs.
    pub fn triples(&self) -> BTreeSet<(String, String, String)> {
        let iri = |name: &str| format!("{}{}", self.namespace, name);
        let mut out = BTreeSet::new();
        for class in self.classes.keys() {
            out.insert((iri(CLASS_NAMES[*class]), RDF_TYPE.into(), OWL_CLASS.into()));
        }
        for (p, domains) in self.properties() {
            let kind = if self.object_properties.contains(&p) {
                OWL_OBJECT_PROPERTY
            } else {
                OWL_DATATYPE_PROPERTY
            };
            out.insert((iri(PROPERTY_NAMES[p]), RDF_TYPE.into(), kind.into()));
            for c in domains {
                out.insert((
                    iri(PROPERTY_NAMES[p]),
                    RDFS_DOMAIN.into(),
                    iri(CLASS_NAMES[c]),
                ));
            }
        }
        for (sub, sup) in &self.edges {
            out.insert((
                iri(CLASS_NAMES[*sub]),
                RDFS_SUBCLASS_OF.into(),
                iri(CLASS_NAMES[*sup]),
            ));
        }
        out
    }
}

/// Rule keys a single merged ontology yields under local-name matching,
/// computed directly from the specs.
pub fn expected_merged_keys(specs: &[&OntologySpec]) -> BTreeSet<String> {
    let mut p1: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut p2 = BTreeSet::new();
    for spec in specs {
        for (class, props) in &spec.classes {
            if props.is_empty() {
                continue;
            }
            p1.entry(CLASS_NAMES[*class].to_lowercase())
                .or_default()
                .extend(props.iter().map(|p| PROPERTY_NAMES[*p].to_lowercase()));
        }
        for (sub, sup) in &spec.edges {
            p2.insert(format!(
                "P2|IF {} THEN {}",
                CLASS_NAMES[*sub].to_lowercase(),
                CLASS_NAMES[*sup].to_lowercase()
            ));
        }
    }
    p1.into_iter()
        .map(|(result, cond)| {
            format!(
                "P1|IF {} THEN {result}",
                cond.into_iter().collect::<Vec<_>>().join(" and ")
            )
        })
        .chain(p2)
        .collect()
}

// Random rules

pub const ATOMS: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

pub fn atom(text: &str) -> Atom {
    Atom::new(text).unwrap()
}

/// Membership values whose shortest decimal form has no exponent.
pub fn membership() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(1.0),
        Just(0.0),
        Just(0.5),
        (1u32..=1000).prop_map(|k| f64::from(k) / 1000.0),
        0.001f64..=1.0,
    ]
}

/// A rule over the first `atoms` atoms. With `fuzzy` false both membership
/// values are 1.0.
pub fn rule(atoms: usize, fuzzy: bool) -> impl Strategy<Value = Rule> {
    let memberships = if fuzzy {
        (membership(), membership()).boxed()
    } else {
        Just((1.0, 1.0)).boxed()
    };
    (
        any::<bool>(),
        0..atoms,
        prop::collection::btree_set(0..atoms - 1, 1..=3),
        memberships,
        prop::option::of(1u64..=3),
    )
        .prop_map(move |(p2, result, cond, (mfc, mfr), source)| {
            // Shift indices past the result so it never enters the condition.
            let mut cond: Vec<Atom> = cond
                .into_iter()
                .map(|i| atom(ATOMS[if i >= result { i + 1 } else { i }]))
                .collect();
            if p2 {
                cond.truncate(1);
            }
            Rule::new(
                if p2 { Pattern::P2 } else { Pattern::P1 },
                cond,
                atom(ATOMS[result]),
                Membership::new(mfc).unwrap(),
                Membership::new(mfr).unwrap(),
            )
            .unwrap()
            .with_source(source.map(OntologyId))
        })
}

pub fn rules(atoms: usize, fuzzy: bool, max: usize) -> impl Strategy<Value = Vec<Rule>> {
    prop::collection::vec(rule(atoms, fuzzy), 0..=max)
}

pub fn fact_set(atoms: usize) -> impl Strategy<Value = BTreeSet<usize>> {
    prop::collection::btree_set(0..atoms, 0..=atoms)
}

/// Classical forward chaining on sets: everything derivable from `facts`.
pub fn boolean_closure<P: Production>(rules: &[P], facts: &BTreeSet<String>) -> BTreeSet<String> {
    let mut known = facts.clone();
    loop {
        let before = known.len();
        for r in rules {
            if r.mfc().value() > 0.0
                && r.mfr().value() > 0.0
                && r.condition().iter().all(|a| known.contains(a.as_str()))
            {
                known.insert(r.result().as_str().to_owned());
            }
        }
        if known.len() == before {
            return known;
        }
    }
}

/// Max-min degrees by synchronous relaxation, one round per rule plus one.
pub fn reference_degrees<P: Production>(
    rules: &[P],
    facts: &BTreeMap<String, f64>,
) -> BTreeMap<String, f64> {
    let mut degrees = facts.clone();
    for _ in 0..=rules.len() {
        let snapshot = degrees.clone();
        for r in rules {
            let mut strength = r.mfc().value().min(r.mfr().value());
            for a in r.condition() {
                strength = strength.min(snapshot.get(a.as_str()).copied().unwrap_or(0.0));
            }
            if strength > 0.0 {
                let slot = degrees.entry(r.result().as_str().to_owned()).or_insert(0.0);
                *slot = slot.max(strength);
            }
        }
    }
    degrees
}

// Store files

fn real(v: Membership) -> String {
    format!("{:?}", v.value())
}

fn cond_text(c: &BTreeSet<Atom>) -> String {
    c.iter().map(Atom::as_str).collect::<Vec<_>>().join(" and ")
}

pub fn ontologies_tsv(records: &[OntologyRecord]) -> String {
    let mut out = String::from("id\tName\tAddress\tAccess_date\n");
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.id.0,
            r.name,
            r.address,
            r.access_date.format("%Y-%m-%dT%H:%M:%SZ")
        );
    }
    out
}

pub fn rules_tsv(rules: &[StoredRule]) -> String {
    let mut out = String::from("id\tOntology\tPattern\tCondition\tMFC\tResult\tMFR\n");
    for r in rules {
        let pattern = match r.rule.pattern() {
            Pattern::P1 => "P1",
            Pattern::P2 => "P2",
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{pattern}\t{}\t{}\t{}\t{}",
            r.id.0,
            r.ontology.0,
            cond_text(r.rule.condition()),
            real(r.rule.mfc()),
            r.rule.result(),
            real(r.rule.mfr())
        );
    }
    out
}

pub fn mergers_tsv(records: &[MergerRecord]) -> String {
    let mut out = String::from("id\tTable name\tKey words\tMerged ontologies\n");
    for m in records {
        let ids: Vec<String> = m
            .merged_ontologies
            .iter()
            .map(|i| i.0.to_string())
            .collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            m.id.0,
            m.table_name,
            m.keywords.join(","),
            ids.join(",")
        );
    }
    out
}

pub fn merger_table_tsv(rows: &[MergerRow]) -> String {
    let mut out = String::from("id\tCondition\tMFC\tResult\tMFR\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.id.0,
            cond_text(&r.condition),
            real(r.mfc),
            r.result,
            real(r.mfr)
        );
    }
    out
}

/// Every regular file in `dir` except the lock file, by name.
pub fn snapshot_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .filter(|(name, _)| name != ".lock")
        .map(|(name, path)| (name, fs::read(path).unwrap()))
        .collect()
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for (name, bytes) in snapshot_dir(from) {
        fs::write(to.join(name), bytes).unwrap();
    }
}
