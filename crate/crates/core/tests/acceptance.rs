//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints its verdict on every run.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use proptest::prelude::*;
use proptest::sample::Index;
use rulemerge::{
    consolidate, forward_chain, parse_turtle, rule_key, verify_equivalence, FactSet, MatchMode,
    Membership, MergerRecord, MergerRow, MergerSelector, OntologyId, OntologyRecord, Production,
    Rule, RuleId, RuleStore, Store, StoreError, StoredRule,
};

use common::*;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn rulemerge(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rulemerge"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("RULEMERGE_STORE")
        .output()
        .unwrap()
}

fn planes_store(store: &Path) -> Result<(), String> {
    for (fixture, expected) in [
        (FIXTURE_1, "ontology 1: 1 rule(s)\n"),
        (FIXTURE_2, "ontology 2: 1 rule(s)\n"),
    ] {
        let out = rulemerge(store, &["ingest", fixture]);
        check(out.stdout == expected.as_bytes(), || {
            format!("ingest printed {:?}", String::from_utf8_lossy(&out.stdout))
        })?;
    }
    let out = rulemerge(
        store,
        &[
            "merge",
            "--ontologies",
            "1,2",
            "--keywords",
            "plane",
            "--table-name",
            "planes",
        ],
    );
    check(out.stdout == b"merger 1: 1 rule(s)\n", || {
        format!("merge printed {:?}", String::from_utf8_lossy(&out.stdout))
    })
}

fn plane_merger() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("kb");
    let start = Instant::now();
    planes_store(&store)?;
    let elapsed = start.elapsed();

    let table = fs::read_to_string(store.join("merger_planes.tsv")).unwrap();
    check(
        table
            == "id\tCondition\tMFC\tResult\tMFR\n1\tengine and wheel and wings\t1.0\tplane\t1.0\n",
        || format!("merger table was {table:?}"),
    )?;
    let handle = Store::open_read_only(&store).map_err(|e| e.to_string())?;
    let (_, rows) = handle
        .load_merger_rules(&MergerSelector::Keyword("plane".into()))
        .map_err(|e| e.to_string())?;
    let cond: Vec<&str> = rows[0].condition.iter().map(|a| a.as_str()).collect();
    check(
        rows.len() == 1
            && cond == ["engine", "wheel", "wings"]
            && rows[0].result.as_str() == "plane"
            && rows[0].mfc == Membership::ONE
            && rows[0].mfr == Membership::ONE,
        || format!("loaded rows {rows:?}"),
    )?;
    check(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "IF engine and wheel and wings THEN plane in {elapsed:.2?}"
    ))
}

fn fused_rule_discrepancy() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("kb");
    planes_store(&store)?;
    let fused = rulemerge(
        &store,
        &["query", "--keywords", "plane", "--facts", "wheel"],
    );
    let raw = rulemerge(
        &store,
        &[
            "query",
            "--keywords",
            "plane",
            "--facts",
            "wheel",
            "--no-consolidate",
        ],
    );
    check(fused.status.success() && fused.stdout.is_empty(), || {
        format!(
            "consolidated query gave {:?}",
            String::from_utf8_lossy(&fused.stdout)
        )
    })?;
    check(
        raw.status.success() && raw.stdout == b"plane\t1.0\n",
        || format!("raw query gave {:?}", String::from_utf8_lossy(&raw.stdout)),
    )?;
    Ok("wheel: consolidated -> nothing, per-ontology -> plane 1.0".into())
}

fn oracle_equivalence() -> Verdict {
    const SAMPLES: usize = 200;
    let start = Instant::now();
    let pairs = sample((ontology_spec(), ontology_spec()), SAMPLES);
    let mut equivalent = 0;
    for (a, b) in &pairs {
        let ga = parse_turtle(&a.to_turtle()).map_err(|e| e.to_string())?;
        let gb = parse_turtle(&b.to_turtle()).map_err(|e| e.to_string())?;
        let report =
            verify_equivalence(&ga, &gb, MatchMode::LocalName).map_err(|e| e.to_string())?;
        let keys: BTreeSet<String> = report.consolidated.iter().map(rule_key).collect();
        if report.equivalent && keys == expected_merged_keys(&[a, b]) {
            equivalent += 1;
        }
    }
    let elapsed = start.elapsed();
    check(equivalent == SAMPLES, || {
        format!("{equivalent}/{SAMPLES} equivalent")
    })?;
    check(elapsed < Duration::from_secs(30), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{equivalent}/{SAMPLES} pairs EQUIVALENT in {elapsed:.2?}"
    ))
}

fn signature(rules: &[Rule]) -> Vec<(String, u64, u64)> {
    rules
        .iter()
        .map(|r| {
            (
                rule_key(r),
                r.mfc().value().to_bits(),
                r.mfr().value().to_bits(),
            )
        })
        .collect()
}

fn consolidation_algebra() -> Verdict {
    const SAMPLES: usize = 500;
    // Multisets: a base list plus repeated picks from it, then shuffled.
    let strategy = (
        rules(6, true, 12),
        prop::collection::vec(any::<Index>(), 0..6),
    )
        .prop_map(|(mut rules, repeats)| {
            if !rules.is_empty() {
                let extra: Vec<Rule> = repeats.iter().map(|i| i.get(&rules).clone()).collect();
                rules.extend(extra);
            }
            rules
        })
        .prop_flat_map(|rules| (Just(rules.clone()), Just(rules).prop_shuffle()));
    for (rules, shuffled) in sample(strategy, SAMPLES) {
        let once = consolidate(&rules).map_err(|e| e.to_string())?;
        let twice = consolidate(&once).map_err(|e| e.to_string())?;
        check(signature(&once) == signature(&twice), || {
            format!("not idempotent on {rules:?}")
        })?;
        let reordered = consolidate(&shuffled).map_err(|e| e.to_string())?;
        check(signature(&once) == signature(&reordered), || {
            format!("order sensitive on {rules:?}")
        })?;
    }
    Ok(format!(
        "{SAMPLES} multisets idempotent and order insensitive"
    ))
}

// Store round-trip

#[derive(Debug, Clone)]
enum Op {
    Ingest {
        name: usize,
        rules: Vec<Rule>,
        second: i64,
    },
    AddRules {
        target: Index,
        rules: Vec<Rule>,
    },
    Merge {
        a: Index,
        b: Index,
        table: usize,
        keywords: Vec<usize>,
    },
    Refresh {
        target: Index,
        rules: Vec<Rule>,
        second: i64,
    },
}

const NAMES: [&str; 4] = ["alpha", "beta", "gamma", "delta"];
const TABLES: [&str; 4] = ["planes", "cars", "boats", "misc"];
const KEYWORDS: [&str; 4] = ["plane", "Car", "boat", "vehicle"];

fn op() -> impl Strategy<Value = Op> {
    let stored = || {
        rules(6, true, 4).prop_map(|rs| {
            rs.into_iter()
                .map(|r| r.with_source(None))
                .collect::<Vec<_>>()
        })
    };
    prop_oneof![
        3 => (0..NAMES.len(), stored(), 0i64..100_000)
            .prop_map(|(name, rules, second)| Op::Ingest { name, rules, second }),
        1 => (any::<Index>(), stored()).prop_map(|(target, rules)| Op::AddRules { target, rules }),
        2 => (any::<Index>(), any::<Index>(), 0..TABLES.len(), prop::collection::vec(0..KEYWORDS.len(), 1..3))
            .prop_map(|(a, b, table, keywords)| Op::Merge { a, b, table, keywords }),
        2 => (any::<Index>(), stored(), 0i64..100_000)
            .prop_map(|(target, rules, second)| Op::Refresh { target, rules, second }),
    ]
}

fn at(second: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + second, 0).unwrap()
}

fn pick(store: &Store, index: &Index) -> OntologyId {
    let all = store.ontologies();
    if all.is_empty() {
        OntologyId(1)
    } else {
        index.get(&all).id
    }
}

fn apply(store: &mut Store, op: &Op) -> Result<(), StoreError> {
    match op {
        Op::Ingest {
            name,
            rules,
            second,
        } => {
            store.ingest(
                NAMES[*name],
                &format!("/data/{}.ttl", NAMES[*name]),
                at(*second),
                rules,
            )?;
        }
        Op::AddRules { target, rules } => {
            store.add_rules(pick(store, target), rules)?;
        }
        Op::Merge {
            a,
            b,
            table,
            keywords,
        } => {
            let ids = [pick(store, a), pick(store, b)];
            let mut rules = Vec::new();
            for id in ids {
                rules.extend(store.rules_of(id).into_iter().map(|s| s.rule));
            }
            let rules = consolidate(&rules).expect("stored rules consolidate");
            let keywords: Vec<String> = keywords.iter().map(|k| KEYWORDS[*k].to_owned()).collect();
            store.create_merger(TABLES[*table], &keywords, &ids, &rules)?;
        }
        Op::Refresh {
            target,
            rules,
            second,
        } => {
            store.refresh_ontology(pick(store, target), rules, at(*second))?;
        }
    }
    Ok(())
}

#[derive(Debug, PartialEq)]
struct State {
    ontologies: Vec<OntologyRecord>,
    rules: Vec<StoredRule>,
    mergers: Vec<(MergerRecord, Vec<MergerRow>)>,
}

fn state<S: RuleStore>(store: &S) -> State {
    State {
        ontologies: store.ontologies(),
        rules: store.rules(),
        mergers: store
            .mergers()
            .into_iter()
            .map(|m| store.load_merger_rules(&MergerSelector::Id(m.id)).unwrap())
            .collect(),
    }
}

fn expected_files(s: &State) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    files.insert(
        "ontologies.tsv".to_owned(),
        ontologies_tsv(&s.ontologies).into_bytes(),
    );
    files.insert("rules.tsv".to_owned(), rules_tsv(&s.rules).into_bytes());
    let records: Vec<MergerRecord> = s.mergers.iter().map(|(m, _)| m.clone()).collect();
    files.insert("mergers.tsv".to_owned(), mergers_tsv(&records).into_bytes());
    for (m, rows) in &s.mergers {
        files.insert(m.file_name(), merger_table_tsv(rows).into_bytes());
    }
    files
}

const RULE_COUNTER: &str = ".next-rule-id";

fn reopen(root: &Path) -> Result<Store, String> {
    Store::open(root, false).map_err(|e| format!("reopen failed: {e}"))
}

fn store_round_trip() -> Verdict {
    const SAMPLES: usize = 100;
    let sequences = sample(
        prop::collection::vec((op(), prop::option::weighted(0.3, 0usize..6)), 1..10),
        SAMPLES,
    );
    let (mut ops, mut crashes, mut crash_reopens) = (0, 0, 0);
    for sequence in &sequences {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("kb");
        let mut store = Store::open(&root, true).map_err(|e| e.to_string())?;
        let mut issued: BTreeMap<RuleId, (OntologyId, String)> = BTreeMap::new();
        for (op, crash_at) in sequence {
            ops += 1;
            match crash_at {
                None => {
                    let _ = apply(&mut store, op);
                }
                Some(nth) => {
                    crashes += 1;
                    let before = state(&store);
                    let twin = dir.path().join("twin");
                    let _ = fs::remove_dir_all(&twin);
                    copy_dir(&root, &twin);
                    let after = {
                        let mut twin_store = reopen(&twin)?;
                        let _ = apply(&mut twin_store, op);
                        state(&twin_store)
                    };
                    store.simulate_crash_at_write(*nth);
                    let _ = apply(&mut store, op);
                    drop(store);
                    store = match Store::open(&root, false) {
                        Err(e @ StoreError::CorruptStore { .. }) => {
                            return Err(format!("crash left a corrupt store: {e}"))
                        }
                        other => other.map_err(|e| e.to_string())?,
                    };
                    crash_reopens += 1;
                    let now = state(&store);
                    check(now == before || now == after, || {
                        format!("crash during {op:?} left a mixed state")
                    })?;
                }
            }
            let held = state(&store);
            drop(store);
            store = reopen(&root)?;
            check(state(&store) == held, || {
                format!("reopen changed records after {op:?}")
            })?;
            let mut files = snapshot_dir(&root);
            files.remove(RULE_COUNTER);
            check(files == expected_files(&held), || {
                format!("files differ from re-serialization after {op:?}")
            })?;
            for r in &held.rules {
                let identity = (r.ontology, rule_key(&r.rule));
                let first = issued.entry(r.id).or_insert_with(|| identity.clone());
                check(*first == identity, || {
                    format!("rule id {} was reused", r.id.0)
                })?;
            }
        }
        drop(store);
        let reader = Store::open_read_only(&root).map_err(|e| e.to_string())?;
        let mut files = snapshot_dir(&root);
        files.remove(RULE_COUNTER);
        check(expected_files(&state(&reader)) == files, || {
            "read-only view differs".into()
        })?;
    }
    Ok(format!(
        "{SAMPLES} sequences, {ops} operations, {crashes} simulated crashes, {crash_reopens} clean reopens"
    ))
}

// Forward chaining

/// Whether `atom` is derivable at level `d` through rules whose memberships
/// are at least `d`, starting from facts of degree at least `d`.
fn chain_supports(rules: &[Rule], facts: &FactSet, atom: &str, d: f64) -> bool {
    let mut known: BTreeSet<String> = facts
        .iter()
        .filter(|(_, v)| *v >= d - 1e-12)
        .map(|(a, _)| a.to_string())
        .collect();
    loop {
        let before = known.len();
        for r in rules {
            if r.mfc().value().min(r.mfr().value()) >= d - 1e-12
                && r.condition().iter().all(|a| known.contains(a.as_str()))
            {
                known.insert(r.result().to_string());
            }
        }
        if known.contains(atom) {
            return true;
        }
        if known.len() == before {
            return false;
        }
    }
}

fn numbered(rules: &[Rule]) -> impl Iterator<Item = (RuleId, &Rule)> {
    rules
        .iter()
        .enumerate()
        .map(|(i, r)| (RuleId(i as u64 + 1), r))
}

fn forward_chaining_soundness() -> Verdict {
    const SAMPLES: usize = 200;
    for (rules, facts) in sample((rules(8, false, 14), fact_set(8)), SAMPLES) {
        let start: BTreeSet<String> = facts.iter().map(|i| ATOMS[*i].to_owned()).collect();
        let mut fact_set = FactSet::new();
        for a in &start {
            fact_set.set(atom(a), Membership::ONE);
        }
        let derived: BTreeSet<String> = forward_chain(numbered(&rules), &fact_set)
            .into_iter()
            .map(|c| c.atom.to_string())
            .collect();
        let expected = &boolean_closure(&rules, &start) - &start;
        check(derived == expected, || {
            format!("crisp mismatch: {derived:?} vs {expected:?} for {rules:?}")
        })?;
    }

    let fuzzy = (
        rules(8, true, 14),
        fact_set(8),
        prop::collection::vec(membership(), 1..4),
    );
    let mut conclusions = 0;
    for (rules, facts, degrees) in sample(fuzzy, SAMPLES) {
        let mut fact_set = FactSet::new();
        for (n, i) in facts.iter().enumerate() {
            fact_set.set(
                atom(ATOMS[*i]),
                Membership::new(degrees[n % degrees.len()]).unwrap(),
            );
        }
        let initial: BTreeMap<String, f64> =
            fact_set.iter().map(|(a, d)| (a.to_string(), d)).collect();
        let reference = reference_degrees(&rules, &initial);
        for c in forward_chain(numbered(&rules), &fact_set) {
            conclusions += 1;
            let bounded = c.supporting_rules.iter().any(|id| {
                let r = &rules[id.0 as usize - 1];
                c.degree <= r.mfc().value().min(r.mfr().value()) + 1e-12
            });
            check(bounded && !c.supporting_rules.is_empty(), || {
                format!("{} at {} exceeds every supporting rule", c.atom, c.degree)
            })?;
            check(
                chain_supports(&rules, &fact_set, c.atom.as_str(), c.degree),
                || format!("{} at {} has no supporting chain", c.atom, c.degree),
            )?;
            check(
                (c.degree - reference[c.atom.as_str()]).abs() <= 1e-12,
                || {
                    format!(
                        "{} at {} but relaxation gives {}",
                        c.atom,
                        c.degree,
                        reference[c.atom.as_str()]
                    )
                },
            )?;
        }
    }
    Ok(format!(
        "{SAMPLES} crisp rulebases match set closure; {conclusions} fuzzy conclusions within 1e-12"
    ))
}

// Refresh

fn read_column(path: &Path, column: usize) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(column).unwrap().to_owned())
        .collect()
}

fn refresh_integrity() -> Verdict {
    const SAMPLES: usize = 50;
    let strategy = (
        prop::collection::vec(rules(6, true, 4), 3..=4),
        prop::collection::vec((any::<Index>(), any::<Index>()), 1..=4),
        any::<Index>(),
        rules(6, true, 4),
        0i64..200_000,
    );
    let mut stale_reports = 0;
    for (per_ontology, merger_pairs, target, new_rules, second) in sample(strategy, SAMPLES) {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("kb");
        let mut store = Store::open(&root, true).map_err(|e| e.to_string())?;
        for (i, rs) in per_ontology.iter().enumerate() {
            let mut seen = BTreeSet::new();
            let rs: Vec<Rule> = rs
                .iter()
                .filter(|r| seen.insert(rule_key(r)))
                .cloned()
                .collect();
            store
                .ingest(
                    &format!("o{i}"),
                    &format!("/data/o{i}.ttl"),
                    at(100_000),
                    &rs,
                )
                .map_err(|e| e.to_string())?;
        }
        let ids: Vec<OntologyId> = store.ontologies().iter().map(|o| o.id).collect();
        for (n, (a, b)) in merger_pairs.iter().enumerate() {
            let pair = [*a.get(&ids), *b.get(&ids)];
            if pair[0] == pair[1] {
                continue;
            }
            let mut rs = Vec::new();
            for id in pair {
                rs.extend(store.rules_of(id).into_iter().map(|s| s.rule));
            }
            let rs = consolidate(&rs).map_err(|e| e.to_string())?;
            store
                .create_merger(&format!("m{n}"), &["k".into()], &pair, &rs)
                .map_err(|e| e.to_string())?;
        }

        let target = *target.get(&ids);
        let previous = store.ontology(target).unwrap().access_date;
        let mut seen = BTreeSet::new();
        let new_rules: Vec<Rule> = new_rules
            .into_iter()
            .filter(|r| seen.insert(rule_key(r)))
            .collect();
        let report = store
            .refresh_ontology(target, &new_rules, at(second))
            .map_err(|e| e.to_string())?;
        drop(store);

        // Integrity is read straight from the files.
        let ontology_ids: BTreeSet<String> = read_column(&root.join("ontologies.tsv"), 0)
            .into_iter()
            .collect();
        let dates = read_column(&root.join("ontologies.tsv"), 3);
        let rule_refs = read_column(&root.join("rules.tsv"), 1);
        check(rule_refs.iter().all(|o| ontology_ids.contains(o)), || {
            "rules.tsv references a missing ontology".into()
        })?;
        let merger_ids = read_column(&root.join("mergers.tsv"), 0);
        let tables = read_column(&root.join("mergers.tsv"), 1);
        let members = read_column(&root.join("mergers.tsv"), 3);
        for (table, list) in tables.iter().zip(&members) {
            check(list.split(',').all(|o| ontology_ids.contains(o)), || {
                format!("merger {table} references a missing ontology")
            })?;
            check(root.join(format!("merger_{table}.tsv")).is_file(), || {
                format!("merger table {table} is missing")
            })?;
        }

        let target_text = target.0.to_string();
        let position = ontology_ids.iter().position(|o| *o == target_text).unwrap();
        let stored_date = &dates[position];
        check(
            *stored_date > previous.format("%Y-%m-%dT%H:%M:%SZ").to_string()
                && report.access_date > previous,
            || format!("Access_date {stored_date} did not advance past {previous}"),
        )?;

        let containing: BTreeSet<String> = merger_ids
            .iter()
            .zip(&members)
            .filter(|(_, list)| list.split(',').any(|o| *o == target_text))
            .map(|(id, _)| id.clone())
            .collect();
        let reported: BTreeSet<String> = report
            .stale_mergers
            .iter()
            .map(|m| m.id.0.to_string())
            .collect();
        let expected = if report.changed > 0 {
            containing
        } else {
            BTreeSet::new()
        };
        check(reported == expected, || {
            format!("stale mergers {reported:?}, expected {expected:?}")
        })?;
        stale_reports += usize::from(!reported.is_empty());
    }
    Ok(format!(
        "{SAMPLES} refreshes consistent, {stale_reports} with stale mergers"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 plane merger", plane_merger),
        ("2 fused-rule discrepancy", fused_rule_discrepancy),
        ("3 oracle equivalence", oracle_equivalence),
        ("4 consolidation algebra", consolidation_algebra),
        ("5 store round-trip and crash safety", store_round_trip),
        ("6 forward-chaining soundness", forward_chaining_soundness),
        ("7 refresh integrity", refresh_integrity),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let verdict = panic::catch_unwind(AssertUnwindSafe(criterion))
            .unwrap_or_else(|_| Err("panicked".into()));
        match verdict {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
