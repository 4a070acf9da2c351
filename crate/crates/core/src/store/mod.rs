//! File-backed knowledge base.
//!
//! The store keeps three fixed tables (`ontologies.tsv`, `rules.tsv`,
//! `mergers.tsv`) and one `merger_<table name>.tsv` per registered merger.
//! Every mutating operation rewrites whole files through a temporary file and
//! an atomic rename, so readers never observe a half-written table. An
//! operation touching several files first stages them as `.staged-<file>`,
//! then writes `.journal` naming them, then renames them into place. A writer
//! that finds a journal on open completes those renames; read-only handles
//! read the staged files instead.
//!
//! A [`Store`] opened for writing holds an exclusive lock on `<root>/.lock`
//! for its whole lifetime; read-only handles hold a shared lock.

mod fsutil;
mod tsv;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use thiserror::Error;

use crate::rulegen::{rule_key, Atom, Membership, Production, Rule};
use fsutil::Finish;

pub use tsv::{format_timestamp, parse_timestamp};

pub const ONTOLOGIES_FILE: &str = "ontologies.tsv";
pub const RULES_FILE: &str = "rules.tsv";
pub const MERGERS_FILE: &str = "mergers.tsv";
pub const LOCK_FILE: &str = ".lock";
const JOURNAL_FILE: &str = ".journal";
const STAGED_PREFIX: &str = ".staged-";
/// Holds the next rule id when deleted rows make `max id + 1` too small.
const RULE_COUNTER_FILE: &str = ".next-rule-id";

pub type Timestamp = DateTime<Utc>;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(OntologyId);
id_type!(RuleId);
id_type!(MergerId);

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("corrupt store: {file}:{line}: {reason}")]
    CorruptStore {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown ontology {0}")]
    UnknownOntology(OntologyId),
    #[error("duplicate rule {0}")]
    DuplicateRule(String),
    #[error("merger table name {0:?} is already in use")]
    DuplicateTableName(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("keyword {keyword:?} matches several mergers: {}", join_ids(.mergers))]
    AmbiguousKeyword {
        keyword: String,
        mergers: Vec<MergerId>,
    },
    #[error("store was opened read-only")]
    ReadOnly,
}

fn join_ids(ids: &[MergerId]) -> String {
    ids.iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl StoreError {
    fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> StoreError {
        let path = path.into();
        move |source| StoreError::Io { path, source }
    }
}

type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OntologyRecord {
    pub id: OntologyId,
    pub name: String,
    pub address: String,
    pub access_date: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredRule {
    pub id: RuleId,
    pub ontology: OntologyId,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergerRecord {
    pub id: MergerId,
    pub table_name: String,
    pub keywords: Vec<String>,
    pub merged_ontologies: Vec<OntologyId>,
}

impl MergerRecord {
    pub fn file_name(&self) -> String {
        merger_file_name(&self.table_name)
    }

    pub fn has_keyword(&self, keyword: &str) -> bool {
        let keyword = keyword.to_lowercase();
        self.keywords.contains(&keyword)
    }
}

/// One row of a per-merger table: a rule without its pattern tag.
#[derive(Debug, Clone, PartialEq)]
pub struct MergerRow {
    pub id: RuleId,
    pub condition: BTreeSet<Atom>,
    pub mfc: Membership,
    pub result: Atom,
    pub mfr: Membership,
}

impl MergerRow {
    pub fn from_rule(id: RuleId, rule: &Rule) -> Self {
        MergerRow {
            id,
            condition: rule.condition().clone(),
            mfc: rule.mfc(),
            result: rule.result().clone(),
            mfr: rule.mfr(),
        }
    }
}

impl Production for MergerRow {
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

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergerSelector {
    Id(MergerId),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefreshReport {
    /// Rules removed plus rules added.
    pub changed: usize,
    pub access_date: Timestamp,
    /// Mergers built from the ontology, listed only when its rules changed.
    /// Their tables still hold the rules consolidated before the refresh.
    pub stale_mergers: Vec<MergerRecord>,
}

/// The operations the rest of the crate needs from a knowledge base.
pub trait RuleStore {
    fn ontologies(&self) -> Vec<OntologyRecord>;
    fn ontology(&self, id: OntologyId) -> Option<OntologyRecord>;
    fn rules(&self) -> Vec<StoredRule>;
    fn rules_of(&self, id: OntologyId) -> Vec<StoredRule>;
    fn mergers(&self) -> Vec<MergerRecord>;

    fn add_ontology(
        &mut self,
        name: &str,
        address: &str,
        access_date: Timestamp,
    ) -> Result<OntologyRecord>;
    fn add_rules(&mut self, ontology: OntologyId, rules: &[Rule]) -> Result<Vec<StoredRule>>;
    /// Adds an ontology together with its rules as one operation.
    fn ingest(
        &mut self,
        name: &str,
        address: &str,
        access_date: Timestamp,
        rules: &[Rule],
    ) -> Result<(OntologyRecord, Vec<StoredRule>)>;
    fn create_merger(
        &mut self,
        table_name: &str,
        keywords: &[String],
        ontologies: &[OntologyId],
        rules: &[Rule],
    ) -> Result<MergerRecord>;
    fn load_merger_rules(
        &self,
        selector: &MergerSelector,
    ) -> Result<(MergerRecord, Vec<MergerRow>)>;
    fn refresh_ontology(
        &mut self,
        ontology: OntologyId,
        rules: &[Rule],
        access_date: Timestamp,
    ) -> Result<RefreshReport>;
}

/// Files named by an unfinished journal that still have a staged copy.
fn read_journal(root: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let path = root.join(JOURNAL_FILE);
    let Some(listing) = fsutil::snapshot(&path).map_err(StoreError::io(&path))? else {
        return Ok(BTreeMap::new());
    };
    Ok(String::from_utf8_lossy(&listing)
        .lines()
        .filter(|file| {
            !file.is_empty()
                && !file.contains(['/', '\\'])
                && (!file.starts_with('.') || *file == RULE_COUNTER_FILE)
        })
        .map(|file| (file.to_owned(), root.join(format!("{STAGED_PREFIX}{file}"))))
        .filter(|(_, staged)| staged.is_file())
        .collect())
}

pub fn merger_file_name(table_name: &str) -> String {
    format!("merger_{table_name}.tsv")
}

fn valid_table_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && name.len() <= 63
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn validate_field(what: &str, value: &str) -> Result<()> {
    if value.is_empty() {
        return Err(StoreError::Validation(format!("{what} is empty")));
    }
    if value.contains(['\t', '\n', '\r']) {
        return Err(StoreError::Validation(format!(
            "{what} contains a tab or newline"
        )));
    }
    Ok(())
}

fn normalize_keywords(keywords: &[String]) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for k in keywords {
        let k = k.to_lowercase();
        if k.is_empty() || k.contains(',') || k.chars().any(char::is_whitespace) {
            return Err(StoreError::Validation(format!("invalid keyword {k:?}")));
        }
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(StoreError::Validation(
            "a merger needs at least one keyword".into(),
        ));
    }
    Ok(out)
}

fn identity(rule: &Rule) -> (String, u64, u64) {
    (
        rule_key(rule),
        rule.mfc().value().to_bits(),
        rule.mfr().value().to_bits(),
    )
}

fn truncate_to_seconds(ts: Timestamp) -> Timestamp {
    DateTime::from_timestamp(ts.timestamp(), 0).expect("in-range timestamp")
}

/// Everything that lives in the fixed tables.
#[derive(Debug, Clone, Default, PartialEq)]
struct Tables {
    ontologies: Vec<OntologyRecord>,
    rules: Vec<StoredRule>,
    mergers: Vec<MergerRecord>,
}

/// The TSV-backed store.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    _lock: File,
    writable: bool,
    tables: Tables,
    merger_tables: BTreeMap<String, Vec<MergerRow>>,
    /// Staged files of an unfinished commit, seen through by readers.
    pending: BTreeMap<String, PathBuf>,
    next_ontology: u64,
    next_rule: u64,
    next_merger: u64,
    /// Content of the rule counter file, 0 when there is none.
    saved_rule_counter: u64,
    crash_at_write: Option<usize>,
    writes: usize,
}

impl Store {
    /// Opens (or with `create_if_missing`, initialises) a store for writing.
    pub fn open(root: impl AsRef<Path>, create_if_missing: bool) -> Result<Store> {
        Self::open_with(root.as_ref(), create_if_missing, true)
    }

    /// Opens an existing store for reading only.
    pub fn open_read_only(root: impl AsRef<Path>) -> Result<Store> {
        Self::open_with(root.as_ref(), false, false)
    }

    fn open_with(root: &Path, create: bool, writable: bool) -> Result<Store> {
        if create {
            fs::create_dir_all(root).map_err(StoreError::io(root))?;
        } else if !root.is_dir() {
            return Err(StoreError::Io {
                path: root.to_owned(),
                source: io::Error::new(io::ErrorKind::NotFound, "store directory does not exist"),
            });
        }
        let lock_path = root.join(LOCK_FILE);
        let lock = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(StoreError::io(&lock_path))?;
        if writable {
            lock.lock().map_err(StoreError::io(&lock_path))?;
        } else {
            lock.lock_shared().map_err(StoreError::io(&lock_path))?;
        }

        let mut store = Store {
            root: root.to_owned(),
            _lock: lock,
            writable,
            tables: Tables::default(),
            merger_tables: BTreeMap::new(),
            pending: BTreeMap::new(),
            next_ontology: 1,
            next_rule: 1,
            next_merger: 1,
            saved_rule_counter: 0,
            crash_at_write: None,
            writes: 0,
        };

        let journal = read_journal(root)?;
        if writable {
            for (file, staged) in &journal {
                let target = root.join(file);
                fs::rename(staged, &target).map_err(StoreError::io(&target))?;
            }
            if !journal.is_empty() || root.join(JOURNAL_FILE).exists() {
                let path = root.join(JOURNAL_FILE);
                fs::remove_file(&path).map_err(StoreError::io(&path))?;
            }
        } else {
            store.pending = journal;
        }

        let fixed = [ONTOLOGIES_FILE, RULES_FILE, MERGERS_FILE];
        let present: Vec<bool> = fixed
            .iter()
            .map(|f| store.pending.contains_key(*f) || root.join(f).is_file())
            .collect();
        if present.iter().all(|p| !p) {
            if !create {
                return Err(StoreError::Io {
                    path: root.join(ONTOLOGIES_FILE),
                    source: io::Error::new(io::ErrorKind::NotFound, "store is not initialised"),
                });
            }
            store.commit(&Tables::default(), 1, None)?;
        } else if let Some(missing) = fixed.iter().zip(&present).find(|(_, p)| !**p) {
            return Err(StoreError::CorruptStore {
                file: missing.0.to_string(),
                line: 0,
                reason: "table file is missing".into(),
            });
        }
        store.load()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn read(&self, file: &str) -> Result<String> {
        let path = match self.pending.get(file) {
            Some(staged) => staged.clone(),
            None => self.root.join(file),
        };
        let bytes = fs::read(&path).map_err(StoreError::io(&path))?;
        String::from_utf8(bytes).map_err(|e| StoreError::CorruptStore {
            file: file.to_owned(),
            line: 0,
            reason: e.to_string(),
        })
    }

    fn load(&mut self) -> Result<()> {
        fn decoded<T>(file: &str, r: Result<T, tsv::Corrupt>) -> Result<T> {
            r.map_err(|c| StoreError::CorruptStore {
                file: file.to_owned(),
                line: c.line,
                reason: c.reason,
            })
        }
        let tables = Tables {
            ontologies: decoded(
                ONTOLOGIES_FILE,
                tsv::decode_ontologies(&self.read(ONTOLOGIES_FILE)?),
            )?,
            rules: decoded(RULES_FILE, tsv::decode_rules(&self.read(RULES_FILE)?))?,
            mergers: decoded(MERGERS_FILE, tsv::decode_mergers(&self.read(MERGERS_FILE)?))?,
        };
        check_integrity(&tables)?;

        let mut merger_tables = BTreeMap::new();
        for m in &tables.mergers {
            let file = m.file_name();
            let rows = decoded(&file, tsv::decode_merger_table(&self.read(&file)?))?;
            merger_tables.insert(m.table_name.clone(), rows);
        }
        self.sweep_debris(&tables)?;

        self.next_ontology = tables.ontologies.last().map_or(1, |r| r.id.0 + 1);
        self.saved_rule_counter = self.read_rule_counter()?;
        self.next_rule = tables
            .rules
            .last()
            .map_or(1, |r| r.id.0 + 1)
            .max(self.saved_rule_counter);
        self.next_merger = tables.mergers.last().map_or(1, |r| r.id.0 + 1);
        self.tables = tables;
        self.merger_tables = merger_tables;
        Ok(())
    }

    fn read_rule_counter(&self) -> Result<u64> {
        if !self.pending.contains_key(RULE_COUNTER_FILE)
            && !self.root.join(RULE_COUNTER_FILE).exists()
        {
            return Ok(0);
        }
        let text = self.read(RULE_COUNTER_FILE)?;
        text.strip_suffix('\n')
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| StoreError::CorruptStore {
                file: RULE_COUNTER_FILE.into(),
                line: 1,
                reason: format!("invalid rule counter {text:?}"),
            })
    }

    /// Removes temporary files and merger tables left by an interrupted
    /// writer. Read-only handles leave them alone and ignore them.
    fn sweep_debris(&self, tables: &Tables) -> Result<()> {
        if !self.writable {
            return Ok(());
        }
        let known: BTreeSet<String> = tables.mergers.iter().map(MergerRecord::file_name).collect();
        let entries = fs::read_dir(&self.root).map_err(StoreError::io(&self.root))?;
        for entry in entries {
            let entry = entry.map_err(StoreError::io(&self.root))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let orphan =
                name.starts_with("merger_") && name.ends_with(".tsv") && !known.contains(&name);
            if orphan || name.starts_with(fsutil::TEMP_PREFIX) || name.starts_with(STAGED_PREFIX) {
                let path = entry.path();
                fs::remove_file(&path).map_err(StoreError::io(&path))?;
            }
        }
        Ok(())
    }

    /// Arms a simulated crash: the `nth` file step from now (0-based) stops
    /// the operation as a killed process would. A file write leaves its
    /// temporary file behind without renaming it; an install skips its
    /// rename. Nothing is rolled back, so the handle should be dropped.
    #[doc(hidden)]
    pub fn simulate_crash_at_write(&mut self, nth: usize) {
        self.crash_at_write = Some(self.writes + nth);
    }

    fn crash_now(&mut self) -> bool {
        let crash = self.crash_at_write == Some(self.writes);
        self.writes += 1;
        crash
    }

    fn ensure_writable(&self) -> Result<()> {
        if self.writable {
            Ok(())
        } else {
            Err(StoreError::ReadOnly)
        }
    }

    /// Writes the fixed tables that differ from the current state, together
    /// with an optional new merger table. A failed commit leaves every file
    /// as it was.
    fn commit(
        &mut self,
        next: &Tables,
        next_rule: u64,
        merger_table: Option<(&str, String)>,
    ) -> Result<()> {
        let mut plan: Vec<(String, String)> = Vec::new();
        if let Some((file, content)) = merger_table {
            plan.push((file.to_owned(), content));
        }
        let fresh = self.tables == Tables::default() && !self.root.join(ONTOLOGIES_FILE).exists();
        if fresh || next.ontologies != self.tables.ontologies {
            plan.push((
                ONTOLOGIES_FILE.into(),
                tsv::encode_ontologies(&next.ontologies),
            ));
        }
        if fresh || next.rules != self.tables.rules {
            plan.push((RULES_FILE.into(), tsv::encode_rules(&next.rules)));
        }
        if fresh || next.mergers != self.tables.mergers {
            plan.push((MERGERS_FILE.into(), tsv::encode_mergers(&next.mergers)));
        }
        let derived = next.rules.last().map_or(1, |r| r.id.0 + 1);
        let save_counter = next_rule > derived && next_rule != self.saved_rule_counter;
        if save_counter {
            plan.push((RULE_COUNTER_FILE.into(), format!("{next_rule}\n")));
        }

        let result = match plan.as_slice() {
            [] => Ok(()),
            [(file, content)] => {
                let path = self.root.join(file);
                let finish = self.finish();
                fsutil::atomic_write(&path, content.as_bytes(), finish)
                    .map_err(StoreError::io(&path))
            }
            _ => self.commit_journaled(&plan),
        };
        if result.is_ok() && save_counter {
            self.saved_rule_counter = next_rule;
        }
        result
    }

    fn finish(&mut self) -> Finish {
        if self.crash_now() {
            Finish::Abandon
        } else {
            Finish::Rename
        }
    }

    fn commit_journaled(&mut self, plan: &[(String, String)]) -> Result<()> {
        let journal = self.root.join(JOURNAL_FILE);
        let staged: Vec<PathBuf> = plan
            .iter()
            .map(|(file, _)| self.root.join(format!("{STAGED_PREFIX}{file}")))
            .collect();
        let discard = |paths: &[PathBuf]| {
            for path in paths {
                let _ = fs::remove_file(path);
            }
        };

        for ((_, content), path) in plan.iter().zip(&staged) {
            let finish = self.finish();
            if let Err(e) = fsutil::atomic_write(path, content.as_bytes(), finish) {
                if finish == Finish::Rename {
                    discard(&staged);
                }
                return Err(StoreError::Io {
                    path: path.clone(),
                    source: e,
                });
            }
        }
        let listing: String = plan.iter().map(|(file, _)| format!("{file}\n")).collect();
        let finish = self.finish();
        if let Err(e) = fsutil::atomic_write(&journal, listing.as_bytes(), finish) {
            if finish == Finish::Rename {
                discard(&staged);
            }
            return Err(StoreError::Io {
                path: journal,
                source: e,
            });
        }

        // Past the journal write the commit counts as done, but a failing
        // rename is still undone so the caller sees no change.
        let mut installed: Vec<(PathBuf, Option<Vec<u8>>)> = Vec::new();
        for ((file, _), path) in plan.iter().zip(&staged) {
            let target = self.root.join(file);
            if self.crash_now() {
                return Err(StoreError::Io {
                    path: target,
                    source: io::Error::other("simulated crash before rename"),
                });
            }
            let step = fsutil::snapshot(&target).and_then(|previous| {
                fs::rename(path, &target)?;
                installed.push((target.clone(), previous));
                Ok(())
            });
            if let Err(e) = step {
                for (done, before) in installed.iter().rev() {
                    let _ = fsutil::restore(done, before.as_deref());
                }
                let _ = fs::remove_file(&journal);
                discard(&staged);
                return Err(StoreError::Io {
                    path: target,
                    source: e,
                });
            }
        }
        fsutil::sync_dir(&self.root);
        fs::remove_file(&journal).map_err(StoreError::io(&journal))
    }

    fn require_ontology(&self, id: OntologyId) -> Result<usize> {
        self.tables
            .ontologies
            .iter()
            .position(|o| o.id == id)
            .ok_or(StoreError::UnknownOntology(id))
    }

    /// Validates `rules` for ontology `id` against the rules it already has
    /// and appends them to `next` with fresh ids.
    fn append_rules(
        &self,
        next: &mut Tables,
        next_rule: &mut u64,
        id: OntologyId,
        rules: &[Rule],
    ) -> Result<Vec<StoredRule>> {
        let mut keys: BTreeSet<String> = next
            .rules
            .iter()
            .filter(|r| r.ontology == id)
            .map(|r| rule_key(&r.rule))
            .collect();
        let mut added = Vec::with_capacity(rules.len());
        for rule in rules {
            let key = rule_key(rule);
            if !keys.insert(key.clone()) {
                return Err(StoreError::DuplicateRule(key));
            }
            let stored = StoredRule {
                id: RuleId(*next_rule),
                ontology: id,
                rule: rule.clone().with_source(Some(id)),
            };
            *next_rule += 1;
            added.push(stored);
        }
        next.rules.extend(added.iter().cloned());
        Ok(added)
    }
}

fn check_integrity(tables: &Tables) -> Result<()> {
    let ids: BTreeSet<OntologyId> = tables.ontologies.iter().map(|o| o.id).collect();
    let corrupt = |file: &str, line: usize, reason: String| StoreError::CorruptStore {
        file: file.to_owned(),
        line,
        reason,
    };
    for (i, o) in tables.ontologies.iter().enumerate() {
        if o.name.is_empty() || o.address.is_empty() {
            return Err(corrupt(
                ONTOLOGIES_FILE,
                i + 2,
                "empty name or address".into(),
            ));
        }
    }
    let mut keys = BTreeSet::new();
    for (i, r) in tables.rules.iter().enumerate() {
        if !ids.contains(&r.ontology) {
            return Err(corrupt(
                RULES_FILE,
                i + 2,
                format!("ontology {} does not exist", r.ontology),
            ));
        }
        if !keys.insert((r.ontology, rule_key(&r.rule))) {
            return Err(corrupt(RULES_FILE, i + 2, "duplicate rule".into()));
        }
    }
    let mut names = BTreeSet::new();
    for (i, m) in tables.mergers.iter().enumerate() {
        let line = i + 2;
        if !valid_table_name(&m.table_name) {
            return Err(corrupt(
                MERGERS_FILE,
                line,
                format!("invalid table name {:?}", m.table_name),
            ));
        }
        if !names.insert(m.table_name.as_str()) {
            return Err(corrupt(MERGERS_FILE, line, "duplicate table name".into()));
        }
        match normalize_keywords(&m.keywords) {
            Ok(k) if k == m.keywords => {}
            _ => return Err(corrupt(MERGERS_FILE, line, "invalid keywords".into())),
        }
        let distinct: BTreeSet<_> = m.merged_ontologies.iter().collect();
        if m.merged_ontologies.len() < 2 || distinct.len() != m.merged_ontologies.len() {
            return Err(corrupt(
                MERGERS_FILE,
                line,
                "a merger needs at least two distinct ontologies".into(),
            ));
        }
        if let Some(missing) = m.merged_ontologies.iter().find(|id| !ids.contains(id)) {
            return Err(corrupt(
                MERGERS_FILE,
                line,
                format!("ontology {missing} does not exist"),
            ));
        }
    }
    Ok(())
}

impl RuleStore for Store {
    fn ontologies(&self) -> Vec<OntologyRecord> {
        self.tables.ontologies.clone()
    }

    fn ontology(&self, id: OntologyId) -> Option<OntologyRecord> {
        self.tables.ontologies.iter().find(|o| o.id == id).cloned()
    }

    fn rules(&self) -> Vec<StoredRule> {
        self.tables.rules.clone()
    }

    fn rules_of(&self, id: OntologyId) -> Vec<StoredRule> {
        self.tables
            .rules
            .iter()
            .filter(|r| r.ontology == id)
            .cloned()
            .collect()
    }

    fn mergers(&self) -> Vec<MergerRecord> {
        self.tables.mergers.clone()
    }

    fn add_ontology(
        &mut self,
        name: &str,
        address: &str,
        access_date: Timestamp,
    ) -> Result<OntologyRecord> {
        self.ingest(name, address, access_date, &[])
            .map(|(record, _)| record)
    }

    fn add_rules(&mut self, ontology: OntologyId, rules: &[Rule]) -> Result<Vec<StoredRule>> {
        self.ensure_writable()?;
        self.require_ontology(ontology)?;
        let mut next = self.tables.clone();
        let mut next_rule = self.next_rule;
        let added = self.append_rules(&mut next, &mut next_rule, ontology, rules)?;
        if added.is_empty() {
            return Ok(added);
        }
        self.commit(&next, next_rule, None)?;
        self.tables = next;
        self.next_rule = next_rule;
        Ok(added)
    }

    fn ingest(
        &mut self,
        name: &str,
        address: &str,
        access_date: Timestamp,
        rules: &[Rule],
    ) -> Result<(OntologyRecord, Vec<StoredRule>)> {
        self.ensure_writable()?;
        validate_field("name", name)?;
        validate_field("address", address)?;
        let record = OntologyRecord {
            id: OntologyId(self.next_ontology),
            name: name.to_owned(),
            address: address.to_owned(),
            access_date: truncate_to_seconds(access_date),
        };
        let mut next = self.tables.clone();
        next.ontologies.push(record.clone());
        let mut next_rule = self.next_rule;
        let added = self.append_rules(&mut next, &mut next_rule, record.id, rules)?;
        self.commit(&next, next_rule, None)?;
        self.tables = next;
        self.next_ontology += 1;
        self.next_rule = next_rule;
        Ok((record, added))
    }

    fn create_merger(
        &mut self,
        table_name: &str,
        keywords: &[String],
        ontologies: &[OntologyId],
        rules: &[Rule],
    ) -> Result<MergerRecord> {
        self.ensure_writable()?;
        if !valid_table_name(table_name) {
            return Err(StoreError::Validation(format!(
                "table name {table_name:?} must match [a-z][a-z0-9_]{{0,62}}"
            )));
        }
        if self
            .tables
            .mergers
            .iter()
            .any(|m| m.table_name == table_name)
        {
            return Err(StoreError::DuplicateTableName(table_name.to_owned()));
        }
        let keywords = normalize_keywords(keywords)?;
        let distinct: BTreeSet<_> = ontologies.iter().collect();
        if ontologies.len() < 2 || distinct.len() != ontologies.len() {
            return Err(StoreError::Validation(
                "a merger needs at least two distinct ontologies".into(),
            ));
        }
        for id in ontologies {
            self.require_ontology(*id)?;
        }
        let mut keys = BTreeSet::new();
        for rule in rules {
            let key = rule_key(rule);
            if !keys.insert(key.clone()) {
                return Err(StoreError::DuplicateRule(key));
            }
        }

        let record = MergerRecord {
            id: MergerId(self.next_merger),
            table_name: table_name.to_owned(),
            keywords,
            merged_ontologies: ontologies.to_vec(),
        };
        let rows: Vec<MergerRow> = rules
            .iter()
            .enumerate()
            .map(|(i, r)| MergerRow::from_rule(RuleId(i as u64 + 1), r))
            .collect();
        let mut next = self.tables.clone();
        next.mergers.push(record.clone());
        let file = record.file_name();
        let next_rule = self.next_rule;
        self.commit(
            &next,
            next_rule,
            Some((&file, tsv::encode_merger_table(&rows))),
        )?;
        self.tables = next;
        self.merger_tables.insert(record.table_name.clone(), rows);
        self.next_merger += 1;
        Ok(record)
    }

    fn load_merger_rules(
        &self,
        selector: &MergerSelector,
    ) -> Result<(MergerRecord, Vec<MergerRow>)> {
        let record = match selector {
            MergerSelector::Id(id) => self
                .tables
                .mergers
                .iter()
                .find(|m| m.id == *id)
                .ok_or_else(|| StoreError::NotFound(format!("merger {id}")))?,
            MergerSelector::Keyword(keyword) => {
                let matching: Vec<&MergerRecord> = self
                    .tables
                    .mergers
                    .iter()
                    .filter(|m| m.has_keyword(keyword))
                    .collect();
                match matching.as_slice() {
                    [] => {
                        return Err(StoreError::NotFound(format!(
                            "merger with keyword {keyword:?}"
                        )))
                    }
                    [one] => *one,
                    many => {
                        return Err(StoreError::AmbiguousKeyword {
                            keyword: keyword.clone(),
                            mergers: many.iter().map(|m| m.id).collect(),
                        })
                    }
                }
            }
        };
        let rows = self
            .merger_tables
            .get(&record.table_name)
            .cloned()
            .unwrap_or_default();
        Ok((record.clone(), rows))
    }

    fn refresh_ontology(
        &mut self,
        ontology: OntologyId,
        rules: &[Rule],
        access_date: Timestamp,
    ) -> Result<RefreshReport> {
        self.ensure_writable()?;
        let index = self.require_ontology(ontology)?;
        let mut keys = BTreeSet::new();
        for rule in rules {
            let key = rule_key(rule);
            if !keys.insert(key.clone()) {
                return Err(StoreError::DuplicateRule(key));
            }
        }

        let new_ids: BTreeSet<_> = rules.iter().map(identity).collect();
        let old_ids: BTreeSet<_> = self
            .tables
            .rules
            .iter()
            .filter(|r| r.ontology == ontology)
            .map(|r| identity(&r.rule))
            .collect();
        let removed = old_ids.difference(&new_ids).count();
        let kept: Vec<&Rule> = rules
            .iter()
            .filter(|r| !old_ids.contains(&identity(r)))
            .collect();

        let mut next = self.tables.clone();
        next.rules
            .retain(|r| r.ontology != ontology || new_ids.contains(&identity(&r.rule)));
        let mut next_rule = self.next_rule;
        let added: Vec<Rule> = kept.into_iter().cloned().collect();
        self.append_rules(&mut next, &mut next_rule, ontology, &added)?;

        let previous = next.ontologies[index].access_date;
        let date = truncate_to_seconds(access_date).max(previous + Duration::seconds(1));
        next.ontologies[index].access_date = date;

        self.commit(&next, next_rule, None)?;
        self.tables = next;
        self.next_rule = next_rule;
        let changed = removed + added.len();
        let stale_mergers = if changed == 0 {
            Vec::new()
        } else {
            self.tables
                .mergers
                .iter()
                .filter(|m| m.merged_ontologies.contains(&ontology))
                .cloned()
                .collect()
        };
        Ok(RefreshReport {
            changed,
            access_date: date,
            stale_mergers,
        })
    }
}
