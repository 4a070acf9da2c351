//! The `rulemerge` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 parse or validation error,
//! 3 store or I/O error, 4 not found or ambiguous.

pub mod fetch;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::infer::{forward_chain, match_mergers, FactError, FactSet};
use crate::merge::{functional_merge, verify_equivalence_all, MergeError};
use crate::ontology::{parse_turtle, MatchMode, OntologyGraph, ParseError};
use crate::rulegen::{
    condition_text, format_real, generate_rules, GenerateError, Production, Rule,
};
use crate::store::{
    format_timestamp, MergerId, MergerSelector, OntologyId, RuleStore, Store, StoreError,
};
pub use fetch::{fetch, FetchError, FetchResult};

pub const DEFAULT_STORE: &str = "./rulemerge-store";

#[derive(Debug, Parser)]
#[command(
    name = "rulemerge",
    version,
    about = "Merge ontologies through the rules generated from them"
)]
pub struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "RULEMERGE_STORE", default_value = DEFAULT_STORE)]
    pub store: PathBuf,

    /// How concepts are identified across ontologies: `localname` or `iri`.
    #[arg(long, global = true, default_value = "localname")]
    pub mode: MatchMode,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fetch an ontology, generate its rules and store both.
    Ingest {
        /// Local path, file:// URL or http(s):// URL.
        address: String,
        /// Name to record; defaults to the file name without extension.
        #[arg(long)]
        name: Option<String>,
    },
    /// Print the Ontologies table.
    ListOntologies,
    /// Print stored rules, or the rules of one merger table.
    ListRules {
        #[arg(long, conflicts_with = "merger")]
        ontology: Option<u64>,
        /// Merger id.
        #[arg(long)]
        merger: Option<u64>,
    },
    /// Consolidate the rules of several ontologies into a new merger.
    Merge {
        #[arg(long, value_delimiter = ',', required = true)]
        ontologies: Vec<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        keywords: Vec<String>,
        #[arg(long)]
        table_name: String,
    },
    /// Run facts through the rules of the merger selected by keyword.
    Query {
        #[arg(long, value_delimiter = ',')]
        keywords: Vec<String>,
        /// Merger id; overrides keyword matching.
        #[arg(long)]
        merger: Option<u64>,
        /// `atom` or `atom:degree`, comma separated.
        #[arg(long, value_delimiter = ',')]
        facts: Vec<String>,
        /// Use the per-ontology rules instead of the consolidated table.
        #[arg(long)]
        no_consolidate: bool,
    },
    /// Re-fetch an ontology and replace its rules.
    Refresh { id: u64 },
    /// Check that consolidating per-ontology rules matches generating rules
    /// from the merged ontology.
    Verify {
        #[arg(required = true, num_args = 2..)]
        addresses: Vec<String>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Fetch(#[from] FetchError),
    #[error("{address}: {source}")]
    Parse { address: String, source: ParseError },
    #[error("{address}: {source}")]
    Generate {
        address: String,
        source: GenerateError,
    },
    #[error(transparent)]
    Facts(#[from] FactError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error("rule sets differ")]
    NotEquivalent,
    #[error("{0}")]
    NotFound(String),
    #[error("output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Parse { .. }
            | CliError::Generate { .. }
            | CliError::Facts(_)
            | CliError::NotEquivalent => 2,
            CliError::Fetch(_) | CliError::Output(_) => 3,
            CliError::NotFound(_) => 4,
            CliError::Store(e) => store_exit_code(e),
            CliError::Merge(MergeError::Store(e)) => store_exit_code(e),
            CliError::Merge(_) => 2,
        }
    }
}

fn store_exit_code(e: &StoreError) -> i32 {
    match e {
        StoreError::Validation(_) => 2,
        StoreError::UnknownOntology(_)
        | StoreError::NotFound(_)
        | StoreError::AmbiguousKeyword { .. } => 4,
        _ => 3,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
            } else {
                let _ = write!(out, "{}", e.render());
            }
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "rulemerge: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest { address, name } => cmd_ingest(cli, address, name.as_deref(), out),
        Command::ListOntologies => cmd_list_ontologies(cli, out),
        Command::ListRules { ontology, merger } => cmd_list_rules(cli, *ontology, *merger, out),
        Command::Merge {
            ontologies,
            keywords,
            table_name,
        } => cmd_merge(cli, ontologies, keywords, table_name, out),
        Command::Query {
            keywords,
            merger,
            facts,
            no_consolidate,
        } => cmd_query(cli, keywords, *merger, facts, *no_consolidate, out),
        Command::Refresh { id } => cmd_refresh(cli, *id, out),
        Command::Verify { addresses } => cmd_verify(addresses, cli.mode, out),
    }
}

fn load(
    address: &str,
    mode: MatchMode,
) -> Result<(FetchResult, OntologyGraph, Vec<Rule>), CliError> {
    let fetched = fetch(address)?;
    let graph = parse_turtle(&fetched.body).map_err(|source| CliError::Parse {
        address: address.to_owned(),
        source,
    })?;
    let rules = generate_rules(&graph, mode).map_err(|source| CliError::Generate {
        address: address.to_owned(),
        source,
    })?;
    Ok((fetched, graph, rules))
}

fn default_name(address: &str) -> String {
    let last = address
        .trim_end_matches('/')
        .rsplit(['/', '\\'])
        .next()
        .unwrap_or("");
    let stem = last.split(['?', '#']).next().unwrap_or("");
    let stem = match stem.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() => stem,
        _ => stem,
    };
    let clean: String = stem
        .chars()
        .filter(|c| !matches!(c, '\t' | '\n' | '\r'))
        .collect();
    if clean.is_empty() {
        "ontology".to_owned()
    } else {
        clean
    }
}

fn cmd_ingest(
    cli: &Cli,
    address: &str,
    name: Option<&str>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let (fetched, _, rules) = load(address, cli.mode)?;
    let name = name.map_or_else(|| default_name(address), str::to_owned);
    let mut store = Store::open(&cli.store, true)?;
    let (record, stored) = store.ingest(
        &name,
        &fetched.resolved_address,
        fetched.access_date,
        &rules,
    )?;
    writeln!(out, "ontology {}: {} rule(s)", record.id, stored.len())?;
    Ok(())
}

fn cmd_list_ontologies(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let store = Store::open_read_only(&cli.store)?;
    for o in store.ontologies() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            o.id,
            o.name,
            o.address,
            format_timestamp(&o.access_date)
        )?;
    }
    Ok(())
}

fn cmd_list_rules(
    cli: &Cli,
    ontology: Option<u64>,
    merger: Option<u64>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let store = Store::open_read_only(&cli.store)?;
    if let Some(id) = merger {
        let (_, rows) = store.load_merger_rules(&MergerSelector::Id(MergerId(id)))?;
        for r in rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.id,
                condition_text(&r.condition),
                r.mfc,
                r.result,
                r.mfr
            )?;
        }
        return Ok(());
    }
    let rules = match ontology {
        Some(id) => {
            let id = OntologyId(id);
            if store.ontology(id).is_none() {
                return Err(StoreError::UnknownOntology(id).into());
            }
            store.rules_of(id)
        }
        None => store.rules(),
    };
    for r in rules {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.id,
            r.ontology,
            r.rule.pattern(),
            condition_text(r.rule.condition()),
            r.rule.mfc(),
            r.rule.result(),
            r.rule.mfr()
        )?;
    }
    Ok(())
}

fn cmd_merge(
    cli: &Cli,
    ontologies: &[u64],
    keywords: &[String],
    table_name: &str,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let ids: Vec<OntologyId> = ontologies.iter().map(|&id| OntologyId(id)).collect();
    let distinct: BTreeSet<_> = ids.iter().collect();
    if ids.len() < 2 || distinct.len() != ids.len() {
        return Err(CliError::Usage(
            "--ontologies needs at least two distinct ids".into(),
        ));
    }
    let mut store = Store::open(&cli.store, false)?;
    let record = functional_merge(&mut store, &ids, keywords, table_name)?;
    let (_, rows) = store.load_merger_rules(&MergerSelector::Id(record.id))?;
    writeln!(out, "merger {}: {} rule(s)", record.id, rows.len())?;
    Ok(())
}

fn cmd_query(
    cli: &Cli,
    keywords: &[String],
    merger: Option<u64>,
    facts: &[String],
    no_consolidate: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let facts = FactSet::parse(
        facts
            .iter()
            .map(String::as_str)
            .filter(|s| !s.trim().is_empty()),
    )?;
    let store = Store::open_read_only(&cli.store)?;
    let selector = match merger {
        Some(id) => MergerSelector::Id(MergerId(id)),
        None => {
            if keywords.is_empty() {
                return Err(CliError::Usage("query needs --keywords or --merger".into()));
            }
            match match_mergers(&store, keywords).as_slice() {
                [] => {
                    return Err(CliError::NotFound(format!(
                        "no merger matches keywords {}",
                        keywords.join(",")
                    )))
                }
                [one] => MergerSelector::Id(one.id),
                many => {
                    return Err(StoreError::AmbiguousKeyword {
                        keyword: keywords.join(","),
                        mergers: many.iter().map(|m| m.id).collect(),
                    }
                    .into())
                }
            }
        }
    };
    let (record, rows) = store.load_merger_rules(&selector)?;
    let conclusions = if no_consolidate {
        let raw: Vec<_> = record
            .merged_ontologies
            .iter()
            .flat_map(|id| store.rules_of(*id))
            .collect();
        forward_chain(raw.iter().map(|s| (s.id, &s.rule)), &facts)
    } else {
        forward_chain(rows.iter().map(|r| (r.id, r)), &facts)
    };
    for c in conclusions {
        writeln!(out, "{}\t{}", c.atom, format_real(c.degree))?;
    }
    Ok(())
}

fn cmd_refresh(cli: &Cli, id: u64, out: &mut dyn Write) -> Result<(), CliError> {
    let id = OntologyId(id);
    let mut store = Store::open(&cli.store, false)?;
    let record = store.ontology(id).ok_or(StoreError::UnknownOntology(id))?;
    let (fetched, _, rules) = load(&record.address, cli.mode)?;
    let report = store.refresh_ontology(id, &rules, fetched.access_date)?;
    writeln!(out, "{} changed", report.changed)?;
    for m in report.stale_mergers {
        writeln!(out, "stale\t{}", m.table_name)?;
    }
    Ok(())
}

fn cmd_verify(addresses: &[String], mode: MatchMode, out: &mut dyn Write) -> Result<(), CliError> {
    let mut graphs = Vec::with_capacity(addresses.len());
    for address in addresses {
        let fetched = fetch(address)?;
        let graph = parse_turtle(&fetched.body).map_err(|source| CliError::Parse {
            address: address.clone(),
            source,
        })?;
        graphs.push(graph);
    }
    let refs: Vec<&OntologyGraph> = graphs.iter().collect();
    let report = verify_equivalence_all(&refs, mode)?;
    if report.equivalent {
        writeln!(out, "EQUIVALENT")?;
        Ok(())
    } else {
        for (key, side) in &report.mismatches {
            writeln!(out, "{side}\t{key}")?;
        }
        Err(CliError::NotEquivalent)
    }
}
