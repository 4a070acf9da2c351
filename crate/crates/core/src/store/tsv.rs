//! Tab-separated encoding of the store tables.
//!
//! Every file is UTF-8 with `\n` line endings; the first line is the exact
//! header and each following line is one row.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use chrono::{DateTime, NaiveDateTime, Utc};

use super::{MergerId, MergerRecord, MergerRow, OntologyId, OntologyRecord, RuleId, StoredRule};
use crate::rulegen::{condition_text, format_real, Atom, Membership, Pattern, Rule};

pub(crate) const ONTOLOGIES_HEADER: &str = "id\tName\tAddress\tAccess_date";
pub(crate) const RULES_HEADER: &str = "id\tOntology\tPattern\tCondition\tMFC\tResult\tMFR";
pub(crate) const MERGERS_HEADER: &str = "id\tTable name\tKey words\tMerged ontologies";
pub(crate) const MERGER_TABLE_HEADER: &str = "id\tCondition\tMFC\tResult\tMFR";

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// A decoding failure at a 1-based line.
#[derive(Debug)]
pub(crate) struct Corrupt {
    pub line: usize,
    pub reason: String,
}

fn corrupt(line: usize, reason: impl Into<String>) -> Corrupt {
    Corrupt {
        line,
        reason: reason.into(),
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    let parsed = NaiveDateTime::parse_from_str(text, TIMESTAMP_FORMAT)
        .ok()?
        .and_utc();
    (format_timestamp(&parsed) == text).then_some(parsed)
}

fn parse_real(text: &str) -> Option<Membership> {
    if !text.contains('.') || text.contains(['e', 'E']) {
        return None;
    }
    Membership::new(text.parse().ok()?).ok()
}

fn parse_id(text: &str) -> Option<u64> {
    if text.starts_with('+') || (text.len() > 1 && text.starts_with('0')) {
        return None;
    }
    text.parse().ok().filter(|&id| id > 0)
}

pub(crate) fn parse_condition(text: &str) -> Option<BTreeSet<Atom>> {
    let atoms: Vec<Atom> = text
        .split(" and ")
        .map(Atom::new)
        .collect::<Result<_, _>>()
        .ok()?;
    let set: BTreeSet<Atom> = atoms.iter().cloned().collect();
    (set.len() == atoms.len()).then_some(set)
}

/// Splits `text` into rows of exactly as many fields as `header` has,
/// numbering lines from 1 (the header).
fn rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>, Corrupt> {
    let Some(body) = text.strip_suffix('\n') else {
        return Err(corrupt(1, "file does not end with a newline"));
    };
    let mut lines = body.split('\n');
    if lines.next() != Some(header) {
        return Err(corrupt(1, format!("expected header {header:?}")));
    }
    let width = header.split('\t').count();
    let mut out = Vec::new();
    let mut last_id = 0;
    for (i, line) in lines.enumerate() {
        let number = i + 2;
        if line.contains('\r') {
            return Err(corrupt(number, "carriage return in row"));
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != width {
            return Err(corrupt(
                number,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        let id = parse_id(fields[0]).ok_or_else(|| corrupt(number, "invalid id"))?;
        if id <= last_id {
            return Err(corrupt(number, "ids are not strictly increasing"));
        }
        last_id = id;
        out.push((number, fields));
    }
    Ok(out)
}

pub(crate) fn encode_ontologies(records: &[OntologyRecord]) -> String {
    let mut out = format!("{ONTOLOGIES_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.id,
            r.name,
            r.address,
            format_timestamp(&r.access_date)
        );
    }
    out
}

pub(crate) fn decode_ontologies(text: &str) -> Result<Vec<OntologyRecord>, Corrupt> {
    rows(text, ONTOLOGIES_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            if f[1].is_empty() || f[2].is_empty() {
                return Err(corrupt(line, "empty name or address"));
            }
            Ok(OntologyRecord {
                id: OntologyId(parse_id(f[0]).expect("checked by rows")),
                name: f[1].to_owned(),
                address: f[2].to_owned(),
                access_date: parse_timestamp(f[3])
                    .ok_or_else(|| corrupt(line, format!("invalid timestamp {:?}", f[3])))?,
            })
        })
        .collect()
}

pub(crate) fn encode_rules(rules: &[StoredRule]) -> String {
    use crate::rulegen::Production;
    let mut out = format!("{RULES_HEADER}\n");
    for r in rules {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.id,
            r.ontology,
            r.rule.pattern(),
            condition_text(r.rule.condition()),
            format_real(r.rule.mfc().value()),
            r.rule.result(),
            format_real(r.rule.mfr().value()),
        );
    }
    out
}

fn decode_rule(
    line: usize,
    pattern: Pattern,
    condition: &str,
    mfc: &str,
    result: &str,
    mfr: &str,
) -> Result<Rule, Corrupt> {
    let condition = parse_condition(condition).ok_or_else(|| corrupt(line, "invalid condition"))?;
    let mfc = parse_real(mfc).ok_or_else(|| corrupt(line, format!("invalid MFC {mfc:?}")))?;
    let mfr = parse_real(mfr).ok_or_else(|| corrupt(line, format!("invalid MFR {mfr:?}")))?;
    let result = Atom::new(result).map_err(|e| corrupt(line, e.to_string()))?;
    Rule::new(pattern, condition, result, mfc, mfr).map_err(|e| corrupt(line, e.to_string()))
}

pub(crate) fn decode_rules(text: &str) -> Result<Vec<StoredRule>, Corrupt> {
    rows(text, RULES_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let ontology =
                OntologyId(parse_id(f[1]).ok_or_else(|| corrupt(line, "invalid ontology id"))?);
            let pattern: Pattern = f[2].parse().map_err(|e: String| corrupt(line, e))?;
            let rule = decode_rule(line, pattern, f[3], f[4], f[5], f[6])?;
            Ok(StoredRule {
                id: RuleId(parse_id(f[0]).expect("checked by rows")),
                ontology,
                rule: rule.with_source(Some(ontology)),
            })
        })
        .collect()
}

pub(crate) fn encode_mergers(mergers: &[MergerRecord]) -> String {
    let mut out = format!("{MERGERS_HEADER}\n");
    for m in mergers {
        let ids: Vec<String> = m
            .merged_ontologies
            .iter()
            .map(|id| id.to_string())
            .collect();
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            m.id,
            m.table_name,
            m.keywords.join(","),
            ids.join(",")
        );
    }
    out
}

pub(crate) fn decode_mergers(text: &str) -> Result<Vec<MergerRecord>, Corrupt> {
    rows(text, MERGERS_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            let keywords: Vec<String> = f[2].split(',').map(str::to_owned).collect();
            let merged_ontologies = f[3]
                .split(',')
                .map(|s| parse_id(s).map(OntologyId))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| corrupt(line, "invalid merged ontology list"))?;
            Ok(MergerRecord {
                id: MergerId(parse_id(f[0]).expect("checked by rows")),
                table_name: f[1].to_owned(),
                keywords,
                merged_ontologies,
            })
        })
        .collect()
}

pub(crate) fn encode_merger_table(rows: &[MergerRow]) -> String {
    let mut out = format!("{MERGER_TABLE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.id,
            condition_text(&r.condition),
            format_real(r.mfc.value()),
            r.result,
            format_real(r.mfr.value()),
        );
    }
    out
}

pub(crate) fn decode_merger_table(text: &str) -> Result<Vec<MergerRow>, Corrupt> {
    rows(text, MERGER_TABLE_HEADER)?
        .into_iter()
        .map(|(line, f)| {
            // The pattern is not part of this table; P1 only serves decoding.
            let rule = decode_rule(line, Pattern::P1, f[1], f[2], f[3], f[4])?;
            Ok(MergerRow::from_rule(
                RuleId(parse_id(f[0]).expect("checked by rows")),
                &rule,
            ))
        })
        .collect()
}
