//! Parser for the Turtle subset that ontology ingestion accepts.
//!
//! Supported: `@prefix`, `a`, predicate lists (`;`), object lists (`,`),
//! prefixed names, `<absolute-iri>`, double-quoted strings with an optional
//! `@lang`, and `#` comments. Blank nodes, collections, numeric and boolean
//! literals, datatyped literals, long strings, and rdf/rdfs/owl terms outside
//! the supported vocabulary are rejected.

use std::iter::Peekable;
use std::str::Chars;

use thiserror::Error;

use super::{
    is_language_tag, vocab, Iri, Literal, OntologyGraph, Term, Triple, OWL_NS, RDFS_NS, RDF_NS,
    XSD_NS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("undefined prefix {prefix:?} on line {line}")]
    UndefinedPrefix { prefix: String, line: usize },
    #[error("unsupported construct on line {line}: {construct}")]
    Unsupported { construct: String, line: usize },
}

const BUILTIN_PREFIXES: [(&str, &str); 4] = [
    ("owl", OWL_NS),
    ("rdf", RDF_NS),
    ("rdfs", RDFS_NS),
    ("xsd", XSD_NS),
];

/// Parses `source` into a graph. The `rdf`, `rdfs`, `owl` and `xsd` prefixes
/// are predeclared and may be redefined.
pub fn parse_turtle(source: &str) -> Result<OntologyGraph, ParseError> {
    let tokens = Lexer::new(source).tokenize()?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        graph: OntologyGraph::new(),
    };
    for (prefix, ns) in BUILTIN_PREFIXES {
        parser
            .graph
            .set_prefix(prefix.to_owned(), Iri::new(ns).expect("builtin namespace"));
    }
    parser.document()?;
    Ok(parser.graph)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    IriRef(String),
    Prefixed {
        prefix: String,
        local: String,
    },
    A,
    Str {
        lexical: String,
        lang: Option<String>,
    },
    PrefixDirective,
    Dot,
    Semicolon,
    Comma,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: Peekable<Chars<'a>>,
    line: usize,
    column: usize,
}

fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':')
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str) -> Self {
        Lexer {
            chars: source.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next()
    }

    fn syntax(&self, line: usize, column: usize, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }

    fn unsupported(&self, line: usize, construct: &str) -> ParseError {
        ParseError::Unsupported {
            construct: construct.to_owned(),
            line,
        }
    }

    fn tokenize(mut self) -> Result<Vec<Token>, ParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let (line, column) = (self.line, self.column);
            let Some(c) = self.peek() else {
                out.push(Token {
                    tok: Tok::Eof,
                    line,
                    column,
                });
                return Ok(out);
            };
            let tok = match c {
                '<' => self.iri_ref()?,
                '"' => self.string()?,
                '\'' => return Err(self.unsupported(line, "single-quoted string literal")),
                '@' => self.directive()?,
                '_' if self.peek2() == Some(':') => {
                    return Err(self.unsupported(line, "blank node"))
                }
                '[' => return Err(self.unsupported(line, "blank node")),
                '(' => return Err(self.unsupported(line, "collection")),
                '.' if self.peek2().is_some_and(|d| d.is_ascii_digit()) => {
                    return Err(self.unsupported(line, "numeric literal"))
                }
                '.' => {
                    self.bump();
                    Tok::Dot
                }
                ';' => {
                    self.bump();
                    Tok::Semicolon
                }
                ',' => {
                    self.bump();
                    Tok::Comma
                }
                '+' | '-' => return Err(self.unsupported(line, "numeric literal")),
                c if c.is_ascii_digit() => return Err(self.unsupported(line, "numeric literal")),
                c if is_name_char(c) => self.word(line, column)?,
                '^' => return Err(self.unsupported(line, "datatyped literal")),
                other => {
                    return Err(self.syntax(
                        line,
                        column,
                        format!("unexpected character {other:?}"),
                    ))
                }
            };
            out.push(Token { tok, line, column });
        }
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn iri_ref(&mut self) -> Result<Tok, ParseError> {
        let (line, column) = (self.line, self.column);
        self.bump();
        let mut text = String::new();
        loop {
            match self.bump() {
                Some('>') => break,
                None => return Err(self.syntax(line, column, "unterminated IRI")),
                Some('\\') => return Err(self.unsupported(line, "escape sequence in IRI")),
                Some(c)
                    if c.is_whitespace()
                        || matches!(c, '<' | '"' | '{' | '}' | '|' | '^' | '`') =>
                {
                    return Err(self.syntax(
                        line,
                        column,
                        format!("invalid character {c:?} in IRI"),
                    ))
                }
                Some(c) => text.push(c),
            }
        }
        Ok(Tok::IriRef(text))
    }

    fn string(&mut self) -> Result<Tok, ParseError> {
        let (line, column) = (self.line, self.column);
        self.bump();
        if self.peek() == Some('"') && self.peek2() == Some('"') {
            return Err(self.unsupported(line, "multi-line string literal"));
        }
        let mut lexical = String::new();
        loop {
            match self.bump() {
                Some('"') => break,
                None | Some('\n') | Some('\r') => {
                    return Err(self.syntax(line, column, "unterminated string literal"))
                }
                Some('\\') => lexical.push(self.escape(line, column)?),
                Some(c) => lexical.push(c),
            }
        }
        let lang = match self.peek() {
            Some('@') => {
                self.bump();
                let mut tag = String::new();
                while let Some(c) = self.peek() {
                    if c.is_ascii_alphanumeric() || c == '-' {
                        tag.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                let tag = tag.to_ascii_lowercase();
                if !is_language_tag(&tag) {
                    return Err(self.syntax(line, column, format!("invalid language tag {tag:?}")));
                }
                Some(tag)
            }
            Some('^') => return Err(self.unsupported(line, "datatyped literal")),
            _ => None,
        };
        Ok(Tok::Str { lexical, lang })
    }

    fn escape(&mut self, line: usize, column: usize) -> Result<char, ParseError> {
        let c = match self.bump() {
            Some('t') => '\t',
            Some('b') => '\u{8}',
            Some('n') => '\n',
            Some('r') => '\r',
            Some('f') => '\u{c}',
            Some('"') => '"',
            Some('\'') => '\'',
            Some('\\') => '\\',
            Some(u @ ('u' | 'U')) => {
                let width = if u == 'u' { 4 } else { 8 };
                let mut code = 0u32;
                for _ in 0..width {
                    let digit = self
                        .bump()
                        .and_then(|d| d.to_digit(16))
                        .ok_or_else(|| self.syntax(line, column, "bad unicode escape"))?;
                    code = code * 16 + digit;
                }
                char::from_u32(code)
                    .ok_or_else(|| self.syntax(line, column, "escape is not a scalar value"))?
            }
            _ => return Err(self.syntax(line, column, "invalid escape sequence")),
        };
        Ok(c)
    }

    fn directive(&mut self) -> Result<Tok, ParseError> {
        let (line, column) = (self.line, self.column);
        self.bump();
        let mut name = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_alphabetic() {
                name.push(c);
                self.bump();
            } else {
                break;
            }
        }
        match name.as_str() {
            "prefix" => Ok(Tok::PrefixDirective),
            "base" => Err(self.unsupported(line, "@base directive")),
            "" => Err(self.syntax(line, column, "expected directive after '@'")),
            other => Err(self.syntax(line, column, format!("unknown directive @{other}"))),
        }
    }

    fn word(&mut self, line: usize, column: usize) -> Result<Tok, ParseError> {
        let mut word = String::new();
        while let Some(c) = self.peek() {
            if c == '\\' || c == '%' {
                return Err(self.unsupported(line, "escaped local name"));
            }
            if !is_name_char(c) {
                break;
            }
            // A trailing '.' terminates the statement instead.
            if c == '.' && !self.peek2().is_some_and(is_name_char) {
                break;
            }
            word.push(c);
            self.bump();
        }
        if word == "a" {
            return Ok(Tok::A);
        }
        if let Some((prefix, local)) = word.split_once(':') {
            if !prefix.is_empty() && !valid_prefix(prefix) {
                return Err(self.syntax(line, column, format!("invalid prefix {prefix:?}")));
            }
            if local.starts_with(['-', '.']) {
                return Err(self.syntax(line, column, format!("invalid local name {local:?}")));
            }
            return Ok(Tok::Prefixed {
                prefix: prefix.to_owned(),
                local: local.to_owned(),
            });
        }
        match word.as_str() {
            "true" | "false" => Err(self.unsupported(line, "boolean literal")),
            w if w.eq_ignore_ascii_case("prefix") || w.eq_ignore_ascii_case("base") => {
                Err(self.unsupported(line, "SPARQL-style directive"))
            }
            _ => Err(self.syntax(line, column, format!("unexpected token {word:?}"))),
        }
    }
}

fn valid_prefix(prefix: &str) -> bool {
    let mut chars = prefix.chars();
    chars.next().is_some_and(char::is_alphabetic)
        && !prefix.ends_with('.')
        && chars.all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    graph: OntologyGraph,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn error_at(token: &Token, message: impl Into<String>) -> ParseError {
        ParseError::Syntax {
            line: token.line,
            column: token.column,
            message: message.into(),
        }
    }

    fn expect_dot(&mut self) -> Result<(), ParseError> {
        let tok = self.next();
        match tok.tok {
            Tok::Dot => Ok(()),
            _ => Err(Self::error_at(&tok, "expected '.'")),
        }
    }

    fn document(&mut self) -> Result<(), ParseError> {
        loop {
            match self.peek().tok {
                Tok::Eof => return Ok(()),
                Tok::PrefixDirective => self.prefix_directive()?,
                _ => self.triples()?,
            }
        }
    }

    fn prefix_directive(&mut self) -> Result<(), ParseError> {
        self.next();
        let tok = self.next();
        let prefix = match tok.tok {
            Tok::Prefixed { prefix, local } if local.is_empty() => prefix,
            _ => return Err(Self::error_at(&tok, "expected prefix name ending in ':'")),
        };
        let tok = self.next();
        let namespace = match &tok.tok {
            Tok::IriRef(text) => absolute(text, &tok)?,
            _ => return Err(Self::error_at(&tok, "expected <namespace IRI>")),
        };
        self.expect_dot()?;
        self.graph.set_prefix(prefix, namespace);
        Ok(())
    }

    fn triples(&mut self) -> Result<(), ParseError> {
        let tok = self.next();
        let subject = match &tok.tok {
            Tok::IriRef(_) | Tok::Prefixed { .. } => self.resolve(&tok)?,
            Tok::Str { .. } => return Err(Self::error_at(&tok, "literal in subject position")),
            _ => return Err(Self::error_at(&tok, "expected subject")),
        };
        loop {
            let verb = self.next();
            let predicate = match &verb.tok {
                Tok::A => Iri::new(vocab::RDF_TYPE).expect("vocabulary IRI"),
                Tok::IriRef(_) | Tok::Prefixed { .. } => self.resolve(&verb)?,
                _ => return Err(Self::error_at(&verb, "expected predicate")),
            };
            loop {
                let tok = self.next();
                let object = match &tok.tok {
                    Tok::IriRef(_) | Tok::Prefixed { .. } => Term::Iri(self.resolve(&tok)?),
                    Tok::Str { lexical, lang } => Term::Literal(match lang {
                        Some(tag) => Literal::with_language(lexical.clone(), tag.clone())
                            .map_err(|e| Self::error_at(&tok, e.to_string()))?,
                        None => Literal::plain(lexical.clone()),
                    }),
                    _ => return Err(Self::error_at(&tok, "expected object")),
                };
                self.graph
                    .insert(Triple::new(subject.clone(), predicate.clone(), object));
                if self.peek().tok == Tok::Comma {
                    self.next();
                } else {
                    break;
                }
            }
            if self.peek().tok != Tok::Semicolon {
                break;
            }
            while self.peek().tok == Tok::Semicolon {
                self.next();
            }
            if self.peek().tok == Tok::Dot {
                break;
            }
        }
        self.expect_dot()
    }

    fn resolve(&self, tok: &Token) -> Result<Iri, ParseError> {
        let (iri, written) = match &tok.tok {
            Tok::IriRef(text) => (absolute(text, tok)?, format!("<{text}>")),
            Tok::Prefixed { prefix, local } => {
                let ns = self.graph.prefixes().get(prefix).ok_or_else(|| {
                    ParseError::UndefinedPrefix {
                        prefix: prefix.clone(),
                        line: tok.line,
                    }
                })?;
                let iri = Iri::new(format!("{ns}{local}"))
                    .map_err(|e| Self::error_at(tok, e.to_string()))?;
                (iri, format!("{prefix}:{local}"))
            }
            _ => unreachable!("resolve called on a non-IRI token"),
        };
        let reserved = [RDF_NS, RDFS_NS, OWL_NS]
            .iter()
            .any(|ns| iri.as_str().starts_with(ns));
        if reserved && !vocab::SUPPORTED.contains(&iri.as_str()) {
            return Err(ParseError::Unsupported {
                construct: written,
                line: tok.line,
            });
        }
        Ok(iri)
    }
}

fn absolute(text: &str, tok: &Token) -> Result<Iri, ParseError> {
    Iri::new(text).map_err(|e| Parser::error_at(tok, e.to_string()))
}
