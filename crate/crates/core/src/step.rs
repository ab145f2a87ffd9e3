//! STEP Physical File (ISO 10303-21) lexer and parser.
//!
//! The parser is schema-agnostic: every `#id=TYPE(...)` record is kept in the
//! resulting [`EntityGraph`], whether or not later stages understand `TYPE`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("unterminated string starting at byte {offset}")]
    UnterminatedString { offset: usize },
    #[error("illegal character at byte {offset}")]
    IllegalCharacter { offset: usize },
    #[error("file has no DATA section")]
    MissingDataSection,
    #[error("entity #{0} defined more than once")]
    DuplicateEntityId(u64),
    #[error("syntax error at byte {offset}: expected {expected}")]
    SyntaxError { offset: usize, expected: String },
    #[error("reference to undefined entity #{0}")]
    DanglingReference(u64),
}

pub type Result<T> = std::result::Result<T, StepError>;

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword,
    EntityRef,
    Integer,
    Real,
    String,
    Enum,
    ListOpen,
    ListClose,
    Comma,
    Semicolon,
    Dollar,
    Star,
    Eq,
}

/// A lexical token. `lexeme` is the exact source slice, so tokens plus the
/// skipped whitespace and comments reproduce the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub lexeme: &'a str,
    pub offset: usize,
}

impl Token<'_> {
    /// Decoded content of a string token (quotes removed, escapes applied).
    pub fn string_value(&self) -> Option<String> {
        if self.kind != TokenKind::String {
            return None;
        }
        Some(decode_string(&self.lexeme[1..self.lexeme.len() - 1]))
    }
}

fn is_keyword_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'!'
}

fn is_keyword_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'-'
}

/// Split STEP source into tokens. Whitespace and `/* */` comments are skipped.
pub fn tokenize(text: &str) -> Result<Vec<Token<'_>>> {
    let bytes = text.as_bytes();
    let len = bytes.len();
    let mut pos = 0;
    let mut tokens = Vec::new();

    while pos < len {
        let b = bytes[pos];
        if b.is_ascii_whitespace() {
            pos += 1;
            continue;
        }
        if b == b'/' && bytes.get(pos + 1) == Some(&b'*') {
            match text[pos + 2..].find("*/") {
                Some(end) => pos += 2 + end + 2,
                None => return Err(StepError::IllegalCharacter { offset: pos }),
            }
            continue;
        }

        let start = pos;
        let kind = match b {
            b'(' => {
                pos += 1;
                TokenKind::ListOpen
            }
            b')' => {
                pos += 1;
                TokenKind::ListClose
            }
            b',' => {
                pos += 1;
                TokenKind::Comma
            }
            b';' => {
                pos += 1;
                TokenKind::Semicolon
            }
            b'=' => {
                pos += 1;
                TokenKind::Eq
            }
            b'$' => {
                pos += 1;
                TokenKind::Dollar
            }
            b'*' => {
                pos += 1;
                TokenKind::Star
            }
            b'#' => {
                pos += 1;
                let digits = pos;
                while pos < len && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
                if digits == pos || text[digits..pos].bytes().all(|d| d == b'0') {
                    return Err(StepError::IllegalCharacter { offset: start });
                }
                TokenKind::EntityRef
            }
            b'\'' => {
                pos += 1;
                loop {
                    match bytes.get(pos) {
                        None => return Err(StepError::UnterminatedString { offset: start }),
                        Some(b'\'') if bytes.get(pos + 1) == Some(&b'\'') => pos += 2,
                        Some(b'\'') => {
                            pos += 1;
                            break;
                        }
                        Some(_) => pos += 1,
                    }
                }
                TokenKind::String
            }
            b'.' => {
                pos += 1;
                let body = pos;
                while pos < len && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                    pos += 1;
                }
                if body == pos || bytes.get(pos) != Some(&b'.') {
                    return Err(StepError::IllegalCharacter { offset: start });
                }
                pos += 1;
                TokenKind::Enum
            }
            b'+' | b'-' | b'0'..=b'9' => {
                if b == b'+' || b == b'-' {
                    pos += 1;
                }
                let digits = pos;
                while pos < len && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
                if digits == pos {
                    return Err(StepError::IllegalCharacter { offset: start });
                }
                if bytes.get(pos) == Some(&b'.') {
                    pos += 1;
                    while pos < len && bytes[pos].is_ascii_digit() {
                        pos += 1;
                    }
                    if matches!(bytes.get(pos), Some(b'e' | b'E')) {
                        let mut p = pos + 1;
                        if matches!(bytes.get(p), Some(b'+' | b'-')) {
                            p += 1;
                        }
                        let exp = p;
                        while p < len && bytes[p].is_ascii_digit() {
                            p += 1;
                        }
                        if exp == p {
                            return Err(StepError::IllegalCharacter { offset: pos });
                        }
                        pos = p;
                    }
                    TokenKind::Real
                } else {
                    TokenKind::Integer
                }
            }
            c if is_keyword_start(c) => {
                pos += 1;
                while pos < len && is_keyword_continue(bytes[pos]) {
                    pos += 1;
                }
                TokenKind::Keyword
            }
            _ => return Err(StepError::IllegalCharacter { offset: start }),
        };
        tokens.push(Token {
            kind,
            lexeme: &text[start..pos],
            offset: start,
        });
    }
    Ok(tokens)
}

/// Apply ISO 10303-21 string escapes: `''`, `\\`, `\X\hh`, `\X2\...\X0\`,
/// `\X4\...\X0\`. Unrecognized escapes are kept verbatim.
fn decode_string(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(ch) = rest.chars().next() {
        if rest.starts_with("''") {
            out.push('\'');
            rest = &rest[2..];
        } else if rest.starts_with("\\\\") {
            out.push('\\');
            rest = &rest[2..];
        } else if rest.starts_with("\\X\\") && rest.len() >= 5 {
            match rest.get(3..5).and_then(|h| u8::from_str_radix(h, 16).ok()) {
                Some(code) => {
                    out.push(char::from(code));
                    rest = &rest[5..];
                }
                None => {
                    out.push('\\');
                    rest = &rest[1..];
                }
            }
        } else if let Some((width, tail)) = rest
            .strip_prefix("\\X2\\")
            .map(|t| (4, t))
            .or_else(|| rest.strip_prefix("\\X4\\").map(|t| (8, t)))
        {
            match tail.find("\\X0\\") {
                Some(end) if end % width == 0 => {
                    let hex = &tail[..end];
                    let mut units = Vec::new();
                    let mut ok = true;
                    for chunk in hex.as_bytes().chunks(width) {
                        match std::str::from_utf8(chunk)
                            .ok()
                            .and_then(|s| u32::from_str_radix(s, 16).ok())
                        {
                            Some(u) => units.push(u),
                            None => ok = false,
                        }
                    }
                    if ok {
                        if width == 4 {
                            let u16s: Vec<u16> = units.iter().map(|&u| u as u16).collect();
                            out.push_str(&String::from_utf16_lossy(&u16s));
                        } else {
                            out.extend(units.into_iter().filter_map(char::from_u32));
                        }
                        rest = &tail[end + 4..];
                    } else {
                        out.push('\\');
                        rest = &rest[1..];
                    }
                }
                _ => {
                    out.push('\\');
                    rest = &rest[1..];
                }
            }
        } else {
            out.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    out
}

fn encode_string(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('\'');
    for ch in text.chars() {
        match ch {
            '\'' => out.push_str("''"),
            '\\' => out.push_str("\\\\"),
            ' '..='~' => out.push(ch),
            _ => {
                let mut buf = [0u16; 2];
                out.push_str("\\X2\\");
                for unit in ch.encode_utf16(&mut buf) {
                    let _ = write!(out, "{unit:04X}");
                }
                out.push_str("\\X0\\");
            }
        }
    }
    out.push('\'');
    out
}

// ---------------------------------------------------------------------------
// Values and entities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum StepValue {
    Integer(i64),
    Real(f64),
    Text(String),
    Enum(String),
    Ref(u64),
    /// `$`
    Unset,
    /// `*`
    Inherited,
    /// e.g. `IFCLENGTHMEASURE(0.3048)`
    Typed(String, Box<StepValue>),
    List(Vec<StepValue>),
}

impl StepValue {
    pub fn as_ref_id(&self) -> Option<u64> {
        match self {
            StepValue::Ref(id) => Some(*id),
            _ => None,
        }
    }

    /// Numeric value; integers widen, typed wrappers are unwrapped.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            StepValue::Real(v) => Some(*v),
            StepValue::Integer(v) => Some(*v as f64),
            StepValue::Typed(_, inner) => inner.as_f64(),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            StepValue::Text(s) => Some(s),
            StepValue::Typed(_, inner) => inner.as_text(),
            _ => None,
        }
    }

    pub fn as_enum(&self) -> Option<&str> {
        match self {
            StepValue::Enum(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[StepValue]> {
        match self {
            StepValue::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn is_unset(&self) -> bool {
        matches!(self, StepValue::Unset)
    }

    fn write_canonical(&self, out: &mut String) {
        match self {
            StepValue::Integer(v) => {
                let _ = write!(out, "{v}");
            }
            StepValue::Real(v) => out.push_str(&format_real(*v)),
            StepValue::Text(s) => out.push_str(&encode_string(s)),
            StepValue::Enum(s) => {
                let _ = write!(out, ".{s}.");
            }
            StepValue::Ref(id) => {
                let _ = write!(out, "#{id}");
            }
            StepValue::Unset => out.push('$'),
            StepValue::Inherited => out.push('*'),
            StepValue::Typed(name, inner) => {
                out.push_str(name);
                out.push('(');
                inner.write_canonical(out);
                out.push(')');
            }
            StepValue::List(items) => write_list(items, out),
        }
    }
}

fn write_list(items: &[StepValue], out: &mut String) {
    out.push('(');
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        item.write_canonical(out);
    }
    out.push(')');
}

/// Shortest round-tripping STEP real: always has a `.`, exponent as `E`.
fn format_real(v: f64) -> String {
    let s = format!("{v:?}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let mantissa = if mantissa.contains('.') {
                mantissa.to_string()
            } else {
                format!("{mantissa}.")
            };
            format!("{mantissa}E{exp}")
        }
        None => s,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepEntity {
    pub id: u64,
    pub type_name: String,
    pub args: Vec<StepValue>,
}

impl StepEntity {
    pub fn arg(&self, index: usize) -> Option<&StepValue> {
        self.args.get(index)
    }

    pub fn is(&self, type_name: &str) -> bool {
        self.type_name.eq_ignore_ascii_case(type_name)
    }
}

/// Contents of the HEADER section, kept as raw parameter lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepHeader {
    pub file_description: Vec<StepValue>,
    pub file_name: Vec<StepValue>,
    pub file_schema: Vec<StepValue>,
}

impl StepHeader {
    /// Schema identifiers listed in FILE_SCHEMA, e.g. `["IFC4"]`.
    pub fn schemas(&self) -> Vec<&str> {
        self.file_schema
            .first()
            .and_then(StepValue::as_list)
            .map(|l| l.iter().filter_map(StepValue::as_text).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityGraph {
    pub header: StepHeader,
    entities: BTreeMap<u64, StepEntity>,
    type_index: BTreeMap<String, Vec<u64>>,
}

impl EntityGraph {
    pub fn from_entities(header: StepHeader, entities: impl IntoIterator<Item = StepEntity>) -> Result<Self> {
        let mut graph = EntityGraph {
            header,
            ..Default::default()
        };
        for entity in entities {
            graph.insert(entity)?;
        }
        Ok(graph)
    }

    fn insert(&mut self, entity: StepEntity) -> Result<()> {
        if self.entities.contains_key(&entity.id) {
            return Err(StepError::DuplicateEntityId(entity.id));
        }
        let bucket = self.type_index.entry(entity.type_name.clone()).or_default();
        // ids arrive in file order, which is usually but not always ascending
        match bucket.binary_search(&entity.id) {
            Ok(_) => unreachable!("id uniqueness checked above"),
            Err(at) => bucket.insert(at, entity.id),
        }
        self.entities.insert(entity.id, entity);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&StepEntity> {
        self.entities.get(&id)
    }

    pub fn resolve_ref(&self, id: u64) -> Result<&StepEntity> {
        self.entities.get(&id).ok_or(StepError::DanglingReference(id))
    }

    /// Ids of all entities of `type_name` (case-insensitive), ascending.
    pub fn entities_of_type(&self, type_name: &str) -> &[u64] {
        self.type_index
            .get(&type_name.to_ascii_uppercase())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn entities(&self) -> impl Iterator<Item = &StepEntity> {
        self.entities.values()
    }

    /// Type name → instance count, sorted by type name.
    pub fn census(&self) -> Vec<(&str, usize)> {
        self.type_index
            .iter()
            .map(|(name, ids)| (name.as_str(), ids.len()))
            .collect()
    }

    /// Every reference in the graph that points at a missing entity, as
    /// (referencing id, missing id) pairs.
    pub fn dangling_references(&self) -> Vec<(u64, u64)> {
        fn walk(v: &StepValue, from: u64, graph: &EntityGraph, out: &mut Vec<(u64, u64)>) {
            match v {
                StepValue::Ref(id) if !graph.entities.contains_key(id) => out.push((from, *id)),
                StepValue::Typed(_, inner) => walk(inner, from, graph, out),
                StepValue::List(items) => items.iter().for_each(|i| walk(i, from, graph, out)),
                _ => {}
            }
        }
        let mut out = Vec::new();
        for e in self.entities.values() {
            e.args.iter().for_each(|a| walk(a, e.id, self, &mut out));
        }
        out
    }

    /// Canonical serialization: sorted ids, one record per line, no
    /// optional whitespace.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::from("ISO-10303-21;\nHEADER;\n");
        for (name, args) in [
            ("FILE_DESCRIPTION", &self.header.file_description),
            ("FILE_NAME", &self.header.file_name),
            ("FILE_SCHEMA", &self.header.file_schema),
        ] {
            out.push_str(name);
            write_list(args, &mut out);
            out.push_str(";\n");
        }
        out.push_str("ENDSEC;\nDATA;\n");
        for e in self.entities.values() {
            let _ = write!(out, "#{}={}", e.id, e.type_name);
            write_list(&e.args, &mut out);
            out.push_str(";\n");
        }
        out.push_str("ENDSEC;\nEND-ISO-10303-21;\n");
        out
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    end_offset: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    fn offset(&self) -> usize {
        self.peek().map_or(self.end_offset, |t| t.offset)
    }

    fn error<T>(&self, expected: &str) -> Result<T> {
        Err(StepError::SyntaxError {
            offset: self.offset(),
            expected: expected.to_string(),
        })
    }

    fn next(&mut self) -> Option<Token<'a>> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<Token<'a>> {
        match self.peek() {
            Some(t) if t.kind == kind => Ok(self.next().unwrap()),
            _ => self.error(what),
        }
    }

    fn at_keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Some(t) if t.kind == TokenKind::Keyword && t.lexeme.eq_ignore_ascii_case(word))
    }

    fn expect_keyword(&mut self, word: &str) -> Result<()> {
        if self.at_keyword(word) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(word)
        }
    }

    fn parse_list(&mut self) -> Result<Vec<StepValue>> {
        self.expect(TokenKind::ListOpen, "'('")?;
        let mut items = Vec::new();
        if self.peek().map(|t| t.kind) == Some(TokenKind::ListClose) {
            self.pos += 1;
            return Ok(items);
        }
        loop {
            items.push(self.parse_value()?);
            match self.next() {
                Some(t) if t.kind == TokenKind::Comma => continue,
                Some(t) if t.kind == TokenKind::ListClose => break,
                _ => {
                    self.pos -= 1;
                    return self.error("',' or ')'");
                }
            }
        }
        Ok(items)
    }

    fn parse_value(&mut self) -> Result<StepValue> {
        let Some(tok) = self.peek().cloned() else {
            return self.error("value");
        };
        let value = match tok.kind {
            TokenKind::ListOpen => return Ok(StepValue::List(self.parse_list()?)),
            TokenKind::Keyword => {
                self.pos += 1;
                let mut args = self.parse_list()?;
                if args.len() != 1 {
                    return Err(StepError::SyntaxError {
                        offset: tok.offset,
                        expected: "exactly one typed parameter".into(),
                    });
                }
                return Ok(StepValue::Typed(
                    tok.lexeme.to_ascii_uppercase(),
                    Box::new(args.pop().unwrap()),
                ));
            }
            TokenKind::EntityRef => StepValue::Ref(tok.lexeme[1..].parse().map_err(|_| StepError::SyntaxError {
                offset: tok.offset,
                expected: "entity id in range".into(),
            })?),
            TokenKind::Integer => StepValue::Integer(tok.lexeme.parse().map_err(|_| StepError::SyntaxError {
                offset: tok.offset,
                expected: "integer in range".into(),
            })?),
            TokenKind::Real => StepValue::Real(parse_real(tok.lexeme).ok_or_else(|| StepError::SyntaxError {
                offset: tok.offset,
                expected: "real number".into(),
            })?),
            TokenKind::String => StepValue::Text(tok.string_value().unwrap()),
            TokenKind::Enum => StepValue::Enum(tok.lexeme[1..tok.lexeme.len() - 1].to_ascii_uppercase()),
            TokenKind::Dollar => StepValue::Unset,
            TokenKind::Star => StepValue::Inherited,
            _ => return self.error("value"),
        };
        self.pos += 1;
        Ok(value)
    }

    fn parse_header(&mut self) -> Result<StepHeader> {
        self.expect_keyword("HEADER")?;
        self.expect(TokenKind::Semicolon, "';'")?;
        let mut header = StepHeader::default();
        while !self.at_keyword("ENDSEC") {
            let Some(tok) = self.peek().cloned() else {
                return self.error("ENDSEC");
            };
            if tok.kind != TokenKind::Keyword {
                return self.error("header entity");
            }
            self.pos += 1;
            let args = self.parse_list()?;
            self.expect(TokenKind::Semicolon, "';'")?;
            match tok.lexeme.to_ascii_uppercase().as_str() {
                "FILE_DESCRIPTION" => header.file_description = args,
                "FILE_NAME" => header.file_name = args,
                "FILE_SCHEMA" => header.file_schema = args,
                _ => {}
            }
        }
        self.expect_keyword("ENDSEC")?;
        self.expect(TokenKind::Semicolon, "';'")?;
        Ok(header)
    }

    fn parse_record(&mut self) -> Result<StepEntity> {
        let id_tok = self.expect(TokenKind::EntityRef, "entity instance '#id'")?;
        let id: u64 = id_tok.lexeme[1..].parse().map_err(|_| StepError::SyntaxError {
            offset: id_tok.offset,
            expected: "entity id in range".into(),
        })?;
        self.expect(TokenKind::Eq, "'='")?;
        let type_tok = self.expect(TokenKind::Keyword, "entity type name")?;
        let args = self.parse_list()?;
        self.expect(TokenKind::Semicolon, "';'")?;
        Ok(StepEntity {
            id,
            type_name: type_tok.lexeme.to_ascii_uppercase(),
            args,
        })
    }
}

fn parse_real(lexeme: &str) -> Option<f64> {
    // "1.E5" -> "1.0E5" for the std parser
    if let Some(idx) = lexeme.find(['e', 'E']) {
        let (mantissa, exp) = lexeme.split_at(idx);
        let mantissa = if mantissa.ends_with('.') {
            format!("{mantissa}0")
        } else {
            mantissa.to_string()
        };
        format!("{mantissa}{exp}").parse().ok()
    } else {
        lexeme.parse().ok()
    }
}

/// Parse a STEP Physical File into an [`EntityGraph`].
pub fn parse_spf(text: &str) -> Result<EntityGraph> {
    let mut p = Parser {
        tokens: tokenize(text)?,
        pos: 0,
        end_offset: text.len(),
    };
    p.expect_keyword("ISO-10303-21")?;
    p.expect(TokenKind::Semicolon, "';'")?;
    let header = p.parse_header()?;

    let mut graph = EntityGraph {
        header,
        ..Default::default()
    };
    let mut saw_data = false;
    while p.at_keyword("DATA") {
        saw_data = true;
        p.pos += 1;
        if p.peek().map(|t| t.kind) == Some(TokenKind::ListOpen) {
            p.parse_list()?;
        }
        p.expect(TokenKind::Semicolon, "';'")?;
        while !p.at_keyword("ENDSEC") {
            if p.peek().is_none() {
                return p.error("ENDSEC");
            }
            let entity = p.parse_record()?;
            graph.insert(entity)?;
        }
        p.expect_keyword("ENDSEC")?;
        p.expect(TokenKind::Semicolon, "';'")?;
    }
    if !saw_data {
        return Err(StepError::MissingDataSection);
    }
    p.expect_keyword("END-ISO-10303-21")?;
    p.expect(TokenKind::Semicolon, "';'")?;
    if p.peek().is_some() {
        return p.error("end of file");
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wrap(data: &str) -> String {
        format!(
            "ISO-10303-21;\nHEADER;\nFILE_DESCRIPTION(('ViewDefinition'),'2;1');\n\
             FILE_NAME('t.ifc','2026-01-01T00:00:00',(''),(''),'','','');\n\
             FILE_SCHEMA(('IFC4'));\nENDSEC;\nDATA;\n{data}ENDSEC;\nEND-ISO-10303-21;\n"
        )
    }

    #[test]
    fn tokenizes_minimal_entity_line() {
        use TokenKind::*;
        let toks = tokenize("#12=IFCCARTESIANPOINT((0.,0.,0.));").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                EntityRef, Eq, Keyword, ListOpen, ListOpen, Real, Comma, Real, Comma, Real, ListClose, ListClose,
                Semicolon
            ]
        );
        assert_eq!(toks[0].lexeme, "#12");
        assert_eq!(toks[2].lexeme, "IFCCARTESIANPOINT");
        assert_eq!(toks[5].lexeme, "0.");
    }

    #[test]
    fn doubled_quote_is_one_quote() {
        let toks = tokenize("'it''s'").unwrap();
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].string_value().unwrap(), "it's");
    }

    #[test]
    fn dollar_parses_to_unset() {
        let toks = tokenize("$").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Dollar);
        let g = parse_spf(&wrap("#1=IFCWALL($,*);\n")).unwrap();
        assert_eq!(g.get(1).unwrap().args, vec![StepValue::Unset, StepValue::Inherited]);
    }

    #[test]
    fn comments_are_skipped_and_bytes_accounted() {
        let src = "/* a */ #1 = X ( 'a' ) ; /* b */";
        let toks = tokenize(src).unwrap();
        let covered: usize = toks.iter().map(|t| t.lexeme.len()).sum();
        let skipped = src.len() - covered;
        assert_eq!(skipped, "/* a */".len() + "/* b */".len() + 8);
        for t in &toks {
            assert_eq!(&src[t.offset..t.offset + t.lexeme.len()], t.lexeme);
        }
    }

    #[test]
    fn tokenizer_errors() {
        assert_eq!(
            tokenize("#1=A('abc);"),
            Err(StepError::UnterminatedString { offset: 5 })
        );
        assert_eq!(tokenize("#1=A(?);"), Err(StepError::IllegalCharacter { offset: 5 }));
        assert!(matches!(tokenize("#0=A();"), Err(StepError::IllegalCharacter { .. })));
    }

    #[test]
    fn real_forms() {
        let g = parse_spf(&wrap("#1=A(1.,1.0E-2,-3.5e2,2.E3,7);\n")).unwrap();
        assert_eq!(
            g.get(1).unwrap().args,
            vec![
                StepValue::Real(1.0),
                StepValue::Real(0.01),
                StepValue::Real(-350.0),
                StepValue::Real(2000.0),
                StepValue::Integer(7)
            ]
        );
    }

    #[test]
    fn unicode_escapes() {
        assert_eq!(decode_string("CLL\\X2\\00C9\\X0\\"), "CLLÉ");
        assert_eq!(decode_string("\\X\\E9t\\X\\E9"), "été");
        assert_eq!(decode_string("a\\\\b"), "a\\b");
        assert_eq!(encode_string("É'\\"), "'\\X2\\00C9\\X0\\''\\\\'");
    }

    #[test]
    fn empty_data_section() {
        let g = parse_spf(&wrap("")).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.header.schemas(), vec!["IFC4"]);
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = parse_spf(&wrap("#5=IFCWALL('a');\n#5=IFCWALL('b');\n")).unwrap_err();
        assert_eq!(err, StepError::DuplicateEntityId(5));
    }

    #[test]
    fn missing_data_section() {
        let src = "ISO-10303-21;\nHEADER;\nFILE_SCHEMA(('IFC4'));\nENDSEC;\nEND-ISO-10303-21;\n";
        assert_eq!(parse_spf(src), Err(StepError::MissingDataSection));
    }

    #[test]
    fn syntax_error_reports_offset() {
        let src = wrap("#1=A(1 2);\n");
        match parse_spf(&src) {
            Err(StepError::SyntaxError { offset, expected }) => {
                assert_eq!(&src[offset..offset + 1], "2");
                assert_eq!(expected, "',' or ')'");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resolve_and_dangling() {
        let g = parse_spf(&wrap("#7=A(#12);\n#12=B(#99);\n")).unwrap();
        let seven = g.resolve_ref(7).unwrap();
        let next = seven.arg(0).unwrap().as_ref_id().unwrap();
        assert_eq!(g.resolve_ref(next).unwrap().type_name, "B");
        assert_eq!(g.resolve_ref(99), Err(StepError::DanglingReference(99)));
        assert_eq!(g.dangling_references(), vec![(12, 99)]);
    }

    #[test]
    fn type_index_sorted_and_case_insensitive() {
        let g = parse_spf(&wrap("#9=IFCSPACE();\n#3=IfcSpace();\n#4=IFCWALL();\n")).unwrap();
        assert_eq!(g.entities_of_type("IFCSPACE"), &[3, 9]);
        assert_eq!(g.entities_of_type("IfcSpace"), &[3, 9]);
        assert!(g.entities_of_type("IFCPIPE").is_empty());
    }

    #[test]
    fn typed_values_and_nesting() {
        let g = parse_spf(&wrap(
            "#1=IFCMEASUREWITHUNIT(IFCLENGTHMEASURE(0.3048),#2);\n#2=X(((1,2),()),.T.);\n",
        ))
        .unwrap();
        let m = g.get(1).unwrap();
        assert_eq!(m.arg(0).unwrap().as_f64(), Some(0.3048));
        assert_eq!(
            g.get(2).unwrap().args,
            vec![
                StepValue::List(vec![
                    StepValue::List(vec![StepValue::Integer(1), StepValue::Integer(2)]),
                    StepValue::List(vec![])
                ]),
                StepValue::Enum("T".into())
            ]
        );
    }

    #[test]
    fn canonical_reals_round_trip() {
        for v in [0.0, 1.0, -2.5, 1e-7, 6.02e23, 0.1 + 0.2, f64::MIN_POSITIVE] {
            let s = format_real(v);
            assert!(s.contains('.'), "{s}");
            assert_eq!(parse_real(&s), Some(v), "{s}");
        }
    }

    #[test]
    fn unknown_entities_do_not_disturb_others() {
        let base = "#1=IFCWALL('a',#2);\n#2=IFCLOCALPLACEMENT($,$);\n";
        let extra = format!("{base}#3=IFCFANCYNEWTHING(1,(2,3),'x');\n");
        let g1 = parse_spf(&wrap(base)).unwrap();
        let g2 = parse_spf(&wrap(&extra)).unwrap();
        for e in g1.entities() {
            assert_eq!(Some(e), g2.get(e.id));
        }
        assert_eq!(g2.entities_of_type("IFCFANCYNEWTHING"), &[3]);
    }
}
