//! Triple store holding the BIRS taxonomy and classified building instances.
//!
//! Reasoning is limited to the reflexive-transitive closure of
//! `rdfs:subClassOf` applied to `rdf:type` lookups. Disjointness between
//! sibling partitions is available as a validation pass.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use ordered_float::OrderedFloat;
use thiserror::Error;

use crate::gis::SiteModel;
use crate::model::{BoundaryKind, BuildingModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OntologyError {
    #[error("subclass edge {0} rdfs:subClassOf {1} is part of the built-in taxonomy")]
    TaxonomyMutation(Iri, Iri),
    #[error("{0} rdfs:subClassOf {1} would create a cycle")]
    CycleIntroduced(Iri, Iri),
    #[error("unknown class {0}")]
    UnknownClass(Iri),
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("bad IRI `{0}`")]
    BadIri(String),
    #[error("{0} requires an IRI object")]
    ExpectedIri(Predicate),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{instance} is typed under disjoint classes {a} and {b}")]
    DisjointViolation { instance: Iri, a: Iri, b: Iri },
}

pub type Result<T> = std::result::Result<T, OntologyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Namespace {
    Sumo,
    Cora,
    Corax,
    Mdr,
    Birs,
    Ifc,
    Inst,
}

impl Namespace {
    pub fn prefix(self) -> &'static str {
        match self {
            Namespace::Sumo => "sumo",
            Namespace::Cora => "cora",
            Namespace::Corax => "corax",
            Namespace::Mdr => "mdr",
            Namespace::Birs => "birs",
            Namespace::Ifc => "ifc",
            Namespace::Inst => "inst",
        }
    }
}

impl FromStr for Namespace {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Ok(match s {
            "sumo" => Namespace::Sumo,
            "cora" => Namespace::Cora,
            "corax" => Namespace::Corax,
            "mdr" => Namespace::Mdr,
            "birs" => Namespace::Birs,
            "ifc" => Namespace::Ifc,
            "inst" => Namespace::Inst,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Iri {
    pub ns: Namespace,
    pub local: String,
}

impl Iri {
    pub fn new(ns: Namespace, local: impl Into<String>) -> Result<Self> {
        let local = local.into();
        if local.is_empty() {
            return Err(OntologyError::BadIri(format!("{}:", ns.prefix())));
        }
        Ok(Iri { ns, local })
    }

    pub fn inst(global_id: &str) -> Iri {
        Iri::new(Namespace::Inst, global_id).expect("GlobalId is non-empty")
    }

    fn known(ns: Namespace, local: &str) -> Iri {
        Iri {
            ns,
            local: local.to_string(),
        }
    }
}

impl fmt::Display for Iri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ns.prefix(), encode_local(&self.local))
    }
}

impl FromStr for Iri {
    type Err = OntologyError;
    fn from_str(s: &str) -> Result<Iri> {
        let (prefix, local) = s.split_once(':').ok_or_else(|| OntologyError::BadIri(s.into()))?;
        let ns = prefix.parse().map_err(|_| OntologyError::BadIri(s.into()))?;
        Iri::new(ns, decode_local(local).ok_or_else(|| OntologyError::BadIri(s.into()))?)
    }
}

/// Percent-encode bytes that would break the line format.
fn encode_local(local: &str) -> String {
    let mut out = String::with_capacity(local.len());
    for b in local.bytes() {
        if b.is_ascii_graphic() && !matches!(b, b'%' | b'"' | b'<' | b'>' | b'\\') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

fn decode_local(s: &str) -> Option<String> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// The closed predicate vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Predicate {
    Type,
    SubClassOf,
    HasMaterial,
    SensorVisible,
    BoundedBy,
    HasCentroid,
    LocatedOnStorey,
    ConnectsTo,
    LongName,
    HasFunction,
    HasWidth,
    HasHeight,
}

impl Predicate {
    pub const ALL: [Predicate; 12] = [
        Predicate::Type,
        Predicate::SubClassOf,
        Predicate::HasMaterial,
        Predicate::SensorVisible,
        Predicate::BoundedBy,
        Predicate::HasCentroid,
        Predicate::LocatedOnStorey,
        Predicate::ConnectsTo,
        Predicate::LongName,
        Predicate::HasFunction,
        Predicate::HasWidth,
        Predicate::HasHeight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::Type => "rdf:type",
            Predicate::SubClassOf => "rdfs:subClassOf",
            Predicate::HasMaterial => "birs:hasMaterial",
            Predicate::SensorVisible => "birs:sensorVisible",
            Predicate::BoundedBy => "birs:boundedBy",
            Predicate::HasCentroid => "birs:hasCentroid",
            Predicate::LocatedOnStorey => "birs:locatedOnStorey",
            Predicate::ConnectsTo => "birs:connectsTo",
            Predicate::LongName => "birs:longName",
            Predicate::HasFunction => "birs:hasFunction",
            Predicate::HasWidth => "birs:hasWidth",
            Predicate::HasHeight => "birs:hasHeight",
        }
    }

    fn wants_iri(self) -> bool {
        matches!(
            self,
            Predicate::Type | Predicate::SubClassOf | Predicate::BoundedBy | Predicate::ConnectsTo
        )
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Predicate {
    type Err = OntologyError;
    fn from_str(s: &str) -> Result<Predicate> {
        // short forms are accepted in queries
        let canonical = match s {
            "type" | "a" => "rdf:type",
            "subClassOf" => "rdfs:subClassOf",
            other => other,
        };
        Predicate::ALL
            .into_iter()
            .find(|p| p.name() == canonical || p.name().strip_prefix("birs:") == Some(canonical))
            .ok_or_else(|| OntologyError::UnknownPredicate(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Text(String),
    Number(OrderedFloat<f64>),
    Bool(bool),
    Point(OrderedFloat<f64>, OrderedFloat<f64>),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Text(s) => {
                f.write_str("\"")?;
                for ch in s.chars() {
                    match ch {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Literal::Number(v) => write!(f, "{}", fmt_number(v.0)),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Point(x, y) => write!(f, "POINT({} {})", fmt_number(x.0), fmt_number(y.0)),
        }
    }
}

/// Numbers always carry a decimal point so they never read back as text.
fn fmt_number(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'i', 'N']) {
        s
    } else {
        format!("{s}.0")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Iri(Iri),
    Literal(Literal),
}

impl Term {
    pub fn text(s: impl Into<String>) -> Term {
        Term::Literal(Literal::Text(s.into()))
    }
    pub fn number(v: f64) -> Term {
        Term::Literal(Literal::Number(OrderedFloat(v)))
    }
    pub fn boolean(b: bool) -> Term {
        Term::Literal(Literal::Bool(b))
    }
    pub fn point(x: f64, y: f64) -> Term {
        Term::Literal(Literal::Point(OrderedFloat(x), OrderedFloat(y)))
    }
    pub fn as_iri(&self) -> Option<&Iri> {
        match self {
            Term::Iri(i) => Some(i),
            Term::Literal(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(i) => write!(f, "{i}"),
            Term::Literal(l) => write!(f, "{l}"),
        }
    }
}

impl From<Iri> for Term {
    fn from(i: Iri) -> Term {
        Term::Iri(i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: Iri,
    pub predicate: Predicate,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Iri, predicate: Predicate, object: impl Into<Term>) -> Triple {
        Triple {
            subject,
            predicate,
            object: object.into(),
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

// ---------------------------------------------------------------------------
// Taxonomy
// ---------------------------------------------------------------------------

use Namespace::{Birs, Cora, Corax, Ifc, Mdr, Sumo};

type ClassRef = (Namespace, &'static str);
type Edge = (ClassRef, ClassRef);

/// Upper ontology, CORA/CORAX, MDR and the BIRS median level.
pub const CORE_TAXONOMY: &[Edge] = &[
    ((Sumo, "Physical"), (Sumo, "Entity")),
    ((Sumo, "Abstract"), (Sumo, "Entity")),
    ((Sumo, "Object"), (Sumo, "Physical")),
    ((Sumo, "Process"), (Sumo, "Physical")),
    ((Sumo, "Quantity"), (Sumo, "Abstract")),
    ((Sumo, "Attribute"), (Sumo, "Abstract")),
    ((Sumo, "SetOrClass"), (Sumo, "Abstract")),
    ((Sumo, "Relation"), (Sumo, "Abstract")),
    ((Sumo, "Proposition"), (Sumo, "Abstract")),
    ((Sumo, "Agent"), (Sumo, "Object")),
    ((Cora, "Robot"), (Sumo, "Agent")),
    ((Corax, "Design"), (Sumo, "Proposition")),
    ((Corax, "PhysicalEnvironment"), (Sumo, "Object")),
    ((Cora, "Region"), (Corax, "PhysicalEnvironment")),
    ((Cora, "ContentBearingObject"), (Sumo, "Object")),
    ((Mdr, "Map"), (Cora, "ContentBearingObject")),
    ((Mdr, "MetricMap"), (Mdr, "Map")),
    ((Mdr, "TopologicalMap"), (Mdr, "Map")),
    ((Mdr, "ContinuousMetricMap"), (Mdr, "MetricMap")),
    ((Mdr, "DiscreteMetricMap"), (Mdr, "MetricMap")),
    ((Mdr, "OccupancyGridMap"), (Mdr, "DiscreteMetricMap")),
    ((Birs, "SpatialStructureElement"), (Corax, "PhysicalEnvironment")),
    ((Birs, "Topography"), (Corax, "PhysicalEnvironment")),
    ((Birs, "Landmark"), (Cora, "Region")),
    ((Birs, "Space"), (Cora, "Region")),
    ((Birs, "Uncertainty"), (Cora, "Region")),
    ((Birs, "BuildingElement"), (Birs, "Landmark")),
];

/// IFC landmark classes under BuildingElement.
pub const IFC_TAXONOMY: &[Edge] = &[
    ((Ifc, "IfcWall"), (Birs, "BuildingElement")),
    ((Ifc, "IfcCurtainWall"), (Birs, "BuildingElement")),
    ((Ifc, "IfcColumn"), (Birs, "BuildingElement")),
    ((Ifc, "IfcDoor"), (Birs, "BuildingElement")),
    ((Ifc, "IfcRailing"), (Birs, "BuildingElement")),
    ((Ifc, "IfcStair"), (Birs, "BuildingElement")),
];

/// GIS obstacle classes under Topography.
pub const GIS_TAXONOMY: &[Edge] = &[
    ((Birs, "ExistingBuilding"), (Birs, "Topography")),
    ((Birs, "WaterSurface"), (Birs, "Topography")),
    ((Birs, "Vegetation"), (Birs, "Topography")),
];

/// Sibling classes that may not share an instance.
pub const DISJOINT: &[(ClassRef, ClassRef)] = &[
    ((Sumo, "Object"), (Sumo, "Process")),
    ((Sumo, "Physical"), (Sumo, "Abstract")),
    ((Mdr, "ContinuousMetricMap"), (Mdr, "DiscreteMetricMap")),
    ((Birs, "Landmark"), (Birs, "Space")),
    ((Birs, "Landmark"), (Birs, "Uncertainty")),
    ((Birs, "Space"), (Birs, "Uncertainty")),
];

pub fn class(ns: Namespace, local: &str) -> Iri {
    Iri::known(ns, local)
}

pub fn builtin_edges() -> impl Iterator<Item = (Iri, Iri)> {
    CORE_TAXONOMY
        .iter()
        .chain(IFC_TAXONOMY)
        .chain(GIS_TAXONOMY)
        .map(|&((a_ns, a), (b_ns, b))| (Iri::known(a_ns, a), Iri::known(b_ns, b)))
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TripleStore {
    triples: BTreeSet<Triple>,
    by_subject: BTreeMap<Iri, BTreeSet<Triple>>,
    by_predicate: BTreeMap<Predicate, BTreeSet<Triple>>,
    by_object: BTreeMap<Term, BTreeSet<Triple>>,
    builtin: BTreeSet<(Iri, Iri)>,
}

/// The store pre-loaded with the built-in taxonomy.
pub fn builtin_taxonomy() -> TripleStore {
    TripleStore::new()
}

impl Default for TripleStore {
    fn default() -> Self {
        TripleStore::new()
    }
}

impl TripleStore {
    pub fn new() -> TripleStore {
        let mut store = TripleStore {
            triples: BTreeSet::new(),
            by_subject: BTreeMap::new(),
            by_predicate: BTreeMap::new(),
            by_object: BTreeMap::new(),
            builtin: BTreeSet::new(),
        };
        for (sub, sup) in builtin_edges() {
            store.builtin.insert((sub.clone(), sup.clone()));
            store.insert(Triple::new(sub, Predicate::SubClassOf, sup));
        }
        store
    }

    fn insert(&mut self, t: Triple) -> bool {
        if !self.triples.insert(t.clone()) {
            return false;
        }
        self.by_subject.entry(t.subject.clone()).or_default().insert(t.clone());
        self.by_predicate.entry(t.predicate).or_default().insert(t.clone());
        self.by_object.entry(t.object.clone()).or_default().insert(t);
        true
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    pub fn with_predicate(&self, p: Predicate) -> impl Iterator<Item = &Triple> {
        self.by_predicate.get(&p).into_iter().flatten()
    }

    pub fn about(&self, subject: &Iri) -> impl Iterator<Item = &Triple> {
        self.by_subject.get(subject).into_iter().flatten()
    }

    pub fn subclass_edges(&self) -> impl Iterator<Item = (&Iri, &Iri)> {
        self.with_predicate(Predicate::SubClassOf)
            .filter_map(|t| Some((&t.subject, t.object.as_iri()?)))
    }

    fn direct_supers(&self, class: &Iri) -> impl Iterator<Item = &Iri> {
        self.about(class)
            .filter(|t| t.predicate == Predicate::SubClassOf)
            .filter_map(|t| t.object.as_iri())
    }

    fn reaches(&self, from: &Iri, to: &Iri) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(c) = stack.pop() {
            if c == to {
                return true;
            }
            if seen.insert(c) {
                stack.extend(self.direct_supers(c));
            }
        }
        false
    }

    /// Add a triple. Re-asserting an existing triple is a no-op.
    pub fn assert_triple(&mut self, t: Triple) -> Result<()> {
        if t.predicate.wants_iri() && t.object.as_iri().is_none() {
            return Err(OntologyError::ExpectedIri(t.predicate));
        }
        if t.predicate == Predicate::SubClassOf {
            let sup = t.object.as_iri().unwrap();
            if self.contains(&t) {
                return Ok(());
            }
            if self.reaches(sup, &t.subject) {
                return Err(OntologyError::CycleIntroduced(t.subject.clone(), sup.clone()));
            }
            if self.is_builtin_class(&t.subject) && self.is_builtin_class(sup) {
                return Err(OntologyError::TaxonomyMutation(t.subject.clone(), sup.clone()));
            }
        }
        self.insert(t);
        Ok(())
    }

    fn is_builtin_class(&self, c: &Iri) -> bool {
        self.builtin.iter().any(|(a, b)| a == c || b == c)
    }

    /// Every IRI that appears in a subclass edge.
    pub fn classes(&self) -> BTreeSet<&Iri> {
        self.subclass_edges().flat_map(|(a, b)| [a, b]).collect()
    }

    pub fn is_class(&self, c: &Iri) -> bool {
        self.by_subject
            .get(c)
            .is_some_and(|ts| ts.iter().any(|t| t.predicate == Predicate::SubClassOf))
            || self.by_object.get(&Term::Iri(c.clone())).is_some_and(|ts| {
                ts.iter()
                    .any(|t| matches!(t.predicate, Predicate::SubClassOf | Predicate::Type))
            })
    }

    fn require_class(&self, c: &Iri) -> Result<()> {
        if self.is_class(c) {
            Ok(())
        } else {
            Err(OntologyError::UnknownClass(c.clone()))
        }
    }

    /// Reflexive-transitive subclass test.
    pub fn is_subclass_of(&self, a: &Iri, b: &Iri) -> Result<bool> {
        self.require_class(a)?;
        self.require_class(b)?;
        Ok(self.reaches(a, b))
    }

    /// `class` and every class below it.
    pub fn subclasses(&self, class: &Iri) -> BTreeSet<Iri> {
        let mut out = BTreeSet::from([class.clone()]);
        let mut stack = vec![class.clone()];
        while let Some(c) = stack.pop() {
            let term = Term::Iri(c);
            for t in self.by_object.get(&term).into_iter().flatten() {
                if t.predicate == Predicate::SubClassOf && out.insert(t.subject.clone()) {
                    stack.push(t.subject.clone());
                }
            }
        }
        out
    }

    pub fn instances_of(&self, class: &Iri, inferred: bool) -> Result<BTreeSet<Iri>> {
        self.require_class(class)?;
        let classes = if inferred {
            self.subclasses(class)
        } else {
            BTreeSet::from([class.clone()])
        };
        Ok(classes
            .into_iter()
            .flat_map(|c| self.by_object.get(&Term::Iri(c)).into_iter().flatten())
            .filter(|t| t.predicate == Predicate::Type)
            .map(|t| t.subject.clone())
            .collect())
    }

    pub fn types_of(&self, instance: &Iri) -> impl Iterator<Item = &Iri> {
        self.about(instance)
            .filter(|t| t.predicate == Predicate::Type)
            .filter_map(|t| t.object.as_iri())
    }

    pub fn is_acyclic(&self) -> bool {
        // a cycle exists iff some edge's target reaches back to its source
        self.subclass_edges().all(|(a, b)| a == b || !self.reaches(b, a))
    }

    /// Check that no instance falls under two disjoint classes.
    pub fn check_disjointness(&self) -> Result<()> {
        for &((a_ns, a), (b_ns, b)) in DISJOINT {
            let (a, b) = (Iri::known(a_ns, a), Iri::known(b_ns, b));
            let left = self.instances_of(&a, true)?;
            let right = self.instances_of(&b, true)?;
            if let Some(i) = left.intersection(&right).next() {
                return Err(OntologyError::DisjointViolation {
                    instance: i.clone(),
                    a,
                    b,
                });
            }
        }
        Ok(())
    }

    /// Line format: one `subject predicate object .` per line.
    pub fn to_ntriples(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&t.to_string());
            out.push('\n');
        }
        out
    }

    /// Load triples in the line format on top of the built-in taxonomy.
    pub fn from_ntriples(doc: &str) -> Result<TripleStore> {
        let mut store = TripleStore::new();
        for (i, line) in doc.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| OntologyError::Syntax { line: i + 1, message };
            let body = line
                .strip_suffix('.')
                .ok_or_else(|| syntax("missing terminating `.`".into()))?;
            let terms = lex_terms(body).map_err(syntax)?;
            let [s, p, o] =
                <[LexTerm; 3]>::try_from(terms).map_err(|_| syntax("expected subject, predicate, object".into()))?;
            let subject = match s {
                LexTerm::Word(w) => w.parse()?,
                _ => return Err(syntax("subject must be an IRI".into())),
            };
            let predicate = match p {
                LexTerm::Word(w) => w.parse()?,
                _ => return Err(syntax("predicate must be a name".into())),
            };
            let object = o.into_term().map_err(syntax)?;
            store.assert_triple(Triple::new(subject, predicate, object))?;
        }
        Ok(store)
    }
}

// ---------------------------------------------------------------------------
// Term lexing shared by the line format and query patterns
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum LexTerm {
    Word(String),
    Var(String),
    Text(String),
    Point(f64, f64),
}

impl LexTerm {
    fn into_term(self) -> std::result::Result<Term, String> {
        match self {
            LexTerm::Text(s) => Ok(Term::text(s)),
            LexTerm::Point(x, y) => Ok(Term::point(x, y)),
            LexTerm::Var(v) => Err(format!("unexpected variable ?{v}")),
            LexTerm::Word(w) => match w.as_str() {
                "true" => Ok(Term::boolean(true)),
                "false" => Ok(Term::boolean(false)),
                _ => {
                    if let Ok(v) = w.parse::<f64>() {
                        Ok(Term::number(v))
                    } else {
                        w.parse::<Iri>().map(Term::Iri).map_err(|e| e.to_string())
                    }
                }
            },
        }
    }
}

fn lex_terms(s: &str) -> std::result::Result<Vec<LexTerm>, String> {
    let mut out = Vec::new();
    let mut chars = s.char_indices().peekable();
    while let Some(&(start, ch)) = chars.peek() {
        if ch.is_whitespace() {
            chars.next();
            continue;
        }
        if ch == '"' {
            chars.next();
            let mut text = String::new();
            loop {
                match chars.next() {
                    None => return Err("unterminated string".into()),
                    Some((_, '"')) => break,
                    Some((_, '\\')) => match chars.next() {
                        Some((_, 'n')) => text.push('\n'),
                        Some((_, 'r')) => text.push('\r'),
                        Some((_, 't')) => text.push('\t'),
                        Some((_, c @ ('"' | '\\'))) => text.push(c),
                        _ => return Err("bad escape".into()),
                    },
                    Some((_, c)) => text.push(c),
                }
            }
            out.push(LexTerm::Text(text));
            continue;
        }
        let mut end = s.len();
        if s[start..].starts_with("POINT(") {
            let close = s[start..].find(')').ok_or("unterminated POINT")? + start;
            let inner = &s[start + 6..close];
            let mut parts = inner.split_whitespace().map(str::parse::<f64>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => out.push(LexTerm::Point(x, y)),
                _ => return Err(format!("bad POINT({inner})")),
            }
            while chars.peek().is_some_and(|&(i, _)| i <= close) {
                chars.next();
            }
            continue;
        }
        while let Some(&(i, c)) = chars.peek() {
            if c.is_whitespace() {
                end = i;
                break;
            }
            chars.next();
        }
        let word = &s[start..end];
        match word.strip_prefix('?') {
            Some(v) if !v.is_empty() => out.push(LexTerm::Var(v.to_string())),
            Some(_) => return Err("empty variable name".into()),
            None => out.push(LexTerm::Word(word.to_string())),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Queries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PatternTerm {
    Var(String),
    Const(Term),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub predicate: Predicate,
    pub object: PatternTerm,
}

impl TriplePattern {
    /// Variable names in subject-then-object order.
    pub fn variables(&self) -> impl Iterator<Item = String> + '_ {
        [&self.subject, &self.object].into_iter().filter_map(|t| match t {
            PatternTerm::Var(v) => Some(v.clone()),
            PatternTerm::Const(_) => None,
        })
    }
}

pub type Bindings = BTreeMap<String, Term>;

/// A built-in class by its local name alone, e.g. `Landmark`.
pub fn builtin_class_named(local: &str) -> Option<Iri> {
    builtin_edges().flat_map(|(a, b)| [a, b]).find(|c| c.local == local)
}

/// Parse `?s rdf:type birs:Space . ?s birs:longName "HALL 2044"`.
/// Built-in classes may be written without their prefix (`?s type Landmark`).
/// Patterns are separated by ` . `; the trailing dot is optional.
pub fn parse_patterns(src: &str) -> Result<Vec<TriplePattern>> {
    let syntax = |message: String| OntologyError::Syntax { line: 1, message };
    let mut terms = Vec::new();
    let src = src.trim();
    let src = src.strip_prefix('{').and_then(|s| s.strip_suffix('}')).unwrap_or(src);
    // split on `;` and standalone dots outside of strings
    let mut current = String::new();
    let mut in_string = false;
    let mut prev_backslash = false;
    for ch in src.chars() {
        if in_string {
            current.push(ch);
            if ch == '"' && !prev_backslash {
                in_string = false;
            }
            prev_backslash = ch == '\\' && !prev_backslash;
            continue;
        }
        match ch {
            '"' => {
                in_string = true;
                current.push(ch);
            }
            ';' => terms.push(std::mem::take(&mut current)),
            '.' if current.ends_with(char::is_whitespace) || current.is_empty() => {
                terms.push(std::mem::take(&mut current));
            }
            _ => current.push(ch),
        }
    }
    terms.push(current);

    let mut patterns = Vec::new();
    for chunk in terms.iter().filter(|c| !c.trim().is_empty()) {
        let lexed = lex_terms(chunk.trim()).map_err(syntax)?;
        let [s, p, o] = <[LexTerm; 3]>::try_from(lexed)
            .map_err(|_| syntax(format!("`{}` is not a subject-predicate-object pattern", chunk.trim())))?;
        let to_pattern = |t: LexTerm| -> Result<PatternTerm> {
            match t {
                LexTerm::Var(v) => Ok(PatternTerm::Var(v)),
                LexTerm::Word(w) if !w.contains(':') && builtin_class_named(&w).is_some() => {
                    Ok(PatternTerm::Const(Term::Iri(builtin_class_named(&w).unwrap())))
                }
                other => other.into_term().map(PatternTerm::Const).map_err(syntax),
            }
        };
        let predicate = match p {
            LexTerm::Word(w) => w.parse()?,
            _ => return Err(syntax("predicate must be a name".into())),
        };
        patterns.push(TriplePattern {
            subject: to_pattern(s)?,
            predicate,
            object: to_pattern(o)?,
        });
    }
    Ok(patterns)
}

impl TripleStore {
    /// Conjunctive query. `rdf:type` patterns with a constant class match
    /// instances of any subclass. Results are distinct and sorted by the
    /// bound values (variables in name order).
    pub fn query(&self, patterns: &[TriplePattern]) -> Result<Vec<Bindings>> {
        let mut rows: Vec<Bindings> = vec![Bindings::new()];
        for pat in patterns {
            let mut next = Vec::new();
            for row in &rows {
                let subject = resolve(&pat.subject, row);
                let object = resolve(&pat.object, row);
                for (s, o) in self.match_pattern(pat.predicate, subject.as_ref(), object.as_ref())? {
                    let mut extended = row.clone();
                    if bind(&mut extended, &pat.subject, Term::Iri(s)) && bind(&mut extended, &pat.object, o) {
                        next.push(extended);
                    }
                }
            }
            rows = next;
            if rows.is_empty() {
                break;
            }
        }
        let mut rows: Vec<Bindings> = rows.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        rows.sort_by(|a, b| {
            let key = |r: &Bindings| r.values().map(ToString::to_string).collect::<Vec<_>>();
            key(a).cmp(&key(b))
        });
        Ok(rows)
    }

    fn match_pattern(&self, p: Predicate, s: Option<&Term>, o: Option<&Term>) -> Result<Vec<(Iri, Term)>> {
        let subject_iri = match s {
            Some(Term::Iri(i)) => Some(i),
            Some(Term::Literal(_)) => return Ok(Vec::new()),
            None => None,
        };
        if p == Predicate::Type {
            if let Some(Term::Iri(class)) = o {
                if !self.is_class(class) {
                    return Ok(Vec::new());
                }
                let classes = self.subclasses(class);
                let found = self
                    .with_predicate(Predicate::Type)
                    .filter(|t| subject_iri.is_none_or(|s| &t.subject == s))
                    .filter(|t| t.object.as_iri().is_some_and(|c| classes.contains(c)))
                    .map(|t| (t.subject.clone(), Term::Iri(class.clone())))
                    .collect();
                return Ok(found);
            }
        }
        let candidates: Box<dyn Iterator<Item = &Triple>> = match (subject_iri, o) {
            (Some(s), _) => Box::new(self.about(s)),
            (None, Some(o)) => Box::new(self.by_object.get(o).into_iter().flatten()),
            (None, None) => Box::new(self.with_predicate(p)),
        };
        Ok(candidates
            .filter(|t| t.predicate == p)
            .filter(|t| o.is_none_or(|o| &t.object == o))
            .map(|t| (t.subject.clone(), t.object.clone()))
            .collect())
    }
}

fn resolve(t: &PatternTerm, row: &Bindings) -> Option<Term> {
    match t {
        PatternTerm::Const(c) => Some(c.clone()),
        PatternTerm::Var(v) => row.get(v).cloned(),
    }
}

fn bind(row: &mut Bindings, t: &PatternTerm, value: Term) -> bool {
    match t {
        PatternTerm::Const(_) => true,
        PatternTerm::Var(v) => match row.get(v) {
            Some(existing) => existing == &value,
            None => {
                row.insert(v.clone(), value);
                true
            }
        },
    }
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Taxonomy plus one instance per landmark, space and door, with their
/// property triples. Spaces are typed `birs:Space`; elements at their IFC
/// leaf class.
pub fn classify_model(model: &BuildingModel) -> TripleStore {
    let mut store = TripleStore::new();
    let mut add = |t: Triple| store.insert(t);
    let storey_name = |id: &Option<String>| id.as_deref().and_then(|gid| model.storey(gid)).map(|s| s.name.clone());

    for l in &model.landmarks {
        let i = Iri::inst(&l.global_id);
        add(Triple::new(i.clone(), Predicate::Type, class(Ifc, l.ifc_class.name())));
        add(Triple::new(
            i.clone(),
            Predicate::HasMaterial,
            Term::text(l.material.name()),
        ));
        add(Triple::new(
            i.clone(),
            Predicate::SensorVisible,
            Term::boolean(l.material.sensor_visible()),
        ));
        let c = l.footprint.centroid();
        add(Triple::new(i.clone(), Predicate::HasCentroid, Term::point(c.x, c.y)));
        if let Some(name) = storey_name(&l.storey) {
            add(Triple::new(i, Predicate::LocatedOnStorey, Term::text(name)));
        }
    }
    for d in &model.doors {
        let i = Iri::inst(&d.global_id);
        add(Triple::new(i.clone(), Predicate::HasWidth, Term::number(d.width)));
        add(Triple::new(i, Predicate::HasHeight, Term::number(d.height)));
    }
    for s in &model.spaces {
        let i = Iri::inst(&s.global_id);
        add(Triple::new(i.clone(), Predicate::Type, class(Birs, "Space")));
        add(Triple::new(i.clone(), Predicate::LongName, Term::text(&s.long_name)));
        add(Triple::new(
            i.clone(),
            Predicate::HasCentroid,
            Term::point(s.centroid.x, s.centroid.y),
        ));
        for tag in &s.function_tags {
            add(Triple::new(i.clone(), Predicate::HasFunction, Term::text(tag)));
        }
        if let Some(name) = storey_name(&s.storey) {
            add(Triple::new(i, Predicate::LocatedOnStorey, Term::text(name)));
        }
    }
    for b in &model.boundaries {
        let target = b.element.as_deref().unwrap_or(&b.global_id);
        add(Triple::new(
            Iri::inst(&b.space),
            Predicate::BoundedBy,
            Iri::inst(target),
        ));
        if b.kind == BoundaryKind::Physical && model.door(target).is_some() {
            add(Triple::new(
                Iri::inst(target),
                Predicate::ConnectsTo,
                Iri::inst(&b.space),
            ));
        }
    }
    store
}

/// [`classify_model`] plus each site obstacle typed at its Topography class.
pub fn classify_site(site: &SiteModel) -> TripleStore {
    let mut store = classify_model(&site.building);
    for o in &site.obstacles {
        let i = Iri::inst(&o.id);
        store.insert(Triple::new(
            i.clone(),
            Predicate::Type,
            class(Birs, o.category.class_name()),
        ));
        let c = o.polygon.centroid();
        store.insert(Triple::new(i, Predicate::HasCentroid, Term::point(c.x, c.y)));
    }
    store
}
