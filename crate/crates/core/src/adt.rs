//! Sequential object specifications.
//!
//! An object is described by its sequential behaviour alone: an initial
//! state, a total transition function for updates and a side-effect free
//! evaluation function for queries. Three types ship: an integer set, a
//! counter and a last-writer register.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdtError {
    #[error("unknown object type `{0}`")]
    UnknownType(String),
    #[error("malformed operation `{0}`")]
    BadOp(String),
    #[error("malformed value `{0}`")]
    BadValue(String),
    #[error("invalid object id `{0}`")]
    BadObjectId(String),
    #[error("operation `{op}` does not apply to a {adt} object")]
    WrongType { op: String, adt: Adt },
}

/// Name of a replicated object inside a run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Result<Self, AdtError> {
        let id = id.into();
        let ok = !id.is_empty()
            && id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if ok {
            Ok(ObjectId(id))
        } else {
            Err(AdtError::BadObjectId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ObjectId {
    type Err = AdtError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectId::new(s)
    }
}

/// The registered sequential types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Adt {
    IntSet,
    Counter,
    /// Last-writer register with a caller supplied default.
    Register { default: i64 },
}

/// An object state. Sets are kept sorted so that structural equality is
/// the canonical equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum State {
    Set(BTreeSet<i64>),
    Int(i64),
}

/// A query result.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Set(BTreeSet<i64>),
    Int(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateOp {
    Insert(i64),
    Delete(i64),
    Increment(i64),
    Write(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QueryOp {
    /// `R`, the integer set read.
    ReadSet,
    /// `READ`, the counter and register read.
    Read,
}

/// Any operation as it appears in scripts and history logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Update(UpdateOp),
    Query(QueryOp),
}

impl Adt {
    pub fn name(&self) -> String {
        self.to_string()
    }

    pub fn initial(&self) -> State {
        match self {
            Adt::IntSet => State::Set(BTreeSet::new()),
            Adt::Counter => State::Int(0),
            Adt::Register { default } => State::Int(*default),
        }
    }

    pub fn accepts_update(&self, op: &UpdateOp) -> bool {
        matches!(
            (self, op),
            (Adt::IntSet, UpdateOp::Insert(_) | UpdateOp::Delete(_))
                | (Adt::Counter, UpdateOp::Increment(_))
                | (Adt::Register { .. }, UpdateOp::Write(_))
        )
    }

    pub fn accepts_query(&self, op: &QueryOp) -> bool {
        matches!(
            (self, op),
            (Adt::IntSet, QueryOp::ReadSet)
                | (Adt::Counter | Adt::Register { .. }, QueryOp::Read)
        )
    }

    pub fn check_op(&self, op: &Op) -> Result<(), AdtError> {
        let ok = match op {
            Op::Update(u) => self.accepts_update(u),
            Op::Query(q) => self.accepts_query(q),
        };
        if ok {
            Ok(())
        } else {
            Err(AdtError::WrongType {
                op: op.to_string(),
                adt: *self,
            })
        }
    }

    /// The query used for converged reads.
    pub fn read_query(&self) -> QueryOp {
        match self {
            Adt::IntSet => QueryOp::ReadSet,
            Adt::Counter | Adt::Register { .. } => QueryOp::Read,
        }
    }

    /// Successor state. The input is left untouched.
    ///
    /// Panics if `op` belongs to another type; every entry point that builds
    /// operations validates them with [`Adt::accepts_update`] first.
    pub fn apply(&self, state: &State, op: &UpdateOp) -> State {
        match (self, state, op) {
            (Adt::IntSet, State::Set(s), UpdateOp::Insert(x)) => {
                let mut s = s.clone();
                s.insert(*x);
                State::Set(s)
            }
            (Adt::IntSet, State::Set(s), UpdateOp::Delete(x)) => {
                let mut s = s.clone();
                s.remove(x);
                State::Set(s)
            }
            (Adt::Counter, State::Int(n), UpdateOp::Increment(d)) => State::Int(n.wrapping_add(*d)),
            (Adt::Register { .. }, State::Int(_), UpdateOp::Write(v)) => State::Int(*v),
            _ => panic!("update {op} applied to {self} state {state:?}"),
        }
    }

    pub fn eval(&self, state: &State, query: &QueryOp) -> Value {
        match (self, state, query) {
            (Adt::IntSet, State::Set(s), QueryOp::ReadSet) => Value::Set(s.clone()),
            (Adt::Counter | Adt::Register { .. }, State::Int(n), QueryOp::Read) => Value::Int(*n),
            _ => panic!("query {query} evaluated on {self} state {state:?}"),
        }
    }

    pub fn fold<'a, I>(&self, updates: I) -> State
    where
        I: IntoIterator<Item = &'a UpdateOp>,
    {
        self.fold_from(self.initial(), updates)
    }

    pub fn fold_from<'a, I>(&self, state: State, updates: I) -> State
    where
        I: IntoIterator<Item = &'a UpdateOp>,
    {
        updates
            .into_iter()
            .fold(state, |s, u| self.apply(&s, u))
    }

    /// Value of the converged read in `state`.
    pub fn read(&self, state: &State) -> Value {
        self.eval(state, &self.read_query())
    }

    pub fn parse_op(&self, text: &str) -> Result<Op, AdtError> {
        let op: Op = text.parse()?;
        self.check_op(&op)?;
        Ok(op)
    }
}

impl fmt::Display for Adt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Adt::IntSet => f.write_str("intset"),
            Adt::Counter => f.write_str("counter"),
            Adt::Register { default: 0 } => f.write_str("register"),
            Adt::Register { default } => write!(f, "register({default})"),
        }
    }
}

impl FromStr for Adt {
    type Err = AdtError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intset" => Ok(Adt::IntSet),
            "counter" => Ok(Adt::Counter),
            "register" => Ok(Adt::Register { default: 0 }),
            _ => match call_arg(s, "register") {
                Some(arg) => Ok(Adt::Register {
                    default: parse_int(arg).ok_or_else(|| AdtError::UnknownType(s.into()))?,
                }),
                None => Err(AdtError::UnknownType(s.into())),
            },
        }
    }
}

/// `NAME(<arg>)` → `arg`.
fn call_arg<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')
}

/// Strict decimal integer: optional `-`, digits, no `+`, no whitespace.
pub(crate) fn parse_int(s: &str) -> Option<i64> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl fmt::Display for UpdateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateOp::Insert(x) => write!(f, "I({x})"),
            UpdateOp::Delete(x) => write!(f, "D({x})"),
            UpdateOp::Increment(d) => write!(f, "INC({d})"),
            UpdateOp::Write(v) => write!(f, "W({v})"),
        }
    }
}

impl fmt::Display for QueryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryOp::ReadSet => f.write_str("R"),
            QueryOp::Read => f.write_str("READ"),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Update(u) => u.fmt(f),
            Op::Query(q) => q.fmt(f),
        }
    }
}

type Ctor = fn(i64) -> UpdateOp;

impl FromStr for Op {
    type Err = AdtError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "R" => return Ok(Op::Query(QueryOp::ReadSet)),
            "READ" => return Ok(Op::Query(QueryOp::Read)),
            _ => {}
        }
        let ctors: [(&str, Ctor); 4] = [
            ("INC", UpdateOp::Increment),
            ("I", UpdateOp::Insert),
            ("D", UpdateOp::Delete),
            ("W", UpdateOp::Write),
        ];
        for (name, ctor) in ctors {
            if let Some(x) = call_arg(s, name).and_then(parse_int) {
                return Ok(Op::Update(ctor(x)));
            }
        }
        Err(AdtError::BadOp(s.into()))
    }
}

impl FromStr for UpdateOp {
    type Err = AdtError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse()? {
            Op::Update(u) => Ok(u),
            Op::Query(_) => Err(AdtError::BadOp(s.into())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Set(s) => {
                f.write_str("{")?;
                for (i, x) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("}")
            }
        }
    }
}

impl FromStr for Value {
    type Err = AdtError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AdtError::BadValue(s.into());
        if let Some(inner) = s.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            if inner.is_empty() {
                return Ok(Value::Set(BTreeSet::new()));
            }
            let mut out = BTreeSet::new();
            let mut last = None;
            for part in inner.split(',') {
                let x = parse_int(part).ok_or_else(bad)?;
                // canonical form only: strictly ascending, no duplicates
                if last.is_some_and(|l| l >= x) {
                    return Err(bad());
                }
                last = Some(x);
                out.insert(x);
            }
            return Ok(Value::Set(out));
        }
        parse_int(s).map(Value::Int).ok_or_else(bad)
    }
}

impl State {
    pub fn as_set(&self) -> Option<&BTreeSet<i64>> {
        match self {
            State::Set(s) => Some(s),
            State::Int(_) => None,
        }
    }
}

/// Convenience for tests and fixtures.
pub fn set_value<I: IntoIterator<Item = i64>>(items: I) -> Value {
    Value::Set(items.into_iter().collect())
}
