//! The built-in semantic action language and the values it computes.
//!
//! Actions are small expressions over variables bound in the current rule
//! invocation:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := INT | STRING | NAME ('.' 'size')? | '(' expr ')'
//! ```
//!
//! Predicates additionally allow one comparison (`<`, `>`, `==`) at the top
//! level. The name `text` evaluates to the text matched so far by the
//! innermost rule or binding scope, unless a variable of that name is bound.

use std::fmt;
use std::sync::Arc;

use serde_json::Value as Json;
use thiserror::Error;

/// A value produced by parsing or by a semantic action.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Value {
    /// No value was produced.
    #[default]
    None,
    /// A span of the session input, as byte offsets.
    Text {
        start: usize,
        end: usize,
    },
    Int(i64),
    Bool(bool),
    Str(Arc<str>),
    List(Arc<[Value]>),
    Node(Arc<Node>),
}

/// Parse-tree node built for a rule invocation that produced no value itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub rule: Arc<str>,
    pub start: usize,
    pub end: usize,
    pub children: Vec<Value>,
}

impl Value {
    pub fn is_none(&self) -> bool {
        matches!(self, Value::None)
    }

    /// Text denoted by the value, if it is textual.
    pub fn as_text<'a>(&'a self, input: &'a str) -> Option<&'a str> {
        match self {
            Value::Text { start, end } => input.get(*start..*end),
            Value::Str(s) => Some(s),
            Value::Node(n) => input.get(n.start..n.end),
            _ => None,
        }
    }

    /// Replaces input spans by owned strings so the value outlives `input`.
    pub fn detach(&self, input: &str) -> Value {
        match self {
            Value::Text { start, end } => Value::Str(Arc::from(&input[*start..*end])),
            Value::List(items) => Value::List(items.iter().map(|v| v.detach(input)).collect()),
            Value::Node(n) => Value::Node(Arc::new(Node {
                rule: n.rule.clone(),
                start: n.start,
                end: n.end,
                children: n.children.iter().map(|v| v.detach(input)).collect(),
            })),
            other => other.clone(),
        }
    }

    pub fn to_json(&self, input: &str) -> Json {
        match self {
            Value::None => Json::Null,
            Value::Text { start, end } => Json::String(input[*start..*end].to_owned()),
            Value::Int(i) => Json::from(*i),
            Value::Bool(b) => Json::Bool(*b),
            Value::Str(s) => Json::String(s.to_string()),
            Value::List(items) => Json::Array(items.iter().map(|v| v.to_json(input)).collect()),
            Value::Node(n) => {
                let mut map = serde_json::Map::new();
                map.insert("rule".into(), Json::String(n.rule.to_string()));
                map.insert("start".into(), Json::from(n.start));
                map.insert("end".into(), Json::from(n.end));
                map.insert(
                    "children".into(),
                    Json::Array(n.children.iter().map(|v| v.to_json(input)).collect()),
                );
                Json::Object(map)
            }
        }
    }

    pub fn to_sexpr(&self, input: &str) -> String {
        match self {
            Value::None => "nil".into(),
            Value::Text { start, end } => format!("{:?}", &input[*start..*end]),
            Value::Int(i) => i.to_string(),
            Value::Bool(b) => {
                if *b {
                    "#t".into()
                } else {
                    "#f".into()
                }
            }
            Value::Str(s) => format!("{:?}", s),
            Value::List(items) => {
                let inner: Vec<_> = items.iter().map(|v| v.to_sexpr(input)).collect();
                format!("({})", inner.join(" "))
            }
            Value::Node(n) => {
                let mut out = format!("({} {} {}", n.rule, n.start, n.end);
                for c in &n.children {
                    out.push(' ');
                    out.push_str(&c.to_sexpr(input));
                }
                out.push(')');
                out
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Gt,
    Eq,
}

/// Parsed action or predicate body.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ActionExpr {
    Int(i64),
    Str(Arc<str>),
    Var(Arc<str>),
    Size(Box<ActionExpr>),
    Bin(BinOp, Box<ActionExpr>, Box<ActionExpr>),
    Cmp(CmpOp, Box<ActionExpr>, Box<ActionExpr>),
}

impl fmt::Display for ActionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionExpr::Int(i) => write!(f, "{i}"),
            ActionExpr::Str(s) => {
                f.write_str("'")?;
                for c in s.chars() {
                    match c {
                        '\'' => f.write_str("\\'")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("'")
            }
            ActionExpr::Var(v) => f.write_str(v),
            ActionExpr::Size(e) => write!(f, "{e}.size"),
            ActionExpr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "(")?;
                write_operand(f, a)?;
                write!(f, "{sym}")?;
                write_operand(f, b)?;
                write!(f, ")")
            }
            ActionExpr::Cmp(op, a, b) => {
                let sym = match op {
                    CmpOp::Lt => "<",
                    CmpOp::Gt => ">",
                    CmpOp::Eq => "==",
                };
                write!(f, "{a}{sym}{b}")
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &ActionExpr) -> fmt::Result {
    write!(f, "{e}")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("type mismatch: {0}")]
    Type(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("predicate did not evaluate to a boolean")]
    NotBoolean,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action syntax error at offset {offset}: {message}")]
pub struct ActionSyntaxError {
    pub offset: usize,
    pub message: String,
}

/// Parses an action body. `predicate` permits a top-level comparison.
pub fn parse_action(src: &str, predicate: bool) -> Result<ActionExpr, ActionSyntaxError> {
    let mut p = ActionParser { src, pos: 0 };
    let lhs = p.expr()?;
    p.skip_ws();
    let result = if predicate {
        let op = if p.eat("==") {
            Some(CmpOp::Eq)
        } else if p.eat("<") {
            Some(CmpOp::Lt)
        } else if p.eat(">") {
            Some(CmpOp::Gt)
        } else {
            None
        };
        match op {
            Some(op) => {
                let rhs = p.expr()?;
                ActionExpr::Cmp(op, Box::new(lhs), Box::new(rhs))
            }
            None => lhs,
        }
    } else {
        lhs
    };
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(result)
}

struct ActionParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> ActionParser<'a> {
    fn error(&self, message: &str) -> ActionSyntaxError {
        ActionSyntaxError {
            offset: self.pos,
            message: message.to_owned(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<ActionExpr, ActionSyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = ActionExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<ActionExpr, ActionSyntaxError> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor()?;
            lhs = ActionExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<ActionExpr, ActionSyntaxError> {
        self.skip_ws();
        if self.eat("(") {
            let e = self.expr()?;
            if !self.eat(")") {
                return Err(self.error("expected `)`"));
            }
            return Ok(e);
        }
        let rest = self.rest();
        let first = rest
            .chars()
            .next()
            .ok_or_else(|| self.error("unexpected end of action"))?;
        if first.is_ascii_digit() {
            let len = rest
                .find(|c: char| !c.is_ascii_digit())
                .unwrap_or(rest.len());
            let value = rest[..len]
                .parse()
                .map_err(|_| self.error("integer literal out of range"))?;
            self.pos += len;
            return Ok(ActionExpr::Int(value));
        }
        if first == '\'' || first == '"' {
            let (s, len) =
                unescape_quoted(rest).ok_or_else(|| self.error("unterminated string"))?;
            self.pos += len;
            return Ok(ActionExpr::Str(Arc::from(s)));
        }
        if first.is_ascii_alphabetic() || first == '_' {
            let len = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(rest.len());
            let name = &rest[..len];
            self.pos += len;
            let var = ActionExpr::Var(Arc::from(name));
            if self.rest().starts_with(".size") {
                self.pos += ".size".len();
                return Ok(ActionExpr::Size(Box::new(var)));
            }
            return Ok(var);
        }
        Err(self.error("expected a value"))
    }
}

/// Decodes a quoted string starting at `src[0]`; returns the text and the
/// number of source bytes consumed (quotes included).
pub(crate) fn unescape_quoted(src: &str) -> Option<(String, usize)> {
    let mut chars = src.char_indices();
    let (_, quote) = chars.next()?;
    let mut out = String::new();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                let (_, esc) = chars.next()?;
                out.push(match esc {
                    'n' => '\n',
                    't' => '\t',
                    other => other,
                });
            }
            c if c == quote => return Some((out, i + c.len_utf8())),
            c => out.push(c),
        }
    }
    None
}

/// Variable scope of one rule invocation. Persistent: binding returns a new
/// scope sharing the old one.
#[derive(Clone, Default)]
pub struct Closure(Option<std::rc::Rc<Binding>>);

struct Binding {
    name: Arc<str>,
    value: Value,
    next: Option<std::rc::Rc<Binding>>,
}

// Long binding chains (a bind inside a loop) must not drop recursively.
impl Drop for Binding {
    fn drop(&mut self) {
        let mut next = self.next.take();
        while let Some(rc) = next {
            match std::rc::Rc::try_unwrap(rc) {
                Ok(mut b) => next = b.next.take(),
                Err(_) => break,
            }
        }
    }
}

impl Closure {
    pub fn bind(&self, name: Arc<str>, value: Value) -> Closure {
        Closure(Some(std::rc::Rc::new(Binding {
            name,
            value,
            next: self.0.clone(),
        })))
    }

    pub fn lookup(&self, name: &str) -> Option<&Value> {
        let mut cur = self.0.as_deref();
        while let Some(b) = cur {
            if &*b.name == name {
                return Some(&b.value);
            }
            cur = b.next.as_deref();
        }
        None
    }

    /// Bound names, innermost first, with shadowed names removed.
    pub fn names(&self) -> Vec<Arc<str>> {
        let mut out: Vec<Arc<str>> = Vec::new();
        let mut cur = self.0.as_deref();
        while let Some(b) = cur {
            if !out.iter().any(|n| n == &b.name) {
                out.push(b.name.clone());
            }
            cur = b.next.as_deref();
        }
        out
    }
}

impl fmt::Debug for Closure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

impl PartialEq for Closure {
    fn eq(&self, other: &Self) -> bool {
        let names = self.names();
        names.len() == other.names().len()
            && names.iter().all(|n| self.lookup(n) == other.lookup(n))
    }
}

/// What an action can see besides its closure.
pub struct ActionEnv<'a> {
    pub input: &'a str,
    pub closure: &'a Closure,
    /// Text matched by the innermost rule or binding scope so far.
    pub scope: (usize, usize),
}

pub fn eval_action(action: &ActionExpr, env: &ActionEnv<'_>) -> Result<Value, ActionError> {
    match action {
        ActionExpr::Int(i) => Ok(Value::Int(*i)),
        ActionExpr::Str(s) => Ok(Value::Str(s.clone())),
        ActionExpr::Var(name) => match env.closure.lookup(name) {
            Some(v) => Ok(v.clone()),
            None if &**name == "text" => Ok(Value::Text {
                start: env.scope.0,
                end: env.scope.1,
            }),
            None => Err(ActionError::Unbound(name.to_string())),
        },
        ActionExpr::Size(e) => {
            let v = eval_action(e, env)?;
            match &v {
                Value::List(items) => Ok(Value::Int(items.len() as i64)),
                _ => v
                    .as_text(env.input)
                    .map(|t| Value::Int(t.chars().count() as i64))
                    .ok_or_else(|| ActionError::Type(format!("`size` of non-text value {v:?}"))),
            }
        }
        ActionExpr::Bin(op, a, b) => {
            let a = eval_action(a, env)?;
            let b = eval_action(b, env)?;
            binary(*op, &a, &b, env.input)
        }
        ActionExpr::Cmp(op, a, b) => {
            let a = eval_action(a, env)?;
            let b = eval_action(b, env)?;
            compare(*op, &a, &b, env.input)
        }
    }
}

/// Integer view of a value; numeric text counts as an integer.
fn as_int(v: &Value, input: &str) -> Option<i64> {
    match v {
        Value::Int(i) => Some(*i),
        _ => v.as_text(input).and_then(|t| t.trim().parse().ok()),
    }
}

fn binary(op: BinOp, a: &Value, b: &Value, input: &str) -> Result<Value, ActionError> {
    if let (Some(x), Some(y)) = (as_int(a, input), as_int(b, input)) {
        let overflow = || ActionError::Type("integer overflow".into());
        return match op {
            BinOp::Add => x.checked_add(y).map(Value::Int).ok_or_else(overflow),
            BinOp::Sub => x.checked_sub(y).map(Value::Int).ok_or_else(overflow),
            BinOp::Mul => x.checked_mul(y).map(Value::Int).ok_or_else(overflow),
            BinOp::Div if y == 0 => Err(ActionError::DivisionByZero),
            BinOp::Div => Ok(Value::Int(x.wrapping_div(y))),
        };
    }
    if op == BinOp::Add {
        if let (Some(x), Some(y)) = (a.as_text(input), b.as_text(input)) {
            return Ok(Value::Str(Arc::from(format!("{x}{y}"))));
        }
    }
    Err(ActionError::Type(format!(
        "cannot apply {op:?} to {a:?} and {b:?}"
    )))
}

fn compare(op: CmpOp, a: &Value, b: &Value, input: &str) -> Result<Value, ActionError> {
    if let (Some(x), Some(y)) = (as_int(a, input), as_int(b, input)) {
        return Ok(Value::Bool(match op {
            CmpOp::Lt => x < y,
            CmpOp::Gt => x > y,
            CmpOp::Eq => x == y,
        }));
    }
    if let (Some(x), Some(y)) = (a.as_text(input), b.as_text(input)) {
        return Ok(Value::Bool(match op {
            CmpOp::Lt => x < y,
            CmpOp::Gt => x > y,
            CmpOp::Eq => x == y,
        }));
    }
    match op {
        CmpOp::Eq => Ok(Value::Bool(a == b)),
        _ => Err(ActionError::Type(format!("cannot order {a:?} and {b:?}"))),
    }
}
