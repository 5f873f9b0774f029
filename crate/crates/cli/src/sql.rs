//! A small SQL front-end that lowers one `SELECT` statement to a
//! [`QueryPlan`].
//!
//! ```text
//! select  := SELECT items FROM name [JOIN name ON col = col] [WHERE expr]
//!            [GROUP BY col {, col}] [setop select]
//! items   := * | item {, item}        plain columns before aggregates
//! item    := col | AGG ( col | * )    AGG is COUNT, SUM, MIN, MAX or AVG
//! setop   := UNION | INTERSECT | EXCEPT | MINUS
//! expr    := conj {OR conj}
//! conj    := neg {AND neg}
//! neg     := NOT neg | ( expr ) | operand cmp operand
//! cmp     := = | != | <> | < | <= | > | >=
//! operand := col | number | 'text'
//! ```
//!
//! Keywords are case-insensitive. A column of the joined table is written
//! `table.col`; a `source.col` prefix on the source table is dropped.

use std::fmt;

use dache::query::{AggFn, Aggregate, CmpOp, JoinSpec, Operand, Predicate, Projection, QueryPlan, SetOp, SetOperation};
use dache::table::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// Byte offset into the input.
    pub offset: usize,
    pub message: String,
    input: String,
}

impl ParseError {
    /// 1-based character column of the error.
    pub fn column(&self) -> usize {
        self.input[..self.offset.min(self.input.len())].chars().count() + 1
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let col = self.column();
        writeln!(f, "SQL parse error at column {col}: {}", self.message)?;
        writeln!(f, "  {}", self.input)?;
        write!(f, "  {}^", " ".repeat(col - 1))
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    Str(String),
    Int(i64),
    Float(f64),
    Sym(&'static str),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Quoted(w) => write!(f, "\"{w}\""),
            Tok::Str(s) => write!(f, "'{s}'"),
            Tok::Int(i) => write!(f, "{i}"),
            Tok::Float(x) => write!(f, "{x}"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

const SYMBOLS: [&str; 12] = ["<=", ">=", "!=", "<>", "=", "<", ">", "(", ")", ",", "*", "."];

fn lex(input: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let err = |offset, message: String| ParseError { offset, message, input: input.to_string() };
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Word(input[start..i].to_string())));
        } else if c.is_ascii_digit() || (c == b'-' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit() || *b == b'.')) || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            let mut float = c == b'.';
            while i < bytes.len() {
                let b = bytes[i];
                if b.is_ascii_digit() {
                    i += 1;
                } else if b == b'.' || b == b'e' || b == b'E' {
                    float = true;
                    i += 1;
                    if (b == b'e' || b == b'E') && matches!(bytes.get(i), Some(b'+' | b'-')) {
                        i += 1;
                    }
                } else {
                    break;
                }
            }
            let text = &input[start..i];
            let tok = if float {
                text.parse().ok().filter(|x: &f64| x.is_finite()).map(Tok::Float)
            } else {
                text.parse().ok().map(Tok::Int)
            };
            out.push((start, tok.ok_or_else(|| err(start, format!("bad number `{text}`")))?));
        } else if c == b'\'' || c == b'"' {
            // Quotes are doubled to escape them.
            let mut s = String::new();
            i += 1;
            loop {
                let Some(pos) = input[i..].find(c as char) else {
                    return Err(err(start, "unterminated quote".into()));
                };
                s.push_str(&input[i..i + pos]);
                i += pos + 1;
                if bytes.get(i) == Some(&c) {
                    s.push(c as char);
                    i += 1;
                } else {
                    break;
                }
            }
            out.push((start, if c == b'\'' { Tok::Str(s) } else { Tok::Quoted(s) }));
        } else if let Some(sym) = SYMBOLS.iter().find(|s| input[i..].starts_with(**s)) {
            i += sym.len();
            out.push((start, Tok::Sym(sym)));
        } else if c == b';' && input[i + 1..].trim().is_empty() {
            break;
        } else {
            let ch = input[i..].chars().next().expect("in bounds");
            return Err(err(start, format!("unexpected character `{ch}`")));
        }
    }
    out.push((input.len(), Tok::End));
    Ok(out)
}

const RESERVED: [&str; 17] = [
    "SELECT", "FROM", "WHERE", "GROUP", "BY", "JOIN", "ON", "AND", "OR", "NOT", "UNION", "INTERSECT", "EXCEPT",
    "MINUS", "INNER", "AS", "ORDER",
];

struct Parser<'a> {
    input: &'a str,
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

enum Item {
    Column(String),
    Agg(Aggregate),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { offset: self.offset(), message: message.into(), input: self.input.to_string() })
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        self.error(format!("expected {wanted}, found {}", self.peek()))
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        let hit = self.is_kw(kw);
        self.pos += usize::from(hit);
        hit
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(kw)
        }
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        let hit = matches!(self.peek(), Tok::Sym(s) if *s == sym);
        self.pos += usize::from(hit);
        hit
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.unexpected(&format!("`{sym}`"))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Word(w) if !RESERVED.iter().any(|k| w.eq_ignore_ascii_case(k)) => {
                self.pos += 1;
                Ok(w)
            }
            Tok::Quoted(w) => {
                self.pos += 1;
                Ok(w)
            }
            _ => self.unexpected("a name"),
        }
    }

    /// `name` or `table.name`.
    fn column_ref(&mut self) -> Result<String, ParseError> {
        let first = self.ident()?;
        if self.eat_sym(".") {
            let second = self.ident()?;
            return Ok(format!("{first}.{second}"));
        }
        Ok(first)
    }

    fn agg_fn(&self) -> Option<AggFn> {
        let Tok::Word(w) = self.peek() else { return None };
        let f = match w.to_ascii_uppercase().as_str() {
            "COUNT" => AggFn::Count,
            "SUM" => AggFn::Sum,
            "MIN" => AggFn::Min,
            "MAX" => AggFn::Max,
            "AVG" => AggFn::Avg,
            _ => return None,
        };
        matches!(self.toks.get(self.pos + 1), Some((_, Tok::Sym("(")))).then_some(f)
    }

    fn item(&mut self) -> Result<Item, ParseError> {
        if let Some(func) = self.agg_fn() {
            self.pos += 2;
            let column = if self.eat_sym("*") {
                if func != AggFn::Count {
                    return self.error(format!("{func}(*) is not allowed; only COUNT takes `*`"));
                }
                None
            } else {
                Some(self.column_ref()?)
            };
            self.expect_sym(")")?;
            return Ok(Item::Agg(Aggregate { func, column }));
        }
        Ok(Item::Column(self.column_ref()?))
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        let v = match self.peek().clone() {
            Tok::Int(i) => Value::Integer(i),
            Tok::Float(x) => Value::Float(x),
            Tok::Str(s) => Value::Text(s),
            Tok::Word(_) | Tok::Quoted(_) => return Ok(Operand::Column(self.column_ref()?)),
            _ => return self.unexpected("a column or literal"),
        };
        self.pos += 1;
        Ok(Operand::Value(v))
    }

    fn cmp_op(&mut self) -> Result<CmpOp, ParseError> {
        let op = match self.peek() {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("!=") | Tok::Sym("<>") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return self.unexpected("a comparison operator"),
        };
        self.pos += 1;
        Ok(op)
    }

    fn expr(&mut self) -> Result<Predicate, ParseError> {
        let mut terms = vec![self.conj()?];
        while self.eat_kw("OR") {
            terms.push(self.conj()?);
        }
        Ok(if terms.len() == 1 { terms.pop().expect("one") } else { Predicate::Or(terms) })
    }

    fn conj(&mut self) -> Result<Predicate, ParseError> {
        let mut terms = vec![self.neg()?];
        while self.eat_kw("AND") {
            terms.push(self.neg()?);
        }
        Ok(if terms.len() == 1 { terms.pop().expect("one") } else { Predicate::And(terms) })
    }

    fn neg(&mut self) -> Result<Predicate, ParseError> {
        if self.eat_kw("NOT") {
            return Ok(Predicate::Not(Box::new(self.neg()?)));
        }
        if self.eat_sym("(") {
            let inner = self.expr()?;
            self.expect_sym(")")?;
            return Ok(inner);
        }
        let left = self.operand()?;
        let op = self.cmp_op()?;
        let right = self.operand()?;
        Ok(Predicate::cmp(left, op, right))
    }

    fn set_op(&mut self) -> Option<SetOp> {
        let op = if self.is_kw("UNION") {
            SetOp::Union
        } else if self.is_kw("INTERSECT") {
            SetOp::Intersect
        } else if self.is_kw("EXCEPT") || self.is_kw("MINUS") {
            SetOp::Difference
        } else {
            return None;
        };
        self.pos += 1;
        Some(op)
    }

    fn select(&mut self) -> Result<QueryPlan, ParseError> {
        self.expect_kw("SELECT")?;
        let mut columns = Vec::new();
        let mut aggregates = Vec::new();
        let star = self.eat_sym("*");
        if !star {
            loop {
                let at = self.offset();
                match self.item()? {
                    Item::Column(c) if !aggregates.is_empty() => {
                        self.pos -= 1;
                        return Err(ParseError {
                            offset: at,
                            message: format!("column `{c}` must be listed before the aggregates"),
                            input: self.input.to_string(),
                        });
                    }
                    Item::Column(c) => columns.push(c),
                    Item::Agg(a) => aggregates.push(a),
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_kw("FROM")?;
        let source = self.ident()?;
        let mut join = None;
        if self.eat_kw("INNER") && !self.is_kw("JOIN") {
            return self.unexpected("JOIN");
        }
        if self.eat_kw("JOIN") {
            let table = self.ident()?;
            self.expect_kw("ON")?;
            let a_at = self.offset();
            let a = self.column_ref()?;
            self.expect_sym("=")?;
            let b_at = self.offset();
            let b = self.column_ref()?;
            join = Some(self.join_spec(&source, &table, (a, a_at), (b, b_at))?);
        }
        let mut plan = QueryPlan::scan(&source);
        plan.join = join;
        if self.eat_kw("WHERE") {
            plan.selection = Some(self.expr()?);
        }
        if self.eat_kw("GROUP") {
            self.expect_kw("BY")?;
            loop {
                plan.group_by.push(self.column_ref()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let strip = |c: String| match c.split_once('.') {
            Some((t, rest)) if t == source => rest.to_string(),
            _ => c,
        };
        let columns: Vec<String> = columns.into_iter().map(strip).collect();
        plan.group_by = plan.group_by.into_iter().map(strip).collect();
        for a in &mut aggregates {
            a.column = a.column.take().map(strip);
        }
        if let Some(p) = &mut plan.selection {
            strip_predicate(p, &source);
        }
        plan.aggregates = aggregates;
        plan.projection = if star {
            Projection::All
        } else if columns.is_empty() && !plan.group_by.is_empty() {
            // Aggregates only: keep the group keys out of the output.
            Projection::Columns(Vec::new())
        } else if columns.is_empty() {
            Projection::All
        } else {
            Projection::Columns(columns)
        };
        if star && !plan.group_by.is_empty() {
            plan.projection = Projection::Columns(plan.group_by.clone());
        }
        Ok(plan)
    }

    fn join_spec(
        &self,
        source: &str,
        table: &str,
        (a, a_at): (String, usize),
        (b, b_at): (String, usize),
    ) -> Result<JoinSpec, ParseError> {
        let side = |c: &str, at: usize| -> Result<(Option<bool>, String), ParseError> {
            match c.split_once('.') {
                Some((t, col)) if t == source => Ok((Some(true), col.to_string())),
                Some((t, col)) if t == table => Ok((Some(false), col.to_string())),
                Some((t, _)) => Err(ParseError {
                    offset: at,
                    message: format!("`{t}` is neither `{source}` nor `{table}`"),
                    input: self.input.to_string(),
                }),
                None => Ok((None, c.to_string())),
            }
        };
        let (sa, ca) = side(&a, a_at)?;
        let (sb, cb) = side(&b, b_at)?;
        let (left_column, right_column) = match (sa, sb) {
            (Some(false), _) | (_, Some(true)) => (cb, ca),
            _ => (ca, cb),
        };
        Ok(JoinSpec { table: table.to_string(), left_column, right_column })
    }

    fn statement(&mut self) -> Result<QueryPlan, ParseError> {
        let mut plan = self.select()?;
        if let Some(op) = self.set_op() {
            let rhs = self.select()?;
            if self.set_op().is_some() {
                self.pos -= 1;
                return self.error("chained set operations are not supported");
            }
            plan.set_op = Some(SetOperation { op, plan: Box::new(rhs) });
        }
        if self.is_kw("ORDER") {
            return self.error("ORDER BY is not supported; results are returned in canonical order");
        }
        if *self.peek() != Tok::End {
            return self.unexpected("end of statement");
        }
        Ok(plan)
    }
}

fn strip_predicate(p: &mut Predicate, source: &str) {
    let fix = |o: &mut Operand| {
        if let Operand::Column(c) = o {
            if let Some((t, rest)) = c.split_once('.') {
                if t == source {
                    *c = rest.to_string();
                }
            }
        }
    };
    match p {
        Predicate::Cmp { left, right, .. } => {
            fix(left);
            fix(right);
        }
        Predicate::And(ps) | Predicate::Or(ps) => ps.iter_mut().for_each(|q| strip_predicate(q, source)),
        Predicate::Not(q) => strip_predicate(q, source),
    }
}

/// Parse one `SELECT` statement (optionally combined with a second by a set
/// operator) into a plan. Schema checks happen later, in plan validation.
pub fn parse(sql: &str) -> Result<QueryPlan, ParseError> {
    let toks = lex(sql)?;
    Parser { input: sql, toks, pos: 0 }.statement()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_star() {
        assert_eq!(parse("SELECT COUNT(*) FROM t").unwrap(), QueryPlan::count_all("t"));
        assert_eq!(parse("select count(*) from t;").unwrap(), QueryPlan::count_all("t"));
    }

    fn col(c: &str) -> Operand {
        Operand::Column(c.into())
    }

    #[test]
    fn grouped_selection() {
        let got = parse("SELECT g, SUM(x), avg(x) FROM t WHERE NOT (s = 'oak' OR x < -2.5) AND id <> 3 GROUP BY g").unwrap();
        let mut want = QueryPlan::scan("t");
        want.selection = Some(Predicate::And(vec![
            Predicate::Not(Box::new(Predicate::Or(vec![
                Predicate::cmp(col("s"), CmpOp::Eq, Operand::Value(Value::Text("oak".into()))),
                Predicate::cmp(col("x"), CmpOp::Lt, Operand::Value(Value::Float(-2.5))),
            ]))),
            Predicate::cmp(col("id"), CmpOp::Ne, Operand::Value(Value::Integer(3))),
        ]));
        want.aggregates = vec![
            Aggregate { func: AggFn::Sum, column: Some("x".into()) },
            Aggregate { func: AggFn::Avg, column: Some("x".into()) },
        ];
        want.group_by = vec!["g".into()];
        want.projection = Projection::Columns(vec!["g".into()]);
        assert_eq!(got, want);
    }

    #[test]
    fn join_sides_are_resolved() {
        let want = JoinSpec { table: "u".into(), left_column: "g".into(), right_column: "id".into() };
        for sql in ["SELECT * FROM t JOIN u ON t.g = u.id", "SELECT * FROM t INNER JOIN u ON u.id = g"] {
            assert_eq!(parse(sql).unwrap().join.as_ref(), Some(&want), "{sql}");
        }
        let p = parse("SELECT id, u.s FROM t JOIN u ON g = u.g WHERE u.x > 0").unwrap();
        assert_eq!(p.projection, Projection::Columns(vec!["id".into(), "u.s".into()]));
        assert_eq!(p.selection, Some(Predicate::cmp(col("u.x"), CmpOp::Gt, Operand::Value(Value::Integer(0)))));
    }

    #[test]
    fn set_operations() {
        for (word, op) in [("UNION", SetOp::Union), ("INTERSECT", SetOp::Intersect), ("EXCEPT", SetOp::Difference), ("minus", SetOp::Difference)] {
            let p = parse(&format!("SELECT s FROM t {word} SELECT s FROM u")).unwrap();
            let set = p.set_op.expect("set op");
            assert_eq!(set.op, op);
            assert_eq!(set.plan.source, "u");
        }
        assert!(parse("SELECT s FROM t UNION SELECT s FROM u UNION SELECT s FROM t").is_err());
    }

    #[test]
    fn rejected_forms() {
        for sql in [
            "SELECT s FROM t ORDER BY s",
            "SELECT SUM(*) FROM t",
            "SELECT s FROM t WHERE s = 'open",
            "SELECT s FROM t garbage",
            "SELECT s, FROM t",
            "",
        ] {
            let e = parse(sql).unwrap_err();
            assert!(e.column() <= sql.chars().count() + 1, "{sql}: {e}");
        }
    }

    #[test]
    fn error_columns() {
        let e = parse("SELECT FROM t").unwrap_err();
        assert_eq!(e.column(), 8);
        let e = parse("SELECT a FROM t WHERE a >").unwrap_err();
        assert_eq!(e.column(), 26);
        assert!(e.to_string().contains("end of input"));
        let e = parse("SELECT COUNT(*), g FROM t GROUP BY g").unwrap_err();
        assert_eq!(e.column(), 18);
    }
}
