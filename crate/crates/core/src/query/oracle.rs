//! Reference executor: direct evaluation on the whole plaintext database.
//!
//! Shares only plan validation with the map/reduce engine. Everything else
//! (predicate evaluation, joins, grouping, arithmetic) is done a second way:
//! numbers are compared and summed as exact fixed-point big integers,
//! joins are nested loops and groups are found by linear search.

use std::cmp::Ordering;

use num_bigint::{BigInt, Sign};
use num_traits::{ToPrimitive, Zero};

use super::plan::{working_columns, AggFn, CmpOp, Operand, Predicate, Projection, SetOp};
use super::{QueryError, QueryPlan, QueryResult};
use crate::table::{ColumnType, Database, Row, Value};

/// Binary exponent of the smallest subnormal; every finite double is an
/// integer multiple of 2^-1074.
const SCALE: u32 = 1074;

fn exact(v: &Value) -> Option<BigInt> {
    match *v {
        Value::Integer(i) => Some(BigInt::from(i) << SCALE),
        Value::Float(x) => Some(float_to_fixed(x)),
        _ => None,
    }
}

/// `x * 2^1074` as an exact integer.
fn float_to_fixed(x: f64) -> BigInt {
    let bits = x.to_bits();
    let negative = bits >> 63 == 1;
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    // value = mant * 2^(e - 1075) for normals, mant * 2^-1074 for subnormals.
    let (mant, shift) = if exp == 0 { (frac, 0) } else { (frac | (1u64 << 52), (exp - 1) as usize) };
    let magnitude = BigInt::from(mant) << shift;
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Round `n * 2^-1074` to the nearest double, ties to even.
fn fixed_to_float(n: &BigInt) -> f64 {
    if n.is_zero() {
        return 0.0;
    }
    let negative = n.sign() == Sign::Minus;
    let mag = n.magnitude().clone();
    let bits = mag.bits();
    let (mant, exp2) = if bits <= 53 {
        (mag.to_u64().expect("fits in 53 bits"), -(SCALE as i64))
    } else {
        let shift = bits - 53;
        let mut q = (&mag >> shift).to_u64().expect("53 bits");
        let rem = &mag - (num_bigint::BigUint::from(q) << shift);
        let half = num_bigint::BigUint::from(1u8) << (shift - 1);
        if rem > half || (rem == half && q & 1 == 1) {
            q += 1;
        }
        (q, shift as i64 - SCALE as i64)
    };
    let mut x = mant as f64;
    let mut e = exp2;
    // Scale in steps that keep every intermediate exact.
    while e > 0 {
        let step = e.min(1000);
        x *= 2f64.powi(step as i32);
        e -= step;
    }
    while e < 0 {
        let step = (-e).min(1000);
        x *= 2f64.powi(-(step as i32));
        e += step;
    }
    if negative {
        -x
    } else {
        x
    }
}

fn oracle_cmp(a: &Value, b: &Value) -> Result<Ordering, QueryError> {
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => Ok(x.as_bytes().cmp(y.as_bytes())),
        _ => match (exact(a), exact(b)) {
            (Some(x), Some(y)) => Ok(x.cmp(&y)),
            _ => Err(QueryError::TypeMismatch(format!("cannot compare {a:?} with {b:?}"))),
        },
    }
}

fn lookup<'a>(names: &[String], row: &'a Row, name: &str) -> Result<&'a Value, QueryError> {
    names.iter().position(|n| n == name).map(|i| &row[i]).ok_or_else(|| QueryError::UnknownColumn(name.into()))
}

fn holds(p: &Predicate, names: &[String], row: &Row) -> Result<bool, QueryError> {
    match p {
        Predicate::Cmp { left, op, right } => {
            let get = |o: &Operand| -> Result<Value, QueryError> {
                match o {
                    Operand::Column(c) => lookup(names, row, c).cloned(),
                    Operand::Value(v) => Ok(v.clone()),
                }
            };
            let ord = oracle_cmp(&get(left)?, &get(right)?)?;
            Ok(match op {
                CmpOp::Eq => ord.is_eq(),
                CmpOp::Ne => ord.is_ne(),
                CmpOp::Lt => ord.is_lt(),
                CmpOp::Le => ord.is_le(),
                CmpOp::Gt => ord.is_gt(),
                CmpOp::Ge => ord.is_ge(),
            })
        }
        Predicate::And(ps) => {
            let mut all = true;
            for p in ps {
                all &= holds(p, names, row)?;
            }
            Ok(all)
        }
        Predicate::Or(ps) => {
            let mut any = false;
            for p in ps {
                any |= holds(p, names, row)?;
            }
            Ok(any)
        }
        Predicate::Not(p) => Ok(!holds(p, names, row)?),
    }
}

fn aggregate(func: AggFn, input_ty: Option<ColumnType>, values: &[&Value]) -> Result<Value, QueryError> {
    if func == AggFn::Count {
        return Ok(Value::Integer(values.len() as i64));
    }
    if values.is_empty() {
        return Ok(Value::Null);
    }
    let total = || values.iter().map(|v| exact(v).expect("numeric")).fold(BigInt::zero(), |a, b| a + b);
    Ok(match func {
        AggFn::Sum if input_ty == Some(ColumnType::Integer) => {
            let s = total() >> SCALE;
            Value::Integer(s.to_i64().ok_or_else(|| QueryError::Overflow(format!("SUM = {s}")))?)
        }
        AggFn::Sum => Value::Float(fixed_to_float(&total())),
        AggFn::Avg => Value::Float(fixed_to_float(&total()) / values.len() as f64),
        AggFn::Min => (*values.iter().min().expect("non-empty")).clone(),
        AggFn::Max => (*values.iter().max().expect("non-empty")).clone(),
        AggFn::Count => unreachable!(),
    })
}

fn rows_of(plan: &QueryPlan, db: &Database) -> Result<Vec<Row>, QueryError> {
    let source = db.get(&plan.source).ok_or_else(|| QueryError::UnknownTable(plan.source.clone()))?;
    let source_names: Vec<String> = source.schema.columns.iter().map(|c| c.name.clone()).collect();
    let mut rows = Vec::new();
    for row in &source.rows {
        let keep = match &plan.selection {
            Some(p) => holds(p, &source_names, row)?,
            None => true,
        };
        if keep {
            rows.push(row.clone());
        }
    }

    if let Some(j) = &plan.join {
        let right = db.get(&j.table).ok_or_else(|| QueryError::UnknownTable(j.table.clone()))?;
        let right_names: Vec<String> = right.schema.columns.iter().map(|c| c.name.clone()).collect();
        let mut joined = Vec::new();
        for l in &rows {
            let lv = lookup(&source_names, l, &j.left_column)?;
            for r in &right.rows {
                if oracle_cmp(lv, lookup(&right_names, r, &j.right_column)?)?.is_eq() {
                    joined.push(l.iter().chain(r).cloned().collect());
                }
            }
        }
        rows = joined;
    }

    let working = working_columns(plan, db)?;
    let names: Vec<String> = working.iter().map(|c| c.name.clone()).collect();
    let ty_of = |n: &str| working.iter().find(|c| c.name == n).map(|c| c.ty);

    let mut out: Vec<Row> = if plan.aggregates.is_empty() && plan.group_by.is_empty() {
        let wanted: Vec<String> = match &plan.projection {
            Projection::All => names.clone(),
            Projection::Columns(cs) => cs.clone(),
        };
        rows.iter()
            .map(|r| wanted.iter().map(|c| lookup(&names, r, c).cloned()).collect::<Result<Row, _>>())
            .collect::<Result<_, _>>()?
    } else {
        let mut groups: Vec<(Vec<Value>, Vec<&Row>)> = Vec::new();
        for r in &rows {
            let key = plan.group_by.iter().map(|g| lookup(&names, r, g).cloned()).collect::<Result<Vec<_>, _>>()?;
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, members)) => members.push(r),
                None => groups.push((key, vec![r])),
            }
        }
        if plan.group_by.is_empty() && groups.is_empty() {
            groups.push((Vec::new(), Vec::new()));
        }
        let shown: Vec<String> = match &plan.projection {
            Projection::All => plan.group_by.clone(),
            Projection::Columns(cs) => cs.clone(),
        };
        let mut out = Vec::new();
        for (key, members) in &groups {
            let mut row: Row = shown
                .iter()
                .map(|c| plan.group_by.iter().position(|g| g == c).map(|i| key[i].clone()))
                .collect::<Option<_>>()
                .ok_or_else(|| QueryError::ProjectionNotGrouped(format!("{shown:?}")))?;
            for a in &plan.aggregates {
                let values: Vec<&Value> = match &a.column {
                    None => members.iter().map(|_| &Value::Null).collect(),
                    Some(c) => members.iter().map(|r| lookup(&names, r, c)).collect::<Result<_, _>>()?,
                };
                row.push(aggregate(a.func, a.column.as_deref().and_then(ty_of), &values)?);
            }
            out.push(row);
        }
        out
    };

    if let Some(s) = &plan.set_op {
        let other = rows_of(&s.plan, db)?;
        let mut left = out;
        left.sort();
        left.dedup();
        let mut right = other;
        right.sort();
        right.dedup();
        out = match s.op {
            SetOp::Union => {
                let mut u = left;
                u.extend(right);
                u.sort();
                u.dedup();
                u
            }
            SetOp::Intersect => left.into_iter().filter(|r| right.binary_search(r).is_ok()).collect(),
            SetOp::Difference => left.into_iter().filter(|r| right.binary_search(r).is_err()).collect(),
        };
    }
    out.sort();
    Ok(out)
}

/// Execute `plan` directly against the unsharded database.
pub fn execute_oracle(plan: &QueryPlan, db: &Database) -> Result<QueryResult, QueryError> {
    let columns = plan.validate(db)?;
    let rows = rows_of(plan, db)?;
    Ok(QueryResult { columns, rows, provenance: Vec::new(), epoch: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_round_trip() {
        for x in [0.0, 1.0, -2.5, 0.1, 1e300, -1e-300, f64::MIN_POSITIVE, 5e-324, f64::MAX] {
            assert_eq!(fixed_to_float(&float_to_fixed(x)).to_bits(), x.to_bits(), "{x}");
        }
        assert!(fixed_to_float(&float_to_fixed(-0.0)).is_sign_positive());
    }

    #[test]
    fn fixed_point_rounds_half_to_even() {
        let one = float_to_fixed(1.0);
        let ulp = float_to_fixed(f64::EPSILON);
        // 1 + ulp/2 ties to 1; 1 + 3ulp/2 ties to 1 + 2ulp.
        assert_eq!(fixed_to_float(&(&one + (&ulp >> 1))), 1.0);
        assert_eq!(fixed_to_float(&(&one + ((&ulp * 3) >> 1))), 1.0 + 2.0 * f64::EPSILON);
        assert_eq!(fixed_to_float(&(&one + (&ulp >> 1) + 1)), 1.0 + f64::EPSILON);
    }
}
