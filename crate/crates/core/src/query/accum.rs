use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::plan::{AggFn, ResolvedAgg};
use super::QueryError;
use crate::table::{ColumnType, Value};

/// Exact floating-point sum held as non-overlapping partials (Shewchuk).
/// Any order of `add` and `merge` calls yields the same correctly rounded
/// [`value`](ExactSum::value).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut kept = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        self.partials.truncate(kept);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// The exact sum rounded to nearest, ties to even. An exact zero is
    /// always `+0.0`.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: the remaining partials decide the rounding direction.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        if hi == 0.0 {
            0.0
        } else {
            hi
        }
    }
}

/// Per-aggregate accumulator: the commutative monoid that map emits and
/// the Master merges. AVG keeps `(sum, count)` and is divided only in
/// [`AggAcc::finalize`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggAcc {
    pub count: u64,
    pub int_sum: i128,
    pub float_sum: ExactSum,
    pub min: Option<Value>,
    pub max: Option<Value>,
}

impl AggAcc {
    pub fn push(&mut self, v: Option<&Value>) {
        self.count += 1;
        let Some(v) = v else { return };
        match v {
            Value::Integer(i) => self.int_sum += *i as i128,
            Value::Float(x) => self.float_sum.add(*x),
            _ => {}
        }
        if self.min.as_ref().is_none_or(|m| v < m) {
            self.min = Some(v.clone());
        }
        if self.max.as_ref().is_none_or(|m| v > m) {
            self.max = Some(v.clone());
        }
    }

    pub fn merge(&mut self, other: &AggAcc) {
        self.count += other.count;
        self.int_sum += other.int_sum;
        self.float_sum.merge(&other.float_sum);
        if let Some(m) = &other.min {
            if self.min.as_ref().is_none_or(|s| m < s) {
                self.min = Some(m.clone());
            }
        }
        if let Some(m) = &other.max {
            if self.max.as_ref().is_none_or(|s| m > s) {
                self.max = Some(m.clone());
            }
        }
    }

    pub(crate) fn finalize(&self, agg: &ResolvedAgg) -> Result<Value, QueryError> {
        let int_input = agg.input_ty == Some(ColumnType::Integer);
        if self.count == 0 && agg.func != AggFn::Count {
            return Ok(Value::Null);
        }
        Ok(match agg.func {
            AggFn::Count => Value::Integer(self.count as i64),
            AggFn::Sum if int_input => Value::Integer(
                i64::try_from(self.int_sum).map_err(|_| QueryError::Overflow(format!("SUM = {}", self.int_sum)))?,
            ),
            AggFn::Sum => Value::Float(self.float_sum.value()),
            AggFn::Avg if int_input => Value::Float(self.int_sum as f64 / self.count as f64),
            AggFn::Avg => Value::Float(self.float_sum.value() / self.count as f64),
            AggFn::Min => self.min.clone().unwrap_or(Value::Null),
            AggFn::Max => self.max.clone().unwrap_or(Value::Null),
        })
    }
}

/// Predicate comparison: exact across integer and float, lexicographic on
/// text. `None` for incomparable types.
pub fn compare_values(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Integer(x), Value::Integer(y)) => Some(x.cmp(y)),
        (Value::Float(x), Value::Float(y)) => x.partial_cmp(y),
        (Value::Integer(i), Value::Float(x)) => int_float_cmp(*i, *x),
        (Value::Float(x), Value::Integer(i)) => int_float_cmp(*i, *x).map(Ordering::reverse),
        (Value::Text(x), Value::Text(y)) => Some(x.cmp(y)),
        _ => None,
    }
}

fn int_float_cmp(i: i64, x: f64) -> Option<Ordering> {
    const TWO_63: f64 = 9_223_372_036_854_775_808.0;
    if x.is_nan() {
        return None;
    }
    if x >= TWO_63 {
        return Some(Ordering::Less);
    }
    if x < -TWO_63 {
        return Some(Ordering::Greater);
    }
    let whole = x.trunc();
    match i.cmp(&(whole as i64)) {
        Ordering::Equal => 0.0f64.partial_cmp(&(x - whole)),
        ord => Some(ord),
    }
}
