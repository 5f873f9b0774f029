use serde::{Deserialize, Serialize};

use super::CryptoError;
use crate::table::{Column, ColumnType, Row, Schema, Table, Value};

/// The rows of one table that landed in a shard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSlice {
    pub table: String,
    pub schema: Schema,
    pub rows: Vec<Row>,
}

/// One element of the partition. A shard carries a slice of every table in
/// the database so that joins and set operations can be mapped per shard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shard {
    pub shard_id: u32,
    pub slices: Vec<TableSlice>,
}

impl Shard {
    pub fn slice(&self, table: &str) -> Option<&TableSlice> {
        self.slices.iter().find(|s| s.table == table)
    }

    pub fn row_count(&self) -> usize {
        self.slices.iter().map(|s| s.rows.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardSet {
    pub shards: Vec<Shard>,
}

impl ShardSet {
    pub fn len(&self) -> usize {
        self.shards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shards.is_empty()
    }
}

/// Round-robin partition of one table: row `i` goes to shard `i mod n`.
pub fn shard_table(table: &Table, n: usize) -> Result<ShardSet, CryptoError> {
    shard_database([table], n)
}

/// Round-robin partition of several tables into `n` shards, table by table.
pub fn shard_database<'a>(
    tables: impl IntoIterator<Item = &'a Table>,
    n: usize,
) -> Result<ShardSet, CryptoError> {
    if n == 0 {
        return Err(CryptoError::InvalidShardCount(n));
    }
    let mut shards: Vec<Shard> =
        (0..n).map(|i| Shard { shard_id: i as u32, slices: Vec::new() }).collect();
    for table in tables {
        for shard in shards.iter_mut() {
            shard.slices.push(TableSlice {
                table: table.name.clone(),
                schema: table.schema.clone(),
                rows: Vec::with_capacity(table.len() / n + 1),
            });
        }
        for (i, row) in table.rows.iter().enumerate() {
            shards[i % n].slices.last_mut().expect("slice pushed above").rows.push(row.clone());
        }
    }
    Ok(ShardSet { shards })
}

// Canonical encoding, all integers little-endian:
//   shard  = u32 shard_id | u32 slice_count | slice*
//   slice  = str table | u32 column_count | (str name | u8 type)* | u32 row_count | row*
//   row    = u32 arity | value*
//   value  = u8 tag (0 int, 1 float, 2 text) | i64 | f64 bits | str
//   str    = u32 byte_len | utf-8 bytes

const TAG_INT: u8 = 0;
const TAG_FLOAT: u8 = 1;
const TAG_TEXT: u8 = 2;

fn put_u32(out: &mut Vec<u8>, x: usize) -> Result<(), CryptoError> {
    let x = u32::try_from(x).map_err(|_| CryptoError::Serialization(format!("length {x} exceeds u32")))?;
    out.extend_from_slice(&x.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<(), CryptoError> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn type_tag(t: ColumnType) -> u8 {
    match t {
        ColumnType::Integer => TAG_INT,
        ColumnType::Float => TAG_FLOAT,
        ColumnType::Text => TAG_TEXT,
    }
}

pub fn serialize_shard(shard: &Shard) -> Result<Vec<u8>, CryptoError> {
    let mut out = Vec::new();
    out.extend_from_slice(&shard.shard_id.to_le_bytes());
    put_u32(&mut out, shard.slices.len())?;
    for slice in &shard.slices {
        put_str(&mut out, &slice.table)?;
        put_u32(&mut out, slice.schema.arity())?;
        for c in &slice.schema.columns {
            put_str(&mut out, &c.name)?;
            out.push(type_tag(c.ty));
        }
        put_u32(&mut out, slice.rows.len())?;
        for row in &slice.rows {
            put_u32(&mut out, row.len())?;
            for v in row {
                match v {
                    Value::Integer(i) => {
                        out.push(TAG_INT);
                        out.extend_from_slice(&i.to_le_bytes());
                    }
                    Value::Float(x) => {
                        out.push(TAG_FLOAT);
                        out.extend_from_slice(&x.to_bits().to_le_bytes());
                    }
                    Value::Text(s) => {
                        out.push(TAG_TEXT);
                        put_str(&mut out, s)?;
                    }
                    Value::Null => {
                        return Err(CryptoError::Serialization("NULL cannot be stored in a shard".into()))
                    }
                }
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CryptoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            CryptoError::Serialization(format!("truncated input at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CryptoError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CryptoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CryptoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, CryptoError> {
        let n = self.u32()? as usize;
        // Every encoded element takes at least one byte.
        if n > self.buf.len() - self.pos {
            return Err(CryptoError::Serialization(format!("implausible length {n} at byte {}", self.pos)));
        }
        Ok(n)
    }

    fn str(&mut self) -> Result<String, CryptoError> {
        let n = self.len()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| CryptoError::Serialization(e.to_string()))
    }
}

pub fn deserialize_shard(bytes: &[u8]) -> Result<Shard, CryptoError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let shard_id = r.u32()?;
    let slice_count = r.len()?;
    let mut slices = Vec::with_capacity(slice_count);
    for _ in 0..slice_count {
        let table = r.str()?;
        let ncols = r.len()?;
        let mut columns = Vec::with_capacity(ncols);
        for _ in 0..ncols {
            let name = r.str()?;
            let ty = match r.u8()? {
                TAG_INT => ColumnType::Integer,
                TAG_FLOAT => ColumnType::Float,
                TAG_TEXT => ColumnType::Text,
                t => return Err(CryptoError::Serialization(format!("unknown column type tag {t}"))),
            };
            columns.push(Column { name, ty });
        }
        let nrows = r.len()?;
        let mut rows = Vec::with_capacity(nrows);
        for _ in 0..nrows {
            let arity = r.len()?;
            let mut row = Vec::with_capacity(arity);
            for _ in 0..arity {
                row.push(match r.u8()? {
                    TAG_INT => Value::Integer(r.u64()? as i64),
                    TAG_FLOAT => Value::Float(f64::from_bits(r.u64()?)),
                    TAG_TEXT => Value::Text(r.str()?),
                    t => return Err(CryptoError::Serialization(format!("unknown value tag {t}"))),
                });
            }
            rows.push(row);
        }
        slices.push(TableSlice { table, schema: Schema::new(columns), rows });
    }
    if r.pos != bytes.len() {
        return Err(CryptoError::Serialization(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Shard { shard_id, slices })
}
