//! Versioned binary graph container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SSGR" | version u16
//! accounts: count u64, then per account: address length u16, address bytes, label u8
//! edges:    count u64, then per edge: from u32, to u32, value u128, timestamp u64, block u64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use scamsweeper_core::graph::{Account, GraphError, Label, TemporalMultigraph, Transaction};

use crate::io::{create, open, IoError};

pub const MAGIC: &[u8; 4] = b"SSGR";
pub const VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("not a graph container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u16),
    #[error("truncated container: {0}")]
    Truncated(&'static str),
    #[error("invalid {what} at index {index}")]
    Invalid { what: &'static str, index: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub fn encode(g: &TemporalMultigraph) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + g.num_accounts() * 52 + g.num_edges() * 40);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.num_accounts() as u64).to_le_bytes());
    for a in g.accounts() {
        out.extend_from_slice(&(a.address.len() as u16).to_le_bytes());
        out.extend_from_slice(a.address.as_bytes());
        out.push(a.label.to_u8());
    }
    out.extend_from_slice(&(g.num_edges() as u64).to_le_bytes());
    for e in g.edges() {
        out.extend_from_slice(&(e.from as u32).to_le_bytes());
        out.extend_from_slice(&(e.to as u32).to_le_bytes());
        out.extend_from_slice(&e.value.to_le_bytes());
        out.extend_from_slice(&e.timestamp.to_le_bytes());
        out.extend_from_slice(&e.block.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.buf.len() < n {
            return Err(FormatError::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], FormatError> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<TemporalMultigraph, FormatError> {
    let mut c = Cursor { buf: bytes };
    if c.take(4, "magic").map_err(|_| FormatError::BadMagic)? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = u16::from_le_bytes(c.array("version")?);
    if version != VERSION {
        return Err(FormatError::Version(version));
    }
    let n = u64::from_le_bytes(c.array("account count")?) as usize;
    let mut accounts = Vec::with_capacity(n.min(bytes.len()));
    for id in 0..n {
        let len = u16::from_le_bytes(c.array("address length")?) as usize;
        let address = std::str::from_utf8(c.take(len, "address")?)
            .map_err(|_| FormatError::Invalid { what: "address", index: id })?
            .to_string();
        let label = Label::from_u8(c.array::<1>("label")?[0]).ok_or(FormatError::Invalid { what: "label", index: id })?;
        accounts.push(Account { id, address, label });
    }
    let m = u64::from_le_bytes(c.array("edge count")?) as usize;
    let mut edges = Vec::with_capacity(m.min(bytes.len() / 40 + 1));
    for _ in 0..m {
        let from = u32::from_le_bytes(c.array("edge")?) as usize;
        let to = u32::from_le_bytes(c.array("edge")?) as usize;
        let value = u128::from_le_bytes(c.array("edge")?);
        let timestamp = u64::from_le_bytes(c.array("edge")?);
        let block = u64::from_le_bytes(c.array("edge")?);
        edges.push(Transaction { from, to, value, timestamp, block });
    }
    if !c.buf.is_empty() {
        return Err(FormatError::Invalid { what: "trailing bytes", index: bytes.len() - c.buf.len() });
    }
    Ok(TemporalMultigraph::from_parts(accounts, edges)?)
}

#[derive(Debug, thiserror::Error)]
pub enum GraphFileError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    Format {
        path: String,
        #[source]
        source: FormatError,
    },
}

pub fn save(g: &TemporalMultigraph, path: &Path) -> Result<(), IoError> {
    let mut f = create(path)?;
    f.write_all(&encode(g)).and_then(|_| f.flush()).map_err(|e| IoError::io(path, e))
}

pub fn load(path: &Path) -> Result<TemporalMultigraph, GraphFileError> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| IoError::io(path, e))?;
    decode(&bytes).map_err(|source| GraphFileError::Format { path: path.display().to_string(), source })
}
