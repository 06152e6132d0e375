//! Content hashes used to tie artifacts to their inputs.

use scamsweeper_core::graph::TemporalMultigraph;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the JSON encoding of `value`. Struct fields serialize in
/// declaration order, so equal configs hash equally.
pub fn json_hash<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

/// Order-independent for accounts: hashes accounts sorted by address, then
/// every edge in edge order by endpoint address. Two graphs that differ only
/// in internal account ids hash equally.
pub fn graph_hash(g: &TemporalMultigraph) -> String {
    let mut h = Sha256::new();
    let mut accounts: Vec<_> = g.accounts().iter().collect();
    accounts.sort_by(|a, b| a.address.cmp(&b.address));
    h.update((accounts.len() as u64).to_le_bytes());
    for a in accounts {
        h.update(a.address.as_bytes());
        h.update([a.label.to_u8()]);
    }
    h.update((g.num_edges() as u64).to_le_bytes());
    for e in g.edges() {
        h.update(g.accounts()[e.from].address.as_bytes());
        h.update(g.accounts()[e.to].address.as_bytes());
        h.update(e.value.to_le_bytes());
        h.update(e.timestamp.to_le_bytes());
        h.update(e.block.to_le_bytes());
    }
    hex::encode(h.finalize())
}
