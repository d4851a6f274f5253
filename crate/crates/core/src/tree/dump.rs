use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tree::RolloutTree;
use crate::vocab::TokenId;

/// One line of a tree dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub decoded_positions: Vec<usize>,
    pub decoded_tokens: Vec<TokenId>,
    pub reward: Option<f64>,
    pub advantage: Option<f64>,
    pub old_probs: Vec<f64>,
}

/// Writes one JSON object per node, in arena order.
pub fn write_dump<W: Write>(tree: &RolloutTree, mut out: W) -> Result<()> {
    for n in &tree.nodes {
        let rec = NodeRecord {
            id: n.id,
            parent: n.parent,
            depth: n.depth,
            decoded_positions: n.decoded_positions.clone(),
            decoded_tokens: n.decoded_tokens.clone(),
            reward: n.reward,
            advantage: n.advantage,
            old_probs: n.old_probs.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dump<R: BufRead>(input: R) -> Result<Vec<NodeRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
