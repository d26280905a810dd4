//! Newick export and import for fitted ultrametrics.
//!
//! An ultrametric on `n` points is the same thing as a rooted tree with all
//! leaves at equal depth: the level-ℓ equivalence classes (pairs at level
//! `≥ ℓ`) form a laminar family, and the node merging the classes of level
//! ℓ sits at height `d_ℓ / 2`, so the leaf-to-leaf path through it has
//! length exactly `d_ℓ`. [`to_newick`] builds that tree; [`parse_newick`]
//! reads any Newick text with branch lengths back in, and
//! [`levels_from_newick`] reconstructs the level matrix by snapping
//! leaf-to-leaf path distances onto a ladder — the round trip reproduces
//! the input levels exactly.
//!
//! Writer conventions: children are ordered by their smallest member, unary
//! nodes are never emitted, branch lengths use the shortest decimal that
//! reparses to the same float, and labels touching Newick's reserved
//! characters are single-quoted with internal quotes doubled.

use serde::Serialize;
use thiserror::Error;

use crate::instance::{
    first_violation_levels, pair_index, LevelLadder, Ultrametric,
};

#[derive(Debug, Error, PartialEq)]
pub enum NewickError {
    #[error("newick parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("levels are not an ultrametric (violating triple {0}, {1}, {2})")]
    NotUltrametric(usize, usize, usize),
    #[error("leaf distance {distance} matches no ladder value")]
    UnmatchedDistance { distance: f64 },
    #[error("duplicate leaf label `{0}`")]
    DuplicateLeaf(String),
    #[error("leaf without a label at byte {position}")]
    UnnamedLeaf { position: usize },
}

/// Render an ultrametric as a rooted Newick tree with branch lengths.
///
/// Each internal node sits at height `d_ℓ / 2` for the smallest level ℓ
/// among the pairs below it, so every leaf-to-leaf path distance equals the
/// ultrametric distance exactly (up to float formatting, which is
/// round-trip safe).
pub fn to_newick(
    u: &Ultrametric,
    labels: &[String],
    ladder: &LevelLadder,
) -> Result<String, NewickError> {
    assert_eq!(labels.len(), u.n(), "label count must match the point count");
    if let Some((i, j, k)) = first_violation_levels(u.n(), u.levels()) {
        return Err(NewickError::NotUltrametric(i, j, k));
    }
    let members: Vec<usize> = (0..u.n()).collect();
    let (text, _) = subtree(u, labels, ladder, &members);
    Ok(format!("{text};"))
}

/// Recursively render one cluster; returns `(text, height)`.
fn subtree(
    u: &Ultrametric,
    labels: &[String],
    ladder: &LevelLadder,
    members: &[usize],
) -> (String, f64) {
    if members.len() == 1 {
        return (quote_label(&labels[members[0]]), 0.0);
    }
    // The merge level of this cluster: smallest pairwise level inside it.
    let merge = members
        .iter()
        .enumerate()
        .flat_map(|(idx, &i)| members[idx + 1..].iter().map(move |&j| u.level(i, j)))
        .min()
        .expect("cluster has at least one pair");
    let height = ladder.value(merge) / 2.0;

    // Children: equivalence classes of "level > merge" within the cluster,
    // ordered by smallest member. Transitivity holds because the input is
    // an ultrametric.
    let mut assigned = vec![false; members.len()];
    let mut parts = Vec::new();
    for seed in 0..members.len() {
        if assigned[seed] {
            continue;
        }
        let mut class = Vec::new();
        for (idx, &j) in members.iter().enumerate() {
            if !assigned[idx]
                && (idx == seed || u.level(members[seed], j) > merge)
            {
                assigned[idx] = true;
                class.push(j);
            }
        }
        let (text, child_height) = subtree(u, labels, ladder, &class);
        parts.push(format!("{text}:{}", height - child_height));
    }
    (format!("({})", parts.join(",")), height)
}

/// Characters that force a label into single quotes.
fn needs_quoting(label: &str) -> bool {
    label.is_empty()
        || label
            .chars()
            .any(|c| c.is_whitespace() || "()[]':;,".contains(c))
}

fn quote_label(label: &str) -> String {
    if needs_quoting(label) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

/// A parsed Newick tree: nodes with parent links and branch lengths.
#[derive(Debug, Clone, Serialize)]
pub struct NewickTree {
    parent: Vec<Option<usize>>,
    branch: Vec<f64>,
    label: Vec<Option<String>>,
    /// Leaf node ids in left-to-right order.
    leaves: Vec<usize>,
}

impl NewickTree {
    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Leaf labels in left-to-right order.
    pub fn leaf_labels(&self) -> Vec<String> {
        self.leaves
            .iter()
            .map(|&id| self.label[id].clone().expect("leaves are labeled"))
            .collect()
    }

    /// Path distance from each node to the root.
    fn depths(&self) -> Vec<f64> {
        let mut depth = vec![0.0; self.parent.len()];
        // Parents precede children in id order by construction.
        for id in 0..self.parent.len() {
            if let Some(p) = self.parent[id] {
                depth[id] = depth[p] + self.branch[id];
            }
        }
        depth
    }

    /// Leaf-to-leaf path distances, flat over pairs of leaf positions.
    pub fn leaf_distances(&self) -> Vec<f64> {
        let depth = self.depths();
        let n = self.leaves.len();
        let mut out = vec![0.0; n * (n - 1) / 2];
        for a in 0..n {
            // Ancestor set of leaf a.
            let mut ancestors = std::collections::HashMap::new();
            let mut node = Some(self.leaves[a]);
            while let Some(id) = node {
                ancestors.insert(id, depth[id]);
                node = self.parent[id];
            }
            for b in (a + 1)..n {
                let mut node = self.leaves[b];
                let lca_depth = loop {
                    if let Some(&d) = ancestors.get(&node) {
                        break d;
                    }
                    node = self.parent[node].expect("trees share a root");
                };
                out[pair_index(n, a, b)] =
                    (depth[self.leaves[a]] - lca_depth) + (depth[self.leaves[b]] - lca_depth);
            }
        }
        out
    }
}

/// Parse Newick text (standard grammar, branch lengths required on every
/// non-root edge, leaf labels required, quoted labels supported).
pub fn parse_newick(text: &str) -> Result<NewickTree, NewickError> {
    let mut parser = Parser { bytes: text.as_bytes(), pos: 0 };
    let mut tree = NewickTree {
        parent: Vec::new(),
        branch: Vec::new(),
        label: Vec::new(),
        leaves: Vec::new(),
    };
    parser.skip_ws();
    parser.subtree(&mut tree, None)?;
    parser.skip_ws();
    parser.expect(b';')?;
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(parser.error("trailing content after `;`"));
    }
    Ok(tree)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> NewickError {
        NewickError::Parse { position: self.pos, message: message.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|b| b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), NewickError> {
        if self.peek() == Some(byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected `{}`", byte as char)))
        }
    }

    /// Parse one subtree; `parent = None` means the root (branch length
    /// optional and ignored there by convention).
    fn subtree(
        &mut self,
        tree: &mut NewickTree,
        parent: Option<usize>,
    ) -> Result<usize, NewickError> {
        let id = tree.parent.len();
        tree.parent.push(parent);
        tree.branch.push(0.0);
        tree.label.push(None);

        self.skip_ws();
        if self.peek() == Some(b'(') {
            self.pos += 1;
            loop {
                self.subtree(tree, Some(id))?;
                self.skip_ws();
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.error("expected `,` or `)`")),
                }
            }
            self.skip_ws();
            // Optional internal-node label, kept but unused.
            tree.label[id] = self.name()?;
        } else {
            let start = self.pos;
            let name = self.name()?;
            if name.is_none() {
                return Err(NewickError::UnnamedLeaf { position: start });
            }
            tree.label[id] = name;
            tree.leaves.push(id);
        }

        self.skip_ws();
        if self.peek() == Some(b':') {
            self.pos += 1;
            tree.branch[id] = self.number()?;
        } else if parent.is_some() {
            return Err(self.error("missing branch length"));
        }
        Ok(id)
    }

    fn name(&mut self) -> Result<Option<String>, NewickError> {
        self.skip_ws();
        if self.peek() == Some(b'\'') {
            self.pos += 1;
            let mut out = String::new();
            loop {
                match self.peek() {
                    Some(b'\'') if self.bytes.get(self.pos + 1) == Some(&b'\'') => {
                        out.push('\'');
                        self.pos += 2;
                    }
                    Some(b'\'') => {
                        self.pos += 1;
                        return Ok(Some(out));
                    }
                    Some(b) => {
                        out.push(b as char);
                        self.pos += 1;
                    }
                    None => return Err(self.error("unterminated quoted label")),
                }
            }
        }
        let start = self.pos;
        while self.peek().is_some_and(|b| {
            !b.is_ascii_whitespace() && !b"()[]':;,".contains(&b)
        }) {
            self.pos += 1;
        }
        if self.pos == start {
            Ok(None)
        } else {
            Ok(Some(
                std::str::from_utf8(&self.bytes[start..self.pos])
                    .map_err(|_| self.error("label is not valid UTF-8"))?
                    .to_string(),
            ))
        }
    }

    fn number(&mut self) -> Result<f64, NewickError> {
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|b| b.is_ascii_digit() || b"+-.eE".contains(&b))
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.error("expected a branch length"))
    }
}

/// Parse a Newick tree and map its leaf-to-leaf path distances back onto a
/// level ladder. Returns the leaf labels (left-to-right) and the flat level
/// matrix over that leaf order. Distances must land within `1e-6` relative
/// of a ladder value.
pub fn levels_from_newick(
    text: &str,
    ladder: &LevelLadder,
) -> Result<(Vec<String>, Vec<usize>), NewickError> {
    let tree = parse_newick(text)?;
    let labels = tree.leaf_labels();
    for (idx, label) in labels.iter().enumerate() {
        if labels[..idx].contains(label) {
            return Err(NewickError::DuplicateLeaf(label.clone()));
        }
    }
    let mut levels = Vec::new();
    for distance in tree.leaf_distances() {
        let level = ladder.nearest_level(distance);
        let value = ladder.value(level);
        if (distance - value).abs() > 1e-6 * value.max(1.0) {
            return Err(NewickError::UnmatchedDistance { distance });
        }
        levels.push(level);
    }
    Ok((labels, levels))
}
