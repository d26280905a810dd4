//! Input model: vertices, specified pairwise distances, weights, and the
//! derived ladder of distinct distance values.
//!
//! Vertices are dense 0-based indices internally; the original string labels
//! are kept for output. Distances are defined on the specified pair set `E`.
//! In [`Mode::Kpartite`] the unspecified pairs must form the "same part"
//! relation of a partition of the vertices (so `E` is the edge set of a
//! complete multipartite graph); in the other two modes every pair must be
//! specified.
//!
//! Levels index the distinct input distances in decreasing order: level 1 is
//! the largest distance, level `L` the smallest. Working in level indices
//! keeps every equality test exact; conversion back to real distances happens
//! only at output boundaries.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Problem flavor. It decides which invariants the input must satisfy and
/// which rounding parameters are recommended downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    /// Every pair specified, all weights 1.
    Complete,
    /// Every pair specified; weights are arbitrary non-negative reals that
    /// satisfy the triangle inequality.
    Weighted,
    /// Specified pairs form a complete multipartite graph; pairs inside a
    /// part are unspecified and cost nothing to fill.
    Kpartite,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Complete => "complete",
            Mode::Weighted => "weighted",
            Mode::Kpartite => "kpartite",
        };
        f.write_str(s)
    }
}

/// Number of unordered pairs over `n` vertices.
#[inline]
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Flat index of the unordered pair `(i, j)`, `i < j`, in lexicographic order
/// over all pairs of `0..n`: `(0,1), (0,2), …, (0,n−1), (1,2), …`.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n, "pair_index({i}, {j}) with n = {n}");
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Unordered pairs of `0..n` in lexicographic order; the k-th item has flat
/// index k under [`pair_index`].
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

/// The ladder of distinct input distances, sorted strictly decreasing, plus
/// the level of every specified pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelLadder {
    values: Vec<f64>,
    level_of: Vec<Option<usize>>,
}

impl LevelLadder {
    /// Ladder over an explicit set of distance values (deduplicated and
    /// ordered largest-first); the per-pair level map stays empty.
    pub fn from_values(values: &[f64]) -> LevelLadder {
        assert!(
            !values.is_empty() && values.iter().all(|v| v.is_finite() && *v > 0.0),
            "ladder values must be positive and finite"
        );
        let mut values = values.to_vec();
        values.sort_by(|a, b| b.partial_cmp(a).expect("finite values"));
        values.dedup();
        LevelLadder { values, level_of: Vec::new() }
    }

    /// Number of distinct distances `L` (at least 1 for a valid instance).
    pub fn num_levels(&self) -> usize {
        self.values.len()
    }

    /// Distance value of a 1-based level index.
    pub fn value(&self, level: usize) -> f64 {
        self.values[level - 1]
    }

    /// All ladder values, largest first.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// 1-based level of a specified pair, `None` for unspecified pairs.
    pub fn level_of_pair(&self, pair: usize) -> Option<usize> {
        self.level_of[pair]
    }

    /// Level whose value is closest to `d`; on an exact midpoint the larger
    /// distance (smaller index) wins. Used to absorb float noise when mapping
    /// reconstructed distances (e.g. tree path lengths) back onto the ladder.
    pub fn nearest_level(&self, d: f64) -> usize {
        let mut best = 1;
        let mut gap = (d - self.values[0]).abs();
        for (idx, v) in self.values.iter().enumerate().skip(1) {
            let g = (d - v).abs();
            if g < gap {
                gap = g;
                best = idx + 1;
            }
        }
        best
    }
}

/// A validated problem instance.
///
/// Immutable after construction; safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    n: usize,
    mode: Mode,
    labels: Vec<String>,
    specified: Vec<bool>,
    distance: Vec<f64>,
    weight: Vec<f64>,
    ladder: LevelLadder,
}

/// Errors from parsing or validating an instance.
#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("instance has no vertices")]
    Empty,
    #[error("duplicate vertex label `{label}`")]
    DuplicateLabel { label: String },
    #[error("self-loop at vertex `{label}`")]
    SelfLoop { label: String },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: String, v: String },
    #[error("edge ({u}, {v}): distance {value} is not strictly positive")]
    NonPositiveDistance { u: String, v: String, value: f64 },
    #[error("edge ({u}, {v}): distance or weight is not a finite number")]
    NonFinite { u: String, v: String },
    #[error("edge ({u}, {v}): negative weight {value}")]
    NegativeWeight { u: String, v: String, value: f64 },
    #[error("missing pair ({u}, {v}) in {mode} mode")]
    MissingPair { u: String, v: String, mode: Mode },
    #[error("complete mode requires unit weights: edge ({u}, {v}) has weight {value}")]
    NonUnitWeight { u: String, v: String, value: f64 },
    #[error(
        "unspecified pairs are not a union of parts: ({u}, {v}) and ({v}, {w}) are unspecified \
         but ({u}, {w}) is specified"
    )]
    NotMultipartite { u: String, v: String, w: String },
    #[error(
        "weight triangle inequality violated at ({u}, {v}, {w}): \
         w({u},{v}) = {long} > {a} + {b}"
    )]
    WeightTriangle {
        u: String,
        v: String,
        w: String,
        long: f64,
        a: f64,
        b: f64,
    },
    #[error("matrix is asymmetric at ({u}, {v})")]
    AsymmetricEntry { u: String, v: String },
    #[error("no pair has a specified distance")]
    NoSpecifiedDistances,
}

impl Instance {
    /// Build and validate an instance from explicit edge data.
    ///
    /// `edges` holds `(u, v, distance, weight)` records with 0-based vertex
    /// indices into `labels`. Pairs absent from `edges` are unspecified,
    /// which only [`Mode::Kpartite`] allows.
    ///
    /// # Errors
    ///
    /// Any violated mode invariant: duplicate edges, non-positive distances,
    /// negative weights, missing pairs (complete/weighted), non-unit weights
    /// (complete), a weight triangle violation (weighted), or unspecified
    /// pairs that do not form a partition (k-partite). Each error names the
    /// offending pair or triple.
    pub fn new(
        mode: Mode,
        labels: Vec<String>,
        edges: Vec<(usize, usize, f64, f64)>,
    ) -> Result<Self, InstanceError> {
        let n = labels.len();
        if n == 0 {
            return Err(InstanceError::Empty);
        }
        {
            let mut seen = HashMap::new();
            for (idx, label) in labels.iter().enumerate() {
                if seen.insert(label.clone(), idx).is_some() {
                    return Err(InstanceError::DuplicateLabel {
                        label: label.clone(),
                    });
                }
            }
        }

        let m = pair_count(n);
        let mut specified = vec![false; m];
        let mut distance = vec![0.0; m];
        let mut weight = vec![0.0; m];
        let at = |v: usize| -> String { labels[v].clone() };

        for &(u, v, d, w) in &edges {
            assert!(u < n && v < n, "edge endpoint out of range");
            if u == v {
                return Err(InstanceError::SelfLoop { label: at(u) });
            }
            let (i, j) = if u < v { (u, v) } else { (v, u) };
            let p = pair_index(n, i, j);
            if specified[p] {
                return Err(InstanceError::DuplicateEdge { u: at(i), v: at(j) });
            }
            if !d.is_finite() || !w.is_finite() {
                return Err(InstanceError::NonFinite { u: at(i), v: at(j) });
            }
            if d <= 0.0 {
                return Err(InstanceError::NonPositiveDistance {
                    u: at(i),
                    v: at(j),
                    value: d,
                });
            }
            if w < 0.0 {
                return Err(InstanceError::NegativeWeight {
                    u: at(i),
                    v: at(j),
                    value: w,
                });
            }
            specified[p] = true;
            distance[p] = d;
            weight[p] = w;
        }

        match mode {
            Mode::Complete | Mode::Weighted => {
                for (i, j) in pairs(n) {
                    if !specified[pair_index(n, i, j)] {
                        return Err(InstanceError::MissingPair {
                            u: at(i),
                            v: at(j),
                            mode,
                        });
                    }
                }
            }
            Mode::Kpartite => {
                if !specified.iter().any(|&s| s) {
                    return Err(InstanceError::NoSpecifiedDistances);
                }
                // The relation "pair unspecified" (plus identity) must be an
                // equivalence; transitivity is the only part that can fail.
                let unspec = |a: usize, b: usize| -> bool {
                    let (i, j) = if a < b { (a, b) } else { (b, a) };
                    !specified[pair_index(n, i, j)]
                };
                for u in 0..n {
                    for w in u + 1..n {
                        if unspec(u, w) {
                            continue;
                        }
                        for v in 0..n {
                            if v != u && v != w && unspec(u, v) && unspec(v, w) {
                                return Err(InstanceError::NotMultipartite {
                                    u: at(u),
                                    v: at(v),
                                    w: at(w),
                                });
                            }
                        }
                    }
                }
            }
        }

        if mode == Mode::Complete {
            for (i, j) in pairs(n) {
                let w = weight[pair_index(n, i, j)];
                if w != 1.0 {
                    return Err(InstanceError::NonUnitWeight {
                        u: at(i),
                        v: at(j),
                        value: w,
                    });
                }
            }
        }

        if mode == Mode::Weighted {
            for (i, j) in pairs(n) {
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let (a1, b1) = if i < k { (i, k) } else { (k, i) };
                    let (a2, b2) = if j < k { (j, k) } else { (k, j) };
                    let long = weight[pair_index(n, i, j)];
                    let a = weight[pair_index(n, a1, b1)];
                    let b = weight[pair_index(n, a2, b2)];
                    if long > a + b {
                        return Err(InstanceError::WeightTriangle {
                            u: at(i),
                            v: at(j),
                            w: at(k),
                            long,
                            a,
                            b,
                        });
                    }
                }
            }
        }

        if !specified.iter().any(|&s| s) {
            return Err(InstanceError::NoSpecifiedDistances);
        }

        let ladder = ladder_from(&specified, &distance);
        Ok(Instance {
            n,
            mode,
            labels,
            specified,
            distance,
            weight,
            ladder,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    /// Number of unordered pairs, specified or not.
    pub fn num_pairs(&self) -> usize {
        pair_count(self.n)
    }

    /// Whether the pair with this flat index is in `E`.
    pub fn is_specified(&self, pair: usize) -> bool {
        self.specified[pair]
    }

    pub fn is_specified_pair(&self, i: usize, j: usize) -> bool {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.specified[pair_index(self.n, i, j)]
    }

    /// Input distance of a specified pair.
    pub fn distance(&self, pair: usize) -> Option<f64> {
        self.specified[pair].then(|| self.distance[pair])
    }

    /// Weight of a pair (0 on unspecified pairs).
    pub fn weight(&self, pair: usize) -> f64 {
        self.weight[pair]
    }

    /// The ladder of distinct distances, built during validation.
    pub fn ladder(&self) -> &LevelLadder {
        &self.ladder
    }

    /// 1-based level of a specified pair.
    pub fn input_level(&self, pair: usize) -> Option<usize> {
        self.ladder.level_of_pair(pair)
    }

    /// Part identifier of each vertex in k-partite mode (`None` otherwise).
    /// Parts are numbered by first occurrence, so ids are stable.
    pub fn parts(&self) -> Option<Vec<usize>> {
        if self.mode != Mode::Kpartite {
            return None;
        }
        let mut part = vec![usize::MAX; self.n];
        let mut next = 0;
        for v in 0..self.n {
            if part[v] != usize::MAX {
                continue;
            }
            part[v] = next;
            for u in v + 1..self.n {
                if !self.specified[pair_index(self.n, v, u)] {
                    part[u] = next;
                }
            }
            next += 1;
        }
        Some(part)
    }
}

/// Rebuild the ladder of an instance from scratch (also available as
/// [`Instance::ladder`], computed once at construction).
pub fn build_ladder(inst: &Instance) -> LevelLadder {
    ladder_from(&inst.specified, &inst.distance)
}

fn ladder_from(specified: &[bool], distance: &[f64]) -> LevelLadder {
    let mut values: Vec<f64> = specified
        .iter()
        .zip(distance)
        .filter_map(|(&s, &d)| s.then_some(d))
        .collect();
    // Distinctness is exact float equality: the parsed decimal values are the
    // ground truth and deliberately never get merged by tolerance.
    values.sort_by(|a, b| b.partial_cmp(a).expect("validated finite distances"));
    values.dedup();
    let level_of = specified
        .iter()
        .zip(distance)
        .map(|(&s, &d)| {
            s.then(|| {
                values
                    .iter()
                    .position(|&v| v == d)
                    .expect("specified distance present in ladder")
                    + 1
            })
        })
        .collect();
    LevelLadder { values, level_of }
}

/// A complete assignment of 1-based levels to all pairs: a candidate
/// ultrametric in ladder coordinates. Construction does not check the
/// ultrametric inequality; run [`first_violation_levels`] for that.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Ultrametric {
    n: usize,
    level: Vec<usize>,
}

impl Ultrametric {
    pub fn new(n: usize, level: Vec<usize>) -> Self {
        assert_eq!(level.len(), pair_count(n), "level table has wrong length");
        Ultrametric { n, level }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.level[pair_index(self.n, i, j)]
    }

    pub fn level_by_pair(&self, pair: usize) -> usize {
        self.level[pair]
    }

    pub fn levels(&self) -> &[usize] {
        &self.level
    }
}

/// First triple violating the ultrametric condition in level coordinates,
/// or `None` if every triple satisfies it.
///
/// Larger level means smaller distance, so the condition "the largest
/// distance of a triangle is attained at least twice" becomes "the smallest
/// level is attained at least twice". Returns the lexicographically smallest
/// violating triple `(i, j, k)`, 0-based.
pub fn first_violation_levels(n: usize, level: &[usize]) -> Option<(usize, usize, usize)> {
    assert_eq!(level.len(), pair_count(n));
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let a = level[pair_index(n, i, j)];
                let b = level[pair_index(n, i, k)];
                let c = level[pair_index(n, j, k)];
                let lo = a.min(b).min(c);
                let hits = (a == lo) as u8 + (b == lo) as u8 + (c == lo) as u8;
                if hits < 2 {
                    return Some((i, j, k));
                }
            }
        }
    }
    None
}

/// First triple violating the ultrametric condition on a full distance
/// matrix (flat pair-indexed, exact equality), or `None`.
pub fn first_violation_distances(n: usize, dist: &[f64]) -> Option<(usize, usize, usize)> {
    assert_eq!(dist.len(), pair_count(n));
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let a = dist[pair_index(n, i, j)];
                let b = dist[pair_index(n, i, k)];
                let c = dist[pair_index(n, j, k)];
                let hi = a.max(b).max(c);
                let hits = (a == hi) as u8 + (b == hi) as u8 + (c == hi) as u8;
                if hits < 2 {
                    return Some((i, j, k));
                }
            }
        }
    }
    None
}

/// Whether the candidate satisfies the ultrametric condition on every triple.
pub fn is_ultrametric(u: &Ultrametric) -> bool {
    first_violation_levels(u.n, &u.level).is_none()
}

/// Errors when scoring a candidate against an instance.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CandidateError {
    #[error("candidate covers {got} vertices, instance has {want}")]
    SizeMismatch { got: usize, want: usize },
    #[error("pair index {pair} has level {level}, outside the ladder range 1..={max}")]
    LevelOutOfRange { pair: usize, level: usize, max: usize },
}

/// Total weight of specified pairs on which the candidate's level differs
/// from the input level.
pub fn disagreement_cost(inst: &Instance, u: &Ultrametric) -> Result<f64, CandidateError> {
    if u.n != inst.n {
        return Err(CandidateError::SizeMismatch {
            got: u.n,
            want: inst.n,
        });
    }
    let max = inst.ladder.num_levels();
    let mut cost = 0.0;
    for p in 0..inst.num_pairs() {
        let lvl = u.level[p];
        if lvl < 1 || lvl > max {
            return Err(CandidateError::LevelOutOfRange {
                pair: p,
                level: lvl,
                max,
            });
        }
        if let Some(input) = inst.ladder.level_of_pair(p) {
            if input != lvl {
                cost += inst.weight[p];
            }
        }
    }
    Ok(cost)
}

/// Input file layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// One edge per line: `u,v,distance[,weight]`; `#` starts a comment.
    Edges,
    /// First line `n`, then `n` comma-separated rows; `*` marks an
    /// unspecified pair (k-partite only); the diagonal is ignored.
    Matrix,
}

/// Parse and validate an instance from text.
///
/// Vertex labels map to dense indices in order of first appearance (edge
/// list) or positionally as `1..n` (matrix).
///
/// # Errors
///
/// Syntax problems carry the 1-based line number; semantic problems (see
/// [`Instance::new`]) carry the offending labels.
pub fn parse_instance(text: &str, mode: Mode, format: InputFormat) -> Result<Instance, InstanceError> {
    match format {
        InputFormat::Edges => parse_edge_list(text, mode),
        InputFormat::Matrix => parse_matrix(text, mode),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(idx, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((idx + 1, line))
    })
}

fn parse_edge_list(text: &str, mode: Mode) -> Result<Instance, InstanceError> {
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges: Vec<(usize, usize, f64, f64)> = Vec::new();

    for (line, body) in content_lines(text) {
        let fields: Vec<&str> = body.split(',').map(str::trim).collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(InstanceError::Syntax {
                line,
                message: format!(
                    "expected `u,v,distance[,weight]`, found {} field(s)",
                    fields.len()
                ),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(InstanceError::Syntax {
                line,
                message: "empty vertex label".into(),
            });
        }
        let mut vertex = |label: &str| -> usize {
            *index.entry(label.to_string()).or_insert_with(|| {
                labels.push(label.to_string());
                labels.len() - 1
            })
        };
        let u = vertex(fields[0]);
        let v = vertex(fields[1]);
        let d: f64 = fields[2].parse().map_err(|_| InstanceError::Syntax {
            line,
            message: format!("bad distance `{}`", fields[2]),
        })?;
        let w: f64 = if fields.len() == 4 {
            fields[3].parse().map_err(|_| InstanceError::Syntax {
                line,
                message: format!("bad weight `{}`", fields[3]),
            })?
        } else {
            1.0
        };
        edges.push((u, v, d, w));
    }

    Instance::new(mode, labels, edges)
}

fn parse_matrix(text: &str, mode: Mode) -> Result<Instance, InstanceError> {
    let mut lines = content_lines(text);
    let (first_line, first) = lines.next().ok_or(InstanceError::Empty)?;
    let n: usize = first.parse().map_err(|_| InstanceError::Syntax {
        line: first_line,
        message: format!("expected the vertex count, found `{first}`"),
    })?;
    if n == 0 {
        return Err(InstanceError::Empty);
    }

    let mut cells: Vec<Vec<Option<f64>>> = Vec::with_capacity(n);
    let mut last_line = first_line;
    for row in 0..n {
        let (line, body) = lines.next().ok_or(InstanceError::Syntax {
            line: last_line,
            message: format!("expected {n} matrix rows, found {row}"),
        })?;
        last_line = line;
        let fields: Vec<&str> = body.split(',').map(str::trim).collect();
        if fields.len() != n {
            return Err(InstanceError::Syntax {
                line,
                message: format!("expected {n} entries, found {}", fields.len()),
            });
        }
        let mut parsed = Vec::with_capacity(n);
        for f in fields {
            if f == "*" {
                if mode != Mode::Kpartite {
                    return Err(InstanceError::Syntax {
                        line,
                        message: format!("unspecified entry `*` is not allowed in {mode} mode"),
                    });
                }
                parsed.push(None);
            } else {
                let d: f64 = f.parse().map_err(|_| InstanceError::Syntax {
                    line,
                    message: format!("bad entry `{f}`"),
                })?;
                parsed.push(Some(d));
            }
        }
        cells.push(parsed);
    }
    if let Some((line, _)) = lines.next() {
        return Err(InstanceError::Syntax {
            line,
            message: "unexpected content after the matrix".into(),
        });
    }

    let labels: Vec<String> = (1..=n).map(|v| v.to_string()).collect();
    let mut edges = Vec::new();
    for (i, j) in pairs(n) {
        match (cells[i][j], cells[j][i]) {
            (Some(a), Some(b)) if a == b => edges.push((i, j, a, 1.0)),
            (None, None) => {}
            _ => {
                return Err(InstanceError::AsymmetricEntry {
                    u: labels[i].clone(),
                    v: labels[j].clone(),
                })
            }
        }
    }
    Instance::new(mode, labels, edges)
}

/// Canonical edge-list text for an instance: specified pairs in index order,
/// weight column present exactly when some weight differs from 1 or the mode
/// is weighted. Parsing this text reproduces the instance whose labels are
/// already in first-appearance order (the canonical form).
pub fn serialize_instance(inst: &Instance) -> String {
    let explicit_weights = inst.mode == Mode::Weighted
        || (0..inst.num_pairs()).any(|p| inst.is_specified(p) && inst.weight(p) != 1.0);
    let mut out = String::new();
    for (i, j) in pairs(inst.n) {
        let p = pair_index(inst.n, i, j);
        if !inst.specified[p] {
            continue;
        }
        out.push_str(inst.label(i));
        out.push(',');
        out.push_str(inst.label(j));
        out.push(',');
        out.push_str(&format!("{}", inst.distance[p]));
        if explicit_weights {
            out.push_str(&format!(",{}", inst.weight[p]));
        }
        out.push('\n');
    }
    out
}

/// Render a full distance matrix (flat pair-indexed values) in the matrix
/// input format, with zeros on the diagonal.
pub fn format_matrix(n: usize, dist: &[f64]) -> String {
    assert_eq!(dist.len(), pair_count(n));
    let mut out = format!("{n}\n");
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            if i == j {
                row.push("0".to_string());
            } else {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                row.push(format!("{}", dist[pair_index(n, a, b)]));
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete3() -> Instance {
        parse_instance("1,2,1.0\n1,3,2.0\n2,3,2.0\n", Mode::Complete, InputFormat::Edges).unwrap()
    }

    #[test]
    fn pair_indexing_is_lexicographic() {
        let n = 5;
        for (idx, (i, j)) in pairs(n).enumerate() {
            assert_eq!(pair_index(n, i, j), idx);
        }
        assert_eq!(pairs(n).count(), pair_count(n));
    }

    #[test]
    fn edge_list_parses_into_ladder_and_levels() {
        let inst = complete3();
        assert_eq!(inst.n(), 3);
        assert_eq!(inst.ladder().values(), &[2.0, 1.0]);
        assert_eq!(inst.input_level(pair_index(3, 0, 1)), Some(2));
        assert_eq!(inst.input_level(pair_index(3, 0, 2)), Some(1));
        assert_eq!(inst.weight(0), 1.0);
    }

    #[test]
    fn kpartite_parts_are_recovered() {
        // 4 vertices, omit (1,2) and (3,4): parts {1,2} and {3,4}.
        let text = "4\n0,*,1,1\n*,0,2,1\n1,2,0,*\n1,1,*,0\n";
        let inst = parse_instance(text, Mode::Kpartite, InputFormat::Matrix).unwrap();
        assert_eq!(inst.parts(), Some(vec![0, 0, 1, 1]));
        // Complete multipartite reconstruction: specified iff parts differ.
        let parts = inst.parts().unwrap();
        for (i, j) in pairs(inst.n()) {
            assert_eq!(
                inst.is_specified_pair(i, j),
                parts[i] != parts[j],
                "pair ({i},{j})"
            );
        }
    }

    #[test]
    fn kpartite_rejects_non_partition() {
        // (1,2) and (2,3) unspecified but (1,3) specified: not transitive.
        let text = "1,3,1.0\n1,4,1.0\n2,4,1.0\n3,4,1.0\n";
        let err = parse_instance(text, Mode::Kpartite, InputFormat::Edges).unwrap_err();
        match err {
            InstanceError::NotMultipartite { .. } => {}
            other => panic!("expected NotMultipartite, got {other:?}"),
        }
    }

    #[test]
    fn weighted_triangle_violation_is_reported() {
        let text = "1,2,1.0,5\n1,3,1.0,1\n2,3,1.0,1\n";
        let err = parse_instance(text, Mode::Weighted, InputFormat::Edges).unwrap_err();
        match err {
            InstanceError::WeightTriangle { u, v, w, long, .. } => {
                assert_eq!((u.as_str(), v.as_str(), w.as_str()), ("1", "2", "3"));
                assert_eq!(long, 5.0);
            }
            other => panic!("expected WeightTriangle, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_offender() {
        let dup = parse_instance("a,b,1\na,b,2\na,c,1\nb,c,1\n", Mode::Complete, InputFormat::Edges);
        assert!(matches!(dup, Err(InstanceError::DuplicateEdge { .. })));

        let neg = parse_instance("a,b,-1\n", Mode::Complete, InputFormat::Edges);
        assert!(matches!(neg, Err(InstanceError::NonPositiveDistance { .. })));

        let negw = parse_instance("a,b,1,-2\n", Mode::Weighted, InputFormat::Edges);
        assert!(matches!(negw, Err(InstanceError::NegativeWeight { .. })));

        let missing = parse_instance("a,b,1\na,c,1\n", Mode::Complete, InputFormat::Edges);
        match missing {
            Err(InstanceError::MissingPair { .. }) => {}
            other => panic!("expected MissingPair, got {other:?}"),
        }

        let selfloop = parse_instance("a,a,1\n", Mode::Complete, InputFormat::Edges);
        assert!(matches!(selfloop, Err(InstanceError::SelfLoop { .. })));

        let badw = parse_instance("a,b,1,3\nb,c,1\na,c,1\n", Mode::Complete, InputFormat::Edges);
        assert!(matches!(badw, Err(InstanceError::NonUnitWeight { .. })));
    }

    #[test]
    fn zero_weights_are_legal_in_weighted_mode() {
        let inst =
            parse_instance("a,b,1,0\nb,c,2,0\na,c,2,0\n", Mode::Weighted, InputFormat::Edges)
                .unwrap();
        assert_eq!(inst.weight(0), 0.0);
    }

    #[test]
    fn matrix_round_trips_and_rejects_asymmetry() {
        let text = "3\n0,1.0,2.0\n1.0,0,2.0\n2.0,2.0,0\n";
        let inst = parse_instance(text, Mode::Complete, InputFormat::Matrix).unwrap();
        assert_eq!(inst.labels(), &["1", "2", "3"]);
        assert_eq!(inst.ladder().values(), &[2.0, 1.0]);

        let bad = "3\n0,1.0,2.0\n1.5,0,2.0\n2.0,2.0,0\n";
        let err = parse_instance(bad, Mode::Complete, InputFormat::Matrix).unwrap_err();
        assert!(matches!(err, InstanceError::AsymmetricEntry { .. }));

        let star = "3\n0,*,2.0\n*,0,2.0\n2.0,2.0,0\n";
        assert!(parse_instance(star, Mode::Complete, InputFormat::Matrix).is_err());
        assert!(parse_instance(star, Mode::Kpartite, InputFormat::Matrix).is_ok());
    }

    #[test]
    fn ladder_examples() {
        let one = parse_instance("a,b,7.5\na,c,7.5\nb,c,7.5\n", Mode::Complete, InputFormat::Edges)
            .unwrap();
        assert_eq!(one.ladder().values(), &[7.5]);

        let three = parse_instance(
            "a,b,3\na,c,1\na,d,2\nb,c,2\nb,d,3\nc,d,3\n",
            Mode::Complete,
            InputFormat::Edges,
        )
        .unwrap();
        assert_eq!(three.ladder().values(), &[3.0, 2.0, 1.0]);
        assert_eq!(three.ladder().num_levels(), 3);
    }

    #[test]
    fn violation_detection_finds_the_smallest_triple() {
        // Levels (2,2,1): two small distances, one large — violating.
        let v = first_violation_levels(3, &[2, 2, 1]);
        assert_eq!(v, Some((0, 1, 2)));
        // Levels (1,1,2): two large distances tie at the max — fine.
        assert_eq!(first_violation_levels(3, &[1, 1, 2]), None);
        // n = 2: no triples.
        assert_eq!(first_violation_levels(2, &[1]), None);

        assert_eq!(first_violation_distances(3, &[2.0, 2.0, 1.0]), None);
        assert_eq!(first_violation_distances(3, &[1.0, 1.0, 2.0]), Some((0, 1, 2)));
    }

    #[test]
    fn disagreement_cost_counts_changed_specified_pairs() {
        let inst = complete3(); // levels (2,1,1)
        let same = Ultrametric::new(3, vec![2, 1, 1]);
        assert_eq!(disagreement_cost(&inst, &same).unwrap(), 0.0);

        let one_change = Ultrametric::new(3, vec![1, 1, 1]);
        assert_eq!(disagreement_cost(&inst, &one_change).unwrap(), 1.0);

        let bad = Ultrametric::new(3, vec![3, 1, 1]);
        assert!(matches!(
            disagreement_cost(&inst, &bad),
            Err(CandidateError::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn weighted_disagreement_uses_weights() {
        // Input levels (2,2,1); the candidate changes only the weight-3 edge,
        // so the cost is that weight alone.
        let inst = parse_instance(
            "a,b,1.0,3\na,c,1.0,2\nb,c,2.0,1\n",
            Mode::Weighted,
            InputFormat::Edges,
        )
        .unwrap();
        let u = Ultrametric::new(3, vec![1, 2, 1]);
        assert_eq!(disagreement_cost(&inst, &u).unwrap(), 3.0);
    }

    #[test]
    fn serialize_then_parse_is_identity_on_canonical_form() {
        let texts = [
            ("a,b,1.0\na,c,2.0\nb,c,2.0\n", Mode::Complete),
            ("a,b,1,2\nb,c,2,1\na,c,2,1.5\n", Mode::Weighted),
            ("1,3,1.0\n1,4,1.0\n2,3,2.0\n2,4,1.0\n", Mode::Kpartite),
        ];
        for (text, mode) in texts {
            let parsed = parse_instance(text, mode, InputFormat::Edges).unwrap();
            let canonical = parse_instance(&serialize_instance(&parsed), mode, InputFormat::Edges)
                .unwrap();
            let again =
                parse_instance(&serialize_instance(&canonical), mode, InputFormat::Edges).unwrap();
            assert_eq!(canonical, again);
        }
    }

    #[test]
    fn unspecified_pairs_only_exist_in_kpartite() {
        let text = "4\n0,*,1,1\n*,0,2,1\n1,2,0,*\n1,1,*,0\n";
        let inst = parse_instance(text, Mode::Kpartite, InputFormat::Matrix).unwrap();
        assert!(!inst.is_specified_pair(0, 1));
        assert_eq!(inst.distance(pair_index(4, 0, 1)), None);
        assert_eq!(inst.weight(pair_index(4, 0, 1)), 0.0);
    }
}
