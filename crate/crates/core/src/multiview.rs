//! Pair schedules over M views.
//!
//! A [`ViewGraph`] lists the view pairs an objective covers: a star around
//! one core view, or every unordered pair. The multiview loss is the sum of
//! the symmetric two-view loss over those pairs, and
//! [`partition_weights`] counts how many pair objectives see each region of
//! the views' information diagram.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::autodiff::Var;
use crate::critic::Temperature;
use crate::error::{Error, Result};
use crate::losses::{symmetric_two_view_loss, Negatives};

/// Largest view count [`partition_weights`] enumerates (2^M − 1 regions).
pub const MAX_PARTITION_VIEWS: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphMode {
    CoreView(String),
    FullGraph,
}

impl FromStr for GraphMode {
    type Err = Error;

    /// `full` or `core:<name>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            return Ok(Self::FullGraph);
        }
        match s.strip_prefix("core:") {
            Some(name) if !name.is_empty() => Ok(Self::CoreView(name.to_string())),
            _ => Err(Error::Config(format!(
                "graph mode must be `full` or `core:<view>`, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for GraphMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CoreView(c) => write!(f, "core:{c}"),
            Self::FullGraph => f.write_str("full"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewGraph {
    view_names: Vec<String>,
    mode: GraphMode,
    pairs: Vec<(usize, usize)>,
    weights: Vec<f64>,
}

/// Builds the pair list: `(core, other)` for each other view, or every
/// `(i, j)` with `i < j`. Views are ordered lexicographically.
pub fn build_graph<S: AsRef<str>>(names: &[S], mode: GraphMode) -> Result<ViewGraph> {
    let mut view_names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
    view_names.sort();
    if view_names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate view names in {view_names:?}")));
    }
    if view_names.len() < 2 {
        return Err(Error::Config(format!(
            "a view graph needs at least two views, got {}",
            view_names.len()
        )));
    }
    let m = view_names.len();
    let pairs: Vec<(usize, usize)> = match &mode {
        GraphMode::FullGraph => (0..m)
            .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
            .collect(),
        GraphMode::CoreView(core) => {
            let c = view_names.iter().position(|n| n == core).ok_or_else(|| {
                Error::Config(format!("core view {core:?} is not one of {view_names:?}"))
            })?;
            (0..m).filter(|&j| j != c).map(|j| (c, j)).collect()
        }
    };
    let weights = vec![1.0; pairs.len()];
    Ok(ViewGraph {
        view_names,
        mode,
        pairs,
        weights,
    })
}

impl ViewGraph {
    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }

    pub fn mode(&self) -> &GraphMode {
        &self.mode
    }

    /// Pairs as indices into [`ViewGraph::view_names`].
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair_names(&self) -> Vec<(&str, &str)> {
        self.pairs
            .iter()
            .map(|&(a, b)| (self.view_names[a].as_str(), self.view_names[b].as_str()))
            .collect()
    }

    /// `a-b` labels used in logs.
    pub fn pair_labels(&self) -> Vec<String> {
        self.pair_names()
            .into_iter()
            .map(|(a, b)| format!("{a}-{b}"))
            .collect()
    }

    pub fn pair_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Overrides the per-pair loss weights (default 1).
    pub fn with_pair_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.pairs.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config(format!(
                "need {} non-negative pair weights, got {weights:?}",
                self.pairs.len()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    /// Core view name, when the graph is a star.
    pub fn core(&self) -> Option<&str> {
        match &self.mode {
            GraphMode::CoreView(c) => Some(c),
            GraphMode::FullGraph => None,
        }
    }
}

/// Which views are present for each row of a batch.
pub type PresenceMask = BTreeMap<String, Vec<bool>>;

/// The summed objective and each pair's symmetric loss (in graph order;
/// `None` when a mask left fewer than two rows for the pair).
pub struct MultiviewLoss<'t> {
    pub total: Var<'t>,
    pub per_pair: Vec<Option<Var<'t>>>,
}

/// `Σ_{(i,j) ∈ pairs} w_ij · L(V_i, V_j)`.
///
/// `embeds` holds each view's `[n×d]` embeddings for the same `n` samples.
/// `negatives` supplies each pair's negatives for the rows that take part
/// (all rows, or with a mask only rows where both views are present).
/// A missing view drops only the pairs that touch it for that row; the
/// remaining terms are not rescaled.
pub fn multiview_loss<'t, F>(
    graph: &ViewGraph,
    embeds: &[(String, Var<'t>)],
    mut negatives: F,
    mask: Option<&PresenceMask>,
    tau: Temperature,
) -> Result<MultiviewLoss<'t>>
where
    F: FnMut(usize, &[usize]) -> Result<Negatives<'t>>,
{
    let lookup = |name: &str| {
        embeds
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::GraphMismatch(format!("no embeddings for view {name:?}")))
    };
    let mut total: Option<Var<'t>> = None;
    let mut per_pair = Vec::with_capacity(graph.pairs.len());
    for (idx, ((a, b), w)) in graph.pair_names().into_iter().zip(&graph.weights).enumerate() {
        let (za, zb) = (lookup(a)?, lookup(b)?);
        let n = za.shape()[0];
        let rows: Vec<usize> = match mask {
            None => (0..n).collect(),
            Some(m) => {
                let pa = m.get(a);
                let pb = m.get(b);
                (0..n)
                    .filter(|&i| pa.is_none_or(|p| p[i]) && pb.is_none_or(|p| p[i]))
                    .collect()
            }
        };
        let full = rows.len() == n;
        let negs = negatives(idx, &rows)?;
        if rows.len() < 2 || (rows.is_empty() && !matches!(negs, Negatives::InBatch)) {
            per_pair.push(None);
            continue;
        }
        let (za, zb) = if full {
            (za, zb)
        } else {
            (za.gather_rows(&rows)?, zb.gather_rows(&rows)?)
        };
        let loss = symmetric_two_view_loss(za, zb, negs, tau)?;
        let weighted = if *w == 1.0 { loss } else { loss.scale(*w) };
        total = Some(match total {
            None => weighted,
            Some(t) => t.add(weighted)?,
        });
        per_pair.push(Some(loss));
    }
    let total = total.ok_or_else(|| {
        Error::GraphMismatch("every pair was dropped by the presence mask".into())
    })?;
    Ok(MultiviewLoss { total, per_pair })
}

/// Weight of every information-diagram region, keyed by the bitmask of the
/// views sharing it (bit `i` = `view_names[i]`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionWeights {
    view_names: Vec<String>,
    weights: BTreeMap<u32, usize>,
}

impl PartitionWeights {
    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }

    /// Weight of the region shared by exactly `views`.
    pub fn weight(&self, views: &[&str]) -> Result<usize> {
        let mut mask = 0u32;
        for v in views {
            let i = self
                .view_names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| Error::Config(format!("unknown view {v:?}")))?;
            mask |= 1 << i;
        }
        self.weights
            .get(&mask)
            .copied()
            .ok_or_else(|| Error::Config("empty region".into()))
    }

    /// `(region mask, weight)` for all 2^M − 1 regions.
    pub fn iter(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.weights.iter().map(|(k, v)| (*k, *v))
    }
}

/// For every non-empty subset `R` of views, the number of graph pairs with
/// both endpoints in `R`.
pub fn partition_weights(graph: &ViewGraph) -> Result<PartitionWeights> {
    let m = graph.view_names.len();
    if m > MAX_PARTITION_VIEWS {
        return Err(Error::Parameter(format!(
            "partition weights enumerate 2^M − 1 regions; M = {m} exceeds the cap of {MAX_PARTITION_VIEWS}"
        )));
    }
    let weights = (1u32..(1 << m))
        .map(|region| {
            let w = graph
                .pairs
                .iter()
                .filter(|&&(i, j)| region & (1 << i) != 0 && region & (1 << j) != 0)
                .count();
            (region, w)
        })
        .collect();
    Ok(PartitionWeights {
        view_names: graph.view_names.clone(),
        weights,
    })
}
