//! Minimum-cost perfect matching between current and predicted UAV-BS
//! positions.
//!
//! [`solve_min_matching`] is a Kuhn–Munkres (Hungarian) solver with vertex
//! labels `A` on current positions and `B` on predicted positions, kept
//! feasible (`A[i] + B[j] <= w[i][j]`) throughout. Labels start at
//! `A[i] = min_j w[i][j]`, `B[j] = 0`. [`enumerate_all`] lists every
//! permutation for small instances and doubles as an exhaustive oracle.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{haversine_m, GeoPoint};

/// Largest `n` accepted by [`enumerate_all`] (10! = 3,628,800 schemes).
pub const MAX_ENUMERATE: usize = 10;

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("{current} current positions but {predicted} predicted positions")]
    LengthMismatch { current: usize, predicted: usize },
    #[error("malformed cost matrix: {0}")]
    Malformed(String),
    #[error("n = {0} exceeds the enumeration limit of {MAX_ENUMERATE}")]
    TooLarge(usize),
}

/// Square matrix of non-negative finite reposition costs, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    n: usize,
    w: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, w: Vec<f64>) -> Result<Self, MatchingError> {
        if n == 0 {
            return Err(MatchingError::Malformed("empty matrix".into()));
        }
        if w.len() != n * n {
            return Err(MatchingError::Malformed(format!("expected {} entries, found {}", n * n, w.len())));
        }
        if let Some((k, v)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(MatchingError::Malformed(format!(
                "entry ({}, {}) = {v} is not a finite non-negative cost",
                k / n,
                k % n
            )));
        }
        Ok(Self { n, w })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatchingError> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(MatchingError::Malformed(format!("row of length {} in a {n}x{n} matrix", r.len())));
        }
        Self::new(n, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.w.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// `Σ_i w[i][perm[i]]`, summed in row order.
    pub fn cost_of(&self, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }

    /// Parses the standalone text form: a first line holding `n`, then `n`
    /// comma-separated rows of `n` costs.
    pub fn parse_csv(text: &str) -> Result<Self, MatchingError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| MatchingError::Malformed("empty input".into()))?;
        let n: usize = header
            .trim_end_matches(',')
            .parse()
            .map_err(|_| MatchingError::Malformed(format!("first line {header:?} is not a size")))?;
        let rows = lines
            .enumerate()
            .map(|(r, line)| {
                line.split(',')
                    .map(|f| {
                        f.trim()
                            .parse::<f64>()
                            .map_err(|_| MatchingError::Malformed(format!("row {r}: {f:?} is not a number")))
                    })
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        if rows.len() != n {
            return Err(MatchingError::Malformed(format!("header says {n} rows, found {}", rows.len())));
        }
        Self::from_rows(&rows)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", self.n);
        for row in self.w.chunks(self.n) {
            s.push_str(&row.iter().map(f64::to_string).join(","));
            s.push('\n');
        }
        s
    }
}

/// Builds `w[i][j] = haversine(current[i], predicted[j])`.
pub fn build_cost_matrix(current: &[GeoPoint], predicted: &[GeoPoint]) -> Result<CostMatrix, MatchingError> {
    if current.len() != predicted.len() || current.is_empty() {
        return Err(MatchingError::LengthMismatch {
            current: current.len(),
            predicted: predicted.len(),
        });
    }
    let w = current
        .iter()
        .flat_map(|&c| predicted.iter().map(move |&p| haversine_m(c, p)))
        .collect();
    CostMatrix::new(current.len(), w)
}

/// A perfect matching: UAV `i` flies from current position `i` to predicted
/// position `perm[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingScheme {
    pub perm: Vec<usize>,
    #[serde(rename = "total_cost_m")]
    pub total_cost: f64,
}

impl MatchingScheme {
    pub fn from_perm(costs: &CostMatrix, perm: Vec<usize>) -> Self {
        let total_cost = costs.cost_of(&perm);
        Self { perm, total_cost }
    }
}

/// Vertex labels of the two sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    /// On current positions (rows).
    pub a: Vec<f64>,
    /// On predicted positions (columns).
    pub b: Vec<f64>,
}

impl Labels {
    /// Largest violation of `a[i] + b[j] <= w[i][j]`; non-positive when feasible.
    pub fn max_violation(&self, costs: &CostMatrix) -> f64 {
        let n = costs.n();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.a[i] + self.b[j] - costs.get(i, j))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn solve_min_matching(costs: &CostMatrix) -> MatchingScheme {
    solve_min_matching_traced(costs, |_| {})
}

/// Same as [`solve_min_matching`], calling `observe` with the labels after
/// initialization and after every label update.
pub fn solve_min_matching_traced(costs: &CostMatrix, mut observe: impl FnMut(&Labels)) -> MatchingScheme {
    let n = costs.n();
    let mut labels = Labels {
        a: (0..n).map(|i| costs.row(i).iter().copied().fold(f64::INFINITY, f64::min)).collect(),
        b: vec![0.0; n],
    };
    observe(&labels);

    // owner[j]: row matched to column j
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for root in 0..n {
        // slack[j] = min over tree rows i of w[i][j] - a[i] - b[j]
        let mut slack = vec![f64::INFINITY; n];
        let mut via: Vec<Option<usize>> = vec![None; n];
        let mut in_tree = vec![false; n];
        // predecessor column of each tree column on the alternating path
        let mut prev_col: Vec<Option<usize>> = vec![None; n];
        let mut row = root;
        let mut from: Option<usize> = None;
        let end = loop {
            for j in 0..n {
                if in_tree[j] {
                    continue;
                }
                let s = costs.get(row, j) - labels.a[row] - labels.b[j];
                if s < slack[j] {
                    slack[j] = s;
                    via[j] = from;
                }
            }
            let (col, delta) = (0..n)
                .filter(|&j| !in_tree[j])
                .map(|j| (j, slack[j]))
                .fold((usize::MAX, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });

            // tree rows up by delta, tree columns down by delta
            if delta != 0.0 {
                labels.a[root] += delta;
                for j in 0..n {
                    if in_tree[j] {
                        labels.a[owner[j].unwrap()] += delta;
                        labels.b[j] -= delta;
                    } else {
                        slack[j] -= delta;
                    }
                }
                observe(&labels);
            }

            in_tree[col] = true;
            prev_col[col] = via[col];
            match owner[col] {
                None => break col,
                Some(r) => {
                    row = r;
                    from = Some(col);
                }
            }
        };

        // flip the alternating path ending at the free column
        let mut col = end;
        loop {
            match prev_col[col] {
                Some(p) => {
                    owner[col] = owner[p];
                    col = p;
                }
                None => {
                    owner[col] = Some(root);
                    break;
                }
            }
        }
    }

    let mut perm = vec![0; n];
    for (j, i) in owner.into_iter().enumerate() {
        perm[i.expect("perfect matching")] = j;
    }
    MatchingScheme::from_perm(costs, perm)
}

/// Every perfect matching with its cost, ascending by cost; equal costs keep
/// lexicographic permutation order.
pub fn enumerate_all(costs: &CostMatrix) -> Result<Vec<MatchingScheme>, MatchingError> {
    let n = costs.n();
    if n > MAX_ENUMERATE {
        return Err(MatchingError::TooLarge(n));
    }
    let mut all: Vec<MatchingScheme> = (0..n)
        .permutations(n)
        .map(|perm| MatchingScheme::from_perm(costs, perm))
        .collect();
    all.sort_by(|a, b| a.total_cost.total_cmp(&b.total_cost));
    Ok(all)
}

/// JSON document for the full enumeration.
#[derive(Debug, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub n: usize,
    pub schemes: Vec<MatchingScheme>,
}
