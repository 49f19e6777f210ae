//! Offline-optimal benchmark: maximum-weight bipartite matching between
//! buyers and sellers whose presence intervals overlap.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{Offer, OfferId, Side};
use crate::money::Money;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    /// Index into [`OverlapGraph::buyers`].
    pub buyer: usize,
    /// Index into [`OverlapGraph::sellers`].
    pub seller: usize,
    pub weight: Money,
}

/// Buyer–seller pairs that could trade with positive surplus.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OverlapGraph {
    pub buyers: Vec<OfferId>,
    pub sellers: Vec<OfferId>,
    pub edges: Vec<Edge>,
}

pub fn build_overlap_graph(offers: &[Offer]) -> OverlapGraph {
    let buyers: Vec<&Offer> = offers.iter().filter(|o| o.side == Side::Buy).collect();
    let sellers: Vec<&Offer> = offers.iter().filter(|o| o.side == Side::Sell).collect();
    let mut edges = Vec::new();
    for (i, b) in buyers.iter().enumerate() {
        for (j, s) in sellers.iter().enumerate() {
            let overlap = b.arrival.max(s.arrival) <= b.depart.min(s.depart);
            let weight = b.value + s.value;
            if overlap && weight > Money::ZERO {
                edges.push(Edge {
                    buyer: i,
                    seller: j,
                    weight,
                });
            }
        }
    }
    OverlapGraph {
        buyers: buyers.iter().map(|o| o.id).collect(),
        sellers: sellers.iter().map(|o| o.id).collect(),
        edges,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OptimalMatching {
    /// `(buyer, seller, weight)` sorted by buyer id.
    pub pairs: Vec<(OfferId, OfferId, Money)>,
    pub surplus: Money,
}

/// Exact maximum-weight matching on the overlap graph of `offers`.
pub fn optimal_match(offers: &[Offer]) -> OptimalMatching {
    let graph = build_overlap_graph(offers);
    optimal_match_graph(&graph)
}

pub fn optimal_match_graph(graph: &OverlapGraph) -> OptimalMatching {
    if graph.edges.is_empty() {
        return OptimalMatching::default();
    }
    // Only vertices with at least one edge matter.
    let mut buyer_ix = vec![usize::MAX; graph.buyers.len()];
    let mut seller_ix = vec![usize::MAX; graph.sellers.len()];
    let (mut rows, mut cols) = (Vec::new(), Vec::new());
    for e in &graph.edges {
        if buyer_ix[e.buyer] == usize::MAX {
            buyer_ix[e.buyer] = rows.len();
            rows.push(e.buyer);
        }
        if seller_ix[e.seller] == usize::MAX {
            seller_ix[e.seller] = cols.len();
            cols.push(e.seller);
        }
    }
    let transpose = rows.len() > cols.len();
    let (n, m) = if transpose {
        (cols.len(), rows.len())
    } else {
        (rows.len(), cols.len())
    };
    let mut cost = vec![0i64; n * m];
    for e in &graph.edges {
        let (b, s) = (buyer_ix[e.buyer], seller_ix[e.seller]);
        let (r, c) = if transpose { (s, b) } else { (b, s) };
        cost[r * m + c] = -e.weight.micros();
    }
    let assignment = min_cost_assignment(&cost, n, m);

    let mut pairs = Vec::new();
    for (r, &c) in assignment.iter().enumerate() {
        let w = -cost[r * m + c];
        if w > 0 {
            let (b, s) = if transpose {
                (rows[c], cols[r])
            } else {
                (rows[r], cols[c])
            };
            pairs.push((graph.buyers[b], graph.sellers[s], Money::from_micros(w)));
        }
    }
    pairs.sort();
    let surplus = pairs.iter().map(|p| p.2).sum();
    OptimalMatching { pairs, surplus }
}

/// Hungarian algorithm with potentials on an `n x m` cost matrix, `n <= m`.
/// Returns the column assigned to each row.
fn min_cost_assignment(cost: &[i64], n: usize, m: usize) -> Vec<usize> {
    debug_assert!(n <= m);
    const INF: i64 = i64::MAX / 4;
    // 1-based with a virtual column 0.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![INF; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = INF);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let row = &cost[(i0 - 1) * m..i0 * m];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}
