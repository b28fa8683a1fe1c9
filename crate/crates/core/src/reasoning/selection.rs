use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::acl::ProposalBody;
use crate::cost::Cost;
use crate::strips::Literal;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    NoProposals,
    /// Index of the cheapest proposal covering the whole goal.
    Full(usize),
    /// Indices picked by greedy weighted set cover, in pick order.
    Cover(Vec<usize>),
    Uncoverable { missing: Vec<Literal> },
}

impl Selection {
    pub fn winners(&self) -> Vec<usize> {
        match self {
            Selection::Full(i) => vec![*i],
            Selection::Cover(v) => v.clone(),
            _ => Vec::new(),
        }
    }
}

fn covered_set(p: &ProposalBody) -> BTreeSet<Literal> {
    p.covered.iter().filter_map(|s| s.parse().ok()).collect()
}

/// `a / na` against `b / nb` without rounding.
fn cmp_ratio(a: Cost, na: usize, b: Cost, nb: usize) -> Ordering {
    let lhs = a.numer() as u128 * b.denom() as u128 * nb as u128;
    let rhs = b.numer() as u128 * a.denom() as u128 * na as u128;
    lhs.cmp(&rhs)
}

/// Chooses among proposals for `goal`.
///
/// If some proposal covers the whole goal, the cheapest one wins, ties going
/// to the smallest proposer id. Otherwise proposals are picked greedily by
/// cost per newly covered literal until the goal is covered.
pub fn select_proposals(goal: &[Literal], proposals: &[ProposalBody]) -> Selection {
    if proposals.is_empty() {
        return Selection::NoProposals;
    }
    let goal: BTreeSet<Literal> = goal.iter().cloned().collect();
    let covers: Vec<BTreeSet<Literal>> = proposals.iter().map(covered_set).collect();

    let full = (0..proposals.len())
        .filter(|&i| goal.is_subset(&covers[i]))
        .min_by(|&a, &b| {
            proposals[a]
                .cost
                .cmp(&proposals[b].cost)
                .then_with(|| proposals[a].proposer.cmp(&proposals[b].proposer))
                .then(a.cmp(&b))
        });
    if let Some(i) = full {
        return Selection::Full(i);
    }

    let mut remaining = goal;
    let mut picked = Vec::new();
    while !remaining.is_empty() {
        let best = (0..proposals.len())
            .filter(|i| !picked.contains(i))
            .map(|i| (i, covers[i].intersection(&remaining).count()))
            .filter(|&(_, n)| n > 0)
            .min_by(|&(a, na), &(b, nb)| {
                cmp_ratio(proposals[a].cost, na, proposals[b].cost, nb)
                    .then_with(|| proposals[a].proposer.cmp(&proposals[b].proposer))
                    .then(a.cmp(&b))
            });
        match best {
            Some((i, _)) => {
                remaining.retain(|l| !covers[i].contains(l));
                picked.push(i);
            }
            None => return Selection::Uncoverable { missing: remaining.into_iter().collect() },
        }
    }
    Selection::Cover(picked)
}
