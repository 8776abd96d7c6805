use super::stats::{cosine_similarity, hoeffding_check};
use super::HeuristicVerdict;
use crate::tree::{NodeId, PrefixTree};

/// Alergia's frequency test on the outgoing symbols and the final count,
/// repeated on child pairs that share a symbol down to depth `k`.
pub fn alergia_consistency(
    tree: &PrefixTree,
    a: NodeId,
    b: NodeId,
    alpha: f64,
    k: usize,
) -> HeuristicVerdict {
    let (na, nb) = (tree.node(a), tree.node(b));
    if na.size == 0 || nb.size == 0 {
        return HeuristicVerdict::accept(0.0, 0);
    }
    let mut deepest = 0;
    if !subtree_consistent(tree, a, b, alpha, k, 0, &mut deepest) {
        return HeuristicVerdict::reject(deepest + 1);
    }
    let freq = |n: &crate::tree::Node| -> Vec<f64> {
        n.counts().iter().map(|&c| c as f64 / n.size as f64).collect()
    };
    HeuristicVerdict::accept(cosine_similarity(&freq(na), &freq(nb)), deepest + 1)
}

fn subtree_consistent(
    tree: &PrefixTree,
    a: NodeId,
    b: NodeId,
    alpha: f64,
    k: usize,
    depth: usize,
    deepest: &mut usize,
) -> bool {
    *deepest = (*deepest).max(depth);
    let (na, nb) = (tree.node(a), tree.node(b));
    if na.size == 0 || nb.size == 0 {
        return true;
    }
    let counts_ok = na
        .counts()
        .iter()
        .zip(nb.counts())
        .all(|(&c1, &c2)| hoeffding_check(c1, na.size, c2, nb.size, alpha));
    if !counts_ok {
        return false;
    }
    if depth >= k {
        return true;
    }
    // Children are sorted by symbol; walk both lists together.
    let (ca, cb) = (na.children(), nb.children());
    let (mut i, mut j) = (0, 0);
    while i < ca.len() && j < cb.len() {
        match ca[i].0.cmp(&cb[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if !subtree_consistent(tree, ca[i].1, cb[j].1, alpha, k, depth + 1, deepest) {
                    return false;
                }
                i += 1;
                j += 1;
            }
        }
    }
    true
}
