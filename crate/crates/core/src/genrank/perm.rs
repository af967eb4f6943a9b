use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Position `j` of the prompt (DocID `j + 1`) shows `selected[order[j]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    pub order: Vec<usize>,
    pub seed_tag: String,
}

impl Permutation {
    pub fn identity(k: usize) -> Self {
        Permutation {
            order: (0..k).collect(),
            seed_tag: "identity".into(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, o)| i == *o)
    }

    pub fn is_valid(&self) -> bool {
        let mut seen = vec![false; self.order.len()];
        self.order
            .iter()
            .all(|&o| o < seen.len() && !std::mem::replace(&mut seen[o], true))
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// `k!`, saturating at `u64::MAX`.
pub fn factorial(k: usize) -> u64 {
    (1..=k as u64)
        .try_fold(1u64, |acc, i| acc.checked_mul(i))
        .unwrap_or(u64::MAX)
}

/// All permutations of `0..k` in lexicographic order.
pub fn all_permutations(k: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..k).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..cur.len()).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..cur.len())
            .rev()
            .find(|&j| cur[j] > cur[i - 1])
            .expect("successor exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

fn tagged(orders: Vec<Vec<usize>>, seed: u64) -> Vec<Permutation> {
    orders
        .into_iter()
        .enumerate()
        .map(|(i, order)| Permutation {
            order,
            seed_tag: format!("{seed}:{i}"),
        })
        .collect()
}

/// `count` distinct permutations of `0..k`, or all `k!` of them when fewer exist.
pub fn sample_permutations(k: usize, count: usize, seed: u64) -> Vec<Permutation> {
    let count = count.max(1);
    if factorial(k) <= count as u64 {
        return tagged(all_permutations(k), seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut orders = Vec::with_capacity(count);
    let mut order: Vec<usize> = (0..k).collect();
    while orders.len() < count {
        order.shuffle(&mut rng);
        if seen.insert(order.clone()) {
            orders.push(order.clone());
        }
    }
    tagged(orders, seed)
}

/// Inference orders: the identity first, then distinct non-identity samples.
pub fn inference_permutations(k: usize, m: usize, seed: u64) -> Vec<Permutation> {
    let m = m.max(1);
    let identity = Permutation::identity(k);
    if factorial(k) <= m as u64 {
        let mut rest: Vec<Permutation> = tagged(all_permutations(k), seed)
            .into_iter()
            .filter(|p| !p.is_identity())
            .collect();
        rest.insert(0, identity);
        return rest;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<Vec<usize>> = HashSet::from([identity.order.clone()]);
    let mut out = vec![identity];
    let mut order: Vec<usize> = (0..k).collect();
    while out.len() < m {
        order.shuffle(&mut rng);
        if seen.insert(order.clone()) {
            out.push(Permutation {
                order: order.clone(),
                seed_tag: format!("{seed}:{}", out.len()),
            });
        }
    }
    out
}
