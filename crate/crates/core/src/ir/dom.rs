//! Dominator tree construction.
//!
//! Iterative algorithm of Cooper, Harvey and Kennedy over reverse
//! postorder. Blocks unreachable from the entry are their own immediate
//! dominator and are dominated by nothing else.

use super::inst::BlockId;
use super::module::Function;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomTree {
    idom: Vec<BlockId>,
    reachable: Vec<bool>,
    /// Reverse-postorder number, `usize::MAX` for unreachable blocks.
    rpo_number: Vec<usize>,
}

impl DomTree {
    pub fn compute(f: &Function) -> DomTree {
        let n = f.blocks.len();
        let succs: Vec<Vec<BlockId>> = f.block_ids().map(|b| f.successors(b)).collect();
        let preds = f.predecessors();
        Self::from_edges(n, &succs, &preds)
    }

    /// Builds the tree from explicit successor and predecessor lists with
    /// block 0 as the entry.
    pub fn from_edges(n: usize, succs: &[Vec<BlockId>], preds: &[Vec<BlockId>]) -> DomTree {
        let mut rpo_number = vec![usize::MAX; n];
        let mut postorder = Vec::with_capacity(n);
        if n > 0 {
            let mut visited = vec![false; n];
            let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
            visited[0] = true;
            while let Some((b, next)) = stack.last_mut() {
                let b = *b;
                if let Some(s) = succs[b].get(*next) {
                    *next += 1;
                    let s = s.index();
                    if s < n && !visited[s] {
                        visited[s] = true;
                        stack.push((s, 0));
                    }
                } else {
                    postorder.push(b);
                    stack.pop();
                }
            }
        }
        let rpo: Vec<usize> = postorder.iter().rev().copied().collect();
        for (i, b) in rpo.iter().enumerate() {
            rpo_number[*b] = i;
        }
        let mut idom: Vec<Option<usize>> = vec![None; n];
        if n > 0 {
            idom[0] = Some(0);
        }
        let mut changed = true;
        while changed {
            changed = false;
            for &b in rpo.iter().skip(1) {
                let mut new_idom: Option<usize> = None;
                for p in &preds[b] {
                    let p = p.index();
                    if idom[p].is_none() {
                        continue;
                    }
                    new_idom = Some(match new_idom {
                        None => p,
                        Some(cur) => intersect(&idom, &rpo_number, p, cur),
                    });
                }
                if new_idom.is_some() && idom[b] != new_idom {
                    idom[b] = new_idom;
                    changed = true;
                }
            }
        }
        let reachable: Vec<bool> = rpo_number.iter().map(|r| *r != usize::MAX).collect();
        let idom = idom.iter().enumerate().map(|(b, d)| BlockId(d.unwrap_or(b) as u32)).collect();
        DomTree { idom, reachable, rpo_number }
    }

    pub fn idom(&self, b: BlockId) -> BlockId {
        self.idom[b.index()]
    }

    pub fn is_reachable(&self, b: BlockId) -> bool {
        self.reachable.get(b.index()).copied().unwrap_or(false)
    }

    pub fn unreachable_blocks(&self) -> Vec<BlockId> {
        self.reachable.iter().enumerate().filter(|(_, r)| !**r).map(|(i, _)| BlockId(i as u32)).collect()
    }

    pub fn len(&self) -> usize {
        self.idom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idom.is_empty()
    }

    /// Reflexive dominance.
    pub fn dominates(&self, a: BlockId, b: BlockId) -> bool {
        if a == b {
            return true;
        }
        if !self.is_reachable(a) || !self.is_reachable(b) {
            return false;
        }
        let target = self.rpo_number[a.index()];
        let mut cur = b.index();
        // Dominators have smaller RPO numbers, so the walk can stop early.
        while self.rpo_number[cur] > target {
            let up = self.idom[cur].index();
            if up == cur {
                return false;
            }
            cur = up;
        }
        cur == a.index()
    }

    pub fn strictly_dominates(&self, a: BlockId, b: BlockId) -> bool {
        a != b && self.dominates(a, b)
    }

    /// Reachable blocks in reverse postorder.
    pub fn reverse_postorder(&self) -> Vec<BlockId> {
        let mut v: Vec<(usize, BlockId)> = self
            .rpo_number
            .iter()
            .enumerate()
            .filter(|(_, r)| **r != usize::MAX)
            .map(|(b, r)| (*r, BlockId(b as u32)))
            .collect();
        v.sort();
        v.into_iter().map(|(_, b)| b).collect()
    }
}

fn intersect(idom: &[Option<usize>], rpo: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while rpo[a] > rpo[b] {
            a = idom[a].expect("processed block has an idom");
        }
        while rpo[b] > rpo[a] {
            b = idom[b].expect("processed block has an idom");
        }
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(n: usize, edges: &[(u32, u32)]) -> DomTree {
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for &(a, b) in edges {
            succs[a as usize].push(BlockId(b));
            preds[b as usize].push(BlockId(a));
        }
        DomTree::from_edges(n, &succs, &preds)
    }

    #[test]
    fn single_block() {
        let t = tree(1, &[]);
        assert!(t.dominates(BlockId(0), BlockId(0)));
        assert_eq!(t.idom(BlockId(0)), BlockId(0));
    }

    #[test]
    fn diamond() {
        let t = tree(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(t.idom(BlockId(3)), BlockId(0));
        assert_eq!(t.idom(BlockId(1)), BlockId(0));
        assert_eq!(t.idom(BlockId(2)), BlockId(0));
        assert!(!t.dominates(BlockId(1), BlockId(3)));
    }

    #[test]
    fn added_edge_breaks_dominance() {
        // BB0 -> BB1 -> BB2 -> BB3, then an extra BB1 -> BB3 edge.
        let before = tree(4, &[(0, 1), (1, 2), (2, 3)]);
        assert!(before.dominates(BlockId(2), BlockId(3)));
        let after = tree(4, &[(0, 1), (1, 2), (2, 3), (1, 3)]);
        assert!(!after.dominates(BlockId(2), BlockId(3)));
        assert_eq!(after.idom(BlockId(3)), BlockId(1));
    }

    #[test]
    fn unreachable_blocks_are_isolated() {
        let t = tree(3, &[(0, 1), (2, 1)]);
        assert_eq!(t.unreachable_blocks(), vec![BlockId(2)]);
        assert_eq!(t.idom(BlockId(2)), BlockId(2));
        assert!(!t.dominates(BlockId(0), BlockId(2)));
        assert!(t.dominates(BlockId(2), BlockId(2)));
        assert!(!t.dominates(BlockId(2), BlockId(1)));
    }

    #[test]
    fn loops() {
        let t = tree(4, &[(0, 1), (1, 2), (2, 1), (2, 3)]);
        assert_eq!(t.idom(BlockId(2)), BlockId(1));
        assert_eq!(t.idom(BlockId(3)), BlockId(2));
    }
}
