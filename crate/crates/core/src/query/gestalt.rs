//! Gestalt (Ratcliff/Obershelp) pattern matching.
//!
//! Semantics follow the classic sequence-matcher helper without any junk
//! heuristic: find the longest matching block (earliest in the first
//! argument on ties, then earliest in the second), then recurse on the
//! unmatched left and right remainders.

/// A matched block: `a[a_start..a_start+len] == b[b_start..b_start+len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchBlock {
    pub a_start: usize,
    pub b_start: usize,
    pub len: usize,
}

/// Longest common block within `a[alo..ahi]` and `b[blo..bhi]`.
///
/// Scans by end position in `a`, then in `b`, keeping the first strictly
/// longer run, which yields the earliest block in `a` and then in `b`.
#[allow(clippy::needless_range_loop)]
fn longest_match(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> MatchBlock {
    let mut best = MatchBlock { a_start: alo, b_start: blo, len: 0 };
    // run_len[j - blo] = length of the common run ending at (i - 1, j).
    let width = bhi - blo;
    let mut prev = vec![0usize; width + 1];
    let mut curr = vec![0usize; width + 1];
    for i in alo..ahi {
        for j in blo..bhi {
            let slot = j - blo + 1;
            if a[i] == b[j] {
                let k = prev[slot - 1] + 1;
                curr[slot] = k;
                if k > best.len {
                    best = MatchBlock { a_start: i + 1 - k, b_start: j + 1 - k, len: k };
                }
            } else {
                curr[slot] = 0;
            }
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    best
}

/// All matching blocks in order of position in `a`.
pub fn matching_blocks(a: &[char], b: &[char]) -> Vec<MatchBlock> {
    let mut blocks = Vec::new();
    let mut stack = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let m = longest_match(a, b, alo, ahi, blo, bhi);
        if m.len == 0 {
            continue;
        }
        blocks.push(m);
        stack.push((alo, m.a_start, blo, m.b_start));
        stack.push((m.a_start + m.len, ahi, m.b_start + m.len, bhi));
    }
    blocks.sort_by_key(|m| (m.a_start, m.b_start));
    blocks
}

/// `2·M / (|a| + |b|)` over characters; two empty strings score 1.0.
pub fn similarity_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let matched: usize = matching_blocks(&a, &b).iter().map(|m| m.len).sum();
    2.0 * matched as f64 / total as f64
}
