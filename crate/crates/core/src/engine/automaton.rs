//! Multi-pattern literal matcher: an Aho-Corasick automaton with a dense
//! transition table and a memchr-based skip loop for the root state.
//!
//! Construction is deterministic for a given pattern list. Matching walks the
//! haystack once; every occurrence of every pattern is reported by pattern
//! index, so a pattern that occurs several times is reported several times
//! and callers deduplicate per record. Case-insensitive matching folds ASCII
//! only: patterns are inserted pre-folded and haystack bytes are folded
//! during the walk.

use memchr::{memchr, memchr2, memchr3};

const ROOT: u32 = 0;
const ABSENT: u32 = u32::MAX;

/// Immutable matcher over a fixed pattern list.
pub struct Automaton {
    /// Dense DFA: `table[state * 256 + byte]` is the next state.
    table: Vec<u32>,
    /// Flat output lists: pattern indexes for `state` live at
    /// `out_data[out_offsets[state]..out_offsets[state + 1]]`.
    out_offsets: Vec<u32>,
    out_data: Vec<u32>,
    /// ASCII case folding applied to haystack bytes before each step.
    fold_case: bool,
    /// Bytes that move the root state somewhere; drives the skip loop.
    root_bytes: Vec<u8>,
}

impl Automaton {
    /// Builds the automaton. Patterns must be non-empty; the pattern index
    /// reported by `for_each_match` is the position in `patterns`.
    pub fn build(patterns: &[&[u8]], fold_case: bool) -> Automaton {
        assert!(patterns.iter().all(|p| !p.is_empty()), "empty pattern");

        // Goto trie in the dense table; ABSENT marks missing transitions
        // until the BFS pass below completes them.
        let mut table: Vec<u32> = vec![ABSENT; 256];
        let mut own: Vec<Vec<u32>> = vec![Vec::new()];
        let mut states = 1u32;
        let mut folded = Vec::new();
        for (idx, pattern) in patterns.iter().enumerate() {
            let bytes: &[u8] = if fold_case {
                folded.clear();
                folded.extend(pattern.iter().map(u8::to_ascii_lowercase));
                &folded
            } else {
                pattern
            };
            let mut state = ROOT;
            for &b in bytes {
                let slot = state as usize * 256 + b as usize;
                if table[slot] == ABSENT {
                    table.extend(std::iter::repeat_n(ABSENT, 256));
                    own.push(Vec::new());
                    table[slot] = states;
                    states += 1;
                }
                state = table[slot];
            }
            own[state as usize].push(idx as u32);
        }

        // BFS: failure links, output closure over suffix links, and
        // completion of the goto table into a full DFA.
        let mut fail = vec![ROOT; states as usize];
        let mut queue = std::collections::VecDeque::new();
        for b in 0..256usize {
            let s = table[b];
            if s == ABSENT {
                table[b] = ROOT;
            } else {
                queue.push_back(s);
            }
        }
        let mut outputs: Vec<Vec<u32>> = own;
        while let Some(s) = queue.pop_front() {
            let f = fail[s as usize];
            if !outputs[f as usize].is_empty() {
                let inherited = outputs[f as usize].clone();
                outputs[s as usize].extend(inherited);
            }
            for b in 0..256usize {
                let slot = s as usize * 256 + b;
                let t = table[slot];
                if t == ABSENT {
                    table[slot] = table[f as usize * 256 + b];
                } else {
                    fail[t as usize] = table[f as usize * 256 + b];
                    queue.push_back(t);
                }
            }
        }

        let mut out_offsets = Vec::with_capacity(states as usize + 1);
        let mut out_data = Vec::new();
        out_offsets.push(0);
        for list in &outputs {
            out_data.extend_from_slice(list);
            out_offsets.push(out_data.len() as u32);
        }

        let mut root_bytes: Vec<u8> = (0..=255u8).filter(|&b| table[b as usize] != ROOT).collect();
        if fold_case {
            // The skip loop scans raw bytes, so cover both cases of every
            // letter that can leave the root.
            let mut expanded: Vec<u8> = root_bytes
                .iter()
                .flat_map(|&b| [b, b.to_ascii_uppercase()])
                .collect();
            expanded.sort_unstable();
            expanded.dedup();
            root_bytes = expanded;
        }

        Automaton {
            table,
            out_offsets,
            out_data,
            fold_case,
            root_bytes,
        }
    }

    /// Calls `emit` with the pattern index of every occurrence in `haystack`.
    pub fn for_each_match(&self, haystack: &[u8], mut emit: impl FnMut(u32)) {
        let mut state = ROOT;
        let mut i = 0;
        while i < haystack.len() {
            if state == ROOT {
                match self.skip_from(haystack, i) {
                    Some(j) => i = j,
                    None => return,
                }
            }
            let b = if self.fold_case {
                haystack[i].to_ascii_lowercase()
            } else {
                haystack[i]
            };
            state = self.table[state as usize * 256 + b as usize];
            let lo = self.out_offsets[state as usize] as usize;
            let hi = self.out_offsets[state as usize + 1] as usize;
            for &pattern in &self.out_data[lo..hi] {
                emit(pattern);
            }
            i += 1;
        }
    }

    /// From the root state every byte outside `root_bytes` is a self-loop,
    /// so the walk may jump straight to the next byte that can make
    /// progress. Worth it only while the candidate set stays memchr-sized.
    fn skip_from(&self, haystack: &[u8], i: usize) -> Option<usize> {
        let rest = &haystack[i..];
        let found = match self.root_bytes.as_slice() {
            [] => None,
            [a] => memchr(*a, rest),
            [a, b] => memchr2(*a, *b, rest),
            [a, b, c] => memchr3(*a, *b, *c, rest),
            _ => Some(0),
        };
        found.map(|j| i + j)
    }

    /// Approximate heap footprint, dominated by the transition table.
    pub fn memory_bytes(&self) -> usize {
        self.table.len() * 4 + self.out_data.len() * 4 + self.out_offsets.len() * 4
    }

    pub fn state_count(&self) -> usize {
        self.out_offsets.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matches(patterns: &[&str], fold: bool, hay: &str) -> Vec<u32> {
        let bytes: Vec<&[u8]> = patterns.iter().map(|p| p.as_bytes()).collect();
        let a = Automaton::build(&bytes, fold);
        let mut out = Vec::new();
        a.for_each_match(hay.as_bytes(), |p| out.push(p));
        out.sort_unstable();
        out
    }

    #[test]
    fn finds_overlapping_and_nested_patterns() {
        // "abcabc" contains "abc" twice; "abcabcabc" holds both patterns.
        assert_eq!(matches(&["abc", "abcabc"], false, "abcabcabc"), vec![0, 0, 0, 1, 1]);
        assert_eq!(matches(&["aba"], false, "ababa"), vec![0, 0]);
    }

    #[test]
    fn suffix_outputs_are_inherited() {
        // Finding "she" must also report "he".
        assert_eq!(matches(&["she", "he"], false, "she"), vec![0, 1]);
    }

    #[test]
    fn respects_case_mode() {
        assert_eq!(matches(&["Error"], false, "error ERROR Error"), vec![0]);
        assert_eq!(matches(&["Error"], true, "error ERROR Error"), vec![0, 0, 0]);
    }

    #[test]
    fn empty_haystack_and_no_patterns() {
        assert_eq!(matches(&["x"], false, ""), Vec::<u32>::new());
        let a = Automaton::build(&[], false);
        let mut hit = false;
        a.for_each_match(b"anything", |_| hit = true);
        assert!(!hit);
    }

    #[test]
    fn skip_loop_agrees_with_plain_walk() {
        // One rare start byte exercises the memchr path; a broad pattern set
        // disables it. Both must agree with a naive count.
        let hay = "aaaa qq7zz aaaa qq7zz qq8zz";
        assert_eq!(matches(&["qq7zz"], false, hay), vec![0, 0]);
        let broad: Vec<String> = (b'a'..=b'z').map(|c| format!("{}q", c as char)).collect();
        let refs: Vec<&str> = broad.iter().map(String::as_str).collect();
        let got = matches(&refs, false, hay);
        // 26 distinct start bytes disable the skip loop; "qq" occurs once in
        // each of the three planted tokens.
        assert_eq!(got.len(), 3, "got {got:?}");
    }

    #[test]
    fn duplicate_patterns_report_both_indexes() {
        assert_eq!(matches(&["dup", "dup"], false, "a dup b"), vec![0, 1]);
    }
}
