//! Nondeterministic finite automata over code-point ranges.

use std::collections::{HashSet, VecDeque};
use std::fmt;

const MAX_CHAR: u32 = 0x10FFFF;

/// A set of characters as sorted, disjoint, non-adjacent inclusive ranges.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct CharSet {
    ranges: Vec<(u32, u32)>,
}

impl CharSet {
    pub fn empty() -> CharSet {
        CharSet::default()
    }

    pub fn full() -> CharSet {
        CharSet {
            ranges: vec![(0, MAX_CHAR)],
        }
    }

    pub fn single(c: char) -> CharSet {
        CharSet {
            ranges: vec![(c as u32, c as u32)],
        }
    }

    pub fn from_ranges(ranges: impl IntoIterator<Item = (char, char)>) -> CharSet {
        let mut v: Vec<(u32, u32)> = ranges
            .into_iter()
            .map(|(a, b)| (a as u32, b as u32))
            .collect();
        v.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::with_capacity(v.len());
        for (lo, hi) in v {
            match out.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        CharSet { ranges: out }
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.ranges == [(0, MAX_CHAR)]
    }

    pub fn contains(&self, c: char) -> bool {
        let c = c as u32;
        self.ranges.iter().any(|&(lo, hi)| lo <= c && c <= hi)
    }

    pub fn ranges(&self) -> impl Iterator<Item = (char, char)> + '_ {
        // Surrogate code points never come from `char` inputs, so clamping
        // them away is only cosmetic.
        self.ranges.iter().filter_map(|&(lo, hi)| {
            let lo =
                char::from_u32(lo).or_else(|| char::from_u32(0xE000).filter(|_| hi >= 0xE000))?;
            let hi = char::from_u32(hi).unwrap_or('\u{D7FF}');
            (lo <= hi).then_some((lo, hi))
        })
    }

    pub fn complement(&self) -> CharSet {
        let mut out = Vec::new();
        let mut next = 0u32;
        for &(lo, hi) in &self.ranges {
            if lo > next {
                out.push((next, lo - 1));
            }
            next = hi + 1;
        }
        if next <= MAX_CHAR {
            out.push((next, MAX_CHAR));
        }
        CharSet { ranges: out }
    }

    pub fn intersect(&self, other: &CharSet) -> CharSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.ranges.len() && j < other.ranges.len() {
            let (a, b) = (self.ranges[i], other.ranges[j]);
            let lo = a.0.max(b.0);
            let hi = a.1.min(b.1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if a.1 < b.1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        CharSet { ranges: out }
    }

    pub fn union(&self, other: &CharSet) -> CharSet {
        let mut v = self.ranges.clone();
        v.extend_from_slice(&other.ranges);
        v.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::with_capacity(v.len());
        for (lo, hi) in v {
            match out.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        CharSet { ranges: out }
    }

    pub fn intersects(&self, other: &CharSet) -> bool {
        !self.intersect(other).is_empty()
    }
}

impl fmt::Display for CharSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_full() {
            return f.write_str(".");
        }
        f.write_str("[")?;
        for (lo, hi) in self.ranges() {
            if lo == hi {
                write!(f, "{}", lo.escape_default())?;
            } else {
                write!(f, "{}-{}", lo.escape_default(), hi.escape_default())?;
            }
        }
        f.write_str("]")
    }
}

#[derive(Clone, Debug, Default)]
struct NState {
    eps: Vec<u32>,
    edges: Vec<(CharSet, u32)>,
}

/// A regular language as an ε-NFA with one start and one accepting state.
#[derive(Clone, Debug)]
pub struct RegLang {
    states: Vec<NState>,
    start: u32,
    accept: u32,
}

/// Incremental construction: add states and edges, then `finish`.
#[derive(Clone, Debug, Default)]
pub struct NfaBuilder {
    states: Vec<NState>,
}

impl NfaBuilder {
    pub fn new() -> NfaBuilder {
        NfaBuilder::default()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&mut self) -> u32 {
        self.states.push(NState::default());
        (self.states.len() - 1) as u32
    }

    pub fn eps(&mut self, from: u32, to: u32) {
        if from != to {
            self.states[from as usize].eps.push(to);
        }
    }

    pub fn edge(&mut self, from: u32, set: CharSet, to: u32) {
        if !set.is_empty() {
            self.states[from as usize].edges.push((set, to));
        }
    }

    /// `Σ*` between two states.
    pub fn any_string(&mut self, from: u32, to: u32) {
        let mid = self.state();
        self.eps(from, mid);
        self.edge(mid, CharSet::full(), mid);
        self.eps(mid, to);
    }

    /// Copies `lang` in between `from` and `to`.
    pub fn embed(&mut self, lang: &RegLang, from: u32, to: u32) {
        let base = self.states.len() as u32;
        for st in &lang.states {
            self.states.push(NState {
                eps: st.eps.iter().map(|t| t + base).collect(),
                edges: st
                    .edges
                    .iter()
                    .map(|(s, t)| (s.clone(), t + base))
                    .collect(),
            });
        }
        self.eps(from, lang.start + base);
        self.eps(lang.accept + base, to);
    }

    pub fn finish(self, start: u32, accept: u32) -> RegLang {
        RegLang {
            states: self.states,
            start,
            accept,
        }
    }
}

impl RegLang {
    fn build(f: impl FnOnce(&mut NfaBuilder, u32, u32)) -> RegLang {
        let mut b = NfaBuilder::new();
        let (s, a) = (b.state(), b.state());
        f(&mut b, s, a);
        b.finish(s, a)
    }

    /// The empty language.
    pub fn nothing() -> RegLang {
        RegLang::build(|_, _, _| {})
    }

    pub fn epsilon() -> RegLang {
        RegLang::build(|b, s, a| b.eps(s, a))
    }

    pub fn chars(set: CharSet) -> RegLang {
        RegLang::build(|b, s, a| b.edge(s, set, a))
    }

    pub fn any_char() -> RegLang {
        RegLang::chars(CharSet::full())
    }

    pub fn any_string() -> RegLang {
        RegLang::build(|b, s, a| b.any_string(s, a))
    }

    pub fn literal(text: &str) -> RegLang {
        RegLang::build(|b, s, a| {
            let mut cur = s;
            for c in text.chars() {
                let next = b.state();
                b.edge(cur, CharSet::single(c), next);
                cur = next;
            }
            b.eps(cur, a);
        })
    }

    pub fn concat(&self, other: &RegLang) -> RegLang {
        RegLang::build(|b, s, a| {
            let mid = b.state();
            b.embed(self, s, mid);
            b.embed(other, mid, a);
        })
    }

    pub fn union(&self, other: &RegLang) -> RegLang {
        RegLang::build(|b, s, a| {
            b.embed(self, s, a);
            b.embed(other, s, a);
        })
    }

    pub fn star(&self) -> RegLang {
        RegLang::build(|b, s, a| {
            let hub = b.state();
            b.eps(s, hub);
            b.embed(self, hub, hub);
            b.eps(hub, a);
        })
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    fn closure(&self, set: &mut Vec<u32>, seen: &mut [bool]) {
        let mut i = 0;
        while i < set.len() {
            let st = set[i];
            for &t in &self.states[st as usize].eps {
                if !seen[t as usize] {
                    seen[t as usize] = true;
                    set.push(t);
                }
            }
            i += 1;
        }
    }

    pub fn accepts(&self, input: &str) -> bool {
        let n = self.states.len();
        let mut seen = vec![false; n];
        let mut cur = vec![self.start];
        seen[self.start as usize] = true;
        self.closure(&mut cur, &mut seen);
        for c in input.chars() {
            let mut seen = vec![false; n];
            let mut next = Vec::new();
            for &st in &cur {
                for (set, t) in &self.states[st as usize].edges {
                    if set.contains(c) && !seen[*t as usize] {
                        seen[*t as usize] = true;
                        next.push(*t);
                    }
                }
            }
            self.closure(&mut next, &mut seen);
            if next.is_empty() {
                return false;
            }
            cur = next;
        }
        cur.contains(&self.accept)
    }

    pub fn nullable(&self) -> bool {
        self.accepts("")
    }

    fn forward(&self) -> Vec<bool> {
        let mut seen = vec![false; self.states.len()];
        let mut stack = vec![self.start];
        seen[self.start as usize] = true;
        while let Some(s) = stack.pop() {
            let st = &self.states[s as usize];
            for t in st.eps.iter().chain(st.edges.iter().map(|(_, t)| t)) {
                if !seen[*t as usize] {
                    seen[*t as usize] = true;
                    stack.push(*t);
                }
            }
        }
        seen
    }

    fn backward(&self) -> Vec<bool> {
        let n = self.states.len();
        let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (s, st) in self.states.iter().enumerate() {
            for t in st.eps.iter().chain(st.edges.iter().map(|(_, t)| t)) {
                rev[*t as usize].push(s as u32);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.accept];
        seen[self.accept as usize] = true;
        while let Some(s) = stack.pop() {
            for &p in &rev[s as usize] {
                if !seen[p as usize] {
                    seen[p as usize] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }

    pub fn is_empty(&self) -> bool {
        !self.forward()[self.accept as usize]
    }

    /// Characters that can begin a nonempty word of the language.
    pub fn first_chars(&self) -> CharSet {
        let live = self.backward();
        let n = self.states.len();
        let mut seen = vec![false; n];
        let mut cur = vec![self.start];
        seen[self.start as usize] = true;
        self.closure(&mut cur, &mut seen);
        let mut out = CharSet::empty();
        for &st in &cur {
            for (set, t) in &self.states[st as usize].edges {
                if live[*t as usize] {
                    out = out.union(set);
                }
            }
        }
        out
    }

    /// All prefixes of words of the language.
    pub fn prefix_closure(&self) -> RegLang {
        let live = self.backward();
        let mut lang = self.clone();
        let accept = lang.accept;
        for (s, state) in lang.states.iter_mut().enumerate() {
            if live[s] && s as u32 != accept {
                state.eps.push(accept);
            }
        }
        lang
    }

    /// Product construction.
    pub fn intersect(&self, other: &RegLang) -> RegLang {
        let mut b = NfaBuilder::new();
        let mut index = std::collections::HashMap::new();
        let mut queue = VecDeque::new();
        let mut id = |b: &mut NfaBuilder, p: u32, q: u32, queue: &mut VecDeque<(u32, u32)>| {
            *index.entry((p, q)).or_insert_with(|| {
                queue.push_back((p, q));
                b.state()
            })
        };
        let start = id(&mut b, self.start, other.start, &mut queue);
        let mut pairs = Vec::new();
        while let Some((p, q)) = queue.pop_front() {
            let from = id(&mut b, p, q, &mut queue);
            pairs.push((p, q, from));
            let (sp, sq) = (&self.states[p as usize], &other.states[q as usize]);
            for &t in &sp.eps {
                let to = id(&mut b, t, q, &mut queue);
                b.eps(from, to);
            }
            for &t in &sq.eps {
                let to = id(&mut b, p, t, &mut queue);
                b.eps(from, to);
            }
            for (s1, t1) in &sp.edges {
                for (s2, t2) in &sq.edges {
                    let set = s1.intersect(s2);
                    if !set.is_empty() {
                        let to = id(&mut b, *t1, *t2, &mut queue);
                        b.edge(from, set, to);
                    }
                }
            }
        }
        let accept = id(&mut b, self.accept, other.accept, &mut queue);
        b.finish(start, accept)
    }

    /// Whether the intersection is empty, without materializing it.
    pub fn disjoint(&self, other: &RegLang) -> bool {
        let mut seen = HashSet::new();
        let mut stack = vec![(self.start, other.start)];
        seen.insert((self.start, other.start));
        while let Some((p, q)) = stack.pop() {
            if p == self.accept && q == other.accept {
                return false;
            }
            let (sp, sq) = (&self.states[p as usize], &other.states[q as usize]);
            let mut push = |pair: (u32, u32)| {
                if seen.insert(pair) {
                    stack.push(pair);
                }
            };
            for &t in &sp.eps {
                push((t, q));
            }
            for &t in &sq.eps {
                push((p, t));
            }
            for (s1, t1) in &sp.edges {
                for (s2, t2) in &sq.edges {
                    if s1.intersects(s2) {
                        push((*t1, *t2));
                    }
                }
            }
        }
        true
    }
}
