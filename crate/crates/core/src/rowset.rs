use std::cmp::Ordering;
use std::fmt;

/// A set of human-category (row) indices over `[0, len)`.
///
/// Ordering is by cardinality first, then lexicographically on the sorted
/// index list. This is the tie-break order used when several retained sets
/// attain the same loss.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RowSet {
    len: usize,
    words: Vec<u64>,
}

impl RowSet {
    pub fn empty(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut set = Self::empty(len);
        for i in 0..len {
            set.insert(i);
        }
        set
    }

    /// Panics if an index is out of range.
    pub fn from_indices<I: IntoIterator<Item = usize>>(len: usize, indices: I) -> Self {
        let mut set = Self::empty(len);
        for i in indices {
            set.insert(i);
        }
        set
    }

    /// Builds a set from a bit mask where bit `b` selects `rows[b]`.
    pub fn from_mask(len: usize, rows: &[usize], mask: u64) -> Self {
        let mut set = Self::empty(len);
        for (b, &row) in rows.iter().enumerate() {
            if mask >> b & 1 == 1 {
                set.insert(row);
            }
        }
        set
    }

    /// Size of the universe, not the number of members.
    pub fn universe(&self) -> usize {
        self.len
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len, "row {i} out of range 0..{}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        if i < self.len {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn toggle(&mut self, i: usize) {
        assert!(i < self.len, "row {i} out of range 0..{}", self.len);
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.contains(i))
    }

    pub fn indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn union(&self, other: &RowSet) -> RowSet {
        assert_eq!(self.len, other.len);
        RowSet {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }

    pub fn is_subset(&self, other: &RowSet) -> bool {
        self.len == other.len && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}

impl Ord for RowSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count()
            .cmp(&other.count())
            .then_with(|| self.iter().cmp(other.iter()))
            .then_with(|| self.len.cmp(&other.len))
    }
}

impl PartialOrd for RowSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for RowSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}
