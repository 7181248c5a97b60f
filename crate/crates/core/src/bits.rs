//! Packed bit vectors used for crossbar lines and lane masks.

use std::fmt;

const WORD: usize = 64;

/// A fixed-length packed bit vector.
///
/// Used both as the storage of one crossbar column (bit `r` = row `r`) and as
/// a lane mask selecting the rows (or columns) a parallel step applies to.
/// Bits past `len` in the last word are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitLine {
    len: usize,
    words: Vec<u64>,
}

impl BitLine {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(WORD)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut line = Self {
            len,
            words: vec![u64::MAX; len.div_ceil(WORD)],
        };
        line.trim();
        line
    }

    /// Line with bits `start..end` set.
    pub fn range(len: usize, start: usize, end: usize) -> Self {
        let mut line = Self::zeros(len);
        for i in start..end.min(len) {
            line.set(i, true);
        }
        line
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(len: usize, indices: I) -> Self {
        let mut line = Self::zeros(len);
        for i in indices {
            line.set(i, true);
        }
        line
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut line = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                line.set(i, true);
            }
        }
        line
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for line of {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range for line of {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    #[inline]
    pub fn toggle(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for line of {}", self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn any(&self) -> bool {
        self.words.iter().any(|&w| w != 0)
    }

    /// Indices of set bits in ascending order.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut word = w;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let bit = word.trailing_zeros() as usize;
                word &= word - 1;
                Some(wi * WORD + bit)
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    /// Extract `len <= 64` bits starting at `start` as an integer (bit 0 = `start`).
    pub fn chunk(&self, start: usize, len: usize) -> u64 {
        assert!(len <= WORD && start + len <= self.len);
        if len == 0 {
            return 0;
        }
        let (wi, off) = (start / WORD, start % WORD);
        let mut v = self.words[wi] >> off;
        if off != 0 && wi + 1 < self.words.len() {
            v |= self.words[wi + 1] << (WORD - off);
        }
        if len == WORD {
            v
        } else {
            v & ((1u64 << len) - 1)
        }
    }

    /// `self = (self & !mask) | (value & mask)`.
    pub fn assign_masked(&mut self, value: &BitLine, mask: &BitLine) {
        debug_assert_eq!(self.len, value.len);
        debug_assert_eq!(self.len, mask.len);
        for ((w, v), m) in self.words.iter_mut().zip(&value.words).zip(&mask.words) {
            *w = (*w & !m) | (v & m);
        }
    }

    pub fn and(&self, other: &BitLine) -> BitLine {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or(&self, other: &BitLine) -> BitLine {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn xor(&self, other: &BitLine) -> BitLine {
        self.zip_with(other, |a, b| a ^ b)
    }

    pub fn or_assign(&mut self, other: &BitLine) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w |= o;
        }
    }

    pub fn xor_assign(&mut self, other: &BitLine) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w ^= o;
        }
    }

    pub fn not(&self) -> BitLine {
        let mut out = BitLine {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        out.trim();
        out
    }

    fn zip_with(&self, other: &BitLine, f: impl Fn(u64, u64) -> u64) -> BitLine {
        assert_eq!(self.len, other.len, "bit line length mismatch");
        let mut out = BitLine {
            len: self.len,
            words: self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect(),
        };
        out.trim();
        out
    }

    pub(crate) fn trim(&mut self) {
        let tail = self.len % WORD;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }
}

impl fmt::Debug for BitLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitLine[{}](", self.len)?;
        for i in 0..self.len.min(128) {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        if self.len > 128 {
            f.write_str("...")?;
        }
        f.write_str(")")
    }
}

/// A dense row-major bit matrix, used for region reads/writes and as the
/// on-disk crossbar data format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

/// Error from [`BitMatrix::parse_text`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatrixParseError {
    #[error("line {line}: unexpected character {found:?} (expected '0' or '1')")]
    BadChar { line: usize, found: char },
    #[error("line {line}: row has {found} bits, expected {expected}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("matrix has no rows")]
    Empty,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.bits[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        assert!(r < self.rows && c < self.cols);
        self.bits[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        assert!(r < self.rows && c < self.cols);
        self.bits[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Parse rows of `0`/`1` characters, one row per line. Blank lines and
    /// lines starting with `#` are skipped; spaces and underscores inside a
    /// row are ignored.
    pub fn parse_text(text: &str) -> Result<Self, MatrixParseError> {
        let mut rows: Vec<Vec<bool>> = Vec::new();
        let mut width = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut row = Vec::with_capacity(line.len());
            for ch in line.chars() {
                match ch {
                    '0' => row.push(false),
                    '1' => row.push(true),
                    ' ' | '_' | '\t' => {}
                    other => return Err(MatrixParseError::BadChar { line: line_no, found: other }),
                }
            }
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(MatrixParseError::Ragged {
                        line: line_no,
                        expected: w,
                        found: row.len(),
                    })
                }
                _ => {}
            }
            rows.push(row);
        }
        let cols = width.ok_or(MatrixParseError::Empty)?;
        if cols == 0 {
            return Err(MatrixParseError::Empty);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            bits: rows.into_iter().flatten().collect(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(if self.get(r, c) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_trims_tail() {
        let l = BitLine::ones(70);
        assert_eq!(l.count_ones(), 70);
        assert_eq!(l.not().count_ones(), 0);
    }

    #[test]
    fn chunk_spans_words() {
        let mut l = BitLine::zeros(200);
        for i in [60, 61, 63, 64, 70] {
            l.set(i, true);
        }
        assert_eq!(l.chunk(60, 16), 0b100_0001_1011);
        assert_eq!(l.chunk(64, 8), 0b100_0001);
    }

    #[test]
    fn iter_ones_ascending() {
        let l = BitLine::from_indices(300, [299, 3, 128, 64]);
        assert_eq!(l.iter_ones().collect::<Vec<_>>(), vec![3, 64, 128, 299]);
    }

    #[test]
    fn matrix_text_round_trip() {
        let m = BitMatrix::from_fn(3, 5, |r, c| (r * 7 + c) % 3 == 0);
        assert_eq!(BitMatrix::parse_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn matrix_parse_errors() {
        assert_eq!(
            BitMatrix::parse_text("01\n011\n"),
            Err(MatrixParseError::Ragged { line: 2, expected: 2, found: 3 })
        );
        assert_eq!(
            BitMatrix::parse_text("0x"),
            Err(MatrixParseError::BadChar { line: 1, found: 'x' })
        );
        assert_eq!(BitMatrix::parse_text("# only\n\n"), Err(MatrixParseError::Empty));
    }
}
