use std::fmt::Write as _;

use super::{Error, ParityCheckMatrix};

/// Lifting sizes grouped by shift-set index (TS 38.212 Table 5.3.2-1).
pub const LIFTING_SETS: [&[usize]; 8] = [
    &[2, 4, 8, 16, 32, 64, 128, 256],
    &[3, 6, 12, 24, 48, 96, 192, 384],
    &[5, 10, 20, 40, 80, 160, 320],
    &[7, 14, 28, 56, 112, 224],
    &[9, 18, 36, 72, 144, 288],
    &[11, 22, 44, 88, 176, 352],
    &[13, 26, 52, 104, 208],
    &[15, 30, 60, 120, 240],
];

/// Largest lifting size; shift exponents in the tables are below it.
pub const MAX_LIFTING: usize = 384;

/// BG1 exponents for shift set 1, `row col shift` per line.
pub const BG1_SET1_TABLE: &str = include_str!("../../data/bg1_ils1.txt");

/// Protograph of a quasi-cyclic LDPC code: a grid of empty entries or
/// cyclic-shift exponents (stored as given for the full-size set).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseGraph {
    rows: usize,
    cols: usize,
    shifts: Vec<Option<u16>>,
    set_index: usize,
}

impl BaseGraph {
    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: &[(usize, usize, u16)],
        set_index: usize,
    ) -> Result<Self, Error> {
        if set_index >= LIFTING_SETS.len() {
            return Err(Error::Contract(format!("no lifting set {set_index}")));
        }
        let mut shifts = vec![None; rows * cols];
        for &(r, c, s) in entries {
            if r >= rows || c >= cols {
                return Err(Error::Contract(format!(
                    "entry ({r}, {c}) outside {rows}×{cols}"
                )));
            }
            if s as usize >= MAX_LIFTING {
                return Err(Error::Contract(format!("shift {s} ≥ {MAX_LIFTING}")));
            }
            shifts[r * cols + c] = Some(s);
        }
        Ok(BaseGraph {
            rows,
            cols,
            shifts,
            set_index,
        })
    }

    /// Parses the `row col shift` text format; `#` starts a comment line.
    /// Dimensions are inferred from the largest indices, and every row and
    /// column must carry at least one entry.
    pub fn parse(text: &str, set_index: usize) -> Result<Self, Error> {
        let mut entries = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(format!(
                    "expected `row col shift`, found {} fields",
                    fields.len()
                )));
            }
            let mut nums = [0usize; 3];
            for (n, f) in nums.iter_mut().zip(&fields) {
                *n = f
                    .parse()
                    .map_err(|_| parse_err(format!("`{f}` is not a non-negative integer")))?;
            }
            let [r, c, s] = nums;
            if s >= MAX_LIFTING {
                return Err(parse_err(format!("shift {s} ≥ {MAX_LIFTING}")));
            }
            if !seen.insert((r, c)) {
                return Err(parse_err(format!("duplicate entry ({r}, {c})")));
            }
            entries.push((r, c, s as u16));
        }
        if entries.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "no entries".into(),
            });
        }
        let rows = entries.iter().map(|e| e.0).max().unwrap() + 1;
        let cols = entries.iter().map(|e| e.1).max().unwrap() + 1;
        let bg = BaseGraph::from_entries(rows, cols, &entries, set_index)?;
        if let Some(r) = (0..rows).find(|&r| (0..cols).all(|c| bg.shift(r, c).is_none())) {
            return Err(Error::Parse {
                line: 0,
                message: format!("row {r} has no entries"),
            });
        }
        if let Some(c) = (0..cols).find(|&c| (0..rows).all(|r| bg.shift(r, c).is_none())) {
            return Err(Error::Parse {
                line: 0,
                message: format!("column {c} has no entries"),
            });
        }
        Ok(bg)
    }

    /// The shipped 46×68 BG1 table for shift set 1.
    pub fn bg1_set1() -> Result<Self, Error> {
        let bg = BaseGraph::parse(BG1_SET1_TABLE, 1)?;
        if (bg.rows, bg.cols) != (46, 68) {
            return Err(Error::Contract(format!(
                "BG1 table is {}×{}, expected 46×68",
                bg.rows, bg.cols
            )));
        }
        Ok(bg)
    }

    /// Canonical text form: sorted `row col shift` lines without comments.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                if let Some(s) = self.shift(r, c) {
                    writeln!(out, "{r} {c} {s}").unwrap();
                }
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set_index(&self) -> usize {
        self.set_index
    }

    /// Columns carrying information bits.
    pub fn systematic_cols(&self) -> usize {
        self.cols - self.rows
    }

    pub fn shift(&self, row: usize, col: usize) -> Option<u16> {
        self.shifts[row * self.cols + col]
    }

    pub fn nonempty(&self) -> usize {
        self.shifts.iter().flatten().count()
    }

    /// Top-left `rows × cols` sub-graph.
    pub fn truncate(&self, rows: usize, cols: usize) -> Result<Self, Error> {
        if rows > self.rows || cols > self.cols || rows == 0 || cols <= rows {
            return Err(Error::Contract(format!(
                "cannot take {rows}×{cols} from {}×{}",
                self.rows, self.cols
            )));
        }
        let mut shifts = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            shifts.extend_from_slice(&self.shifts[r * self.cols..r * self.cols + cols]);
        }
        Ok(BaseGraph {
            rows,
            cols,
            shifts,
            set_index: self.set_index,
        })
    }

    fn check_lifting(&self, z: usize) -> Result<(), Error> {
        if !LIFTING_SETS[self.set_index].contains(&z) {
            return Err(Error::Contract(format!(
                "lifting size {z} is not in shift set {} {:?}",
                self.set_index, LIFTING_SETS[self.set_index]
            )));
        }
        Ok(())
    }

    /// Shift exponent reduced modulo the lifting size.
    pub fn lifted_shift(&self, row: usize, col: usize, z: usize) -> Option<usize> {
        self.shift(row, col).map(|s| s as usize % z)
    }

    /// Replaces every entry by a `z × z` circulant: block `(i, j)` with
    /// exponent `e` connects row `i·z + r` to column `j·z + (r + e) mod z`.
    pub fn expand(&self, z: usize) -> Result<ParityCheckMatrix, Error> {
        self.check_lifting(z)?;
        let mut rows = Vec::with_capacity(self.rows * z);
        for i in 0..self.rows {
            for r in 0..z {
                let mut cols: Vec<u32> = (0..self.cols)
                    .filter_map(|j| {
                        self.lifted_shift(i, j, z)
                            .map(|e| (j * z + (r + e) % z) as u32)
                    })
                    .collect();
                cols.sort_unstable();
                rows.push(cols);
            }
        }
        ParityCheckMatrix::from_rows(self.cols * z, rows)
    }
}
