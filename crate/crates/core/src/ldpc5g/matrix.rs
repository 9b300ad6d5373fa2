use super::Error;

/// Sparse binary matrix stored as sorted, duplicate-free column lists per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    n_cols: usize,
    rows: Vec<Vec<u32>>,
    cols: Vec<Vec<u32>>,
}

impl ParityCheckMatrix {
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<u32>>) -> Result<Self, Error> {
        let mut cols = vec![Vec::new(); n_cols];
        for (i, row) in rows.iter().enumerate() {
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Contract(format!(
                    "row {i} column indices are not strictly increasing"
                )));
            }
            for &c in row {
                let c = c as usize;
                if c >= n_cols {
                    return Err(Error::Contract(format!(
                        "row {i} references column {c} of {n_cols}"
                    )));
                }
                cols[c].push(i as u32);
            }
        }
        Ok(ParityCheckMatrix { n_cols, rows, cols })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn col(&self, j: usize) -> &[u32] {
        &self.cols[j]
    }

    /// `H·cᵀ` over GF(2).
    pub fn syndrome(&self, bits: &[u8]) -> Result<Vec<u8>, Error> {
        if bits.len() != self.n_cols {
            return Err(Error::Length {
                expected: self.n_cols,
                got: bits.len(),
            });
        }
        Ok(self
            .rows
            .iter()
            .map(|r| r.iter().fold(0u8, |acc, &c| acc ^ (bits[c as usize] & 1)))
            .collect())
    }

    pub fn is_codeword(&self, bits: &[u8]) -> Result<bool, Error> {
        Ok(self.syndrome(bits)?.iter().all(|&s| s == 0))
    }
}

pub fn syndrome(bits: &[u8], h: &ParityCheckMatrix) -> Result<Vec<u8>, Error> {
    h.syndrome(bits)
}
