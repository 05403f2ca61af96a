//! Minimal CSR storage for the symmetric stiffness operators.

/// Compressed sparse row matrix. Rows are built in index order with sorted,
/// deduplicated columns, so identical inputs produce identical layouts and
/// bit-identical matvec results.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl Csr {
    /// Assemble from per-row scatter lists; duplicate (row, col) pairs are
    /// summed.
    pub fn from_row_lists(mut rows: Vec<Vec<(u32, f64)>>) -> Csr {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut it = row.iter().peekable();
            while let Some(&(c, v)) = it.next() {
                let mut sum = v;
                while let Some(&&(c2, v2)) = it.peek() {
                    if c2 == c {
                        sum += v2;
                        it.next();
                    } else {
                        break;
                    }
                }
                col.push(c);
                val.push(sum);
            }
            row_ptr.push(col.len());
        }
        Csr {
            n,
            row_ptr,
            col,
            val,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col[r.clone()]
            .iter()
            .copied()
            .zip(self.val[r].iter().copied())
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[k] * x[self.col[k] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                if c as usize == i {
                    d[i] = v;
                }
            }
        }
        d
    }

    /// Largest relative asymmetry |A_ij - A_ji| / max|A|.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.val.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let j = j as usize;
                if j < i {
                    continue;
                }
                let vt = self
                    .row(j)
                    .find(|&(c, _)| c as usize == i)
                    .map(|(_, v)| v)
                    .unwrap_or(0.0);
                worst = worst.max((v - vt).abs());
            }
        }
        worst / scale
    }

    /// Extract the submatrix over the rows/cols with `map[i] = Some(k)`.
    pub fn restrict(&self, map: &[Option<usize>], n_free: usize) -> Csr {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_free];
        for i in 0..self.n {
            let Some(ri) = map[i] else { continue };
            for (c, v) in self.row(i) {
                if let Some(rj) = map[c as usize] {
                    rows[ri].push((rj as u32, v));
                }
            }
        }
        Csr::from_row_lists(rows)
    }
}
