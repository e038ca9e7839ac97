//! Minimum-cost bipartite assignment.
//!
//! The solver is the O(n³) Hungarian method with row/column potentials.
//! Rectangular matrices are padded to square with the matrix's pad value and
//! padded pairs are dropped from the result. Among all optimal assignments the
//! one whose column sequence (row 0, row 1, ...) is lexicographically smallest
//! is returned: every optimal assignment uses only edges that are tight under
//! the optimal potentials, so the tie-break is a lexicographic perfect-matching
//! search restricted to that subgraph.

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AssignmentError {
    #[error("weight matrix must have at least one row and one column")]
    Empty,
    #[error("weight matrix has {rows}x{cols} shape but {len} entries")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("weight matrix entry ({row}, {col}) = {value} is not a finite non-negative number")]
    BadEntry { row: usize, col: usize, value: f64 },
}

/// Row-major dense matrix of non-negative pair weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    pad: f64,
}

impl WeightMatrix {
    /// `pad` fills the missing rows or columns of a rectangular matrix; pass
    /// the current `MAX_WEIGHT` so padded pairs never beat a real one.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, pad: f64) -> Result<Self, AssignmentError> {
        if data.len() != rows * cols {
            return Err(AssignmentError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        for (k, &value) in data.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(AssignmentError::BadEntry {
                    row: k / cols.max(1),
                    col: k % cols.max(1),
                    value,
                });
            }
        }
        Ok(WeightMatrix {
            rows,
            cols,
            data,
            pad,
        })
    }

    /// Builds from nested rows; the pad value is one more than the largest entry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignmentError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(AssignmentError::Shape {
                rows: rows.len(),
                cols,
                len: bad.len(),
            });
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let pad = data.iter().copied().fold(0.0, f64::max) + 1.0;
        WeightMatrix::new(rows.len(), cols, data, pad)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pad(&self) -> f64 {
        self.pad
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row; `None` when the row only received a padding column.
    pub col_of_row: Vec<Option<usize>>,
    /// Sum of the assigned entries, accumulated in row order.
    pub total_cost: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.col_of_row
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

pub fn solve(m: &WeightMatrix) -> Result<Assignment, AssignmentError> {
    if m.rows == 0 || m.cols == 0 {
        return Err(AssignmentError::Empty);
    }
    let n = m.rows.max(m.cols);
    let cost = |r: usize, c: usize| -> f64 {
        if r < m.rows && c < m.cols {
            m.get(r, c)
        } else {
            m.pad
        }
    };

    let (u, v, col_of) = hungarian(n, &cost);

    let scale = m.data.iter().copied().fold(m.pad.abs(), f64::max).max(1.0);
    let tol = 1e-9 * scale;
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|r| {
            (0..n)
                .filter(|&c| cost(r, c) - u[r] - v[c] <= tol)
                .collect()
        })
        .collect();
    let col_of = lexicographic_min_matching(&tight, col_of);

    let col_of_row: Vec<Option<usize>> = (0..m.rows)
        .map(|r| Some(col_of[r]).filter(|&c| c < m.cols))
        .collect();
    let total_cost = col_of_row
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| m.get(r, c)))
        .sum();
    Ok(Assignment {
        col_of_row,
        total_cost,
    })
}

/// Shortest-augmenting-path Hungarian method on an n×n cost function.
/// Returns row potentials, column potentials and the column matched to each row.
fn hungarian(n: usize, cost: &dyn Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based internally; index 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![f64::INFINITY; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![0usize; n];
    for j in 1..=n {
        col_of_row[row_of_col[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), col_of_row)
}

/// Lexicographically smallest perfect matching of the bipartite graph `adj`,
/// starting from an existing perfect matching `col_of`.
fn lexicographic_min_matching(adj: &[Vec<usize>], mut col_of: Vec<usize>) -> Vec<usize> {
    let n = adj.len();
    let mut row_of = vec![0usize; n];
    for (r, &c) in col_of.iter().enumerate() {
        row_of[c] = r;
    }
    let mut col_locked = vec![false; n];
    let mut visited = vec![false; n];

    struct Search<'a> {
        adj: &'a [Vec<usize>],
        col_of: &'a mut [usize],
        row_of: &'a mut [usize],
        col_locked: &'a [bool],
        visited: &'a mut [bool],
        banned: usize,
        target: usize,
    }

    impl Search<'_> {
        /// Finds new columns for `row` along an alternating path that ends at `target`.
        fn reroute(&mut self, row: usize) -> bool {
            for k in 0..self.adj[row].len() {
                let c = self.adj[row][k];
                if self.col_locked[c] || c == self.banned || self.visited[c] {
                    continue;
                }
                self.visited[c] = true;
                if c == self.target || self.reroute(self.row_of[c]) {
                    self.col_of[row] = c;
                    self.row_of[c] = row;
                    return true;
                }
            }
            false
        }
    }

    for i in 0..n {
        let current = col_of[i];
        for k in 0..adj[i].len() {
            let c = adj[i][k];
            if c >= current {
                break;
            }
            if col_locked[c] {
                continue;
            }
            visited.iter_mut().for_each(|x| *x = false);
            let holder = row_of[c];
            let mut search = Search {
                adj,
                col_of: &mut col_of,
                row_of: &mut row_of,
                col_locked: &col_locked,
                visited: &mut visited,
                banned: c,
                target: current,
            };
            if search.reroute(holder) {
                col_of[i] = c;
                row_of[c] = i;
                break;
            }
        }
        col_locked[col_of[i]] = true;
    }
    col_of
}
