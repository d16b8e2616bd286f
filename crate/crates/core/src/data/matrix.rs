use crate::{Error, Result};

/// Sparse 0/1 user × item matrix, stored as index-sorted adjacency in both
/// orientations so that row and column neighbourhoods are O(length) scans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    n_users: usize,
    n_items: usize,
    row_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    col_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

fn compress(lists: Vec<Vec<u32>>) -> (Vec<usize>, Vec<u32>) {
    let mut ptr = Vec::with_capacity(lists.len() + 1);
    let total = lists.iter().map(Vec::len).sum();
    let mut idx = Vec::with_capacity(total);
    ptr.push(0);
    for l in lists {
        idx.extend(l);
        ptr.push(idx.len());
    }
    (ptr, idx)
}

fn transpose(n_out: usize, ptr: &[usize], idx: &[u32]) -> (Vec<usize>, Vec<u32>) {
    let mut counts = vec![0usize; n_out + 1];
    for &j in idx {
        counts[j as usize + 1] += 1;
    }
    for k in 0..n_out {
        counts[k + 1] += counts[k];
    }
    let out_ptr = counts.clone();
    let mut fill = counts;
    let mut out_idx = vec![0u32; idx.len()];
    // outer order is ascending, so each output list comes out sorted
    for r in 0..ptr.len() - 1 {
        for &j in &idx[ptr[r]..ptr[r + 1]] {
            out_idx[fill[j as usize]] = r as u32;
            fill[j as usize] += 1;
        }
    }
    (out_ptr, out_idx)
}

impl BinaryMatrix {
    /// Builds from per-user item lists. Lists are sorted and deduplicated.
    ///
    /// Panics if an item index is `>= n_items`.
    pub fn from_rows(n_items: usize, mut rows: Vec<Vec<u32>>) -> Self {
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            if let Some(&last) = r.last() {
                assert!(
                    (last as usize) < n_items,
                    "item index {last} out of range {n_items}"
                );
            }
        }
        let n_users = rows.len();
        let (row_ptr, row_idx) = compress(rows);
        let (col_ptr, col_idx) = transpose(n_items, &row_ptr, &row_idx);
        BinaryMatrix {
            n_users,
            n_items,
            row_ptr,
            row_idx,
            col_ptr,
            col_idx,
        }
    }

    /// Builds from per-item user lists. Lists are sorted and deduplicated.
    pub fn from_columns(n_users: usize, mut cols: Vec<Vec<u32>>) -> Self {
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            if let Some(&last) = c.last() {
                assert!(
                    (last as usize) < n_users,
                    "user index {last} out of range {n_users}"
                );
            }
        }
        let n_items = cols.len();
        let (col_ptr, col_idx) = compress(cols);
        let (row_ptr, row_idx) = transpose(n_users, &col_ptr, &col_idx);
        BinaryMatrix {
            n_users,
            n_items,
            row_ptr,
            row_idx,
            col_ptr,
            col_idx,
        }
    }

    /// Builds from a dense 0/1 table (tests and small fixtures).
    pub fn from_dense(table: &[Vec<u8>]) -> Self {
        let n_items = table.first().map_or(0, Vec::len);
        let rows = table
            .iter()
            .map(|r| {
                assert_eq!(r.len(), n_items, "ragged dense table");
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(i, _)| i as u32)
                    .collect()
            })
            .collect();
        Self::from_rows(n_items, rows)
    }

    pub(crate) fn from_csr_parts(
        n_users: usize,
        n_items: usize,
        row_ptr: Vec<usize>,
        row_idx: Vec<u32>,
    ) -> Result<Self> {
        if row_ptr.len() != n_users + 1
            || row_ptr[0] != 0
            || *row_ptr.last().unwrap() != row_idx.len()
        {
            return Err(Error::format("binary matrix", "inconsistent row offsets"));
        }
        for u in 0..n_users {
            let (a, b) = (row_ptr[u], row_ptr[u + 1]);
            if a > b {
                return Err(Error::format("binary matrix", "decreasing row offsets"));
            }
            let row = &row_idx[a..b];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::format(
                    "binary matrix",
                    format!("row {u} not strictly sorted"),
                ));
            }
            if row.last().is_some_and(|&i| i as usize >= n_items) {
                return Err(Error::format(
                    "binary matrix",
                    format!("row {u} has an item out of range"),
                ));
            }
        }
        let (col_ptr, col_idx) = transpose(n_items, &row_ptr, &row_idx);
        Ok(BinaryMatrix {
            n_users,
            n_items,
            row_ptr,
            row_idx,
            col_ptr,
            col_idx,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Items consumed by `user`, ascending.
    pub fn row(&self, user: usize) -> &[u32] {
        &self.row_idx[self.row_ptr[user]..self.row_ptr[user + 1]]
    }

    /// Users who consumed `item`, ascending.
    pub fn col(&self, item: usize) -> &[u32] {
        &self.col_idx[self.col_ptr[item]..self.col_ptr[item + 1]]
    }

    pub(crate) fn row_offsets(&self) -> &[usize] {
        &self.row_ptr
    }

    pub(crate) fn row_indices(&self) -> &[u32] {
        &self.row_idx
    }

    pub fn get(&self, user: usize, item: usize) -> bool {
        self.row(user).binary_search(&(item as u32)).is_ok()
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_users as f64 * self.n_items as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.nnz() as f64 / cells
        }
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.density()
    }

    /// Average number of items consumed per user (`i_z`).
    pub fn mean_items_per_user(&self) -> f64 {
        if self.n_users == 0 {
            0.0
        } else {
            self.nnz() as f64 / self.n_users as f64
        }
    }

    /// Average number of consumers per item (`u_z`).
    pub fn mean_users_per_item(&self) -> f64 {
        if self.n_items == 0 {
            0.0
        } else {
            self.nnz() as f64 / self.n_items as f64
        }
    }

    /// Users become items and vice versa.
    pub fn transposed(&self) -> BinaryMatrix {
        BinaryMatrix {
            n_users: self.n_items,
            n_items: self.n_users,
            row_ptr: self.col_ptr.clone(),
            row_idx: self.col_idx.clone(),
            col_ptr: self.row_ptr.clone(),
            col_idx: self.row_idx.clone(),
        }
    }

    /// Restricts the matrix to the given item columns. Users are unchanged;
    /// new column `k` is the `k`-th smallest requested item.
    pub fn project_data(&self, items: &[usize]) -> Result<BinaryMatrix> {
        if items.is_empty() {
            return Err(Error::invalid("cannot project onto an empty item set"));
        }
        let mut sorted = items.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if let Some(&bad) = sorted.iter().find(|&&i| i >= self.n_items) {
            return Err(Error::invalid(format!(
                "item {bad} outside 0..{}",
                self.n_items
            )));
        }
        let cols = sorted.iter().map(|&i| self.col(i).to_vec()).collect();
        Ok(BinaryMatrix::from_columns(self.n_users, cols))
    }

    pub fn column_sizes(&self) -> Vec<usize> {
        (0..self.n_items)
            .map(|i| self.col_ptr[i + 1] - self.col_ptr[i])
            .collect()
    }
}
