//! Binary and real matrix primitives: Boolean products, thresholding,
//! Hadamard products, norms, and class-block views.
//!
//! Binary matrices are stored as sorted set-of-ones per row, which fits both
//! the sparse data matrix and the small dense factor matrices. Real matrices
//! are plain [`ndarray`] arrays; see [`crate::RealMatrix`].

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::{dim_mismatch, Error, Result, Scalar};

/// A `{0,1}`-valued matrix stored as the sorted column indices of the ones in
/// each row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    row_items: Vec<Vec<u32>>,
}

impl BinaryMatrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_items: vec![Vec::new(); rows],
        }
    }

    /// Build from `(row, col)` coordinates of the ones. Duplicates collapse.
    pub fn from_entries(rows: usize, cols: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut m = Self::zeros(rows, cols);
        for &(r, c) in entries {
            if r >= rows || c >= cols {
                return Err(Error::InvalidInput(format!(
                    "coordinate ({r}, {c}) outside {rows}x{cols} matrix"
                )));
            }
            m.row_items[r].push(c as u32);
        }
        for row in &mut m.row_items {
            row.sort_unstable();
            row.dedup();
        }
        Ok(m)
    }

    /// Build from nested `0/1` rows (test and loader convenience).
    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::zeros(nrows, ncols);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return dim_mismatch("from_dense", format!("{ncols} cols"), format!("{}", row.len()));
            }
            for (i, &x) in row.iter().enumerate() {
                match x {
                    0 => {}
                    1 => m.row_items[j].push(i as u32),
                    _ => {
                        return Err(Error::InvalidInput(format!(
                            "entry ({j}, {i}) = {x} is not binary"
                        )))
                    }
                }
            }
        }
        Ok(m)
    }

    /// Entry-wise threshold: one where `m[j, i] >= t`, zero elsewhere.
    pub fn from_real_threshold<F: Scalar>(m: &ArrayView2<F>, t: F) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for (j, row) in m.rows().into_iter().enumerate() {
            for (i, &x) in row.iter().enumerate() {
                if x >= t {
                    out.row_items[j].push(i as u32);
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

    /// Entry-wise 1-norm `|A|`: the number of ones.
    pub fn count_ones(&self) -> usize {
        self.row_items.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count_ones() == 0
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        self.row_items[row].binary_search(&(col as u32)).is_ok()
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let items = &mut self.row_items[row];
        match items.binary_search(&(col as u32)) {
            Ok(pos) if !value => {
                items.remove(pos);
            }
            Err(pos) if value => items.insert(pos, col as u32),
            _ => {}
        }
    }

    /// Sorted column indices of the ones in `row`.
    pub fn row(&self, row: usize) -> &[u32] {
        &self.row_items[row]
    }

    /// Number of ones per row.
    pub fn row_counts(&self) -> Vec<usize> {
        self.row_items.iter().map(Vec::len).collect()
    }

    /// Number of ones per column (column supports `|A_{.i}|`).
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.cols];
        for row in &self.row_items {
            for &i in row {
                counts[i as usize] += 1;
            }
        }
        counts
    }

    /// Sorted row indices of the ones in each column.
    pub fn columns(&self) -> Vec<Vec<u32>> {
        let mut cols = vec![Vec::new(); self.cols];
        for (j, row) in self.row_items.iter().enumerate() {
            for &i in row {
                cols[i as usize].push(j as u32);
            }
        }
        cols
    }

    /// Iterate the coordinates of all ones in row-major order.
    pub fn iter_ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_items
            .iter()
            .enumerate()
            .flat_map(|(j, row)| row.iter().map(move |&i| (j, i as usize)))
    }

    /// Dense real copy with ones mapped to `F::one()`.
    pub fn to_real<F: Scalar>(&self) -> Array2<F> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for (j, i) in self.iter_ones() {
            out[(j, i)] = F::one();
        }
        out
    }

    /// Boolean product `theta(self . other^T)` where `self` is `m x r` usage
    /// and `other` is `n x r` patterns: result is one at `(j, i)` iff some
    /// column `s` has `self[j, s] = 1` and `other[i, s] = 1`.
    pub fn boolean_product(&self, patterns: &BinaryMatrix) -> Result<BinaryMatrix> {
        if self.cols != patterns.cols {
            return dim_mismatch(
                "boolean_product",
                format!("{} shared columns", self.cols),
                format!("{}", patterns.cols),
            );
        }
        let pattern_cols = patterns.columns();
        let mut out = BinaryMatrix::zeros(self.rows, patterns.rows);
        let mut mark = vec![false; patterns.rows];
        for (j, used) in self.row_items.iter().enumerate() {
            for &s in used {
                for &i in &pattern_cols[s as usize] {
                    mark[i as usize] = true;
                }
            }
            let row = &mut out.row_items[j];
            for (i, m) in mark.iter_mut().enumerate() {
                if *m {
                    row.push(i as u32);
                    *m = false;
                }
            }
        }
        Ok(out)
    }

    /// Entry-wise OR (Boolean sum). `X + V^(a)` has this meaning for factor
    /// matrices whose supports may not yet be disjoint.
    pub fn union(&self, other: &BinaryMatrix) -> Result<BinaryMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return dim_mismatch(
                "union",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            );
        }
        let mut out = self.clone();
        for j in 0..self.rows {
            let row = &mut out.row_items[j];
            row.extend_from_slice(&other.row_items[j]);
            row.sort_unstable();
            row.dedup();
        }
        Ok(out)
    }

    /// Entry-wise AND.
    pub fn hadamard(&self, other: &BinaryMatrix) -> Result<BinaryMatrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return dim_mismatch(
                "hadamard",
                format!("{}x{}", self.rows, self.cols),
                format!("{}x{}", other.rows, other.cols),
            );
        }
        let mut out = BinaryMatrix::zeros(self.rows, self.cols);
        for j in 0..self.rows {
            let (a, b) = (&self.row_items[j], &other.row_items[j]);
            let (mut ia, mut ib) = (0, 0);
            while ia < a.len() && ib < b.len() {
                match a[ia].cmp(&b[ib]) {
                    std::cmp::Ordering::Less => ia += 1,
                    std::cmp::Ordering::Greater => ib += 1,
                    std::cmp::Ordering::Equal => {
                        out.row_items[j].push(a[ia]);
                        ia += 1;
                        ib += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Copy of the rows `range` (used for class blocks of binary matrices).
    pub fn row_slice(&self, range: std::ops::Range<usize>) -> BinaryMatrix {
        BinaryMatrix {
            rows: range.len(),
            cols: self.cols,
            row_items: self.row_items[range].to_vec(),
        }
    }

    /// Class block `A^(a)` of a matrix laid out per the partition.
    pub fn class_block(&self, partition: &ClassPartition, class: usize) -> Result<BinaryMatrix> {
        if self.rows != partition.total_rows() {
            return dim_mismatch(
                "class_block",
                format!("{} rows", partition.total_rows()),
                format!("{}", self.rows),
            );
        }
        Ok(self.row_slice(partition.range(class)?))
    }

    /// Stack blocks vertically in the given order.
    pub fn vstack(blocks: &[BinaryMatrix]) -> Result<BinaryMatrix> {
        let cols = blocks.first().map_or(0, |b| b.cols);
        let mut out = BinaryMatrix::zeros(0, cols);
        for b in blocks {
            if b.cols != cols {
                return dim_mismatch("vstack", format!("{cols} cols"), format!("{}", b.cols));
            }
            out.rows += b.rows;
            out.row_items.extend(b.row_items.iter().cloned());
        }
        Ok(out)
    }

    /// Keep only the columns listed in `keep` (in order), reindexing them.
    pub fn select_columns(&self, keep: &[usize]) -> BinaryMatrix {
        let mut remap = vec![u32::MAX; self.cols];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new as u32;
        }
        let row_items = self
            .row_items
            .iter()
            .map(|row| {
                let mut out: Vec<u32> = row
                    .iter()
                    .filter_map(|&i| (remap[i as usize] != u32::MAX).then(|| remap[i as usize]))
                    .collect();
                out.sort_unstable();
                out
            })
            .collect();
        BinaryMatrix {
            rows: self.rows,
            cols: keep.len(),
            row_items,
        }
    }

    /// Append `extra` all-zero columns on the right.
    pub fn pad_columns(&self, extra: usize) -> BinaryMatrix {
        BinaryMatrix {
            rows: self.rows,
            cols: self.cols + extra,
            row_items: self.row_items.clone(),
        }
    }

    /// Split off all-zero columns. Returns the filtered matrix and the
    /// original indices of the kept columns, in order.
    pub fn drop_empty_columns(&self) -> (BinaryMatrix, Vec<usize>) {
        let keep: Vec<usize> = self
            .column_counts()
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c > 0).then_some(i))
            .collect();
        (self.select_columns(&keep), keep)
    }

    /// Scatter the rows of this matrix into a taller all-zero matrix:
    /// row `i` of `self` becomes row `mapping[i]` of the result.
    pub fn expand_rows(&self, total_rows: usize, mapping: &[usize]) -> Result<BinaryMatrix> {
        if mapping.len() != self.rows {
            return dim_mismatch(
                "expand_rows",
                format!("{} mapped rows", self.rows),
                format!("{}", mapping.len()),
            );
        }
        let mut out = BinaryMatrix::zeros(total_rows, self.cols);
        for (i, &target) in mapping.iter().enumerate() {
            if target >= total_rows {
                return Err(Error::InvalidInput(format!(
                    "row mapping {target} outside {total_rows} rows"
                )));
            }
            out.row_items[target] = self.row_items[i].clone();
        }
        Ok(out)
    }

    /// Horizontal concatenation.
    pub fn hstack(blocks: &[&BinaryMatrix]) -> Result<BinaryMatrix> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let mut out = BinaryMatrix::zeros(rows, 0);
        for b in blocks {
            if b.rows != rows {
                return dim_mismatch("hstack", format!("{rows} rows"), format!("{}", b.rows));
            }
            let offset = out.cols as u32;
            out.cols += b.cols;
            for (j, row) in b.row_items.iter().enumerate() {
                out.row_items[j].extend(row.iter().map(|&i| i + offset));
            }
        }
        Ok(out)
    }
}

/// Entry-wise threshold `theta_t`: rounds `x >= t` to one, `x < t` to zero.
/// `theta` in the unsubscripted sense is `theta_t` with `t = 0.5`.
pub fn theta_t<F: Scalar>(m: &ArrayView2<F>, t: F) -> BinaryMatrix {
    BinaryMatrix::from_real_threshold(m, t)
}

/// Entry-wise 1-norm `|A|`.
pub fn norm_l1<F: Scalar>(a: &ArrayView2<F>) -> F {
    a.iter().fold(F::zero(), |acc, &x| acc + x.abs())
}

/// Frobenius norm `||A||`.
pub fn norm_fro<F: Scalar>(a: &ArrayView2<F>) -> F {
    a.iter().fold(F::zero(), |acc, &x| acc + x * x).sqrt()
}

/// Trace of a square matrix.
pub fn trace<F: Scalar>(a: &ArrayView2<F>) -> Result<F> {
    if a.nrows() != a.ncols() {
        return dim_mismatch(
            "trace",
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        );
    }
    Ok(a.diag().iter().fold(F::zero(), |acc, &x| acc + x))
}

/// Entry-wise product of equally shaped real matrices.
pub fn hadamard<F: Scalar>(a: &ArrayView2<F>, b: &ArrayView2<F>) -> Result<Array2<F>> {
    if a.dim() != b.dim() {
        return dim_mismatch(
            "hadamard",
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        );
    }
    Ok(a * b)
}

/// Assignment of rows to `c` contiguous class blocks.
///
/// Canonical layout: rows of class 0 first, then class 1, and so on. Loaders
/// with interleaved labels go through [`ClassPartition::from_labels`], which
/// also yields the permutation back to the original row order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    block_sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl ClassPartition {
    /// Partition with the given per-class row counts, in class-id order.
    pub fn new(block_sizes: Vec<usize>) -> Result<Self> {
        if block_sizes.is_empty() {
            return Err(Error::InvalidInput("partition needs at least one class".into()));
        }
        if block_sizes.iter().any(|&m| m == 0) {
            return Err(Error::InvalidInput("empty class block".into()));
        }
        let mut offsets = Vec::with_capacity(block_sizes.len() + 1);
        let mut total = 0;
        for &m in &block_sizes {
            offsets.push(total);
            total += m;
        }
        offsets.push(total);
        Ok(Self {
            block_sizes,
            offsets,
        })
    }

    /// Canonicalize interleaved labels into contiguous blocks.
    ///
    /// Returns the partition and the permutation `perm` with `perm[new] = old`:
    /// canonical row `new` holds the input row `perm[new]`. Class ids must be
    /// exactly `0..c-1` with every class occupied.
    pub fn from_labels(labels: &[usize]) -> Result<(Self, Vec<usize>)> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("no row labels".into()));
        }
        let class_count = labels.iter().max().unwrap() + 1;
        let mut block_sizes = vec![0usize; class_count];
        for &a in labels {
            block_sizes[a] += 1;
        }
        if let Some(a) = block_sizes.iter().position(|&m| m == 0) {
            return Err(Error::InvalidInput(format!(
                "class ids must be contiguous; class {a} has no rows"
            )));
        }
        let mut perm: Vec<usize> = (0..labels.len()).collect();
        perm.sort_by_key(|&row| (labels[row], row));
        Ok((Self::new(block_sizes)?, perm))
    }

    pub fn class_count(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn total_rows(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Rows `m_a` in class `a`.
    pub fn block_size(&self, class: usize) -> Result<usize> {
        self.check(class)?;
        Ok(self.block_sizes[class])
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    /// Canonical row range of class `a`.
    pub fn range(&self, class: usize) -> Result<std::ops::Range<usize>> {
        self.check(class)?;
        Ok(self.offsets[class]..self.offsets[class + 1])
    }

    /// Class of a canonical row index.
    pub fn class_of_row(&self, row: usize) -> usize {
        debug_assert!(row < self.total_rows());
        self.offsets.partition_point(|&o| o <= row) - 1
    }

    /// Canonical labels (block layout), one per row.
    pub fn labels(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.total_rows());
        for (a, &m) in self.block_sizes.iter().enumerate() {
            out.extend(std::iter::repeat(a).take(m));
        }
        out
    }

    fn check(&self, class: usize) -> Result<()> {
        if class >= self.class_count() {
            return Err(Error::UnknownClass {
                class,
                count: self.class_count(),
            });
        }
        Ok(())
    }
}

/// Read view of the class block `M^(a)` of a real matrix in canonical layout.
pub fn class_block<'a, F: Scalar>(
    m: &'a Array2<F>,
    partition: &ClassPartition,
    class: usize,
) -> Result<ArrayView2<'a, F>> {
    if m.nrows() != partition.total_rows() {
        return dim_mismatch(
            "class_block",
            format!("{} rows", partition.total_rows()),
            format!("{}", m.nrows()),
        );
    }
    let range = partition.range(class)?;
    Ok(m.slice(ndarray::s![range, ..]))
}

/// Mutable view of the class block; writes go through to the parent matrix.
pub fn class_block_mut<'a, F: Scalar>(
    m: &'a mut Array2<F>,
    partition: &ClassPartition,
    class: usize,
) -> Result<ArrayViewMut2<'a, F>> {
    if m.nrows() != partition.total_rows() {
        return dim_mismatch(
            "class_block",
            format!("{} rows", partition.total_rows()),
            format!("{}", m.nrows()),
        );
    }
    let range = partition.range(class)?;
    Ok(m.slice_mut(ndarray::s![range, ..]))
}

/// Stack per-class real blocks back into a full matrix (inverse of the views).
pub fn stack_class_blocks<F: Scalar>(blocks: &[Array2<F>]) -> Result<Array2<F>> {
    let views: Vec<ArrayView2<F>> = blocks.iter().map(Array2::view).collect();
    ndarray::concatenate(Axis(0), &views)
        .map_err(|e| Error::InvalidInput(format!("stacking class blocks: {e}")))
}
