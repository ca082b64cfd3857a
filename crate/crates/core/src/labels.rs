use nalgebra::DMatrix;

/// Dense binary label matrix stored row-major, one row per instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl LabelMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LabelMatrix { rows, cols, data: vec![false; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged label rows");
        LabelMatrix { rows: rows.len(), cols, data: rows.concat() }
    }

    /// Builds a matrix from per-instance lists of active label indices.
    pub fn from_index_sets(sets: &[Vec<usize>], cols: usize) -> Self {
        let mut m = LabelMatrix::zeros(sets.len(), cols);
        for (i, set) in sets.iter().enumerate() {
            for &j in set {
                m.set(i, j, true);
            }
        }
        m
    }

    /// Thresholds a real matrix: entries `>= threshold` become 1.
    pub fn from_threshold(scores: &DMatrix<f64>, threshold: f64) -> Self {
        let (rows, cols) = scores.shape();
        let mut m = LabelMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, scores[(i, j)] >= threshold);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_count(&self, i: usize) -> usize {
        self.row(i).iter().filter(|&&b| b).count()
    }

    /// Active label indices of row `i`, ascending.
    pub fn row_indices(&self, i: usize) -> Vec<usize> {
        self.row(i).iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// True when every 1 of `self` is also a 1 of `other`.
    pub fn is_subset_of(&self, other: &LabelMatrix) -> bool {
        self.shape() == other.shape() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn select_rows(&self, indices: &[usize]) -> LabelMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        LabelMatrix { rows: indices.len(), cols: self.cols, data }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| if self.get(i, j) { 1.0 } else { 0.0 })
    }
}
