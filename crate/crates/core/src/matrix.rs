/// Borrowed row-major `n × n` dissimilarities.
#[derive(Debug, Clone, Copy)]
pub struct SquareView<'a> {
    n: usize,
    values: &'a [f64],
}

impl<'a> SquareView<'a> {
    /// Panics if `values.len() != n * n`.
    pub fn new(n: usize, values: &'a [f64]) -> Self {
        assert_eq!(values.len(), n * n, "square view needs n*n values");
        Self { n, values }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    /// Exact restriction to `indices` (in the given order).
    pub fn restrict(&self, indices: &[usize]) -> SquareMatrix {
        let k = indices.len();
        let mut values = Vec::with_capacity(k * k);
        for &i in indices {
            let row = self.row(i);
            values.extend(indices.iter().map(|&j| row[j]));
        }
        SquareMatrix { n: k, values }
    }
}

/// Owned row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SquareMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * n, "square matrix needs n*n values");
        Self { n, values }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i, j));
            }
        }
        Self { n, values }
    }

    /// Pairwise `|x_i - x_j|` for points on a line.
    pub fn from_line(xs: &[f64]) -> Self {
        Self::from_fn(xs.len(), |i, j| (xs[i] - xs[j]).abs())
    }

    pub fn view(&self) -> SquareView<'_> {
        SquareView::new(self.n, &self.values)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}
