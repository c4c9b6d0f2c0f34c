//! Joint index distributions over an `n x m` grid, i.i.d. sampling of entry
//! indexes, and the transductive train/test split.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{rng_from_seed, Rng};

/// Tolerance for normalization checks on probability vectors.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Compensated (Neumaier) summation.
pub(crate) fn stable_sum<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn check_probability_vector(v: &[f64]) -> Result<()> {
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0) || !x.is_finite()) {
        return Err(Error::NegativeEntry { index, value });
    }
    let sum = stable_sum(v);
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { sum, tol: NORMALIZATION_TOL });
    }
    Ok(())
}

/// A probability mass function `p(i, j)` over `[0, n) x [0, m)` with cached
/// row and column marginals. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    n: usize,
    m: usize,
    /// Row-major `n x m` probabilities.
    mass: Vec<f64>,
    row_marginals: Vec<f64>,
    col_marginals: Vec<f64>,
    /// Inclusive prefix sums of `mass`, used for inverse-CDF sampling.
    cdf: Vec<f64>,
}

impl JointDistribution {
    /// Builds a distribution from a row-major mass array that already sums to one.
    pub fn from_mass(n: usize, m: usize, mass: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!("grid must be non-empty, got {n}x{m}")));
        }
        if mass.len() != n * m {
            return Err(Error::ShapeMismatch { expected: (n, m), found: (mass.len(), 1) });
        }
        check_probability_vector(&mass)?;
        let row_marginals = (0..n).map(|i| stable_sum(&mass[i * m..(i + 1) * m])).collect();
        let col_marginals = (0..m)
            .map(|j| {
                let column: Vec<f64> = (0..n).map(|i| mass[i * m + j]).collect();
                stable_sum(&column)
            })
            .collect();
        Ok(Self::assemble(n, m, mass, row_marginals, col_marginals))
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(n: usize, m: usize, weights: &[f64]) -> Result<Self> {
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, x)| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::NegativeEntry { index, value });
        }
        let total = stable_sum(weights);
        if total <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        Self::from_mass(n, m, weights.iter().map(|w| w / total).collect())
    }

    fn assemble(n: usize, m: usize, mass: Vec<f64>, row: Vec<f64>, col: Vec<f64>) -> Self {
        let mut cdf = Vec::with_capacity(mass.len());
        let mut acc = 0.0;
        for &p in &mass {
            acc += p;
            cdf.push(acc);
        }
        Self { n, m, mass, row_marginals: row, col_marginals: col, cdf }
    }

    pub fn uniform(n: usize, m: usize) -> Result<Self> {
        make_product(&vec![1.0 / n as f64; n], &vec![1.0 / m as f64; m])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    /// `p(i, j)`.
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.m + j]
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass_matrix(&self) -> Matrix {
        Matrix::from_row_slice(self.n, self.m, &self.mass)
    }

    pub fn row_marginals(&self) -> &[f64] {
        &self.row_marginals
    }

    pub fn col_marginals(&self) -> &[f64] {
        &self.col_marginals
    }

    /// Whether `p(i, j) == p^r(i) p^c(j)` for every cell, up to `tol`.
    pub fn is_product(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..self.m).all(|j| (self.p(i, j) - self.row_marginals[i] * self.col_marginals[j]).abs() <= tol))
    }

    /// Draws one cell by inverse CDF over the flattened mass array.
    pub fn draw(&self, rng: &mut Rng) -> (usize, usize) {
        let total = *self.cdf.last().expect("non-empty grid");
        let u = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        (k / self.m, k % self.m)
    }

    pub fn to_json(&self) -> DistributionJson {
        DistributionJson { n: self.n, m: self.m, mass: self.mass.clone() }
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_json())?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let doc: DistributionJson = serde_json::from_reader(reader)?;
        Self::from_mass(doc.n, doc.m, doc.mass)
    }
}

/// Wire form of a [`JointDistribution`]: `{"n":…, "m":…, "mass": row-major array}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionJson {
    pub n: usize,
    pub m: usize,
    pub mass: Vec<f64>,
}

/// Product distribution `p(i, j) = p^r(i) p^c(j)`. The given vectors are stored
/// verbatim as the cached marginals.
pub fn make_product(row_marginals: &[f64], col_marginals: &[f64]) -> Result<JointDistribution> {
    let (n, m) = (row_marginals.len(), col_marginals.len());
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter("marginal vectors must be non-empty".into()));
    }
    check_probability_vector(row_marginals)?;
    check_probability_vector(col_marginals)?;
    let mass: Vec<f64> = row_marginals.iter().flat_map(|&r| col_marginals.iter().map(move |&c| r * c)).collect();
    Ok(JointDistribution::assemble(n, m, mass, row_marginals.to_vec(), col_marginals.to_vec()))
}

/// Square distribution with uniform marginals that mixes a random permutation
/// matrix (scaled by `1/n`) with the uniform distribution:
/// `p = mixing * P / n + (1 - mixing) / n²`.
///
/// `mixing = 0` is uniform; `mixing = 1` puts all mass on a permutation. Any
/// `mixing > 0` (with `n > 1`) gives a non-product distribution. This family is
/// one admissible choice of a dependent, uniform-marginal sampling law.
pub fn make_uniform_marginal_nonproduct(n: usize, mixing: f64, seed: u64) -> Result<JointDistribution> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.shuffle(&mut rng_from_seed(seed));
    permutation_mixture(&permutation, mixing)
}

/// [`make_uniform_marginal_nonproduct`] with an explicit permutation.
pub fn permutation_mixture(permutation: &[usize], mixing: f64) -> Result<JointDistribution> {
    let n = permutation.len();
    if n == 0 {
        return Err(Error::InvalidParameter("permutation must be non-empty".into()));
    }
    if !(0.0..=1.0).contains(&mixing) {
        return Err(Error::InvalidParameter(format!("mixing must lie in [0, 1], got {mixing}")));
    }
    let mut seen = vec![false; n];
    for &k in permutation {
        if k >= n || seen[k] {
            return Err(Error::InvalidParameter("not a permutation".into()));
        }
        seen[k] = true;
    }
    let nf = n as f64;
    let base = (1.0 - mixing) / (nf * nf);
    let mut mass = vec![base; n * n];
    for (i, &j) in permutation.iter().enumerate() {
        mass[i * n + j] += mixing / nf;
    }
    let uniform = vec![1.0 / nf; n];
    Ok(JointDistribution::assemble(n, n, mass, uniform.clone(), uniform))
}

/// An ordered multiset of observed entries `(i_t, j_t, Y[i_t, j_t])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    n: usize,
    m: usize,
    indexes: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(n: usize, m: usize, indexes: Vec<(usize, usize)>, values: Vec<f64>) -> Result<Self> {
        if indexes.len() != values.len() {
            return Err(Error::ShapeMismatch { expected: (indexes.len(), 1), found: (values.len(), 1) });
        }
        if let Some(&(i, j)) = indexes.iter().find(|&&(i, j)| i >= n || j >= m) {
            return Err(Error::IndexOutOfRange { i, j, n, m });
        }
        Ok(Self { n, m, indexes, values })
    }

    /// Observes the cells in `indexes` from `truth`.
    pub fn observe(truth: &Matrix, indexes: Vec<(usize, usize)>) -> Result<Self> {
        let (n, m) = truth.shape();
        if let Some(&(i, j)) = indexes.iter().find(|&&(i, j)| i >= n || j >= m) {
            return Err(Error::IndexOutOfRange { i, j, n, m });
        }
        let values = indexes.iter().map(|&(i, j)| truth[(i, j)]).collect();
        Ok(Self { n, m, indexes, values })
    }

    pub fn len(&self) -> usize {
        self.indexes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indexes.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn indexes(&self) -> &[(usize, usize)] {
        &self.indexes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.indexes.iter().zip(&self.values).map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.indexes.contains(&(i, j))
    }

    /// Concatenation of two samples over the same grid.
    pub fn concat(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch { expected: self.shape(), found: other.shape() });
        }
        let mut indexes = self.indexes.clone();
        indexes.extend_from_slice(&other.indexes);
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        SampleSet::new(self.n, self.m, indexes, values)
    }

    /// Writes CSV with header `t,i,j,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "i", "j", "value"])?;
        for (t, (i, j, v)) in self.iter().enumerate() {
            w.write_record([t.to_string(), i.to_string(), j.to_string(), format_f64(v)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV produced by [`SampleSet::write_csv`]. Rows are ordered by
    /// the `t` column. When `shape` is `None` the grid is the bounding box of
    /// the indexes.
    pub fn read_csv<R: Read>(reader: R, shape: Option<(usize, usize)>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows: Vec<CsvRow> = Vec::new();
        for record in rdr.deserialize() {
            rows.push(record?);
        }
        rows.sort_by_key(|r| r.t);
        let indexes: Vec<(usize, usize)> = rows.iter().map(|r| (r.i, r.j)).collect();
        let values = rows.iter().map(|r| r.value).collect();
        let (n, m) = shape.unwrap_or_else(|| indexes.iter().fold((0, 0), |(n, m), &(i, j)| (n.max(i + 1), m.max(j + 1))));
        Self::new(n, m, indexes, values)
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    t: usize,
    i: usize,
    j: usize,
    value: f64,
}

/// Shortest representation that round-trips an `f64`.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Draws `s` cells i.i.d. (with replacement) from `dist` and observes `truth`
/// at each.
pub fn sample(dist: &JointDistribution, s: usize, truth: &Matrix, seed: u64) -> Result<SampleSet> {
    sample_with_rng(dist, s, truth, &mut rng_from_seed(seed))
}

pub fn sample_with_rng(dist: &JointDistribution, s: usize, truth: &Matrix, rng: &mut Rng) -> Result<SampleSet> {
    if truth.shape() != dist.shape() {
        return Err(Error::ShapeMismatch { expected: dist.shape(), found: truth.shape() });
    }
    let indexes: Vec<(usize, usize)> = (0..s).map(|_| dist.draw(rng)).collect();
    SampleSet::observe(truth, indexes)
}

/// A fixed pool of `2s` distinct entries split into equal train and test halves.
#[derive(Debug, Clone)]
pub struct TransductivePool {
    pub pool: SampleSet,
    pub train: SampleSet,
    pub test: SampleSet,
}

/// Splits `pool_indexes` uniformly at random into two halves of equal size.
pub fn transductive_split(pool_indexes: &[(usize, usize)], truth: &Matrix, seed: u64) -> Result<TransductivePool> {
    if !pool_indexes.len().is_multiple_of(2) {
        return Err(Error::OddPoolSize(pool_indexes.len()));
    }
    if pool_indexes.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut seen = HashSet::with_capacity(pool_indexes.len());
    for &(i, j) in pool_indexes {
        if !seen.insert((i, j)) {
            return Err(Error::DuplicateIndex(i, j));
        }
    }
    let pool = SampleSet::observe(truth, pool_indexes.to_vec())?;
    let mut order: Vec<usize> = (0..pool_indexes.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let half = pool_indexes.len() / 2;
    let pick = |range: &[usize]| {
        let idx: Vec<(usize, usize)> = range.iter().map(|&k| pool_indexes[k]).collect();
        SampleSet::observe(truth, idx)
    };
    let train = pick(&order[..half])?;
    let test = pick(&order[half..])?;
    Ok(TransductivePool { pool, train, test })
}
