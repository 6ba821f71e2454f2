//! Partial and complete Bell polynomials, and the cumulant-to-moment machinery
//! behind the weak-error expansion of the inner Monte Carlo mean.
//!
//! Everything is evaluated in double precision by direct enumeration of the
//! multiplicity tuples `(l_1, ..., l_{n-k+1})` with `sum l_i = k` and
//! `sum i * l_i = n`. That is exact up to round-off for the small orders used
//! here (factorials are tabulated up to 20).

use crate::error::{invalid, Error, Result};

/// Largest order supported by the factorial table.
pub const MAX_ORDER: usize = 20;

/// Largest `r_max` accepted by [`b_coefficients`].
pub const MAX_EXPANSION_ORDER: usize = 10;

const FACTORIALS: [f64; MAX_ORDER + 1] = {
    let mut table = [1.0; MAX_ORDER + 1];
    let mut i = 1;
    while i <= MAX_ORDER {
        table[i] = table[i - 1] * i as f64;
        i += 1;
    }
    table
};

#[inline]
pub(crate) fn factorial(n: usize) -> f64 {
    FACTORIALS[n]
}

/// Subscript pair `(n, k)` of `B_{n,k}` with `1 <= k <= n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartialBellIndex {
    n: usize,
    k: usize,
}

impl PartialBellIndex {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 || k > n {
            return invalid(format!("partial Bell index requires 1 <= k <= n, got (n={n}, k={k})"));
        }
        if n > MAX_ORDER {
            return invalid(format!("partial Bell order {n} exceeds the supported maximum {MAX_ORDER}"));
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of arguments `B_{n,k}` takes.
    pub fn arity(&self) -> usize {
        self.n - self.k + 1
    }
}

/// `B_{n,k}(x_1, ..., x_{n-k+1})`.
pub fn partial_bell(index: PartialBellIndex, x: &[f64]) -> Result<f64> {
    if x.len() != index.arity() {
        return invalid(format!(
            "B_{{{},{}}} takes {} arguments, got {}",
            index.n,
            index.k,
            index.arity(),
            x.len()
        ));
    }
    Ok(bell_unchecked(index.n, index.k, x))
}

/// Partial Bell polynomial with the conventions `B_{0,0} = 1` and `B_{n,k} = 0`
/// whenever exactly one of `n`, `k` is zero or `k > n`. Extra trailing entries of
/// `x` are ignored.
pub(crate) fn bell_unchecked(n: usize, k: usize, x: &[f64]) -> f64 {
    if n == 0 && k == 0 {
        return 1.0;
    }
    if n == 0 || k == 0 || k > n {
        return 0.0;
    }
    let m = n - k + 1;
    debug_assert!(x.len() >= m);
    // scaled[i] = x_{i+1} / (i+1)!
    let scaled: Vec<f64> = (0..m).map(|i| x[i] / factorial(i + 1)).collect();
    let mut total = 0.0;
    enumerate(&scaled, m, n, k, factorial(n), &mut total);
    total
}

/// Depth-first search over `l_part, l_{part-1}, ..., l_1`, consuming the
/// remaining weight `n_left = sum i l_i` and count `k_left = sum l_i`.
/// `acc` carries `n! prod (x_i/i!)^{l_i} / l_i!` for the parts already fixed.
fn enumerate(scaled: &[f64], part: usize, n_left: usize, k_left: usize, acc: f64, total: &mut f64) {
    if part == 1 {
        // l_1 is forced by both constraints.
        if n_left == k_left {
            *total += acc * scaled[0].powi(n_left as i32) / factorial(n_left);
        }
        return;
    }
    // Each part >= 2 contributes `part` to the weight and 1 to the count; the
    // remaining k_left - l parts each weigh at least 1.
    let mut l = 0;
    let mut term = acc;
    loop {
        let used_n = l * part;
        if used_n > n_left || l > k_left {
            break;
        }
        if n_left - used_n >= k_left - l {
            enumerate(scaled, part - 1, n_left - used_n, k_left - l, term, total);
        }
        l += 1;
        term *= scaled[part - 1] / l as f64;
    }
}

/// `B_n(x_1, ..., x_n) = sum_k B_{n,k}(x_1, ..., x_{n-k+1})`.
pub fn complete_bell(n: usize, x: &[f64]) -> Result<f64> {
    if n == 0 {
        return invalid("complete Bell polynomial order must be positive");
    }
    if n > MAX_ORDER {
        return invalid(format!("complete Bell order {n} exceeds the supported maximum {MAX_ORDER}"));
    }
    if x.len() != n {
        return invalid(format!("B_{n} takes {n} arguments, got {}", x.len()));
    }
    Ok((1..=n).map(|k| bell_unchecked(n, k, x)).sum())
}

/// Cumulants `(kappa_1, ..., kappa_m)` of a scalar random variable.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantVector(Vec<f64>);

impl CumulantVector {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if kappa.is_empty() {
            return invalid("cumulant vector must have at least one entry");
        }
        if kappa.iter().any(|k| !k.is_finite()) {
            return invalid("cumulants must be finite");
        }
        Ok(Self(kappa))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `kappa_j`, 1-based.
    pub fn get(&self, j: usize) -> Option<f64> {
        j.checked_sub(1).and_then(|i| self.0.get(i).copied())
    }

    /// Cumulants of the mean of `1/h` i.i.d. copies: `kappa_j -> h^{j-1} kappa_j`.
    pub fn scaled_for_mean(&self, h: f64) -> Self {
        Self(self.0.iter().enumerate().map(|(i, k)| h.powi(i as i32) * k).collect())
    }
}

/// Raw moments `(E[xi], ..., E[xi^n])` from cumulants via complete Bell polynomials.
pub fn moments_from_cumulants(kappa: &CumulantVector, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > kappa.len() {
        return invalid(format!("{n} moments requested from {} cumulants", kappa.len()));
    }
    (1..=n).map(|j| complete_bell(j, &kappa.as_slice()[..j])).collect()
}

/// Table of `b_{r,j} = B_{r,j}(kappa_2/2, kappa_3/3, ..., kappa_{r-j+2}/(r-j+2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BellCoefficientTable {
    r_max: usize,
    // rows[r-1][j-1] for 1 <= j <= r
    rows: Vec<Vec<f64>>,
}

impl BellCoefficientTable {
    pub fn r_max(&self) -> usize {
        self.r_max
    }

    /// Entry `b_{r,j}`; zero outside `1 <= j <= r <= r_max`.
    pub fn get(&self, r: usize, j: usize) -> f64 {
        if r == 0 || j == 0 || j > r || r > self.r_max {
            return 0.0;
        }
        self.rows[r - 1][j - 1]
    }
}

pub fn b_coefficients(kappa: &CumulantVector, r_max: usize) -> Result<BellCoefficientTable> {
    if r_max == 0 || r_max > MAX_EXPANSION_ORDER {
        return invalid(format!("r_max must lie in 1..={MAX_EXPANSION_ORDER}, got {r_max}"));
    }
    if kappa.len() < r_max + 1 {
        return invalid(format!(
            "b coefficients up to r = {r_max} need kappa_2..kappa_{}, got {} cumulants",
            r_max + 1,
            kappa.len()
        ));
    }
    let args: Vec<f64> = (2..=r_max + 1).map(|j| kappa.as_slice()[j - 1] / j as f64).collect();
    let rows = (1..=r_max)
        .map(|r| (1..=r).map(|j| bell_unchecked(r, j, &args)).collect())
        .collect();
    Ok(BellCoefficientTable { r_max, rows })
}

fn b_entry(args: &[f64], r: usize, j: usize) -> f64 {
    bell_unchecked(r, j, args)
}

/// `n`-th moment of the mean of `K = 1/h` i.i.d. centered variables with
/// cumulants `kappa`:
/// `h^n sum_{k=1}^{ceil(n/2)} h^{-k} n!/(n-k)! b_{n-k,k}`.
pub fn centered_mean_moment(kappa: &CumulantVector, n: usize, h: f64) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    if n > MAX_ORDER {
        return invalid(format!("moment order {n} exceeds the supported maximum {MAX_ORDER}"));
    }
    if !(h > 0.0 && h <= 1.0) {
        return invalid(format!("h must lie in (0, 1], got {h}"));
    }
    let inner = (1.0 / h).round();
    if ((1.0 / h) - inner).abs() > 1e-9 * inner {
        return invalid(format!("1/h must be a positive integer, got 1/h = {}", 1.0 / h));
    }
    let kappa1 = kappa.as_slice()[0];
    if kappa1.abs() > 1e-12 {
        return Err(Error::Contract(format!(
            "centered moments require kappa_1 = 0, got {kappa1}"
        )));
    }
    if kappa.len() < n {
        return invalid(format!("moment of order {n} needs {n} cumulants, got {}", kappa.len()));
    }
    let args: Vec<f64> = (2..=n.max(2)).map(|j| kappa.get(j).unwrap_or(0.0) / j as f64).collect();
    let mut total = 0.0;
    for k in 1..=n.div_ceil(2) {
        let r = n - k;
        let coeff = factorial(n) / factorial(r);
        total += h.powi(r as i32) * coeff * b_entry(&args, r, k);
    }
    Ok(total)
}
