//! VC-dimension bounds for k-tuple cylinder sets, the uniform-convergence
//! risk bound, sample-size solvers, and the shattering construction.

use serde::{Deserialize, Serialize};

use crate::combinatorics::binomial;
use crate::error::{Error, Result};
use crate::model::CylinderKey;
use crate::par;

/// Upper limit on any sample size the solvers will consider.
pub const SEARCH_CAP: u64 = 1 << 40;

fn check_nkd(n: u64, k: u64, d: u64) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ k ≤ n, got k = {k}, n = {n}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    Ok(())
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must lie in (0, 1), got {x}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderCount {
    /// `d^k · C(n, k)`.
    pub exact: u128,
    /// `(n·d)^k`.
    pub crude: f64,
}

/// Number of k-tuple cylinder sets when every variable has `d` values.
pub fn cylinder_count(n: u64, k: u64, d: u64) -> Result<CylinderCount> {
    check_nkd(n, k, d)?;
    let overflow = || Error::Overflow(format!("d^k·C(n,k) for n = {n}, k = {k}, d = {d}"));
    let dk = u128::from(d)
        .checked_pow(u32::try_from(k).map_err(|_| overflow())?)
        .ok_or_else(overflow)?;
    let exact = binomial(n, k)
        .and_then(|c| c.checked_mul(dk))
        .ok_or_else(overflow)?;
    Ok(CylinderCount {
        exact,
        crude: ((n * d) as f64).powf(k as f64),
    })
}

/// `k · log₂(n·d)`.
pub fn vc_upper_bound(n: u64, k: u64, d: u64) -> Result<f64> {
    check_nkd(n, k, d)?;
    if n * d < 2 {
        return Err(Error::InvalidParameter("need n·d ≥ 2".into()));
    }
    Ok(k as f64 * ((n * d) as f64).log2())
}

/// `log₂(d^k · C(n, k))`, evaluated without forming the count.
pub fn vc_upper_bound_from_count(n: u64, k: u64, d: u64) -> Result<f64> {
    check_nkd(n, k, d)?;
    if n * d < 2 {
        return Err(Error::InvalidParameter("need n·d ≥ 2".into()));
    }
    let k_small = k.min(n - k);
    let log_binom: f64 = (0..k_small)
        .map(|i| ((n - i) as f64).log2() - ((i + 1) as f64).log2())
        .sum();
    Ok(k as f64 * (d as f64).log2() + log_binom)
}

/// `⌊log₂(n − k + 1)⌋`, valid when every variable has at least two values.
pub fn vc_lower_bound(n: u64, k: u64) -> Result<u32> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ k ≤ n, got k = {k}, n = {n}"
        )));
    }
    Ok((n - k + 1).ilog2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBound {
    /// Natural log of the bound.
    pub log_value: f64,
    /// The bound itself; may exceed 1 or be infinite.
    pub raw: f64,
    /// `min(1, raw)`.
    pub clamped: f64,
}

/// `4 exp{(h(1 + ln(2l/h))/l − (ε − 1/l)²) · l}`, evaluated in log space.
///
/// `h` may be fractional. Requires `ε·l > 1`.
pub fn risk_bound(h: f64, l: u64, epsilon: f64) -> Result<RiskBound> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("h must be > 0, got {h}")));
    }
    if l == 0 {
        return Err(Error::InvalidParameter("l must be at least 1".into()));
    }
    check_unit("epsilon", epsilon)?;
    let lf = l as f64;
    if epsilon * lf <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "need ε·l > 1, got ε = {epsilon}, l = {l}"
        )));
    }
    let gap = epsilon - 1.0 / lf;
    let log_value = 4f64.ln() + h * (1.0 + (2.0 * lf / h).ln()) - gap * gap * lf;
    let raw = log_value.exp();
    Ok(RiskBound {
        log_value,
        raw,
        clamped: raw.min(1.0),
    })
}

/// `l/(1 + ln 2l) · (ε − 1/l)²/2 ≥ k log₂(nd)`, with `ε·l > 1`.
pub fn sufficient_condition(n: u64, k: u64, d: u64, epsilon: f64, l: u64) -> Result<bool> {
    let target = vc_upper_bound(n, k, d)?;
    check_unit("epsilon", epsilon)?;
    let lf = l as f64;
    if l == 0 || epsilon * lf <= 1.0 {
        return Ok(false);
    }
    let gap = epsilon - 1.0 / lf;
    Ok(lf / (1.0 + (2.0 * lf).ln()) * gap * gap / 2.0 >= target)
}

/// `risk_bound(k log₂(nd), l, ε) < δ`, restricted to `l ≥ h` and `ε·l > 1`.
///
/// On that range the bound's exponent rises then falls in `l` and starts
/// above `ln(δ/4)`, so the condition is monotone.
pub fn risk_condition(
    n: u64,
    k: u64,
    d: u64,
    epsilon: f64,
    delta_risk: f64,
    l: u64,
) -> Result<bool> {
    let h = vc_upper_bound(n, k, d)?;
    check_unit("epsilon", epsilon)?;
    check_unit("delta_risk", delta_risk)?;
    if l == 0 || (l as f64) < h || epsilon * l as f64 <= 1.0 {
        return Ok(false);
    }
    Ok(risk_bound(h, l, epsilon)?.log_value < delta_risk.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSizes {
    /// Smallest `l` satisfying [`sufficient_condition`].
    pub l_suff: u64,
    /// Smallest `l` satisfying [`risk_condition`].
    pub l_risk: u64,
}

/// Smallest `l ≥ start` with `pred(l)`, for a predicate that is false then
/// true. Doubling finds a bracket, bisection closes it.
fn smallest_satisfying(start: u64, pred: impl Fn(u64) -> Result<bool>) -> Result<u64> {
    let start = start.max(1);
    if pred(start)? {
        return Ok(start);
    }
    let mut lo = start;
    let mut hi = start.saturating_mul(2);
    while !pred(hi)? {
        if hi >= SEARCH_CAP {
            return Err(Error::SearchCap(SEARCH_CAP));
        }
        lo = hi;
        hi = hi.saturating_mul(2).min(SEARCH_CAP);
    }
    // pred(lo) false, pred(hi) true
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn required_sample_size(
    n: u64,
    k: u64,
    d: u64,
    epsilon: f64,
    delta_risk: f64,
) -> Result<SampleSizes> {
    let h = vc_upper_bound(n, k, d)?;
    check_unit("epsilon", epsilon)?;
    check_unit("delta_risk", delta_risk)?;
    let first_feasible = (1.0 / epsilon).floor() as u64 + 1;
    let l_suff = smallest_satisfying(first_feasible, |l| {
        sufficient_condition(n, k, d, epsilon, l)
    })?;
    let l_risk = smallest_satisfying(first_feasible.max(h.ceil() as u64), |l| {
        risk_condition(n, k, d, epsilon, delta_risk, l)
    })?;
    Ok(SampleSizes { l_suff, l_risk })
}

/// Points of `Ω` shattered by the k-tuple cylinder sets.
///
/// `matrix` has `l_points` rows and `n` columns: the first `k − 1` columns are
/// all ones, the next `2^l_points` columns are the binary words of length
/// `l_points` in increasing order (row 0 is the most significant bit), and
/// the rest are zero. Row `r` maps to point `r` by taking, at each position
/// `j`, the value `value_pairs[j][bit]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShatterWitness {
    pub n: usize,
    pub k: usize,
    pub l_points: usize,
    pub matrix: Vec<Vec<u8>>,
    pub value_pairs: Vec<[usize; 2]>,
    pub points: Vec<Vec<usize>>,
}

/// The pair `(0, 1)` at every position.
pub fn binary_value_pairs(n: usize) -> Vec<[usize; 2]> {
    vec![[0, 1]; n]
}

pub fn shatter_witness(n: usize, k: usize, value_pairs: &[[usize; 2]]) -> Result<ShatterWitness> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ k ≤ n, got k = {k}, n = {n}"
        )));
    }
    if value_pairs.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} value pairs for {n} positions",
            value_pairs.len()
        )));
    }
    if let Some(j) = value_pairs.iter().position(|p| p[0] == p[1]) {
        return Err(Error::InvalidParameter(format!(
            "x{} needs two distinct values for the construction",
            j + 1
        )));
    }
    let l_points = (n - k + 1).ilog2() as usize;
    let mut matrix = vec![vec![0u8; n]; l_points];
    for (r, row) in matrix.iter_mut().enumerate() {
        row[..k - 1].fill(1);
        for w in 0..1usize << l_points {
            row[k - 1 + w] = ((w >> (l_points - 1 - r)) & 1) as u8;
        }
    }
    let mut witness = ShatterWitness {
        n,
        k,
        l_points,
        matrix,
        value_pairs: value_pairs.to_vec(),
        points: Vec::new(),
    };
    witness.points = (0..l_points).map(|r| witness.point_of_row(r)).collect();
    Ok(witness)
}

impl ShatterWitness {
    fn point_of_row(&self, r: usize) -> Vec<usize> {
        self.matrix[r]
            .iter()
            .zip(&self.value_pairs)
            .map(|(&b, pair)| pair[b as usize])
            .collect()
    }

    /// Copy with matrix entry `(row, col)` flipped and point `row` rebuilt.
    pub fn with_flipped_bit(&self, row: usize, col: usize) -> ShatterWitness {
        let mut w = self.clone();
        w.matrix[row][col] ^= 1;
        w.points[row] = w.point_of_row(row);
        w
    }

    /// Columns holding the binary words.
    pub fn word_block(&self) -> std::ops::Range<usize> {
        let start = self.k.saturating_sub(1);
        start..start + (1usize << self.l_points)
    }
}

/// Evidence that one subset of the points is cut out by a cylinder set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    /// Bit `r` set iff point `r` is in the subset.
    pub subset: u64,
    #[serde(with = "crate::io::one_based_scalar")]
    pub column: usize,
    pub key: CylinderKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShatterVerdict {
    pub shattered: bool,
    pub certificates: Vec<Certificate>,
    pub failing_subset: Option<u64>,
}

/// Checks all `2^l` subsets of the witness points. For subset `S` with
/// indicator `s`, the column of the binary-word block equal to `s` gives the
/// key `((1..k−1, i), (x_{1;1}, …, x_{k−1;1}, x_{i;1}))`, and `C ∩ Y = S` is
/// checked by direct membership tests.
pub fn verify_shattered(witness: &ShatterWitness, k: usize) -> ShatterVerdict {
    let fail = |subset| ShatterVerdict {
        shattered: false,
        certificates: Vec::new(),
        failing_subset: Some(subset),
    };
    let l = witness.l_points;
    let well_shaped = k >= 1
        && k <= witness.n
        && l < 64
        && witness.matrix.len() == l
        && witness.points.len() == l
        && witness.value_pairs.len() == witness.n
        && witness.matrix.iter().all(|r| r.len() == witness.n)
        && witness.points.iter().all(|p| p.len() == witness.n)
        && k - 1 + (1usize << l) <= witness.n;
    if !well_shaped {
        return fail(0);
    }
    let block = (k - 1)..(k - 1 + (1usize << l));
    let results = par::map_range(1usize << l, |subset| {
        let subset = subset as u64;
        let in_s = |r: usize| (subset >> r) & 1 == 1;
        let column = block
            .clone()
            .find(|&c| (0..l).all(|r| (witness.matrix[r][c] == 1) == in_s(r)))
            .ok_or(subset)?;
        let positions: Vec<usize> = (0..k - 1).chain(std::iter::once(column)).collect();
        let values = positions
            .iter()
            .map(|&p| witness.value_pairs[p][1])
            .collect();
        let key = CylinderKey { positions, values };
        if (0..l).all(|r| key.contains(&witness.points[r]) == in_s(r)) {
            Ok(Certificate {
                subset,
                column,
                key,
            })
        } else {
            Err(subset)
        }
    });
    let mut certificates = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(c) => certificates.push(c),
            Err(subset) => return fail(subset),
        }
    }
    ShatterVerdict {
        shattered: true,
        certificates,
        failing_subset: None,
    }
}
