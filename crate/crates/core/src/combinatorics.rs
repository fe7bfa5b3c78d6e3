//! Lexicographic subset enumeration and mixed-radix indexing.

/// Iterator over the `k`-subsets of `items`, in lexicographic order of
/// positions within `items`.
#[derive(Debug, Clone)]
pub struct Combinations<'a, T> {
    items: &'a [T],
    indices: Vec<usize>,
    done: bool,
}

impl<'a, T: Copy> Combinations<'a, T> {
    pub fn new(items: &'a [T], k: usize) -> Self {
        Combinations {
            items,
            indices: (0..k).collect(),
            done: k > items.len(),
        }
    }
}

impl<T: Copy> Iterator for Combinations<'_, T> {
    type Item = Vec<T>;

    fn next(&mut self) -> Option<Vec<T>> {
        if self.done {
            return None;
        }
        let out = self.indices.iter().map(|&i| self.items[i]).collect();
        let n = self.items.len();
        let k = self.indices.len();
        // advance to the next combination, or finish
        match (0..k).rev().find(|&i| self.indices[i] != i + n - k) {
            Some(i) => {
                self.indices[i] += 1;
                for j in i + 1..k {
                    self.indices[j] = self.indices[j - 1] + 1;
                }
            }
            None => self.done = true,
        }
        Some(out)
    }
}

pub fn combinations<T: Copy>(items: &[T], k: usize) -> Combinations<'_, T> {
    Combinations::new(items, k)
}

/// All subsets of `items` ordered by size, then lexicographically.
pub fn subsets_by_size<T: Copy>(items: &[T]) -> impl Iterator<Item = Vec<T>> + '_ {
    (0..=items.len()).flat_map(move |k| combinations(items, k))
}

/// Exact binomial coefficient, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul(u128::from(n - i))? / u128::from(i + 1);
    }
    Some(acc)
}

/// Row-major strides: the last axis varies fastest.
pub fn strides(cards: &[usize]) -> Vec<usize> {
    let mut out = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] * cards[i + 1];
    }
    out
}

/// Mixed-radix index of `values`, most significant first.
pub fn encode(cards: &[usize], values: &[usize]) -> usize {
    values
        .iter()
        .zip(cards)
        .fold(0, |acc, (&v, &c)| acc * c + v)
}

/// Inverse of [`encode`].
pub fn decode(cards: &[usize], mut index: usize, out: &mut [usize]) {
    for (slot, &c) in out.iter_mut().zip(cards).rev() {
        *slot = index % c;
        index /= c;
    }
}

/// Product of cardinalities, `None` on overflow.
pub fn checked_size(cards: &[usize]) -> Option<usize> {
    cards.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c))
}

/// Sum a dense table over `cards` onto the axes listed in `keep`
/// (sorted axis indices), returning the dense table over the kept axes.
pub(crate) fn sum_onto(cards: &[usize], probs: &[f64], keep: &[usize]) -> Vec<f64> {
    let kept_cards: Vec<usize> = keep.iter().map(|&a| cards[a]).collect();
    let kept_strides = strides(&kept_cards);
    let mut step = vec![0usize; cards.len()];
    for (s, &a) in keep.iter().enumerate() {
        step[a] = kept_strides[s];
    }
    let mut out = vec![0.0; kept_cards.iter().product()];
    let mut digits = vec![0usize; cards.len()];
    let mut sub = 0usize;
    for &p in probs {
        out[sub] += p;
        for axis in (0..cards.len()).rev() {
            digits[axis] += 1;
            sub += step[axis];
            if digits[axis] < cards[axis] {
                break;
            }
            digits[axis] = 0;
            sub -= step[axis] * cards[axis];
        }
    }
    out
}
