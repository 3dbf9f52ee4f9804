//! Lexicographic k-subsets of `0..n`.

/// Iterator over the sorted `k`-subsets of `0..n` in lexicographic order.
#[derive(Clone, Debug)]
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Self { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.take()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                return Some(out);
            }
        }
        Some(out)
    }
}

/// Sorted subsets of `items` of size `k`, in lexicographic order of positions.
pub fn subsets_of(items: &[usize], k: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
    Combinations::new(items.len(), k).map(move |c| c.iter().map(|&i| items[i]).collect())
}
