//! Envelope (skyline) Cholesky for sparse symmetric positive definite
//! systems, with reverse Cuthill–McKee ordering.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Reverse Cuthill–McKee permutation of an undirected graph.
///
/// Returns `order` with `order[new] = old`. Each connected component starts
/// from a pseudo-peripheral vertex of minimum degree.
pub fn rcm(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_last_level = |start: usize, seen: &mut [bool]| -> (usize, usize) {
        // returns (eccentricity, a min-degree vertex of the last level)
        let mut q = VecDeque::from([(start, 0usize)]);
        let mut touched = vec![start];
        seen[start] = true;
        let mut last = (0, start);
        while let Some((v, d)) = q.pop_front() {
            if d > last.0 || (d == last.0 && adj[v].len() < adj[last.1].len()) {
                last = (d, v);
            }
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    touched.push(w);
                    q.push_back((w, d + 1));
                }
            }
        }
        for v in touched {
            seen[v] = false;
        }
        last
    };
    let mut scratch = vec![false; n];
    for root in 0..n {
        if visited[root] {
            continue;
        }
        let mut start = root;
        let mut ecc = 0;
        for _ in 0..8 {
            let (e, far) = bfs_last_level(start, &mut scratch);
            if e <= ecc && start != root {
                break;
            }
            ecc = e;
            start = far;
        }
        let begin = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (adj[w].len(), w));
            for w in next {
                visited[w] = true;
                order.push(w);
            }
        }
        order[begin..].reverse();
    }
    order
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Lower-triangular envelope storage: row `i` holds columns `first[i]..=i`.
#[derive(Debug, Clone)]
pub struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
    /// low-order parts of entries added with `add_exact`; empty otherwise
    tail: Vec<f64>,
    factored: bool,
}

impl Skyline {
    /// Envelope covering every pair `(i, j)` listed in `pairs` (either order)
    /// plus the diagonal.
    pub fn with_pattern(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j) in pairs {
            let (hi, lo) = if i > j { (i, j) } else { (j, i) };
            first[hi] = first[hi].min(lo);
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            start.push(acc);
            acc += i - f + 1;
        }
        start.push(acc);
        Self {
            first,
            start,
            vals: vec![0.0; acc],
            tail: Vec::new(),
            factored: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn stored(&self) -> usize {
        self.vals.len()
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && j >= self.first[i], "({i}, {j}) outside envelope");
        self.start[i] + (j - self.first[i])
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
        self.factored = false;
    }

    /// Adds `v` to entry (i, j) and, implicitly, (j, i).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(hi, lo);
        self.vals[k] += v;
    }

    /// Adds the exact product `a·b` to entry (i, j), keeping the rounding
    /// errors in a tail array. The factorization uses the rounded entries;
    /// `residual` uses the full double-double value.
    pub fn add_exact(&mut self, i: usize, j: usize, a: f64, b: f64) {
        if self.tail.is_empty() {
            self.tail = vec![0.0; self.vals.len()];
        }
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(hi, lo);
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let (s, e) = two_sum(self.vals[k], p);
        self.vals[k] = s;
        self.tail[k] += e + pe;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if lo < self.first[hi] {
            0.0
        } else {
            self.vals[self.idx(hi, lo)]
        }
    }

    /// y = A·x for the unfactored matrix.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored, "matrix already factored");
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let f = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            let mut acc = 0.0;
            for (k, &a) in row.iter().enumerate() {
                let j = f + k;
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
        y
    }

    /// In-place Cholesky factorization A = L·Lᵀ of the rounded entries.
    pub fn factor(&mut self) -> Result<()> {
        self.tail = Vec::new();
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.start[j];
                let k0 = fi.max(fj);
                let ri = &self.vals[si + (k0 - fi)..si + (j - fi)];
                let rj = &self.vals[sj + (k0 - fj)..sj + (j - fj)];
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let djj = self.vals[sj + (j - fj)];
                let k = si + (j - fi);
                self.vals[k] = (self.vals[k] - dot) / djj;
            }
            let row = &self.vals[si..si + (i - fi)];
            let sq: f64 = row.iter().map(|a| a * a).sum();
            let d = self.vals[si + (i - fi)] - sq;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i });
            }
            self.vals[si + (i - fi)] = d.sqrt();
        }
        self.factored = true;
        Ok(())
    }

    /// Solves A·x = b in place using the factor.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "factor() must be called first");
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&b[fi..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            b[i] /= row[i - fi];
            let xi = b[i];
            for (k, &a) in row[..i - fi].iter().enumerate() {
                b[fi + k] -= a * xi;
            }
        }
    }

    /// b − A·x for the unfactored matrix, accumulated in double-double so
    /// the residual is accurate even when it is tiny relative to A·x.
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        assert!(!self.factored, "matrix already factored");
        let n = self.dim();
        let mut hi = b.to_vec();
        let mut lo = vec![0.0; n];
        let sub = |k: usize, a: f64, v: f64, hi: &mut [f64], lo: &mut [f64]| {
            let p = a * v;
            let pe = a.mul_add(v, -p);
            let (s, e) = two_sum(hi[k], -p);
            hi[k] = s;
            lo[k] += e - pe;
        };
        let tail = |k: usize| self.tail.get(k).copied().unwrap_or(0.0);
        for i in 0..n {
            let f = self.first[i];
            let s0 = self.start[i];
            let row = &self.vals[s0..self.start[i + 1]];
            for (k, &a) in row.iter().enumerate() {
                let j = f + k;
                let t = tail(s0 + k);
                sub(i, a, x[j], &mut hi, &mut lo);
                lo[i] -= t * x[j];
                if j != i {
                    sub(j, a, x[i], &mut hi, &mut lo);
                    lo[j] -= t * x[i];
                }
            }
        }
        hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian_1d(n: usize) -> Skyline {
        let mut a = Skyline::with_pattern(n, (1..n).map(|i| (i, i - 1)));
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn tridiagonal_solve() {
        let n = 50;
        let mut a = laplacian_1d(n);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.mul(&x);
        a.factor().unwrap();
        let y = a.solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_is_exact_for_integer_data() {
        let a = laplacian_1d(5);
        let x = [1e16, 1.0, 2.0, 3.0, 4.0];
        let b = [2e16, 0.0, 0.0, 0.0, 5.0];
        // A·x = [2e16 - 1, -1e16, 0, 0, 5]
        let r = a.residual(&x, &b);
        assert_eq!(r, vec![1.0, 1e16, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn indefinite_detected() {
        let mut a = Skyline::with_pattern(2, [(0, 1)]);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        a.add(0, 1, 2.0);
        assert!(matches!(a.factor(), Err(Error::NotPositiveDefinite { pivot: 1 })));
    }

    #[test]
    fn rcm_is_a_permutation_and_shrinks_a_scrambled_path() {
        let n = 40;
        let label = |k: usize| (k * 17) % n;
        let mut adj = vec![Vec::new(); n];
        for k in 1..n {
            adj[label(k)].push(label(k - 1));
            adj[label(k - 1)].push(label(k));
        }
        let order = rcm(&adj);
        let mut seen = order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let mut pos = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            pos[old] = new;
        }
        let bw = (0..n).flat_map(|v| adj[v].iter().map(move |&w| (v, w)))
            .map(|(v, w)| pos[v].abs_diff(pos[w]))
            .max()
            .unwrap();
        assert_eq!(bw, 1);
    }

    proptest! {
        #[test]
        fn random_spd_solves(n in 2usize..30, seed in 0u64..1000) {
            // A = Bᵀ B + I with a random banded B
            let mut vals = Vec::new();
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5 };
            let band = 3usize;
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i.saturating_sub(band)..=i {
                    let v = next();
                    vals.push((i, j, v));
                }
            }
            for &(i, j, v) in &vals { dense[i][j] = v; }
            let mut a = Skyline::with_pattern(n, (0..n).flat_map(|i| (i.saturating_sub(2 * band)..i).map(move |j| (i, j))));
            for i in 0..n {
                for j in 0..=i {
                    let mut acc = if i == j { 1.0 } else { 0.0 };
                    for k in 0..n { acc += dense[k][i] * dense[k][j]; }
                    if acc != 0.0 && i - j <= 2 * band { a.add(i, j, acc); }
                }
            }
            let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let b = a.mul(&x);
            a.factor().unwrap();
            let y = a.solve(&b);
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() < 1e-8 * (1.0 + p.abs()));
            }
        }
    }
}
