//! Sparse Cholesky factorization for symmetric positive definite matrices
//! with a fixed sparsity pattern.
//!
//! The symbolic phase (AMD fill-reducing ordering, elimination tree, row
//! and column structure of `L`) runs once per pattern; numeric
//! factorizations reuse it for every new set of values. The factor supports
//! solves, log-determinants and the Takahashi selected inverse, i.e. the
//! entries of `A^{-1}` on the pattern of `L + L^T`.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Ordering, elimination tree and the structure of `L` for one pattern.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[k]` is the original index eliminated at step `k`.
    perm: Vec<usize>,
    /// `iperm[i]` is the elimination step of original index `i`.
    iperm: Vec<usize>,
    // upper triangle of P A P^T, column-compressed, rows sorted
    ap: Vec<usize>,
    ai: Vec<usize>,
    // structure of L, column-compressed, diagonal first in each column
    lp: Vec<usize>,
    li: Vec<usize>,
    // row structure of L (off-diagonal), in topological order for the up-looking sweep
    rp: Vec<usize>,
    rj: Vec<usize>,
}

impl SymbolicCholesky {
    /// Analyses the symmetric pattern given as `(row, col)` pairs in
    /// original indices. Either triangle may be supplied; the diagonal is
    /// always included.
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Result<Self> {
        for &(i, j) in entries {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
            }
        }
        // full symmetric pattern for the ordering
        let mut cols: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(i, j) in entries {
            if i != j {
                cols[i].push(j);
                cols[j].push(i);
            }
        }
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
        }
        let mut fp = Vec::with_capacity(n + 1);
        let mut fi = Vec::new();
        fp.push(0usize);
        for c in &cols {
            fi.extend_from_slice(c);
            fp.push(fi.len());
        }
        let perm = if n == 0 {
            Vec::new()
        } else {
            let (p, _pinv, _info) = amd::order::<usize>(n, &fp, &fi, &amd::Control::default())
                .map_err(|s| Error::InvalidInput(format!("amd ordering failed: {s:?}")))?;
            p
        };
        let mut iperm = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            iperm[i] = k;
        }

        // upper triangle of the permuted matrix
        let mut ucols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, c) in cols.iter().enumerate() {
            for &j in c {
                let (a, b) = (iperm[i], iperm[j]);
                if a <= b {
                    ucols[b].push(a);
                }
            }
        }
        let mut ap = Vec::with_capacity(n + 1);
        let mut ai = Vec::new();
        ap.push(0);
        for c in ucols.iter_mut() {
            c.sort_unstable();
            ai.extend_from_slice(c);
            ap.push(ai.len());
        }

        // elimination tree
        let none = usize::MAX;
        let mut parent = vec![none; n];
        let mut ancestor = vec![none; n];
        for k in 0..n {
            for &row in &ai[ap[k]..ap[k + 1]] {
                let mut i = row;
                while i != none && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == none {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        // row patterns of L via elimination reach
        let mut rp = Vec::with_capacity(n + 1);
        let mut rj = Vec::new();
        let mut mark = vec![none; n];
        let mut stack = Vec::new();
        let mut counts = vec![1usize; n];
        rp.push(0);
        for k in 0..n {
            mark[k] = k;
            let start = rj.len();
            for &row in &ai[ap[k]..ap[k + 1]] {
                let mut i = row;
                stack.clear();
                while i != none && i < k && mark[i] != k {
                    stack.push(i);
                    mark[i] = k;
                    i = parent[i];
                }
                rj.extend_from_slice(&stack);
            }
            // updates only flow from lower to higher indices, so ascending order is topological
            let row = &mut rj[start..];
            row.sort_unstable();
            for &i in row.iter() {
                counts[i] += 1;
            }
            rp.push(rj.len());
        }

        let mut lp = Vec::with_capacity(n + 1);
        lp.push(0);
        for c in &counts {
            lp.push(lp.last().unwrap() + c);
        }
        let mut li = vec![0usize; *lp.last().unwrap()];
        let mut next: Vec<usize> = lp[..n].to_vec();
        for k in 0..n {
            for &i in &rj[rp[k]..rp[k + 1]] {
                li[next[i]] = k;
                next[i] += 1;
            }
            li[next[k]] = k;
            next[k] += 1;
        }
        Ok(SymbolicCholesky { n, perm, iperm, ap, ai, lp, li, rp, rj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries in the permuted upper triangle.
    pub fn nnz_matrix(&self) -> usize {
        self.ai.len()
    }

    pub fn nnz_factor(&self) -> usize {
        self.li.len()
    }

    /// Slot of original entry `(i, j)` in the value array consumed by
    /// [`SymbolicCholesky::factor`].
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.iperm[i], self.iperm[j]);
        let (r, c) = if a <= b { (a, b) } else { (b, a) };
        let rows = &self.ai[self.ap[c]..self.ap[c + 1]];
        rows.binary_search(&r).ok().map(|k| self.ap[c] + k)
    }

    /// Numeric factorization; `values` is indexed by [`SymbolicCholesky::position`].
    pub fn factor(self: &Arc<Self>, values: &[f64]) -> Result<CholeskyFactor> {
        let n = self.n;
        assert_eq!(values.len(), self.ai.len(), "value array does not match the pattern");
        let mut lx = vec![0.0; self.li.len()];
        let mut x = vec![0.0; n];
        let mut next: Vec<usize> = self.lp[..n].to_vec();
        for k in 0..n {
            for p in self.ap[k]..self.ap[k + 1] {
                x[self.ai[p]] = values[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &self.rj[self.rp[k]..self.rp[k + 1]] {
                let lki = x[i] / lx[self.lp[i]];
                x[i] = 0.0;
                for p in (self.lp[i] + 1)..next[i] {
                    x[self.li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                lx[next[i]] = lki;
                next[i] += 1;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: k });
            }
            lx[next[k]] = d.sqrt();
            next[k] += 1;
        }
        Ok(CholeskyFactor { symbolic: Arc::clone(self), lx })
    }
}

/// Numeric factor `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<SymbolicCholesky>,
    lx: Vec<f64>,
}

impl CholeskyFactor {
    pub fn symbolic(&self) -> &SymbolicCholesky {
        &self.symbolic
    }

    pub fn log_det(&self) -> f64 {
        let s = &self.symbolic;
        2.0 * (0..s.n).map(|j| self.lx[s.lp[j]].ln()).sum::<f64>()
    }

    /// `L^{-1} P b`, the whitened right-hand side.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let mut y: Vec<f64> = s.perm.iter().map(|&i| b[i]).collect();
        for j in 0..s.n {
            let yj = y[j] / self.lx[s.lp[j]];
            y[j] = yj;
            if yj != 0.0 {
                for p in (s.lp[j] + 1)..s.lp[j + 1] {
                    y[s.li[p]] -= self.lx[p] * yj;
                }
            }
        }
        y
    }

    /// Solution of `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let mut y = self.forward(b);
        for j in (0..s.n).rev() {
            let mut v = y[j];
            for p in (s.lp[j] + 1)..s.lp[j + 1] {
                v -= self.lx[p] * y[s.li[p]];
            }
            y[j] = v / self.lx[s.lp[j]];
        }
        let mut x = vec![0.0; s.n];
        for (k, &i) in s.perm.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }

    /// `b^T A^{-1} b` for a sparse `b` given as `(index, value)` pairs.
    pub fn quad_inverse(&self, b: &[(usize, f64)]) -> f64 {
        let mut dense = vec![0.0; self.symbolic.n];
        for &(i, v) in b {
            dense[i] += v;
        }
        self.forward(&dense).iter().map(|v| v * v).sum()
    }

    /// Takahashi recursion for the entries of `A^{-1}` on the pattern of `L`.
    pub fn selected_inverse(&self) -> SelectedInverse {
        let s = &self.symbolic;
        let lx = &self.lx;
        let mut sig = vec![0.0; lx.len()];
        let lookup = |sig: &[f64], r: usize, c: usize| -> f64 {
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            let rows = &s.li[s.lp[c]..s.lp[c + 1]];
            match rows.binary_search(&r) {
                Ok(k) => sig[s.lp[c] + k],
                Err(_) => unreachable!("selected inverse entry ({r}, {c}) outside the filled pattern"),
            }
        };
        for i in (0..s.n).rev() {
            let d = lx[s.lp[i]];
            let range = (s.lp[i] + 1)..s.lp[i + 1];
            for pj in range.clone() {
                let j = s.li[pj];
                let mut acc = 0.0;
                for pk in range.clone() {
                    acc += lx[pk] * lookup(&sig, s.li[pk], j);
                }
                sig[pj] = -acc / d;
            }
            let mut acc = 0.0;
            for pk in range {
                acc += lx[pk] * sig[pk];
            }
            sig[s.lp[i]] = 1.0 / (d * d) - acc / d;
        }
        SelectedInverse { symbolic: Arc::clone(&self.symbolic), values: sig }
    }
}

/// Entries of `A^{-1}` restricted to the structure of the factor.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<f64>,
}

impl SelectedInverse {
    /// `(A^{-1})_{ij}` in original indices, if inside the computed pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let s = &self.symbolic;
        let (a, b) = (s.iperm[i], s.iperm[j]);
        let (r, c) = if a >= b { (a, b) } else { (b, a) };
        let rows = &s.li[s.lp[c]..s.lp[c + 1]];
        rows.binary_search(&r).ok().map(|k| self.values[s.lp[c] + k])
    }

    pub fn diag(&self) -> Vec<f64> {
        let s = &self.symbolic;
        (0..s.n).map(|i| self.values[s.lp[s.iperm[i]]]).collect()
    }

    /// `b^T A^{-1} b` when every pair of `b`'s support lies in the pattern.
    pub fn quad(&self, b: &[(usize, f64)]) -> Option<f64> {
        let mut acc = 0.0;
        for (x, &(i, vi)) in b.iter().enumerate() {
            acc += vi * vi * self.get(i, i)?;
            for &(j, vj) in &b[x + 1..] {
                acc += 2.0 * vi * vj * self.get(i, j)?;
            }
        }
        Some(acc)
    }
}

/// Convenience: symbolic analysis plus factorization of a dense-indexed
/// triplet list. Duplicate entries are summed.
pub fn factor_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<CholeskyFactor> {
    let pattern: Vec<(usize, usize)> = triplets.iter().map(|&(i, j, _)| (i, j)).collect();
    let sym = Arc::new(SymbolicCholesky::new(n, &pattern)?);
    let mut values = vec![0.0; sym.nnz_matrix()];
    for &(i, j, v) in triplets {
        if i <= j {
            values[sym.position(i, j).expect("pattern entry")] += v;
        }
    }
    sym.factor(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    /// Random sparse SPD matrix: diagonally dominant with random off-diagonals.
    fn random_spd(n: usize, density: f64, seed: u64) -> (Vec<(usize, usize, f64)>, DMatrix<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        let mut trip = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < density {
                    let v = rng.random::<f64>() - 0.5;
                    dense[(i, j)] = v;
                    dense[(j, i)] = v;
                    trip.push((i, j, v));
                }
            }
        }
        for i in 0..n {
            let s: f64 = (0..n).map(|j| dense[(i, j)].abs()).sum();
            dense[(i, i)] = s + 1.0;
            trip.push((i, i, s + 1.0));
        }
        (trip, dense)
    }

    #[test]
    fn matches_dense() {
        let (trip, dense) = random_spd(40, 0.08, 3);
        let f = factor_triplets(40, &trip).unwrap();
        let chol = dense.clone().cholesky().unwrap();
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        assert!((f.log_det() - logdet).abs() < 1e-10);
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let xd = chol.solve(&nalgebra::DVector::from_vec(b.clone()));
        for i in 0..40 {
            assert!((x[i] - xd[i]).abs() < 1e-10);
        }
        let inv = dense.try_inverse().unwrap();
        let sel = f.selected_inverse();
        for (i, j, _) in &trip {
            assert!((sel.get(*i, *j).unwrap() - inv[(*i, *j)]).abs() < 1e-10);
        }
        for (i, d) in sel.diag().iter().enumerate() {
            assert!((d - inv[(i, i)]).abs() < 1e-10);
        }
        let b = [(3, 1.0), (7, -2.0)];
        let exact = inv[(3, 3)] + 4.0 * inv[(7, 7)] - 4.0 * inv[(3, 7)];
        assert!((f.quad_inverse(&b) - exact).abs() < 1e-10);
    }

    #[test]
    fn indefinite_rejected() {
        let trip = vec![(0, 0, 1.0), (1, 1, 1.0), (0, 1, 2.0)];
        assert!(matches!(factor_triplets(2, &trip), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn refactor_same_pattern() {
        let (trip, _) = random_spd(25, 0.1, 9);
        let pattern: Vec<(usize, usize)> = trip.iter().map(|&(i, j, _)| (i, j)).collect();
        let sym = Arc::new(SymbolicCholesky::new(25, &pattern).unwrap());
        for scale in [1.0, 2.0, 10.0] {
            let mut values = vec![0.0; sym.nnz_matrix()];
            for &(i, j, v) in &trip {
                values[sym.position(i, j).unwrap()] += scale * v;
            }
            let f = sym.factor(&values).unwrap();
            let base = factor_triplets(25, &trip).unwrap().log_det();
            assert!((f.log_det() - (base + 25.0 * scale.ln())).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn selected_inverse_diag_matches_solves(n in 5usize..40, density in 0.02f64..0.3, seed in 0u64..1000) {
            let (trip, _) = random_spd(n, density, seed);
            let f = factor_triplets(n, &trip).unwrap();
            let diag = f.selected_inverse().diag();
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let col = f.solve(&e);
                prop_assert!((col[i] - diag[i]).abs() < 1e-10);
            }
        }
    }
}
