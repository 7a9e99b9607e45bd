//! Envelope (profile) Cholesky factorization under a reverse Cuthill-McKee
//! ordering, plus the Gram-product helpers that build the symmetric
//! matrices it factors.

use super::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NotPositiveDefinite {
    pub row: usize,
}

/// `M diag(w) Mᵀ + diag(shift)`, returned with both triangles stored.
/// `mt` must be the transpose of `m`.
pub(crate) fn gram(m: &CsrMatrix, mt: &CsrMatrix, w: &[f64], shift: &[f64]) -> CsrMatrix {
    let n = m.nrows();
    let mut acc = vec![0.0; n];
    let mut mark = vec![usize::MAX; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut out = CsrMatrix::with_capacity(n, n, 4 * m.nnz());
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        touched.clear();
        mark[i] = i;
        acc[i] = shift[i];
        touched.push(i);
        let (cols, vals) = m.row(i);
        for (&j, &aij) in cols.iter().zip(vals) {
            let s = aij * w[j];
            let (rows_k, vals_k) = mt.row(j);
            for (&k, &akj) in rows_k.iter().zip(vals_k) {
                if mark[k] != i {
                    mark[k] = i;
                    acc[k] = 0.0;
                    touched.push(k);
                }
                acc[k] += s * akj;
            }
        }
        touched.sort_unstable();
        entries.clear();
        entries.extend(touched.iter().map(|&k| (k, acc[k])));
        out.push_row(&entries);
    }
    out
}

/// Reverse Cuthill-McKee ordering of a structurally symmetric matrix.
/// Returns `perm` with `perm[new] = old`.
pub(crate) fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    let mut nbrs: Vec<usize> = Vec::new();
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree);
        visited[start] = true;
        let mut head = order.len();
        order.push(start);
        while head < order.len() {
            let v = order[head];
            head += 1;
            nbrs.clear();
            nbrs.extend(a.row(v).0.iter().copied().filter(|&u| !visited[u]));
            nbrs.sort_by_key(|&u| (degree[u], u));
            for &u in &nbrs {
                visited[u] = true;
                order.push(u);
            }
        }
    }
    order.reverse();
    order
}

/// George-Liu style search for a node of (near) maximal eccentricity within
/// the component of `seed`.
fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let n = a.nrows();
    let mut level = vec![usize::MAX; n];
    let mut current = seed;
    let mut best_ecc = 0;
    for _ in 0..8 {
        let mut queue = vec![current];
        let mut touched = vec![current];
        level[current] = 0;
        let mut head = 0;
        while head < queue.len() {
            let v = queue[head];
            head += 1;
            for &u in a.row(v).0 {
                if level[u] == usize::MAX {
                    level[u] = level[v] + 1;
                    queue.push(u);
                    touched.push(u);
                }
            }
        }
        let ecc = level[*queue.last().unwrap()];
        let candidate = queue
            .iter()
            .copied()
            .filter(|&v| level[v] == ecc)
            .min_by_key(|&v| (degree[v], v))
            .unwrap();
        for v in touched {
            level[v] = usize::MAX;
        }
        if ecc <= best_ecc && current != seed {
            break;
        }
        best_ecc = ecc;
        if candidate == current {
            break;
        }
        current = candidate;
    }
    current
}

/// Symbolic part of the factorization: the ordering and envelope shape.
#[derive(Debug, Clone)]
pub(crate) struct EnvelopeSymbolic {
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
}

impl EnvelopeSymbolic {
    pub(crate) fn analyze(a: &CsrMatrix) -> Self {
        let perm = rcm_ordering(a);
        let n = perm.len();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for &c in a.row(old).0 {
                let j = inv[c];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        EnvelopeSymbolic {
            perm,
            inv,
            first,
            start,
        }
    }

    pub(crate) fn envelope_size(&self) -> usize {
        *self.start.last().unwrap()
    }
}

/// Lower-triangular factor `L` with `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub(crate) struct EnvelopeCholesky {
    sym: EnvelopeSymbolic,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    #[cfg(test)]
    fn symbolic(&self) -> &EnvelopeSymbolic {
        &self.sym
    }

    pub(crate) fn factor(a: &CsrMatrix) -> Result<Self, NotPositiveDefinite> {
        Self::factor_with(EnvelopeSymbolic::analyze(a), a)
    }

    /// Numeric factorization reusing a symbolic analysis of a matrix with
    /// the same pattern.
    pub(crate) fn factor_with(sym: EnvelopeSymbolic, a: &CsrMatrix) -> Result<Self, NotPositiveDefinite> {
        let n = sym.perm.len();
        let mut data = vec![0.0; sym.envelope_size()];
        for old in 0..n {
            let i = sym.inv[old];
            let (cols, vals) = a.row(old);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = sym.inv[c];
                if j <= i {
                    data[sym.start[i] + j - sym.first[i]] += v;
                }
            }
        }
        for i in 0..n {
            let fi = sym.first[i];
            let si = sym.start[i];
            for j in fi..i {
                let fj = sym.first[j];
                let sj = sym.start[j];
                let k0 = fi.max(fj);
                let mut acc = data[si + j - fi];
                for k in k0..j {
                    acc -= data[si + k - fi] * data[sj + k - fj];
                }
                data[si + j - fi] = acc / data[sj + j - fj];
            }
            let mut d = data[si + i - fi];
            let diag0 = d;
            for k in fi..i {
                let l = data[si + k - fi];
                d -= l * l;
            }
            if !(d > 1e-14 * diag0.abs()) || !d.is_finite() {
                return Err(NotPositiveDefinite { row: sym.perm[i] });
            }
            data[si + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky { sym, data })
    }

    /// Solves `A x = rhs` in place.
    pub(crate) fn solve_in_place(&self, rhs: &mut [f64], work: &mut Vec<f64>) {
        let sym = &self.sym;
        let n = sym.perm.len();
        work.clear();
        work.extend(sym.perm.iter().map(|&old| rhs[old]));
        for i in 0..n {
            let fi = sym.first[i];
            let si = sym.start[i];
            let mut acc = work[i];
            for k in fi..i {
                acc -= self.data[si + k - fi] * work[k];
            }
            work[i] = acc / self.data[si + i - fi];
        }
        for i in (0..n).rev() {
            let fi = sym.first[i];
            let si = sym.start[i];
            let xi = work[i] / self.data[si + i - fi];
            work[i] = xi;
            for k in fi..i {
                work[k] -= self.data[si + k - fi] * xi;
            }
        }
        for (new, &old) in sym.perm.iter().enumerate() {
            rhs[old] = work[new];
        }
    }
}
