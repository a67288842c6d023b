//! Galerkin assembly of stiffness and mass matrices.
//!
//! Both bilinear forms are evaluated by Gauss quadrature on the integration
//! cells of the space; no basis function is ever evaluated on the
//! collapsing edge itself, so the parameterization's Jacobian is inverted
//! pointwise without special casing.  Assembly is sequential and processes
//! cells and quadrature points in a fixed order, so repeated runs produce
//! bitwise identical matrices.
//!
//! The returned system keeps the full matrices next to their restriction
//! to the unconstrained functions: integral identities (row sums, total
//! mass) hold for the full ones, eigenvalue computations use the masked
//! ones.

use nalgebra::DMatrix;

use crate::quadrature::GaussRule;
use crate::spaces::Space;
use crate::{Error, Result};

/// Sparse symmetric matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    fn from_pattern(n: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Matrix dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entry count.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// Entry `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        let pos = self.col_idx[lo..hi]
            .binary_search(&j)
            .expect("entry outside assembled pattern");
        self.values[lo + pos] += v;
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * x[*c];
            }
            y[i] = acc;
        }
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n {
            let (cols, _) = self.row(i);
            for &c in cols {
                bw = bw.max(i.abs_diff(c));
            }
        }
        bw
    }

    /// Largest stored row population.
    pub fn max_row_nnz(&self) -> usize {
        (0..self.n)
            .map(|i| self.row_ptr[i + 1] - self.row_ptr[i])
            .max()
            .unwrap_or(0)
    }

    /// Largest absolute deviation from symmetry.
    pub fn symmetry_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                err = err.max((v - self.get(*c, i)).abs());
            }
        }
        err
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sum of all entries.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Symmetric restriction to the given ascending index subset.
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut renumber = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            renumber[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &old in keep {
            let (cols, vals) = self.row(old);
            for (c, v) in cols.iter().zip(vals) {
                if renumber[*c] != usize::MAX {
                    col_idx.push(renumber[*c]);
                    values.push(*v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Symmetric reordering: entry `(i, j)` of the result is entry
    /// `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let mut inverse = vec![0usize; self.n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut entries: Vec<(usize, f64)> = Vec::new();
        row_ptr.push(0);
        for &old in perm {
            let (cols, vals) = self.row(old);
            entries.clear();
            entries.extend(cols.iter().map(|&c| inverse[c]).zip(vals.iter().copied()));
            entries.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &entries {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds from a dense matrix, storing its nonzero entries.
    pub fn from_dense(d: &DMatrix<f64>) -> Self {
        let n = d.nrows();
        assert_eq!(n, d.ncols());
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if d[(i, j)] != 0.0 {
                    rows[i].push(j);
                }
            }
        }
        let mut out = Self::from_pattern(n, rows);
        for i in 0..n {
            let lo = out.row_ptr[i];
            let hi = out.row_ptr[i + 1];
            for pos in lo..hi {
                out.values[pos] = d[(i, out.col_idx[pos])];
            }
        }
        out
    }

    /// Dense copy.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                out[(i, *c)] = *v;
            }
        }
        out
    }
}

/// Assembled Galerkin system for one discrete space.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Stiffness over all functions.
    pub full_stiffness: CsrMatrix,
    /// Mass over all functions.
    pub full_mass: CsrMatrix,
    /// Stiffness restricted to unconstrained functions.
    pub stiffness: CsrMatrix,
    /// Mass restricted to unconstrained functions.
    pub mass: CsrMatrix,
    /// Unconstrained function indices, ascending.
    pub free: Vec<usize>,
}

impl AssembledSystem {
    /// Embeds a vector over the free functions into the full numbering,
    /// zero on the constrained ones.
    pub fn embed(&self, reduced: &[f64]) -> Vec<f64> {
        assert_eq!(reduced.len(), self.free.len());
        let mut full = vec![0.0; self.full_mass.n()];
        for (&dof, &v) in self.free.iter().zip(reduced) {
            full[dof] = v;
        }
        full
    }
}

/// Assembles stiffness and mass matrices with `points_per_dir` Gauss points
/// per direction on every integration cell.
pub fn assemble(space: &Space, points_per_dir: usize) -> Result<AssembledSystem> {
    let geo = space.geometry();
    let n = space.num_dofs();
    let rule = GaussRule::new(points_per_dir)?;
    let cells = space.cells();

    // Pattern pass: the active set is constant on each cell, so one
    // evaluation at the cell center suffices.
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut cell_active: Vec<Vec<usize>> = Vec::with_capacity(cells.len());
    for cell in &cells {
        let center = [
            0.5 * (cell.rect[0][0] + cell.rect[0][1]),
            0.5 * (cell.rect[1][0] + cell.rect[1][1]),
        ];
        let active = space.eval_at(center)?.indices;
        for &i in &active {
            rows[i].extend_from_slice(&active);
        }
        cell_active.push(active);
    }
    let mut stiffness = CsrMatrix::from_pattern(n, rows);
    let mut mass = stiffness.clone();

    // Quadrature pass with dense cell-local accumulation.
    for (cell, active) in cells.iter().zip(&cell_active) {
        let nloc = active.len();
        let mut k_loc = vec![0.0; nloc * nloc];
        let mut m_loc = vec![0.0; nloc * nloc];
        let mut gx = vec![0.0; nloc];
        let mut gy = vec![0.0; nloc];
        for q in rule.element_rule(cell.rect) {
            let e = space.eval_at(q.zeta)?;
            debug_assert_eq!(&e.indices, active, "active set varies inside a cell");
            let g = geo.eval(q.zeta)?;
            let [[a, b], [c, d]] = g.jac;
            for l in 0..nloc {
                let [g1, g2] = e.grads[l];
                gx[l] = (d * g1 - c * g2) / g.det;
                gy[l] = (-b * g1 + a * g2) / g.det;
            }
            let wq = q.weight * g.det;
            for l in 0..nloc {
                let (vl, gxl, gyl) = (e.values[l], gx[l], gy[l]);
                for m in 0..nloc {
                    k_loc[l * nloc + m] += wq * (gxl * gx[m] + gyl * gy[m]);
                    m_loc[l * nloc + m] += wq * vl * e.values[m];
                }
            }
        }
        for (l, &gi) in active.iter().enumerate() {
            for (m, &gj) in active.iter().enumerate() {
                stiffness.add(gi, gj, k_loc[l * nloc + m]);
                mass.add(gi, gj, m_loc[l * nloc + m]);
            }
        }
    }
    if stiffness.values.iter().chain(&mass.values).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assembled matrix entry"));
    }

    let free = space.free_dofs();
    let reduced_k = stiffness.restrict(&free);
    let reduced_m = mass.restrict(&free);
    Ok(AssembledSystem {
        full_stiffness: stiffness,
        full_mass: mass,
        stiffness: reduced_k,
        mass: reduced_m,
        free,
    })
}
