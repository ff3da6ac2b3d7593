//! Structured quadrilateral grid and the linear distance filter shared by
//! both design fields.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::par;

/// Uniform `nx × ny` grid of square elements of edge `h`.
///
/// Nodes are numbered lexicographically with x fastest: node `(i, j)` has id
/// `j * (nx + 1) + i` and sits at `origin + (i h, j h)`. Element `(i, j)` has
/// id `j * nx + i` and connects its four corners counterclockwise starting at
/// the lower-left one.
#[derive(Debug, Clone)]
pub struct StructuredGrid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
    /// Named node tags (`left`, `right`, `bottom`, `top` are always present).
    pub node_sets: BTreeMap<String, Vec<usize>>,
    /// Named boundary edges as node pairs.
    pub side_sets: BTreeMap<String, Vec<[usize; 2]>>,
}

pub fn build_grid(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Result<StructuredGrid> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid(format!(
            "grid dimensions must be positive, got {nx}x{ny}"
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("element size must be > 0, got {h}")));
    }
    let mut grid = StructuredGrid {
        nx,
        ny,
        h,
        origin,
        node_sets: BTreeMap::new(),
        side_sets: BTreeMap::new(),
    };
    let left: Vec<usize> = (0..=ny).map(|j| grid.node_id(0, j)).collect();
    let right: Vec<usize> = (0..=ny).map(|j| grid.node_id(nx, j)).collect();
    let bottom: Vec<usize> = (0..=nx).map(|i| grid.node_id(i, 0)).collect();
    let top: Vec<usize> = (0..=nx).map(|i| grid.node_id(i, ny)).collect();
    for (name, nodes) in [("left", left), ("right", right), ("bottom", bottom), ("top", top)] {
        let edges = nodes.windows(2).map(|w| [w[0], w[1]]).collect();
        grid.side_sets.insert(name.to_string(), edges);
        grid.node_sets.insert(name.to_string(), nodes);
    }
    Ok(grid)
}

impl StructuredGrid {
    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        (n % (self.nx + 1), n / (self.nx + 1))
    }

    #[inline]
    pub fn node_coords(&self, n: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(n);
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    #[inline]
    pub fn elem_ij(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Corner node ids of element `e`, counterclockwise from lower-left.
    #[inline]
    pub fn elem_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.elem_ij(e);
        let n0 = self.node_id(i, j);
        let n3 = self.node_id(i, j + 1);
        [n0, n0 + 1, n3 + 1, n3]
    }

    /// Lower-left corner of element `e`.
    #[inline]
    pub fn elem_origin(&self, e: usize) -> [f64; 2] {
        let (i, j) = self.elem_ij(e);
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.h
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.h
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Length of the design-domain boundary.
    pub fn boundary_length(&self) -> f64 {
        2.0 * (self.width() + self.height())
    }

    /// Nodes whose coordinates fall in the closed box `[x0, x1] × [y0, y1]`.
    pub fn nodes_in_box(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<usize> {
        let tol = 1e-9 * self.h;
        (0..self.num_nodes())
            .filter(|&n| {
                let [x, y] = self.node_coords(n);
                x >= x0 - tol && x <= x1 + tol && y >= y0 - tol && y <= y1 + tol
            })
            .collect()
    }

    /// Element averages of a nodal field.
    pub fn element_average(&self, nodal: &[f64]) -> Vec<f64> {
        par::map_range(self.num_elements(), |e| {
            self.elem_nodes(e).iter().map(|&n| nodal[n]).sum::<f64>() * 0.25
        })
    }
}

/// Row-normalized linear distance filter `F` with
/// `w_ij = max(0, r - |X_i - X_j|)` and `F_ij = w_ij / Σ_j w_ij`.
///
/// Stored in CSR form together with its transpose so that both `F s` and
/// `Fᵀ g` are row-wise dot products with a fixed summation order.
#[derive(Debug, Clone)]
pub struct FilterOperator {
    pub radius: f64,
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    t_row_ptr: Vec<usize>,
    t_cols: Vec<usize>,
    t_vals: Vec<f64>,
}

/// Unnormalized cone weight; zero at and beyond the radius.
#[inline]
pub fn filter_weight(radius: f64, dist: f64) -> f64 {
    (radius - dist).max(0.0)
}

pub fn build_filter(grid: &StructuredGrid, radius: f64) -> Result<FilterOperator> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("filter radius must be > 0, got {radius}")));
    }
    let h = grid.h;
    let reach = (radius / h).ceil() as isize;
    // Lattice offsets strictly inside the radius, in a fixed order.
    let mut stencil = Vec::new();
    for dj in -reach..=reach {
        for di in -reach..=reach {
            let w = filter_weight(radius, h * ((di * di + dj * dj) as f64).sqrt());
            if w > 0.0 {
                stencil.push((di, dj, w));
            }
        }
    }

    let n = grid.num_nodes();
    let rows: Vec<Vec<(usize, f64)>> = par::map_range(n, |node| {
        let (i, j) = grid.node_ij(node);
        let mut row: Vec<(usize, f64)> = stencil
            .iter()
            .filter_map(|&(di, dj, w)| {
                let ii = i as isize + di;
                let jj = j as isize + dj;
                if ii < 0 || jj < 0 || ii > grid.nx as isize || jj > grid.ny as isize {
                    return None;
                }
                Some((grid.node_id(ii as usize, jj as usize), w))
            })
            .collect();
        row.sort_by_key(|&(c, _)| c);
        let total: f64 = row.iter().map(|&(_, w)| w).sum();
        for entry in &mut row {
            entry.1 /= total;
        }
        row
    });

    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for row in &rows {
        for &(c, v) in row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }

    // Transpose by counting sort; columns within each transposed row end up
    // in ascending order because rows are visited in order.
    let mut counts = vec![0usize; n + 1];
    for &c in &cols {
        counts[c + 1] += 1;
    }
    for k in 0..n {
        counts[k + 1] += counts[k];
    }
    let t_row_ptr = counts.clone();
    let mut next = counts;
    let mut t_cols = vec![0usize; cols.len()];
    let mut t_vals = vec![0.0; cols.len()];
    for r in 0..n {
        for k in row_ptr[r]..row_ptr[r + 1] {
            let c = cols[k];
            t_cols[next[c]] = r;
            t_vals[next[c]] = vals[k];
            next[c] += 1;
        }
    }

    Ok(FilterOperator {
        radius,
        n,
        row_ptr,
        cols,
        vals,
        t_row_ptr,
        t_cols,
        t_vals,
    })
}

impl FilterOperator {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzeros of row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    /// Entry `F_ij` (zero outside the sparsity pattern).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// `F s`.
    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_len(s.len())?;
        Ok(par::map_range(self.n, |i| {
            spmv_row(&self.row_ptr, &self.cols, &self.vals, s, i)
        }))
    }

    /// `Fᵀ g`.
    pub fn apply_transpose(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check_len(g.len())?;
        Ok(par::map_range(self.n, |i| {
            spmv_row(&self.t_row_ptr, &self.t_cols, &self.t_vals, g, i)
        }))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::invalid(format!(
                "filter expects a nodal vector of length {}, got {len}",
                self.n
            )));
        }
        Ok(())
    }
}

#[inline]
fn spmv_row(ptr: &[usize], cols: &[usize], vals: &[f64], x: &[f64], i: usize) -> f64 {
    let mut acc = 0.0;
    for k in ptr[i]..ptr[i + 1] {
        acc += vals[k] * x[cols[k]];
    }
    acc
}

pub fn apply_filter(f: &FilterOperator, s: &[f64]) -> Result<Vec<f64>> {
    f.apply(s)
}

pub fn apply_filter_transpose(f: &FilterOperator, g: &[f64]) -> Result<Vec<f64>> {
    f.apply_transpose(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(f: &FilterOperator) -> Vec<Vec<f64>> {
        (0..f.size())
            .map(|i| (0..f.size()).map(|j| f.get(i, j)).collect())
            .collect()
    }

    // Independent dense construction straight from the weight definition.
    fn dense_oracle(grid: &StructuredGrid, r: f64) -> Vec<Vec<f64>> {
        let n = grid.num_nodes();
        (0..n)
            .map(|i| {
                let xi = grid.node_coords(i);
                let w: Vec<f64> = (0..n)
                    .map(|j| {
                        let xj = grid.node_coords(j);
                        let d = ((xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2)).sqrt();
                        (r - d).max(0.0)
                    })
                    .collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(|v| v / total).collect()
            })
            .collect()
    }

    #[test]
    fn smallest_grid() {
        let g = build_grid(1, 1, 1.0, [0.0, 0.0]).unwrap();
        assert_eq!(g.num_nodes(), 4);
        assert_eq!(g.num_elements(), 1);
        assert_eq!(g.node_coords(0), [0.0, 0.0]);
        assert_eq!(g.node_coords(3), [1.0, 1.0]);
        assert_eq!(g.elem_nodes(0), [0, 1, 3, 2]);
    }

    #[test]
    fn grid_sizes() {
        let g = build_grid(240, 80, 0.5, [0.0, 0.0]).unwrap();
        assert_eq!(g.num_nodes(), 19_521);
        assert_eq!(g.num_elements(), 19_200);
        let g = build_grid(120, 40, 1.0, [0.0, 0.0]).unwrap();
        assert_eq!(g.num_nodes(), 4_961);
    }

    #[test]
    fn grid_rejects_bad_dimensions() {
        assert!(build_grid(0, 3, 1.0, [0.0, 0.0]).is_err());
        assert!(build_grid(3, 0, 1.0, [0.0, 0.0]).is_err());
        assert!(build_grid(3, 3, 0.0, [0.0, 0.0]).is_err());
        assert!(build_grid(3, 3, -1.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn connectivity_is_valid() {
        let g = build_grid(5, 3, 0.7, [1.0, -2.0]).unwrap();
        for e in 0..g.num_elements() {
            let n = g.elem_nodes(e);
            for a in 0..4 {
                assert!(n[a] < g.num_nodes());
                for b in a + 1..4 {
                    assert_ne!(n[a], n[b]);
                }
                let p = g.node_coords(n[a]);
                let q = g.node_coords(n[(a + 1) % 4]);
                let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                assert!((d - 0.7).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn small_radius_gives_identity() {
        let g = build_grid(4, 3, 2.0, [0.0, 0.0]).unwrap();
        let f = build_filter(&g, 1.0).unwrap();
        assert_eq!(f.nnz(), g.num_nodes());
        for i in 0..g.num_nodes() {
            assert_eq!(f.get(i, i), 1.0);
        }
    }

    #[test]
    fn one_neighbor_row() {
        // Node with a single neighbor at distance h, r = 1.5h.
        let w = [filter_weight(1.5, 0.0), filter_weight(1.5, 1.0)];
        assert_eq!(w, [1.5, 0.5]);
        let total: f64 = w.iter().sum();
        assert_eq!((w[0] / total, w[1] / total), (0.75, 0.25));

        // Corner of a 1x1 grid: self, two axis neighbors, one diagonal.
        let g = build_grid(1, 1, 1.0, [0.0, 0.0]).unwrap();
        let f = build_filter(&g, 1.5).unwrap();
        let diag = 1.5 - 2f64.sqrt();
        let total = 1.5 + 0.5 + 0.5 + diag;
        assert!((f.get(0, 0) - 1.5 / total).abs() < 1e-15);
        assert!((f.get(0, 1) - 0.5 / total).abs() < 1e-15);
        assert!((f.get(0, 3) - diag / total).abs() < 1e-15);
    }

    #[test]
    fn interior_stencil_has_nine_entries() {
        let g = build_grid(6, 6, 1.0, [0.0, 0.0]).unwrap();
        let f = build_filter(&g, 1.5).unwrap();
        let center = g.node_id(3, 3);
        assert_eq!(f.row(center).count(), 9);
    }

    #[test]
    fn nodes_at_radius_get_zero_weight() {
        let g = build_grid(6, 6, 1.0, [0.0, 0.0]).unwrap();
        let f = build_filter(&g, 2.0).unwrap();
        let c = g.node_id(3, 3);
        assert_eq!(f.get(c, g.node_id(5, 3)), 0.0);
        assert!(f.get(c, g.node_id(4, 4)) > 0.0);
    }

    #[test]
    fn matches_dense_oracle() {
        let g = build_grid(7, 5, 1.0, [0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for r in [1.5, 2.5, 4.0] {
            let f = build_filter(&g, r).unwrap();
            let oracle = dense_oracle(&g, r);
            let s: Vec<f64> = (0..g.num_nodes()).map(|_| rng.gen()).collect();
            let got = f.apply(&s).unwrap();
            let got_t = f.apply_transpose(&s).unwrap();
            for i in 0..g.num_nodes() {
                let want: f64 = (0..g.num_nodes()).map(|j| oracle[i][j] * s[j]).sum();
                let want_t: f64 = (0..g.num_nodes()).map(|j| oracle[j][i] * s[j]).sum();
                assert!((got[i] - want).abs() < 1e-12);
                assert!((got_t[i] - want_t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_differs_on_boundary_rows() {
        let g = build_grid(4, 4, 1.0, [0.0, 0.0]).unwrap();
        let f = build_filter(&g, 2.5).unwrap();
        let d = dense(&f);
        let asym = (0..g.num_nodes())
            .any(|i| (0..g.num_nodes()).any(|j| (d[i][j] - d[j][i]).abs() > 1e-6));
        assert!(asym);
        let gvec: Vec<f64> = (0..g.num_nodes()).map(|i| (i as f64).sin()).collect();
        let a = f.apply(&gvec).unwrap();
        let b = f.apply_transpose(&gvec).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
        let zero = f.apply_transpose(&vec![0.0; g.num_nodes()]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn spike_reads_column() {
        let g = build_grid(5, 5, 1.0, [0.0, 0.0]).unwrap();
        let f = build_filter(&g, 2.2).unwrap();
        let k = g.node_id(1, 2);
        let mut s = vec![0.0; g.num_nodes()];
        s[k] = 1.0;
        let out = f.apply(&s).unwrap();
        for i in 0..g.num_nodes() {
            assert_eq!(out[i], f.get(i, k));
        }
    }

    #[test]
    fn length_mismatch() {
        let g = build_grid(2, 2, 1.0, [0.0, 0.0]).unwrap();
        let f = build_filter(&g, 1.5).unwrap();
        assert!(f.apply(&[1.0; 3]).is_err());
        assert!(f.apply_transpose(&[1.0; 10]).is_err());
        assert!(build_filter(&g, 0.0).is_err());
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let g = build_grid(30, 20, 1.0, [0.0, 0.0]).unwrap();
        let f = build_filter(&g, 3.3).unwrap();
        let s: Vec<f64> = (0..g.num_nodes()).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let a = f.apply(&s).unwrap();
        crate::par::set_enabled(false);
        let b = f.apply(&s).unwrap();
        crate::par::set_enabled(true);
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rows_sum_to_one(nx in 1usize..12, ny in 1usize..12, r in 0.3f64..6.0) {
            let g = build_grid(nx, ny, 1.0, [0.0, 0.0]).unwrap();
            let f = build_filter(&g, r).unwrap();
            for i in 0..g.num_nodes() {
                let s: f64 = f.row(i).map(|(_, v)| v).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(f.row(i).all(|(_, v)| v > 0.0));
            }
        }

        #[test]
        fn linear_bounded_and_adjoint(seed in 0u64..1000, r in 1.0f64..4.0) {
            let g = build_grid(8, 6, 1.0, [0.0, 0.0]).unwrap();
            let f = build_filter(&g, r).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = g.num_nodes();
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let fa = f.apply(&a).unwrap();
            let fb = f.apply(&b).unwrap();
            let fmix = f.apply(&mix).unwrap();
            let (lo, hi) = a.iter().fold((f64::MAX, f64::MIN), |(l, u), &v| (l.min(v), u.max(v)));
            for i in 0..n {
                prop_assert!((fmix[i] - (alpha * fa[i] + beta * fb[i])).abs() < 1e-12);
                prop_assert!(fa[i] >= lo - 1e-15 && fa[i] <= hi + 1e-15);
            }
            let ftb = f.apply_transpose(&b).unwrap();
            let lhs: f64 = fa.iter().zip(&b).map(|(x, y)| x * y).sum();
            let rhs: f64 = a.iter().zip(&ftb).map(|(x, y)| x * y).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
