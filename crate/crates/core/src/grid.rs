//! Uniform Cartesian grids centred at the origin, with central-difference stencils.

use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::linalg::SymMatrix;

pub const MAX_GRID_DIM: usize = 3;

/// Node-centred box `[-R_0, R_0] × ... × [-R_{d-1}, R_{d-1}]` with spacing `h`
/// shared by all axes. Node `0` is the corner with all coordinates at `-R`;
/// the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub dim: usize,
    pub nodes: [usize; MAX_GRID_DIM],
    pub half_width: [f64; MAX_GRID_DIM],
    pub h: f64,
    strides: [usize; MAX_GRID_DIM],
}

impl Grid {
    /// `[-R, R]^d` with `n` nodes per axis.
    pub fn cube(dim: usize, half_width: f64, n: usize) -> Result<Self> {
        Self::new(&vec![half_width; dim], &vec![n; dim])
    }

    /// A box with per-axis half widths and node counts; the counts must be odd
    /// and give the same spacing on every axis.
    pub fn new(half_widths: &[f64], nodes: &[usize]) -> Result<Self> {
        let dim = nodes.len();
        if dim == 0 || dim > MAX_GRID_DIM || half_widths.len() != dim {
            return Err(FlowError::Config(format!(
                "grid dimension must be 1..={MAX_GRID_DIM} with one extent per axis"
            )));
        }
        for (&n, &r) in nodes.iter().zip(half_widths) {
            if n < 3 || n % 2 == 0 {
                return Err(FlowError::Config(format!("node count per axis must be odd and >= 3, got {n}")));
            }
            if !(r > 0.0) || !r.is_finite() {
                return Err(FlowError::Config(format!("grid half width must be positive, got {r}")));
            }
        }
        let h = 2.0 * half_widths[0] / (nodes[0] - 1) as f64;
        for (&n, &r) in nodes.iter().zip(half_widths).skip(1) {
            let hk = 2.0 * r / (n - 1) as f64;
            if ((hk - h) / h).abs() > 1e-12 {
                return Err(FlowError::Config(format!(
                    "grid spacing differs between axes ({h} vs {hk}); all axes must share h"
                )));
            }
        }
        let mut n = [1usize; MAX_GRID_DIM];
        let mut rw = [0.0; MAX_GRID_DIM];
        n[..dim].copy_from_slice(nodes);
        rw[..dim].copy_from_slice(half_widths);
        let mut strides = [0usize; MAX_GRID_DIM];
        let mut s = 1;
        for k in (0..dim).rev() {
            strides[k] = s;
            s *= n[k];
        }
        Ok(Self { dim, nodes: n, half_width: rw, h, strides })
    }

    pub fn len(&self) -> usize {
        self.nodes[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn multi_index(&self, mut idx: usize) -> [usize; MAX_GRID_DIM] {
        let mut out = [0; MAX_GRID_DIM];
        for k in 0..self.dim {
            out[k] = idx / self.strides[k];
            idx %= self.strides[k];
        }
        out
    }

    pub fn index_of(&self, mi: &[usize]) -> usize {
        mi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, idx: usize) -> [f64; MAX_GRID_DIM] {
        let mi = self.multi_index(idx);
        let mut x = [0.0; MAX_GRID_DIM];
        for k in 0..self.dim {
            x[k] = -self.half_width[k] + mi[k] as f64 * self.h;
        }
        x
    }

    pub fn radius_sq(&self, idx: usize) -> f64 {
        self.coords(idx)[..self.dim].iter().map(|x| x * x).sum()
    }

    /// True on the outermost index shell.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim).any(|k| mi[k] == 0 || mi[k] + 1 == self.nodes[k])
    }

    /// Index of the node nearest to `x`, if `x` lies within half a cell of the box.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        let mut mi = [0usize; MAX_GRID_DIM];
        for k in 0..self.dim {
            let f = (x[k] + self.half_width[k]) / self.h;
            let r = f.round();
            if r < 0.0 || r > (self.nodes[k] - 1) as f64 || (f - r).abs() > 1e-6 {
                return None;
            }
            mi[k] = r as usize;
        }
        Some(self.index_of(&mi[..self.dim]))
    }

    /// Neighbours across each face, `(minus, plus)` per axis; `None` off the grid.
    pub fn face_neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let mi = self.multi_index(idx);
        (0..self.dim).flat_map(move |k| {
            let s = self.strides[k];
            let lo = (mi[k] > 0).then(|| idx - s);
            let hi = (mi[k] + 1 < self.nodes[k]).then(|| idx + s);
            lo.into_iter().chain(hi)
        })
    }

    /// Central-difference gradient and Hessian at an interior node. Mixed
    /// second derivatives use the four-point corner stencil.
    pub fn derivatives(&self, u: &[f64], idx: usize, grad: &mut [f64; MAX_GRID_DIM]) -> SymMatrix {
        let d = self.dim;
        let h = self.h;
        let inv2h = 0.5 / h;
        let invh2 = 1.0 / (h * h);
        let inv4h2 = 0.25 * invh2;
        let c = u[idx];
        let mut hess = SymMatrix::zeros(d);
        for k in 0..d {
            let s = self.strides[k];
            let (m, p) = (u[idx - s], u[idx + s]);
            grad[k] = (p - m) * inv2h;
            hess.m[k][k] = (p - 2.0 * c + m) * invh2;
            for l in k + 1..d {
                let t = self.strides[l];
                let v = (u[idx + s + t] - u[idx + s - t] - u[idx - s + t] + u[idx - s - t]) * inv4h2;
                hess.set_sym(k, l, v);
            }
        }
        hess
    }

    /// All `3^d` offsets around a node (including the node itself), if it is interior.
    pub fn box_neighbourhood(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![idx];
        for k in 0..self.dim {
            let s = self.strides[k];
            let cur = out.clone();
            for &i in &cur {
                out.push(i - s);
                out.push(i + s);
            }
        }
        out
    }

    /// Linear-index offsets of the `3^d − 1` box neighbours of an interior node.
    pub fn box_offsets(&self) -> Vec<isize> {
        let mut out = vec![0isize];
        for k in 0..self.dim {
            let s = self.strides[k] as isize;
            let cur = out.clone();
            for &o in &cur {
                out.push(o - s);
                out.push(o + s);
            }
        }
        out.retain(|&o| o != 0);
        out
    }

    /// Samples `f(x)` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.coords(i)[..self.dim])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_coords() {
        let g = Grid::new(&[2.0, 1.0], &[5, 3]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.h, 1.0);
        assert_eq!(g.coords(0)[..2], [-2.0, -1.0]);
        assert_eq!(g.coords(1)[..2], [-2.0, 0.0]);
        assert_eq!(g.coords(14)[..2], [2.0, 1.0]);
        assert_eq!(g.nearest(&[0.0, 0.0]), Some(7));
        assert!(g.is_boundary(0) && !g.is_boundary(7));
        assert_eq!(g.multi_index(7)[..2], [2, 1]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(&[2.0, 1.0], &[5, 5]).is_err());
        assert!(Grid::cube(2, 1.0, 4).is_err());
        assert!(Grid::cube(4, 1.0, 5).is_err());
    }

    #[test]
    fn quadratic_is_differentiated_exactly() {
        let g = Grid::cube(3, 1.0, 9).unwrap();
        let u = g.sample(|x| 0.5 * x[0] * x[0] + 2.0 * x[0] * x[1] - x[2] * x[2] + 3.0 * x[1]);
        let idx = g.index_of(&[3, 5, 4]);
        let x = g.coords(idx);
        let mut grad = [0.0; 3];
        let hess = g.derivatives(&u, idx, &mut grad);
        assert!((grad[0] - (x[0] + 2.0 * x[1])).abs() < 1e-12);
        assert!((grad[1] - (2.0 * x[0] + 3.0)).abs() < 1e-12);
        assert!((grad[2] - (-2.0 * x[2])).abs() < 1e-12);
        let expect = SymMatrix::from_rows(3, &[1.0, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, -2.0]);
        assert!(hess.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn neighbourhoods() {
        let g = Grid::cube(2, 1.0, 5).unwrap();
        assert_eq!(g.box_neighbourhood(12).len(), 9);
        let mut offs = g.box_offsets();
        offs.sort();
        assert_eq!(offs, vec![-6, -5, -4, -1, 1, 4, 5, 6]);
        assert_eq!(g.face_neighbours(0).count(), 2);
        assert_eq!(g.face_neighbours(12).count(), 4);
    }
}
