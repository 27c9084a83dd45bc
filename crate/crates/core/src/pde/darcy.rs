use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::grid::GridFunction;
use crate::tensor::Tensor;

/// Steady Darcy flow `-div(a grad u) = f` on the unit square with `u = 0` on
/// the boundary.
///
/// Grids use the lattice `x_j = j / n`: index 0 lies on the boundary and the
/// face beyond index `n - 1` meets the boundary at `x = 1`, so a field is
/// stored like a periodic one and resolutions nest by stride.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct DarcySpec {
    pub n_solver: usize,
    pub a_plus: f64,
    pub a_minus: f64,
    pub f_const: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for DarcySpec {
    fn default() -> Self {
        DarcySpec { n_solver: 128, a_plus: 12.0, a_minus: 3.0, f_const: 1.0, cg_tol: 1e-10, cg_max_iter: 20_000 }
    }
}

impl DarcySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_plus > 0.0 && self.a_minus > 0.0) {
            return Err(Error::Config(format!("darcy coefficient levels must be positive, got {} and {}", self.a_plus, self.a_minus)));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::Config(format!("darcy.cg_tol must be positive, got {}", self.cg_tol)));
        }
        if self.n_solver < 3 {
            return Err(Error::Config(format!("darcy.n_solver must be at least 3, got {}", self.n_solver)));
        }
        Ok(())
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

fn check_coefficient(a: &GridFunction) -> Result<(usize, usize)> {
    if a.dim() != 2 || a.channels() != 1 {
        return Err(shape_err!("darcy coefficient must be [1, n, m], got {:?}", a.values().shape()));
    }
    if a.values().data().iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidDomain("darcy coefficient must be positive everywhere".into()));
    }
    Ok((a.resolution()[0], a.resolution()[1]))
}

/// Harmonic-mean face coefficients `(east, north)`, each `[n, m]`: entry
/// `(i, j)` couples point `(i, j)` with `(i + 1, j)` (resp. `(i, j + 1)`),
/// indices taken modulo the extent so the last face meets the boundary.
pub fn darcy_face_coefficients(a: &GridFunction) -> Result<(Tensor, Tensor)> {
    let (n, m) = check_coefficient(a)?;
    let v = a.channel(0);
    let mut east = vec![0.0; n * m];
    let mut north = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            east[i * m + j] = harmonic(v[i * m + j], v[((i + 1) % n) * m + j]);
            north[i * m + j] = harmonic(v[i * m + j], v[i * m + (j + 1) % m]);
        }
    }
    Ok((Tensor::new(&[n, m], east)?, Tensor::new(&[n, m], north)?))
}

struct Stencil {
    n: usize,
    m: usize,
    inv_h2: (f64, f64),
    east: Vec<f64>,
    north: Vec<f64>,
}

impl Stencil {
    fn new(a: &GridFunction) -> Result<Self> {
        let (east, north) = darcy_face_coefficients(a)?;
        let (n, m) = (a.resolution()[0], a.resolution()[1]);
        Ok(Stencil {
            n,
            m,
            inv_h2: ((n * n) as f64, (m * m) as f64),
            east: east.into_parts().1,
            north: north.into_parts().1,
        })
    }

    fn interior(&self, i: usize, j: usize) -> bool {
        i != 0 && j != 0
    }

    /// `y = A v` on interior points with `v` taken as zero on the boundary.
    fn apply(&self, v: &[f64], y: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        let at = |i: usize, j: usize| if i.is_multiple_of(n) || j.is_multiple_of(m) { 0.0 } else { v[(i % n) * m + j % m] };
        for i in 0..n {
            for j in 0..m {
                let p = i * m + j;
                if !self.interior(i, j) {
                    y[p] = 0.0;
                    continue;
                }
                let u = v[p];
                let fx = self.east[p] * (u - at(i + 1, j)) + self.east[(i - 1) * m + j] * (u - at(i - 1, j));
                let fy = self.north[p] * (u - at(i, j + 1)) + self.north[i * m + j - 1] * (u - at(i, j - 1));
                y[p] = fx * self.inv_h2.0 + fy * self.inv_h2.1;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let m = self.m;
        (0..self.n * m)
            .map(|p| {
                let (i, j) = (p / m, p % m);
                if !self.interior(i, j) {
                    return 1.0;
                }
                (self.east[p] + self.east[(i - 1) * m + j]) * self.inv_h2.0 + (self.north[p] + self.north[i * m + j - 1]) * self.inv_h2.1
            })
            .collect()
    }
}

/// The discrete operator `A v` of [`solve_darcy`], zero on boundary points.
pub fn apply_darcy_operator(a: &GridFunction, v: &Tensor) -> Result<Tensor> {
    let st = Stencil::new(a)?;
    if v.shape() != [st.n, st.m] {
        return Err(shape_err!("operand {:?} does not match coefficient grid [{}, {}]", v.shape(), st.n, st.m));
    }
    let mut y = vec![0.0; st.n * st.m];
    st.apply(v.data(), &mut y);
    Tensor::new(&[st.n, st.m], y)
}

/// Solves with constant forcing `spec.f_const` on `a`'s own grid.
pub fn solve_darcy(a: &GridFunction, spec: &DarcySpec) -> Result<GridFunction> {
    let f = GridFunction::new(Tensor::full(a.values().shape(), spec.f_const), a.periodic())?;
    solve_darcy_with_forcing(a, &f, spec)
}

/// Five-point flux-form discretization solved by Jacobi-preconditioned
/// conjugate gradients to a relative residual of `spec.cg_tol`.
pub fn solve_darcy_with_forcing(a: &GridFunction, f: &GridFunction, spec: &DarcySpec) -> Result<GridFunction> {
    if !(spec.cg_tol > 0.0) {
        return Err(Error::Config(format!("darcy.cg_tol must be positive, got {}", spec.cg_tol)));
    }
    let st = Stencil::new(a)?;
    if f.values().shape() != a.values().shape() {
        return Err(shape_err!("forcing {:?} does not match coefficient {:?}", f.values().shape(), a.values().shape()));
    }
    let (n, m) = (st.n, st.m);
    let b: Vec<f64> = (0..n * m).map(|p| if st.interior(p / m, p % m) { f.channel(0)[p] } else { 0.0 }).collect();
    let u = conjugate_gradient(&st, &b, spec.cg_tol, spec.cg_max_iter)?;
    GridFunction::new(Tensor::new(&[1, n, m], u)?, a.periodic())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjugate_gradient(st: &Stencil, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let len = b.len();
    let mut x = vec![0.0; len];
    let b_norm = crate::math::sqrt(dot(b, b));
    if b_norm == 0.0 {
        return Ok(x);
    }
    let diag = st.diagonal();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; len];
    for it in 0..max_iter {
        st.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..len {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = crate::math::sqrt(dot(&r, &r)) / b_norm;
        if !res.is_finite() {
            return Err(Error::Solver { iterations: it + 1, residual: res });
        }
        if res <= tol {
            return Ok(x);
        }
        for i in 0..len {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..len {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = crate::math::sqrt(dot(&r, &r)) / b_norm;
    Err(Error::Solver { iterations: max_iter, residual: res })
}
