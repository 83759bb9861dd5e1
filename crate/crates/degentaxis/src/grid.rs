//! Rectangular cell-centered meshes and the discrete calculus on them.
//!
//! All reductions use fixed-order Neumaier-compensated summation so that
//! repeated evaluation is bit-identical regardless of how callers schedule
//! work across threads.

use crate::error::Error;

/// Fixed-order compensated accumulator (Neumaier variant of Kahan summation).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sum a slice in index order with compensation.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &x in values {
        acc.add(x);
    }
    acc.value()
}

/// Dot product in fixed index order with compensation.
pub fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = CompensatedSum::new();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

/// Uniform rectangular cell-centered mesh in 1, 2 or 3 dimensions.
///
/// Axes beyond `dim` are collapsed to a single unit cell so the same
/// row-major indexing works in every dimension (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 3],
    extents: [f64; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize; 3] {
        &self.cells
    }

    pub fn extents(&self) -> &[f64; 3] {
        &self.extents
    }

    pub fn spacing(&self) -> &[f64; 3] {
        &self.spacing
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn total_volume(&self) -> f64 {
        self.extents[0] * self.extents[1] * self.extents[2]
    }

    /// Row-major strides (x fastest).
    pub fn strides(&self) -> [usize; 3] {
        [1, self.cells[0], self.cells[0] * self.cells[1]]
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.cells[0] && j < self.cells[1] && k < self.cells[2]);
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    /// Cell-center coordinate along `axis` for index `i` on that axis.
    pub fn center(&self, axis: usize, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing[axis]
    }

    /// Number of interior faces normal to `axis`.
    pub fn n_faces(&self, axis: usize) -> usize {
        if self.cells[axis] < 2 {
            return 0;
        }
        (self.cells[axis] - 1) * self.n_cells() / self.cells[axis]
    }

    /// Iterate interior faces normal to `axis`, yielding the flat indices of
    /// the two adjacent cells (low side, high side), in a fixed order.
    pub fn for_each_face(&self, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
        let stride = self.strides()[axis];
        let n = self.cells;
        let mut face = 0usize;
        // Loop order fixed: face index advances with x fastest within the
        // reduced (n_axis - 1) extent along `axis`.
        let lim = |a: usize| if a == axis { n[a] - 1 } else { n[a] };
        for k in 0..lim(2) {
            for j in 0..lim(1) {
                for i in 0..lim(0) {
                    let lo = self.idx(i, j, k);
                    f(face, lo, lo + stride);
                    face += 1;
                }
            }
        }
    }
}

/// Build a grid. Counts must be >= 2 and extents > 0 on every used axis.
pub fn make_grid(dim: usize, cells: &[usize], extents: &[f64]) -> Result<Grid, Error> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Grid(format!("dim must be 1, 2 or 3, got {dim}")));
    }
    if cells.len() != dim || extents.len() != dim {
        return Err(Error::Grid(format!(
            "expected {dim} cell counts and extents, got {} and {}",
            cells.len(),
            extents.len()
        )));
    }
    let mut c = [1usize; 3];
    let mut e = [1.0f64; 3];
    let mut h = [1.0f64; 3];
    for a in 0..dim {
        if cells[a] < 2 {
            return Err(Error::Grid(format!(
                "axis {a}: cell count must be >= 2, got {}",
                cells[a]
            )));
        }
        if !(extents[a] > 0.0) || !extents[a].is_finite() {
            return Err(Error::Grid(format!(
                "axis {a}: extent must be positive and finite, got {}",
                extents[a]
            )));
        }
        c[a] = cells[a];
        e[a] = extents[a];
        h[a] = extents[a] / cells[a] as f64;
    }
    Ok(Grid {
        dim,
        cells: c,
        extents: e,
        spacing: h,
    })
}

/// One scalar per cell, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, Error> {
        if values.len() != grid.n_cells() {
            return Err(Error::Grid(format!(
                "field length {} does not match grid with {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.n_cells()],
        }
    }

    /// Fill from a function of the cell-center coordinates.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64; 3]) -> f64) -> Self {
        let n = grid.cells();
        let mut values = Vec::with_capacity(grid.n_cells());
        for k in 0..n[2] {
            for j in 0..n[1] {
                for i in 0..n[0] {
                    let x = [grid.center(0, i), grid.center(1, j), grid.center(2, k)];
                    values.push(f(&x));
                }
            }
        }
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise combination with another field on the same grid.
    pub fn zip_with(&self, other: &Field, mut f: impl FnMut(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().copied().map(f).collect(),
        }
    }
}

/// One scalar per interior face, per axis. Boundary faces carry exactly zero
/// flux and are not stored.
#[derive(Debug, Clone)]
pub struct FaceField {
    grid: Grid,
    comps: [Vec<f64>; 3],
}

impl FaceField {
    pub fn zeros(grid: &Grid) -> Self {
        let comps = [
            vec![0.0; if grid.dim() > 0 { grid.n_faces(0) } else { 0 }],
            vec![0.0; if grid.dim() > 1 { grid.n_faces(1) } else { 0 }],
            vec![0.0; if grid.dim() > 2 { grid.n_faces(2) } else { 0 }],
        ];
        Self {
            grid: grid.clone(),
            comps,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Largest |value| over all stored faces.
    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn scale(&mut self, c: f64) {
        for comp in &mut self.comps {
            for v in comp.iter_mut() {
                *v *= c;
            }
        }
    }

    /// self - other, faces aligned.
    pub fn minus(&self, other: &FaceField) -> FaceField {
        debug_assert_eq!(self.grid, other.grid);
        let mut out = self.clone();
        for a in 0..3 {
            for (v, w) in out.comps[a].iter_mut().zip(&other.comps[a]) {
                *v -= w;
            }
        }
        out
    }
}

/// Midpoint-rule integral: fixed-order compensated sum of cell values times
/// the cell volume.
pub fn integrate(f: &Field) -> f64 {
    compensated_sum(f.values()) * f.grid().cell_volume()
}

/// Integral of the pointwise product of two fields.
pub fn integrate_product(a: &Field, b: &Field) -> f64 {
    compensated_dot(a.values(), b.values()) * a.grid().cell_volume()
}

/// Face-centered difference quotient (f_hi - f_lo)/h per interior face;
/// boundary faces are zero by the Neumann closure.
pub fn face_gradient(f: &Field) -> FaceField {
    let grid = f.grid();
    let mut out = FaceField::zeros(grid);
    let v = f.values();
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let comp = out.component_mut(a);
        grid.for_each_face(a, |face, lo, hi| {
            comp[face] = (v[hi] - v[lo]) * inv_h;
        });
    }
    out
}

/// Discrete divergence: per-cell net outflux difference divided by spacing,
/// with absent boundary faces contributing zero. Satisfies
/// `integrate(divergence(F)) = 0` by telescoping.
pub fn divergence(flux: &FaceField) -> Field {
    let grid = flux.grid().clone();
    let mut values = vec![0.0; grid.n_cells()];
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let comp = flux.component(a);
        grid.for_each_face(a, |face, lo, hi| {
            let contrib = comp[face] * inv_h;
            // face is the "right" face of cell lo and the "left" face of hi
            values[lo] += contrib;
            values[hi] -= contrib;
        });
    }
    Field { grid, values }
}

/// Cell-centered gradient components from face gradients: interior cells
/// average the two adjacent face values, boundary cells take the single
/// interior face (one-sided), so globally linear fields are exact everywhere.
pub fn cell_gradient(f: &Field) -> Vec<Field> {
    let grid = f.grid();
    let fg = face_gradient(f);
    let mut out = Vec::with_capacity(grid.dim());
    for a in 0..grid.dim() {
        let mut sums = vec![0.0f64; grid.n_cells()];
        let mut counts = vec![0u8; grid.n_cells()];
        let comp = fg.component(a);
        grid.for_each_face(a, |face, lo, hi| {
            sums[lo] += comp[face];
            counts[lo] += 1;
            sums[hi] += comp[face];
            counts[hi] += 1;
        });
        let values = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect();
        out.push(Field {
            grid: grid.clone(),
            values,
        });
    }
    out
}

/// Cell-centered |∇f|: Euclidean norm of the averaged face gradients.
/// Exactly zero for constant fields.
pub fn cell_gradient_magnitude(f: &Field) -> Field {
    let grid = f.grid();
    let comps = cell_gradient(f);
    let mut values = vec![0.0f64; grid.n_cells()];
    for comp in &comps {
        for (acc, g) in values.iter_mut().zip(comp.values()) {
            *acc += g * g;
        }
    }
    for v in values.iter_mut() {
        *v = v.sqrt();
    }
    Field {
        grid: grid.clone(),
        values,
    }
}
