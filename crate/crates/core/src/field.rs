//! Dense f64 array with up to three dimensions, row-major layout
//! `((i * d1) + j) * d2 + k`. Matrices are `[rows, cols, 1]`, 2D footprint
//! fields are `[nx, ny, 1]`.

use std::rc::Rc;

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub dims: [usize; 3],
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self { dims, data: vec![0.0; dims[0] * dims[1] * dims[2]] }
    }

    pub fn full(dims: [usize; 3], v: f64) -> Self {
        Self { dims, data: vec![v; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        Self { dims, data }
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f64 {
        let idx = self.idx(i, j, k);
        &mut self.data[idx]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn shared(self) -> Rc<Field> {
        Rc::new(self)
    }
}
