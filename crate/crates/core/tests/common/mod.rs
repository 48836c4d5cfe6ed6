#![allow(dead_code)]

use dirinfo_core::simulate::StreamRng;
use dirinfo_core::stability::spectral_radius;
use dirinfo_core::Mat;

pub struct Gen(StreamRng);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(StreamRng::new(seed, 7))
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.open_uniform()
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Mat {
        Mat::from_fn(rows, cols, |_, _| self.uniform(-1.0, 1.0))
    }

    /// Random matrix rescaled to spectral radius `radius`.
    pub fn with_radius(&mut self, n: usize, radius: f64) -> Mat {
        loop {
            let a = self.matrix(n, n);
            let rho = spectral_radius(&a).unwrap().spectral_radius;
            if rho > 1e-3 {
                return a * (radius / rho);
            }
        }
    }

    /// `GGᵀ + floor·I`.
    pub fn pd(&mut self, n: usize, floor: f64) -> Mat {
        let g = self.matrix(n, n);
        &g * g.transpose() + Mat::identity(n, n) * floor
    }
}

pub fn s1(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}
