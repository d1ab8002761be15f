//! Cosine basis on a rectangular domain and the spectral ergodicity metric.

use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::grid::DomainSpec;
use crate::tisd::Tisd;

/// Orthonormal cosine basis truncated at `max_index` per axis.
///
/// Multi-indices are enumerated with axis 0 varying fastest, giving
/// `(K + 1)^s` basis functions
/// `f_k(p) = (1 / h_k) Π_i cos(k_i π p_i / L_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasis {
    lengths: Vec<f64>,
    max_index: usize,
    indices: Vec<Vec<usize>>,
    /// Sobolev weights `Λ_k = (1 + ‖k‖²)^{-(s+1)/2}`.
    lambda: Vec<f64>,
    /// `h_k`, chosen so that `∫ f_k² = 1`.
    normalizers: Vec<f64>,
}

impl FourierBasis {
    pub fn new(spec: &DomainSpec, max_index: usize) -> Self {
        let lengths = spec.lengths().to_vec();
        let dims = lengths.len();
        let count = (max_index + 1).pow(dims as u32);
        let exponent = -(dims as f64 + 1.0) / 2.0;
        let mut indices = Vec::with_capacity(count);
        let mut lambda = Vec::with_capacity(count);
        let mut normalizers = Vec::with_capacity(count);
        for flat in 0..count {
            let mut rem = flat;
            let k: Vec<usize> = (0..dims)
                .map(|_| {
                    let v = rem % (max_index + 1);
                    rem /= max_index + 1;
                    v
                })
                .collect();
            let norm2: f64 = k.iter().map(|&v| (v * v) as f64).sum();
            lambda.push((1.0 + norm2).powf(exponent));
            normalizers.push(normalizer(&k, &lengths));
            indices.push(k);
        }
        Self {
            lengths,
            max_index,
            indices,
            lambda,
            normalizers,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.lengths.len()
    }

    pub fn max_index(&self) -> usize {
        self.max_index
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }

    /// Per-axis tables `cos(k π p_i / L_i)` and `sin(...)` for `k = 0..=K`.
    fn axis_tables(&self, point: &[f64], cos: &mut [f64], sin: &mut [f64]) {
        let stride = self.max_index + 1;
        for (axis, &l) in self.lengths.iter().enumerate() {
            let w = PI * point[axis] / l;
            for k in 0..stride {
                let (s, c) = (k as f64 * w).sin_cos();
                cos[axis * stride + k] = c;
                sin[axis * stride + k] = s;
            }
        }
    }

    /// All basis values at `point`, unclamped (outside the domain this is
    /// the even reflection of the basis).
    pub fn values(&self, point: &[f64], out: &mut [f64]) {
        let stride = self.max_index + 1;
        let mut cos = vec![0.0; stride * self.dims()];
        let mut sin = vec![0.0; stride * self.dims()];
        self.axis_tables(point, &mut cos, &mut sin);
        for (j, k) in self.indices.iter().enumerate() {
            let mut v = 1.0 / self.normalizers[j];
            for (axis, &ka) in k.iter().enumerate() {
                v *= cos[axis * stride + ka];
            }
            out[j] = v;
        }
    }

    /// Accumulates `Σ_k w_k ∇f_k(point)` into `grad`.
    pub(crate) fn weighted_gradient(&self, point: &[f64], weights: &[f64], grad: &mut [f64]) {
        let stride = self.max_index + 1;
        let dims = self.dims();
        let mut cos = vec![0.0; stride * dims];
        let mut sin = vec![0.0; stride * dims];
        self.axis_tables(point, &mut cos, &mut sin);
        for (j, k) in self.indices.iter().enumerate() {
            let w = weights[j] / self.normalizers[j];
            if w == 0.0 {
                continue;
            }
            for (a, g) in grad.iter_mut().enumerate().take(dims) {
                let ka = k[a];
                if ka == 0 {
                    continue;
                }
                let mut d = -(ka as f64) * PI / self.lengths[a] * sin[a * stride + ka];
                for (b, &kb) in k.iter().enumerate() {
                    if b != a {
                        d *= cos[b * stride + kb];
                    }
                }
                *g += w * d;
            }
        }
    }
}

fn normalizer(k: &[usize], lengths: &[f64]) -> f64 {
    k.iter()
        .zip(lengths)
        .map(|(&ki, &l)| if ki == 0 { l } else { l / 2.0 })
        .product::<f64>()
        .sqrt()
}

/// Single basis function at `point`, with the point clamped to the domain.
pub fn basis_eval(point: &[f64], multi_index: &[usize], spec: &DomainSpec) -> f64 {
    let lengths = spec.lengths();
    let h = normalizer(multi_index, lengths);
    multi_index
        .iter()
        .zip(lengths)
        .zip(point)
        .map(|((&k, &l), &p)| (k as f64 * PI * p.clamp(0.0, l) / l).cos())
        .product::<f64>()
        / h
}

/// `φ_k = Σ_c φ_c f_k(center_c)`: the density treated as point masses at
/// cell centres.
pub fn tisd_coefficients(tisd: &Tisd, basis: &FourierBasis) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    let mut vals = vec![0.0; basis.len()];
    for (c, &phi) in tisd.density.iter().enumerate() {
        if phi == 0.0 {
            continue;
        }
        basis.values(&tisd.spec.cell_center(c), &mut vals);
        for (acc, v) in coeffs.iter_mut().zip(&vals) {
            *acc += phi * v;
        }
    }
    coeffs
}

/// `c_k = (1/N) Σ_j f_k(p_j)` over the sampled positions.
pub fn trajectory_coefficients<P: AsRef<[f64]>>(positions: &[P], basis: &FourierBasis) -> Result<Vec<f64>> {
    if positions.is_empty() {
        return Err(invalid("trajectory has no samples"));
    }
    let mut coeffs = vec![0.0; basis.len()];
    let mut vals = vec![0.0; basis.len()];
    for p in positions {
        basis.values(p.as_ref(), &mut vals);
        for (acc, v) in coeffs.iter_mut().zip(&vals) {
            *acc += v;
        }
    }
    let n = positions.len() as f64;
    coeffs.iter_mut().for_each(|c| *c /= n);
    Ok(coeffs)
}

/// Truncated coefficient vectors of a trajectory and a target density.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicSpectrum {
    pub max_index: usize,
    pub lambda: Vec<f64>,
    pub traj_coeffs: Vec<f64>,
    pub tisd_coeffs: Vec<f64>,
    pub normalizers: Vec<f64>,
}

impl ErgodicSpectrum {
    pub fn new(basis: &FourierBasis, traj_coeffs: Vec<f64>, tisd_coeffs: Vec<f64>) -> Result<Self> {
        if traj_coeffs.len() != basis.len() || tisd_coeffs.len() != basis.len() {
            return Err(invalid(format!(
                "coefficient vectors of length {} and {} for a basis of {}",
                traj_coeffs.len(),
                tisd_coeffs.len(),
                basis.len()
            )));
        }
        Ok(Self {
            max_index: basis.max_index(),
            lambda: basis.lambda().to_vec(),
            traj_coeffs,
            tisd_coeffs,
            normalizers: basis.normalizers().to_vec(),
        })
    }
}

/// `Φ = Σ_k Λ_k (c_k − φ_k)²`.
pub fn ergodic_metric(spectrum: &ErgodicSpectrum) -> f64 {
    metric(&spectrum.lambda, &spectrum.traj_coeffs, &spectrum.tisd_coeffs)
}

pub(crate) fn metric(lambda: &[f64], c: &[f64], phi: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(c.iter().zip(phi))
        .map(|(l, (a, b))| l * (a - b) * (a - b))
        .sum()
}
