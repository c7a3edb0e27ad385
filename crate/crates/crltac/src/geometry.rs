//! Unit-sphere embeddings, the dot-product similarity, and the
//! von Mises–Fisher encoder distribution.
//!
//! Densities are taken with respect to the unnormalized surface
//! (Hausdorff) measure on `S^{d-1}`, matching the normalizing constant
//! `C_{β,d} = β^{d/2-1} / ((2π)^{d/2} I_{d/2-1}(β))`.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use thiserror::Error;

use crate::float::Float;

/// Tolerance for unit-norm checks; chosen for single-precision pipelines.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("cannot normalize a (near-)zero vector, norm = {0}")]
    DegenerateVector(f64),
    #[error("embedding dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("coordinates have norm {0}, expected 1 within 1e-6")]
    NotUnitNorm(f64),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("concentration must be positive, got {0}")]
    NonPositiveConcentration(f64),
    #[error("von Mises-Fisher sampler exceeded its rejection budget")]
    SamplerStuck,
}

/// A point on the unit sphere `S^{d-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitEmbedding<F: Float> {
    coords: Vec<F>,
}

impl<F: Float> UnitEmbedding<F> {
    /// Wraps coordinates that are already unit norm (within [`UNIT_NORM_TOL`]).
    pub fn new(coords: Vec<F>) -> Result<Self, GeometryError> {
        if coords.len() < 2 {
            return Err(GeometryError::InvalidDimension(coords.len()));
        }
        let norm = norm(&coords).as_f64();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(GeometryError::NotUnitNorm(norm));
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[F] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<F> {
        self.coords
    }

    /// The `i`-th canonical basis vector in dimension `d`.
    pub fn basis(d: usize, i: usize) -> Result<Self, GeometryError> {
        if d < 2 || i >= d {
            return Err(GeometryError::InvalidDimension(d));
        }
        let mut coords = vec![F::zero(); d];
        coords[i] = F::one();
        Ok(Self { coords })
    }
}

fn norm<F: Float>(v: &[F]) -> F {
    v.iter().map(|&x| x * x).fold(F::zero(), |a, b| a + b).sqrt()
}

/// Projects a vector onto the unit sphere.
pub fn normalize<F: Float>(v: &[F]) -> Result<UnitEmbedding<F>, GeometryError> {
    if v.len() < 2 {
        return Err(GeometryError::InvalidDimension(v.len()));
    }
    let n = norm(v);
    if !n.is_finite() || n.as_f64() <= 0.0 {
        return Err(GeometryError::DegenerateVector(n.as_f64()));
    }
    let coords = v.iter().map(|&x| x / n).collect();
    Ok(UnitEmbedding { coords })
}

/// The similarity `S(z1, z2) = z1ᵀ z2`, invariant under joint rotation.
pub fn similarity<F: Float>(
    z1: &UnitEmbedding<F>,
    z2: &UnitEmbedding<F>,
) -> Result<F, GeometryError> {
    if z1.dim() != z2.dim() {
        return Err(GeometryError::DimensionMismatch {
            left: z1.dim(),
            right: z2.dim(),
        });
    }
    Ok(dot(z1.coords(), z2.coords()))
}

fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).fold(F::zero(), |s, t| s + t)
}

/// Parameters of a von Mises–Fisher distribution: mean direction and
/// concentration (inverse temperature) `β > 0`.
#[derive(Clone, Debug)]
pub struct VmfParams<F: Float> {
    mean_direction: UnitEmbedding<F>,
    beta: F,
}

impl<F: Float> VmfParams<F> {
    pub fn new(mean_direction: UnitEmbedding<F>, beta: F) -> Result<Self, GeometryError> {
        if !(beta.as_f64() > 0.0) {
            return Err(GeometryError::NonPositiveConcentration(beta.as_f64()));
        }
        Ok(Self { mean_direction, beta })
    }

    pub fn mean_direction(&self) -> &UnitEmbedding<F> {
        &self.mean_direction
    }

    pub fn beta(&self) -> F {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.mean_direction.dim()
    }
}

/// Log density `log C_{β,d} + β zᵀμ` w.r.t. the surface measure.
pub fn vmf_log_density<F: Float>(
    z: &UnitEmbedding<F>,
    p: &VmfParams<F>,
) -> Result<F, GeometryError> {
    let cos = similarity(z, p.mean_direction())?;
    let log_c = crate::vmf::log_norm_const(p.beta().as_f64(), p.dim())
        .expect("validated parameters");
    Ok(F::of_f64(log_c) + p.beta() * cos)
}

const SAMPLER_MAX_REJECTIONS: usize = 1_000;

/// Draws from vMF(μ, β) by the tangent-normal decomposition: the radial
/// component `w = zᵀμ` comes from Wood's Beta-proposal rejection sampler,
/// the tangential part is uniform on the orthogonal subsphere.
pub fn vmf_sample<F: Float, R: Rng + ?Sized>(
    p: &VmfParams<F>,
    rng: &mut R,
) -> Result<UnitEmbedding<F>, GeometryError> {
    let d = p.dim();
    let kappa = p.beta().as_f64();
    let w = sample_radial(kappa, d, rng)?;

    // uniform tangent direction orthogonal to the mean
    let mu: Vec<f64> = p.mean_direction().coords().iter().map(|&x| x.as_f64()).collect();
    let mut tangent = vec![0.0f64; d];
    loop {
        for t in tangent.iter_mut() {
            *t = StandardNormal.sample(rng);
        }
        let proj: f64 = tangent.iter().zip(&mu).map(|(t, m)| t * m).sum();
        for (t, m) in tangent.iter_mut().zip(&mu) {
            *t -= proj * m;
        }
        let n: f64 = tangent.iter().map(|t| t * t).sum::<f64>().sqrt();
        if n > 1e-12 {
            for t in tangent.iter_mut() {
                *t /= n;
            }
            break;
        }
    }

    let sin_part = (1.0 - w * w).max(0.0).sqrt();
    let coords: Vec<F> = mu
        .iter()
        .zip(&tangent)
        .map(|(m, t)| F::of_f64(w * m + sin_part * t))
        .collect();
    normalize(&coords)
}

/// Wood (1994) rejection sampler for the radial component, density
/// ∝ (1-w²)^{(d-3)/2} exp(κ w) on (-1, 1).
fn sample_radial<R: Rng + ?Sized>(kappa: f64, d: usize, rng: &mut R) -> Result<f64, GeometryError> {
    let dm1 = (d - 1) as f64;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt()) / dm1;
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).expect("valid shape");
    for _ in 0..SAMPLER_MAX_REJECTIONS {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.gen::<f64>();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            return Ok(w.clamp(-1.0, 1.0));
        }
    }
    Err(GeometryError::SamplerStuck)
}
