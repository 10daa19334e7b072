//! Prior directions `m₀ʸ` arranged as a simplex equiangular tight frame:
//!
//! ```text
//! M = √(K/(K-1)) · U · (I_K - 1_K 1_Kᵀ / K)
//! ```
//!
//! with `U ∈ R^{p×K}` a seeded random partial orthogonal matrix. Columns of
//! `M` are unit vectors with pairwise inner products `-1/(K-1)`.

use rand_distr::{Distribution, StandardNormal};

use crate::datagen::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rng;
use crate::vmf::UnitVector;

/// `K` prior directions in `R^p`.
///
/// Frames from [`build_etf`] are exact simplex ETFs; after
/// [`grad_step_m0`] the columns stay unit length but the equiangular
/// structure is generally lost.
#[derive(Debug, Clone, PartialEq)]
pub struct EtfFrame {
    columns: Vec<UnitVector>,
}

impl EtfFrame {
    pub fn from_columns(columns: Vec<UnitVector>) -> Result<Self> {
        let first = columns.first().ok_or_else(|| Error::domain("frame needs at least one column"))?;
        let p = first.dim();
        for c in &columns {
            check_dim(p, c.dim())?;
        }
        Ok(EtfFrame { columns })
    }

    pub fn num_classes(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.columns[0].dim()
    }

    pub fn columns(&self) -> &[UnitVector] {
        &self.columns
    }

    pub fn column(&self, class: usize) -> &UnitVector {
        &self.columns[class]
    }

    /// `MᵀM`, row-major `K×K`.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        self.columns
            .iter()
            .map(|a| self.columns.iter().map(|b| linalg::dot(a.as_slice(), b.as_slice())).collect())
            .collect()
    }

    /// One feature row per column, labelled by class, for the feature-file formats.
    pub fn to_dataset(&self) -> Result<Dataset> {
        let k = self.num_classes();
        let features: Vec<f32> = self.columns.iter().flat_map(|c| c.as_slice().iter().map(|&x| x as f32)).collect();
        Dataset::new(features, (0..k as u32).collect(), self.dim(), k)
    }

    /// Inverse of [`EtfFrame::to_dataset`]; rows are renormalized after the
    /// float32 round trip.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let mut columns: Vec<Option<UnitVector>> = vec![None; data.num_classes()];
        for i in 0..data.len() {
            let label = data.labels()[i] as usize;
            columns[label] = Some(data.unit_row(i)?);
        }
        let columns = columns
            .into_iter()
            .enumerate()
            .map(|(k, c)| c.ok_or_else(|| Error::Malformed(format!("frame file has no row for class {k}"))))
            .collect::<Result<Vec<_>>>()?;
        EtfFrame::from_columns(columns)
    }
}

/// Seeded simplex ETF with `K ≥ 2` columns in `R^p`, `p ≥ K - 1`.
///
/// For `p ≥ K`, `U` is the Q factor (positive-diagonal R) of a seeded
/// Gaussian `p×K` matrix. For `p = K - 1` no `p×K` matrix has orthonormal
/// columns, so `U = V Bᵀ` with `V` a seeded `p×(K-1)` orthonormal matrix and
/// `B` an orthonormal basis of `1_K^⊥`; then `UᵀU = I - 11ᵀ/K` on the range
/// of the centering matrix and the Gram identity still holds.
pub fn build_etf(k: usize, p: usize, seed: u64) -> Result<EtfFrame> {
    if k < 2 {
        return Err(Error::domain(format!("simplex ETF needs K >= 2, got {k}")));
    }
    if p + 1 < k {
        return Err(Error::UnsupportedDimension { k, p });
    }
    if p < 2 {
        return Err(Error::domain(format!("unit vectors need p >= 2, got {p}")));
    }
    let mut g = rng::stream(seed, rng::STREAM_ETF);
    let u_cols: Vec<Vec<f64>> = if p >= k {
        gaussian_orthonormal(&mut g, p, k)?
    } else {
        // U = V Bᵀ; column j of U is Σ_i B[j][i] v_i
        let v = gaussian_orthonormal(&mut g, p, k - 1)?;
        let b = centered_basis(k);
        (0..k)
            .map(|j| {
                let mut col = vec![0.0; p];
                for (i, vi) in v.iter().enumerate() {
                    linalg::axpy(b[i][j], vi, &mut col);
                }
                col
            })
            .collect()
    };

    // column j of U (I - 11ᵀ/K) is u_j - ū
    let mut mean = vec![0.0; p];
    for c in &u_cols {
        linalg::axpy(1.0 / k as f64, c, &mut mean);
    }
    let scale = (k as f64 / (k as f64 - 1.0)).sqrt();
    let columns = u_cols
        .into_iter()
        .map(|mut c| {
            linalg::axpy(-1.0, &mean, &mut c);
            linalg::scale(scale, &mut c);
            UnitVector::new(c)
        })
        .collect::<Result<Vec<_>>>()?;
    EtfFrame::from_columns(columns)
}

fn gaussian_orthonormal(g: &mut rng::Rng, p: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut cols: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| StandardNormal.sample(&mut *g)).collect()).collect();
    if linalg::orthonormalize(&mut cols) {
        Ok(cols)
    } else {
        Err(Error::NoConvergence("orthonormalizing a Gaussian matrix"))
    }
}

/// `K-1` orthonormal vectors spanning the complement of `1_K` (Helmert basis).
fn centered_basis(k: usize) -> Vec<Vec<f64>> {
    (1..k)
        .map(|i| {
            let norm = ((i * (i + 1)) as f64).sqrt();
            let mut v = vec![0.0; k];
            v[..i].iter_mut().for_each(|x| *x = 1.0 / norm);
            v[i] = -(i as f64) / norm;
            v
        })
        .collect()
}

/// One gradient step on every prior direction, followed by retraction onto
/// the sphere. Gradient components along a column are no-ops: each gradient
/// is projected onto the tangent space at its column before the step.
pub fn grad_step_m0(frame: &EtfFrame, grads: &[Vec<f64>], lr: f64) -> Result<EtfFrame> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::domain(format!("learning rate must be finite and > 0, got {lr}")));
    }
    check_dim(frame.num_classes(), grads.len())?;
    let columns = frame
        .columns
        .iter()
        .zip(grads)
        .map(|(col, g)| {
            check_dim(col.dim(), g.len())?;
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("prior direction gradient"));
            }
            let mut tangent = g.clone();
            linalg::axpy(-linalg::dot(col.as_slice(), g), col.as_slice(), &mut tangent);
            if tangent.iter().all(|&t| t == 0.0) {
                return Ok(col.clone());
            }
            let mut moved = col.as_slice().to_vec();
            linalg::axpy(-lr, &tangent, &mut moved);
            UnitVector::normalize(moved)
        })
        .collect::<Result<Vec<_>>>()?;
    EtfFrame::from_columns(columns)
}
