//! Vector-geometry kernels for gradient surgery.
//!
//! The kernels come in two layers: slice functions used on the hot path by
//! the engine, and [`Tolerances`] methods that operate on validated
//! [`GradVector`]s and report whether the operation was applied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a gradient is treated as degenerate.
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Largest magnitude a similarity target may take before use.
pub const TARGET_CLAMP: f64 = 0.99;

/// A flat gradient for one parameter group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradVector {
    group: String,
    values: Vec<f64>,
}

impl GradVector {
    pub fn new(group: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let group = group.into();
        if values.is_empty() {
            return Err(Error::validation(format!(
                "gradient for group `{group}` is empty"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "gradient for group `{group}` has non-finite component at index {pos}"
            )));
        }
        Ok(GradVector { group, values })
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// Builds a vector from values that are already known to be finite.
    pub(crate) fn from_parts(group: String, values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        GradVector { group, values }
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        GradVector {
            group: self.group.clone(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineResult {
    pub value: f64,
    pub degenerate: bool,
}

/// What happened inside a surgery kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelStatus {
    Applied,
    /// An input norm was below tolerance; the gradient was returned unchanged.
    Skipped,
    /// The requested target exceeded the clamp and `used` was applied instead.
    TargetClamped { requested: f64, used: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelOutput {
    pub vector: GradVector,
    pub status: KernelStatus,
}

impl KernelOutput {
    pub fn was_skipped(&self) -> bool {
        self.status == KernelStatus::Skipped
    }
}

/// Numerical guards shared by all kernels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub norm: f64,
    pub target_clamp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            norm: NORM_TOLERANCE,
            target_clamp: TARGET_CLAMP,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.norm.is_finite() && self.norm >= 0.0) {
            return Err(Error::config("norm tolerance must be finite and >= 0"));
        }
        if !(self.target_clamp > 0.0 && self.target_clamp < 1.0) {
            return Err(Error::config("target clamp must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn cosine(&self, a: &GradVector, b: &GradVector) -> Result<CosineResult> {
        check_same_len(a, b)?;
        Ok(self.cosine_slices(a.values(), b.values()))
    }

    /// Projects `g_i` onto the normal plane of `g_j`.
    pub fn pcgrad_project(&self, g_i: &GradVector, g_j: &GradVector) -> Result<KernelOutput> {
        check_same_len(g_i, g_j)?;
        let mut out = g_i.values().to_vec();
        let status = if self.project_in_place(&mut out, g_j.values()) {
            KernelStatus::Applied
        } else {
            KernelStatus::Skipped
        };
        Ok(KernelOutput {
            vector: g_i.with_values(out),
            status,
        })
    }

    /// Moves `g_i` inside span{g_i, g_j} so that its cosine with `g_j`
    /// equals `target`, keeping the coefficient on `g_i` fixed at one.
    pub fn vaccine_align(
        &self,
        g_i: &GradVector,
        g_j: &GradVector,
        target: f64,
    ) -> Result<KernelOutput> {
        check_same_len(g_i, g_j)?;
        if !target.is_finite() {
            return Err(Error::validation("similarity target must be finite"));
        }
        let used = self.clamp_target(target);
        let mut out = g_i.values().to_vec();
        let status = if !self.align_in_place(&mut out, g_j.values(), used) {
            KernelStatus::Skipped
        } else if used != target {
            log::warn!("similarity target {target} clamped to {used}");
            KernelStatus::TargetClamped {
                requested: target,
                used,
            }
        } else {
            KernelStatus::Applied
        };
        Ok(KernelOutput {
            vector: g_i.with_values(out),
            status,
        })
    }

    pub fn rescale_to_norm(&self, g: &GradVector, norm: f64) -> Result<KernelOutput> {
        if !(norm.is_finite() && norm >= 0.0) {
            return Err(Error::validation("target norm must be finite and >= 0"));
        }
        let mut out = g.values().to_vec();
        let status = if self.rescale_in_place(&mut out, norm) {
            KernelStatus::Applied
        } else {
            KernelStatus::Skipped
        };
        Ok(KernelOutput {
            vector: g.with_values(out),
            status,
        })
    }

    pub fn clamp_target(&self, target: f64) -> f64 {
        target.clamp(-self.target_clamp, self.target_clamp)
    }

    pub fn cosine_slices(&self, a: &[f64], b: &[f64]) -> CosineResult {
        let na = norm(a);
        let nb = norm(b);
        if na < self.norm || nb < self.norm {
            return CosineResult {
                value: 0.0,
                degenerate: true,
            };
        }
        CosineResult {
            value: (dot(a, b) / (na * nb)).clamp(-1.0, 1.0),
            degenerate: false,
        }
    }

    /// Returns false (leaving `g_i` untouched) when `g_j` is degenerate.
    pub fn project_in_place(&self, g_i: &mut [f64], g_j: &[f64]) -> bool {
        let nj2 = dot(g_j, g_j);
        if nj2.sqrt() < self.norm {
            return false;
        }
        let coef = dot(g_i, g_j) / nj2;
        axpy(-coef, g_j, g_i);
        true
    }

    /// `target` must already be clamped. Returns false when either input is
    /// degenerate.
    pub fn align_in_place(&self, g_i: &mut [f64], g_j: &[f64], target: f64) -> bool {
        let ni = norm(g_i);
        let nj = norm(g_j);
        if ni < self.norm || nj < self.norm {
            return false;
        }
        let phi = (dot(g_i, g_j) / (ni * nj)).clamp(-1.0, 1.0);
        // sin of the current angle, taken from the rejection of g_i off g_j;
        // sqrt(1 - phi^2) loses all precision near anti-parallel pairs.
        let sin_phi = rejection_norm(g_i, g_j, nj) / ni;
        let sin_target = (1.0 - target * target).sqrt();
        let coef = ni * (target * sin_phi - phi * sin_target) / (nj * sin_target);
        axpy(coef, g_j, g_i);
        true
    }

    pub fn rescale_in_place(&self, g: &mut [f64], target_norm: f64) -> bool {
        let n = norm(g);
        if n < self.norm {
            return false;
        }
        let scale = target_norm / n;
        g.iter_mut().for_each(|v| *v *= scale);
        true
    }
}

pub fn cosine(a: &GradVector, b: &GradVector) -> Result<CosineResult> {
    Tolerances::default().cosine(a, b)
}

pub fn pcgrad_project(g_i: &GradVector, g_j: &GradVector) -> Result<KernelOutput> {
    Tolerances::default().pcgrad_project(g_i, g_j)
}

pub fn vaccine_align(g_i: &GradVector, g_j: &GradVector, target: f64) -> Result<KernelOutput> {
    Tolerances::default().vaccine_align(g_i, g_j, target)
}

pub fn rescale_to_norm(g: &GradVector, norm: f64) -> Result<KernelOutput> {
    Tolerances::default().rescale_to_norm(g, norm)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y += alpha * x
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yv, xv)| *yv += alpha * xv);
}

fn rejection_norm(g_i: &[f64], g_j: &[f64], nj: f64) -> f64 {
    let coef = dot(g_i, g_j) / (nj * nj);
    g_i.iter()
        .zip(g_j)
        .map(|(a, b)| {
            let r = a - coef * b;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

fn check_same_len(a: &GradVector, b: &GradVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}
