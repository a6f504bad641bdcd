//! MAP labeling by Iterated Conditional Modes.
//!
//! Each site takes the label maximizing
//! `ln p(y_i | x_i, y_N) + ln p(x_i | x_N)`. The intensity term never depends
//! on neighboring labels, so it is evaluated once per site and class; only the
//! prior term is recomputed while sweeping.
//!
//! Sweeps follow a checkerboard schedule: first every site with even
//! `row + col`, then every odd one. Sites of one color are never 4-neighbors,
//! so a half-sweep reads only labels it does not write and may be evaluated in
//! any order (or in parallel) with identical results.

use std::path::Path;
use std::str::FromStr;

use crate::autologistic::{auto_log_conditional, AutoParams};
use crate::error::{Error, Result};
use crate::grid::{Dims, LabelGrid, PixelGrid};
use crate::par::Execution;
use crate::sar::{sar_conditional_logpdf, ClassSarModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Default sweep budget; fixtures are expected to settle within 15.
pub const DEFAULT_MAX_SWEEPS: usize = 50;

/// Independent Gaussian intensity model for one class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: f64,
    pub var: f64,
}

impl GaussianParams {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !mean.is_finite() || !(var > 0.0 && var.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gaussian needs finite mean and positive variance, got ({mean}, {var})"
            )));
        }
        Ok(Self { mean, var })
    }

    /// Sample mean and (population) variance, variance floored like the SAR fit.
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("gaussian samples"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self::new(mean, var.max(crate::sar::VARIANCE_FLOOR))
    }

    #[inline]
    pub fn logpdf(&self, y: f64) -> f64 {
        let r = y - self.mean;
        -0.5 * (LN_2PI + self.var.ln()) - r * r / (2.0 * self.var)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassGaussian {
    pub target: GaussianParams,
    pub background: GaussianParams,
}

impl ClassGaussian {
    pub fn for_label(&self, label: u8) -> &GaussianParams {
        if label == 1 {
            &self.target
        } else {
            &self.background
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VariantTag {
    /// SAR intensities, auto-logistic labels.
    SarAuto,
    /// SAR intensities, independent labels with a fixed target rate.
    SarI,
    /// i.i.d. Gaussian intensities, auto-logistic labels.
    IAuto,
}

impl VariantTag {
    pub fn as_str(self) -> &'static str {
        match self {
            VariantTag::SarAuto => "sar-auto",
            VariantTag::SarI => "sar-i",
            VariantTag::IAuto => "i-auto",
        }
    }
}

impl std::fmt::Display for VariantTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sar-auto" => Ok(VariantTag::SarAuto),
            "sar-i" => Ok(VariantTag::SarI),
            "i-auto" => Ok(VariantTag::IAuto),
            _ => Err(Error::InvalidParameter(format!(
                "unknown variant `{s}` (expected sar-auto, sar-i or i-auto)"
            ))),
        }
    }
}

/// The coupled model and its two ablations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelVariant {
    SarAuto {
        sar: ClassSarModel,
        prior: AutoParams,
    },
    SarI {
        sar: ClassSarModel,
        target_rate: f64,
    },
    IAuto {
        intensity: ClassGaussian,
        prior: AutoParams,
    },
}

impl ModelVariant {
    pub fn sar_auto(sar: ClassSarModel, prior: AutoParams) -> Self {
        ModelVariant::SarAuto { sar, prior }
    }

    pub fn sar_i(sar: ClassSarModel, target_rate: f64) -> Result<Self> {
        if !(target_rate > 0.0 && target_rate < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target rate must lie in (0, 1), got {target_rate}"
            )));
        }
        Ok(ModelVariant::SarI { sar, target_rate })
    }

    pub fn i_auto(intensity: ClassGaussian, prior: AutoParams) -> Self {
        ModelVariant::IAuto { intensity, prior }
    }

    pub fn tag(&self) -> VariantTag {
        match self {
            ModelVariant::SarAuto { .. } => VariantTag::SarAuto,
            ModelVariant::SarI { .. } => VariantTag::SarI,
            ModelVariant::IAuto { .. } => VariantTag::IAuto,
        }
    }

    /// `ln p(y_i | x_i = label, y_N)` under this variant.
    #[inline]
    pub fn intensity_loglik(&self, image: &PixelGrid, site: usize, label: u8) -> f64 {
        match self {
            ModelVariant::SarAuto { sar, .. } | ModelVariant::SarI { sar, .. } => {
                sar_conditional_logpdf(sar.for_label(label), image.get(site), &image.neighbor_values(site))
            }
            ModelVariant::IAuto { intensity, .. } => intensity.for_label(label).logpdf(image.get(site)),
        }
    }

    /// `ln p(x_i = label | x_N)` for neighbor label sum `s`.
    #[inline]
    pub fn prior_logprob(&self, label: u8, s: u32) -> f64 {
        match self {
            ModelVariant::SarAuto { prior, .. } | ModelVariant::IAuto { prior, .. } => {
                auto_log_conditional(prior, label, s)
            }
            ModelVariant::SarI { target_rate, .. } => {
                if label == 1 {
                    target_rate.ln()
                } else {
                    (-target_rate).ln_1p()
                }
            }
        }
    }
}

/// Log of the local posterior (up to the site's normalizer) for `candidate`.
pub fn local_log_posterior(
    variant: &ModelVariant,
    image: &PixelGrid,
    labels: &LabelGrid,
    site: usize,
    candidate: u8,
) -> f64 {
    variant.intensity_loglik(image, site, candidate)
        + variant.prior_logprob(candidate, labels.neighbor_sum(site))
}

/// Per-site intensity log-likelihoods for background and target.
fn unary_terms(variant: &ModelVariant, image: &PixelGrid, exec: Execution) -> Vec<[f64; 2]> {
    let dims = image.dims();
    let mut out = vec![[0.0; 2]; dims.len()];
    exec.for_each_row(&mut out, dims.width, |r, row| {
        for (c, slot) in row.iter_mut().enumerate() {
            let site = dims.index(c, r);
            *slot = [
                variant.intensity_loglik(image, site, 0),
                variant.intensity_loglik(image, site, 1),
            ];
        }
    });
    out
}

/// Pointwise maximum-likelihood labels from the intensity term alone; ties go
/// to background.
pub fn initial_labels(variant: &ModelVariant, image: &PixelGrid) -> LabelGrid {
    initial_labels_with(variant, image, Execution::default())
}

pub fn initial_labels_with(variant: &ModelVariant, image: &PixelGrid, exec: Execution) -> LabelGrid {
    let labels = unary_terms(variant, image, exec)
        .iter()
        .map(|u| (u[1] > u[0]) as u8)
        .collect();
    LabelGrid::from_parts(image.dims(), labels)
}

/// Sites updated in half-sweep `parity` (0: even `row + col`, 1: odd).
pub fn checkerboard_phase(dims: Dims, parity: usize) -> Vec<usize> {
    (0..dims.len())
        .filter(|&i| {
            let (x, y) = dims.coords(i);
            (x + y) % 2 == parity
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IcmOptions {
    pub max_sweeps: usize,
    pub execution: Execution,
}

impl Default for IcmOptions {
    fn default() -> Self {
        Self {
            max_sweeps: DEFAULT_MAX_SWEEPS,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcmResult {
    pub labels: LabelGrid,
    /// Sweeps performed, including the final sweep that changed nothing.
    pub sweeps: usize,
    pub converged: bool,
    /// Label changes in each sweep.
    pub changes: Vec<usize>,
    /// Smallest change in a site's local log-posterior over all updates;
    /// never negative.
    pub min_gain: f64,
}

pub fn icm_infer(
    variant: &ModelVariant,
    image: &PixelGrid,
    init: &LabelGrid,
    max_sweeps: usize,
) -> Result<IcmResult> {
    icm_infer_with(
        variant,
        image,
        init,
        &IcmOptions {
            max_sweeps,
            ..IcmOptions::default()
        },
    )
}

/// Run checkerboard ICM from `init` until a full sweep changes no label or
/// `max_sweeps` is reached. Exact ties keep the current label.
pub fn icm_infer_with(
    variant: &ModelVariant,
    image: &PixelGrid,
    init: &LabelGrid,
    opts: &IcmOptions,
) -> Result<IcmResult> {
    if opts.max_sweeps == 0 {
        return Err(Error::InvalidParameter("max_sweeps must be >= 1".into()));
    }
    let dims = image.dims();
    dims.expect_same(init.dims())?;
    let unary = unary_terms(variant, image, opts.execution);
    let mut labels = init.clone();
    let mut changes = Vec::new();
    let mut min_gain = f64::INFINITY;
    let mut converged = false;

    for _ in 0..opts.max_sweeps {
        let mut changed = 0;
        for parity in 0..2 {
            let rows = opts.execution.map(0..dims.height, |r| {
                let mut flips = Vec::new();
                let mut row_min = f64::INFINITY;
                let start = (r + parity) % 2;
                for c in (start..dims.width).step_by(2) {
                    let site = dims.index(c, r);
                    let s = labels.neighbor_sum(site);
                    let lp = [
                        unary[site][0] + variant.prior_logprob(0, s),
                        unary[site][1] + variant.prior_logprob(1, s),
                    ];
                    let cur = labels.get(site);
                    let best = if lp[1] > lp[0] {
                        1
                    } else if lp[0] > lp[1] {
                        0
                    } else {
                        cur
                    };
                    let gain = lp[best as usize] - lp[cur as usize];
                    debug_assert!(gain >= 0.0, "ICM update lowered the local posterior");
                    row_min = row_min.min(gain);
                    if best != cur {
                        flips.push(site);
                    }
                }
                (flips, row_min)
            });
            for (flips, row_min) in rows {
                min_gain = min_gain.min(row_min);
                changed += flips.len();
                for site in flips {
                    labels.set(site, 1 - labels.get(site));
                }
            }
        }
        changes.push(changed);
        if changed == 0 {
            converged = true;
            break;
        }
    }
    Ok(IcmResult {
        labels,
        sweeps: changes.len(),
        converged,
        changes,
        min_gain,
    })
}

/// Per-pixel posterior ratio `ρ_i` (target over background), stored as `ln ρ_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioMap {
    dims: Dims,
    log_rho: Vec<f64>,
}

impl RatioMap {
    pub fn new(width: usize, height: usize, log_rho: Vec<f64>) -> Result<Self> {
        let dims = Dims::new(width, height);
        if width == 0 || height == 0 || log_rho.len() != dims.len() {
            return Err(Error::InvalidGrid(format!(
                "ratio map {}x{} needs {} values, got {}",
                width,
                height,
                dims.len(),
                log_rho.len()
            )));
        }
        if log_rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("ratio map values must be finite".into()));
        }
        Ok(Self { dims, log_rho })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn log_rho(&self) -> &[f64] {
        &self.log_rho
    }

    #[inline]
    pub fn get(&self, site: usize) -> f64 {
        self.log_rho[site]
    }

    /// Little-endian layout: `u32 width`, `u32 height`, then row-major `f64`s.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.log_rho.len());
        out.extend_from_slice(&(self.dims.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims.height as u32).to_le_bytes());
        for v in &self.log_rho {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::parse("ratio map", m.to_string());
        if bytes.len() < 8 {
            return Err(bad("missing header"));
        }
        let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[8..];
        if body.len() != 8 * w * h {
            return Err(bad(&format!(
                "expected {} payload bytes for {w}x{h}, found {}",
                8 * w * h,
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(w, h, values)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// `ln ρ_i = local_log_posterior(·, 1) - local_log_posterior(·, 0)` at every site.
pub fn ratio_map(variant: &ModelVariant, image: &PixelGrid, labels: &LabelGrid) -> Result<RatioMap> {
    ratio_map_with(variant, image, labels, Execution::default())
}

pub fn ratio_map_with(
    variant: &ModelVariant,
    image: &PixelGrid,
    labels: &LabelGrid,
    exec: Execution,
) -> Result<RatioMap> {
    let dims = image.dims();
    dims.expect_same(labels.dims())?;
    let mut out = vec![0.0; dims.len()];
    exec.for_each_row(&mut out, dims.width, |r, row| {
        for (c, v) in row.iter_mut().enumerate() {
            let site = dims.index(c, r);
            *v = local_log_posterior(variant, image, labels, site, 1)
                - local_log_posterior(variant, image, labels, site, 0);
        }
    });
    RatioMap::new(dims.width, dims.height, out)
}

/// Initialize, run ICM and compute the ratio map under the final labels.
pub fn infer_frame(variant: &ModelVariant, image: &PixelGrid, opts: &IcmOptions) -> Result<(IcmResult, RatioMap)> {
    let init = initial_labels_with(variant, image, opts.execution);
    let result = icm_infer_with(variant, image, &init, opts)?;
    let rho = ratio_map_with(variant, image, &result.labels, opts.execution)?;
    Ok((result, rho))
}
