//! Simultaneous auto-regressive (SAR) model of pixel intensities.
//!
//! Within class `l`, each pixel's deviation from the class mean is a linear
//! combination of its four neighbors' deviations plus Gaussian noise:
//!
//! ```text
//! y_i = mu + Σ_d beta_d (y_{i,d} - mu) + eps,    eps ~ N(0, sigma2)
//! ```
//!
//! All probability computations use the local conditional
//! `y_i | y_N ~ N(mu + Σ_d beta_d (y_{i,d} - mu), sigma2)`. Neighbors that fall
//! outside the grid (or outside a training patch) contribute nothing.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::banded::{BandedCholesky, BandedMatrix};
use crate::error::{Error, Result};
use crate::grid::{Dims, Direction, NeighborValues, PixelGrid};
use crate::io::KeyValues;
use crate::par::Execution;
use crate::rng;

/// Default ridge penalty for [`fit_sar`].
pub const DEFAULT_RIDGE: f64 = 1e-8;
/// Lower bound on fitted noise variances, in intensity².
pub const VARIANCE_FLOOR: f64 = 1e-9;
/// Fewest complete (interior) samples [`fit_sar`] accepts.
pub const MIN_SAMPLES: usize = 5;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-class SAR parameters. `beta` is ordered `[up, left, right, down]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SarParams {
    pub mu: f64,
    pub sigma2: f64,
    pub beta: [f64; 4],
}

impl SarParams {
    pub fn new(mu: f64, sigma2: f64, beta: [f64; 4]) -> Result<Self> {
        let p = Self { mu, sigma2, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("SAR parameters must be finite".into()));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "SAR variance must be positive, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    pub fn beta_for(&self, dir: Direction) -> f64 {
        self.beta[dir.slot()]
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("mu", self.mu).set("sigma2", self.sigma2);
        for d in Direction::ALL {
            kv.set(&format!("beta_{}", d.name()), self.beta[d.slot()]);
        }
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut beta = [0.0; 4];
        for d in Direction::ALL {
            beta[d.slot()] = kv.f64(&format!("beta_{}", d.name()))?;
        }
        Self::new(kv.f64("mu")?, kv.f64("sigma2")?, beta)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_kv().write(path)
    }
}

/// One SAR model per class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassSarModel {
    pub target: SarParams,
    pub background: SarParams,
}

impl ClassSarModel {
    pub fn new(target: SarParams, background: SarParams) -> Result<Self> {
        target.validate()?;
        background.validate()?;
        Ok(Self { target, background })
    }

    /// Parameters for label `1` (target) or `0` (background).
    pub fn for_label(&self, label: u8) -> &SarParams {
        if label == 1 {
            &self.target
        } else {
            &self.background
        }
    }
}

/// Conditional mean `mu + Σ_present beta_d (y_d - mu)`.
#[inline]
pub fn conditional_mean(params: &SarParams, neighbors: &NeighborValues) -> f64 {
    let mut m = params.mu;
    for (b, y) in params.beta.iter().zip(neighbors) {
        if let Some(y) = y {
            m += b * (y - params.mu);
        }
    }
    m
}

/// Log density of `y_i` under the class-conditional SAR model given its
/// neighbors.
#[inline]
pub fn sar_conditional_logpdf(params: &SarParams, y_i: f64, neighbors: &NeighborValues) -> f64 {
    let r = y_i - conditional_mean(params, neighbors);
    -0.5 * (LN_2PI + params.sigma2.ln()) - r * r / (2.0 * params.sigma2)
}

/// Pointwise and pairwise clique potentials, evaluated literally:
/// `(y_i - mu)² / 2σ²` and `beta_d² (y_i - mu)(y_j - mu) / 2σ²`.
///
/// Diagnostic only. The squared coefficient in the pairwise term does not
/// agree with the linear coefficient of the conditional mean, so inference
/// never uses these.
pub fn sar_potentials(params: &SarParams, y_i: f64, y_j: f64, dir: Direction) -> (f64, f64) {
    let di = y_i - params.mu;
    let dj = y_j - params.mu;
    let two_s2 = 2.0 * params.sigma2;
    let b = params.beta_for(dir);
    (di * di / two_s2, b * b * di * dj / two_s2)
}

/// A training observation: a pixel value with its per-direction neighbors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SarSample {
    pub y: f64,
    pub neighbors: NeighborValues,
}

impl SarSample {
    pub fn is_complete(&self) -> bool {
        self.neighbors.iter().all(Option::is_some)
    }
}

/// Samples for every pixel of the region `[x0, x0+w) × [y0, y0+h)`, with
/// neighbors restricted to the region itself.
pub fn samples_from_region(
    grid: &PixelGrid,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
) -> Result<Vec<SarSample>> {
    let patch = grid.crop(x0, y0, w, h)?;
    Ok(samples_from_grid(&patch))
}

pub fn samples_from_grid(grid: &PixelGrid) -> Vec<SarSample> {
    (0..grid.dims().len())
        .map(|i| SarSample {
            y: grid.get(i),
            neighbors: grid.neighbor_values(i),
        })
        .collect()
}

const CHUNK: usize = 4096;

fn chunked<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    Execution::default().map(0..chunks, |c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
}

/// Least-squares SAR fit.
///
/// `mu` is the sample mean of all `y`; `beta` minimizes
/// `Σ (y - mu - Σ_d beta_d (y_d - mu))² + ridge ‖beta‖²` over samples with all
/// four neighbors present; `sigma2` is the mean squared residual over all
/// samples (missing neighbors dropped from the prediction), floored at
/// [`VARIANCE_FLOOR`].
///
/// Partial sums are accumulated over fixed chunks and combined in order, so the
/// result does not depend on the thread count.
pub fn fit_sar(samples: &[SarSample], ridge: f64) -> Result<SarParams> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
    }
    let complete = samples.iter().filter(|s| s.is_complete()).count();
    if complete < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: complete,
        });
    }

    let n = samples.len();
    let sum: f64 = chunked(n, |r| samples[r].iter().map(|s| s.y).sum::<f64>())
        .into_iter()
        .sum();
    let mu = sum / n as f64;

    let partial = chunked(n, |r| {
        let mut xtx = [[0.0f64; 4]; 4];
        let mut xty = [0.0f64; 4];
        for s in samples[r].iter().filter(|s| s.is_complete()) {
            let x = s.neighbors.map(|v| v.unwrap() - mu);
            let t = s.y - mu;
            for a in 0..4 {
                xty[a] += x[a] * t;
                for b in 0..4 {
                    xtx[a][b] += x[a] * x[b];
                }
            }
        }
        (xtx, xty)
    });
    let mut xtx = [[0.0f64; 4]; 4];
    let mut xty = [0.0f64; 4];
    for (pa, pb) in partial {
        for a in 0..4 {
            xty[a] += pb[a];
            for b in 0..4 {
                xtx[a][b] += pa[a][b];
            }
        }
    }
    for (a, row) in xtx.iter_mut().enumerate() {
        row[a] += ridge;
    }
    let beta = solve4(xtx, xty)?;

    let probe = SarParams {
        mu,
        sigma2: 1.0,
        beta,
    };
    let sse: f64 = chunked(n, |r| {
        samples[r]
            .iter()
            .map(|s| {
                let e = s.y - conditional_mean(&probe, &s.neighbors);
                e * e
            })
            .sum::<f64>()
    })
    .into_iter()
    .sum();
    let sigma2 = (sse / n as f64).max(VARIANCE_FLOOR);
    SarParams::new(mu, sigma2, beta)
}

/// 4×4 solve with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Result<[f64; 4]> {
    let scale = (0..4).fold(0.0f64, |m, i| m.max(a[i][i].abs()));
    if scale == 0.0 {
        return Err(Error::SingularNormalEquations);
    }
    for k in 0..4 {
        let p = (k..4)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[p][k].abs() <= 1e-12 * scale {
            return Err(Error::SingularNormalEquations);
        }
        a.swap(k, p);
        b.swap(k, p);
        for r in k + 1..4 {
            let l = a[r][k] / a[k][k];
            for c in k..4 {
                a[r][c] -= l * a[k][c];
            }
            b[r] -= l * b[k];
        }
    }
    let mut x = [0.0; 4];
    for k in (0..4).rev() {
        let s: f64 = (k + 1..4).map(|c| a[k][c] * x[c]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    Ok(x)
}

/// Site ordering that gives the lattice operator its smallest half-bandwidth.
struct LatticeOrder {
    dims: Dims,
    column_major: bool,
}

impl LatticeOrder {
    fn new(dims: Dims) -> Self {
        Self {
            dims,
            column_major: dims.height < dims.width,
        }
    }

    fn bandwidth(&self) -> usize {
        self.dims.width.min(self.dims.height)
    }

    #[inline]
    fn position(&self, x: usize, y: usize) -> usize {
        if self.column_major {
            x * self.dims.height + y
        } else {
            y * self.dims.width + x
        }
    }

    /// Assemble `I - B`, where row `i` holds `-beta_d` at each in-bounds
    /// neighbor `d` of site `i`.
    fn operator(&self, beta: &[f64; 4], upper: usize) -> BandedMatrix {
        let n = self.dims.len();
        let bw = self.bandwidth();
        let mut m = BandedMatrix::zeros(n, bw, upper);
        for y in 0..self.dims.height {
            for x in 0..self.dims.width {
                let p = self.position(x, y);
                m.set(p, p, 1.0);
                for d in Direction::ALL {
                    let (dx, dy) = d.offset();
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0
                        || ny < 0
                        || nx >= self.dims.width as isize
                        || ny >= self.dims.height as isize
                    {
                        continue;
                    }
                    let q = self.position(nx as usize, ny as usize);
                    m.set(p, q, -beta[d.slot()]);
                }
            }
        }
        m
    }

    fn noise(&self, sigma: f64, seed: u64) -> Vec<f64> {
        // drawn in raster order so the field does not depend on the ordering
        let mut rng = rng::seeded(seed);
        let raster: Vec<f64> = (0..self.dims.len())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma * z
            })
            .collect();
        let mut out = vec![0.0; raster.len()];
        for y in 0..self.dims.height {
            for x in 0..self.dims.width {
                out[self.position(x, y)] = raster[self.dims.index(x, y)];
            }
        }
        out
    }

    fn to_grid(&self, solved: &[f64], mu: f64) -> Result<PixelGrid> {
        let mut values = vec![0.0; solved.len()];
        for y in 0..self.dims.height {
            for x in 0..self.dims.width {
                values[self.dims.index(x, y)] = mu + solved[self.position(x, y)];
            }
        }
        PixelGrid::new(self.dims.width, self.dims.height, values)
    }
}

/// Exact draw from the simultaneous system: `y = mu + (I - B)⁻¹ eps` with
/// `eps` i.i.d. `N(0, sigma2)`, by direct banded solve.
///
/// Deterministic given `seed`. Partial pivoting is used unless `Σ|beta| < 1`
/// makes `I - B` strictly diagonally dominant.
pub fn sample_sar(params: &SarParams, width: usize, height: usize, seed: u64) -> Result<PixelGrid> {
    params.validate()?;
    let dims = Dims::new(width, height);
    if dims.is_empty() {
        return Err(Error::InvalidGrid("sample size must be positive".into()));
    }
    let order = LatticeOrder::new(dims);
    let mut rhs = order.noise(params.sigma2.sqrt(), seed);
    if params.beta.iter().all(|&b| b == 0.0) {
        return order.to_grid(&rhs, params.mu);
    }
    let dominant = params.beta.iter().map(|b| b.abs()).sum::<f64>() < 1.0;
    let bw = order.bandwidth();
    let upper = if dominant { bw } else { 2 * bw };
    order.operator(&params.beta, upper).solve(&mut rhs, !dominant)?;
    order.to_grid(&rhs, params.mu)
}

/// Exact draw from the Gaussian field whose local conditionals are exactly
/// `N(conditional_mean, sigma2)`, i.e. precision `(I - B) / sigma2`.
///
/// This is the field that least-squares regression on neighbors estimates
/// consistently, which makes it the round-trip oracle for [`fit_sar`]. Such a
/// joint exists only for mirror-symmetric coefficients (`up == down`,
/// `left == right`) with `I - B` positive definite; anything else is rejected.
pub fn sample_conditional_sar(
    params: &SarParams,
    width: usize,
    height: usize,
    seed: u64,
) -> Result<PixelGrid> {
    params.validate()?;
    let [up, left, right, down] = params.beta;
    if up != down || left != right {
        return Err(Error::InvalidParameter(
            "conditional sampling needs beta_up == beta_down and beta_left == beta_right".into(),
        ));
    }
    let dims = Dims::new(width, height);
    if dims.is_empty() {
        return Err(Error::InvalidGrid("sample size must be positive".into()));
    }
    let order = LatticeOrder::new(dims);
    let op = order.operator(&params.beta, order.bandwidth());
    let chol = BandedCholesky::factor(&op)?;
    let mut z = order.noise(params.sigma2.sqrt(), seed);
    // L Lᵀ = I - B and z ~ N(0, σ² I)  ⇒  L⁻ᵀ z ~ N(0, σ² (I - B)⁻¹)
    chol.solve_transpose(&mut z);
    order.to_grid(&z, params.mu)
}
