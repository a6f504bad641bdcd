//! Auto-logistic prior over binary labels.
//!
//! The local conditional of a label given its 4-neighbors is
//!
//! ```text
//! p(x_i | x_N) = exp[x_i (nu + gamma S_i)] / (1 + exp[nu + gamma S_i]),   S_i = Σ_{j∈N_i} x_j
//! ```
//!
//! with `nu` shared across sites and `gamma` shared across directions. This
//! conditional is the single definition used for inference, learning and
//! sampling. Learning maximizes the log pseudo-likelihood, the sum over sites
//! of the log conditional of the observed label.
//!
//! Learned values need not be attractive: a negative `gamma` penalizes
//! neighboring target labels, and that is faithfully what the model encodes.

use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::grid::LabelGrid;
use crate::io::KeyValues;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AutoParams {
    pub nu: f64,
    pub gamma: f64,
}

impl AutoParams {
    pub fn new(nu: f64, gamma: f64) -> Result<Self> {
        if !nu.is_finite() || !gamma.is_finite() {
            return Err(Error::InvalidParameter("auto-logistic parameters must be finite".into()));
        }
        Ok(Self { nu, gamma })
    }

    /// Logit of `p(x_i = 1 | x_N)` for a neighbor label sum `s`.
    #[inline]
    pub fn logit(&self, s: u32) -> f64 {
        self.nu + self.gamma * s as f64
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("nu", self.nu).set("gamma", self.gamma);
        kv
    }

    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        Self::new(kv.f64("nu")?, kv.f64("gamma")?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_kv().write(path)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `ln σ(z)`.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    -softplus(-z)
}

/// `p(x_i = 1 | x_N)` given the neighbors' labels (0–4 of them).
pub fn auto_conditional(params: &AutoParams, neighbor_labels: &[u8]) -> f64 {
    debug_assert!(neighbor_labels.len() <= 4);
    let s: u32 = neighbor_labels.iter().map(|&l| l as u32).sum();
    sigmoid(params.logit(s))
}

/// `ln p(x_i = label | x_N)` for neighbor sum `s`.
#[inline]
pub fn auto_log_conditional(params: &AutoParams, label: u8, s: u32) -> f64 {
    let z = params.logit(s);
    if label == 1 {
        log_sigmoid(z)
    } else {
        log_sigmoid(-z)
    }
}

/// Singleton and pair clique potentials `(nu x_i, gamma x_i x_j)`, for
/// inspection only.
pub fn auto_potentials(params: &AutoParams, x_i: u8, x_j: u8) -> (f64, f64) {
    (
        params.nu * x_i as f64,
        params.gamma * (x_i as f64) * (x_j as f64),
    )
}

/// Log pseudo-likelihood
/// `Σ_i x_i (nu + gamma S_i) - Σ_i ln(1 + exp(nu + gamma S_i))`.
pub fn log_pll(params: &AutoParams, labels: &LabelGrid) -> f64 {
    (0..labels.dims().len())
        .map(|i| {
            let z = params.logit(labels.neighbor_sum(i));
            labels.get(i) as f64 * z - softplus(z)
        })
        .sum()
}

/// Analytic gradient of [`log_pll`] with respect to `(nu, gamma)`.
pub fn log_pll_gradient(params: &AutoParams, labels: &LabelGrid) -> (f64, f64) {
    let mut g = (0.0, 0.0);
    for i in 0..labels.dims().len() {
        let s = labels.neighbor_sum(i);
        let r = labels.get(i) as f64 - sigmoid(params.logit(s));
        g.0 += r;
        g.1 += s as f64 * r;
    }
    g
}

/// Sufficient statistics of the pseudo-likelihood: how many sites carry
/// label `x` with neighbor sum `s`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PllStats {
    counts: [[u64; 5]; 2],
}

impl PllStats {
    pub fn from_labels(labels: &LabelGrid) -> Self {
        let mut counts = [[0u64; 5]; 2];
        for i in 0..labels.dims().len() {
            counts[labels.get(i) as usize][labels.neighbor_sum(i) as usize] += 1;
        }
        Self { counts }
    }

    pub fn add(&mut self, other: &PllStats) {
        for x in 0..2 {
            for s in 0..5 {
                self.counts[x][s] += other.counts[x][s];
            }
        }
    }

    pub fn count(&self, label: u8, s: u32) -> u64 {
        self.counts[label as usize][s as usize]
    }

    fn totals(&self) -> (u64, u64) {
        (self.counts[0].iter().sum(), self.counts[1].iter().sum())
    }

    pub fn log_pll(&self, p: &AutoParams) -> f64 {
        let mut acc = 0.0;
        for s in 0..5u32 {
            let z = p.logit(s);
            let (c0, c1) = (self.count(0, s) as f64, self.count(1, s) as f64);
            acc += c1 * z - (c0 + c1) * softplus(z);
        }
        acc
    }

    pub fn gradient(&self, p: &AutoParams) -> (f64, f64) {
        let mut g = (0.0, 0.0);
        for s in 0..5u32 {
            let q = sigmoid(p.logit(s));
            let (c0, c1) = (self.count(0, s) as f64, self.count(1, s) as f64);
            let r = c1 - (c0 + c1) * q;
            g.0 += r;
            g.1 += s as f64 * r;
        }
        g
    }

    /// Negated Hessian (positive semi-definite) as `[[a, b], [b, c]]`.
    fn curvature(&self, p: &AutoParams) -> [[f64; 2]; 2] {
        let mut m = [[0.0; 2]; 2];
        for s in 0..5u32 {
            let q = sigmoid(p.logit(s));
            let w = (self.count(0, s) + self.count(1, s)) as f64 * q * (1.0 - q);
            let s = s as f64;
            m[0][0] += w;
            m[0][1] += w * s;
            m[1][1] += w * s * s;
        }
        m[1][0] = m[0][1];
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitAutoOptions {
    /// Stop once the gradient's ∞-norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
}

impl Default for FitAutoOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 500,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoFit {
    pub params: AutoParams,
    pub iterations: usize,
    pub converged: bool,
    /// Log pseudo-likelihood at the start and after every accepted step.
    pub trace: Vec<f64>,
}

/// Maximum pseudo-likelihood estimate of `(nu, gamma)`.
pub fn fit_auto(labels: &LabelGrid) -> Result<AutoParams> {
    fit_auto_with(&PllStats::from_labels(labels), &FitAutoOptions::default()).map(|f| f.params)
}

/// Line-search ascent on the log pseudo-likelihood.
///
/// Steps follow the Newton direction (the objective is concave, so the
/// negated Hessian is positive semi-definite), falling back to the raw
/// gradient when the curvature is singular. Each step is accepted by Armijo
/// backtracking, so the trace is strictly increasing.
///
/// Perfectly separable label fields (e.g. rasterized rectangles) have no
/// finite maximizer; the estimate then grows until the gradient vanishes
/// numerically or the iteration cap is hit.
pub fn fit_auto_with(stats: &PllStats, opts: &FitAutoOptions) -> Result<AutoFit> {
    let (n0, n1) = stats.totals();
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateLabels(
            "label field contains a single class".into(),
        ));
    }
    let mut p = AutoParams {
        nu: (n1 as f64 / n0 as f64).ln(),
        gamma: 0.0,
    };
    let mut f = stats.log_pll(&p);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let g = stats.gradient(&p);
        if g.0.abs().max(g.1.abs()) < opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let m = stats.curvature(&p);
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let mut d = if det > 1e-12 * (m[0][0] * m[1][1]).max(f64::MIN_POSITIVE) {
            (
                (m[1][1] * g.0 - m[0][1] * g.1) / det,
                (m[0][0] * g.1 - m[1][0] * g.0) / det,
            )
        } else {
            g
        };
        let mut slope = g.0 * d.0 + g.1 * d.1;
        // also catches a NaN slope from a degenerate Newton solve
        let uphill = slope > 0.0;
        if !uphill {
            d = g;
            slope = g.0 * g.0 + g.1 * g.1;
        }
        let mut t = opts.initial_step;
        let mut accepted = None;
        for _ in 0..64 {
            let cand = AutoParams {
                nu: p.nu + t * d.0,
                gamma: p.gamma + t * d.1,
            };
            let fc = stats.log_pll(&cand);
            if fc.is_finite() && fc >= f + opts.armijo * t * slope && fc > f {
                accepted = Some((cand, fc));
                break;
            }
            t *= opts.shrink;
        }
        match accepted {
            Some((cand, fc)) => {
                p = cand;
                f = fc;
                trace.push(f);
            }
            // no representable increase left
            None => break,
        }
    }
    Ok(AutoFit {
        params: p,
        iterations,
        converged,
        trace,
    })
}

/// Systematic-scan Gibbs sampler over the local conditionals.
///
/// Starts from i.i.d. fair-coin labels and performs `sweeps` raster-order
/// passes. Deterministic given `seed`.
pub fn sample_auto(
    params: &AutoParams,
    width: usize,
    height: usize,
    sweeps: usize,
    seed: u64,
) -> Result<LabelGrid> {
    if sweeps == 0 {
        return Err(Error::InvalidParameter("sweeps must be >= 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let init = (0..width * height).map(|_| rng.random_bool(0.5) as u8).collect();
    let mut labels = LabelGrid::new(width, height, init)?;
    for _ in 0..sweeps {
        gibbs_sweep(params, &mut labels, &mut rng);
    }
    Ok(labels)
}

pub(crate) fn gibbs_sweep(params: &AutoParams, labels: &mut LabelGrid, rng: &mut rng::Rng) {
    for i in 0..labels.dims().len() {
        let p = sigmoid(params.logit(labels.neighbor_sum(i)));
        let u: f64 = rng.random();
        labels.set(i, (u < p) as u8);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uninformative_prior_is_half() {
        let p = AutoParams::new(0.0, 0.0).unwrap();
        assert_eq!(auto_conditional(&p, &[1, 0, 1]), 0.5);
        assert_eq!(auto_conditional(&p, &[]), 0.5);
    }

    #[test]
    fn learned_values_at_extremes() {
        let p = AutoParams::new(9.54, -4.6924).unwrap();
        assert_abs_diff_eq!(auto_conditional(&p, &[0, 0, 0, 0]), 0.999_928_1, epsilon = 1e-7);
        // σ(9.54 - 18.7696) = σ(-9.2296)
        assert_abs_diff_eq!(auto_conditional(&p, &[1, 1, 1, 1]), 9.78e-5, epsilon = 5e-7);
    }

    #[test]
    fn conditional_normalizes() {
        let p = AutoParams::new(-1.3, 0.7).unwrap();
        for s in 0..=4 {
            let total = auto_log_conditional(&p, 1, s).exp() + auto_log_conditional(&p, 0, s).exp();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn stable_helpers_do_not_overflow() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!(log_sigmoid(-800.0).is_finite());
        assert_eq!(sigmoid(-800.0), 0.0);
    }

    #[test]
    fn flat_params_give_n_log_half() {
        let g = LabelGrid::new(3, 2, vec![1, 0, 0, 1, 1, 0]).unwrap();
        let p = AutoParams::new(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(log_pll(&p, &g), -6.0 * std::f64::consts::LN_2, epsilon = 1e-12);
    }

    #[test]
    fn all_zero_grid_closed_form() {
        let g = LabelGrid::zeros(3, 3).unwrap();
        let p = AutoParams::new(-10.0, 0.0).unwrap();
        let expected = -9.0 * (-10f64).exp().ln_1p();
        assert_abs_diff_eq!(log_pll(&p, &g), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(log_pll(&p, &g), -4.086e-4, epsilon = 1e-7);
        assert_eq!(
            log_pll_gradient(&AutoParams::new(0.0, 0.0).unwrap(), &g),
            (-4.5, 0.0)
        );
    }

    #[test]
    fn stats_agree_with_per_site_sums() {
        let g = sample_auto(&AutoParams::new(-0.5, 0.6).unwrap(), 9, 7, 3, 2).unwrap();
        let stats = PllStats::from_labels(&g);
        for &(nu, gamma) in &[(0.0, 0.0), (1.5, -2.0), (-3.0, 1.1)] {
            let p = AutoParams::new(nu, gamma).unwrap();
            assert_abs_diff_eq!(stats.log_pll(&p), log_pll(&p, &g), epsilon = 1e-10);
            let (a, b) = (stats.gradient(&p), log_pll_gradient(&p, &g));
            assert_abs_diff_eq!(a.0, b.0, epsilon = 1e-10);
            assert_abs_diff_eq!(a.1, b.1, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let err = fit_auto(&LabelGrid::ones(5, 5).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DegenerateLabels(_)));
        assert!(err.to_string().contains("degenerate labels"));
    }

    #[test]
    fn checkerboard_is_antiferromagnetic() {
        let labels = (0..64).map(|i| ((i % 8 + i / 8) % 2) as u8).collect();
        let g = LabelGrid::new(8, 8, labels).unwrap();
        let p = fit_auto(&g).unwrap();
        assert!(p.gamma < -1.0, "gamma = {}", p.gamma);
    }

    #[test]
    fn saturated_prior_fills_in_one_sweep() {
        let g = sample_auto(&AutoParams::new(20.0, 0.0).unwrap(), 16, 16, 1, 9).unwrap();
        assert_eq!(g.count_ones(), 256);
    }

    #[test]
    fn independent_sites_are_fair_coins() {
        let g = sample_auto(&AutoParams::new(0.0, 0.0).unwrap(), 100, 100, 2, 4).unwrap();
        // 3σ binomial bound: 3 · sqrt(n/4) = 150
        assert!((g.count_ones() as i64 - 5000).abs() <= 150);
    }

    #[test]
    fn zero_sweeps_rejected() {
        assert!(sample_auto(&AutoParams::new(0.0, 0.0).unwrap(), 3, 3, 0, 0).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let p = AutoParams::new(9.54, -4.6924).unwrap();
        let text = p.to_kv().to_string();
        assert!(text.contains("nu = 9.54") && text.contains("gamma = -4.6924"));
        assert_eq!(AutoParams::from_kv(&KeyValues::parse(&text, "t").unwrap()).unwrap(), p);
    }
}
