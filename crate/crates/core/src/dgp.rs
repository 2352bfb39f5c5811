//! Synthetic data for the linear IV model
//!
//! ```text
//! y = X δ + u
//! X = Z π + V
//! ```
//!
//! with `(u_i, V_i)` iid Gaussian, instruments drawn from one of several
//! designs (including a discretized continuum of characteristic-function
//! instruments), and first-stage coefficients from a [`PiScheme`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::rng::{derive_seed, rng_from_seed};

/// Tolerance for `Z'Z/N = I` under the orthonormalized design.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// First-stage coefficient regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PiScheme {
    /// The first `support_size` coefficients equal `value`, the rest are zero.
    FixedSupport { support_size: usize, value: f64 },
    /// `π_j = base · ratio^j`.
    GeometricDecay { base: f64, ratio: f64 },
    /// `π_j = scale / √N` for every instrument.
    Weak { scale: f64 },
    /// Nonzero `values` at `support_indices`, zero elsewhere.
    Sparse {
        support_indices: Vec<usize>,
        values: Vec<f64>,
    },
    /// Explicit coefficient vector of length K.
    Custom { values: Vec<f64> },
}

impl PiScheme {
    /// Checks the scheme against instrument count `k`. `field` is the
    /// dotted path used in error messages.
    pub fn validate(&self, k: usize, field: &str) -> Result<()> {
        match self {
            PiScheme::FixedSupport {
                support_size,
                value,
            } => {
                if *support_size > k {
                    return Err(Error::config(
                        format!("{field}.support_size"),
                        format!("must be at most k = {k}, got {support_size}"),
                    ));
                }
                finite(*value, &format!("{field}.value"))
            }
            PiScheme::GeometricDecay { base, ratio } => {
                finite(*base, &format!("{field}.base"))?;
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(Error::config(
                        format!("{field}.ratio"),
                        format!("must lie in (0, 1), got {ratio}"),
                    ));
                }
                Ok(())
            }
            PiScheme::Weak { scale } => finite(*scale, &format!("{field}.scale")),
            PiScheme::Sparse {
                support_indices,
                values,
            } => {
                if support_indices.len() != values.len() {
                    return Err(Error::config(
                        format!("{field}.values"),
                        format!(
                            "length {} does not match support_indices length {}",
                            values.len(),
                            support_indices.len()
                        ),
                    ));
                }
                let mut seen = vec![false; k];
                for &idx in support_indices {
                    if idx >= k {
                        return Err(Error::config(
                            format!("{field}.support_indices"),
                            format!("index {idx} outside [0, {k})"),
                        ));
                    }
                    if std::mem::replace(&mut seen[idx], true) {
                        return Err(Error::config(
                            format!("{field}.support_indices"),
                            format!("index {idx} repeated"),
                        ));
                    }
                }
                values
                    .iter()
                    .try_for_each(|v| finite(*v, &format!("{field}.values")))
            }
            PiScheme::Custom { values } => {
                if values.len() != k {
                    return Err(Error::config(
                        format!("{field}.values"),
                        format!("length must equal k = {k}, got {}", values.len()),
                    ));
                }
                values
                    .iter()
                    .try_for_each(|v| finite(*v, &format!("{field}.values")))
            }
        }
    }
}

/// Materializes the coefficient vector of length `k`. `n` is only used by
/// the weak scheme.
pub fn materialize_pi(scheme: &PiScheme, k: usize, n: usize) -> Result<DVector<f64>> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    scheme.validate(k, "pi")?;
    let pi = match scheme {
        PiScheme::FixedSupport {
            support_size,
            value,
        } => DVector::from_fn(k, |j, _| if j < *support_size { *value } else { 0.0 }),
        PiScheme::GeometricDecay { base, ratio } => {
            DVector::from_fn(k, |j, _| base * ratio.powi(j as i32))
        }
        PiScheme::Weak { scale } => DVector::from_element(k, scale / (n as f64).sqrt()),
        PiScheme::Sparse {
            support_indices,
            values,
        } => {
            let mut pi = DVector::zeros(k);
            for (&idx, &v) in support_indices.iter().zip(values) {
                pi[idx] = v;
            }
            pi
        }
        PiScheme::Custom { values } => DVector::from_column_slice(values),
    };
    Ok(pi)
}

/// The K×G first-stage coefficient matrix. Column `g` is the materialized
/// vector cyclically shifted down by `g` positions, so distinct endogenous
/// regressors load on distinct instrument combinations.
pub fn pi_matrix(scheme: &PiScheme, k: usize, g: usize, n: usize) -> Result<DMatrix<f64>> {
    let base = materialize_pi(scheme, k, n)?;
    Ok(DMatrix::from_fn(k, g, |row, col| base[(row + k - col % k) % k]))
}

/// How the instrument matrix is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstrumentDesign {
    #[default]
    IidGaussian,
    /// Column k is an AR(1) step from column k−1 with correlation `rho`;
    /// rows stay iid.
    #[serde(alias = "ar1")]
    Ar1Correlated { rho: f64 },
    /// `z_i = Λ f_i + e_i` with `num_factors` standard Gaussian factors and
    /// loadings drawn as `loadings_scale · N(0, 1)`.
    Factor {
        num_factors: usize,
        loadings_scale: f64,
    },
    /// Gaussian draw orthonormalized by thin QR and rescaled so `Z'Z/N = I`.
    Orthonormalized,
    /// Real and imaginary parts of `exp(i τ z)` over a quadrature grid,
    /// each pair scaled by the square root of its weight.
    Continuum {
        base_dim: usize,
        #[serde(default)]
        tau_grid: Vec<f64>,
        #[serde(default)]
        quadrature_weights: Vec<f64>,
    },
}

impl InstrumentDesign {
    /// Number of points in the default continuum grid.
    pub const DEFAULT_GRID_POINTS: usize = 32;

    /// Continuum design on the default grid: 32 equispaced points on
    /// [−3, 3] with uniform weights.
    pub fn default_continuum(base_dim: usize) -> Self {
        Self::continuum_grid(base_dim, Self::DEFAULT_GRID_POINTS, -3.0, 3.0)
    }

    /// Continuum design with `points` equispaced τ on `[lo, hi]` and
    /// uniform weights.
    pub fn continuum_grid(base_dim: usize, points: usize, lo: f64, hi: f64) -> Self {
        let tau_grid = equispaced(points, lo, hi);
        let quadrature_weights = vec![1.0 / points as f64; points];
        InstrumentDesign::Continuum {
            base_dim,
            tau_grid,
            quadrature_weights,
        }
    }

    /// Fills an omitted continuum grid or weights with the defaults.
    pub fn resolve_defaults(&mut self) {
        if let InstrumentDesign::Continuum {
            tau_grid,
            quadrature_weights,
            ..
        } = self
        {
            if tau_grid.is_empty() {
                *tau_grid = equispaced(Self::DEFAULT_GRID_POINTS, -3.0, 3.0);
            }
            if quadrature_weights.is_empty() {
                *quadrature_weights = vec![1.0 / tau_grid.len() as f64; tau_grid.len()];
            }
        }
    }

    pub fn validate(&self, n: usize, k: usize, field: &str) -> Result<()> {
        match self {
            InstrumentDesign::IidGaussian => Ok(()),
            InstrumentDesign::Ar1Correlated { rho } => {
                if !(*rho > -1.0 && *rho < 1.0) {
                    return Err(Error::config(
                        format!("{field}.rho"),
                        format!("must lie in (-1, 1), got {rho}"),
                    ));
                }
                Ok(())
            }
            InstrumentDesign::Factor {
                num_factors,
                loadings_scale,
            } => {
                if *num_factors == 0 {
                    return Err(Error::config(
                        format!("{field}.num_factors"),
                        "must be at least 1",
                    ));
                }
                finite(*loadings_scale, &format!("{field}.loadings_scale"))
            }
            InstrumentDesign::Orthonormalized => {
                if n < k {
                    return Err(Error::config(
                        format!("{field}.kind"),
                        format!("orthonormalized design needs n >= k, got n = {n} < k = {k}"),
                    ));
                }
                Ok(())
            }
            InstrumentDesign::Continuum {
                base_dim,
                tau_grid,
                quadrature_weights,
            } => {
                if *base_dim == 0 {
                    return Err(Error::config(format!("{field}.base_dim"), "must be at least 1"));
                }
                if tau_grid.is_empty() {
                    return Err(Error::config(format!("{field}.tau_grid"), "must not be empty"));
                }
                if tau_grid.iter().any(|t| !t.is_finite())
                    || tau_grid.windows(2).any(|w| w[0] >= w[1])
                {
                    return Err(Error::config(
                        format!("{field}.tau_grid"),
                        "must be finite and strictly increasing",
                    ));
                }
                if quadrature_weights.len() != tau_grid.len() {
                    return Err(Error::config(
                        format!("{field}.quadrature_weights"),
                        format!(
                            "length {} does not match tau_grid length {}",
                            quadrature_weights.len(),
                            tau_grid.len()
                        ),
                    ));
                }
                if quadrature_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return Err(Error::config(
                        format!("{field}.quadrature_weights"),
                        "weights must be strictly positive",
                    ));
                }
                let total: f64 = quadrature_weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::config(
                        format!("{field}.quadrature_weights"),
                        format!("weights must sum to 1, got {total}"),
                    ));
                }
                if k != 2 * tau_grid.len() {
                    return Err(Error::config(
                        format!("{field}.tau_grid"),
                        format!(
                            "continuum design needs k = 2 * |tau_grid| = {}, got k = {k}",
                            2 * tau_grid.len()
                        ),
                    ));
                }
                Ok(())
            }
        }
    }
}

fn equispaced(points: usize, lo: f64, hi: f64) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![(lo + hi) / 2.0],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points).map(|i| lo + step * i as f64).collect()
        }
    }
}

fn finite(v: f64, field: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite, got {v}")))
    }
}

/// Draws an n×k instrument matrix. Deterministic in `seed`.
pub fn generate_instruments(
    design: &InstrumentDesign,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if n == 0 || k == 0 {
        return Err(Error::Parameter(format!(
            "instrument matrix needs n >= 1 and k >= 1, got {n}x{k}"
        )));
    }
    design.validate(n, k, "design")?;
    let mut rng = rng_from_seed(seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };

    let z = match design {
        InstrumentDesign::IidGaussian => row_major(n, k, |_, _| normal()),
        InstrumentDesign::Ar1Correlated { rho } => {
            let innovation = (1.0 - rho * rho).sqrt();
            let mut z = DMatrix::zeros(n, k);
            for i in 0..n {
                z[(i, 0)] = normal();
                for j in 1..k {
                    z[(i, j)] = rho * z[(i, j - 1)] + innovation * normal();
                }
            }
            z
        }
        InstrumentDesign::Factor {
            num_factors,
            loadings_scale,
        } => {
            let loadings = row_major(k, *num_factors, |_, _| loadings_scale * normal());
            let mut z = DMatrix::zeros(n, k);
            let mut factors = vec![0.0; *num_factors];
            for i in 0..n {
                factors.iter_mut().for_each(|f| *f = normal());
                for j in 0..k {
                    let common: f64 = (0..*num_factors).map(|r| loadings[(j, r)] * factors[r]).sum();
                    z[(i, j)] = common + normal();
                }
            }
            z
        }
        InstrumentDesign::Orthonormalized => {
            let raw = row_major(n, k, |_, _| normal());
            let q = raw.qr().q();
            q * (n as f64).sqrt()
        }
        InstrumentDesign::Continuum {
            base_dim,
            tau_grid,
            quadrature_weights,
        } => {
            // The scalar index τ'z uses the direction (1,…,1)/√b, so it stays
            // standard Gaussian for any base dimension.
            let norm = (*base_dim as f64).sqrt();
            let index: Vec<f64> = (0..n)
                .map(|_| (0..*base_dim).map(|_| normal()).sum::<f64>() / norm)
                .collect();
            let mut z = DMatrix::zeros(n, k);
            for (m, (tau, w)) in tau_grid.iter().zip(quadrature_weights).enumerate() {
                let scale = w.sqrt();
                for (i, s) in index.iter().enumerate() {
                    let (sin, cos) = (tau * s).sin_cos();
                    z[(i, 2 * m)] = scale * cos;
                    z[(i, 2 * m + 1)] = scale * sin;
                }
            }
            z
        }
    };
    Ok(z)
}

/// Fills an `n×k` matrix row by row, so each observation's draws are
/// contiguous in the random stream.
fn row_major(n: usize, k: usize, mut f: impl FnMut(usize, usize) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            m[(i, j)] = f(i, j);
        }
    }
    m
}

fn default_one() -> usize {
    1
}

fn default_unit() -> f64 {
    1.0
}

/// Everything needed to simulate one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub k: usize,
    /// Number of endogenous regressors.
    #[serde(default = "default_one")]
    pub g: usize,
    pub pi: PiScheme,
    #[serde(default)]
    pub design: InstrumentDesign,
    #[serde(default)]
    pub delta_true: Vec<f64>,
    #[serde(default = "default_unit")]
    pub sigma_u: f64,
    /// Covariance of `u` with each column of `V`.
    #[serde(default)]
    pub sigma_vu: Vec<f64>,
    #[serde(default = "default_unit")]
    pub sigma_v: f64,
}

impl DgpConfig {
    /// Parses a TOML document holding just the DGP fields, fills defaults
    /// and validates.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: DgpConfig =
            toml::from_str(text).map_err(|e| Error::config("dgp", e.message()))?;
        config.resolve_defaults();
        config.validate("dgp")?;
        Ok(config)
    }

    /// Fills omitted vectors: `delta_true` with ones, `sigma_vu` with zeros,
    /// and the continuum grid with its default.
    pub fn resolve_defaults(&mut self) {
        if self.delta_true.is_empty() {
            self.delta_true = vec![1.0; self.g];
        }
        if self.sigma_vu.is_empty() {
            self.sigma_vu = vec![0.0; self.g];
        }
        self.design.resolve_defaults();
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config(format!("{field}.n"), "must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::config(format!("{field}.k"), "must be at least 1"));
        }
        if self.g == 0 {
            return Err(Error::config(format!("{field}.g"), "must be at least 1"));
        }
        self.pi.validate(self.k, &format!("{field}.pi"))?;
        self.design.validate(self.n, self.k, &format!("{field}.design"))?;
        if self.delta_true.len() != self.g {
            return Err(Error::config(
                format!("{field}.delta_true"),
                format!("length must equal g = {}, got {}", self.g, self.delta_true.len()),
            ));
        }
        for d in &self.delta_true {
            finite(*d, &format!("{field}.delta_true"))?;
        }
        for (name, value) in [("sigma_u", self.sigma_u), ("sigma_v", self.sigma_v)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::config(
                    format!("{field}.{name}"),
                    format!("must be a positive finite number, got {value}"),
                ));
            }
        }
        if self.sigma_vu.len() != self.g {
            return Err(Error::config(
                format!("{field}.sigma_vu"),
                format!("length must equal g = {}, got {}", self.g, self.sigma_vu.len()),
            ));
        }
        let bound = self.sigma_u * self.sigma_v;
        for (j, s) in self.sigma_vu.iter().enumerate() {
            if !(s.abs() < bound) {
                return Err(Error::config(
                    format!("{field}.sigma_vu[{j}]"),
                    format!("|sigma_vu| must be below sigma_u * sigma_v = {bound}, got {s}"),
                ));
            }
        }
        Ok(())
    }

    /// `γ = σ_Vu / σ_u²`.
    pub fn gamma(&self) -> Vec<f64> {
        let var_u = self.sigma_u * self.sigma_u;
        self.sigma_vu.iter().map(|s| s / var_u).collect()
    }

    /// Population correlation between `u` and each column of `V`.
    pub fn endogeneity(&self) -> Vec<f64> {
        self.sigma_vu
            .iter()
            .map(|s| s / (self.sigma_u * self.sigma_v))
            .collect()
    }

    /// The K×G first-stage coefficients of this configuration.
    pub fn pi_matrix(&self) -> Result<DMatrix<f64>> {
        pi_matrix(&self.pi, self.k, self.g, self.n)
    }
}

/// A realized sample `(y, X, Z)`, optionally with the configuration that
/// generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    truth: Option<DgpConfig>,
}

impl Dataset {
    /// Validates shapes and finiteness.
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        z: DMatrix<f64>,
        truth: Option<DgpConfig>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Data("dataset has no observations".into()));
        }
        if x.nrows() != n || z.nrows() != n {
            return Err(Error::Data(format!(
                "row counts disagree: y has {n}, X has {}, Z has {}",
                x.nrows(),
                z.nrows()
            )));
        }
        if x.ncols() == 0 || z.ncols() == 0 {
            return Err(Error::Data("X and Z need at least one column each".into()));
        }
        if !y.iter().all(|v| v.is_finite()) || !all_finite(&x) || !all_finite(&z) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Dataset { y, x, z, truth })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn truth(&self) -> Option<&DgpConfig> {
        self.truth.as_ref()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    pub fn g(&self) -> usize {
        self.x.ncols()
    }

    /// Same regressors and instruments with a new outcome vector.
    pub fn with_y(&self, y: DVector<f64>) -> Result<Self> {
        Dataset::new(y, self.x.clone(), self.z.clone(), self.truth.clone())
    }
}

/// Simulates one dataset from `config`. Deterministic in `(config, seed)`.
pub fn simulate_dataset(config: &DgpConfig, seed: u64) -> Result<Dataset> {
    config.validate("dgp")?;
    let (n, g) = (config.n, config.g);
    let z = generate_instruments(&config.design, n, config.k, derive_seed(seed, 0))?;
    let pi = config.pi_matrix()?;

    // u = σ_u e₀ and V_j = (σ_Vu,j / σ_u) e₀ + s_j e_j reproduce Var(u),
    // Var(V_j) and Cov(u, V_j) exactly.
    let loading: Vec<f64> = config.sigma_vu.iter().map(|s| s / config.sigma_u).collect();
    let idiosyncratic: Vec<f64> = loading
        .iter()
        .map(|l| (config.sigma_v * config.sigma_v - l * l).sqrt())
        .collect();
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let mut u = DVector::zeros(n);
    let mut v = DMatrix::zeros(n, g);
    for i in 0..n {
        let common: f64 = rng.sample(StandardNormal);
        u[i] = config.sigma_u * common;
        for j in 0..g {
            let own: f64 = rng.sample(StandardNormal);
            v[(i, j)] = loading[j] * common + idiosyncratic[j] * own;
        }
    }

    let x = &z * &pi + v;
    let delta = DVector::from_column_slice(&config.delta_true);
    let y = &x * delta + u;
    Dataset::new(y, x, z, Some(config.clone()))
}
