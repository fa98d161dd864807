//! Sparse variational Gaussian process binary classifier over embeddings.
//!
//! An RBF kernel, M inducing points, and a Gaussian variational posterior
//! `q(u) = N(mu, S)` are trained by gradient ascent on the ELBO with a
//! Bernoulli likelihood; the expected log-likelihood is estimated with
//! reparameterized Monte Carlo draws. The predictive latent variance is the
//! uncertainty signal consumed by the fusion stage.
//!
//! Internally the variational parameters are whitened — the optimizer works
//! on `(m, C)` with `u = L(m + ...)`, precisely `mu = L m`, `S = L C C^T L^T`
//! for `L = chol(K_uu)` — which keeps the KL term free of `K_uu` and the
//! problem well conditioned. The stored, serialized parameterization is the
//! plain `(mu, S-factor)` one.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::head::{bce_with_logit, sigmoid};
use crate::linalg::{cholesky_backward, cholesky_with_jitter, tril_mask};
use crate::rng;

pub const DEFAULT_JITTER: f64 = 1e-6;
pub const MAX_JITTER: f64 = 1e-2;

/// RBF kernel `k(z, z') = os * exp(-||z - z'||^2 / (2 ls^2))`, hyperparameters
/// stored as logs so optimization is unconstrained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel {
    log_output_scale: f64,
    log_length_scale: f64,
}

impl RbfKernel {
    pub fn new(output_scale: f64, length_scale: f64) -> Result<Self> {
        if output_scale <= 0.0 || length_scale <= 0.0 {
            return Err(Error::config("kernel hyperparameters must be positive"));
        }
        Ok(Self {
            log_output_scale: output_scale.ln(),
            log_length_scale: length_scale.ln(),
        })
    }

    pub fn from_logs(log_output_scale: f64, log_length_scale: f64) -> Self {
        Self {
            log_output_scale,
            log_length_scale,
        }
    }

    pub fn output_scale(&self) -> f64 {
        self.log_output_scale.exp()
    }

    pub fn length_scale(&self) -> f64 {
        self.log_length_scale.exp()
    }

    pub fn log_output_scale(&self) -> f64 {
        self.log_output_scale
    }

    pub fn log_length_scale(&self) -> f64 {
        self.log_length_scale
    }

    fn eval_sqdist(&self, sq: f64) -> f64 {
        let ls = self.length_scale();
        self.output_scale() * (-sq / (2.0 * ls * ls)).exp()
    }

    /// Kernel value between two points of equal dimension.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        Ok(self.eval_sqdist(sqdist(a, b)))
    }
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sparse variational GP state: inducing locations `Z_u`, variational mean,
/// lower-triangular factor of the variational covariance, kernel, jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGp {
    inducing: DMatrix<f64>,
    var_mean: DVector<f64>,
    var_cov_factor: DMatrix<f64>,
    kernel: RbfKernel,
    jitter: f64,
}

impl SparseGp {
    pub fn new(
        inducing: DMatrix<f64>,
        var_mean: DVector<f64>,
        var_cov_factor: DMatrix<f64>,
        kernel: RbfKernel,
        jitter: f64,
    ) -> Result<Self> {
        let m = inducing.nrows();
        if m == 0 || inducing.ncols() == 0 {
            return Err(Error::config("inducing matrix must be nonempty"));
        }
        if var_mean.len() != m || var_cov_factor.nrows() != m || var_cov_factor.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: var_mean.len(),
            });
        }
        for r in 0..m {
            if var_cov_factor[(r, r)] <= 0.0 {
                return Err(Error::config(
                    "variational covariance factor must have a positive diagonal",
                ));
            }
            for c in (r + 1)..m {
                if var_cov_factor[(r, c)] != 0.0 {
                    return Err(Error::config(
                        "variational covariance factor must be lower triangular",
                    ));
                }
            }
        }
        if jitter <= 0.0 {
            return Err(Error::config("jitter must be positive"));
        }
        Ok(Self {
            inducing,
            var_mean,
            var_cov_factor,
            kernel,
            jitter,
        })
    }

    /// Prior state: `mu = 0`, `S = K_uu + jitter*I`, so the predictive
    /// collapses to the kernel prior everywhere.
    pub fn prior(inducing: DMatrix<f64>, kernel: RbfKernel, jitter: f64) -> Result<Self> {
        let m = inducing.nrows();
        let kuu = kernel_matrix(&kernel, &inducing);
        let (chol, used) = cholesky_with_jitter(&kuu, jitter, MAX_JITTER)?;
        Self::new(inducing, DVector::zeros(m), chol.l(), kernel, used)
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.nrows()
    }

    pub fn dim(&self) -> usize {
        self.inducing.ncols()
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn inducing(&self) -> &DMatrix<f64> {
        &self.inducing
    }

    pub fn var_mean(&self) -> &DVector<f64> {
        &self.var_mean
    }

    pub fn var_cov_factor(&self) -> &DMatrix<f64> {
        &self.var_cov_factor
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Factor the inducing covariance once for repeated prediction.
    pub fn predictor(&self) -> Result<GpPredictor<'_>> {
        let kuu = kernel_matrix(&self.kernel, &self.inducing);
        let (chol, _) = cholesky_with_jitter(&kuu, self.jitter, MAX_JITTER)?;
        let l = chol.l();
        let w = l
            .solve_lower_triangular(&self.var_mean)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let g = l
            .solve_lower_triangular(&self.var_cov_factor)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        Ok(GpPredictor { gp: self, l, w, g })
    }

    /// Predictive latent mean and variance at one test point.
    pub fn predictive_latent(&self, z: &[f64]) -> Result<(f64, f64)> {
        self.predictor()?.latent(z)
    }

    /// Monte-Carlo estimate of `p(y=1 | z)` with `s_samples` reparameterized
    /// draws from the latent predictive.
    pub fn predictive_prob(&self, z: &[f64], s_samples: usize, seed: u64) -> Result<f64> {
        if s_samples < 1 {
            return Err(Error::config("s_samples must be at least 1"));
        }
        let (mu, var) = self.predictive_latent(z)?;
        Ok(mc_sigmoid_mean(mu, var.sqrt(), s_samples, seed))
    }

    /// Closed-form `KL[q(u) || p(u)]` between `N(mu, S)` and `N(0, K_uu)`.
    pub fn kl_qu_pu(&self) -> Result<f64> {
        let kuu = kernel_matrix(&self.kernel, &self.inducing);
        let (chol, _) = cholesky_with_jitter(&kuu, self.jitter, MAX_JITTER)?;
        let l = chol.l();
        let m = self.num_inducing() as f64;
        let linv_f = l
            .solve_lower_triangular(&self.var_cov_factor)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let linv_mu = l
            .solve_lower_triangular(&self.var_mean)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let trace = linv_f.iter().map(|v| v * v).sum::<f64>();
        let quad = linv_mu.iter().map(|v| v * v).sum::<f64>();
        let logdet_k: f64 = (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
        let logdet_s: f64 = (0..l.nrows())
            .map(|i| self.var_cov_factor[(i, i)].ln())
            .sum::<f64>()
            * 2.0;
        Ok(0.5 * (trace + quad - m + logdet_k - logdet_s))
    }

    /// ELBO of this state on a dataset: the MC-estimated expected Bernoulli
    /// log-likelihood minus the KL term. Deterministic per seed.
    pub fn elbo(&self, data: &EmbeddingDataset, mc_samples: usize, seed: u64) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyInput("elbo needs a nonempty dataset"));
        }
        if mc_samples < 1 {
            return Err(Error::config("mc_samples must be at least 1"));
        }
        let pred = self.predictor()?;
        let mut gen = rng::seeded(seed);
        let mut ell = 0.0;
        for s in data.samples() {
            let (mu, var) = pred.latent(&s.embedding)?;
            let sd = var.sqrt();
            let mut acc = 0.0;
            for _ in 0..mc_samples {
                let eps: f64 = gen.sample(StandardNormal);
                acc += -bce_with_logit(mu + eps * sd, s.label);
            }
            ell += acc / mc_samples as f64;
        }
        Ok(ell - self.kl_qu_pu()?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = GpFile {
            schema: SCHEMA.to_string(),
            kernel: KernelFile {
                log_os: self.kernel.log_output_scale(),
                log_ls: self.kernel.log_length_scale(),
            },
            inducing: matrix_rows(&self.inducing),
            var_mean: self.var_mean.iter().copied().collect(),
            var_cov_factor: matrix_rows(&self.var_cov_factor),
            jitter: self.jitter,
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::Numerical(format!("gp serialization failed: {e}")))?;
        std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let file: GpFile = serde_json::from_str(&text).map_err(|e| Error::Malformed {
            format: "gp json",
            line: 0,
            msg: e.to_string(),
        })?;
        if file.schema != SCHEMA {
            return Err(Error::Malformed {
                format: "gp json",
                line: 0,
                msg: format!("unsupported schema {:?}", file.schema),
            });
        }
        let inducing = rows_to_matrix(&file.inducing)?;
        let factor = rows_to_matrix(&file.var_cov_factor)?;
        Self::new(
            inducing,
            DVector::from_vec(file.var_mean),
            factor,
            RbfKernel::from_logs(file.kernel.log_os, file.kernel.log_ls),
            file.jitter,
        )
    }
}

const SCHEMA: &str = "gp/1";

#[derive(Serialize, Deserialize)]
struct GpFile {
    schema: String,
    kernel: KernelFile,
    inducing: Vec<Vec<f64>>,
    var_mean: Vec<f64>,
    var_cov_factor: Vec<Vec<f64>>,
    jitter: f64,
}

#[derive(Serialize, Deserialize)]
struct KernelFile {
    log_os: f64,
    log_ls: f64,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Malformed {
            format: "gp json",
            line: 0,
            msg: "ragged matrix rows".into(),
        });
    }
    Ok(DMatrix::from_fn(nr, nc, |r, c| rows[r][c]))
}

/// Prefactored predictor over an immutable [`SparseGp`].
pub struct GpPredictor<'a> {
    gp: &'a SparseGp,
    l: DMatrix<f64>,
    /// `L^-1 mu`
    w: DVector<f64>,
    /// `L^-1 F`
    g: DMatrix<f64>,
}

impl GpPredictor<'_> {
    /// `(mu*, sigma*^2)` at a test point.
    pub fn latent(&self, z: &[f64]) -> Result<(f64, f64)> {
        if z.len() != self.gp.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gp.dim(),
                got: z.len(),
            });
        }
        let m = self.gp.num_inducing();
        let kstar = DVector::from_fn(m, |r, _| {
            self.gp
                .kernel
                .eval_sqdist(sqdist(self.gp.inducing.row(r).transpose().as_slice(), z))
        });
        let a = self
            .l
            .solve_lower_triangular(&kstar)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let mu = a.dot(&self.w);
        let kss = self.gp.kernel.output_scale();
        let t = self.g.transpose() * &a;
        let var = kss - a.norm_squared() + t.norm_squared();
        Ok((mu, var.max(f64::MIN_POSITIVE)))
    }
}

/// Mean of `sigmoid` over `s_samples` draws from `N(mu, sigma^2)`.
pub fn mc_sigmoid_mean(mu: f64, sigma: f64, s_samples: usize, seed: u64) -> f64 {
    let mut gen = rng::seeded(seed);
    let mut acc = 0.0;
    for _ in 0..s_samples {
        let eps: f64 = gen.sample(StandardNormal);
        acc += sigmoid(mu + eps * sigma);
    }
    acc / s_samples as f64
}

fn kernel_matrix(kernel: &RbfKernel, points: &DMatrix<f64>) -> DMatrix<f64> {
    let n = points.nrows();
    let mut k = DMatrix::zeros(n, n);
    for r in 0..n {
        k[(r, r)] = kernel.output_scale();
        for c in 0..r {
            let sq = (points.row(r) - points.row(c)).norm_squared();
            let v = kernel.eval_sqdist(sq);
            k[(r, c)] = v;
            k[(c, r)] = v;
        }
    }
    k
}

/// Fit configuration. Defaults are sized for fast experiments; large-scale
/// runs would use hundreds of inducing points per class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpFitConfig {
    pub m_per_class: usize,
    pub elbo_steps: usize,
    pub learning_rate: f64,
    pub mc_elbo_samples: usize,
    pub seed: u64,
}

impl Default for GpFitConfig {
    fn default() -> Self {
        Self {
            m_per_class: 16,
            elbo_steps: 200,
            learning_rate: 0.05,
            mc_elbo_samples: 8,
            seed: 0,
        }
    }
}

impl GpFitConfig {
    fn validate(&self) -> Result<()> {
        if self.m_per_class < 1 {
            return Err(Error::config("m_per_class must be at least 1"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.mc_elbo_samples < 1 {
            return Err(Error::config("mc_elbo_samples must be at least 1"));
        }
        Ok(())
    }
}

/// Whitened optimization state. `C` is split into its strict lower part and
/// the log of its diagonal so positivity needs no constraint handling.
struct WhitenedState {
    log_os: f64,
    log_ls: f64,
    z: DMatrix<f64>,
    m: DVector<f64>,
    c_strict: DMatrix<f64>,
    c_logdiag: DVector<f64>,
}

impl WhitenedState {
    fn c_matrix(&self) -> DMatrix<f64> {
        let mm = self.m.len();
        let mut c = self.c_strict.clone();
        for i in 0..mm {
            c[(i, i)] = self.c_logdiag[i].exp();
        }
        c
    }

    fn n_params(&self) -> usize {
        2 + self.z.len() + self.m.len() * 2 + self.m.len() * (self.m.len() - 1) / 2
    }

    fn pack(&self) -> Vec<f64> {
        let mm = self.m.len();
        let mut out = Vec::with_capacity(self.n_params());
        out.push(self.log_os);
        out.push(self.log_ls);
        for r in 0..self.z.nrows() {
            for c in 0..self.z.ncols() {
                out.push(self.z[(r, c)]);
            }
        }
        out.extend(self.m.iter());
        for r in 0..mm {
            for c in 0..r {
                out.push(self.c_strict[(r, c)]);
            }
        }
        out.extend(self.c_logdiag.iter());
        out
    }

    fn unpack(&mut self, flat: &[f64]) {
        let mm = self.m.len();
        let mut k = 0;
        self.log_os = flat[k];
        k += 1;
        self.log_ls = flat[k];
        k += 1;
        for r in 0..self.z.nrows() {
            for c in 0..self.z.ncols() {
                self.z[(r, c)] = flat[k];
                k += 1;
            }
        }
        for i in 0..mm {
            self.m[i] = flat[k];
            k += 1;
        }
        for r in 0..mm {
            for c in 0..r {
                self.c_strict[(r, c)] = flat[k];
                k += 1;
            }
        }
        for i in 0..mm {
            self.c_logdiag[i] = flat[k];
            k += 1;
        }
        debug_assert_eq!(k, flat.len());
    }
}

struct Gradient {
    log_os: f64,
    log_ls: f64,
    z: DMatrix<f64>,
    m: DVector<f64>,
    c: DMatrix<f64>, // dense lower gradient wrt C entries (pre chain rule)
}

/// ELBO and its full gradient at a whitened state with fixed noise draws
/// `eps` (one row per data point, one column per MC sample).
fn elbo_and_grad(
    state: &WhitenedState,
    xs: &DMatrix<f64>,
    ys: &[u8],
    eps: &DMatrix<f64>,
    jitter: f64,
) -> Result<(f64, Gradient)> {
    let n = xs.nrows();
    let mm = state.m.len();
    let os = state.log_os.exp();
    let ls = state.log_ls.exp();
    let ls2 = ls * ls;
    let n_mc = eps.ncols();

    let kernel = RbfKernel::from_logs(state.log_os, state.log_ls);
    let kuu = kernel_matrix(&kernel, &state.z);
    let (chol, _) = cholesky_with_jitter(&kuu, jitter, MAX_JITTER)?;
    let l = chol.l();

    // cross-kernel: kux[(j, i)] = k(Z_j, x_i)
    let mut kux = DMatrix::zeros(mm, n);
    let mut sq_ji = DMatrix::zeros(mm, n);
    for j in 0..mm {
        for i in 0..n {
            let sq = (state.z.row(j) - xs.row(i)).norm_squared();
            sq_ji[(j, i)] = sq;
            kux[(j, i)] = kernel.eval_sqdist(sq);
        }
    }
    let a = l
        .solve_lower_triangular(&kux)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let c = state.c_matrix();
    let t = c.transpose() * &a;

    // per-point predictive moments
    let mut mu_star = vec![0.0; n];
    let mut sd_star = vec![0.0; n];
    for i in 0..n {
        let ai = a.column(i);
        mu_star[i] = ai.dot(&state.m);
        let var = os - ai.norm_squared() + t.column(i).norm_squared();
        sd_star[i] = var.max(f64::MIN_POSITIVE).sqrt();
    }

    // MC expected log-likelihood and its derivatives wrt (mu*, sd*)
    let mut ell = 0.0;
    let mut d_mu = vec![0.0; n];
    let mut d_sd = vec![0.0; n];
    for i in 0..n {
        let y = f64::from(ys[i]);
        let mut acc = 0.0;
        let mut gm = 0.0;
        let mut gs = 0.0;
        for s in 0..n_mc {
            let e = eps[(i, s)];
            let f = mu_star[i] + e * sd_star[i];
            acc += -bce_with_logit(f, ys[i]);
            let resid = y - sigmoid(f);
            gm += resid;
            gs += resid * e;
        }
        ell += acc / n_mc as f64;
        d_mu[i] = gm / n_mc as f64;
        d_sd[i] = gs / n_mc as f64;
    }

    // KL in whitened coordinates
    let c_fro2: f64 = c.iter().map(|v| v * v).sum();
    let logdet_s: f64 = 2.0 * state.c_logdiag.iter().sum::<f64>();
    let kl = 0.5 * (state.m.norm_squared() + c_fro2 - mm as f64 - logdet_s);
    let value = ell - kl;

    // d sigma*^2 = d sd / (2 sd)
    let d_var: Vec<f64> = (0..n).map(|i| d_sd[i] / (2.0 * sd_star[i])).collect();

    // gradient wrt m: sum_i d_mu[i] * a_i, minus KL part
    let mut g_m = DVector::zeros(mm);
    for i in 0..n {
        g_m.axpy(d_mu[i], &a.column(i).clone_owned(), 1.0);
    }
    g_m -= &state.m;

    // gradient wrt C: sum_i d_var[i] * 2 a_i t_i^T (lower), minus KL part
    let mut g_c = DMatrix::zeros(mm, mm);
    for i in 0..n {
        let ai = a.column(i);
        let ti = t.column(i);
        let coef = 2.0 * d_var[i];
        for r in 0..mm {
            for q in 0..mm {
                g_c[(r, q)] += coef * ai[r] * ti[q];
            }
        }
    }
    for r in 0..mm {
        g_c[(r, r)] -= c[(r, r)] - 1.0 / c[(r, r)];
        for q in 0..r {
            g_c[(r, q)] -= c[(r, q)];
        }
    }
    tril_mask(&mut g_c);

    // gradient wrt a_i: d_mu[i]*m + d_var[i]*(-2 a_i + 2 C t_i)
    let mut g_a = DMatrix::zeros(mm, n);
    let ct = &c * &t;
    for i in 0..n {
        for r in 0..mm {
            g_a[(r, i)] = d_mu[i] * state.m[r] + d_var[i] * (-2.0 * a[(r, i)] + 2.0 * ct[(r, i)]);
        }
    }

    // back through the triangular solve: Hbar = L^-T g_a is the gradient wrt
    // kux; Lbar accumulates -Hbar A^T
    let hbar = l
        .transpose()
        .solve_upper_triangular(&g_a)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let mut lbar = -(&hbar * a.transpose());
    tril_mask(&mut lbar);

    let mut g_log_os = 0.0;
    let mut g_log_ls = 0.0;
    let mut g_z = DMatrix::zeros(mm, xs.ncols());

    // cross-kernel chain rule
    for j in 0..mm {
        for i in 0..n {
            let coef = hbar[(j, i)] * kux[(j, i)];
            g_log_os += coef;
            g_log_ls += coef * sq_ji[(j, i)] / ls2;
            for dd in 0..xs.ncols() {
                g_z[(j, dd)] += coef * (xs[(i, dd)] - state.z[(j, dd)]) / ls2;
            }
        }
    }

    // k(z*, z*) = os term of every sigma*^2
    g_log_os += d_var.iter().sum::<f64>() * os;

    // K_uu chain rule through the factorization
    let kbar = cholesky_backward(&l, &lbar);
    for p in 0..mm {
        for q in 0..mm {
            let kpq = if p == q { os } else { kuu[(p, q)] };
            let coef = kbar[(p, q)] * kpq;
            g_log_os += coef;
            if p != q {
                let sq = (state.z.row(p) - state.z.row(q)).norm_squared();
                g_log_ls += coef * sq / ls2;
                // each entry depends on both its row and column points
                for dd in 0..xs.ncols() {
                    let diff = (state.z[(q, dd)] - state.z[(p, dd)]) / ls2;
                    g_z[(p, dd)] += coef * diff;
                    g_z[(q, dd)] -= coef * diff;
                }
            }
        }
    }

    Ok((
        value,
        Gradient {
            log_os: g_log_os,
            log_ls: g_log_ls,
            z: g_z,
            m: g_m,
            c: g_c,
        },
    ))
}

fn pack_gradient(state: &WhitenedState, g: &Gradient) -> Vec<f64> {
    let mm = state.m.len();
    let mut out = Vec::with_capacity(state.n_params());
    out.push(g.log_os);
    out.push(g.log_ls);
    for r in 0..g.z.nrows() {
        for c in 0..g.z.ncols() {
            out.push(g.z[(r, c)]);
        }
    }
    out.extend(g.m.iter());
    for r in 0..mm {
        for c in 0..r {
            out.push(g.c[(r, c)]);
        }
    }
    // diagonal stored as log: chain rule through exp
    for i in 0..mm {
        out.push(g.c[(i, i)] * state.c_logdiag[i].exp());
    }
    out
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Ascent step along `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

/// Fit a sparse GP by gradient ascent on the ELBO over the kernel
/// hyperparameters, the inducing locations, and the (whitened) variational
/// parameters, with reparameterized MC gradients for the likelihood term.
///
/// Inducing points are initialized as `m_per_class` random samples from each
/// class; the length scale starts at the median pairwise inducing distance.
/// With `elbo_steps = 0` the initialized prior state is returned unchanged.
/// Deterministic per seed.
pub fn fit_gp(data: &EmbeddingDataset, cfg: &GpFitConfig) -> Result<SparseGp> {
    cfg.validate()?;
    data.require_both_classes()?;
    let [n0, n1] = data.class_counts();
    if cfg.m_per_class > n0 || cfg.m_per_class > n1 {
        return Err(Error::config(format!(
            "m_per_class {} exceeds the smaller class count {}",
            cfg.m_per_class,
            n0.min(n1)
        )));
    }

    let mut gen = rng::seeded(cfg.seed);
    let d = data.dim();
    let mm = 2 * cfg.m_per_class;

    // inducing init: random subsample per class
    let mut z = DMatrix::zeros(mm, d);
    let mut row = 0;
    for class in [0u8, 1u8] {
        let idx: Vec<usize> = data
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == class)
            .map(|(i, _)| i)
            .collect();
        let chosen = rand::seq::index::sample(&mut gen, idx.len(), cfg.m_per_class);
        for k in chosen.iter() {
            let emb = &data.samples()[idx[k]].embedding;
            for (c, &v) in emb.iter().enumerate() {
                z[(row, c)] = v;
            }
            row += 1;
        }
    }

    // length-scale init: median pairwise inducing distance
    let mut dists = Vec::with_capacity(mm * (mm - 1) / 2);
    for r in 0..mm {
        for c in 0..r {
            dists.push((z.row(r) - z.row(c)).norm());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = dists.get(dists.len() / 2).copied().unwrap_or(1.0);
    let ls0 = if median > 1e-12 { median } else { 1.0 };

    let mut state = WhitenedState {
        log_os: 0.0,
        log_ls: ls0.ln(),
        z,
        m: DVector::zeros(mm),
        c_strict: DMatrix::zeros(mm, mm),
        c_logdiag: DVector::zeros(mm),
    };

    if cfg.elbo_steps > 0 {
        let n = data.len();
        let xs = DMatrix::from_fn(n, d, |r, c| data.samples()[r].embedding[c]);
        let ys: Vec<u8> = data.samples().iter().map(|s| s.label).collect();
        let mut adam = Adam::new(state.n_params());
        let mut params = state.pack();
        for _ in 0..cfg.elbo_steps {
            let eps = DMatrix::from_fn(n, cfg.mc_elbo_samples, |_, _| {
                gen.sample::<f64, _>(StandardNormal)
            });
            state.unpack(&params);
            let (_, grad) = elbo_and_grad(&state, &xs, &ys, &eps, DEFAULT_JITTER)?;
            let flat_grad = pack_gradient(&state, &grad);
            adam.step(&mut params, &flat_grad, cfg.learning_rate);
        }
        state.unpack(&params);
    }

    // unwhiten: mu = L m, F = L C
    let kernel = RbfKernel::from_logs(state.log_os, state.log_ls);
    let kuu = kernel_matrix(&kernel, &state.z);
    let (chol, used) = cholesky_with_jitter(&kuu, DEFAULT_JITTER, MAX_JITTER)?;
    let l = chol.l();
    let mu = &l * &state.m;
    let mut factor = &l * state.c_matrix();
    tril_mask(&mut factor);
    SparseGp::new(state.z, mu, factor, kernel, used)
}
