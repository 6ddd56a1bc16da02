//! Linear-time Gaussian log-likelihood for sums of SHO terms.
//!
//! Each SHO term contributes two columns to the semiseparable representation
//! `K = diag(A) + tril(U Vᵀ) + triu(V Uᵀ)`, factorized as `K = L diag(D) Lᵀ` with
//! `L = I + tril(U Wᵀ)`. The gradient is a hand-written reverse sweep through
//! the same recursion.

use rand::Rng;
use rand_distr::StandardNormal;

use super::ShoModel;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

struct Terms {
    /// Per term (a, b, c, d).
    coef: Vec<[f64; 4]>,
    jitter_var: f64,
}

impl Terms {
    fn new(model: &ShoModel) -> Self {
        Terms {
            coef: model.components.iter().map(|c| c.celerite_coefficients()).collect(),
            jitter_var: model.jitter_variance(),
        }
    }

    fn diag(&self) -> f64 {
        self.jitter_var + self.coef.iter().map(|c| c[0]).sum::<f64>()
    }
}

fn check_inputs(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::InvalidGpInput("times and values differ in length".into()));
    }
    if times.len() < 8 {
        return Err(Error::InvalidGpInput(format!("need N >= 8, got {}", times.len())));
    }
    if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGpInput(format!(
            "times not strictly increasing at index {}",
            i + 1
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidGpInput("non-finite value".into()));
    }
    Ok(())
}

/// Forward sweep state retained for the reverse pass. `P = 2J` columns.
struct Factor<const P: usize> {
    /// (cos d_j t, sin d_j t) interleaved per term.
    v: Vec<[f64; P]>,
    /// exp(-c_j Δt) repeated for both columns of a term (row 0 unused).
    phi: Vec<[f64; P]>,
    u: Vec<[f64; P]>,
    d: Vec<f64>,
    w: Vec<[f64; P]>,
    z: Vec<f64>,
    /// Pre-scaling S accumulator (row 0 unused); empty unless kept.
    t_mat: Vec<[[f64; P]; P]>,
    /// Pre-scaling f accumulator (row 0 unused); empty unless kept.
    g: Vec<[f64; P]>,
    loglike: f64,
}

fn dot<const P: usize>(a: &[f64; P], b: &[f64; P]) -> f64 {
    let mut s = 0.0;
    for r in 0..P {
        s += a[r] * b[r];
    }
    s
}

fn factorize<const P: usize>(terms: &Terms, times: &[f64], values: &[f64], keep: bool) -> Result<Factor<P>> {
    debug_assert_eq!(2 * terms.coef.len(), P);
    let n = times.len();
    let t0 = times[0];
    let diag = terms.diag();

    let mut v = vec![[0.0; P]; n];
    let mut phi = vec![[0.0; P]; n];
    let mut u = vec![[0.0; P]; n];
    for i in 0..n {
        let t = times[i] - t0;
        let dt = if i > 0 { times[i] - times[i - 1] } else { 0.0 };
        for (k, &[a, b, c, d]) in terms.coef.iter().enumerate() {
            let (s, co) = (d * t).sin_cos();
            v[i][2 * k] = co;
            v[i][2 * k + 1] = s;
            let e = (-c * dt).exp();
            phi[i][2 * k] = e;
            phi[i][2 * k + 1] = e;
            u[i][2 * k] = a * co + b * s;
            u[i][2 * k + 1] = a * s - b * co;
        }
    }

    let mut d_vec = vec![0.0; n];
    let mut w = vec![[0.0; P]; n];
    let mut z = vec![0.0; n];
    let mut t_mat = Vec::with_capacity(if keep { n } else { 0 });
    let mut g_all = Vec::with_capacity(if keep { n } else { 0 });
    if keep {
        t_mat.push([[0.0; P]; P]);
        g_all.push([0.0; P]);
    }

    let mut s_mat = [[0.0; P]; P];
    let mut f = [0.0; P];
    let mut su = [0.0; P];
    let mut loglike = -0.5 * n as f64 * LN_2PI;

    for i in 0..n {
        if i > 0 {
            let dprev = d_vec[i - 1];
            let wprev = w[i - 1];
            let zprev = z[i - 1];
            let ph = &phi[i];
            let ui = &u[i];
            let mut tm = [[0.0; P]; P];
            su = [0.0; P];
            for c in 0..P {
                let scale_c = dprev * wprev[c];
                let (phc, uc) = (ph[c], ui[c]);
                for r in 0..P {
                    let tv = s_mat[c][r] + scale_c * wprev[r];
                    tm[c][r] = tv;
                    let s = phc * ph[r] * tv;
                    s_mat[c][r] = s;
                    su[r] += s * uc;
                }
            }
            let mut gv = [0.0; P];
            for r in 0..P {
                gv[r] = f[r] + wprev[r] * zprev;
                f[r] = ph[r] * gv[r];
            }
            if keep {
                t_mat.push(tm);
                g_all.push(gv);
            }
        }
        let ui = &u[i];
        let di = diag - dot(ui, &su);
        if !(di > 0.0) || !di.is_finite() {
            return Err(Error::FactorizationFailure(i));
        }
        d_vec[i] = di;
        for r in 0..P {
            w[i][r] = (v[i][r] - su[r]) / di;
        }
        let zi = values[i] - dot(ui, &f);
        z[i] = zi;
        loglike -= 0.5 * (zi * zi / di + di.ln());
    }
    if !loglike.is_finite() {
        return Err(Error::FactorizationFailure(n - 1));
    }
    Ok(Factor {
        v,
        phi,
        u,
        d: d_vec,
        w,
        z,
        t_mat,
        g: g_all,
        loglike,
    })
}

macro_rules! by_width {
    ($j:expr, $func:ident, $($arg:expr),*) => {
        match $j {
            1 => $func::<2>($($arg),*),
            2 => $func::<4>($($arg),*),
            3 => $func::<6>($($arg),*),
            4 => $func::<8>($($arg),*),
            5 => $func::<10>($($arg),*),
            j => Err(Error::InvalidGpInput(format!("unsupported term count {j}"))),
        }
    };
}

fn loglike_only<const P: usize>(terms: &Terms, times: &[f64], values: &[f64]) -> Result<f64> {
    Ok(factorize::<P>(terms, times, values, false)?.loglike)
}

fn loglike_and_coef_grad<const P: usize>(terms: &Terms, times: &[f64], values: &[f64]) -> Result<(f64, CoefGrad)> {
    let fac = factorize::<P>(terms, times, values, true)?;
    Ok((fac.loglike, reverse_sweep(terms, &fac, times)))
}

/// Gaussian log-likelihood of `values` at strictly increasing `times` under the
/// model covariance plus `jitter²·I`, in O(N·J²).
pub fn gp_loglike(model: &ShoModel, times: &[f64], values: &[f64]) -> Result<f64> {
    model.validate()?;
    check_inputs(times, values)?;
    let terms = Terms::new(model);
    by_width!(terms.coef.len(), loglike_only, &terms, times, values)
}

/// Log-likelihood and its gradient with respect to the flattened
/// log-parameters (see [`ShoModel::to_params`]).
pub fn gp_loglike_grad(model: &ShoModel, times: &[f64], values: &[f64]) -> Result<(f64, Vec<f64>)> {
    model.validate()?;
    check_inputs(times, values)?;
    let terms = Terms::new(model);
    let (loglike, coef_grad) = by_width!(terms.coef.len(), loglike_and_coef_grad, &terms, times, values)?;

    // Chain (a, b, c, d, σ²) to (log S0, log Q, log w0, log σ).
    let mut grad = Vec::with_capacity(model.n_params());
    for (comp, (&[a, b, c, d], bar)) in model.components.iter().zip(terms.coef.iter().zip(&coef_grad.terms)) {
        let q = comp.q();
        let f2 = (4.0 * q * q - 1.0).max(1e-12);
        let [ba, bb, bc, bd] = *bar;
        let common = ba * a + bb * b;
        let d_log_s0 = common;
        let d_log_q = ba * a - bb * b / f2 - bc * c + bd * d / f2;
        let d_log_w0 = common + bc * c + bd * d;
        grad.extend([d_log_s0, d_log_q, d_log_w0]);
    }
    grad.push(coef_grad.jitter_var * 2.0 * terms.jitter_var);
    Ok((loglike, grad))
}

struct CoefGrad {
    terms: Vec<[f64; 4]>,
    jitter_var: f64,
}

/// Reverse-mode sweep. The adjoint of the symmetric S accumulator is kept
/// symmetrized, which leaves every contraction against S or T unchanged.
fn reverse_sweep<const P: usize>(terms: &Terms, fac: &Factor<P>, times: &[f64]) -> CoefGrad {
    let n = times.len();
    let t0 = times[0];

    let mut bar_coef = vec![[0.0f64; 4]; terms.coef.len()];
    let mut bar_diag = 0.0;

    // Adjoints flowing from step i+1 into step i.
    let mut bar_s_next = [[0.0; P]; P];
    let mut bar_f_acc = [0.0; P];
    let mut bar_w_acc = [0.0; P];
    let mut bar_d_acc = 0.0;
    let mut bar_z_acc = 0.0;

    for i in (0..n).rev() {
        let ph = &fac.phi[i];
        let ui = &fac.u[i];
        let wi = &fac.w[i];
        let di = fac.d[i];
        let zi = fac.z[i];
        let mut f = [0.0; P];
        if i > 0 {
            for r in 0..P {
                f[r] = ph[r] * fac.g[i][r];
            }
        }

        let bar_z = bar_z_acc - zi / di;
        let mut bar_d = bar_d_acc + 0.5 * zi * zi / (di * di) - 0.5 / di;

        // z = y - U·f
        let mut bar_u = [0.0; P];
        let mut bar_f = bar_f_acc;
        for r in 0..P {
            bar_u[r] = -bar_z * f[r];
            bar_f[r] -= bar_z * ui[r];
        }

        // w = (V - S U) / D
        let mut bar_r = [0.0; P];
        for r in 0..P {
            bar_r[r] = bar_w_acc[r] / di;
        }
        bar_d -= dot(&bar_w_acc, wi) / di;
        let bar_v = bar_r;

        // D = A - Uᵀ S U, with S = Φ T Φ rebuilt on the fly.
        if i > 0 {
            let tm = &fac.t_mat[i];
            let mut su = [0.0; P];
            let mut sr = [0.0; P];
            for c in 0..P {
                let (phc, uc, rc) = (ph[c], ui[c], bar_r[c]);
                for r in 0..P {
                    let s = phc * ph[r] * tm[c][r];
                    su[r] += s * uc;
                    sr[r] += s * rc;
                }
            }
            for r in 0..P {
                bar_u[r] -= sr[r] + 2.0 * bar_d * su[r];
            }
        }
        let bar_a = bar_d;
        let mut coeff = [0.0; P];
        for r in 0..P {
            coeff[r] = 0.5 * (bar_r[r] + bar_d * ui[r]);
        }

        // U, V, A to term coefficients.
        let t = times[i] - t0;
        bar_diag += bar_a;
        let vi = &fac.v[i];
        for (k, &[a, b, _, _]) in terms.coef.iter().enumerate() {
            let co = vi[2 * k];
            let si = vi[2 * k + 1];
            let (bu0, bu1) = (bar_u[2 * k], bar_u[2 * k + 1]);
            let bc = &mut bar_coef[k];
            bc[0] += bu0 * co + bu1 * si + bar_a;
            bc[1] += bu0 * si - bu1 * co;
            bc[3] +=
                t * (bu0 * (b * co - a * si) + bu1 * (a * co + b * si) - bar_v[2 * k] * si + bar_v[2 * k + 1] * co);
        }

        if i == 0 {
            break;
        }
        // S̄_i = S̄_next - sym(coeff ⊗ u); then through S_i = Φ T_i Φ into T̄_i,
        // φ̄, and T_i = S_{i-1} + D_{i-1} w wᵀ.
        let tm = &fac.t_mat[i];
        let g = &fac.g[i];
        let wprev = &fac.w[i - 1];
        let mut bar_phi = [0.0; P];
        let mut row = [0.0; P];
        for c in 0..P {
            let (phc, cc, uc, wc) = (ph[c], coeff[c], ui[c], wprev[c]);
            for r in 0..P {
                let bs = bar_s_next[c][r] - (cc * ui[r] + coeff[r] * uc);
                let bt = phc * ph[r] * bs;
                bar_s_next[c][r] = bt;
                bar_phi[r] += 2.0 * bs * phc * tm[c][r];
                row[r] += bt * wc;
            }
        }
        let mut bar_g = [0.0; P];
        for r in 0..P {
            bar_phi[r] += g[r] * bar_f[r];
            bar_g[r] = ph[r] * bar_f[r];
        }
        let dt = times[i] - times[i - 1];
        for (k, bc) in bar_coef.iter_mut().enumerate() {
            bc[2] -= dt * ph[2 * k] * (bar_phi[2 * k] + bar_phi[2 * k + 1]);
        }

        let dprev = fac.d[i - 1];
        let zprev = fac.z[i - 1];
        bar_d_acc = dot(wprev, &row);
        bar_z_acc = dot(&bar_g, wprev);
        for r in 0..P {
            bar_w_acc[r] = 2.0 * dprev * row[r] + bar_g[r] * zprev;
        }
        bar_f_acc = bar_g;
    }

    CoefGrad {
        terms: bar_coef,
        jitter_var: bar_diag,
    }
}

fn sample_impl<const P: usize, R: Rng + ?Sized>(terms: &Terms, times: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let n = times.len();
    // Factorize with zero data; only D, W, U and φ are used.
    let zeros = vec![0.0; n];
    let fac = factorize::<P>(terms, times, &zeros, false)?;
    let mut f = [0.0; P];
    let mut out = Vec::with_capacity(n);
    let mut prev_x = 0.0;
    for i in 0..n {
        if i > 0 {
            let wprev = &fac.w[i - 1];
            for r in 0..P {
                f[r] = fac.phi[i][r] * (f[r] + wprev[r] * prev_x);
            }
        }
        let eps: f64 = rng.sample(StandardNormal);
        let x = fac.d[i].sqrt() * eps;
        out.push(x + dot(&fac.u[i], &f));
        prev_x = x;
    }
    Ok(out)
}

/// Exact draw from the model's Gaussian process at `times` (jitter included),
/// computed as `L·sqrt(D)·ε` from the linear-time factorization.
pub fn sample_gp<R: Rng + ?Sized>(model: &ShoModel, times: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    model.validate()?;
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let terms = Terms::new(model);
    match terms.coef.len() {
        1 => sample_impl::<2, R>(&terms, times, rng),
        2 => sample_impl::<4, R>(&terms, times, rng),
        3 => sample_impl::<6, R>(&terms, times, rng),
        4 => sample_impl::<8, R>(&terms, times, rng),
        5 => sample_impl::<10, R>(&terms, times, rng),
        j => Err(Error::InvalidGpInput(format!("unsupported term count {j}"))),
    }
}
