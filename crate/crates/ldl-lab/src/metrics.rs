//! Confusion statistics, the attack-success-rate family, and nonlinear
//! least-squares fitting of the `h(sigma^2)` scaling curves.
//!
//! The analytical model ties the measured success of a membership attack
//! under smoothing to the undefended true/false positive rates:
//! `ASR = 0.5 + (1 - h(sigma^2)) * (TPR - FPR) / 2`, where `h` is a
//! monotone scaling function that is 0 at zero noise and approaches 1 as
//! the noise grows. Two families are supported: an exponential saturation
//! `h1 = 1 - exp(-alpha * sigma^2)` and a logistic
//! `h2 = L / (1 + exp(-beta * (sigma^2 - c_h)))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Membership-verdict confusion counts: `tp`/`fn` over the member pool,
/// `tn`/`fp` over the nonmember pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionStats {
    pub true_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    pub false_positives: u64,
}

/// TPR/TNR/FPR/FNR of a membership attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: f64,
    pub tnr: f64,
    pub fpr: f64,
    pub fnr: f64,
}

/// Correct-classification rates per pool: `TPR = tp/(tp+fn)`,
/// `TNR = tn/(tn+fp)`, with `FPR = 1-TNR` and `FNR = 1-TPR`.
pub fn rates(stats: &ConfusionStats) -> Result<Rates> {
    let members = stats.true_positives + stats.false_negatives;
    let nonmembers = stats.true_negatives + stats.false_positives;
    if members == 0 || nonmembers == 0 {
        return Err(Error::invalid(
            "rates need nonempty member and nonmember populations",
        ));
    }
    let tpr = stats.true_positives as f64 / members as f64;
    let tnr = stats.true_negatives as f64 / nonmembers as f64;
    Ok(Rates {
        tpr,
        tnr,
        fpr: 1.0 - tnr,
        fnr: 1.0 - tpr,
    })
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(format!(
            "{name} must be in [0,1], got {value}"
        )));
    }
    Ok(())
}

/// Attack success rate: the mean of TPR and TNR.
pub fn asr(tpr: f64, tnr: f64) -> Result<f64> {
    check_rate("tpr", tpr)?;
    check_rate("tnr", tnr)?;
    Ok((tpr + tnr) / 2.0)
}

/// Success rate of the gap attack:
/// `0.5 + (Acc_mem - Acc_nonmem) / 2`, equivalently `0.5 + (TPR - FPR) / 2`.
pub fn asr_gap(acc_member: f64, acc_nonmember: f64) -> Result<f64> {
    check_rate("acc_member", acc_member)?;
    check_rate("acc_nonmember", acc_nonmember)?;
    Ok(0.5 + (acc_member - acc_nonmember) / 2.0)
}

/// A parameterized `h(sigma^2)` scaling curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum HCurve {
    /// `1 - exp(-alpha * sigma^2)`.
    H1 { alpha: f64 },
    /// `L / (1 + exp(-beta * (sigma^2 - c_h)))`; `c_h` is the logistic
    /// center (renamed so it cannot be confused with a class count).
    H2 { big_l: f64, beta: f64, c_h: f64 },
}

impl HCurve {
    pub fn h1(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(HCurve::H1 { alpha })
    }

    pub fn h2(big_l: f64, beta: f64, c_h: f64) -> Result<Self> {
        for (name, v) in [("L", big_l), ("beta", beta), ("c_h", c_h)] {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(HCurve::H2 { big_l, beta, c_h })
    }

    /// Reference parameter set for the exponential family, used as a
    /// default in demos and sanity checks.
    pub fn reference_h1() -> Self {
        HCurve::H1 { alpha: 4.88 }
    }

    /// Reference parameter set for the logistic family. Note its raw value
    /// exceeds 1 for large `sigma^2` (limit 1.34) and is nonzero at 0;
    /// [`h_eval`] clamps the value into `[0,1]`.
    pub fn reference_h2() -> Self {
        HCurve::H2 {
            big_l: 1.34,
            beta: 12.93,
            c_h: 0.1,
        }
    }

    fn raw(&self, sigma2: f64) -> f64 {
        match *self {
            HCurve::H1 { alpha } => 1.0 - (-alpha * sigma2).exp(),
            HCurve::H2 { big_l, beta, c_h } => big_l / (1.0 + (-beta * (sigma2 - c_h)).exp()),
        }
    }
}

/// Evaluate a curve and clamp into `[0,1]`.
pub fn h_eval(curve: &HCurve, sigma2: f64) -> Result<f64> {
    if !(sigma2 >= 0.0) {
        return Err(Error::invalid(format!("sigma2 must be >= 0, got {sigma2}")));
    }
    Ok(curve.raw(sigma2).clamp(0.0, 1.0))
}

/// The smoothed-defense success model
/// `0.5 + (1 - h(sigma2)) * (tpr - fpr) / 2`.
pub fn asr_ldl(tpr: f64, fpr: f64, curve: &HCurve, sigma2: f64) -> Result<f64> {
    check_rate("tpr", tpr)?;
    check_rate("fpr", fpr)?;
    let h = h_eval(curve, sigma2)?;
    Ok(0.5 + (1.0 - h) * (tpr - fpr) / 2.0)
}

/// Which `h` family to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HFamily {
    H1,
    H2,
}

/// One measured point for curve fitting: the smoothing variance, the
/// measured attack success rate under it, and the undefended TPR/FPR pair
/// that anchors the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitObservation {
    pub sigma2: f64,
    pub asr: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Result of [`fit_h`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HFit {
    pub curve: HCurve,
    /// Euclidean norm of the residual vector at the fitted parameters.
    pub residual_norm: f64,
    /// Set when `tpr == fpr` for every observation; the curve term then
    /// vanishes from the model and the parameters are arbitrary.
    pub degenerate: bool,
}

const FIT_MAX_ITERS: usize = 200;
const PARAM_FLOOR: f64 = 1e-9;

/// Fit an `h` curve to measured ASR-versus-variance data by damped
/// iterative least squares from 8 deterministic starting points,
/// returning the best fit (lowest residual; ties go to the lowest start
/// index). Deterministic. Needs at least 3 observations for `h1` and 5
/// for `h2`, with distinct `sigma2` values.
pub fn fit_h(observations: &[FitObservation], family: HFamily) -> Result<HFit> {
    let min_obs = match family {
        HFamily::H1 => 3,
        HFamily::H2 => 5,
    };
    if observations.len() < min_obs {
        return Err(Error::invalid(format!(
            "{family:?} needs at least {min_obs} observations, got {}",
            observations.len()
        )));
    }
    for obs in observations {
        if !(obs.sigma2 >= 0.0) {
            return Err(Error::invalid("observation sigma2 must be >= 0"));
        }
        check_rate("tpr", obs.tpr)?;
        check_rate("fpr", obs.fpr)?;
    }
    for (i, a) in observations.iter().enumerate() {
        for b in &observations[i + 1..] {
            if a.sigma2 == b.sigma2 {
                return Err(Error::invalid(format!(
                    "sigma2 values must be distinct (duplicate {})",
                    a.sigma2
                )));
            }
        }
    }

    let degenerate = observations.iter().all(|o| o.tpr == o.fpr);
    let starts: Vec<Vec<f64>> = match family {
        HFamily::H1 => [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
            .iter()
            .map(|&a| vec![a])
            .collect(),
        HFamily::H2 => {
            let mut s = Vec::new();
            for &l in &[0.8, 1.3] {
                for &beta in &[5.0, 15.0] {
                    for &c in &[0.05, 0.15] {
                        s.push(vec![l, beta, c]);
                    }
                }
            }
            s
        }
    };

    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for start in &starts {
        let (params, ssr, converged) = levenberg_marquardt(observations, family, start.clone());
        let replace = match &best {
            None => true,
            Some((best_ssr, _, _)) => ssr < *best_ssr,
        };
        if replace {
            best = Some((ssr, params, converged));
        }
    }
    let (ssr, params, converged) = best.expect("at least one start");
    let residual_norm = ssr.sqrt();
    if !converged && !degenerate {
        return Err(Error::FitDidNotConverge {
            best_residual: residual_norm,
        });
    }
    let curve = match family {
        HFamily::H1 => HCurve::H1 { alpha: params[0] },
        HFamily::H2 => HCurve::H2 {
            big_l: params[0],
            beta: params[1],
            c_h: params[2],
        },
    };
    Ok(HFit {
        curve,
        residual_norm,
        degenerate,
    })
}

fn curve_of(family: HFamily, params: &[f64]) -> HCurve {
    match family {
        HFamily::H1 => HCurve::H1 { alpha: params[0] },
        HFamily::H2 => HCurve::H2 {
            big_l: params[0],
            beta: params[1],
            c_h: params[2],
        },
    }
}

fn residuals(observations: &[FitObservation], family: HFamily, params: &[f64]) -> Vec<f64> {
    let curve = curve_of(family, params);
    observations
        .iter()
        .map(|o| {
            let h = curve.raw(o.sigma2).clamp(0.0, 1.0);
            0.5 + (1.0 - h) * (o.tpr - o.fpr) / 2.0 - o.asr
        })
        .collect()
}

fn ssr_of(res: &[f64]) -> f64 {
    res.iter().map(|r| r * r).sum()
}

/// Jacobian row of the model prediction w.r.t. the parameters; zero where
/// the clamp is active.
fn jacobian_row(family: HFamily, params: &[f64], obs: &FitObservation) -> Vec<f64> {
    let curve = curve_of(family, params);
    let raw = curve.raw(obs.sigma2);
    let scale = -(obs.tpr - obs.fpr) / 2.0;
    if !(0.0..=1.0).contains(&raw) {
        return vec![0.0; params.len()];
    }
    match family {
        HFamily::H1 => {
            let alpha = params[0];
            vec![scale * obs.sigma2 * (-alpha * obs.sigma2).exp()]
        }
        HFamily::H2 => {
            let (big_l, beta, c_h) = (params[0], params[1], params[2]);
            let s = 1.0 / (1.0 + (-beta * (obs.sigma2 - c_h)).exp());
            let ds = s * (1.0 - s);
            vec![
                scale * s,
                scale * big_l * ds * (obs.sigma2 - c_h),
                scale * big_l * ds * (-beta),
            ]
        }
    }
}

/// Damped Gauss-Newton on the clamped model. Steps that increase the
/// residual are rejected and retried with a larger damping factor.
/// Returns `(params, ssr, converged)`.
fn levenberg_marquardt(
    observations: &[FitObservation],
    family: HFamily,
    mut params: Vec<f64>,
) -> (Vec<f64>, f64, bool) {
    let n = params.len();
    let mut lambda = 1e-3;
    let mut ssr = ssr_of(&residuals(observations, family, &params));
    let mut converged = false;

    for _ in 0..FIT_MAX_ITERS {
        // Assemble J^T J and J^T r.
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        let res = residuals(observations, family, &params);
        for (obs, r) in observations.iter().zip(&res) {
            let row = jacobian_row(family, &params, obs);
            for a in 0..n {
                jtr[a] += row[a] * r;
                for b in 0..n {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let grad_norm = jtr.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < 1e-12 {
            converged = true;
            break;
        }

        let mut improved = false;
        for _ in 0..20 {
            let mut damped = jtj.clone();
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += lambda * (jtj[a][a].max(1e-12));
            }
            let rhs: Vec<f64> = jtr.iter().map(|g| -g).collect();
            let Some(step) = solve_small(damped, rhs) else {
                lambda *= 4.0;
                continue;
            };
            let candidate: Vec<f64> = params
                .iter()
                .zip(&step)
                .map(|(p, s)| (p + s).max(PARAM_FLOOR))
                .collect();
            let candidate_ssr = ssr_of(&residuals(observations, family, &candidate));
            if candidate_ssr < ssr {
                let rel_drop = (ssr - candidate_ssr) / ssr.max(1e-30);
                params = candidate;
                ssr = candidate_ssr;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel_drop < 1e-12 || ssr < 1e-28 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // No damping level improves the residual: local minimum.
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    (params, ssr, converged)
}

/// Gaussian elimination with partial pivoting for the tiny (<= 3x3)
/// normal-equation systems of the fitter. Returns `None` when singular.
fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in col + 1..n {
            sum -= a[col][k] * x[k];
        }
        x[col] = sum / a[col][col];
    }
    Some(x)
}
