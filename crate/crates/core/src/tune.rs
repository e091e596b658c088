//! Sequential model-based hyper-parameter search.
//!
//! A Gaussian-process surrogate (anisotropic Matérn 5/2, hyper-parameters by
//! maximized marginal likelihood) models the objective over a unit-cube
//! encoding of the search space; expected improvement picks each next trial.
//! Everything minimizes, so callers tuning AUC pass the negated value.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{seeding, Result, SimvecError};

/// One coordinate of the search space.
#[derive(Clone, Debug, PartialEq)]
pub enum DimKind {
    Real { lo: f64, hi: f64 },
    /// Positive range scaled in the log domain.
    LogReal { lo: f64, hi: f64 },
    /// Optimized as a real, rounded on decode.
    Integer { lo: i64, hi: i64 },
    /// One-hot encoded.
    Categorical(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dim {
    pub name: String,
    pub kind: DimKind,
}

impl Dim {
    pub fn real(name: &str, lo: f64, hi: f64) -> Dim {
        Dim { name: name.into(), kind: DimKind::Real { lo, hi } }
    }

    pub fn log_real(name: &str, lo: f64, hi: f64) -> Dim {
        Dim { name: name.into(), kind: DimKind::LogReal { lo, hi } }
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Dim {
        Dim { name: name.into(), kind: DimKind::Integer { lo, hi } }
    }

    pub fn categorical(name: &str, options: &[&str]) -> Dim {
        Dim {
            name: name.into(),
            kind: DimKind::Categorical(options.iter().map(|o| o.to_string()).collect()),
        }
    }

    fn encoded_len(&self) -> usize {
        match &self.kind {
            DimKind::Categorical(opts) => opts.len(),
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub dims: Vec<Dim>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dim>) -> Result<SearchSpace> {
        if dims.is_empty() {
            return Err(SimvecError::Param("search space has no dimensions".into()));
        }
        for d in &dims {
            match &d.kind {
                DimKind::Real { lo, hi } => {
                    if !(lo < hi) {
                        return Err(SimvecError::Param(format!(
                            "dimension {}: bounds must satisfy lo < hi",
                            d.name
                        )));
                    }
                }
                DimKind::LogReal { lo, hi } => {
                    if !(*lo > 0.0 && lo < hi) {
                        return Err(SimvecError::Param(format!(
                            "dimension {}: log bounds must satisfy 0 < lo < hi",
                            d.name
                        )));
                    }
                }
                DimKind::Integer { lo, hi } => {
                    if lo >= hi {
                        return Err(SimvecError::Param(format!(
                            "dimension {}: integer bounds must satisfy lo < hi",
                            d.name
                        )));
                    }
                }
                DimKind::Categorical(opts) => {
                    if opts.is_empty() {
                        return Err(SimvecError::Param(format!(
                            "dimension {}: empty category list",
                            d.name
                        )));
                    }
                }
            }
        }
        Ok(SearchSpace { dims })
    }

    /// Width of the unit-cube encoding.
    pub fn encoded_len(&self) -> usize {
        self.dims.iter().map(Dim::encoded_len).sum()
    }

    /// Embedding search space: mode flags, dimension, window, subsampling
    /// threshold (log scale), and epochs.
    pub fn d2v_default() -> SearchSpace {
        SearchSpace::new(vec![
            Dim::categorical("dm", &["0", "1"]),
            Dim::categorical("hs", &["0", "1"]),
            Dim::integer("size", 100, 600),
            Dim::integer("window", 1, 10),
            Dim::log_real("sample", 1e-7, 1e-3),
            Dim::integer("iter", 1, 10),
        ])
        .expect("static space is valid")
    }

    /// Topic-model search space: topic count, training chunk size, decay.
    pub fn lsi_default() -> SearchSpace {
        SearchSpace::new(vec![
            Dim::integer("num-topics", 50, 1000),
            Dim::integer("chunksize", 1000, 100_000),
            Dim::real("decay", 0.5, 1.0),
        ])
        .expect("static space is valid")
    }
}

/// A concrete value for one dimension.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamValue {
    Real(f64),
    Int(i64),
    Cat(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Real(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Cat(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Cat(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Cat(s) => write!(f, "{s}"),
        }
    }
}

/// A full assignment, ordered like the space's dims.
pub type Point = Vec<ParamValue>;

/// Map a point to the unit cube: min-max for reals, log-domain min-max for
/// log-reals, scaled integers, one-hot categoricals.
pub fn encode(point: &Point, space: &SearchSpace) -> Result<Vec<f64>> {
    if point.len() != space.dims.len() {
        return Err(SimvecError::Param(format!(
            "point has {} values for {} dimensions",
            point.len(),
            space.dims.len()
        )));
    }
    let mut z = Vec::with_capacity(space.encoded_len());
    for (dim, value) in space.dims.iter().zip(point) {
        match (&dim.kind, value) {
            (DimKind::Real { lo, hi }, ParamValue::Real(v)) => {
                if !(lo..=hi).contains(&v) {
                    return Err(SimvecError::Param(format!(
                        "{} = {v} outside [{lo}, {hi}]",
                        dim.name
                    )));
                }
                z.push((v - lo) / (hi - lo));
            }
            (DimKind::LogReal { lo, hi }, ParamValue::Real(v)) => {
                if !(lo..=hi).contains(&v) {
                    return Err(SimvecError::Param(format!(
                        "{} = {v} outside [{lo}, {hi}]",
                        dim.name
                    )));
                }
                z.push((v.ln() - lo.ln()) / (hi.ln() - lo.ln()));
            }
            (DimKind::Integer { lo, hi }, ParamValue::Int(v)) => {
                if !(lo..=hi).contains(&v) {
                    return Err(SimvecError::Param(format!(
                        "{} = {v} outside [{lo}, {hi}]",
                        dim.name
                    )));
                }
                z.push((v - lo) as f64 / (hi - lo) as f64);
            }
            (DimKind::Categorical(opts), ParamValue::Cat(s)) => {
                let idx = opts.iter().position(|o| o == s).ok_or_else(|| {
                    SimvecError::Param(format!("{} = {s:?} is not a known category", dim.name))
                })?;
                for i in 0..opts.len() {
                    z.push(if i == idx { 1.0 } else { 0.0 });
                }
            }
            (_, v) => {
                return Err(SimvecError::Param(format!(
                    "{}: value {v} does not match the dimension kind",
                    dim.name
                )));
            }
        }
    }
    Ok(z)
}

/// Map a unit-cube vector (clamped) back to a concrete point. Integers
/// round; categoricals take the arg-max slot.
pub fn decode(z: &[f64], space: &SearchSpace) -> Point {
    let mut point = Vec::with_capacity(space.dims.len());
    let mut i = 0;
    for dim in &space.dims {
        match &dim.kind {
            DimKind::Real { lo, hi } => {
                let u = z[i].clamp(0.0, 1.0);
                point.push(ParamValue::Real(lo + u * (hi - lo)));
                i += 1;
            }
            DimKind::LogReal { lo, hi } => {
                let u = z[i].clamp(0.0, 1.0);
                point.push(ParamValue::Real((lo.ln() + u * (hi.ln() - lo.ln())).exp()));
                i += 1;
            }
            DimKind::Integer { lo, hi } => {
                let u = z[i].clamp(0.0, 1.0);
                let v = lo + (u * (hi - lo) as f64).round() as i64;
                point.push(ParamValue::Int(v.clamp(*lo, *hi)));
                i += 1;
            }
            DimKind::Categorical(opts) => {
                let slots = &z[i..i + opts.len()];
                let best = slots
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite slots"))
                    .map(|(j, _)| j)
                    .unwrap_or(0);
                point.push(ParamValue::Cat(opts[best].clone()));
                i += opts.len();
            }
        }
    }
    point
}

/// Project a raw cube vector onto the realizable grid: decode then re-encode.
fn snap(z: &[f64], space: &SearchSpace) -> Vec<f64> {
    encode(&decode(z, space), space).expect("decoded points are in bounds")
}

/// One evaluated trial.
#[derive(Clone, Debug)]
pub struct Trial {
    pub x: Point,
    pub y: f64,
    /// True when the objective failed and `y` is the imputed penalty.
    pub failed: bool,
}

/// Ordered record of every evaluation.
#[derive(Clone, Debug, Default)]
pub struct TrialLog {
    pub trials: Vec<Trial>,
}

impl TrialLog {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Lowest-y trial, first on ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials.iter().min_by(|a, b| {
            a.y.partial_cmp(&b.y).expect("trial y values are finite")
        })
    }

    /// Prefix minima of y, one entry per trial.
    pub fn incumbent_curve(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trials
            .iter()
            .map(|t| {
                best = best.min(t.y);
                best
            })
            .collect()
    }
}

const JITTER: f64 = 1e-10;

/// Fitted Gaussian-process surrogate over the encoded cube.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    xs: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    length_scales: Vec<f64>,
    signal_var: f64,
    noise_var: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    degenerate: bool,
}

fn matern52(a: &[f64], b: &[f64], ls: &[f64], signal: f64) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| {
            let d = (x - y) / l;
            d * d
        })
        .sum();
    let r = r2.sqrt();
    let s5 = 5.0f64.sqrt() * r;
    signal * (1.0 + s5 + 5.0 * r2 / 3.0) * (-s5).exp()
}

fn kernel_matrix(xs: &[Vec<f64>], ls: &[f64], signal: f64, noise: f64) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = matern52(&xs[i], &xs[j], ls, signal);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += noise + JITTER;
    }
    k
}

/// Log marginal likelihood of standardized targets under the kernel, or
/// -inf when the covariance is not positive definite.
fn log_marginal(xs: &[Vec<f64>], y: &DVector<f64>, ls: &[f64], signal: f64, noise: f64) -> f64 {
    let n = xs.len();
    let k = kernel_matrix(xs, ls, signal, noise);
    let Some(chol) = Cholesky::new(k) else {
        return f64::NEG_INFINITY;
    };
    let alpha = chol.solve(y);
    let log_det: f64 = (0..n).map(|i| chol.l()[(i, i)].ln()).sum();
    -0.5 * y.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

/// Coordinate-wise pattern search maximizing `f` inside a box.
fn compass_search<F: FnMut(&[f64]) -> f64>(
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    mut step: f64,
    min_step: f64,
    max_evals: usize,
    mut f: F,
) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = f(&x);
    let mut evals = 1;
    while step > min_step && evals < max_evals {
        let mut improved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[i] = (cand[i] + sign * step).clamp(lo[i], hi[i]);
                if cand[i] == x[i] {
                    continue;
                }
                let fc = f(&cand);
                evals += 1;
                if fc > fx {
                    x = cand;
                    fx = fc;
                    improved = true;
                }
                if evals >= max_evals {
                    break;
                }
            }
            if evals >= max_evals {
                break;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Fit the surrogate on encoded points. Hyper-parameters (per-dimension
/// length scales, signal variance, noise variance) maximize the log marginal
/// likelihood via multi-start compass search in the log domain. A constant
/// objective yields a degenerate prior-only posterior.
pub fn fit_gp_encoded(xs: &[Vec<f64>], ys: &[f64], seed: u64) -> Result<GpPosterior> {
    if xs.len() < 2 {
        return Err(SimvecError::Param("GP fit needs at least 2 trials".into()));
    }
    if xs.len() != ys.len() {
        return Err(SimvecError::Param("GP fit: points and targets differ in length".into()));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(SimvecError::Param("GP fit: non-finite objective value".into()));
    }
    let d = xs[0].len();
    let n = ys.len();
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
    let y_std = var.sqrt();
    if y_std < 1e-12 {
        return Ok(GpPosterior {
            xs: xs.to_vec(),
            y_mean,
            y_std: 1.0,
            length_scales: vec![1.0; d],
            signal_var: 1.0,
            noise_var: JITTER,
            chol: None,
            alpha: DVector::zeros(n),
            degenerate: true,
        });
    }
    let y_standardized =
        DVector::from_iterator(n, ys.iter().map(|y| (y - y_mean) / y_std));

    // θ = (ln ℓ_1..d, ln σ_f², ln σ_n²)
    let theta_lo: Vec<f64> =
        std::iter::repeat(1e-3f64.ln()).take(d).chain([1e-6f64.ln(), 1e-10f64.ln()]).collect();
    let theta_hi: Vec<f64> =
        std::iter::repeat(1e3f64.ln()).take(d).chain([1e4f64.ln(), 1e-1f64.ln()]).collect();
    let mut lml = |theta: &[f64]| {
        let ls: Vec<f64> = theta[..d].iter().map(|t| t.exp()).collect();
        log_marginal(xs, &y_standardized, &ls, theta[d].exp(), theta[d + 1].exp())
    };

    let mut rng = seeding::stage_rng(seed, "gp-fit");
    let mut starts: Vec<Vec<f64>> = vec![
        std::iter::repeat(0.5f64.ln()).take(d).chain([0.0, 1e-6f64.ln()]).collect(),
        std::iter::repeat(0.1f64.ln()).take(d).chain([0.0, 1e-4f64.ln()]).collect(),
    ];
    for _ in 0..3 {
        let mut start: Vec<f64> =
            (0..d).map(|_| rng.random_range(0.02f64.ln()..2.0f64.ln())).collect();
        start.push(rng.random_range(-1.0..1.5));
        start.push(rng.random_range(-20.0..-4.0));
        starts.push(start);
    }
    let mut best_theta = starts[0].clone();
    let mut best_val = f64::NEG_INFINITY;
    for start in &starts {
        let (theta, val) =
            compass_search(start, &theta_lo, &theta_hi, 1.0, 1e-3, 250, &mut lml);
        if val > best_val {
            best_val = val;
            best_theta = theta;
        }
    }
    if best_val == f64::NEG_INFINITY {
        return Err(SimvecError::Eval("GP covariance never became positive definite".into()));
    }

    let length_scales: Vec<f64> = best_theta[..d].iter().map(|t| t.exp()).collect();
    let signal_var = best_theta[d].exp();
    let noise_var = best_theta[d + 1].exp();
    let k = kernel_matrix(xs, &length_scales, signal_var, noise_var);
    let chol = Cholesky::new(k)
        .ok_or_else(|| SimvecError::Eval("selected GP covariance lost definiteness".into()))?;
    let alpha = chol.solve(&y_standardized);
    Ok(GpPosterior {
        xs: xs.to_vec(),
        y_mean,
        y_std,
        length_scales,
        signal_var,
        noise_var,
        chol: Some(chol),
        alpha,
        degenerate: false,
    })
}

/// Fit on a trial log, encoding each recorded point.
pub fn fit_gp(log: &TrialLog, space: &SearchSpace, seed: u64) -> Result<GpPosterior> {
    let xs: Vec<Vec<f64>> =
        log.trials.iter().map(|t| encode(&t.x, space)).collect::<Result<_>>()?;
    let ys: Vec<f64> = log.trials.iter().map(|t| t.y).collect();
    fit_gp_encoded(&xs, &ys, seed)
}

impl GpPosterior {
    /// Posterior mean and standard deviation at an encoded point, in the
    /// objective's units.
    pub fn predict(&self, z: &[f64]) -> (f64, f64) {
        if self.degenerate {
            return (self.y_mean, self.y_std * self.signal_var.sqrt());
        }
        let chol = self.chol.as_ref().expect("non-degenerate posterior has a factorization");
        let n = self.xs.len();
        let k_star = DVector::from_iterator(
            n,
            self.xs.iter().map(|x| matern52(x, z, &self.length_scales, self.signal_var)),
        );
        let mean = k_star.dot(&self.alpha);
        let v = chol.l().solve_lower_triangular(&k_star).expect("triangular solve");
        let var = (self.signal_var - v.dot(&v)).max(0.0);
        (self.y_mean + self.y_std * mean, self.y_std * var.sqrt())
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    /// Signal variance in objective units.
    pub fn signal_variance(&self) -> f64 {
        self.signal_var * self.y_std * self.y_std
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_var * self.y_std * self.y_std
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Abramowitz-Stegun 7.1.26 erf approximation, absolute error below 1.5e-7.
fn norm_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let (sign, x) = if x < 0.0 { (-1.0, -x) } else { (1.0, x) };
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    0.5 * (1.0 + sign * erf)
}

/// Expected improvement below `y_best` for a minimization objective.
pub fn ei_value(mean: f64, std: f64, y_best: f64) -> f64 {
    let delta = y_best - mean;
    if std <= 0.0 {
        return delta.max(0.0);
    }
    let z = delta / std;
    (delta * norm_cdf(z) + std * norm_pdf(z)).max(0.0)
}

/// Expected improvement of an encoded point under a posterior.
pub fn expected_improvement(posterior: &GpPosterior, z: &[f64], y_best: f64) -> f64 {
    let (mean, std) = posterior.predict(z);
    ei_value(mean, std, y_best)
}

const CANDIDATES: usize = 1000;
const REFINE_TOP: usize = 5;

/// Pick the next point: maximize EI over 1,000 seeded candidates snapped to
/// the realizable grid, then refine the best few by pattern search. Falls
/// back to a random point when fewer than two trials exist or the posterior
/// is degenerate. A suggestion duplicating a logged trial is nudged one grid
/// step.
pub fn suggest_next(space: &SearchSpace, log: &TrialLog, seed: u64) -> Result<Point> {
    let d = space.encoded_len();
    let mut rng = seeding::stage_rng(seed, "tune-suggest");
    let random_point = |rng: &mut ChaCha8Rng| {
        let z: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        decode(&z, space)
    };
    if log.len() < 2 {
        return Ok(random_point(&mut rng));
    }
    let posterior = fit_gp(log, space, seed)?;
    if posterior.is_degenerate() {
        return Ok(random_point(&mut rng));
    }
    let y_best = log.best().expect("non-empty log").y;

    let mut scored: Vec<(f64, Vec<f64>)> = (0..CANDIDATES)
        .map(|_| {
            let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let z = snap(&raw, space);
            (expected_improvement(&posterior, &z, y_best), z)
        })
        .collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("EI is finite"));

    let lo = vec![0.0; d];
    let hi = vec![1.0; d];
    let mut best_z = scored[0].1.clone();
    let mut best_ei = scored[0].0;
    for (_, z) in scored.iter().take(REFINE_TOP) {
        let (refined, ei) = compass_search(z, &lo, &hi, 0.05, 1e-4, 200, |raw| {
            expected_improvement(&posterior, &snap(raw, space), y_best)
        });
        if ei > best_ei {
            best_ei = ei;
            best_z = snap(&refined, space);
        }
    }

    let mut point = decode(&best_z, space);
    if log.trials.iter().any(|t| t.x == point) {
        point = perturb_one_step(point, space, &mut rng);
    }
    Ok(point)
}

/// Move one dimension by a single grid step, staying in bounds.
fn perturb_one_step(mut point: Point, space: &SearchSpace, rng: &mut ChaCha8Rng) -> Point {
    let order: Vec<usize> = {
        let mut idx: Vec<usize> = (0..space.dims.len()).collect();
        // random rotation keeps repeated perturbations from piling onto one dim
        let start = rng.random_range(0..idx.len());
        idx.rotate_left(start);
        idx
    };
    for i in order {
        match (&space.dims[i].kind, &mut point[i]) {
            (DimKind::Integer { lo, hi }, ParamValue::Int(v)) => {
                if *v < *hi {
                    *v += 1;
                } else {
                    *v = *lo.max(&(*hi - 1));
                }
                return point;
            }
            (DimKind::Categorical(opts), ParamValue::Cat(s)) => {
                if opts.len() > 1 {
                    let at = opts.iter().position(|o| o == s).unwrap_or(0);
                    *s = opts[(at + 1) % opts.len()].clone();
                    return point;
                }
            }
            (DimKind::Real { lo, hi }, ParamValue::Real(v)) => {
                let step = (hi - lo) * 0.01;
                *v = if *v + step <= *hi { *v + step } else { *v - step };
                return point;
            }
            (DimKind::LogReal { lo, hi }, ParamValue::Real(v)) => {
                let factor = (hi / lo).powf(0.01);
                *v = if *v * factor <= *hi { *v * factor } else { *v / factor };
                return point;
            }
            _ => {}
        }
    }
    point
}

/// Latin-hypercube initial design on the encoded cube, snapped to the grid.
fn latin_hypercube(space: &SearchSpace, count: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let d = space.encoded_len();
    let mut strata: Vec<Vec<usize>> = Vec::with_capacity(d);
    for _ in 0..d {
        let mut perm: Vec<usize> = (0..count).collect();
        for i in (1..count).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        strata.push(perm);
    }
    (0..count)
        .map(|i| {
            let z: Vec<f64> = (0..d)
                .map(|j| (strata[j][i] as f64 + rng.random::<f64>()) / count as f64)
                .collect();
            decode(&z, space)
        })
        .collect()
}

/// Run the full loop: seeded Latin-hypercube initialization, then
/// fit / suggest / evaluate until `budget` trials are logged. A failed
/// objective is imputed as worst-so-far plus one standard deviation and the
/// loop continues.
pub fn optimize<F>(
    mut objective: F,
    space: &SearchSpace,
    budget: usize,
    init_count: usize,
    seed: u64,
) -> Result<TrialLog>
where
    F: FnMut(&Point) -> Result<f64>,
{
    if init_count < 2 {
        return Err(SimvecError::Param("need at least 2 initial samples".into()));
    }
    if budget <= init_count {
        return Err(SimvecError::Param("budget must exceed the initial sample count".into()));
    }
    let mut rng = seeding::stage_rng(seed, "tune-init");
    let mut log = TrialLog::default();
    let record = |log: &mut TrialLog, x: Point, result: Result<f64>| {
        match result {
            Ok(y) if y.is_finite() => log.trials.push(Trial { x, y, failed: false }),
            _ => {
                let ok: Vec<f64> =
                    log.trials.iter().filter(|t| !t.failed).map(|t| t.y).collect();
                let y = if ok.is_empty() {
                    1e6
                } else {
                    let worst = ok.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
                    let std =
                        (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ok.len() as f64)
                            .sqrt();
                    worst + std
                };
                log.trials.push(Trial { x, y, failed: true });
            }
        }
    };
    for x in latin_hypercube(space, init_count, &mut rng) {
        let y = objective(&x);
        record(&mut log, x, y);
    }
    let suggest_base = seeding::stage_seed(seed, "tune-suggest-iter");
    for i in init_count..budget {
        let x = suggest_next(space, &log, suggest_base.wrapping_add(i as u64))?;
        let y = objective(&x);
        record(&mut log, x, y);
    }
    Ok(log)
}

/// Render a trial log as CSV: one column per dimension, then `y` and the
/// incumbent best.
pub fn trial_log_csv(log: &TrialLog, space: &SearchSpace) -> String {
    let mut out = String::new();
    for dim in &space.dims {
        out.push_str(&dim.name);
        out.push(',');
    }
    out.push_str("y,best_so_far\n");
    let curve = log.incumbent_curve();
    for (t, best) in log.trials.iter().zip(curve) {
        for v in &t.x {
            out.push_str(&v.to_string());
            out.push(',');
        }
        out.push_str(&format!("{},{}\n", t.y, best));
    }
    out
}

/// Parse a search-space file: one dimension per line,
/// `name kind spec` with kind in {real, log-real, integer, categorical}.
pub fn parse_space(text: &str) -> Result<SearchSpace> {
    let mut dims = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(kind)) = (parts.next(), parts.next()) else {
            return Err(SimvecError::Param(format!(
                "space line {}: expected `name kind spec`",
                lineno + 1
            )));
        };
        let rest: Vec<&str> = parts.collect();
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                SimvecError::Param(format!("space line {}: bad number {s:?}", lineno + 1))
            })
        };
        let dim = match kind {
            "real" | "log-real" if rest.len() == 2 => {
                let lo = parse_f(rest[0])?;
                let hi = parse_f(rest[1])?;
                if kind == "real" {
                    Dim::real(name, lo, hi)
                } else {
                    Dim::log_real(name, lo, hi)
                }
            }
            "integer" if rest.len() == 2 => {
                let lo = rest[0].parse().map_err(|_| {
                    SimvecError::Param(format!("space line {}: bad integer", lineno + 1))
                })?;
                let hi = rest[1].parse().map_err(|_| {
                    SimvecError::Param(format!("space line {}: bad integer", lineno + 1))
                })?;
                Dim::integer(name, lo, hi)
            }
            "categorical" if !rest.is_empty() => Dim::categorical(name, &rest),
            other => {
                return Err(SimvecError::Param(format!(
                    "space line {}: unsupported dimension `{other}` (or wrong arity)",
                    lineno + 1
                )));
            }
        };
        dims.push(dim);
    }
    SearchSpace::new(dims)
}

/// Named view of a point, for objective adapters.
pub fn named(point: &Point, space: &SearchSpace) -> BTreeMap<String, ParamValue> {
    space.dims.iter().map(|d| d.name.clone()).zip(point.iter().cloned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_1d() -> SearchSpace {
        SearchSpace::new(vec![Dim::real("x", 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn encode_examples() {
        let space = SearchSpace::new(vec![
            Dim::real("a", 0.0, 10.0),
            Dim::log_real("s", 1e-7, 1e-3),
            Dim::categorical("dm", &["dm0", "dm1"]),
        ])
        .unwrap();
        let z = encode(
            &vec![
                ParamValue::Real(5.0),
                ParamValue::Real(1e-5),
                ParamValue::Cat("dm1".into()),
            ],
            &space,
        )
        .unwrap();
        assert!((z[0] - 0.5).abs() < 1e-12);
        assert!((z[1] - 0.5).abs() < 1e-12);
        assert_eq!(&z[2..], &[0.0, 1.0]);
    }

    #[test]
    fn encode_rejects_bad_values() {
        let space = SearchSpace::new(vec![
            Dim::real("a", 0.0, 1.0),
            Dim::categorical("c", &["x", "y"]),
        ])
        .unwrap();
        let oob = vec![ParamValue::Real(1.5), ParamValue::Cat("x".into())];
        assert!(encode(&oob, &space).is_err());
        let unknown = vec![ParamValue::Real(0.5), ParamValue::Cat("zz".into())];
        assert!(encode(&unknown, &space).is_err());
        let mismatched = vec![ParamValue::Cat("x".into()), ParamValue::Cat("x".into())];
        assert!(encode(&mismatched, &space).is_err());
    }

    #[test]
    fn space_validation() {
        assert!(SearchSpace::new(vec![]).is_err());
        assert!(SearchSpace::new(vec![Dim::real("a", 2.0, 1.0)]).is_err());
        assert!(SearchSpace::new(vec![Dim::log_real("a", 0.0, 1.0)]).is_err());
        assert!(SearchSpace::new(vec![Dim::integer("a", 5, 5)]).is_err());
        assert!(SearchSpace::new(vec![Dim::categorical("a", &[])]).is_err());
    }

    #[test]
    fn default_spaces_are_valid() {
        assert_eq!(SearchSpace::d2v_default().dims.len(), 6);
        assert_eq!(SearchSpace::lsi_default().dims.len(), 3);
        // encoded: 2 + 2 one-hot slots + 4 scalars
        assert_eq!(SearchSpace::d2v_default().encoded_len(), 8);
    }

    proptest! {
        #[test]
        fn decode_encode_roundtrips(
            a in 0.0f64..1.0,
            s in 0.0f64..1.0,
            n in 0.0f64..1.0,
            c in 0.0f64..1.0,
        ) {
            let space = SearchSpace::new(vec![
                Dim::real("a", -3.0, 7.0),
                Dim::log_real("s", 1e-6, 1e-2),
                Dim::integer("n", 2, 40),
                Dim::categorical("c", &["p", "q", "r"]),
            ]).unwrap();
            let slots = [a, s, n, c, 1.0 - c, c * 0.5];
            let point = decode(&slots, &space);
            let z = encode(&point, &space).unwrap();
            let again = decode(&z, &space);
            prop_assert_eq!(&point, &again);
            // snapping is idempotent
            let z2 = encode(&again, &space).unwrap();
            prop_assert_eq!(z, z2);
        }
    }

    fn smooth_log() -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> =
            [0.05, 0.25, 0.5, 0.75, 0.95].iter().map(|&x| vec![x]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x[0] - 0.3).powi(2)).collect();
        (xs, ys)
    }

    #[test]
    fn gp_interpolates_training_points() {
        let (xs, ys) = smooth_log();
        let gp = fit_gp_encoded(&xs, &ys, 1).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (mean, std) = gp.predict(x);
            assert!((mean - y).abs() < 1e-6, "mean {mean} vs {y}");
            assert!(std * std <= 1e-6, "variance {}", std * std);
        }
    }

    #[test]
    fn gp_reverts_to_prior_far_away() {
        let (xs, ys) = smooth_log();
        let gp = fit_gp_encoded(&xs, &ys, 2).unwrap();
        let far = vec![1e4];
        let (mean, std) = gp.predict(&far);
        let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let spread = ys.iter().map(|y| (y - y_mean).abs()).fold(0.0, f64::max);
        assert!((mean - y_mean).abs() <= 0.05 * spread.max(1e-3), "mean {mean} vs {y_mean}");
        let rel = (std * std - gp.signal_variance()).abs() / gp.signal_variance();
        assert!(rel <= 0.05, "variance off prior by {rel}");
    }

    #[test]
    fn gp_flags_constant_objective() {
        let xs = vec![vec![0.1], vec![0.5], vec![0.9]];
        let gp = fit_gp_encoded(&xs, &[2.0, 2.0, 2.0], 3).unwrap();
        assert!(gp.is_degenerate());
        let (mean, std) = gp.predict(&[0.3]);
        assert_eq!(mean, 2.0);
        assert!(std > 0.0);
    }

    #[test]
    fn gp_rejects_tiny_or_mismatched_input() {
        assert!(fit_gp_encoded(&[vec![0.0]], &[1.0], 1).is_err());
        assert!(fit_gp_encoded(&[vec![0.0], vec![1.0]], &[1.0], 1).is_err());
        assert!(fit_gp_encoded(&[vec![0.0], vec![1.0]], &[1.0, f64::NAN], 1).is_err());
    }

    #[test]
    fn selected_hypers_beat_random_draws() {
        let (xs, ys) = smooth_log();
        let gp = fit_gp_encoded(&xs, &ys, 4).unwrap();
        let y_mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let y_std =
            (ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
        let y: DVector<f64> =
            DVector::from_iterator(ys.len(), ys.iter().map(|v| (v - y_mean) / y_std));
        let chosen = log_marginal(&xs, &y, gp.length_scales(), gp.signal_var, gp.noise_var);
        let mut rng = seeding::stage_rng(77, "gp-random-hypers");
        for _ in 0..20 {
            let ls = vec![rng.random_range(1e-3f64.ln()..1e3f64.ln()).exp()];
            let sig = rng.random_range(1e-6f64.ln()..1e4f64.ln()).exp();
            let noise = rng.random_range(1e-10f64.ln()..1e-1f64.ln()).exp();
            let other = log_marginal(&xs, &y, &ls, sig, noise);
            assert!(chosen >= other, "random hypers beat ML-II: {other} > {chosen}");
        }
    }

    #[test]
    fn ei_closed_form_points() {
        assert_eq!(ei_value(5.0, 0.0, 5.0), 0.0);
        assert_eq!(ei_value(6.0, 0.0, 5.0), 0.0);
        assert_eq!(ei_value(3.0, 0.0, 5.0), 2.0);
        let at_zero = ei_value(5.0, 1.0, 5.0);
        assert!((at_zero - 0.39894).abs() < 1e-4, "{at_zero}");
    }

    #[test]
    fn ei_is_nonnegative_everywhere() {
        let mut rng = seeding::stage_rng(6, "ei-sign");
        for _ in 0..1000 {
            let mean = rng.random_range(-10.0..10.0);
            let std = rng.random_range(0.0..5.0);
            let best = rng.random_range(-10.0..10.0);
            assert!(ei_value(mean, std, best) >= 0.0);
        }
    }

    #[test]
    fn norm_cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-9);
        assert!((norm_cdf(1.0) - 0.8413447461).abs() < 2e-7);
        assert!((norm_cdf(-1.96) - 0.0249978951).abs() < 2e-7);
    }

    fn quadratic_log(space: &SearchSpace) -> TrialLog {
        let mut log = TrialLog::default();
        for x in [0.05, 0.2, 0.45, 0.7, 0.95] {
            log.trials.push(Trial {
                x: vec![ParamValue::Real(x)],
                y: (x - 0.3) * (x - 0.3),
                failed: false,
            });
        }
        let _ = space;
        log
    }

    #[test]
    fn suggestion_is_feasible_and_deterministic() {
        let space = unit_1d();
        let log = quadratic_log(&space);
        let a = suggest_next(&space, &log, 42).unwrap();
        let b = suggest_next(&space, &log, 42).unwrap();
        assert_eq!(a, b);
        let ParamValue::Real(x) = a[0] else { panic!("real dim") };
        assert!((0.0..=1.0).contains(&x));
    }

    #[test]
    fn suggestion_beats_raw_candidates() {
        let space = unit_1d();
        let log = quadratic_log(&space);
        let seed = 43;
        let point = suggest_next(&space, &log, seed).unwrap();
        let posterior = fit_gp(&log, &space, seed).unwrap();
        let y_best = log.best().unwrap().y;
        let chosen_ei =
            expected_improvement(&posterior, &encode(&point, &space).unwrap(), y_best);
        // regenerate the candidate stream the suggestion saw
        let mut rng = seeding::stage_rng(seed, "tune-suggest");
        for _ in 0..CANDIDATES {
            let raw: Vec<f64> = (0..1).map(|_| rng.random::<f64>()).collect();
            let z = snap(&raw, &space);
            let ei = expected_improvement(&posterior, &z, y_best);
            assert!(chosen_ei >= ei - 1e-12, "candidate EI {ei} beat suggestion {chosen_ei}");
        }
    }

    #[test]
    fn sparse_log_falls_back_to_random_sample() {
        let space = unit_1d();
        let mut log = TrialLog::default();
        log.trials.push(Trial { x: vec![ParamValue::Real(0.4)], y: 1.0, failed: false });
        let p = suggest_next(&space, &log, 7).unwrap();
        let ParamValue::Real(x) = p[0] else { panic!("real dim") };
        assert!((0.0..=1.0).contains(&x));
    }

    #[test]
    fn duplicate_suggestion_is_perturbed() {
        let space = SearchSpace::new(vec![Dim::integer("n", 0, 4)]).unwrap();
        let mut log = TrialLog::default();
        // the argmax cannot be forced directly, so exercise the helper
        let mut rng = seeding::stage_rng(1, "perturb");
        let p = perturb_one_step(vec![ParamValue::Int(2)], &space, &mut rng);
        assert_ne!(p, vec![ParamValue::Int(2)]);
        let ParamValue::Int(v) = p[0] else { panic!("int dim") };
        assert!((0..=4).contains(&v));
        let edge = perturb_one_step(vec![ParamValue::Int(4)], &space, &mut rng);
        let ParamValue::Int(v) = edge[0] else { panic!("int dim") };
        assert!((0..=4).contains(&v));
        log.trials.push(Trial { x: vec![ParamValue::Int(2)], y: 0.0, failed: false });
    }

    #[test]
    fn constant_objective_logs_every_trial() {
        let space = unit_1d();
        let log = optimize(|_| Ok(3.25), &space, 8, 3, 5).unwrap();
        assert_eq!(log.len(), 8);
        assert_eq!(log.best().unwrap().y, 3.25);
        assert!(log.trials.iter().all(|t| !t.failed));
    }

    #[test]
    fn quadratic_minimum_found_in_most_seeds() {
        let space = unit_1d();
        let mut hits = 0;
        for seed in 0..10 {
            let log = optimize(
                |p| {
                    let x = p[0].as_f64().unwrap();
                    Ok((x - 0.3) * (x - 0.3))
                },
                &space,
                20,
                4,
                seed,
            )
            .unwrap();
            let best_x = log.best().unwrap().x[0].as_f64().unwrap();
            if (best_x - 0.3).abs() <= 0.05 {
                hits += 1;
            }
        }
        assert!(hits >= 8, "only {hits}/10 seeds found the quadratic minimum");
    }

    fn branin(x1: f64, x2: f64) -> f64 {
        use std::f64::consts::PI;
        let a = 1.0;
        let b = 5.1 / (4.0 * PI * PI);
        let c = 5.0 / PI;
        let r = 6.0;
        let s = 10.0;
        let t = 1.0 / (8.0 * PI);
        a * (x2 - b * x1 * x1 + c * x1 - r).powi(2) + s * (1.0 - t) * x1.cos() + s
    }

    #[test]
    fn branin_reaches_near_optimum_in_most_seeds() {
        // global minimum 0.397887 at (π, 2.275) among others
        assert!((branin(std::f64::consts::PI, 2.275) - 0.397887).abs() < 1e-5);
        let space = SearchSpace::new(vec![
            Dim::real("x1", -5.0, 10.0),
            Dim::real("x2", 0.0, 15.0),
        ])
        .unwrap();
        let mut hits = 0;
        for seed in 0..10 {
            let log = optimize(
                |p| Ok(branin(p[0].as_f64().unwrap(), p[1].as_f64().unwrap())),
                &space,
                60,
                4,
                seed,
            )
            .unwrap();
            assert_eq!(log.len(), 60);
            let curve = log.incumbent_curve();
            for w in curve.windows(2) {
                assert!(w[1] <= w[0], "incumbent curve rose");
            }
            if log.best().unwrap().y <= 0.898 {
                hits += 1;
            }
        }
        assert!(hits >= 8, "only {hits}/10 seeds reached 0.898 on Branin");
    }

    #[test]
    fn failures_are_imputed_and_flagged() {
        let space = unit_1d();
        // threshold 0.7 guarantees the top Latin-hypercube stratum fails
        let log = optimize(
            |p| {
                let x = p[0].as_f64().unwrap();
                if x > 0.7 {
                    Err(SimvecError::Eval("synthetic failure".into()))
                } else {
                    Ok(x)
                }
            },
            &space,
            12,
            4,
            9,
        )
        .unwrap();
        assert_eq!(log.len(), 12);
        assert!(log.trials.iter().any(|t| t.failed), "no failure was exercised");
        for (i, t) in log.trials.iter().enumerate() {
            if !t.failed {
                continue;
            }
            // imputation sees only the successes logged before the failure
            let prior: Vec<f64> =
                log.trials[..i].iter().filter(|p| !p.failed).map(|p| p.y).collect();
            if prior.is_empty() {
                assert_eq!(t.y, 1e6);
            } else {
                let worst = prior.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mean = prior.iter().sum::<f64>() / prior.len() as f64;
                let std = (prior.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / prior.len() as f64)
                    .sqrt();
                assert!(
                    (t.y - (worst + std)).abs() < 1e-12,
                    "trial {i}: imputed {} vs worst {worst} + std {std}",
                    t.y
                );
            }
        }
    }

    #[test]
    fn csv_has_one_row_per_trial() {
        let space = unit_1d();
        let log = optimize(|p| Ok(p[0].as_f64().unwrap()), &space, 6, 3, 2).unwrap();
        let csv = trial_log_csv(&log, &space);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,y,best_so_far");
        assert_eq!(lines.len(), 7);
        let last: Vec<&str> = lines[6].split(',').collect();
        let best: f64 = last[2].parse().unwrap();
        assert_eq!(best, log.best().unwrap().y);
    }

    #[test]
    fn space_file_roundtrip() {
        let text = "# comment\nsize integer 100 600\nsample log-real 1e-7 1e-3\ndecay real 0.5 1.0\ndm categorical 0 1\n";
        let space = parse_space(text).unwrap();
        assert_eq!(space.dims.len(), 4);
        assert_eq!(space.dims[0].kind, DimKind::Integer { lo: 100, hi: 600 });
        assert_eq!(space.dims[3].kind, DimKind::Categorical(vec!["0".into(), "1".into()]));
        assert!(parse_space("x quux 1 2").is_err());
        assert!(parse_space("x real 1").is_err());
    }

    #[test]
    fn named_view_aligns_with_dims() {
        let space = SearchSpace::lsi_default();
        let point = vec![ParamValue::Int(200), ParamValue::Int(5000), ParamValue::Real(0.75)];
        let map = named(&point, &space);
        assert_eq!(map["num-topics"], ParamValue::Int(200));
        assert_eq!(map["decay"], ParamValue::Real(0.75));
    }
}
