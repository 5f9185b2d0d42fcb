//! Offline C4 trajectory planning through timed waypoints.
//!
//! Each segment is a degree-9 polynomial fixed by position and the first
//! four derivatives at both of its knots. Interior derivatives are free
//! variables chosen to minimise the integrated squared snap over the
//! whole path; endpoints are at rest.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SMatrix};
use thiserror::Error;

use crate::rigid_body::Vec3;

/// Number of carried derivative orders, position included.
pub const ORDERS: usize = 5;
const COEFFS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("need at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint times must be strictly increasing (t[{index}] = {t})")]
    NonIncreasingTime { index: usize, t: f64 },
    #[error("waypoint {0} is not finite")]
    NonFinite(usize),
    #[error("minimum-snap system is singular")]
    Singular,
    #[error("sample rate must be positive, got {0}")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub position: Vec3,
}

impl Waypoint {
    pub fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Self {
            t,
            position: Vec3::new(x, y, z),
        }
    }
}

/// One reference row: position and its first four time derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub derivatives: [Vec3; ORDERS],
}

impl TrajectorySample {
    /// A stationary reference at `position`.
    pub fn hold(t: f64, position: Vec3) -> Self {
        let mut derivatives = [Vec3::zeros(); ORDERS];
        derivatives[0] = position;
        Self { t, derivatives }
    }

    pub fn position(&self) -> Vec3 {
        self.derivatives[0]
    }

    pub fn velocity(&self) -> Vec3 {
        self.derivatives[1]
    }

    pub fn acceleration(&self) -> Vec3 {
        self.derivatives[2]
    }

    pub fn jerk(&self) -> Vec3 {
        self.derivatives[3]
    }

    pub fn snap(&self) -> Vec3 {
        self.derivatives[4]
    }
}

/// Axis-aligned box used for the indoor arena check.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Bounds {
    /// A 7.8 x 5.0 x 2.5 m room centred in x/y with the floor at z = 0 (NED).
    fn default() -> Self {
        Self {
            min: [-3.9, -2.5, -2.5],
            max: [3.9, 2.5, 0.0],
        }
    }
}

impl Bounds {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

// Polynomial coefficients in normalised segment time s in [0, 1].
type Coeffs = [f64; COEFFS];

/// Piecewise degree-9 polynomial in three axes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySpline {
    knots: Vec<f64>,
    // segments[seg][axis], expanded about s = 0
    segments: Vec<[Coeffs; 3]>,
    // the same polynomials expanded about s = 1, so both ends evaluate
    // their knot derivatives without cancellation
    tails: Vec<[Coeffs; 3]>,
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// Maps coefficients to [p, p', .., p''''] at s = 0 then s = 1.
fn boundary_matrix() -> SMatrix<f64, COEFFS, COEFFS> {
    let mut a = SMatrix::<f64, COEFFS, COEFFS>::zeros();
    for k in 0..ORDERS {
        a[(k, k)] = falling(k, k);
        for j in k..COEFFS {
            a[(ORDERS + k, j)] = falling(j, k);
        }
    }
    a
}

/// Integral over [0, 1] of the squared fourth derivative, as a quadratic form in the coefficients.
fn snap_hessian() -> SMatrix<f64, COEFFS, COEFFS> {
    let mut h = SMatrix::<f64, COEFFS, COEFFS>::zeros();
    for i in 4..COEFFS {
        for j in 4..COEFFS {
            h[(i, j)] = falling(i, 4) * falling(j, 4) / (i + j - 7) as f64;
        }
    }
    h
}

struct Basis {
    a_inv: SMatrix<f64, COEFFS, COEFFS>,
    // A^-T H A^-1: snap cost in terms of normalised boundary derivatives
    cost: SMatrix<f64, COEFFS, COEFFS>,
}

fn basis() -> &'static Basis {
    static BASIS: OnceLock<Basis> = OnceLock::new();
    BASIS.get_or_init(|| {
        let a_inv = boundary_matrix().try_inverse().expect("Hermite boundary matrix is invertible");
        let cost = a_inv.transpose() * snap_hessian() * a_inv;
        Basis { a_inv, cost }
    })
}

fn validate(waypoints: &[Waypoint]) -> Result<(), TrajectoryError> {
    if waypoints.len() < 2 {
        return Err(TrajectoryError::TooFewWaypoints(waypoints.len()));
    }
    for (i, w) in waypoints.iter().enumerate() {
        if !w.t.is_finite() || !w.position.iter().all(|v| v.is_finite()) {
            return Err(TrajectoryError::NonFinite(i));
        }
        if i > 0 && w.t <= waypoints[i - 1].t {
            return Err(TrajectoryError::NonIncreasingTime { index: i, t: w.t });
        }
    }
    Ok(())
}

/// Plans a rest-to-rest minimum-snap spline through `waypoints`.
pub fn plan_spline(waypoints: &[Waypoint]) -> Result<PolySpline, TrajectoryError> {
    validate(waypoints)?;
    let n_seg = waypoints.len() - 1;
    let n_knots = waypoints.len();
    let durations: Vec<f64> = waypoints.windows(2).map(|w| w[1].t - w[0].t).collect();
    let b = basis();

    // Global variable vector per axis: ORDERS values per knot, in real units.
    let n_vars = ORDERS * n_knots;
    let mut q = DMatrix::<f64>::zeros(n_vars, n_vars);
    for (seg, &dur) in durations.iter().enumerate() {
        // real derivative d_k maps to normalised dur^k d_k; cost scales by dur^-7
        let scale: Vec<f64> = (0..COEFFS).map(|i| dur.powi((i % ORDERS) as i32)).collect();
        let w = dur.powi(-7);
        for i in 0..COEFFS {
            let gi = ORDERS * seg + i;
            for j in 0..COEFFS {
                let gj = ORDERS * seg + j;
                q[(gi, gj)] += w * scale[i] * scale[j] * b.cost[(i, j)];
            }
        }
    }

    // Free variables: derivatives 1..4 at interior knots.
    let free: Vec<usize> = (1..n_knots - 1)
        .flat_map(|knot| (1..ORDERS).map(move |k| ORDERS * knot + k))
        .collect();
    let is_free = {
        let mut v = vec![false; n_vars];
        for &i in &free {
            v[i] = true;
        }
        v
    };
    let fixed: Vec<usize> = (0..n_vars).filter(|i| !is_free[*i]).collect();

    let mut knot_values = vec![DVector::<f64>::zeros(n_vars); 3];
    for (axis, values) in knot_values.iter_mut().enumerate() {
        for (knot, w) in waypoints.iter().enumerate() {
            values[ORDERS * knot] = w.position[axis];
        }
    }

    if !free.is_empty() {
        let q_pp = DMatrix::from_fn(free.len(), free.len(), |i, j| q[(free[i], free[j])]);
        let q_pf = DMatrix::from_fn(free.len(), fixed.len(), |i, j| q[(free[i], fixed[j])]);
        let chol = q_pp.cholesky().ok_or(TrajectoryError::Singular)?;
        for values in knot_values.iter_mut() {
            let d_fixed = DVector::from_fn(fixed.len(), |i, _| values[fixed[i]]);
            let d_free = chol.solve(&(-(&q_pf * d_fixed)));
            for (i, &idx) in free.iter().enumerate() {
                values[idx] = d_free[i];
            }
        }
    }

    let mut segments = Vec::with_capacity(n_seg);
    let mut tails = Vec::with_capacity(n_seg);
    for (seg, &dur) in durations.iter().enumerate() {
        let mut head = [[0.0; COEFFS]; 3];
        let mut tail = [[0.0; COEFFS]; 3];
        for axis in 0..3 {
            let boundary = SMatrix::<f64, COEFFS, 1>::from_fn(|i, _| {
                knot_values[axis][ORDERS * seg + i] * dur.powi((i % ORDERS) as i32)
            });
            let c = b.a_inv * boundary;
            head[axis].copy_from_slice(c.as_slice());
            tail[axis] = taylor_shift(&head[axis]);
            // low orders are the boundary values themselves
            for k in 0..ORDERS {
                let fact = falling(k, k);
                head[axis][k] = boundary[k] / fact;
                tail[axis][k] = boundary[ORDERS + k] / fact;
            }
        }
        segments.push(head);
        tails.push(tail);
    }

    Ok(PolySpline {
        knots: waypoints.iter().map(|w| w.t).collect(),
        segments,
        tails,
    })
}

/// Coefficients of `p(1 + x)` given those of `p(s)`.
fn taylor_shift(c: &Coeffs) -> Coeffs {
    let mut out = *c;
    for i in 0..COEFFS {
        for j in (i..COEFFS - 1).rev() {
            out[j] += out[j + 1];
        }
    }
    out
}

fn eval_poly(c: &Coeffs, s: f64, order: usize) -> f64 {
    let mut acc = 0.0;
    for j in (order..COEFFS).rev() {
        acc = acc * s + c[j] * falling(j, order);
    }
    acc
}

impl PolySpline {
    pub fn start_time(&self) -> f64 {
        self.knots[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.knots.last().expect("spline has knots")
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    fn eval_segment(&self, seg: usize, t: f64) -> [Vec3; ORDERS] {
        let t0 = self.knots[seg];
        let dur = self.knots[seg + 1] - t0;
        let s = (t - t0) / dur;
        let (coeffs, x) = if s <= 0.5 {
            (&self.segments[seg], s)
        } else {
            (&self.tails[seg], s - 1.0)
        };
        let mut out = [Vec3::zeros(); ORDERS];
        for (k, d) in out.iter_mut().enumerate() {
            let scale = dur.powi(-(k as i32));
            for axis in 0..3 {
                d[axis] = eval_poly(&coeffs[axis], x, k) * scale;
            }
        }
        out
    }

    /// Derivatives 0..4 at `t` evaluated on the polynomial of segment `seg`,
    /// which may lie outside that segment. Used to compare both sides of a knot.
    pub fn evaluate_on_segment(&self, seg: usize, t: f64) -> [Vec3; ORDERS] {
        self.eval_segment(seg, t)
    }

    /// Analytic sample; times outside the spline hold the endpoint at rest.
    pub fn sample(&self, t: f64) -> TrajectorySample {
        if t <= self.start_time() {
            let mut s = self.eval_segment(0, self.start_time());
            for d in s.iter_mut().skip(1) {
                *d = Vec3::zeros();
            }
            return TrajectorySample { t, derivatives: s };
        }
        if t >= self.end_time() {
            let last = self.segments.len() - 1;
            let mut s = self.eval_segment(last, self.end_time());
            for d in s.iter_mut().skip(1) {
                *d = Vec3::zeros();
            }
            return TrajectorySample { t, derivatives: s };
        }
        let seg = match self.knots.partition_point(|&k| k <= t) {
            0 => 0,
            i => (i - 1).min(self.segments.len() - 1),
        };
        TrajectorySample {
            t,
            derivatives: self.eval_segment(seg, t),
        }
    }

    /// Integral of the squared snap over the whole path, summed over axes.
    pub fn snap_cost(&self) -> f64 {
        let h = snap_hessian();
        self.segments
            .iter()
            .zip(self.knots.windows(2))
            .map(|(axes, k)| {
                let dur = k[1] - k[0];
                axes.iter()
                    .map(|c| {
                        let v = SMatrix::<f64, COEFFS, 1>::from_column_slice(c);
                        (v.transpose() * h * v)[(0, 0)]
                    })
                    .sum::<f64>()
                    * dur.powi(-7)
            })
            .sum()
    }

    /// Samples every `1/rate` seconds from the first knot through the last.
    pub fn discretize(&self, rate: f64) -> Result<Vec<TrajectorySample>, TrajectoryError> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(TrajectoryError::InvalidRate(rate));
        }
        let count = (self.duration() * rate + 1e-9).floor() as usize + 1;
        let t0 = self.start_time();
        Ok((0..count).map(|i| self.sample(t0 + i as f64 / rate)).collect())
    }

    /// True when every sample at `step` spacing lies inside `bounds`.
    pub fn within_bounds(&self, bounds: &Bounds, step: f64) -> bool {
        let n = (self.duration() / step).ceil() as usize;
        (0..=n).all(|i| {
            let t = (self.start_time() + i as f64 * step).min(self.end_time());
            bounds.contains(&self.sample(t).position())
        })
    }
}

/// A rest-to-rest straight segment between two points.
pub fn rest_to_rest(t0: f64, from: Vec3, duration: f64, to: Vec3) -> Result<PolySpline, TrajectoryError> {
    plan_spline(&[
        Waypoint { t: t0, position: from },
        Waypoint {
            t: t0 + duration,
            position: to,
        },
    ])
}
