//! Large-population ODE for the fractions `u_{i,c}` of customers of bank `i`
//! holding `c` coins, on a truncated coin window `[c_min, c_max]`.
//!
//! An individual holding `c` coins receives a coin at rate `ubar` (the
//! fraction of individuals able to pay) and pays one at rate 1 if `c > 0`,
//! `p_i` otherwise. For `c != 0` this gives
//!
//! ```text
//! u'_{i,c} = ubar (u_{i,c-1} - u_{i,c}) - (u_{i,c} - u_{i,c+1})        c > 0
//! u'_{i,c} = ubar (u_{i,c-1} - u_{i,c}) - p_i (u_{i,c} - u_{i,c+1})    c < 0
//! ```
//!
//! and `u'_{i,0}` closes the per-bank mass balance. Densities outside the
//! window are zero; the flux leaving through the window edges is folded back
//! into `c = 0` by the closure and reported as leaked mass.
//!
//! At a fixed point detailed balance across each edge `(c, c+1)` reads
//! `ubar u_c = q_{c+1} u_{c+1}`, so `u_c = u_0 ubar^c` for `c > 0` and
//! `u_c = u_0 (p / ubar)^|c|` for `c < 0`: decay on the debt side needs
//! `p < ubar`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::laplace::{laplace_params, DebtRate, LaplaceParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    c_min: i64,
    c_max: i64,
    /// Bank-major blocks of width `c_max - c_min + 1`.
    u: Vec<f64>,
    /// Bank availability `p_i`.
    pub p: Vec<f64>,
    /// Per-capita bank reserves `beta_i` (coins per individual).
    pub beta: Vec<f64>,
}

impl MeanFieldState {
    /// All-zero densities for `banks` banks on `[c_min, c_max]`.
    pub fn zeros(banks: usize, c_min: i64, c_max: i64) -> Self {
        assert!(banks >= 1 && c_min <= 0 && c_max >= 0, "window must contain 0");
        let width = (c_max - c_min + 1) as usize;
        MeanFieldState { c_min, c_max, u: vec![0.0; banks * width], p: vec![1.0; banks], beta: vec![0.0; banks] }
    }

    /// Every individual holds exactly `temperature` coins, spread evenly over
    /// the banks, with `beta_total` coins per individual in the banks.
    pub fn delta(banks: usize, temperature: i64, beta_total: f64, c_min: i64, c_max: i64) -> Self {
        assert!((0..=c_max).contains(&temperature));
        let mut s = Self::zeros(banks, c_min, c_max);
        for i in 0..banks {
            s.set(i, temperature, 1.0 / banks as f64);
            s.beta[i] = beta_total / banks as f64;
        }
        s
    }

    pub fn banks(&self) -> usize {
        self.p.len()
    }

    pub fn bounds(&self) -> (i64, i64) {
        (self.c_min, self.c_max)
    }

    fn width(&self) -> usize {
        (self.c_max - self.c_min + 1) as usize
    }

    pub fn densities(&self) -> &[f64] {
        &self.u
    }

    pub fn get(&self, bank: usize, c: i64) -> f64 {
        if c < self.c_min || c > self.c_max {
            return 0.0;
        }
        self.u[bank * self.width() + (c - self.c_min) as usize]
    }

    pub fn set(&mut self, bank: usize, c: i64, value: f64) {
        let w = self.width();
        self.u[bank * w + (c - self.c_min) as usize] = value;
    }

    pub fn bank_block(&self, bank: usize) -> &[f64] {
        let w = self.width();
        &self.u[bank * w..(bank + 1) * w]
    }

    /// `u_c = sum_i u_{i,c}` over the window.
    pub fn profile(&self) -> Vec<(i64, f64)> {
        (self.c_min..=self.c_max)
            .map(|c| (c, (0..self.banks()).map(|i| self.get(i, c)).sum()))
            .collect()
    }

    pub fn mass(&self) -> f64 {
        self.u.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        let w = self.width();
        self.u.iter().enumerate().map(|(k, &v)| (self.c_min + (k % w) as i64) as f64 * v).sum()
    }

    /// Fractions `(u+, u0, u-)`.
    pub fn sign_fractions(&self) -> (f64, f64, f64) {
        let (mut pos, mut zero, mut neg) = (0.0, 0.0, 0.0);
        for (c, v) in self.profile() {
            match c.cmp(&0) {
                std::cmp::Ordering::Greater => pos += v,
                std::cmp::Ordering::Equal => zero += v,
                std::cmp::Ordering::Less => neg += v,
            }
        }
        (pos, zero, neg)
    }

    /// `ubar = u+ + sum_i p_i (u_{i,0} + u_i^-)`.
    pub fn ubar(&self) -> f64 {
        ubar_of(&self.u, &self.p, self.width(), self.c_min)
    }

    pub fn normalized(mut self) -> Self {
        let m = self.mass();
        self.u.iter_mut().for_each(|v| *v /= m);
        self
    }
}

fn ubar_of(u: &[f64], p: &[f64], width: usize, c_min: i64) -> f64 {
    let zero = (-c_min) as usize;
    p.iter()
        .enumerate()
        .map(|(i, &pi)| {
            let block = &u[i * width..(i + 1) * width];
            let owing: f64 = block[..=zero].iter().sum();
            let holding: f64 = block[zero + 1..].iter().sum();
            holding + pi * owing
        })
        .sum()
}

/// Writes `du` for densities `u` given availabilities `p`; returns the
/// boundary outflow rate.
fn field_into(u: &[f64], p: &[f64], width: usize, c_min: i64, du: &mut [f64]) -> f64 {
    let ubar = ubar_of(u, p, width, c_min);
    let zero = (-c_min) as usize;
    let mut leak = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        let block = &u[i * width..(i + 1) * width];
        let out = &mut du[i * width..(i + 1) * width];
        let at = |k: isize| if k < 0 || k as usize >= width { 0.0 } else { block[k as usize] };
        let mut others = 0.0;
        for k in 0..width {
            if k == zero {
                continue;
            }
            let ki = k as isize;
            let pay = if k > zero { 1.0 } else { pi };
            let d = ubar * (at(ki - 1) - block[k]) - pay * (block[k] - at(ki + 1));
            out[k] = d;
            others += d;
        }
        out[zero] = -others;
        leak += ubar * block[width - 1];
        if zero > 0 {
            leak += pi * block[0];
        }
    }
    leak
}

/// Time derivative of the densities at `state`, with `p` taken from the state.
pub fn vector_field(state: &MeanFieldState) -> Vec<f64> {
    let mut du = vec![0.0; state.u.len()];
    field_into(&state.u, &state.p, state.width(), state.c_min, &mut du);
    du
}

/// L1 norm of [`vector_field`].
pub fn residual(state: &MeanFieldState) -> f64 {
    vector_field(state).iter().map(|d| d.abs()).sum()
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("need 0 < p < ubar < 1 for a decaying profile, got ubar = {ubar}, p = {p}")]
    BadOrder { ubar: f64, p: f64 },
}

/// Two-sided geometric fixed point for one bank: `u_c = u0 ubar^c` for
/// `c > 0`, `u_c = u0 (p / ubar)^|c|` for `c < 0`, truncated to the window.
pub fn stationary_profile(
    ubar: f64,
    p: f64,
    u0: f64,
    c_min: i64,
    c_max: i64,
) -> Result<MeanFieldState, ProfileError> {
    if !(0.0 < p && p < ubar && ubar < 1.0) {
        return Err(ProfileError::BadOrder { ubar, p });
    }
    let mut s = MeanFieldState::zeros(1, c_min, c_max);
    s.p[0] = p;
    let down = p / ubar;
    for c in c_min..=c_max {
        let v = if c >= 0 { u0 * ubar.powi(c as i32) } else { u0 * down.powi((-c) as i32) };
        s.set(0, c, v);
    }
    Ok(s)
}

/// The fixed point whose side ratios match the Laplace rates:
/// `ubar = e^-a`, `p = e^-(a+b)`.
pub fn profile_from_laplace(params: &LaplaceParams, c_min: i64, c_max: i64) -> Result<MeanFieldState, ProfileError> {
    let b = params.b.value();
    stationary_profile((-params.a).exp(), (-(params.a + b)).exp(), params.mu, c_min, c_max).map(|s| s.normalized())
}

/// Default window `[-ceil(40 / b), ceil(40 / a)]` from the Laplace rates,
/// widened to contain `temperature`.
pub fn default_bounds(temperature: f64, rho: f64) -> (i64, i64) {
    let params = laplace_params(temperature, rho).expect("valid temperature and rho");
    let c_max = ((40.0 / params.a).ceil() as i64).max(temperature.ceil() as i64 + 1);
    let c_min = match params.b {
        DebtRate::Finite(b) => -((40.0 / b).ceil() as i64),
        DebtRate::Infinite => 0,
    };
    (c_min, c_max)
}

/// How `p_i` is supplied during integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BankPolicy {
    Constant { p: f64 },
    /// `p_i = clamp(beta_i / epsilon, 0, 1)`, with `beta_i` evolving as the
    /// bank's coin balance.
    ReserveIndicator { epsilon: f64 },
}

impl Default for BankPolicy {
    fn default() -> Self {
        BankPolicy::ReserveIndicator { epsilon: 1e-3 }
    }
}

impl BankPolicy {
    fn availability(&self, beta: &[f64], p: &mut [f64]) {
        match *self {
            BankPolicy::Constant { p: value } => p.iter_mut().for_each(|v| *v = value),
            BankPolicy::ReserveIndicator { epsilon } => {
                for (v, &b) in p.iter_mut().zip(beta) {
                    *v = (b / epsilon).clamp(0.0, 1.0);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `(t, state)` at the requested snapshot times, including `t = 0`.
    pub snapshots: Vec<(f64, MeanFieldState)>,
    pub terminal: MeanFieldState,
    pub t_end: f64,
    pub steps: u64,
    pub max_mass_drift: f64,
    pub max_mean_drift: f64,
    /// Integrated flux through the window edges.
    pub leaked_mass: f64,
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("initial state is not normalised (mass {0})")]
    NotNormalised(f64),
    #[error("non-finite value at t = {t}; last finite state kept")]
    NonFinite { t: f64, last_good: Box<MeanFieldState> },
}

struct Scratch {
    k: [Vec<f64>; 4],
    kb: [Vec<f64>; 4],
    u: Vec<f64>,
    beta: Vec<f64>,
    p: Vec<f64>,
}

/// Derivatives of `(u, beta)`; returns the boundary outflow rate.
fn full_field(
    u: &[f64],
    beta: &[f64],
    policy: &BankPolicy,
    width: usize,
    c_min: i64,
    p: &mut [f64],
    du: &mut [f64],
    dbeta: &mut [f64],
) -> f64 {
    policy.availability(beta, p);
    let leak = field_into(u, p, width, c_min, du);
    if let BankPolicy::ReserveIndicator { .. } = policy {
        let ubar = ubar_of(u, p, width, c_min);
        let zero = (-c_min) as usize;
        for (i, db) in dbeta.iter_mut().enumerate() {
            let block = &u[i * width..(i + 1) * width];
            let debtors: f64 = block[..zero].iter().sum();
            // repayments by debtors who receive minus loans to broke payers
            *db = ubar * debtors - p[i] * (debtors + block[zero]);
        }
    } else {
        dbeta.iter_mut().for_each(|d| *d = 0.0);
    }
    leak
}

/// Classical fixed-step RK4 from `initial` to `t_end`. Snapshots are kept
/// every `snapshot_every` time units when given.
pub fn integrate(
    initial: &MeanFieldState,
    policy: BankPolicy,
    t_end: f64,
    dt: f64,
    snapshot_every: Option<f64>,
) -> Result<Trajectory, IntegrateError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(IntegrateError::BadStep(dt));
    }
    let mass0 = initial.mass();
    if (mass0 - 1.0).abs() > 1e-9 {
        return Err(IntegrateError::NotNormalised(mass0));
    }
    let width = initial.width();
    let c_min = initial.c_min;
    let n = initial.u.len();
    let k = initial.banks();
    let mean0 = initial.mean();

    let mut state = initial.clone();
    policy.availability(&state.beta, &mut state.p);
    let mut sc = Scratch {
        k: std::array::from_fn(|_| vec![0.0; n]),
        kb: std::array::from_fn(|_| vec![0.0; k]),
        u: vec![0.0; n],
        beta: vec![0.0; k],
        p: vec![0.0; k],
    };

    let steps = (t_end / dt).round().max(0.0) as u64;
    let mut snapshots = vec![(0.0, state.clone())];
    let snap_every_steps = snapshot_every.map(|s| ((s / dt).round() as u64).max(1));
    let (mut max_mass_drift, mut max_mean_drift, mut leaked) = (0.0f64, 0.0f64, 0.0);

    for step in 1..=steps {
        let mut leak_rate = 0.0;
        for stage in 0..4 {
            let h = match stage {
                0 => 0.0,
                1 | 2 => dt / 2.0,
                _ => dt,
            };
            if stage == 0 {
                sc.u.copy_from_slice(&state.u);
                sc.beta.copy_from_slice(&state.beta);
            } else {
                let (prev, prevb) = (&sc.k[stage - 1], &sc.kb[stage - 1]);
                for j in 0..n {
                    sc.u[j] = state.u[j] + h * prev[j];
                }
                for j in 0..k {
                    sc.beta[j] = state.beta[j] + h * prevb[j];
                }
            }
            let (ks, kbs) = (&mut sc.k[stage], &mut sc.kb[stage]);
            let l = full_field(&sc.u, &sc.beta, &policy, width, c_min, &mut sc.p, ks, kbs);
            leak_rate += l * [1.0, 2.0, 2.0, 1.0][stage] / 6.0;
        }
        for j in 0..n {
            state.u[j] += dt / 6.0 * (sc.k[0][j] + 2.0 * sc.k[1][j] + 2.0 * sc.k[2][j] + sc.k[3][j]);
        }
        for j in 0..k {
            state.beta[j] += dt / 6.0 * (sc.kb[0][j] + 2.0 * sc.kb[1][j] + 2.0 * sc.kb[2][j] + sc.kb[3][j]);
        }
        policy.availability(&state.beta, &mut state.p);
        leaked += leak_rate * dt;

        let t = step as f64 * dt;
        if !(state.u.iter().all(|v| v.is_finite()) && state.beta.iter().all(|v| v.is_finite())) {
            let mut last_good = state.clone();
            // roll back to the previous step's values
            for j in 0..n {
                last_good.u[j] -= dt / 6.0 * (sc.k[0][j] + 2.0 * sc.k[1][j] + 2.0 * sc.k[2][j] + sc.k[3][j]);
            }
            if !last_good.u.iter().all(|v| v.is_finite()) {
                last_good = snapshots.last().map(|(_, s)| s.clone()).unwrap_or_else(|| initial.clone());
            }
            return Err(IntegrateError::NonFinite { t, last_good: Box::new(last_good) });
        }
        max_mass_drift = max_mass_drift.max((state.mass() - mass0).abs());
        max_mean_drift = max_mean_drift.max((state.mean() - mean0).abs());
        if let Some(every) = snap_every_steps {
            if step % every == 0 {
                snapshots.push((t, state.clone()));
            }
        }
    }

    Ok(Trajectory {
        snapshots,
        terminal: state,
        t_end: steps as f64 * dt,
        steps,
        max_mass_drift,
        max_mean_drift,
        leaked_mass: leaked,
    })
}

/// Consecutive ratios `u_{c+1} / u_c` on `[from, to)` of the bank-summed profile.
pub fn side_ratios(state: &MeanFieldState, from: i64, to: i64) -> Vec<f64> {
    let profile: std::collections::BTreeMap<i64, f64> = state.profile().into_iter().collect();
    (from..to).map(|c| profile[&(c + 1)] / profile[&c]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn geometric_profile_values() {
        let s = stationary_profile(0.5, 0.25, 1.0, -3, 3).unwrap();
        assert_eq!(s.get(0, 1), 0.5);
        assert_eq!(s.get(0, 2), 0.25);
        assert_eq!(s.get(0, -1), 0.5);
        assert_eq!(s.get(0, -2), 0.25);
        assert!(stationary_profile(0.5, 1.0, 1.0, -3, 3).is_err());
        assert!(stationary_profile(1.0, 0.5, 1.0, -3, 3).is_err());
    }

    #[test]
    fn fixed_point_has_zero_field() {
        let s = stationary_profile(0.9, 0.6, 1.0, -200, 400).unwrap().normalized();
        assert_relative_eq!(s.ubar(), 0.9, epsilon = 1e-14);
        assert!(residual(&s) < 1e-12, "{}", residual(&s));
    }

    #[test]
    fn laplace_profile_ratios() {
        let params = laplace_params(10.0, 0.5).unwrap();
        let s = profile_from_laplace(&params, -60, 120).unwrap();
        let up = s.get(0, 6) / s.get(0, 5);
        let down = s.get(0, -6) / s.get(0, -5);
        assert_relative_eq!(up, params.pdf(6.0) / params.pdf(5.0), max_relative = 1e-12);
        assert_relative_eq!(down, params.pdf(-6.0) / params.pdf(-5.0), max_relative = 1e-12);
    }

    #[test]
    fn slow_debt_decay_near_threshold() {
        let s = stationary_profile(0.5, 0.5 - 1e-9, 1.0, -10, 10).unwrap();
        assert!((s.get(0, -10) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn field_conserves_mass_exactly() {
        let mut s = MeanFieldState::delta(2, 3, 0.4, -5, 10);
        s.set(1, -2, 0.1);
        s.set(0, 7, 0.05);
        s.p = vec![0.3, 0.8];
        let sum: f64 = vector_field(&s).iter().sum();
        assert!(sum.abs() < 1e-15);
    }

    #[test]
    fn symmetric_banks_symmetric_field() {
        let mut s = MeanFieldState::delta(2, 4, 0.0, -4, 12);
        s.p = vec![0.7, 0.7];
        for c in [-2, 1, 6] {
            s.set(0, c, 0.05);
            s.set(1, c, 0.05);
        }
        let du = vector_field(&s);
        let w = du.len() / 2;
        assert_eq!(du[..w], du[w..]);
    }

    #[test]
    fn delta_is_far_from_equilibrium() {
        let mut s = MeanFieldState::delta(1, 5, 0.0, -10, 20);
        s.p = vec![0.5];
        assert!(residual(&s) > 0.5);
    }

    #[test]
    fn perturbation_scales_residual() {
        let s = stationary_profile(0.9, 0.6, 1.0, -200, 400).unwrap().normalized();
        let mut t = s.clone();
        t.set(0, 3, s.get(0, 3) + 1e-6);
        t.set(0, 4, s.get(0, 4) - 1e-6);
        let r = residual(&t);
        assert!(r > 1e-7 && r < 1e-5, "{r}");
    }

    #[test]
    fn stationary_input_stays_put() {
        let s = stationary_profile(0.9, 0.6, 1.0, -200, 400).unwrap().normalized();
        let traj = integrate(&s, BankPolicy::Constant { p: 0.6 }, 5.0, 0.05, None).unwrap();
        let diff: f64 = traj.terminal.u.iter().zip(&s.u).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff < 5e-10, "{diff}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = MeanFieldState::delta(1, 2, 0.0, -3, 5);
        assert!(matches!(integrate(&s, BankPolicy::default(), 1.0, 0.0, None), Err(IntegrateError::BadStep(_))));
        let z = MeanFieldState::zeros(1, -3, 5);
        assert!(matches!(integrate(&z, BankPolicy::default(), 1.0, 0.1, None), Err(IntegrateError::NotNormalised(_))));
    }

    #[test]
    fn blow_up_is_reported() {
        let s = MeanFieldState::delta(1, 2, 0.0, -3, 5);
        let err = integrate(&s, BankPolicy::Constant { p: 0.5 }, 5000.0, 50.0, None).unwrap_err();
        match err {
            IntegrateError::NonFinite { last_good, .. } => assert!(last_good.u.iter().all(|v| v.is_finite())),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reserve_coupling_conserves_bank_plus_debt() {
        let s = MeanFieldState::delta(2, 4, 0.6, -120, 200);
        let traj = integrate(&s, BankPolicy::ReserveIndicator { epsilon: 0.05 }, 20.0, 0.01, None).unwrap();
        for i in 0..2 {
            let debt: f64 = (-120..0).map(|c| -(c as f64) * traj.terminal.get(i, c)).sum();
            assert_relative_eq!(traj.terminal.beta[i] + debt, 0.3, epsilon = 1e-9);
        }
    }
}
