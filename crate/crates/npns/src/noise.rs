//! Two-sided Wiener paths, the ergodic shift `theta_s omega(.) = omega(. + s)
//! - omega(s)`, and the pathwise conversion process `z(t, omega) =
//! exp(-eps * omega(t))` that removes the Stratonovich noise from the
//! momentum equation.
//!
//! Every Gaussian draw is keyed by `(seed, stream, index)`, so paths are pure
//! functions of their seed: extension, Brownian-bridge refinement and
//! theta-shifts are all reproducible, and refinement leaves previously
//! sampled values bit-identical.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// One standard normal draw, a pure function of `(seed, stream, index)`.
fn keyed_normal(seed: u64, stream: u64, index: i64) -> f64 {
    let mut s = [0u8; 32];
    let a = splitmix64(seed ^ 0xd1b54a32d192ed03);
    let b = splitmix64(a ^ stream.wrapping_mul(0x2545f4914f6cdd1d));
    let c = splitmix64(b ^ (index as u64).wrapping_mul(0x9e3779b97f4a7c15));
    let d = splitmix64(c);
    s[0..8].copy_from_slice(&a.to_le_bytes());
    s[8..16].copy_from_slice(&b.to_le_bytes());
    s[16..24].copy_from_slice(&c.to_le_bytes());
    s[24..32].copy_from_slice(&d.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(s);
    StandardNormal.sample(&mut rng)
}

/// Noise intensity; `epsilon = 0` degenerates to the deterministic system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub epsilon: f64,
}

impl NoiseParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise intensity must be nonnegative, got {epsilon}"
            )));
        }
        Ok(NoiseParams { epsilon })
    }
}

/// A seeded two-sided piecewise-linear Brownian path with `omega(0) = 0`.
///
/// Values are stored on the grid of the *unshifted* path; a theta-shift is
/// carried as an exact `(shift_t, shift_w)` anchor so that composed shifts
/// satisfy the group law identically.
#[derive(Debug, Clone)]
pub struct WienerPath {
    seed: u64,
    base_dt: f64,
    level: u32,
    /// grid index range at the current level; value `i` sits at `t = i * dt_w`
    i_min: i64,
    i_max: i64,
    values: Vec<f64>,
    /// declared local window (in shifted time)
    t_min: f64,
    t_max: f64,
    shift_t: f64,
    shift_w: f64,
    /// set by the synthetic-path constructor; disables seeded extension
    frozen: bool,
}

fn div_floor(a: i64, b: i64) -> i64 {
    let q = a / b;
    if a % b != 0 && (a < 0) != (b < 0) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    -div_floor(-a, b)
}

/// Deterministic construction of grid values: a level-0 two-sided walk from
/// `omega(0) = 0`, then `level` rounds of Brownian-bridge midpoint insertion.
/// Returns values for global indices `i_min..=i_max` at the target level.
fn build_values(seed: u64, base_dt: f64, level: u32, i_min: i64, i_max: i64) -> Vec<f64> {
    let scale = 1i64 << level;
    let mut lo = div_floor(i_min, scale).min(0);
    let hi = div_ceil(i_max, scale).max(0);
    // level-0 walk, increments keyed by interval index
    let sqrt_dt = base_dt.sqrt();
    let mut vals = vec![0.0f64; (hi - lo + 1) as usize];
    let zero_pos = (-lo) as usize;
    for i in 0..hi {
        let idx = zero_pos + i as usize;
        vals[idx + 1] = vals[idx] + sqrt_dt * keyed_normal(seed, 0, i);
    }
    for i in 0..-lo {
        let idx = zero_pos - i as usize;
        vals[idx - 1] = vals[idx] - sqrt_dt * keyed_normal(seed, 0, -i - 1);
    }
    // bridge refinement; at round l the pre-refinement spacing is
    // base_dt / 2^{l-1} and the midpoint standard deviation is half its sqrt
    for l in 1..=level {
        let dt = base_dt / (1u64 << (l - 1)) as f64;
        let half_sd = 0.5 * dt.sqrt();
        let mut fine = vec![0.0f64; vals.len() * 2 - 1];
        for (j, &v) in vals.iter().enumerate() {
            fine[2 * j] = v;
        }
        for j in 0..vals.len() - 1 {
            let coarse_index = lo + j as i64;
            fine[2 * j + 1] = 0.5 * (vals[j] + vals[j + 1])
                + half_sd * keyed_normal(seed, l as u64, coarse_index);
        }
        vals = fine;
        lo *= 2;
    }
    let start = (i_min - lo) as usize;
    let end = (i_max - lo) as usize;
    vals[start..=end].to_vec()
}

impl WienerPath {
    /// Samples a fresh path on `[t_min, t_max]` (must straddle 0) at
    /// resolution `dt_w`.
    pub fn sample(seed: u64, t_min: f64, t_max: f64, dt_w: f64) -> Result<Self> {
        if !(t_min <= 0.0 && t_max >= 0.0) || !t_min.is_finite() || !t_max.is_finite() {
            return Err(Error::BadPathWindow(t_min, t_max));
        }
        if !(dt_w > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt_w must be positive, got {dt_w}"
            )));
        }
        let i_min = (t_min / dt_w).floor() as i64;
        let i_max = (t_max / dt_w).ceil() as i64;
        let values = build_values(seed, dt_w, 0, i_min, i_max);
        Ok(WienerPath {
            seed,
            base_dt: dt_w,
            level: 0,
            i_min,
            i_max,
            values,
            t_min,
            t_max,
            shift_t: 0.0,
            shift_w: 0.0,
            frozen: false,
        })
    }

    /// Synthetic path from explicit grid values (for diagnostics and tests);
    /// `values[j]` sits at `t = (i_min + j) * dt_w`. Not extendable.
    pub fn from_values(dt_w: f64, i_min: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || !(dt_w > 0.0) {
            return Err(Error::InvalidParameter("empty synthetic path".into()));
        }
        let i_max = i_min + values.len() as i64 - 1;
        if i_min > 0 || i_max < 0 {
            return Err(Error::BadPathWindow(
                i_min as f64 * dt_w,
                i_max as f64 * dt_w,
            ));
        }
        let zero = values[(-i_min) as usize];
        if zero != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "synthetic path must satisfy omega(0) = 0, got {zero}"
            )));
        }
        Ok(WienerPath {
            seed: 0,
            base_dt: dt_w,
            level: 0,
            i_min,
            i_max,
            values,
            t_min: i_min as f64 * dt_w,
            t_max: i_max as f64 * dt_w,
            shift_t: 0.0,
            shift_w: 0.0,
            frozen: true,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Current grid resolution.
    pub fn dt_w(&self) -> f64 {
        self.base_dt / (1u64 << self.level) as f64
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    fn base_window(&self) -> (f64, f64) {
        let dt = self.dt_w();
        (self.i_min as f64 * dt, self.i_max as f64 * dt)
    }

    /// Piecewise-linear evaluation on the unshifted grid. Panics if `t` is
    /// outside the stored base window; use [`covering`](Self::covering) first.
    fn base_eval(&self, t: f64) -> f64 {
        let dt = self.dt_w();
        let s = t / dt;
        let i = s.floor() as i64;
        let (lo, hi) = (self.i_min, self.i_max);
        assert!(
            i >= lo && i <= hi,
            "time {t} outside stored path window [{}, {}]",
            lo as f64 * dt,
            hi as f64 * dt
        );
        let j = (i - lo) as usize;
        if i == hi {
            return self.values[j];
        }
        let frac = s - i as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }

    /// Path value at shifted time `t`: `omega(t)` of this (possibly shifted)
    /// path.
    pub fn omega(&self, t: f64) -> f64 {
        self.base_eval(t + self.shift_t) - self.shift_w
    }

    /// Returns a path whose stored window covers `[t_lo, t_hi]` in shifted
    /// time, extending with fresh seeded increments where necessary.
    pub fn covering(&self, t_lo: f64, t_hi: f64) -> Result<WienerPath> {
        let dt = self.dt_w();
        let need_lo = (t_lo.min(self.t_min) + self.shift_t).min(self.base_window().0);
        let need_hi = (t_hi.max(self.t_max) + self.shift_t).max(self.base_window().1);
        let i_min = (need_lo / dt).floor() as i64;
        let i_max = (need_hi / dt).ceil() as i64;
        if i_min >= self.i_min && i_max <= self.i_max {
            let mut out = self.clone();
            out.t_min = out.t_min.min(t_lo);
            out.t_max = out.t_max.max(t_hi);
            return Ok(out);
        }
        if self.frozen {
            return Err(Error::InsufficientWindow {
                need: t_lo,
                have: self.t_min,
            });
        }
        let values = build_values(self.seed, self.base_dt, self.level, i_min, i_max);
        debug_assert!({
            // previously stored values are preserved bit-identically
            let off = (self.i_min - i_min) as usize;
            self.values
                .iter()
                .enumerate()
                .all(|(j, &v)| values[off + j] == v)
        });
        Ok(WienerPath {
            i_min,
            i_max,
            values,
            t_min: self.t_min.min(t_lo),
            t_max: self.t_max.max(t_hi),
            ..self.clone()
        })
    }

    /// Halves the grid spacing by Brownian-bridge midpoint insertion.
    /// Previously sampled grid values are preserved bit-identically.
    pub fn refine(&self) -> WienerPath {
        if self.frozen {
            // synthetic paths refine by linear interpolation (no randomness)
            let mut fine = vec![0.0; self.values.len() * 2 - 1];
            for (j, &v) in self.values.iter().enumerate() {
                fine[2 * j] = v;
            }
            for j in 0..self.values.len() - 1 {
                fine[2 * j + 1] = 0.5 * (self.values[j] + self.values[j + 1]);
            }
            return WienerPath {
                level: self.level + 1,
                i_min: self.i_min * 2,
                i_max: self.i_max * 2,
                values: fine,
                ..self.clone()
            };
        }
        let level = self.level + 1;
        let i_min = self.i_min * 2;
        let i_max = self.i_max * 2;
        let values = build_values(self.seed, self.base_dt, level, i_min, i_max);
        WienerPath {
            level,
            i_min,
            i_max,
            values,
            ..self.clone()
        }
    }

    /// The shift `theta_s`: `(theta_s omega)(t) = omega(t + s) - omega(s)`.
    /// The declared window is preserved; the base path auto-extends.
    pub fn shift_theta(&self, s: f64) -> Result<WienerPath> {
        let shifted = self.covering(self.t_min.min(s + self.t_min), self.t_max.max(s + self.t_max))?;
        let shift_w = shifted.base_eval(s + shifted.shift_t);
        Ok(WienerPath {
            shift_t: shifted.shift_t + s,
            shift_w,
            t_min: self.t_min,
            t_max: self.t_max,
            ..shifted
        })
    }

    /// Conversion process `z(t, omega) = exp(-eps * omega(t))`. Rejects the
    /// run (never clamps silently) if the exponent would overflow.
    pub fn z_of(&self, t: f64, epsilon: f64) -> Result<f64> {
        let w = self.omega(t);
        let expo = epsilon * w;
        if expo.abs() > 700.0 {
            return Err(Error::ZOverflow(expo.abs()));
        }
        Ok((-expo).exp())
    }

    /// Writes `t,omega` CSV rows over the declared window.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,omega")?;
        let dt = self.dt_w();
        let j_lo = (self.t_min / dt).ceil() as i64;
        let j_hi = (self.t_max / dt).floor() as i64;
        for j in j_lo..=j_hi {
            let t = j as f64 * dt;
            writeln!(w, "{},{}", t, self.omega(t))?;
        }
        Ok(())
    }

    /// Sublinearity report: max of `|omega(t)/t|` over `|t| >= T0` for dyadic
    /// thresholds `T0`. Statistical, report-only; `flagged` marks paths with
    /// no decreasing trend (e.g. linear growth).
    pub fn sublinearity_check(&self) -> Result<SublinearityReport> {
        let horizon = (-self.t_min).max(self.t_max);
        if horizon < 100.0 {
            return Err(Error::InvalidParameter(format!(
                "sublinearity check needs horizon >= 100, got {horizon}"
            )));
        }
        let mut t0 = horizon;
        let mut levels = Vec::new();
        while t0 >= horizon / 16.0 && t0 >= 1.0 {
            levels.push(t0);
            t0 /= 2.0;
        }
        levels.reverse();
        let dt = self.dt_w();
        let mut rows = Vec::new();
        for &t0 in &levels {
            let mut worst = 0.0f64;
            let mut t = t0;
            while t <= self.t_max + 1e-12 {
                worst = worst.max((self.omega(t) / t).abs());
                t += dt;
            }
            let mut t = -t0;
            while t >= self.t_min - 1e-12 {
                worst = worst.max((self.omega(t) / t).abs());
                t -= dt;
            }
            rows.push((t0, worst));
        }
        let first = rows.first().map(|r| r.1).unwrap_or(0.0);
        let last = rows.last().map(|r| r.1).unwrap_or(0.0);
        // a genuine Brownian ratio decays roughly like T0^{-1/2} over the
        // dyadic range; a constant ratio indicates (sub)linear drift
        let decreasing = last <= 0.7 * first;
        let flagged = !(decreasing || last < 0.05);
        Ok(SublinearityReport {
            thresholds: rows,
            decreasing,
            flagged,
        })
    }
}

/// Output of [`WienerPath::sublinearity_check`].
#[derive(Debug, Clone)]
pub struct SublinearityReport {
    /// `(T0, max over |t| >= T0 of |omega(t)/t|)`, increasing `T0`
    pub thresholds: Vec<(f64, f64)>,
    pub decreasing: bool,
    pub flagged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_zero_at_origin() {
        for seed in [0u64, 1, 42, u64::MAX] {
            let p = WienerPath::sample(seed, -2.0, 2.0, 0.25).unwrap();
            assert_eq!(p.omega(0.0), 0.0);
        }
    }

    #[test]
    fn same_seed_gives_identical_paths() {
        let a = WienerPath::sample(9, -4.0, 4.0, 0.125).unwrap();
        let b = WienerPath::sample(9, -4.0, 4.0, 0.125).unwrap();
        for j in -32..=32 {
            let t = j as f64 * 0.125;
            assert_eq!(a.omega(t), b.omega(t));
        }
    }

    #[test]
    fn ensemble_variance_at_unit_time() {
        let n = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for seed in 0..n {
            let p = WienerPath::sample(seed, 0.0, 1.0, 0.125).unwrap();
            let w = p.omega(1.0);
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(
            var > 0.94 && var < 1.06,
            "sample variance {var} outside CLT band"
        );
    }

    #[test]
    fn refinement_preserves_coarse_values_bit_identically() {
        let p = WienerPath::sample(5, -2.0, 2.0, 0.5).unwrap();
        let r = p.refine();
        let rr = r.refine();
        for j in -4..=4 {
            let t = j as f64 * 0.5;
            assert_eq!(p.omega(t), r.omega(t));
            assert_eq!(p.omega(t), rr.omega(t));
        }
        assert_eq!(r.dt_w(), 0.25);
        // midpoints differ from linear interpolation (bridge adds noise)
        let mid = r.omega(0.25);
        let lin = 0.5 * (p.omega(0.0) + p.omega(0.5));
        assert!(mid != lin);
    }

    #[test]
    fn extension_preserves_existing_values() {
        let p = WienerPath::sample(77, -1.0, 1.0, 0.25).unwrap();
        let q = p.covering(-8.0, 8.0).unwrap();
        for j in -4..=4 {
            let t = j as f64 * 0.25;
            assert_eq!(p.omega(t), q.omega(t));
        }
        assert!(q.t_min() <= -8.0 && q.t_max() >= 8.0);
    }

    #[test]
    fn shift_identity_and_inverse() {
        let p = WienerPath::sample(11, -4.0, 4.0, 0.25).unwrap();
        let s0 = p.shift_theta(0.0).unwrap();
        for j in -16..=16 {
            let t = j as f64 * 0.25;
            assert_eq!(p.omega(t), s0.omega(t));
        }
        let fwd = p.shift_theta(1.5).unwrap();
        let back = fwd.shift_theta(-1.5).unwrap();
        for j in -16..=16 {
            let t = j as f64 * 0.25;
            assert_eq!(p.omega(t), back.omega(t));
        }
    }

    #[test]
    fn shift_group_law_on_grid_points() {
        let p = WienerPath::sample(13, -8.0, 8.0, 0.25).unwrap();
        let (a, b) = (1.25, -2.5);
        let composed = p.shift_theta(b).unwrap().shift_theta(a).unwrap();
        let direct = p.shift_theta(a + b).unwrap();
        for j in -16..=16 {
            let t = j as f64 * 0.25;
            assert!((composed.omega(t) - direct.omega(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn z_basics() {
        let p = WienerPath::sample(17, -2.0, 2.0, 0.25).unwrap();
        assert_eq!(p.z_of(0.0, 0.7).unwrap(), 1.0);
        for j in -8..=8 {
            let t = j as f64 * 0.25;
            assert_eq!(p.z_of(t, 0.0).unwrap(), 1.0);
            // z is exactly the exponential of -eps*omega (Stratonovich form)
            assert_eq!(p.z_of(t, 0.7).unwrap(), (-0.7 * p.omega(t)).exp());
        }
    }

    #[test]
    fn z_cocycle_identity() {
        let p = WienerPath::sample(19, -8.0, 8.0, 0.25).unwrap();
        let eps = 0.3;
        for (s, t) in [(0.5, 1.0), (-1.25, 2.0), (2.0, -0.75), (-3.0, -1.5)] {
            let shifted = p.shift_theta(s).unwrap();
            let lhs = shifted.z_of(t, eps).unwrap() * p.z_of(s, eps).unwrap();
            let rhs = p.z_of(t + s, eps).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
        }
    }

    #[test]
    fn z_overflow_is_rejected() {
        // omega(1) = 1e4 on a synthetic path; eps = 1 overflows the exponent
        let p = WienerPath::from_values(1.0, 0, vec![0.0, 1e4]).unwrap();
        assert!(matches!(p.z_of(1.0, 1.0), Err(Error::ZOverflow(_))));
    }

    #[test]
    fn sublinearity_flags_linear_path() {
        let n = 200;
        let vals: Vec<f64> = (0..=n).map(|j| j as f64).collect();
        let p = WienerPath::from_values(1.0, 0, vals).unwrap();
        let rep = p.sublinearity_check().unwrap();
        assert!(rep.flagged);
    }

    #[test]
    fn sublinearity_passes_zero_path() {
        let p = WienerPath::from_values(1.0, 0, vec![0.0; 201]).unwrap();
        let rep = p.sublinearity_check().unwrap();
        assert!(!rep.flagged);
    }

    #[test]
    fn sublinearity_monte_carlo() {
        // law-of-iterated-logarithm scale: |omega(t)/t| at |t| = 1000 is small
        let mut ok = 0;
        let total = 100;
        for seed in 0..total {
            let p = WienerPath::sample(seed, -1000.0, 1000.0, 1.0).unwrap();
            let r1 = (p.omega(1000.0) / 1000.0).abs();
            let r2 = (p.omega(-1000.0) / 1000.0).abs();
            if r1 < 0.2 && r2 < 0.2 {
                ok += 1;
            }
        }
        assert!(ok >= 95, "only {ok}/{total} paths below 0.2 at |t|=1000");
    }

    #[test]
    fn rejects_bad_windows() {
        assert!(WienerPath::sample(1, 1.0, 2.0, 0.1).is_err());
        assert!(WienerPath::sample(1, -1.0, -0.5, 0.1).is_err());
        assert!(WienerPath::sample(1, -1.0, 1.0, 0.0).is_err());
    }
}
