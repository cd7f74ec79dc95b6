//! Volumes: closed forms where the tree allows them, seeded Monte Carlo
//! otherwise.

use super::{BodyError, BodyExpr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VolumeMode {
    Exact,
    MonteCarlo { seed: u64, samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Zero for exact values.
    pub stderr: f64,
}

/// Side of the hyperplane `{p_n = 0}` (last coordinate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HalfSpace {
    Plus,
    Minus,
}

impl HalfSpace {
    fn sign(self) -> f64 {
        match self {
            HalfSpace::Plus => 1.0,
            HalfSpace::Minus => -1.0,
        }
    }
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / d as f64 * unit_ball_volume(d - 2),
    }
}

fn double_factorial(m: i64) -> f64 {
    // (-1)!! = 0!! = 1
    let mut acc = 1.0;
    let mut k = m;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// Volume of `{p_n <= 0}` inside the ball of radius `radius` in `R^{2n}`
/// whose centre has last coordinate `a` (other coordinates are irrelevant).
pub fn half_ball_volume(n: usize, a: f64, radius: f64, side: HalfSpace) -> f64 {
    let total = unit_ball_volume(2 * n);
    let rel = -(a / radius).clamp(-1.0, 1.0) * side.sign();
    // side Plus with centre a mirrors side Minus with centre -a
    let small_cap = |b: f64| -> f64 {
        // cap below a hyperplane at distance b >= 0 from the centre
        let s = (1.0 - b * b).max(0.0).sqrt();
        let theta = s.asin();
        let c = theta.cos();
        let sum: f64 = (0..n)
            .map(|j| {
                let top = 2 * (n - j) as i64 - 2;
                double_factorial(top) / double_factorial(top + 1) * s.powi((2 * (n - j) - 1) as i32)
            })
            .sum();
        let nfact: f64 = (1..=n).map(|i| i as f64).product();
        std::f64::consts::PI.powi(n as i32 - 1) / nfact * (theta - c * sum)
    };
    let unit = if rel >= 0.0 { small_cap(rel) } else { total - small_cap(-rel) };
    unit * radius.powi(2 * n as i32)
}

impl BodyExpr {
    pub fn volume(&self, mode: VolumeMode) -> Result<VolumeEstimate, BodyError> {
        self.validate()?;
        match mode {
            VolumeMode::Exact => self
                .exact_volume()
                .map(|value| VolumeEstimate { value, stderr: 0.0 })
                .ok_or_else(|| BodyError::Unsupported("exact volume".into())),
            VolumeMode::MonteCarlo { seed, samples } => self.mc_volume(seed, samples, None),
        }
    }

    /// Volume of the part of the body in `{±p_n >= 0}`.
    pub fn volume_half(&self, side: HalfSpace, mode: VolumeMode) -> Result<VolumeEstimate, BodyError> {
        self.validate()?;
        match mode {
            VolumeMode::Exact => self
                .simplified()
                .exact_half(side)
                .map(|value| VolumeEstimate { value, stderr: 0.0 })
                .ok_or_else(|| BodyError::Unsupported("exact half volume".into())),
            VolumeMode::MonteCarlo { seed, samples } => self.mc_volume(seed, samples, Some(side)),
        }
    }

    fn exact_volume(&self) -> Option<f64> {
        let d = self.dim();
        Some(match self {
            BodyExpr::Ellipsoid { radii } => {
                unit_ball_volume(d) * radii.iter().map(|r| r * r).product::<f64>()
            }
            BodyExpr::Polydisc { radii } => {
                radii.iter().map(|r| std::f64::consts::PI * r * r).product()
            }
            BodyExpr::Box { intervals } => intervals
                .iter()
                .map(|[a, b, c, dd]| (b - a) * (c + dd))
                .product(),
            BodyExpr::Ball { radius, .. } => unit_ball_volume(d) * radius.powi(d as i32),
            BodyExpr::Cuboid { lower, upper } => {
                lower.iter().zip(upper).map(|(l, u)| u - l).product()
            }
            BodyExpr::AxisEllipsoid { semi_axes } => {
                unit_ball_volume(d) * semi_axes.iter().product::<f64>()
            }
            BodyExpr::Product { left, right } => left.exact_volume()? * right.exact_volume()?,
            BodyExpr::LagrangianProduct { q, p } => q.exact_volume()? * p.exact_volume()?,
            BodyExpr::Scale { factor, body } => factor.powi(d as i32) * body.exact_volume()?,
            BodyExpr::Translate { body, .. } => body.exact_volume()?,
            _ => return None,
        })
    }

    fn exact_half(&self, side: HalfSpace) -> Option<f64> {
        let d = self.dim();
        let frac = |lo: f64, hi: f64| -> f64 {
            let len = match side {
                HalfSpace::Plus => (hi - lo.max(0.0)).max(0.0),
                HalfSpace::Minus => (hi.min(0.0) - lo).max(0.0),
            };
            len / (hi - lo)
        };
        Some(match self {
            BodyExpr::Ellipsoid { .. } | BodyExpr::Polydisc { .. } | BodyExpr::AxisEllipsoid { .. } => {
                0.5 * self.exact_volume()?
            }
            BodyExpr::Ball { center, radius } => {
                if !d.is_multiple_of(2) {
                    return None;
                }
                half_ball_volume(d / 2, center[d - 1], *radius, side)
            }
            BodyExpr::Box { intervals } => {
                let [_, _, c, dd] = intervals[intervals.len() - 1];
                self.exact_volume()? * frac(-c, dd)
            }
            BodyExpr::Cuboid { lower, upper } => self.exact_volume()? * frac(lower[d - 1], upper[d - 1]),
            BodyExpr::Product { left, right } => left.exact_volume()? * right.exact_half(side)?,
            BodyExpr::LagrangianProduct { q, p } => q.exact_volume()? * p.exact_half(side)?,
            BodyExpr::Scale { factor, body } => factor.powi(d as i32) * body.exact_half(side)?,
            BodyExpr::Translate { shift, body } if shift[d - 1] == 0.0 => body.exact_half(side)?,
            _ => return None,
        })
    }

    /// Axis-aligned bounding box from supports along `±e_i`.
    pub(crate) fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>), BodyError> {
        let d = self.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        let mut e = vec![0.0; d];
        let mut s = vec![0.0; d];
        for i in 0..d {
            e[i] = 1.0;
            hi[i] = self.support_into(&e, &mut s)?;
            e[i] = -1.0;
            lo[i] = -self.support_into(&e, &mut s)?;
            e[i] = 0.0;
        }
        Ok((lo, hi))
    }

    fn mc_volume(&self, seed: u64, samples: usize, side: Option<HalfSpace>) -> Result<VolumeEstimate, BodyError> {
        if samples < 1000 {
            return Err(BodyError::TooFewSamples(samples));
        }
        let (mut lo, mut hi) = self.bounding_box()?;
        let d = self.dim();
        if let Some(side) = side {
            match side {
                HalfSpace::Plus => lo[d - 1] = lo[d - 1].max(0.0),
                HalfSpace::Minus => hi[d - 1] = hi[d - 1].min(0.0),
            }
            if hi[d - 1] <= lo[d - 1] {
                return Ok(VolumeEstimate { value: 0.0, stderr: 0.0 });
            }
        }
        let box_vol: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; d];
        let mut hits = 0usize;
        for _ in 0..samples {
            for i in 0..d {
                x[i] = rng.gen_range(lo[i]..hi[i]);
            }
            if self.inside(&x, false)? {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        Ok(VolumeEstimate {
            value: box_vol * p,
            stderr: box_vol * (p * (1.0 - p) / samples as f64).sqrt(),
        })
    }
}

/// Mean over the unit sphere of the support function of `(K - K) / 2`.
pub fn mean_width_symmetrized(body: &BodyExpr, seed: u64, samples: usize) -> Result<VolumeEstimate, BodyError> {
    body.validate()?;
    let d = body.dim();
    let mut s = vec![0.0; d];
    let mut sym = |u: &[f64]| -> Result<f64, BodyError> {
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        Ok(0.5 * (body.support_into(u, &mut s)? + body.support_into(&neg, &mut s)?))
    };
    if d == 1 {
        // the sphere is {+1, -1} and h of the symmetrized body is even
        return Ok(VolumeEstimate { value: sym(&[1.0])?, stderr: 0.0 });
    }
    if samples < 1000 {
        return Err(BodyError::TooFewSamples(samples));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut u = vec![0.0; d];
    let mut drawn = 0usize;
    while drawn < samples {
        for ui in u.iter_mut() {
            *ui = StandardNormal.sample(&mut rng);
        }
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-12 {
            continue;
        }
        u.iter_mut().for_each(|x| *x /= n);
        let v = sym(&u)?;
        sum += v;
        sum2 += v * v;
        drawn += 1;
    }
    let m = sum / samples as f64;
    let var = (sum2 / samples as f64 - m * m).max(0.0);
    Ok(VolumeEstimate { value: m, stderr: (var / samples as f64).sqrt() })
}
