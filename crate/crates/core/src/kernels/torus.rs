use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::kernels::{InitialDistribution, MarkovKernel};
use crate::rng::RngStream;

/// Δt-skeleton of the Euler–Maruyama discretization of overdamped Langevin
/// dynamics in the potential `U(x) = -cos(2πx)` on the circle `[0, 1)`:
///
/// `X ← mod(X − 2π sin(2πX)·δt + sqrt(2δt/β)·α, 1)`
///
/// applied `skeleton` times per kernel step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusLangevinKernel {
    dt: f64,
    beta: f64,
    skeleton: usize,
    noise_scale: f64,
}

impl TorusLangevinKernel {
    pub fn new(dt: f64, beta: f64, skeleton: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Argument(format!("inner step dt = {dt} must be positive")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Argument(format!("beta = {beta} must be positive")));
        }
        if skeleton == 0 {
            return Err(Error::Argument("skeleton length must be at least 1".into()));
        }
        Ok(TorusLangevinKernel {
            dt,
            beta,
            skeleton,
            noise_scale: (2.0 * dt / beta).sqrt(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn skeleton(&self) -> usize {
        self.skeleton
    }

    /// One inner Euler step driven by the standard normal `alpha`.
    #[inline]
    pub fn euler_step(&self, x: f64, alpha: f64) -> f64 {
        let y = x - TAU * (TAU * x).sin() * self.dt + self.noise_scale * alpha;
        wrap_unit(y)
    }
}

/// Reduce to `[0, 1)`; `rem_euclid` can round tiny negatives up to 1.0.
#[inline]
fn wrap_unit(y: f64) -> f64 {
    let r = y.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl MarkovKernel for TorusLangevinKernel {
    type State = f64;

    fn check_state(&self, x: f64) -> Result<()> {
        if (0.0..1.0).contains(&x) {
            Ok(())
        } else {
            Err(Error::Domain(format!("torus state {x} not in [0, 1)")))
        }
    }

    #[inline]
    fn step_unchecked(&self, mut x: f64, rng: &mut RngStream) -> f64 {
        for _ in 0..self.skeleton {
            x = self.euler_step(x, rng.standard_normal());
        }
        x
    }
}

/// `ν(dx) ∝ exp(β cos 2πx) dx` on `[0, 1)`, sampled by rejection from the
/// uniform envelope with bound `exp(β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGibbs {
    beta: f64,
}

impl TorusGibbs {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::Argument(format!("beta = {beta} must be non-negative")));
        }
        Ok(TorusGibbs { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Unnormalized density.
    pub fn density(&self, x: f64) -> f64 {
        (self.beta * (2.0 * PI * x).cos()).exp()
    }
}

impl InitialDistribution<f64> for TorusGibbs {
    fn sample(&self, rng: &mut RngStream) -> f64 {
        loop {
            let x = rng.uniform();
            let accept = (self.beta * ((TAU * x).cos() - 1.0)).exp();
            if rng.uniform() < accept {
                return x;
            }
        }
    }
}
