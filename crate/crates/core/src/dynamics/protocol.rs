use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Linear interaction quench: `g(t) = g_i + (g_f - g_i) t/τ` on `[0, τ]`,
/// then `g_f` until `total_time`. `τ = 0` is an abrupt quench.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchProtocol {
    pub g_i: f64,
    pub g_f: f64,
    pub tau: f64,
    pub total_time: f64,
    pub dt_out: f64,
}

impl QuenchProtocol {
    pub const DEFAULT_TOTAL_TIME: f64 = 500.0;
    pub const DEFAULT_DT_OUT: f64 = 0.1;

    pub fn new(g_i: f64, g_f: f64, tau: f64) -> Self {
        QuenchProtocol {
            g_i,
            g_f,
            tau,
            total_time: Self::DEFAULT_TOTAL_TIME,
            dt_out: Self::DEFAULT_DT_OUT,
        }
    }

    pub fn with_total_time(mut self, total_time: f64) -> Self {
        self.total_time = total_time;
        self
    }

    pub fn with_dt_out(mut self, dt_out: f64) -> Self {
        self.dt_out = dt_out;
        self
    }

    pub fn amplitude(&self) -> f64 {
        self.g_f - self.g_i
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.g_i, self.g_f, self.tau, self.total_time, self.dt_out]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite protocol parameter".into()));
        }
        if self.tau < 0.0 {
            return Err(Error::InvalidParameter(format!("ramp time {} < 0", self.tau)));
        }
        if self.tau > self.total_time {
            return Err(Error::InvalidParameter(format!(
                "ramp time {} exceeds total time {}",
                self.tau, self.total_time
            )));
        }
        if !(self.dt_out > 0.0) || self.dt_out > self.total_time {
            return Err(Error::InvalidParameter(format!("bad output step {}", self.dt_out)));
        }
        Ok(())
    }

    /// `g(t)`.
    pub fn coupling(&self, t: f64) -> f64 {
        if self.tau <= 0.0 || t >= self.tau {
            self.g_f
        } else if t <= 0.0 {
            self.g_i
        } else {
            self.g_i + self.amplitude() * t / self.tau
        }
    }

    /// Number of output intervals; samples sit at `k · dt_out`, `k = 0..=n`.
    pub fn n_intervals(&self) -> usize {
        (self.total_time / self.dt_out - 1e-9).ceil() as usize
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.n_intervals();
        (0..=n)
            .map(|k| (k as f64 * self.dt_out).min(self.total_time))
            .collect()
    }

    pub fn schedule(&self) -> CouplingSchedule {
        let mut knots = vec![(0.0, self.g_i)];
        if self.tau > 0.0 {
            knots.push((self.tau, self.g_f));
        } else {
            knots[0].1 = self.g_f;
        }
        if self.total_time > self.tau {
            knots.push((self.total_time, self.g_f));
        }
        CouplingSchedule { knots }
    }
}

/// Piecewise-linear coupling `g(t)` through `(t, g)` knots.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSchedule {
    knots: Vec<(f64, f64)>,
}

impl CouplingSchedule {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidParameter(
                "schedule needs at least two knots with increasing times".into(),
            ));
        }
        Ok(CouplingSchedule { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn start(&self) -> f64 {
        self.knots[0].0
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    /// `(g(t), dg/dt)` on the segment containing `t` (right-continuous slope).
    pub fn eval(&self, t: f64) -> (f64, f64) {
        if self.knots.len() == 1 {
            return (self.knots[0].1, 0.0);
        }
        let seg = self
            .knots
            .windows(2)
            .position(|w| t < w[1].0)
            .unwrap_or(self.knots.len() - 2);
        let (t0, g0) = self.knots[seg];
        let (t1, g1) = self.knots[seg + 1];
        let slope = (g1 - g0) / (t1 - t0);
        let tc = t.clamp(t0, t1);
        (g0 + slope * (tc - t0), slope)
    }

    pub fn coupling(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    /// Time-reversed schedule `g'(t) = g(start + end - t)`.
    pub fn reversed(&self) -> CouplingSchedule {
        let (a, b) = (self.start(), self.end());
        let mut knots: Vec<(f64, f64)> = self.knots.iter().map(|&(t, g)| (a + b - t, g)).collect();
        knots.reverse();
        CouplingSchedule { knots }
    }
}
