//! Treatment protocol: injection and heating windows.

use crate::error::{Error, Result};

/// Closed time interval `[start, end]` in seconds.
///
/// A backward-Euler step ending at `t` sees the window as active when
/// `start < t <= end`, so a window `[0, 2400]` with 60 s steps covers steps
/// 1 through 40.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Window { start, end }
    }

    pub fn active_at_step_end(&self, t: f64) -> bool {
        let eps = 1e-9 * self.end.abs().max(1.0);
        t > self.start + eps && t <= self.end + eps
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub injection: Window,
    pub heating: Window,
    /// Injected nanoparticle mass fraction in the blood.
    pub omega_d: f64,
    /// Specific absorption rate in W/kg.
    pub sar: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            injection: Window::new(0.0, 2400.0),
            heating: Window::new(1200.0, 3600.0),
            omega_d: 2.0e-3,
            sar: 2.0e6,
        }
    }
}

impl Protocol {
    pub fn validate(&self, total_time: f64) -> Result<()> {
        for (name, w) in [("injection", self.injection), ("heating", self.heating)] {
            if !(w.start <= w.end) {
                return Err(Error::config(format!(
                    "{name} window starts after it ends ({} > {})",
                    w.start, w.end
                )));
            }
            let tol = 1e-9 * total_time.max(1.0);
            if w.start < -tol || w.end > total_time + tol {
                return Err(Error::config(format!(
                    "{name} window [{}, {}] s lies outside the simulated interval [0, {total_time}] s",
                    w.start, w.end
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.omega_d) {
            return Err(Error::config("injected mass fraction must lie in [0, 1]"));
        }
        if !(self.sar >= 0.0 && self.sar.is_finite()) {
            return Err(Error::config("SAR must be non-negative"));
        }
        Ok(())
    }

    /// Vessel mass fraction imposed during a step ending at `t`.
    pub fn vessel_fraction(&self, t: f64) -> f64 {
        if self.injection.active_at_step_end(t) {
            self.omega_d
        } else {
            0.0
        }
    }

    pub fn injecting(&self, t: f64) -> bool {
        self.injection.active_at_step_end(t)
    }

    /// SAR applied during a step ending at `t`.
    pub fn sar_at(&self, t: f64) -> f64 {
        if self.heating.active_at_step_end(t) {
            self.sar
        } else {
            0.0
        }
    }
}
