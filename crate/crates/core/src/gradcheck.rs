//! Central finite-difference checks of tape gradients.
//!
//! The tape gradient is computed at the parameters' own precision. The
//! finite differences are always taken on an `f64` copy of the parameters,
//! so an `f32` check measures the error of the `f32` backward pass rather
//! than the cancellation noise of `f32` differencing.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Fault, Tape, Var};

/// A deterministic scalar function of the parameters, buildable at any
/// precision.
pub trait GradFn {
    fn eval<F: Scalar>(&self, tape: &mut Tape<'_, F>) -> Result<Var>;
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound of the relative-error denominator, so entries whose true
    /// derivative is ~0 are compared absolutely.
    pub floor: f64,
    /// Upper bound on checked entries per parameter; `None` checks all.
    /// Entries are taken at an even stride when limited.
    pub max_entries: Option<usize>,
    pub fault: Option<Fault>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            max_entries: None,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }
}

pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

fn eval_f64<G: GradFn>(f: &G, params: &ParamStore<f64>) -> Result<f64> {
    let mut tape = Tape::new(params);
    let loss = f.eval(&mut tape)?;
    Ok(tape.value(loss).item())
}

pub fn grad_check<F: Scalar, G: GradFn>(
    f: &G,
    params: &ParamStore<F>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new(params);
    if let Some(fault) = cfg.fault {
        tape = tape.with_fault(fault);
    }
    let loss = f.eval(&mut tape)?;
    let grads = tape.backward(loss)?;

    let mut shadow: ParamStore<f64> = params.cast();
    let mut report = Vec::new();
    for (name, g) in &grads {
        let n = g.len();
        let stride = match cfg.max_entries {
            Some(m) if m < n => n.div_ceil(m),
            _ => 1,
        };
        let mut worst = 0.0f64;
        let mut checked = 0;
        for i in (0..n).step_by(stride) {
            let orig = shadow.get(name)?.data()[i];
            shadow.get_mut(name)?.data_mut()[i] = orig + cfg.step;
            let up = eval_f64(f, &shadow)?;
            shadow.get_mut(name)?.data_mut()[i] = orig - cfg.step;
            let down = eval_f64(f, &shadow)?;
            shadow.get_mut(name)?.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            let analytic = g.data()[i].as_f64();
            worst = worst.max(rel_error(analytic, numeric, cfg.floor));
            checked += 1;
        }
        report.push(ParamCheck {
            name: name.clone(),
            max_rel_error: worst,
            checked,
            passed: worst < cfg.tolerance,
        });
    }
    Ok(GradCheckReport {
        params: report,
        tolerance: cfg.tolerance,
    })
}
