//! Layer building blocks over the tape: linear maps and recurrent cells.

use alloc::format;
use alloc::string::String;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};

fn check_width<F: Scalar>(tape: &Tape<'_, F>, op: &'static str, x: Var, width: usize) -> Result<()> {
    let s = tape.shape(x);
    if s.len() != 2 || s[1] != width {
        return Err(Error::Shape {
            op,
            lhs: s.to_vec(),
            rhs: alloc::vec![width],
        });
    }
    Ok(())
}

/// `y = x·W (+ b)` on rows of a `[n, fan_in]` input.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
    pub bias: bool,
}

impl Linear {
    pub fn new(name: impl Into<String>, fan_in: usize, fan_out: usize, bias: bool) -> Self {
        Linear {
            name: name.into(),
            fan_in,
            fan_out,
            bias,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        store.init_weight(self.weight_name(), self.fan_in, self.fan_out, rng);
        if self.bias {
            store.init_zeros(self.bias_name(), &[self.fan_out]);
        }
    }

    pub fn forward<F: Scalar>(&self, tape: &mut Tape<'_, F>, x: Var) -> Result<Var> {
        check_width(tape, "linear", x, self.fan_in)?;
        let w = tape.param(&self.weight_name())?;
        let y = tape.matmul(x, w)?;
        if self.bias {
            let b = tape.param(&self.bias_name())?;
            tape.add_bias(y, b)
        } else {
            Ok(y)
        }
    }
}

/// Gated recurrent unit:
///
/// ```text
/// r  = σ(m·W_r + h·U_r + b_r)
/// u  = σ(m·W_u + h·U_u + b_u)
/// h̃  = tanh(m·W_c + (r⊙h)·U_c + b_c)
/// h' = (1 − u)⊙h + u⊙h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub const GATES: [&'static str; 3] = ["r", "u", "c"];

    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        GruCell {
            name: name.into(),
            input,
            hidden,
        }
    }

    pub fn param_name(&self, kind: &str, gate: &str) -> String {
        format!("{}.{kind}_{gate}", self.name)
    }

    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        for g in Self::GATES {
            store.init_weight(self.param_name("w", g), self.input, self.hidden, rng);
            store.init_weight(self.param_name("u", g), self.hidden, self.hidden, rng);
            store.init_zeros(self.param_name("b", g), &[self.hidden]);
        }
    }

    fn gate<F: Scalar>(&self, tape: &mut Tape<'_, F>, g: &str, m: Var, h: Var) -> Result<Var> {
        let w = tape.param(&self.param_name("w", g))?;
        let u = tape.param(&self.param_name("u", g))?;
        let b = tape.param(&self.param_name("b", g))?;
        let xm = tape.matmul(m, w)?;
        let xh = tape.matmul(h, u)?;
        let s = tape.add(xm, xh)?;
        tape.add_bias(s, b)
    }

    /// `h: [n, hidden]`, `m: [n, input]`.
    pub fn forward<F: Scalar>(&self, tape: &mut Tape<'_, F>, h: Var, m: Var) -> Result<Var> {
        check_width(tape, "gru_cell h", h, self.hidden)?;
        check_width(tape, "gru_cell m", m, self.input)?;
        if tape.shape(h)[0] != tape.shape(m)[0] {
            return Err(Error::Shape {
                op: "gru_cell",
                lhs: tape.shape(h).to_vec(),
                rhs: tape.shape(m).to_vec(),
            });
        }
        let pre_r = self.gate(tape, "r", m, h)?;
        let r = tape.sigmoid(pre_r);
        let pre_u = self.gate(tape, "u", m, h)?;
        let u = tape.sigmoid(pre_u);
        let rh = tape.mul(r, h)?;
        let pre_c = self.gate(tape, "c", m, rh)?;
        let cand = tape.tanh(pre_c);
        // (1 − u)⊙h + u⊙h̃ = h + u⊙(h̃ − h)
        let diff = tape.sub(cand, h)?;
        let step = tape.mul(u, diff)?;
        tape.add(h, step)
    }
}

/// Standard LSTM cell with one fused gate matrix over `[x ‖ h]`, gate
/// order input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub name: String,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(name: impl Into<String>, input: usize, hidden: usize) -> Self {
        LstmCell {
            name: name.into(),
            input,
            hidden,
        }
    }

    pub fn init<F: Scalar, R: Rng + ?Sized>(&self, store: &mut ParamStore<F>, rng: &mut R) {
        store.init_weight(
            format!("{}.w", self.name),
            self.input + self.hidden,
            4 * self.hidden,
            rng,
        );
        store.init_zeros(format!("{}.b", self.name), &[4 * self.hidden]);
    }

    /// Returns the new `(h, c)`.
    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<'_, F>,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        check_width(tape, "lstm x", x, self.input)?;
        check_width(tape, "lstm h", h, self.hidden)?;
        let w = tape.param(&format!("{}.w", self.name))?;
        let b = tape.param(&format!("{}.b", self.name))?;
        let xh = tape.concat(&[x, h])?;
        let pre = tape.matmul(xh, w)?;
        let pre = tape.add_bias(pre, b)?;
        let d = self.hidden;
        let i = tape.slice(pre, 0, d)?;
        let i = tape.sigmoid(i);
        let f = tape.slice(pre, d, 2 * d)?;
        let f = tape.sigmoid(f);
        let g = tape.slice(pre, 2 * d, 3 * d)?;
        let g = tape.tanh(g);
        let o = tape.slice(pre, 3 * d, 4 * d)?;
        let o = tape.sigmoid(o);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_new = tape.add(fc, ig)?;
        let tc = tape.tanh(c_new);
        let h_new = tape.mul(o, tc)?;
        Ok((h_new, c_new))
    }
}
