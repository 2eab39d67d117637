use faer::Mat;
use serde::{Deserialize, Serialize};

use super::matrix::{norm_sqr, ComplexMatrix, C64, ZERO};
use crate::error::{Error, Result};

/// Named tensor factor of a statevector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub dim: usize,
}

/// Pure (possibly sub-normalized) state on an ordered list of registers.
/// The first register is the most significant digit of the flat index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statevector {
    registers: Vec<Register>,
    amps: Vec<C64>,
}

const NORM_SLACK: f64 = 1e-12;

impl Statevector {
    pub fn new(layout: &[(&str, usize)], amps: Vec<C64>) -> Result<Self> {
        let registers: Vec<Register> = layout
            .iter()
            .map(|&(n, d)| Register {
                name: n.to_string(),
                dim: d,
            })
            .collect();
        for (i, r) in registers.iter().enumerate() {
            if r.dim == 0 {
                return Err(Error::InvalidParameter(format!("register {} has dimension 0", r.name)));
            }
            if registers[..i].iter().any(|q| q.name == r.name) {
                return Err(Error::InvalidParameter(format!("duplicate register {}", r.name)));
            }
        }
        let total: usize = registers.iter().map(|r| r.dim).product();
        if amps.len() != total {
            return Err(Error::DimensionMismatch {
                context: "Statevector::new",
                expected: total,
                found: amps.len(),
            });
        }
        let s = Self { registers, amps };
        let n = s.norm_sqr();
        if !(n <= 1.0 + NORM_SLACK) {
            return Err(Error::InvalidParameter(format!("state has squared norm {n} > 1")));
        }
        Ok(s)
    }

    pub fn single(name: &str, amps: Vec<C64>) -> Result<Self> {
        let d = amps.len();
        Self::new(&[(name, d)], amps)
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    fn position(&self, name: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRegister(name.to_string()))
    }

    pub fn dim_of(&self, name: &str) -> Result<usize> {
        Ok(self.registers[self.position(name)?].dim)
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.registers.len()];
        for k in (0..self.registers.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.registers[k + 1].dim;
        }
        s
    }

    /// Append a new register as the least significant factor: `|self> ⊗ |v>`.
    pub fn append(&self, name: &str, v: &[C64]) -> Result<Self> {
        let mut layout: Vec<(&str, usize)> = self.registers.iter().map(|r| (r.name.as_str(), r.dim)).collect();
        layout.push((name, v.len()));
        let amps = self.amps.iter().flat_map(|&a| v.iter().map(move |&b| a * b)).collect();
        Self::new(&layout, amps)
    }

    /// Apply `u` to the listed registers (first listed is the slow digit of `u`),
    /// optionally restricted to the slice where each `(register, value)` in
    /// `controls` holds.
    fn apply_inner(&mut self, u: &ComplexMatrix, targets: &[&str], controls: &[(&str, usize)]) -> Result<()> {
        let strides = self.strides();
        let tpos: Vec<usize> = targets.iter().map(|t| self.position(t)).collect::<Result<_>>()?;
        let cpos: Vec<(usize, usize)> = controls
            .iter()
            .map(|&(c, v)| Ok((self.position(c)?, v)))
            .collect::<Result<_>>()?;
        for (k, &p) in tpos.iter().enumerate() {
            if tpos[..k].contains(&p) || cpos.iter().any(|&(q, _)| q == p) {
                return Err(Error::InvalidParameter(format!(
                    "register {} used twice",
                    self.registers[p].name
                )));
            }
        }
        for &(p, v) in &cpos {
            if v >= self.registers[p].dim {
                return Err(Error::InvalidParameter(format!(
                    "control value {v} out of range for {}",
                    self.registers[p].name
                )));
            }
        }
        let dt: usize = tpos.iter().map(|&p| self.registers[p].dim).product();
        if u.rows() != dt || u.cols() != dt {
            return Err(Error::DimensionMismatch {
                context: "apply_to_register",
                expected: dt,
                found: u.rows().max(u.cols()),
            });
        }

        // Offsets of the target subspace relative to a base index.
        let mut offsets = vec![0usize; dt];
        for (t, off) in offsets.iter_mut().enumerate() {
            let mut rem = t;
            for &p in tpos.iter().rev() {
                let d = self.registers[p].dim;
                *off += (rem % d) * strides[p];
                rem /= d;
            }
        }
        // Bases: every index whose target digits are zero and control digits match.
        let free: Vec<usize> = (0..self.registers.len())
            .filter(|p| !tpos.contains(p) && !cpos.iter().any(|&(q, _)| q == *p))
            .collect();
        let control_offset: usize = cpos.iter().map(|&(p, v)| v * strides[p]).sum();
        let nb: usize = free.iter().map(|&p| self.registers[p].dim).product();
        let mut bases = vec![control_offset; nb];
        for (b, base) in bases.iter_mut().enumerate() {
            let mut rem = b;
            for &p in free.iter().rev() {
                let d = self.registers[p].dim;
                *base += (rem % d) * strides[p];
                rem /= d;
            }
        }

        let x = Mat::<C64>::from_fn(dt, nb, |t, b| self.amps[bases[b] + offsets[t]]);
        let y = u.to_faer() * x;
        for (b, &base) in bases.iter().enumerate() {
            for (t, &off) in offsets.iter().enumerate() {
                self.amps[base + off] = y[(t, b)];
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, u: &ComplexMatrix, targets: &[&str]) -> Result<()> {
        self.apply_inner(u, targets, &[])
    }

    /// Apply `u` on `targets` only where register `control` is in basis state `value`.
    pub fn apply_controlled(&mut self, u: &ComplexMatrix, targets: &[&str], control: &str, value: usize) -> Result<()> {
        self.apply_inner(u, targets, &[(control, value)])
    }

    /// Rank-one projection `|v><v|` on one register (`v` need not be normalized
    /// but is used as given).
    pub fn project_onto(&mut self, register: &str, v: &[C64]) -> Result<()> {
        self.apply(&ComplexMatrix::outer(v, v), &[register])
    }

    /// Reorder registers; `order` must be a permutation of the current names.
    pub fn permute(&self, order: &[&str]) -> Result<Self> {
        if order.len() != self.registers.len() {
            return Err(Error::DimensionMismatch {
                context: "Statevector::permute",
                expected: self.registers.len(),
                found: order.len(),
            });
        }
        let pos: Vec<usize> = order.iter().map(|n| self.position(n)).collect::<Result<_>>()?;
        for (k, p) in pos.iter().enumerate() {
            if pos[..k].contains(p) {
                return Err(Error::InvalidParameter(format!(
                    "register {} repeated in permutation",
                    order[k]
                )));
            }
        }
        let old_strides = self.strides();
        let layout: Vec<(&str, usize)> = pos
            .iter()
            .map(|&p| (self.registers[p].name.as_str(), self.registers[p].dim))
            .collect();
        let mut amps = vec![ZERO; self.amps.len()];
        for (new_idx, a) in amps.iter_mut().enumerate() {
            let mut rem = new_idx;
            let mut old_idx = 0;
            for &p in pos.iter().rev() {
                let d = self.registers[p].dim;
                old_idx += (rem % d) * old_strides[p];
                rem /= d;
            }
            *a = self.amps[old_idx];
        }
        Self::new(&layout, amps)
    }
}

/// Functional form of [`Statevector::apply`].
pub fn apply_to_register(u: &ComplexMatrix, targets: &[&str], state: &Statevector) -> Result<Statevector> {
    let mut out = state.clone();
    out.apply(u, targets)?;
    Ok(out)
}
