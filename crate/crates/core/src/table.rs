use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Dense real table indexed by `(state, action)`, stored row-major by state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl StateActionTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                values.push(f(s, a));
            }
        }
        Self {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch {
                expected: (n_states, n_actions),
                found: (values.len(), 1),
            });
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    /// Builds a table from one row per state.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_states * n_actions);
        for row in rows {
            if row.len() != n_actions {
                return Err(Error::ShapeMismatch {
                    expected: (n_states, n_actions),
                    found: (n_states, row.len()),
                });
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        &mut self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// Rows as nested vectors, `[state][action]`.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|s| self.row(s).to_vec()).collect()
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// L-infinity distance; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "table shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_shape(&self, expected: (usize, usize)) -> Result<()> {
        if self.shape() == expected {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected,
                found: self.shape(),
            })
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "table shapes differ");
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += scale * o;
        }
    }
}

impl Index<(usize, usize)> for StateActionTable {
    type Output = f64;

    fn index(&self, (s, a): (usize, usize)) -> &f64 {
        &self.values[s * self.n_actions + a]
    }
}

impl IndexMut<(usize, usize)> for StateActionTable {
    fn index_mut(&mut self, (s, a): (usize, usize)) -> &mut f64 {
        &mut self.values[s * self.n_actions + a]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let t = StateActionTable::from_fn(2, 3, |s, a| (10 * s + a) as f64);
        assert_eq!(t.row(1), &[10.0, 11.0, 12.0]);
        assert_eq!(t[(0, 2)], 2.0);
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = alloc::vec![alloc::vec![1.0, 2.0], alloc::vec![3.0]];
        assert!(StateActionTable::from_rows(&rows).is_err());
    }
}
