use serde::{Deserialize, Serialize};

use super::Variant;

/// Column layout of the pricing and hedging LPs. Maturity indices are 0-based;
/// state `grid_len()` is the tail state of the extended variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableIndex {
    pub variant: Variant,
    grid: usize,
    maturities: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimalVar {
    F { j: usize, n: usize },
    G { regime: u8, j: usize, k: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualVar {
    E1 { j: usize, n: usize },
    E2 { j: usize, n: usize },
    V { j: usize, n: usize },
    D1 { j: usize, n: usize },
    D2 { j: usize, n: usize },
}

impl VariableIndex {
    pub fn new(variant: Variant, grid_states: usize, maturities: usize) -> Self {
        VariableIndex { variant, grid: grid_states, maturities }
    }

    pub fn grid_len(&self) -> usize {
        self.grid
    }

    /// LP states: the grid plus the tail state when extended.
    pub fn len_states(&self) -> usize {
        match self.variant {
            Variant::Bounded => self.grid,
            Variant::Extended => self.grid + 1,
        }
    }

    pub fn num_maturities(&self) -> usize {
        self.maturities
    }

    pub fn tail(&self) -> Option<usize> {
        (self.variant == Variant::Extended).then_some(self.grid)
    }

    fn steps(&self) -> usize {
        self.maturities.saturating_sub(1)
    }

    fn g_block(&self) -> usize {
        let m = self.len_states();
        self.steps() * m * m
    }

    pub fn primal_len(&self) -> usize {
        self.len_states() * self.maturities + 2 * self.g_block()
    }

    pub fn f(&self, j: usize, n: usize) -> usize {
        debug_assert!(j < self.len_states() && n < self.maturities);
        j * self.maturities + n
    }

    pub fn g(&self, regime: u8, j: usize, k: usize, n: usize) -> usize {
        let m = self.len_states();
        debug_assert!(j < m && k < m && n < self.steps() && (regime == 1 || regime == 2));
        let base = m * self.maturities + (regime as usize - 1) * self.g_block();
        base + (n * m + j) * m + k
    }

    pub fn primal_name(&self, col: usize) -> PrimalVar {
        let m = self.len_states();
        let nf = m * self.maturities;
        if col < nf {
            return PrimalVar::F { j: col / self.maturities, n: col % self.maturities };
        }
        let rest = col - nf;
        let regime = if rest < self.g_block() { 1 } else { 2 };
        let r = rest % self.g_block();
        PrimalVar::G { regime, n: r / (m * m), j: (r / m) % m, k: r % m }
    }

    fn e_block(&self) -> usize {
        self.len_states() * self.steps()
    }

    pub fn dual_len(&self) -> usize {
        4 * self.e_block() + self.len_states() * self.maturities
    }

    /// Defined for n < N-1.
    pub fn e1(&self, j: usize, n: usize) -> usize {
        debug_assert!(n < self.steps());
        j * self.steps() + n
    }

    /// Defined for n ≥ 1.
    pub fn e2(&self, j: usize, n: usize) -> usize {
        debug_assert!(n >= 1 && n < self.maturities);
        self.e_block() + j * self.steps() + n - 1
    }

    pub fn v(&self, j: usize, n: usize) -> usize {
        2 * self.e_block() + j * self.maturities + n
    }

    /// Defined for n < N-1.
    pub fn d1(&self, j: usize, n: usize) -> usize {
        debug_assert!(n < self.steps());
        2 * self.e_block() + self.len_states() * self.maturities + j * self.steps() + n
    }

    /// Defined for n < N-1.
    pub fn d2(&self, j: usize, n: usize) -> usize {
        self.d1(j, n) + self.e_block()
    }

    pub fn dual_name(&self, col: usize) -> DualVar {
        let s = self.steps().max(1);
        let eb = self.e_block();
        let vb = self.len_states() * self.maturities;
        if col < eb {
            DualVar::E1 { j: col / s, n: col % s }
        } else if col < 2 * eb {
            let c = col - eb;
            DualVar::E2 { j: c / s, n: c % s + 1 }
        } else if col < 2 * eb + vb {
            let c = col - 2 * eb;
            DualVar::V { j: c / self.maturities, n: c % self.maturities }
        } else if col < 3 * eb + vb {
            let c = col - 2 * eb - vb;
            DualVar::D1 { j: c / s, n: c % s }
        } else {
            let c = col - 3 * eb - vb;
            DualVar::D2 { j: c / s, n: c % s }
        }
    }

    pub fn primal_col(&self, var: PrimalVar) -> usize {
        match var {
            PrimalVar::F { j, n } => self.f(j, n),
            PrimalVar::G { regime, j, k, n } => self.g(regime, j, k, n),
        }
    }

    pub fn dual_col(&self, var: DualVar) -> usize {
        match var {
            DualVar::E1 { j, n } => self.e1(j, n),
            DualVar::E2 { j, n } => self.e2(j, n),
            DualVar::V { j, n } => self.v(j, n),
            DualVar::D1 { j, n } => self.d1(j, n),
            DualVar::D2 { j, n } => self.d2(j, n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_are_bijective() {
        for variant in [Variant::Bounded, Variant::Extended] {
            for grid in 1..5 {
                for nn in 1..5 {
                    let ix = VariableIndex::new(variant, grid, nn);
                    for c in 0..ix.primal_len() {
                        assert_eq!(ix.primal_col(ix.primal_name(c)), c);
                    }
                    for c in 0..ix.dual_len() {
                        assert_eq!(ix.dual_col(ix.dual_name(c)), c);
                    }
                }
            }
        }
    }
}
