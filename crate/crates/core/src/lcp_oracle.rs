//! Exhaustive complementary-support enumeration for small LCPs.
//!
//! Every basic solution of `0 <= z _|_ M z + q >= 0` has a support `S` on
//! which `M_SS z_S = -q_S`. Trying all `2^n` supports is exponential but
//! trivially correct, which is what a test oracle needs.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, CoreError, Result};

/// Largest system accepted by [`enumerate_solutions`].
pub const MAX_ORACLE_DIM: usize = 16;

const FEASIBILITY_TOL: f64 = 1e-10;
const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LcpSolutionSet {
    pub solutions: Vec<Vec<f64>>,
    /// Supports whose principal block was singular and therefore skipped.
    pub singular_supports: usize,
}

impl LcpSolutionSet {
    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }
}

pub fn enumerate_solutions(m: &DMatrix<f64>, q: &[f64]) -> Result<LcpSolutionSet> {
    let n = q.len();
    if n > MAX_ORACLE_DIM {
        return Err(CoreError::OracleTooLarge {
            size: n,
            limit: MAX_ORACLE_DIM,
        });
    }
    check_len(n, m.nrows(), "oracle matrix rows")?;
    check_len(n, m.ncols(), "oracle matrix cols")?;

    let mut solutions: Vec<Vec<f64>> = Vec::new();
    let mut singular_supports = 0;
    let mut support = Vec::with_capacity(n);

    for mask in 0u32..(1u32 << n) {
        support.clear();
        support.extend((0..n).filter(|i| mask & (1 << i) != 0));
        let mut z = vec![0.0; n];
        if !support.is_empty() {
            let k = support.len();
            let block = DMatrix::from_fn(k, k, |r, c| m[(support[r], support[c])]);
            let rhs = DVector::from_iterator(k, support.iter().map(|&i| -q[i]));
            let Some(sol) = block.clone().lu().solve(&rhs) else {
                singular_supports += 1;
                continue;
            };
            // LU only flags exact zero pivots; reject numerically singular blocks too.
            let back = &block * &sol - &rhs;
            let scale = 1.0 + rhs.amax() + sol.amax();
            if !sol.iter().all(|v| v.is_finite()) || back.amax() > 1e-9 * scale {
                singular_supports += 1;
                continue;
            }
            for (slot, &i) in support.iter().enumerate() {
                z[i] = sol[slot];
            }
        }
        if z.iter().any(|&v| v < -FEASIBILITY_TOL) {
            continue;
        }
        let w = m * DVector::from_column_slice(&z) + DVector::from_column_slice(q);
        let complementary = (0..n).all(|i| z[i].min(w[i]).abs() <= FEASIBILITY_TOL);
        if !complementary || w.iter().any(|&v| v < -FEASIBILITY_TOL) {
            continue;
        }
        for v in z.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let duplicate = solutions
            .iter()
            .any(|s| s.iter().zip(&z).all(|(a, b)| (a - b).abs() <= DEDUP_TOL));
        if !duplicate {
            solutions.push(z);
        }
    }

    Ok(LcpSolutionSet {
        solutions,
        singular_supports,
    })
}

/// Minimum Euclidean norm member; ties go to the lexicographically smallest.
pub fn least_norm_select(set: &LcpSolutionSet) -> Result<Vec<f64>> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    set.solutions
        .iter()
        .min_by(|a, b| {
            norm(a)
                .total_cmp(&norm(b))
                .then_with(|| lexicographic(a, b))
        })
        .cloned()
        .ok_or(CoreError::EmptySolutionSet)
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_scenario_block, Scenario};

    #[test]
    fn scalar_lcp() {
        let m = DMatrix::from_element(1, 1, 1.0);
        let set = enumerate_solutions(&m, &[-2.0]).unwrap();
        assert_eq!(set.solutions, vec![vec![2.0]]);
    }

    #[test]
    fn duopoly_with_nonpositive_prices_picks_zero() {
        // x = 0, p <= 0: the multiplier block is a continuum only when p = 0.
        for p in [[-1.0, -0.5], [0.0, 0.0], [0.0, -2.0]] {
            let s = Scenario::new(1.0, p.to_vec()).unwrap();
            let m = build_scenario_block(&s, 2, 0.0).unwrap();
            let q = [-p[0], -p[1], 0.0, 0.0];
            let set = enumerate_solutions(&m, &q).unwrap();
            assert!(set.solutions.contains(&vec![0.0; 4]));
            assert!(set.singular_supports > 0);
            assert_eq!(least_norm_select(&set).unwrap(), vec![0.0; 4]);
        }
    }

    #[test]
    fn cournot_interior_solution() {
        let s = Scenario::new(1.0, vec![3.0, 1.0]).unwrap();
        let m = build_scenario_block(&s, 2, 0.0).unwrap();
        let set = enumerate_solutions(&m, &[-3.0, -1.0, 10.0, 10.0]).unwrap();
        assert_eq!(set.len(), 1);
        let z = &set.solutions[0];
        let expected = [1.5, 0.0, 0.0, 0.0];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn least_norm_select_basics() {
        let set = LcpSolutionSet {
            solutions: vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0; 4]],
            singular_supports: 0,
        };
        assert_eq!(least_norm_select(&set).unwrap(), vec![0.0; 4]);
        let single = LcpSolutionSet {
            solutions: vec![vec![1.0, 2.0]],
            singular_supports: 0,
        };
        assert_eq!(least_norm_select(&single).unwrap(), vec![1.0, 2.0]);
        let tie = LcpSolutionSet {
            solutions: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            singular_supports: 0,
        };
        assert_eq!(least_norm_select(&tie).unwrap(), vec![0.0, 1.0]);
        let empty = LcpSolutionSet {
            solutions: vec![],
            singular_supports: 0,
        };
        assert_eq!(least_norm_select(&empty), Err(CoreError::EmptySolutionSet));
    }

    #[test]
    fn rejects_large_systems() {
        let m = DMatrix::identity(17, 17);
        assert!(matches!(
            enumerate_solutions(&m, &[0.0; 17]),
            Err(CoreError::OracleTooLarge { size: 17, .. })
        ));
    }

    #[test]
    fn positive_definite_has_unique_solution() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, -1.0, 1.0, 3.0, 0.5, 1.0, -0.5, 2.0]);
        for q in [[-1.0, 2.0, -3.0], [1.0, 1.0, 1.0], [-5.0, -5.0, -5.0]] {
            let set = enumerate_solutions(&m, &q).unwrap();
            assert_eq!(set.len(), 1, "q = {q:?}");
        }
    }
}
