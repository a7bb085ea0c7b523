use cournot_core::lcp_oracle::enumerate_solutions;
use cournot_core::smoothing_newton::{
    smooth_jacobian_diag, smooth_value, smoothing_jacobian, solve_dense_lcp, solve_subproblem,
    solve_traced, structured_solve, BlockDiagonals, SmoothingOptions, SmoothingSystem,
};
use cournot_core::{GameInstance, Scenario, SubproblemSystem};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Data {
    c: Vec<f64>,
    a: Vec<f64>,
    p: Vec<f64>,
    gamma: f64,
    eps: f64,
    r: f64,
    w: Vec<f64>,
    x_prev: Vec<f64>,
    v_prev: Vec<f64>,
}

impl Data {
    fn system(&self) -> SubproblemSystem {
        let inst = GameInstance::new(self.c.clone(), self.a.clone()).unwrap();
        let s = Scenario::new(self.gamma, self.p.clone()).unwrap();
        SubproblemSystem::new(
            &inst,
            &s,
            self.eps,
            self.r,
            &self.w,
            &self.x_prev,
            &self.v_prev,
        )
        .unwrap()
    }
}

fn data(max_j: usize) -> impl Strategy<Value = Data> {
    (1..=max_j).prop_flat_map(|j| {
        (
            prop::collection::vec(0.1..2.0f64, j),
            prop::collection::vec(0.0..1.0f64, j),
            prop::collection::vec(-0.5..2.0f64, j),
            0.1..2.0f64,
            prop::sample::select(vec![1e-2, 1e-4, 1e-6]),
            prop::sample::select(vec![0.1, 1.0]),
            prop::collection::vec(-0.5..0.5f64, j),
            prop::collection::vec(0.0..1.0f64, j),
            prop::collection::vec(0.0..1.0f64, 2 * j),
        )
            .prop_map(|(c, a, p, gamma, eps, r, w, x_prev, v_prev)| Data {
                c,
                a,
                p,
                gamma,
                eps,
                r,
                w,
                x_prev,
                v_prev,
            })
    })
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

fn blocks(j: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let diag = |lo: f64, hi: f64| prop::collection::vec(lo..hi, j);
    (
        (
            diag(1.0, 3.0),
            diag(-1.0, 0.0),
            diag(1.0, 3.0),
            diag(0.0, 1.0),
            diag(0.0, 1.0),
            diag(-1.0, 0.0),
            diag(1.0, 3.0),
        ),
        diag(0.0, 2.0),
        diag(0.0, 1.0),
        prop::collection::vec(-1.0..1.0f64, 3 * j),
    )
        .prop_map(|((l1, l2, l3, l4, l5, l6, l7), u1, u2, b)| {
            (vec![l1, l2, l3, l4, l5, l6, l7], u1, u2, b)
        })
}

fn natural_residual(sys: &SubproblemSystem, z: &[f64]) -> f64 {
    let mut w = vec![0.0; z.len()];
    sys.affine_into(z, &mut w);
    cournot_core::model::min_residual_norm(z, &w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn structured_equals_dense((lam, u1, u2, b) in (1usize..=8).prop_flat_map(blocks)) {
        let j = u1.len();
        let view = BlockDiagonals {
            lambda: [&lam[0], &lam[1], &lam[2], &lam[3], &lam[4], &lam[5], &lam[6]],
            u1: &u1,
            u2: &u2,
        };
        let (s1, s2, s3) = structured_solve(&view, &b[..j], &b[j..2 * j], &b[2 * j..]).unwrap();
        let reference = view.to_dense().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let got = DVector::from_iterator(3 * j, s1.into_iter().chain(s2).chain(s3));
        prop_assert!((got - &reference).norm() <= 1e-10 * reference.norm().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn subproblem_matrix_is_positive_definite(d in data(5), z in point(15)) {
        let h = d.system().to_dense();
        let n = h.nrows();
        let z = DVector::from_column_slice(&z[..n]);
        if z.norm() > 1e-6 {
            prop_assert!(z.dot(&(&h * &z)) > 0.0);
        }
    }

    #[test]
    fn delta_consistency(d in data(5), z in point(15), delta in prop::sample::select(vec![1.0, 1e-3, 1e-6])) {
        let sys = d.system();
        let n = sys.dim();
        let z = &z[..n];
        let f = smooth_value(z, delta, &sys);
        let mut w = vec![0.0; n];
        sys.affine_into(z, &mut w);
        for j in 0..n {
            let big_f = z[j].min(w[j]);
            prop_assert!((f[j] - big_f).abs() <= delta * (1.0 + 1e-12));
        }
        let dbar = smooth_jacobian_diag(z, delta, &sys);
        prop_assert!(dbar.iter().all(|v| (0.0..=1.0).contains(v)));
        if delta == 1.0 {
            prop_assert!(dbar.iter().all(|v| *v > 0.0 && *v < 1.0));
        }
    }

    #[test]
    fn jacobian_matches_central_differences(d in data(4), z in point(12)) {
        let sys = d.system();
        let n = sys.dim();
        let z = &z[..n];
        let delta = 0.5;
        let dbar = smooth_jacobian_diag(z, delta, &sys);
        let jac = smoothing_jacobian(&sys.to_dense(), &dbar);
        let h = 1e-6;
        for col in 0..n {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[col] += h;
            zm[col] -= h;
            let fp = smooth_value(&zp, delta, &sys);
            let fm = smooth_value(&zm, delta, &sys);
            for row in 0..n {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                prop_assert!((fd - jac[(row, col)]).abs() <= 1e-6, "({row},{col}) {fd} vs {}", jac[(row, col)]);
            }
        }
    }

    #[test]
    fn jacobian_is_nonsingular(d in data(6), z in point(18), delta in prop::sample::select(vec![1.0, 1e-3, 1e-6])) {
        let sys = d.system();
        let n = sys.dim();
        let dbar = smooth_jacobian_diag(&z[..n], delta, &sys);
        let jac = smoothing_jacobian(&sys.to_dense(), &dbar);
        let sv = jac.singular_values();
        prop_assert!(sv.min() > 0.0);
    }

    #[test]
    fn structured_newton_step_matches_dense(d in data(6), z in point(18), delta in prop::sample::select(vec![1.0, 1e-3])) {
        let sys = d.system();
        let n = sys.dim();
        let dbar = smooth_jacobian_diag(&z[..n], delta, &sys);
        let rhs: Vec<f64> = z[..n].iter().map(|v| v * 0.5 - 0.1).collect();
        let mut out = vec![0.0; n];
        sys.newton_solve(&dbar, &rhs, &mut out).unwrap();
        let jac = smoothing_jacobian(&sys.to_dense(), &dbar);
        let back = &jac * DVector::from_column_slice(&out) - DVector::from_column_slice(&rhs);
        prop_assert!(back.norm() <= 1e-10 * (1.0 + DVector::from_column_slice(&rhs).norm()));
    }

    #[test]
    fn subproblem_matches_oracle(d in data(5)) {
        let sys = d.system();
        let n = sys.dim();
        let opts = SmoothingOptions { tol: 1e-12, ..SmoothingOptions::default() };
        let out = solve_subproblem(&sys, &vec![0.0; n], &opts).unwrap();
        let set = enumerate_solutions(&sys.to_dense(), sys.rhs()).unwrap();
        prop_assert_eq!(set.len(), 1);
        let diff = out.z.iter().zip(&set.solutions[0]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(diff <= 1e-8, "diff {diff}");
        prop_assert!(natural_residual(&sys, &out.z) <= 1e-12);
    }

    #[test]
    fn accepted_steps_decrease_merit_and_delta(d in data(5), z in point(15)) {
        let sys = d.system();
        let n = sys.dim();
        let opts = SmoothingOptions { tol: 1e-11, ..SmoothingOptions::default() };
        let (out, trace) = solve_traced(&sys, &z[..n], &opts);
        prop_assert!(out.is_ok());
        let mut last_delta = f64::INFINITY;
        for it in trace.iter().filter(|t| t.accepted) {
            prop_assert!(it.merit_after <= it.merit_before);
            prop_assert!(it.delta < last_delta || it.delta == opts.delta_floor);
            last_delta = it.delta;
        }
    }

    #[test]
    fn warm_start_at_solution_is_immediate(d in data(5)) {
        let sys = d.system();
        let n = sys.dim();
        let opts = SmoothingOptions::default();
        let out = solve_subproblem(&sys, &vec![0.0; n], &opts).unwrap();
        let again = solve_subproblem(&sys, &out.z, &opts).unwrap();
        prop_assert!(again.iterations <= 1);
        prop_assert!(again.residual <= opts.tol);
    }
}

#[test]
fn dense_solver_matches_oracle_on_p_matrix() {
    let m = DMatrix::from_row_slice(3, 3, &[3.0, -1.0, 0.5, 1.0, 2.0, -0.5, -0.5, 0.5, 1.5]);
    for q in [[-1.0, -2.0, 0.5], [1.0, -3.0, -1.0], [-4.0, 1.0, -2.0]] {
        let out = solve_dense_lcp(
            m.clone(),
            q.to_vec(),
            &[0.0; 3],
            &SmoothingOptions::default(),
        )
        .unwrap();
        let set = enumerate_solutions(&m, &q).unwrap();
        for (a, b) in out.z.iter().zip(&set.solutions[0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}

#[test]
fn iteration_cap_reports_best_residual() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
    let opts = SmoothingOptions {
        max_iter: 1,
        tol: 1e-15,
        ..SmoothingOptions::default()
    };
    let err = solve_dense_lcp(m, vec![-5.0, -6.0], &[0.0, 0.0], &opts).unwrap_err();
    assert!(matches!(
        err,
        cournot_core::CoreError::IterationCap { iterations: 1, .. }
    ));
}
