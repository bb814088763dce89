mod common;

use nalgebra::{DMatrix, DVector};

use common::{oracle_equivalence, stationary_points, tiny_subproblem, Gen};
use sqsdp::corpus::{problem_degenerate, problem_random_smooth};
use sqsdp::merit::{merit_grad, MeritParams};
use sqsdp::model::{hessian_or_approx, LinearizedCone};
use sqsdp::subqp::{descent_check, reduced_objective, solve_subproblem, subproblem_residuals, SubproblemData};
use sqsdp::{HessianPolicy, NsdpProblem, SubproblemSettings, SymmetricMatrix};

#[test]
fn matches_projected_gradient_oracle() {
    let cmp = oracle_equivalence(50, 2024);
    assert!(cmp.max_objective_gap <= 1e-6, "objective gap {:e}", cmp.max_objective_gap);
    assert!(cmp.max_kkt_residual <= 1e-8, "kkt residual {:e}", cmp.max_kkt_residual);
}

#[test]
fn zero_merit_gradient_gives_trivial_solution() {
    let pts = stationary_points(20, 77);
    assert!(pts.max_merit_grad <= 1e-12);
    assert!(pts.max_xi <= 1e-8, "{:e}", pts.max_xi);
    assert!(pts.max_sigma_gap <= 1e-8, "{:e}", pts.max_sigma_gap);
}

#[test]
fn beats_the_strictly_feasible_point() {
    let mut g = Gen::new(31);
    for _ in 0..50 {
        let n = g.pick(&[1usize, 2]);
        let data = tiny_subproblem(&mut g, n, 2);
        let sol = solve_subproblem(&data, &SubproblemSettings::default()).unwrap();
        let feasible = &SymmetricMatrix::identity(2) + &data.t;
        let at_feasible = data.full_objective(&DVector::zeros(n), &feasible);
        assert!(data.full_objective(&sol.xi, &sol.sigma_mat) <= at_feasible + 1e-12);
    }
}

#[test]
fn scalar_closed_form() {
    let cone = LinearizedCone::from_mats(1, vec![SymmetricMatrix::identity(1)]).unwrap();
    let data = SubproblemData::conic_only(
        DVector::from_element(1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        1.0,
        SymmetricMatrix::zeros(1),
        cone,
    )
    .unwrap();
    let (value, _) = reduced_objective(&data, &DVector::from_element(1, -0.5)).unwrap();
    assert!((value + 0.25).abs() < 1e-15);
    let sol = solve_subproblem(&data, &SubproblemSettings::default()).unwrap();
    assert!((sol.xi[0] + 0.5).abs() < 1e-12);
    assert!((sol.sigma_mat.get(0, 0) - 0.5).abs() < 1e-12);
}

fn assembled<P: NsdpProblem>(p: &P, g: &mut Gen, sigma: f64) -> (SubproblemData, DVector<f64>) {
    let x = g.vector(p.n(), 1.0);
    let y = g.vector(p.m(), 1.0);
    let z = SymmetricMatrix::new(common::psd_part(g.sym(p.d(), 1.0).as_matrix())).unwrap();
    let h = hessian_or_approx(p, &x, &y, &z, sigma, &HessianPolicy::default()).unwrap();
    let data = SubproblemData::assemble(p, &x, &y, &z, sigma, &h).unwrap();
    let mp = MeritParams::new(sigma, y, z).unwrap();
    (data, merit_grad(p, &x, &mp).unwrap())
}

#[test]
fn reduced_gradient_at_origin_is_merit_gradient() {
    let p = problem_random_smooth(4, 2, 3, 3).unwrap();
    let q = problem_degenerate(4, 3).unwrap();
    let mut g = Gen::new(4);
    for _ in 0..20 {
        let sigma = g.uniform(0.01, 1.0);
        for (data, grad) in [assembled(&p, &mut g, sigma), assembled(&q, &mut g, sigma)] {
            let at_zero = reduced_objective(&data, &DVector::zeros(data.n())).unwrap().1;
            assert!((at_zero - &grad).amax() <= 1e-12 * (1.0 + grad.amax()));
        }
    }
}

#[test]
fn solutions_on_corpus_subproblems_are_descent_directions() {
    let p = problem_random_smooth(4, 2, 3, 5).unwrap();
    let mut g = Gen::new(6);
    for _ in 0..30 {
        let sigma = g.uniform(0.01, 1.0);
        let (data, grad) = assembled(&p, &mut g, sigma);
        let sol = solve_subproblem(&data, &SubproblemSettings::default()).unwrap();
        assert!(subproblem_residuals(&data, &sol).unwrap().stationarity <= 1e-8);
        let check = descent_check(&data, &sol, &grad);
        assert!(check.projected_slack >= 0.0, "{check:?}");
        assert!(grad.dot(&sol.xi) <= 0.0);
        assert!(sol.sigma_mat.lambda_min().unwrap() >= -1e-12);
    }
}
