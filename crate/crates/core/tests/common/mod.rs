//! Oracles and generators shared by the integration tests. The oracles use
//! nalgebra directly rather than the crate's kernel so they are independent
//! of the code under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqsdp::corpus::{problem_degenerate, problem_no_kkt, problem_random_smooth};
use sqsdp::model::LinearizedCone;
use sqsdp::subqp::SubproblemData;
use sqsdp::{NsdpProblem, SymmetricMatrix};

pub struct Gen(ChaCha8Rng);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.gen_range(lo..hi)
    }

    pub fn vector(&mut self, n: usize, scale: f64) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.uniform(-scale, scale))
    }

    pub fn sym(&mut self, d: usize, scale: f64) -> SymmetricMatrix {
        let a = DMatrix::from_fn(d, d, |_, _| self.uniform(-scale, scale));
        SymmetricMatrix::new(a).unwrap()
    }

    /// `L L^T + floor I`.
    pub fn spd(&mut self, n: usize, floor: f64) -> DMatrix<f64> {
        let l = DMatrix::from_fn(n, n, |_, _| self.uniform(-1.0, 1.0));
        &l * l.transpose() + DMatrix::identity(n, n) * floor
    }

    pub fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.0.gen_range(0..items.len())]
    }
}

/// Every problem in the built-in corpus, at sizes small enough for exhaustive
/// finite-difference probing.
pub fn corpus() -> Vec<Box<dyn NsdpProblem>> {
    vec![
        Box::new(problem_no_kkt()),
        Box::new(problem_degenerate(3, 1).unwrap()),
        Box::new(problem_degenerate(5, 2).unwrap()),
        Box::new(problem_random_smooth(4, 2, 3, 7).unwrap()),
    ]
}

pub fn central_difference(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |j, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

/// `|a - b|_inf / max(1, |b|_inf)`.
pub fn relative_error(analytic: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    (analytic - reference).amax() / reference.amax().max(1.0)
}

pub fn psd_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose()
}

pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// A random conic-only subproblem with `n` variables and a `d x d` cone.
pub fn tiny_subproblem(g: &mut Gen, n: usize, d: usize) -> SubproblemData {
    let mats = (0..n).map(|_| g.sym(d, 1.0)).collect();
    let cone = LinearizedCone::from_mats(d, mats).unwrap();
    let sigma = g.uniform(0.2, 2.0);
    SubproblemData::conic_only(g.vector(n, 1.0), g.spd(n, 0.2), sigma, g.sym(d, 2.0), cone).unwrap()
}

fn apply(mats: &[DMatrix<f64>], xi: &DVector<f64>) -> DMatrix<f64> {
    let d = mats[0].nrows();
    mats.iter().zip(xi.iter()).fold(DMatrix::zeros(d, d), |acc, (a, v)| acc + a * *v)
}

fn adjoint(mats: &[DMatrix<f64>], w: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(mats.len(), mats.iter().map(|a| a.dot(w)))
}

/// Optimal value of the joint problem
///
/// ```text
/// min <c, xi> + xi'M xi / 2 + sigma |Sigma|^2 / 2
/// s.t. A xi + sigma (Sigma - T) PSD
/// ```
///
/// by accelerated projected gradient in the variables `(xi, S)` with
/// `S = A xi + sigma (Sigma - T)` PSD, where the feasible set is a product
/// of a free space and the PSD cone.
pub fn projected_gradient_value(data: &SubproblemData, iterations: usize) -> f64 {
    let mats: Vec<DMatrix<f64>> = data.cone.mats().iter().map(|a| a.as_matrix().clone()).collect();
    let t = data.t.as_matrix().clone();
    let s = data.sigma;
    let n = data.c.len();
    let d = t.nrows();

    let sigma_of = |xi: &DVector<f64>, sm: &DMatrix<f64>| &t + (sm - apply(&mats, xi)) / s;
    let objective = |xi: &DVector<f64>, sm: &DMatrix<f64>| {
        let sig = sigma_of(xi, sm);
        data.c.dot(xi) + 0.5 * xi.dot(&(&data.m * xi)) + 0.5 * s * sig.norm_squared()
    };
    let gradient = |xi: &DVector<f64>, sm: &DMatrix<f64>| {
        let sig = sigma_of(xi, sm);
        (&data.c + &data.m * xi - adjoint(&mats, &sig), sig)
    };

    // Lipschitz bound from the joint Hessian [[M + A*A/s, -A*/s], [-A/s, I/s]]
    let gram = DMatrix::from_fn(n, n, |i, j| mats[i].dot(&mats[j]));
    let lip = data.m.norm() + 2.0 * gram.norm() / s + 2.0 * gram.norm().sqrt() / s + 1.0 / s;
    let step = 1.0 / lip;

    let mut xi = DVector::zeros(n);
    let mut sm = psd_part(&(s * &t));
    let (mut xi_y, mut sm_y) = (xi.clone(), sm.clone());
    let mut momentum = 1.0f64;
    let mut best = objective(&xi, &sm);
    for _ in 0..iterations {
        let (gx, gs) = gradient(&xi_y, &sm_y);
        let xi_next = &xi_y - gx * step;
        let sm_next = psd_part(&(&sm_y - gs * step));
        let momentum_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let w = (momentum - 1.0) / momentum_next;
        xi_y = &xi_next + (&xi_next - &xi) * w;
        sm_y = &sm_next + (&sm_next - &sm) * w;
        let value = objective(&xi_next, &sm_next);
        // restart on non-monotone behaviour
        if value > best {
            momentum = 1.0;
            xi_y = xi_next.clone();
            sm_y = sm_next.clone();
        } else {
            momentum = momentum_next;
        }
        best = best.min(value);
        xi = xi_next;
        sm = sm_next;
    }
    debug_assert_eq!(sm.nrows(), d);
    best
}

#[derive(Clone, Copy, Debug)]
pub enum GradientKind {
    Merit,
    Feasibility,
    Lagrangian,
}

/// Largest relative error between an analytic gradient and central
/// differences over `probes` random points of problem `p`.
pub fn gradient_suite(p: &dyn NsdpProblem, kind: GradientKind, probes: usize, seed: u64) -> f64 {
    use sqsdp::merit::{feasibility_p, feasibility_p_grad, merit_grad, merit_value, MeritParams};
    use sqsdp::model::{lagrangian_grad, lagrangian_value};

    let mut g = Gen::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let x = g.vector(p.n(), 1.0);
        let y = g.vector(p.m(), 1.0);
        let z = g.sym(p.d(), 1.0);
        let err = match kind {
            GradientKind::Merit => {
                let sigma = g.uniform(0.1, 1.0);
                let mp = MeritParams::new(sigma, y, z).unwrap();
                let an = merit_grad(p, &x, &mp).unwrap();
                let fd = central_difference(|v| merit_value(p, v, &mp).unwrap(), &x, 1e-6);
                relative_error(&an, &fd)
            }
            GradientKind::Feasibility => {
                let an = feasibility_p_grad(p, &x).unwrap();
                let fd = central_difference(|v| feasibility_p(p, v).unwrap(), &x, 1e-6);
                relative_error(&an, &fd)
            }
            GradientKind::Lagrangian => {
                let an = lagrangian_grad(p, &x, &y, &z).unwrap();
                let fd = central_difference(|v| lagrangian_value(p, v, &y, &z).unwrap(), &x, 1e-6);
                relative_error(&an, &fd)
            }
        };
        worst = worst.max(err);
    }
    worst
}

pub struct OracleComparison {
    pub max_objective_gap: f64,
    pub max_kkt_residual: f64,
    pub instances: usize,
}

/// Solves `count` random tiny subproblems (n in {1, 2}, d = 2) and compares
/// each against the projected-gradient oracle.
pub fn oracle_equivalence(count: usize, seed: u64) -> OracleComparison {
    use sqsdp::subqp::{solve_subproblem, subproblem_residuals};
    use sqsdp::SubproblemSettings;

    let mut g = Gen::new(seed);
    let mut out = OracleComparison {
        max_objective_gap: 0.0,
        max_kkt_residual: 0.0,
        instances: count,
    };
    for _ in 0..count {
        let n = g.pick(&[1usize, 2]);
        let data = tiny_subproblem(&mut g, n, 2);
        let sol = solve_subproblem(&data, &SubproblemSettings::default()).unwrap();
        let oracle = projected_gradient_value(&data, 20_000);
        let ours = data.full_objective(&sol.xi, &sol.sigma_mat);
        let gap = (ours - oracle).abs() / oracle.abs().max(1.0);
        out.max_objective_gap = out.max_objective_gap.max(gap);
        out.max_kkt_residual = out.max_kkt_residual.max(subproblem_residuals(&data, &sol).unwrap().max());
    }
    out
}

pub struct StationaryPoints {
    pub max_merit_grad: f64,
    pub max_xi: f64,
    pub max_sigma_gap: f64,
}

/// Subproblems built so that `grad F = c - A*[T]_+` vanishes: the solution
/// must be `(0, [T]_+)`.
pub fn stationary_points(count: usize, seed: u64) -> StationaryPoints {
    use sqsdp::subqp::{reduced_objective, solve_subproblem};
    use sqsdp::SubproblemSettings;

    let mut g = Gen::new(seed);
    let mut out = StationaryPoints {
        max_merit_grad: 0.0,
        max_xi: 0.0,
        max_sigma_gap: 0.0,
    };
    for _ in 0..count {
        let n = g.pick(&[1usize, 2, 3, 4]);
        let d = g.pick(&[2usize, 3, 4]);
        let mats = (0..n).map(|_| g.sym(d, 1.0)).collect();
        let cone = LinearizedCone::from_mats(d, mats).unwrap();
        let t = g.sym(d, 2.0);
        let t_plus = SymmetricMatrix::new(psd_part(t.as_matrix())).unwrap();
        let c = cone.adjoint(&t_plus).unwrap();
        let sigma = g.uniform(0.05, 2.0);
        let data = SubproblemData::conic_only(c, g.spd(n, 0.2), sigma, t, cone).unwrap();
        let merit_gradient = reduced_objective(&data, &DVector::zeros(n)).unwrap().1;
        let sol = solve_subproblem(&data, &SubproblemSettings::default()).unwrap();
        out.max_merit_grad = out.max_merit_grad.max(merit_gradient.norm());
        out.max_xi = out.max_xi.max(sol.xi.norm());
        out.max_sigma_gap = out.max_sigma_gap.max((&sol.sigma_mat - &t_plus).norm_fro());
    }
    out
}

/// Worst tolerance-normalised violation of each kernel invariant over
/// `trials` random draws; a value at most 1 means the invariant held.
pub fn kernel_suite(trials: usize, seed: u64) -> Vec<(&'static str, f64)> {
    use sqsdp::symkernel::{eig_sym, psd_project, svec};

    let mut g = Gen::new(seed);
    let mut worst = [0.0f64; 5];
    for _ in 0..trials {
        let d = g.pick(&[1usize, 2, 3, 4, 5, 6, 7]);
        let scale = g.pick(&[0.1, 1.0, 10.0]);
        let a = g.sym(d, scale);
        let b = g.sym(d, scale);
        let (na, nb) = (a.norm_fro(), b.norm_fro());

        let iso = (a.as_matrix().dot(b.as_matrix()) - svec(&a).dot(&svec(&b))).abs();
        worst[0] = worst[0].max(iso / (1e-10 * (1.0 + na * nb)));

        let plus = psd_project(&a).unwrap();
        let minus = psd_project(&(-&a)).unwrap();
        let split = (&(&plus - &minus) - &a).norm_fro().max(plus.inner(&minus).abs());
        worst[1] = worst[1].max(split / 1e-9);

        let twice = psd_project(&plus).unwrap();
        worst[2] = worst[2].max((&twice - &plus).norm_fro() / 1e-10);

        let pb = psd_project(&b).unwrap();
        let excess = (&plus - &pb).norm_fro() - (&a - &b).norm_fro();
        worst[3] = worst[3].max(excess.max(0.0) / 1e-12);

        let la = eig_sym(&a).unwrap().eigenvalues;
        let lb = eig_sym(&b).unwrap().eigenvalues;
        let lab = eig_sym(&(&a + &b)).unwrap().eigenvalues;
        for i in 0..d {
            let low = la[0] + lb[i] - lab[i];
            let high = lab[i] - la[d - 1] - lb[i];
            worst[4] = worst[4].max(low.max(high).max(0.0) / 1e-9);
        }
    }
    vec![
        ("svec isometry", worst[0]),
        ("Moreau decomposition", worst[1]),
        ("projection idempotence", worst[2]),
        ("nonexpansiveness", worst[3]),
        ("Weyl inequality", worst[4]),
    ]
}
