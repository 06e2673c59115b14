//! Random plant generators and independent oracles shared by the
//! integration tests.

#![allow(dead_code)]

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruio_core::data::{build, HistoricalData};
use ruio_core::lti::{generate_experiment, ExperimentConfig, LtiSystem, Trajectory};
use ruio_core::numerics::{eigenvalues, pinv, spectral_radius, Matrix};

pub type Rng8 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut Rng8, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random matrix rescaled to the given spectral radius.
pub fn with_radius(rng: &mut Rng8, n: usize, radius: f64) -> Matrix {
    loop {
        let a = random_matrix(rng, n, n);
        let rho = spectral_radius(&a).unwrap();
        if rho > 1e-3 {
            return a * (radius / rho);
        }
    }
}

fn invertible(rng: &mut Rng8, n: usize) -> (Matrix, Matrix) {
    loop {
        let t = random_matrix(rng, n, n) + Matrix::identity(n, n) * 1.5;
        if let Some(inv) = t.clone().try_inverse() {
            let sv = t.singular_values();
            if sv.min() > 0.2 {
                return (t, inv);
            }
        }
    }
}

/// Invariant zeros of `[zI - A, -E; C, 0]` for `rank(CE) = q`: they are the
/// eigenvalues of `(I - E (CE)^+ C) A` that the PBH test marks unobservable
/// through `C`.
pub fn invariant_zeros_oracle(sys: &LtiSystem) -> Vec<Complex<f64>> {
    let n = sys.n();
    let a = sys.a();
    let c = sys.c();
    let abar = if sys.q() == 0 {
        a.clone()
    } else {
        let ce = c * sys.e();
        (Matrix::identity(n, n) - sys.e() * pinv(&ce) * c) * a
    };
    let scale = abar.norm().max(c.norm()).max(1.0);
    let abar_c = abar.map(|v| Complex::new(v, 0.0));
    let c_c = c.map(|v| Complex::new(v, 0.0));
    eigenvalues(&abar)
        .unwrap()
        .into_iter()
        .filter(|&lambda| {
            let shifted = DMatrix::<Complex<f64>>::identity(n, n) * lambda - &abar_c;
            let mut pbh = DMatrix::<Complex<f64>>::zeros(n + c.nrows(), n);
            pbh.rows_mut(0, n).copy_from(&shifted);
            pbh.rows_mut(n, c.nrows()).copy_from(&c_c);
            let smallest = pbh.singular_values().min();
            smallest <= 1e-7 * scale
        })
        .collect()
}

/// Brute-force pencil rank test on a grid point.
pub fn pencil_rank_at(sys: &LtiSystem, z: Complex<f64>) -> usize {
    let n = sys.n();
    let q = sys.q();
    let p = sys.p();
    let mut pencil = DMatrix::<Complex<f64>>::zeros(n + p, n + q);
    for i in 0..n {
        for j in 0..n {
            let diag = if i == j { z } else { Complex::new(0.0, 0.0) };
            pencil[(i, j)] = diag - sys.a()[(i, j)];
        }
        for j in 0..q {
            pencil[(i, n + j)] = Complex::new(-sys.e()[(i, j)], 0.0);
        }
    }
    for i in 0..p {
        for j in 0..n {
            pencil[(n + i, j)] = Complex::new(sys.c()[(i, j)], 0.0);
        }
    }
    let sv = pencil.singular_values();
    let tol = 1e-8 * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > tol).count()
}

#[derive(Debug, Clone, Copy)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub p: usize,
}

/// `n <= 6`, `1 <= q <= p < n`.
pub fn random_dims(rng: &mut Rng8) -> Dims {
    let n = rng.random_range(2..=6);
    let p = rng.random_range(1..n);
    let q = rng.random_range(1..=p);
    let m = rng.random_range(1..=3);
    Dims { n, m, q, p }
}

/// Plant meeting `rank(CE) = q` with every invariant zero inside radius
/// 0.9, so both existence conditions hold with margin.
pub fn solvable_system(rng: &mut Rng8, plant_radius: f64) -> LtiSystem {
    loop {
        let d = random_dims(rng);
        let a = with_radius(rng, d.n, plant_radius);
        let b = random_matrix(rng, d.n, d.m);
        let e = random_matrix(rng, d.n, d.q);
        let c = random_matrix(rng, d.p, d.n);
        let Ok(sys) = LtiSystem::new(a, b, e, c) else { continue };
        let ce = sys.c() * sys.e();
        if ce.singular_values().min() < 0.05 {
            continue;
        }
        if invariant_zeros_oracle(&sys).iter().all(|z| z.norm() < 0.9) {
            return sys;
        }
    }
}

/// Plant with the disturbance entering only `ker C`, so `rank(CE) = 0 < q`.
pub fn rank_violating_system(rng: &mut Rng8, plant_radius: f64) -> LtiSystem {
    loop {
        let n = rng.random_range(3..=6);
        let p = rng.random_range(1..n);
        let q = rng.random_range(1..=p.min(n - p));
        let m = rng.random_range(1..=3);
        let c = random_matrix(rng, p, n);
        // eigenvectors of C^T C with zero eigenvalue span ker C
        let eig = (c.transpose() * &c).symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let kernel = eig.eigenvectors.select_columns(order[..n - p].iter());
        let e = kernel * random_matrix(rng, n - p, q);
        let a = with_radius(rng, n, plant_radius);
        let b = random_matrix(rng, n, m);
        if let Ok(sys) = LtiSystem::new(a, b, e, c) {
            return sys;
        }
    }
}

/// Plant with `rank(CE) = q` and an unstable mode that neither the output
/// nor the rest of the state sees.
pub fn detectability_violating_system(rng: &mut Rng8, plant_radius: f64) -> LtiSystem {
    loop {
        let n = rng.random_range(3..=6);
        let p = rng.random_range(1..n - 1);
        let q = rng.random_range(1..=p);
        let m = rng.random_range(1..=3);
        let magnitude = rng.random_range(1.1..1.5);
        let lambda = if rng.random_bool(0.5) { magnitude } else { -magnitude };

        let mut blocks = Matrix::zeros(n, n);
        blocks[(0, 0)] = lambda;
        let a12 = random_matrix(rng, 1, n - 1);
        blocks.view_mut((0, 1), (1, n - 1)).copy_from(&a12);
        let rest = with_radius(rng, n - 1, plant_radius);
        blocks.view_mut((1, 1), (n - 1, n - 1)).copy_from(&rest);
        let mut c_blocks = Matrix::zeros(p, n);
        c_blocks.view_mut((0, 1), (p, n - 1)).copy_from(&random_matrix(rng, p, n - 1));

        let (t, t_inv) = invertible(rng, n);
        let a = &t * blocks * &t_inv;
        let c = c_blocks * &t_inv;
        let e = random_matrix(rng, n, q);
        let b = random_matrix(rng, n, m);
        let Ok(sys) = LtiSystem::new(a, b, e, c) else { continue };
        let ce = sys.c() * sys.e();
        if ce.singular_values().min() < 0.05 {
            continue;
        }
        return sys;
    }
}

/// Comfortably rich experiment length for the plant.
pub fn samples_for(sys: &LtiSystem) -> usize {
    2 * (sys.m() + sys.q() + sys.n()) + 2
}

pub fn experiment(sys: &LtiSystem, seed: u64) -> Trajectory {
    let mut cfg = ExperimentConfig::new(samples_for(sys), seed);
    cfg.u_range = (-1.0, 1.0);
    cfg.d_range = (-1.0, 1.0);
    generate_experiment(sys, &cfg).unwrap().trajectory
}

pub fn historical(sys: &LtiSystem, seed: u64) -> HistoricalData {
    build(&experiment(sys, seed)).unwrap()
}
