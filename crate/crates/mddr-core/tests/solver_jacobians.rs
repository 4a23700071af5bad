//! Finite-difference validation of the solver's forward-mode sensitivities.
//!
//! Each test re-runs the solver under frozen projection streams with
//! perturbed inputs and compares the analytic Jacobians carried through the
//! Adam recursion against central differences of the final atoms.

use mddr_core::swb::{
    solve, BarycenterWeights, PushforwardLayout, SolveOptions, SwbConfig,
};
use mddr_core::EmpiricalDistribution;
use ndarray::{Array2, Array3};

/// Flat layout mirror: per marginal, A_k (d × h_k, row-major) then b_k.
fn apply_maps(sources: &[Array2<f64>], phi: &[f64], d: usize) -> Vec<EmpiricalDistribution> {
    let mut out = Vec::new();
    let mut off = 0;
    for src in sources {
        let h = src.ncols();
        let a = &phi[off..off + d * h];
        let b = &phi[off + d * h..off + d * h + d];
        off += d * h + d;
        let mut pts = Array2::<f64>::zeros((src.nrows(), d));
        for (j, x) in src.rows().into_iter().enumerate() {
            for r in 0..d {
                let mut acc = b[r];
                for c in 0..h {
                    acc += a[r * h + c] * x[c];
                }
                pts[[j, r]] = acc;
            }
        }
        out.push(EmpiricalDistribution::new(pts).unwrap());
    }
    out
}

fn tiny_sources() -> Vec<Array2<f64>> {
    vec![
        ndarray::array![[0.4, -0.7], [1.2, 0.3]],
        ndarray::array![[-0.9], [0.5], [1.4]],
    ]
}

fn tiny_phi() -> Vec<f64> {
    vec![
        // A_1 (2x2) then b_1
        0.8, -0.2, 0.3, 1.1, 0.05, -0.15, //
        // A_2 (2x1) then b_2
        0.6, -0.4, 0.25, 0.1,
    ]
}

fn tiny_cfg() -> SwbConfig {
    SwbConfig {
        iterations: 3,
        step_size: 0.1,
        projections: 12,
        atoms: Some(2),
        seed: 314,
        ..SwbConfig::default()
    }
}

fn fixed_init() -> Array2<f64> {
    ndarray::array![[0.1, 0.05], [-0.3, 0.6]]
}

fn run_atoms(sources: &[Array2<f64>], phi: &[f64], weights: &BarycenterWeights, cfg: &SwbConfig) -> Array2<f64> {
    let marginals = apply_maps(sources, phi, 2);
    let run = solve(
        &marginals,
        weights,
        cfg,
        SolveOptions {
            init: Some(fixed_init()),
            ..SolveOptions::default()
        },
    )
    .unwrap();
    run.barycenter.points().to_owned()
}

#[test]
fn jac_phi_matches_finite_differences() {
    let sources = tiny_sources();
    let phi = tiny_phi();
    let weights = BarycenterWeights::new(vec![0.65, 0.35]).unwrap();
    let cfg = tiny_cfg();

    let marginals = apply_maps(&sources, &phi, 2);
    let views: Vec<_> = sources.iter().map(|s| s.view()).collect();
    let layout = PushforwardLayout::new(views, 2);
    assert_eq!(layout.param_len(), phi.len());
    let run = solve(
        &marginals,
        &weights,
        &cfg,
        SolveOptions {
            init: Some(fixed_init()),
            pushforwards: Some(&layout),
            ..SolveOptions::default()
        },
    )
    .unwrap();
    let jac: Array3<f64> = run.jac_phi.unwrap();

    let eps = 1e-5;
    let mut checked = 0;
    for q in 0..phi.len() {
        let mut plus = phi.clone();
        plus[q] += eps;
        let mut minus = phi.clone();
        minus[q] -= eps;
        let zp = run_atoms(&sources, &plus, &weights, &cfg);
        let zm = run_atoms(&sources, &minus, &weights, &cfg);
        for l in 0..2 {
            for a in 0..2 {
                let fd = (zp[[l, a]] - zm[[l, a]]) / (2.0 * eps);
                let an = jac[[l, a, q]];
                let rel = (an - fd).abs() / fd.abs().max(1e-6);
                assert!(
                    rel < 1e-3,
                    "param {q} atom {l} coord {a}: analytic {an} vs fd {fd}"
                );
                checked += 1;
            }
        }
    }
    assert_eq!(checked, phi.len() * 4);
}

#[test]
fn jac_pi_matches_finite_differences_on_the_simplex_tangent() {
    let sources = tiny_sources();
    let phi = tiny_phi();
    let cfg = tiny_cfg();
    let pi = [0.6, 0.4];

    let marginals = apply_maps(&sources, &phi, 2);
    let run = solve(
        &marginals,
        &BarycenterWeights::new(pi.to_vec()).unwrap(),
        &cfg,
        SolveOptions {
            init: Some(fixed_init()),
            track_pi: true,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    let jac = run.jac_pi.unwrap();

    // Tangent direction e_1 − e_2 keeps the weights on the simplex.
    let eps = 1e-6;
    let zp = run_atoms(
        &sources,
        &phi,
        &BarycenterWeights::new(vec![pi[0] + eps, pi[1] - eps]).unwrap(),
        &cfg,
    );
    let zm = run_atoms(
        &sources,
        &phi,
        &BarycenterWeights::new(vec![pi[0] - eps, pi[1] + eps]).unwrap(),
        &cfg,
    );
    for l in 0..2 {
        for a in 0..2 {
            let fd = (zp[[l, a]] - zm[[l, a]]) / (2.0 * eps);
            let an = jac[[l, a, 0]] - jac[[l, a, 1]];
            let rel = (an - fd).abs() / fd.abs().max(1e-6);
            assert!(rel < 1e-3, "atom {l} coord {a}: analytic {an} vs fd {fd}");
        }
    }
}

#[test]
fn jac_pi_tangent_vanishes_for_identical_marginals() {
    let src = ndarray::array![[0.4, -0.7], [1.2, 0.3], [0.0, 0.9]];
    let marginal = EmpiricalDistribution::new(src).unwrap();
    let cfg = SwbConfig {
        iterations: 4,
        projections: 16,
        atoms: Some(3),
        seed: 2718,
        ..SwbConfig::default()
    };
    let run = solve(
        &[marginal.clone(), marginal.clone()],
        &BarycenterWeights::new(vec![0.3, 0.7]).unwrap(),
        &cfg,
        SolveOptions {
            init: Some(ndarray::array![[0.2, 0.1], [0.5, -0.2], [-0.1, 0.4]]),
            track_pi: true,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    let jac = run.jac_pi.unwrap();
    for l in 0..3 {
        for a in 0..2 {
            let tangent = jac[[l, a, 0]] - jac[[l, a, 1]];
            assert!(tangent.abs() < 1e-3, "atom {l} coord {a}: {tangent}");
        }
    }
}
