mod common;

use std::sync::Arc;

use roughflow::bounds::slope_with_ci;
use roughflow::drift::{a_priori_record, c_hat, fit_a_priori, perturbation_gap, AnchoredFlow, DriftField, Perturbed, ProbeFlow};
use roughflow::drivers::{lift_piecewise_linear, uniform_grid};
use roughflow::fields::TrigFields;
use roughflow::ode::OdeOptions;
use roughflow::rde::{RdeSolver, SolverConfig};

fn records(b: &DriftField, h: &ProbeFlow, norms: &[f64]) -> Vec<roughflow::drift::APrioriRecord> {
    let mut out = Vec::new();
    for &r in norms {
        for th in [0.3, 2.0] {
            for t in [0.5, 2.0] {
                let xi = [r * f64::cos(th), r * f64::sin(th)];
                out.push(a_priori_record(b, h, &xi, t, 200, &OdeOptions::default()).unwrap());
            }
        }
    }
    out
}

#[test]
fn a_priori_constant_transfers_to_larger_initial_conditions() {
    let b = DriftField::cubic_inward(2);
    let h = ProbeFlow {
        m: 2,
        amplitude: 1.0,
        frequency: 2.0,
    };
    let ch = c_hat(1.0);
    let fit = fit_a_priori(records(&b, &h, &[1.0, 2.0, 4.0]), ch);
    assert!(fit.c > 0.0 && fit.c.is_finite());
    for r in records(&b, &h, &[8.0, 20.0, 40.0]) {
        assert!(r.holds(fit.c, ch), "{r:?} needs {} / {}", r.required_sup_c(), r.required_var_c(ch));
    }
}

#[test]
fn perturbation_gap_is_at_least_square_root_stable() {
    let b = DriftField::cubic_inward(2);
    let base = ProbeFlow {
        m: 2,
        amplitude: 1.0,
        frequency: 3.0,
    };
    let xi = [1.0, -0.5];
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for k in 0..7 {
        let eps = 10f64.powi(-8 + k);
        let g = perturbation_gap(&b, &base, &Perturbed { base, eps }, &xi, &xi, 1.0, 1000).unwrap();
        lx.push(eps.ln());
        ly.push(g.ln());
    }
    let (slope, _) = slope_with_ci(&lx, &ly);
    assert!((0.4..=1.1).contains(&slope), "{slope}");
}

#[test]
fn rde_flow_handles_feed_the_transformed_ode() {
    let pts: Vec<Vec<f64>> = (0..=20).map(|i| vec![(i as f64 * 0.7).sin() * 0.3, (i as f64 * 0.4).cos() * 0.3]).collect();
    let x = lift_piecewise_linear(&pts, &uniform_grid(20, 1.0)).unwrap();
    let rde = RdeSolver::new(Arc::new(TrigFields::sin_rotation(0.5)), &x, SolverConfig::default()).unwrap();
    let h = AnchoredFlow { rde: &rde, anchor: 0.0 };
    let b = DriftField::bounded_inward(2);
    let xi = [0.4, 0.2];
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    for k in 0..5 {
        let eps = 10f64.powi(-7 + k);
        let g = perturbation_gap(&b, &h, &Perturbed { base: h, eps }, &xi, &xi, 1.0, 400).unwrap();
        lx.push(eps.ln());
        ly.push(g.ln());
    }
    let (slope, _) = slope_with_ci(&lx, &ly);
    assert!((0.4..=1.1).contains(&slope), "{slope}");
}
