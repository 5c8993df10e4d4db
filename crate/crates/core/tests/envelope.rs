//! Certified rates against the decay actually achieved along admissible walks.
//!
//! The certificate bounds the rate through `rho` and the commutator term only;
//! plain chains between stable blocks are not charged against the rate. These
//! tests pin down the resulting gap on two commuting families.

use approx::assert_relative_eq;

use switchcert_core::certificate::{check_certificate, CertifyOptions};
use switchcert_core::graph::{build_graph, walk_to_signal, SwitchGraph, Walk};
use switchcert_core::linalg::{Matrix, SCHUR_MARGIN};
use switchcert_core::oracle::{bound_check_exhaustive, induction_constant, DEFAULT_ENUMERATION_CAP};
use switchcert_core::search::{find_stable_combination, SearchBounds};
use switchcert_core::simulate::{fit_decay, product_norms};
use switchcert_core::MatrixFamily;

fn family(diagonals: &[[f64; 2]]) -> MatrixFamily {
    MatrixFamily::new(diagonals.iter().map(|d| Matrix::diag(d).unwrap()).collect()).unwrap()
}

fn periodic(graph: &SwitchGraph, cycle: &[usize], repeats: usize) -> Walk {
    Walk::new(graph, cycle.iter().copied().cycle().take(cycle.len() * repeats).collect()).unwrap()
}

#[test]
fn diagonal_pair_decays_slower_than_certified_rate() {
    let f = family(&[[1.2, 0.4], [0.4, 1.2]]);
    let comb = find_stable_combination(&f, SearchBounds::default(), SCHUR_MARGIN).unwrap().unwrap();
    let cert = check_certificate(&f, &comb, CertifyOptions::default()).unwrap();
    assert!(cert.feasible);
    let g = build_graph(2).unwrap();

    // Cycle [2, 3] applies A_1 A_2 A_2 = diag(0.192, 0.576) every 3 steps.
    let s = walk_to_signal(&periodic(&g, &[2, 3], 40), &comb).unwrap();
    let norms = product_norms(&f, &s, 120).unwrap();
    let achieved = -(0.576f64).ln() / 3.0;
    assert_relative_eq!(fit_decay(&norms).unwrap().lambda_hat, achieved, max_relative = 1e-2);
    assert!(achieved < cert.lambda - 0.18);

    // Hence no finite c: the exhaustive ratio grows with the horizon.
    let c = induction_constant(&f, &g, &comb, cert.lambda, None, DEFAULT_ENUMERATION_CAP).unwrap().value;
    let r10 = bound_check_exhaustive(&f, &g, &comb, cert.lambda, c, 10, DEFAULT_ENUMERATION_CAP).unwrap();
    let r16 = bound_check_exhaustive(&f, &g, &comb, cert.lambda, c, 16, DEFAULT_ENUMERATION_CAP).unwrap();
    assert!(r10.value > 2.9 && r16.value > r10.value, "{} {}", r10.value, r16.value);
}

#[test]
fn expanding_chain_is_certified_but_unstable() {
    let mut d = vec![[1.2, 0.4], [0.4, 1.2]];
    d.extend(std::iter::repeat_n([1.2, 1.2], 8));
    let f = family(&d);
    let comb = find_stable_combination(&f, SearchBounds::default(), SCHUR_MARGIN).unwrap().unwrap();
    assert_eq!((comb.i, comb.j, comb.p, comb.q, comb.m), (1, 2, 1, 1, 1));
    let cert = check_certificate(&f, &comb, CertifyOptions::default()).unwrap();
    assert_eq!(cert.inputs.epsilon, 0.0);
    assert!(cert.feasible);

    // Cycle [3, 4, ..., 10, 11] applies 1.2^8 * 0.48 > 2 per cycle.
    let g = build_graph(10).unwrap();
    let cycle: Vec<usize> = (3..=11).collect();
    let s = walk_to_signal(&periodic(&g, &cycle, 10), &comb).unwrap();
    let norms = product_norms(&f, &s, 100).unwrap();
    assert_relative_eq!(norms[100], (1.2f64.powi(8) * 0.48).powi(10), max_relative = 1e-12);
    assert!(norms[100] > 1e3);
}
