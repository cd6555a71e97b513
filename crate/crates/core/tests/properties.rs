use proptest::prelude::*;
use wavepinn_core::bounds::{empirical_ledger, gronwall_factor, hat_c, poincare_constant, trace_constant};
use wavepinn_core::deriv::fd_check_jet;
use wavepinn_core::net::{c0_norm_bound, NetworkClass};
use wavepinn_core::quadrature::StrataSizes;
use wavepinn_core::residual::TrainingErrorReport;
use wavepinn_core::{
    build_sets, damped_wave_problem, eval_jet, posterior_bound, training_error, ActivationNormTable, Architecture, GridCounts,
    InitScheme, MlpParams,
};

fn net(widths: Vec<usize>, seed: u64, scale: f64) -> MlpParams {
    let arch = Architecture::new(widths, None).unwrap();
    MlpParams::init(&arch, seed, InitScheme::SmallUniform { scale }).unwrap()
}

/// Layer `k` blocks `(W, b)` of a flat parameter vector.
fn layers(p: &MlpParams) -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
    let w = &p.architecture().widths;
    (1..w.len())
        .map(|k| {
            let wk = p.weights(k);
            ((0..w[k]).map(|i| wk.row(i).to_vec()).collect(), p.bias(k).to_vec())
        })
        .collect()
}

fn assemble(widths: Vec<usize>, ls: &[(Vec<Vec<f64>>, Vec<f64>)]) -> MlpParams {
    let mut data = vec![];
    for (w, b) in ls {
        w.iter().for_each(|row| data.extend(row));
        data.extend(b);
    }
    MlpParams::from_flat(Architecture::new(widths, None).unwrap(), data).unwrap()
}

/// Side-by-side network whose output is the average of the two outputs.
fn averaged(a: &MlpParams, b: &MlpParams) -> MlpParams {
    let (la, lb) = (layers(a), layers(b));
    let (wa, wb) = (&a.architecture().widths, &b.architecture().widths);
    let depth = la.len();
    let mut widths = vec![wa[0]];
    let mut out = vec![];
    for k in 0..depth {
        let (w1, b1) = &la[k];
        let (w2, b2) = &lb[k];
        let last = k + 1 == depth;
        let mut rows = vec![];
        let mut bias = vec![];
        if last {
            let row: Vec<f64> = w1[0].iter().chain(&w2[0]).map(|v| 0.5 * v).collect();
            rows.push(row);
            bias.push(0.5 * (b1[0] + b2[0]));
        } else {
            let (in_a, in_b) = if k == 0 { (wa[0], 0) } else { (wa[k], wb[k]) };
            for r in w1 {
                let mut row = r.clone();
                row.resize(in_a + in_b, 0.0);
                rows.push(row);
            }
            for r in w2 {
                let row = if k == 0 { r.clone() } else { vec![0.0; in_a].into_iter().chain(r.iter().cloned()).collect() };
                rows.push(row);
            }
            bias.extend(b1);
            bias.extend(b2);
        }
        widths.push(rows.len());
        out.push((rows, bias));
    }
    assemble(widths, &out)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_is_bit_reproducible(seed in 0u64..1000, x in -1.0..1.0f64, y in -1.0..1.0f64, t in 0.0..1.0f64) {
        let p = net(vec![3, 7, 5, 1], seed, 1.0);
        let q = p.clone();
        prop_assert_eq!(p.forward(&[x, y, t]).unwrap().to_bits(), q.forward(&[x, y, t]).unwrap().to_bits());
    }

    #[test]
    fn sampled_sup_below_c0_bound(seed in 0u64..1000, width in 2usize..7, r in 0.1..3.0f64) {
        let arch = Architecture::new(vec![3, width, width, 1], Some(r)).unwrap();
        let p = MlpParams::init(&arch, seed, InitScheme::SmallUniform { scale: r }).unwrap();
        let bound = c0_norm_bound(&arch, &ActivationNormTable::tanh(0).unwrap()).unwrap();
        let n = 12;
        let mut sup = 0.0f64;
        for i in 0..n { for j in 0..n { for k in 0..n {
            let z = [-2.0 + 4.0 * i as f64 / (n - 1) as f64, -2.0 + 4.0 * j as f64 / (n - 1) as f64, 2.0 * k as f64 / (n - 1) as f64];
            sup = sup.max(p.forward(&z).unwrap().abs());
        }}}
        prop_assert!(sup <= bound, "{} > {}", sup, bound);
    }

    #[test]
    fn cn_bound_monotone(l in 2usize..5, w in 1usize..100, r in 0.5..5.0f64, n in 1usize..4, d in 1usize..4) {
        let act = ActivationNormTable::tanh(4).unwrap();
        let at = |l, w, r, n| NetworkClass { depth: l, width: w, weight_bound: r }.log10_cn_bound(d, n, &act).unwrap();
        let base = at(l, w, r, n);
        prop_assert!(at(l + 1, w, r, n) >= base);
        prop_assert!(at(l, w + 1, r, n) >= base);
        prop_assert!(at(l, w, r * 1.5, n) >= base);
        prop_assert!(at(l, w, r, n + 1) >= base);
        let small = ActivationNormTable::tanh(n).unwrap();
        let with_small = NetworkClass { depth: l, width: w, weight_bound: r }.log10_cn_bound(d, n, &small).unwrap();
        prop_assert!(base >= with_small);
    }

    #[test]
    fn jets_are_linear_under_averaging(sa in 0u64..500, sb in 0u64..500, wa in 2usize..6, wb in 2usize..6,
                                      x in -0.5..0.5f64, y in -0.5..0.5f64, t in 0.0..0.5f64) {
        let a = net(vec![3, wa, wa + 1, 1], sa, 1.0);
        let b = net(vec![3, wb, wb, 1], sb + 1000, 1.0);
        let s = averaged(&a, &b);
        let z = [x, y, t];
        let (ja, jb, js) = (eval_jet(&a, &z).unwrap(), eval_jet(&b, &z).unwrap(), eval_jet(&s, &z).unwrap());
        prop_assert!(close(js.value, 0.5 * (ja.value + jb.value), 1e-12));
        prop_assert!(close(js.dt, 0.5 * (ja.dt + jb.dt), 1e-12));
        prop_assert!(close(js.dtt, 0.5 * (ja.dtt + jb.dtt), 1e-12));
        prop_assert!(close(js.laplacian, 0.5 * (ja.laplacian + jb.laplacian), 1e-12));
        for i in 0..2 {
            prop_assert!(close(js.grad_x[i], 0.5 * (ja.grad_x[i] + jb.grad_x[i]), 1e-12));
        }
    }

    #[test]
    fn jets_invariant_under_hidden_permutation(seed in 0u64..500, shift in 1usize..5, x in -0.5..0.5f64, y in -0.5..0.5f64, t in 0.0..0.5f64) {
        let widths = vec![3, 5, 4, 1];
        let p = net(widths.clone(), seed, 1.0);
        let mut ls = layers(&p);
        let perm: Vec<usize> = (0..5).map(|i| (i + shift) % 5).collect();
        let (w1, b1) = ls[0].clone();
        ls[0] = (perm.iter().map(|&i| w1[i].clone()).collect(), perm.iter().map(|&i| b1[i]).collect());
        for row in ls[1].0.iter_mut() {
            let old = row.clone();
            for (j, &i) in perm.iter().enumerate() {
                row[j] = old[i];
            }
        }
        let q = assemble(widths, &ls);
        let z = [x, y, t];
        let (a, b) = (eval_jet(&p, &z).unwrap(), eval_jet(&q, &z).unwrap());
        prop_assert!(close(a.value, b.value, 1e-13) && close(a.dt, b.dt, 1e-13) && close(a.dtt, b.dtt, 1e-13));
        prop_assert!(close(a.laplacian, b.laplacian, 1e-13));
        prop_assert!(close(a.grad_x[0], b.grad_x[0], 1e-13) && close(a.grad_x[1], b.grad_x[1], 1e-13));
    }

    #[test]
    fn second_derivatives_match_difference_quotients(seed in 0u64..1000, x in -0.5..0.5f64, y in -0.5..0.5f64, t in 0.0..0.5f64) {
        let p = net(vec![3, 6, 6, 1], seed, 0.8);
        let z = [x, y, t];
        let coarse = fd_check_jet(&p, &z, 1e-3).unwrap();
        let fine = fd_check_jet(&p, &z, 5e-4).unwrap();
        for ((name, e1), (_, e2)) in coarse.errors.iter().zip(&fine.errors) {
            prop_assert!(*e1 <= 1e-5, "{} {}", name, e1);
            // Central differences are second order: halving h cuts the error about 4x
            // once it is above the roundoff level of the second difference.
            if *e1 > 1e-7 {
                prop_assert!(*e2 <= e1 / 3.0, "{} {} -> {}", name, e1, e2);
            }
        }
    }

    #[test]
    fn residual_components_invariant_under_point_relabeling(seed in 0u64..200, rot in 1usize..40) {
        let problem = damped_wave_problem();
        let sets = build_sets(&problem.domain, &GridCounts::uniform(2, (4, 3), (5, 3), 6)).unwrap();
        let p = net(vec![3, 6, 6, 1], seed, 1.0);
        let mut shuffled = sets.clone();
        for set in [&mut shuffled.interior, &mut shuffled.boundary, &mut shuffled.initial] {
            let n = set.len();
            let k = rot % n;
            set.points.rotate_left(k * set.dim);
            set.weights.rotate_left(k);
            // Also reverse to break the cyclic structure.
            let pts: Vec<Vec<f64>> = set.points.chunks(set.dim).rev().map(|c| c.to_vec()).collect();
            set.points = pts.concat();
            set.weights.reverse();
        }
        let a = training_error(&p, &sets, &problem).unwrap();
        let b = training_error(&p, &shuffled, &problem).unwrap();
        for ((_, x), (_, y)) in a.components().iter().zip(b.components().iter()) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn bound_nonincreasing_in_each_point_count(grow in 0usize..3, factor in 2usize..4) {
        let problem = damped_wave_problem();
        let p = net(vec![3, 6, 6, 1], 3, 1.0);
        let ledger = empirical_ledger(&p, &problem, &Default::default(), 9).unwrap();
        let base = GridCounts::uniform(2, (4, 3), (5, 3), 6);
        let mut bigger = base.clone();
        match grow {
            0 => bigger.interior = bigger.interior.iter().map(|c| c * factor).collect(),
            1 => { bigger.boundary_space = bigger.boundary_space.iter().map(|c| c * factor).collect(); bigger.boundary_time *= factor; }
            _ => bigger.initial = bigger.initial.iter().map(|c| c * factor).collect(),
        }
        let bound = |counts: &GridCounts| {
            let sets = build_sets(&problem.domain, counts).unwrap();
            let rep = TrainingErrorReport {
                pde: 1e-4, su: 2e-5, sut: 3e-5, u0: 1e-5, u1: 4e-6, grad: 2e-5,
                total_sq: 0.0, total: 0.0, sizes: sets.sizes(),
            };
            posterior_bound(&rep, &sets, &ledger, false).unwrap().bound_value
        };
        prop_assert!(bound(&bigger) <= bound(&base));
    }
}

#[test]
fn closed_forms_are_bit_identical() {
    let dom = damped_wave_problem().domain;
    assert_eq!(poincare_constant(&dom).to_bits(), poincare_constant(&dom).to_bits());
    assert_eq!(trace_constant(&dom).to_bits(), trace_constant(&dom).to_bits());
    let g = |c| gronwall_factor(0.5, poincare_constant(&dom), c);
    assert_eq!(g(1.0).to_bits(), g(1.0).to_bits());
    let p = damped_wave_problem();
    assert_eq!(hat_c(&p, 1.0, 0.5).unwrap().to_bits(), hat_c(&p, 1.0, 0.5).unwrap().to_bits());
}

#[test]
fn tanh_second_derivative_sup() {
    // |tanh''| peaks where tanh = 1/√3: 2·(1/√3)·(2/3) = 4/(3√3).
    let table = ActivationNormTable::tanh(2).unwrap();
    assert!((table.sup_norms[2] - 4.0 / (3.0 * 3f64.sqrt())).abs() < 1e-6);
}

#[test]
fn strata_sizes_total() {
    assert_eq!(StrataSizes { m_pde: 3, m_s: 4, m_t: 5 }.total(), 12);
}
