use nne_core::baselines::smle::consumer_likelihoods;
use nne_core::net::{
    loss_c1, loss_c2, loss_gradient, mean_loss, Activation, DensityFamily, NetConfig, NormalDiagonal, NormalFull,
    NormalIdentity, OutputHead, OutputScaling,
};
use nne_core::search::{
    draw_search_shocks, generate_covariates, reservation_utility, simulate_search_with_shocks, validate_optimality,
    ConsumerGrid, OptionAttributes, SearchOutcome, SearchParams, SearchShocks,
};
use nne_core::{sample_theta, MomentVector, ParamVector, RngStream, ShallowNet, TrainExample};
use proptest::prelude::*;
use rand::Rng;

fn search_space() -> nne_core::ParamSpace {
    nne_core::search::default_param_space()
}

#[test]
fn simulated_choices_satisfy_every_optimality_inequality() {
    let grid = generate_covariates(2000, 30, &RngStream::new(1)).unwrap();
    for t in 0..10u64 {
        let s = RngStream::with_path(2, &[t]);
        let theta = sample_theta(&search_space(), &s.substream(0));
        let p = SearchParams::from_vector(&theta).unwrap();
        let shocks = draw_search_shocks(&grid, &mut s.substream(1).rng());
        let out = simulate_search_with_shocks(&p, &grid, &shocks).unwrap();
        let report = validate_optimality(&p, &grid, &shocks, &out).unwrap();
        assert!(report.inequalities_checked > 0);
        assert!(report.is_clean(), "theta {t}: {} violations", report.count());
    }
}

#[test]
fn validator_flags_a_tampered_purchase() {
    let grid = generate_covariates(200, 10, &RngStream::new(5)).unwrap();
    let p = SearchParams::monte_carlo_truth();
    let shocks = draw_search_shocks(&grid, &mut RngStream::new(6).rng());
    let mut out = simulate_search_with_shocks(&p, &grid, &shocks).unwrap();
    let i = out.iter().position(|o| o.search_order.len() >= 2 && o.bought.is_some()).expect("some multi-search buyer");
    let bought = out[i].bought.unwrap();
    let other = *out[i].search_order.iter().find(|&&j| j != bought).unwrap();
    out[i].bought = Some(other);
    let report = validate_optimality(&p, &grid, &shocks, &out).unwrap();
    assert!(report.count() > 0);
}

proptest! {
    #[test]
    fn reservation_utility_is_shift_equivariant(v in -5.0f64..5.0, shift in -5.0f64..5.0, log_c in -6.0f64..1.0) {
        let c = 10f64.powf(log_c);
        let a = reservation_utility(v + shift, c).unwrap();
        let b = reservation_utility(v, c).unwrap() + shift;
        prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn reservation_utility_decreases_in_cost(v in -3.0f64..3.0, c in 1e-4f64..2.0, dc in 1e-3f64..1.0) {
        prop_assert!(reservation_utility(v, c + dc).unwrap() < reservation_utility(v, c).unwrap());
    }

    #[test]
    fn outcomes_are_well_formed(seed in 0u64..500) {
        let s = RngStream::new(seed);
        let grid = generate_covariates(20, 8, &s.substream(0)).unwrap();
        let p = SearchParams::from_vector(&sample_theta(&search_space(), &s.substream(1))).unwrap();
        let shocks = draw_search_shocks(&grid, &mut s.substream(2).rng());
        let out = simulate_search_with_shocks(&p, &grid, &shocks).unwrap();
        for (i, o) in out.iter().enumerate() {
            prop_assert!(o.check(grid.n_options(i)).is_ok());
        }
    }
}

fn random_net(rng: &mut impl Rng, d: usize, h: usize, p: usize, head: OutputHead, act: Activation) -> ShallowNet {
    let cfg = NetConfig::new(d, h, p, head).with_activation(act);
    ShallowNet::from_parts(
        cfg,
        (0..cfg.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..d).map(|_| rng.random_range(-0.5..0.5)).collect(),
        (0..d).map(|_| rng.random_range(0.5..2.0)).collect(),
        OutputScaling {
            shift: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
            scale: (0..p).map(|_| rng.random_range(0.3..3.0)).collect(),
        },
    )
    .unwrap()
}

fn examples(rng: &mut impl Rng, n: usize, d: usize, p: usize) -> Vec<TrainExample> {
    (0..n)
        .map(|_| TrainExample {
            theta: ParamVector::new((0..p).map(|_| rng.random_range(-2.0..2.0)).collect()),
            moments: MomentVector::new("t", (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()),
        })
        .collect()
}

/// Smallest |pre-activation| over the examples; parameters are laid out as
/// W1 (row per hidden unit), b1, W2, b2.
fn min_abs_preactivation(net: &ShallowNet, ex: &[TrainExample]) -> f64 {
    let c = net.config();
    let (d, h) = (c.input_dim, c.hidden_units);
    let w = net.params();
    let mut m = f64::INFINITY;
    for e in ex {
        let x: Vec<f64> = (0..d).map(|k| (e.moments.values()[k] - net.input_mean()[k]) / net.input_sd()[k]).collect();
        for u in 0..h {
            let a = w[h * d + u] + (0..d).map(|k| w[u * d + k] * x[k]).sum::<f64>();
            m = m.min(a.abs());
        }
    }
    m
}

#[test]
fn analytic_gradients_match_central_differences() {
    let fams: [(&dyn DensityFamily<f64>, OutputHead); 3] = [
        (&NormalIdentity, OutputHead::Point),
        (&NormalDiagonal, OutputHead::DiagVar),
        (&NormalFull, OutputHead::FullCov),
    ];
    let mut rng = RngStream::new(77).rng();
    let mut done = 0;
    let mut worst = 0.0f64;
    while done < 60 {
        let (fam, head) = fams[done % 3];
        let act = if done % 2 == 0 { Activation::Relu } else { Activation::Sigmoid };
        let (d, h, p) = (rng.random_range(1..5), rng.random_range(1..7), rng.random_range(1..4));
        let net = random_net(&mut rng, d, h, p, head, act);
        let ex = examples(&mut rng, 4, d, p);
        if act == Activation::Relu && min_abs_preactivation(&net, &ex) < 1e-3 {
            continue;
        }
        done += 1;
        let (_, g) = loss_gradient(&net, fam, &ex).unwrap();
        let step = 1e-5;
        for i in 0..g.len() {
            let mut a = net.clone();
            a.params_mut()[i] += step;
            let mut b = net.clone();
            b.params_mut()[i] -= step;
            let fd = (mean_loss(&a, fam, &ex).unwrap() - mean_loss(&b, fam, &ex).unwrap()) / (2.0 * step);
            worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6));
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn diagonal_loss_with_unit_variance_is_squared_error() {
    let mut rng = RngStream::new(9).rng();
    let (d, h, p) = (4, 6, 3);
    let mut net = random_net(&mut rng, d, h, p, OutputHead::DiagVar, Activation::Sigmoid);
    let shift: Vec<f64> = net.output_scaling().shift.clone();
    // log-variance outputs follow the mean outputs; zero them and undo the
    // output scaling so the variance is exactly one
    let mut zero: Vec<usize> = Vec::new();
    for o in p..2 * p {
        zero.extend(net.output_unit_params(o));
    }
    let mut params = net.params().to_vec();
    for i in zero {
        params[i] = 0.0;
    }
    net = ShallowNet::from_parts(
        *net.config(),
        params,
        net.input_mean().to_vec(),
        net.input_sd().to_vec(),
        OutputScaling { shift, scale: vec![1.0; p] },
    )
    .unwrap();
    let ex = examples(&mut rng, 40, d, p);
    let (c1, c2) = (loss_c1(&net, &ex).unwrap(), loss_c2(&net, &ex).unwrap());
    assert!((c1 - c2).abs() <= 1e-12 * c1.max(1.0), "{c1} vs {c2}");
}

/// Two options, shocks enumerated on an equal-probability grid: the smoothed
/// likelihood at large lambda equals the exact outcome frequencies.
#[test]
fn smoothed_likelihood_converges_to_enumeration() {
    let grid = ConsumerGrid::from_consumers(vec![vec![
        (OptionAttributes([5.0, 4.5, 4.1, 1.0, 0.0, 0.4]), 1),
        (OptionAttributes([3.0, 3.5, 3.8, 1.0, 1.0, -0.2]), 2),
    ]])
    .unwrap();
    let p = SearchParams {
        beta: [0.2, 0.1, 0.1, -0.1, 0.3, -0.4],
        eta: 1.2,
        delta0: -1.0,
        delta1: 0.05,
    };
    let k = 20;
    let nd = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    use statrs::distribution::ContinuousCDF;
    let pts: Vec<f64> = (0..k).map(|i| nd.inverse_cdf((i as f64 + 0.5) / k as f64)).collect();
    let mut draws = Vec::new();
    let mut outs: Vec<SearchOutcome> = Vec::new();
    for &a in &pts {
        for &b in &pts {
            for &c in &pts {
                let s = SearchShocks::from_consumers(&grid, &[vec![a, b, c]]).unwrap();
                outs.push(simulate_search_with_shocks(&p, &grid, &s).unwrap().remove(0));
                draws.push(s);
            }
        }
    }
    let mut distinct = outs.clone();
    distinct.sort_by_key(|o| (o.search_order.clone(), o.bought));
    distinct.dedup();
    assert!(distinct.len() >= 3);
    for o in &distinct {
        let exact = outs.iter().filter(|x| *x == o).count() as f64 / outs.len() as f64;
        let smooth = consumer_likelihoods(&p, &grid, std::slice::from_ref(o), 1e6, &draws).unwrap()[0];
        assert!((smooth - exact).abs() < 1e-3, "{o:?}: {smooth} vs {exact}");
    }
}
