//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use idleq::des::{run_replications, PolicySpec, SimParams, Simulator};
use idleq::distributions::{Distribution, Family, Role};
use idleq::fluid_control::{
    cost_breakdown_at, invariant_queue_length, solve_fluid, solve_fluid_hc, CostModel, UtilizationCost,
};
use idleq::fluid_model::{FluidModel, FluidPolicy};
use idleq::harness::erlang_a_oracle;

type PolicyFromDesign = Box<dyn Fn(f64) -> PolicySpec>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

struct Outcome {
    pass: bool,
    detail: String,
}

fn exp(rate: f64, role: Role) -> Distribution {
    Distribution::exponential(rate, role).unwrap()
}

fn quadratic(a: f64) -> CostModel {
    CostModel::new(a, 0.0, UtilizationCost::Power { coeff: 1.0, exponent: 2.0 }).unwrap()
}

fn hyperexp(weights: &[f64], rates: &[f64], role: Role) -> Distribution {
    Distribution::new(Family::HyperExponential { weights: weights.to_vec(), rates: rates.to_vec() }, role).unwrap()
}

fn sim_params(n: usize, lambda: f64, service: Distribution, patience: Distribution, policy: PolicySpec) -> SimParams {
    SimParams {
        servers: n,
        interarrival: exp(lambda, Role::Interarrival),
        service,
        patience,
        policy,
        cost: quadratic(1.0),
        horizon: 1000.0,
        burn_in: 50.0,
        seed: 20_240_601,
        stream: 0,
        batches: 20,
        track_potential_waits: false,
    }
}

fn fluid_solver_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for lambda in [0.3, 1.0, 2.0, 5.0] {
        for mu in [0.5, 1.0, 2.0] {
            let d = solve_fluid(lambda, mu, &quadratic(1.0)).unwrap();
            let expected = 1.0f64.min(mu / 2.0).min(lambda / mu);
            worst = worst.max((d.b_star - expected).abs());
        }
    }
    Outcome { pass: worst <= 1e-8, detail: format!("max |b* - min(1, mu/2, lambda/mu)| = {worst:.3e} (tol 1e-8)") }
}

fn admission_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let lambda = rng.random_range(0.1..5.0);
        let mu = rng.random_range(0.2..3.0);
        let a = rng.random_range(0.1..3.0);
        let util = UtilizationCost::Power { coeff: rng.random_range(0.1..3.0), exponent: rng.random_range(1.5..3.0) };
        let cost = CostModel::new(a, 0.0, util).unwrap();
        let d = solve_fluid(lambda, mu, &cost).unwrap();
        worst = worst.max((d.p_star * lambda - d.b_star * mu).abs());
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("max |p* lambda - b* mu| = {worst:.3e} over 1000 instances (tol 1e-12)"),
    }
}

fn random_patience(rng: &mut ChaCha8Rng) -> Distribution {
    match rng.random_range(0..3) {
        0 => exp(rng.random_range(0.2..3.0), Role::Patience),
        1 => {
            let w = rng.random_range(0.1..0.9);
            hyperexp(&[w, 1.0 - w], &[rng.random_range(0.2..1.0), rng.random_range(1.0..4.0)], Role::Patience)
        }
        _ => Distribution::new(
            Family::Erlang { shape: rng.random_range(1..4), rate: rng.random_range(0.5..3.0) },
            Role::Patience,
        )
        .unwrap(),
    }
}

fn p_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let lambda: f64 = rng.random_range(0.5..4.0);
        let mu: f64 = rng.random_range(0.5..2.0);
        let patience = random_patience(&mut rng);
        let cost = CostModel::new(
            rng.random_range(0.1..2.0),
            rng.random_range(0.1..2.0),
            UtilizationCost::Power { coeff: rng.random_range(0.1..2.0), exponent: rng.random_range(1.0..3.0) },
        )
        .unwrap();
        let b = rng.random_range(0.0..1.0) * (0.3 * lambda / mu).min(1.0);
        let totals: Vec<f64> = [0.3, 0.6, 1.0]
            .iter()
            .map(|&p| cost_breakdown_at(b, p, lambda, mu, &patience, &cost).unwrap().total())
            .collect();
        for t in &totals[1..] {
            worst = worst.max((t - totals[0]).abs());
        }
    }
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("max objective spread across p = {worst:.3e} over 100 configs (tol 1e-9)"),
    }
}

fn erlang_a_equivalence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [1usize, 5, 20] {
        let mut params = sim_params(n, 1.0, exp(1.0, Role::Service), exp(1.0, Role::Patience), PolicySpec::NonIdling);
        params.horizon = 2e5;
        let est = run_replications(&params, 16, true).unwrap();
        let o = erlang_a_oracle(n, n as f64, 1.0, 1.0, 64).unwrap();
        let nf = n as f64;
        let checks = [
            ("busy", est.mean.busy_frac, est.se.busy_frac, o.e_busy / nf),
            ("queue", est.mean.q_frac, est.se.q_frac, o.e_queue / nf),
            ("aband", est.mean.abandonment_rate, est.se.abandonment_rate, o.abandonment_rate / nf),
        ];
        for (name, v, se, exact) in checks {
            let z = (v - exact) / se;
            let ok = z.abs() <= 3.0 && se / v < 0.01;
            pass &= ok;
            parts.push(format!("N={n} {name} z={z:+.2} se/v={:.2e}", se / v));
        }
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn reference_sweep(policy: impl Fn(f64) -> PolicySpec, n: usize) -> (f64, f64) {
    let design = solve_fluid(2.0, 1.0, &quadratic(1.0)).unwrap();
    let mut params = sim_params(n, 2.0, exp(1.0, Role::Service), exp(1.0, Role::Patience), policy(design.p_star));
    params.horizon = 2000.0;
    params.burn_in = 100.0;
    let est = run_replications(&params, 8, true).unwrap();
    (est.mean.total, est.se.total)
}

fn thinned_policy_convergence() -> Outcome {
    let c_star = 1.75;
    let results: Vec<(usize, f64, f64)> = [10usize, 50, 250]
        .iter()
        .map(|&n| {
            let (c, se) = reference_sweep(|p| PolicySpec::ThinnedNonIdling { p }, n);
            (n, c, se)
        })
        .collect();
    let mut pass = true;
    for w in results.windows(2) {
        let (_, c0, se0) = w[0];
        let (_, c1, se1) = w[1];
        let slack = (se0 * se0 + se1 * se1).sqrt();
        pass &= (c1 - c_star).abs() <= (c0 - c_star).abs() + slack;
    }
    let (_, c250, _) = results[2];
    pass &= (c250 - c_star).abs() <= 0.0875;
    let detail = results
        .iter()
        .map(|(n, c, se)| format!("N={n} C={c:.5}±{se:.5} gap={:+.5}", c - c_star))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome { pass, detail }
}

fn fluid_lower_bound() -> Outcome {
    let c_star = 1.75;
    let design = solve_fluid(2.0, 1.0, &quadratic(1.0)).unwrap();
    let rest = PolicySpec::rest_for_busy_fraction(design.b_star, design.mu);
    let policies: [(&str, PolicyFromDesign); 3] = [
        ("pistar", Box::new(|p| PolicySpec::ThinnedNonIdling { p })),
        ("nonidle", Box::new(|_| PolicySpec::NonIdling)),
        ("rest", Box::new(move |_| rest)),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, policy) in policies.iter() {
        let (c, se) = reference_sweep(policy, 250);
        pass &= c >= c_star - 2.0 * se;
        if *name == "nonidle" {
            pass &= c - c_star >= 0.1;
        }
        parts.push(format!("{name} C={c:.5}±{se:.5}"));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn martingale_mean_zero() -> Outcome {
    let service = Distribution::new(Family::Erlang { shape: 2, rate: 2.0 }, Role::Service).unwrap();
    let patience = hyperexp(&[0.5, 0.5], &[0.5, 2.0], Role::Patience);
    let mut params = sim_params(20, 1.2, service, patience, PolicySpec::NonIdling);
    params.horizon = 50.0;
    params.burn_in = 0.0;
    let est = run_replications(&params, 200, true).unwrap();
    let (m, se) = (est.mean.martingale_residual, est.se.martingale_residual);
    Outcome {
        pass: m.abs() <= 3.0 * se && se > 0.0,
        detail: format!(
            "mean R(T) - hazard integral = {m:+.4} with SE {se:.4} over 200 reps (|z| = {:.2})",
            (m / se).abs()
        ),
    }
}

fn fluid_residuals() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let exp_service = exp(1.0, Role::Service);
    let exp_patience = exp(1.0, Role::Patience);
    let erlang_service = Distribution::new(Family::Erlang { shape: 2, rate: 2.0 }, Role::Service).unwrap();
    let hyper_patience = hyperexp(&[0.5, 0.5], &[0.5, 2.0], Role::Patience);
    let cases = [
        ("ode", &exp_service, &exp_patience, 0.5),
        ("overload", &exp_service, &exp_patience, 2.0),
        ("erlang/hyperexp", &erlang_service, &hyper_patience, 1.5),
    ];
    for (name, service, patience, lambda) in cases {
        let dx = FluidModel::default_dx(service, patience);
        let model = FluidModel::new(service, patience, dx).unwrap();
        let t = model.integrate(&model.empty_state(), 20.0, lambda, FluidPolicy::NonIdling, None).unwrap();
        let r = t.residuals.max();
        pass &= r <= 5.0 * dx;
        parts.push(format!("{name} max residual {r:.2e} (5dx = {:.2e})", 5.0 * dx));
    }
    let ode_error = |dx: f64| {
        let model = FluidModel::new(&exp_service, &exp_patience, dx).unwrap();
        let t = model.integrate(&model.empty_state(), 5.0, 0.5, FluidPolicy::NonIdling, None).unwrap();
        t.samples.iter().map(|s| (s.b - 0.5 * (1.0 - (-s.t).exp())).abs()).fold(0.0, f64::max)
    };
    let ratio = ode_error(0.01) / ode_error(0.005);
    pass &= (1.7..=2.3).contains(&ratio);
    parts.push(format!("ODE error ratio under halving {ratio:.4} (want [1.7, 2.3])"));
    Outcome { pass, detail: parts.join("; ") }
}

fn invariant_fixed_point() -> Outcome {
    let (lambda, mu, theta) = (2.0, 1.0, 1.0);
    let service = exp(mu, Role::Service);
    let patience = exp(theta, Role::Patience);
    let design = solve_fluid(lambda, mu, &quadratic(1.0)).unwrap();
    let dx = FluidModel::default_dx(&service, &patience);
    let model = FluidModel::new(&service, &patience, dx).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    // the optimal thinned state, then the idling state that admits everyone
    for (label, p) in [("(b*, p*)", design.p_star), ("(b*, 1)", 1.0)] {
        let b = design.b_star;
        let init = model.invariant_state(b, p, lambda).unwrap();
        let q = invariant_queue_length(b, p, lambda, mu, &patience).unwrap();
        let chi_exact = -(b * mu / (p * lambda)).ln() / theta;
        let traj = model.integrate(&init, 10.0 / mu, p * lambda, FluidPolicy::BusyCap(b), None).unwrap();
        let drift = traj.samples.iter().map(|s| (s.b - b).abs().max((s.q - q).abs())).fold(0.0, f64::max);
        let chi_err = (init.chi - chi_exact).abs().max((traj.last.chi - chi_exact).abs());
        pass &= drift <= 20.0 * dx && chi_err <= 2.0 * dx;
        parts.push(format!(
            "{label}: drift {drift:.2e} (20dx = {:.2e}), chi error {chi_err:.2e} (2dx = {:.2e})",
            20.0 * dx,
            2.0 * dx
        ));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn holding_cost_extension() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let patience = exp(1.0, Role::Patience);

    let mut worst: f64 = 0.0;
    for lambda in [0.3, 1.0, 2.0, 5.0] {
        for mu in [0.5, 1.0, 2.0] {
            let plain = solve_fluid(lambda, mu, &quadratic(1.0)).unwrap();
            let hc = solve_fluid_hc(lambda, mu, &patience, &quadratic(1.0), true).unwrap();
            worst = worst.max((plain.b_star - hc.b_star).abs());
        }
    }
    pass &= worst <= 1e-9;
    parts.push(format!("c=0 agreement {worst:.2e}"));

    let sq = UtilizationCost::Power { coeff: 1.0, exponent: 2.0 };
    let calculus = [(1.0, 1.0, 1.0), (0.1, 0.1, 0.1)];
    let mut calc_err: f64 = 0.0;
    for (a, c, expected) in calculus {
        let cost = CostModel::new(a, c, sq.clone()).unwrap();
        let d = solve_fluid_hc(2.0, 1.0, &patience, &cost, true).unwrap();
        calc_err = calc_err.max((d.b_star - expected).abs());
    }
    pass &= calc_err <= 1e-6;
    parts.push(format!("calculus cases {calc_err:.2e}"));

    let mut min_second: f64 = f64::INFINITY;
    for law in [exp(0.7, Role::Patience), hyperexp(&[0.3, 0.7], &[0.4, 3.0], Role::Patience)] {
        let (lambda, mu) = (2.0, 1.0);
        let h = 1.0 / 1000.0;
        let q: Vec<f64> =
            (0..=1000).map(|i| invariant_queue_length(i as f64 * h, 1.0, lambda, mu, &law).unwrap()).collect();
        for w in q.windows(3) {
            min_second = min_second.min(w[0] - 2.0 * w[1] + w[2]);
        }
    }
    pass &= min_second >= -1e-9;
    parts.push(format!("min second difference of q(., 1) {min_second:.2e}"));

    let cost = CostModel::new(1.0, 1.0, UtilizationCost::Power { coeff: 2.0, exponent: 2.0 }).unwrap();
    let b_exp = solve_fluid_hc(2.0, 1.0, &exp(1.0, Role::Patience), &cost, true).unwrap().b_star;
    let b_hyp =
        solve_fluid_hc(2.0, 1.0, &hyperexp(&[0.5, 0.5], &[0.6, 3.0], Role::Patience), &cost, true).unwrap().b_star;
    pass &= (b_exp - b_hyp).abs() > 1e-6;
    parts.push(format!("patience sensitivity b* {b_exp:.6} vs {b_hyp:.6}"));
    Outcome { pass, detail: parts.join("; ") }
}

fn des_fluid_consistency() -> Outcome {
    let (n, lambda, mu) = (400usize, 1.5, 1.0);
    let service = Distribution::new(Family::Erlang { shape: 2, rate: 2.0 * mu }, Role::Service).unwrap();
    let patience = exp(1.0, Role::Patience);
    let horizon = 20.0 / mu;
    let step = 0.05;
    let points = (horizon / step).round() as usize;
    // per-replication sd of Q/N is about (lambda/(theta N))^0.5 = 0.06; 32 replications keep the
    // sup over [0, 20] of the averaged path near 0.03
    let reps = 32;

    let mut busy = vec![0.0; points + 1];
    let mut queue = vec![0.0; points + 1];
    for rep in 0..reps {
        let mut params = sim_params(n, lambda, service.clone(), patience.clone(), PolicySpec::NonIdling);
        params.horizon = horizon;
        params.burn_in = 0.0;
        params.stream = rep as u64;
        let mut sim = Simulator::new(params).unwrap();
        for i in 0..=points {
            sim.run_until(i as f64 * step);
            busy[i] += sim.busy() as f64 / (n * reps) as f64;
            queue[i] += sim.queue_len() as f64 / (n * reps) as f64;
        }
    }
    // three-point moving average, narrowed at the ends; wider kernels bias the kink where B saturates
    let half = 1usize;
    let smooth = |xs: &[f64]| -> Vec<f64> {
        (0..xs.len())
            .map(|i| {
                let w = half.min(i).min(xs.len() - 1 - i);
                xs[i - w..=i + w].iter().sum::<f64>() / (2 * w + 1) as f64
            })
            .collect()
    };
    let (busy, queue) = (smooth(&busy), smooth(&queue));

    let dx = FluidModel::default_dx(&service, &patience);
    let model = FluidModel::new(&service, &patience, dx).unwrap();
    let traj = model.integrate(&model.empty_state(), horizon, lambda, FluidPolicy::NonIdling, None).unwrap();
    let stride = (step / dx).round() as usize;
    let mut sup: f64 = 0.0;
    for i in 0..=points {
        let s = traj.samples[i * stride];
        sup = sup.max((s.b - busy[i]).abs()).max((s.q - queue[i]).abs());
    }
    Outcome { pass: sup <= 0.05, detail: format!("sup |DES - fluid| over (B, Q) on [0, 20/mu] = {sup:.4} (tol 0.05)") }
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 fluid solver exactness", fluid_solver_exactness, Duration::from_secs(1)),
        ("2 admission identity", admission_identity, Duration::from_secs(1)),
        ("3 p-independence of enlarged objective", p_independence, Duration::from_secs(1)),
        ("4 Erlang-A oracle equivalence", erlang_a_equivalence, Duration::from_secs(120)),
        ("5 convergence of thinned non-idling policy", thinned_policy_convergence, Duration::from_secs(600)),
        ("6 fluid lower bound at N=250", fluid_lower_bound, Duration::from_secs(600)),
        ("7 abandonment martingale mean zero", martingale_mean_zero, Duration::from_secs(180)),
        ("8 fluid integrator residuals", fluid_residuals, Duration::from_secs(60)),
        ("9 invariant state fixed point", invariant_fixed_point, Duration::from_secs(60)),
        ("10 holding-cost extension", holding_cost_extension, Duration::from_secs(5)),
        ("11 DES-fluid trajectory consistency", des_fluid_consistency, Duration::from_secs(300)),
    ];
    let mut failures = 0;
    for (name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed <= budget;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {name}: {} [{:.2}s / {}s] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            outcome.detail
        );
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
