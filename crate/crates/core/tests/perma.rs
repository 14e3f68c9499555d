use perdl_core::dl::{estimate_rate, DlAlgorithm, StepSize, WarmStartConfig};
use perdl_core::perma::{run_independent, run_perma, traces_to_csv, ClientState, PermaOptions};
use perdl_core::synthgen::{generate, perturb_dictionary, GroundTruth, SynthConfig};
use perdl_core::{dist_12, rng};

const SEEDS: [u64; 3] = [0, 1, 2];

fn fixture(seed: u64) -> GroundTruth {
    generate(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn warm_clients(gt: &GroundTruth, seed: u64) -> Vec<ClientState> {
    let ws = WarmStartConfig {
        seed,
        ..WarmStartConfig::default()
    };
    (0..gt.num_clients())
        .map(|i| {
            ClientState::new(
                i,
                gt.data[i].clone(),
                DlAlgorithm::orthogonal(0.15),
                ws.for_client(i),
                6,
            )
        })
        .collect()
}

/// Gradient clients with step sizes spread over a range, started near the truth.
fn graded_clients(gt: &GroundTruth, seed: u64) -> Vec<ClientState> {
    (0..gt.num_clients())
        .map(|i| {
            let eta = 0.001 + 0.0005 * i as f64;
            let alg = DlAlgorithm::general(0.15, StepSize::Fixed(eta));
            let mut c = ClientState::new(i, gt.data[i].clone(), alg, WarmStartConfig::default(), 6);
            let start =
                perturb_dictionary(&gt.client_dictionary(i), 0.1, rng::client_seed(seed, i));
            c.initial = Some(start.unwrap().0);
            c
        })
        .collect()
}

fn global_trace(traces: &[perdl_core::perma::RoundTrace]) -> Vec<f64> {
    traces
        .iter()
        .map(|t| t.mean_global_err().unwrap())
        .collect()
}

#[test]
fn global_rate_is_an_average_of_client_rates() {
    let rounds = 30;
    for seed in SEEDS {
        let gt = fixture(seed);
        let alone = run_independent(&graded_clients(&gt, seed), rounds, &gt, None).unwrap();
        let rates: Vec<f64> = (0..gt.num_clients())
            .map(|k| {
                let e: Vec<f64> = alone.iter().map(|t| t.global_err[k].unwrap()).collect();
                estimate_rate(&e).unwrap().rho
            })
            .collect();
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().copied().fold(0.0, f64::max);
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;

        let opts = PermaOptions {
            rounds,
            renormalize: false,
            ..PermaOptions::default()
        };
        let outcome = run_perma(&mut graded_clients(&gt, seed), &opts, Some(&gt)).unwrap();
        let fit = estimate_rate(&global_trace(&outcome.server.history)).unwrap();
        assert!(
            lo <= fit.rho && fit.rho <= hi,
            "seed {seed}: {} outside [{lo}, {hi}]",
            fit.rho
        );
        assert!(
            (fit.rho - mean).abs() <= 0.1,
            "seed {seed}: {} vs mean {mean}",
            fit.rho
        );
    }
}

/// The error ends below the fitted floor `2 psi / (1 - rho)`, or at round-off
/// when the trace is geometric all the way down and the fitted `psi` is not positive.
fn assert_reaches_floor(errors: &[f64], label: &str) {
    let fit = estimate_rate(errors).unwrap();
    assert!(fit.rho < 1.0, "{label}: rate {}", fit.rho);
    let floor = (2.0 * fit.psi / (1.0 - fit.rho)).max(1e-12);
    let last = *errors.last().unwrap();
    assert!(last <= floor, "{label}: final {last} above floor {floor}");
}

#[test]
fn global_error_contracts_to_its_floor() {
    for seed in SEEDS {
        let gt = fixture(seed);
        let outcome = run_perma(
            &mut warm_clients(&gt, seed),
            &PermaOptions::default(),
            Some(&gt),
        )
        .unwrap();
        assert_reaches_floor(
            &global_trace(&outcome.server.history),
            &format!("orthogonal, seed {seed}"),
        );

        let opts = PermaOptions {
            rounds: 30,
            renormalize: false,
            ..PermaOptions::default()
        };
        let outcome = run_perma(&mut graded_clients(&gt, seed), &opts, Some(&gt)).unwrap();
        assert_reaches_floor(
            &global_trace(&outcome.server.history),
            &format!("gradient, seed {seed}"),
        );
    }
}

#[test]
fn local_errors_contract() {
    let gt = fixture(0);
    let opts = PermaOptions {
        rounds: 30,
        renormalize: false,
        ..PermaOptions::default()
    };
    let outcome = run_perma(&mut graded_clients(&gt, 0), &opts, Some(&gt)).unwrap();
    let history = &outcome.server.history;
    for k in 0..gt.num_clients() {
        let e: Vec<f64> = history.iter().map(|t| t.local_err[k].unwrap()).collect();
        let fit = estimate_rate(&e).unwrap();
        assert!(fit.rho < 1.0, "client {k}: rate {}", fit.rho);
        assert!(e.last().unwrap() < &e[0], "client {k}");
    }
}

#[test]
fn client_order_does_not_change_the_estimate() {
    let gt = fixture(0);
    let opts = PermaOptions {
        rounds: 10,
        ..PermaOptions::default()
    };
    let forward = run_perma(&mut warm_clients(&gt, 0), &opts, Some(&gt)).unwrap();
    let mut shuffled = warm_clients(&gt, 0);
    shuffled.reverse();
    shuffled.swap(2, 7);
    let permuted = run_perma(&mut shuffled, &opts, Some(&gt)).unwrap();

    assert_ne!(forward.matching.layer_order, permuted.matching.layer_order);
    let a = dist_12(&forward.server.global, &gt.global).unwrap().0;
    let b = dist_12(&permuted.server.global, &gt.global).unwrap().0;
    assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
}

#[test]
fn weak_clients_match_the_collaborative_global() {
    let mut cfg = SynthConfig {
        seed: 0,
        ..SynthConfig::default()
    };
    for i in [7, 8, 9] {
        cfg.sample_overrides.insert(i, 20);
    }
    let gt = generate(&cfg).unwrap();
    let outcome = run_perma(
        &mut warm_clients(&gt, 0),
        &PermaOptions::default(),
        Some(&gt),
    )
    .unwrap();
    for p in &outcome.partitions {
        assert_eq!(p.global, outcome.server.global);
    }
}

#[test]
fn repeated_runs_are_identical() {
    let gt = fixture(1);
    let run = |threads| {
        let opts = PermaOptions {
            rounds: 10,
            threads,
            ..PermaOptions::default()
        };
        let outcome = run_perma(&mut warm_clients(&gt, 1), &opts, Some(&gt)).unwrap();
        traces_to_csv(&outcome.server.history, false)
    };
    let first = run(None);
    assert_eq!(first, run(Some(1)));
    assert_eq!(first, run(Some(4)));
}
