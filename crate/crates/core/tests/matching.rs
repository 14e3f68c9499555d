use std::time::Instant;

use perdl_core::matching::{build_dag, global_matching, shortest_path, LayeredDag};
use perdl_core::synthgen::{generate_dictionaries, perturb_dictionary, SynthConfig};
use perdl_core::{dist_12, estimate_beta, incoherence, rng, Dictionary};
use rand::Rng;

fn random_dict<R: Rng>(rng: &mut R, d: usize, r: usize) -> Dictionary {
    Dictionary::normalized(rng::gaussian_matrix(rng, d, r)).unwrap()
}

/// Every source-to-terminal path with its forward length; the lightest wins,
/// ties going to the lexicographically smallest node sequence.
fn brute_force(dag: &LayeredDag) -> (Vec<usize>, f64) {
    fn walk(
        dag: &LayeredDag,
        prefix: &mut Vec<usize>,
        len: f64,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        let i = prefix.len();
        if i == dag.num_layers() {
            if best.as_ref().is_none_or(|(_, b)| len < *b) {
                *best = Some((prefix.clone(), len));
            }
            return;
        }
        for &b in dag.layer(i) {
            let step = if i == 0 {
                0.0
            } else {
                dag.weight(i - 1, prefix[i - 1], b)
            };
            prefix.push(b);
            walk(dag, prefix, len + step, best);
            prefix.pop();
        }
    }
    let mut best = None;
    walk(dag, &mut Vec::new(), 0.0, &mut best);
    best.unwrap()
}

#[test]
fn shortest_path_matches_enumeration() {
    let mut rng = rng::stream(21, 0);
    let start = Instant::now();
    for trial in 0..100 {
        let n = rng.random_range(2..=4);
        let d = 4;
        let dicts: Vec<_> = (0..n)
            .map(|_| {
                let r = rng.random_range(1..=4);
                random_dict(&mut rng, d, r)
            })
            .collect();
        let mut dag = build_dag(&dicts).unwrap();
        // Also check graphs with some nodes already removed.
        while (0..n).all(|i| !dag.layer(i).is_empty()) {
            let path = shortest_path(&dag).unwrap();
            let (nodes, len) = brute_force(&dag);
            assert_eq!(path.nodes, nodes, "trial {trial}");
            assert_eq!(path.length, len, "trial {trial}");
            dag.remove_path(&path.nodes);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 2.0);
}

#[test]
fn matching_bound_holds_under_hypothesis() {
    let start = Instant::now();
    let eps = 0.01;
    for trial in 0..100u64 {
        let cfg = SynthConfig {
            seed: 1000 + trial,
            ..SynthConfig::default()
        };
        let n = cfg.num_clients;
        let (global, locals) = generate_dictionaries(&cfg).unwrap();

        let mu = locals
            .iter()
            .map(|l| incoherence(&global.hconcat(l).unwrap()).unwrap())
            .fold(0.0, f64::max);
        let beta = estimate_beta(&locals, 1000, trial).unwrap();
        let bound = (2.0 - 2.0 * mu / (cfg.dim as f64).sqrt()).sqrt().min(beta);
        assert!(
            4.0 * eps * n as f64 <= bound,
            "trial {trial}: hypothesis fails"
        );

        let dicts: Vec<_> = locals
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let full = global.hconcat(l).unwrap();
                perturb_dictionary(&full, eps, rng::client_seed(trial, i))
                    .unwrap()
                    .0
            })
            .collect();
        let m = global_matching(&dicts, cfg.global_atoms, false).unwrap();
        let g_err = dist_12(&m.global, &global).unwrap().0;
        assert!(g_err <= eps, "trial {trial}: global error {g_err}");
        for (i, l) in locals.iter().enumerate() {
            let l_err = dist_12(&m.locals[i], l).unwrap().0;
            assert!(
                l_err <= eps,
                "trial {trial}, client {i}: local error {l_err}"
            );
        }
    }
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn relaxations_scale_with_rg_n_r_squared() {
    let mut rng = rng::stream(23, 0);
    let mut worst: f64 = 0.0;
    for n in 2..=10 {
        for r in [4, 8, 16, 32] {
            let rg = r / 2;
            let dicts: Vec<_> = (0..n).map(|_| random_dict(&mut rng, 32, r)).collect();
            let m = global_matching(&dicts, rg, true).unwrap();
            let ratio = m.relaxations as f64 / (rg * n * r * r) as f64;
            worst = worst.max(ratio);
        }
    }
    assert!(worst <= 2.0, "relaxation constant {worst}");
}

#[test]
fn unperturbed_clients_are_recovered_exactly() {
    let cfg = SynthConfig::default();
    let (global, locals) = generate_dictionaries(&cfg).unwrap();
    let mut rng = rng::stream(24, 0);
    let dicts: Vec<_> = locals
        .iter()
        .map(|l| {
            let pi = rng::signed_permutation(&mut rng, cfg.atoms_per_client);
            global.hconcat(l).unwrap().apply(&pi).unwrap()
        })
        .collect();
    let m = global_matching(&dicts, cfg.global_atoms, true).unwrap();
    assert!(dist_12(&m.global, &global).unwrap().0 <= 1e-12);
    for (i, l) in locals.iter().enumerate() {
        assert!(dist_12(&m.locals[i], l).unwrap().0 <= 1e-12);
    }
}
