//! Souping algorithms against brute-force f64 re-implementations, the alpha
//! gradient against finite differences, and the reduction identities.

mod common;

use common::{
    alpha_gradient_check, gis_oracle, graph20, greedy_oracle, max_abs_diff, random_members, spec,
    to_f64, RefGraph,
};
use proptest::prelude::*;
use soupkit::gnn::{init_params, Arch, ModelInput};
use soupkit::graph::{generate_sbm, partition, GraphData, SbmParams, Split};
use soupkit::ingredients::{train_one, Optimizer, TrainConfig};
use soupkit::soup::{
    gis_soup, greedy_soup, learned_soup, pls_soup, uniform_soup, LsConfig, PlsConfig,
};

#[test]
fn alpha_gradient_matches_finite_differences() {
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..10 {
        let c = alpha_gradient_check(seed);
        assert!(
            c.max_rel_err < 1e-3,
            "seed {seed}: relative error {}",
            c.max_rel_err
        );
        checked += c.checked;
        skipped += c.skipped;
    }
    assert!(
        skipped * 10 < checked,
        "{skipped} probes crossed a kink, {checked} checked"
    );
}

/// Five random instances: N in 2..=4, both architectures.
fn instances() -> Vec<(Arch, usize, u64)> {
    (0..5u64)
        .map(|s| {
            (
                if s % 2 == 0 { Arch::Gcn } else { Arch::Sage },
                2 + (s as usize % 3),
                s,
            )
        })
        .collect()
}

#[test]
fn greedy_matches_the_brute_force_oracle() {
    for (arch, n, seed) in instances() {
        let graph = graph20(seed + 20);
        let spec = spec(arch, graph.feat_dim(), 6, graph.num_classes());
        let members = random_members(&spec, n, seed + 3);
        let report = greedy_soup(&members, &graph).unwrap();
        let rg = RefGraph::new(&graph, arch);
        let (kept, accs, soup) =
            greedy_oracle(&members.iter().map(to_f64).collect::<Vec<_>>(), &rg);
        assert_eq!(report.kept, kept, "{arch} N={n} seed {seed}");
        let lib_accs: Vec<f64> = report.trace.iter().map(|t| t.val_acc.unwrap()).collect();
        assert_eq!(lib_accs, accs, "{arch} N={n} seed {seed}");
        assert!(max_abs_diff(&soup, &report.result) < 1e-5);
    }
}

#[test]
fn gis_matches_the_brute_force_oracle() {
    for (k, (arch, n, seed)) in instances().into_iter().enumerate() {
        let g = 2 + k % 4;
        let graph = graph20(seed + 40);
        let spec = spec(arch, graph.feat_dim(), 6, graph.num_classes());
        let members = random_members(&spec, n, seed + 11);
        let report = gis_soup(&members, &graph, g).unwrap();
        let rg = RefGraph::new(&graph, arch);
        let (flags, accs, soup) =
            gis_oracle(&members.iter().map(to_f64).collect::<Vec<_>>(), &rg, g);
        let lib_flags: Vec<bool> = report.trace.iter().map(|t| t.accepted.unwrap()).collect();
        let lib_accs: Vec<f64> = report.trace.iter().map(|t| t.val_acc.unwrap()).collect();
        assert_eq!(lib_flags, flags, "{arch} N={n} g={g} seed {seed}");
        assert_eq!(lib_accs, accs, "{arch} N={n} g={g} seed {seed}");
        assert!(max_abs_diff(&soup, &report.result) < 1e-5);
        assert_eq!(report.counters.interpolation_passes, ((n - 1) * g) as u64);
    }
}

#[test]
fn reduction_identities() {
    let graph = graph20(5);
    let spec = spec(Arch::Gcn, graph.feat_dim(), 6, graph.num_classes());
    let model = init_params(&spec, 9).unwrap();

    let uniform = uniform_soup(&vec![model.clone(); 4], &graph).unwrap();
    assert_eq!(uniform.result, model);

    let gis = gis_soup(std::slice::from_ref(&model), &graph, 5).unwrap();
    assert_eq!(gis.result, model);
    assert_eq!(gis.counters.interpolation_passes, 0);

    let members = random_members(&spec, 3, 2);
    let ls = LsConfig {
        epochs: 15,
        alpha_seed: 4,
        ..Default::default()
    };
    let parts = partition(&graph, 4, 1).unwrap();
    let full = PlsConfig {
        ls,
        k: 4,
        r: 4,
        score_interval: 3,
    };
    let a = learned_soup(&members, &graph, &ls).unwrap();
    let b = pls_soup(&members, &graph, &parts, &full).unwrap();
    assert_eq!(a.result, b.result);
    assert_eq!(
        a.alphas.as_ref().unwrap().raw_matrix(),
        b.alphas.as_ref().unwrap().raw_matrix()
    );
    let losses = |r: &soupkit::soup::SoupReport| {
        r.trace
            .iter()
            .map(|t| t.loss.unwrap().to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(b.counters.snapshot_scoring_passes, 0);
}

#[test]
fn counter_laws() {
    let graph = graph20(6);
    let spec = spec(Arch::Sage, graph.feat_dim(), 6, graph.num_classes());
    let members = random_members(&spec, 5, 8);
    let gis = gis_soup(&members, &graph, 20).unwrap();
    assert_eq!(gis.counters.interpolation_passes, 80);
    assert_eq!(gis.counters.ingredient_scoring_passes, 5);
    assert_eq!(gis.counters.forward_passes, 85);

    let ls = learned_soup(
        &members,
        &graph,
        &LsConfig {
            epochs: 100,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(
        (ls.counters.forward_passes, ls.counters.backward_passes),
        (100, 100)
    );

    let uniform = uniform_soup(&members, &graph).unwrap();
    assert_eq!(uniform.counters.forward_passes, 0);
}

#[test]
fn pls_touches_about_a_quarter_of_the_graph() {
    let graph = generate_sbm(&SbmParams {
        nodes: 1000,
        seed: 2,
        ..SbmParams::default()
    })
    .unwrap();
    let spec = spec(Arch::Gcn, graph.feat_dim(), 16, graph.num_classes());
    let members = random_members(&spec, 3, 1);
    let parts = partition(&graph, 32, 0).unwrap();
    let cfg = PlsConfig {
        ls: LsConfig {
            epochs: 100,
            ..Default::default()
        },
        k: 32,
        r: 8,
        score_interval: 10,
    };
    let r = pls_soup(&members, &graph, &parts, &cfg).unwrap();
    assert_eq!(
        (r.counters.forward_passes, r.counters.backward_passes),
        (100, 100)
    );
    let frac = r.counters.mean_nodes_per_pass() / graph.num_nodes() as f64;
    assert!(
        (0.2..=0.3).contains(&frac),
        "mean pass covers {frac} of the graph"
    );
    // scored at epochs 0, 10, ..., 90 and the last one
    assert_eq!(r.counters.snapshot_scoring_passes, 11);
}

#[test]
fn learned_mass_moves_to_the_better_member() {
    let graph = generate_sbm(&SbmParams {
        nodes: 30,
        classes: 3,
        p_in: 0.5,
        p_out: 0.05,
        feat_dim: 8,
        noise: 0.3,
        split: [0.4, 0.3, 0.3],
        seed: 3,
    })
    .unwrap();
    let spec = spec(Arch::Gcn, graph.feat_dim(), 8, graph.num_classes());
    let init = init_params(&spec, 0).unwrap();
    let cfg = TrainConfig {
        epochs: 100,
        lr: 0.05,
        weight_decay: 0.0,
        optimizer: Optimizer::Adam,
        seed_base: 0,
        diversity_jitter: false,
    };
    let (good, good_acc) = train_one(&graph, &init, &cfg, 1).unwrap();
    let input = ModelInput::new(&graph, Arch::Gcn);
    let bad = (0..50)
        .map(|s| init_params(&spec, 100 + s).unwrap())
        .find(|m| soupkit::gnn::evaluate(m, &input, Split::Val).unwrap() <= 0.34)
        .expect("some random model is near chance");
    assert!(good_acc >= 0.85, "trained member reaches only {good_acc}");

    let r = learned_soup(
        &[good, bad],
        &graph,
        &LsConfig {
            epochs: 200,
            ..Default::default()
        },
    )
    .unwrap();
    let alphas = r.alphas.unwrap();
    for l in 0..2 {
        assert!(
            alphas.ratio(0, l) > alphas.ratio(1, l),
            "layer {l}: {} vs {}",
            alphas.ratio(0, l),
            alphas.ratio(1, l)
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ratios_stay_on_the_simplex_after_every_step(epochs in 1usize..12, lr in 0.01f32..20.0, seed in 0u64..1000) {
        // score_interval 0 returns the alphas after the last step
        let graph = graph20(seed % 7);
        let spec = spec(Arch::Gcn, graph.feat_dim(), 6, graph.num_classes());
        let members = random_members(&spec, 3, seed);
        let parts = partition(&graph, 2, seed).unwrap();
        let cfg = PlsConfig { ls: LsConfig { epochs, lr, alpha_seed: seed, ..Default::default() }, k: 2, r: 1, score_interval: 0 };
        match pls_soup(&members, &graph, &parts, &cfg) {
            Ok(r) => {
                let ratios = r.alphas.unwrap().ratios();
                for l in 0..2 {
                    let row = ratios.row(l);
                    prop_assert!((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-5);
                    prop_assert!(row.iter().all(|&v| v > 0.0), "{row:?}");
                }
            }
            // a half of a 20-node graph can miss the validation split twice
            Err(soupkit::soup::SoupError::NoValidation { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
