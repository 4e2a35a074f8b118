//! End-to-end gradients of the masked training loss with respect to every
//! model parameter, against central differences of the f64 reference model.

mod common;

use common::{ce_loss, forward, graph20, operator, rel_err, relu_pattern, spec, to_f64, M};
use soupkit::gnn::{forward_tape, init_params, Arch, Mode, ModelInput};
use soupkit::graph::{GraphData, Split};
use soupkit::tensor::GradTape;

const H: f64 = 1e-3;

fn check_arch(arch: Arch) {
    let (mut checked, mut skipped) = (0usize, 0usize);
    for seed in 0..8u64 {
        let graph = graph20(seed);
        let spec = spec(arch, graph.feat_dim(), 6, graph.num_classes());
        let params = init_params(&spec, 40 + seed).unwrap();
        let op = operator(&graph, arch);
        let x = M::from_dense(graph.features());
        let labels = graph.labels();
        let mask = graph.mask(Split::Train);

        let base = to_f64(&params);
        let input = ModelInput::new(&graph, arch);
        let mut tape = GradTape::new();
        let vars: Vec<Vec<_>> = params
            .layers()
            .iter()
            .map(|g| g.iter().map(|m| tape.param(m)).collect())
            .collect();
        let logits = forward_tape(&mut tape, &spec, &vars, &input, Mode::Eval).unwrap();
        let loss = tape.cross_entropy_masked(logits, labels, mask).unwrap();
        let value = tape.value(loss).data()[0] as f64;
        let grads = tape.backward(loss).unwrap();

        let f = |layers: &Vec<Vec<M>>| ce_loss(&forward(arch, layers, &op, &x), labels, mask);
        assert!(rel_err(value, f(&base), 1.0) < 1e-5);
        for (l, groups) in vars.iter().enumerate() {
            for (g, v) in groups.iter().enumerate() {
                let tape_grad = grads.get(*v).unwrap();
                for e in 0..base[l][g].d.len() {
                    let mut plus = base.clone();
                    plus[l][g].d[e] += H;
                    let mut minus = base.clone();
                    minus[l][g].d[e] -= H;
                    let pattern = relu_pattern(arch, &base, &op, &x);
                    if relu_pattern(arch, &plus, &op, &x) != pattern
                        || relu_pattern(arch, &minus, &op, &x) != pattern
                    {
                        skipped += 1;
                        continue;
                    }
                    let fd = (f(&plus) - f(&minus)) / (2.0 * H);
                    let an = tape_grad.data()[e] as f64;
                    assert!(
                        rel_err(an, fd, 1e-4) < 1e-3,
                        "{arch} seed {seed} layer {l} group {g} entry {e}: tape {an} vs fd {fd}"
                    );
                    checked += 1;
                }
            }
        }
    }
    assert!(
        skipped * 10 < checked,
        "{arch}: {skipped} entries straddle a kink, {checked} checked"
    );
}

#[test]
fn gcn_parameter_gradients_match_finite_differences() {
    check_arch(Arch::Gcn);
}

#[test]
fn sage_parameter_gradients_match_finite_differences() {
    check_arch(Arch::Sage);
}

#[test]
fn library_forward_matches_the_reference_model() {
    for arch in [Arch::Gcn, Arch::Sage] {
        for seed in 0..4 {
            let graph = graph20(seed);
            let spec = spec(arch, graph.feat_dim(), 6, graph.num_classes());
            let params = init_params(&spec, seed).unwrap();
            let logits = soupkit::gnn::predict(&params, &ModelInput::new(&graph, arch)).unwrap();
            let reference = forward(
                arch,
                &to_f64(&params),
                &operator(&graph, arch),
                &M::from_dense(graph.features()),
            );
            let diff = M::from_dense(&logits)
                .d
                .iter()
                .zip(&reference.d)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-5, "{arch} seed {seed}: {diff}");
        }
    }
}
