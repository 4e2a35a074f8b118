//! Experiment runner: aggregation, reproducibility, outputs and the
//! per-method counter laws on a 1000-node plan.

use soupkit::bench::{
    run_plan, BenchReport, Cell, CellConfig, ExperimentPlan, GraphSource, IngredientPlan, ModelPlan,
};
use soupkit::gnn::{load_checkpoint, Arch};
use soupkit::graph::SbmParams;
use soupkit::ingredients::TrainConfig;
use soupkit::soup::{LsConfig, Method, PlsConfig};

fn small_plan(cells: Vec<Cell>, reps: usize) -> ExperimentPlan {
    ExperimentPlan {
        graph: GraphSource::Sbm(SbmParams {
            nodes: 200,
            classes: 3,
            p_in: 0.08,
            p_out: 0.01,
            feat_dim: 8,
            ..SbmParams::default()
        }),
        model: ModelPlan {
            arch: Arch::Gcn,
            layers: 2,
            hidden: 8,
            dropout: 0.5,
        },
        ingredients: IngredientPlan {
            n: 3,
            workers: 1,
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
        },
        cells,
        reps,
        seed: 7,
        baseline: Method::Gis,
    }
}

fn cell(method: Method, epochs: usize, k: usize, r: usize) -> Cell {
    Cell {
        method,
        config: CellConfig {
            granularity: 4,
            pls: PlsConfig {
                ls: LsConfig {
                    epochs,
                    ..LsConfig::default()
                },
                k,
                r,
                score_interval: 5,
            },
        },
        label: None,
    }
}

/// Everything except wall-clock fields and output paths.
fn fingerprint(r: &BenchReport) -> String {
    let mut v = serde_json::to_value(r).unwrap();
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(m) => {
                for key in [
                    "wall_seconds",
                    "seconds",
                    "train_seconds",
                    "speedup",
                    "checkpoint",
                ] {
                    m.remove(key);
                }
                m.values_mut().for_each(strip);
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut v);
    v.to_string()
}

#[test]
fn repeated_uniform_cell_has_zero_spread() {
    let report = run_plan(&small_plan(vec![Cell::new(Method::Uniform)], 2), None).unwrap();
    assert_eq!(report.table.rows.len(), 1);
    assert_eq!(report.table.rows[0].acc_std, Some(0.0));
    assert!(report.summary.is_empty(), "no baseline row, no summary");
}

#[test]
fn plan_is_reproducible_and_writes_its_outputs() {
    let plan = small_plan(
        vec![
            Cell::new(Method::Uniform),
            cell(Method::Gis, 0, 0, 0),
            cell(Method::Pls, 6, 4, 2),
        ],
        2,
    );
    let dir = tempfile::tempdir().unwrap();
    let a = run_plan(&plan, Some(dir.path())).unwrap();
    let b = run_plan(&plan, None).unwrap();
    assert_eq!(fingerprint(&a), fingerprint(&b));

    for name in [
        "table.csv",
        "table.md",
        "report.json",
        "ingredients/manifest.json",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "method,acc_mean,acc_std,seconds,peak_mb,fwd,bwd"
    );
    assert_eq!(csv.lines().count(), 4);
    for cell in &a.cells {
        assert_eq!(cell.reps.len(), 2);
        for rep in &cell.reps {
            let saved = load_checkpoint(dir.path().join(rep.checkpoint.as_ref().unwrap())).unwrap();
            let again = b.cells.iter().find(|c| c.label == cell.label).unwrap();
            assert_eq!(again.reps[rep.rep].seed, rep.seed);
            assert!(saved.num_params() > 0);
        }
    }
    // the two PLS reps use different seeds, hence different subgraphs
    let pls = &a.cells[2].reps;
    assert_ne!(pls[0].seed, pls[1].seed);
    let gis = a.summary.iter().find(|s| s.method == Method::Gis).unwrap();
    assert_eq!((gis.speedup, gis.memory_ratio), (1.0, 1.0));
}

#[test]
fn failing_cell_is_reported_and_the_rest_still_run() {
    let mut bad = cell(Method::Gis, 0, 0, 0);
    bad.config.granularity = 1;
    bad.label = Some("gis-g1".into());
    let report = run_plan(&small_plan(vec![bad, Cell::new(Method::Uniform)], 2), None).unwrap();
    assert_eq!(report.cells[0].errors.len(), 2);
    assert!(report.cells[0].errors[0].contains("granularity"));
    assert_eq!(report.table.rows.len(), 1);
    assert_eq!(report.table.rows[0].label, "uniform");
}

#[test]
fn four_method_plan_on_sbm1000() {
    let (g, e) = (20, 100);
    let plan = ExperimentPlan {
        graph: GraphSource::Sbm(SbmParams {
            nodes: 1000,
            seed: 1,
            ..SbmParams::default()
        }),
        model: ModelPlan::default(),
        ingredients: IngredientPlan {
            n: 10,
            workers: 1,
            ..IngredientPlan::default()
        },
        cells: vec![
            Cell::new(Method::Uniform),
            cell(Method::Gis, e, 32, 8),
            cell(Method::Ls, e, 32, 8),
            cell(Method::Pls, e, 32, 8),
        ]
        .into_iter()
        .map(|mut c| {
            c.config.granularity = g;
            c.config.pls.score_interval = 10;
            c
        })
        .collect(),
        reps: 4,
        seed: 0,
        baseline: Method::Gis,
    };
    let report = run_plan(&plan, None).unwrap();
    assert_eq!(report.table.rows.len(), 4);
    let acc = |m| report.table.row(m).unwrap().acc_mean;
    assert!(
        acc(Method::Ls) >= acc(Method::Uniform),
        "LS {} vs US {}",
        acc(Method::Ls),
        acc(Method::Uniform)
    );
    assert!(
        acc(Method::Pls) >= acc(Method::Uniform),
        "PLS {} vs US {}",
        acc(Method::Pls),
        acc(Method::Uniform)
    );

    for c in &report.cells {
        for r in &c.reps {
            let k = &r.counters;
            match c.method {
                Method::Gis => assert_eq!(k.forward_passes, (9 * g + 10) as u64),
                Method::Ls => {
                    assert_eq!((k.forward_passes, k.backward_passes), (e as u64, e as u64))
                }
                Method::Pls => {
                    assert_eq!((k.forward_passes, k.backward_passes), (e as u64, e as u64));
                    let expected = 8.0 / 32.0 * 1000.0;
                    let rel = (k.mean_nodes_per_pass() - expected).abs() / expected;
                    assert!(
                        rel <= 0.2,
                        "mean pass size {} vs {expected}",
                        k.mean_nodes_per_pass()
                    );
                }
                _ => {}
            }
        }
    }
    let ls = report.table.row(Method::Ls).unwrap();
    let pls = report.table.row(Method::Pls).unwrap();
    assert!(pls.peak_bytes <= ls.peak_bytes);
}

#[test]
fn readme_plan_parses() {
    let readme =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let block = readme
        .split("```json")
        .nth(1)
        .and_then(|b| b.split("```").next())
        .unwrap();
    let plan: ExperimentPlan = serde_json::from_str(block).unwrap();
    plan.validate().unwrap();
    assert_eq!(plan.cells[3].config.pls.r, 8);
    assert_eq!(plan.ingredients.n, 10);
}
