use std::time::Instant;

use super::{
    average, check_members, final_metrics, score, Method, PassCounters, SoupError, SoupReport,
    TraceEntry,
};
use crate::gnn::{ModelInput, ModelParams};
use crate::graph::CsrGraph;
use crate::tensor::alloc::PeakMeter;
use crate::tensor::DenseMat;

/// Ingredient indices by descending accuracy, ties by ascending index.
pub fn sort_by_val_acc(accs: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..accs.len()).collect();
    order.sort_by(|&a, &b| accs[b].total_cmp(&accs[a]).then(a.cmp(&b)));
    order
}

fn score_members(
    members: &[ModelParams],
    input: &ModelInput<'_>,
    counters: &mut PassCounters,
) -> Result<Vec<f64>, SoupError> {
    let accs = members
        .iter()
        .map(|m| score(m, input, counters))
        .collect::<Result<Vec<_>, _>>()?;
    counters.ingredient_scoring_passes += members.len() as u64;
    Ok(accs)
}

/// `(1 - alpha) * soup + alpha * member`, entry-wise in `f64`.
fn interpolate(
    soup: &ModelParams,
    member: &ModelParams,
    alpha: f64,
) -> Result<ModelParams, SoupError> {
    let layers = soup
        .layers()
        .iter()
        .zip(member.layers())
        .map(|(sg, mg)| {
            sg.iter()
                .zip(mg)
                .map(|(s, m)| {
                    let data = s
                        .data()
                        .iter()
                        .zip(m.data())
                        .map(|(&a, &b)| ((1.0 - alpha) * a as f64 + alpha * b as f64) as f32)
                        .collect();
                    DenseMat::from_vec(s.rows(), s.cols(), data)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ModelParams::new(*soup.spec(), layers)?)
}

/// Sorts ingredients by validation accuracy, then admits each into the
/// averaged pool iff the tentative average scores at least as well as the
/// current soup. The first candidate is always admitted.
pub fn greedy_soup(members: &[ModelParams], graph: &CsrGraph) -> Result<SoupReport, SoupError> {
    check_members(members)?;
    let start = Instant::now();
    let meter = PeakMeter::start();
    let input = ModelInput::new(graph, members[0].spec().arch);
    let mut counters = PassCounters::default();
    let accs = score_members(members, &input, &mut counters)?;

    let mut kept: Vec<usize> = Vec::new();
    let mut soup: Option<ModelParams> = None;
    let mut current = f64::NEG_INFINITY;
    let mut trace = Vec::with_capacity(members.len());
    for (step, i) in sort_by_val_acc(&accs).into_iter().enumerate() {
        let pool: Vec<&ModelParams> = kept.iter().chain([&i]).map(|&j| &members[j]).collect();
        let tentative = average(&pool)?;
        let acc = score(&tentative, &input, &mut counters)?;
        counters.interpolation_passes += 1;
        let accepted = acc >= current;
        if accepted {
            kept.push(i);
            soup = Some(tentative);
            current = acc;
        }
        trace.push(TraceEntry {
            ingredient: Some(i),
            val_acc: Some(acc),
            accepted: Some(accepted),
            ..TraceEntry::new(step, current)
        });
    }
    let result = soup.expect("the first candidate is always admitted");
    counters.peak_tracked_bytes = meter.finish();
    let wall_seconds = start.elapsed().as_secs_f64();
    let (val_acc, test_acc) = final_metrics(&result, &input)?;
    Ok(SoupReport {
        method: Method::Greedy,
        result,
        val_acc,
        test_acc,
        wall_seconds,
        counters,
        kept,
        alphas: None,
        trace,
    })
}

/// Starts from the best ingredient; for each remaining ingredient in
/// accuracy order scans `alpha` over `g` evenly spaced points of `[0, 1]`
/// and replaces the soup by `(1 - alpha) * soup + alpha * ingredient`
/// whenever that scores at least as well.
pub fn gis_soup(
    members: &[ModelParams],
    graph: &CsrGraph,
    granularity: usize,
) -> Result<SoupReport, SoupError> {
    check_members(members)?;
    if granularity < 2 {
        return Err(SoupError::InvalidConfig(format!(
            "granularity must be >= 2, got {granularity}"
        )));
    }
    let start = Instant::now();
    let meter = PeakMeter::start();
    let input = ModelInput::new(graph, members[0].spec().arch);
    let mut counters = PassCounters::default();
    let accs = score_members(members, &input, &mut counters)?;
    let order = sort_by_val_acc(&accs);

    let mut soup = members[order[0]].clone();
    let mut current = accs[order[0]];
    let mut kept = vec![order[0]];
    let mut trace = Vec::with_capacity((members.len() - 1) * granularity);
    for &i in &order[1..] {
        let mut mixed_in = false;
        for j in 0..granularity {
            let alpha = j as f64 / (granularity - 1) as f64;
            let tentative = interpolate(&soup, &members[i], alpha)?;
            let acc = score(&tentative, &input, &mut counters)?;
            counters.interpolation_passes += 1;
            let accepted = acc >= current;
            if accepted {
                soup = tentative;
                current = acc;
                mixed_in |= alpha > 0.0;
            }
            trace.push(TraceEntry {
                ingredient: Some(i),
                ratio: Some(alpha),
                val_acc: Some(acc),
                accepted: Some(accepted),
                ..TraceEntry::new(trace.len(), current)
            });
        }
        if mixed_in {
            kept.push(i);
        }
    }
    counters.peak_tracked_bytes = meter.finish();
    let wall_seconds = start.elapsed().as_secs_f64();
    let (val_acc, test_acc) = final_metrics(&soup, &input)?;
    Ok(SoupReport {
        method: Method::Gis,
        result: soup,
        val_acc,
        test_acc,
        wall_seconds,
        counters,
        kept,
        alphas: None,
        trace,
    })
}
