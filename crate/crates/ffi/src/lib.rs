//! C ABI over soupkit.
//!
//! Every object crosses the boundary as an opaque handle created by a
//! `_generate`/`_load`/`_train`-style call and released with the matching
//! `_free`. Fallible calls return a [`SoupkitStatus`]; on failure the
//! message is available from [`soupkit_last_error`] on the same thread.
//! Panics are caught and reported as `SOUPKIT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use soupkit::gnn::{
    evaluate, load_checkpoint, save_checkpoint, Arch, GnnError, ModelInput, ModelParams, ModelSpec,
};
use soupkit::graph::{
    generate_sbm, load_graph, partition, save_graph, CsrGraph, GraphData, GraphError, SbmParams,
    Split,
};
use soupkit::ingredients::{
    load_ingredients, save_ingredients, train_population, IngredientError, IngredientSet,
    Optimizer, TrainConfig,
};
use soupkit::soup::{
    gis_soup, greedy_soup, learned_soup, pls_soup, uniform_soup, LsConfig, PlsConfig, SoupError,
    SoupReport,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoupkitStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Incompatible = 5,
    Diverged = 6,
    NoValidation = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoupkitArch {
    Gcn = 0,
    Sage = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoupkitOptimizer {
    Sgd = 0,
    Adam = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoupkitMethod {
    Uniform = 0,
    Greedy = 1,
    Gis = 2,
    Ls = 3,
    Pls = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoupkitSplit {
    Train = 0,
    Val = 1,
    Test = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SoupkitSbmConfig {
    pub nodes: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feat_dim: usize,
    pub noise: f32,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SoupkitTrainConfig {
    pub arch: SoupkitArch,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f32,
    pub epochs: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub optimizer: SoupkitOptimizer,
    /// Number of ingredients.
    pub n: usize,
    pub workers: usize,
    pub seed: u64,
    pub diversity_jitter: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SoupkitSoupConfig {
    pub method: SoupkitMethod,
    pub granularity: usize,
    pub epochs: usize,
    pub lr: f32,
    pub weight_decay: f32,
    pub t0: usize,
    /// Partition count K.
    pub parts: usize,
    /// Partitions drawn per epoch R.
    pub budget: usize,
    pub score_interval: usize,
    pub simplex: bool,
    pub val_holdout: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SoupkitCounters {
    pub forward_passes: u64,
    pub backward_passes: u64,
    pub ingredient_scoring_passes: u64,
    pub interpolation_passes: u64,
    pub snapshot_scoring_passes: u64,
    pub peak_tracked_bytes: u64,
    pub mean_nodes_per_pass: f64,
}

pub struct SoupkitGraph {
    inner: CsrGraph,
}

enum Pool {
    Loaded(Vec<ModelParams>),
    Trained {
        set: IngredientSet,
        config: TrainConfig,
        workers: usize,
    },
}

pub struct SoupkitIngredients {
    pool: Pool,
}

impl SoupkitIngredients {
    fn members(&self) -> &[ModelParams] {
        match &self.pool {
            Pool::Loaded(m) => m,
            Pool::Trained { set, .. } => &set.members,
        }
    }
}

pub struct SoupkitModel {
    inner: ModelParams,
}

pub struct SoupkitReport {
    inner: SoupReport,
}

struct Failure(SoupkitStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Failure(SoupkitStatus::InvalidArgument, msg.into())
    }
}

fn graph_status(e: &GraphError) -> SoupkitStatus {
    match e {
        GraphError::Io(_) => SoupkitStatus::Io,
        GraphError::InvalidParameter(_) | GraphError::Tensor(_) => SoupkitStatus::InvalidArgument,
        _ => SoupkitStatus::Format,
    }
}

fn gnn_status(e: &GnnError) -> SoupkitStatus {
    match e {
        GnnError::Io(_) => SoupkitStatus::Io,
        GnnError::Checkpoint { .. } => SoupkitStatus::Format,
        GnnError::DimensionMismatch(_) => SoupkitStatus::Incompatible,
        _ => SoupkitStatus::InvalidArgument,
    }
}

fn ingredient_status(e: &IngredientError) -> SoupkitStatus {
    match e {
        IngredientError::InvalidConfig(_) => SoupkitStatus::InvalidArgument,
        IngredientError::Diverged { .. } => SoupkitStatus::Diverged,
        IngredientError::Ingredient { source, .. } => ingredient_status(source),
        IngredientError::Store(_) => SoupkitStatus::Format,
        IngredientError::Gnn(e) => gnn_status(e),
        IngredientError::Io(_) => SoupkitStatus::Io,
    }
}

fn soup_status(e: &SoupError) -> SoupkitStatus {
    match e {
        SoupError::Empty | SoupError::InvalidConfig(_) | SoupError::Tensor(_) => {
            SoupkitStatus::InvalidArgument
        }
        SoupError::Incompatible(_) => SoupkitStatus::Incompatible,
        SoupError::Diverged { .. } => SoupkitStatus::Diverged,
        SoupError::NoValidation { .. } => SoupkitStatus::NoValidation,
        SoupError::Gnn(e) => gnn_status(e),
        SoupError::Graph(e) => graph_status(e),
    }
}

macro_rules! failure_from {
    ($ty:ty, $f:ident) => {
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure($f(&e), e.to_string())
            }
        }
    };
}
failure_from!(GraphError, graph_status);
failure_from!(GnnError, gnn_status);
failure_from!(IngredientError, ingredient_status);
failure_from!(SoupError, soup_status);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SoupkitStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SoupkitStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            SoupkitStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(SoupkitStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    let s = borrow(p, what)?;
    let s = CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(
            SoupkitStatus::NullPointer,
            "output pointer is null".into(),
        ));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(
            SoupkitStatus::NullPointer,
            "output pointer is null".into(),
        ));
    }
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next soupkit call on the same thread.
#[no_mangle]
pub extern "C" fn soupkit_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn soupkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer returned by a soupkit function that
/// transfers string ownership, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soupkit_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- graphs ----

#[no_mangle]
pub extern "C" fn soupkit_sbm_config_default() -> SoupkitSbmConfig {
    let p = SbmParams::default();
    SoupkitSbmConfig {
        nodes: p.nodes,
        classes: p.classes,
        p_in: p.p_in,
        p_out: p.p_out,
        feat_dim: p.feat_dim,
        noise: p.noise,
        split: p.split,
        seed: p.seed,
    }
}

/// # Safety
/// `config` must point to a valid config; `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn soupkit_graph_generate_sbm(
    config: *const SoupkitSbmConfig,
    out: *mut *mut SoupkitGraph,
) -> SoupkitStatus {
    guard(|| {
        let c = borrow(config, "config")?;
        let params = SbmParams {
            nodes: c.nodes,
            classes: c.classes,
            p_in: c.p_in,
            p_out: c.p_out,
            feat_dim: c.feat_dim,
            noise: c.noise,
            split: c.split,
            seed: c.seed,
        };
        check_out(out)?;
        put(
            out,
            SoupkitGraph {
                inner: generate_sbm(&params)?,
            },
        )
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_graph_load(
    path: *const c_char,
    out: *mut *mut SoupkitGraph,
) -> SoupkitStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        check_out(out)?;
        put(
            out,
            SoupkitGraph {
                inner: load_graph(path)?,
            },
        )
    })
}

/// # Safety
/// `graph` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn soupkit_graph_save(
    graph: *const SoupkitGraph,
    path: *const c_char,
) -> SoupkitStatus {
    guard(|| {
        let g = borrow(graph, "graph")?;
        save_graph(&g.inner, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Number of nodes; 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soupkit_graph_num_nodes(graph: *const SoupkitGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.num_nodes())
}

/// Number of stored (directed) edges; 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soupkit_graph_num_edges(graph: *const SoupkitGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.inner.num_edges())
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soupkit_graph_free(graph: *mut SoupkitGraph) {
    free(graph)
}

// ---- ingredients ----

#[no_mangle]
pub extern "C" fn soupkit_train_config_default() -> SoupkitTrainConfig {
    let t = TrainConfig::default();
    SoupkitTrainConfig {
        arch: SoupkitArch::Gcn,
        layers: 2,
        hidden: 64,
        dropout: 0.5,
        epochs: t.epochs,
        lr: t.lr,
        weight_decay: t.weight_decay,
        optimizer: SoupkitOptimizer::Adam,
        n: 10,
        workers: 1,
        seed: t.seed_base,
        diversity_jitter: t.diversity_jitter,
    }
}

/// Trains `config->n` ingredients on `graph` from one shared initialization.
///
/// # Safety
/// `graph` must be a live handle, `config` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_ingredients_train(
    graph: *const SoupkitGraph,
    config: *const SoupkitTrainConfig,
    out: *mut *mut SoupkitIngredients,
) -> SoupkitStatus {
    guard(|| {
        let g = &borrow(graph, "graph")?.inner;
        let c = borrow(config, "config")?;
        let spec = ModelSpec {
            arch: match c.arch {
                SoupkitArch::Gcn => Arch::Gcn,
                SoupkitArch::Sage => Arch::Sage,
            },
            num_layers: c.layers,
            in_dim: g.feat_dim(),
            hidden_dim: c.hidden,
            out_dim: g.num_classes(),
            dropout: c.dropout,
        };
        let config = TrainConfig {
            epochs: c.epochs,
            lr: c.lr,
            weight_decay: c.weight_decay,
            optimizer: match c.optimizer {
                SoupkitOptimizer::Sgd => Optimizer::Sgd,
                SoupkitOptimizer::Adam => Optimizer::Adam,
            },
            seed_base: c.seed,
            diversity_jitter: c.diversity_jitter,
        };
        check_out(out)?;
        let set = train_population(g, &spec, &config, c.n, c.workers)?;
        put(
            out,
            SoupkitIngredients {
                pool: Pool::Trained {
                    set,
                    config,
                    workers: c.workers,
                },
            },
        )
    })
}

/// # Safety
/// `dir` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_ingredients_load(
    dir: *const c_char,
    out: *mut *mut SoupkitIngredients,
) -> SoupkitStatus {
    guard(|| {
        let dir = path_arg(dir, "dir")?;
        check_out(out)?;
        put(
            out,
            SoupkitIngredients {
                pool: Pool::Loaded(load_ingredients(dir)?),
            },
        )
    })
}

/// Writes a trained pool (manifest plus one checkpoint per member). Pools
/// that were loaded from disk are already saved and are rejected.
///
/// # Safety
/// `ingredients` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn soupkit_ingredients_save(
    ingredients: *const SoupkitIngredients,
    dir: *const c_char,
) -> SoupkitStatus {
    guard(|| {
        let h = borrow(ingredients, "ingredients")?;
        let dir = path_arg(dir, "dir")?;
        match &h.pool {
            Pool::Trained {
                set,
                config,
                workers,
            } => {
                save_ingredients(set, config, *workers, dir)?;
                Ok(())
            }
            Pool::Loaded(_) => Err(Failure::invalid("only freshly trained pools can be saved")),
        }
    })
}

/// Number of members; 0 for a null handle.
///
/// # Safety
/// `ingredients` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soupkit_ingredients_count(
    ingredients: *const SoupkitIngredients,
) -> usize {
    ingredients.as_ref().map_or(0, |h| h.members().len())
}

/// Copies member `index` out as a standalone model.
///
/// # Safety
/// `ingredients` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_ingredients_get(
    ingredients: *const SoupkitIngredients,
    index: usize,
    out: *mut *mut SoupkitModel,
) -> SoupkitStatus {
    guard(|| {
        let members = borrow(ingredients, "ingredients")?.members();
        let m = members.get(index).ok_or_else(|| {
            Failure::invalid(format!(
                "index {index} out of range ({} members)",
                members.len()
            ))
        })?;
        check_out(out)?;
        put(out, SoupkitModel { inner: m.clone() })
    })
}

/// # Safety
/// `ingredients` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soupkit_ingredients_free(ingredients: *mut SoupkitIngredients) {
    free(ingredients)
}

// ---- souping ----

#[no_mangle]
pub extern "C" fn soupkit_soup_config_default(method: SoupkitMethod) -> SoupkitSoupConfig {
    let p = PlsConfig::default();
    SoupkitSoupConfig {
        method,
        granularity: 20,
        epochs: p.ls.epochs,
        lr: p.ls.lr,
        weight_decay: p.ls.weight_decay,
        t0: p.ls.t0,
        parts: p.k,
        budget: p.r,
        score_interval: p.score_interval,
        simplex: p.ls.simplex,
        val_holdout: p.ls.val_holdout,
        seed: p.ls.alpha_seed,
    }
}

/// Soups the pool on `graph` with the method in `config`.
///
/// # Safety
/// Handles must be live, `config` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_soup(
    ingredients: *const SoupkitIngredients,
    graph: *const SoupkitGraph,
    config: *const SoupkitSoupConfig,
    out: *mut *mut SoupkitReport,
) -> SoupkitStatus {
    guard(|| {
        let members = borrow(ingredients, "ingredients")?.members();
        let g = &borrow(graph, "graph")?.inner;
        let c = borrow(config, "config")?;
        check_out(out)?;
        let ls = LsConfig {
            epochs: c.epochs,
            lr: c.lr,
            weight_decay: c.weight_decay,
            t0: c.t0,
            alpha_seed: c.seed,
            simplex: c.simplex,
            val_holdout: c.val_holdout,
        };
        let report = match c.method {
            SoupkitMethod::Uniform => uniform_soup(members, g)?,
            SoupkitMethod::Greedy => greedy_soup(members, g)?,
            SoupkitMethod::Gis => gis_soup(members, g, c.granularity)?,
            SoupkitMethod::Ls => learned_soup(members, g, &ls)?,
            SoupkitMethod::Pls => {
                let parts = partition(g, c.parts, c.seed)?;
                let cfg = PlsConfig {
                    ls,
                    k: c.parts,
                    r: c.budget,
                    score_interval: c.score_interval,
                };
                pls_soup(members, g, &parts, &cfg)?
            }
        };
        put(out, SoupkitReport { inner: report })
    })
}

/// NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soupkit_report_val_acc(report: *const SoupkitReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.val_acc)
}

/// NaN for a null handle or a graph without test nodes.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soupkit_report_test_acc(report: *const SoupkitReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.test_acc)
}

/// NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn soupkit_report_wall_seconds(report: *const SoupkitReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.inner.wall_seconds)
}

/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_report_counters(
    report: *const SoupkitReport,
    out: *mut SoupkitCounters,
) -> SoupkitStatus {
    guard(|| {
        let c = &borrow(report, "report")?.inner.counters;
        check_out(out)?;
        *out = SoupkitCounters {
            forward_passes: c.forward_passes as u64,
            backward_passes: c.backward_passes as u64,
            ingredient_scoring_passes: c.ingredient_scoring_passes as u64,
            interpolation_passes: c.interpolation_passes as u64,
            snapshot_scoring_passes: c.snapshot_scoring_passes as u64,
            peak_tracked_bytes: c.peak_tracked_bytes as u64,
            mean_nodes_per_pass: c.mean_nodes_per_pass(),
        };
        Ok(())
    })
}

/// Report as JSON; free the string with [`soupkit_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_report_to_json(
    report: *const SoupkitReport,
    out: *mut *mut c_char,
) -> SoupkitStatus {
    guard(|| {
        let r = borrow(report, "report")?;
        check_out(out)?;
        let text = serde_json::to_string(&r.inner).map_err(|e| Failure::invalid(e.to_string()))?;
        *out = CString::new(text)
            .map_err(|e| Failure::invalid(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// Copies the souped weights out as a standalone model.
///
/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_report_model(
    report: *const SoupkitReport,
    out: *mut *mut SoupkitModel,
) -> SoupkitStatus {
    guard(|| {
        let r = borrow(report, "report")?;
        check_out(out)?;
        put(
            out,
            SoupkitModel {
                inner: r.inner.result.clone(),
            },
        )
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soupkit_report_free(report: *mut SoupkitReport) {
    free(report)
}

// ---- models ----

/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_model_load(
    path: *const c_char,
    out: *mut *mut SoupkitModel,
) -> SoupkitStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        check_out(out)?;
        put(
            out,
            SoupkitModel {
                inner: load_checkpoint(path)?,
            },
        )
    })
}

/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn soupkit_model_save(
    model: *const SoupkitModel,
    path: *const c_char,
) -> SoupkitStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        save_checkpoint(&m.inner, path_arg(path, "path")?)?;
        Ok(())
    })
}

/// Accuracy of `model` on one split of `graph`.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn soupkit_model_evaluate(
    model: *const SoupkitModel,
    graph: *const SoupkitGraph,
    split: SoupkitSplit,
    out: *mut f64,
) -> SoupkitStatus {
    guard(|| {
        let m = &borrow(model, "model")?.inner;
        let g = &borrow(graph, "graph")?.inner;
        check_out(out)?;
        let split = match split {
            SoupkitSplit::Train => Split::Train,
            SoupkitSplit::Val => Split::Val,
            SoupkitSplit::Test => Split::Test,
        };
        let input = ModelInput::new(g, m.spec().arch);
        *out = evaluate(m, &input, split)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn soupkit_model_free(model: *mut SoupkitModel) {
    free(model)
}
