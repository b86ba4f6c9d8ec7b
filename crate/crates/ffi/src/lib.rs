//! C interface to mmflow-core: fitted models, spatial partitions and flow
//! graph metrics behind opaque handles.
//!
//! Every fallible function returns an [`MmflowStatus`]. On failure the
//! message is kept per thread and read with [`mmflow_last_error`]. Handles
//! are created by `*_load` / `*_new` functions and released by the matching
//! `*_free`; passing a freed handle is undefined behaviour.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mmflow_core::explain::explain_row;
use mmflow_core::flownet::{average_clustering, node_betweenness, FlowGraph};
use mmflow_core::geom::Point;
use mmflow_core::models::{load_model, model_from_json, Model};
use mmflow_core::partition::{load_partition, SpatialPartition};
use mmflow_core::time::{TimeBucket, TimeScale};
use mmflow_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmflowStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    ModelFormat = 5,
    Shape = 6,
    Domain = 7,
    Geometry = 8,
    UnknownNode = 9,
    Panic = 10,
    Other = 11,
}

/// A fitted model loaded from its JSON file.
pub struct MmflowModel {
    model: Model,
    names: Vec<CString>,
}

/// A zone partition loaded from a polygon file.
pub struct MmflowPartition {
    part: SpatialPartition,
    ids: Vec<CString>,
}

/// A weighted OD flow graph built edge by edge.
pub struct MmflowGraph {
    graph: FlowGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MmflowStatus {
    match e {
        Error::Io { .. } => MmflowStatus::Io,
        Error::Parse { .. } | Error::MissingColumn(_) => MmflowStatus::Parse,
        Error::ModelFormat(_) => MmflowStatus::ModelFormat,
        Error::Shape(_) => MmflowStatus::Shape,
        Error::Domain(_) | Error::DegenerateGraph(_) => MmflowStatus::Domain,
        Error::Geometry(_) | Error::GeometryKind { .. } => MmflowStatus::Geometry,
        Error::UnknownNode(_) => MmflowStatus::UnknownNode,
        _ => MmflowStatus::Other,
    }
}

struct Failure(MmflowStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MmflowStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MmflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmflowStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MmflowStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MmflowStatus::InvalidUtf8, format!("`{what}` is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn c_names<'a>(names: impl Iterator<Item = &'a str>) -> Vec<CString> {
    names
        .map(|n| CString::new(n.replace('\0', " ")).expect("nul bytes removed"))
        .collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mmflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty if none. Valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mmflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn wrap_model(model: Model) -> *mut MmflowModel {
    let names = c_names(model.feature_names.iter().map(String::as_str));
    Box::into_raw(Box::new(MmflowModel { model, names }))
}

/// Loads a model file written by the `train` stage.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmflow_model_load(path: *const c_char, out: *mut *mut MmflowModel) -> MmflowStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = load_model(Path::new(str_arg(path, "path")?))?;
        *out = wrap_model(model);
        Ok(())
    })
}

/// Parses a model from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmflow_model_from_json(json: *const c_char, out: *mut *mut MmflowModel) -> MmflowStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let model = model_from_json(str_arg(json, "json")?)?;
        *out = wrap_model(model);
        Ok(())
    })
}

/// Number of features the model expects; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mmflow_model_n_features(model: *const MmflowModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.n_features())
}

/// Name of feature `index`, owned by the handle; null when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mmflow_model_feature_name(model: *const MmflowModel, index: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.names.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Predicts `n_rows` rows of a row-major `n_rows × n_features` matrix
/// into `out`.
///
/// # Safety
/// `x` must hold `n_rows * n_features` doubles and `out` `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn mmflow_model_predict(
    model: *const MmflowModel,
    x: *const f64,
    n_rows: usize,
    n_features: usize,
    out: *mut f64,
) -> MmflowStatus {
    guard(|| {
        let m = &handle(model, "model")?.model;
        if x.is_null() {
            return Err(null("x"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if n_features != m.n_features() {
            return Err(Failure(
                MmflowStatus::Shape,
                format!("rows have {n_features} features, model expects {}", m.n_features()),
            ));
        }
        let x = std::slice::from_raw_parts(x, n_rows * n_features);
        let out = std::slice::from_raw_parts_mut(out, n_rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = m.predict_row(&x[i * n_features..(i + 1) * n_features])?;
        }
        Ok(())
    })
}

/// SHAP attributions of one row: `phi` receives `n_features` values and
/// `base_value` the expected model output.
///
/// # Safety
/// `x` and `phi` must each hold `n_features` doubles; `base_value` must be
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmflow_model_shap(
    model: *const MmflowModel,
    x: *const f64,
    n_features: usize,
    phi: *mut f64,
    base_value: *mut f64,
) -> MmflowStatus {
    guard(|| {
        let m = &handle(model, "model")?.model;
        if x.is_null() {
            return Err(null("x"));
        }
        if phi.is_null() {
            return Err(null("phi"));
        }
        let base_value = out_arg(base_value, "base_value")?;
        if n_features != m.n_features() {
            return Err(Failure(
                MmflowStatus::Shape,
                format!("row has {n_features} features, model expects {}", m.n_features()),
            ));
        }
        let s = explain_row(m, std::slice::from_raw_parts(x, n_features))?;
        std::slice::from_raw_parts_mut(phi, n_features).copy_from_slice(&s.phi);
        *base_value = s.base_value;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmflow_model_free(model: *mut MmflowModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Loads a polygon file. `level` may be null to take the first zone's level.
///
/// # Safety
/// `path` and a non-null `level` must be NUL-terminated strings; `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmflow_partition_load(
    path: *const c_char,
    level: *const c_char,
    out: *mut *mut MmflowPartition,
) -> MmflowStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let level = if level.is_null() {
            None
        } else {
            Some(str_arg(level, "level")?)
        };
        let part = load_partition(Path::new(str_arg(path, "path")?), level)?;
        let ids = c_names(part.zones().iter().map(|z| z.zone_id.as_str()));
        *out = Box::into_raw(Box::new(MmflowPartition { part, ids }));
        Ok(())
    })
}

/// # Safety
/// `part` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mmflow_partition_n_zones(part: *const MmflowPartition) -> usize {
    part.as_ref().map_or(0, |p| p.ids.len())
}

/// Zone id at `index`, owned by the handle; null when out of range.
///
/// # Safety
/// `part` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mmflow_partition_zone_id(part: *const MmflowPartition, index: usize) -> *const c_char {
    part.as_ref()
        .and_then(|p| p.ids.get(index))
        .map_or(ptr::null(), |n| n.as_ptr())
}

/// Zone index containing `(x, y)`, or -1 when the point lies in no zone.
///
/// # Safety
/// `part` must be a live handle and `zone` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmflow_partition_assign(
    part: *const MmflowPartition,
    x: f64,
    y: f64,
    zone: *mut i64,
) -> MmflowStatus {
    guard(|| {
        let p = handle(part, "part")?;
        let zone = out_arg(zone, "zone")?;
        *zone = p.part.assign_index(Point { x, y }).map_or(-1, |i| i as i64);
        Ok(())
    })
}

/// # Safety
/// `part` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmflow_partition_free(part: *mut MmflowPartition) {
    if !part.is_null() {
        drop(Box::from_raw(part));
    }
}

/// An empty graph.
#[no_mangle]
pub extern "C" fn mmflow_graph_new() -> *mut MmflowGraph {
    let bucket = TimeBucket {
        scale: TimeScale::Daily,
        start: 0,
    };
    Box::into_raw(Box::new(MmflowGraph {
        graph: FlowGraph::empty("ffi", bucket),
    }))
}

/// Adds `count` trips from `origin` to `dest`, creating nodes as needed.
///
/// # Safety
/// `graph` must be a live handle; `origin` and `dest` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn mmflow_graph_add_trips(
    graph: *mut MmflowGraph,
    origin: *const c_char,
    dest: *const c_char,
    count: u64,
) -> MmflowStatus {
    guard(|| {
        let g = graph.as_mut().ok_or_else(|| null("graph"))?;
        let (o, d) = (str_arg(origin, "origin")?, str_arg(dest, "dest")?);
        g.graph.add_trips(o.to_string(), d.to_string(), count);
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mmflow_graph_n_nodes(graph: *const MmflowGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.num_nodes())
}

/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mmflow_graph_n_edges(graph: *const MmflowGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.num_edges())
}

/// Normalized node betweenness of `node`.
///
/// # Safety
/// `graph` must be a live handle, `node` a NUL-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmflow_graph_node_betweenness(
    graph: *const MmflowGraph,
    node: *const c_char,
    out: *mut f64,
) -> MmflowStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.graph;
        let node = str_arg(node, "node")?;
        let out = out_arg(out, "out")?;
        *out = *node_betweenness(g)
            .get(node)
            .ok_or_else(|| Error::UnknownNode(node.to_string()))?;
        Ok(())
    })
}

/// Mean directed clustering coefficient over all nodes.
///
/// # Safety
/// `graph` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mmflow_graph_average_clustering(graph: *const MmflowGraph, out: *mut f64) -> MmflowStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.graph;
        *out_arg(out, "out")? = average_clustering(g);
        Ok(())
    })
}

/// # Safety
/// `graph` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mmflow_graph_free(graph: *mut MmflowGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}
