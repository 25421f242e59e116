//! C ABI over the gcfx library.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`/`*_train`/`*_read` function and released by the matching
//! `*_free`. Functions return an integer status code; on failure the
//! thread-local message from [`gcfx_last_error_message`] describes the
//! cause. Out-parameters are written only on `GCFX_OK`.

use gcfx::classifier::{
    load_consensus, save_consensus, train_classifier, ConsensusModel, TrainConfig,
};
use gcfx::datasets::{generate_p5motif, P5MotifConfig};
use gcfx::ged::{perturbation_cost, GedConfig};
use gcfx::graph::{deserialize_dataset, serialize_dataset, GraphDataset, LabeledGraph};
use gcfx::vqcfx::{load_vqcfx, save_vqcfx, train_vqcfx, DecodeMode, VqCfxConfig, VqCfxModel};
use libc::{c_char, c_int, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::PathBuf;

pub const GCFX_OK: c_int = 0;
pub const GCFX_ERR_NULL_POINTER: c_int = 1;
pub const GCFX_ERR_INVALID_ARGUMENT: c_int = 2;
pub const GCFX_ERR_RUNTIME: c_int = 3;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let c = CString::new(msg.to_string()).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(msg: impl std::fmt::Display, code: c_int) -> c_int {
    set_error(msg);
    code
}

/// Message for the most recent failure on this thread. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gcfx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn gcfx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque dataset handle.
pub struct GcfxDataset(GraphDataset);
/// Opaque consensus-classifier handle.
pub struct GcfxClassifier(ConsensusModel);
/// Opaque counterfactual-generator handle.
pub struct GcfxGenerator(VqCfxModel);
/// Opaque single-graph handle.
pub struct GcfxGraph(LabeledGraph);

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, c_int> {
    if p.is_null() {
        return Err(fail("null path", GCFX_ERR_NULL_POINTER));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail("path is not valid UTF-8", GCFX_ERR_INVALID_ARGUMENT)),
    }
}

macro_rules! nonnull {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(r) => r,
            None => return fail(concat!(stringify!($p), " is null"), GCFX_ERR_NULL_POINTER),
        }
    };
}

// ---- dataset ----

/// Generate the synthetic P5Motif dataset.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gcfx_dataset_generate_p5motif(
    graph_count: size_t,
    seed: u64,
    out: *mut *mut GcfxDataset,
) -> c_int {
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    if graph_count == 0 {
        return fail("graph_count must be positive", GCFX_ERR_INVALID_ARGUMENT);
    }
    let cfg = P5MotifConfig {
        graph_count,
        seed,
        ..Default::default()
    };
    let (d, _) = generate_p5motif(&cfg);
    *out = Box::into_raw(Box::new(GcfxDataset(d)));
    GCFX_OK
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_dataset_read(
    path: *const c_char,
    out: *mut *mut GcfxDataset,
) -> c_int {
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    match deserialize_dataset(&path) {
        Ok(d) => {
            *out = Box::into_raw(Box::new(GcfxDataset(d)));
            GCFX_OK
        }
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// # Safety
/// `d` must be a live dataset handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gcfx_dataset_write(d: *const GcfxDataset, path: *const c_char) -> c_int {
    let d = nonnull!(d);
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    match serialize_dataset(&d.0, &path) {
        Ok(()) => GCFX_OK,
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// # Safety
/// `d` must be a live dataset handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_dataset_len(d: *const GcfxDataset, out: *mut size_t) -> c_int {
    let d = nonnull!(d);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    *out = d.0.len();
    GCFX_OK
}

/// Label of graph `index`; -1 when the graph is unlabeled.
///
/// # Safety
/// `d` must be a live dataset handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_dataset_label(
    d: *const GcfxDataset,
    index: size_t,
    out: *mut i64,
) -> c_int {
    let d = nonnull!(d);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    let Some(g) = d.0.graphs.get(index) else {
        return fail(
            format!("index {index} out of range ({} graphs)", d.0.len()),
            GCFX_ERR_INVALID_ARGUMENT,
        );
    };
    *out = g.label.map_or(-1, |l| l as i64);
    GCFX_OK
}

/// # Safety
/// `d` must be null or a pointer returned by a dataset constructor.
#[no_mangle]
pub unsafe extern "C" fn gcfx_dataset_free(d: *mut GcfxDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

// ---- classifier ----

/// Train the k-fold consensus classifier.
///
/// # Safety
/// `d` must be a live dataset handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_classifier_train(
    d: *const GcfxDataset,
    epochs: size_t,
    seed: u64,
    out: *mut *mut GcfxClassifier,
) -> c_int {
    let d = nonnull!(d);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    let cfg = TrainConfig {
        epochs,
        seed,
        ..Default::default()
    };
    match train_classifier(&d.0, &cfg) {
        Ok((model, _)) => {
            *out = Box::into_raw(Box::new(GcfxClassifier(model)));
            GCFX_OK
        }
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_classifier_read(
    path: *const c_char,
    out: *mut *mut GcfxClassifier,
) -> c_int {
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    match load_consensus(&path) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(GcfxClassifier(m)));
            GCFX_OK
        }
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// # Safety
/// `c` must be a live classifier handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gcfx_classifier_write(
    c: *const GcfxClassifier,
    path: *const c_char,
) -> c_int {
    let c = nonnull!(c);
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(code) => return code,
    };
    match save_consensus(&c.0, &path) {
        Ok(()) => GCFX_OK,
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// Predicted label for one graph.
///
/// # Safety
/// `c` and `g` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_classifier_predict(
    c: *const GcfxClassifier,
    g: *const GcfxGraph,
    out: *mut size_t,
) -> c_int {
    let c = nonnull!(c);
    let g = nonnull!(g);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    match c.0.predict(&g.0) {
        Ok(l) => {
            *out = l;
            GCFX_OK
        }
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// Consensus class probabilities for one graph. `probs_len` must equal
/// the classifier's label count.
///
/// # Safety
/// `c` and `g` must be live handles; `probs` must point to `probs_len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gcfx_classifier_probs(
    c: *const GcfxClassifier,
    g: *const GcfxGraph,
    probs: *mut f64,
    probs_len: size_t,
) -> c_int {
    let c = nonnull!(c);
    let g = nonnull!(g);
    if probs.is_null() {
        return fail("probs is null", GCFX_ERR_NULL_POINTER);
    }
    match c.0.classify(&g.0) {
        Ok(p) => {
            if p.len() != probs_len {
                return fail(
                    format!("probs_len {} does not match label count {}", probs_len, p.len()),
                    GCFX_ERR_INVALID_ARGUMENT,
                );
            }
            std::ptr::copy_nonoverlapping(p.as_ptr(), probs, p.len());
            GCFX_OK
        }
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// # Safety
/// `c` must be null or a pointer returned by a classifier constructor.
#[no_mangle]
pub unsafe extern "C" fn gcfx_classifier_free(c: *mut GcfxClassifier) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

// ---- generator ----

/// Train the counterfactual generator on the dataset graphs whose true
/// label is `target_label`, toward class `counterfactual_label`.
///
/// # Safety
/// `d` and `c` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_generator_train(
    d: *const GcfxDataset,
    c: *const GcfxClassifier,
    target_label: size_t,
    counterfactual_label: size_t,
    epochs: size_t,
    seed: u64,
    out: *mut *mut GcfxGenerator,
) -> c_int {
    let d = nonnull!(d);
    let c = nonnull!(c);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    let targets: Vec<&LabeledGraph> = d
        .0
        .graphs
        .iter()
        .filter(|g| g.label == Some(target_label))
        .collect();
    let cfg = VqCfxConfig {
        epochs,
        seed,
        ..Default::default()
    };
    let trained = train_vqcfx(
        &targets,
        counterfactual_label,
        &c.0,
        d.0.node_type_count,
        d.0.label_count,
        d.0.edge_type_count as usize + 1,
        &cfg,
    );
    match trained {
        Ok((m, _)) => {
            *out = Box::into_raw(Box::new(GcfxGenerator(m)));
            GCFX_OK
        }
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_generator_read(
    path: *const c_char,
    out: *mut *mut GcfxGenerator,
) -> c_int {
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    match load_vqcfx(&path) {
        Ok(m) => {
            *out = Box::into_raw(Box::new(GcfxGenerator(m)));
            GCFX_OK
        }
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// # Safety
/// `m` must be a live generator handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gcfx_generator_write(
    m: *const GcfxGenerator,
    path: *const c_char,
) -> c_int {
    let m = nonnull!(m);
    let path = match path_arg(path) {
        Ok(p) => p,
        Err(c) => return c,
    };
    match save_vqcfx(&m.0, &path) {
        Ok(()) => GCFX_OK,
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// # Safety
/// `m` must be null or a pointer returned by a generator constructor.
#[no_mangle]
pub unsafe extern "C" fn gcfx_generator_free(m: *mut GcfxGenerator) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

// ---- graphs and generation ----

/// Borrow graph `index` of the dataset as an owned graph handle.
///
/// # Safety
/// `d` must be a live dataset handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_dataset_graph(
    d: *const GcfxDataset,
    index: size_t,
    out: *mut *mut GcfxGraph,
) -> c_int {
    let d = nonnull!(d);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    let Some(g) = d.0.graphs.get(index) else {
        return fail(
            format!("index {index} out of range ({} graphs)", d.0.len()),
            GCFX_ERR_INVALID_ARGUMENT,
        );
    };
    *out = Box::into_raw(Box::new(GcfxGraph(g.clone())));
    GCFX_OK
}

/// Decode one approximate counterfactual of `g` toward class `y_c`.
/// `sample` 0 decodes by argmax, nonzero samples edge and node types
/// under `seed`. Writes null to `out` when the decode has no edges.
///
/// # Safety
/// `m` and `g` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_generate_counterfactual(
    m: *const GcfxGenerator,
    g: *const GcfxGraph,
    y_c: size_t,
    sample: c_int,
    seed: u64,
    out: *mut *mut GcfxGraph,
) -> c_int {
    let m = nonnull!(m);
    let g = nonnull!(g);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    let mode = if sample == 0 { DecodeMode::Argmax } else { DecodeMode::Sample };
    match m.0.generate(&g.0, y_c, mode, seed) {
        Ok(Some(s)) => {
            *out = match s.graph {
                Some(cf) => Box::into_raw(Box::new(GcfxGraph(cf))),
                None => std::ptr::null_mut(),
            };
            GCFX_OK
        }
        Ok(None) => {
            *out = std::ptr::null_mut();
            GCFX_OK
        }
        Err(e) => fail(e, GCFX_ERR_RUNTIME),
    }
}

/// # Safety
/// `g` must be a live graph handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_graph_node_count(g: *const GcfxGraph, out: *mut size_t) -> c_int {
    let g = nonnull!(g);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    *out = g.0.node_count();
    GCFX_OK
}

/// # Safety
/// `g` must be a live graph handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_graph_edge_count(g: *const GcfxGraph, out: *mut size_t) -> c_int {
    let g = nonnull!(g);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    *out = g.0.edge_count();
    GCFX_OK
}

/// Normalized perturbation cost between two graphs.
///
/// # Safety
/// `a` and `b` must be live graph handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcfx_perturbation_cost(
    a: *const GcfxGraph,
    b: *const GcfxGraph,
    out: *mut f64,
) -> c_int {
    let a = nonnull!(a);
    let b = nonnull!(b);
    if out.is_null() {
        return fail("out is null", GCFX_ERR_NULL_POINTER);
    }
    *out = perturbation_cost(&a.0, &b.0, &GedConfig::default());
    GCFX_OK
}

/// # Safety
/// `g` must be null or a pointer returned by a graph constructor.
#[no_mangle]
pub unsafe extern "C" fn gcfx_graph_free(g: *mut GcfxGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    #[test]
    fn dataset_roundtrip_and_accessors() {
        let mut d: *mut GcfxDataset = ptr::null_mut();
        assert_eq!(unsafe { gcfx_dataset_generate_p5motif(24, 5, &mut d) }, GCFX_OK);
        let mut n: size_t = 0;
        assert_eq!(unsafe { gcfx_dataset_len(d, &mut n) }, GCFX_OK);
        assert_eq!(n, 24);
        let mut label: i64 = -2;
        assert_eq!(unsafe { gcfx_dataset_label(d, 0, &mut label) }, GCFX_OK);
        assert!(label == 0 || label == 1);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("d.txt").to_str().unwrap()).unwrap();
        assert_eq!(unsafe { gcfx_dataset_write(d, path.as_ptr()) }, GCFX_OK);
        let mut d2: *mut GcfxDataset = ptr::null_mut();
        assert_eq!(unsafe { gcfx_dataset_read(path.as_ptr(), &mut d2) }, GCFX_OK);
        let mut n2: size_t = 0;
        assert_eq!(unsafe { gcfx_dataset_len(d2, &mut n2) }, GCFX_OK);
        assert_eq!(n2, 24);
        unsafe {
            gcfx_dataset_free(d);
            gcfx_dataset_free(d2);
        }
    }

    #[test]
    fn null_arguments_are_rejected_with_a_message() {
        let mut n: size_t = 0;
        assert_eq!(
            unsafe { gcfx_dataset_len(ptr::null(), &mut n) },
            GCFX_ERR_NULL_POINTER
        );
        let msg = unsafe { CStr::from_ptr(gcfx_last_error_message()) };
        assert!(!msg.to_bytes().is_empty());

        let mut d: *mut GcfxDataset = ptr::null_mut();
        assert_eq!(
            unsafe { gcfx_dataset_generate_p5motif(0, 1, &mut d) },
            GCFX_ERR_INVALID_ARGUMENT
        );
    }

    #[test]
    fn out_of_range_index_is_invalid_argument() {
        let mut d: *mut GcfxDataset = ptr::null_mut();
        assert_eq!(unsafe { gcfx_dataset_generate_p5motif(4, 5, &mut d) }, GCFX_OK);
        let mut g: *mut GcfxGraph = ptr::null_mut();
        assert_eq!(
            unsafe { gcfx_dataset_graph(d, 4, &mut g) },
            GCFX_ERR_INVALID_ARGUMENT
        );
        unsafe { gcfx_dataset_free(d) };
    }

    #[test]
    fn classify_and_generate_through_the_c_surface() {
        let mut d: *mut GcfxDataset = ptr::null_mut();
        assert_eq!(unsafe { gcfx_dataset_generate_p5motif(24, 5, &mut d) }, GCFX_OK);
        let mut c: *mut GcfxClassifier = ptr::null_mut();
        assert_eq!(unsafe { gcfx_classifier_train(d, 1, 7, &mut c) }, GCFX_OK);

        let mut g: *mut GcfxGraph = ptr::null_mut();
        assert_eq!(unsafe { gcfx_dataset_graph(d, 0, &mut g) }, GCFX_OK);
        let mut pred: size_t = 9;
        assert_eq!(unsafe { gcfx_classifier_predict(c, g, &mut pred) }, GCFX_OK);
        assert!(pred < 2);
        let mut probs = [0.0f64; 2];
        assert_eq!(
            unsafe { gcfx_classifier_probs(c, g, probs.as_mut_ptr(), 2) },
            GCFX_OK
        );
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-9);
        assert_eq!(
            unsafe { gcfx_classifier_probs(c, g, probs.as_mut_ptr(), 3) },
            GCFX_ERR_INVALID_ARGUMENT
        );

        let mut m: *mut GcfxGenerator = ptr::null_mut();
        assert_eq!(
            unsafe { gcfx_generator_train(d, c, 0, 1, 1, 11, &mut m) },
            GCFX_OK
        );
        let mut cf: *mut GcfxGraph = ptr::null_mut();
        assert_eq!(
            unsafe { gcfx_generate_counterfactual(m, g, 1, 0, 3, &mut cf) },
            GCFX_OK
        );
        if !cf.is_null() {
            let mut cost = -1.0;
            assert_eq!(unsafe { gcfx_perturbation_cost(g, cf, &mut cost) }, GCFX_OK);
            assert!(cost >= 0.0);
            unsafe { gcfx_graph_free(cf) };
        }
        unsafe {
            gcfx_graph_free(g);
            gcfx_generator_free(m);
            gcfx_classifier_free(c);
            gcfx_dataset_free(d);
        }
    }
}
