//! C interface to the tree and distribution kernels.
//!
//! Objects cross the boundary as opaque handles created by a `*_load`,
//! `*_read` or `*_compute` call and released with the matching `*_free`.
//! Every function returns a [`GkStatus`]; on failure a description is
//! available from [`gk_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use biorel::codec;
use biorel::distribution;
use biorel::edges::EdgeVectorStore;
use biorel::extract::EvidenceTree;
use biorel::gram::GramMatrix;
use biorel::graph::KernelTree;
use biorel::kernel::{EdgeKernelMode, KernelParams, TreeKernel};
use biorel::parsers::{parse_penman, PenmanDocument};
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Kernel = 6,
    OutOfRange = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkEdgeMode {
    Identity = 0,
    EmbeddedSparseRbf = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GkKernelParams {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    /// One of the `GkEdgeMode` values.
    pub edge_mode: u32,
}

/// Evidence trees read from a tree file and its vector table.
pub struct GkTrees {
    trees: Vec<EvidenceTree>,
}

/// Learned edge-label vectors.
pub struct GkEdgeStore {
    store: EdgeVectorStore,
}

/// Square kernel matrix with one id per row.
pub struct GkGram {
    gram: GramMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(GkStatus, String);

fn kernel_params(p: GkKernelParams) -> Result<KernelParams, Failure> {
    let edge_mode = match p.edge_mode {
        m if m == GkEdgeMode::Identity as u32 => EdgeKernelMode::Identity,
        m if m == GkEdgeMode::EmbeddedSparseRbf as u32 => EdgeKernelMode::EmbeddedSparseRbf,
        m => return Err(Failure(GkStatus::InvalidArgument, format!("unknown edge mode {m}"))),
    };
    Ok(KernelParams {
        lambda: p.lambda,
        alpha: p.alpha,
        beta: p.beta,
        edge_mode,
    })
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> GkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GkStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GkStatus::Panic
        }
    }
}

fn fail<E: std::fmt::Display>(status: GkStatus) -> impl FnOnce(E) -> Failure {
    move |e| Failure(status, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(GkStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(GkStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(GkStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(GkStatus::NullPointer, format!("{name} is null")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(GkStatus::NullPointer, format!("{name} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn open(path: &str) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure(GkStatus::Io, format!("{path}: {e}")))
}

fn kernel<'a>(params: *const GkKernelParams, edges: *const GkEdgeStore) -> Result<TreeKernel<'a>, Failure> {
    let p = kernel_params(*unsafe { ref_arg(params, "params") }?)?;
    let store = unsafe { edges.as_ref() }.map(|e| &e.store);
    TreeKernel::new(p, store).map_err(fail(GkStatus::InvalidArgument))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn gk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Fills `out` with the default kernel parameters.
///
/// # Safety
/// `out` must be null or point to writable memory for one `GkKernelParams`.
#[no_mangle]
pub unsafe extern "C" fn gk_kernel_params_default(out: *mut GkKernelParams) -> GkStatus {
    guard(|| {
        let d = KernelParams::default();
        *out_arg(out, "out")? = GkKernelParams {
            lambda: d.lambda,
            alpha: d.alpha,
            beta: d.beta,
            edge_mode: GkEdgeMode::Identity as u32,
        };
        Ok(())
    })
}

/// Reads a tree file and its vector table.
///
/// # Safety
/// `trees_path` and `vectors_path` must be null or NUL-terminated strings;
/// `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gk_trees_load(trees_path: *const c_char, vectors_path: *const c_char, out: *mut *mut GkTrees) -> GkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let tp = str_arg(trees_path, "trees_path")?;
        let vp = str_arg(vectors_path, "vectors_path")?;
        let trees = codec::read_trees(open(tp)?, open(vp)?).map_err(|e| Failure(GkStatus::Parse, format!("{tp}: {e}")))?;
        *out = Box::into_raw(Box::new(GkTrees { trees }));
        Ok(())
    })
}

/// # Safety
/// `trees` must be null or a handle from `gk_trees_load`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gk_trees_len(trees: *const GkTrees, out: *mut usize) -> GkStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(trees, "trees")?.trees.len();
        Ok(())
    })
}

/// # Safety
/// `trees` must be null or a handle from `gk_trees_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_trees_free(trees: *mut GkTrees) {
    if !trees.is_null() {
        drop(Box::from_raw(trees));
    }
}

/// Reads an edge-vector store file.
///
/// # Safety
/// `path` must be null or NUL-terminated; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gk_edges_load(path: *const c_char, out: *mut *mut GkEdgeStore) -> GkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = str_arg(path, "path")?;
        let store = EdgeVectorStore::read_from(open(p)?).map_err(|e| Failure(GkStatus::Parse, format!("{p}: {e}")))?;
        *out = Box::into_raw(Box::new(GkEdgeStore { store }));
        Ok(())
    })
}

/// # Safety
/// `edges` must be null or a handle from `gk_edges_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_edges_free(edges: *mut GkEdgeStore) {
    if !edges.is_null() {
        drop(Box::from_raw(edges));
    }
}

fn tree_at(trees: &GkTrees, i: usize) -> Result<&KernelTree, Failure> {
    trees
        .trees
        .get(i)
        .map(|t| &t.tree)
        .ok_or_else(|| Failure(GkStatus::OutOfRange, format!("tree {i} of {}", trees.trees.len())))
}

/// Kernel value between trees `i` and `j`; normalized when `normalized`
/// is non-zero. `edges` may be null unless the edge mode is embedded.
///
/// # Safety
/// Handles must be valid or null; `params` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn gk_tree_kernel(
    trees: *const GkTrees,
    i: usize,
    j: usize,
    params: *const GkKernelParams,
    edges: *const GkEdgeStore,
    normalized: i32,
    out: *mut f64,
) -> GkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let trees = ref_arg(trees, "trees")?;
        let k = kernel(params, edges)?;
        let (a, b) = (tree_at(trees, i)?, tree_at(trees, j)?);
        *out = if normalized != 0 { k.normalized(a, b) } else { k.tree_kernel(a, b) }.map_err(fail(GkStatus::Kernel))?;
        Ok(())
    })
}

/// Normalized Gram matrix over every loaded tree.
///
/// # Safety
/// Handles must be valid or null; `params` and `out` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn gk_gram_compute(
    trees: *const GkTrees,
    params: *const GkKernelParams,
    edges: *const GkEdgeStore,
    out: *mut *mut GkGram,
) -> GkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let trees = ref_arg(trees, "trees")?;
        let k = kernel(params, edges)?;
        let refs: Vec<(&str, &KernelTree)> = trees.trees.iter().map(|t| (t.id.as_str(), &t.tree)).collect();
        let gram = k.gram(&refs).map_err(fail(GkStatus::Kernel))?;
        *out = Box::into_raw(Box::new(GkGram { gram }));
        Ok(())
    })
}

/// # Safety
/// `path` must be null or NUL-terminated; `out` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn gk_gram_read(path: *const c_char, out: *mut *mut GkGram) -> GkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = str_arg(path, "path")?;
        let gram = GramMatrix::read_from(open(p)?).map_err(|e| Failure(GkStatus::Parse, format!("{p}: {e}")))?;
        *out = Box::into_raw(Box::new(GkGram { gram }));
        Ok(())
    })
}

/// # Safety
/// `gram` must be null or a valid handle; `path` NUL-terminated or null.
#[no_mangle]
pub unsafe extern "C" fn gk_gram_write(gram: *const GkGram, path: *const c_char) -> GkStatus {
    guard(|| {
        let g = ref_arg(gram, "gram")?;
        let p = str_arg(path, "path")?;
        let f = File::create(p).map_err(|e| Failure(GkStatus::Io, format!("{p}: {e}")))?;
        let mut w = BufWriter::new(f);
        g.gram.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Failure(GkStatus::Io, format!("{p}: {e}")))
    })
}

/// # Safety
/// `gram` must be null or a valid handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn gk_gram_size(gram: *const GkGram, out: *mut usize) -> GkStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(gram, "gram")?.gram.len();
        Ok(())
    })
}

/// # Safety
/// `gram` must be null or a valid handle; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn gk_gram_get(gram: *const GkGram, i: usize, j: usize, out: *mut f64) -> GkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = &ref_arg(gram, "gram")?.gram;
        if i >= g.len() || j >= g.len() {
            return Err(Failure(GkStatus::OutOfRange, format!("({i}, {j}) in a {0}x{0} Gram", g.len())));
        }
        *out = g.get(i, j);
        Ok(())
    })
}

/// # Safety
/// `gram` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_gram_free(gram: *mut GkGram) {
    if !gram.is_null() {
        drop(Box::from_raw(gram));
    }
}

/// Squared MMD between two index sets of a Gram matrix.
///
/// # Safety
/// `a` and `b` must point to `na` and `nb` indices; `gram` and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn gk_mmd(gram: *const GkGram, a: *const usize, na: usize, b: *const usize, nb: usize, out: *mut f64) -> GkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let g = &ref_arg(gram, "gram")?.gram;
        let a = slice_arg(a, na, "a")?;
        let b = slice_arg(b, nb, "b")?;
        if a.is_empty() || b.is_empty() {
            return Err(Failure(GkStatus::InvalidArgument, "empty sample set".into()));
        }
        if let Some(&i) = a.iter().chain(b).find(|&&i| i >= g.len()) {
            return Err(Failure(GkStatus::OutOfRange, format!("index {i} in a Gram of size {}", g.len())));
        }
        *out = distribution::mmd(a, b, g);
        Ok(())
    })
}

/// Replaces the row-major `n`×`n` symmetric matrix in `data` by its
/// nearest PSD matrix. `min_eigenvalue` (may be null) receives the
/// smallest eigenvalue of the input.
///
/// # Safety
/// `data` must point to `n * n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_psd_project(data: *mut f64, n: usize, min_eigenvalue: *mut f64) -> GkStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure(GkStatus::NullPointer, "data is null".into()));
        }
        let len = n.checked_mul(n).ok_or_else(|| Failure(GkStatus::InvalidArgument, "n too large".into()))?;
        let buf = std::slice::from_raw_parts_mut(data, len);
        let m = DMatrix::from_row_slice(n, n, buf);
        let p = distribution::psd_project(&m);
        if p.failed {
            return Err(Failure(GkStatus::Kernel, "eigendecomposition did not converge".into()));
        }
        for i in 0..n {
            for j in 0..n {
                buf[i * n + j] = p.matrix[(i, j)];
            }
        }
        if let Some(m) = min_eigenvalue.as_mut() {
            *m = p.min_eigenvalue;
        }
        Ok(())
    })
}

/// Parses PENMAN text and returns the graphs as a JSON array in `out`,
/// to be released with `gk_string_free`.
///
/// # Safety
/// `text` must be null or NUL-terminated; `out` null or writable.
#[no_mangle]
pub unsafe extern "C" fn gk_penman_to_json(text: *const c_char, out: *mut *mut c_char) -> GkStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        let graphs = parse_penman(&PenmanDocument::from_text(text))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()
            .map_err(fail(GkStatus::Parse))?;
        let json = serde_json::to_string(&graphs).map_err(fail(GkStatus::Parse))?;
        *out = CString::new(json).map_err(fail(GkStatus::Parse))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
