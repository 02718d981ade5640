//! C ABI for the tircal library.
//!
//! Trajectories are opaque handles created by [`tircal_parse_trajectory`]
//! and released with [`tircal_trajectory_free`]. Strings returned by this
//! library are heap-allocated, NUL-terminated, and must be released with
//! [`tircal_string_free`]. All fallible functions return a [`TircalStatus`]
//! and write their result through an out-pointer.

use std::ffi::{c_char, CStr, CString};

use tircal::pareto::{pareto_select, GroupStats};
use tircal::policy::group_advantages;
use tircal::Trajectory;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TircalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    InvalidArgument = 4,
}

/// An opaque parsed trajectory.
pub struct TircalTrajectory {
    inner: Trajectory,
}

fn to_c_string(s: &str) -> *mut c_char {
    // interior NULs cannot occur in parsed trajectory text, but stay safe
    CString::new(s.replace('\0', "")).expect("no interior NUL").into_raw()
}

/// Parses tagged trajectory text (tolerant mode) into an opaque handle.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tircal_parse_trajectory(
    text: *const c_char,
    out: *mut *mut TircalTrajectory,
) -> TircalStatus {
    if text.is_null() || out.is_null() {
        return TircalStatus::NullPointer;
    }
    let text = match CStr::from_ptr(text).to_str() {
        Ok(t) => t,
        Err(_) => return TircalStatus::InvalidUtf8,
    };
    match tircal::parse_trajectory(text) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(TircalTrajectory { inner }));
            TircalStatus::Ok
        }
        Err(_) => TircalStatus::ParseError,
    }
}

/// Releases a trajectory handle. A null pointer is a no-op.
///
/// # Safety
/// `t` must come from [`tircal_parse_trajectory`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tircal_trajectory_free(t: *mut TircalTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Releases a string returned by this library. A null pointer is a no-op.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tircal_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Canonical tagged text of the trajectory; null on a null handle.
///
/// # Safety
/// `t` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tircal_trajectory_serialize(t: *const TircalTrajectory) -> *mut c_char {
    if t.is_null() {
        return std::ptr::null_mut();
    }
    to_c_string(&(*t).inner.serialize())
}

/// Number of tool calls, both kinds combined; -1 on a null handle.
///
/// # Safety
/// `t` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tircal_trajectory_tool_calls(t: *const TircalTrajectory) -> i64 {
    if t.is_null() {
        return -1;
    }
    (*t).inner.tool_call_count() as i64
}

/// Whitespace-token count over think/call/answer segments; -1 on null.
///
/// # Safety
/// `t` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tircal_trajectory_reasoning_length(t: *const TircalTrajectory) -> i64 {
    if t.is_null() {
        return -1;
    }
    (*t).inner.reasoning_length() as i64
}

/// The boxed final answer, or null when the trajectory has none.
///
/// # Safety
/// `t` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn tircal_trajectory_final_answer(t: *const TircalTrajectory) -> *mut c_char {
    if t.is_null() {
        return std::ptr::null_mut();
    }
    match (*t).inner.final_answer() {
        Some(a) => to_c_string(a),
        None => std::ptr::null_mut(),
    }
}

/// Average correctness per tool call over parallel arrays of length `n`,
/// with the tool-count denominator clamped to at least 1.
///
/// # Safety
/// `correctness` and `tool_calls` must point to `n` readable elements and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tircal_effi(
    correctness: *const f64,
    tool_calls: *const u64,
    n: usize,
    out: *mut f64,
) -> TircalStatus {
    if correctness.is_null() || tool_calls.is_null() || out.is_null() {
        return TircalStatus::NullPointer;
    }
    if n == 0 {
        return TircalStatus::InvalidArgument;
    }
    let correctness = std::slice::from_raw_parts(correctness, n);
    let tool_calls = std::slice::from_raw_parts(tool_calls, n);
    let sum: f64 = correctness
        .iter()
        .zip(tool_calls)
        .map(|(p, t)| p / (*t).max(1) as f64)
        .sum();
    *out = sum / n as f64;
    TircalStatus::Ok
}

/// Group-normalized advantages of `n` rewards, written to `out` (length
/// `n`). A zero-dispersion group yields all zeros.
///
/// # Safety
/// `rewards` must point to `n` readable elements, `out` to `n` writable ones.
#[no_mangle]
pub unsafe extern "C" fn tircal_group_advantages(
    rewards: *const f64,
    n: usize,
    out: *mut f64,
) -> TircalStatus {
    if rewards.is_null() || out.is_null() {
        return TircalStatus::NullPointer;
    }
    if n == 0 {
        return TircalStatus::InvalidArgument;
    }
    let rewards = std::slice::from_raw_parts(rewards, n);
    let advantages = group_advantages(rewards);
    std::slice::from_raw_parts_mut(out, n).copy_from_slice(&advantages.values);
    TircalStatus::Ok
}

/// Pareto selection over `n` (s_corr, s_tool) dispersion pairs: writes the
/// `target` selected input indices to `out` in selection order.
///
/// # Safety
/// `s_corr` and `s_tool` must point to `n` readable elements and `out` to
/// `target` writable ones.
#[no_mangle]
pub unsafe extern "C" fn tircal_pareto_select(
    s_corr: *const f64,
    s_tool: *const f64,
    n: usize,
    target: usize,
    out: *mut usize,
) -> TircalStatus {
    if s_corr.is_null() || s_tool.is_null() || out.is_null() {
        return TircalStatus::NullPointer;
    }
    if n == 0 || target == 0 || target > n {
        return TircalStatus::InvalidArgument;
    }
    let s_corr = std::slice::from_raw_parts(s_corr, n);
    let s_tool = std::slice::from_raw_parts(s_tool, n);
    let stats: Vec<GroupStats> = (0..n)
        .map(|i| GroupStats {
            question_id: i.to_string(),
            s_corr: s_corr[i],
            s_tool: s_tool[i],
            k: 0,
        })
        .collect();
    match pareto_select(&stats, target) {
        Ok(selected) => {
            let out = std::slice::from_raw_parts_mut(out, target);
            for (slot, id) in out.iter_mut().zip(selected) {
                *slot = id.parse().expect("ids are indices");
            }
            TircalStatus::Ok
        }
        Err(_) => TircalStatus::InvalidArgument,
    }
}
