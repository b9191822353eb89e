//! C ABI over the harness's synchronous surface: dataset loading and
//! label-distribution queries, answer parsing, prompt rendering, and report
//! replay from transcript directories.
//!
//! Conventions: handles are opaque pointers freed with their paired `_free`
//! function; returned strings are NUL-terminated, UTF-8, owned by the caller,
//! and freed with `moot_string_free`; fallible calls return a `MootStatus`
//! and leave details in a thread-local message readable via
//! `moot_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use moot::dataset::{
    label_only_baseline, load_dataset, DatasetStats, ScenarioRecord, TernaryLabel,
};
use moot::prompts::{self, PromptStage};
use moot::runner::report::report_from_dir;
use moot::strategies::parse_label;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl AsRef<str>) {
    let cleaned = message.as_ref().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).ok();
    });
}

/// Result codes for fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MootStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    LoadFailed = 4,
    RenderFailed = 5,
    ReportFailed = 6,
}

/// Ternary answer labels plus the unparseable sentinel.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MootLabel {
    Yes = 0,
    No = 1,
    Neither = 2,
    Unparseable = 3,
}

impl From<TernaryLabel> for MootLabel {
    fn from(label: TernaryLabel) -> Self {
        match label {
            TernaryLabel::Yes => MootLabel::Yes,
            TernaryLabel::No => MootLabel::No,
            TernaryLabel::Neither => MootLabel::Neither,
            TernaryLabel::Unparseable => MootLabel::Unparseable,
        }
    }
}

impl From<MootLabel> for TernaryLabel {
    fn from(label: MootLabel) -> Self {
        match label {
            MootLabel::Yes => TernaryLabel::Yes,
            MootLabel::No => TernaryLabel::No,
            MootLabel::Neither => TernaryLabel::Neither,
            MootLabel::Unparseable => TernaryLabel::Unparseable,
        }
    }
}

/// Opaque loaded dataset: records plus precomputed statistics.
pub struct MootDataset {
    records: Vec<ScenarioRecord>,
    stats: DatasetStats,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, MootStatus> {
    if ptr.is_null() {
        set_last_error(format!("{name} is null"));
        return Err(MootStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error(format!("{name} is not valid UTF-8"));
        MootStatus::InvalidUtf8
    })
}

fn export_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Returns the most recent error message for this thread, or NULL. The
/// caller owns the string and must free it with `moot_string_free`.
#[no_mangle]
pub extern "C" fn moot_last_error() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|m| m.clone().into_raw())
            .unwrap_or(ptr::null_mut())
    })
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must have been returned by a moot function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn moot_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a dataset and its country-to-group map. On success writes a handle
/// to `out`; free it with `moot_dataset_free`.
///
/// # Safety
/// `dataset_path` and `group_map_path` must be NUL-terminated strings and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moot_dataset_load(
    dataset_path: *const c_char,
    group_map_path: *const c_char,
    out: *mut *mut MootDataset,
) -> MootStatus {
    if out.is_null() {
        set_last_error("out is null");
        return MootStatus::NullPointer;
    }
    let dataset_path = match cstr_arg(dataset_path, "dataset_path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let group_map_path = match cstr_arg(group_map_path, "group_map_path") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match load_dataset(Path::new(dataset_path), Path::new(group_map_path)) {
        Ok(records) => {
            let stats = DatasetStats::compute(&records);
            *out = Box::into_raw(Box::new(MootDataset { records, stats }));
            MootStatus::Ok
        }
        Err(e) => {
            set_last_error(e.to_string());
            MootStatus::LoadFailed
        }
    }
}

/// # Safety
/// `handle` must come from `moot_dataset_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn moot_dataset_free(handle: *mut MootDataset) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of records, or 0 for a NULL handle.
///
/// # Safety
/// `handle` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn moot_dataset_len(handle: *const MootDataset) -> u64 {
    handle.as_ref().map(|d| d.records.len() as u64).unwrap_or(0)
}

/// Number of distinct countries, or 0 for a NULL handle.
///
/// # Safety
/// `handle` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn moot_dataset_country_count(handle: *const MootDataset) -> u64 {
    handle
        .as_ref()
        .map(|d| d.stats.n_per_country.len() as u64)
        .unwrap_or(0)
}

/// Count of records carrying the given gold label.
///
/// # Safety
/// `handle` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn moot_dataset_label_count(
    handle: *const MootDataset,
    label: MootLabel,
) -> u64 {
    handle
        .as_ref()
        .and_then(|d| d.stats.n_per_label.get(&label.into()).copied())
        .unwrap_or(0) as u64
}

/// Accuracy of always answering `label`, written to `out`.
///
/// # Safety
/// `handle` must be a live dataset handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moot_dataset_label_only_baseline(
    handle: *const MootDataset,
    label: MootLabel,
    out: *mut f64,
) -> MootStatus {
    let Some(dataset) = handle.as_ref() else {
        set_last_error("handle is null");
        return MootStatus::NullPointer;
    };
    if out.is_null() {
        set_last_error("out is null");
        return MootStatus::NullPointer;
    }
    match label_only_baseline(&dataset.records, label.into()) {
        Ok(fraction) => {
            *out = fraction;
            MootStatus::Ok
        }
        Err(e) => {
            set_last_error(e.to_string());
            MootStatus::InvalidArgument
        }
    }
}

/// The stats dump (`kind\tkey\tcount` rows) as an owned string.
///
/// # Safety
/// `handle` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn moot_dataset_stats_tsv(handle: *const MootDataset) -> *mut c_char {
    match handle.as_ref() {
        Some(d) => export_string(d.stats.render_table()),
        None => {
            set_last_error("handle is null");
            ptr::null_mut()
        }
    }
}

/// Extracts the first standalone yes/no/neither token from model output.
///
/// # Safety
/// `text` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn moot_parse_label(text: *const c_char) -> MootLabel {
    match cstr_arg(text, "text") {
        Ok(s) => parse_label(s).into(),
        Err(_) => MootLabel::Unparseable,
    }
}

/// Static display name of a label; never freed.
#[no_mangle]
pub extern "C" fn moot_label_name(label: MootLabel) -> *const c_char {
    let name: &'static [u8] = match label {
        MootLabel::Yes => b"Yes\0",
        MootLabel::No => b"No\0",
        MootLabel::Neither => b"Neither\0",
        MootLabel::Unparseable => b"Unparseable\0",
    };
    name.as_ptr() as *const c_char
}

/// Renders a prompt stage. `bindings_json` is a JSON object mapping
/// placeholder names to strings, or NULL for sentinel bindings. On success
/// writes an owned string to `out`.
///
/// # Safety
/// `stage_id` must be NUL-terminated, `bindings_json` NULL or NUL-terminated,
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn moot_render_prompt(
    stage_id: *const c_char,
    bindings_json: *const c_char,
    out: *mut *mut c_char,
) -> MootStatus {
    if out.is_null() {
        set_last_error("out is null");
        return MootStatus::NullPointer;
    }
    let stage_id = match cstr_arg(stage_id, "stage_id") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let stage = match PromptStage::from_id(stage_id) {
        Ok(stage) => stage,
        Err(e) => {
            set_last_error(e.to_string());
            return MootStatus::InvalidArgument;
        }
    };
    let mut bindings = prompts::sentinel_bindings();
    if !bindings_json.is_null() {
        let json = match cstr_arg(bindings_json, "bindings_json") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let provided: std::collections::BTreeMap<String, String> =
            match serde_json::from_str(json) {
                Ok(map) => map,
                Err(e) => {
                    set_last_error(format!("bindings_json: {e}"));
                    return MootStatus::InvalidArgument;
                }
            };
        bindings.extend(provided);
    }
    let rendered = if stage == PromptStage::SdChoice {
        prompts::render_choice_prompt(&bindings, prompts::OptionOrder::ReflectFirst)
    } else {
        prompts::render(stage, &bindings)
    };
    match rendered {
        Ok(text) => {
            *out = export_string(text);
            MootStatus::Ok
        }
        Err(e) => {
            set_last_error(e.to_string());
            MootStatus::RenderFailed
        }
    }
}

/// Replays a run directory's transcript and returns one report table as an
/// owned TSV string. `table` is one of: accuracy, parity, dynamics, sankey,
/// breakdown_label, breakdown_group, breakdown_country.
///
/// # Safety
/// `run_dir` and `table` must be NUL-terminated strings and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn moot_report_table(
    run_dir: *const c_char,
    table: *const c_char,
    out: *mut *mut c_char,
) -> MootStatus {
    if out.is_null() {
        set_last_error("out is null");
        return MootStatus::NullPointer;
    }
    let run_dir = match cstr_arg(run_dir, "run_dir") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let table = match cstr_arg(table, "table") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let bundle = match report_from_dir(Path::new(run_dir)) {
        Ok(bundle) => bundle,
        Err(e) => {
            set_last_error(e.to_string());
            return MootStatus::ReportFailed;
        }
    };
    let text = match table {
        "accuracy" => bundle.accuracy_table(),
        "parity" => bundle.parity_table(),
        "dynamics" => bundle.dynamics_table(),
        "sankey" => bundle.sankey_table(),
        "breakdown_label" => bundle.breakdown_label.clone(),
        "breakdown_group" => bundle.breakdown_group.clone(),
        "breakdown_country" => bundle.breakdown_country.clone(),
        other => {
            set_last_error(format!("unknown table '{other}'"));
            return MootStatus::InvalidArgument;
        }
    };
    *out = export_string(text);
    MootStatus::Ok
}
