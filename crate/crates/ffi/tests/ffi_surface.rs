//! Exercises the C ABI exactly as a foreign caller would: through raw
//! pointers and status codes.

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use moot_ffi::{
    moot_dataset_free, moot_dataset_label_count, moot_dataset_label_only_baseline,
    moot_dataset_len, moot_dataset_load, moot_dataset_stats_tsv, moot_label_name, moot_last_error,
    moot_parse_label, moot_render_prompt, moot_report_table, moot_string_free, MootDataset,
    MootLabel, MootStatus,
};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn cpath(path: PathBuf) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

unsafe fn take_string(ptr: *mut std::ffi::c_char) -> String {
    assert!(!ptr.is_null());
    let s = CStr::from_ptr(ptr).to_string_lossy().into_owned();
    moot_string_free(ptr);
    s
}

#[test]
fn dataset_round_trip_through_the_c_abi() {
    unsafe {
        let dataset_path = cpath(data_dir().join("normad-eti.tsv"));
        let map_path = cpath(data_dir().join("group_map.tsv"));
        let mut handle: *mut MootDataset = ptr::null_mut();
        let status = moot_dataset_load(dataset_path.as_ptr(), map_path.as_ptr(), &mut handle);
        assert_eq!(status, MootStatus::Ok);
        assert!(!handle.is_null());

        assert_eq!(moot_dataset_len(handle), 2633);
        assert_eq!(moot_dataset_label_count(handle, MootLabel::Yes), 943);
        assert_eq!(moot_dataset_label_count(handle, MootLabel::No), 875);
        assert_eq!(moot_dataset_label_count(handle, MootLabel::Neither), 815);

        let mut fraction = 0.0f64;
        let status = moot_dataset_label_only_baseline(handle, MootLabel::Yes, &mut fraction);
        assert_eq!(status, MootStatus::Ok);
        assert!((fraction - 943.0 / 2633.0).abs() < 1e-12);

        let stats = take_string(moot_dataset_stats_tsv(handle));
        assert!(stats.starts_with("kind\tkey\tcount\ntotal\tall\t2633\n"));

        moot_dataset_free(handle);
    }
}

#[test]
fn load_failures_set_the_thread_error() {
    unsafe {
        let missing = CString::new("/definitely/not/here.tsv").unwrap();
        let map_path = cpath(data_dir().join("group_map.tsv"));
        let mut handle: *mut MootDataset = ptr::null_mut();
        let status = moot_dataset_load(missing.as_ptr(), map_path.as_ptr(), &mut handle);
        assert_eq!(status, MootStatus::LoadFailed);
        assert!(handle.is_null());
        let message = take_string(moot_last_error());
        assert!(message.contains("not/here.tsv"), "{message}");

        let status = moot_dataset_load(ptr::null(), map_path.as_ptr(), &mut handle);
        assert_eq!(status, MootStatus::NullPointer);
    }
}

#[test]
fn parse_label_and_names_cross_the_boundary() {
    unsafe {
        let text = CString::new("Neither. The story is irrelevant to the rule.").unwrap();
        assert_eq!(moot_parse_label(text.as_ptr()), MootLabel::Neither);
        let name = CStr::from_ptr(moot_label_name(MootLabel::Neither));
        assert_eq!(name.to_str().unwrap(), "Neither");
        assert_eq!(moot_parse_label(ptr::null()), MootLabel::Unparseable);
    }
}

#[test]
fn prompt_rendering_with_json_bindings() {
    unsafe {
        let stage = CString::new("single_with_rot").unwrap();
        let bindings =
            CString::new(r#"{"country":"Ruritania","rule_of_thumb":"Greet elders.","story":"A tale."}"#)
                .unwrap();
        let mut out: *mut std::ffi::c_char = ptr::null_mut();
        let status = moot_render_prompt(stage.as_ptr(), bindings.as_ptr(), &mut out);
        assert_eq!(status, MootStatus::Ok);
        let text = take_string(out);
        assert!(text.contains("socially acceptable in Ruritania"));
        assert!(text.ends_with("Answer (Yes, No or Neither):"));

        // sentinel defaults when no bindings are supplied
        let mut out2: *mut std::ffi::c_char = ptr::null_mut();
        let status = moot_render_prompt(stage.as_ptr(), ptr::null(), &mut out2);
        assert_eq!(status, MootStatus::Ok);
        assert!(take_string(out2).contains("<COUNTRY>"));

        let bogus = CString::new("no_such_stage").unwrap();
        let mut out3: *mut std::ffi::c_char = ptr::null_mut();
        let status = moot_render_prompt(bogus.as_ptr(), ptr::null(), &mut out3);
        assert_eq!(status, MootStatus::InvalidArgument);
    }
}

#[test]
fn report_table_replays_a_transcript_directory() {
    unsafe {
        let dir = tempfile::tempdir().unwrap();
        // a one-line transcript written the same way the engine writes it
        let scenario = moot::dataset::ScenarioRecord {
            id: "s1".into(),
            country: "Ruritania".into(),
            rule_of_thumb: "r".into(),
            story: "s".into(),
            gold: moot::dataset::TernaryLabel::Yes,
            group: moot::dataset::CulturalGroup::Confucian,
        };
        let trace = moot::strategies::run_label_only(&scenario, moot::dataset::TernaryLabel::Yes);
        let line = serde_json::to_string(&moot::runner::transcript::TranscriptLine::trace(trace))
            .unwrap();
        std::fs::write(dir.path().join("transcript.jsonl"), format!("{line}\n")).unwrap();

        let run_dir = cpath(dir.path().to_path_buf());
        let table = CString::new("accuracy").unwrap();
        let mut out: *mut std::ffi::c_char = ptr::null_mut();
        let status = moot_report_table(run_dir.as_ptr(), table.as_ptr(), &mut out);
        assert_eq!(status, MootStatus::Ok);
        let text = take_string(out);
        assert!(text.contains("adjudicated\t1\t1\t1.0000\t100.0"), "{text}");

        let bogus = CString::new("nonsense").unwrap();
        let mut out2: *mut std::ffi::c_char = ptr::null_mut();
        let status = moot_report_table(run_dir.as_ptr(), bogus.as_ptr(), &mut out2);
        assert_eq!(status, MootStatus::InvalidArgument);
    }
}
