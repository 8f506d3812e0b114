use std::ffi::CString;
use std::ptr;

use crow::dataset::{
    load_dataset, save_dataset, AnnotationRecord, BoundingBox, CategoryRecord, DatasetIndex,
    ImageRecord,
};
use crow_ffi::{crow_last_error_message, crow_run_tiling, CrowStatus, CrowTilingConfig};

fn c_path(path: &std::path::Path) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn pipeline_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let images_dir = dir.path().join("images");
    std::fs::create_dir_all(&images_dir).unwrap();
    image::RgbImage::new(1024, 1024)
        .save(images_dir.join("1.png"))
        .unwrap();

    let ds = DatasetIndex {
        images: vec![ImageRecord {
            id: 1,
            file_name: "1.png".into(),
            width: 1024,
            height: 1024,
        }],
        annotations: vec![AnnotationRecord {
            id: 1,
            image_id: 1,
            bbox: BoundingBox::new(10.0, 10.0, 40.0, 40.0),
            category_id: 1,
            area: 1600.0,
            iscrowd: false,
            cut: false,
        }],
        categories: vec![CategoryRecord {
            id: 1,
            name: "object".into(),
        }],
    };
    let ann = dir.path().join("ann.json");
    save_dataset(&ds, &ann).unwrap();
    let out_dir = dir.path().join("out");

    let status = crow_run_tiling(
        c_path(&ann).as_ptr(),
        c_path(&images_dir).as_ptr(),
        c_path(&out_dir).as_ptr(),
        ptr::null(),
        2,
    );
    assert_eq!(status, CrowStatus::Ok);

    let result = load_dataset(out_dir.join("annotations.json")).unwrap();
    // the single corner object lands in one tile, plus the full frame
    assert_eq!(result.images.len(), 2);
    assert_eq!(result.annotations.len(), 2);
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn missing_input_reports_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let status = crow_run_tiling(
        c_path(&dir.path().join("absent.json")).as_ptr(),
        c_path(dir.path()).as_ptr(),
        c_path(&dir.path().join("out")).as_ptr(),
        ptr::null(),
        1,
    );
    assert_eq!(status, CrowStatus::IoError);
    assert!(!crow_last_error_message().is_null());
}

#[test]
fn invalid_config_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CrowTilingConfig {
        alpha: 512,
        beta: 0.25,
        gamma: 2.0,
        min_visibility: 0.1,
        include_full_frame: 1,
    };
    let status = crow_run_tiling(
        c_path(&dir.path().join("ann.json")).as_ptr(),
        c_path(dir.path()).as_ptr(),
        c_path(&dir.path().join("out")).as_ptr(),
        &cfg,
        1,
    );
    assert_eq!(status, CrowStatus::InvalidArgument);
}

#[test]
fn null_path_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let status = crow_run_tiling(
        ptr::null(),
        c_path(dir.path()).as_ptr(),
        c_path(dir.path()).as_ptr(),
        ptr::null(),
        1,
    );
    assert_eq!(status, CrowStatus::NullArgument);
}
