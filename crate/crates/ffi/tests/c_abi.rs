use std::ffi::{c_char, CString};
use std::ptr;

use hibem_ffi::*;

fn last_error() -> String {
    let mut needed = 0usize;
    unsafe {
        assert_eq!(hibem_last_error_message(ptr::null_mut(), 0, &mut needed), HibemStatus::BufferTooSmall);
        let mut buf = vec![0u8; needed];
        assert_eq!(hibem_last_error_message(buf.as_mut_ptr().cast::<c_char>(), needed, &mut needed), HibemStatus::Ok);
        buf.pop();
        String::from_utf8(buf).unwrap()
    }
}

fn geometry(name: &str) -> *mut HibemGeometry {
    let name = CString::new(name).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { hibem_geometry_new(name.as_ptr(), &mut g) }, HibemStatus::Ok);
    g
}

#[test]
fn cube_geometry_and_refinement() {
    let g = geometry("cube");
    unsafe {
        let mut n = 0;
        assert_eq!(hibem_geometry_num_patches(g, &mut n), HibemStatus::Ok);
        assert_eq!(n, 6);
        let mut x = [0.0; 3];
        assert_eq!(hibem_geometry_eval(g, 0, 0.5, 0.5, x.as_mut_ptr()), HibemStatus::Ok);
        assert!(x.iter().all(|c| c.is_finite()));
        assert_eq!(hibem_geometry_eval(g, 6, 0.5, 0.5, x.as_mut_ptr()), HibemStatus::InvalidArgument);

        let mut m0 = ptr::null_mut();
        assert_eq!(hibem_mesh_initial(g, 0, &mut m0), HibemStatus::Ok);
        let mut m1 = ptr::null_mut();
        assert_eq!(hibem_mesh_uniform_refine(m0, &mut m1), HibemStatus::Ok);
        let (mut n0, mut n1) = (0, 0);
        hibem_mesh_num_elements(m0, &mut n0);
        hibem_mesh_num_elements(m1, &mut n1);
        assert_eq!(n1, 4 * n0);

        let marked = [0usize];
        let mut m2 = ptr::null_mut();
        assert_eq!(hibem_mesh_refine(m1, marked.as_ptr(), 1, &mut m2), HibemStatus::Ok);
        let mut n2 = 0;
        hibem_mesh_num_elements(m2, &mut n2);
        assert!(n2 >= n1 + 3);
        let mut ok = false;
        assert_eq!(hibem_mesh_is_admissible(m2, &mut ok), HibemStatus::Ok);
        assert!(ok);
        let mut e = HibemElement::default();
        assert_eq!(hibem_mesh_element(m2, n2 - 1, &mut e), HibemStatus::Ok);
        assert!(e.patch < 6);
        assert_eq!(hibem_mesh_element(m2, n2, &mut e), HibemStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        let bad = [n2 + 5];
        let mut m3 = ptr::null_mut();
        assert_eq!(hibem_mesh_refine(m2, bad.as_ptr(), 1, &mut m3), HibemStatus::InvalidArgument);
        assert!(m3.is_null());

        hibem_mesh_free(m0);
        hibem_mesh_free(m1);
        hibem_mesh_free(m2);
        hibem_geometry_free(g);
    }
}

#[test]
fn null_and_bad_inputs() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(hibem_geometry_new(ptr::null(), &mut g), HibemStatus::NullPointer);
        let name = CString::new("dodecahedron").unwrap();
        assert_ne!(hibem_geometry_new(name.as_ptr(), &mut g), HibemStatus::Ok);
        assert!(g.is_null());
        assert!(!last_error().is_empty());
        let mut n = 0;
        assert_eq!(hibem_mesh_num_elements(ptr::null(), &mut n), HibemStatus::NullPointer);
        hibem_mesh_free(ptr::null_mut());
        hibem_trace_free(ptr::null_mut());
        hibem_geometry_free(ptr::null_mut());
    }
}

#[test]
fn config_errors() {
    unsafe {
        let mut t = ptr::null_mut();
        for json in [r#"{"bogus": 1}"#, r#"{"p": 3}"#, "not json"] {
            let c = CString::new(json).unwrap();
            assert_eq!(hibem_run(c.as_ptr(), &mut t), HibemStatus::ConfigError, "{json}");
            assert!(t.is_null());
        }
    }
}

#[test]
fn small_run() {
    let c = CString::new(r#"{"geometry": "cube", "mode": "uniform", "budget": 100}"#).unwrap();
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(hibem_run(c.as_ptr(), &mut t), HibemStatus::Ok, "{}", last_error());
        let mut rows = 0;
        hibem_trace_num_rows(t, &mut rows);
        assert!(rows >= 2);
        let mut prev = f64::INFINITY;
        for i in 0..rows {
            let mut r = HibemTraceRow::default();
            assert_eq!(hibem_trace_row(t, i, &mut r), HibemStatus::Ok);
            assert_eq!(r.ell, i);
            assert!(r.estimator < prev);
            prev = r.estimator;
        }
        let mut rate = 0.0;
        assert_eq!(hibem_trace_estimator_rate(t, 2, &mut rate), HibemStatus::Ok);
        assert!(rate < 0.0);

        let mut needed = 0;
        let mut small = [0 as c_char; 4];
        assert_eq!(hibem_trace_csv(t, small.as_mut_ptr(), small.len(), &mut needed), HibemStatus::BufferTooSmall);
        let mut buf = vec![0u8; needed];
        assert_eq!(hibem_trace_csv(t, buf.as_mut_ptr().cast(), needed, &mut needed), HibemStatus::Ok);
        let csv = String::from_utf8(buf[..needed - 1].to_vec()).unwrap();
        assert!(csv.starts_with("ell,num_elements,dofs,estimator,energy_error,num_marked,seconds\n"));
        assert_eq!(csv.lines().count(), rows + 1);
        hibem_trace_free(t);
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/hibem.h")).unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.strip_prefix("pub unsafe extern \"C\" fn "))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 15);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}

/// Compiles the C example against the generated header and static library.
#[test]
fn c_example_links_and_runs() {
    use std::path::Path;
    use std::process::Command;
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    // Test binaries live in target/<profile>/deps; the library one level up.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let lib = lib_dir.join("libhibem_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let out = lib_dir.join("refine_c_example");
    let status = Command::new("cc")
        .arg(manifest.join("examples/refine.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{run:?}");
    let fields: Vec<usize> =
        String::from_utf8(run.stdout).unwrap().split_whitespace().map(|s| s.parse().unwrap()).collect();
    assert_eq!(fields[0], 6);
    assert!(fields[1] > 6);
    assert_eq!(fields[2], 1);
}
