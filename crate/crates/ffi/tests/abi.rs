use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use textedit::checkpoint::{save_checkpoint, CheckpointMeta};
use textedit::data::build_vocabulary;
use textedit::generator::{BackboneConfig, EditModel, GeneratorKind, ModelConfig};
use textedit_ffi::*;

fn write_model(dir: &Path, kind: GeneratorKind) -> CString {
    let vocab = build_vocabulary(&["make it brighter", "make it darker"], 1).unwrap();
    let mut cfg = ModelConfig::full(kind, vocab.len());
    cfg.backbone = BackboneConfig::miniature(&[4, 8]);
    cfg.branches = 3;
    cfg.text.embed_dim = 6;
    cfg.text.hidden = 4;
    let model = EditModel::new(cfg, vocab, 1).unwrap();
    let path = dir.join(format!("{}.ckpt", kind.as_str()));
    save_checkpoint(&model, &CheckpointMeta::default(), &path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(te_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn edit_round_trip_through_the_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_model(dir.path(), GeneratorKind::Filterbank);
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(te_model_load(path.as_ptr(), &mut model), TeStatus::Ok);
        let mut k = 0;
        assert_eq!(te_model_branches(model, &mut k), TeStatus::Ok);
        assert_eq!(k, 3);
        let mut kind = ptr::null();
        assert_eq!(te_model_kind(model, &mut kind), TeStatus::Ok);
        assert_eq!(CStr::from_ptr(kind).to_str().unwrap(), "filterbank");

        let (w, h) = (10usize, 7usize);
        let pixels: Vec<u8> = (0..w * h * 3).map(|i| (i * 5 % 200) as u8 + 20).collect();
        let mut img = ptr::null_mut();
        assert_eq!(
            te_image_from_rgb8(pixels.as_ptr(), pixels.len(), w, h, &mut img),
            TeStatus::Ok
        );

        let text = CString::new("make it brighter").unwrap();
        let mut weights = [0.0f64; 3];
        let mut out = ptr::null_mut();
        let s = te_edit(
            model,
            img,
            text.as_ptr(),
            TeReadout::Fusion,
            &mut out,
            weights.as_mut_ptr(),
            3,
        );
        assert_eq!(s, TeStatus::Ok, "{}", last_error());
        assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let (mut ow, mut oh) = (0, 0);
        assert_eq!(te_image_size(out, &mut ow, &mut oh), TeStatus::Ok);
        assert_eq!((ow, oh), (w, h));
        let mut buf = vec![0u8; w * h * 3];
        assert_eq!(
            te_image_to_rgb8(out, buf.as_mut_ptr(), buf.len()),
            TeStatus::Ok
        );

        let mut probe = ptr::null_mut();
        assert_eq!(te_probe(model, img, 2, &mut probe), TeStatus::Ok);
        assert_eq!(te_probe(model, img, 3, &mut probe), TeStatus::Validation);
        assert!(last_error().contains("out of range"));

        let mut short = [0.0f64; 2];
        assert_eq!(
            te_edit(
                model,
                img,
                text.as_ptr(),
                TeReadout::Argmax,
                &mut out,
                short.as_mut_ptr(),
                2
            ),
            TeStatus::BufferTooSmall
        );

        te_image_free(probe);
        te_image_free(out);
        te_image_free(img);
        te_model_free(model);
        te_model_free(ptr::null_mut());
        te_image_free(ptr::null_mut());
    }
}

#[test]
fn bad_arguments_are_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(
            te_model_load(ptr::null(), &mut model),
            TeStatus::NullOrInvalidArgument
        );
        let missing = CString::new(dir.path().join("x.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(te_model_load(missing.as_ptr(), &mut model), TeStatus::Io);
        assert!(model.is_null());
        std::fs::write(dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
        let junk = CString::new(dir.path().join("junk.ckpt").to_str().unwrap()).unwrap();
        assert_eq!(te_model_load(junk.as_ptr(), &mut model), TeStatus::Format);
        assert!(!last_error().is_empty());

        let px = [0u8; 11];
        let mut img = ptr::null_mut();
        assert_eq!(
            te_image_from_rgb8(px.as_ptr(), px.len(), 2, 2, &mut img),
            TeStatus::Validation
        );

        let e2e = write_model(dir.path(), GeneratorKind::E2e);
        assert_eq!(te_model_load(e2e.as_ptr(), &mut model), TeStatus::Ok);
        let px = [128u8; 12];
        assert_eq!(
            te_image_from_rgb8(px.as_ptr(), px.len(), 2, 2, &mut img),
            TeStatus::Ok
        );
        let mut out = ptr::null_mut();
        assert_eq!(te_probe(model, img, 0, &mut out), TeStatus::Validation);
        te_image_free(img);
        te_model_free(model);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(te_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/textedit.h"))
            .unwrap();
    for f in [
        "te_last_error",
        "te_version",
        "te_model_load",
        "te_model_free",
        "te_model_kind",
        "te_model_branches",
        "te_image_from_rgb8",
        "te_image_load",
        "te_image_save",
        "te_image_size",
        "te_image_to_rgb8",
        "te_image_free",
        "te_edit",
        "te_probe",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct TeModel TeModel;"));
}

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libtextedit_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_edits() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not found next to the test binary; skipping C link check");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping C link check");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), GeneratorKind::Bucket);
    let exe = dir.path().join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke program failed to build");
    let png = dir.path().join("out.png");
    let out = Command::new(&exe)
        .arg(model.to_str().unwrap())
        .arg(&png)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("bucket K=3"));
    assert!(png.exists());
}
