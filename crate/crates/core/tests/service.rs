mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};
use tower::ServiceExt;

use textedit::checkpoint::{save_checkpoint, CheckpointMeta};
use textedit::generator::{GeneratorKind, Precision};
use textedit::image::Image;
use textedit::service::{router, ModelRegistry, ModelSpec};

fn registry(dir: &std::path::Path) -> Arc<ModelRegistry> {
    let model = common::tiny_model(GeneratorKind::Filterbank, &[4, 8], Precision::F32, 3);
    let path = dir.join("fb.ckpt");
    save_checkpoint(&model, &CheckpointMeta::default(), &path).unwrap();
    let specs = [
        ModelSpec::parse("stub=identity").unwrap(),
        ModelSpec::parse(&format!("fb={}", path.display())).unwrap(),
    ];
    Arc::new(ModelRegistry::load(&specs).unwrap())
}

async fn call(reg: &Arc<ModelRegistry>, req: Request<Body>) -> (StatusCode, Value) {
    let resp = router(reg.clone(), 1 << 24).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn post_json(uri: &str, body: Value) -> Request<Body> {
    Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn png_b64(image: &Image) -> String {
    B64.encode(image.encode_png().unwrap())
}

fn decode(v: &Value) -> Image {
    Image::decode(&B64.decode(v.as_str().unwrap()).unwrap()).unwrap()
}

#[tokio::test]
async fn health_and_model_listing() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let (status, body) = call(&reg, Request::get("/health").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok"}));
    let (status, body) = call(&reg, Request::get("/models").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        body,
        json!([{"id": "fb", "kind": "filterbank", "K": 3}, {"id": "stub", "kind": "identity", "K": 1}])
    );
}

#[tokio::test]
async fn identity_stub_round_trips_within_one_level() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let input = common::random_image(300, 300, 5);
    let req = post_json(
        "/edit",
        json!({"image": png_b64(&input), "text": "make it brighter", "model": "stub"}),
    );
    let (status, body) = call(&reg, req).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let out = decode(&body["image"]);
    assert_eq!(out.dims(), (300, 300));
    assert!(out.max_abs_diff(&input).unwrap() <= 1.0 / 255.0 + 1e-12);
    assert_eq!(body["model"], "stub");
    assert!(body.get("weights").is_none());
}

#[tokio::test]
async fn trained_model_keeps_odd_sizes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let input = common::random_image(30, 21, 6);
    let body = json!({
        "image": png_b64(&input),
        "text": "increase the saturation",
        "model": "fb",
        "options": {"mode": "argmax", "return_weights": true}
    });
    let (s1, b1) = call(&reg, post_json("/edit", body.clone())).await;
    let (s2, b2) = call(&reg, post_json("/edit", body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(decode(&b1["image"]).dims(), (30, 21));
    assert_eq!(b1["image"], b2["image"]);
    let w: Vec<f64> = serde_json::from_value(b1["weights"].clone()).unwrap();
    assert_eq!(w.len(), 3);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

#[tokio::test]
async fn multipart_upload_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let input = common::random_image(16, 16, 7);
    let boundary = "XyZbOuNdArY";
    let mut body = Vec::new();
    let mut text_field = |name: &str, value: &str| {
        body.extend_from_slice(
            format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n")
                .as_bytes(),
        );
    };
    text_field("text", "make it darker");
    text_field("model", "stub");
    text_field("return_weights", "true");
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"a.png\"\r\nContent-Type: image/png\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(&input.encode_png().unwrap());
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let req = Request::post("/edit")
        .header(
            "content-type",
            format!("multipart/form-data; boundary={boundary}"),
        )
        .body(Body::from(body))
        .unwrap();
    let (status, body) = call(&reg, req).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert!(decode(&body["image"]).max_abs_diff(&input).unwrap() <= 1.0 / 255.0 + 1e-12);
    assert_eq!(body["weights"], json!([1.0]));
}

#[tokio::test]
async fn errors_carry_status_and_code() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let img = png_b64(&common::random_image(8, 8, 1));

    let (s, b) = call(
        &reg,
        post_json(
            "/edit",
            json!({"image": "bm90IGFuIGltYWdl", "text": "x", "model": "stub"}),
        ),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(b["code"], "undecodable_image");

    let (s, b) = call(
        &reg,
        post_json(
            "/edit",
            json!({"image": "***", "text": "x", "model": "stub"}),
        ),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(b["code"], "undecodable_image");

    let (s, b) = call(
        &reg,
        post_json("/edit", json!({"image": img, "text": "x", "model": "nope"})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(b["code"], "unknown_model");

    let (s, b) = call(
        &reg,
        post_json(
            "/edit",
            json!({"image": img, "text": "  ", "model": "stub"}),
        ),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(b["code"], "invalid_input");

    let (s, b) = call(&reg, post_json("/edit", json!({"text": "x"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(b["code"], "bad_json");

    let (s, b) = call(
        &reg,
        post_json("/probe", json!({"image": img, "model": "fb", "k": 3})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{b}");
    assert!(b["code"].is_string());

    let (s, b) = call(
        &reg,
        post_json("/probe", json!({"image": img, "model": "stub", "k": 0})),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(b["code"].is_string());
}

#[tokio::test]
async fn probe_returns_an_image_per_filter() {
    let dir = tempfile::tempdir().unwrap();
    let reg = registry(dir.path());
    let input = common::random_image(12, 20, 8);
    let mut outs = Vec::new();
    for k in 0..3 {
        let (s, b) = call(
            &reg,
            post_json(
                "/probe",
                json!({"image": png_b64(&input), "model": "fb", "k": k}),
            ),
        )
        .await;
        assert_eq!(s, StatusCode::OK, "{b}");
        assert_eq!(b["k"], k);
        let img = decode(&b["image"]);
        assert_eq!(img.dims(), (12, 20));
        outs.push(img);
    }
    assert!(outs[0].max_abs_diff(&outs[1]).unwrap() > 0.0);
}
