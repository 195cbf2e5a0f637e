use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

fn header() -> Value {
    json!({"width": 64, "height": 48, "source": "test"})
}

fn frame(f: u64) -> Value {
    json!({"frame": f, "detections": [{"bbox": [10.0, 10.0, 30.0, 30.0], "score": 0.9, "label": "chair"}]})
}

#[tokio::test]
async fn health() {
    let app = zbs_server::router();
    let (s, v) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn session_lifecycle() {
    let app = zbs_server::router();
    let (s, v) = call(&app, Method::POST, "/v1/sessions", Some(json!({"header": header(), "config": {"update_period": 10}}))).await;
    assert_eq!(s, StatusCode::CREATED);
    let id = v["session_id"].as_u64().unwrap();

    let (s, v) = call(&app, Method::POST, &format!("/v1/sessions/{id}/frames"), Some(frame(0))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["result"]["foreground"].as_array().unwrap().len(), 1);

    let batch: Vec<Value> = (1..15).map(frame).collect();
    let (s, v) = call(&app, Method::POST, &format!("/v1/sessions/{id}/batch"), Some(Value::Array(batch))).await;
    assert_eq!(s, StatusCode::OK);
    let outs = v.as_array().unwrap();
    assert_eq!(outs.len(), 14);
    // The chair joins the model at frame 10 and stops being foreground.
    assert_eq!(outs[9]["model_update"]["entries"], json!([1]));
    assert!(outs[9]["result"]["foreground"].as_array().unwrap().is_empty());

    let (_, model) = call(&app, Method::GET, &format!("/v1/sessions/{id}/model"), None).await;
    assert_eq!(model[0]["track_id"], 1);
    let (_, tracks) = call(&app, Method::GET, &format!("/v1/sessions/{id}/tracks"), None).await;
    assert_eq!(tracks[0]["history"].as_array().unwrap().len(), 15);

    let (s, _) = call(&app, Method::POST, &format!("/v1/sessions/{id}/frames"), Some(frame(3))).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, v) = call(&app, Method::DELETE, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["frames_processed"], 15);
    assert_eq!(v["last_frame"], 14);
    let (s, v) = call(&app, Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["kind"], "not_found");
}

#[tokio::test]
async fn error_kinds() {
    let app = zbs_server::router();
    let (s, v) = call(&app, Method::POST, "/v1/sessions", Some(json!({"header": header(), "config": {"tau_fore": 1.5}}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["kind"], "config");

    let (s, v) = call(&app, Method::POST, "/v1/sessions", Some(json!({"header": 3}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["kind"], "parse");

    let (_, v) = call(&app, Method::POST, "/v1/sessions", Some(json!({"header": header()}))).await;
    let id = v["session_id"].as_u64().unwrap();
    let bad = json!({"frame": 0, "detections": [{"bbox": [0, 0, 1, 1], "score": 1.5, "label": "x"}]});
    let (s, v) = call(&app, Method::POST, &format!("/v1/sessions/{id}/frames"), Some(bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["kind"], "invalid");
}

#[tokio::test]
async fn sessions_are_independent() {
    let app = zbs_server::router();
    let (_, a) = call(&app, Method::POST, "/v1/sessions", Some(json!({"header": header()}))).await;
    let (_, b) = call(&app, Method::POST, "/v1/sessions", Some(json!({"header": header()}))).await;
    let (a, b) = (a["session_id"].as_u64().unwrap(), b["session_id"].as_u64().unwrap());
    assert_ne!(a, b);
    call(&app, Method::POST, &format!("/v1/sessions/{a}/frames"), Some(frame(5))).await;
    let (s, _) = call(&app, Method::POST, &format!("/v1/sessions/{b}/frames"), Some(frame(0))).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn synth_evaluate_and_sweep() {
    let app = zbs_server::router();
    let (s, syn) = call(&app, Method::POST, "/v1/synth", Some(json!({"preset": "drop_and_leave", "seed": 1}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(syn["manifest"]["scenario"], "drop_and_leave");
    let gt = syn["gt"].clone();
    assert_eq!(gt.as_array().unwrap().len(), 300);

    let req = json!({"stream": syn["stream"], "grid": {"tau_fore": [0.5, 1.0]}, "gt": gt, "first_frame": 100});
    let (s, rows) = call(&app, Method::POST, "/v1/sweep", Some(req)).await;
    assert_eq!(s, StatusCode::OK);
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["foreground_pixels"].as_u64() <= rows[1]["foreground_pixels"].as_u64());

    // Scoring GT against itself is perfect.
    let frames: Vec<Value> = gt
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let [h, w] = [g["size"][0].as_u64().unwrap() as u32, g["size"][1].as_u64().unwrap() as u32];
            let runs: Vec<(u8, u32)> = serde_json::from_value(g["runs"].clone()).unwrap();
            let mut cells = Vec::new();
            for (v, n) in runs {
                cells.extend(std::iter::repeat_n(v == 255, n as usize));
            }
            let pred = zbs_core::RleMask::encode(h, w, &cells).unwrap();
            json!({"frame": i, "gt": g, "pred": pred})
        })
        .collect();
    let req = json!({"videos": [{"name": "v", "category": "c", "first_frame": 100, "frames": frames}]});
    let (s, rep) = call(&app, Method::POST, "/v1/evaluate", Some(req)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rep["report"]["overall"]["f_measure"], 1.0);

    let (s, v) = call(&app, Method::POST, "/v1/synth", Some(json!({"preset": "nope"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["kind"], "invalid");
    let (s, v) = call(&app, Method::POST, "/v1/sweep", Some(json!({"stream": "garbage"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["kind"], "parse");
}
