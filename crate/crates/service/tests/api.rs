use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sparcs_core::harness::load_scenario;
use sparcs_core::hmm::{forward_loglik, predict_next, DiscreteHmm};
use sparcs_service::{import_bundled, router, AppState, Collection, Store, JSON_CONTENT_TYPE};
use tower::ServiceExt;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn app(dir: &tempfile::TempDir) -> Router {
    let store = Store::open(dir.path()).unwrap();
    router(Arc::new(AppState::new(store, 11)))
}

fn seeded_app(dir: &tempfile::TempDir) -> Router {
    let store = Store::open(dir.path()).unwrap();
    import_bundled(&store, &data_dir()).unwrap();
    router(Arc::new(AppState::new(store, 11)))
}

struct Reply {
    status: StatusCode,
    etag: Option<String>,
    content_type: Option<String>,
    body: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("{e}: {}", self.body))
    }
}

fn header_text(headers: &header::HeaderMap, name: header::HeaderName) -> Option<String> {
    headers.get(name).map(|v| v.to_str().unwrap().to_owned())
}

async fn send(app: &Router, method: Method, uri: &str, if_match: Option<&str>, body: &str) -> Reply {
    let mut request = Request::builder().method(method).uri(uri);
    if let Some(v) = if_match {
        request = request.header(header::IF_MATCH, v);
    }
    let request = request.body(Body::from(body.to_owned())).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let etag = header_text(response.headers(), header::ETAG);
    let content_type = header_text(response.headers(), header::CONTENT_TYPE);
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    Reply { status, etag, content_type, body: String::from_utf8(bytes.to_vec()).unwrap() }
}

fn workflow_doc(root_child_level: &str) -> String {
    json!({
        "target": "human",
        "root": {
            "id": "w", "name": "Walk", "level": "Activity",
            "children": [{"id": "w0", "name": "Stand Up", "level": root_child_level,
                "children": if root_child_level == "CompositeTask" {
                    json!([{"id": "w00", "name": "Lean Forward", "level": "Task"}])
                } else {
                    json!([])
                }}]
        }
    })
    .to_string()
}

#[tokio::test]
async fn workflow_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let body = workflow_doc("CompositeTask");
    let local = sparcs_core::parse_workflow(&body).unwrap().to_canonical();
    let put = send(&app, Method::PUT, "/v1/workflows/walk", None, &body).await;
    assert_eq!(put.status, StatusCode::OK, "{}", put.body);
    assert_eq!(put.etag.as_deref(), Some("\"1\""));
    assert_eq!(put.body, local);
    let got = send(&app, Method::GET, "/v1/workflows/walk", None, "").await;
    assert_eq!(got.status, StatusCode::OK);
    assert_eq!(got.content_type.as_deref(), Some(JSON_CONTENT_TYPE));
    assert_eq!(got.body, local);
}

#[tokio::test]
async fn scenario_and_blocks_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let scenario = load_scenario(&data_dir().join("scenarios/natalia_tv_feeding")).unwrap();
    let doc = scenario.to_document();
    let put = send(&app, Method::PUT, "/v1/scenarios/natalia_tv_feeding", None, &doc).await;
    assert_eq!(put.status, StatusCode::OK, "{}", put.body);
    assert_eq!(send(&app, Method::GET, "/v1/scenarios/natalia_tv_feeding", None, "").await.body, doc);

    let blocks = scenario.blocks.to_canonical();
    let put = send(&app, Method::PUT, "/v1/blocks/natalia_tv_feeding", None, &blocks).await;
    assert_eq!(put.status, StatusCode::OK, "{}", put.body);
    assert_eq!(send(&app, Method::GET, "/v1/blocks/natalia_tv_feeding", None, "").await.body, blocks);
}

#[tokio::test]
async fn scenario_id_must_match_path() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let doc = load_scenario(&data_dir().join("scenarios/jose_feeding")).unwrap().to_document();
    let put = send(&app, Method::PUT, "/v1/scenarios/someone_else", None, &doc).await;
    assert_eq!(put.status, StatusCode::BAD_REQUEST);
    assert!(put.json()["error"].as_str().unwrap().starts_with("blocks:"), "{}", put.body);
}

#[tokio::test]
async fn task_under_activity_is_rejected_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let put = send(&app, Method::PUT, "/v1/workflows/walk", None, &workflow_doc("Task")).await;
    assert_eq!(put.status, StatusCode::BAD_REQUEST);
    assert_eq!(put.content_type.as_deref(), Some(JSON_CONTENT_TYPE));
    let body = put.json();
    let diagnostics = body["diagnostics"].as_array().unwrap();
    assert!(diagnostics.iter().any(|d| d["rule"] == "LevelChain" && d["node_id"] == "w0"), "{}", put.body);
    assert_eq!(send(&app, Method::GET, "/v1/workflows/walk", None, "").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn writes_require_the_current_version() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let body = workflow_doc("CompositeTask");
    let uri = "/v1/workflows/walk";
    assert_eq!(send(&app, Method::PUT, uri, Some("\"0\""), &body).await.status, StatusCode::OK);
    assert_eq!(send(&app, Method::PUT, uri, Some("\"0\""), &body).await.status, StatusCode::CONFLICT);
    assert_eq!(send(&app, Method::PUT, uri, None, &body).await.status, StatusCode::PRECONDITION_REQUIRED);
    let second = send(&app, Method::PUT, uri, Some("\"1\""), &body).await;
    assert_eq!((second.status, second.etag.as_deref()), (StatusCode::OK, Some("\"2\"")));
    assert_eq!(send(&app, Method::PUT, uri, Some("1"), &body).await.status, StatusCode::CONFLICT);
    assert_eq!(send(&app, Method::PUT, uri, Some("later"), &body).await.status, StatusCode::BAD_REQUEST);

    assert_eq!(send(&app, Method::DELETE, uri, None, "").await.status, StatusCode::PRECONDITION_REQUIRED);
    assert_eq!(send(&app, Method::DELETE, uri, Some("\"1\""), "").await.status, StatusCode::CONFLICT);
    assert_eq!(send(&app, Method::DELETE, uri, Some("\"2\""), "").await.status, StatusCode::NO_CONTENT);
    assert_eq!(send(&app, Method::GET, uri, None, "").await.status, StatusCode::NOT_FOUND);
    assert_eq!(send(&app, Method::DELETE, uri, Some("\"2\""), "").await.status, StatusCode::NOT_FOUND);

    // Versions keep growing across a delete.
    let again = send(&app, Method::PUT, uri, None, &body).await;
    assert_eq!((again.status, again.etag.as_deref()), (StatusCode::OK, Some("\"4\"")));
}

#[tokio::test]
async fn unknown_collections_and_bad_ids() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    assert_eq!(send(&app, Method::GET, "/v1/robots", None, "").await.status, StatusCode::NOT_FOUND);
    assert_eq!(send(&app, Method::GET, "/v1/workflows/a.b", None, "").await.status, StatusCode::BAD_REQUEST);
    let put = send(&app, Method::PUT, "/v1/workflows/a.b", None, &workflow_doc("CompositeTask")).await;
    assert_eq!(put.status, StatusCode::BAD_REQUEST);
    let malformed = send(&app, Method::PUT, "/v1/workflows/x", None, "{").await;
    assert_eq!(malformed.status, StatusCode::BAD_REQUEST);
    assert_eq!(malformed.json()["diagnostics"], json!([]));
}

#[tokio::test]
async fn listing_reports_ids_and_versions() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(&dir);
    let list = send(&app, Method::GET, "/v1/scenarios", None, "").await;
    assert_eq!(list.status, StatusCode::OK);
    assert_eq!(list.content_type.as_deref(), Some(JSON_CONTENT_TYPE));
    let ids: Vec<(String, u64)> = list.json()["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e["id"].as_str().unwrap().to_owned(), e["version"].as_u64().unwrap()))
        .collect();
    let expected = ["jose_feeding", "natalia_social_feeding", "natalia_tv_feeding"].map(|id| (id.to_owned(), 1));
    assert_eq!(ids, expected);
    let workflows = send(&app, Method::GET, "/v1/workflows", None, "").await.json();
    assert_eq!(workflows["items"].as_array().unwrap().len(), 19 + 2 * 3);
}

#[test]
fn importing_twice_writes_nothing_new() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    let first = import_bundled(&store, &data_dir()).unwrap();
    assert_eq!(first, 3 + 3 + 6 + 19);
    assert_eq!(import_bundled(&store, &data_dir()).unwrap(), 0);
    assert_eq!(store.list(Collection::Blocks).unwrap().len(), 3);
}

// ---- concurrency -------------------------------------------------------------

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_puts_on_one_base_version_admit_exactly_one() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let uri = "/v1/workflows/walk";
    assert_eq!(send(&app, Method::PUT, uri, None, &workflow_doc("CompositeTask")).await.status, StatusCode::OK);
    for round in 1..=10u64 {
        let base = round.to_string();
        let clients: Vec<_> = (0..2)
            .map(|_| {
                let (app, base) = (app.clone(), base.clone());
                tokio::spawn(async move {
                    send(&app, Method::PUT, uri, Some(&base), &workflow_doc("CompositeTask")).await.status
                })
            })
            .collect();
        let mut statuses = Vec::new();
        for c in clients {
            statuses.push(c.await.unwrap());
        }
        statuses.sort();
        assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT], "round {round}");
    }
}

#[test]
fn store_serializes_writers_per_id() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    store.put(Collection::Blocks, "b", "{}", sparcs_service::Expect::Version(0)).unwrap();
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let store = store.clone();
            std::thread::spawn(move || {
                store.put(Collection::Blocks, "b", &format!("{i}"), sparcs_service::Expect::Version(1))
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(results.iter().filter(|r| r.is_ok()).count(), 1);
    assert!(results
        .iter()
        .filter_map(|r| r.as_ref().err())
        .all(|e| matches!(e, sparcs_service::StoreError::Conflict { .. })));
    assert_eq!(store.get(Collection::Blocks, "b").unwrap().version, 2);
}

// ---- sessions ------------------------------------------------------------------

fn model_of(session: &Value) -> DiscreteHmm {
    serde_json::from_value(session["model"].clone()).unwrap()
}

fn remaining_of(session: &Value) -> Vec<usize> {
    session["remaining"].as_object().unwrap().values().map(|v| v.as_u64().unwrap() as usize).collect()
}

async fn open_session(app: &Router, scenario: &str) -> Value {
    let created = send(app, Method::POST, "/v1/sessions", None, &json!({ "scenario_id": scenario }).to_string()).await;
    assert_eq!(created.status, StatusCode::CREATED, "{}", created.body);
    assert_eq!(created.content_type.as_deref(), Some(JSON_CONTENT_TYPE));
    created.json()
}

async fn choose(app: &Router, id: &str, item: &str) -> Reply {
    send(app, Method::POST, &format!("/v1/sessions/{id}/choice"), None, &json!({ "item": item }).to_string()).await
}

#[tokio::test]
async fn fresh_session_predicts_from_the_empty_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(&dir);
    let created = open_session(&app, "natalia_tv_feeding").await;
    let id = created["session_id"].as_str().unwrap();
    let session = send(&app, Method::GET, &format!("/v1/sessions/{id}"), None, "").await.json();
    assert_eq!(session, created);
    let model = model_of(&session);
    let expected = predict_next(&model, &[], &[3, 3, 3, 3]).unwrap();
    assert_eq!(session["prediction_next"], model.symbols[expected].as_str());
    assert_eq!(session["status"], "Open");
    assert_eq!(session["accuracy_so_far"], Value::Null);
    assert_eq!(session["history"], json!([]));
}

#[tokio::test]
async fn following_every_prediction_scores_one_and_keeps_accounts() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(&dir);
    let mut session = open_session(&app, "natalia_tv_feeding").await;
    let id = session["session_id"].as_str().unwrap().to_owned();
    for step in 1..=12 {
        let item = session["prediction_next"].as_str().unwrap().to_owned();
        let reply = choose(&app, &id, &item).await;
        assert_eq!(reply.status, StatusCode::OK, "{}", reply.body);
        session = reply.json();
        let history = session["history"].as_array().unwrap();
        assert_eq!(remaining_of(&session).iter().sum::<usize>() + history.len(), 12);
        assert_eq!(history.len(), step);
        assert_eq!(session["accuracy_so_far"], 1.0);
        let last = &history[step - 1];
        assert!(last["prediction_seq"].as_u64() < last["choice_seq"].as_u64());
    }
    assert_eq!(session["status"], "Complete");
    assert_eq!(session["prediction_next"], Value::Null);
    let after = choose(&app, &id, "grape").await;
    assert_eq!(after.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn choices_against_the_prediction_are_scored_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(&dir);
    let session = open_session(&app, "jose_feeding").await;
    let id = session["session_id"].as_str().unwrap().to_owned();
    let items: Vec<String> = session["remaining"].as_object().unwrap().keys().cloned().collect();
    let predicted = session["prediction_next"].as_str().unwrap().to_owned();
    let other = items.iter().find(|i| **i != predicted).unwrap().clone();
    let reply = choose(&app, &id, &other).await.json();
    assert_eq!(reply["accuracy_so_far"], 0.0);
    let entry = &reply["history"][0];
    assert_eq!(
        (entry["prediction"].as_str(), entry["choice"].as_str()),
        (Some(predicted.as_str()), Some(other.as_str()))
    );
    assert_eq!(entry["matched"], false);
    assert_eq!(entry["prefix"], json!([]));

    // The next prediction is made with the choice in the prefix.
    let model = model_of(&reply);
    let idx = |name: &str| items.iter().position(|i| i == name).unwrap();
    let expected = predict_next(&model, &[idx(&other)], &remaining_of(&reply)).unwrap();
    assert_eq!(reply["prediction_next"], items[expected].as_str());

    assert_eq!(choose(&app, &id, &other).await.status, StatusCode::OK);
    assert_eq!(choose(&app, &id, &other).await.status, StatusCode::OK);
    let exhausted = choose(&app, &id, &other).await;
    assert_eq!(exhausted.status, StatusCode::CONFLICT);
    let unchanged = send(&app, Method::GET, &format!("/v1/sessions/{id}"), None, "").await.json();
    assert_eq!(unchanged["history"].as_array().unwrap().len(), 3);
    assert_eq!(choose(&app, &id, "pizza").await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_sessions_and_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(&dir);
    assert_eq!(send(&app, Method::GET, "/v1/sessions/s99", None, "").await.status, StatusCode::NOT_FOUND);
    assert_eq!(choose(&app, "s99", "grape").await.status, StatusCode::NOT_FOUND);
    let missing = send(&app, Method::POST, "/v1/sessions", None, r#"{"scenario_id":"nobody"}"#).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    let malformed = send(&app, Method::POST, "/v1/sessions", None, r#"{"scenario":"x"}"#).await;
    assert_eq!(malformed.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn completed_meal_updates_the_next_sessions_model() {
    let dir = tempfile::tempdir().unwrap();
    let app = seeded_app(&dir);
    let first = open_session(&app, "natalia_tv_feeding").await;
    let id = first["session_id"].as_str().unwrap().to_owned();
    let before = model_of(&first);
    // An order the learned model does not favor: least preferred first.
    let order = ["carrot", "carrot", "carrot", "cantaloupe", "cantaloupe", "cantaloupe", "grape", "grape", "grape"]
        .into_iter()
        .chain(["strawberry"; 3]);
    for item in order {
        assert_eq!(choose(&app, &id, item).await.status, StatusCode::OK);
    }
    let sequence: Vec<usize> = [3, 3, 3, 1, 1, 1, 2, 2, 2, 0, 0, 0].to_vec();
    let second = open_session(&app, "natalia_tv_feeding").await;
    let after = model_of(&second);
    assert_ne!(after, before);
    let (l0, l1) = (forward_loglik(&before, &sequence).unwrap(), forward_loglik(&after, &sequence).unwrap());
    assert!(l1 >= l0, "loglik {l0} -> {l1}");

    // Sessions opened before the update keep their model.
    let untouched = send(&app, Method::GET, &format!("/v1/sessions/{id}"), None, "").await.json();
    assert_eq!(model_of(&untouched), before);
}
