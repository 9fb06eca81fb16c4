//! Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sparcs_cli::BUNDLED_DATA_DIR;
use sparcs_core::harness::{
    load_scenario, run_bite_sequencing_experiment, run_bite_transfer_experiment, run_robot_model_comparison, run_user,
    RobotComparisonConfig, SequencingConfig, TransferExperimentConfig, ROBOT_TABLE_HEADER,
};
use sparcs_core::hmm::{baum_welch, forward_loglik, online_update, train, DiscreteHmm, TrainOptions};
use sparcs_core::transfer::{goal_pose, pose_error, relative_angle, sample_candidates, ArmModel, TransferScenario};
use sparcs_core::workflow::{diff_workflows, substitute_subtree, validate_hierarchy};
use sparcs_core::{parse_workflow, Workflow};
use sparcs_service::{import_bundled, router, AppState, Store};
use tower::ServiceExt;

use oracles::{
    brute_force_loglik, dense_trajectory_clearance, max_stochastic_error, random_accuracy_for_meal,
    random_accuracy_uniform_meal,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn data() -> PathBuf {
    PathBuf::from(BUNDLED_DATA_DIR)
}

fn natalia() -> TransferScenario {
    load_scenario(&data().join("scenarios/natalia_tv_feeding")).unwrap().transfer_scenario().unwrap()
}

fn config<T: serde::de::DeserializeOwned>(name: &str) -> T {
    serde_json::from_str(&fs::read_to_string(data().join("experiments").join(name)).unwrap()).unwrap()
}

// ---- 1 + 2: bite transfer ------------------------------------------------------

fn bite_transfer() -> (Outcome, Outcome) {
    let cfg: TransferExperimentConfig = config("transfer.json");
    let scenario = load_scenario(&data().join("scenarios").join(&cfg.scenario)).unwrap();
    let seeds = cfg.seeds.clone().unwrap_or_else(|| scenario.planner.seeds.clone());
    let s = scenario.transfer_scenario().unwrap();
    let start = Instant::now();
    let report = run_bite_transfer_experiment(&s, cfg.n_user_poses, &seeds).unwrap();
    let elapsed = start.elapsed();
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let pattern = if cfg.n_user_poses != 100 || seeds.len() != 10 {
        Err(format!("ran {} poses x {} seeds", cfg.n_user_poses, seeds.len()))
    } else if !failed.is_empty() {
        Err(format!("missed: {}", failed.join("; ")))
    } else if elapsed >= Duration::from_secs(300) {
        Err(format!("took {elapsed:.1?}"))
    } else {
        Ok(format!("{} checks hold over 100 poses x 10 seeds in {elapsed:.1?}", report.checks.len()))
    };
    (pattern, trajectory_soundness(&s, &report.evaluation.outcomes))
}

fn trajectory_soundness(s: &TransferScenario, outcomes: &[sparcs_core::transfer::PoseOutcome]) -> Outcome {
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    for o in outcomes {
        for r in &o.results {
            if !r.success {
                continue;
            }
            let trajectory = r.trajectory.as_ref().ok_or("success without a trajectory")?;
            ensure!(trajectory[0].as_slice() == s.arm.home().as_slice(), "trajectory does not start at home");
            let clearance = dense_trajectory_clearance(&s.arm, &s.obstacles, trajectory, s.params.check_resolution, 10);
            ensure!(clearance > 0.0, "{:?} seed {} {:?}: clearance {clearance}", r.policy, o.seed, o.h_user);
            let goal = goal_pose(&s.head, &r.chosen_pose.ok_or("success without a pose")?, &s.transfer);
            let (dp, dr) = pose_error(&s.arm.forward_kinematics(trajectory.last().unwrap()), &goal);
            ensure!(dp <= 0.005 && dr <= 0.05, "{:?} seed {}: endpoint off by {dp} m / {dr} rad", r.policy, o.seed);
            worst = worst.min(clearance);
            checked += 1;
        }
    }
    ensure!(checked > 0, "no successful trajectories");
    Ok(format!("{checked} trajectories clear at 10x resolution (min clearance {:.4} m)", worst))
}

// ---- 3: candidate ordering -----------------------------------------------------

fn candidate_ordering() -> Outcome {
    let s = natalia();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for draw in 0..1000u64 {
        let h_user = s.user_manifold.sample(&mut rng);
        let c = sample_candidates(&s.user_manifold, &h_user, Some(&s.h_fixed), s.n_candidates, draw).unwrap();
        ensure!(c[0] == h_user, "draw {draw}: h_user is not first");
        let angles: Vec<f64> = c.iter().map(|p| relative_angle(&h_user, p)).collect();
        ensure!(angles.windows(2).all(|w| w[0] <= w[1]), "draw {draw}: not sorted");
    }
    Ok(format!("1000 draws of {} candidates sorted with h_user first", s.n_candidates + 2))
}

// ---- 4: HMM correctness --------------------------------------------------------

fn symbols(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("s{i}")).collect()
}

fn hmm_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_forward: f64 = 0.0;
    for model in 0..50u64 {
        let (n, m) = (rng.random_range(1..=3), rng.random_range(1..=4));
        let hmm = DiscreteHmm::random(n, symbols(m), model);
        for len in 1..=6 {
            let seq: Vec<usize> = (0..len).map(|_| rng.random_range(0..m)).collect();
            let gap = (forward_loglik(&hmm, &seq).unwrap() - brute_force_loglik(&hmm, &seq)).abs();
            worst_forward = worst_forward.max(gap);
        }
    }
    ensure!(worst_forward <= 1e-10, "forward differs from enumeration by {worst_forward:e}");
    let mut worst_drop: f64 = 0.0;
    let mut worst_stochastic: f64 = 0.0;
    for corpus_seed in 0..20u64 {
        let corpus: Vec<Vec<usize>> = (0..rng.random_range(2..10))
            .map(|_| (0..rng.random_range(1..13)).map(|_| rng.random_range(0..4)).collect())
            .collect();
        let weights: Vec<f64> = corpus.iter().map(|_| rng.random_range(0.5..5.0)).collect();
        let n = rng.random_range(1..=4);
        let (fitted, trace) =
            baum_welch(&DiscreteHmm::random(n, symbols(4), corpus_seed), &corpus, &weights, 100, 0.0).unwrap();
        for w in trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        let trained = train(n, &symbols(4), &corpus, &weights, &TrainOptions::default(), corpus_seed).unwrap();
        let updated = online_update(&trained, &corpus[..1], 10.0, &corpus, &TrainOptions::default()).unwrap();
        for h in [&fitted, &trained, &updated] {
            worst_stochastic = worst_stochastic.max(max_stochastic_error(h));
        }
    }
    ensure!(worst_drop <= 1e-9, "Baum-Welch lowered the likelihood by {worst_drop:e}");
    ensure!(worst_stochastic <= 1e-9, "rows off by {worst_stochastic:e}");
    Ok(format!(
        "forward gap {worst_forward:.1e}, largest EM drop {:.1e}, stochasticity error {worst_stochastic:.1e}",
        worst_drop.max(0.0)
    ))
}

// ---- 5: bite sequencing --------------------------------------------------------

fn bite_sequencing() -> Outcome {
    let cfg: SequencingConfig = config("sequencing.json");
    let start = Instant::now();
    let report = run_bite_sequencing_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();
    let failed: Vec<String> = report.checks().into_iter().filter(|c| !c.passed).map(|c| c.name).collect();
    ensure!(failed.is_empty(), "missed: {} ({})", failed.join("; "), report.summary().replace('\n', " | "));
    ensure!(cfg.n_users == 20 && cfg.user_temperature == 0.5, "config is not the 20-user, temperature 0.5 run");
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:.1?}");

    let n = cfg.meal.items.len();
    let expected: f64 =
        report.users.iter().map(|u| random_accuracy_for_meal(&u.test_meal, n)).sum::<f64>() / report.users.len() as f64;
    let gap = (report.mean_random - expected).abs();
    ensure!(gap <= 0.03, "random mean {:.4} vs exact {expected:.4}", report.mean_random);
    let uniform = random_accuracy_uniform_meal(n, cfg.meal.bites_per_item);

    let deterministic =
        SequencingConfig { user_temperature: 0.0, affinity_noise: 0.0, preference_flip: 0.0, ..cfg.clone() };
    for user in 0..deterministic.n_users {
        let (result, _) = run_user(&deterministic, user).unwrap();
        ensure!(result.ho_accuracy == 1.0, "temperature-0 user {user}: HO accuracy {}", result.ho_accuracy);
    }
    Ok(format!(
        "HO {:.3} >= HS {:.3} >= Random {:.3}, p = {:.2e}; random vs exact {expected:.4} (uniform-meal {uniform:.4}); \
         20 temperature-0 users at 1.0; {elapsed:.1?}",
        report.mean_ho, report.mean_hs, report.mean_random, report.kruskal_wallis.p_value
    ))
}

// ---- 6: arm comparison ---------------------------------------------------------

fn arm_comparison() -> Outcome {
    let cfg: RobotComparisonConfig = config("robots.json");
    let s = load_scenario(&data().join("scenarios").join(&cfg.scenario)).unwrap().transfer_scenario().unwrap();
    let arms: Vec<ArmModel> = cfg.arms.iter().map(|a| ArmModel::preset(a).unwrap()).collect();
    let run = || run_robot_model_comparison(&s, &arms, cfg.n_user_poses, &cfg.seeds).unwrap();
    let (first, second) = (run(), run());
    let table = first.to_table();
    ensure!(table == second.to_table(), "reruns differ");
    let mut lines = table.lines();
    ensure!(lines.next() == Some(ROBOT_TABLE_HEADER), "header is not `{ROBOT_TABLE_HEADER}`");
    ensure!(cfg.seeds.len() == 3, "{} seeds", cfg.seeds.len());
    for (line, arm) in lines.zip(&cfg.arms) {
        let cells: Vec<&str> = line.split(',').collect();
        ensure!(cells.len() == 3 && cells[0] == arm, "bad row `{line}`");
        ensure!(cells[1] == "1.0", "{arm} success rate {}", cells[1]);
        let (mean, sd) = cells[2].split_once('∓').ok_or(format!("bad angle cell `{}`", cells[2]))?;
        ensure!(mean.parse::<f64>().is_ok() && sd.parse::<f64>().is_ok(), "bad angle cell `{}`", cells[2]);
    }
    ensure!(table.lines().count() == cfg.arms.len() + 1, "row count");
    Ok(table.lines().skip(1).collect::<Vec<_>>().join("; "))
}

// ---- 7: workflow suite ---------------------------------------------------------

fn robot_workflow(scenario: &str) -> Workflow {
    parse_workflow(&fs::read_to_string(data().join("scenarios").join(scenario).join("workflow_robot.json")).unwrap())
        .unwrap()
}

fn workflow_suite() -> Outcome {
    let mut paths: Vec<PathBuf> = fs::read_dir(data().join("catalog")).unwrap().map(|e| e.unwrap().path()).collect();
    let human = paths.len();
    for s in ["natalia_tv_feeding", "jose_feeding", "natalia_social_feeding"] {
        paths.push(data().join("scenarios").join(s).join("workflow_robot.json"));
    }
    for p in &paths {
        let text = fs::read_to_string(p).unwrap();
        let wf = parse_workflow(&text).map_err(|e| format!("{}: {e}", p.display()))?;
        ensure!(validate_hierarchy(&wf).is_empty(), "{}: hierarchy diagnostics", p.display());
        ensure!(wf.to_canonical() == text, "{} is not a serialization fixpoint", p.display());
    }
    let natalia = robot_workflow("natalia_tv_feeding");
    let jose = robot_workflow("jose_feeding");
    let transfer = natalia.path_by_name("Bite Transfer").ok_or("no Bite Transfer")?;
    let edits = diff_workflows(&natalia, &jose);
    ensure!(!edits.is_empty(), "no differences");
    for e in &edits {
        ensure!(e.path.starts_with(&transfer) && e.path != transfer, "edit outside Bite Transfer: {e}");
    }
    let replacement = jose.get(&jose.path_by_name("Bite Transfer").unwrap()).unwrap().clone();
    let swapped = substitute_subtree(&natalia, &transfer, replacement).map_err(|e| e.to_string())?;
    ensure!(diff_workflows(&swapped, &jose).is_empty(), "substituted workflow differs from Jose");
    Ok(format!("{human} human + {} robot documents; {} edits under Bite Transfer", paths.len() - human, edits.len()))
}

// ---- 8: end-to-end demo --------------------------------------------------------

fn demo_run(trace: &Path) -> Result<String, String> {
    let output = Command::new(env!("CARGO_BIN_EXE_sparcs"))
        .args(["demo", "natalia_tv_feeding", "--seed", "7", "--trace"])
        .arg(trace)
        .env("SPARCS_DATA_DIR", data())
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(output.status.success(), "exit {:?}: {}", output.status.code(), String::from_utf8_lossy(&output.stderr));
    Ok(String::from_utf8(output.stdout).unwrap())
}

fn end_to_end_demo() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let (a, b) = (dir.path().join("a.tsv"), dir.path().join("b.tsv"));
    let summary = demo_run(&a)?;
    demo_run(&b)?;
    let elapsed = start.elapsed();
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    ensure!(ta == tb, "traces differ between runs");
    ensure!(summary.lines().any(|l| l.starts_with("status: Done")), "root not Done");
    ensure!(summary.lines().any(|l| l == "bites: 12"), "not 12 bites");
    let trace = String::from_utf8(ta).unwrap();
    let (mut acquired, mut transfers) = (false, 0);
    for line in trace.lines() {
        let f: Vec<&str> = line.split('\t').collect();
        match (f[1], f[2]) {
            ("bite_acquisition", "Done") => {
                ensure!(!acquired, "second acquisition before a transfer: {line}");
                acquired = true;
            }
            ("bite_transfer", "Activated") => {
                ensure!(acquired, "transfer before acquisition: {line}");
                acquired = false;
                transfers += 1;
            }
            _ => {}
        }
    }
    ensure!(transfers == 12, "{transfers} transfers");
    ensure!(
        trace.lines().last().is_some_and(|l| l.ends_with("feeding\tDone")),
        "trace does not end with the root Done"
    );
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:.1?}");
    Ok(format!("12 bites, {} trace lines identical across runs, {elapsed:.1?} for both", trace.lines().count()))
}

// ---- 9: service contract -------------------------------------------------------

async fn send(app: &Router, method: Method, uri: &str, if_match: Option<&str>, body: String) -> (StatusCode, String) {
    let mut request = Request::builder().method(method).uri(uri);
    if let Some(v) = if_match {
        request = request.header(header::IF_MATCH, v);
    }
    let response = app.clone().oneshot(request.body(Body::from(body)).unwrap()).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn service_contract() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    import_bundled(&store, &data()).unwrap();
    let app = router(Arc::new(AppState::new(store, 0)));

    for (collection, id) in
        [("workflows", "natalia_tv_feeding_robot"), ("blocks", "jose_feeding"), ("scenarios", "natalia_tv_feeding")]
    {
        let uri = format!("/v1/{collection}/{id}");
        let (status, body) = send(&app, Method::GET, &uri, None, String::new()).await;
        ensure!(status == StatusCode::OK, "GET {uri}: {status}");
        let (status, _) = send(&app, Method::PUT, &uri, Some("\"1\""), body.clone()).await;
        ensure!(status == StatusCode::OK, "PUT {uri}: {status}");
        let (_, again) = send(&app, Method::GET, &uri, None, String::new()).await;
        ensure!(again == body, "{uri} changed across a round trip");
    }

    let uri = "/v1/workflows/jose_feeding_robot";
    let (_, body) = send(&app, Method::GET, uri, None, String::new()).await;
    let racers: Vec<_> = (0..2)
        .map(|_| {
            let (app, body) = (app.clone(), body.clone());
            tokio::spawn(async move { send(&app, Method::PUT, uri, Some("\"1\""), body).await.0 })
        })
        .collect();
    let mut statuses = Vec::new();
    for r in racers {
        statuses.push(r.await.unwrap());
    }
    statuses.sort();
    ensure!(statuses == [StatusCode::OK, StatusCode::CONFLICT], "concurrent PUTs gave {statuses:?}");

    let (status, created) =
        send(&app, Method::POST, "/v1/sessions", None, json!({ "scenario_id": "natalia_tv_feeding" }).to_string())
            .await;
    ensure!(status == StatusCode::CREATED, "session create: {status} {created}");
    let mut session: Value = serde_json::from_str(&created).unwrap();
    let id = session["session_id"].as_str().unwrap().to_owned();
    // Scripted user: always the first remaining item, so some predictions miss.
    for step in 1..=12 {
        let item =
            session["remaining"].as_object().unwrap().iter().find(|(_, c)| c.as_u64() > Some(0)).unwrap().0.clone();
        let (status, body) =
            send(&app, Method::POST, &format!("/v1/sessions/{id}/choice"), None, json!({ "item": item }).to_string())
                .await;
        ensure!(status == StatusCode::OK, "choice {step}: {status} {body}");
        session = serde_json::from_str(&body).unwrap();
        let remaining: u64 = session["remaining"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
        let history = session["history"].as_array().unwrap();
        ensure!(remaining as usize + history.len() == 12, "accounting broken after choice {step}");
        let last = &history[step - 1];
        ensure!(
            last["prediction_seq"].as_u64() < last["choice_seq"].as_u64(),
            "prediction recorded after choice {step}"
        );
    }
    ensure!(session["status"] == "Complete", "session not complete");
    Ok(format!(
        "3 collections round-trip, concurrent PUTs {statuses:?}, 12 scripted choices (accuracy {})",
        session["accuracy_so_far"]
    ))
}

// ---- runner --------------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|panic| {
        let msg =
            panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    })
}

fn main() -> ExitCode {
    let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    let (transfer, soundness) = catch_unwind(bite_transfer).unwrap_or_else(|_| {
        let e = Err("panicked".to_owned());
        (e.clone(), e)
    });
    let results: Vec<(&str, Outcome)> = vec![
        ("bite-transfer policy pattern", transfer),
        ("trajectory soundness", soundness),
        ("candidate ordering", guarded(candidate_ordering)),
        ("HMM correctness", guarded(hmm_correctness)),
        ("bite-sequencing ordering", guarded(bite_sequencing)),
        ("arm comparison table", guarded(arm_comparison)),
        ("workflow suite", guarded(workflow_suite)),
        ("end-to-end demo", guarded(end_to_end_demo)),
        ("service contract", guarded(|| runtime.block_on(service_contract()))),
    ];
    let mut failures = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failures += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failures, results.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
