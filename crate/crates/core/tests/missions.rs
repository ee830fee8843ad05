use std::path::PathBuf;

use rover_esb::deployment::Deployment;
use rover_esb::esb::EsbConfig;
use rover_esb::rover::{run_mission, Mission};
use rover_esb::services::ServiceKind;
use rover_esb::Policy;

fn missions_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../missions")
}

async fn deployment() -> (tempfile::TempDir, Deployment) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = EsbConfig::ephemeral(dir.path().join("images"));
    let d = Deployment::start(cfg, &ServiceKind::ALL).await.unwrap();
    (dir, d)
}

#[tokio::test]
async fn shipped_missions_pass() {
    let (_dir, d) = deployment().await;
    for name in ["paper_trace.mission", "survey.mission"] {
        let mission = Mission::load(&missions_dir().join(name)).unwrap();
        let report = run_mission(&mission, &d.rover("rover-1"), Policy::default()).await;
        assert!(report.passed, "{name}\n{report}");
        assert_eq!(report.steps.len(), mission.steps.len());
    }
}

#[tokio::test]
async fn empty_mission_passes() {
    let (_dir, d) = deployment().await;
    let mission = Mission::parse("# nothing to do\n\n", None).unwrap();
    let report = run_mission(&mission, &d.rover("rover-1"), Policy::default()).await;
    assert!(report.passed);
    assert!(report.steps.is_empty());
}

#[tokio::test]
async fn wrong_expectation_fails_and_names_its_line() {
    let (_dir, d) = deployment().await;
    let text = "discover\nbind\ninvoke AnalyzeParticlesSpeed mass=5 weight=10\nexpect velocity ~= 99 0.001\n";
    let mission = Mission::parse(text, None).unwrap();
    let report = run_mission(&mission, &d.rover("rover-1"), Policy::default()).await;
    assert!(!report.passed);
    let failures: Vec<_> = report.failures().collect();
    assert_eq!(failures.len(), 1);
    assert_eq!(failures[0].line, 4);
    assert!(failures[0].detail.contains("11.332"), "{}", failures[0].detail);
    assert!(report.to_string().contains("FAIL line   4"), "{report}");
}

#[tokio::test]
async fn unexpected_fault_fails_the_invoke() {
    let (_dir, d) = deployment().await;
    let mission = Mission::parse("bind\ninvoke AnalyzeParticlesSpeed mass=0 weight=1\nexpect ok\n", None).unwrap();
    let report = run_mission(&mission, &d.rover("rover-1"), Policy::default()).await;
    assert!(!report.passed);
    assert!(report.failures().any(|s| s.line == 2 && s.detail.contains("VALIDATION")), "{report}");
}

#[tokio::test]
async fn invoking_without_bind_is_rejected() {
    let (_dir, d) = deployment().await;
    let mission = Mission::parse("invoke MeasurePressure\nexpect fault AUTH_FAILED\n", None).unwrap();
    let report = run_mission(&mission, &d.rover("rover-1"), Policy::default()).await;
    assert!(report.passed, "{report}");
}

#[test]
fn malformed_scripts_report_the_line() {
    let cases = [
        ("bind\nexpect ok\n", 2),
        ("bind\nlaunch probe\n", 2),
        ("invoke Op x\n", 1),
        ("invoke Op n=1\nexpect n ~= abc\n", 2),
        ("invoke Op n=@does-not-exist.ppm\n", 1),
        ("\n\nexpect fault NOT_A_CODE\n", 3),
    ];
    for (text, line) in cases {
        let err = Mission::parse(text, Some(&missions_dir())).unwrap_err();
        assert_eq!(err.line, line, "{text:?}: {err}");
    }
}
