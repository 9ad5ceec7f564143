use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ler_core::credential::{CredentialClass, VerifiableCredential};
use ler_core::fixtures;
use ler_core::skills::SAMPLE_TAXONOMY_TSV;
use serde_json::Value;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("ler.json"), br#"{"data_dir":"data"}"#).unwrap();
        fs::write(dir.path().join("transcript.json"), fixtures::TRANSCRIPT_JSON).unwrap();
        fs::write(dir.path().join("java.json"), fixtures::JAVA_JOB_JSON).unwrap();
        fs::write(dir.path().join("onet.tsv"), SAMPLE_TAXONOMY_TSV).unwrap();
        let syllabi = dir.path().join("syllabi");
        fs::create_dir(&syllabi).unwrap();
        for s in fixtures::syllabi() {
            fs::write(syllabi.join(format!("{}.txt", s.course_id)), s.text).unwrap();
        }
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn ler(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ler"))
            .args(args)
            .current_dir(self.dir.path())
            .env("LER_CONFIG", self.path("ler.json"))
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.ler(args);
        assert!(
            out.status.success(),
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn setup_keys(&self) {
        for role in ["issuer", "holder", "verifier"] {
            self.ok(&["keygen", "--role", role]);
            self.ok(&["did", "register", "--role", role]);
        }
    }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let ws = Workspace::new();
    let out = ws.ler(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(ws.ler(&["derive"]).status.code(), Some(2), "missing required flags");
    assert_eq!(ws.ler(&["--help"]).status.code(), Some(0));
}

#[test]
fn operational_failures_exit_1() {
    let ws = Workspace::new();
    let out = ws.ler(&["wallet", "list"]);
    assert_eq!(out.status.code(), Some(1), "no holder key yet");
    assert!(String::from_utf8_lossy(&out.stderr).contains("keygen"));

    fs::write(ws.path("bad.json"), br#"{"freshness_window":0}"#).unwrap();
    let bad = ws.path("bad.json");
    let out = ws.ler(&["--config", bad.to_str().unwrap(), "keygen", "--role", "holder"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn keygen_is_stable_unless_forced() {
    let ws = Workspace::new();
    let a = ws.ok(&["keygen", "--role", "holder"]);
    let b = ws.ok(&["keygen", "--role", "holder"]);
    assert_eq!(a, b);
    assert!(a.starts_with("did:ler:"));
    let c = ws.ok(&["keygen", "--role", "holder", "--force"]);
    assert_ne!(a, c);
}

#[test]
fn derive_writes_a_derivative_credential_file() {
    let ws = Workspace::new();
    ws.setup_keys();
    ws.ok(&["issue", "--transcript", "transcript.json", "--out", "bundle.json"]);
    ws.ok(&["wallet", "import", "bundle.json"]);
    let out = ws.ok(&[
        "derive", "--transcript", "transcript.json", "--syllabi", "syllabi/", "--taxonomy", "onet.tsv",
        "--out", "skills.json",
    ]);
    assert!(out.contains("wrote"));
    let vc: VerifiableCredential = serde_json::from_value(read_json(&ws.path("skills.json"))).unwrap();
    assert_eq!(vc.class(), CredentialClass::Derivative);
    assert!(vc.body.provenance.is_some());
    assert_eq!(vc.claims.iter().filter(|c| c.key.starts_with("skill.")).count(), 10);

    let listed: Value = serde_json::from_str(&ws.ok(&["--format", "canonical", "wallet", "list"])).unwrap();
    assert_eq!(listed.as_array().unwrap().len(), 2);
}

#[test]
fn present_and_verify_round_trip_with_replay_rejected() {
    let ws = Workspace::new();
    ws.setup_keys();
    ws.ok(&["issue", "--transcript", "transcript.json", "--out", "bundle.json"]);
    ws.ok(&["wallet", "import", "bundle.json"]);
    ws.ok(&["derive", "--transcript", "transcript.json", "--syllabi", "syllabi", "--out", "skills.json"]);
    ws.ok(&["challenge", "--job", "java.json", "--out", "challenge.json"]);
    ws.ok(&["present", "--challenge", "challenge.json", "--out", "vp.json"]);

    let verdict: Value = serde_json::from_str(&ws.ok(&["--format", "canonical", "verify", "--presentation", "vp.json"])).unwrap();
    assert_eq!(verdict["credential_class"], "derivative");
    assert!(verdict["response"]["decision"].is_boolean());

    let again = ws.ler(&["verify", "--presentation", "vp.json"]);
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("BadNonce"));
}

#[test]
fn revoked_derivative_cannot_be_presented() {
    let ws = Workspace::new();
    ws.setup_keys();
    ws.ok(&["derive", "--transcript", "transcript.json", "--syllabi", "syllabi", "--out", "skills.json"]);
    let id = read_json(&ws.path("skills.json"))["id"].as_str().unwrap().to_string();
    ws.ok(&["revoke", &id, "--derivative"]);
    ws.ok(&["challenge", "--job", "java.json", "--out", "challenge.json"]);
    let out = ws.ler(&["present", "--challenge", "challenge.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn issuer_revocation_lands_in_the_status_list() {
    let ws = Workspace::new();
    ws.setup_keys();
    ws.ok(&["issue", "--transcript", "transcript.json", "--out", "bundle.json"]);
    let id = read_json(&ws.path("bundle.json"))["credential"]["id"]
        .as_str()
        .unwrap()
        .to_string();
    ws.ok(&["revoke", &id]);
    let list = read_json(&ws.path("data/issuer/status.json"));
    assert_eq!(list["entries"][&id]["revoked"], true);
}

#[test]
fn policy_set_is_persisted() {
    let ws = Workspace::new();
    ws.setup_keys();
    ws.ok(&["wallet", "policy", "set", "--class", "institutional", "--allow", "gpa", "--allow", "course.*"]);
    let wallet = read_json(&ws.path("data/holder/wallet.json"));
    assert_eq!(
        wallet["wallet"]["policies"]["institutional"]["allowed_claims"],
        serde_json::json!(["course.*", "gpa"])
    );
}

#[test]
fn audit_boi_skill_only_prints_zero() {
    let ws = Workspace::new();
    let out = ws.ok(&["audit", "boi", "--matcher", "skill-only", "--trials", "10000"]);
    assert_eq!(out.trim(), "0.0");
    let biased: f64 = ws
        .ok(&["audit", "boi", "--matcher", "institution-bump", "--trials", "2000"])
        .trim()
        .parse()
        .unwrap();
    assert!(biased > 0.0);
}

#[test]
fn match_scores_named_skills() {
    let ws = Workspace::new();
    let mut args = vec!["--format", "canonical", "match", "--job", "java.json"];
    for s in fixtures::CANDIDATE_SKILLS {
        args.extend(["--skill", s]);
    }
    let report: Value = serde_json::from_str(&ws.ok(&args)).unwrap();
    assert_eq!(report["overlap"]["value"], 0.8);
    assert_eq!(report["verified"], false);
}

#[test]
fn did_show_resolves_registered_documents() {
    let ws = Workspace::new();
    ws.setup_keys();
    let doc: Value = serde_json::from_str(&ws.ok(&["did", "show", "--role", "issuer"])).unwrap();
    assert_eq!(doc["version"], 1);
    let did = doc["did"].as_str().unwrap();
    assert_eq!(ws.ok(&["did", "show", "--did", did]).trim(), serde_json::to_string(&doc).unwrap());
}
