mod common;

use std::process::Command;

use common::Sandbox;

fn plr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plr"))
}

#[test]
fn stage_output_and_exit_codes() {
    let sb = Sandbox::new();
    let cfg = sb.config_file();

    let out = plr().args(["plr-train", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plr pretrain-source"));

    let out = plr().args(["pretrain-source", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("pretrain-source seed=0 hash="));

    let bad = sb.dir.path().join("bad.cfg");
    std::fs::write(&bad, "source = mnist\ntarget = mnist\nwidth = 3\n").unwrap();
    let out = plr().args(["evaluate", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = plr().args(["pretrain-source", "--config"]).arg(sb.dir.path().join("nope.cfg")).output().unwrap();
    assert_ne!(out.status.code(), Some(0));

    let out = plr().args(["sideways", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tampered_run_directory_is_refused() {
    let sb = Sandbox::new();
    let cfg = sb.config();
    let root = sb.out().join(cfg.config_hash());
    std::fs::create_dir_all(&root).unwrap();
    std::fs::write(root.join("config.txt"), "seed=1\n").unwrap();
    let out = plr().args(["pretrain-source", "--config"]).arg(sb.config_file()).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn data_root_comes_from_the_environment() {
    let sb = Sandbox::new();
    let text = sb
        .config_text()
        .replace(&sb.data().display().to_string(), "/nonexistent/plr-data");
    let cfg = sb.dir.path().join("elsewhere.cfg");
    std::fs::write(&cfg, text).unwrap();

    let out = plr().args(["pretrain-source", "--config"]).arg(&cfg).env_remove("PLR_DATA_ROOT").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fetch_data.sh"));

    let out = plr()
        .args(["pretrain-source", "--config"])
        .arg(&cfg)
        .env("PLR_DATA_ROOT", sb.data())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn out_flag_overrides_the_configured_directory() {
    let sb = Sandbox::new();
    let other = sb.dir.path().join("elsewhere");
    let out = plr()
        .args(["pretrain-source", "--config"])
        .arg(sb.config_file())
        .arg("--out")
        .arg(&other)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(other.join(sb.config().config_hash()).join("pretrain-source").is_dir());
    assert!(!sb.out().exists());
}
