//! End-to-end exercise of the `pacsim` binary: provision, serve, attest,
//! tamper, delta, history, decode, and the documented exit codes.

use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

const BIN: &str = env!("CARGO_BIN_EXE_pacsim");

fn pacsim(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("pacsim runs")
}

fn assert_exit(output: &Output, code: i32, context: &str) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "{context}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

struct Prover(Child);

impl Drop for Prover {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_prover(device: &Path, endpoint: &str, dir: &Path) -> Prover {
    let prover = Prover(
        Command::new(BIN)
            .args(["serve", "--device"])
            .arg(device)
            .args(["--endpoint", endpoint])
            .current_dir(dir)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .expect("prover spawns"),
    );
    for _ in 0..100 {
        if TcpStream::connect(endpoint).is_ok() {
            return prover;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    panic!("prover did not come up on {endpoint}");
}

#[test]
fn full_cli_walkthrough() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let device_cfg = dir.join("device.toml");
    std::fs::copy(
        concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../configs/device-demo.toml"
        ),
        &device_cfg,
    )
    .unwrap();

    // provision (prints the device id on the first line)
    let out = pacsim(
        &[
            "gen-ground-truth",
            "--device",
            "device.toml",
            "--out",
            "store",
        ],
        dir,
    );
    assert_exit(&out, 0, "gen-ground-truth");
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(stdout.contains("device id"), "{stdout}");

    // second provisioning of the same device must refuse (append-only store)
    let out = pacsim(
        &[
            "gen-ground-truth",
            "--device",
            "device.toml",
            "--out",
            "store",
        ],
        dir,
    );
    assert_exit(&out, 1, "duplicate gen-ground-truth");

    let endpoint = "127.0.0.1:17641";
    {
        let _prover = spawn_prover(&device_cfg, endpoint, dir);

        // untouched device: UNCHANGED, exit 0, both approaches
        for approach in ["sig", "comp"] {
            let out = pacsim(
                &[
                    "attest",
                    "--store",
                    "store",
                    "--endpoint",
                    endpoint,
                    "--approach",
                    approach,
                ],
                dir,
            );
            assert_exit(&out, 0, "attest untouched");
            assert!(String::from_utf8_lossy(&out.stdout).contains("UNCHANGED"));
        }

        // nonce mode also passes against a live prover
        let out = pacsim(
            &[
                "attest",
                "--store",
                "store",
                "--endpoint",
                endpoint,
                "--approach",
                "comp",
                "--nonce",
                "--json",
            ],
            dir,
        );
        assert_exit(&out, 0, "attest with nonce");
        assert!(String::from_utf8_lossy(&out.stdout).contains("\"overall\":\"UNCHANGED\""));
    }

    // tamper pins 2 and 4 (the demo config has both at level 0)
    let out = pacsim(
        &[
            "tamper",
            "--device",
            "device.toml",
            "--gpio",
            "2=1",
            "--gpio",
            "4=1",
        ],
        dir,
    );
    assert_exit(&out, 0, "tamper gpio");

    let endpoint = "127.0.0.1:17642";
    {
        let _prover = spawn_prover(&device_cfg, endpoint, dir);

        let out = pacsim(
            &[
                "attest",
                "--store",
                "store",
                "--endpoint",
                endpoint,
                "--approach",
                "sig",
            ],
            dir,
        );
        assert_exit(&out, 2, "attest after gpio tamper (sig)");
        assert!(String::from_utf8_lossy(&out.stdout).contains("signature mismatch"));

        let out = pacsim(
            &[
                "attest",
                "--store",
                "store",
                "--endpoint",
                endpoint,
                "--approach",
                "comp",
            ],
            dir,
        );
        assert_exit(&out, 2, "attest after gpio tamper (comp)");
        assert!(String::from_utf8_lossy(&out.stdout).contains("class=000e0000"));

        // record the change as a delta certificate
        let out = pacsim(&["delta", "--store", "store", "--endpoint", endpoint], dir);
        assert_exit(&out, 0, "delta issuance");
        assert!(String::from_utf8_lossy(&out.stdout).contains("delta serial"));

        // immediately re-running finds nothing new
        let out = pacsim(&["delta", "--store", "store", "--endpoint", endpoint], dir);
        assert_exit(&out, 0, "delta idempotent");
        assert!(String::from_utf8_lossy(&out.stdout).contains("no changes"));
    }

    // history lists ground truth first, then the appended certificates
    let out = pacsim(&["history", "--store", "store"], dir);
    assert_exit(&out, 0, "history");
    let history = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(history.contains("[0000] base (ground truth)"), "{history}");
    assert!(history.contains("delta"), "{history}");

    // decode prints the component attributes and the holder digest
    let gt_path = {
        let device_dir = std::fs::read_dir(dir.join("store"))
            .unwrap()
            .next()
            .unwrap()
            .unwrap()
            .path();
        let mut certs: Vec<_> = device_dir
            .join("certs")
            .read_dir()
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        certs.sort();
        certs.into_iter().next().unwrap() // index 0000 is the ground truth
    };
    let out = pacsim(&["decode", gt_path.to_str().unwrap()], dir);
    assert_exit(&out, 0, "decode");
    let decoded = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(decoded.contains("holder EK     : sha256:"), "{decoded}");
    assert_eq!(decoded.matches("class=").count(), 10, "{decoded}");

    // remaining tamper paths rewrite the config and change the measurement
    let section_file = dir.join("section.hex");
    std::fs::write(&section_file, hex::encode([0xEFu8; 32])).unwrap();
    let out = pacsim(
        &[
            "tamper",
            "--device",
            "device.toml",
            "--firmware",
            "3=deadbeef",
            "--elf-append",
            "section.hex",
            "--identity",
            "02:01:02:03:04:05,02:01:02:03:04:06,02:01:02:03:04:07,99",
        ],
        dir,
    );
    assert_exit(&out, 0, "combined tamper");
    let rewritten = std::fs::read_to_string(&device_cfg).unwrap();
    assert!(rewritten.contains("chip_id = 99"), "{rewritten}");
    assert!(rewritten.contains("deadbeef"), "{rewritten}");

    let endpoint = "127.0.0.1:17644";
    {
        let _prover = spawn_prover(&device_cfg, endpoint, dir);
        let out = pacsim(
            &[
                "attest",
                "--store",
                "store",
                "--endpoint",
                endpoint,
                "--approach",
                "comp",
            ],
            dir,
        );
        assert_exit(&out, 2, "attest after combined tamper");
        let report = String::from_utf8_lossy(&out.stdout).to_string();
        for class in [
            "00010008", "00090000", "00090003", "00090004", "00130000", "00130003",
        ] {
            assert!(
                report.contains(&format!("class={class}")),
                "{class} missing:\n{report}"
            );
        }
    }

    // the store root can come from the environment
    let out = Command::new(BIN)
        .args(["history"])
        .env("PACSIM_STORE", dir.join("store"))
        .current_dir(dir)
        .output()
        .unwrap();
    assert_exit(&out, 0, "history via PACSIM_STORE");

    // exit codes: usage errors and I/O errors are distinct
    let out = pacsim(&["attest", "--store", "store"], dir);
    assert_exit(&out, 64, "missing required flag");
    let out = pacsim(&["decode", "does-not-exist.der"], dir);
    assert_exit(&out, 74, "missing file");

    // empty store: empty history
    let out = pacsim(&["history", "--store", "empty-store"], dir);
    assert_exit(&out, 0, "empty store history");
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 certificates"));
}

#[test]
fn identity_clone_with_foreign_ek_fails_attestation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let device_cfg = dir.join("device.toml");
    std::fs::copy(
        concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../configs/device-demo.toml"
        ),
        &device_cfg,
    )
    .unwrap();

    let out = pacsim(
        &[
            "gen-ground-truth",
            "--device",
            "device.toml",
            "--out",
            "store",
        ],
        dir,
    );
    assert_exit(&out, 0, "gen-ground-truth");

    // counterfeit: same identity, different secure element seed
    let clone_cfg = dir.join("clone.toml");
    std::fs::copy(&device_cfg, &clone_cfg).unwrap();
    let out = pacsim(
        &[
            "tamper",
            "--device",
            "clone.toml",
            "--ek-seed",
            "00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff",
        ],
        dir,
    );
    assert_exit(&out, 0, "replace clone seed");

    let endpoint = "127.0.0.1:17643";
    let _prover = spawn_prover(&clone_cfg, endpoint, dir);
    let out = pacsim(
        &[
            "attest",
            "--store",
            "store",
            "--endpoint",
            endpoint,
            "--approach",
            "comp",
        ],
        dir,
    );
    assert_exit(&out, 1, "counterfeit attest");
    assert!(String::from_utf8_lossy(&out.stderr).contains("EK binding invalid"));
}
