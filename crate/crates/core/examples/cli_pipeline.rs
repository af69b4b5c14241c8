//! Drive the full two-phase pipeline through the command-line interface
//! into a scratch directory, the same way the `wsgrpo` binary would.
//!
//! ```bash
//! cargo run --release --example cli_pipeline
//! ```

use std::path::Path;

fn wsgrpo(out_dir: &Path, args: &[&str]) -> i32 {
    let out = format!("--paths.out_dir={}", out_dir.display());
    let argv = ["wsgrpo", "--optim.iterations=50", out.as_str()].into_iter().chain(args.iter().copied());
    wsgrpo::cli::run(argv)
}

pub fn run_example() -> wsgrpo::Result<()> {
    let dir = std::env::temp_dir().join(format!("wsgrpo-cli-pipeline-{}", std::process::id()));
    let steps: [&[&str]; 5] = [
        &["gen"],
        &["train-pref"],
        &["--optim.variant=WSGRPO", "train-policy"],
        &["analyze"],
        &["bound", "--theorem", "1"],
    ];
    for args in steps {
        let code = wsgrpo(&dir, args);
        if code != 0 {
            return Err(wsgrpo::Error::InvalidHyperParams(format!("{args:?} exited with {code}")));
        }
    }
    let policy = dir.join("policy.json");
    wsgrpo(&dir, &["eval", "--policy", policy.to_str().expect("utf-8 temp path")]);
    for entry in std::fs::read_dir(&dir)? {
        let entry = entry?;
        println!("{:>10}  {}", entry.metadata()?.len(), entry.file_name().to_string_lossy());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> wsgrpo::Result<()> {
    run_example()
}
