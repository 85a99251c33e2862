//! Local sandboxed execution and pluggable remote provisioning.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxLimits {
    pub cpu_seconds: u64,
    pub wall_seconds: u64,
    pub max_file_bytes: u64,
    pub max_output_bytes: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        Self {
            cpu_seconds: 60,
            wall_seconds: 120,
            max_file_bytes: 64 << 20,
            max_output_bytes: 64 << 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeOutput {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
}

fn read_bounded(mut r: impl Read + Send + 'static, limit: usize) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        // Keep draining past the limit so the child never blocks on a full pipe.
        while let Ok(n) = r.read(&mut buf) {
            if n == 0 {
                break;
            }
            let room = limit.saturating_sub(kept.len());
            kept.extend_from_slice(&buf[..n.min(room)]);
        }
        String::from_utf8_lossy(&kept).into_owned()
    })
}

/// Run one argv in a fresh temporary directory with a cleared environment,
/// CPU and file-size rlimits, and a wall-clock timeout.
pub fn run_local(argv: &[String], limits: &SandboxLimits) -> Result<ProbeOutput, String> {
    let (program, args) = argv.split_first().ok_or("empty argv")?;
    let workdir = tempfile::tempdir().map_err(|e| format!("tempdir: {e}"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(workdir.path())
        .env_clear()
        .env("PATH", "/usr/bin:/bin")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let cpu = limits.cpu_seconds;
    let fsize = limits.max_file_bytes;
    // SAFETY: setrlimit is async-signal-safe and touches no parent state.
    unsafe {
        cmd.pre_exec(move || {
            let cpu_lim = libc::rlimit {
                rlim_cur: cpu as libc::rlim_t,
                rlim_max: cpu as libc::rlim_t,
            };
            let fs_lim = libc::rlimit {
                rlim_cur: fsize as libc::rlim_t,
                rlim_max: fsize as libc::rlim_t,
            };
            if libc::setrlimit(libc::RLIMIT_CPU, &cpu_lim) != 0
                || libc::setrlimit(libc::RLIMIT_FSIZE, &fs_lim) != 0
            {
                return Err(std::io::Error::last_os_error());
            }
            Ok(())
        });
    }
    let mut child = cmd.spawn().map_err(|e| format!("spawn {program}: {e}"))?;
    let out = read_bounded(child.stdout.take().expect("piped"), limits.max_output_bytes);
    let err = read_bounded(child.stderr.take().expect("piped"), limits.max_output_bytes);
    let deadline = Instant::now() + Duration::from_secs(limits.wall_seconds);
    let mut timed_out = false;
    let status = loop {
        match child.try_wait().map_err(|e| e.to_string())? {
            Some(status) => break Some(status),
            None if Instant::now() >= deadline => {
                timed_out = true;
                let _ = child.kill();
                break child.wait().ok();
            }
            None => thread::sleep(Duration::from_millis(5)),
        }
    };
    Ok(ProbeOutput {
        exit_code: status.and_then(|s| s.code()),
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        timed_out,
    })
}

/// Runs probes in an environment described by an opaque descriptor.
pub trait Provisioner: Send + Sync {
    fn run(
        &self,
        descriptor: &str,
        probes: &[Vec<String>],
        limits: &SandboxLimits,
    ) -> Result<Vec<ProbeOutput>, String>;

    /// Whether this provisioner can ever succeed. Noop cannot.
    fn available(&self) -> bool {
        true
    }
}

#[derive(Debug, Default, Clone)]
pub struct NoopProvisioner;

impl Provisioner for NoopProvisioner {
    fn run(&self, _: &str, _: &[Vec<String>], _: &SandboxLimits) -> Result<Vec<ProbeOutput>, String> {
        Err("no provisioner configured".into())
    }

    fn available(&self) -> bool {
        false
    }
}

/// Runs each probe as `<runtime> run --rm --network none <image> argv...`.
/// The descriptor is the image reference, optionally written as `image=<ref>`.
#[derive(Debug, Clone)]
pub struct ContainerProvisioner {
    pub runtime: String,
}

impl Default for ContainerProvisioner {
    fn default() -> Self {
        Self {
            runtime: "docker".into(),
        }
    }
}

impl Provisioner for ContainerProvisioner {
    fn run(
        &self,
        descriptor: &str,
        probes: &[Vec<String>],
        limits: &SandboxLimits,
    ) -> Result<Vec<ProbeOutput>, String> {
        let image = descriptor.trim();
        let image = image.strip_prefix("image=").unwrap_or(image);
        if image.is_empty() {
            return Err("empty image reference".into());
        }
        let runtime = which(&self.runtime).ok_or_else(|| format!("{} not found", self.runtime))?;
        probes
            .iter()
            .map(|argv| {
                let mut full = vec![
                    runtime.clone(),
                    "run".into(),
                    "--rm".into(),
                    "--network".into(),
                    "none".into(),
                    image.to_string(),
                ];
                full.extend(argv.iter().cloned());
                run_local(&full, limits)
            })
            .collect()
    }
}

fn which(program: &str) -> Option<String> {
    if program.contains('/') {
        return std::path::Path::new(program).exists().then(|| program.to_string());
    }
    let path = std::env::var("PATH").unwrap_or_default();
    path.split(':')
        .map(|dir| std::path::Path::new(dir).join(program))
        .find(|p| p.is_file())
        .map(|p| p.to_string_lossy().into_owned())
}
