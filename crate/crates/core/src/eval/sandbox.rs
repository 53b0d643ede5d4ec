//! Runs untrusted Python in a child process with time, memory and network limits.
//!
//! Isolation layers, applied to every execution:
//! - own process group, killed as a whole on timeout;
//! - `RLIMIT_AS`, `RLIMIT_CPU` and `RLIMIT_FSIZE` set before `exec`;
//! - a fresh user+network namespace when the kernel allows it (no interfaces,
//!   not even loopback);
//! - a Python prelude that replaces the socket constructors, for hosts where
//!   namespaces are unavailable;
//! - interpreter isolated mode (`-I`), empty environment, scratch working dir.

use std::io::Read;
use std::net::TcpListener;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PRELUDE: &str = r#"
def __sandbox_block():
    import socket as _s, _socket as _ls
    def _denied(*args, **kwargs):
        raise OSError("network access is disabled in this sandbox")
    class _DeniedSocket(_s.socket):
        def __init__(self, *args, **kwargs):
            _denied()
    for _mod in (_s, _ls):
        _mod.socket = _DeniedSocket if _mod is _s else _denied
        for _name in ("create_connection", "create_server", "socketpair", "fromfd", "getaddrinfo"):
            if hasattr(_mod, _name):
                setattr(_mod, _name, _denied)
__sandbox_block()
del __sandbox_block
"#;

const OUTPUT_CAP: usize = 64 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SandboxError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "detail", rename_all = "snake_case")]
pub enum ExecOutcome {
    Pass,
    Fail(String),
    Timeout,
    Crash(String),
}

impl ExecOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, ExecOutcome::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub python: PathBuf,
    pub timeout_secs: f64,
    pub memory_cap_bytes: u64,
    pub max_file_bytes: u64,
    pub isolate_network: bool,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            python: PathBuf::from("python3"),
            timeout_secs: 10.0,
            memory_cap_bytes: 1 << 30,
            max_file_bytes: 16 << 20,
            isolate_network: true,
        }
    }
}

impl SandboxConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_secs = timeout.as_secs_f64();
        self
    }
}

fn limit(resource: libc::__rlimit_resource_t, value: u64) {
    let lim = libc::rlimit { rlim_cur: value as libc::rlim_t, rlim_max: value as libc::rlim_t };
    // SAFETY: plain syscall on a stack value; failure leaves the limit unset.
    unsafe {
        libc::setrlimit(resource, &lim);
    }
}

fn spawn(program_path: &std::path::Path, workdir: &std::path::Path, cfg: &SandboxConfig) -> std::io::Result<Child> {
    let mut cmd = Command::new(&cfg.python);
    cmd.arg("-I")
        .arg("-B")
        .arg(program_path)
        .current_dir(workdir)
        .env_clear()
        .env("PATH", "/usr/bin:/bin")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mem = cfg.memory_cap_bytes;
    let fsize = cfg.max_file_bytes;
    let cpu = cfg.timeout().as_secs() + 1;
    let isolate = cfg.isolate_network;
    // SAFETY: only async-signal-safe libc calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            libc::setpgid(0, 0);
            limit(libc::RLIMIT_AS, mem);
            limit(libc::RLIMIT_FSIZE, fsize);
            limit(libc::RLIMIT_CPU, cpu);
            if isolate {
                // Best effort; unprivileged namespaces are often disabled in containers.
                libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET);
            }
            Ok(())
        });
    }
    cmd.spawn()
}

fn drain<R: Read + Send + 'static>(src: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = src {
            let mut chunk = [0u8; 8192];
            while let Ok(n) = r.read(&mut chunk) {
                if n == 0 {
                    break;
                }
                if buf.len() < OUTPUT_CAP {
                    buf.extend_from_slice(&chunk[..n.min(OUTPUT_CAP - buf.len())]);
                }
            }
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn kill_group(child: &mut Child) {
    // SAFETY: signalling our own child's process group.
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
    let _ = child.kill();
}

fn last_line(text: &str) -> String {
    text.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("").trim().to_string()
}

/// Runs a complete Python program. `Pass` iff it exits with status 0 before
/// the timeout.
pub fn execute_program(program: &str, cfg: &SandboxConfig) -> Result<ExecOutcome, SandboxError> {
    let dir = tempfile::tempdir().map_err(|e| SandboxError::SandboxUnavailable(format!("scratch dir: {e}")))?;
    let path = dir.path().join("candidate.py");
    std::fs::write(&path, format!("{PRELUDE}\n{program}\n"))
        .map_err(|e| SandboxError::SandboxUnavailable(format!("write program: {e}")))?;
    let mut child = spawn(&path, dir.path(), cfg)
        .map_err(|e| SandboxError::SandboxUnavailable(format!("{}: {e}", cfg.python.display())))?;
    let out = drain(child.stdout.take());
    let err = drain(child.stderr.take());
    let deadline = Instant::now() + cfg.timeout();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => {
                kill_group(&mut child);
                let _ = child.wait();
                break None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                kill_group(&mut child);
                return Err(SandboxError::SandboxUnavailable(format!("wait: {e}")));
            }
        }
    };
    // Reap anything the candidate left behind in its group.
    // SAFETY: as in kill_group.
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
    let _stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    let Some(status) = status else {
        return Ok(ExecOutcome::Timeout);
    };
    Ok(match (status.code(), status.signal()) {
        (Some(0), _) => ExecOutcome::Pass,
        (Some(code), _) => {
            let line = last_line(&stderr);
            ExecOutcome::Fail(if line.is_empty() { format!("exit status {code}") } else { line })
        }
        (None, Some(libc::SIGXCPU)) | (None, Some(libc::SIGKILL)) => ExecOutcome::Timeout,
        (None, Some(sig)) => ExecOutcome::Crash(format!("killed by signal {sig}")),
        (None, None) => ExecOutcome::Crash("unknown termination".into()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub runs_python: bool,
    pub network_blocked: bool,
    pub timeout_enforced: bool,
}

/// Checks the sandbox contract on this host: a trivial program passes, a
/// connection to a live local listener is refused, and a busy loop is killed.
pub fn self_test(cfg: &SandboxConfig) -> Result<SelfTestReport, SandboxError> {
    let runs_python = execute_program("assert 1 + 1 == 2", cfg)?.passed();
    let listener = TcpListener::bind("127.0.0.1:0")
        .map_err(|e| SandboxError::SandboxUnavailable(format!("self-test listener: {e}")))?;
    listener.set_nonblocking(true).ok();
    let port = listener.local_addr().map(|a| a.port()).unwrap_or(0);
    let probe = format!(
        "import socket\ns = socket.create_connection(('127.0.0.1', {port}), timeout=2)\ns.sendall(b'x')\n"
    );
    let connected = execute_program(&probe, cfg)?.passed();
    let accepted = listener.accept().is_ok();
    let short = cfg.clone().with_timeout(Duration::from_millis(500));
    let timeout_enforced = execute_program("while True:\n    pass", &short)? == ExecOutcome::Timeout;
    Ok(SelfTestReport {
        runs_python,
        network_blocked: !connected && !accepted,
        timeout_enforced,
    })
}
