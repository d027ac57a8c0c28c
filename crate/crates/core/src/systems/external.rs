//! Black-box simulation through an external command.
//!
//! For every simulation the adapter writes a JSON request file, runs the command with the
//! request path appended as its last argument, and parses standard output as a trace CSV (see
//! [`TimedStateSequence::from_csv_str`]). The request looks like
//!
//! ```json
//! {"test_id": 3, "h0": [0.5, 0.5], "control_times": [0.0, 5.0], "control_values": [[0.1], [0.2]],
//!  "interpolation": "constant", "T": 10.0, "J": 5, "dt": 0.05}
//! ```

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::input::{InputSignal, Interpolation};
use super::SystemError;
use crate::tss::TimedStateSequence;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalProcess {
    /// Program followed by its fixed arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    /// Working directory for the command; the current directory when absent.
    #[serde(default)]
    pub workdir: Option<PathBuf>,
}

fn default_timeout_secs() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Request {
    pub test_id: u64,
    pub h0: Vec<f64>,
    pub control_times: Vec<f64>,
    pub control_values: Vec<Vec<f64>>,
    pub interpolation: Interpolation,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "J")]
    pub max_jumps: u32,
    pub dt: f64,
}

impl ExternalProcess {
    pub fn new(command: Vec<String>) -> Self {
        Self { command, timeout_secs: default_timeout_secs(), workdir: None }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_secs = timeout.as_secs_f64();
        self
    }

    pub fn simulate(
        &self,
        test_id: u64,
        h0: &[f64],
        input: &InputSignal,
        horizon: f64,
        max_jumps: u32,
        dt: f64,
    ) -> Result<TimedStateSequence, SystemError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| SystemError::External { test_id, msg: "empty command".into() })?;
        let request = Request {
            test_id,
            h0: h0.to_vec(),
            control_times: input.times.clone(),
            control_values: input.values.clone(),
            interpolation: input.interpolation,
            horizon,
            max_jumps,
            dt,
        };
        let io = |e: std::io::Error| SystemError::External { test_id, msg: e.to_string() };
        let mut file = tempfile::Builder::new().prefix("request-").suffix(".json").tempfile().map_err(io)?;
        serde_json::to_writer(&mut file, &request).map_err(|e| SystemError::External { test_id, msg: e.to_string() })?;
        let mut cmd = Command::new(program);
        cmd.args(args).arg(file.path()).stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
        if let Some(dir) = &self.workdir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(io)?;
        let mut out = child.stdout.take().expect("piped stdout");
        let mut err = child.stderr.take().expect("piped stderr");
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            out.read_to_string(&mut s).map(|_| s)
        });
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = err.read_to_string(&mut s);
            s
        });
        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout_secs);
        let status = loop {
            if let Some(status) = child.try_wait().map_err(io)? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(SystemError::Timeout { test_id, secs: self.timeout_secs });
            }
            thread::sleep(Duration::from_millis(5));
        };
        let stdout = out_reader.join().expect("stdout reader").map_err(io)?;
        let stderr = err_reader.join().expect("stderr reader");
        if !status.success() {
            return Err(SystemError::External {
                test_id,
                msg: format!("command exited with {status}: {}", stderr.trim()),
            });
        }
        TimedStateSequence::from_csv_str(&stdout)
            .map_err(|e| SystemError::External { test_id, msg: format!("malformed trace: {e}") })
    }
}
