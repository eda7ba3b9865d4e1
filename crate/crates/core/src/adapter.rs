//! Uniform interface to models under test.
//!
//! External models are driven through files: the adapter writes the input
//! MoCap as MOCAP-CSV, runs the command template with `{input}` and `{output}`
//! replaced by (shell-quoted) paths in a fresh temporary directory, and reads
//! the SPECTRO-CSV the command leaves at `{output}`.

use std::io::Read;
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mocap::{MoCapSequence, RadarConfig, WeightTable};
use crate::simulator::{control_model, oracle_spectrogram, ControlKind, NoiseParams};
use crate::spectral::{parse_spectro, Framing, Spectrogram};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

// keep this much of each captured stream
const TAIL_BYTES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Oracle,
    Constant,
    Shuffle,
    Flip,
    External,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "oracle" => ModelKind::Oracle,
            "constant" => ModelKind::Constant,
            "shuffle" => ModelKind::Shuffle,
            "flip" => ModelKind::Flip,
            "external" => ModelKind::External,
            other => return Err(Error::Config(format!("unknown model kind '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub command_template: Option<String>,
    pub timeout_s: f64,
    /// Seed for the shuffle control.
    pub seed: u64,
}

impl ModelSpec {
    pub fn builtin(kind: ModelKind) -> Self {
        Self {
            kind,
            command_template: None,
            timeout_s: DEFAULT_TIMEOUT.as_secs_f64(),
            seed: 0,
        }
    }

    pub fn external(template: impl Into<String>) -> Result<Self> {
        let spec = Self {
            command_template: Some(template.into()),
            ..Self::builtin(ModelKind::External)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(Error::Config(format!("timeout must be positive, got {}", self.timeout_s)));
        }
        match (self.kind, &self.command_template) {
            (ModelKind::External, Some(t)) if t.contains("{input}") && t.contains("{output}") => Ok(()),
            (ModelKind::External, Some(_)) => Err(Error::Config(
                "external command template needs both {input} and {output} placeholders".into(),
            )),
            (ModelKind::External, None) => {
                Err(Error::Config("external model requires a command template".into()))
            }
            (_, Some(_)) => Err(Error::Config("command template is only valid for external models".into())),
            (_, None) => Ok(()),
        }
    }
}

/// A model spectrogram plus anything the model printed.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub spectrogram: Spectrogram,
    pub diagnostics: Option<String>,
}

/// A model ready to be queried. Built-in kinds simulate with the given
/// weights and noise; controls transform the oracle output. Once anchored to
/// a trial, controls return the transformed ground truth of that trial for
/// every input, so they cannot follow an intervention.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    weights: WeightTable,
    noise: NoiseParams,
    anchored: Option<Spectrogram>,
}

impl Model {
    pub fn new(spec: ModelSpec, weights: WeightTable, noise: NoiseParams) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            weights,
            noise,
            anchored: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Freeze a control's output to its transformation of the oracle
    /// spectrogram for `seq`. No-op for the oracle and external kinds.
    pub fn anchor(&mut self, seq: &MoCapSequence, cfg: &RadarConfig, framing: Framing) -> Result<()> {
        if let Some(kind) = self.control_kind() {
            let truth = oracle_spectrogram(seq, cfg, &self.weights, &self.noise, framing)?;
            self.anchored = Some(control_model(kind, &truth, self.spec.seed));
        }
        Ok(())
    }

    fn control_kind(&self) -> Option<ControlKind> {
        match self.spec.kind {
            ModelKind::Constant => Some(ControlKind::Constant),
            ModelKind::Shuffle => Some(ControlKind::Shuffle),
            ModelKind::Flip => Some(ControlKind::Flip),
            ModelKind::Oracle | ModelKind::External => None,
        }
    }

    pub fn predict(&self, seq: &MoCapSequence, cfg: &RadarConfig, framing: Framing) -> Result<Prediction> {
        framing.validate()?;
        let builtin = |s: Spectrogram| Prediction {
            spectrogram: s,
            diagnostics: None,
        };
        if let Some(kind) = self.control_kind() {
            return match &self.anchored {
                Some(fixed) => {
                    let n = framing.require_frames(seq.len())?;
                    if fixed.framing() != framing || fixed.n_frames() != n {
                        return Err(Error::ShapeMismatch(format!(
                            "control was anchored to {} frames of {:?}, asked for {n} frames of {framing:?}",
                            fixed.n_frames(),
                            fixed.framing()
                        )));
                    }
                    Ok(builtin(fixed.clone()))
                }
                None => {
                    let truth = oracle_spectrogram(seq, cfg, &self.weights, &self.noise, framing)?;
                    Ok(builtin(control_model(kind, &truth, self.spec.seed)))
                }
            };
        }
        match self.spec.kind {
            ModelKind::External => self.run_external(seq, framing),
            _ => Ok(builtin(oracle_spectrogram(seq, cfg, &self.weights, &self.noise, framing)?)),
        }
    }

    fn run_external(&self, seq: &MoCapSequence, framing: Framing) -> Result<Prediction> {
        let template = self
            .spec
            .command_template
            .as_deref()
            .ok_or_else(|| Error::Config("external model requires a command template".into()))?;
        let expected_frames = framing.require_frames(seq.len())?;

        let workdir = tempfile::Builder::new().prefix("doppler-audit-").tempdir()?;
        let input = workdir.path().join("input.mocap.csv");
        let output = workdir.path().join("output.spectro.csv");
        std::fs::write(&input, seq.to_csv())?;
        let command = template
            .replace("{input}", &shell_quote(&input))
            .replace("{output}", &shell_quote(&output));

        let timeout = Duration::from_secs_f64(self.spec.timeout_s);
        let run = run_with_timeout(&command, workdir.path(), timeout)?;
        let diagnostics = run.transcript();
        let fail = |msg: String| Error::ModelInvocation {
            msg,
            diagnostics: diagnostics.clone(),
        };
        match run.status {
            None => return Err(fail(format!("timed out after {:.1} s", self.spec.timeout_s))),
            Some(status) if !status.success() => {
                return Err(fail(format!(
                    "command exited with {status}; stderr tail:\n{}",
                    run.stderr.trim_end()
                )))
            }
            Some(_) => {}
        }
        let text = std::fs::read_to_string(&output)
            .map_err(|e| fail(format!("could not read model output {}: {e}", output.display())))?;
        let spectrogram =
            parse_spectro(&text).map_err(|e| fail(format!("malformed SPECTRO-CSV from model: {e}")))?;
        if spectrogram.framing() != framing {
            return Err(fail(format!(
                "model output framing {:?} does not match the requested {:?}",
                spectrogram.framing(),
                framing
            )));
        }
        if spectrogram.n_frames() != expected_frames {
            return Err(fail(format!(
                "model produced {} frames, expected {expected_frames}",
                spectrogram.n_frames()
            )));
        }
        Ok(Prediction {
            spectrogram,
            diagnostics: (!diagnostics.is_empty()).then_some(diagnostics),
        })
    }
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

struct RunOutput {
    // None on timeout
    status: Option<ExitStatus>,
    stdout: String,
    stderr: String,
}

impl RunOutput {
    fn transcript(&self) -> String {
        let mut out = String::new();
        if !self.stdout.trim().is_empty() {
            out.push_str("[stdout]\n");
            out.push_str(self.stdout.trim_end());
            out.push('\n');
        }
        if !self.stderr.trim().is_empty() {
            out.push_str("[stderr]\n");
            out.push_str(self.stderr.trim_end());
            out.push('\n');
        }
        out
    }
}

fn tail(bytes: &[u8]) -> String {
    let start = bytes.len().saturating_sub(TAIL_BYTES);
    String::from_utf8_lossy(&bytes[start..]).into_owned()
}

fn run_with_timeout(command: &str, cwd: &Path, timeout: Duration) -> Result<RunOutput> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::ModelInvocation {
            msg: format!("could not start '{command}': {e}"),
            diagnostics: String::new(),
        })?;

    let mut out_pipe = child.stdout.take().expect("stdout is piped");
    let mut err_pipe = child.stderr.take().expect("stderr is piped");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });

    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep(Duration::from_millis(5));
    };
    // a killed shell may leave grandchildren holding the pipes open
    let (stdout, stderr) = if status.is_some() {
        (
            tail(&out_reader.join().unwrap_or_default()),
            tail(&err_reader.join().unwrap_or_default()),
        )
    } else {
        (String::new(), String::new())
    };
    Ok(RunOutput {
        status,
        stdout,
        stderr,
    })
}
