//! Out-of-process backend speaking newline-delimited JSON over the child's
//! standard streams.
//!
//! Request: `{"version": 1, "prefix": [token ids]}`.
//! Response: `{"version": 1, "logprobs": {"<token id>": logprob, ...}}` or
//! `{"version": 1, "error": "..."}`. Token ids missing from `logprobs` have
//! probability zero.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, LanguageModel};
use crate::tokenizer::TokenId;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Request {
    pub version: u32,
    pub prefix: Vec<TokenId>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Response {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<BTreeMap<TokenId, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ExternalModel {
    id: String,
    vocab_size: usize,
    channel: Mutex<Channel>,
}

impl ExternalModel {
    /// Start `program` with `args`. The child serves one request at a time.
    pub fn spawn(program: &str, args: &[String], vocab_size: usize) -> Result<Self, BackendError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| BackendError(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(ExternalModel {
            id: format!("extern:{program}"),
            vocab_size,
            channel: Mutex::new(Channel { child, stdin, stdout }),
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl Drop for ExternalModel {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

impl LanguageModel for ExternalModel {
    fn backend_id(&self) -> String {
        self.id.clone()
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn concurrent(&self) -> bool {
        false
    }

    fn next_token_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        let mut ch = self.channel.lock().map_err(|_| BackendError("backend channel poisoned".into()))?;
        let request = serde_json::to_string(&Request {
            version: PROTOCOL_VERSION,
            prefix: prefix.to_vec(),
        })
        .expect("request serializes");
        writeln!(ch.stdin, "{request}")
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| BackendError(format!("write to backend: {e}")))?;
        let mut line = String::new();
        let n = ch
            .stdout
            .read_line(&mut line)
            .map_err(|e| BackendError(format!("read from backend: {e}")))?;
        if n == 0 {
            return Err(BackendError("backend closed its output".into()));
        }
        let resp: Response =
            serde_json::from_str(&line).map_err(|e| BackendError(format!("malformed backend reply: {e}")))?;
        if resp.version != PROTOCOL_VERSION {
            return Err(BackendError(format!("protocol version {} is not supported", resp.version)));
        }
        if let Some(e) = resp.error {
            return Err(BackendError(e));
        }
        let sparse = resp.logprobs.ok_or_else(|| BackendError("reply has neither logprobs nor error".into()))?;
        let mut dense = vec![f64::NEG_INFINITY; self.vocab_size];
        for (t, lp) in sparse {
            let slot = dense
                .get_mut(t as usize)
                .ok_or_else(|| BackendError(format!("token {t} is outside the vocabulary")))?;
            *slot = lp;
        }
        Ok(dense)
    }
}

/// Answer protocol requests from `input` with `lm`, one reply per line,
/// until end of input.
pub fn serve(lm: &dyn LanguageModel, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => Response {
                version: PROTOCOL_VERSION,
                error: Some(format!("malformed request: {e}")),
                ..Default::default()
            },
            Ok(r) if r.version != PROTOCOL_VERSION => Response {
                version: PROTOCOL_VERSION,
                error: Some(format!("protocol version {} is not supported", r.version)),
                ..Default::default()
            },
            Ok(r) => match lm.next_token_logprobs(&r.prefix) {
                Ok(lp) => Response {
                    version: PROTOCOL_VERSION,
                    logprobs: Some(
                        lp.into_iter()
                            .enumerate()
                            .filter(|(_, v)| v.is_finite())
                            .map(|(i, v)| (i as TokenId, v))
                            .collect(),
                    ),
                    error: None,
                },
                Err(e) => Response {
                    version: PROTOCOL_VERSION,
                    error: Some(e.0),
                    ..Default::default()
                },
            },
        };
        writeln!(output, "{}", serde_json::to_string(&reply).expect("reply serializes"))?;
        output.flush()?;
    }
    Ok(())
}
