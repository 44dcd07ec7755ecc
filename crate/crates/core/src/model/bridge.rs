//! Client side of the line-delimited JSON bridge to an external model server.
//!
//! One request per line on the server's stdin, one response per line on its
//! stdout. Images travel as base64 of the raw `H x W x 3` 8-bit RGB bytes.
//! See `docs/bridge-protocol.md` for the exact wire format.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BlackBox, Classifier, Differentiable, Image, ModelError, Prediction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub op: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_index: Option<usize>,
}

impl BridgeRequest {
    pub fn info() -> Self {
        Self {
            op: "info".into(),
            height: None,
            width: None,
            image: None,
            class_index: None,
        }
    }

    pub fn predict(image: &Image) -> Self {
        Self {
            op: "predict".into(),
            height: Some(image.height()),
            width: Some(image.width()),
            image: Some(B64.encode(image.to_rgb8())),
            class_index: None,
        }
    }

    pub fn gradient(image: &Image, class_index: usize) -> Self {
        Self {
            class_index: Some(class_index),
            op: "gradient".into(),
            ..Self::predict(image)
        }
    }

    /// Decodes the image payload, checking dims against the byte count.
    pub fn decode_image(&self) -> Result<Image, ModelError> {
        let (Some(h), Some(w), Some(data)) = (self.height, self.width, &self.image) else {
            return Err(ModelError::InvalidImage("request carries no image".into()));
        };
        let bytes = B64
            .decode(data)
            .map_err(|e| ModelError::InvalidImage(format!("bad base64: {e}")))?;
        if bytes.len() != h * w * 3 {
            return Err(ModelError::InvalidImage(format!(
                "{} bytes for a {h}x{w}x3 image",
                bytes.len()
            )));
        }
        Image::from_rgb8(h, w, &bytes)
    }

    /// One line of JSON, newline-terminated.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("request serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BridgeResponse {
    pub fn parse(line: &str) -> Result<Self, ModelError> {
        let r: Self = serde_json::from_str(line.trim_end())
            .map_err(|e| ModelError::Transport(format!("malformed reply: {e}")))?;
        let payloads = [r.probs.is_some(), r.grad.is_some(), r.model_name.is_some()]
            .iter()
            .filter(|&&b| b)
            .count();
        match (payloads, r.error.is_some()) {
            (0, true) | (1, false) => Ok(r),
            _ => Err(ModelError::Transport(
                "reply must carry exactly one of payload or error".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BridgeInfo {
    pub model_name: String,
    pub classes: usize,
    pub height: Option<usize>,
    pub width: Option<usize>,
}

struct BridgeIo {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

/// A model served by a bridge process (or any pair of line streams).
pub struct BridgeEndpoint {
    io: Mutex<BridgeIo>,
    counter: AtomicU64,
    info: BridgeInfo,
}

impl std::fmt::Debug for BridgeEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeEndpoint").field("info", &self.info).finish_non_exhaustive()
    }
}

impl BridgeEndpoint {
    /// Starts `command[0] command[1..]` and performs the `info` handshake.
    pub fn spawn(command: &[String]) -> Result<Self, ModelError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ModelError::Transport("empty bridge command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ModelError::Transport(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Self::with_io(BridgeIo {
            reader: Box::new(BufReader::new(stdout)),
            writer: Box::new(stdin),
            child: Some(child),
        })
    }

    /// Talks over arbitrary streams; performs the `info` handshake first.
    pub fn from_streams<R, W>(reader: R, writer: W) -> Result<Self, ModelError>
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::with_io(BridgeIo {
            reader: Box::new(reader),
            writer: Box::new(writer),
            child: None,
        })
    }

    fn with_io(io: BridgeIo) -> Result<Self, ModelError> {
        let mut ep = Self {
            io: Mutex::new(io),
            counter: AtomicU64::new(0),
            info: BridgeInfo {
                model_name: String::new(),
                classes: 0,
                height: None,
                width: None,
            },
        };
        let r = ep.round_trip(&BridgeRequest::info())?;
        let (Some(model_name), Some(classes)) = (r.model_name, r.classes) else {
            return Err(ModelError::Transport("info reply lacks model_name or classes".into()));
        };
        if classes == 0 {
            return Err(ModelError::Transport("bridge reports zero classes".into()));
        }
        ep.info = BridgeInfo {
            model_name,
            classes,
            height: r.height,
            width: r.width,
        };
        Ok(ep)
    }

    pub fn info(&self) -> &BridgeInfo {
        &self.info
    }

    fn round_trip(&self, req: &BridgeRequest) -> Result<BridgeResponse, ModelError> {
        let mut io = self
            .io
            .lock()
            .map_err(|_| ModelError::Transport("bridge connection poisoned".into()))?;
        io.writer
            .write_all(req.to_line().as_bytes())
            .and_then(|_| io.writer.flush())
            .map_err(|e| ModelError::Transport(format!("write failed: {e}")))?;
        let mut line = String::new();
        let n = io
            .reader
            .read_line(&mut line)
            .map_err(|e| ModelError::Transport(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(ModelError::Transport("bridge closed the connection".into()));
        }
        let r = BridgeResponse::parse(&line)?;
        if let Some(e) = r.error {
            return Err(ModelError::Remote(e));
        }
        Ok(r)
    }

    fn remote_predict(&self, image: &Image) -> Result<Prediction, ModelError> {
        let r = self.round_trip(&BridgeRequest::predict(image))?;
        let probs = r
            .probs
            .ok_or_else(|| ModelError::Transport("predict reply lacks probs".into()))?;
        if probs.len() != self.info.classes {
            return Err(ModelError::Transport(format!(
                "{} probabilities for {} classes",
                probs.len(),
                self.info.classes
            )));
        }
        Prediction::from_probs(probs).map_err(|e| ModelError::Transport(e.to_string()))
    }
}

impl Drop for BridgeEndpoint {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            if let Some(child) = io.child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

impl BlackBox for BridgeEndpoint {
    fn query(&self, image: &Image) -> Result<Prediction, ModelError> {
        let p = self.remote_predict(image)?;
        self.counter.fetch_add(1, Ordering::Relaxed);
        Ok(p)
    }

    fn query_count(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }
}

impl Classifier for BridgeEndpoint {
    fn num_classes(&self) -> usize {
        self.info.classes
    }

    fn predict(&self, image: &Image) -> Result<Prediction, ModelError> {
        self.remote_predict(image)
    }
}

impl Differentiable for BridgeEndpoint {
    fn input_gradient(&self, image: &Image, class_index: usize) -> Result<Vec<f64>, ModelError> {
        if class_index >= self.info.classes {
            return Err(ModelError::ClassOutOfRange {
                class: class_index,
                classes: self.info.classes,
            });
        }
        let r = self.round_trip(&BridgeRequest::gradient(image, class_index))?;
        let grad = r
            .grad
            .ok_or_else(|| ModelError::Transport("gradient reply lacks grad".into()))?;
        if grad.len() != image.data().len() {
            return Err(ModelError::Transport(format!(
                "gradient has {} entries, image has {}",
                grad.len(),
                image.data().len()
            )));
        }
        Ok(grad)
    }
}
