//! Prediction daemon.
//!
//! Clients connect over TCP on localhost and exchange one JSON object per
//! line. A `predict` request carries the scenario descriptors, the maximum
//! workgroup size the client's runtime reported and any sizes it already
//! knows to be refused:
//!
//! ```text
//! {"type":"predict","scenario":{"device":{..},"kernel":{..},"dataset":{..}},
//!  "max_wgsize":256,"refused":[[32,8]]}
//! ```
//!
//! and is answered with `{"type":"wgsize","w_c":C,"w_r":R}`. If the runtime
//! then refuses that size the client sends
//! `{"type":"refused","scenario_id":ID,"w_c":C,"w_r":R}` and gets the next
//! proposal. Anything else gets `{"type":"error","message":..}`; the
//! connection stays open.
//!
//! Refusals are remembered per connection only.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::extract;
use crate::scenario::{DatasetDescriptor, DeviceDescriptor, KernelDescriptor, Scenario};
use crate::space::{ConstraintContext, WorkgroupSize};
use crate::tuner::{Episode, TunerModel};

/// Scenario descriptors as sent by a client. The id is derived, so any id
/// field in the message is ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub device: DeviceDescriptor,
    pub kernel: KernelDescriptor,
    pub dataset: DatasetDescriptor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Predict {
        scenario: ScenarioSpec,
        max_wgsize: u32,
        #[serde(default)]
        refused: Vec<[u32; 2]>,
    },
    Refused {
        scenario_id: String,
        w_c: u32,
        w_r: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Wgsize {
        scenario_id: String,
        w_c: u32,
        w_r: u32,
    },
    Error {
        message: String,
    },
}

impl Response {
    pub fn wgsize(&self) -> Option<WorkgroupSize> {
        match self {
            Response::Wgsize { w_c, w_r, .. } => Some(WorkgroupSize::new(*w_c, *w_r)),
            Response::Error { .. } => None,
        }
    }
}

/// Open tuning episodes of one connection, by scenario id.
#[derive(Debug, Default)]
pub struct Session {
    episodes: HashMap<String, Episode>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn handle(&mut self, model: &TunerModel, req: Request) -> Result<Response> {
        match req {
            Request::Predict {
                scenario,
                max_wgsize,
                refused,
            } => {
                let s = Scenario::new(scenario.device, scenario.kernel, scenario.dataset)?;
                let mut ctx =
                    ConstraintContext::new(s.device.device_max_wgsize, max_wgsize, [])?;
                for [c, r] in refused {
                    let w = WorkgroupSize::try_new(c, r)?;
                    // Oversized sizes are excluded by the maximum anyway.
                    if ctx.within_max(w) {
                        ctx.add_refused(w)?;
                    }
                }
                let mut episode = model.episode(&extract(&s), &ctx)?;
                let w = episode.propose()?;
                self.episodes.insert(s.id.clone(), episode);
                Ok(proposal(s.id, w))
            }
            Request::Refused {
                scenario_id,
                w_c,
                w_r,
            } => {
                let w = WorkgroupSize::try_new(w_c, w_r)?;
                let episode = self
                    .episodes
                    .get_mut(&scenario_id)
                    .ok_or_else(|| Error::UnknownScenario(scenario_id.clone()))?;
                episode.reject(w);
                let next = episode.propose()?;
                Ok(proposal(scenario_id, next))
            }
        }
    }

    /// Answers one protocol line. Never fails: problems become error
    /// responses.
    pub fn handle_line(&mut self, model: &TunerModel, line: &str) -> Response {
        let outcome = serde_json::from_str::<Request>(line)
            .map_err(|e| Error::InvalidArgument(format!("malformed request: {e}")))
            .and_then(|req| self.handle(model, req));
        outcome.unwrap_or_else(|e| Response::Error {
            message: e.to_string(),
        })
    }
}

fn proposal(scenario_id: String, w: WorkgroupSize) -> Response {
    Response::Wgsize {
        scenario_id,
        w_c: w.cols,
        w_r: w.rows,
    }
}

/// Binds the daemon's listening socket on localhost. Port 0 picks a free
/// port.
pub fn bind(port: u16) -> io::Result<TcpListener> {
    TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port)))
}

/// Serves one client until it disconnects.
pub fn handle_connection(stream: TcpStream, model: &TunerModel) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut session = Session::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(());
        }
        let response = match std::str::from_utf8(&buf) {
            Ok(line) if line.trim().is_empty() => continue,
            Ok(line) => session.handle_line(model, line.trim()),
            Err(_) => Response::Error {
                message: "request is not valid UTF-8".into(),
            },
        };
        let mut out = serde_json::to_vec(&response).map_err(io::Error::other)?;
        out.push(b'\n');
        writer.write_all(&out)?;
        writer.flush()?;
    }
}

/// Accepts connections forever, one thread each.
pub fn serve(listener: TcpListener, model: Arc<TunerModel>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                eprintln!("accept failed: {e}");
                continue;
            }
        };
        let model = Arc::clone(&model);
        thread::spawn(move || {
            if let Err(e) = handle_connection(stream, &model) {
                eprintln!("connection closed: {e}");
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{train_classifier, Algorithm, LabelledDataset};
    use crate::synthgen::standard_fixture;
    use crate::tuner::FallbackStrategy;

    fn fixed_model(label: WorkgroupSize) -> TunerModel {
        let fixture = standard_fixture();
        let mut data = LabelledDataset::new(crate::features::schema());
        data.push(extract(&fixture[0]), label).unwrap();
        TunerModel::Classifier {
            model: train_classifier(Algorithm::ZeroR, &data, 0).unwrap(),
            fallback: FallbackStrategy::NearestNeighbour,
        }
    }

    fn predict_line(s: &Scenario, max: u32, refused: &[[u32; 2]]) -> String {
        serde_json::json!({
            "type": "predict",
            "scenario": s,
            "max_wgsize": max,
            "refused": refused,
        })
        .to_string()
    }

    #[test]
    fn predict_refuse_repredict() {
        let model = fixed_model(WorkgroupSize::new(32, 8));
        let s = &standard_fixture()[0];
        let mut session = Session::new();
        let first = session.handle_line(&model, &predict_line(s, 256, &[]));
        assert_eq!(first.wgsize(), Some(WorkgroupSize::new(32, 8)));
        let refuse = serde_json::json!({
            "type": "refused", "scenario_id": s.id, "w_c": 32, "w_r": 8
        });
        let second = session.handle_line(&model, &refuse.to_string());
        let w = second.wgsize().unwrap();
        assert_ne!(w, WorkgroupSize::new(32, 8));
        assert!(w.area() <= 256);
    }

    #[test]
    fn respects_request_maximum_and_refusals() {
        let model = fixed_model(WorkgroupSize::new(32, 8));
        let s = &standard_fixture()[0];
        let mut session = Session::new();
        let r = session.handle_line(&model, &predict_line(s, 128, &[[16, 8], [2048, 2]]));
        let w = r.wgsize().unwrap();
        assert!(w.area() <= 128);
        assert_ne!(w, WorkgroupSize::new(16, 8));
    }

    #[test]
    fn identical_requests_identical_answers() {
        let model = fixed_model(WorkgroupSize::new(64, 4));
        let s = &standard_fixture()[3];
        let line = predict_line(s, 256, &[[64, 4]]);
        let a = Session::new().handle_line(&model, &line);
        let b = Session::new().handle_line(&model, &line);
        assert_eq!(a, b);
    }

    #[test]
    fn bad_input_is_an_error_response() {
        let model = fixed_model(WorkgroupSize::new(32, 8));
        let mut session = Session::new();
        for line in [
            "not json",
            r#"{"type":"launch"}"#,
            r#"{"type":"refused","scenario_id":"nope","w_c":2,"w_r":2}"#,
            r#"{"type":"refused","scenario_id":"nope","w_c":0,"w_r":2}"#,
        ] {
            assert!(matches!(
                session.handle_line(&model, line),
                Response::Error { .. }
            ));
        }
    }

    #[test]
    fn response_wire_format() {
        let r = proposal("a/b/2x2/INT32-INT32".into(), WorkgroupSize::new(4, 2));
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["type"], "wgsize");
        assert_eq!(v["w_c"], 4);
        assert_eq!(v["w_r"], 2);
    }
}
