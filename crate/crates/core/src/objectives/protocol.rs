//! Ask/tell adapter: the campaign runs on its own thread against an objective
//! whose evaluations are answered by an external driver.
//!
//! Wire format (one JSON object per line):
//! `{"campaign": .., "seed": .., "points": [[..], ..]}` out,
//! `{"campaign": .., "seed": .., "results": [{"x": [..], "y": ..}, ..]}` in.

use std::sync::Mutex;
use std::sync::mpsc::{Receiver, Sender, channel};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::domain::Objective;
use crate::error::{Error, Result};

enum Event<T> {
    Ask(Vec<Vec<f64>>),
    Done(Result<T>),
}

/// Objective whose values come from the driver side of a session.
struct ChannelObjective<T> {
    link: Mutex<(Sender<Event<T>>, Receiver<Result<Vec<f64>>>)>,
}

impl<T: Send> Objective for ChannelObjective<T> {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate_batch(&[x.to_vec()])?[0])
    }

    fn evaluate_batch(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let link = self.link.lock().expect("objective lock");
        link.0
            .send(Event::Ask(points.to_vec()))
            .map_err(|_| Error::Protocol("evaluator session closed".into()))?;
        link.1
            .recv()
            .map_err(|_| Error::Protocol("evaluator session closed".into()))?
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskMessage {
    pub campaign: String,
    pub seed: u64,
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TellResult {
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TellMessage {
    #[serde(default)]
    pub campaign: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub results: Vec<TellResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoneMessage {
    pub campaign: String,
    pub seed: u64,
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub enum Asked<T> {
    Points(Vec<Vec<f64>>),
    Finished(Result<T>),
}

enum State {
    Idle,
    Asked(Vec<Vec<f64>>),
    Finished,
}

/// Driver side of an ask/tell session. `ask` and `tell` must alternate.
pub struct AskTellSession<T> {
    pub campaign: String,
    pub seed: u64,
    events: Receiver<Event<T>>,
    replies: Sender<Result<Vec<f64>>>,
    state: State,
    worker: Option<JoinHandle<()>>,
}

impl<T: Send + 'static> AskTellSession<T> {
    /// Starts `campaign` on a worker thread; it sees an objective backed by
    /// this session.
    pub fn start<F>(campaign_id: impl Into<String>, seed: u64, campaign: F) -> Self
    where
        F: FnOnce(&dyn Objective) -> Result<T> + Send + 'static,
    {
        let (event_tx, event_rx) = channel();
        let (reply_tx, reply_rx) = channel();
        let worker = std::thread::spawn(move || {
            let objective = ChannelObjective {
                link: Mutex::new((event_tx.clone(), reply_rx)),
            };
            let out = campaign(&objective);
            let _ = event_tx.send(Event::Done(out));
        });
        Self {
            campaign: campaign_id.into(),
            seed,
            events: event_rx,
            replies: reply_tx,
            state: State::Idle,
            worker: Some(worker),
        }
    }

    /// The next batch to evaluate, or the campaign's result once it ends.
    pub fn ask(&mut self) -> Result<Asked<T>> {
        match self.state {
            State::Asked(_) => return Err(Error::Protocol("ask while a batch is outstanding".into())),
            State::Finished => return Err(Error::Protocol("campaign already finished".into())),
            State::Idle => {}
        }
        match self.events.recv() {
            Ok(Event::Ask(points)) => {
                self.state = State::Asked(points.clone());
                Ok(Asked::Points(points))
            }
            Ok(Event::Done(result)) => {
                self.state = State::Finished;
                if let Some(w) = self.worker.take() {
                    let _ = w.join();
                }
                Ok(Asked::Finished(result))
            }
            Err(_) => {
                self.state = State::Finished;
                Err(Error::Protocol("campaign thread ended unexpectedly".into()))
            }
        }
    }

    pub fn ask_message(&self, points: Vec<Vec<f64>>) -> AskMessage {
        AskMessage {
            campaign: self.campaign.clone(),
            seed: self.seed,
            points,
        }
    }

    /// Answers the outstanding batch. Results may come in any order but must
    /// cover exactly the asked points.
    pub fn tell(&mut self, results: &[TellResult]) -> Result<()> {
        let State::Asked(asked) = &self.state else {
            return Err(Error::Protocol("tell without an outstanding ask".into()));
        };
        if results.len() != asked.len() {
            return Err(Error::Protocol(format!(
                "expected {} results, got {}",
                asked.len(),
                results.len()
            )));
        }
        let mut used = vec![false; results.len()];
        let mut values = Vec::with_capacity(asked.len());
        for p in asked {
            let slot = results
                .iter()
                .enumerate()
                .position(|(i, r)| !used[i] && r.x == *p)
                .ok_or_else(|| Error::Protocol(format!("no result for asked point {p:?}")))?;
            used[slot] = true;
            values.push(results[slot].y);
        }
        self.state = State::Idle;
        self.replies
            .send(Ok(values))
            .map_err(|_| Error::Protocol("campaign thread ended unexpectedly".into()))
    }

    /// Answers the outstanding batch with a failure; the campaign sees a
    /// protocol error from its objective.
    pub fn fail(&mut self, reason: impl Into<String>) -> Result<()> {
        if !matches!(self.state, State::Asked(_)) {
            return Err(Error::Protocol("fail without an outstanding ask".into()));
        }
        self.state = State::Idle;
        self.replies
            .send(Err(Error::Protocol(reason.into())))
            .map_err(|_| Error::Protocol("campaign thread ended unexpectedly".into()))
    }

    /// Parses and applies one tell line, checking the echoed identifiers.
    pub fn tell_line(&mut self, line: &str) -> Result<()> {
        let msg: TellMessage = serde_json::from_str(line)
            .map_err(|e| Error::Protocol(format!("malformed tell message: {e}")))?;
        if msg.campaign.as_ref().is_some_and(|c| *c != self.campaign) || msg.seed.is_some_and(|s| s != self.seed) {
            return Err(Error::Protocol("tell for a different campaign or seed".into()));
        }
        self.tell(&msg.results)
    }
}

impl<T> Drop for AskTellSession<T> {
    fn drop(&mut self) {
        // Unblock a waiting campaign so its thread can finish.
        if matches!(self.state, State::Asked(_)) {
            let _ = self.replies.send(Err(Error::Protocol("evaluator session closed".into())));
        }
    }
}
