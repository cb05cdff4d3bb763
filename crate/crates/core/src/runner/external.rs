//! Drives a campaign whose objective lives in another process, speaking
//! newline-delimited JSON: ask lines out, tell lines in, one done line last.

use std::io::{BufRead, Write};
use std::path::Path;

use super::artifacts::{RunSummary, validation_for, write_run};
use super::campaign::{NoObserver, run_campaign};
use super::config::CampaignConfig;
use crate::error::{Error, Result};
use crate::objectives::protocol::{AskTellSession, Asked, DoneMessage};

/// Runs `config` against the evaluator on the other end of `input`/`output`
/// and writes the usual artifacts to `dir`. F2 checkpoints need a truth file.
pub fn run_external(
    config: &CampaignConfig,
    dir: &Path,
    mut input: impl BufRead,
    mut output: impl Write,
) -> Result<RunSummary> {
    config.validate()?;
    let id = format!("{}-{}", config.objective.name(), config.seed);
    let worker_config = config.clone();
    let mut session = AskTellSession::start(id.clone(), config.seed, move |objective| {
        run_campaign(&worker_config, objective, &mut NoObserver)
    });
    let outcome = loop {
        match session.ask()? {
            Asked::Points(points) => {
                // A hang-up or garbled reply ends the campaign as a truncation.
                let exchange = write_line(&mut output, &session.ask_message(points))
                    .and_then(|_| read_tell(&mut input));
                match exchange {
                    Ok(line) => {
                        if let Err(e) = session.tell_line(&line) {
                            session.fail(e.to_string())?;
                        }
                    }
                    Err(e) => session.fail(e.to_string())?,
                }
            }
            Asked::Finished(result) => {
                let done = DoneMessage {
                    campaign: id.clone(),
                    seed: config.seed,
                    done: true,
                    error: result.as_ref().err().map(|e| e.to_string()),
                };
                if let Err(e) = write_line(&mut output, &done) {
                    log::warn!("could not send the done message: {e}");
                }
                break result?;
            }
        }
    };
    let validation = validation_for(config, None)?;
    write_run(config, &outcome, validation.as_ref(), dir)
}

fn read_tell(input: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(Error::Protocol("evaluator closed its output".into()));
        }
        if !line.trim().is_empty() {
            return Ok(line.trim().to_string());
        }
    }
}

fn write_line(output: &mut impl Write, msg: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *output, msg)?;
    writeln!(output)?;
    output.flush()?;
    Ok(())
}
