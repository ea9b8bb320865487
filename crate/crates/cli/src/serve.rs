use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use somnoflow::events::EventRuleConfig;
use somnoflow::model::load_model;
use somnoflow::{SleepNet, StreamState};

use crate::args::ServeArgs;
use crate::error::{CliError, Result};

/// Feeds every line of `input` to a fresh stream and writes each frame as it
/// is produced; closing events follow end of input.
fn pump(model: Arc<SleepNet>, rules: EventRuleConfig, input: impl BufRead, mut out: impl Write) -> std::io::Result<()> {
    let mut state = StreamState::new(model, rules).map_err(std::io::Error::other)?;
    for line in input.lines() {
        let frames = state.feed(&line?);
        for f in &frames {
            writeln!(out, "{f}")?;
        }
        if !frames.is_empty() {
            out.flush()?;
        }
    }
    let events = state.finalize();
    for f in state.closing_emissions(&events) {
        writeln!(out, "{f}")?;
    }
    out.flush()
}

fn connection(model: Arc<SleepNet>, rules: EventRuleConfig, stream: TcpStream) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    log::info!("connection from {peer}");
    let result = stream
        .try_clone()
        .and_then(|read| pump(model, rules, BufReader::new(read), &stream));
    match result {
        Ok(()) => log::info!("{peer} closed"),
        Err(e) => log::warn!("{peer}: {e}"),
    }
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let rules = a.rules.config();
    rules.validate()?;
    let model = Arc::new(load_model(&a.model)?);
    let Some(addr) = &a.listen else {
        let stdin = std::io::stdin().lock();
        return pump(model, rules, stdin, std::io::stdout().lock()).map_err(|e| CliError::io("<stdin>", e));
    };
    let listener = TcpListener::bind(addr).map_err(|e| CliError::io(addr, e))?;
    let local = listener.local_addr().map_err(|e| CliError::io(addr, e))?;
    eprintln!("listening on {local}");
    let mut workers = Vec::new();
    for (n, stream) in listener.incoming().enumerate() {
        match stream {
            Ok(s) => {
                let (m, r) = (model.clone(), rules.clone());
                workers.push(std::thread::spawn(move || connection(m, r, s)));
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
        if a.max_connections.is_some_and(|max| n + 1 >= max) {
            break;
        }
    }
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}
