//! Line-oriented terminal front end.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use defect_sage_core::session::{export_report, AgentMessage, Engine, ImageInput, Input, Payload, Session, State};

/// Words that end the REPL; not part of the menu.
pub const QUIT_WORDS: [&str; 2] = ["quit", "exit"];

fn print(out: &mut impl Write, messages: &[AgentMessage]) -> io::Result<()> {
    for m in messages {
        writeln!(out, "{}", m.text)?;
    }
    Ok(())
}

fn image_input(line: &str) -> Option<Input> {
    let path = Path::new(line);
    let bytes = std::fs::read(path).ok()?;
    let filename = path.file_name()?.to_string_lossy().into_owned();
    Some(Input::Image(ImageInput { filename, bytes, hypothesis: None, material: None }))
}

/// Runs until end of input or a quit word. A file path entered while an
/// upload is awaited is sent as an image; report payloads are written as
/// HTML into `report_dir`.
pub fn run(engine: &Engine, input: impl BufRead, out: &mut impl Write, report_dir: &Path) -> io::Result<Session> {
    let mut session = Session::new(engine);
    for entry in session.transcript().entries() {
        writeln!(out, "{}", entry.text)?;
    }
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if QUIT_WORDS.iter().any(|w| trimmed.eq_ignore_ascii_case(w)) {
            writeln!(out, "Goodbye.")?;
            break;
        }
        let input = match session.state() {
            State::ImageAwaitUpload if !trimmed.is_empty() && trimmed != "0" => {
                image_input(trimmed).unwrap_or_else(|| Input::Text(line.clone()))
            }
            _ => Input::Text(line.clone()),
        };
        let messages = session.handle(engine, input);
        print(out, &messages)?;
        for m in &messages {
            if let Payload::Report { filename } = &m.payload {
                let path: PathBuf = report_dir.join(filename);
                match export_report(session.transcript()).map_err(io::Error::other).and_then(|html| std::fs::write(&path, html)) {
                    Ok(()) => writeln!(out, "Saved {}", path.display())?,
                    Err(e) => writeln!(out, "⚠️ Could not write {}: {e}", path.display())?,
                }
            }
        }
        out.flush()?;
    }
    Ok(session)
}
