//! Task tags and field names shared by the prompt authors and the mock chat
//! backend. Every prompt this crate sends starts with a `TASK=<tag>` line.

use crate::providers::{ChatRequest, ProviderError, ProviderHandle};

pub const TASK_CONTEXT: &str = "context";
pub const TASK_SPARK: &str = "spark";
pub const TASK_BRIDGE: &str = "bridge";
pub const TASK_GENERATE: &str = "generate";
pub const TASK_JUDGE: &str = "judge";
pub const TASK_EXPERT: &str = "expert";
pub const TASK_DIAGNOSE: &str = "diagnose";

/// Delimiters around material that came from retrieval or from earlier model
/// output, as opposed to text this crate authored.
pub const EVIDENCE_BEGIN: &str = "[BEGIN EVIDENCE]";
pub const EVIDENCE_END: &str = "[END EVIDENCE]";

/// Tag of a prompt, read from its first record line.
pub fn task_of(user_prompt: &str) -> Option<&str> {
    user_prompt
        .lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| l.trim().strip_prefix("TASK="))
        .map(|t| t.split('|').next().unwrap_or("").trim())
}

/// Text between evidence delimiters, concatenated.
pub fn evidence_sections(prompt: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in prompt.lines() {
        match line.trim() {
            EVIDENCE_BEGIN => current = Some(Vec::new()),
            EVIDENCE_END => {
                if let Some(buf) = current.take() {
                    out.push(buf.join("\n"));
                }
            }
            _ => {
                if let Some(buf) = current.as_mut() {
                    buf.push(line);
                }
            }
        }
    }
    out
}

/// The prompt with every evidence block removed; what remains is text this
/// crate authored.
pub fn authored_sections(prompt: &str) -> String {
    let mut out = Vec::new();
    let mut inside = false;
    for line in prompt.lines() {
        match line.trim() {
            EVIDENCE_BEGIN => inside = true,
            EVIDENCE_END => inside = false,
            _ if !inside => out.push(line),
            _ => {}
        }
    }
    out.join("\n")
}

pub const FORMAT_REMINDER: &str = "FORMAT REMINDER: your previous reply could not be parsed. \
Reply again using only the record lines described above.";

#[derive(Debug)]
pub enum AskError {
    Provider(ProviderError),
    /// The reply still violated the grammar after the reprompt.
    Parse(String),
}

/// Send `user` and parse the reply; on a parse failure send the prompt once
/// more with a format reminder appended, then give up.
pub fn ask_parsed<T>(
    chat: &ProviderHandle,
    system: &str,
    user: &str,
    temperature: f64,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, AskError> {
    let first = chat
        .chat_complete(&ChatRequest::new(system, user, temperature))
        .map_err(AskError::Provider)?;
    let detail = match parse(&first.text) {
        Ok(v) => return Ok(v),
        Err(d) => d,
    };
    log::debug!("reprompting after parse failure: {detail}");
    let retry = format!("{user}\n{FORMAT_REMINDER}");
    let second = chat
        .chat_complete(&ChatRequest::new(system, retry, temperature))
        .map_err(AskError::Provider)?;
    parse(&second.text).map_err(AskError::Parse)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_evidence_from_authored_text() {
        let p = "TASK=spark\nQUERY=q\n[BEGIN EVIDENCE]\nchunk body\n[END EVIDENCE]\nReply now.";
        assert_eq!(task_of(p), Some("spark"));
        assert_eq!(evidence_sections(p), vec!["chunk body".to_string()]);
        assert_eq!(authored_sections(p), "TASK=spark\nQUERY=q\nReply now.");
        assert_eq!(task_of("hello"), None);
    }
}
