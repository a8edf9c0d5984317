use crate::exploration::Chunk;
use crate::grammar::render;
use crate::protocol::{EVIDENCE_BEGIN, EVIDENCE_END, TASK_BRIDGE, TASK_CONTEXT, TASK_SPARK};

pub const SYSTEM: &str = "You are a careful analyst. Answer only with records in the form \
FIELD=value | FIELD=value, one record per line.";

pub fn context(query: &str) -> String {
    [
        render(&[("TASK", TASK_CONTEXT)]),
        render(&[("QUERY", query)]),
        "List the core entities and the fixed constraints stated by the query. These are the \
         parts of the problem any answer has to respect. Give each a short label and a \
         one-sentence description."
            .to_owned(),
        "Reply with one line per entity: LABEL=<short label> | DESC=<description>".to_owned(),
    ]
    .join("\n")
}

pub fn spark(query: &str, chunk: &Chunk) -> String {
    [
        render(&[("TASK", TASK_SPARK)]),
        render(&[("QUERY", query), ("CHUNK_ID", &chunk.chunk_id)]),
        "Read the passage below. Ignore whether it is relevant to the query. Pick out \
         operational mechanisms (how something works), salient properties, and emergent \
         byproducts that could inspire an unconventional answer."
            .to_owned(),
        EVIDENCE_BEGIN.to_owned(),
        chunk.text.clone(),
        EVIDENCE_END.to_owned(),
        "Reply with one line per finding: LABEL=<short label> | \
         KIND=<mechanism|property|byproduct> | RATIONALE=<what it is and why it is interesting>"
            .to_owned(),
    ]
    .join("\n")
}

#[derive(Debug, Clone)]
pub struct Endpoint<'a> {
    pub id: &'a str,
    pub role: &'a str,
    pub label: &'a str,
    pub text: &'a str,
}

pub fn bridge(query: &str, src: &Endpoint<'_>, dst: &Endpoint<'_>) -> String {
    [
        render(&[("TASK", TASK_BRIDGE)]),
        render(&[("QUERY", query)]),
        EVIDENCE_BEGIN.to_owned(),
        render(&[
            ("SRC_ID", src.id),
            ("SRC_ROLE", src.role),
            ("SRC_LABEL", src.label),
            ("SRC_TEXT", src.text),
        ]),
        render(&[
            ("DST_ID", dst.id),
            ("DST_ROLE", dst.role),
            ("DST_LABEL", dst.label),
            ("DST_TEXT", dst.text),
        ]),
        EVIDENCE_END.to_owned(),
        "Connect the two nodes with exactly one cognitive operator. Mapping transfers a \
         mechanism from one domain onto the other. Blending fuses attributes of both into a \
         new composite. Inversion uses one node as the functional opposite of the other to \
         create productive tension."
            .to_owned(),
        "Reply with a single line: OP=<Mapping|Blending|Inversion> | BRIDGE=<one sentence \
         explaining the connection>"
            .to_owned(),
    ]
    .join("\n")
}
