//! Deterministic in-process providers.
//!
//! Every mock is a pure function of its arguments, the suite's `rng_seed` and
//! the fixture. The chat mock reads the `TASK=` tag at the top of each prompt
//! and answers in the line grammar; fixture rules override the built-in
//! heuristics so tests can pin exact parses.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    ChatBackend, ChatOutput, ChatRequest, EmbedBackend, ProviderError, ProviderHandle, RetryPolicy,
    SearchBackend, SearchResult, Usage,
};
use crate::grammar::{parse_records, render, Record};
use crate::protocol::{self, evidence_sections, task_of};
use crate::rng::{keyed_hash, rng_from_seed};
use crate::text::{casefold, content_words, tokenize};

pub const MOCK_EMBED_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureDoc {
    pub url: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub label: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRule {
    pub query_contains: String,
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparkSpec {
    pub label: String,
    pub kind: String,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparkRule {
    pub chunk_contains: String,
    pub nodes: Vec<SparkSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NominationSpec {
    pub hypotheses: Vec<String>,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub queries: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStyle {
    /// Deterministic text assembled from the prompt's words.
    #[default]
    Synth,
    /// Return the user prompt verbatim.
    Echo,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeStyle {
    /// Best = lexicographically smallest text.
    #[default]
    Lexicographic,
    Reverse,
}

/// Canned behaviour for the chat mock. Empty by default, in which case the
/// built-in heuristics answer every task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatFixture {
    pub context: Vec<ContextRule>,
    pub sparks: Vec<SparkRule>,
    pub bridge_operator: Option<String>,
    pub experts: BTreeMap<String, NominationSpec>,
    pub differential_pool: Vec<String>,
    pub generation: GenerationStyle,
    pub judge: JudgeStyle,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockFixture {
    pub corpus: Vec<FixtureDoc>,
    pub chat: ChatFixture,
}

#[derive(Deserialize)]
struct ManifestEntry {
    url: String,
    path: String,
    #[serde(default)]
    title: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Manifest {
    Wrapped { documents: Vec<ManifestEntry> },
    Flat(Vec<ManifestEntry>),
}

impl MockFixture {
    /// Load `<dir>/manifest.json` (a list of `{url, path}` entries whose
    /// paths point at UTF-8 documents relative to `dir`) and the optional
    /// `<dir>/chat.json`.
    pub fn load(dir: &Path) -> Result<Self, ProviderError> {
        let fail = |what: String| ProviderError::FixtureLoad(what);
        let manifest_path = dir.join("manifest.json");
        let raw = std::fs::read_to_string(&manifest_path)
            .map_err(|e| fail(format!("{}: {e}", manifest_path.display())))?;
        let entries = match serde_json::from_str::<Manifest>(&raw)
            .map_err(|e| fail(format!("{}: {e}", manifest_path.display())))?
        {
            Manifest::Wrapped { documents } => documents,
            Manifest::Flat(v) => v,
        };
        let mut corpus = Vec::with_capacity(entries.len());
        for e in entries {
            let p = dir.join(&e.path);
            let body = std::fs::read_to_string(&p).map_err(|err| fail(format!("{}: {err}", p.display())))?;
            corpus.push(FixtureDoc {
                url: e.url,
                title: e.title,
                body,
            });
        }
        let chat_path = dir.join("chat.json");
        let chat = if chat_path.exists() {
            let raw = std::fs::read_to_string(&chat_path)
                .map_err(|e| fail(format!("{}: {e}", chat_path.display())))?;
            serde_json::from_str(&raw).map_err(|e| fail(format!("{}: {e}", chat_path.display())))?
        } else {
            ChatFixture::default()
        };
        Ok(Self { corpus, chat })
    }
}

#[derive(Debug, Clone)]
pub struct MockSuite {
    pub chat: ProviderHandle,
    pub embed: ProviderHandle,
    pub search: ProviderHandle,
}

pub fn make_mock_suite(rng_seed: u64, fixture: &MockFixture) -> MockSuite {
    let retry = RetryPolicy::no_wait(1);
    MockSuite {
        chat: ProviderHandle::chat(
            "mock-chat",
            MockChat {
                seed: rng_seed,
                fixture: Arc::new(fixture.chat.clone()),
            },
        )
        .with_retry(retry.clone()),
        embed: ProviderHandle::embedder("mock-embed-64", MockEmbed { seed: rng_seed })
            .with_retry(retry.clone()),
        search: ProviderHandle::searcher(
            "mock-search",
            MockSearch {
                corpus: Arc::new(fixture.corpus.clone()),
            },
        )
        .with_retry(retry),
    }
}

pub struct MockEmbed {
    pub seed: u64,
}

impl MockEmbed {
    /// Feature-hashed bag of normalized words, scaled to unit length. Texts
    /// that share words have positive cosine; identical texts coincide.
    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut words: Vec<String> = tokenize(text)
            .iter()
            .map(|w| {
                casefold(w)
                    .chars()
                    .filter(|c| c.is_alphanumeric())
                    .collect::<String>()
            })
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            words.push(text.to_owned());
        }
        let mut acc = vec![0.0; MOCK_EMBED_DIM];
        for w in &words {
            let mut rng = rng_from_seed(keyed_hash(self.seed, &[w.as_bytes()]));
            for a in acc.iter_mut() {
                *a += rng.gen_range(-1.0..1.0);
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        acc.iter().map(|v| v / norm).collect()
    }
}

impl EmbedBackend for MockEmbed {
    fn model_id(&self) -> &str {
        "mock-embed-64"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

pub struct MockSearch {
    corpus: Arc<Vec<FixtureDoc>>,
}

impl SearchBackend for MockSearch {
    /// A document matches when any query term of three or more characters is
    /// a case-insensitive substring of its title or body. More matching terms
    /// rank higher; ties keep corpus order.
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchResult>, ProviderError> {
        let mut terms: Vec<String> = Vec::new();
        for t in casefold(query).split_whitespace() {
            let t = t.trim_matches(|c: char| !c.is_alphanumeric());
            if t.chars().count() >= 3 && !crate::text::is_stopword(t) && !terms.iter().any(|x| x == t) {
                terms.push(t.to_owned());
            }
        }
        let mut scored: Vec<(usize, usize)> = self
            .corpus
            .iter()
            .enumerate()
            .filter_map(|(i, d)| {
                let hay = casefold(&format!("{} {}", d.title, d.body));
                let score = terms.iter().filter(|t| hay.contains(t.as_str())).count();
                (score > 0).then_some((i, score))
            })
            .collect();
        scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(limit)
            .enumerate()
            .map(|(r, (i, _))| {
                let d = &self.corpus[i];
                SearchResult {
                    url: d.url.clone(),
                    title: d.title.clone(),
                    snippet_or_body: d.body.clone(),
                    rank: r + 1,
                }
            })
            .collect())
    }
}

pub struct MockChat {
    pub seed: u64,
    pub fixture: Arc<ChatFixture>,
}

const KINDS: [&str; 3] = ["mechanism", "property", "byproduct"];
const OPERATORS: [&str; 3] = ["Mapping", "Blending", "Inversion"];

fn header(user: &str) -> Record {
    parse_records(user)
        .ok()
        .and_then(|r| r.into_iter().next())
        .unwrap_or_default()
}

fn records(user: &str) -> Vec<Record> {
    parse_records(user).unwrap_or_default()
}

fn first_sentence_with<'a>(text: &'a str, word: &str) -> &'a str {
    text.split_terminator(['.', '!', '?', '\n'])
        .map(str::trim)
        .find(|s| casefold(s).contains(word))
        .unwrap_or("")
}

fn clip(s: &str, max_chars: usize) -> String {
    s.chars().take(max_chars).collect()
}

impl MockChat {
    fn hash(&self, parts: &[&str]) -> u64 {
        let bytes: Vec<&[u8]> = parts.iter().map(|p| p.as_bytes()).collect();
        keyed_hash(self.seed, &bytes)
    }

    fn context(&self, user: &str) -> String {
        let query = records(user)
            .iter()
            .find_map(|r| r.get("QUERY").map(str::to_owned))
            .unwrap_or_default();
        let q = casefold(&query);
        if let Some(rule) = self
            .fixture
            .context
            .iter()
            .find(|r| q.contains(&casefold(&r.query_contains)))
        {
            return rule
                .nodes
                .iter()
                .map(|n| {
                    let desc = if n.description.is_empty() {
                        format!("core entity of the query: {}", n.label)
                    } else {
                        n.description.clone()
                    };
                    render(&[("LABEL", &n.label), ("DESC", &desc)])
                })
                .collect::<Vec<_>>()
                .join("\n");
        }
        let mut labels = content_words(&query);
        labels.truncate(4);
        if labels.is_empty() {
            labels.push(clip(query.trim(), 40));
        }
        labels
            .iter()
            .map(|l| {
                render(&[
                    ("LABEL", l),
                    ("DESC", &format!("constraint stated by the query: {l}")),
                ])
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn spark(&self, user: &str) -> String {
        let chunk = evidence_sections(user).join("\n");
        let folded = casefold(&chunk);
        if let Some(rule) = self
            .fixture
            .sparks
            .iter()
            .find(|r| folded.contains(&casefold(&r.chunk_contains)))
        {
            return rule
                .nodes
                .iter()
                .map(|n| {
                    render(&[
                        ("LABEL", &n.label),
                        ("KIND", &n.kind),
                        ("RATIONALE", &n.rationale),
                    ])
                })
                .collect::<Vec<_>>()
                .join("\n");
        }
        let candidates: Vec<String> = content_words(&chunk)
            .into_iter()
            .filter(|w| w.chars().count() >= 6 && w.chars().all(char::is_alphabetic))
            .collect();
        if candidates.is_empty() {
            return "No usable sparks in this passage.".to_owned();
        }
        let h = self.hash(&["spark", &chunk]);
        let count = (1 + (h % 3) as usize).min(candidates.len());
        let picks = crate::rng::sample_indices(candidates.len(), count, h);
        picks
            .iter()
            .enumerate()
            .map(|(j, &i)| {
                let word = &candidates[i];
                let kind = KINDS[((h >> 8) as usize + j) % 3];
                let rationale = clip(first_sentence_with(&chunk, word), 200);
                render(&[("LABEL", word), ("KIND", kind), ("RATIONALE", &rationale)])
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn bridge(&self, user: &str) -> String {
        let recs = records(user);
        let src = recs.iter().find_map(|r| r.get("SRC_LABEL")).unwrap_or("source");
        let dst = recs.iter().find_map(|r| r.get("DST_LABEL")).unwrap_or("target");
        let op = match &self.fixture.bridge_operator {
            Some(op) => op.clone(),
            None => OPERATORS[(self.hash(&["bridge", src, dst]) % 3) as usize].to_owned(),
        };
        let text = match op.as_str() {
            "Mapping" => format!("carry the way '{dst}' works over to '{src}'"),
            "Blending" => format!("fuse the traits of '{src}' and '{dst}' into one composite"),
            "Inversion" => format!("use '{dst}' as the counterweight that opposes '{src}'"),
            _ => format!("relate '{src}' to '{dst}'"),
        };
        render(&[("OP", &op), ("BRIDGE", &text)])
    }

    fn generate(&self, req: &ChatRequest) -> String {
        if self.fixture.generation == GenerationStyle::Echo {
            return req.user_prompt.clone();
        }
        let user = &req.user_prompt;
        let mut pool = content_words(&protocol::authored_sections(user));
        pool.retain(|w| !w.contains('=') && !matches!(w.as_str(), "task" | "generate" | "mode"));
        for ev in evidence_sections(user) {
            for w in content_words(&ev) {
                if !pool.contains(&w) {
                    pool.push(w);
                }
            }
        }
        if pool.is_empty() {
            pool.push("idea".into());
        }
        let seed = req.seed.map(|s| s.to_string()).unwrap_or_default();
        let h = self.hash(&["generate", &req.system_prompt, user, &seed]);
        let mut rng = rng_from_seed(h);
        let words: Vec<&str> = (0..24)
            .map(|_| pool[rng.gen_range(0..pool.len())].as_str())
            .collect();
        format!("Proposal {:08x}: {}.", h as u32, words.join(" "))
    }

    fn judge(&self, user: &str) -> String {
        let mut cands: Vec<(u64, String)> = records(user)
            .iter()
            .filter_map(|r| {
                let id = r.get("CANDIDATE")?.parse().ok()?;
                Some((id, r.get("TEXT").unwrap_or("").to_owned()))
            })
            .collect();
        cands.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        if self.fixture.judge == JudgeStyle::Reverse {
            cands.reverse();
        }
        let order: Vec<String> = cands.iter().map(|(id, _)| id.to_string()).collect();
        render(&[("ORDER", &order.join(","))])
    }

    fn expert(&self, user: &str) -> String {
        let recs = records(user);
        let head = header(user);
        let persona = head.get("PERSONA").unwrap_or("");
        if let Some(spec) = self.fixture.experts.get(persona) {
            let mut lines: Vec<String> = spec
                .hypotheses
                .iter()
                .map(|h| render(&[("HYPOTHESIS", h)]))
                .collect();
            lines.push(render(&[("RATIONALE", &spec.rationale)]));
            lines.extend(spec.queries.iter().map(|q| render(&[("QUERY", q)])));
            return lines.join("\n");
        }
        let specialty = recs
            .iter()
            .find_map(|r| r.get("SPECIALTY"))
            .unwrap_or("generalist")
            .to_owned();
        let labels: Vec<&str> = recs.iter().filter_map(|r| r.get("LABEL")).collect();
        let subject = recs.iter().find_map(|r| r.get("SUBJECT")).unwrap_or("");
        let focus = recs.iter().find_map(|r| r.get("FOCUS")).unwrap_or("");
        let query = if labels.is_empty() {
            format!("{subject} {focus}")
        } else {
            format!("{} {focus}", labels.join(" "))
        };
        [
            render(&[(
                "HYPOTHESIS",
                &format!("Undifferentiated {} condition", casefold(&specialty)),
            )]),
            render(&[("RATIONALE", &format!("{specialty} reading of the presentation"))]),
            render(&[("QUERY", query.trim())]),
        ]
        .join("\n")
    }

    fn diagnose(&self, user: &str) -> String {
        let head = header(user);
        let top_n: usize = head.get("TOP_N").and_then(|n| n.parse().ok()).unwrap_or(10);
        let evidence = casefold(&evidence_sections(user).join("\n"));
        let mut pool: Vec<(String, u64)> = Vec::new();
        for r in records(user) {
            if let Some(h) = r.get("HYPOTHESIS") {
                let votes = r.get("VOTES").and_then(|v| v.parse().ok()).unwrap_or(1);
                if !pool.iter().any(|(p, _)| casefold(p) == casefold(h)) {
                    pool.push((h.to_owned(), votes));
                }
            }
        }
        for d in &self.fixture.differential_pool {
            if !pool.iter().any(|(p, _)| casefold(p) == casefold(d)) {
                pool.push((d.clone(), 0));
            }
        }
        let mut scored: Vec<(usize, u64, &str)> = pool
            .iter()
            .enumerate()
            .map(|(i, (name, votes))| {
                let mentions = evidence.matches(&casefold(name)).count() as u64;
                (i, votes * 10 + mentions, name.as_str())
            })
            .collect();
        scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
            .iter()
            .take(top_n)
            .enumerate()
            .map(|(r, (_, _, name))| render(&[("RANK", &(r + 1).to_string()), ("DISEASE", name)]))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl ChatBackend for MockChat {
    fn complete(&self, req: &ChatRequest) -> Result<ChatOutput, ProviderError> {
        let user = req.user_prompt.as_str();
        let text = if let Some(rest) = user.strip_prefix("echo:") {
            rest.to_owned()
        } else {
            match task_of(user) {
                Some(protocol::TASK_CONTEXT) => self.context(user),
                Some(protocol::TASK_SPARK) => self.spark(user),
                Some(protocol::TASK_BRIDGE) => self.bridge(user),
                Some(protocol::TASK_GENERATE) => self.generate(req),
                Some(protocol::TASK_JUDGE) => self.judge(user),
                Some(protocol::TASK_EXPERT) => self.expert(user),
                Some(protocol::TASK_DIAGNOSE) => self.diagnose(user),
                _ => format!("mock reply {:016x}", self.hash(&[&req.system_prompt, user])),
            }
        };
        Ok(ChatOutput {
            usage: Usage::estimate(req, &text),
            text,
        })
    }
}
