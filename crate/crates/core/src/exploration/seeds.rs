use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExplorationError;
use crate::rng::sample_indices;
use crate::text::{casefold, content_words};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    nouns: Vec<String>,
    source_id: String,
}

impl Lexicon {
    /// Entries must be non-empty and unique after case-folding.
    pub fn new(nouns: Vec<String>, source_id: impl Into<String>) -> Result<Self, ExplorationError> {
        if nouns.is_empty() {
            return Err(ExplorationError::InvalidLexicon("no nouns".into()));
        }
        let mut seen = HashSet::new();
        for n in &nouns {
            if n.trim().is_empty() {
                return Err(ExplorationError::InvalidLexicon("blank entry".into()));
            }
            if !seen.insert(casefold(n.trim())) {
                return Err(ExplorationError::InvalidLexicon(format!("duplicate noun `{n}`")));
            }
        }
        Ok(Self {
            nouns: nouns.into_iter().map(|n| n.trim().to_owned()).collect(),
            source_id: source_id.into(),
        })
    }

    /// One noun per line; `#` starts a comment. Case-insensitive repeats keep
    /// their first spelling.
    pub fn parse(text: &str, source_id: impl Into<String>) -> Result<Self, ExplorationError> {
        let mut seen = HashSet::new();
        let nouns: Vec<String> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .filter(|l| seen.insert(casefold(l)))
            .map(str::to_owned)
            .collect();
        Self::new(nouns, source_id)
    }

    /// The bundled list of concrete nouns.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../assets/nouns.txt"), "builtin-nouns")
            .expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path, source_id: impl Into<String>) -> Result<Self, ExplorationError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExplorationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, source_id)
    }

    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.nouns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nouns.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub seeds: Vec<String>,
    pub rng_seed: u64,
    pub lexicon_id: String,
}

impl SeedSet {
    /// Seeds supplied by an expert panel rather than drawn from a lexicon.
    pub fn semantic(queries: Vec<String>, rng_seed: u64) -> Self {
        Self {
            seeds: queries,
            rng_seed,
            lexicon_id: "expert-panel".into(),
        }
    }
}

/// Draw `k` distinct nouns uniformly without replacement.
pub fn sample_seeds(lexicon: &Lexicon, k: usize, rng_seed: u64) -> Result<SeedSet, ExplorationError> {
    if k > lexicon.len() {
        return Err(ExplorationError::LexiconTooSmall {
            k,
            available: lexicon.len(),
        });
    }
    let seeds = sample_indices(lexicon.len(), k, rng_seed)
        .into_iter()
        .map(|i| lexicon.nouns[i].clone())
        .collect();
    Ok(SeedSet {
        seeds,
        rng_seed,
        lexicon_id: lexicon.source_id.clone(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    /// `<seed> <query keywords>`.
    #[default]
    Syntactic,
    /// The seed alone.
    Bare,
    /// Seeds are complete queries written by the expert panel.
    Semantic,
}

/// One query per seed, in seed order.
pub fn build_queries(seed_set: &SeedSet, query: &str, mode: QueryMode) -> Vec<String> {
    let keywords = content_words(query).join(" ");
    seed_set
        .seeds
        .iter()
        .map(|seed| match mode {
            QueryMode::Syntactic if !keywords.is_empty() => format!("{seed} {keywords}"),
            QueryMode::Syntactic | QueryMode::Bare | QueryMode::Semantic => seed.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon(n: usize) -> Lexicon {
        Lexicon::new((0..n).map(|i| format!("noun{i}")).collect(), "test").unwrap()
    }

    #[test]
    fn forced_draw_returns_everything() {
        let lex = lexicon(3);
        let s = sample_seeds(&lex, 3, 5).unwrap();
        let mut got = s.seeds.clone();
        got.sort();
        assert_eq!(got, vec!["noun0", "noun1", "noun2"]);
    }

    #[test]
    fn draws_are_deterministic() {
        let lex = lexicon(10);
        assert_eq!(
            sample_seeds(&lex, 3, 42).unwrap(),
            sample_seeds(&lex, 3, 42).unwrap()
        );
    }

    #[test]
    fn too_small_lexicon() {
        assert!(matches!(
            sample_seeds(&lexicon(2), 3, 0),
            Err(ExplorationError::LexiconTooSmall { k: 3, available: 2 })
        ));
    }

    #[test]
    fn draw_frequencies_are_uniform() {
        // Uniform sampling without replacement includes each noun with
        // probability k / n = 0.3.
        let lex = lexicon(10);
        let trials = 10_000u64;
        let mut counts = [0usize; 10];
        for seed in 0..trials {
            let s = sample_seeds(&lex, 3, seed).unwrap();
            assert_eq!(s.seeds.iter().collect::<HashSet<_>>().len(), 3);
            for n in s.seeds {
                counts[n[4..].parse::<usize>().unwrap()] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / trials as f64;
            assert!((0.25..=0.35).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn lexicon_parsing() {
        let lex = Lexicon::parse("# nouns\napple\n\nPear # fruit\napple\nAPPLE\n", "g").unwrap();
        assert_eq!(lex.nouns(), &["apple".to_string(), "Pear".to_string()]);
        assert!(Lexicon::parse("# only comments\n", "g").is_err());
        assert!(Lexicon::new(vec!["a".into(), "A".into()], "g").is_err());
    }

    #[test]
    fn query_construction() {
        let s = SeedSet {
            seeds: vec!["a".into(), "b".into(), "c".into()],
            rng_seed: 0,
            lexicon_id: "t".into(),
        };
        let q = build_queries(&s, "How do remote teams communicate?", QueryMode::Syntactic);
        assert_eq!(q.len(), 3);
        assert_eq!(q[0], "a remote teams communicate");
        assert_eq!(
            build_queries(&s, "whatever", QueryMode::Bare),
            vec!["a", "b", "c"]
        );

        let prism = SeedSet {
            seeds: vec!["prism".into()],
            rng_seed: 0,
            lexicon_id: "t".into(),
        };
        assert_eq!(build_queries(&prism, "", QueryMode::Syntactic), vec!["prism"]);
    }

    #[test]
    fn semantic_mode_passes_expert_queries_through() {
        let qs = vec![
            "glutaric acidemia type I dystonia".to_string(),
            "secondary carnitine deficiency".to_string(),
        ];
        let s = SeedSet::semantic(qs.clone(), 1);
        assert_eq!(build_queries(&s, "diagnose this", QueryMode::Semantic), qs);
    }
}
