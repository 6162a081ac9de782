//! Ratings files: one `painting_id rating` pair per line, `#` starts a comment.

use std::path::Path;

use anyhow::{bail, Context};
use artrec_core::{Corpus, UserRatings};

pub fn parse(text: &str) -> anyhow::Result<Vec<(String, u8)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        let [id, value] = fields[..] else {
            bail!("line {}: expected `painting_id rating`, got {raw:?}", i + 1);
        };
        let rating: u8 = value
            .parse()
            .ok()
            .filter(|r| (1..=5).contains(r))
            .with_context(|| format!("line {}: rating {value:?} is not an integer in 1..=5", i + 1))?;
        out.push((id.to_string(), rating));
    }
    if out.is_empty() {
        bail!("no ratings found");
    }
    Ok(out)
}

/// Reads and checks every id against the corpus.
pub fn load(path: &Path, corpus: &Corpus) -> anyhow::Result<UserRatings> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading ratings {}", path.display()))?;
    let entries = parse(&text).with_context(|| format!("ratings {}", path.display()))?;
    if let Some((id, _)) = entries.iter().find(|(id, _)| !corpus.contains(id)) {
        bail!("ratings {}: painting {id} is not in the corpus", path.display());
    }
    UserRatings::new(entries).with_context(|| format!("ratings {}", path.display()))
}
