//! Regenerates the sample corpus and fixture embeddings under `data/`.
//!
//! cargo run -p artrec-core --example make_fixtures -- [data-dir]
//!
//! The corpus is 30 invented paintings in 9 story groups of 3, plus 3
//! without a group. `lda.tsv` holds document-topic mixtures of a k = 10 model
//! trained on it; `bert.tsv` (384-d) and `resnet.tsv` (2048-d) are synthetic
//! vectors clustered by story group.

use std::path::PathBuf;

use artrec_core::corpus::{save_corpus, Corpus, Painting};
use artrec_core::embed::EmbeddingSet;
use artrec_core::lda::{train_lda, LdaConfig};
use artrec_core::synth::grouped_embeddings;
use artrec_core::textprep::{build_vocabulary, preprocess_all, Stopwords, DEFAULT_MIN_COUNT};

struct Theme {
    group: &'static str,
    titles: [&'static str; 3],
    words: &'static str,
}

const THEMES: [Theme; 9] = [
    Theme {
        group: "saints-and-martyrs",
        titles: ["Saint Jerome in the Wilderness", "The Martyrdom of Saint Sebastian", "Saint Catherine at Prayer"],
        words: "saint martyr prayer halo wilderness relics devotion altarpiece praying kneeling",
    },
    Theme {
        group: "madonna-and-child",
        titles: ["The Virgin and Child Enthroned", "Madonna of the Meadow", "The Virgin Suckling the Child"],
        words: "virgin child madonna throne angels mother infant blue mantle tenderness",
    },
    Theme {
        group: "landscapes",
        titles: ["River Landscape with Cattle", "A View of the Valley at Dusk", "Wooded Landscape with Travellers"],
        words: "landscape river trees valley hills cattle sky clouds travellers distance",
    },
    Theme {
        group: "portraits",
        titles: ["Portrait of a Young Man", "Portrait of a Merchant", "Portrait of a Lady in Black"],
        words: "portrait sitter gaze costume collar merchant lady gloves likeness wealth",
    },
    Theme {
        group: "still-life",
        titles: ["Still Life with Lemons", "Flowers in a Glass Vase", "A Table with Oysters and Wine"],
        words: "still life flowers fruit lemons vase table glass wine oysters blossoms",
    },
    Theme {
        group: "seascapes",
        titles: ["Ships in a Storm", "A Calm at Sea", "The Harbour at Morning"],
        words: "sea ships storm waves harbour sails boats coast sailors water",
    },
    Theme {
        group: "mythology",
        titles: ["Venus and Adonis", "The Judgement of Paris", "Bacchus and Ariadne"],
        words: "goddess gods venus nymphs myth love hunter heroes chariot olympus",
    },
    Theme {
        group: "everyday-life",
        titles: ["A Woman Reading a Letter", "Card Players in a Tavern", "The Village Market"],
        words: "interior tavern market peasants letter domestic kitchen card players villagers",
    },
    Theme {
        group: "history-and-battle",
        titles: ["The Battle of San Romano", "The Surrender of the City", "A Cavalry Skirmish"],
        words: "battle soldiers horses cavalry armour victory siege lances banners war",
    },
];

const LOOSE: [(&str, &str); 3] = [
    ("Study of a Cloud", "sky clouds light study sketch oil paper weather"),
    ("An Architectural Capriccio", "ruins columns arches architecture fantasy capriccio stone"),
    ("Head of an Old Man", "head study beard old man sketch light shadow"),
];

const ARTISTS: [&str; 9] = [
    "Workshop of a Florentine Master",
    "Circle of a Venetian Painter",
    "A Dutch Landscape Painter",
    "A Flemish Portraitist",
    "A Delft Still-Life Painter",
    "A Marine Painter",
    "A Bolognese Painter",
    "A Haarlem Genre Painter",
    "A Sienese Painter",
];

fn description(words: &str, variant: usize) -> String {
    let w: Vec<&str> = words.split_whitespace().collect();
    let pick = |i: usize| w[(i + variant * 3) % w.len()];
    format!(
        "The picture shows {} and {} with {}. The {} and the {} suggest {}, while {} and {} fill the background. {} {}.",
        pick(0),
        pick(1),
        pick(2),
        pick(3),
        pick(4),
        pick(5),
        pick(6),
        pick(7),
        capitalize(pick(8)),
        pick(9),
    )
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sample_corpus() -> Corpus {
    let mut paintings = Vec::new();
    let mut n = 0;
    for (g, theme) in THEMES.iter().enumerate() {
        for (v, title) in theme.titles.iter().enumerate() {
            n += 1;
            let mut p = Painting::new(format!("NG{:04}", n), *title)
                .with_story_group(theme.group)
                .with_description(description(theme.words, v));
            p.artist = ARTISTS[g].into();
            p.date = format!("about {}", 1450 + g * 25 + v * 5);
            p.technique = if g < 2 { "Tempera on wood" } else { "Oil on canvas" }.into();
            p.image_ref = format!("images/NG{:04}.jpg", n);
            paintings.push(p);
        }
    }
    for (title, words) in LOOSE {
        n += 1;
        let mut p = Painting::new(format!("NG{:04}", n), title).with_description(description(words, 0));
        p.artist = "Unknown artist".into();
        p.date = "18th century".into();
        p.technique = "Oil on paper".into();
        p.image_ref = format!("images/NG{:04}.jpg", n);
        paintings.push(p);
    }
    Corpus::new(paintings).expect("valid sample corpus")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    let fixtures = root.join("fixtures");
    std::fs::create_dir_all(&fixtures)?;

    let corpus = sample_corpus();
    save_corpus(&corpus, root.join("sample_corpus.jsonl"))?;

    let docs = preprocess_all(corpus.paintings(), &Stopwords::english());
    let vocab = build_vocabulary(&docs, DEFAULT_MIN_COUNT)?;
    let model = train_lda(&docs, &vocab, LdaConfig::with_k(10))?;
    let rows = corpus
        .ids()
        .map(|id| Ok((id.to_string(), model.doc_embedding(id)?.to_vec())))
        .collect::<Result<Vec<_>, artrec_core::lda::LdaError>>()?;
    EmbeddingSet::new("lda", rows)?.save(fixtures.join("lda.tsv"))?;
    grouped_embeddings(&corpus, "bert", 384, 0.6, 384).save(fixtures.join("bert.tsv"))?;
    grouped_embeddings(&corpus, "resnet", 2048, 0.8, 2048).save(fixtures.join("resnet.tsv"))?;
    println!("wrote {} paintings and 3 embedding files under {}", corpus.len(), root.display());
    Ok(())
}
