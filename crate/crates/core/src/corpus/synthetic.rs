//! Templated multi-hop micro-corpus in the HotPotQA raw format.
//!
//! Each bridge example links a person document to a city document: the
//! person document states where the person was born, works and studied, the
//! city document names the country of one of those cities, and the question
//! asks for that country via the matching relation. Distractor documents are
//! about other cities in other countries and are removed by filtering.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::raw::{convert_record, RawRecord};
use super::QAExample;

const FIRST: [&str; 16] = [
    "anna", "boris", "carla", "dmitri", "elena", "farid", "greta", "hugo", "irina", "jonas", "katya", "luca", "mira",
    "nikos", "olga", "pavel",
];
const LAST: [&str; 12] =
    ["kovac", "novak", "berger", "lindqvist", "moreau", "rossi", "hale", "dvorak", "varga", "weiss", "sato", "okafor"];
const CITIES: [&str; 20] = [
    "brno", "lyon", "porto", "graz", "split", "ghent", "turku", "malmo", "bergen", "cork", "leipzig", "bilbao",
    "kosice", "plovdiv", "tartu", "kaunas", "szeged", "bari", "aarhus", "nantes",
];
const COUNTRIES: [&str; 10] =
    ["czechia", "france", "portugal", "austria", "croatia", "belgium", "finland", "sweden", "norway", "ireland"];
const FEATURES: [&str; 6] = ["harbor", "cathedral", "university", "bridge", "market", "castle"];
const SYLLABLES: [&str; 40] = [
    "ka", "lo", "mi", "ren", "tu", "sa", "vel", "do", "ri", "pon", "na", "gi", "bre", "sto", "lun", "fa", "qui", "zor",
    "el", "mat", "ish", "ba", "cor", "den", "ev", "hol", "jar", "kin", "lem", "nor", "ost", "pel", "ral", "sim", "tor",
    "ul", "vin", "wes", "yan", "zu",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Relation {
    Born,
    Works,
    Studied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub examples: usize,
    pub seed: u64,
    /// Share of comparison yes/no records (all removed by filtering).
    pub comparison_fraction: f64,
    /// Distractor documents per record.
    pub distractors: usize,
    /// Sentences of random pseudo-words appended to every document.
    pub filler_sentences: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { examples: 20, seed: 0, comparison_fraction: 0.0, distractors: 2, filler_sentences: 0 }
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=4);
    (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect()
}

fn level(rng: &mut ChaCha8Rng) -> &'static str {
    let x: f64 = rng.gen();
    if x < 0.25 {
        "easy"
    } else if x < 0.75 {
        "medium"
    } else {
        "hard"
    }
}

fn bridge(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, index: usize) -> RawRecord {
    let person = format!("{} {}", FIRST.choose(rng).unwrap(), LAST.choose(rng).unwrap());
    let cities: Vec<&str> = CITIES.choose_multiple(rng, 3 + cfg.distractors).copied().collect();
    let (born, works, studied) = (cities[0], cities[1], cities[2]);
    let relation = *[Relation::Born, Relation::Works, Relation::Studied].choose(rng).unwrap();
    let target = match relation {
        Relation::Born => born,
        Relation::Works => works,
        Relation::Studied => studied,
    };
    let countries: Vec<&str> = COUNTRIES.choose_multiple(rng, 1 + cfg.distractors).copied().collect();
    let country = countries[0];

    let mut person_sents = vec![
        (Relation::Born, format!("{person} was born in {born} .")),
        (Relation::Works, format!("{person} works in {works} .")),
        (Relation::Studied, format!("{person} studied in {studied} .")),
    ];
    person_sents.shuffle(rng);
    let person_sf = person_sents.iter().position(|(r, _)| *r == relation).unwrap();

    let feature = FEATURES.choose(rng).unwrap();
    let mut city_sents = vec![
        (true, format!("{target} is a city in {country} .")),
        (false, format!("{target} is known for its {feature} .")),
    ];
    city_sents.shuffle(rng);
    let city_sf = city_sents.iter().position(|(sf, _)| *sf).unwrap();

    let question = match relation {
        Relation::Born => format!("in which country is the city where {person} was born ?"),
        Relation::Works => format!("which country is home to the city where {person} works ?"),
        Relation::Studied => format!("{person} studied in a city located in which country ?"),
    };

    let mut context = vec![
        (person.clone(), person_sents.into_iter().map(|(_, s)| s).collect::<Vec<_>>()),
        (target.to_string(), city_sents.into_iter().map(|(_, s)| s).collect()),
    ];
    for d in 0..cfg.distractors {
        let city = cities[3 + d];
        let sents = vec![
            format!("{city} is a city in {} .", countries[1 + d]),
            format!("{city} is known for its {} .", FEATURES.choose(rng).unwrap()),
        ];
        context.push((city.to_string(), sents));
    }
    for (_, sents) in &mut context {
        for _ in 0..cfg.filler_sentences {
            let words: Vec<String> = (0..rng.gen_range(4..9)).map(|_| pseudo_word(rng)).collect();
            sents.push(format!("{} .", words.join(" ")));
        }
    }
    context.shuffle(rng);

    RawRecord {
        id: format!("synth-{index:06}"),
        question,
        answer: country.to_string(),
        question_type: "bridge".into(),
        level: level(rng).into(),
        supporting_facts: vec![(person, person_sf), (target.to_string(), city_sf)],
        context,
    }
}

fn comparison(rng: &mut ChaCha8Rng, index: usize) -> RawRecord {
    let a = format!("{} {}", FIRST.choose(rng).unwrap(), LAST.choose(rng).unwrap());
    let b = format!("{} {}", FIRST.choose(rng).unwrap(), LAST.choose(rng).unwrap());
    let ca = CITIES.choose(rng).unwrap();
    let cb = CITIES.choose(rng).unwrap();
    RawRecord {
        id: format!("synth-{index:06}"),
        question: format!("were {a} and {b} born in the same city ?"),
        answer: if ca == cb { "yes" } else { "no" }.into(),
        question_type: "comparison".into(),
        level: level(rng).into(),
        supporting_facts: vec![(a.clone(), 0), (b.clone(), 0)],
        context: vec![
            (a.clone(), vec![format!("{a} was born in {ca} .")]),
            (b.clone(), vec![format!("{b} was born in {cb} .")]),
        ],
    }
}

/// Raw records, deterministic in `cfg.seed`.
pub fn generate_raw(cfg: &SyntheticConfig) -> Vec<RawRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.examples)
        .map(|i| {
            if rng.gen::<f64>() < cfg.comparison_fraction {
                comparison(&mut rng, i)
            } else {
                bridge(&mut rng, cfg, i)
            }
        })
        .collect()
}

/// Parsed examples (before filtering).
pub fn generate_examples(cfg: &SyntheticConfig) -> Vec<QAExample> {
    generate_raw(cfg)
        .into_iter()
        .enumerate()
        .map(|(i, r)| convert_record(r, i).expect("synthetic records are well formed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::filter_examples;

    #[test]
    fn bridge_examples_survive_filtering_with_two_documents() {
        let cfg = SyntheticConfig { examples: 50, seed: 9, ..Default::default() };
        let (kept, report) = filter_examples(generate_examples(&cfg));
        assert_eq!(kept.len(), 50);
        assert_eq!(report.documents_removed, 100);
        for ex in &kept {
            assert_eq!(ex.documents.len(), 2);
            assert_eq!(ex.supporting_facts.len(), 2);
            ex.validate().unwrap();
        }
    }

    #[test]
    fn comparison_records_are_filtered() {
        let cfg = SyntheticConfig { examples: 100, seed: 1, comparison_fraction: 0.3, ..Default::default() };
        let raw = generate_raw(&cfg);
        let n_cmp = raw.iter().filter(|r| r.question_type == "comparison").count();
        assert!(n_cmp > 10);
        let (kept, report) = filter_examples(generate_examples(&cfg));
        assert_eq!(report.dropped_comparison_yes_no, n_cmp);
        assert_eq!(kept.len(), 100 - n_cmp);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig { examples: 5, seed: 4, filler_sentences: 2, ..Default::default() };
        assert_eq!(generate_raw(&cfg), generate_raw(&cfg));
    }
}
