//! Seeded synthetic benchmark: a fixture article store plus a dialogue
//! dataset whose gold article is always reachable from the candidate pool,
//! so the ceiling recall is 1.0 by construction.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pipeline::dataset::{DatasetRecord, DatasetTurn};
use crate::search::FixtureEngine;

const SYLLABLES: [&str; 16] = [
    "ba", "do", "ri", "ka", "lu", "me", "no", "pi", "sa", "tu", "ve", "zo", "fa", "gi", "hu", "ny",
];

const FILLERS: [&str; 12] = [
    "ensemble", "movement", "province", "festival", "craft", "style", "village", "tradition",
    "genre", "region", "company", "discipline",
];

/// Articles plus dialogues, both fully determined by the seed.
#[derive(Debug)]
pub struct SyntheticBenchmark {
    pub engine: FixtureEngine,
    pub titles: Vec<String>,
    pub dataset: Vec<DatasetRecord>,
}

fn pseudo_word(rng: &mut ChaCha8Rng, used: &mut std::collections::HashSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(3..=4);
        let word: String = (0..syllables)
            .map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())])
            .collect();
        if used.insert(word.clone()) {
            return word;
        }
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

struct SynthArticle {
    title: String,
    summary: String,
    sentences: Vec<String>,
}

fn make_article(rng: &mut ChaCha8Rng, used: &mut std::collections::HashSet<String>) -> SynthArticle {
    let title_words = if rng.gen_bool(0.3) { 2 } else { 1 };
    let title = (0..title_words)
        .map(|_| capitalize(&pseudo_word(rng, used)))
        .collect::<Vec<_>>()
        .join(" ");
    let fact_a = pseudo_word(rng, used);
    let fact_b = pseudo_word(rng, used);
    let filler_a = FILLERS[rng.gen_range(0..FILLERS.len())];
    let filler_b = FILLERS[rng.gen_range(0..FILLERS.len())];
    let sentences = vec![
        format!("{title} is a {filler_a} from the {fact_a} region."),
        format!("The {filler_b} of {title} began near {fact_b}."),
        format!("Many consider {title} an important {filler_a}."),
    ];
    SynthArticle {
        summary: sentences.join(" "),
        title,
        sentences,
    }
}

/// Generate `n_articles` fixture articles and `n_dialogues` dialogues.
pub fn generate_synthetic_benchmark(
    seed: u64,
    n_articles: usize,
    n_dialogues: usize,
) -> SyntheticBenchmark {
    assert!(n_articles >= 3 && n_dialogues >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used: std::collections::HashSet<String> =
        FILLERS.iter().map(|s| s.to_string()).collect();

    let articles: Vec<SynthArticle> = (0..n_articles)
        .map(|_| make_article(&mut rng, &mut used))
        .collect();

    let mut engine = FixtureEngine::new();
    for article in &articles {
        engine.add_article(&article.title, &article.summary);
    }
    let titles: Vec<String> = articles.iter().map(|a| a.title.clone()).collect();

    let mut dataset = Vec::with_capacity(n_dialogues);
    for _ in 0..n_dialogues {
        dataset.push(make_dialogue(&mut rng, &articles));
    }

    SyntheticBenchmark {
        engine,
        titles,
        dataset,
    }
}

fn make_dialogue(rng: &mut ChaCha8Rng, articles: &[SynthArticle]) -> DatasetRecord {
    let mut ids: Vec<usize> = (0..articles.len()).collect();
    ids.shuffle(rng);
    let gold = &articles[ids[0]];
    let distractors: Vec<&SynthArticle> = ids[1..3].iter().map(|&i| &articles[i]).collect();

    let mut turns: Vec<DatasetTurn> = Vec::new();
    // The gold topic surfaces either once (last turn only, with one
    // distractor echoed across two turns) or twice across the dialogue.
    let gold_repeated = rng.gen_bool(0.6);
    let opener = [
        "i was reading about {} yesterday and it was fascinating",
        "a friend keeps telling me about {} lately",
        "someone at work would not stop talking about {}",
    ];
    let follow = [
        "honestly {} never interested me that much",
        "i could take or leave {} to be fair",
        "{} seemed a bit much for my taste",
    ];
    turns.push(DatasetTurn {
        speaker: "apprentice".into(),
        text: opener[rng.gen_range(0..opener.len())].replace("{}", &distractors[0].title),
    });
    if gold_repeated {
        turns.push(DatasetTurn {
            speaker: "wizard".into(),
            text: follow[rng.gen_range(0..follow.len())].replace("{}", &gold.title),
        });
    } else {
        // Echo the first distractor so plain frequency ranking prefers it.
        turns.push(DatasetTurn {
            speaker: "wizard".into(),
            text: follow[rng.gen_range(0..follow.len())].replace("{}", &distractors[0].title),
        });
    }
    if rng.gen_bool(0.5) {
        turns.push(DatasetTurn {
            speaker: "apprentice".into(),
            text: format!("have you heard anything about {}", distractors[1].title),
        });
    }
    let closers = [
        "these days my favorite topic is definitely {}",
        "lately i have been really into {}",
        "what can you tell me about {}",
    ];
    turns.push(DatasetTurn {
        speaker: "apprentice".into(),
        text: closers[rng.gen_range(0..closers.len())].replace("{}", &gold.title),
    });

    // The gold response copies summary sentences, sometimes with the title
    // replaced by a pronoun, plus conversational noise.
    let n_sentences = rng.gen_range(1..=2);
    let mut response = gold.sentences[..n_sentences].join(" ");
    let inject_pronoun = rng.gen_bool(0.5);
    let mut mentions = Vec::new();
    if inject_pronoun {
        response = response.replacen(&gold.title, "It", 1);
        mentions.push(gold.title.clone());
    }
    response.push_str(" well i think that is really quite interesting");

    DatasetRecord {
        turns,
        gold_response: response,
        gold_titles: vec![gold.title.clone()],
        coref_mentions: Some(mentions),
    }
}
