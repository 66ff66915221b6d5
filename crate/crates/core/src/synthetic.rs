//! A small synthetic two-hop world for demos and tests.
//!
//! Each item is a film, its director and the director's birthplace. The
//! corpus holds three documents per item: the film page, the person page
//! and a soundtrack page that mentions the film heavily but never names
//! the director. For the first-hop query the soundtrack page outranks the
//! film page, which makes `k = 1` insufficient.
//!
//! The policies here read only the prompt they are given: the question,
//! earlier steps and retrieved documents. They never look the answer up.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::eval::GoldEntry;
use crate::normalize;
use crate::policy::{fingerprint, BackendError, PolicyBackend, PolicyRequest, TemplateName};
use crate::retrieval::Document;

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "re", "tu", "va", "ne", "si", "do", "ra", "pe", "zo", "li", "bu", "ge", "fo",
];

fn word(n: usize) -> String {
    // bijective scramble over 16^3 three-syllable words
    let n = (n * 2713 + 101) % 4096;
    [n / 256, (n / 16) % 16, n % 16]
        .iter()
        .map(|&i| SYLLABLES[i])
        .collect()
}

fn capitalized(n: usize) -> String {
    let w = word(n);
    let mut chars = w.chars();
    let first = chars
        .next()
        .expect("words are non-empty")
        .to_ascii_uppercase();
    std::iter::once(first).chain(chars).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoHopItem {
    pub id: String,
    pub film: String,
    pub director: String,
    pub city: String,
}

impl TwoHopItem {
    pub fn question(&self) -> String {
        format!("Where was the director of {} born?", self.film)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoHopWorld {
    pub items: Vec<TwoHopItem>,
}

impl TwoHopWorld {
    /// `n` items, `3n` documents. At most 800 items.
    pub fn generate(n: usize) -> Self {
        assert!(n <= 800, "name space holds 800 items");
        let items = (0..n)
            .map(|i| TwoHopItem {
                id: format!("q{i:02}"),
                film: format!("{} {}", capitalized(5 * i), capitalized(5 * i + 1)),
                director: format!("{} {}", capitalized(5 * i + 2), capitalized(5 * i + 3)),
                city: capitalized(5 * i + 4),
            })
            .collect();
        TwoHopWorld { items }
    }

    pub fn documents(&self) -> Vec<Document> {
        let mut docs = Vec::with_capacity(self.items.len() * 3);
        for (i, it) in self.items.iter().enumerate() {
            docs.push(Document::new(
                format!("film-{i:02}"),
                it.film.clone(),
                format!("{} is a film directed by {}.", it.film, it.director),
            ));
            docs.push(Document::new(
                format!("person-{i:02}"),
                it.director.clone(),
                format!("{} was born in {}.", it.director, it.city),
            ));
            docs.push(Document::new(
                format!("sound-{i:02}"),
                format!("{} (soundtrack)", it.film),
                format!(
                    "Music from {f}, with notes on who scored {f} and who sang on {f}.",
                    f = it.film
                ),
            ));
        }
        docs
    }

    pub fn gold(&self) -> Vec<GoldEntry> {
        self.items
            .iter()
            .map(|it| GoldEntry {
                id: it.id.clone(),
                question: it.question(),
                golden_answers: vec![it.city.clone()],
            })
            .collect()
    }

    /// Corpus as JSONL, one `{id, title, contents}` per line.
    pub fn corpus_jsonl(&self) -> String {
        self.documents()
            .iter()
            .map(|d| {
                serde_json::json!({"id": d.id, "title": d.title, "contents": d.contents})
                    .to_string()
                    + "\n"
            })
            .collect()
    }

    pub fn gold_jsonl(&self) -> String {
        self.gold()
            .iter()
            .map(|g| serde_json::to_string(g).expect("gold serializes") + "\n")
            .collect()
    }
}

/// What a policy can see in a prompt.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct PromptView {
    pub question: String,
    pub thoughts: Vec<String>,
    pub documents: Vec<(String, String)>,
    pub golden_answers: Vec<String>,
}

impl PromptView {
    pub fn parse(user: &str) -> Self {
        let mut view = PromptView::default();
        let mut section = "";
        let mut lines = user.lines().peekable();
        while let Some(line) = lines.next() {
            if let Some(q) = line.strip_prefix("Question: ") {
                view.question = q.to_owned();
            } else if let Some(g) = line.strip_prefix("Golden answers: ") {
                view.golden_answers = g.split(" | ").map(str::to_owned).collect();
            } else if line == "Previous thoughts:" || line == "Documents:" {
                section = line;
            } else if line.is_empty() {
                section = "";
            } else if section == "Previous thoughts:" {
                view.thoughts.push(line.to_owned());
            } else if section == "Documents:" {
                if let Some(rest) = line.strip_prefix("Doc ") {
                    let title = rest
                        .split_once(": ")
                        .map(|(_, t)| t)
                        .unwrap_or("")
                        .to_owned();
                    let contents = lines.next().unwrap_or("").to_owned();
                    view.documents.push((title, contents));
                }
            }
        }
        view
    }

    fn payloads(&self, tag: &str) -> Vec<String> {
        let open = format!("<{tag}>");
        let close = format!("</{tag}>");
        self.thoughts
            .iter()
            .filter_map(|t| {
                let start = t.find(&open)? + open.len();
                let end = t[start..].find(&close)? + start;
                Some(t[start..end].trim().to_owned())
            })
            .collect()
    }

    pub fn evidence(&self) -> Vec<String> {
        self.payloads("evidence")
    }

    pub fn queries(&self) -> Vec<String> {
        self.payloads("query")
    }

    pub fn answer(&self) -> Option<String> {
        self.payloads("answer").pop()
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let to = text[from..].find(end)? + from;
    Some(text[from..to].trim())
}

fn film_of(question: &str) -> Option<&str> {
    between(question, "director of ", " born?")
}

fn director_in(evidence: &[String]) -> Option<String> {
    evidence
        .iter()
        .find_map(|e| between(e, "directed by ", ".").map(str::to_owned))
}

fn city_in(evidence: &[String]) -> Option<String> {
    evidence
        .iter()
        .find_map(|e| between(e, "born in ", ".").map(str::to_owned))
}

/// Follows the film page to the director, then the person page to the city.
fn oracle_reasoning(view: &PromptView) -> String {
    let evidence = view.evidence();
    if let Some(city) = city_in(&evidence) {
        return format!(
            "The director was born in {city}. So the answer is <answer>{city}</answer>"
        );
    }
    if let Some(director) = director_in(&evidence) {
        return format!(
            "Now I need the birthplace of {director}. <query>Where was {director} born?</query>"
        );
    }
    let film = film_of(&view.question).unwrap_or(&view.question);
    format!("First I need the director of {film}. <query>Who directed {film}?</query>")
}

/// Looks for the sentence that answers the pending query.
fn oracle_grounding(view: &PromptView) -> String {
    let marker = match view.queries().last() {
        Some(q) if q.starts_with("Who directed") => " directed by ",
        Some(_) => " was born in ",
        None => return "<evidence>None</evidence>".into(),
    };
    view.documents
        .iter()
        .find(|(_, contents)| contents.contains(marker))
        .map(|(_, contents)| format!("<evidence>{contents}</evidence>"))
        .unwrap_or_else(|| "<evidence>None</evidence>".into())
}

/// Progress score on the 0-100 scale, from the trajectory alone.
fn judge(view: &PromptView) -> String {
    let norm_golds: Vec<Vec<String>> = view.golden_answers.iter().map(|g| normalize(g)).collect();
    let evidence = view.evidence();
    let score = if let Some(answer) = view.answer() {
        if norm_golds.contains(&normalize(&answer)) {
            100
        } else {
            0
        }
    } else if city_in(&evidence).is_some() {
        80
    } else if director_in(&evidence).is_some() {
        50
    } else if evidence.iter().any(|e| e == crate::agent::NO_EVIDENCE) {
        10
    } else {
        20
    };
    format!("The trajectory has made the progress shown. So the score is {score}.")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyStyle {
    /// Always takes the productive action.
    Oracle,
    /// Answers with the director's name as soon as it is known.
    Distractor,
    /// Cycles the productive action with detours and early guesses, so
    /// repeated samples from the same state differ.
    Explorer,
}

/// Prompt-reading policy and judge for a [`TwoHopWorld`].
#[derive(Debug)]
pub struct WorldPolicy {
    style: PolicyStyle,
    cursors: Mutex<HashMap<String, usize>>,
}

impl WorldPolicy {
    pub fn new(style: PolicyStyle) -> Self {
        WorldPolicy {
            style,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    fn reasoning_candidates(&self, view: &PromptView) -> Vec<String> {
        let oracle = oracle_reasoning(view);
        let evidence = view.evidence();
        let director = director_in(&evidence);
        match self.style {
            PolicyStyle::Oracle => vec![oracle],
            PolicyStyle::Distractor => match (director, city_in(&evidence)) {
                (Some(d), None) => vec![format!("The director is {d}. <answer>{d}</answer>")],
                _ => vec![oracle],
            },
            PolicyStyle::Explorer => {
                let film = film_of(&view.question).unwrap_or(&view.question).to_owned();
                let guess = director.unwrap_or_else(|| film.clone());
                vec![
                    oracle,
                    format!("Maybe it is simple. <answer>{guess}</answer>"),
                    format!("Let me check the music first. <query>{film} soundtrack</query>"),
                ]
            }
        }
    }

    fn grounding_candidates(&self, view: &PromptView) -> Vec<String> {
        let oracle = oracle_grounding(view);
        match self.style {
            PolicyStyle::Explorer if oracle != "<evidence>None</evidence>" => {
                vec![oracle, "<evidence>None</evidence>".into()]
            }
            _ => vec![oracle],
        }
    }
}

impl PolicyBackend for WorldPolicy {
    fn complete(&self, request: &PolicyRequest) -> Result<String, BackendError> {
        let view = PromptView::parse(&request.user);
        let candidates = match request.template {
            TemplateName::Reasoning => self.reasoning_candidates(&view),
            TemplateName::Grounding => self.grounding_candidates(&view),
            TemplateName::ProcessEvaluation => return Ok(judge(&view)),
        };
        let key = fingerprint(request.template, &request.user);
        let mut cursors = self.cursors.lock().expect("cursor lock poisoned");
        let n = cursors.entry(key).or_insert(0);
        let reply = candidates[*n % candidates.len()].clone();
        *n += 1;
        Ok(reply)
    }
}
