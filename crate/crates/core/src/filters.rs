//! Basic and preference-based filtering of generated dialogues.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dialogue::{Dialogue, Role};
use crate::gateway::{Gateway, GatewayError, NliScores};
use crate::persona::Persona;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Repetition,
    TargetLeak,
    WrongAcceptance,
    PersonaContradiction,
    GuessContradiction,
}

impl Rule {
    pub const ALL: [Rule; 5] = [
        Rule::Repetition,
        Rule::TargetLeak,
        Rule::WrongAcceptance,
        Rule::PersonaContradiction,
        Rule::GuessContradiction,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Rule::Repetition => "repetition",
            Rule::TargetLeak => "target-leak",
            Rule::WrongAcceptance => "wrong-acceptance",
            Rule::PersonaContradiction => "persona-contradiction",
            Rule::GuessContradiction => "guess-contradiction",
        }
    }
}

/// Which side of an NLI pair is the premise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NliOrientation {
    /// Persona statement premise / utterance hypothesis; utterance premise / think hypothesis.
    #[default]
    Standard,
    Flipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    pub delta: f64,
    pub repetition_jaccard: f64,
    pub repetition_n: usize,
    pub orientation: NliOrientation,
    pub rules: Vec<Rule>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            delta: 0.7,
            repetition_jaccard: 0.8,
            repetition_n: 3,
            orientation: NliOrientation::Standard,
            rules: Rule::ALL.to_vec(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(format!("filter.delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.repetition_jaccard > 0.0 && self.repetition_jaccard <= 1.0) {
            return Err(format!("filter.repetition_jaccard must lie in (0, 1], got {}", self.repetition_jaccard));
        }
        if self.repetition_n == 0 {
            return Err("filter.repetition_n must be positive".into());
        }
        Ok(())
    }

    fn pair<'a>(&self, a: &'a str, b: &'a str) -> (&'a str, &'a str) {
        match self.orientation {
            NliOrientation::Standard => (a, b),
            NliOrientation::Flipped => (b, a),
        }
    }
}

/// Where a rule fired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub turns: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statement: Option<String>,
}

impl Evidence {
    fn at(turns: Vec<usize>) -> Self {
        Self { turns, score: None, statement: None }
    }
}

pub type RuleResult = Vec<Evidence>;

fn trigram_set(text: &str, n: usize) -> BTreeSet<Vec<String>> {
    text::ngrams(&text::words(text), n).map(<[String]>::to_vec).collect()
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Exact duplicates anywhere, or same-role n-gram Jaccard above the threshold.
pub fn filter_repetition(d: &Dialogue, cfg: &FilterConfig) -> RuleResult {
    let sets: Vec<BTreeSet<Vec<String>>> = d.turns.iter().map(|t| trigram_set(&t.text, cfg.repetition_n)).collect();
    let mut out = Vec::new();
    for j in 0..d.turns.len() {
        for i in 0..j {
            let (a, b) = (&d.turns[i], &d.turns[j]);
            if a.text.trim() == b.text.trim() {
                out.push(Evidence { turns: vec![i, j], score: Some(1.0), statement: None });
            } else if a.role == b.role {
                let s = jaccard(&sets[i], &sets[j]);
                if s > cfg.repetition_jaccard {
                    out.push(Evidence { turns: vec![i, j], score: Some(s), statement: None });
                }
            }
        }
    }
    out
}

/// Seeker turns naming the target before it is first recommended.
pub fn filter_target_leak(d: &Dialogue) -> RuleResult {
    let title = text::normalize_title(&d.target_title);
    let first_rec = d
        .turns
        .iter()
        .position(|t| t.role == Role::Recommender && t.movie_id.as_deref() == Some(d.target_item_id.as_str()))
        .unwrap_or(d.turns.len());
    d.turns[..first_rec]
        .iter()
        .enumerate()
        .filter(|(_, t)| t.role == Role::Seeker && text::contains_phrase(&text::collapse_punctuation(&t.text), &title))
        .map(|(i, _)| Evidence::at(vec![i]))
        .collect()
}

/// Terminal seeker turns whose last recommendation is not the target.
pub fn filter_wrong_acceptance(d: &Dialogue) -> RuleResult {
    let mut out = Vec::new();
    let mut last_rec: Option<&str> = None;
    for (i, t) in d.turns.iter().enumerate() {
        if t.role == Role::Recommender && t.movie_id.is_some() {
            last_rec = t.movie_id.as_deref();
        }
        if t.role == Role::Seeker && t.terminal && last_rec != Some(d.target_item_id.as_str()) {
            out.push(Evidence::at(vec![i]));
        }
    }
    if out.is_empty() {
        if let crate::dialogue::Outcome::AcceptedOther { .. } = d.outcome {
            out.push(Evidence::at(vec![d.turns.len().saturating_sub(1)]));
        }
    }
    out
}

/// "likes: ..." / "dislikes: ..." sentences of the general and target abstracts.
pub fn persona_statements(p: &Persona) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for a in p.general.iter().map(|e| &e.r#abstract).chain([&p.target_abstract]) {
        for (label, field) in [("likes", &a.like), ("dislikes", &a.dislike)] {
            for s in field.as_deref().map(text::split_statements).unwrap_or_default() {
                let s = format!("{label}: {s}");
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
    }
    out
}

pub fn filter_persona_contradiction(
    d: &Dialogue,
    nli: &dyn Fn(&str, &str) -> Result<NliScores, GatewayError>,
    cfg: &FilterConfig,
) -> Result<RuleResult, GatewayError> {
    let statements = persona_statements(&d.persona);
    let mut out = Vec::new();
    for (i, t) in d.turns.iter().enumerate().filter(|(_, t)| t.role == Role::Seeker) {
        for s in &statements {
            let (p, h) = cfg.pair(s, &t.text);
            let c = nli(p, h)?.contradict;
            if c > cfg.delta {
                out.push(Evidence { turns: vec![i], score: Some(c), statement: Some(s.clone()) });
            }
        }
    }
    Ok(out)
}

pub fn filter_guess_contradiction(
    d: &Dialogue,
    nli: &dyn Fn(&str, &str) -> Result<NliScores, GatewayError>,
    cfg: &FilterConfig,
) -> Result<RuleResult, GatewayError> {
    let mut out = Vec::new();
    for (j, t) in d.turns.iter().enumerate() {
        let Some(think) = t.think.as_deref().filter(|_| t.role == Role::Recommender) else { continue };
        for (i, u) in d.turns[..j].iter().enumerate().filter(|(_, u)| u.role == Role::Seeker) {
            let (p, h) = cfg.pair(&u.text, think);
            let c = nli(p, h)?.contradict;
            if c > cfg.delta {
                out.push(Evidence { turns: vec![i, j], score: Some(c), statement: Some(think.to_string()) });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictStatus {
    Judged,
    /// An NLI call failed; no verdict was reached.
    Held,
    /// Aborted or capped dialogues are not judged.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub dialogue_id: String,
    pub status: VerdictStatus,
    pub passed: bool,
    pub failed_rules: Vec<Rule>,
    pub evidence: BTreeMap<Rule, Vec<Evidence>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Evaluate every enabled rule on one dialogue, without short-circuiting.
pub fn judge(
    d: &Dialogue,
    nli: &dyn Fn(&str, &str) -> Result<NliScores, GatewayError>,
    cfg: &FilterConfig,
) -> FilterVerdict {
    let mut verdict = FilterVerdict {
        dialogue_id: d.dialogue_id.clone(),
        status: VerdictStatus::Judged,
        passed: false,
        failed_rules: Vec::new(),
        evidence: BTreeMap::new(),
        error: None,
    };
    if !d.outcome.is_terminal() {
        verdict.status = VerdictStatus::Incomplete;
        return verdict;
    }
    let enabled: BTreeSet<Rule> = cfg.rules.iter().copied().collect();
    for rule in enabled {
        let res = match rule {
            Rule::Repetition => Ok(filter_repetition(d, cfg)),
            Rule::TargetLeak => Ok(filter_target_leak(d)),
            Rule::WrongAcceptance => Ok(filter_wrong_acceptance(d)),
            Rule::PersonaContradiction => filter_persona_contradiction(d, nli, cfg),
            Rule::GuessContradiction => filter_guess_contradiction(d, nli, cfg),
        };
        match res {
            Ok(ev) if ev.is_empty() => {}
            Ok(ev) => {
                verdict.failed_rules.push(rule);
                verdict.evidence.insert(rule, ev);
            }
            Err(e) => {
                verdict.status = VerdictStatus::Held;
                verdict.error = Some(format!("{}: {e}", rule.tag()));
                verdict.failed_rules.clear();
                verdict.evidence.clear();
                return verdict;
            }
        }
    }
    verdict.passed = verdict.failed_rules.is_empty();
    verdict
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub judged: usize,
    pub kept: usize,
    pub removed: usize,
    pub held: usize,
    pub incomplete: usize,
    /// removed / judged.
    pub removal_rate: f64,
    pub per_rule: BTreeMap<String, usize>,
}

pub struct FilterOutput {
    pub kept: Vec<Dialogue>,
    pub verdicts: Vec<FilterVerdict>,
    pub report: FilterReport,
}

/// Judge every dialogue through the gateway's NLI service.
pub fn apply_filters(
    dialogues: &[Dialogue],
    gateway: &Gateway,
    cfg: &FilterConfig,
    parallelism: usize,
) -> FilterOutput {
    let nli = |p: &str, h: &str| gateway.nli(p, h);
    apply_filters_with(dialogues, &nli, cfg, parallelism)
}

pub fn apply_filters_with(
    dialogues: &[Dialogue],
    nli: &(dyn Fn(&str, &str) -> Result<NliScores, GatewayError> + Sync),
    cfg: &FilterConfig,
    parallelism: usize,
) -> FilterOutput {
    let verdicts = crate::abstraction::parallel_map(dialogues, parallelism, |d| judge(d, nli, cfg));
    let mut report = FilterReport { total: dialogues.len(), ..Default::default() };
    for r in Rule::ALL {
        report.per_rule.insert(r.tag().to_string(), 0);
    }
    let mut kept = Vec::new();
    for (d, v) in dialogues.iter().zip(&verdicts) {
        match v.status {
            VerdictStatus::Held => report.held += 1,
            VerdictStatus::Incomplete => report.incomplete += 1,
            VerdictStatus::Judged => {
                report.judged += 1;
                if v.passed {
                    report.kept += 1;
                    kept.push(d.clone());
                } else {
                    report.removed += 1;
                    for r in &v.failed_rules {
                        *report.per_rule.entry(r.tag().to_string()).or_default() += 1;
                    }
                }
            }
        }
    }
    report.removal_rate = if report.judged == 0 { 0.0 } else { report.removed as f64 / report.judged as f64 };
    FilterOutput { kept, verdicts, report }
}
