//! Seeker simulator: persona-grounded replies and end-of-dialogue detection.

use crate::abstraction::Abstract;
use crate::dialogue::{render_context, SimError, Turn};
use crate::gateway::{ChatParams, Gateway, GatewayError};
use crate::persona::Persona;
use crate::prompts::{render_abstract, PromptSet, RESPONSIVE_HEADER};

pub const EOD_TOKEN: &str = "[EOD]";
pub const SEEKER_TAG: &str = "seeker";

#[derive(Debug, Clone, PartialEq)]
pub struct SeekerTurn {
    pub text: String,
    pub accepted_item_id: Option<String>,
    pub is_terminal: bool,
}

/// The item suggested in the last recommender turn, with the seeker's own
/// abstract of it when they reviewed it.
#[derive(Debug, Clone, Copy)]
pub struct Suggested<'a> {
    pub item_id: &'a str,
    pub title: &'a str,
    pub responsive: Option<&'a Abstract>,
}

/// Remove every `[EOD]` and the whitespace around it.
pub fn detect_termination(text: &str) -> (String, bool) {
    if !text.contains(EOD_TOKEN) {
        return (text.to_string(), false);
    }
    let parts: Vec<&str> = text.split(EOD_TOKEN).map(str::trim).filter(|p| !p.is_empty()).collect();
    (parts.join(" "), true)
}

pub fn render_persona(persona: &Persona) -> String {
    persona
        .general
        .iter()
        .map(|e| format!("Movie: {}\n{}", e.title, render_abstract(&e.r#abstract)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// The responsive section. Omitted on question turns and when the target
/// itself was suggested.
pub fn render_responsive(persona: &Persona, suggested: Option<Suggested<'_>>) -> String {
    match suggested {
        Some(s) if s.item_id != persona.target_item_id => match s.responsive {
            Some(a) => format!("{RESPONSIVE_HEADER} ({}):\n{}", s.title, render_abstract(a)),
            None => String::new(),
        },
        _ => String::new(),
    }
}

pub fn seeker_prompt(
    prompts: &PromptSet,
    persona: &Persona,
    context: &[Turn],
    suggested: Option<Suggested<'_>>,
) -> String {
    prompts.seeker.render(&[
        ("gt movie title", &persona.target_title),
        ("user persona", &render_persona(persona)),
        ("gt abstract", &render_abstract(&persona.target_abstract)),
        ("rec movie abstract", &render_responsive(persona, suggested)),
        ("dialogue context", &render_context(context)),
    ])
}

fn clean(raw: &str) -> &str {
    let t = raw.trim();
    t.strip_prefix("Seeker:").map(str::trim_start).unwrap_or(t)
}

/// Generate the next seeker utterance. Empty output is re-asked twice.
pub fn next_seeker_utterance(
    gateway: &Gateway,
    prompts: &PromptSet,
    params: &ChatParams,
    persona: &Persona,
    context: &[Turn],
    suggested: Option<Suggested<'_>>,
    seed: u64,
) -> Result<SeekerTurn, SimError> {
    let prompt = seeker_prompt(prompts, persona, context, suggested);
    let attempts = crate::abstraction::MAX_REASKS + 1;
    for _ in 0..attempts {
        let text = match gateway.chat(&params.request(SEEKER_TAG, prompt.clone(), Some(seed))) {
            Ok(c) => c.text,
            Err(GatewayError::EmptyCompletion) => continue,
            Err(e) => return Err(e.into()),
        };
        let (text, terminal) = detect_termination(clean(&text));
        if text.is_empty() {
            continue;
        }
        if !terminal {
            return Ok(SeekerTurn { text, accepted_item_id: None, is_terminal: false });
        }
        let Some(s) = suggested else { return Err(SimError::PrematureEnd) };
        return Ok(SeekerTurn { text, accepted_item_id: Some(s.item_id.to_string()), is_terminal: true });
    }
    Err(SimError::EmptyUtterance { attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{MockChat, MockEmbedder, RuleNli};
    use crate::gateway::{RetryPolicy, SystemClock};
    use crate::persona::PersonaEntry;
    use crate::prompts::TARGET_FEATURES_HEADER;
    use std::sync::Arc;

    fn abs(like: &str, dislike: &str) -> Abstract {
        Abstract::new(Some(like.into()), Some(dislike.into()), vec![]).unwrap()
    }

    fn persona() -> Persona {
        let e = |id: &str, l: &str| PersonaEntry {
            item_id: id.into(),
            title: format!("{id} (2001)"),
            r#abstract: abs(l, "slow pacing"),
        };
        Persona {
            user_id: "u".into(),
            general: vec![e("a", "tense battles"), e("b", "witty dialogue"), e("c", "lush scenery")],
            target_item_id: "fury".into(),
            target_title: "Fury (2014)".into(),
            target_abstract: abs("the tank crew", "the gore"),
            seed: 1,
        }
    }

    fn gateway(chat: MockChat) -> Gateway {
        Gateway::new(
            Arc::new(chat),
            Arc::new(MockEmbedder::new(0)),
            Arc::new(RuleNli),
            RetryPolicy::default(),
            None,
            Arc::new(SystemClock::default()),
        )
    }

    #[test]
    fn termination_token() {
        assert_eq!(detect_termination("Thanks! [EOD]"), ("Thanks!".to_string(), true));
        assert_eq!(detect_termination("eod"), ("eod".to_string(), false));
        assert_eq!(detect_termination("[EOD] Thanks!"), ("Thanks!".to_string(), true));
        assert_eq!(detect_termination("[eod]"), ("[eod]".to_string(), false));
        assert_eq!(detect_termination("[EOD]"), (String::new(), true));
    }

    #[test]
    fn scripted_acceptance_and_rejection() {
        let p = persona();
        let prompts = PromptSet::default();
        let ctx = vec![Turn::seeker("Hi"), Turn::recommender("How about `Fury (2014)`?")];
        let g =
            gateway(MockChat::new(0).with_script(SEEKER_TAG, "That sounds like exactly what I'm looking for! [EOD]"));
        let target = Suggested { item_id: "fury", title: "Fury (2014)", responsive: None };
        let t = next_seeker_utterance(&g, &prompts, &ChatParams::simulator(), &p, &ctx, Some(target), 1).unwrap();
        assert!(t.is_terminal);
        assert_eq!(t.accepted_item_id.as_deref(), Some("fury"));

        let g = gateway(MockChat::new(0).with_script(SEEKER_TAG, "Seeker: Not for me."));
        let other = Suggested { item_id: "a", title: "a (2001)", responsive: Some(&p.general[0].r#abstract) };
        let t = next_seeker_utterance(&g, &prompts, &ChatParams::simulator(), &p, &ctx, Some(other), 1).unwrap();
        assert_eq!(t, SeekerTurn { text: "Not for me.".into(), accepted_item_id: None, is_terminal: false });
    }

    #[test]
    fn bare_eod_is_an_error() {
        let p = persona();
        let g = gateway(MockChat::new(0).with_script(SEEKER_TAG, "[EOD]"));
        let s = Suggested { item_id: "fury", title: "Fury (2014)", responsive: None };
        let r = next_seeker_utterance(&g, &PromptSet::default(), &ChatParams::simulator(), &p, &[], Some(s), 1);
        assert_eq!(r, Err(SimError::EmptyUtterance { attempts: 3 }));
        let g = gateway(MockChat::new(0).with_script(SEEKER_TAG, "Bye [EOD]"));
        let r = next_seeker_utterance(&g, &PromptSet::default(), &ChatParams::simulator(), &p, &[], None, 1);
        assert_eq!(r, Err(SimError::PrematureEnd));
    }

    #[test]
    fn prompt_sections() {
        let p = persona();
        let prompts = PromptSet::default();
        let s = Suggested { item_id: "a", title: "a (2001)", responsive: Some(&p.general[0].r#abstract) };
        let prompt = seeker_prompt(&prompts, &p, &[Turn::seeker("Hi")], Some(s));
        assert!(prompt.contains("Movie: b (2001)\n[Like]\nwitty dialogue"));
        assert!(prompt.contains(&format!("{RESPONSIVE_HEADER} (a (2001)):\n[Like]\ntense battles")));
        let features = prompt.split(TARGET_FEATURES_HEADER).nth(1).unwrap().split(RESPONSIVE_HEADER).next().unwrap();
        assert!(!features.contains("Fury"));
        let t = Suggested { item_id: "fury", title: "Fury (2014)", responsive: Some(&p.target_abstract) };
        assert!(!seeker_prompt(&prompts, &p, &[], Some(t)).contains(RESPONSIVE_HEADER));
        assert!(!seeker_prompt(&prompts, &p, &[], None).contains(RESPONSIVE_HEADER));
    }
}
