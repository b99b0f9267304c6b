//! Template grammar for captions, edit requests and reflection verdicts.
//!
//! All text is lowercase with punctuation separated by spaces so the word
//! tokenizer sees a closed vocabulary.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::motion::{ActionItem, ActionList, ActionType, BodyPart, DurationClass, Style, Trajectory};

pub const JUDGE_QUESTION: &str = "does the motion match the caption ?";
pub const VERDICT_YES: &str = "yes , the motion matches the caption .";
pub const REGENERATE: &str = "i will regenerate a motion .";

pub fn action_noun(a: ActionType) -> &'static str {
    match a {
        ActionType::Walk => "walking",
        ActionType::Run => "running",
        ActionType::Jump => "jumping",
        ActionType::Kick => "kicking",
        ActionType::Turn => "turning",
        ActionType::Wave => "waving",
        ActionType::Crouch => "crouching",
        ActionType::Idle => "idling",
    }
}

pub fn body_phrase(b: BodyPart) -> &'static str {
    match b {
        BodyPart::Legs => "the legs",
        BodyPart::Arms => "the arms",
        BodyPart::FullBody => "the whole body",
        BodyPart::Head => "the head",
    }
}

pub fn style_word(s: Style) -> &'static str {
    s.as_str()
}

pub fn duration_word(d: DurationClass) -> &'static str {
    d.as_str()
}

pub fn trajectory_phrase(t: Trajectory) -> &'static str {
    match t {
        Trajectory::InPlace => "in place",
        Trajectory::StraightForward => "straight forward",
        Trajectory::StraightBackward => "straight backward",
        Trajectory::ClockwiseCircle => "along a clockwise circle",
        Trajectory::CounterclockwiseCircle => "along a counterclockwise circle",
        Trajectory::LeftTurn => "while turning left",
        Trajectory::RightTurn => "while turning right",
    }
}

/// Noun-phrase description of one item, e.g. "walking in a neutral style
/// with the legs for a medium time straight forward".
pub fn describe_item(it: &ActionItem) -> String {
    let style = style_word(it.style);
    let article = if style.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
    format!(
        "{} in {article} {style} style with {} for a {} time {}",
        action_noun(it.action_type),
        body_phrase(it.body_part),
        duration_word(it.duration_class),
        trajectory_phrase(it.trajectory)
    )
}

fn all_items() -> impl Iterator<Item = ActionItem> {
    ActionType::ALL.iter().copied().flat_map(|a| {
        BodyPart::ALL.iter().copied().flat_map(move |b| {
            Style::ALL.iter().copied().flat_map(move |s| {
                DurationClass::ALL
                    .iter()
                    .copied()
                    .flat_map(move |d| Trajectory::ALL.iter().copied().map(move |t| ActionItem::new(a, b, s, d, t)))
            })
        })
    })
}

/// Inverse of [`describe_item`].
pub fn parse_item(desc: &str) -> Result<ActionItem> {
    static TABLE: OnceLock<HashMap<String, ActionItem>> = OnceLock::new();
    let table = TABLE.get_or_init(|| all_items().map(|it| (describe_item(&it), it)).collect());
    table
        .get(desc.trim())
        .copied()
        .ok_or_else(|| Error::InvalidSpec(format!("unrecognized item description `{desc}`")))
}

pub fn caption(list: &ActionList) -> String {
    let parts: Vec<String> = list.items().iter().map(describe_item).collect();
    format!("a person performs {} .", parts.join(" , then "))
}

/// One rendered edit clause together with the element it adds.
#[derive(Debug, Clone, PartialEq)]
pub struct EditClause {
    pub text: String,
    pub element: ActionItem,
}

const FIELDS: [&str; 5] = ["action", "body part", "style", "duration", "trajectory"];

fn changed_field(a: &ActionItem, e: &ActionItem) -> Option<(&'static str, String)> {
    if a.field_distance(e) != 1 {
        return None;
    }
    Some(if a.action_type != e.action_type {
        (FIELDS[0], action_noun(e.action_type).to_string())
    } else if a.body_part != e.body_part {
        (FIELDS[1], body_phrase(e.body_part).to_string())
    } else if a.style != e.style {
        (FIELDS[2], style_word(e.style).to_string())
    } else if a.duration_class != e.duration_class {
        (FIELDS[3], duration_word(e.duration_class).to_string())
    } else {
        (FIELDS[4], trajectory_phrase(e.trajectory).to_string())
    })
}

/// Renders `ΔA = after \ before` as one clause per element. An element that
/// replaces exactly one item of `before` by a single-field change uses a
/// change template; anything else is an insertion.
pub fn render_edit(before: &ActionList, after: &ActionList) -> Vec<EditClause> {
    let delta = after.difference(before);
    let removed: Vec<ActionItem> = before.items().iter().filter(|a| !after.contains(a)).copied().collect();
    let multi = before.len() > 1;
    let mut consumed: Vec<ActionItem> = Vec::new();
    let mut out = Vec::with_capacity(delta.len());
    for e in delta {
        let candidates: Vec<&ActionItem> = removed
            .iter()
            .filter(|a| !consumed.contains(a) && a.field_distance(&e) == 1)
            .collect();
        let addressable = |a: &ActionItem| !multi || before.items().iter().filter(|b| b.action_type == a.action_type).count() == 1;
        let text = match candidates.as_slice() {
            [a] if addressable(a) => {
                let (field, value) = changed_field(a, &e).expect("distance one");
                consumed.push(**a);
                if multi {
                    format!("change the {field} of the {} to {value}", action_noun(a.action_type))
                } else {
                    format!("change the {field} to {value}")
                }
            }
            _ => format!("insert {} at the end", describe_item(&e)),
        };
        out.push(EditClause { text, element: e });
    }
    out
}

pub fn edit_text(clauses: &[EditClause]) -> String {
    let parts: Vec<&str> = clauses.iter().map(|c| c.text.as_str()).collect();
    format!("{} .", parts.join(" ; "))
}

fn parse_field_value(a: &ActionItem, field: &str, value: &str) -> Option<ActionItem> {
    let mut e = *a;
    match field {
        "action" => e.action_type = *ActionType::ALL.iter().find(|&&x| action_noun(x) == value)?,
        "body part" => e.body_part = *BodyPart::ALL.iter().find(|&&x| body_phrase(x) == value)?,
        "style" => e.style = *Style::ALL.iter().find(|&&x| style_word(x) == value)?,
        "duration" => e.duration_class = *DurationClass::ALL.iter().find(|&&x| duration_word(x) == value)?,
        "trajectory" => e.trajectory = *Trajectory::ALL.iter().find(|&&x| trajectory_phrase(x) == value)?,
        _ => return None,
    }
    Some(e)
}

/// Recovers the added elements from an edit text, given the list it edits.
pub fn parse_edit(before: &ActionList, text: &str) -> Result<Vec<ActionItem>> {
    let bad = |c: &str| Error::InvalidSpec(format!("unparseable edit clause `{c}`"));
    let body = text.trim().strip_suffix('.').unwrap_or(text).trim();
    let mut out = Vec::new();
    for clause in body.split(" ; ") {
        let clause = clause.trim();
        if let Some(rest) = clause.strip_prefix("insert ") {
            let desc = rest.strip_suffix(" at the end").ok_or_else(|| bad(clause))?;
            out.push(parse_item(desc)?);
            continue;
        }
        let rest = clause.strip_prefix("change the ").ok_or_else(|| bad(clause))?;
        let field = FIELDS
            .iter()
            .find(|f| rest.starts_with(&format!("{f} ")))
            .ok_or_else(|| bad(clause))?;
        let rest = &rest[field.len() + 1..];
        let (target, value) = if let Some(r) = rest.strip_prefix("to ") {
            match before.items() {
                [a] => (*a, r),
                _ => return Err(bad(clause)),
            }
        } else {
            let r = rest.strip_prefix("of the ").ok_or_else(|| bad(clause))?;
            let (noun, value) = r.split_once(" to ").ok_or_else(|| bad(clause))?;
            let mut hits = before.items().iter().filter(|a| action_noun(a.action_type) == noun);
            match (hits.next(), hits.next()) {
                (Some(a), None) => (*a, value),
                _ => return Err(bad(clause)),
            }
        };
        out.push(parse_field_value(&target, field, value).ok_or_else(|| bad(clause))?);
    }
    Ok(out)
}

/// Negative verdict naming what the shown motion lacks and what it has in
/// excess of the caption.
pub fn verdict_no(missing: &[ActionItem], extra: &[ActionItem]) -> String {
    let mut reasons = Vec::new();
    if !missing.is_empty() {
        let parts: Vec<String> = missing.iter().map(describe_item).collect();
        reasons.push(format!("it lacks {}", parts.join(" ; ")));
    }
    if !extra.is_empty() {
        let parts: Vec<String> = extra.iter().map(describe_item).collect();
        reasons.push(format!("it also shows {}", parts.join(" ; ")));
    }
    format!("no , the motion does not match because {} .", reasons.join(" and "))
}

/// Every word the templates can produce, for vocabulary construction.
/// Benchmark phrases naming the attribute to take from a reference motion,
/// in style, trajectory, speed order.
pub const REFERENCE_PHRASES: [&str; 3] = ["use the style of", "follow the trajectory of", "match the speed of"];

pub fn template_words() -> Vec<String> {
    let mut texts: Vec<String> = vec![
        JUDGE_QUESTION.into(),
        VERDICT_YES.into(),
        REGENERATE.into(),
        verdict_no(&[], &[]),
        "it lacks it also shows and an".into(),
        "a person performs , then .".into(),
        "insert at the end ; change the of to".into(),
        FIELDS.join(" "),
    ];
    texts.extend(REFERENCE_PHRASES.iter().map(|s| s.to_string()));
    texts.extend(super::extract::TEMPLATE_TEXTS.iter().map(|s| s.to_string()));
    texts.extend(ActionType::ALL.iter().map(|&a| action_noun(a).to_string()));
    texts.extend(BodyPart::ALL.iter().map(|&b| body_phrase(b).to_string()));
    texts.extend(Style::ALL.iter().map(|&s| style_word(s).to_string()));
    texts.extend(DurationClass::ALL.iter().map(|&d| duration_word(d).to_string()));
    texts.extend(Trajectory::ALL.iter().map(|&t| trajectory_phrase(t).to_string()));
    texts.push(describe_item(&ActionItem::new(
        ActionType::Walk,
        BodyPart::Legs,
        Style::Neutral,
        DurationClass::Medium,
        Trajectory::InPlace,
    )));
    let mut words: Vec<String> = texts.iter().flat_map(|t| t.split_whitespace().map(str::to_string)).collect();
    words.sort();
    words.dedup();
    words
}

#[cfg(test)]
mod tests {
    use super::*;

    fn it(s: &str) -> ActionItem {
        ActionItem::parse(s).unwrap()
    }

    #[test]
    fn every_item_description_parses_back() {
        for item in all_items() {
            assert_eq!(parse_item(&describe_item(&item)).unwrap(), item);
        }
    }

    #[test]
    fn style_change_uses_change_template() {
        let a = ActionList::single(it("walk,legs,neutral,medium,straight_forward"));
        let b = ActionList::single(it("walk,legs,cautious,medium,straight_forward"));
        let c = render_edit(&a, &b);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].text, "change the style to cautious");
        assert_eq!(parse_edit(&a, &edit_text(&c)).unwrap(), vec![b.items()[0]]);
    }

    #[test]
    fn appended_action_uses_insertion() {
        let walk = it("walk,legs,neutral,medium,straight_forward");
        let kick = it("kick,legs,neutral,short,in_place");
        let a = ActionList::single(walk);
        let b = ActionList::new(vec![walk, kick]);
        let c = render_edit(&a, &b);
        assert_eq!(c.len(), 1);
        assert!(c[0].text.starts_with("insert kicking"), "{}", c[0].text);
        assert!(c[0].text.ends_with("at the end"));
        assert_eq!(parse_edit(&a, &edit_text(&c)).unwrap(), vec![kick]);
    }

    #[test]
    fn qualified_change_in_multi_item_list() {
        let walk = it("walk,legs,neutral,medium,straight_forward");
        let kick = it("kick,legs,neutral,short,in_place");
        let kick2 = it("kick,legs,energetic,short,in_place");
        let a = ActionList::new(vec![walk, kick]);
        let b = ActionList::new(vec![walk, kick2]);
        let c = render_edit(&a, &b);
        assert_eq!(c[0].text, "change the style of the kicking to energetic");
        assert_eq!(parse_edit(&a, &edit_text(&c)).unwrap(), vec![kick2]);
    }

    #[test]
    fn caption_and_verdicts() {
        let a = ActionList::new(vec![
            it("walk,legs,neutral,medium,straight_forward"),
            it("turn,full_body,relaxed,short,left_turn"),
        ]);
        assert_eq!(
            caption(&a),
            "a person performs walking in a neutral style with the legs for a medium time straight forward , then turning in a relaxed style with the whole body for a short time while turning left ."
        );
        let no = verdict_no(&[it("kick,legs,neutral,short,in_place")], &[]);
        assert!(no.contains("kicking"));
    }
}
