//! Named model specifications.
//!
//! Classroom grid `A1` .. `G3`: every model has sender and receiver effects
//! for teacher status, gender and race plus the baserate; the letter picks
//! the dyadic groups and the number the conversational effects.
//!
//! | letter | dyadic effects            | number | conversational effects |
//! |--------|---------------------------|--------|------------------------|
//! | A      | groups 1, 2, 3            | 1      | recency and P-shifts   |
//! | B      | group 1                   | 2      | P-shifts               |
//! | C      | group 2                   | 3      | recency                |
//! | D      | group 3                   |        |                        |
//! | E/F/G  | group 1/2/3 with contexts |        |                        |
//!
//! Group 1: same race, same gender, student and teacher broadcast. Group 2:
//! friends, adjacent seats, `ln(1 + co-activities)`. Group 3: teacher
//! broadcast and its product with "previous event was a teacher broadcast".
//! Context models add `groupwork` and `silent` main effects and
//! interactions (lecture is the reference).
//!
//! Expected covariates: categorical actor attributes `role`
//! (`teacher`/`student`), `gender` (`female`/`male`) and `race` (`white`/...);
//! dyad attributes `friends`, `adjacent`, `coactivities`; context labels
//! `lecture`, `groupwork`, `silent`; and a broadcast actor.
//!
//! Synthetic presets use one categorical attribute `class`
//! (`square`/`triangle`).

use crate::event_data::{build_risk_set, AttrValue, CovariateSet, EventDataError, RiskSet};
use crate::statistics::{AttrLevel, Effect, PShift, StatisticSpec};

pub const CLASS_ATTR: &str = "class";
pub const SQUARE: &str = "square";
pub const TRIANGLE: &str = "triangle";

fn teacher() -> AttrLevel {
    AttrLevel {
        attr: "role".into(),
        level: "teacher".into(),
    }
}

fn student() -> AttrLevel {
    AttrLevel {
        attr: "role".into(),
        level: "student".into(),
    }
}

fn actor_effects() -> Vec<Effect> {
    let mut out = Vec::new();
    for (attr, level) in [("role", "teacher"), ("gender", "female"), ("race", "white")] {
        out.push(Effect::sender_level(attr, level));
        out.push(Effect::receiver_level(attr, level));
    }
    out
}

fn group(n: u8) -> Vec<Effect> {
    match n {
        1 => vec![
            Effect::DyadMatch { attr: "race".into() },
            Effect::DyadMatch { attr: "gender".into() },
            Effect::Broadcast { sender: Some(student()) },
            Effect::Broadcast { sender: Some(teacher()) },
        ],
        2 => vec![
            Effect::DyadValue {
                attr: "friends".into(),
                transform: Default::default(),
            },
            Effect::DyadValue {
                attr: "adjacent".into(),
                transform: Default::default(),
            },
            Effect::DyadValue {
                attr: "coactivities".into(),
                transform: crate::statistics::ValueTransform::Log1p,
            },
        ],
        3 => vec![
            Effect::Broadcast { sender: Some(teacher()) },
            Effect::product(
                Effect::Broadcast { sender: Some(teacher()) },
                Effect::PreviousBroadcast { sender: Some(teacher()) },
            ),
        ],
        _ => unreachable!(),
    }
}

const CONTEXTS: [&str; 2] = ["groupwork", "silent"];

/// P-shift indicators used by the presets. AB-XY is left out: it covers
/// almost every dyad after each event and is nearly collinear with the
/// baserate.
pub fn preset_pshifts() -> Vec<Effect> {
    PShift::ALL
        .iter()
        .filter(|&&k| k != PShift::AbXy)
        .map(|&k| Effect::pshift(k))
        .collect()
}

fn push_unique(out: &mut Vec<Effect>, effects: impl IntoIterator<Item = Effect>) {
    for e in effects {
        if !out.contains(&e) {
            out.push(e);
        }
    }
}

/// Classroom model `letter` (A..=G) with conversational set `number` (1..=3).
pub fn classroom_spec(letter: char, number: u8) -> Option<StatisticSpec> {
    let mut effects = vec![Effect::Baserate];
    push_unique(&mut effects, actor_effects());
    match letter.to_ascii_uppercase() {
        'A' => {
            for g in 1..=3 {
                push_unique(&mut effects, group(g));
            }
        }
        'B' => push_unique(&mut effects, group(1)),
        'C' => push_unique(&mut effects, group(2)),
        'D' => push_unique(&mut effects, group(3)),
        l @ ('E' | 'F' | 'G') => {
            let g = group(l as u8 - b'D');
            push_unique(&mut effects, g.clone());
            for c in CONTEXTS {
                push_unique(&mut effects, [Effect::in_context(Effect::Baserate, c)]);
            }
            for c in CONTEXTS {
                push_unique(&mut effects, g.iter().map(|e| Effect::in_context(e.clone(), c)));
            }
        }
        _ => return None,
    }
    match number {
        1 => {
            push_unique(&mut effects, [Effect::RecencySend, Effect::RecencyReceive]);
            push_unique(&mut effects, preset_pshifts());
        }
        2 => push_unique(&mut effects, preset_pshifts()),
        3 => push_unique(&mut effects, [Effect::RecencySend, Effect::RecencyReceive]),
        _ => return None,
    }
    StatisticSpec::new(effects).ok()
}

fn class_pair(sender: &str, recipient: &str) -> Effect {
    Effect::product(
        Effect::sender_level(CLASS_ATTR, sender),
        Effect::receiver_level(CLASS_ATTR, recipient),
    )
}

/// Baserate, square-square, square-to-triangle, AB-BA, AB-BY, AB-AY.
pub fn synthetic_spec() -> StatisticSpec {
    StatisticSpec::new(vec![
        Effect::Baserate,
        class_pair(SQUARE, SQUARE),
        class_pair(SQUARE, TRIANGLE),
        Effect::pshift(PShift::AbBa),
        Effect::pshift(PShift::AbBy),
        Effect::pshift(PShift::AbAy),
    ])
    .expect("static spec")
}

/// Coefficients of [`synthetic_spec`] for the two-class simulation.
pub fn synthetic_truth() -> Vec<f64> {
    vec![0.0, 1.5, 1.0, 1.5, 1.0, 0.5]
}

/// Baserate and square-square mixing only.
pub fn synthetic_structural_a() -> StatisticSpec {
    StatisticSpec::new(vec![Effect::Baserate, class_pair(SQUARE, SQUARE)]).expect("static spec")
}

/// [`synthetic_structural_a`] plus square-to-triangle mixing.
pub fn synthetic_structural_b() -> StatisticSpec {
    StatisticSpec::new(vec![
        Effect::Baserate,
        class_pair(SQUARE, SQUARE),
        class_pair(SQUARE, TRIANGLE),
    ])
    .expect("static spec")
}

/// `n_squares` squares (ids first) followed by `n_triangles` triangles.
pub fn synthetic_covariates(n_squares: usize, n_triangles: usize) -> Result<(CovariateSet, RiskSet), EventDataError> {
    let n = n_squares + n_triangles;
    let risk = build_risk_set(n, false)?;
    let mut cov = CovariateSet::new(n);
    for a in 0..n {
        let class = if a < n_squares { SQUARE } else { TRIANGLE };
        cov.set_actor_attr(a, CLASS_ATTR, AttrValue::Category(class.into()));
    }
    Ok((cov, risk))
}

pub fn is_square(actor: usize, n_squares: usize) -> bool {
    actor < n_squares
}

/// Every preset name.
pub fn preset_names() -> Vec<String> {
    let mut out: Vec<String> = ('A'..='G')
        .flat_map(|l| (1..=3).map(move |n| format!("{l}{n}")))
        .collect();
    out.extend(["group1", "group2", "group3", "group4", "syn52", "syn6", "syn52a", "syn52b"].map(String::from));
    out
}

/// Looks up a preset by name: `A1`..`G3`, `group1`..`group4` (baserate plus
/// one group), or a synthetic spec.
pub fn preset(name: &str) -> Option<StatisticSpec> {
    match name {
        "syn52" | "syn6" => Some(synthetic_spec()),
        "syn52a" => Some(synthetic_structural_a()),
        "syn52b" => Some(synthetic_structural_b()),
        "group1" | "group2" | "group3" => {
            let mut effects = vec![Effect::Baserate];
            effects.extend(group(name.as_bytes()[5] - b'0'));
            StatisticSpec::new(effects).ok()
        }
        "group4" => StatisticSpec::new(
            std::iter::once(Effect::Baserate)
                .chain(CONTEXTS.map(|c| Effect::in_context(Effect::Baserate, c)))
                .collect(),
        )
        .ok(),
        _ => {
            let mut chars = name.chars();
            let letter = chars.next()?;
            let number: u8 = chars.as_str().parse().ok()?;
            classroom_spec(letter, number)
        }
    }
}
