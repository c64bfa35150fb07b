//! Versioned prompt templates, compiled into the binary and addressed by
//! name so tests can fingerprint exactly what each model call sees.
//!
//! Placeholders use `{name}` syntax and are filled by plain substitution;
//! there is deliberately no logic in the template language.

use alloc::borrow::ToOwned;
use alloc::string::String;

pub const PHASE_INITIAL: &str = include_str!("../templates/phase_initial.txt");
pub const PHASE_EARLY: &str = include_str!("../templates/phase_early.txt");
pub const PHASE_MIDDLE: &str = include_str!("../templates/phase_middle.txt");
pub const PHASE_LATE: &str = include_str!("../templates/phase_late.txt");
pub const CONSTRAINTS: &str = include_str!("../templates/constraints.txt");
pub const SUMMARY: &str = include_str!("../templates/summary.txt");
pub const SCENARIO: &str = include_str!("../templates/scenario.txt");
pub const ANNOTATION: &str = include_str!("../templates/annotation.txt");
pub const JUDGE: &str = include_str!("../templates/judge.txt");
pub const CONTEXT_NEWS: &str = include_str!("../templates/context_news.txt");
pub const CONTEXT_ROLE: &str = include_str!("../templates/context_role.txt");

/// All templates by name.
pub const ALL: &[(&str, &str)] = &[
    ("phase_initial", PHASE_INITIAL),
    ("phase_early", PHASE_EARLY),
    ("phase_middle", PHASE_MIDDLE),
    ("phase_late", PHASE_LATE),
    ("constraints", CONSTRAINTS),
    ("summary", SUMMARY),
    ("scenario", SCENARIO),
    ("annotation", ANNOTATION),
    ("judge", JUDGE),
    ("context_news", CONTEXT_NEWS),
    ("context_role", CONTEXT_ROLE),
];

pub fn by_name(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Replaces `{key}` placeholders. Keys absent from `vars` are left as-is.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (key, value) in vars {
        let needle = alloc::format!("{{{key}}}");
        out = out.replace(&needle, value);
    }
    out
}

/// Line that separates fields inside one item of a structured reply.
pub const FIELD_SEPARATOR: &str = "---";
/// Line that separates items from each other in a structured reply.
pub const ITEM_SEPARATOR: &str = "===";
