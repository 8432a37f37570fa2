//! Prompt templates, stored as text assets and rendered with `{name}`
//! placeholders.

pub const VISUAL_SYSTEM: &str = include_str!("../assets/prompts/visual_system.txt");
pub const VISUAL_USER: &str = include_str!("../assets/prompts/visual_user.txt");
pub const RELEVANCY_SYSTEM: &str = include_str!("../assets/prompts/relevancy_system.txt");
pub const RELEVANCY_USER: &str = include_str!("../assets/prompts/relevancy_user.txt");
pub const QUESTIONS_SYSTEM: &str = include_str!("../assets/prompts/questions_system.txt");
pub const QUESTIONS_USER: &str = include_str!("../assets/prompts/questions_user.txt");
pub const ANSWER_SYSTEM: &str = include_str!("../assets/prompts/answer_system.txt");
pub const ANSWER_USER: &str = include_str!("../assets/prompts/answer_user.txt");
pub const JUDGE_SYSTEM: &str = include_str!("../assets/prompts/judge_system.txt");
pub const JUDGE_USER: &str = include_str!("../assets/prompts/judge_user.txt");
pub const STANCE_SYSTEM: &str = include_str!("../assets/prompts/stance_system.txt");
pub const STANCE_USER: &str = include_str!("../assets/prompts/stance_user.txt");

/// Single-pass substitution of `{name}` placeholders.
///
/// Braces that do not form a known placeholder (JSON examples inside the
/// templates) are copied through untouched, and substituted values are never
/// re-scanned, so user text containing `{headline}` stays literal.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let replaced = tail.find('}').and_then(|close| {
            let name = &tail[..close];
            vars.iter().find(|(k, _)| *k == name).map(|(_, v)| (*v, close))
        });
        match replaced {
            Some((value, close)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}
