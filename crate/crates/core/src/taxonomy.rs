//! Rule-based classification of failed samples into failure modes.
//!
//! Rules are tried in a fixed priority order and the first match wins, so
//! every sample gets exactly one class.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::RawSample;
use crate::harness::{Problem, SimOutcome};
use crate::metrics::Percent;
use crate::scan::{extract_module_name, extract_modules, tokenize, ExtractionKind, ExtractionResult, Token, TokenKind};
use crate::TemperatureKey;

/// Failure mode of one sample; `None` means it passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    None,
    MissingEndmodule,
    Repetition,
    UndefinedInstance,
    ForeignLanguage,
    PromptEcho,
    SkeletonOnly,
    SyntaxError,
    Other,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 9] = [
        ErrorClass::None,
        ErrorClass::MissingEndmodule,
        ErrorClass::Repetition,
        ErrorClass::UndefinedInstance,
        ErrorClass::ForeignLanguage,
        ErrorClass::PromptEcho,
        ErrorClass::SkeletonOnly,
        ErrorClass::SyntaxError,
        ErrorClass::Other,
    ];

    /// Position in the rule order used by [`classify`]; lower fires first.
    pub fn priority(self) -> u8 {
        match self {
            ErrorClass::None => 0,
            ErrorClass::ForeignLanguage => 1,
            ErrorClass::PromptEcho => 2,
            ErrorClass::Repetition => 3,
            ErrorClass::MissingEndmodule => 4,
            ErrorClass::SkeletonOnly => 5,
            ErrorClass::UndefinedInstance => 6,
            ErrorClass::SyntaxError => 7,
            ErrorClass::Other => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::None => "none",
            ErrorClass::MissingEndmodule => "missing_endmodule",
            ErrorClass::Repetition => "repetition",
            ErrorClass::UndefinedInstance => "undefined_instance",
            ErrorClass::ForeignLanguage => "foreign_language",
            ErrorClass::PromptEcho => "prompt_echo",
            ErrorClass::SkeletonOnly => "skeleton_only",
            ErrorClass::SyntaxError => "syntax_error",
            ErrorClass::Other => "other",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorClass::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown error class `{s}`"))
    }
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("invalid rules file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid rules: {0}")]
    Invalid(String),
}

/// Thresholds and lexicons for [`classify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaxonomyRules {
    pub foreign_lexicon: Vec<String>,
    pub echo_coverage: f64,
    pub repeat_line_threshold: usize,
    pub repeat_block_min_lines: usize,
    pub repeat_block_threshold: usize,
    pub repetition_ignore: Vec<String>,
    pub verilog_indicators: Vec<String>,
    pub behavioral_keywords: Vec<String>,
    pub instance_exclusions: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesOverride {
    foreign_lexicon: Option<Vec<String>>,
    echo_coverage: Option<f64>,
    repeat_line_threshold: Option<usize>,
    repeat_block_min_lines: Option<usize>,
    repeat_block_threshold: Option<usize>,
    repetition_ignore: Option<Vec<String>>,
    verilog_indicators: Option<Vec<String>>,
    behavioral_keywords: Option<Vec<String>>,
    instance_exclusions: Option<Vec<String>>,
}

const BUILTIN_RULES: &str = include_str!("../data/taxonomy_rules.toml");

impl Default for TaxonomyRules {
    fn default() -> Self {
        toml::from_str(BUILTIN_RULES).expect("built-in rules parse")
    }
}

impl TaxonomyRules {
    /// Built-in defaults with the keys present in `text` replaced.
    pub fn from_toml_overrides(text: &str) -> Result<Self, RulesError> {
        let o: RulesOverride = toml::from_str(text)?;
        let mut r = TaxonomyRules::default();
        macro_rules! apply {
            ($($f:ident),*) => { $(if let Some(v) = o.$f { r.$f = v; })* };
        }
        apply!(
            foreign_lexicon,
            echo_coverage,
            repeat_line_threshold,
            repeat_block_min_lines,
            repeat_block_threshold,
            repetition_ignore,
            verilog_indicators,
            behavioral_keywords,
            instance_exclusions
        );
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<(), RulesError> {
        if !(0.0..=1.0).contains(&self.echo_coverage) {
            return Err(RulesError::Invalid("echo_coverage must be within [0, 1]".into()));
        }
        if self.repeat_line_threshold < 2 || self.repeat_block_threshold < 2 || self.repeat_block_min_lines < 2 {
            return Err(RulesError::Invalid("repetition thresholds must be at least 2".into()));
        }
        Ok(())
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Substring match that, for entries beginning with a word character,
/// requires a non-word character (or start of text) just before the hit.
fn lexicon_hit(text: &str, entry: &str) -> bool {
    if entry.is_empty() {
        return false;
    }
    let needs_boundary = entry.as_bytes()[0].is_ascii_alphanumeric() || entry.starts_with('_');
    text.match_indices(entry).any(|(i, _)| !needs_boundary || i == 0 || !is_word_byte(text.as_bytes()[i - 1]))
}

fn non_ws(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Length of the longest common substring of `a` and `b`.
fn longest_common_substring(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = 0;
    for &ca in a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { 0 };
            best = best.max(cur[j + 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Share of the completion's non-whitespace characters covered by its
/// longest common substring with `description` (whitespace ignored on both
/// sides, so reflowed text still matches).
pub fn echo_coverage(completion: &str, description: &str) -> f64 {
    let c = non_ws(completion);
    if c.is_empty() {
        return 0.0;
    }
    longest_common_substring(&c, &non_ws(description)) as f64 / c.len() as f64
}

/// True when some line repeats consecutively, or a multi-line block
/// repeats back to back, at least as often as the rules demand.
pub fn has_repetition(completion: &str, rules: &TaxonomyRules) -> bool {
    let lines: Vec<String> = completion
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect();
    let ignored = |l: &String| rules.repetition_ignore.iter().any(|i| i == l);

    let mut run = 1;
    for w in lines.windows(2) {
        run = if w[0] == w[1] { run + 1 } else { 1 };
        if run >= rules.repeat_line_threshold && !ignored(&w[1]) {
            return true;
        }
    }

    let reps = rules.repeat_block_threshold;
    let max_len = lines.len() / reps;
    for len in rules.repeat_block_min_lines..=max_len {
        for start in 0..=lines.len() - len * reps {
            let block = &lines[start..start + len];
            if block.iter().all(ignored) {
                continue;
            }
            if (1..reps).all(|r| &lines[start + r * len..start + (r + 1) * len] == block) {
                return true;
            }
        }
    }
    false
}

fn significant<'a>(text: &'a str) -> Vec<Token<'a>> {
    tokenize(text).into_iter().filter(|t| !t.is_trivia()).collect()
}

fn at_statement_start(prev: Option<&Token<'_>>) -> bool {
    match prev {
        None => true,
        Some(t) if t.is_punct(";") => true,
        Some(t) => {
            t.kind == TokenKind::Keyword
                && matches!(
                    t.text,
                    "begin" | "end" | "else" | "generate" | "endgenerate" | "endcase" | "endfunction" | "endtask"
                )
        }
    }
}

fn is_plain_ident(t: &Token<'_>) -> bool {
    t.kind == TokenKind::Identifier && !t.text.starts_with('$')
}

/// Module type names of instantiation-shaped statements:
/// `type name (` or `type #(...) name (`.
pub fn instantiated_types(text: &str) -> Vec<String> {
    let toks = significant(text);
    let mut out = Vec::new();
    for i in 0..toks.len() {
        if !is_plain_ident(&toks[i]) || !at_statement_start(i.checked_sub(1).map(|p| &toks[p])) {
            continue;
        }
        let mut j = i + 1;
        if toks.get(j).is_some_and(|t| t.is_punct("#")) && toks.get(j + 1).is_some_and(|t| t.is_punct("(")) {
            let mut depth = 0;
            j += 1;
            while let Some(t) = toks.get(j) {
                if t.is_punct("(") {
                    depth += 1;
                } else if t.is_punct(")") {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                j += 1;
            }
            j += 1;
        }
        if toks.get(j).is_some_and(is_plain_ident) && toks.get(j + 1).is_some_and(|t| t.is_punct("(")) {
            out.push(toks[i].text.to_string());
        }
    }
    out
}

/// Names following any `module` keyword, complete or not.
fn declared_modules(text: &str) -> HashSet<String> {
    let toks = significant(text);
    toks.windows(2)
        .filter(|w| w[0].is_keyword("module") || w[0].is_keyword("macromodule"))
        .filter(|w| is_plain_ident(&w[1]))
        .map(|w| w[1].text.to_string())
        .chain(extract_modules(text).into_iter().filter_map(|m| m.name))
        .collect()
}

fn has_token(text: &str, words: &[String]) -> bool {
    significant(text)
        .iter()
        .any(|t| matches!(t.kind, TokenKind::Keyword | TokenKind::Identifier) && words.iter().any(|w| w == t.text))
}

fn has_endmodule_keyword(text: &str) -> bool {
    tokenize(text).iter().any(|t| t.is_keyword("endmodule"))
}

/// Assigns exactly one class to a sample. Rules, first match wins:
/// pass, foreign language, prompt echo, repetition, missing `endmodule`,
/// skeleton only, undefined instance, syntax error, other.
pub fn classify(
    sample: &RawSample,
    extraction: &ExtractionResult,
    sim: &SimOutcome,
    problem: &Problem,
    rules: &TaxonomyRules,
) -> ErrorClass {
    let text = sample.completion.as_str();
    if *sim == SimOutcome::Pass {
        return ErrorClass::None;
    }
    if !text.contains("endmodule") && rules.foreign_lexicon.iter().any(|e| lexicon_hit(text, e)) {
        return ErrorClass::ForeignLanguage;
    }
    if echo_coverage(text, &problem.description) >= rules.echo_coverage && !non_ws(text).is_empty() {
        return ErrorClass::PromptEcho;
    }
    if has_repetition(text, rules) {
        return ErrorClass::Repetition;
    }
    let extracted = extraction.module();
    if matches!(extraction.kind(), ExtractionKind::MissingEndmodule | ExtractionKind::NoModuleKeyword)
        && !has_endmodule_keyword(text)
        && has_token(text, &rules.verilog_indicators)
    {
        return ErrorClass::MissingEndmodule;
    }
    let body = extracted.map_or(text, |m| m.body.as_str());
    let instances = instantiated_types(body);
    if extracted.is_some() && instances.is_empty() && !has_token(body, &rules.behavioral_keywords) {
        return ErrorClass::SkeletonOnly;
    }
    let mut known = declared_modules(text);
    if let Some(name) = problem.module_header.as_deref().and_then(|h| extract_module_name(h).ok()) {
        known.insert(name);
    }
    if instances.iter().any(|ty| !known.contains(ty) && !rules.instance_exclusions.iter().any(|e| e == ty)) {
        return ErrorClass::UndefinedInstance;
    }
    if matches!(sim, SimOutcome::CompileError(_)) {
        return ErrorClass::SyntaxError;
    }
    ErrorClass::Other
}

/// One line of a taxonomy file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedRow {
    pub task_id: String,
    pub sample_index: u32,
    pub temperature: f64,
    pub error_class: ErrorClass,
}

/// Class counts for one temperature (or all of them).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBreakdown {
    pub temperature: Option<f64>,
    pub total: u64,
    pub failed: u64,
    /// Every failure class, zero counts included.
    pub counts: BTreeMap<ErrorClass, u64>,
}

impl ClassBreakdown {
    fn new(temperature: Option<f64>) -> Self {
        let counts = ErrorClass::ALL.into_iter().filter(|c| *c != ErrorClass::None).map(|c| (c, 0)).collect();
        ClassBreakdown { temperature, total: 0, failed: 0, counts }
    }

    fn add(&mut self, class: ErrorClass) {
        self.total += 1;
        if class != ErrorClass::None {
            self.failed += 1;
            *self.counts.entry(class).or_default() += 1;
        }
    }

    /// Share of failed samples in `class`.
    pub fn percent(&self, class: ErrorClass) -> Percent {
        let n = self.counts.get(&class).copied().unwrap_or(0);
        if self.failed == 0 {
            return Percent::from_hundredths(0);
        }
        Percent::from_ratio(n as i128, self.failed as i128)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaxonomySummary {
    pub per_temperature: Vec<ClassBreakdown>,
    pub overall: ClassBreakdown,
}

pub fn taxonomy_summary<'a>(rows: impl IntoIterator<Item = &'a ClassifiedRow>) -> TaxonomySummary {
    let mut overall = ClassBreakdown::new(None);
    let mut per: BTreeMap<TemperatureKey, ClassBreakdown> = BTreeMap::new();
    for row in rows {
        overall.add(row.error_class);
        per.entry(TemperatureKey::new(row.temperature))
            .or_insert_with(|| ClassBreakdown::new(Some(row.temperature)))
            .add(row.error_class);
    }
    TaxonomySummary { per_temperature: per.into_values().collect(), overall }
}

impl TaxonomySummary {
    pub fn to_markdown(&self) -> String {
        let mut cols: Vec<&ClassBreakdown> = self.per_temperature.iter().collect();
        cols.push(&self.overall);
        let mut out = String::from("# Failure taxonomy\n\n| Class |");
        for c in &cols {
            match c.temperature {
                Some(t) => out.push_str(&format!(" t={t} |")),
                None => out.push_str(" all |"),
            }
        }
        out.push_str(&format!("\n|{}\n", "---|".repeat(cols.len() + 1)));
        let classes: BTreeSet<ErrorClass> = self.overall.counts.keys().copied().collect();
        for class in classes {
            out.push_str(&format!("| {class} |"));
            for c in &cols {
                out.push_str(&format!(" {} ({}) |", c.counts[&class], c.percent(class)));
            }
            out.push('\n');
        }
        out.push_str("| failed / total |");
        for c in &cols {
            out.push_str(&format!(" {} / {} |", c.failed, c.total));
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules() -> TaxonomyRules {
        TaxonomyRules::default()
    }

    #[test]
    fn builtin_rules_load() {
        let r = rules();
        assert_eq!(r.echo_coverage, 0.6);
        assert_eq!(r.repeat_line_threshold, 3);
        assert!(r.foreign_lexicon.iter().any(|e| e == "#include"));
    }

    #[test]
    fn overrides_replace_only_given_keys() {
        let r = TaxonomyRules::from_toml_overrides("echo_coverage = 0.8\n").unwrap();
        assert_eq!(r.echo_coverage, 0.8);
        assert_eq!(r.foreign_lexicon, rules().foreign_lexicon);
        assert!(TaxonomyRules::from_toml_overrides("echo_coverag = 0.8\n").is_err());
        assert!(TaxonomyRules::from_toml_overrides("echo_coverage = 1.5\n").is_err());
    }

    #[test]
    fn lexicon_boundaries() {
        assert!(lexicon_hit("x\ndef foo():", "def "));
        assert!(!lexicon_hit("`undef FOO", "def "));
        assert!(lexicon_hit("a#include<x>", "#include"));
        assert!(!lexicon_hit("reimport x", "import "));
    }

    #[test]
    fn lcs() {
        let c = |s: &str| s.chars().collect::<Vec<_>>();
        assert_eq!(longest_common_substring(&c("xabcdy"), &c("zzabcdzz")), 4);
        assert_eq!(longest_common_substring(&c(""), &c("a")), 0);
        assert_eq!(echo_coverage("a b c", "xx abc yy"), 1.0);
        assert_eq!(echo_coverage("   ", "abc"), 0.0);
    }

    #[test]
    fn repetition_rules() {
        let r = rules();
        assert!(has_repetition("// Verilog code\n// Verilog code\n  //  Verilog   code", &r));
        assert!(!has_repetition("// Verilog code\n// Verilog code", &r));
        assert!(has_repetition("a = 1;\nb = 2;\n\na = 1;\nb = 2;\na = 1;\nb = 2;\n", &r));
        assert!(!has_repetition("end\nend\nend\nendmodule", &r));
        assert!(!has_repetition("", &r));
    }

    #[test]
    fn instantiation_shapes() {
        assert_eq!(instantiated_types("foo u0 (.a(a));"), ["foo"]);
        assert_eq!(instantiated_types("wire x; bar #(.W(8)) u1 (a, b);"), ["bar"]);
        assert!(instantiated_types("assign x = f(a);").is_empty());
        assert!(instantiated_types("always @(posedge clk) q <= d;").is_empty());
    }

    #[test]
    fn class_names_round_trip() {
        for c in ErrorClass::ALL {
            assert_eq!(c.as_str().parse::<ErrorClass>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
    }

    #[test]
    fn summary_counts() {
        let row = |t: f64, c| ClassifiedRow { task_id: "t".into(), sample_index: 0, temperature: t, error_class: c };
        let rows: Vec<ClassifiedRow> = (0..10).map(|_| row(0.2, ErrorClass::SyntaxError)).collect();
        let s = taxonomy_summary(&rows);
        assert_eq!(s.overall.counts[&ErrorClass::SyntaxError], 10);
        assert_eq!(s.overall.percent(ErrorClass::SyntaxError).to_string(), "100.00%");

        let s = taxonomy_summary(&[]);
        assert!(s.overall.counts.values().all(|&n| n == 0));
        assert!(s.per_temperature.is_empty());
        assert_eq!(s.overall.percent(ErrorClass::Other).to_string(), "0.00%");

        let rows = [row(0.8, ErrorClass::None), row(0.2, ErrorClass::Other), row(0.8, ErrorClass::Repetition)];
        let s = taxonomy_summary(&rows);
        assert_eq!(s.per_temperature.len(), 2);
        assert_eq!(s.per_temperature[0].temperature, Some(0.2));
        assert_eq!(s.per_temperature[1].failed, 1);
        assert_eq!(s.per_temperature[1].total, 2);
        assert!(s.to_markdown().contains("| repetition | 0 (0.00%) | 1 (100.00%) | 1 (50.00%) |"));
    }
}
