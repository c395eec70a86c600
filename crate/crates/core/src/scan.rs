//! Comment- and string-aware lexical scanning of Verilog text.
//!
//! The scanner is deliberately shallow: it knows enough about comments,
//! string literals, attributes and identifiers to locate `module` and
//! `endmodule` *keywords* reliably, recover module names, and cut a module
//! header off its body. It does not parse expressions or statements.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lexical category of a [`Token`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword,
    Identifier,
    LineComment,
    /// `/* ... */` comments and `(* ... *)` attributes.
    BlockComment,
    StringLiteral,
    Punctuation,
    Number,
    /// Whitespace runs, compiler directives and anything unrecognised.
    Other,
}

/// A verbatim slice of the source with its category and byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub offset: usize,
}

impl<'a> Token<'a> {
    pub fn end(&self) -> usize {
        self.offset + self.text.len()
    }

    /// Whitespace and comments; everything the extraction logic skips over.
    pub fn is_trivia(&self) -> bool {
        match self.kind {
            TokenKind::LineComment | TokenKind::BlockComment => true,
            TokenKind::Other => self.text.bytes().all(|b| b.is_ascii_whitespace()),
            _ => false,
        }
    }

    pub fn is_keyword(&self, word: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == word
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punctuation && self.text == p
    }
}

/// Token stream plus free-text notes about malformed input.
#[derive(Debug, Clone, Default)]
pub struct Lexed<'a> {
    pub tokens: Vec<Token<'a>>,
    pub diagnostics: Vec<String>,
}

// IEEE 1364-2005 reserved words.
const KEYWORDS: &[&str] = &[
    "always",
    "and",
    "assign",
    "automatic",
    "begin",
    "buf",
    "bufif0",
    "bufif1",
    "case",
    "casex",
    "casez",
    "cell",
    "cmos",
    "config",
    "deassign",
    "default",
    "defparam",
    "design",
    "disable",
    "edge",
    "else",
    "end",
    "endcase",
    "endconfig",
    "endfunction",
    "endgenerate",
    "endmodule",
    "endprimitive",
    "endspecify",
    "endtable",
    "endtask",
    "event",
    "for",
    "force",
    "forever",
    "fork",
    "function",
    "generate",
    "genvar",
    "highz0",
    "highz1",
    "if",
    "ifnone",
    "incdir",
    "include",
    "initial",
    "inout",
    "input",
    "instance",
    "integer",
    "join",
    "large",
    "liblist",
    "library",
    "localparam",
    "macromodule",
    "medium",
    "module",
    "nand",
    "negedge",
    "nmos",
    "nor",
    "noshowcancelled",
    "not",
    "notif0",
    "notif1",
    "or",
    "output",
    "parameter",
    "pmos",
    "posedge",
    "primitive",
    "pull0",
    "pull1",
    "pulldown",
    "pullup",
    "pulsestyle_ondetect",
    "pulsestyle_onevent",
    "rcmos",
    "real",
    "realtime",
    "reg",
    "release",
    "repeat",
    "rnmos",
    "rpmos",
    "rtran",
    "rtranif0",
    "rtranif1",
    "scalared",
    "showcancelled",
    "signed",
    "small",
    "specify",
    "specparam",
    "strong0",
    "strong1",
    "supply0",
    "supply1",
    "table",
    "task",
    "time",
    "tran",
    "tranif0",
    "tranif1",
    "tri",
    "tri0",
    "tri1",
    "triand",
    "trior",
    "trireg",
    "unsigned",
    "use",
    "uwire",
    "vectored",
    "wait",
    "wand",
    "weak0",
    "weak1",
    "while",
    "wire",
    "wor",
    "xnor",
    "xor",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word).is_ok()
}

/// Tokenizes `source`, discarding diagnostics. Total and lossless.
pub fn tokenize(source: &str) -> Vec<Token<'_>> {
    lex(source).tokens
}

/// Tokenizes `source`, reporting unterminated comments, strings and
/// attributes in [`Lexed::diagnostics`].
pub fn lex(source: &str) -> Lexed<'_> {
    Lexer { src: source, bytes: source.as_bytes(), pos: 0, out: Lexed::default() }.run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    out: Lexed<'a>,
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn is_base_char(b: u8) -> bool {
    matches!(b, b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H')
}

fn is_based_digit(b: u8) -> bool {
    b.is_ascii_hexdigit() || matches!(b, b'x' | b'X' | b'z' | b'Z' | b'?' | b'_')
}

impl<'a> Lexer<'a> {
    fn run(mut self) -> Lexed<'a> {
        while self.pos < self.bytes.len() {
            self.step();
        }
        self.out
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn find(&self, from: usize, needle: &str) -> Option<usize> {
        self.src[from..].find(needle).map(|i| from + i)
    }

    fn emit(&mut self, kind: TokenKind, end: usize) {
        let start = self.pos;
        self.out.tokens.push(Token { kind, text: &self.src[start..end], offset: start });
        self.pos = end;
    }

    fn take_while(&self, from: usize, pred: impl Fn(u8) -> bool) -> usize {
        let mut end = from;
        while end < self.bytes.len() && pred(self.bytes[end]) {
            end += 1;
        }
        end
    }

    fn step(&mut self) {
        let start = self.pos;
        let b = self.bytes[start];
        match b {
            _ if b.is_ascii_whitespace() => {
                let end = self.take_while(start, |c| c.is_ascii_whitespace());
                self.emit(TokenKind::Other, end);
            }
            b'/' if self.peek(1) == Some(b'/') => {
                let end = self.find(start, "\n").unwrap_or(self.bytes.len());
                self.emit(TokenKind::LineComment, end);
            }
            b'/' if self.peek(1) == Some(b'*') => {
                let end = match self.find(start + 2, "*/") {
                    Some(i) => i + 2,
                    None => {
                        self.out.diagnostics.push(format!("unterminated block comment at byte {start}"));
                        self.bytes.len()
                    }
                };
                self.emit(TokenKind::BlockComment, end);
            }
            b'(' if self.peek(1) == Some(b'*') && !self.is_star_paren(start + 2) => {
                // Attribute instance `(* ... *)`. An unterminated one degrades to
                // a plain parenthesis rather than swallowing the rest of the file.
                match self.find(start + 2, "*)") {
                    Some(i) => self.emit(TokenKind::BlockComment, i + 2),
                    None => {
                        self.out.diagnostics.push(format!("unterminated attribute at byte {start}"));
                        self.emit(TokenKind::Punctuation, start + 1);
                    }
                }
            }
            b'"' => {
                let mut i = start + 1;
                let end = loop {
                    match self.bytes.get(i) {
                        None => {
                            self.out.diagnostics.push(format!("unterminated string literal at byte {start}"));
                            break self.bytes.len();
                        }
                        Some(b'\\') => i += 2,
                        Some(b'"') => break i + 1,
                        Some(_) => i += 1,
                    }
                };
                self.emit(TokenKind::StringLiteral, end.min(self.bytes.len()));
            }
            _ if is_ident_start(b) => {
                let end = self.take_while(start, is_ident_continue);
                let kind = if is_keyword(&self.src[start..end]) { TokenKind::Keyword } else { TokenKind::Identifier };
                self.emit(kind, end);
            }
            b'\\' => {
                let end = self.take_while(start + 1, |c| !c.is_ascii_whitespace());
                if end > start + 1 {
                    self.emit(TokenKind::Identifier, end);
                } else {
                    self.emit(TokenKind::Other, start + 1);
                }
            }
            b'$' => {
                let end = self.take_while(start + 1, is_ident_continue);
                let kind = if end > start + 1 { TokenKind::Identifier } else { TokenKind::Punctuation };
                self.emit(kind, end);
            }
            b'`' => {
                let end = self.take_while(start + 1, is_ident_continue);
                self.emit(TokenKind::Other, end);
            }
            b'0'..=b'9' => {
                let end = self.number_end(start);
                self.emit(TokenKind::Number, end);
            }
            b'\'' => match self.based_end(start) {
                Some(end) => self.emit(TokenKind::Number, end),
                None => self.emit(TokenKind::Punctuation, start + 1),
            },
            _ if b.is_ascii_punctuation() => self.emit(TokenKind::Punctuation, start + 1),
            _ => {
                let width = self.src[start..].chars().next().map_or(1, char::len_utf8);
                self.emit(TokenKind::Other, start + width);
            }
        }
    }

    /// True when the text at `from` is optional whitespace followed by `)`,
    /// i.e. the `(*)` of `@(*)` rather than an attribute.
    fn is_star_paren(&self, from: usize) -> bool {
        let i = self.take_while(from, |c| c.is_ascii_whitespace());
        self.bytes.get(i) == Some(&b')')
    }

    fn number_end(&self, start: usize) -> usize {
        let digits = |c: u8| c.is_ascii_digit() || c == b'_';
        let mut end = self.take_while(start, digits);
        if self.bytes.get(end) == Some(&b'.') && self.bytes.get(end + 1).is_some_and(u8::is_ascii_digit) {
            end = self.take_while(end + 1, digits);
        }
        if matches!(self.bytes.get(end), Some(b'e' | b'E')) {
            let mut j = end + 1;
            if matches!(self.bytes.get(j), Some(b'+' | b'-')) {
                j += 1;
            }
            if self.bytes.get(j).is_some_and(u8::is_ascii_digit) {
                end = self.take_while(j, digits);
            }
        }
        if self.bytes.get(end) == Some(&b'\'') {
            if let Some(based) = self.based_end(end) {
                end = based;
            }
        }
        end
    }

    /// End of a based literal tail such as `'b1010` or `'sh1F` starting at
    /// the apostrophe, if one is present.
    fn based_end(&self, tick: usize) -> Option<usize> {
        let mut i = tick + 1;
        if matches!(self.bytes.get(i), Some(b's' | b'S')) {
            i += 1;
        }
        if !self.bytes.get(i).copied().is_some_and(is_base_char) {
            return None;
        }
        Some(self.take_while(i + 1, is_based_digit))
    }
}

/// Half-open byte range into the scanned source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// A `module ... endmodule` region recovered from source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerilogModule {
    /// `None` when the header carries no identifier (e.g. `module(`).
    pub name: Option<String>,
    pub full_text: String,
    /// Module logic with the header removed, ending with `endmodule`.
    pub body: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScanError {
    #[error("text does not begin with the `module` keyword")]
    NotAModule,
    #[error("no identifier follows the `module` keyword")]
    NameNotFound,
    #[error("no header-terminating `;` before `endmodule`")]
    NoHeaderTerminator,
}

/// Modules found in a source plus notes about dangling or nested keywords.
#[derive(Debug, Clone, Default)]
pub struct ModuleScan {
    pub modules: Vec<VerilogModule>,
    pub diagnostics: Vec<String>,
}

fn is_module_kw(tok: &Token<'_>) -> bool {
    tok.is_keyword("module") || tok.is_keyword("macromodule")
}

/// All top-level `module ... endmodule` regions, in source order.
pub fn extract_modules(source: &str) -> Vec<VerilogModule> {
    scan_modules(source).modules
}

pub fn scan_modules(source: &str) -> ModuleScan {
    let lexed = lex(source);
    let mut scan = ModuleScan { modules: Vec::new(), diagnostics: lexed.diagnostics };
    let mut open: Option<usize> = None;

    for (idx, tok) in lexed.tokens.iter().enumerate() {
        if is_module_kw(tok) {
            match open {
                None => open = Some(idx),
                Some(_) => scan.diagnostics.push(format!(
                    "nested `module` at byte {} ignored; pairing the enclosing one with the next `endmodule`",
                    tok.offset
                )),
            }
        } else if tok.is_keyword("endmodule") {
            match open.take() {
                Some(start_idx) => {
                    let header = &lexed.tokens[start_idx..=idx];
                    let module = build_module(source, header, &mut scan.diagnostics);
                    scan.modules.push(module);
                }
                None => scan.diagnostics.push(format!("`endmodule` at byte {} has no matching `module`", tok.offset)),
            }
        }
    }
    if let Some(start_idx) = open {
        scan.diagnostics
            .push(format!("`module` at byte {} has no matching `endmodule`", lexed.tokens[start_idx].offset));
    }
    scan
}

fn build_module(source: &str, toks: &[Token<'_>], diagnostics: &mut Vec<String>) -> VerilogModule {
    let start = toks[0].offset;
    let end = toks[toks.len() - 1].end();
    let full_text = source[start..end].to_string();
    let name = name_from_tokens(toks).ok();
    if name.is_none() {
        diagnostics.push(format!("module at byte {start} has no name"));
    }
    let body = match header_end(toks) {
        Ok(body_start) => source[body_start..end].trim_start().to_string(),
        Err(_) => {
            diagnostics.push(format!("module at byte {start} has no header terminator; body is the full module"));
            full_text.clone()
        }
    };
    VerilogModule { name, full_text, body, span: Span { start, end } }
}

/// First significant token after the leading `module` keyword, if it is an
/// identifier.
fn name_from_tokens(toks: &[Token<'_>]) -> Result<String, ScanError> {
    let mut sig = toks.iter().filter(|t| !t.is_trivia());
    match sig.next() {
        Some(t) if is_module_kw(t) => {}
        _ => return Err(ScanError::NotAModule),
    }
    match sig.next() {
        Some(t) if t.kind == TokenKind::Identifier && !t.text.starts_with('$') => Ok(t.text.to_string()),
        _ => Err(ScanError::NameNotFound),
    }
}

/// Byte offset just past the first `;` at parenthesis depth 0.
fn header_end(toks: &[Token<'_>]) -> Result<usize, ScanError> {
    let mut sig = toks.iter().filter(|t| !t.is_trivia());
    match sig.next() {
        Some(t) if is_module_kw(t) => {}
        _ => return Err(ScanError::NotAModule),
    }
    let mut depth: i64 = 0;
    for t in sig {
        if t.is_keyword("endmodule") {
            break;
        }
        if t.is_punct("(") {
            depth += 1;
        } else if t.is_punct(")") {
            depth = (depth - 1).max(0);
        } else if t.is_punct(";") && depth == 0 {
            return Ok(t.end());
        }
    }
    Err(ScanError::NoHeaderTerminator)
}

/// Name of the module whose text begins with the `module` keyword.
/// Leading whitespace and comments are tolerated.
pub fn extract_module_name(module_text: &str) -> Result<String, ScanError> {
    name_from_tokens(&tokenize(module_text))
}

/// Removes the module header (through the first depth-0 `;`), returning the
/// module logic ending with `endmodule`, leading whitespace trimmed.
pub fn strip_header(module_text: &str) -> Result<String, ScanError> {
    let toks = tokenize(module_text);
    let body_start = header_end(&toks)?;
    Ok(module_text[body_start..].trim_start().to_string())
}

/// Why a completion did or did not yield a candidate module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractionOutcome {
    Extracted(VerilogModule),
    NoModuleKeyword,
    MissingEndmodule,
    EmptyInput,
}

/// Outcome tag without the payload; this is what result files record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionKind {
    Extracted,
    NoModuleKeyword,
    MissingEndmodule,
    EmptyInput,
}

impl ExtractionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionKind::Extracted => "extracted",
            ExtractionKind::NoModuleKeyword => "no_module_keyword",
            ExtractionKind::MissingEndmodule => "missing_endmodule",
            ExtractionKind::EmptyInput => "empty_input",
        }
    }
}

impl fmt::Display for ExtractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionResult {
    pub outcome: ExtractionOutcome,
    pub diagnostics: Vec<String>,
}

impl ExtractionResult {
    pub fn kind(&self) -> ExtractionKind {
        match self.outcome {
            ExtractionOutcome::Extracted(_) => ExtractionKind::Extracted,
            ExtractionOutcome::NoModuleKeyword => ExtractionKind::NoModuleKeyword,
            ExtractionOutcome::MissingEndmodule => ExtractionKind::MissingEndmodule,
            ExtractionOutcome::EmptyInput => ExtractionKind::EmptyInput,
        }
    }

    pub fn module(&self) -> Option<&VerilogModule> {
        match &self.outcome {
            ExtractionOutcome::Extracted(m) => Some(m),
            _ => None,
        }
    }
}

/// Turns a raw model completion into a candidate module: the first complete
/// module wins, with its header stripped into [`VerilogModule::body`].
pub fn extract_completion(completion: &str) -> ExtractionResult {
    if completion.trim().is_empty() {
        return ExtractionResult { outcome: ExtractionOutcome::EmptyInput, diagnostics: Vec::new() };
    }
    let ModuleScan { mut modules, mut diagnostics } = scan_modules(completion);
    if modules.len() > 1 {
        diagnostics.push(format!("{} modules found; using the first", modules.len()));
    }
    let outcome = if !modules.is_empty() {
        ExtractionOutcome::Extracted(modules.swap_remove(0))
    } else if tokenize(completion).iter().any(is_module_kw) {
        ExtractionOutcome::MissingEndmodule
    } else {
        ExtractionOutcome::NoModuleKeyword
    };
    ExtractionResult { outcome, diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokenKind, &str)> {
        tokenize(src)
            .into_iter()
            .filter(|t| !t.is_trivia() || t.kind != TokenKind::Other)
            .map(|t| (t.kind, t.text))
            .collect()
    }

    #[test]
    fn keyword_table_is_sorted() {
        assert!(KEYWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn empty_source_has_no_tokens() {
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn module_header_tokens() {
        use TokenKind::*;
        assert_eq!(
            kinds("module e0 (x, y);"),
            vec![
                (Keyword, "module"),
                (Identifier, "e0"),
                (Punctuation, "("),
                (Identifier, "x"),
                (Punctuation, ","),
                (Identifier, "y"),
                (Punctuation, ")"),
                (Punctuation, ";"),
            ]
        );
    }

    #[test]
    fn endmodule_in_line_comment_is_not_a_keyword() {
        let toks = tokenize("// endmodule\nmodule a;endmodule");
        assert_eq!(toks[0].kind, TokenKind::LineComment);
        assert_eq!(toks[0].text, "// endmodule");
        assert_eq!(toks.iter().filter(|t| t.is_keyword("endmodule")).count(), 1);
    }

    #[test]
    fn unterminated_constructs_run_to_end_and_are_reported() {
        let lexed = lex("module a; /* open");
        assert_eq!(lexed.tokens.last().unwrap().text, "/* open");
        assert_eq!(lexed.diagnostics.len(), 1);

        let lexed = lex("x = \"abc");
        assert_eq!(lexed.tokens.last().unwrap().kind, TokenKind::StringLiteral);
        assert!(lexed.diagnostics[0].contains("string"));
    }

    #[test]
    fn numbers_and_strings() {
        use TokenKind::*;
        assert_eq!(
            kinds("8'hFF 'b1 1.5e3 \"a\\\"b\""),
            vec![(Number, "8'hFF"), (Number, "'b1"), (Number, "1.5e3"), (StringLiteral, "\"a\\\"b\"")]
        );
    }

    #[test]
    fn star_paren_is_not_an_attribute() {
        let toks = kinds("always @(*) begin");
        assert!(toks.contains(&(TokenKind::Punctuation, "*")));
        let toks = kinds("(* full_case *) case");
        assert_eq!(toks[0], (TokenKind::BlockComment, "(* full_case *)"));
    }

    #[test]
    fn escaped_identifier() {
        assert_eq!(extract_module_name("module \\bus+idx (a); endmodule").unwrap(), "\\bus+idx");
    }

    #[test]
    fn non_ascii_is_lossless() {
        let src = "// héllo\nmodule µ; endmodule ünïcode";
        let joined: String = tokenize(src).iter().map(|t| t.text).collect();
        assert_eq!(joined, src);
    }

    #[test]
    fn name_extraction() {
        assert_eq!(
            extract_module_name("module sha256_transform #(parameter LOOP = 7000) (input clk); endmodule").unwrap(),
            "sha256_transform"
        );
        assert_eq!(extract_module_name("module m3 (x, y, z, a); endmodule").unwrap(), "m3");
        assert_eq!(extract_module_name("module /*c*/ a; endmodule").unwrap(), "a");
        assert_eq!(extract_module_name("module (a); endmodule"), Err(ScanError::NameNotFound));
        assert_eq!(extract_module_name("wire a;"), Err(ScanError::NotAModule));
    }

    #[test]
    fn header_stripping() {
        assert_eq!(
            strip_header(
                "module ch (x, y, z, a); input [31:0] x, y, z; output [31:0] a; assign a = z ^ (x & (y ^ z)); endmodule"
            )
            .unwrap(),
            "input [31:0] x, y, z; output [31:0] a; assign a = z ^ (x & (y ^ z)); endmodule"
        );
        assert_eq!(strip_header("module t; endmodule").unwrap(), "endmodule");
        assert_eq!(
            strip_header("module p #(parameter W = 4) (input [W-1:0] a; output b); assign b = |a; endmodule").unwrap(),
            "assign b = |a; endmodule"
        );
        assert_eq!(strip_header("module t (a) endmodule"), Err(ScanError::NoHeaderTerminator));
    }

    #[test]
    fn modules_in_comments_are_ignored() {
        let mods = extract_modules("/* module fake; endmodule */ module real_m; endmodule");
        assert_eq!(mods.len(), 1);
        assert_eq!(mods[0].name.as_deref(), Some("real_m"));
    }

    #[test]
    fn nested_module_is_greedy() {
        let scan = scan_modules("module a; module b; endmodule endmodule");
        assert_eq!(scan.modules.len(), 1);
        assert_eq!(scan.modules[0].full_text, "module a; module b; endmodule");
        assert!(scan.diagnostics.iter().any(|d| d.contains("nested")));
        assert!(scan.diagnostics.iter().any(|d| d.contains("no matching `module`")));
    }

    #[test]
    fn dangling_module_is_omitted() {
        let scan = scan_modules("module a; endmodule module b; wire x;");
        assert_eq!(scan.modules.len(), 1);
        assert!(scan.diagnostics.iter().any(|d| d.contains("no matching `endmodule`")));
    }

    #[test]
    fn completion_outcomes() {
        let notgate = "// Verilog code:\nassign out = ~in;\n// End of file";
        assert_eq!(extract_completion(notgate).kind(), ExtractionKind::NoModuleKeyword);
        assert_eq!(extract_completion("").kind(), ExtractionKind::EmptyInput);
        assert_eq!(extract_completion("  \n ").kind(), ExtractionKind::EmptyInput);
        assert_eq!(extract_completion("module a; assign x = 1;").kind(), ExtractionKind::MissingEndmodule);

        let r = extract_completion("garbage text module a; assign x=1; endmodule trailing");
        let m = r.module().unwrap();
        assert_eq!(m.name.as_deref(), Some("a"));
        assert_eq!(m.body, "assign x=1; endmodule");
    }

    #[test]
    fn first_of_several_modules_is_the_candidate() {
        let r = extract_completion("module a; endmodule\nmodule b; endmodule");
        assert_eq!(r.module().unwrap().name.as_deref(), Some("a"));
        assert!(r.diagnostics.iter().any(|d| d.contains("2 modules")));
    }

    #[test]
    fn anonymous_module_still_extracts() {
        let r = extract_completion("  module(\n# input x,\n# output z);\n# always@(*)\n# endmodule");
        let m = r.module().unwrap();
        assert_eq!(m.name, None);
        assert_eq!(m.body, "# always@(*)\n# endmodule");
    }
}
