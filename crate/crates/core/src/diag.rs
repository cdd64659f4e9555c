//! Diagnostics with line/column spans, rendered as text or JSON.

use serde::Serialize;

use crate::parse::ParseError;
use crate::syntax::Span;
use crate::typeck::TypeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

/// One-based, inclusive start and exclusive end, columns counted in
/// characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LineSpan {
    pub start_line: usize,
    pub start_col: usize,
    pub end_line: usize,
    pub end_col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    pub severity: Severity,
    pub kind: String,
    pub span: LineSpan,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actual: Option<String>,
}

fn position(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().unwrap_or("").chars().count() + 1;
    (line, col)
}

impl LineSpan {
    pub fn from_span(src: &str, sp: Span) -> Self {
        let (start_line, start_col) = position(src, sp.start);
        let (end_line, end_col) = position(src, sp.end);
        LineSpan {
            start_line,
            start_col,
            end_line,
            end_col,
        }
    }

    /// The whole source text.
    pub fn whole(src: &str) -> Self {
        LineSpan::from_span(src, Span::new(0, src.len()))
    }
}

impl Diagnostic {
    pub fn error(kind: &str, span: LineSpan, message: impl Into<String>) -> Self {
        Diagnostic::new(Severity::Error, kind, span, message)
    }

    pub fn new(severity: Severity, kind: &str, span: LineSpan, message: impl Into<String>) -> Self {
        Diagnostic {
            file: None,
            severity,
            kind: kind.to_string(),
            span,
            message: message.into(),
            expected: None,
            actual: None,
        }
    }

    pub fn from_parse(src: &str, e: &ParseError) -> Self {
        Diagnostic::error("ParseError", LineSpan::from_span(src, e.span), e.to_string())
    }

    pub fn from_type(src: &str, e: &TypeError) -> Self {
        let span = e
            .span
            .map_or_else(|| LineSpan::whole(src), |sp| LineSpan::from_span(src, sp));
        Diagnostic {
            expected: e.expected.as_ref().map(|q| q.to_string()),
            actual: e.actual.as_ref().map(|q| q.to_string()),
            ..Diagnostic::error(e.kind.name(), span, &e.message)
        }
    }

    /// `path:line:col: severity[kind]: message`
    pub fn render(&self, path: &str) -> String {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        };
        let mut out = format!(
            "{path}:{}:{}: {sev}[{}]: {}",
            self.span.start_line, self.span.start_col, self.kind, self.message
        );
        if let Some(e) = &self.expected {
            out.push_str(&format!("\n  expected: {e}"));
        }
        if let Some(a) = &self.actual {
            out.push_str(&format!("\n  actual:   {a}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    #[test]
    fn positions_are_one_based() {
        let src = "let x =\n  in x";
        assert_eq!(position(src, 0), (1, 1));
        assert_eq!(position(src, 8), (2, 1));
        assert_eq!(position(src, 10), (2, 3));
    }

    #[test]
    fn columns_count_characters() {
        assert_eq!(position("◊ x", 4), (1, 3));
    }

    #[test]
    fn parse_errors_serialize_with_camel_case_span() {
        let src = "let x = in x";
        let e = parse_program(src).unwrap_err();
        let json = serde_json::to_string(&Diagnostic::from_parse(src, &e)).unwrap();
        assert_eq!(
            json,
            r#"{"severity":"error","kind":"ParseError","span":{"startLine":1,"startCol":9,"endLine":1,"endCol":11},"message":"expected an expression, found `in`"}"#
        );
    }
}
