use thiserror::Error;

use super::ast::Span;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrontendError {
    #[error("lex error at {span}: {message}")]
    Lex { message: String, span: Span },
    #[error("parse error at {span}: expected {expected}, found {found}")]
    Parse { span: Span, expected: String, found: String },
    #[error("unsupported syntax `{construct}` at {span}")]
    Unsupported { construct: String, span: Span },
}

impl FrontendError {
    pub fn span(&self) -> Span {
        match self {
            FrontendError::Lex { span, .. }
            | FrontendError::Parse { span, .. }
            | FrontendError::Unsupported { span, .. } => *span,
        }
    }
}
