//! Filename templates with date tokens (`%YYYY-%mm-%dd`).

use std::fmt::Write;

use chrono::{DateTime, Datelike, Timelike, Utc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    /// `%YYYY`
    Year4,
    /// `%YY`
    Year2,
    /// `%mm`
    Month,
    /// `%dd`
    Day,
    /// `%HH`
    Hour,
}

impl Token {
    pub const ALL: [Token; 5] = [Token::Year4, Token::Year2, Token::Month, Token::Day, Token::Hour];

    pub fn as_str(self) -> &'static str {
        match self {
            Token::Year4 => "%YYYY",
            Token::Year2 => "%YY",
            Token::Month => "%mm",
            Token::Day => "%dd",
            Token::Hour => "%HH",
        }
    }

    fn write(self, out: &mut String, ts: &DateTime<Utc>) {
        // Writing to a String cannot fail.
        let _ = match self {
            Token::Year4 => write!(out, "{:04}", ts.year()),
            Token::Year2 => write!(out, "{:02}", ts.year().rem_euclid(100)),
            Token::Month => write!(out, "{:02}", ts.month()),
            Token::Day => write!(out, "{:02}", ts.day()),
            Token::Hour => write!(out, "{:02}", ts.hour()),
        };
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown token {token:?} at byte {offset}")]
    UnknownToken { token: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Token(Token),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    /// Every `%` must start one of the known tokens; `%YYYY` is preferred
    /// over `%YY` when both match.
    pub fn parse(template: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = template;
        while let Some(pos) = rest.find('%') {
            literal.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            let token = Token::ALL
                .iter()
                .copied()
                .find(|t| tail.starts_with(t.as_str()))
                .ok_or_else(|| TemplateError::UnknownToken {
                    token: tail.chars().take(3).collect(),
                    offset: template.len() - tail.len(),
                })?;
            if !literal.is_empty() {
                segments.push(Segment::Literal(std::mem::take(&mut literal)));
            }
            segments.push(Segment::Token(token));
            rest = &tail[token.as_str().len()..];
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(Self { segments })
    }

    pub fn tokens(&self) -> impl Iterator<Item = Token> + '_ {
        self.segments.iter().filter_map(|s| match s {
            Segment::Token(t) => Some(*t),
            Segment::Literal(_) => None,
        })
    }

    pub fn has_tokens(&self) -> bool {
        self.tokens().next().is_some()
    }

    pub fn expand(&self, ts: &DateTime<Utc>) -> String {
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => out.push_str(text),
                Segment::Token(token) => token.write(&mut out, ts),
            }
        }
        out
    }
}

/// Parse and expand in one step.
pub fn expand_template(template: &str, ts: &DateTime<Utc>) -> Result<String, TemplateError> {
    Ok(Template::parse(template)?.expand(ts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ymd(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
    }

    #[test]
    fn simple_daily() {
        assert_eq!(
            expand_template("%YYYY-%mm-%dd.nc", &ymd(2024, 4, 23)).unwrap(),
            "2024-04-23.nc"
        );
    }

    #[test]
    fn repeated_tokens_and_literals() {
        assert_eq!(
            expand_template("%YYYY/%mm/d_%YYYY%mm%dd.nc", &ymd(1999, 1, 5)).unwrap(),
            "1999/01/d_19990105.nc"
        );
    }

    #[test]
    fn no_tokens_is_identity() {
        assert_eq!(expand_template("static.png", &ymd(2001, 2, 3)).unwrap(), "static.png");
    }

    #[test]
    fn short_year_and_hour() {
        let ts = Utc.with_ymd_and_hms(2005, 11, 2, 7, 30, 0).unwrap();
        assert_eq!(expand_template("%YY%mm%dd_%HH", &ts).unwrap(), "051102_07");
    }

    #[test]
    fn rejects_unknown_and_dangling_percent() {
        assert!(matches!(
            Template::parse("a_%QQ.nc"),
            Err(TemplateError::UnknownToken { offset: 2, .. })
        ));
        assert!(Template::parse("100%").is_err());
        assert!(Template::parse("%Y").is_err());
        assert!(Template::parse("%%").is_err());
    }

    #[test]
    fn token_listing() {
        let t = Template::parse("x/%YYYY/%YY%mm").unwrap();
        assert_eq!(
            t.tokens().collect::<Vec<_>>(),
            vec![Token::Year4, Token::Year2, Token::Month]
        );
        assert!(!Template::parse("plain").unwrap().has_tokens());
    }
}
