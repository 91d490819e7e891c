//! Text form of queries.
//!
//! Grammar, whitespace-separated:
//!
//! ```text
//! query     := predicate ("AND" predicate)* ["RANGE" int ".." int] ["|" "COUNT"]
//! predicate := field "CONTAINS" string
//! field     := [a-z_][a-z0-9_]*
//! string    := '"' (plain | '\' escape)* '"'
//! ```
//!
//! Escapes: `\"`, `\\`, `\n`, `\r`, `\t`, `\0`, and `\u{hex}`. The parser
//! accepts exactly what `Query`'s `Display` prints, so round-tripping is
//! lossless.

use crate::model::{Query, QueryMode, QueryPredicate, QueryValidationError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("at byte {at}: expected {expected}")]
    Expected { at: usize, expected: String },
    #[error("at byte {at}: unterminated string")]
    UnterminatedString { at: usize },
    #[error("at byte {at}: bad escape sequence")]
    BadEscape { at: usize },
    #[error("at byte {at}: bad integer")]
    BadInteger { at: usize },
    #[error("trailing input at byte {at}")]
    TrailingInput { at: usize },
    #[error(transparent)]
    Invalid(#[from] QueryValidationError),
}

struct Cursor<'a> {
    text: &'a str,
    at: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.at < self.text.len() && self.text.as_bytes()[self.at].is_ascii_whitespace() {
            self.at += 1;
        }
    }

    fn done(&mut self) -> bool {
        self.skip_ws();
        self.at >= self.text.len()
    }

    fn rest(&self) -> &'a str {
        &self.text[self.at..]
    }

    /// Consumes `word` only when it stands alone (not a prefix of a longer
    /// identifier).
    fn eat_word(&mut self, word: &str) -> bool {
        self.skip_ws();
        let rest = self.rest();
        if !rest.starts_with(word) {
            return false;
        }
        let next = rest.as_bytes().get(word.len());
        if next.is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_') {
            return false;
        }
        self.at += word.len();
        true
    }

    fn eat_symbol(&mut self, symbol: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(symbol) {
            self.at += symbol.len();
            true
        } else {
            false
        }
    }

    fn identifier(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let bytes = rest.as_bytes();
        if bytes.is_empty() || !(bytes[0].is_ascii_lowercase() || bytes[0] == b'_') {
            return Err(ParseError::Expected {
                at: self.at,
                expected: "a field name".into(),
            });
        }
        let mut len = 1;
        while len < bytes.len() && (bytes[len].is_ascii_alphanumeric() || bytes[len] == b'_') {
            len += 1;
        }
        self.at += len;
        Ok(&rest[..len])
    }

    fn string(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        let open = self.at;
        if !self.rest().starts_with('"') {
            return Err(ParseError::Expected {
                at: self.at,
                expected: "a double-quoted string".into(),
            });
        }
        self.at += 1;
        let mut out = String::new();
        let mut chars = self.text[self.at..].char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.at += i + 1;
                    return Ok(out);
                }
                '\\' => {
                    let escape_at = self.at + i;
                    let Some((_, esc)) = chars.next() else {
                        return Err(ParseError::UnterminatedString { at: open });
                    };
                    match esc {
                        '"' => out.push('"'),
                        '\\' => out.push('\\'),
                        'n' => out.push('\n'),
                        'r' => out.push('\r'),
                        't' => out.push('\t'),
                        '0' => out.push('\0'),
                        'u' => {
                            if !matches!(chars.next(), Some((_, '{'))) {
                                return Err(ParseError::BadEscape { at: escape_at });
                            }
                            let mut value = 0u32;
                            let mut digits = 0;
                            loop {
                                match chars.next() {
                                    Some((_, '}')) if digits > 0 => break,
                                    Some((_, d)) if d.is_ascii_hexdigit() && digits < 6 => {
                                        value = value * 16 + d.to_digit(16).unwrap();
                                        digits += 1;
                                    }
                                    _ => return Err(ParseError::BadEscape { at: escape_at }),
                                }
                            }
                            out.push(
                                char::from_u32(value)
                                    .ok_or(ParseError::BadEscape { at: escape_at })?,
                            );
                        }
                        _ => return Err(ParseError::BadEscape { at: escape_at }),
                    }
                }
                c => out.push(c),
            }
        }
        Err(ParseError::UnterminatedString { at: open })
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let bytes = rest.as_bytes();
        let mut len = 0;
        if bytes.first() == Some(&b'-') {
            len += 1;
        }
        while len < bytes.len() && bytes[len].is_ascii_digit() {
            len += 1;
        }
        let parsed: Result<i64, _> = rest[..len].parse();
        match parsed {
            Ok(v) => {
                self.at += len;
                Ok(v)
            }
            Err(_) => Err(ParseError::BadInteger { at: self.at }),
        }
    }
}

/// Parses the textual query form and validates the result.
pub fn parse_query(text: &str) -> Result<Query, ParseError> {
    let mut cursor = Cursor { text, at: 0 };
    let mut predicates = Vec::new();
    loop {
        let field = cursor.identifier()?.to_string();
        if !cursor.eat_word("CONTAINS") {
            return Err(ParseError::Expected {
                at: cursor.at,
                expected: "CONTAINS".into(),
            });
        }
        let term = cursor.string()?;
        predicates.push(QueryPredicate { field, term });
        if !cursor.eat_word("AND") {
            break;
        }
    }

    let time_range = if cursor.eat_word("RANGE") {
        let lo = cursor.integer()?;
        if !cursor.eat_symbol("..") {
            return Err(ParseError::Expected {
                at: cursor.at,
                expected: "..".into(),
            });
        }
        let hi = cursor.integer()?;
        Some((lo, hi))
    } else {
        None
    };

    let mode = if cursor.eat_symbol("|") {
        if !cursor.eat_word("COUNT") {
            return Err(ParseError::Expected {
                at: cursor.at,
                expected: "COUNT".into(),
            });
        }
        QueryMode::Count
    } else {
        QueryMode::ReturnRows
    };

    if !cursor.done() {
        return Err(ParseError::TrailingInput { at: cursor.at });
    }
    let query = Query {
        predicates,
        mode,
        time_range,
    };
    query.validate()?;
    Ok(query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_predicate() {
        let q = parse_query(r#"content1 CONTAINS "error budget""#).unwrap();
        assert_eq!(q.predicates.len(), 1);
        assert_eq!(q.predicates[0].field, "content1");
        assert_eq!(q.predicates[0].term, "error budget");
        assert_eq!(q.mode, QueryMode::ReturnRows);
        assert_eq!(q.time_range, None);
    }

    #[test]
    fn parses_full_form() {
        let q = parse_query(
            r#"content1 CONTAINS "alpha" AND content2 CONTAINS "beta" RANGE -5..1000 | COUNT"#,
        )
        .unwrap();
        assert_eq!(q.predicates.len(), 2);
        assert_eq!(q.time_range, Some((-5, 1000)));
        assert_eq!(q.mode, QueryMode::Count);
    }

    #[test]
    fn display_round_trips() {
        let cases = [
            r#"content3 CONTAINS "plain term""#,
            r#"content1 CONTAINS "a" AND content2 CONTAINS "b" | COUNT"#,
            r#"content5 CONTAINS "x" RANGE 0..99"#,
        ];
        for text in cases {
            let q = parse_query(text).unwrap();
            assert_eq!(parse_query(&q.to_string()).unwrap(), q, "{text}");
        }
        // Terms with characters Display escapes survive the round trip.
        let q = Query {
            predicates: vec![QueryPredicate {
                field: "content1".into(),
                term: "quote \" slash \\ tab \t nul \u{1}".into(),
            }],
            mode: QueryMode::Count,
            time_range: None,
        };
        assert_eq!(parse_query(&q.to_string()).unwrap(), q);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(
            parse_query("content1 HOLDS \"x\""),
            Err(ParseError::Expected { .. })
        ));
        assert!(matches!(
            parse_query("content1 CONTAINS \"unterminated"),
            Err(ParseError::UnterminatedString { .. })
        ));
        assert!(matches!(
            parse_query("content1 CONTAINS \"x\" garbage"),
            Err(ParseError::TrailingInput { .. })
        ));
        assert!(matches!(
            parse_query("content1 CONTAINS \"x\" RANGE 5..abc"),
            Err(ParseError::BadInteger { .. })
        ));
        // Three predicates parse but fail validation.
        assert!(matches!(
            parse_query(
                "content1 CONTAINS \"a\" AND content2 CONTAINS \"b\" AND content3 CONTAINS \"c\""
            ),
            Err(ParseError::Invalid(_))
        ));
        assert!(matches!(
            parse_query("bogus_field CONTAINS \"a\""),
            Err(ParseError::Invalid(_))
        ));
    }
}
