//! Hand-rolled parser for the CAS concrete syntax.
//!
//! grammar:  command  := action (';' action)*
//!           action   := Name '(' [attr (',' attr)*] ')'
//!           attr     := name '=' value
//!           value    := 'None' | Direction | side | integer | snake_case

use thiserror::Error;

use super::{ActionKind, AttrType, AttrValue, CasAction, CasCommand, Direction, Side};

#[derive(Debug, Error)]
pub enum CasParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown action '{name}' at position {pos}")]
    UnknownAction { pos: usize, name: String },
    #[error("unknown attribute '{name}' for action {action} at position {pos}")]
    UnknownAttribute {
        pos: usize,
        action: &'static str,
        name: String,
    },
    #[error("bad value '{value}' for attribute '{attr}' at position {pos}")]
    BadValue {
        pos: usize,
        attr: String,
        value: String,
    },
    #[error("attribute '{name}' repeated at position {pos}")]
    RepeatedAttribute { pos: usize, name: String },
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), CasParseError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(CasParseError::Syntax {
                pos: self.pos,
                msg: format!("expected '{c}'"),
            })
        }
    }

    fn ident(&mut self) -> Result<(usize, &'a str), CasParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.text[start..];
        let len = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(CasParseError::Syntax {
                pos: start,
                msg: "expected identifier".into(),
            });
        }
        self.pos += len;
        Ok((start, &rest[..len]))
    }
}

fn parse_value(
    ty: AttrType,
    attr: &str,
    pos: usize,
    raw: &str,
) -> Result<AttrValue, CasParseError> {
    let bad = || CasParseError::BadValue {
        pos,
        attr: attr.to_string(),
        value: raw.to_string(),
    };
    match ty {
        AttrType::Count => {
            let n: u8 = raw.parse().map_err(|_| bad())?;
            if (1..=9).contains(&n) {
                Ok(AttrValue::Count(n))
            } else {
                Err(bad())
            }
        }
        AttrType::Direction => Direction::ALL
            .into_iter()
            .find(|d| d.name() == raw)
            .map(AttrValue::Direction)
            .ok_or_else(bad),
        AttrType::Side => Side::ALL
            .into_iter()
            .find(|s| s.name() == raw)
            .map(AttrValue::Side)
            .ok_or_else(bad),
        AttrType::Entity => {
            if raw
                .chars()
                .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                Ok(AttrValue::Entity(raw.to_string()))
            } else {
                Err(bad())
            }
        }
    }
}

fn parse_action(cur: &mut Cursor) -> Result<CasAction, CasParseError> {
    let (pos, name) = cur.ident()?;
    let kind = ActionKind::from_name(name).ok_or_else(|| CasParseError::UnknownAction {
        pos,
        name: name.to_string(),
    })?;
    let mut action = CasAction::new(kind);
    cur.expect('(')?;
    cur.skip_ws();
    if cur.peek() == Some(')') {
        cur.pos += 1;
        return Ok(action);
    }
    loop {
        let (apos, attr) = cur.ident()?;
        let ty = kind
            .attr_type(attr)
            .ok_or_else(|| CasParseError::UnknownAttribute {
                pos: apos,
                action: kind.name(),
                name: attr.to_string(),
            })?;
        cur.expect('=')?;
        let (vpos, raw) = cur.ident()?;
        let declared = if raw == "None" {
            action.clone().declare(attr)
        } else {
            let value = parse_value(ty, attr, vpos, raw)?;
            action.clone().bind(attr, value)
        };
        action = declared.map_err(|_| CasParseError::RepeatedAttribute {
            pos: apos,
            name: attr.to_string(),
        })?;
        cur.skip_ws();
        match cur.peek() {
            Some(',') => {
                cur.pos += 1;
            }
            Some(')') => {
                cur.pos += 1;
                break;
            }
            _ => {
                return Err(CasParseError::Syntax {
                    pos: cur.pos,
                    msg: "expected ',' or ')'".into(),
                })
            }
        }
    }
    Ok(action)
}

/// Parse the concrete syntax into an AST.
pub fn parse_cas(text: &str) -> Result<CasCommand, CasParseError> {
    let mut cur = Cursor { text, pos: 0 };
    let mut actions = vec![parse_action(&mut cur)?];
    loop {
        cur.skip_ws();
        match cur.peek() {
            None => break,
            Some(';') => {
                cur.pos += 1;
                actions.push(parse_action(&mut cur)?);
            }
            Some(c) => {
                return Err(CasParseError::Syntax {
                    pos: cur.pos,
                    msg: format!("unexpected '{c}'"),
                })
            }
        }
    }
    Ok(CasCommand::new(actions))
}
