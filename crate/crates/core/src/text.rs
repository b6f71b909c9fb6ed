use crate::error::{Error, Result};

/// Byte cursor over a single line of canonical text. Column numbers are
/// 1-based and refer to byte offsets, which is exact because the grammar is
/// ASCII except for the interpunct in grid point histories.
pub struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
}

impl<'a> Cursor<'a> {
    pub fn new(src: &'a str) -> Self {
        Cursor { src, pos: 0, line: 1 }
    }

    pub fn with_line(src: &'a str, line: u32) -> Self {
        Cursor { src, pos: 0, line }
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::Syntax { line: self.line, col: self.pos as u32 + 1, msg: msg.into() }
    }

    pub fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    pub fn done(&self) -> bool {
        self.pos >= self.src.len()
    }

    pub fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    pub fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    pub fn eat(&mut self, want: char) -> bool {
        if self.peek() == Some(want) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn eat_str(&mut self, want: &str) -> bool {
        if self.rest().starts_with(want) {
            self.pos += want.len();
            true
        } else {
            false
        }
    }

    pub fn expect(&mut self, want: char) -> Result<()> {
        if self.eat(want) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{want}'")))
        }
    }

    pub fn expect_str(&mut self, want: &str) -> Result<()> {
        if self.eat_str(want) {
            Ok(())
        } else {
            Err(self.err(format!("expected \"{want}\"")))
        }
    }

    /// Decimal natural number with no sign and no leading zeros (except "0").
    pub fn nat(&mut self) -> Result<u64> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.bump();
        }
        let digits = &self.src[start..self.pos];
        if digits.is_empty() {
            return Err(self.err("expected a number"));
        }
        if digits.len() > 1 && digits.starts_with('0') {
            return Err(self.err("leading zeros are not canonical"));
        }
        digits.parse().map_err(|_| self.err("number out of range"))
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.done() {
            Ok(())
        } else {
            Err(self.err("trailing input"))
        }
    }
}

/// Run a sub-parser over a complete string, requiring it to consume all input.
pub fn parse_all<T>(src: &str, f: impl FnOnce(&mut Cursor) -> Result<T>) -> Result<T> {
    let mut cur = Cursor::new(src.trim());
    let v = f(&mut cur)?;
    cur.expect_end()?;
    Ok(v)
}
