//! Hand-rolled recursive-descent evaluator for arithmetic expressions over
//! exact rationals: `+ - * / ^`, parentheses, integer literals. Anything
//! outside the grammar is rejected with an in-band error text.

use num::{BigInt, BigRational, One, Zero};

pub fn evaluate(expr: &str) -> Result<String, String> {
    let tokens = tokenize(expr)?;
    let mut parser = Parser { tokens, pos: 0 };
    let value = parser.expression()?;
    if parser.pos != parser.tokens.len() {
        return Err("unsupported construct".to_string());
    }
    Ok(format_rational(&value))
}

fn format_rational(v: &BigRational) -> String {
    if v.denom().is_one() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(BigInt),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(expr: &str) -> Result<Vec<Token>, String> {
    let mut tokens = Vec::new();
    let mut chars = expr.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                chars.next();
            }
            '0'..='9' => {
                let mut digits = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        digits.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Int(digits.parse().unwrap()));
            }
            '+' => {
                chars.next();
                tokens.push(Token::Plus);
            }
            '-' => {
                chars.next();
                tokens.push(Token::Minus);
            }
            '*' => {
                chars.next();
                tokens.push(Token::Star);
            }
            '/' => {
                chars.next();
                tokens.push(Token::Slash);
            }
            '^' => {
                chars.next();
                tokens.push(Token::Caret);
            }
            '(' => {
                chars.next();
                tokens.push(Token::LParen);
            }
            ')' => {
                chars.next();
                tokens.push(Token::RParen);
            }
            _ => return Err("unsupported construct".to_string()),
        }
    }
    if tokens.is_empty() {
        return Err("empty expression".to_string());
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn expression(&mut self) -> Result<BigRational, String> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    acc += self.term()?;
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    acc -= self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<BigRational, String> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    acc *= self.power()?;
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.power()?;
                    if rhs.is_zero() {
                        return Err("division by zero".to_string());
                    }
                    acc /= rhs;
                }
                _ => return Ok(acc),
            }
        }
    }

    // right-associative exponentiation with small integer exponents
    fn power(&mut self) -> Result<BigRational, String> {
        let base = self.unary()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.pos += 1;
            let exp = self.power()?;
            if !exp.denom().is_one() {
                return Err("non-integer exponent".to_string());
            }
            let e: i32 = exp
                .numer()
                .try_into()
                .map_err(|_| "exponent too large".to_string())?;
            if e.abs() > 64 {
                return Err("exponent too large".to_string());
            }
            if e < 0 && base.is_zero() {
                return Err("division by zero".to_string());
            }
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<BigRational, String> {
        match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<BigRational, String> {
        match self.peek().cloned() {
            Some(Token::Int(n)) => {
                self.pos += 1;
                Ok(BigRational::from_integer(n))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let value = self.expression()?;
                if !matches!(self.peek(), Some(Token::RParen)) {
                    return Err("unbalanced parentheses".to_string());
                }
                self.pos += 1;
                Ok(value)
            }
            _ => Err("unsupported construct".to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_parens() {
        assert_eq!(evaluate("2+3*4").unwrap(), "14");
        assert_eq!(evaluate("(2+3)*4").unwrap(), "20");
        assert_eq!(evaluate("2^3^2").unwrap(), "512");
        assert_eq!(evaluate("-3 + 5").unwrap(), "2");
    }

    #[test]
    fn exact_rationals() {
        assert_eq!(evaluate("1/3 + 1/6").unwrap(), "1/2");
        assert_eq!(evaluate("7/7").unwrap(), "1");
    }

    #[test]
    fn rejects_non_grammar() {
        assert!(evaluate("import os").is_err());
        assert!(evaluate("x + 1").is_err());
        assert!(evaluate("").is_err());
        assert_eq!(evaluate("1/0").unwrap_err(), "division by zero");
        assert!(evaluate("(1+2").is_err());
    }
}
