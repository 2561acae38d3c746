// SPDX-License-Identifier: Apache-2.0

//! Light lexical helpers over Verilog text. No parsing beyond what the
//! pipeline needs: comment stripping, token counting, module headers.

use regex::Regex;
use std::sync::OnceLock;

/// Removes `//` line comments and `/* */` block comments. String literals
/// are respected so `"//"` inside `$display` survives.
pub fn strip_comments(code: &str) -> String {
    let mut out = String::with_capacity(code.len());
    let mut chars = code.chars().peekable();
    let mut in_str = false;
    while let Some(c) = chars.next() {
        if in_str {
            out.push(c);
            if c == '\\' {
                if let Some(n) = chars.next() {
                    out.push(n);
                }
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match (c, chars.peek()) {
            ('"', _) => {
                in_str = true;
                out.push(c);
            }
            ('/', Some('/')) => {
                for n in chars.by_ref() {
                    if n == '\n' {
                        out.push('\n');
                        break;
                    }
                }
            }
            ('/', Some('*')) => {
                chars.next();
                let mut prev = ' ';
                for n in chars.by_ref() {
                    if prev == '*' && n == '/' {
                        break;
                    }
                    prev = n;
                }
                out.push(' ');
            }
            _ => out.push(c),
        }
    }
    out
}

fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"[A-Za-z_$][A-Za-z0-9_$]*|[0-9][0-9A-Za-z_']*|"(?:[^"\\]|\\.)*"|\S"#).unwrap()
    })
}

/// Non-comment lexical tokens: identifiers, numbers, strings and single
/// punctuation characters.
pub fn tokens(code: &str) -> Vec<&str> {
    token_re().find_iter(code).map(|m| m.as_str()).collect()
}

pub fn token_count(code: &str) -> usize {
    tokens(&strip_comments(code)).len()
}

/// Names of all `module` declarations in order.
pub fn module_names(code: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)").unwrap());
    re.captures_iter(&strip_comments(code))
        .map(|c| c[1].to_string())
        .collect()
}

/// Port declarations `(name, width)` of the module named `module`, read
/// from ANSI or body-style `input`/`output`/`inout` declarations. Widths
/// come from constant `[hi:lo]` ranges; parameterized ranges yield `None`.
pub fn declared_ports(code: &str, module: &str) -> Option<Vec<(String, Option<u32>)>> {
    let clean = strip_comments(code);
    let head = Regex::new(&format!(r"\bmodule\s+{}\b", regex::escape(module))).ok()?;
    let start = head.find(&clean)?.start();
    let body = &clean[start..];
    let end = body.find("endmodule").unwrap_or(body.len());
    let body = &body[..end];
    let toks = tokens(body);
    let mut ports: Vec<(String, Option<u32>)> = Vec::new();
    let mut in_decl = false;
    let mut width = Some(1);
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i];
        match t {
            "input" | "output" | "inout" => {
                in_decl = true;
                width = Some(1);
            }
            _ if !in_decl => {}
            "wire" | "reg" | "logic" | "signed" | "unsigned" | "," => {}
            "[" => {
                let close = toks[i..]
                    .iter()
                    .position(|&x| x == "]")
                    .map(|p| i + p)
                    .unwrap_or(toks.len() - 1);
                width = range_width(&toks[i + 1..close].concat());
                i = close;
            }
            ";" | ")" => in_decl = false,
            "=" => {
                // default value: skip to the next separator
                while i + 1 < toks.len() && !matches!(toks[i + 1], "," | ";" | ")") {
                    i += 1;
                }
            }
            _ if t.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') => {
                if !ports.iter().any(|(n, _)| n == t) {
                    ports.push((t.to_string(), width));
                }
            }
            _ => in_decl = false,
        }
        i += 1;
    }
    Some(ports)
}

fn range_width(inner: &str) -> Option<u32> {
    let (hi, lo) = inner.split_once(':')?;
    let hi: i64 = hi.trim().parse().ok()?;
    let lo: i64 = lo.trim().parse().ok()?;
    u32::try_from((hi - lo).abs() + 1).ok()
}
