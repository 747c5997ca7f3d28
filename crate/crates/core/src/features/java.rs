//! Declaration-level parsing of Java sources and the structural diff built
//! on it.
//!
//! This is not a full Java grammar. It recovers exactly what the change
//! features need: package, imports, type declarations, method signatures with
//! a body hash, and field names. Comments and string literals are blanked
//! before structural scanning so braces inside them cannot derail the brace
//! stack, but method bodies are hashed with string contents intact so a
//! literal edit still counts as a body change. Files the scanner cannot
//! balance fall back to a line-based approximation.
//!
//! Known approximations, accepted for declaration granularity: members of
//! anonymous classes and enum-constant bodies are not collected, record
//! components are not counted as fields, and constructors count as methods
//! under the class name.

use std::collections::BTreeSet;

use once_cell::sync::Lazy;
use regex::Regex;

use crate::fnv::fnv1a64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeDecl {
    /// Nesting-qualified name, e.g. `Outer.Inner`.
    pub name: String,
    /// Hash of the whitespace-normalized declaration header, so a change to
    /// `extends`/`implements` marks the class as modified.
    pub header_hash: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDecl {
    pub owner: String,
    pub name: String,
    /// Normalized parameter types, whitespace removed.
    pub params: Vec<String>,
    /// Hash of the whitespace-normalized body; `None` for bodyless
    /// declarations (abstract or interface methods).
    pub body_hash: Option<u64>,
}

impl MethodDecl {
    fn signature(&self) -> String {
        format!("{}.{}({})", self.owner, self.name, self.params.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub owner: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeclSummary {
    pub package: Option<String>,
    pub imports: BTreeSet<String>,
    pub types: Vec<TypeDecl>,
    pub methods: Vec<MethodDecl>,
    pub fields: Vec<FieldDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JavaParseError {
    #[error("unbalanced braces in source")]
    UnbalancedBraces,
}

/// Blanks comments in both outputs; the structural copy additionally blanks
/// string and char literal contents. Both are byte-length-preserving so
/// indices line up with the original.
fn scrub(src: &str) -> (String, String) {
    #[derive(PartialEq)]
    enum S {
        Code,
        LineComment,
        BlockComment,
        Str,
        TextBlock,
        Ch,
    }
    let mut structural = String::with_capacity(src.len());
    let mut hashable = String::with_capacity(src.len());
    let bytes: Vec<char> = src.chars().collect();
    let mut state = S::Code;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let next = bytes.get(i + 1).copied();
        match state {
            S::Code => match (c, next) {
                ('/', Some('/')) => {
                    state = S::LineComment;
                    structural.push(' ');
                    hashable.push(' ');
                }
                ('/', Some('*')) => {
                    state = S::BlockComment;
                    structural.push(' ');
                    hashable.push(' ');
                }
                ('"', _) => {
                    if next == Some('"') && bytes.get(i + 2) == Some(&'"') {
                        state = S::TextBlock;
                        structural.push_str("   ");
                        hashable.push_str("\"\"\"");
                        i += 3;
                        continue;
                    }
                    state = S::Str;
                    structural.push(' ');
                    hashable.push('"');
                }
                ('\'', _) => {
                    state = S::Ch;
                    structural.push(' ');
                    hashable.push('\'');
                }
                _ => {
                    structural.push(c);
                    hashable.push(c);
                }
            },
            S::LineComment => {
                if c == '\n' {
                    state = S::Code;
                    structural.push('\n');
                    hashable.push('\n');
                } else {
                    structural.push(' ');
                    hashable.push(' ');
                }
            }
            S::BlockComment => {
                if c == '*' && next == Some('/') {
                    state = S::Code;
                    structural.push_str("  ");
                    hashable.push_str("  ");
                    i += 2;
                    continue;
                }
                structural.push(if c == '\n' { '\n' } else { ' ' });
                hashable.push(if c == '\n' { '\n' } else { ' ' });
            }
            S::Str => match c {
                '\\' => {
                    structural.push_str("  ");
                    hashable.push(c);
                    if let Some(n) = next {
                        hashable.push(n);
                    }
                    i += 2;
                    continue;
                }
                '"' => {
                    state = S::Code;
                    structural.push(' ');
                    hashable.push('"');
                }
                '\n' => {
                    // Unterminated literal; recover at the line break.
                    state = S::Code;
                    structural.push('\n');
                    hashable.push('\n');
                }
                _ => {
                    structural.push(' ');
                    hashable.push(c);
                }
            },
            S::TextBlock => {
                if c == '"' && next == Some('"') && bytes.get(i + 2) == Some(&'"') {
                    state = S::Code;
                    structural.push_str("   ");
                    hashable.push_str("\"\"\"");
                    i += 3;
                    continue;
                }
                structural.push(if c == '\n' { '\n' } else { ' ' });
                hashable.push(c);
            }
            S::Ch => match c {
                '\\' => {
                    structural.push_str("  ");
                    hashable.push(c);
                    if let Some(n) = next {
                        hashable.push(n);
                    }
                    i += 2;
                    continue;
                }
                '\'' => {
                    state = S::Code;
                    structural.push(' ');
                    hashable.push('\'');
                }
                '\n' => {
                    state = S::Code;
                    structural.push('\n');
                    hashable.push('\n');
                }
                _ => {
                    structural.push(' ');
                    hashable.push(c);
                }
            },
        }
        i += 1;
    }
    (structural, hashable)
}

fn hash_normalized(text: &str) -> u64 {
    let squeezed: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    fnv1a64(squeezed.as_bytes())
}

/// Splits on commas at angle/paren/bracket depth zero.
fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '<' | '(' | '[' => {
                depth += 1;
                cur.push(c);
            }
            '>' | ')' | ']' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

fn has_top_level_assign(s: &str) -> bool {
    let mut depth = 0i32;
    let chars: Vec<char> = s.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        match c {
            '<' | '(' | '[' => depth += 1,
            '>' | ')' | ']' => depth -= 1,
            '=' if depth == 0 => {
                let prev = if i > 0 { chars[i - 1] } else { ' ' };
                let next = chars.get(i + 1).copied().unwrap_or(' ');
                if prev != '=' && prev != '!' && prev != '<' && prev != '>' && next != '=' {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}

/// Removes leading annotations (`@Name` with an optional balanced argument
/// list) from a declaration.
fn strip_annotations(s: &str) -> &str {
    let mut rest = s.trim_start();
    while rest.starts_with('@') {
        let mut idx = 1;
        let chars: Vec<(usize, char)> = rest.char_indices().collect();
        let mut pos = 1;
        while pos < chars.len() && (chars[pos].1.is_alphanumeric() || "._$".contains(chars[pos].1))
        {
            idx = chars[pos].0 + chars[pos].1.len_utf8();
            pos += 1;
        }
        let mut cut = idx;
        let after = rest[idx..].trim_start();
        if after.starts_with('(') {
            let offset = rest.len() - after.len();
            let mut depth = 0i32;
            for (j, c) in after.char_indices() {
                match c {
                    '(' => depth += 1,
                    ')' => {
                        depth -= 1;
                        if depth == 0 {
                            cut = offset + j + 1;
                            break;
                        }
                    }
                    _ => {}
                }
            }
        }
        rest = rest[cut..].trim_start();
    }
    rest
}

const MODIFIERS: [&str; 12] = [
    "public",
    "private",
    "protected",
    "static",
    "final",
    "abstract",
    "default",
    "native",
    "strictfp",
    "synchronized",
    "transient",
    "volatile",
];

const NON_METHOD_NAMES: [&str; 12] = [
    "if", "for", "while", "switch", "catch", "synchronized", "new", "return", "else", "do",
    "try", "assert",
];

static TYPE_HEADER: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?s)\b(?:class|interface|enum|record)\s+([A-Za-z_$][\w$]*)").unwrap()
});
static METHOD_TAIL: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?s)^(.*\))\s*(?:throws\b[^;{]*)?$").unwrap());
static IDENT_TAIL: Lazy<Regex> = Lazy::new(|| Regex::new(r"([A-Za-z_$][\w$]*)\s*$").unwrap());

fn normalize_param(p: &str) -> Option<String> {
    let p = strip_annotations(p);
    let mut tokens: Vec<&str> =
        p.split_whitespace().filter(|t| *t != "final" && !t.starts_with('@')).collect();
    if tokens.is_empty() {
        return None;
    }
    let last = tokens.pop().unwrap();
    let (type_tokens, name) = if tokens.is_empty() {
        (vec![last], "")
    } else {
        (tokens, last)
    };
    let mut ty: String = type_tokens.join(" ").chars().filter(|c| !c.is_whitespace()).collect();
    let mut name = name;
    while let Some(stripped) = name.strip_suffix("[]") {
        ty.push_str("[]");
        name = stripped;
    }
    Some(ty)
}

/// Recognizes `... name(params) [throws ...]` headers. Returns the name and
/// normalized parameter types.
fn parse_method_header(header: &str) -> Option<(String, Vec<String>)> {
    let h = strip_annotations(header.trim());
    if has_top_level_assign(h) || h.ends_with("->") {
        return None;
    }
    let caps = METHOD_TAIL.captures(h)?;
    let upto = caps.get(1).unwrap().as_str();
    // Walk back from the final ')' to its matching '('.
    let chars: Vec<(usize, char)> = upto.char_indices().collect();
    let mut depth = 0i32;
    let mut open = None;
    for &(idx, c) in chars.iter().rev() {
        match c {
            ')' => depth += 1,
            '(' => {
                depth -= 1;
                if depth == 0 {
                    open = Some(idx);
                    break;
                }
            }
            _ => {}
        }
    }
    let open = open?;
    let before = upto[..open].trim_end();
    let name = IDENT_TAIL.captures(before)?.get(1).unwrap().as_str().to_string();
    if NON_METHOD_NAMES.contains(&name.as_str()) {
        return None;
    }
    if before[..before.len() - name.len()].trim_end().ends_with('.') {
        return None;
    }
    let inner = &upto[open + 1..upto.len() - 1];
    let params: Vec<String> =
        split_top_level(inner).iter().filter_map(|p| normalize_param(p)).collect();
    Some((name, params))
}

fn classify_statement(stmt: &str, owner: Option<&str>, out: &mut DeclSummary) {
    let s = strip_annotations(stmt.trim());
    if s.is_empty() {
        return;
    }
    if let Some(rest) = s.strip_prefix("package ") {
        out.package = Some(rest.trim().to_string());
        return;
    }
    if let Some(rest) = s.strip_prefix("import ") {
        out.imports.insert(rest.split_whitespace().collect::<Vec<_>>().join(" "));
        return;
    }
    let Some(owner) = owner else { return };
    let trimmed = {
        let mut t = s;
        loop {
            let mut changed = false;
            for m in MODIFIERS {
                if let Some(rest) = t.strip_prefix(m) {
                    if rest.starts_with(char::is_whitespace) {
                        t = rest.trim_start();
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        t
    };
    if !has_top_level_assign(trimmed) {
        if let Some((name, params)) = parse_method_header(trimmed) {
            out.methods.push(MethodDecl {
                owner: owner.to_string(),
                name,
                params,
                body_hash: None,
            });
            return;
        }
    }
    // Field declaration: one or more comma-separated declarators.
    let chunks = split_top_level(trimmed);
    let mut names = Vec::new();
    for (i, chunk) in chunks.iter().enumerate() {
        let left = chunk.split('=').next().unwrap_or("").trim();
        if left.contains('(') {
            return;
        }
        let name = if i == 0 {
            let toks: Vec<&str> = left.split_whitespace().collect();
            if toks.len() < 2 {
                return;
            }
            *toks.last().unwrap()
        } else {
            left
        };
        let name = name.trim_end_matches("[]").trim();
        if name.is_empty()
            || !name.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_' || c == '$')
            || !name.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$')
        {
            return;
        }
        names.push(name.to_string());
    }
    for name in names {
        out.fields.push(FieldDecl { owner: owner.to_string(), name });
    }
}

enum Frame {
    Type { name: String },
    Method { at: usize, owner: String, name: String, params: Vec<String> },
    Neutral { pending: String },
}

/// Parses one Java source into its declaration summary.
pub fn parse_java(src: &str) -> Result<DeclSummary, JavaParseError> {
    let (structural, hashable) = scrub(src);
    let mut out = DeclSummary::default();
    let mut stack: Vec<Frame> = Vec::new();
    let mut buffer = String::new();

    let type_path = |stack: &[Frame]| -> String {
        stack
            .iter()
            .filter_map(|f| match f {
                Frame::Type { name } => Some(name.as_str()),
                _ => None,
            })
            .collect::<Vec<_>>()
            .join(".")
    };
    let in_type_scope = |stack: &[Frame]| -> bool {
        matches!(stack.last(), Some(Frame::Type { .. }))
    };

    for (i, c) in structural.char_indices() {
        match c {
            '{' => {
                let header = std::mem::take(&mut buffer);
                let at_decl_level = stack.is_empty() || in_type_scope(&stack);
                if at_decl_level {
                    if let Some(caps) = TYPE_HEADER.captures(&header) {
                        let simple = caps.get(1).unwrap().as_str().to_string();
                        let qualified = {
                            let path = type_path(&stack);
                            if path.is_empty() {
                                simple.clone()
                            } else {
                                format!("{path}.{simple}")
                            }
                        };
                        out.types.push(TypeDecl {
                            name: qualified.clone(),
                            header_hash: hash_normalized(strip_annotations(header.trim())),
                        });
                        stack.push(Frame::Type { name: simple });
                        continue;
                    }
                    if in_type_scope(&stack) {
                        if let Some((name, params)) = parse_method_header(&header) {
                            let owner = type_path(&stack);
                            stack.push(Frame::Method { at: i, owner, name, params });
                            continue;
                        }
                    }
                }
                stack.push(Frame::Neutral { pending: header });
            }
            '}' => {
                let frame = stack.pop().ok_or(JavaParseError::UnbalancedBraces)?;
                buffer.clear();
                match frame {
                    Frame::Type { .. } => {}
                    Frame::Method { at, owner, name, params } => {
                        let body = &hashable[at + 1..i];
                        out.methods.push(MethodDecl {
                            owner,
                            name,
                            params,
                            body_hash: Some(hash_normalized(body)),
                        });
                    }
                    Frame::Neutral { pending } => buffer = pending,
                }
            }
            ';' => {
                let stmt = std::mem::take(&mut buffer);
                let inside_body = stack
                    .iter()
                    .any(|f| matches!(f, Frame::Method { .. } | Frame::Neutral { .. }));
                if !inside_body {
                    let owner = if in_type_scope(&stack) {
                        Some(type_path(&stack))
                    } else {
                        None
                    };
                    classify_statement(&stmt, owner.as_deref(), &mut out);
                }
            }
            _ => buffer.push(c),
        }
    }
    if !stack.is_empty() {
        return Err(JavaParseError::UnbalancedBraces);
    }
    Ok(out)
}

/// Structural change counts between two versions of one file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub struct StructuralCounts {
    pub class_added: u32,
    pub class_deleted: u32,
    pub class_modified: u32,
    pub met_added: u32,
    pub met_deleted: u32,
    pub met_changed: u32,
    pub met_body_modified: u32,
    pub field_added: u32,
    pub field_deleted: u32,
    pub import_added: u32,
    pub import_deleted: u32,
}

impl StructuralCounts {
    pub fn total(&self) -> u32 {
        self.class_added
            + self.class_deleted
            + self.class_modified
            + self.met_added
            + self.met_deleted
            + self.met_changed
            + self.met_body_modified
            + self.field_added
            + self.field_deleted
            + self.import_added
            + self.import_deleted
    }
}

impl std::ops::AddAssign for StructuralCounts {
    fn add_assign(&mut self, o: Self) {
        self.class_added += o.class_added;
        self.class_deleted += o.class_deleted;
        self.class_modified += o.class_modified;
        self.met_added += o.met_added;
        self.met_deleted += o.met_deleted;
        self.met_changed += o.met_changed;
        self.met_body_modified += o.met_body_modified;
        self.field_added += o.field_added;
        self.field_deleted += o.field_deleted;
        self.import_added += o.import_added;
        self.import_deleted += o.import_deleted;
    }
}

fn class_fingerprint(summary: &DeclSummary, class: &str) -> u64 {
    let mut parts: Vec<String> = Vec::new();
    if let Some(t) = summary.types.iter().find(|t| t.name == class) {
        parts.push(format!("header:{}", t.header_hash));
    }
    let mut methods: Vec<String> = summary
        .methods
        .iter()
        .filter(|m| m.owner == class)
        .map(|m| format!("{}:{:?}", m.signature(), m.body_hash))
        .collect();
    methods.sort();
    parts.extend(methods);
    let mut fields: Vec<String> = summary
        .fields
        .iter()
        .filter(|f| f.owner == class)
        .map(|f| f.name.clone())
        .collect();
    fields.sort();
    parts.extend(fields);
    fnv1a64(parts.join("\n").as_bytes())
}

/// Counts declaration-level differences. Declarations are matched by
/// qualified name; a method with the same name but different parameter types
/// counts as a signature change, and the same signature with a different
/// body hash counts as a body modification.
pub fn structural_diff(before: &DeclSummary, after: &DeclSummary) -> StructuralCounts {
    let mut c = StructuralCounts::default();

    let before_classes: BTreeSet<&str> = before.types.iter().map(|t| t.name.as_str()).collect();
    let after_classes: BTreeSet<&str> = after.types.iter().map(|t| t.name.as_str()).collect();
    c.class_added = after_classes.difference(&before_classes).count() as u32;
    c.class_deleted = before_classes.difference(&after_classes).count() as u32;
    for class in before_classes.intersection(&after_classes) {
        if class_fingerprint(before, class) != class_fingerprint(after, class) {
            c.class_modified += 1;
        }
    }

    // Methods: group by (owner, name), then match exact, then same-params
    // (body modified), then remaining pairs (signature changed).
    let mut keys: BTreeSet<(String, String)> = BTreeSet::new();
    for m in before.methods.iter().chain(after.methods.iter()) {
        keys.insert((m.owner.clone(), m.name.clone()));
    }
    for (owner, name) in keys {
        let mut b: Vec<&MethodDecl> = before
            .methods
            .iter()
            .filter(|m| m.owner == owner && m.name == name)
            .collect();
        let mut a: Vec<&MethodDecl> = after
            .methods
            .iter()
            .filter(|m| m.owner == owner && m.name == name)
            .collect();
        let sort_key = |m: &&MethodDecl| (m.params.join(","), format!("{:?}", m.body_hash));
        b.sort_by_key(sort_key);
        a.sort_by_key(sort_key);

        // Exact matches drop out.
        let mut i = 0;
        while i < b.len() {
            if let Some(j) = a
                .iter()
                .position(|m| m.params == b[i].params && m.body_hash == b[i].body_hash)
            {
                a.remove(j);
                b.remove(i);
            } else {
                i += 1;
            }
        }
        // Same signature, different body.
        let mut i = 0;
        while i < b.len() {
            if let Some(j) = a.iter().position(|m| m.params == b[i].params) {
                c.met_body_modified += 1;
                a.remove(j);
                b.remove(i);
            } else {
                i += 1;
            }
        }
        // Leftovers with the same name pair up as signature changes.
        let paired = b.len().min(a.len());
        c.met_changed += paired as u32;
        c.met_deleted += (b.len() - paired) as u32;
        c.met_added += (a.len() - paired) as u32;
    }

    let before_fields: BTreeSet<(&str, &str)> =
        before.fields.iter().map(|f| (f.owner.as_str(), f.name.as_str())).collect();
    let after_fields: BTreeSet<(&str, &str)> =
        after.fields.iter().map(|f| (f.owner.as_str(), f.name.as_str())).collect();
    c.field_added = after_fields.difference(&before_fields).count() as u32;
    c.field_deleted = before_fields.difference(&after_fields).count() as u32;

    c.import_added = after.imports.difference(&before.imports).count() as u32;
    c.import_deleted = before.imports.difference(&after.imports).count() as u32;
    c
}

static FALLBACK_IMPORT: Lazy<Regex> = Lazy::new(|| Regex::new(r"^\s*import\s+(.+);\s*$").unwrap());
static FALLBACK_TYPE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\b(?:class|interface|enum|record)\s+([A-Za-z_$][\w$]*)").unwrap());
static FALLBACK_METHOD: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"([A-Za-z_$][\w$]*)\s*\([^;{}()]*\)\s*\{").unwrap());

/// Line-based approximation for sources the scanner cannot balance: imports
/// and type names by set difference, method-ish opening lines by multiset
/// difference. Finer-grained counts stay zero.
pub fn line_fallback(before: &str, after: &str) -> StructuralCounts {
    let mut c = StructuralCounts::default();
    let imports = |s: &str| -> BTreeSet<String> {
        s.lines()
            .filter_map(|l| FALLBACK_IMPORT.captures(l))
            .map(|m| m.get(1).unwrap().as_str().trim().to_string())
            .collect()
    };
    let types = |s: &str| -> BTreeSet<String> {
        FALLBACK_TYPE.captures_iter(s).map(|m| m.get(1).unwrap().as_str().to_string()).collect()
    };
    let methods = |s: &str| -> std::collections::BTreeMap<String, i64> {
        let mut map = std::collections::BTreeMap::new();
        for m in FALLBACK_METHOD.captures_iter(s) {
            let name = m.get(1).unwrap().as_str();
            if !NON_METHOD_NAMES.contains(&name) && !types(s).contains(name) {
                *map.entry(name.to_string()).or_insert(0) += 1;
            }
        }
        map
    };

    let (ib, ia) = (imports(before), imports(after));
    c.import_added = ia.difference(&ib).count() as u32;
    c.import_deleted = ib.difference(&ia).count() as u32;

    let (tb, ta) = (types(before), types(after));
    c.class_added = ta.difference(&tb).count() as u32;
    c.class_deleted = tb.difference(&ta).count() as u32;

    let (mb, ma) = (methods(before), methods(after));
    for (name, &na) in &ma {
        let nb = mb.get(name).copied().unwrap_or(0);
        c.met_added += (na - nb).max(0) as u32;
    }
    for (name, &nb) in &mb {
        let na = ma.get(name).copied().unwrap_or(0);
        c.met_deleted += (nb - na).max(0) as u32;
    }
    c
}

/// Diffs two versions of one Java file. Absent sides are treated as empty.
/// Returns the counts and whether the line-based fallback had to be used.
pub fn diff_java_texts(before: Option<&str>, after: Option<&str>) -> (StructuralCounts, bool) {
    let b = before.unwrap_or("");
    let a = after.unwrap_or("");
    match (parse_java(b), parse_java(a)) {
        (Ok(sb), Ok(sa)) => (structural_diff(&sb, &sa), false),
        _ => (line_fallback(b, a), true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIMPLE: &str = r#"
package com.acme.widget;

import java.util.List;
import java.util.Map;

public class Widget {
    private int size;
    private String name, label;

    public Widget(int size) {
        this.size = size;
    }

    public int grow(int by) {
        size += by;
        return size;
    }

    public Map<String, Integer> index(List<String> keys) {
        return Map.of();
    }
}
"#;

    #[test]
    fn parses_package_imports_types_methods_fields() {
        let s = parse_java(SIMPLE).unwrap();
        assert_eq!(s.package.as_deref(), Some("com.acme.widget"));
        assert_eq!(s.imports.len(), 2);
        assert_eq!(s.types.len(), 1);
        assert_eq!(s.types[0].name, "Widget");
        let names: Vec<&str> = s.methods.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, vec!["Widget", "grow", "index"]);
        assert_eq!(s.methods[2].params, vec!["List<String>"]);
        let fields: Vec<&str> = s.fields.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(fields, vec!["size", "name", "label"]);
    }

    #[test]
    fn nested_types_qualify_and_scope_members() {
        let src = r#"
class Outer {
    int a;
    static class Inner {
        int b;
        void go() { }
    }
    void run() { }
}
"#;
        let s = parse_java(src).unwrap();
        let types: Vec<&str> = s.types.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(types, vec!["Outer", "Outer.Inner"]);
        let owners: Vec<(&str, &str)> =
            s.methods.iter().map(|m| (m.owner.as_str(), m.name.as_str())).collect();
        assert_eq!(owners, vec![("Outer.Inner", "go"), ("Outer", "run")]);
        let fields: Vec<(&str, &str)> =
            s.fields.iter().map(|f| (f.owner.as_str(), f.name.as_str())).collect();
        assert_eq!(fields, vec![("Outer", "a"), ("Outer.Inner", "b")]);
    }

    #[test]
    fn braces_in_literals_and_comments_are_inert() {
        let src = r#"
class T {
    // a } stray { comment
    /* and { another } */
    String s() {
        char c = '{';
        return "}{" + """
            { text block }
            """;
    }
}
"#;
        let s = parse_java(src).unwrap();
        assert_eq!(s.types.len(), 1);
        assert_eq!(s.methods.len(), 1);
    }

    #[test]
    fn string_literal_edits_change_the_body_hash() {
        let a = parse_java("class T { String m() { return \"a\"; } }").unwrap();
        let b = parse_java("class T { String m() { return \"b\"; } }").unwrap();
        let c = parse_java("class T { String m() {\n  return \"a\";\n} }").unwrap();
        assert_ne!(a.methods[0].body_hash, b.methods[0].body_hash);
        // Whitespace-only edits do not.
        assert_eq!(a.methods[0].body_hash, c.methods[0].body_hash);
    }

    #[test]
    fn interface_methods_have_no_body_hash() {
        let s = parse_java("interface I { int size(); default int two() { return 2; } }")
            .unwrap();
        assert_eq!(s.methods.len(), 2);
        assert_eq!(s.methods[0].name, "size");
        assert!(s.methods[0].body_hash.is_none());
        assert_eq!(s.methods[1].name, "two");
        assert!(s.methods[1].body_hash.is_some());
    }

    #[test]
    fn field_with_anonymous_class_initializer_is_a_field_not_a_method() {
        let src = r#"
class T {
    Runnable r = new Runnable() { };
    Runnable s = () -> { };
}
"#;
        let s = parse_java(src).unwrap();
        let fields: Vec<&str> = s.fields.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(fields, vec!["r", "s"]);
        assert!(s.methods.is_empty());
    }

    #[test]
    fn enum_constant_bodies_do_not_leak_members() {
        let src = r#"
enum E {
    A { void hidden() { } },
    B;
    int visible() { return 1; }
}
"#;
        let s = parse_java(src).unwrap();
        assert_eq!(s.types.len(), 1);
        let names: Vec<&str> = s.methods.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, vec!["visible"]);
    }

    #[test]
    fn overloads_are_distinguished_by_parameter_types() {
        let src = "class T { void f(int a) { } void f(String a) { } }";
        let s = parse_java(src).unwrap();
        assert_eq!(s.methods.len(), 2);
        assert_ne!(s.methods[0].params, s.methods[1].params);
    }

    #[test]
    fn unbalanced_source_is_rejected() {
        assert_eq!(parse_java("class T { void f() { }"), Err(JavaParseError::UnbalancedBraces));
        assert_eq!(parse_java("class T { } }"), Err(JavaParseError::UnbalancedBraces));
        assert!(parse_java("").unwrap().types.is_empty());
    }

    #[test]
    fn identical_summaries_diff_to_zero() {
        let s = parse_java(SIMPLE).unwrap();
        assert_eq!(structural_diff(&s, &s), StructuralCounts::default());
        assert_eq!(structural_diff(&s, &s).total(), 0);
    }

    #[test]
    fn renamed_method_counts_as_add_plus_delete() {
        let before = parse_java("class T { void old() { int x = 1; } }").unwrap();
        let after = parse_java("class T { void fresh() { int x = 1; } }").unwrap();
        let d = structural_diff(&before, &after);
        assert_eq!(d.met_added, 1);
        assert_eq!(d.met_deleted, 1);
        assert_eq!(d.met_changed, 0);
        assert_eq!(d.class_modified, 1);
    }

    #[test]
    fn parameter_type_change_counts_as_signature_change() {
        let before = parse_java("class T { void f(int a) { use(a); } }").unwrap();
        let after = parse_java("class T { void f(long a) { use(a); } }").unwrap();
        let d = structural_diff(&before, &after);
        assert_eq!(d.met_changed, 1);
        assert_eq!(d.met_added, 0);
        assert_eq!(d.met_deleted, 0);
        assert_eq!(d.met_body_modified, 0);
    }

    #[test]
    fn body_edit_counts_as_body_modification() {
        let before = parse_java("class T { int f() { return 1; } }").unwrap();
        let after = parse_java("class T { int f() { return 2; } }").unwrap();
        let d = structural_diff(&before, &after);
        assert_eq!(d.met_body_modified, 1);
        assert_eq!(d.met_changed, 0);
    }

    #[test]
    fn diff_is_antisymmetric_in_added_and_deleted() {
        let before = parse_java(
            "import a.B;\nclass T { int x; void f() { } }",
        )
        .unwrap();
        let after = parse_java(
            "import a.C;\nclass T { int y; void g() { } }\nclass U { }",
        )
        .unwrap();
        let d = structural_diff(&before, &after);
        let r = structural_diff(&after, &before);
        assert_eq!(d.class_added, r.class_deleted);
        assert_eq!(d.class_deleted, r.class_added);
        assert_eq!(d.met_added, r.met_deleted);
        assert_eq!(d.met_deleted, r.met_added);
        assert_eq!(d.field_added, r.field_deleted);
        assert_eq!(d.import_added, r.import_deleted);
        assert_eq!(d.met_changed, r.met_changed);
        assert_eq!(d.met_body_modified, r.met_body_modified);
        assert_eq!(d.class_modified, r.class_modified);
    }

    #[test]
    fn fallback_approximates_unbalanced_sources() {
        let before = "import a.B;\nclass T {\n  void f() {\n"; // truncated
        let after = "import a.B;\nimport a.C;\nclass T {\n  void f() {\n  void g() {\n";
        let (d, fell_back) = diff_java_texts(Some(before), Some(after));
        assert!(fell_back);
        assert_eq!(d.import_added, 1);
        assert_eq!(d.met_added, 1);
        assert_eq!(d.class_added, 0);
    }

    #[test]
    fn added_file_diffs_against_empty() {
        let src = "class T { void f() { } void g() { } }";
        let (d, fell_back) = diff_java_texts(None, Some(src));
        assert!(!fell_back);
        assert_eq!(d.class_added, 1);
        assert_eq!(d.met_added, 2);
        assert_eq!(d.total(), 3);
    }

    #[test]
    fn generic_and_vararg_parameters_normalize() {
        let src = "class T { void f(Map<String, List<Integer>> m, String... rest, int a[]) { } }";
        let s = parse_java(src).unwrap();
        assert_eq!(
            s.methods[0].params,
            vec!["Map<String,List<Integer>>", "String...", "int[]"]
        );
    }
}
