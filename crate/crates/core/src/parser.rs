//! Reader and writer for the `.afm` text format.
//!
//! ```text
//! feature Robot {
//!     mandatory Motor { attr pwr in {10, 20, 30}; }
//!     mandatory Tool {
//!         attr pwr_min abstract;
//!         alternative {
//!             Drill { attr pwr_min in {20}; }
//!             Glue { attr pwr_min in {10}; }
//!         }
//!     }
//!     optional Protective_grid { mandatory Mounting_set {} }
//! }
//! constraint(root, exist(Robot)).
//! constraint(pwr, Motor:pwr >= Tool:pwr_min * 110 / 100).
//! pragma(Protective_grid, false_optional_feature).
//! ```
//!
//! Modules wrap a feature tree: `module Name { feature Root { ... } ref Root:attr; constraint(...). }`.
//! A child written without a body (`mandatory Root;`) is attached to the
//! module whose root feature has that name, or is a plain leaf otherwise.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use crate::model::{
    ArithOp, Attribute, ChildRelation, CmpOp, CrossTreeConstraint, Expr, Feature, FeatureId, FeatureModel, ModuleDecl,
    Pragma, PragmaTarget, Property, Reference, SourceSpan, Term, Violation,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    pub expected: Vec<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.span.line, self.span.col, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: SourceSpan,
}

// Longest symbols first.
const SYMBOLS: &[&str] = &[
    "<==>", "==>", "=<", ">=", "\\=", "\\/", "/\\", "..", "=", "<", ">", "+", "-", "*", "/", "{", "}", "(", ")", "[",
    "]", ",", ";", ".", ":",
];

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let s: String = chars[i..].iter().take_while(|c| c.is_ascii_alphanumeric() || **c == '_').collect();
            let n = s.chars().count();
            i += n;
            col += n as u32;
            out.push(Token { tok: Tok::Ident(s), span: SourceSpan { line, col: start, end_col: col } });
            continue;
        }
        if c.is_ascii_digit() {
            let s: String = chars[i..].iter().take_while(|c| c.is_ascii_digit()).collect();
            let n = s.len();
            let span = SourceSpan { line, col: start, end_col: start + n as u32 };
            let v = s.parse::<i64>().map_err(|_| ParseError {
                span,
                message: format!("integer literal `{s}` is out of range"),
                expected: vec![],
            })?;
            i += n;
            col += n as u32;
            out.push(Token { tok: Tok::Int(v), span });
            continue;
        }
        // `#` prefixes CLP(FD)-style operators: `#==>`, `#\/`, `#=` ...
        let (skip, rest) = if c == '#' { (1, i + 1) } else { (0, i) };
        let found = SYMBOLS.iter().find(|s| {
            let sc: Vec<char> = s.chars().collect();
            chars.len() >= rest + sc.len() && chars[rest..rest + sc.len()] == sc[..]
        });
        let sym = match found {
            Some(s) => *s,
            None if skip == 1 && chars.get(rest) == Some(&'\\') => "\\",
            None => {
                return Err(ParseError {
                    span: SourceSpan { line, col, end_col: col + 1 },
                    message: format!("unexpected character `{c}`"),
                    expected: vec![],
                })
            }
        };
        let n = skip + sym.len();
        i += n;
        col += n as u32;
        let sym = if sym == "\\" { "not" } else { sym };
        out.push(Token { tok: Tok::Sym(sym), span: SourceSpan { line, col: start, end_col: col } });
    }
    out.push(Token { tok: Tok::Eof, span: SourceSpan { line, col, end_col: col + 1 } });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "feature",
    "mandatory",
    "optional",
    "alternative",
    "attr",
    "in",
    "abstract",
    "constraint",
    "pragma",
    "module",
    "ref",
    "exist",
    "nonexist",
    "not",
];

#[derive(Debug)]
struct FeatureDecl {
    name: String,
    span: SourceSpan,
    attrs: Vec<Attribute>,
    children: Vec<ChildDecl>,
}

#[derive(Debug)]
enum ChildKind {
    Mandatory,
    Optional,
    Alternative,
}

#[derive(Debug)]
struct ChildDecl {
    kind: ChildKind,
    /// `None` body: a stub that a module fills in, or a bare leaf.
    members: Vec<(String, SourceSpan, Option<FeatureDecl>)>,
}

#[derive(Debug)]
struct ModuleBlock {
    name: String,
    span: SourceSpan,
    root: Option<FeatureDecl>,
    refs: Vec<Reference>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    constraints: Vec<CrossTreeConstraint>,
    pragmas: Vec<Pragma>,
    ref_spans: HashMap<String, SourceSpan>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let message = if expected.len() == 1 {
            format!("expected {}, found {}", expected[0], self.peek())
        } else {
            format!("unexpected {}", self.peek())
        };
        Err(ParseError {
            span: self.span(),
            message,
            expected: if expected.len() == 1 { vec![] } else { expected.iter().map(|s| s.to_string()).collect() },
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<SourceSpan> {
        if self.is_sym(s) {
            Ok(self.bump().span)
        } else {
            self.error(&[&format!("`{s}`")])
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.error(&[&format!("`{s}`")])
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, SourceSpan)> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let span = self.bump().span;
                Ok((s, span))
            }
            _ => self.error(&[what]),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        let neg = self.eat_sym("-");
        match *self.peek() {
            Tok::Int(n) => {
                self.bump();
                Ok(if neg { -n } else { n })
            }
            _ => self.error(&["integer"]),
        }
    }

    fn file(&mut self) -> PResult<(Option<FeatureDecl>, Vec<ModuleBlock>)> {
        let mut top = None;
        let mut modules = Vec::new();
        if matches!(self.peek(), Tok::Eof) {
            return self.error(&["feature declaration"]);
        }
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(k) if k == "feature" => {
                    if top.is_some() {
                        return Err(ParseError {
                            span: self.span(),
                            message: "only one top-level feature tree is allowed".into(),
                            expected: vec![],
                        });
                    }
                    top = Some(self.feature_decl()?);
                }
                Tok::Ident(k) if k == "module" => modules.push(self.module_block()?),
                Tok::Ident(k) if k == "constraint" => self.constraint(None)?,
                Tok::Ident(k) if k == "pragma" => self.pragma()?,
                _ => return self.error(&["`feature`", "`module`", "`constraint`", "`pragma`"]),
            }
        }
        Ok((top, modules))
    }

    fn module_block(&mut self) -> PResult<ModuleBlock> {
        self.expect_kw("module")?;
        let (name, span) = self.ident("module name")?;
        self.expect_sym("{")?;
        let mut block = ModuleBlock { name: name.clone(), span, root: None, refs: Vec::new() };
        while !self.eat_sym("}") {
            match self.peek().clone() {
                Tok::Ident(k) if k == "feature" => {
                    if block.root.is_some() {
                        return Err(ParseError {
                            span: self.span(),
                            message: format!("module `{name}` declares more than one root feature"),
                            expected: vec![],
                        });
                    }
                    block.root = Some(self.feature_decl()?);
                }
                Tok::Ident(k) if k == "ref" => {
                    self.bump();
                    let (feature, _) = self.ident("feature name")?;
                    let attr = if self.eat_sym(":") { Some(self.ident("attribute name")?.0) } else { None };
                    self.expect_sym(";")?;
                    block.refs.push(Reference { feature, attr });
                }
                Tok::Ident(k) if k == "constraint" => self.constraint(Some(name.clone()))?,
                Tok::Ident(k) if k == "pragma" => self.pragma()?,
                _ => return self.error(&["`feature`", "`ref`", "`constraint`", "`pragma`", "`}`"]),
            }
        }
        if block.root.is_none() {
            return Err(ParseError { span, message: format!("module `{name}` has no root feature"), expected: vec![] });
        }
        Ok(block)
    }

    fn feature_decl(&mut self) -> PResult<FeatureDecl> {
        self.expect_kw("feature")?;
        let (name, span) = self.ident("feature name")?;
        self.feature_body(name, span)
    }

    fn feature_body(&mut self, name: String, span: SourceSpan) -> PResult<FeatureDecl> {
        self.expect_sym("{")?;
        let mut decl = FeatureDecl { name, span, attrs: Vec::new(), children: Vec::new() };
        while !self.eat_sym("}") {
            let kw = match self.peek() {
                Tok::Ident(k) => k.clone(),
                _ => return self.error(&["`attr`", "`mandatory`", "`optional`", "`alternative`", "`}`"]),
            };
            match kw.as_str() {
                "attr" => {
                    self.bump();
                    let (aname, aspan) = self.ident("attribute name")?;
                    let (domain, is_abstract) = if self.is_kw("abstract") {
                        self.bump();
                        (Vec::new(), true)
                    } else {
                        self.expect_kw("in")?;
                        (self.domain()?, false)
                    };
                    self.expect_sym(";")?;
                    decl.attrs.push(Attribute { name: aname, domain, is_abstract, span: aspan });
                }
                "mandatory" | "optional" => {
                    self.bump();
                    let member = self.child_member()?;
                    let kind = if kw == "mandatory" { ChildKind::Mandatory } else { ChildKind::Optional };
                    decl.children.push(ChildDecl { kind, members: vec![member] });
                }
                "alternative" => {
                    self.bump();
                    self.expect_sym("{")?;
                    let mut members = Vec::new();
                    while !self.eat_sym("}") {
                        members.push(self.child_member()?);
                    }
                    self.eat_sym(";");
                    decl.children.push(ChildDecl { kind: ChildKind::Alternative, members });
                }
                _ => return self.error(&["`attr`", "`mandatory`", "`optional`", "`alternative`", "`}`"]),
            }
        }
        Ok(decl)
    }

    fn child_member(&mut self) -> PResult<(String, SourceSpan, Option<FeatureDecl>)> {
        let (name, span) = self.ident("feature name")?;
        if self.eat_sym(";") {
            return Ok((name, span, None));
        }
        let body = self.feature_body(name.clone(), span)?;
        self.eat_sym(";");
        Ok((name, span, Some(body)))
    }

    fn domain(&mut self) -> PResult<Vec<i64>> {
        let mut vals = BTreeSet::new();
        if self.is_sym("[") {
            let (lo, hi) = self.range()?;
            vals.extend(lo..=hi);
            return Ok(vals.into_iter().collect());
        }
        self.expect_sym("{")?;
        loop {
            if self.is_sym("[") {
                let (lo, hi) = self.range()?;
                vals.extend(lo..=hi);
            } else {
                let lo = self.int()?;
                if self.eat_sym("..") {
                    let hi = self.int()?;
                    vals.extend(lo..=hi);
                } else {
                    vals.insert(lo);
                }
            }
            if self.eat_sym("}") {
                break;
            }
            self.expect_sym(",")?;
        }
        Ok(vals.into_iter().collect())
    }

    fn range(&mut self) -> PResult<(i64, i64)> {
        self.expect_sym("[")?;
        let lo = self.int()?;
        self.expect_sym("..")?;
        let hi = self.int()?;
        self.expect_sym("]")?;
        if hi < lo {
            return Err(ParseError {
                span: self.span(),
                message: format!("empty range [{lo}..{hi}]"),
                expected: vec![],
            });
        }
        if hi - lo > 100_000 {
            return Err(ParseError { span: self.span(), message: "range is too large".into(), expected: vec![] });
        }
        Ok((lo, hi))
    }

    fn constraint(&mut self, module: Option<String>) -> PResult<()> {
        self.expect_kw("constraint")?;
        self.expect_sym("(")?;
        let (name, span) = self.ident("constraint name")?;
        self.expect_sym(",")?;
        let expr = self.expr()?;
        self.expect_sym(")")?;
        self.expect_sym(".")?;
        self.constraints.push(CrossTreeConstraint { name, expr, module, span });
        Ok(())
    }

    fn pragma(&mut self) -> PResult<()> {
        self.expect_kw("pragma")?;
        let span = self.expect_sym("(")?;
        let (feature, _) = self.ident("feature name")?;
        let target = if self.eat_sym(":") {
            let (attr, _) = self.ident("attribute name")?;
            self.expect_sym("=")?;
            let value = self.int()?;
            PragmaTarget::Value { feature, attr, value }
        } else {
            PragmaTarget::Feature(feature)
        };
        self.expect_sym(",")?;
        let (kw, kspan) = match self.peek().clone() {
            Tok::Ident(k) => (k, self.bump().span),
            _ => return self.error(&["property name"]),
        };
        let property = Property::from_keyword(&kw).ok_or_else(|| ParseError {
            span: kspan,
            message: format!("unknown pragma property `{kw}`"),
            expected: ["dead_feature", "false_optional_feature", "dead_value", "false_optional_value"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        })?;
        self.expect_sym(")")?;
        self.expect_sym(".")?;
        self.pragmas.push(Pragma { target, property, span });
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.implication()?;
        while self.eat_sym("<==>") {
            let rhs = self.implication()?;
            lhs = Expr::iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn implication(&mut self) -> PResult<Expr> {
        let lhs = self.disjunction()?;
        if self.eat_sym("==>") {
            let rhs = self.implication()?;
            return Ok(Expr::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> PResult<Expr> {
        let mut lhs = self.conjunction()?;
        while self.eat_sym("\\/") {
            lhs = Expr::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> PResult<Expr> {
        let mut lhs = self.negation()?;
        while self.eat_sym("/\\") {
            lhs = Expr::and(lhs, self.negation()?);
        }
        Ok(lhs)
    }

    fn negation(&mut self) -> PResult<Expr> {
        if self.is_kw("not") || self.is_sym("not") {
            self.bump();
            return Ok(Expr::not(self.negation()?));
        }
        self.bool_atom()
    }

    fn bool_atom(&mut self) -> PResult<Expr> {
        if self.is_kw("exist") || self.is_kw("nonexist") {
            let exist = self.is_kw("exist");
            self.bump();
            self.expect_sym("(")?;
            let (name, span) = self.ident("feature name")?;
            self.expect_sym(")")?;
            self.ref_spans.entry(name.clone()).or_insert(span);
            return Ok(if exist { Expr::Exist(name) } else { Expr::NonExist(name) });
        }
        if self.is_sym("(") {
            // `(` opens either a boolean group or an arithmetic term
            let save = self.pos;
            if let Ok(cmp) = self.comparison() {
                return Ok(cmp);
            }
            self.pos = save;
            self.bump();
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.term()?;
        let op = match self.peek() {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("\\=") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("=<") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return self.error(&["comparison operator"]),
        };
        self.bump();
        let rhs = self.term()?;
        Ok(Expr::Cmp(op, lhs, rhs))
    }

    fn term(&mut self) -> PResult<Term> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => ArithOp::Add,
                Tok::Sym("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Term::bin(op, lhs, self.factor()?);
        }
    }

    fn factor(&mut self) -> PResult<Term> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => ArithOp::Mul,
                Tok::Sym("/") => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Term::bin(op, lhs, self.unary()?);
        }
    }

    fn unary(&mut self) -> PResult<Term> {
        if self.eat_sym("-") {
            if let Tok::Int(n) = *self.peek() {
                self.bump();
                return Ok(Term::Int(-n));
            }
            return Ok(Term::Neg(Box::new(self.unary()?)));
        }
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Term::Int(n))
            }
            Tok::Sym("(") => {
                self.bump();
                let t = self.term()?;
                self.expect_sym(")")?;
                Ok(t)
            }
            Tok::Ident(_) if matches!(self.peek_at(1), Tok::Sym(":")) => {
                let (feature, span) = self.ident("feature name")?;
                self.bump();
                let (attr, _) = self.ident("attribute name")?;
                self.ref_spans.entry(format!("{feature}:{attr}")).or_insert(span);
                self.ref_spans.entry(feature.clone()).or_insert(span);
                Ok(Term::Attr { feature, attr })
            }
            _ => self.error(&["integer, attribute reference or `(`"]),
        }
    }
}

struct Builder {
    features: Vec<Feature>,
    modules_by_root: HashMap<String, usize>,
    blocks: Vec<ModuleBlock>,
    errors: Vec<ParseError>,
    used_blocks: Vec<bool>,
}

impl Builder {
    fn add(&mut self, decl: FeatureDecl, parent: Option<FeatureId>, module: Option<String>) -> FeatureId {
        let id = FeatureId(self.features.len());
        self.features.push(Feature {
            name: decl.name,
            attributes: decl.attrs,
            children: Vec::new(),
            parent,
            module: module.clone(),
            span: decl.span,
        });
        for child in decl.children {
            let mut ids = Vec::new();
            for (name, span, body) in child.members {
                let cid = match body {
                    Some(b) => self.add(b, Some(id), module.clone()),
                    None => match self.modules_by_root.get(&name).copied() {
                        Some(bi) if !self.used_blocks[bi] => {
                            self.used_blocks[bi] = true;
                            let block_name = self.blocks[bi].name.clone();
                            let root = self.blocks[bi].root.take().expect("module root");
                            self.add(root, Some(id), Some(block_name))
                        }
                        Some(_) => {
                            self.errors.push(ParseError {
                                span,
                                message: format!("module rooted at `{name}` is attached twice"),
                                expected: vec![],
                            });
                            continue;
                        }
                        None => self.add(
                            FeatureDecl { name, span, attrs: Vec::new(), children: Vec::new() },
                            Some(id),
                            module.clone(),
                        ),
                    },
                };
                ids.push(cid);
            }
            let rel = match child.kind {
                ChildKind::Mandatory => ids.first().map(|c| ChildRelation::Mandatory(*c)),
                ChildKind::Optional => ids.first().map(|c| ChildRelation::Optional(*c)),
                ChildKind::Alternative => Some(ChildRelation::Alternative(ids)),
            };
            if let Some(rel) = rel {
                self.features[id.0].children.push(rel);
            }
        }
        id
    }
}

/// Parses `.afm` source into a validated model.
pub fn parse(text: &str) -> Result<FeatureModel, Vec<ParseError>> {
    let toks = lex(text).map_err(|e| vec![e])?;
    let mut p = Parser { toks, pos: 0, constraints: Vec::new(), pragmas: Vec::new(), ref_spans: HashMap::new() };
    let (top, blocks) = p.file().map_err(|e| vec![e])?;
    let model_modules: Vec<ModuleDecl> = blocks
        .iter()
        .map(|b| ModuleDecl {
            name: b.name.clone(),
            root_feature: b.root.as_ref().map(|r| r.name.clone()).unwrap_or_default(),
            references: b.refs.clone(),
            span: b.span,
        })
        .collect();
    if top.is_some() && !blocks.is_empty() {
        return Err(vec![ParseError {
            span: blocks[0].span,
            message: "when modules are declared every feature must live inside a module".into(),
            expected: vec![],
        }]);
    }
    let mut b = Builder {
        features: Vec::new(),
        modules_by_root: blocks
            .iter()
            .enumerate()
            .filter_map(|(i, m)| m.root.as_ref().map(|r| (r.name.clone(), i)))
            .collect(),
        used_blocks: vec![false; blocks.len()],
        blocks,
        errors: Vec::new(),
    };
    let root_decl = match top {
        Some(t) => (t, None),
        None => {
            // the main module is the one no stub refers to
            let stubs = collect_stub_names(&b.blocks);
            let mains: Vec<usize> = (0..b.blocks.len())
                .filter(|&i| b.blocks[i].root.as_ref().is_some_and(|r| !stubs.contains(&r.name)))
                .collect();
            if mains.len() != 1 {
                let span = b.blocks.first().map(|m| m.span).unwrap_or_default();
                return Err(vec![ParseError {
                    span,
                    message: format!("expected exactly one top-level module, found {}", mains.len()),
                    expected: vec![],
                }]);
            }
            let i = mains[0];
            b.used_blocks[i] = true;
            let name = b.blocks[i].name.clone();
            (b.blocks[i].root.take().unwrap(), Some(name))
        }
    };
    let root = b.add(root_decl.0, None, root_decl.1);
    for (i, used) in b.used_blocks.iter().enumerate() {
        if !used {
            b.errors.push(ParseError {
                span: b.blocks[i].span,
                message: format!("module `{}` is never attached to the feature tree", b.blocks[i].name),
                expected: vec![],
            });
        }
    }
    if !b.errors.is_empty() {
        return Err(b.errors);
    }
    let mut model = FeatureModel {
        features: b.features,
        root,
        constraints: p.constraints,
        pragmas: p.pragmas,
        modules: model_modules,
    };
    if !model.modules.is_empty() {
        let root_module = model.features[root.0].module.clone();
        for c in &mut model.constraints {
            if c.module.is_none() {
                c.module = root_module.clone();
            }
        }
    }
    model.refresh_abstract_domains();
    let violations = model.validate();
    if !violations.is_empty() {
        return Err(violations.iter().map(|v| violation_error(&model, &p.ref_spans, v)).collect());
    }
    Ok(model)
}

fn collect_stub_names(blocks: &[ModuleBlock]) -> BTreeSet<String> {
    fn walk(d: &FeatureDecl, out: &mut BTreeSet<String>) {
        for c in &d.children {
            for (name, _, body) in &c.members {
                match body {
                    Some(b) => walk(b, out),
                    None => {
                        out.insert(name.clone());
                    }
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for b in blocks {
        if let Some(r) = &b.root {
            walk(r, &mut out);
        }
    }
    out
}

fn violation_error(model: &FeatureModel, refs: &HashMap<String, SourceSpan>, v: &Violation) -> ParseError {
    let feature_span = |n: &str| model.find(n).map(|f| model.feature(f).span);
    let constraint_span = |n: &str| model.constraints.iter().find(|c| c.name == n).map(|c| c.span);
    let span = match v {
        Violation::UnresolvedFeature { name, constraint } => {
            refs.get(name).copied().or_else(|| constraint_span(constraint))
        }
        Violation::UnresolvedAttribute { constraint, feature, attr } => {
            refs.get(&format!("{feature}:{attr}")).copied().or_else(|| constraint_span(constraint))
        }
        Violation::DuplicateConstraintName { name } => constraint_span(name),
        Violation::GroupTooSmall { feature }
        | Violation::DuplicateAttribute { feature, .. }
        | Violation::EmptyDomain { feature, .. }
        | Violation::BrokenTree { feature, .. }
        | Violation::AbstractWithoutGroup { feature, .. }
        | Violation::AbstractChildMissing { feature, .. }
        | Violation::AbstractDomainMismatch { feature, .. } => feature_span(feature),
        Violation::DuplicateFeatureName { name } => feature_span(name),
        Violation::BadPragma { target, .. } => {
            model.pragmas.iter().find(|p| pragma_label(&p.target) == *target).map(|p| p.span)
        }
        Violation::BadModule { module, .. } => model.modules.iter().find(|m| m.name == *module).map(|m| m.span),
    };
    ParseError { span: span.unwrap_or_default(), message: v.to_string(), expected: vec![] }
}

fn pragma_label(t: &PragmaTarget) -> String {
    match t {
        PragmaTarget::Feature(f) => f.clone(),
        PragmaTarget::Value { feature, attr, value } => format!("{feature}:{attr}={value}"),
    }
}

/// Writes a model back to `.afm` text. `parse(&serialize(m))` reproduces `m`
/// up to source spans.
pub fn serialize(model: &FeatureModel) -> String {
    let mut out = String::new();
    if model.modules.is_empty() {
        write_feature(model, model.root, 0, "feature ", &mut out);
        let mut first = true;
        for c in &model.constraints {
            if first {
                out.push('\n');
                first = false;
            }
            write_constraint(c, "", &mut out);
        }
    } else {
        for (i, m) in model.modules.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "module {} {{", m.name);
            if let Some(root) = model.find(&m.root_feature) {
                write_feature(model, root, 1, "feature ", &mut out);
            }
            for r in &m.references {
                match &r.attr {
                    Some(a) => {
                        let _ = writeln!(out, "    ref {}:{};", r.feature, a);
                    }
                    None => {
                        let _ = writeln!(out, "    ref {};", r.feature);
                    }
                }
            }
            for c in model.constraints.iter().filter(|c| c.module.as_deref() == Some(m.name.as_str())) {
                write_constraint(c, "    ", &mut out);
            }
            out.push_str("}\n");
        }
        let loose: Vec<&CrossTreeConstraint> = model.constraints.iter().filter(|c| c.module.is_none()).collect();
        if !loose.is_empty() {
            out.push('\n');
        }
        for c in loose {
            write_constraint(c, "", &mut out);
        }
    }
    if !model.pragmas.is_empty() {
        out.push('\n');
    }
    for p in &model.pragmas {
        let _ = writeln!(out, "pragma({}, {}).", pragma_target_text(&p.target), p.property.keyword());
    }
    out
}

fn pragma_target_text(t: &PragmaTarget) -> String {
    match t {
        PragmaTarget::Feature(f) => f.clone(),
        PragmaTarget::Value { feature, attr, value } => format!("{feature}:{attr} = {value}"),
    }
}

fn write_constraint(c: &CrossTreeConstraint, indent: &str, out: &mut String) {
    let _ = writeln!(out, "{indent}constraint({}, {}).", c.name, expr_text(&c.expr));
}

fn write_feature(model: &FeatureModel, id: FeatureId, depth: usize, prefix: &str, out: &mut String) {
    let f = model.feature(id);
    let pad = "    ".repeat(depth);
    if f.attributes.is_empty() && f.children.is_empty() {
        let _ = writeln!(out, "{pad}{prefix}{} {{}}", f.name);
        return;
    }
    let _ = writeln!(out, "{pad}{prefix}{} {{", f.name);
    for a in &f.attributes {
        if a.is_abstract {
            let _ = writeln!(out, "{pad}    attr {} abstract;", a.name);
        } else {
            let _ = writeln!(out, "{pad}    attr {} in {};", a.name, domain_text(&a.domain));
        }
    }
    let module = f.module.as_deref();
    let child = |c: FeatureId, depth: usize, prefix: &str, out: &mut String| {
        if model.feature(c).module.as_deref() != module {
            let _ = writeln!(out, "{}{prefix}{};", "    ".repeat(depth), model.name(c));
        } else {
            write_feature(model, c, depth, prefix, out);
        }
    };
    for rel in &f.children {
        match rel {
            ChildRelation::Mandatory(c) => child(*c, depth + 1, "mandatory ", out),
            ChildRelation::Optional(c) => child(*c, depth + 1, "optional ", out),
            ChildRelation::Alternative(cs) => {
                let _ = writeln!(out, "{pad}    alternative {{");
                for c in cs {
                    child(*c, depth + 2, "", out);
                }
                let _ = writeln!(out, "{pad}    }}");
            }
        }
    }
    let _ = writeln!(out, "{pad}}}");
}

/// `{1, 2, [5..9]}`: runs of three or more consecutive values use range sugar.
pub fn domain_text(domain: &[i64]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < domain.len() {
        let mut j = i;
        while j + 1 < domain.len() && domain[j + 1] == domain[j] + 1 {
            j += 1;
        }
        if j - i >= 2 {
            parts.push(format!("[{}..{}]", domain[i], domain[j]));
        } else {
            parts.extend(domain[i..=j].iter().map(|v| v.to_string()));
        }
        i = j + 1;
    }
    format!("{{{}}}", parts.join(", "))
}

fn expr_prec(e: &Expr) -> u8 {
    match e {
        Expr::Iff(..) => 1,
        Expr::Implies(..) => 2,
        Expr::Or(..) => 3,
        Expr::And(..) => 4,
        Expr::Not(..) => 5,
        _ => 6,
    }
}

pub fn expr_text(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(e, &mut s);
    s
}

fn write_sub(e: &Expr, min: u8, out: &mut String) {
    if expr_prec(e) < min {
        out.push('(');
        write_expr(e, out);
        out.push(')');
    } else {
        write_expr(e, out);
    }
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Exist(f) => {
            let _ = write!(out, "exist({f})");
        }
        Expr::NonExist(f) => {
            let _ = write!(out, "nonexist({f})");
        }
        Expr::Cmp(op, a, b) => {
            let _ = write!(out, "{} {} {}", term_text(a), op.symbol(), term_text(b));
        }
        Expr::Not(a) => {
            out.push_str("not ");
            write_sub(a, 5, out);
        }
        Expr::And(a, b) => {
            write_sub(a, 4, out);
            out.push_str(" /\\ ");
            write_sub(b, 5, out);
        }
        Expr::Or(a, b) => {
            write_sub(a, 3, out);
            out.push_str(" \\/ ");
            write_sub(b, 4, out);
        }
        Expr::Implies(a, b) => {
            write_sub(a, 3, out);
            out.push_str(" ==> ");
            write_sub(b, 2, out);
        }
        Expr::Iff(a, b) => {
            write_sub(a, 1, out);
            out.push_str(" <==> ");
            write_sub(b, 2, out);
        }
    }
}

fn term_prec(t: &Term) -> u8 {
    match t {
        Term::Bin(ArithOp::Add | ArithOp::Sub, ..) => 1,
        Term::Bin(ArithOp::Mul | ArithOp::Div, ..) => 2,
        _ => 3,
    }
}

pub fn term_text(t: &Term) -> String {
    let mut s = String::new();
    write_term(t, &mut s);
    s
}

fn write_term_sub(t: &Term, min: u8, out: &mut String) {
    if term_prec(t) < min {
        out.push('(');
        write_term(t, out);
        out.push(')');
    } else {
        write_term(t, out);
    }
}

fn write_term(t: &Term, out: &mut String) {
    match t {
        Term::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Term::Attr { feature, attr } => {
            let _ = write!(out, "{feature}:{attr}");
        }
        Term::Neg(a) => {
            out.push_str("-(");
            write_term(a, out);
            out.push(')');
        }
        Term::Bin(op, a, b) => {
            let p = term_prec(t);
            write_term_sub(a, p, out);
            let _ = write!(out, " {} ", op.symbol());
            write_term_sub(b, p + 1, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model;

    #[test]
    fn robot_fixture_parses() {
        let m = parse(fixtures::ROBOT).unwrap();
        assert_eq!(m.features.len(), 8);
        assert_eq!(m.attribute_count(), 5);
        assert_eq!(m.constraints.len(), 3);
        assert_eq!(m.without_spans(), model::robot().without_spans());
    }

    #[test]
    fn empty_input_expects_a_feature() {
        let errs = parse("").unwrap_err();
        assert!(errs[0].message.contains("expected feature declaration"), "{}", errs[0]);
        let errs = parse("  // only a comment\n").unwrap_err();
        assert!(errs[0].message.contains("expected feature declaration"));
    }

    #[test]
    fn unknown_feature_reference_is_reported() {
        let src = "feature R { optional A {} }\nconstraint(c, exist(Ghost)).\n";
        let errs = parse(src).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("Ghost"));
        assert_eq!(errs[0].span.line, 2);
        assert_eq!(errs[0].span.col, 21);
    }

    #[test]
    fn syntax_error_carries_span() {
        let errs = parse("feature R {\n  mandatory {}\n}").unwrap_err();
        assert_eq!(errs[0].span.line, 2);
        assert!(errs[0].message.contains("feature name"));
    }

    #[test]
    fn single_root_serializes_on_one_line() {
        let m = FeatureModel::with_root("Root");
        assert_eq!(serialize(&m), "feature Root {}\n");
    }

    #[test]
    fn robot_round_trips() {
        let m = parse(fixtures::ROBOT).unwrap();
        let again = parse(&serialize(&m)).unwrap();
        assert_eq!(again.without_spans(), m.without_spans());
    }

    #[test]
    fn pragma_line_is_preserved() {
        let src = format!("{}pragma(Protective_grid, false_optional_feature).\n", fixtures::ROBOT_NO_GLUE);
        let m = parse(&src).unwrap();
        let text = serialize(&m);
        assert!(text.contains("pragma(Protective_grid, false_optional_feature).\n"));
        assert_eq!(parse(&text).unwrap().without_spans(), m.without_spans());
    }

    #[test]
    fn precedence_and_associativity() {
        let m = parse("feature R { optional A {} optional B {} optional C {} }\nconstraint(c, exist(A) ==> exist(B) ==> not exist(C) \\/ exist(A) /\\ exist(B) <==> exist(C)).").unwrap();
        let e = &m.constraints[0].expr;
        let expected = Expr::iff(
            Expr::implies(
                Expr::exist("A"),
                Expr::implies(
                    Expr::exist("B"),
                    Expr::or(Expr::not(Expr::exist("C")), Expr::and(Expr::exist("A"), Expr::exist("B"))),
                ),
            ),
            Expr::exist("C"),
        );
        assert_eq!(*e, expected);
    }

    #[test]
    fn parenthesized_terms_and_groups() {
        let src = "feature R { attr a in [1..5]; attr b in {1,3}; optional A {} }\n\
                   constraint(c1, (R:a) * 110 / 100 >= R:b - -2).\n\
                   constraint(c2, (exist(A) #\\/ R:a = 1) #==> R:b #\\= 3).\n";
        let m = parse(src).unwrap();
        assert_eq!(m.feature(m.root).attributes[0].domain, vec![1, 2, 3, 4, 5]);
        assert_eq!(expr_text(&m.constraints[0].expr), "R:a * 110 / 100 >= R:b - -2");
        assert_eq!(expr_text(&m.constraints[1].expr), "exist(A) \\/ R:a = 1 ==> R:b \\= 3");
    }

    #[test]
    fn modules_link_by_stub() {
        let m = parse(fixtures::ROBOT_MODULAR).unwrap();
        assert_eq!(m.modules.len(), 3);
        assert_eq!(m.features.len(), 8);
        let tool = m.find("Tool").unwrap();
        assert_eq!(m.module_of(tool), Some("Tooling"));
        assert_eq!(m.module_of(m.find("Drill").unwrap()), Some("Tooling"));
        assert_eq!(m.module_of(m.root), Some("Base"));
        let again = parse(&serialize(&m)).unwrap();
        assert_eq!(again.without_spans(), m.without_spans());
    }

    #[test]
    fn domain_text_compresses_runs() {
        assert_eq!(domain_text(&[1, 2, 3, 5, 7, 8]), "{[1..3], 5, 7, 8}");
        assert_eq!(domain_text(&[-2, -1, 0]), "{[-2..0]}");
    }
}
