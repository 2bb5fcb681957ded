//! Grammar file reading: declarations for the type signature, the lexical
//! rules, and the base lexical entries.
//!
//! Syntax (`%` starts a comment running to end of line):
//!
//! ```text
//! type NAME sub {CHILD, ...}.            % clauses combinable, any order
//! type NAME intro {FEAT:TYPE, ...}.
//! rule NAME : AVM ==> AVM.
//! entry NAME AVM.
//!
//! AVM ::= TYPE
//!       | #TAG            % reference to a shared value
//!       | #TAG=AVM        % binding occurrence
//!       | (FEAT: AVM, ...)
//!       | TYPE & (FEAT: AVM, ...)
//!       | <AVM, ...>      % list sugar over ne_list/e_list with HD/TL
//!       | <>
//! ```
//!
//! Tags are scoped to one declaration; in a rule they span both sides of
//! `==>`, which is how a rule states explicit in/out sharing. Parsing is
//! purely syntactic; name resolution against the signature happens when AVMs
//! are lowered to feature structures, and asserting a feature at a node
//! narrows the node's type to the feature's introducer.

use std::collections::HashMap;
use std::fmt;

use crate::featstruct::{BNode, Fs, FsBuilder, FsError};
use crate::signature::{Signature, TypeDecl};

/// The bundled example grammar.
pub const BUNDLED_GRAMMAR: &str = include_str!("grammars/paper.lex");

/// Syntax error with 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

/// Error while lowering an AVM against a signature.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LowerError {
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("list syntax requires types `list`, `e_list`, `ne_list` with features `HD`, `TL`")]
    ListSugarUnavailable,
    #[error("{0}")]
    Structure(#[from] FsError),
}

/// Attribute-value matrix term as written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Avm {
    Type(String),
    TagRef(String),
    TagBind(String, Box<Avm>),
    Feats {
        ty: Option<String>,
        feats: Vec<(String, Avm)>,
    },
    List(Vec<Avm>),
}

#[derive(Debug, Clone)]
pub struct RuleSrc {
    pub name: String,
    pub line: u32,
    pub in_avm: Avm,
    pub out_avm: Avm,
}

#[derive(Debug, Clone)]
pub struct EntrySrc {
    pub name: String,
    pub line: u32,
    pub avm: Avm,
}

/// A parsed grammar file: one signature declaration set, an ordered rule
/// list, and a named entry list.
#[derive(Debug, Clone, Default)]
pub struct GrammarFile {
    pub types: Vec<TypeDecl>,
    pub rules: Vec<RuleSrc>,
    pub entries: Vec<EntrySrc>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Tag(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Lt,
    Gt,
    Comma,
    Colon,
    Dot,
    Amp,
    Eq,
    Arrow,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Tag(s) => write!(f, "`#{s}`"),
            Tok::LBrace => write!(f, "`{{`"),
            Tok::RBrace => write!(f, "`}}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::Lt => write!(f, "`<`"),
            Tok::Gt => write!(f, "`>`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Colon => write!(f, "`:`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Amp => write!(f, "`&`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Arrow => write!(f, "`==>`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            col: self.col,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, u32, u32)>, ParseError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c == b'%' {
                    while let Some(c) = self.bump() {
                        if c == b'\n' {
                            break;
                        }
                    }
                } else if c.is_ascii_whitespace() {
                    self.bump();
                } else {
                    break;
                }
            }
            let (line, col) = (self.line, self.col);
            let Some(c) = self.peek() else {
                out.push((Tok::Eof, line, col));
                return Ok(out);
            };
            let tok = match c {
                b'{' => {
                    self.bump();
                    Tok::LBrace
                }
                b'}' => {
                    self.bump();
                    Tok::RBrace
                }
                b'(' => {
                    self.bump();
                    Tok::LParen
                }
                b')' => {
                    self.bump();
                    Tok::RParen
                }
                b'<' => {
                    self.bump();
                    Tok::Lt
                }
                b'>' => {
                    self.bump();
                    Tok::Gt
                }
                b',' => {
                    self.bump();
                    Tok::Comma
                }
                b':' => {
                    self.bump();
                    Tok::Colon
                }
                b'.' => {
                    self.bump();
                    Tok::Dot
                }
                b'&' => {
                    self.bump();
                    Tok::Amp
                }
                b'+' => {
                    self.bump();
                    Tok::Ident("+".into())
                }
                b'-' => {
                    self.bump();
                    Tok::Ident("-".into())
                }
                b'#' => {
                    self.bump();
                    let mut name = String::new();
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == b'_' {
                            name.push(c as char);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    if name.is_empty() {
                        return Err(self.err("expected a tag name after `#`"));
                    }
                    Tok::Tag(name)
                }
                b'=' => {
                    if self.src[self.pos..].starts_with(b"==>") {
                        self.bump();
                        self.bump();
                        self.bump();
                        Tok::Arrow
                    } else {
                        self.bump();
                        Tok::Eq
                    }
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let mut name = String::new();
                    while let Some(c) = self.peek() {
                        if c.is_ascii_alphanumeric() || c == b'_' || c == b'\'' {
                            name.push(c as char);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    Tok::Ident(name)
                }
                other => {
                    return Err(self.err(format!("unexpected character `{}`", other as char)));
                }
            };
            out.push((tok, line, col));
        }
    }
}

struct Parser {
    toks: Vec<(Tok, u32, u32)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> (u32, u32) {
        (self.toks[self.at].1, self.toks[self.at].2)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.pos();
        ParseError {
            line,
            col,
            message: message.into(),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected {}, found {}", want, self.peek())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.err(format!("expected {what}, found {other}"))),
        }
    }

    fn avm(&mut self) -> Result<Avm, ParseError> {
        match self.peek().clone() {
            Tok::Tag(t) => {
                self.bump();
                if *self.peek() == Tok::Eq {
                    self.bump();
                    let sub = self.avm()?;
                    Ok(Avm::TagBind(t, Box::new(sub)))
                } else {
                    Ok(Avm::TagRef(t))
                }
            }
            Tok::LParen => {
                let feats = self.feature_list()?;
                Ok(Avm::Feats { ty: None, feats })
            }
            Tok::Lt => {
                self.bump();
                let mut elems = Vec::new();
                if *self.peek() != Tok::Gt {
                    loop {
                        elems.push(self.avm()?);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                }
                self.expect(Tok::Gt)?;
                Ok(Avm::List(elems))
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::Amp {
                    self.bump();
                    let feats = self.feature_list()?;
                    Ok(Avm::Feats {
                        ty: Some(name),
                        feats,
                    })
                } else {
                    Ok(Avm::Type(name))
                }
            }
            other => Err(self.err(format!("expected an AVM, found {other}"))),
        }
    }

    fn feature_list(&mut self) -> Result<Vec<(String, Avm)>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut feats = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                let f = self.ident("a feature name")?;
                self.expect(Tok::Colon)?;
                let v = self.avm()?;
                feats.push((f, v));
                if *self.peek() == Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen)?;
        Ok(feats)
    }

    fn type_decl(&mut self) -> Result<TypeDecl, ParseError> {
        let name = self.ident("a type name")?;
        let mut decl = TypeDecl {
            name,
            ..TypeDecl::default()
        };
        let mut saw_sub = false;
        let mut saw_intro = false;
        loop {
            match self.peek().clone() {
                Tok::Ident(k) if k == "sub" => {
                    if saw_sub {
                        return Err(self.err("duplicate `sub` clause"));
                    }
                    saw_sub = true;
                    self.bump();
                    self.expect(Tok::LBrace)?;
                    if *self.peek() != Tok::RBrace {
                        loop {
                            decl.subtypes.push(self.ident("a type name")?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RBrace)?;
                }
                Tok::Ident(k) if k == "intro" => {
                    if saw_intro {
                        return Err(self.err("duplicate `intro` clause"));
                    }
                    saw_intro = true;
                    self.bump();
                    self.expect(Tok::LBrace)?;
                    if *self.peek() != Tok::RBrace {
                        loop {
                            let f = self.ident("a feature name")?;
                            self.expect(Tok::Colon)?;
                            let t = self.ident("a type name")?;
                            decl.features.push((f, t));
                            if *self.peek() == Tok::Comma {
                                self.bump();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RBrace)?;
                }
                Tok::Dot => {
                    self.bump();
                    return Ok(decl);
                }
                other => {
                    return Err(self.err(format!("expected `sub`, `intro` or `.`, found {other}")));
                }
            }
        }
    }

    fn grammar(&mut self) -> Result<GrammarFile, ParseError> {
        let mut g = GrammarFile::default();
        loop {
            let (line, _) = self.pos();
            match self.peek().clone() {
                Tok::Eof => return Ok(g),
                Tok::Ident(k) if k == "type" => {
                    self.bump();
                    g.types.push(self.type_decl()?);
                }
                Tok::Ident(k) if k == "rule" => {
                    self.bump();
                    let name = self.ident("a rule name")?;
                    self.expect(Tok::Colon)?;
                    let in_avm = self.avm()?;
                    self.expect(Tok::Arrow)?;
                    let out_avm = self.avm()?;
                    self.expect(Tok::Dot)?;
                    g.rules.push(RuleSrc {
                        name,
                        line,
                        in_avm,
                        out_avm,
                    });
                }
                Tok::Ident(k) if k == "entry" => {
                    self.bump();
                    let name = self.ident("an entry name")?;
                    let avm = self.avm()?;
                    self.expect(Tok::Dot)?;
                    g.entries.push(EntrySrc { name, line, avm });
                }
                other => {
                    return Err(
                        self.err(format!("expected `type`, `rule` or `entry`, found {other}"))
                    );
                }
            }
        }
    }
}

/// Parses a grammar file.
pub fn parse_grammar(text: &str) -> Result<GrammarFile, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    Parser { toks, at: 0 }.grammar()
}

fn lower_into(
    b: &mut FsBuilder<'_>,
    sig: &Signature,
    avm: &Avm,
    tags: &mut HashMap<String, BNode>,
) -> Result<BNode, LowerError> {
    match avm {
        Avm::Type(name) => {
            let ty = sig
                .type_by_name(name)
                .ok_or_else(|| LowerError::UnknownType(name.clone()))?;
            Ok(b.node(ty))
        }
        Avm::TagRef(t) => {
            if let Some(&n) = tags.get(t) {
                Ok(n)
            } else {
                let n = b.node(sig.root());
                tags.insert(t.clone(), n);
                Ok(n)
            }
        }
        Avm::TagBind(t, sub) => {
            let n = lower_into(b, sig, sub, tags)?;
            if let Some(&prev) = tags.get(t) {
                b.merge(prev, n);
                Ok(prev)
            } else {
                tags.insert(t.clone(), n);
                Ok(n)
            }
        }
        Avm::Feats { ty, feats } => {
            let t = match ty {
                Some(name) => sig
                    .type_by_name(name)
                    .ok_or_else(|| LowerError::UnknownType(name.clone()))?,
                None => sig.root(),
            };
            let n = b.node(t);
            for (fname, sub) in feats {
                let f = sig
                    .feat_by_name(fname)
                    .ok_or_else(|| LowerError::UnknownFeature(fname.clone()))?;
                let v = lower_into(b, sig, sub, tags)?;
                b.arc(n, f, v);
            }
            Ok(n)
        }
        Avm::List(elems) => {
            let (e_list, ne_list, hd, tl) = match (
                sig.type_by_name("e_list"),
                sig.type_by_name("ne_list"),
                sig.feat_by_name("HD"),
                sig.feat_by_name("TL"),
            ) {
                (Some(e), Some(ne), Some(hd), Some(tl)) => (e, ne, hd, tl),
                _ => return Err(LowerError::ListSugarUnavailable),
            };
            let mut cur = b.node(e_list);
            for elem in elems.iter().rev() {
                let n = b.node(ne_list);
                let v = lower_into(b, sig, elem, tags)?;
                b.arc(n, hd, v);
                b.arc(n, tl, cur);
                cur = n;
            }
            Ok(cur)
        }
    }
}

/// Lowers one AVM to a single-rooted structure.
pub fn lower_avm(sig: &Signature, avm: &Avm) -> Result<Fs, LowerError> {
    let mut b = FsBuilder::new(sig);
    let mut tags = HashMap::new();
    let root = lower_into(&mut b, sig, avm, &mut tags)?;
    b.push_root(root);
    Ok(b.finish()?)
}

/// Lowers two AVMs sharing one tag scope to a two-rooted structure; used for
/// rule in/out specifications.
pub fn lower_avm_pair(sig: &Signature, a: &Avm, b_avm: &Avm) -> Result<Fs, LowerError> {
    let mut b = FsBuilder::new(sig);
    let mut tags = HashMap::new();
    let ra = lower_into(&mut b, sig, a, &mut tags)?;
    let rb = lower_into(&mut b, sig, b_avm, &mut tags)?;
    b.push_root(ra);
    b.push_root(rb);
    Ok(b.finish()?)
}

/// Parses and lowers a standalone AVM (used by lookup queries and tests).
pub fn parse_avm_text(sig: &Signature, text: &str) -> Result<Fs, String> {
    let toks = Lexer::new(text).tokens().map_err(|e| e.to_string())?;
    let mut p = Parser { toks, at: 0 };
    let avm = p.avm().map_err(|e| e.to_string())?;
    if *p.peek() != Tok::Eof {
        return Err(p.err("trailing input after AVM").to_string());
    }
    lower_avm(sig, &avm).map_err(|e| e.to_string())
}

/// The signature declarations of the bundled grammar.
pub fn paper_signature_decls() -> Vec<TypeDecl> {
    parse_grammar(BUNDLED_GRAMMAR)
        .expect("bundled grammar parses")
        .types
}
