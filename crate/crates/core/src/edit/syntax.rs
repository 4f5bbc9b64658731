//! MiniLang: lexer, recursive-descent parser and syntax tree.
//!
//! ```text
//! function  ::= "fn" IDENT "(" [IDENT ("," IDENT)*] ")" block
//! block     ::= "{" stmt* "}"
//! stmt      ::= IDENT "=" expr ";" | "return" [expr] ";"
//!             | "if" "(" expr ")" block ["else" block] | call ";"
//! expr      ::= or
//! or        ::= and ("||" and)*          and ::= eq ("&&" eq)*
//! eq        ::= rel (("==" | "!=") rel)* rel ::= add (("<" | ">") add)*
//! add       ::= mul (("+" | "-") mul)*   mul ::= unary (("*" | "/") unary)*
//! unary     ::= "!" unary | primary
//! primary   ::= INT | IDENT | call | "(" expr ")"
//! call      ::= IDENT "(" [expr ("," expr)*] ")"
//! ```
//!
//! Every interior node has at least two children, so a node always spans
//! strictly more leaves than any of its children.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::EditError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenKind {
    Keyword,
    Ident,
    Int,
    Punct,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
}

const KEYWORDS: [&str; 4] = ["fn", "return", "if", "else"];

pub fn lex(source: &str) -> Result<Vec<Token>, EditError> {
    let chars: Vec<char> = source.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            TokenKind::Ident
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            TokenKind::Int
        } else {
            let next = chars.get(i + 1).copied();
            i += match (c, next) {
                ('&', Some('&')) | ('|', Some('|')) | ('=', Some('=')) | ('!', Some('=')) => 2,
                ('(' | ')' | '{' | '}' | ',' | ';' | '=' | '+' | '-' | '*' | '/' | '<' | '>' | '!', _) => 1,
                _ => return Err(EditError::Lex { offset: start, found: c }),
            };
            TokenKind::Punct
        };
        let text: String = chars[start..i].iter().collect();
        let kind = if kind == TokenKind::Ident && KEYWORDS.contains(&text.as_str()) {
            TokenKind::Keyword
        } else {
            kind
        };
        tokens.push(Token { kind, text });
    }
    Ok(tokens)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Function,
    Block,
    Assign,
    Return,
    If,
    CallStmt,
    Binary,
    Unary,
    Call,
    Paren,
    Leaf(TokenKind),
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Leaf(k) => write!(f, "{k:?}"),
            other => write!(f, "{other:?}"),
        }
    }
}

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    /// Token text, for leaves only.
    pub text: Option<String>,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    /// Half-open range of leaf (token) indices covered by the node.
    pub span: (usize, usize),
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn leaf_count(&self) -> usize {
        self.span.1 - self.span.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntaxTree {
    nodes: Vec<Node>,
    root: NodeId,
    tokens: Vec<Token>,
    /// Leaf index → node id.
    leaves: Vec<NodeId>,
}

impl SyntaxTree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_node(&self, leaf: usize) -> NodeId {
        self.leaves[leaf]
    }

    /// Ancestors of `id`, starting with `id` itself and ending at the root.
    pub fn ancestors(&self, id: NodeId) -> Ancestors<'_> {
        Ancestors {
            tree: self,
            next: Some(id),
        }
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.ancestors(id).count() - 1
    }

    /// Whitespace-normalized source text of a node.
    pub fn unparse_node(&self, id: NodeId) -> String {
        let (s, e) = self.nodes[id].span;
        join_tokens(&self.tokens[s..e])
    }

    pub fn unparse(&self) -> String {
        self.unparse_node(self.root)
    }
}

pub struct Ancestors<'a> {
    tree: &'a SyntaxTree,
    next: Option<NodeId>,
}

impl Iterator for Ancestors<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let cur = self.next?;
        self.next = self.tree.nodes[cur].parent;
        Some(cur)
    }
}

pub fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.text);
    }
    out
}

pub fn parse(source: &str) -> Result<SyntaxTree, EditError> {
    let tokens = lex(source)?;
    let mut p = Parser {
        tokens: &tokens,
        pos: 0,
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    let root = p.function()?;
    if p.pos != tokens.len() {
        return Err(p.error("end of input"));
    }
    let Parser { nodes, leaves, .. } = p;
    Ok(SyntaxTree {
        nodes,
        root,
        tokens,
        leaves,
    })
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    nodes: Vec<Node>,
    leaves: Vec<NodeId>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_text(&self) -> Option<&str> {
        self.peek().map(|t| t.text.as_str())
    }

    fn peek_at(&self, offset: usize) -> Option<&str> {
        self.tokens.get(self.pos + offset).map(|t| t.text.as_str())
    }

    fn error(&self, expected: &str) -> EditError {
        EditError::Parse {
            position: self.pos,
            expected: expected.to_string(),
            found: self.peek().map(|t| t.text.clone()),
        }
    }

    fn leaf(&mut self) -> NodeId {
        let tok = &self.tokens[self.pos];
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind: NodeKind::Leaf(tok.kind),
            text: Some(tok.text.clone()),
            children: Vec::new(),
            parent: None,
            span: (self.pos, self.pos + 1),
        });
        self.leaves.push(id);
        self.pos += 1;
        id
    }

    fn expect(&mut self, text: &str) -> Result<NodeId, EditError> {
        match self.peek() {
            Some(t) if t.kind != TokenKind::Ident && t.kind != TokenKind::Int && t.text == text => Ok(self.leaf()),
            _ => Err(self.error(&alloc::format!("`{text}`"))),
        }
    }

    fn expect_kind(&mut self, kind: TokenKind, what: &str) -> Result<NodeId, EditError> {
        match self.peek() {
            Some(t) if t.kind == kind => Ok(self.leaf()),
            _ => Err(self.error(what)),
        }
    }

    fn node(&mut self, kind: NodeKind, children: Vec<NodeId>) -> NodeId {
        let id = self.nodes.len();
        let span = (self.nodes[children[0]].span.0, self.nodes[*children.last().expect("non-empty")].span.1);
        for &c in &children {
            self.nodes[c].parent = Some(id);
        }
        self.nodes.push(Node {
            kind,
            text: None,
            children,
            parent: None,
            span,
        });
        id
    }

    fn function(&mut self) -> Result<NodeId, EditError> {
        let mut ch = vec_of(self.expect("fn")?);
        ch.push(self.expect_kind(TokenKind::Ident, "function name")?);
        ch.push(self.expect("(")?);
        if self.peek_text() != Some(")") {
            ch.push(self.expect_kind(TokenKind::Ident, "parameter name")?);
            while self.peek_text() == Some(",") {
                ch.push(self.leaf());
                ch.push(self.expect_kind(TokenKind::Ident, "parameter name")?);
            }
        }
        ch.push(self.expect(")")?);
        ch.push(self.block()?);
        Ok(self.node(NodeKind::Function, ch))
    }

    fn block(&mut self) -> Result<NodeId, EditError> {
        let open_at = self.pos;
        let mut ch = vec_of(self.expect("{")?);
        loop {
            match self.peek() {
                Some(t) if t.kind == TokenKind::Punct && t.text == "}" => {
                    ch.push(self.leaf());
                    return Ok(self.node(NodeKind::Block, ch));
                }
                Some(t) if t.kind == TokenKind::Ident || (t.kind == TokenKind::Keyword && t.text != "else" && t.text != "fn") => {
                    ch.push(self.statement()?);
                }
                _ => {
                    return Err(EditError::UnclosedBrace {
                        open_at,
                        position: self.pos,
                        found: self.peek().map(|t| t.text.clone()),
                    })
                }
            }
        }
    }

    fn statement(&mut self) -> Result<NodeId, EditError> {
        match self.peek_text() {
            Some("return") => {
                let mut ch = vec_of(self.leaf());
                if self.peek_text() != Some(";") {
                    ch.push(self.expr()?);
                }
                ch.push(self.expect(";")?);
                Ok(self.node(NodeKind::Return, ch))
            }
            Some("if") => {
                let mut ch = vec_of(self.leaf());
                ch.push(self.expect("(")?);
                ch.push(self.expr()?);
                ch.push(self.expect(")")?);
                ch.push(self.block()?);
                if self.peek_text() == Some("else") {
                    ch.push(self.leaf());
                    ch.push(self.block()?);
                }
                Ok(self.node(NodeKind::If, ch))
            }
            _ if self.peek_at(1) == Some("=") => {
                let mut ch = vec_of(self.leaf());
                ch.push(self.leaf());
                ch.push(self.expr()?);
                ch.push(self.expect(";")?);
                Ok(self.node(NodeKind::Assign, ch))
            }
            _ if self.peek_at(1) == Some("(") => {
                let call = self.call()?;
                let semi = self.expect(";")?;
                Ok(self.node(NodeKind::CallStmt, alloc::vec![call, semi]))
            }
            _ => Err(self.error("statement")),
        }
    }

    fn expr(&mut self) -> Result<NodeId, EditError> {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> Result<NodeId, EditError> {
        const LEVELS: [&[&str]; 6] = [&["||"], &["&&"], &["==", "!="], &["<", ">"], &["+", "-"], &["*", "/"]];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        while let Some(t) = self.peek() {
            if t.kind != TokenKind::Punct || !LEVELS[level].contains(&t.text.as_str()) {
                break;
            }
            let op = self.leaf();
            let rhs = self.binary(level + 1)?;
            lhs = self.node(NodeKind::Binary, alloc::vec![lhs, op, rhs]);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<NodeId, EditError> {
        if self.peek_text() == Some("!") {
            let op = self.leaf();
            let operand = self.unary()?;
            return Ok(self.node(NodeKind::Unary, alloc::vec![op, operand]));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<NodeId, EditError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Int => Ok(self.leaf()),
            Some(t) if t.kind == TokenKind::Ident => {
                if self.peek_at(1) == Some("(") {
                    self.call()
                } else {
                    Ok(self.leaf())
                }
            }
            Some(t) if t.kind == TokenKind::Punct && t.text == "(" => {
                let mut ch = vec_of(self.leaf());
                ch.push(self.expr()?);
                ch.push(self.expect(")")?);
                Ok(self.node(NodeKind::Paren, ch))
            }
            _ => Err(self.error("expression")),
        }
    }

    fn call(&mut self) -> Result<NodeId, EditError> {
        let mut ch = vec_of(self.expect_kind(TokenKind::Ident, "callee")?);
        ch.push(self.expect("(")?);
        if self.peek_text() != Some(")") {
            ch.push(self.expr()?);
            while self.peek_text() == Some(",") {
                ch.push(self.leaf());
                ch.push(self.expr()?);
            }
        }
        ch.push(self.expect(")")?);
        Ok(self.node(NodeKind::Call, ch))
    }
}

fn vec_of(first: NodeId) -> Vec<NodeId> {
    let mut v = Vec::with_capacity(6);
    v.push(first);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::normalize_whitespace;

    fn shape(tree: &SyntaxTree, id: NodeId) -> String {
        let n = tree.node(id);
        if n.is_leaf() {
            return n.text.clone().unwrap();
        }
        let inner: Vec<String> = n
            .children
            .iter()
            .filter(|&&c| !tree.node(c).is_leaf() || tree.node(c).kind != NodeKind::Leaf(TokenKind::Punct))
            .map(|&c| shape(tree, c))
            .collect();
        alloc::format!("{:?}({})", n.kind, inner.join(","))
    }

    #[test]
    fn parses_return_of_identifier() {
        let t = parse("fn f ( ) { return x ; }").unwrap();
        assert_eq!(shape(&t, t.root()), "Function(fn,f,Block(Return(return,x)))");
        let ret = t.node(t.node(t.node(t.root()).children[4]).children[1]);
        assert_eq!(ret.kind, NodeKind::Return);
        assert_eq!(t.node(ret.children[1]).kind, NodeKind::Leaf(TokenKind::Ident));
    }

    #[test]
    fn parses_empty_body_and_compact_source() {
        assert!(parse("fn f ( ) { }").is_ok());
        let t = parse("fn g(a,b){if(a&&!b){x=a+b*2;}else{log(a);}return;}").unwrap();
        assert_eq!(
            t.unparse(),
            "fn g ( a , b ) { if ( a && ! b ) { x = a + b * 2 ; } else { log ( a ) ; } return ; }"
        );
    }

    #[test]
    fn precedence() {
        let t = parse("fn f ( ) { return a || b && c == d + e * f ; }").unwrap();
        assert_eq!(
            shape(&t, t.root()),
            "Function(fn,f,Block(Return(return,Binary(a,Binary(b,Binary(c,Binary(d,Binary(e,f))))))))"
        );
        let t = parse("fn f ( ) { return a - b - c ; }").unwrap();
        assert_eq!(shape(&t, t.root()), "Function(fn,f,Block(Return(return,Binary(Binary(a,b),c))))");
    }

    #[test]
    fn unclosed_brace_is_reported() {
        let err = parse("fn f ( ) { return ; ;").unwrap_err();
        assert_eq!(
            err,
            EditError::UnclosedBrace {
                open_at: 4,
                position: 7,
                found: Some(";".into())
            }
        );
        assert!(matches!(parse("fn f ( ) { x = 1 ;"), Err(EditError::UnclosedBrace { found: None, .. })));
    }

    #[test]
    fn lex_errors_carry_offsets() {
        assert_eq!(parse("fn f ( ) { x = 1 @ ; }").unwrap_err(), EditError::Lex { offset: 17, found: '@' });
        assert!(matches!(parse("fn f ( ) { } }"), Err(EditError::Parse { position: 6, .. })));
    }

    #[test]
    fn interior_nodes_have_two_or_more_children() {
        let t = parse("fn f ( a ) { if ( ! ( a ) ) { return g ( a ) ; } h ( ) ; }").unwrap();
        for n in t.nodes() {
            assert!(n.is_leaf() || n.children.len() >= 2, "{:?}", n.kind);
            for w in n.children.windows(2) {
                assert_eq!(t.node(w[0]).span.1, t.node(w[1]).span.0);
            }
        }
    }

    #[test]
    fn unparse_is_normalized_source() {
        let src = "fn  f (a)   {\n  y = ( a + 1 ) * 2 ;\n return y; }";
        assert_eq!(parse(src).unwrap().unparse(), normalize_whitespace("fn f ( a ) { y = ( a + 1 ) * 2 ; return y ; }"));
    }
}
