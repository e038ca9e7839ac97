//! Graphviz DOT interchange.
//!
//! One node per function, edges point from caller to callee. List-valued
//! attributes (`strings`, `ints`, `libcalls`) are `|`-separated, with a
//! literal bar written as `\|` and a literal backslash as `\\`. `num_args` is
//! an integer or `variadic`. Predictive booleans use the attribute names
//! `static`, `extern`, `virtual`, `nested`, `variadic` and `recursive`; a
//! pseudo-inlined function carries `inlined_from="caller|callee"`. The graph
//! side is the graph attribute `side` and defaults to `source`. Attributes
//! outside this vocabulary (labels, shapes) are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{
    FeatureGraph, Function, GraphError, InlineOrigin, NumArgs, PredictiveFeature,
    PredictiveFeatures, Side,
};

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Id(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Equals,
    Semi,
    Comma,
    Arrow,
    UndirectedEdge,
    Colon,
    Plus,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().peekable(),
            line: 1,
        }
    }

    fn err(&self, message: impl Into<String>) -> GraphError {
        GraphError::Dot {
            line: self.line,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next();
        if c == Some('\n') {
            self.line += 1;
        }
        c
    }

    fn tokenize(mut self) -> Result<Vec<(Token, usize)>, GraphError> {
        let mut out = Vec::new();
        let mut line_start = true;
        while let Some(&c) = self.chars.peek() {
            if c == '\n' {
                line_start = true;
                self.bump();
                continue;
            }
            if c.is_whitespace() {
                self.bump();
                continue;
            }
            // `#` lines are C preprocessor output, skipped like graphviz does
            if c == '#' && line_start {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
                continue;
            }
            line_start = false;
            let line = self.line;
            let token = match c {
                '{' => {
                    self.bump();
                    Token::LBrace
                }
                '}' => {
                    self.bump();
                    Token::RBrace
                }
                '[' => {
                    self.bump();
                    Token::LBracket
                }
                ']' => {
                    self.bump();
                    Token::RBracket
                }
                '=' => {
                    self.bump();
                    Token::Equals
                }
                ';' => {
                    self.bump();
                    Token::Semi
                }
                ',' => {
                    self.bump();
                    Token::Comma
                }
                ':' => {
                    self.bump();
                    Token::Colon
                }
                '+' => {
                    self.bump();
                    Token::Plus
                }
                '"' => {
                    self.bump();
                    Token::Id(self.quoted()?)
                }
                '<' => return Err(self.err("HTML-like labels are not supported")),
                '/' => {
                    self.bump();
                    match self.bump() {
                        Some('/') => {
                            while let Some(c) = self.bump() {
                                if c == '\n' {
                                    line_start = true;
                                    break;
                                }
                            }
                        }
                        Some('*') => {
                            let mut prev = '\0';
                            loop {
                                match self.bump() {
                                    Some('/') if prev == '*' => break,
                                    Some(c) => prev = c,
                                    None => return Err(self.err("unterminated comment")),
                                }
                            }
                        }
                        _ => return Err(self.err("unexpected `/`")),
                    }
                    continue;
                }
                '-' => {
                    self.bump();
                    match self.chars.peek() {
                        Some('>') => {
                            self.bump();
                            Token::Arrow
                        }
                        Some('-') => {
                            self.bump();
                            Token::UndirectedEdge
                        }
                        _ => Token::Id(format!("-{}", self.bare())),
                    }
                }
                c if c.is_alphanumeric() || c == '_' || c == '.' || !c.is_ascii() => {
                    Token::Id(self.bare())
                }
                other => return Err(self.err(format!("unexpected character {other:?}"))),
            };
            out.push((token, line));
        }
        Ok(out)
    }

    fn bare(&mut self) -> String {
        let mut s = String::new();
        while let Some(&c) = self.chars.peek() {
            if c.is_alphanumeric() || c == '_' || c == '.' || !c.is_ascii() {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn quoted(&mut self) -> Result<String, GraphError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(self.err("unterminated string")),
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\n') => {}
                    Some(c) => {
                        s.push('\\');
                        s.push(c);
                    }
                    None => return Err(self.err("unterminated string")),
                },
                Some(c) => s.push(c),
            }
        }
    }
}

#[derive(Default)]
struct NodeDecl {
    attrs: BTreeMap<String, String>,
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    nodes: BTreeMap<String, NodeDecl>,
    edges: Vec<(String, String)>,
    graph_attrs: BTreeMap<String, String>,
}

impl Parser {
    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|t| t.1)
            .unwrap_or(1)
    }

    fn err(&self, message: impl Into<String>) -> GraphError {
        GraphError::Dot {
            line: self.line(),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token) -> Result<(), GraphError> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(self.err(format!("expected {want:?}, found {t:?}"))),
            None => Err(self.err(format!("expected {want:?}, found end of input"))),
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token::Id(s)) if s.eq_ignore_ascii_case(kw))
    }

    /// An identifier, including `"a" + "b"` concatenation.
    fn id(&mut self) -> Result<String, GraphError> {
        let mut s = match self.next() {
            Some(Token::Id(s)) => s,
            Some(t) => return Err(self.err(format!("expected identifier, found {t:?}"))),
            None => return Err(self.err("expected identifier, found end of input")),
        };
        while self.peek() == Some(&Token::Plus) {
            self.pos += 1;
            match self.next() {
                Some(Token::Id(more)) => s.push_str(&more),
                _ => return Err(self.err("expected string after `+`")),
            }
        }
        Ok(s)
    }

    fn parse(&mut self) -> Result<(), GraphError> {
        if self.keyword("strict") {
            self.pos += 1;
        }
        if self.keyword("graph") {
            return Err(GraphError::NotDigraph);
        }
        if !self.keyword("digraph") {
            return Err(self.err("expected `digraph`"));
        }
        self.pos += 1;
        if matches!(self.peek(), Some(Token::Id(_))) {
            self.id()?;
        }
        self.expect(Token::LBrace)?;
        self.stmt_list()?;
        self.expect(Token::RBrace)?;
        if self.pos < self.tokens.len() {
            return Err(self.err("trailing input after graph"));
        }
        Ok(())
    }

    fn stmt_list(&mut self) -> Result<(), GraphError> {
        loop {
            match self.peek() {
                Some(Token::RBrace) | None => return Ok(()),
                Some(Token::Semi) => {
                    self.pos += 1;
                }
                Some(Token::LBrace) => return Err(self.err("anonymous subgraphs are not supported")),
                _ => self.stmt()?,
            }
        }
    }

    fn stmt(&mut self) -> Result<(), GraphError> {
        if self.keyword("subgraph") {
            return Err(self.err("subgraphs are not supported"));
        }
        if self.keyword("graph") {
            self.pos += 1;
            let attrs = self.attr_lists("graph")?;
            self.graph_attrs.extend(attrs);
            return Ok(());
        }
        if self.keyword("node") || self.keyword("edge") {
            // Default attribute statements carry no per-function data.
            self.pos += 1;
            self.attr_lists("default")?;
            return Ok(());
        }
        let first = self.node_id()?;
        match self.peek() {
            Some(Token::Equals) => {
                self.pos += 1;
                let value = self.id()?;
                self.graph_attrs.insert(first, value);
            }
            Some(Token::Arrow) => {
                let mut chain = vec![first];
                while self.peek() == Some(&Token::Arrow) {
                    self.pos += 1;
                    chain.push(self.node_id()?);
                }
                if self.peek() == Some(&Token::LBracket) {
                    self.attr_lists("edge")?;
                }
                for id in &chain {
                    self.nodes.entry(id.clone()).or_default();
                }
                for pair in chain.windows(2) {
                    self.edges.push((pair[0].clone(), pair[1].clone()));
                }
            }
            Some(Token::UndirectedEdge) => return Err(GraphError::NotDigraph),
            _ => {
                let attrs = if self.peek() == Some(&Token::LBracket) {
                    self.attr_lists(&first)?
                } else {
                    BTreeMap::new()
                };
                self.nodes.entry(first).or_default().attrs.extend(attrs);
            }
        }
        Ok(())
    }

    fn node_id(&mut self) -> Result<String, GraphError> {
        let id = self.id()?;
        if self.peek() == Some(&Token::Colon) {
            return Err(self.err(format!("ports are not supported (node `{id}`)")));
        }
        Ok(id)
    }

    fn attr_lists(&mut self, owner: &str) -> Result<BTreeMap<String, String>, GraphError> {
        let mut attrs = BTreeMap::new();
        while self.peek() == Some(&Token::LBracket) {
            self.pos += 1;
            loop {
                match self.peek() {
                    Some(Token::RBracket) => {
                        self.pos += 1;
                        break;
                    }
                    Some(Token::Comma) | Some(Token::Semi) => {
                        self.pos += 1;
                    }
                    _ => {
                        let key = self.id()?;
                        if self.peek() != Some(&Token::Equals) {
                            return Err(GraphError::MissingAttribute {
                                function: owner.to_string(),
                                attribute: key,
                            });
                        }
                        self.pos += 1;
                        let value = self.id()?;
                        attrs.insert(key, value);
                    }
                }
            }
        }
        Ok(attrs)
    }
}

/// Splits a `|`-separated attribute list, honouring `\|` and `\\` escapes.
fn split_list(value: &str) -> Vec<String> {
    if value.is_empty() {
        return Vec::new();
    }
    let mut items = Vec::new();
    let mut cur = String::new();
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('|') => cur.push('|'),
                Some('\\') => cur.push('\\'),
                Some(other) => {
                    cur.push('\\');
                    cur.push(other);
                }
                None => cur.push('\\'),
            },
            '|' => items.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    items.push(cur);
    items
}

fn join_list<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    let escaped: Vec<String> = items
        .into_iter()
        .map(|s| s.replace('\\', "\\\\").replace('|', "\\|"))
        .collect();
    // A lone empty element would otherwise read back as an empty list.
    if escaped.len() == 1 && escaped[0].is_empty() {
        return "|".to_string();
    }
    escaped.join("|")
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\\\""))
}

fn parse_bool(function: &str, attribute: &str, value: &str) -> Result<bool, GraphError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(GraphError::BadAttribute {
            function: function.to_string(),
            attribute: attribute.to_string(),
            message: format!("expected true or false, got {other:?}"),
        }),
    }
}

fn build_function(id: &str, decl: &NodeDecl) -> Result<Function, GraphError> {
    let mut f = Function::default();
    let mut predictive: Option<PredictiveFeatures> = None;
    for (key, value) in &decl.attrs {
        match key.as_str() {
            "strings" => f.features.strings = split_list(value).into_iter().collect(),
            "libcalls" => f.features.libcalls = split_list(value).into_iter().collect(),
            "ints" => {
                for item in split_list(value) {
                    let v = item.trim().parse::<i64>().map_err(|e| GraphError::BadAttribute {
                        function: id.to_string(),
                        attribute: key.clone(),
                        message: format!("{item:?}: {e}"),
                    })?;
                    f.features.ints.insert(v);
                }
            }
            "num_args" => {
                f.features.num_args =
                    value.parse::<NumArgs>().map_err(|message| GraphError::BadAttribute {
                        function: id.to_string(),
                        attribute: key.clone(),
                        message,
                    })?
            }
            "inlined_from" => match split_list(value).as_slice() {
                [caller, callee] => {
                    f.pseudo_inline_origin = Some(InlineOrigin {
                        caller: caller.clone(),
                        callee: callee.clone(),
                    })
                }
                _ => {
                    return Err(GraphError::BadAttribute {
                        function: id.to_string(),
                        attribute: key.clone(),
                        message: "expected \"caller|callee\"".to_string(),
                    })
                }
            },
            other => {
                if let Some(feature) = PredictiveFeature::from_name(other) {
                    let flag = parse_bool(id, other, value)?;
                    predictive.get_or_insert_with(Default::default).set(feature, flag);
                }
            }
        }
    }
    f.predictive = predictive;
    Ok(f)
}

pub fn ingest_dot(bytes: &[u8]) -> Result<FeatureGraph, GraphError> {
    let text = std::str::from_utf8(bytes).map_err(|e| GraphError::Dot {
        line: 1,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let tokens = Lexer::new(text).tokenize()?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        nodes: BTreeMap::new(),
        edges: Vec::new(),
        graph_attrs: BTreeMap::new(),
    };
    parser.parse()?;

    let side = match parser.graph_attrs.get("side").map(String::as_str) {
        None | Some("source") => Side::Source,
        Some("binary") => Side::Binary,
        Some(other) => {
            return Err(GraphError::Dot {
                line: 1,
                message: format!("graph attribute side must be source or binary, got {other:?}"),
            })
        }
    };

    let mut functions = BTreeMap::new();
    for (id, decl) in &parser.nodes {
        functions.insert(id.clone(), build_function(id, decl)?);
    }
    for (caller, callee) in &parser.edges {
        let caller_pseudo = functions[caller].is_pseudo();
        let callee_pseudo = functions[callee].is_pseudo();
        if !callee_pseudo {
            functions.get_mut(caller).unwrap().features.callees.insert(callee.clone());
        }
        if !caller_pseudo {
            functions.get_mut(callee).unwrap().features.callers.insert(caller.clone());
        }
    }
    FeatureGraph::from_functions(side, functions)
}

/// Serializes a graph to DOT; `ingest_dot(to_dot(g))` reproduces `g`.
pub fn to_dot(graph: &FeatureGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", quote(&graph.side().to_string()));
    let _ = writeln!(out, "  graph [side={}];", quote(&graph.side().to_string()));
    for (id, f) in graph.iter() {
        let mut attrs: Vec<(String, String)> = Vec::new();
        let feats = &f.features;
        if !feats.strings.is_empty() {
            attrs.push(("strings".into(), join_list(feats.strings.iter().map(String::as_str))));
        }
        if !feats.ints.is_empty() {
            let ints: Vec<String> = feats.ints.iter().map(|v| v.to_string()).collect();
            attrs.push(("ints".into(), ints.join("|")));
        }
        if !feats.libcalls.is_empty() {
            attrs.push(("libcalls".into(), join_list(feats.libcalls.iter().map(String::as_str))));
        }
        attrs.push(("num_args".into(), feats.num_args.to_string()));
        if let Some(p) = &f.predictive {
            for feature in PredictiveFeature::ALL {
                attrs.push((feature.name().into(), p.get(feature).to_string()));
            }
        }
        if let Some(origin) = &f.pseudo_inline_origin {
            attrs.push((
                "inlined_from".into(),
                join_list([origin.caller.as_str(), origin.callee.as_str()]),
            ));
        }
        let rendered: Vec<String> = attrs
            .iter()
            .map(|(k, v)| format!("{k}={}", quote(v)))
            .collect();
        let _ = writeln!(out, "  {} [{}];", quote(id), rendered.join(", "));
    }
    let mut edges = BTreeSet::new();
    for (id, f) in graph.iter() {
        for callee in &f.features.callees {
            edges.insert((id.as_str(), callee.as_str()));
        }
        if f.is_pseudo() {
            for caller in &f.features.callers {
                edges.insert((caller.as_str(), id.as_str()));
            }
        }
    }
    for (a, b) in edges {
        let _ = writeln!(out, "  {} -> {};", quote(a), quote(b));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_attributes_and_edges() {
        let g = ingest_dot(br#"digraph { f [strings="a|b"]; f -> g; }"#).unwrap();
        let f = g.get("f").unwrap();
        let strings: Vec<&str> = f.features.strings.iter().map(String::as_str).collect();
        assert_eq!(strings, ["a", "b"]);
        let callers: Vec<&str> = g.get("g").unwrap().features.callers.iter().map(String::as_str).collect();
        assert_eq!(callers, ["f"]);
    }

    #[test]
    fn edgeless_graph_has_empty_call_sets() {
        let g = ingest_dot(b"digraph G {\n a [num_args=2];\n b [num_args=\"0\"];\n}").unwrap();
        assert_eq!(g.len(), 2);
        for (_, f) in g.iter() {
            assert!(f.features.callers.is_empty() && f.features.callees.is_empty());
        }
    }

    #[test]
    fn variadic_num_args() {
        let g = ingest_dot(br#"digraph { log [num_args="variadic"]; }"#).unwrap();
        assert_eq!(g.get("log").unwrap().features.num_args, NumArgs::Variadic);
    }

    #[test]
    fn escaped_bar_stays_in_one_element() {
        let g = ingest_dot(br#"digraph { f [strings="a\|b|c"]; }"#).unwrap();
        let strings: Vec<&str> = g.get("f").unwrap().features.strings.iter().map(String::as_str).collect();
        assert_eq!(strings, ["a|b", "c"]);
    }

    #[test]
    fn undirected_graph_is_rejected() {
        assert!(matches!(ingest_dot(b"graph { a -- b; }"), Err(GraphError::NotDigraph)));
    }

    #[test]
    fn bad_attribute_is_reported_with_function() {
        let err = ingest_dot(br#"digraph { f [ints="5|x"]; }"#).unwrap_err();
        assert!(matches!(err, GraphError::BadAttribute { ref function, .. } if function == "f"));
        let err = ingest_dot(br#"digraph { f [num_args="many"]; }"#).unwrap_err();
        assert!(matches!(err, GraphError::BadAttribute { ref attribute, .. } if attribute == "num_args"));
        let err = ingest_dot(br#"digraph { f [strings]; }"#).unwrap_err();
        assert!(matches!(err, GraphError::MissingAttribute { .. }));
    }

    #[test]
    fn comments_chains_and_binary_side() {
        let src = b"// extracted\ndigraph bin {\n side=binary; /* block */\n \"0x10\" -> \"0x20\" -> \"0x30\" [color=red];\n \"0x10\" [ints=\"7|1\", label=\"x\"];\n}\n";
        let g = ingest_dot(src).unwrap();
        assert_eq!(g.side(), Side::Binary);
        assert!(g.get("0x20").unwrap().features.callees.contains("0x30"));
        assert_eq!(g.get("0x10").unwrap().features.ints.len(), 1);
    }

    #[test]
    fn split_and_join_handle_empty_elements() {
        assert!(split_list("").is_empty());
        assert_eq!(split_list(&join_list([""])), vec!["".to_string(), "".to_string()]);
        assert_eq!(split_list(&join_list(["", "a"])), vec!["".to_string(), "a".to_string()]);
        assert_eq!(split_list(&join_list(["x\\|y\\"])), vec!["x\\|y\\".to_string()]);
    }
}
