//! Annotated unification grammars and their normal form.
//!
//! A grammar file declares a top category, phrasal rules and lexicon
//! entries:
//!
//! ```text
//! top S.
//! rule 1: S(mod(X, Y)) --> S(X), QM(Y)   @flow arg 1 -> 1, arg 2 -> 2.
//! rule 2: S(Y) --> NP(X), VP(X^Y)        @flow head 2, push 1, closed.
//! lex NP(john) ==> "John".
//! ```
//!
//! Every phrasal rule carries a `@flow` annotation saying how logical-form
//! material moves between the left- and right-hand sides.  There are two
//! shapes:
//!
//! * **Functor-introducing rules** (`arg i -> k`, optionally `thread k`):
//!   the LHS logical form contributes a functor, and argument `i` of that
//!   functor (counting inside any `^` abstractions) is realized by RHS
//!   constituent `k`.  The argument map must be a bijection between the
//!   functor's arguments and the RHS constituents.  `thread k` passes the
//!   LHS pending-argument list through constituent `k`; without it the
//!   rule is closed to pending arguments.
//!
//! * **Argument-filling rules** (`head k`, `push k`…, optionally
//!   `closed`): RHS constituent `k` is the semantic head — its logical
//!   form equals the LHS one under some number of extra `^` abstractions —
//!   and every other RHS constituent is pushed onto the head's
//!   pending-argument list, to be realized later below the head word.
//!   `closed` cuts the pending list off at this rule instead of passing it
//!   further up.
//!
//! [`Grammar::normalize`] rewrites all of this into [`NormalRule`]s over
//! six-field [`Constituent`]s: category, logical form, a word-string
//! difference list, and a pending-argument difference list.  The word
//! lists are wired mechanically from the surface order of the source rule,
//! so pushed constituents keep the exact string positions they had before
//! being moved onto a pending list.

use crate::terms::{
    self, canonical_strings_refs, parse_term_in, strip_hats, Term, TermParseError, VarGen, VarScope,
};
use std::collections::HashMap;
use std::fmt;

/// Functor wrapping pending arguments on argument difference lists:
/// `arg(Cat, Sem, W0, W1)`.
pub const ARG: &str = "arg";
/// Functor wrapping a whole constituent when one is rendered as a term:
/// `c(Cat, Sem, W0, W1, A0, A1)`.
pub const CONSTITUENT: &str = "c";

#[derive(Debug, thiserror::Error)]
pub enum GrammarError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {err}")]
    Term { line: usize, err: TermParseError },
    #[error("rule {id}: {msg}")]
    Flow { id: u32, msg: String },
    #[error("rule {id} is declared twice")]
    DuplicateRule { id: u32 },
    #[error("no `top` declaration")]
    MissingTop,
    #[error("pass-along rules loop through category {0}; such chains never terminate")]
    PassAlongCycle(String),
}

/// How logical-form material flows through a phrasal rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Flow {
    /// `arg i -> k` entries (0-based here: `targets[i]` is the RHS index
    /// realizing argument `i + 1`), plus an optional threaded constituent.
    Functor { targets: Vec<usize>, thread: Option<usize> },
    /// Semantic head index, pushed constituent indices, and whether the
    /// pending list stops here.
    Chain { head: usize, pushes: Vec<usize>, closed: bool },
}

/// A phrasal rule as written: categories and logical forms only; word
/// strings are implicit in the surface order.
#[derive(Debug, Clone)]
pub struct Rule {
    pub id: u32,
    pub lhs: (String, Term),
    pub rhs: Vec<(String, Term)>,
    pub flow: Flow,
}

impl Rule {
    pub fn is_chain(&self) -> bool {
        matches!(self.flow, Flow::Chain { .. })
    }

    /// Index of the semantic head for argument-filling rules.
    pub fn head_index(&self) -> Option<usize> {
        match self.flow {
            Flow::Chain { head, .. } => Some(head),
            Flow::Functor { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LexEntry {
    pub cat: String,
    pub sem: Term,
    pub word: String,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    pub top: String,
    pub rules: Vec<Rule>,
    pub lexicon: Vec<LexEntry>,
}

// ---------------------------------------------------------------------------
// Source parsing
// ---------------------------------------------------------------------------

/// Splits source text into `.`-terminated statements, dropping `#`
/// comments.  Returns each statement with the line it started on.
fn statements(src: &str) -> Result<Vec<(String, usize)>, GrammarError> {
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut start_line = 0;
    for (i, raw) in src.lines().enumerate() {
        let line = strip_comment(raw);
        if buf.trim().is_empty() {
            start_line = i + 1;
        }
        if !line.trim().is_empty() {
            buf.push_str(line);
            buf.push(' ');
        }
        let trimmed = buf.trim_end();
        if let Some(body) = trimmed.strip_suffix('.') {
            out.push((body.to_string(), start_line));
            buf.clear();
        }
    }
    if !buf.trim().is_empty() {
        return Err(GrammarError::Syntax {
            line: start_line,
            msg: "statement does not end with `.`".to_string(),
        });
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
            }
            None => match c {
                '\'' | '"' => quote = Some(c),
                '#' => return &line[..i],
                _ => {}
            },
        }
    }
    line
}

/// Finds `pat` at bracket depth zero and outside quotes; returns the byte
/// index of its first character.
fn find_top_level(s: &str, pat: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut depth = 0i32;
    let mut quote: Option<u8> = None;
    let mut escaped = false;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                } else if c == b'\\' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
            }
            None => match c {
                b'\'' | b'"' => quote = Some(c),
                b'(' | b'[' => depth += 1,
                b')' | b']' => depth -= 1,
                _ => {
                    if depth == 0 && s[i..].starts_with(pat) {
                        return Some(i);
                    }
                }
            },
        }
        i += 1;
    }
    None
}

/// Splits on a top-level single-character separator.
fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut rest = s;
    let mut offset = 0;
    while let Some(i) = find_top_level(&s[offset..], &sep.to_string()) {
        parts.push(&rest[..i]);
        rest = &rest[i + sep.len_utf8()..];
        offset += i + sep.len_utf8();
    }
    parts.push(rest);
    parts
}

impl Grammar {
    pub fn parse(src: &str) -> Result<Grammar, GrammarError> {
        let mut top = None;
        let mut rules: Vec<Rule> = Vec::new();
        let mut lexicon = Vec::new();
        let mut vg = VarGen::new();
        for (stmt, line) in statements(src)? {
            let stmt = stmt.trim();
            let (kw, rest) = match stmt.find(char::is_whitespace) {
                Some(i) => (&stmt[..i], stmt[i..].trim()),
                None => (stmt, ""),
            };
            match kw {
                "top" => {
                    if top.is_some() {
                        return Err(GrammarError::Syntax {
                            line,
                            msg: "`top` declared twice".to_string(),
                        });
                    }
                    if rest.is_empty()
                        || !rest.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                    {
                        return Err(GrammarError::Syntax {
                            line,
                            msg: "expected `top <Category>.`".to_string(),
                        });
                    }
                    top = Some(rest.to_string());
                }
                "rule" => {
                    let rule = parse_rule(rest, line, &mut vg)?;
                    if rules.iter().any(|r| r.id == rule.id) {
                        return Err(GrammarError::DuplicateRule { id: rule.id });
                    }
                    rules.push(rule);
                }
                "lex" => lexicon.push(parse_lex(rest, line, &mut vg)?),
                _ => {
                    return Err(GrammarError::Syntax {
                        line,
                        msg: format!("unknown statement `{kw}`"),
                    })
                }
            }
        }
        let g = Grammar { top: top.ok_or(GrammarError::MissingTop)?, rules, lexicon };
        g.check_flow()?;
        g.check_pass_along()?;
        Ok(g)
    }
}

fn parse_constituent(
    s: &str,
    line: usize,
    scope: &mut VarScope,
) -> Result<(String, Term), GrammarError> {
    let s = s.trim();
    let open = s.find('(').ok_or_else(|| GrammarError::Syntax {
        line,
        msg: format!("expected `Cat(sem)`, got `{s}`"),
    })?;
    let cat = &s[..open];
    if cat.is_empty()
        || !cat.chars().next().unwrap().is_ascii_alphabetic()
        || !cat.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        || !s.ends_with(')')
    {
        return Err(GrammarError::Syntax { line, msg: format!("expected `Cat(sem)`, got `{s}`") });
    }
    let sem = parse_term_in(&s[open + 1..s.len() - 1], scope)
        .map_err(|err| GrammarError::Term { line, err })?;
    Ok((cat.to_string(), sem))
}

fn parse_rule(body: &str, line: usize, vg: &mut VarGen) -> Result<Rule, GrammarError> {
    let flow_at = find_top_level(body, "@flow").ok_or_else(|| GrammarError::Syntax {
        line,
        msg: "rule has no `@flow` annotation".to_string(),
    })?;
    let (rule_part, flow_part) = (body[..flow_at].trim(), body[flow_at + 5..].trim());

    let colon = rule_part
        .find(':')
        .ok_or_else(|| GrammarError::Syntax {
            line, msg: "expected `rule <id>: …`".to_string()
        })?;
    let id: u32 = rule_part[..colon].trim().parse().map_err(|_| GrammarError::Syntax {
        line,
        msg: format!("bad rule id `{}`", rule_part[..colon].trim()),
    })?;
    let rest = &rule_part[colon + 1..];
    let arrow = find_top_level(rest, "-->").ok_or_else(|| GrammarError::Syntax {
        line,
        msg: "expected `-->` between rule sides".to_string(),
    })?;

    let mut scope = VarScope::new(vg);
    let lhs = parse_constituent(&rest[..arrow], line, &mut scope)?;
    let mut rhs = Vec::new();
    for part in split_top_level(&rest[arrow + 3..], ',') {
        rhs.push(parse_constituent(part, line, &mut scope)?);
    }
    if rhs.is_empty() {
        return Err(GrammarError::Syntax {
            line,
            msg: "rule has an empty right-hand side".to_string(),
        });
    }

    let flow = parse_flow(flow_part, id, line, rhs.len())?;
    Ok(Rule { id, lhs, rhs, flow })
}

fn parse_flow(s: &str, id: u32, line: usize, n_rhs: usize) -> Result<Flow, GrammarError> {
    let mut args: Vec<(usize, usize)> = Vec::new();
    let mut thread = None;
    let mut head = None;
    let mut pushes = Vec::new();
    let mut closed = false;
    let bad = |msg: String| GrammarError::Syntax { line, msg };
    let index = |tok: &str, what: &str| -> Result<usize, GrammarError> {
        let k: usize = tok
            .parse()
            .map_err(|_| GrammarError::Syntax { line, msg: format!("bad {what} `{tok}`") })?;
        if k == 0 || k > n_rhs {
            return Err(GrammarError::Syntax {
                line,
                msg: format!("{what} {k} out of range 1..={n_rhs}"),
            });
        }
        Ok(k - 1)
    };
    for item in split_top_level(s, ',') {
        let toks: Vec<&str> = item.split_whitespace().collect();
        match toks.as_slice() {
            ["arg", i, "->", k] => {
                let i: usize = i.parse().map_err(|_| GrammarError::Syntax {
                    line,
                    msg: format!("bad argument index `{i}`"),
                })?;
                if i == 0 {
                    return Err(bad("argument indices start at 1".to_string()));
                }
                args.push((i - 1, index(k, "constituent index")?));
            }
            ["thread", k] => thread = Some(index(k, "constituent index")?),
            ["head", k] => head = Some(index(k, "constituent index")?),
            ["push", k] => pushes.push(index(k, "constituent index")?),
            ["closed"] => closed = true,
            _ => return Err(bad(format!("unrecognized @flow item `{}`", item.trim()))),
        }
    }
    match (head, args.is_empty()) {
        (Some(head), true) => {
            if thread.is_some() {
                return Err(GrammarError::Flow {
                    id,
                    msg: "`thread` only applies to functor-introducing rules".to_string(),
                });
            }
            Ok(Flow::Chain { head, pushes, closed })
        }
        (None, false) => {
            if closed {
                return Err(GrammarError::Flow {
                    id,
                    msg: "`closed` only applies to argument-filling rules".to_string(),
                });
            }
            let mut targets = vec![usize::MAX; args.len()];
            for (i, k) in args {
                if i >= targets.len() || targets[i] != usize::MAX {
                    return Err(GrammarError::Flow {
                        id,
                        msg: "argument map must cover arguments 1..n exactly once".to_string(),
                    });
                }
                targets[i] = k;
            }
            Ok(Flow::Functor { targets, thread })
        }
        (Some(_), false) => {
            Err(GrammarError::Flow { id, msg: "@flow mixes `head` with `arg`".to_string() })
        }
        (None, true) => Err(GrammarError::Flow {
            id,
            msg: "@flow needs either `head` or `arg` items".to_string(),
        }),
    }
}

fn parse_lex(body: &str, line: usize, vg: &mut VarGen) -> Result<LexEntry, GrammarError> {
    let arrow = find_top_level(body, "==>").ok_or_else(|| GrammarError::Syntax {
        line,
        msg: "expected `lex Cat(sem) ==> \"word\"`".to_string(),
    })?;
    let mut scope = VarScope::new(vg);
    let (cat, sem) = parse_constituent(&body[..arrow], line, &mut scope)?;
    let word_part = body[arrow + 3..].trim();
    let word = parse_quoted_word(word_part).ok_or_else(|| GrammarError::Syntax {
        line,
        msg: "expected a double-quoted word".to_string(),
    })?;
    if word.is_empty() || word.chars().any(char::is_whitespace) {
        return Err(GrammarError::Syntax {
            line,
            msg: "a lexicon entry carries exactly one word".to_string(),
        });
    }
    if strip_hats(&sem).0.is_var() {
        return Err(GrammarError::Syntax {
            line,
            msg: "a lexicon entry must introduce a functor, not a bare variable".to_string(),
        });
    }
    Ok(LexEntry { cat, sem, word })
}

fn parse_quoted_word(s: &str) -> Option<String> {
    let mut cs = s.chars();
    if cs.next() != Some('"') {
        return None;
    }
    let mut word = String::new();
    loop {
        match cs.next()? {
            '"' => break,
            '\\' => word.push(cs.next()?),
            c => word.push(c),
        }
    }
    cs.next().is_none().then_some(word)
}

// ---------------------------------------------------------------------------
// Flow validation
// ---------------------------------------------------------------------------

impl Grammar {
    fn check_flow(&self) -> Result<(), GrammarError> {
        for rule in &self.rules {
            let err = |msg: String| GrammarError::Flow { id: rule.id, msg };
            match &rule.flow {
                Flow::Functor { targets, thread: _ } => {
                    let (body, _) = strip_hats(&rule.lhs.1);
                    let args = match body {
                        Term::Var(_) => {
                            return Err(err(
                                "functor-introducing rule needs a functor in its logical form"
                                    .to_string(),
                            ))
                        }
                        Term::App(_, args) => args,
                    };
                    if args.len() != rule.rhs.len() || targets.len() != args.len() {
                        return Err(err(format!(
                            "logical form has {} argument(s) but the rule has {} constituent(s); \
                             the argument map must pair them off one-to-one",
                            args.len(),
                            rule.rhs.len()
                        )));
                    }
                    let mut used = vec![false; rule.rhs.len()];
                    for (i, &k) in targets.iter().enumerate() {
                        if used[k] {
                            return Err(err(
                                "argument map sends two arguments to one constituent".to_string()
                            ));
                        }
                        used[k] = true;
                        let (realized, _) = strip_hats(&rule.rhs[k].1);
                        if *realized != args[i] {
                            return Err(err(format!(
                                "constituent {} does not realize argument {}",
                                k + 1,
                                i + 1
                            )));
                        }
                    }
                }
                Flow::Chain { head, pushes, closed: _ } => {
                    let mut seen = vec![false; rule.rhs.len()];
                    seen[*head] = true;
                    for &p in pushes {
                        if seen[p] {
                            return Err(err(
                                "a constituent is pushed twice (or is the head)".to_string()
                            ));
                        }
                        seen[p] = true;
                    }
                    if seen.iter().any(|s| !s) {
                        return Err(err(
                            "every constituent besides the head must be pushed".to_string()
                        ));
                    }
                    if !is_head_of(&rule.rhs[*head].1, &rule.lhs.1) {
                        return Err(err(format!(
                            "constituent {} is not a semantic head: stripping `^` abstractions \
                             never reaches the left-hand-side logical form",
                            head + 1
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Rejects cycles among pure pass-along rules (argument-filling rules
    /// that push nothing), which would make chains arbitrarily long.
    fn check_pass_along(&self) -> Result<(), GrammarError> {
        let mut edges: HashMap<&str, Vec<&str>> = HashMap::new();
        for rule in &self.rules {
            if let Flow::Chain { head, pushes, .. } = &rule.flow {
                if pushes.is_empty() {
                    edges.entry(&rule.lhs.0).or_default().push(&rule.rhs[*head].0);
                }
            }
        }
        // Depth-first search with an explicit on-path mark.
        fn visit<'a>(
            cat: &'a str,
            edges: &HashMap<&'a str, Vec<&'a str>>,
            on_path: &mut Vec<&'a str>,
            done: &mut Vec<&'a str>,
        ) -> Option<String> {
            if done.contains(&cat) {
                return None;
            }
            if on_path.contains(&cat) {
                return Some(cat.to_string());
            }
            on_path.push(cat);
            for next in edges.get(cat).into_iter().flatten() {
                if let Some(c) = visit(next, edges, on_path, done) {
                    return Some(c);
                }
            }
            on_path.pop();
            done.push(cat);
            None
        }
        let cats: Vec<&str> = edges.keys().copied().collect();
        let mut done = Vec::new();
        for cat in cats {
            if let Some(c) = visit(cat, &edges, &mut Vec::new(), &mut done) {
                return Err(GrammarError::PassAlongCycle(c));
            }
        }
        Ok(())
    }
}

/// True when stripping zero or more `^` abstractions from `head` reaches
/// exactly `lhs` (same term, same variables).
pub fn is_head_of(head: &Term, lhs: &Term) -> bool {
    let mut t = head;
    loop {
        if t == lhs {
            return true;
        }
        match t {
            Term::App(f, args) if f == terms::HAT && args.len() == 2 => t = &args[1],
            _ => return false,
        }
    }
}

// ---------------------------------------------------------------------------
// Normal form
// ---------------------------------------------------------------------------

/// A constituent in normal form: category, logical form, the word-string
/// difference list `w0 − w1`, and the pending-argument difference list
/// `a0 − a1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constituent {
    pub cat: String,
    pub sem: Term,
    pub w0: Term,
    pub w1: Term,
    pub a0: Term,
    pub a1: Term,
}

impl Constituent {
    /// A constituent with empty pending lists.
    pub fn closed(cat: &str, sem: Term, w0: Term, w1: Term) -> Constituent {
        Constituent { cat: cat.to_string(), sem, w0, w1, a0: Term::nil(), a1: Term::nil() }
    }

    /// Renders the constituent as a plain term `c(Cat, Sem, W0, W1, A0, A1)`
    /// so the term machinery (unification, canonical printing) applies.
    pub fn to_term(&self) -> Term {
        Term::app(
            CONSTITUENT,
            vec![
                Term::atom(&self.cat),
                self.sem.clone(),
                self.w0.clone(),
                self.w1.clone(),
                self.a0.clone(),
                self.a1.clone(),
            ],
        )
    }

    pub fn from_term(t: &Term) -> Option<Constituent> {
        match t {
            Term::App(f, args) if f == CONSTITUENT && args.len() == 6 => {
                let cat = match &args[0] {
                    Term::App(c, a) if a.is_empty() => c.clone(),
                    _ => return None,
                };
                Some(Constituent {
                    cat,
                    sem: args[1].clone(),
                    w0: args[2].clone(),
                    w1: args[3].clone(),
                    a0: args[4].clone(),
                    a1: args[5].clone(),
                })
            }
            _ => None,
        }
    }

    /// The pending-argument entry `arg(Cat, Sem, W0, W1)` for a constituent
    /// moved onto an argument list.
    pub fn arg_term(cat: &str, sem: Term, w0: Term, w1: Term) -> Term {
        Term::app(ARG, vec![Term::atom(cat), sem, w0, w1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Functor,
    Chain,
}

/// Where a normal-form rule came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleOrigin {
    /// Phrasal rule with the given id.
    Rule(u32),
    /// Lexicon entry by position.
    Lex(usize),
}

impl fmt::Display for RuleOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleOrigin::Rule(id) => write!(f, "rule {id}"),
            RuleOrigin::Lex(i) => write!(f, "lexicon entry {}", i + 1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormalRule {
    pub origin: RuleOrigin,
    pub kind: RuleKind,
    pub lhs: Constituent,
    /// Functor-introducing rules list one constituent per logical-form
    /// argument, in argument order; argument-filling rules list exactly
    /// the semantic head.
    pub rhs: Vec<Constituent>,
}

impl NormalRule {
    pub fn to_terms(&self) -> Vec<Term> {
        let mut ts = vec![self.lhs.to_term()];
        ts.extend(self.rhs.iter().map(|c| c.to_term()));
        ts
    }
}

impl fmt::Display for NormalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ts = self.to_terms();
        let refs: Vec<&Term> = ts.iter().collect();
        let strs = canonical_strings_refs(&refs);
        write!(f, "{} --> {}", strs[0], strs[1..].join(", "))
    }
}

/// A lexicon entry in normal form:
/// `⟨cat, sem, [word|W], W, A, ε⟩` deriving the word and then everything
/// on its pending list `A`.
#[derive(Debug, Clone)]
pub struct NormalLex {
    pub index: usize,
    pub word: String,
    pub entry: Constituent,
}

#[derive(Debug, Clone)]
pub struct NormalGrammar {
    pub top: String,
    pub rules: Vec<NormalRule>,
    pub lexical: Vec<NormalLex>,
}

impl NormalGrammar {
    pub fn rule(&self, origin: RuleOrigin) -> Option<&NormalRule> {
        self.rules.iter().find(|r| r.origin == origin)
    }
}

impl Grammar {
    /// Word-string difference-list wiring for a rule: the LHS spans
    /// `S0 − Sn` and source constituent `k` spans `S(k-1) − Sk`.
    fn spans(n_rhs: usize, vg: &mut VarGen) -> Vec<Term> {
        (0..=n_rhs).map(|_| vg.fresh_var()).collect()
    }

    pub fn normalize(&self) -> NormalGrammar {
        let mut rules = Vec::new();
        for rule in &self.rules {
            let mut refs: Vec<&Term> = vec![&rule.lhs.1];
            refs.extend(rule.rhs.iter().map(|(_, sem)| sem));
            let mut vg = VarGen::above(&refs);
            let spans = Grammar::spans(rule.rhs.len(), &mut vg);
            let n = rule.rhs.len();
            match &rule.flow {
                Flow::Functor { targets, thread } => {
                    let (la0, la1) = if thread.is_some() {
                        (vg.fresh_var(), vg.fresh_var())
                    } else {
                        (Term::nil(), Term::nil())
                    };
                    let lhs = Constituent {
                        cat: rule.lhs.0.clone(),
                        sem: rule.lhs.1.clone(),
                        w0: spans[0].clone(),
                        w1: spans[n].clone(),
                        a0: la0.clone(),
                        a1: la1.clone(),
                    };
                    let rhs = targets
                        .iter()
                        .map(|&k| {
                            let (a0, a1) = if *thread == Some(k) {
                                (la0.clone(), la1.clone())
                            } else {
                                (Term::nil(), Term::nil())
                            };
                            Constituent {
                                cat: rule.rhs[k].0.clone(),
                                sem: rule.rhs[k].1.clone(),
                                w0: spans[k].clone(),
                                w1: spans[k + 1].clone(),
                                a0,
                                a1,
                            }
                        })
                        .collect();
                    rules.push(NormalRule {
                        origin: RuleOrigin::Rule(rule.id),
                        kind: RuleKind::Functor,
                        lhs,
                        rhs,
                    });
                }
                Flow::Chain { head, pushes, closed } => {
                    let (la0, la1) = if *closed {
                        (Term::nil(), Term::nil())
                    } else {
                        (vg.fresh_var(), vg.fresh_var())
                    };
                    let lhs = Constituent {
                        cat: rule.lhs.0.clone(),
                        sem: rule.lhs.1.clone(),
                        w0: spans[0].clone(),
                        w1: spans[n].clone(),
                        a0: la0.clone(),
                        a1: la1.clone(),
                    };
                    let mut pending = la0;
                    for &p in pushes.iter().rev() {
                        pending = Term::cons(
                            Constituent::arg_term(
                                &rule.rhs[p].0,
                                rule.rhs[p].1.clone(),
                                spans[p].clone(),
                                spans[p + 1].clone(),
                            ),
                            pending,
                        );
                    }
                    let head_c = Constituent {
                        cat: rule.rhs[*head].0.clone(),
                        sem: rule.rhs[*head].1.clone(),
                        w0: spans[*head].clone(),
                        w1: spans[*head + 1].clone(),
                        a0: pending,
                        a1: la1,
                    };
                    rules.push(NormalRule {
                        origin: RuleOrigin::Rule(rule.id),
                        kind: RuleKind::Chain,
                        lhs,
                        rhs: vec![head_c],
                    });
                }
            }
        }
        let lexical = self
            .lexicon
            .iter()
            .enumerate()
            .map(|(index, e)| {
                let mut vg = VarGen::above(&[&e.sem]);
                let w = vg.fresh_var();
                let a = vg.fresh_var();
                NormalLex {
                    index,
                    word: e.word.clone(),
                    entry: Constituent {
                        cat: e.cat.clone(),
                        sem: e.sem.clone(),
                        w0: Term::cons(Term::atom(&e.word), w.clone()),
                        w1: w,
                        a0: a,
                        a1: Term::nil(),
                    },
                }
            })
            .collect();
        NormalGrammar { top: self.top.clone(), rules, lexical }
    }
}

#[cfg(test)]
pub(crate) const QUESTIONS: &str = include_str!("../../../grammars/questions.gram");

#[cfg(test)]
mod tests {
    use super::*;

    fn questions() -> Grammar {
        Grammar::parse(QUESTIONS).unwrap()
    }

    #[test]
    fn parses_the_sample_grammar() {
        let g = questions();
        assert_eq!(g.top, "S");
        assert_eq!(g.rules.len(), 7);
        assert_eq!(g.lexicon.len(), 8);
        let chains: Vec<u32> = g.rules.iter().filter(|r| r.is_chain()).map(|r| r.id).collect();
        assert_eq!(chains, vec![2, 5, 6, 7]);
    }

    #[test]
    fn normalizes_functor_rules() {
        let g = questions();
        let n = g.normalize();
        let r1 = n.rule(RuleOrigin::Rule(1)).unwrap();
        assert_eq!(
            r1.to_string(),
            "c('S', mod(V1, V2), V3, V4, [], []) --> \
             c('S', V1, V3, V5, [], []), c('QM', V2, V5, V4, [], [])"
        );
        // Threaded rules pass the pending lists through the first
        // constituent; the adjunct is closed.
        let r3 = n.rule(RuleOrigin::Rule(3)).unwrap();
        assert_eq!(
            r3.to_string(),
            "c('VP', V1^mod(V2, V3), V4, V5, V6, V7) --> \
             c('VP', V1^V2, V4, V8, V6, V7), c('PP', V3, V8, V5, [], [])"
        );
    }

    #[test]
    fn normalizes_chain_rules() {
        let g = questions();
        let n = g.normalize();
        // Subject NP keeps its surface span (before the VP's words) while
        // moving onto the VP's pending list; the rule is closed.
        let r2 = n.rule(RuleOrigin::Rule(2)).unwrap();
        assert_eq!(
            r2.to_string(),
            "c('S', V1, V2, V3, [], []) --> \
             c('VP', V4^V1, V5, V3, [arg('NP', V4, V2, V5)], [])"
        );
        // Object NP spans the words after the verb; pending lists thread.
        let r6 = n.rule(RuleOrigin::Rule(6)).unwrap();
        assert_eq!(
            r6.to_string(),
            "c('VP', V1, V2, V3, V4, V5) --> \
             c('Vt', V6^V1, V2, V7, [arg('NP', V6, V7, V3)|V4], V5)"
        );
        let r5 = n.rule(RuleOrigin::Rule(5)).unwrap();
        assert_eq!(r5.to_string(), "c('VP', V1, V2, V3, V4, V5) --> c('Vi', V1, V2, V3, V4, V5)");
    }

    #[test]
    fn normalizes_lexicon() {
        let g = questions();
        let n = g.normalize();
        let john = &n.lexical[0];
        assert_eq!(john.word, "John");
        assert_eq!(
            terms::canonical_string(&john.entry.to_term()),
            "c('NP', john, ['John'|V1], V1, _, [])"
        );
        let sees = n.lexical.iter().find(|l| l.word == "sees").unwrap();
        assert_eq!(
            terms::canonical_string(&sees.entry.to_term()),
            "c('Vt', V1^V2^see(V1, V2), [sees|V3], V3, _, [])"
        );
    }

    #[test]
    fn constituent_term_round_trip() {
        let g = questions();
        let n = g.normalize();
        for rule in &n.rules {
            let t = rule.lhs.to_term();
            assert_eq!(Constituent::from_term(&t).unwrap(), rule.lhs);
        }
    }

    #[test]
    fn rejects_missing_flow() {
        let src = "top S.\nrule 1: S(f(X)) --> NP(X).\n";
        let err = Grammar::parse(src).unwrap_err();
        assert!(err.to_string().contains("@flow"), "{err}");
    }

    #[test]
    fn rejects_bad_argument_maps() {
        let base = "top S.\n";
        for (flow, what) in [
            ("arg 1 -> 1, arg 2 -> 1", "two arguments to one constituent"),
            ("arg 1 -> 1", "one-to-one"),
            ("arg 1 -> 1, arg 1 -> 2", "exactly once"),
            ("arg 1 -> 2, arg 2 -> 1", "does not realize"),
        ] {
            let src = format!("{base}rule 1: S(f(X, Y)) --> NP(X), NP(Y) @flow {flow}.\n");
            let err = Grammar::parse(&src).unwrap_err();
            assert!(err.to_string().contains(what), "{flow}: {err}");
        }
    }

    #[test]
    fn rejects_non_head_chains() {
        let src = "top S.\nrule 1: S(Y) --> NP(X), VP(X^Z) @flow head 2, push 1.\n";
        let err = Grammar::parse(src).unwrap_err();
        assert!(err.to_string().contains("semantic head"), "{err}");
    }

    #[test]
    fn rejects_pass_along_cycles() {
        let src = "top S.\n\
                   rule 1: S(X) --> VP(X) @flow head 1.\n\
                   rule 2: VP(X) --> S(X) @flow head 1.\n\
                   lex S(a) ==> \"a\".\n";
        let err = Grammar::parse(src).unwrap_err();
        assert!(matches!(err, GrammarError::PassAlongCycle(_)), "{err}");
    }

    #[test]
    fn rejects_duplicate_ids_and_double_top() {
        let src = "top S.\n\
                   rule 1: S(f(X)) --> NP(X) @flow arg 1 -> 1.\n\
                   rule 1: S(g(X)) --> NP(X) @flow arg 1 -> 1.\n";
        assert!(matches!(Grammar::parse(src).unwrap_err(), GrammarError::DuplicateRule { id: 1 }));
        assert!(Grammar::parse("top S.\ntop T.\n").is_err());
        assert!(matches!(Grammar::parse("").unwrap_err(), GrammarError::MissingTop));
    }

    #[test]
    fn statements_span_lines_and_comments_strip() {
        let src = "top S.  # the start symbol\n\
                   rule 1: S(mod(X, Y)) -->\n\
                   \u{20}   S(X), QM(Y)\n\
                   \u{20}   @flow arg 1 -> 1, arg 2 -> 2.\n\
                   lex QM(ynq) ==> \"?\".  # '#' in comments is fine\n";
        let g = Grammar::parse(src).unwrap();
        assert_eq!(g.rules.len(), 1);
        assert_eq!(g.lexicon[0].word, "?");
    }

    #[test]
    fn error_lines_point_at_the_statement() {
        let src = "top S.\n\nrule 1: S(f(X) --> NP(X) @flow arg 1 -> 1.\n";
        match Grammar::parse(src).unwrap_err() {
            GrammarError::Syntax { line, .. } | GrammarError::Term { line, .. } => {
                assert_eq!(line, 3)
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
