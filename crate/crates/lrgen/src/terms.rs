//! First-order terms: the data everything else in this crate is made of.
//!
//! Logical forms, constituents, pending-argument lists and lookahead keys
//! are all [`Term`]s.  The module provides unification (with an occurs
//! check), one-directional subsumption, variant equality, renaming apart,
//! depth-bounded truncation, a parser and a canonical printer.
//!
//! Variables are plain numeric ids.  Binding environments are functional:
//! [`unify`] returns a fresh [`Bindings`] on success and leaves its inputs
//! untouched, so backtracking search can simply drop an environment to
//! undo it.

use std::collections::HashMap;
use std::fmt;

/// Functor used for lambda-style abstraction, written infix: `X^sleep(X)`
/// is `App("^", [Var(x), sleep(x)])`.  Right-associative.
pub const HAT: &str = "^";
/// List constructor functor; `[a|B]` is `App(".", [a, B])`.
pub const CONS: &str = ".";
/// The empty list atom.
pub const NIL: &str = "[]";

/// A first-order term: a variable or a functor applied to arguments.
/// Atoms are zero-argument applications.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(u32),
    App(String, Vec<Term>),
}

impl Term {
    pub fn atom(name: &str) -> Term {
        Term::App(name.to_string(), Vec::new())
    }

    pub fn app(name: &str, args: Vec<Term>) -> Term {
        Term::App(name.to_string(), args)
    }

    pub fn nil() -> Term {
        Term::atom(NIL)
    }

    pub fn cons(head: Term, tail: Term) -> Term {
        Term::app(CONS, vec![head, tail])
    }

    /// Builds a proper list terminated by `[]`.
    pub fn list(items: Vec<Term>) -> Term {
        let mut t = Term::nil();
        for item in items.into_iter().rev() {
            t = Term::cons(item, t);
        }
        t
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, Term::App(f, args) if f == NIL && args.is_empty())
    }

    /// Functor name and arity, if this is an application.
    pub fn functor(&self) -> Option<(&str, usize)> {
        match self {
            Term::Var(_) => None,
            Term::App(f, args) => Some((f, args.len())),
        }
    }

    pub fn as_cons(&self) -> Option<(&Term, &Term)> {
        match self {
            Term::App(f, args) if f == CONS && args.len() == 2 => Some((&args[0], &args[1])),
            _ => None,
        }
    }

    /// Reads a proper list back into a vector; `None` if the spine is not
    /// `.`/2 cells ending in `[]`.
    pub fn proper_list(&self) -> Option<Vec<&Term>> {
        let mut items = Vec::new();
        let mut t = self;
        loop {
            if t.is_nil() {
                return Some(items);
            }
            let (h, rest) = t.as_cons()?;
            items.push(h);
            t = rest;
        }
    }

    /// All variable ids in depth-first, left-to-right order, with repeats.
    pub fn var_occurrences(&self, out: &mut Vec<u32>) {
        match self {
            Term::Var(v) => out.push(*v),
            Term::App(_, args) => {
                for a in args {
                    a.var_occurrences(out);
                }
            }
        }
    }

    pub fn vars(&self) -> Vec<u32> {
        let mut occ = Vec::new();
        self.var_occurrences(&mut occ);
        let mut seen = Vec::new();
        for v in occ {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        seen
    }

    /// Parses a term in a fresh variable scope.  Occurrences of the same
    /// variable name share an id within this one call; `_` is fresh at
    /// every occurrence.
    pub fn parse(input: &str) -> Result<Term, TermParseError> {
        let mut vg = VarGen::new();
        let mut scope = VarScope::new(&mut vg);
        parse_term_in(input, &mut scope)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_strings(std::slice::from_ref(self))[0])
    }
}

/// Strips leading `^` abstractions, returning the body and how many were
/// removed.  `X^Y^see(X,Y)` gives `(see(X,Y), 2)`.
pub fn strip_hats(t: &Term) -> (&Term, usize) {
    let mut t = t;
    let mut n = 0;
    while let Term::App(f, args) = t {
        if f == HAT && args.len() == 2 {
            t = &args[1];
            n += 1;
        } else {
            break;
        }
    }
    (t, n)
}

/// Supply of fresh variable ids.
#[derive(Debug, Clone, Default)]
pub struct VarGen {
    next: u32,
}

impl VarGen {
    pub fn new() -> VarGen {
        VarGen::default()
    }

    /// Starts above every id occurring in the given terms, so fresh
    /// variables cannot collide with them.
    pub fn above(terms: &[&Term]) -> VarGen {
        let mut next = 0;
        let mut occ = Vec::new();
        for t in terms {
            t.var_occurrences(&mut occ);
        }
        for v in occ {
            next = next.max(v + 1);
        }
        VarGen { next }
    }

    pub fn fresh(&mut self) -> u32 {
        let v = self.next;
        self.next += 1;
        v
    }

    pub fn fresh_var(&mut self) -> Term {
        Term::Var(self.fresh())
    }
}

/// Rewrites a group of terms with consistently fresh variables: shared
/// variables stay shared, but none of the new ids occur elsewhere.
pub fn rename_apart_group(terms: &[&Term], vg: &mut VarGen) -> Vec<Term> {
    let mut map = HashMap::new();
    terms.iter().map(|t| rename_with(t, &mut map, vg)).collect()
}

pub fn rename_apart(t: &Term, vg: &mut VarGen) -> Term {
    rename_apart_group(&[t], vg).pop().unwrap()
}

fn rename_with(t: &Term, map: &mut HashMap<u32, u32>, vg: &mut VarGen) -> Term {
    match t {
        Term::Var(v) => Term::Var(*map.entry(*v).or_insert_with(|| vg.fresh())),
        Term::App(f, args) => {
            Term::App(f.clone(), args.iter().map(|a| rename_with(a, map, vg)).collect())
        }
    }
}

/// A functional binding environment mapping variable ids to terms.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    map: HashMap<u32, Term>,
}

impl Bindings {
    pub fn new() -> Bindings {
        Bindings::default()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, v: u32) -> Option<&Term> {
        self.map.get(&v)
    }

    /// Follows variable bindings at the top until reaching an application
    /// or an unbound variable.
    pub fn walk<'a>(&'a self, t: &'a Term) -> &'a Term {
        let mut t = t;
        while let Term::Var(v) = t {
            match self.map.get(v) {
                Some(next) => t = next,
                None => break,
            }
        }
        t
    }

    /// Substitutes bindings all the way down.  Unbound variables remain.
    pub fn resolve(&self, t: &Term) -> Term {
        let t = self.walk(t);
        match t {
            Term::Var(v) => Term::Var(*v),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| self.resolve(a)).collect())
            }
        }
    }
}

fn occurs_in(env: &Bindings, v: u32, t: &Term) -> bool {
    match env.walk(t) {
        Term::Var(w) => *w == v,
        Term::App(_, args) => args.iter().any(|a| occurs_in(env, v, a)),
    }
}

fn unify_mut(a: &Term, b: &Term, env: &mut Bindings, occurs: bool) -> bool {
    let a = env.walk(a).clone();
    let b = env.walk(b).clone();
    match (a, b) {
        (Term::Var(x), Term::Var(y)) if x == y => true,
        (Term::Var(x), t) | (t, Term::Var(x)) => {
            if occurs && occurs_in(env, x, &t) {
                false
            } else {
                env.map.insert(x, t);
                true
            }
        }
        (Term::App(f, xs), Term::App(g, ys)) => {
            f == g
                && xs.len() == ys.len()
                && xs.iter().zip(ys.iter()).all(|(x, y)| unify_mut(x, y, env, occurs))
        }
    }
}

/// Unifies two terms under an existing environment, returning the extended
/// environment on success.  The occurs check is on; use
/// [`unify_no_occurs`] to trade soundness for speed.
pub fn unify(a: &Term, b: &Term, env: &Bindings) -> Option<Bindings> {
    let mut out = env.clone();
    unify_mut(a, b, &mut out, true).then_some(out)
}

/// Unification without the occurs check.  May build cyclic environments
/// (on which [`Bindings::resolve`] will not terminate), so only use it
/// where the inputs are known acyclic.
pub fn unify_no_occurs(a: &Term, b: &Term, env: &Bindings) -> Option<Bindings> {
    let mut out = env.clone();
    unify_mut(a, b, &mut out, false).then_some(out)
}

/// Unifies two equal-length groups pointwise in one environment.
pub fn unify_group(xs: &[&Term], ys: &[&Term], env: &Bindings) -> Option<Bindings> {
    if xs.len() != ys.len() {
        return None;
    }
    let mut out = env.clone();
    for (x, y) in xs.iter().zip(ys.iter()) {
        if !unify_mut(x, y, &mut out, true) {
            return None;
        }
    }
    Some(out)
}

fn freeze(t: &Term, map: &mut HashMap<u32, Term>) -> Term {
    match t {
        Term::Var(v) => map.entry(*v).or_insert_with(|| Term::atom(&format!("$frozen{v}"))).clone(),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| freeze(a, map)).collect()),
    }
}

/// One-directional matching: true when `general` has an instance equal to
/// `specific`, treating the variables of `specific` as distinct constants.
/// (`$frozen…` atoms are reserved for this; the term parser rejects `$`.)
pub fn subsumes(general: &Term, specific: &Term) -> bool {
    subsumes_group(&[general], &[specific])
}

/// Group subsumption under a single substitution.
pub fn subsumes_group(general: &[&Term], specific: &[&Term]) -> bool {
    if general.len() != specific.len() {
        return false;
    }
    let mut map = HashMap::new();
    let mut env = Bindings::new();
    general
        .iter()
        .zip(specific.iter())
        .all(|(g, s)| unify_mut(g, &freeze(s, &mut map), &mut env, true))
}

/// Rebuilds a term with variables renumbered 0, 1, 2… in first-occurrence
/// order.  Two terms are variants (equal up to variable renaming) exactly
/// when their canonical keys are equal.
pub fn canonical_key(t: &Term) -> Term {
    canonical_key_group(&[t]).pop().unwrap()
}

/// Canonical keys for a group, renumbering across the whole group so that
/// variable sharing between members is preserved.
pub fn canonical_key_group(terms: &[&Term]) -> Vec<Term> {
    let mut map = HashMap::new();
    let mut vg = VarGen::new();
    terms.iter().map(|t| rename_with(t, &mut map, &mut vg)).collect()
}

/// Variant equality: equal up to a bijective renaming of variables.
pub fn variant(a: &Term, b: &Term) -> bool {
    canonical_key(a) == canonical_key(b)
}

pub fn variant_group(a: &[&Term], b: &[&Term]) -> bool {
    a.len() == b.len() && canonical_key_group(a) == canonical_key_group(b)
}

/// How much of a term a lookahead key keeps: `Cut` replaces the subterm
/// with a fresh variable, `Keep` retains the functor and descends into the
/// arguments (missing entries cut).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DepthAssignment {
    Cut,
    Keep(Vec<DepthAssignment>),
}

impl DepthAssignment {
    /// A uniform assignment keeping `depth` levels of `t` (the root counts
    /// as level one; `depth` 0 cuts the whole term).
    pub fn uniform(t: &Term, depth: u32) -> DepthAssignment {
        if depth == 0 {
            return DepthAssignment::Cut;
        }
        match t {
            Term::Var(_) => DepthAssignment::Keep(Vec::new()),
            Term::App(_, args) => DepthAssignment::Keep(
                args.iter().map(|a| DepthAssignment::uniform(a, depth - 1)).collect(),
            ),
        }
    }

    /// Number of `Keep` nodes: the total lookahead amount this assignment
    /// spends.
    pub fn total(&self) -> usize {
        match self {
            DepthAssignment::Cut => 0,
            DepthAssignment::Keep(kids) => 1 + kids.iter().map(|k| k.total()).sum::<usize>(),
        }
    }
}

/// Truncates a term to the shape of an assignment.  Every cut position and
/// every retained variable becomes a fresh, independent variable, so the
/// result is linear in its don't-care positions and subsumes the input.
pub fn truncate(t: &Term, a: &DepthAssignment, vg: &mut VarGen) -> Term {
    match a {
        DepthAssignment::Cut => vg.fresh_var(),
        DepthAssignment::Keep(kids) => match t {
            Term::Var(_) => vg.fresh_var(),
            Term::App(f, args) => Term::App(
                f.clone(),
                args.iter()
                    .enumerate()
                    .map(|(i, arg)| truncate(arg, kids.get(i).unwrap_or(&DepthAssignment::Cut), vg))
                    .collect(),
            ),
        },
    }
}

/// Uniform-depth truncation; see [`DepthAssignment::uniform`].
pub fn truncate_depth(t: &Term, depth: u32, vg: &mut VarGen) -> Term {
    truncate(t, &DepthAssignment::uniform(t, depth), vg)
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("term syntax error at offset {pos}: {msg}")]
pub struct TermParseError {
    pub pos: usize,
    pub msg: String,
}

/// Maps variable names to ids for the duration of one parsing unit (a
/// term, or a whole grammar rule).  `_` gets a fresh id every time.
pub struct VarScope<'g> {
    vg: &'g mut VarGen,
    names: HashMap<String, u32>,
}

impl<'g> VarScope<'g> {
    pub fn new(vg: &'g mut VarGen) -> VarScope<'g> {
        VarScope { vg, names: HashMap::new() }
    }

    pub fn var_id(&mut self, name: &str) -> u32 {
        if name == "_" {
            return self.vg.fresh();
        }
        match self.names.get(name) {
            Some(v) => *v,
            None => {
                let v = self.vg.fresh();
                self.names.insert(name.to_string(), v);
                v
            }
        }
    }
}

/// Parses one term from `input`, which must contain nothing else, sharing
/// named variables through `scope`.
pub fn parse_term_in(input: &str, scope: &mut VarScope) -> Result<Term, TermParseError> {
    let mut cur = Cursor::new(input);
    cur.skip_ws();
    let t = cur.term(scope)?;
    cur.skip_ws();
    if let Some(c) = cur.peek() {
        return Err(cur.err(format!("unexpected `{c}` after term")));
    }
    Ok(t)
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    _input: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(input: &'a str) -> Cursor<'a> {
        Cursor { chars: input.chars().collect(), pos: 0, _input: input }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn err(&self, msg: String) -> TermParseError {
        TermParseError { pos: self.pos, msg }
    }

    fn expect(&mut self, c: char) -> Result<(), TermParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    /// term := primary ('^' term)?   — `^` is right-associative.
    fn term(&mut self, scope: &mut VarScope) -> Result<Term, TermParseError> {
        let left = self.primary(scope)?;
        self.skip_ws();
        if self.peek() == Some('^') {
            self.pos += 1;
            self.skip_ws();
            let right = self.term(scope)?;
            Ok(Term::app(HAT, vec![left, right]))
        } else {
            Ok(left)
        }
    }

    fn primary(&mut self, scope: &mut VarScope) -> Result<Term, TermParseError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                self.skip_ws();
                let t = self.term(scope)?;
                self.skip_ws();
                self.expect(')')?;
                Ok(t)
            }
            Some('[') => self.list(scope),
            Some('\'') => {
                let name = self.quoted()?;
                self.application(name, scope)
            }
            Some(c) if c.is_ascii_uppercase() || c == '_' => {
                let name = self.ident();
                Ok(Term::Var(scope.var_id(&name)))
            }
            Some(c) if c.is_ascii_lowercase() => {
                let name = self.ident();
                self.application(name, scope)
            }
            Some(c) => Err(self.err(format!("unexpected `{c}`"))),
            None => Err(self.err("unexpected end of input".to_string())),
        }
    }

    fn application(&mut self, name: String, scope: &mut VarScope) -> Result<Term, TermParseError> {
        if self.peek() == Some('(') {
            self.pos += 1;
            let mut args = Vec::new();
            loop {
                self.skip_ws();
                args.push(self.term(scope)?);
                self.skip_ws();
                match self.bump() {
                    Some(',') => continue,
                    Some(')') => break,
                    _ => return Err(self.err("expected `,` or `)`".to_string())),
                }
            }
            Ok(Term::App(name, args))
        } else {
            Ok(Term::App(name, Vec::new()))
        }
    }

    fn list(&mut self, scope: &mut VarScope) -> Result<Term, TermParseError> {
        self.expect('[')?;
        self.skip_ws();
        if self.peek() == Some(']') {
            self.pos += 1;
            return Ok(Term::nil());
        }
        let mut items = Vec::new();
        let tail;
        loop {
            items.push(self.term(scope)?);
            self.skip_ws();
            match self.bump() {
                Some(',') => {
                    self.skip_ws();
                    continue;
                }
                Some('|') => {
                    self.skip_ws();
                    tail = self.term(scope)?;
                    self.skip_ws();
                    self.expect(']')?;
                    break;
                }
                Some(']') => {
                    tail = Term::nil();
                    break;
                }
                _ => return Err(self.err("expected `,`, `|` or `]`".to_string())),
            }
        }
        let mut t = tail;
        for item in items.into_iter().rev() {
            t = Term::cons(item, t);
        }
        Ok(t)
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn quoted(&mut self) -> Result<String, TermParseError> {
        self.expect('\'')?;
        let mut name = String::new();
        loop {
            match self.bump() {
                Some('\'') => return Ok(name),
                Some('\\') => match self.bump() {
                    Some(c @ ('\\' | '\'')) => name.push(c),
                    _ => return Err(self.err("bad escape in quoted atom".to_string())),
                },
                Some(c) => name.push(c),
                None => return Err(self.err("unterminated quoted atom".to_string())),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

fn plain_ident(name: &str) -> bool {
    let mut cs = name.chars();
    match cs.next() {
        Some(c) if c.is_ascii_lowercase() => cs.all(|c| c.is_ascii_alphanumeric() || c == '_'),
        _ => false,
    }
}

/// Renders a group of terms with canonical variable names: variables that
/// occur more than once across the group become `V1`, `V2`… in order of
/// first occurrence, single-occurrence variables print as `_`.  Parsing
/// the output back yields a variant of the input group.
pub fn canonical_strings(terms: &[Term]) -> Vec<String> {
    let refs: Vec<&Term> = terms.iter().collect();
    canonical_strings_refs(&refs)
}

pub fn canonical_strings_refs(terms: &[&Term]) -> Vec<String> {
    let mut occ = Vec::new();
    for t in terms {
        t.var_occurrences(&mut occ);
    }
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for v in &occ {
        *counts.entry(*v).or_insert(0) += 1;
    }
    let mut names: HashMap<u32, String> = HashMap::new();
    let mut next = 1;
    for v in &occ {
        if counts[v] > 1 && !names.contains_key(v) {
            names.insert(*v, format!("V{next}"));
            next += 1;
        }
    }
    terms
        .iter()
        .map(|t| {
            let mut s = String::new();
            write_term(&mut s, t, &names);
            s
        })
        .collect()
}

pub fn canonical_string(t: &Term) -> String {
    canonical_strings(std::slice::from_ref(t)).pop().unwrap()
}

fn write_term(out: &mut String, t: &Term, names: &HashMap<u32, String>) {
    match t {
        Term::Var(v) => match names.get(v) {
            Some(name) => out.push_str(name),
            None => out.push('_'),
        },
        Term::App(f, args) if f == HAT && args.len() == 2 => {
            // Right-associative: parenthesize a `^` in operand position
            // on the left only.
            let left_is_hat = matches!(&args[0], Term::App(g, gs) if g == HAT && gs.len() == 2);
            if left_is_hat {
                out.push('(');
            }
            write_term(out, &args[0], names);
            if left_is_hat {
                out.push(')');
            }
            out.push('^');
            write_term(out, &args[1], names);
        }
        Term::App(f, args) if f == CONS && args.len() == 2 => {
            out.push('[');
            write_term(out, &args[0], names);
            let mut tail = &args[1];
            loop {
                if tail.is_nil() {
                    break;
                }
                match tail.as_cons() {
                    Some((h, rest)) => {
                        out.push_str(", ");
                        write_term(out, h, names);
                        tail = rest;
                    }
                    None => {
                        out.push('|');
                        write_term(out, tail, names);
                        break;
                    }
                }
            }
            out.push(']');
        }
        Term::App(f, args) => {
            if f == NIL && args.is_empty() {
                out.push_str("[]");
                return;
            }
            if plain_ident(f) {
                out.push_str(f);
            } else {
                out.push('\'');
                for c in f.chars() {
                    if c == '\'' || c == '\\' {
                        out.push('\\');
                    }
                    out.push(c);
                }
                out.push('\'');
            }
            if !args.is_empty() {
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_term(out, a, names);
                }
                out.push(')');
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Term {
        Term::parse(s).unwrap()
    }

    #[test]
    fn parse_and_print_basics() {
        assert_eq!(t("john"), Term::atom("john"));
        assert_eq!(t("sleep(john)"), Term::app("sleep", vec![Term::atom("john")]));
        assert_eq!(canonical_string(&t("mod(sleep(john), ynq)")), "mod(sleep(john), ynq)");
        assert_eq!(canonical_string(&t("X^sleep(X)")), "V1^sleep(V1)");
        assert_eq!(canonical_string(&t("X^Y^see(X, Y)")), "V1^V2^see(V1, V2)");
        assert_eq!(canonical_string(&t("f(X, Y)")), "f(_, _)");
        assert_eq!(canonical_string(&t("(A^B)^C")), "(_^_)^_");
    }

    #[test]
    fn hat_is_right_associative() {
        let a = t("X^Y^Z");
        match &a {
            Term::App(f, args) => {
                assert_eq!(f, HAT);
                assert!(matches!(&args[1], Term::App(g, _) if g == HAT));
            }
            _ => panic!(),
        }
        // Same variable name is the same variable within one parse.
        let b = t("X^sleep(X)");
        let (body, n) = strip_hats(&b);
        assert_eq!(n, 1);
        assert_eq!(body.functor(), Some(("sleep", 1)));
        let Term::App(_, args) = &b else { panic!() };
        assert_eq!(args[0], body_arg(body));
        fn body_arg(body: &Term) -> Term {
            let Term::App(_, args) = body else { panic!() };
            args[0].clone()
        }
    }

    #[test]
    fn lists_round_trip() {
        assert_eq!(t("[]"), Term::nil());
        let l = t("[a, b, c]");
        assert_eq!(l.proper_list().unwrap().len(), 3);
        assert_eq!(canonical_string(&l), "[a, b, c]");
        let open = t("[a|B]");
        assert!(open.proper_list().is_none());
        assert_eq!(canonical_string(&open), "[a|_]");
        assert_eq!(canonical_string(&t("[a, b | C]")), "[a, b|_]");
    }

    #[test]
    fn quoted_atoms() {
        assert_eq!(t("'John'"), Term::atom("John"));
        assert_eq!(t("'?'"), Term::atom("?"));
        assert_eq!(canonical_string(&t("'John'")), "'John'");
        assert_eq!(canonical_string(&Term::atom("it's")), "'it\\'s'");
        assert_eq!(t("'it\\'s'"), Term::atom("it's"));
        assert_eq!(t("'f'(x)"), Term::app("f", vec![Term::atom("x")]));
    }

    #[test]
    fn underscore_is_fresh_each_time() {
        let a = t("f(_, _)");
        let Term::App(_, args) = &a else { panic!() };
        assert_ne!(args[0], args[1]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Term::parse("").is_err());
        assert!(Term::parse("f(").is_err());
        assert!(Term::parse("f(a,)").is_err());
        assert!(Term::parse("$top(X)").is_err());
        assert!(Term::parse("f(a) b").is_err());
        assert!(Term::parse("[a,").is_err());
        assert!(Term::parse("'unterminated").is_err());
    }

    #[test]
    fn unify_basics() {
        let env = Bindings::new();
        // Separately parsed terms may share variable ids; keep them apart.
        let lhs = t("f(X, b)");
        let mut vg = VarGen::above(&[&lhs]);
        let rhs = rename_apart(&t("f(a, Y)"), &mut vg);
        let e = unify(&lhs, &rhs, &env);
        assert!(e.is_some());
        let a = t("f(X, X)");
        let b = t("f(a, b)");
        assert!(unify(&a, &b, &env).is_none());

        let x = t("X");
        let fx = Term::app("f", vec![x.clone()]);
        assert!(unify(&x, &fx, &env).is_none(), "occurs check must reject X = f(X)");
        assert!(unify_no_occurs(&x, &fx, &env).is_some());
    }

    #[test]
    fn unify_resolves_through_bindings() {
        let env = Bindings::new();
        let lhs = Term::app("f", vec![Term::Var(0), Term::Var(0)]);
        let rhs = Term::app("f", vec![Term::Var(1), Term::atom("a")]);
        let e = unify(&lhs, &rhs, &env).unwrap();
        assert_eq!(e.resolve(&Term::Var(1)), Term::atom("a"));
    }

    #[test]
    fn subsumption_is_one_directional() {
        assert!(subsumes(&t("f(X, Y)"), &t("f(a, g(b))")));
        assert!(!subsumes(&t("f(a, g(b))"), &t("f(X, Y)")));
        assert!(subsumes(&t("f(X, Y)"), &t("f(U, U)")));
        assert!(!subsumes(&t("f(X, X)"), &t("f(U, V)")));
        assert!(subsumes(&t("f(X)"), &t("f(Y)")));
        // Sharing across a group matters.
        let g1 = t("g(X)");
        let g2 = t("h(X)");
        let s1 = t("g(a)");
        let s2 = t("h(b)");
        assert!(!subsumes_group(&[&g1, &g2], &[&s1, &s2]));
        let s2b = t("h(a)");
        assert!(subsumes_group(&[&g1, &g2], &[&s1, &s2b]));
    }

    #[test]
    fn variants() {
        assert!(variant(&t("f(X, Y, X)"), &t("f(A, B, A)")));
        assert!(!variant(&t("f(X, Y, X)"), &t("f(A, A, A)")));
        assert!(!variant(&t("f(X)"), &t("f(a)")));
        let a = t("p(X, g(Y), X)");
        let mut vg = VarGen::above(&[&a]);
        let b = rename_apart(&a, &mut vg);
        assert!(variant(&a, &b));
    }

    #[test]
    fn truncation_examples() {
        let mut vg = VarGen::new();
        let lf = t("mod(sleep(john), ynq)");
        assert_eq!(canonical_string(&truncate_depth(&lf, 1, &mut vg)), "mod(_, _)");
        assert_eq!(canonical_string(&truncate_depth(&lf, 2, &mut vg)), "mod(sleep(_), ynq)");
        assert_eq!(canonical_string(&truncate_depth(&t("john"), 0, &mut vg)), "_");
        let a =
            DepthAssignment::Keep(vec![DepthAssignment::Cut, DepthAssignment::Keep(Vec::new())]);
        assert_eq!(canonical_string(&truncate(&lf, &a, &mut vg)), "mod(_, ynq)");
        assert_eq!(a.total(), 2);
        assert_eq!(DepthAssignment::uniform(&lf, 2).total(), 3);
    }

    #[test]
    fn truncation_linearizes_kept_variables() {
        let mut vg = VarGen::new();
        let sem = t("X^sleep(X)");
        let mut vg2 = VarGen::above(&[&sem]);
        let key = truncate_depth(&sem, 2, &mut vg2);
        assert_eq!(canonical_string(&key), "_^sleep(_)");
        assert!(subsumes(&key, &sem));
        let _ = vg.fresh();
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        let leaf = prop_oneof![
            (0u32..4).prop_map(Term::Var),
            prop_oneof![Just("a"), Just("b"), Just("c"), Just("[]")].prop_map(Term::atom),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            (
                prop_oneof![Just("f"), Just("g"), Just("^"), Just(".")],
                prop::collection::vec(inner, 1..3),
            )
                .prop_map(|(f, mut args)| {
                    if (f == "^" || f == ".") && args.len() != 2 {
                        let extra = args[0].clone();
                        args.resize(2, extra);
                    }
                    Term::App(f.to_string(), args)
                })
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(a in arb_term()) {
            let s = canonical_string(&a);
            let b = Term::parse(&s).unwrap();
            prop_assert!(variant(&a, &b), "{s} reparsed as {b:?} from {a:?}");
        }

        #[test]
        fn unify_is_symmetric(a in arb_term(), b in arb_term()) {
            let env = Bindings::new();
            // Share no variables: rename b apart first.
            let mut vg = VarGen::above(&[&a, &b]);
            let b = rename_apart(&b, &mut vg);
            let ab = unify(&a, &b, &env);
            let ba = unify(&b, &a, &env);
            prop_assert_eq!(ab.is_some(), ba.is_some());
            if let (Some(e1), Some(e2)) = (ab, ba) {
                prop_assert!(variant(&e1.resolve(&a), &e2.resolve(&a)));
            }
        }

        #[test]
        fn subsumption_implies_unifiability(a in arb_term(), b in arb_term()) {
            let mut vg = VarGen::above(&[&a, &b]);
            let b = rename_apart(&b, &mut vg);
            if subsumes(&a, &b) {
                prop_assert!(unify(&a, &b, &Bindings::new()).is_some());
            }
        }

        #[test]
        fn variant_is_mutual_subsumption(a in arb_term(), b in arb_term()) {
            let mut vg = VarGen::above(&[&a, &b]);
            let b2 = rename_apart(&b, &mut vg);
            prop_assert_eq!(variant(&a, &b2), subsumes(&a, &b2) && subsumes(&b2, &a));
            prop_assert!(variant(&b, &b2));
        }

        #[test]
        fn truncation_subsumes_original(a in arb_term(), d in 0u32..4) {
            let mut vg = VarGen::above(&[&a]);
            let cut = truncate_depth(&a, d, &mut vg);
            prop_assert!(subsumes(&cut, &a));
        }

        #[test]
        fn resolve_is_idempotent(a in arb_term(), b in arb_term()) {
            let mut vg = VarGen::above(&[&a, &b]);
            let b = rename_apart(&b, &mut vg);
            if let Some(e) = unify(&a, &b, &Bindings::new()) {
                let r = e.resolve(&a);
                prop_assert_eq!(e.resolve(&r), r);
            }
        }
    }
}
