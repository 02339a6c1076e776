//! SLR(1) parsing tables for the context-free projection of a grammar,
//! plus a backtracking shift-reduce parser that reconstructs logical
//! forms.
//!
//! The projection keeps just the categories: phrasal rules become
//! context-free productions, and categories that occur only in the lexicon
//! become the terminals (preterminals).  States are sets of dotted items;
//! the construction is the textbook one except for the state numbering,
//! which is fixed so that compiled tables are reproducible: states are
//! numbered in preorder depth-first visit order, a state's successors are
//! created in first-occurrence order of the symbols after the dots, and
//! the expansion of the accept state is postponed until the rest of the
//! automaton is built.
//!
//! Reductions are keyed by SLR follow sets.  Conflicting actions are not
//! an error — the parser explores every alternative and returns all
//! parses — but [`ParseTables::conflicts`] reports them.

use crate::grammar::{Grammar, GrammarError, Rule};
use crate::terms::{self, unify, Bindings, Term, VarGen};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

/// Reserved end-of-string terminal.
pub const EOS: &str = "eos";

#[derive(Debug, thiserror::Error)]
pub enum LrError {
    #[error(
        "category {0} has both phrasal rules and lexicon entries; \
         lexical categories must be preterminals"
    )]
    MixedCategory(String),
    #[error("unit productions cycle through category {0}, so some strings would have unboundedly many parses")]
    UnitCycle(String),
    #[error("`{0}` is reserved for the end-of-string marker")]
    ReservedCategory(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("word `{0}` is not in the lexicon")]
    UnknownWord(String),
}

/// A context-free production; production 0 is always the added top
/// production `Top' -> Top`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prod {
    pub id: u32,
    pub lhs: String,
    pub rhs: Vec<String>,
}

/// The context-free projection of a grammar.
#[derive(Debug, Clone)]
pub struct Cfg {
    pub top: String,
    pub prods: Vec<Prod>,
    pub terminals: BTreeSet<String>,
    pub nonterminals: BTreeSet<String>,
}

impl Cfg {
    pub fn project(g: &Grammar) -> Result<Cfg, LrError> {
        let nonterminals: BTreeSet<String> = g.rules.iter().map(|r| r.lhs.0.clone()).collect();
        let mut terminals = BTreeSet::new();
        for e in &g.lexicon {
            if nonterminals.contains(&e.cat) {
                return Err(LrError::MixedCategory(e.cat.clone()));
            }
            terminals.insert(e.cat.clone());
        }
        for cat in terminals.iter().chain(nonterminals.iter()) {
            if cat == EOS {
                return Err(LrError::ReservedCategory(cat.clone()));
            }
        }
        let mut prods = vec![Prod { id: 0, lhs: format!("{}'", g.top), rhs: vec![g.top.clone()] }];
        let mut rules: Vec<&Rule> = g.rules.iter().collect();
        rules.sort_by_key(|r| r.id);
        prods.extend(rules.iter().map(|r| Prod {
            id: r.id,
            lhs: r.lhs.0.clone(),
            rhs: r.rhs.iter().map(|(c, _)| c.clone()).collect(),
        }));
        let cfg = Cfg { top: g.top.clone(), prods, terminals, nonterminals };
        cfg.check_unit_cycles()?;
        Ok(cfg)
    }

    fn check_unit_cycles(&self) -> Result<(), LrError> {
        let mut edges: HashMap<&str, Vec<&str>> = HashMap::new();
        for p in &self.prods[1..] {
            if p.rhs.len() == 1 && self.nonterminals.contains(&p.rhs[0]) {
                edges.entry(&p.lhs).or_default().push(&p.rhs[0]);
            }
        }
        let mut done: Vec<&str> = Vec::new();
        fn visit<'a>(
            cat: &'a str,
            edges: &HashMap<&'a str, Vec<&'a str>>,
            path: &mut Vec<&'a str>,
            done: &mut Vec<&'a str>,
        ) -> Option<String> {
            if done.contains(&cat) {
                return None;
            }
            if path.contains(&cat) {
                return Some(cat.to_string());
            }
            path.push(cat);
            for next in edges.get(cat).into_iter().flatten() {
                if let Some(c) = visit(next, edges, path, done) {
                    return Some(c);
                }
            }
            path.pop();
            done.push(cat);
            None
        }
        for cat in edges.keys().copied().collect::<Vec<_>>() {
            if let Some(c) = visit(cat, &edges, &mut Vec::new(), &mut done) {
                return Err(LrError::UnitCycle(c));
            }
        }
        Ok(())
    }

    fn is_terminal(&self, sym: &str) -> bool {
        self.terminals.contains(sym)
    }

    /// SLR follow sets over the augmented grammar (the top symbol is
    /// followed by `eos`).  No production has an empty right-hand side, so
    /// first sets need no nullable bookkeeping.
    fn follow_sets(&self) -> HashMap<String, BTreeSet<String>> {
        let mut first: HashMap<&str, BTreeSet<String>> = HashMap::new();
        for t in &self.terminals {
            first.entry(t).or_default().insert(t.clone());
        }
        loop {
            let mut changed = false;
            for p in &self.prods {
                let add: BTreeSet<String> =
                    first.get(p.rhs[0].as_str()).cloned().unwrap_or_default();
                let entry = first.entry(&p.lhs).or_default();
                let before = entry.len();
                entry.extend(add);
                changed |= entry.len() != before;
            }
            if !changed {
                break;
            }
        }
        let mut follow: HashMap<String, BTreeSet<String>> = HashMap::new();
        follow.entry(self.prods[0].lhs.clone()).or_default().insert(EOS.to_string());
        loop {
            let mut changed = false;
            for p in &self.prods {
                for (i, sym) in p.rhs.iter().enumerate() {
                    if self.is_terminal(sym) && i + 1 < p.rhs.len() {
                        continue;
                    }
                    let add: BTreeSet<String> = if i + 1 < p.rhs.len() {
                        first.get(p.rhs[i + 1].as_str()).cloned().unwrap_or_default()
                    } else {
                        follow.get(&p.lhs).cloned().unwrap_or_default()
                    };
                    let entry = follow.entry(sym.clone()).or_default();
                    let before = entry.len();
                    entry.extend(add);
                    changed |= entry.len() != before;
                }
            }
            if !changed {
                break;
            }
        }
        follow
    }
}

/// A dotted item: production index and dot position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Item {
    pub prod: usize,
    pub dot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Action {
    Shift(usize),
    Reduce(u32),
    Accept,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Shift(s) => write!(f, "s{s}"),
            Action::Reduce(r) => write!(f, "r{r}"),
            Action::Accept => write!(f, "acc"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParseTables {
    pub cfg: Cfg,
    /// Item lists per state; `states[0]` is state 1.
    states: Vec<Vec<Item>>,
    /// Terminal actions, keyed by 1-based state and lookahead symbol.
    pub actions: BTreeMap<(usize, String), Vec<Action>>,
    /// Nonterminal transitions, keyed by 1-based state.
    pub gotos: BTreeMap<(usize, String), usize>,
}

struct Builder<'a> {
    cfg: &'a Cfg,
    states: Vec<Vec<Item>>,
    index: HashMap<BTreeSet<Item>, usize>,
    edges: BTreeMap<(usize, String), usize>,
    deferred: Vec<usize>,
}

impl<'a> Builder<'a> {
    fn next_sym(&self, item: Item) -> Option<&'a str> {
        self.cfg.prods[item.prod].rhs.get(item.dot).map(String::as_str)
    }

    /// Adds the closure of `kernel`, keeping kernel order first and
    /// appending non-kernel items in production order.
    fn close(&self, kernel: Vec<Item>) -> Vec<Item> {
        let mut items = kernel;
        let mut i = 0;
        while i < items.len() {
            if let Some(sym) = self.next_sym(items[i]) {
                if self.cfg.nonterminals.contains(sym) {
                    for (pi, p) in self.cfg.prods.iter().enumerate() {
                        let item = Item { prod: pi, dot: 0 };
                        if p.lhs == sym && !items.contains(&item) {
                            items.push(item);
                        }
                    }
                }
            }
            i += 1;
        }
        items
    }

    fn intern(&mut self, items: Vec<Item>) -> (usize, bool) {
        let key: BTreeSet<Item> = items.iter().copied().collect();
        match self.index.get(&key) {
            Some(&idx) => (idx, false),
            None => {
                let idx = self.states.len();
                self.states.push(items);
                self.index.insert(key, idx);
                (idx, true)
            }
        }
    }

    fn expand(&mut self, idx: usize) {
        let items = self.states[idx].clone();
        let mut syms: Vec<&str> = Vec::new();
        for &item in &items {
            if let Some(sym) = self.next_sym(item) {
                if !syms.contains(&sym) {
                    syms.push(sym);
                }
            }
        }
        for sym in syms {
            let kernel: Vec<Item> = items
                .iter()
                .filter(|it| self.next_sym(**it) == Some(sym))
                .map(|it| Item { prod: it.prod, dot: it.dot + 1 })
                .collect();
            let closed = self.close(kernel);
            let has_accept = closed.contains(&Item { prod: 0, dot: 1 });
            let (target, fresh) = self.intern(closed);
            self.edges.insert((idx + 1, sym.to_string()), target + 1);
            if fresh {
                if has_accept {
                    self.deferred.push(target);
                } else {
                    self.expand(target);
                }
            }
        }
    }
}

/// Builds SLR(1) tables for the context-free projection of `g`.
pub fn compile_parse_tables(g: &Grammar) -> Result<ParseTables, LrError> {
    let cfg = Cfg::project(g)?;
    let mut b = Builder {
        cfg: &cfg,
        states: Vec::new(),
        index: HashMap::new(),
        edges: BTreeMap::new(),
        deferred: Vec::new(),
    };
    let start = b.close(vec![Item { prod: 0, dot: 0 }]);
    b.intern(start);
    b.expand(0);
    while let Some(idx) = b.deferred.pop() {
        b.expand(idx);
    }

    let follow = cfg.follow_sets();
    let mut actions: BTreeMap<(usize, String), Vec<Action>> = BTreeMap::new();
    let mut gotos = BTreeMap::new();
    for ((state, sym), target) in &b.edges {
        if cfg.is_terminal(sym) {
            actions.entry((*state, sym.clone())).or_default().push(Action::Shift(*target));
        } else {
            gotos.insert((*state, sym.clone()), *target);
        }
    }
    for (idx, items) in b.states.iter().enumerate() {
        for item in items {
            let p = &cfg.prods[item.prod];
            if item.dot < p.rhs.len() {
                continue;
            }
            if item.prod == 0 {
                actions.entry((idx + 1, EOS.to_string())).or_default().push(Action::Accept);
            } else {
                for sym in follow.get(&p.lhs).into_iter().flatten() {
                    actions.entry((idx + 1, sym.clone())).or_default().push(Action::Reduce(p.id));
                }
            }
        }
    }
    // Shift before reduce, lower rule ids first, accept last.
    for acts in actions.values_mut() {
        acts.sort_by_key(|a| match a {
            Action::Shift(_) => (0, 0),
            Action::Reduce(r) => (1, *r),
            Action::Accept => (2, 0),
        });
        acts.dedup();
    }
    let states = b.states;
    Ok(ParseTables { cfg, states, actions, gotos })
}

impl ParseTables {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    /// Items of a state (1-based), rendered like `S -> NP . VP`.
    pub fn state_items(&self, state: usize) -> Vec<String> {
        self.states[state - 1]
            .iter()
            .map(|item| {
                let p = &self.cfg.prods[item.prod];
                let mut parts: Vec<&str> = Vec::new();
                for (i, sym) in p.rhs.iter().enumerate() {
                    if i == item.dot {
                        parts.push(".");
                    }
                    parts.push(sym);
                }
                if item.dot == p.rhs.len() {
                    parts.push(".");
                }
                format!("{} -> {}", p.lhs, parts.join(" "))
            })
            .collect()
    }

    /// Every nonempty table cell, rendered `s3`/`r2`/`acc`/`g4`; conflict
    /// cells join their alternatives with `/`.
    pub fn cells(&self) -> BTreeMap<(usize, String), String> {
        let mut out = BTreeMap::new();
        for ((state, sym), acts) in &self.actions {
            let text = acts.iter().map(ToString::to_string).collect::<Vec<_>>().join("/");
            out.insert((*state, sym.clone()), text);
        }
        for ((state, sym), target) in &self.gotos {
            out.insert((*state, sym.clone()), format!("g{target}"));
        }
        out
    }

    /// Cells holding more than one action.
    pub fn conflicts(&self) -> Vec<(usize, String, Vec<Action>)> {
        self.actions
            .iter()
            .filter(|(_, acts)| acts.len() > 1)
            .map(|((s, sym), acts)| (*s, sym.clone(), acts.clone()))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Parsing and logical-form reconstruction
// ---------------------------------------------------------------------------

/// One node of a concrete derivation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseNode {
    Leaf { cat: String, word: String },
    Node { rule: u32, kids: Vec<ParseNode> },
}

/// All derivations of `words`, via exhaustive backtracking over the table
/// actions (shift preferred, then reduces by ascending rule id).
pub fn parse_forest(
    g: &Grammar,
    t: &ParseTables,
    words: &[&str],
) -> Result<Vec<ParseNode>, ParseError> {
    let mut tags: Vec<Vec<&str>> = Vec::new();
    for w in words {
        let cats: Vec<&str> =
            g.lexicon.iter().filter(|e| e.word == *w).map(|e| e.cat.as_str()).fold(
                Vec::new(),
                |mut acc, c| {
                    if !acc.contains(&c) {
                        acc.push(c);
                    }
                    acc
                },
            );
        if cats.is_empty() {
            return Err(ParseError::UnknownWord(w.to_string()));
        }
        tags.push(cats);
    }
    let mut out = Vec::new();
    step(t, words, &tags, &mut vec![1], &mut Vec::new(), 0, &mut out);
    Ok(out)
}

fn step(
    t: &ParseTables,
    words: &[&str],
    tags: &[Vec<&str>],
    stack: &mut Vec<usize>,
    nodes: &mut Vec<ParseNode>,
    pos: usize,
    out: &mut Vec<ParseNode>,
) {
    let state = *stack.last().unwrap();
    let lookahead: Vec<&str> = if pos < tags.len() { tags[pos].clone() } else { vec![EOS] };
    for sym in lookahead {
        let Some(acts) = t.actions.get(&(state, sym.to_string())) else {
            continue;
        };
        for act in acts {
            match act {
                Action::Shift(next) => {
                    stack.push(*next);
                    nodes.push(ParseNode::Leaf {
                        cat: sym.to_string(),
                        word: words[pos].to_string(),
                    });
                    step(t, words, tags, stack, nodes, pos + 1, out);
                    nodes.pop();
                    stack.pop();
                }
                Action::Reduce(rule) => {
                    let p = t.cfg.prods.iter().find(|p| p.id == *rule).unwrap();
                    let n = p.rhs.len();
                    let saved_states: Vec<usize> = stack.split_off(stack.len() - n);
                    let kids: Vec<ParseNode> = nodes.split_off(nodes.len() - n);
                    let under = *stack.last().unwrap();
                    if let Some(next) = t.gotos.get(&(under, p.lhs.clone())) {
                        stack.push(*next);
                        nodes.push(ParseNode::Node { rule: *rule, kids: kids.clone() });
                        step(t, words, tags, stack, nodes, pos, out);
                        nodes.pop();
                        stack.pop();
                    }
                    stack.extend(saved_states);
                    nodes.extend(kids);
                }
                Action::Accept => {
                    if pos == words.len() && nodes.len() == 1 {
                        out.push(nodes[0].clone());
                    }
                }
            }
        }
    }
}

/// The logical forms a derivation can carry, by re-running the attributed
/// rules bottom-up.  A lexically ambiguous word can yield several.
pub fn derivation_lfs(g: &Grammar, node: &ParseNode) -> Vec<Term> {
    let mut vg = VarGen::new();
    let goal = vg.fresh_var();
    let envs = eval(g, node, &goal, Bindings::new(), &mut vg);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for env in envs {
        let sem = env.resolve(&goal);
        if seen.insert(terms::canonical_key(&sem)) {
            out.push(sem);
        }
    }
    out
}

fn eval(
    g: &Grammar,
    node: &ParseNode,
    goal: &Term,
    env: Bindings,
    vg: &mut VarGen,
) -> Vec<Bindings> {
    match node {
        ParseNode::Leaf { cat, word } => g
            .lexicon
            .iter()
            .filter(|e| &e.cat == cat && &e.word == word)
            .filter_map(|e| unify(&terms::rename_apart(&e.sem, vg), goal, &env))
            .collect(),
        ParseNode::Node { rule, kids } => {
            let rule = g.rules.iter().find(|r| r.id == *rule).unwrap();
            let mut refs: Vec<&Term> = vec![&rule.lhs.1];
            refs.extend(rule.rhs.iter().map(|(_, s)| s));
            let renamed = terms::rename_apart_group(&refs, vg);
            let Some(env) = unify(&renamed[0], goal, &env) else {
                return Vec::new();
            };
            let mut envs = vec![env];
            for (kid, rsem) in kids.iter().zip(&renamed[1..]) {
                let mut next = Vec::new();
                for e in envs {
                    next.extend(eval(g, kid, rsem, e, vg));
                }
                envs = next;
                if envs.is_empty() {
                    break;
                }
            }
            envs
        }
    }
}

/// Parses and reconstructs: all distinct logical forms of `words`.
pub fn parse_lfs(g: &Grammar, t: &ParseTables, words: &[&str]) -> Result<Vec<Term>, ParseError> {
    let forest = parse_forest(g, t, words)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for node in &forest {
        for lf in derivation_lfs(g, node) {
            if seen.insert(terms::canonical_key(&lf)) {
                out.push(lf);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::QUESTIONS;

    fn tables() -> (Grammar, ParseTables) {
        let g = Grammar::parse(QUESTIONS).unwrap();
        let t = compile_parse_tables(&g).unwrap();
        (g, t)
    }

    #[test]
    fn reproduces_the_twelve_states() {
        let (_, t) = tables();
        assert_eq!(t.state_count(), 12);
        let expected: [&[&str]; 12] = [
            &["S' -> . S", "S -> . S QM", "S -> . NP VP"],
            &["S' -> S .", "S -> S . QM"],
            &["S -> NP . VP", "VP -> . VP PP", "VP -> . VP AdvP", "VP -> . Vi", "VP -> . Vt NP"],
            &["S -> NP VP .", "VP -> VP . PP", "VP -> VP . AdvP", "PP -> . P NP"],
            &["VP -> VP PP ."],
            &["VP -> VP AdvP ."],
            &["PP -> P . NP"],
            &["PP -> P NP ."],
            &["VP -> Vi ."],
            &["VP -> Vt . NP"],
            &["VP -> Vt NP ."],
            &["S -> S QM ."],
        ];
        for (i, want) in expected.iter().enumerate() {
            let got: BTreeSet<String> = t.state_items(i + 1).into_iter().collect();
            let want: BTreeSet<String> = want.iter().map(|s| s.to_string()).collect();
            assert_eq!(got, want, "state {}", i + 1);
        }
    }

    #[test]
    fn reproduces_the_action_table() {
        let (_, t) = tables();
        let mut want: BTreeMap<(usize, String), String> = BTreeMap::new();
        let cells: &[(usize, &str, &str)] = &[
            (1, "NP", "s3"),
            (1, "S", "g2"),
            (2, "QM", "s12"),
            (2, "eos", "acc"),
            (3, "VP", "g4"),
            (3, "Vi", "s9"),
            (3, "Vt", "s10"),
            (4, "PP", "g5"),
            (4, "AdvP", "s6"),
            (4, "P", "s7"),
            (4, "QM", "r2"),
            (4, "eos", "r2"),
            (5, "AdvP", "r3"),
            (5, "P", "r3"),
            (5, "QM", "r3"),
            (5, "eos", "r3"),
            (6, "AdvP", "r4"),
            (6, "P", "r4"),
            (6, "QM", "r4"),
            (6, "eos", "r4"),
            (7, "NP", "s8"),
            (8, "AdvP", "r7"),
            (8, "P", "r7"),
            (8, "QM", "r7"),
            (8, "eos", "r7"),
            (9, "AdvP", "r5"),
            (9, "P", "r5"),
            (9, "QM", "r5"),
            (9, "eos", "r5"),
            (10, "NP", "s11"),
            (11, "AdvP", "r6"),
            (11, "P", "r6"),
            (11, "QM", "r6"),
            (11, "eos", "r6"),
            (12, "QM", "r1"),
            (12, "eos", "r1"),
        ];
        for (s, sym, act) in cells {
            want.insert((*s, sym.to_string()), act.to_string());
        }
        assert_eq!(t.cells(), want);
        assert!(t.conflicts().is_empty());
    }

    #[test]
    fn parses_and_reconstructs() {
        let (g, t) = tables();
        let lfs = parse_lfs(&g, &t, &["John", "sleeps", "?"]).unwrap();
        assert_eq!(lfs, vec![Term::parse("mod(sleep(john), ynq)").unwrap()]);
        let lfs = parse_lfs(&g, &t, &["John", "sees", "Mary", "?"]).unwrap();
        assert_eq!(lfs, vec![Term::parse("mod(see(mary, john), ynq)").unwrap()]);
        let lfs =
            parse_lfs(&g, &t, &["John", "sees", "Mary", "in", "Paris", "today", "?"]).unwrap();
        assert_eq!(
            lfs,
            vec![Term::parse("mod(mod(mod(see(mary, john), in(paris)), today), ynq)").unwrap()]
        );
    }

    #[test]
    fn rejects_unparseable_input() {
        let (g, t) = tables();
        assert!(parse_lfs(&g, &t, &["sleeps", "John"]).unwrap().is_empty());
        assert!(matches!(parse_lfs(&g, &t, &["John", "snores"]), Err(ParseError::UnknownWord(_))));
        assert!(parse_lfs(&g, &t, &["John", "sees", "?"]).unwrap().is_empty());
    }

    #[test]
    fn parses_agree_with_enumeration() {
        let (g, t) = tables();
        for (words, sem) in crate::oracle::enumerate(&g, "S", 5) {
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let lfs = parse_lfs(&g, &t, &refs).unwrap();
            assert!(lfs.contains(&sem), "parse of {:?} missed {sem}", words.join(" "));
        }
    }

    #[test]
    fn rejects_mixed_and_cyclic_grammars() {
        let mixed = "top S.\n\
                     rule 1: S(f(X)) --> NP(X) @flow arg 1 -> 1.\n\
                     rule 2: NP(g(X)) --> S(X) @flow arg 1 -> 1.\n\
                     lex NP(john) ==> \"John\".\n";
        let g = Grammar::parse(mixed).unwrap();
        assert!(matches!(compile_parse_tables(&g), Err(LrError::MixedCategory(_))));

        let cyclic = "top S.\n\
                      rule 1: S(f(X)) --> T(X) @flow arg 1 -> 1.\n\
                      rule 2: T(g(X)) --> S(X) @flow arg 1 -> 1.\n\
                      lex U(u) ==> \"u\".\n";
        let g = Grammar::parse(cyclic).unwrap();
        assert!(matches!(compile_parse_tables(&g), Err(LrError::UnitCycle(_))));
    }

    #[test]
    fn dangling_accept_state_is_numbered_last() {
        // The accept state's successors get the highest numbers; its QM
        // successor is state 12 here, not state 3.
        let (_, t) = tables();
        assert_eq!(t.actions[&(2, "QM".to_string())], vec![Action::Shift(12)]);
    }
}
