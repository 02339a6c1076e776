//! Compilation of inverted rules into generation tables.
//!
//! The tables drive an LR-style engine that walks a logical form from the
//! root down.  A *state* is a set of dotted inverted rules ("items"); the
//! dot counts how many argument positions of the rule's logical form have
//! already been generated.  Three tables connect the states:
//!
//! * `descend(state, key) → state` — entered when generation recurses into
//!   the next argument of the current logical form.  The key is a prefix
//!   of the argument's logical form; the target state holds the rules
//!   invoked for that argument, instantiated with whatever the key knows.
//! * `goto(state, shape) → state` — taken after the argument has been
//!   generated, advancing the dot.  Shapes are one-level keys (functor and
//!   arity only), mirroring how a parser's goto is keyed by a category.
//! * `reduce(state) → rules` — the rules that can be applied once every
//!   argument position is done.  A reduce set with more than one rule is a
//!   choice point at run time.
//!
//! How much of each argument's logical form a descend key inspects is the
//! compiler's one degree of freedom.  `CompileMode::Fixed` keys a uniform
//! depth.  `CompileMode::Auto` searches, at every descend step separately,
//! for the smallest key shapes that leave every downstream reduce set
//! within a tolerated size (tolerance 1 first, then 2, and so on, so
//! compilation always terminates even when no bounded key suffices).
//! `CompileMode::Examples` instead derives key shapes from a training
//! corpus: the exact subterms seen in the corpus set the bar, the least
//! masked generalization of them that is just as discriminating becomes
//! the key set, and uncovered inputs fall back to keys of a configurable
//! default depth, so the tables stay complete.
//!
//! Families of single-atom lexicon entries of one category (proper nouns,
//! say) would otherwise multiply states that differ only in the atom.
//! They are merged into one *class rule* whose logical form is a variable
//! plus a member table; table keys mention the class representative, and
//! the concrete word is resolved when the rule is applied.

use crate::grammar::{Constituent, NormalGrammar};
use crate::inversion::{context_of, invert_context, resolve_constituent, InvertedRule};
use crate::terms::{
    canonical_key, canonical_string, rename_apart, rename_apart_group, strip_hats, subsumes,
    subsumes_group, truncate, unify, Bindings, DepthAssignment, Term, TermParseError, VarGen,
};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

/// Reserved category and functor wrapped around the goal logical form so
/// that the initial state is an ordinary state.  The term parser rejects
/// unquoted `$`, so no grammar or input can collide with it.
pub const DUMMY: &str = "$top";

/// External number of the initial state.
pub const INITIAL_STATE: usize = 1;

// ---------------------------------------------------------------------------
// Table rules
// ---------------------------------------------------------------------------

/// A rule as stored in compiled tables.  `members` is present on lexical
/// class rules: the rule's logical form is a variable, and the table maps
/// each member atom to its surface word.
#[derive(Debug, Clone)]
pub struct TableRule {
    pub rule: InvertedRule,
    pub members: Option<Vec<(String, String)>>,
}

fn list_term(ts: Vec<Term>) -> Term {
    let mut out = Term::nil();
    for t in ts.into_iter().rev() {
        out = Term::cons(t, out);
    }
    out
}

impl TableRule {
    /// Canonical one-line form, also the hashing payload.  Ordinary rules
    /// serialize as the list of their constituent terms; class rules as
    /// `class([Lhs], [m(Atom, Word)…])`.
    pub fn payload(&self) -> String {
        let term = match &self.members {
            None => list_term(self.rule.to_terms()),
            Some(ms) => Term::app(
                "class",
                vec![
                    list_term(self.rule.to_terms()),
                    list_term(
                        ms.iter()
                            .map(|(a, w)| Term::app("m", vec![Term::atom(a), Term::atom(w)]))
                            .collect(),
                    ),
                ],
            ),
        };
        canonical_string(&canonical_key(&term))
    }

    /// First twelve hex digits of the SHA-256 of the payload; the stable
    /// name reduce entries use.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.payload().as_bytes());
        let digest = h.finalize();
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    fn from_payload(text: &str) -> Result<TableRule, TablesError> {
        let term = Term::parse(text)?;
        let (list, members) = match &term {
            Term::App(f, args) if f == "class" && args.len() == 2 => {
                let mut ms = Vec::new();
                for m in args[1]
                    .proper_list()
                    .ok_or_else(|| TablesError::Syntax("class member list".into()))?
                {
                    match m {
                        Term::App(mf, margs) if mf == "m" && margs.len() == 2 => {
                            match (&margs[0], &margs[1]) {
                                (Term::App(a, x), Term::App(w, y))
                                    if x.is_empty() && y.is_empty() =>
                                {
                                    ms.push((a.clone(), w.clone()))
                                }
                                _ => return Err(TablesError::Syntax("class member".into())),
                            }
                        }
                        _ => return Err(TablesError::Syntax("class member".into())),
                    }
                }
                (args[0].clone(), Some(ms))
            }
            _ => (term.clone(), None),
        };
        let cs = list
            .proper_list()
            .ok_or_else(|| TablesError::Syntax("rule constituent list".into()))?;
        let mut constituents = Vec::new();
        for c in cs {
            constituents.push(Constituent::from_term(c).ok_or_else(|| {
                TablesError::Syntax(format!("not a constituent: {}", canonical_string(c)))
            })?);
        }
        if constituents.is_empty() {
            return Err(TablesError::Syntax("empty rule".into()));
        }
        let lhs = constituents.remove(0);
        Ok(TableRule { rule: InvertedRule { lhs, rhs: constituents, chain: Vec::new() }, members })
    }
}

impl fmt::Display for TableRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rule)?;
        if let Some(ms) = &self.members {
            let atoms: Vec<&str> = ms.iter().map(|(a, _)| a.as_str()).collect();
            write!(f, "  [class {}]", atoms.join("|"))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Items and states
// ---------------------------------------------------------------------------

/// A dotted table rule: `dot` argument positions already generated.
#[derive(Debug, Clone)]
pub struct GenItem {
    pub rule: TableRule,
    pub dot: usize,
}

impl GenItem {
    pub fn arity(&self) -> usize {
        self.rule.rule.rhs.len()
    }

    pub fn is_reductive(&self) -> bool {
        self.dot == self.arity()
    }

    fn terms(&self) -> Vec<Term> {
        self.rule.rule.to_terms()
    }

    /// Canonical text including the dot and any class members; the basis
    /// for ordering, deduplication, and state identity.
    fn text(&self) -> String {
        format!("{}|{}", self.dot, self.rule.payload())
    }

    /// The logical form the rule builds, with abstractions stripped.
    fn body(&self) -> Term {
        strip_hats(&self.rule.rule.lhs.sem).0.clone()
    }
}

impl fmt::Display for GenItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ts = self.terms();
        let refs: Vec<&Term> = ts.iter().collect();
        let strs = crate::terms::canonical_strings_refs(&refs);
        write!(f, "{} => ", strs[0])?;
        for (i, s) in strs[1..].iter().enumerate() {
            if i == self.dot {
                write!(f, ". ")?;
            }
            write!(f, "{}", s)?;
            if i + 1 < strs.len() - 1 {
                write!(f, ", ")?;
            }
        }
        if self.dot == strs.len() - 1 {
            if strs.len() > 1 {
                write!(f, " ")?;
            }
            write!(f, ".")?;
        }
        if let Some(ms) = &self.rule.members {
            let atoms: Vec<&str> = ms.iter().map(|(a, _)| a.as_str()).collect();
            write!(f, "  [class {}]", atoms.join("|"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GenState {
    pub id: usize,
    pub items: Vec<GenItem>,
}

impl fmt::Display for GenState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "state {}", self.id)?;
        for item in &self.items {
            writeln!(f, "  {}", item)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Compiled tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct GenTables {
    pub top: String,
    /// Distinct rules referenced by reduce entries, ordered by hash.
    pub rules: Vec<TableRule>,
    /// `(from, key, to)`, ordered by state, key text, target.
    pub descend: Vec<(usize, Term, usize)>,
    pub goto_entries: Vec<(usize, Term, usize)>,
    /// `(state, rule index)` in the order alternatives are tried.
    pub reduce: Vec<(usize, usize)>,
    /// State listing for inspection; compile-time only (empty after load).
    pub states: Vec<GenState>,
    /// Atom → class representative, from the class rules.
    canon: HashMap<String, String>,
}

#[derive(Debug, thiserror::Error)]
pub enum TablesError {
    #[error("tables syntax error: {0}")]
    Syntax(String),
    #[error(transparent)]
    Term(#[from] TermParseError),
    #[error("rule line checksum does not match its content")]
    Checksum,
    #[error("reduce entry names unknown rule {0}")]
    UnknownRule(String),
}

impl GenTables {
    /// Rebuilds the atom → representative map from the class rules.
    fn build_canon(&mut self) {
        self.canon.clear();
        for r in &self.rules {
            if let Some(ms) = &r.members {
                if let Some((rep, _)) = ms.first() {
                    for (a, _) in ms {
                        if a != rep {
                            self.canon.insert(a.clone(), rep.clone());
                        }
                    }
                }
            }
        }
    }

    /// Replaces every atom that belongs to a lexical class by the class
    /// representative, so that an input logical form can be matched
    /// against table keys.
    pub fn canonicalize(&self, t: &Term) -> Term {
        match t {
            Term::Var(_) => t.clone(),
            Term::App(f, args) => {
                let name = if args.is_empty() {
                    self.canon.get(f).cloned().unwrap_or_else(|| f.clone())
                } else {
                    f.clone()
                };
                Term::App(name, args.iter().map(|a| self.canonicalize(a)).collect())
            }
        }
    }

    /// The word a class rule realizes for a member atom.
    pub fn class_word<'a>(rule: &'a TableRule, atom: &str) -> Option<&'a str> {
        rule.members
            .as_ref()
            .and_then(|ms| ms.iter().find(|(a, _)| a == atom))
            .map(|(_, w)| w.as_str())
    }

    fn candidates<'a>(
        entries: &'a [(usize, Term, usize)],
        state: usize,
        lf: &Term,
    ) -> Vec<(&'a Term, usize)> {
        let hits: Vec<(&Term, usize)> = entries
            .iter()
            .filter(|(from, key, _)| *from == state && subsumes(key, lf))
            .map(|(_, key, to)| (key, *to))
            .collect();
        // Most specific key first: rank each hit by how many other hits
        // strictly subsume it, then break ties by target and key text.
        let ranks: Vec<usize> = hits
            .iter()
            .map(|(k, _)| hits.iter().filter(|(o, _)| subsumes(o, k) && !subsumes(k, o)).count())
            .collect();
        let mut order: Vec<usize> = (0..hits.len()).collect();
        order.sort_by(|&a, &b| {
            ranks[b]
                .cmp(&ranks[a])
                .then(hits[a].1.cmp(&hits[b].1))
                .then_with(|| canonical_string(hits[a].0).cmp(&canonical_string(hits[b].0)))
        });
        order.into_iter().map(|i| hits[i]).collect()
    }

    /// Descend targets for a (canonicalized) argument logical form, most
    /// specific key first.
    pub fn descend_candidates(&self, state: usize, lf: &Term) -> Vec<(&Term, usize)> {
        GenTables::candidates(&self.descend, state, lf)
    }

    /// Goto targets for a completed argument, most specific key first.
    pub fn goto_candidates(&self, state: usize, lf: &Term) -> Vec<(&Term, usize)> {
        GenTables::candidates(&self.goto_entries, state, lf)
    }

    /// Indices into `rules` of the reduce alternatives at a state, in the
    /// order they are tried.
    pub fn reduce_rules(&self, state: usize) -> Vec<usize> {
        self.reduce.iter().filter(|(s, _)| *s == state).map(|(_, r)| *r).collect()
    }

    /// Reduce-set size per reductive state.
    pub fn nondeterminism_report(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for (s, _) in &self.reduce {
            *out.entry(*s).or_insert(0) += 1;
        }
        out
    }

    /// Numbered listing of all states and their items.
    pub fn state_listing(&self) -> String {
        let mut out = String::new();
        for st in &self.states {
            out.push_str(&st.to_string());
        }
        out
    }

    /// Line-oriented text form.  Emission is canonical and sorted, so
    /// saving, loading, and saving again reproduces the bytes exactly.
    pub fn save(&self) -> String {
        let mut out = String::from("lrgen-tables 1\n");
        out.push_str(&format!("top {}\n", canonical_string(&Term::atom(&self.top))));
        let mut rule_lines: Vec<String> =
            self.rules.iter().map(|r| format!("rule {} {}", r.hash(), r.payload())).collect();
        rule_lines.sort();
        for l in rule_lines {
            out.push_str(&l);
            out.push('\n');
        }
        for (tag, entries) in [("descend", &self.descend), ("goto", &self.goto_entries)] {
            let mut lines: Vec<(usize, String, usize)> = entries
                .iter()
                .map(|(f, k, t)| (*f, canonical_string(&canonical_key(k)), *t))
                .collect();
            lines.sort();
            for (f, k, t) in lines {
                out.push_str(&format!("{tag} {f} {k} {t}\n"));
            }
        }
        let mut red: Vec<(usize, String)> =
            self.reduce.iter().map(|(s, r)| (*s, self.rules[*r].hash())).collect();
        red.sort();
        for (s, h) in red {
            out.push_str(&format!("reduce {s} {h}\n"));
        }
        out
    }

    pub fn load(text: &str) -> Result<GenTables, TablesError> {
        let mut lines = text.lines();
        match lines.next() {
            Some("lrgen-tables 1") => {}
            _ => return Err(TablesError::Syntax("missing or unsupported header".into())),
        }
        let mut tables = GenTables {
            top: String::new(),
            rules: Vec::new(),
            descend: Vec::new(),
            goto_entries: Vec::new(),
            reduce: Vec::new(),
            states: Vec::new(),
            canon: HashMap::new(),
        };
        let mut by_hash: HashMap<String, usize> = HashMap::new();
        let mut reduce_raw: Vec<(usize, String)> = Vec::new();
        for line in lines {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = line
                .split_once(' ')
                .ok_or_else(|| TablesError::Syntax(format!("bad line: {line}")))?;
            match tag {
                "top" => match Term::parse(rest)? {
                    Term::App(name, args) if args.is_empty() => tables.top = name,
                    _ => return Err(TablesError::Syntax("top must be an atom".into())),
                },
                "rule" => {
                    let (hash, payload) = rest
                        .split_once(' ')
                        .ok_or_else(|| TablesError::Syntax("bad rule line".into()))?;
                    let rule = TableRule::from_payload(payload)?;
                    if rule.hash() != hash {
                        return Err(TablesError::Checksum);
                    }
                    by_hash.insert(hash.to_string(), tables.rules.len());
                    tables.rules.push(rule);
                }
                "descend" | "goto" => {
                    let mut toks: Vec<&str> = rest.split(' ').collect();
                    if toks.len() < 3 {
                        return Err(TablesError::Syntax(format!("bad entry: {line}")));
                    }
                    let from: usize = toks
                        .remove(0)
                        .parse()
                        .map_err(|_| TablesError::Syntax(format!("bad state in: {line}")))?;
                    let to: usize = toks
                        .pop()
                        .unwrap()
                        .parse()
                        .map_err(|_| TablesError::Syntax(format!("bad state in: {line}")))?;
                    let key = Term::parse(&toks.join(" "))?;
                    if tag == "descend" {
                        tables.descend.push((from, key, to));
                    } else {
                        tables.goto_entries.push((from, key, to));
                    }
                }
                "reduce" => {
                    let (s, h) = rest
                        .split_once(' ')
                        .ok_or_else(|| TablesError::Syntax("bad reduce line".into()))?;
                    let state: usize = s
                        .parse()
                        .map_err(|_| TablesError::Syntax(format!("bad state in: {line}")))?;
                    reduce_raw.push((state, h.to_string()));
                }
                _ => return Err(TablesError::Syntax(format!("unknown line tag: {tag}"))),
            }
        }
        for (state, h) in reduce_raw {
            let idx = *by_hash.get(&h).ok_or(TablesError::UnknownRule(h))?;
            tables.reduce.push((state, idx));
        }
        tables.reduce.sort_by(|a, b| {
            a.0.cmp(&b.0).then_with(|| tables.rules[a.1].hash().cmp(&tables.rules[b.1].hash()))
        });
        tables.build_canon();
        Ok(tables)
    }
}

// ---------------------------------------------------------------------------
// Compilation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum CompileMode {
    /// Keys keep functors down to a uniform depth (at least one: the root
    /// is always inspected).
    Fixed(u32),
    /// Per-step search for the shallowest keys that keep every reduce set
    /// within a tolerance, starting at 1.  With `strict`, tolerance stays
    /// at 1 and compilation fails when the budget cannot achieve it.
    Auto { budget: usize, strict: bool },
    /// Keys shaped by the subterms of a training corpus, with uniform
    /// `default_depth` keys covering inputs the corpus never showed.
    Examples { corpus: Vec<Term>, budget: usize, default_depth: u32 },
}

/// Default lookahead budget for the searching modes.  The assignment
/// space grows exponentially with the budget, so on grammars whose
/// conflicts no finite key resolves, raising this buys accuracy for
/// sharply more compile time.
pub const DEFAULT_BUDGET: usize = 6;
/// Default key depth for corpus-uncovered continuations in examples mode.
pub const DEFAULT_DEPTH: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error(
        "state {state}: reduce alternatives cannot be separated by lookahead within budget {budget}"
    )]
    Nondeterministic { state: usize, budget: usize },
}

struct LexClass {
    members: Vec<(String, String)>,
}

struct StateData {
    items: Vec<GenItem>,
    /// Corpus logical forms that reach this state (examples mode).
    live: BTreeMap<String, Term>,
    processed: bool,
    dead: bool,
}

struct Compiler<'g> {
    ng: &'g NormalGrammar,
    mode: &'g CompileMode,
    classes: Vec<LexClass>,
    lex_class: HashMap<usize, usize>,
    atom_rep: HashMap<String, String>,
    states: Vec<StateData>,
    sig_index: HashMap<String, usize>,
    redirect: HashMap<usize, usize>,
    descend: Vec<Vec<(Term, usize)>>,
    gotos: Vec<Vec<(Term, usize)>>,
    queue: VecDeque<usize>,
    invoke_memo: HashMap<String, Vec<TableRule>>,
    realizable_memo: HashMap<String, bool>,
    assignments: Vec<DepthAssignment>,
    max_arity: usize,
    budget: usize,
}

pub fn compile(ng: &NormalGrammar, mode: &CompileMode) -> Result<GenTables, CompileError> {
    Compiler::new(ng, mode).run()
}

impl<'g> Compiler<'g> {
    fn new(ng: &'g NormalGrammar, mode: &'g CompileMode) -> Compiler<'g> {
        let (classes, lex_class, atom_rep) = build_classes(ng);
        let mut max_arity = 0;
        for r in &ng.rules {
            if let Term::App(_, args) = strip_hats(&r.lhs.sem).0 {
                max_arity = max_arity.max(args.len());
            }
        }
        let budget = match mode {
            CompileMode::Fixed(_) => 0,
            CompileMode::Auto { budget, .. } => *budget,
            CompileMode::Examples { budget, .. } => *budget,
        };
        let assignments = enumerate_assignments(budget, max_arity);
        Compiler {
            ng,
            mode,
            classes,
            lex_class,
            atom_rep,
            states: Vec::new(),
            sig_index: HashMap::new(),
            redirect: HashMap::new(),
            descend: Vec::new(),
            gotos: Vec::new(),
            queue: VecDeque::new(),
            invoke_memo: HashMap::new(),
            realizable_memo: HashMap::new(),
            assignments,
            max_arity,
            budget,
        }
    }

    fn run(mut self) -> Result<GenTables, CompileError> {
        let initial = vec![GenItem { rule: self.dummy_rule(), dot: 0 }];
        let live = match self.mode {
            CompileMode::Examples { corpus, .. } => corpus
                .iter()
                .map(|t| {
                    let wrapped = Term::app(DUMMY, vec![self.canon_term(t)]);
                    (canonical_string(&canonical_key(&wrapped)), wrapped)
                })
                .collect(),
            _ => BTreeMap::new(),
        };
        let id = self.intern(initial, live);
        self.queue.push_back(id);
        while let Some(s) = self.queue.pop_front() {
            self.process(s)?;
        }
        Ok(self.emit())
    }

    fn canon_term(&self, t: &Term) -> Term {
        match t {
            Term::Var(_) => t.clone(),
            Term::App(f, args) => {
                let name = if args.is_empty() {
                    self.atom_rep.get(f).cloned().unwrap_or_else(|| f.clone())
                } else {
                    f.clone()
                };
                Term::App(name, args.iter().map(|a| self.canon_term(a)).collect())
            }
        }
    }

    fn dummy_rule(&self) -> TableRule {
        let x = Term::Var(0);
        let w0 = Term::Var(1);
        let w1 = Term::Var(2);
        let lhs = Constituent {
            cat: DUMMY.to_string(),
            sem: Term::app(DUMMY, vec![x.clone()]),
            w0: w0.clone(),
            w1: w1.clone(),
            a0: Term::nil(),
            a1: Term::nil(),
        };
        let rhs = vec![Constituent {
            cat: self.ng.top.clone(),
            sem: x,
            w0,
            w1,
            a0: Term::nil(),
            a1: Term::nil(),
        }];
        TableRule { rule: InvertedRule { lhs, rhs, chain: Vec::new() }, members: None }
    }

    fn canon_id(&self, mut id: usize) -> usize {
        while let Some(&next) = self.redirect.get(&id) {
            id = next;
        }
        id
    }

    // -- state interning ----------------------------------------------------

    fn signature(items: &[GenItem]) -> String {
        let mut texts: Vec<String> = items.iter().map(|i| i.text()).collect();
        texts.sort();
        texts.join("\n")
    }

    fn intern(&mut self, mut items: Vec<GenItem>, live: BTreeMap<String, Term>) -> usize {
        items.sort_by_key(|i| i.text());
        items.dedup_by_key(|i| i.text());
        let sig = Compiler::signature(&items);
        if let Some(&id) = self.sig_index.get(&sig) {
            self.absorb_live(id, live);
            return id;
        }
        // Subsumption against existing states of the same shape: a more
        // specific newcomer is abandoned in favor of the general state; a
        // more general newcomer replaces the specific one in place.
        let candidates: Vec<usize> = (0..self.states.len())
            .filter(|&i| {
                !self.states[i].dead
                    && self.states[i].items.len() == items.len()
                    && !self.states[i].items.is_empty()
                    && self.states[i].items[0].dot == items[0].dot
            })
            .collect();
        for id in candidates {
            if items_subsume(&self.states[id].items, &items) {
                self.absorb_live(id, live);
                return id;
            }
            if items_subsume(&items, &self.states[id].items) {
                let old_sig = Compiler::signature(&self.states[id].items);
                self.sig_index.remove(&old_sig);
                if let Some(&other) = self.sig_index.get(&sig) {
                    // The generalization already exists elsewhere: retire
                    // this state and route everything to the other one.
                    self.states[id].dead = true;
                    let live_old = std::mem::take(&mut self.states[id].live);
                    self.redirect.insert(id, other);
                    self.absorb_live(other, live_old);
                    self.absorb_live(other, live);
                    return other;
                }
                self.sig_index.insert(sig, id);
                self.states[id].items = items;
                self.states[id].processed = false;
                self.descend[id].clear();
                self.gotos[id].clear();
                self.absorb_live(id, live);
                self.queue.push_back(id);
                return id;
            }
        }
        let id = self.states.len();
        self.sig_index.insert(sig, id);
        self.states.push(StateData { items, live, processed: false, dead: false });
        self.descend.push(Vec::new());
        self.gotos.push(Vec::new());
        id
    }

    fn absorb_live(&mut self, id: usize, live: BTreeMap<String, Term>) {
        let id = self.canon_id(id);
        let before = self.states[id].live.len();
        self.states[id].live.extend(live);
        if self.states[id].live.len() > before && self.states[id].processed {
            self.states[id].processed = false;
            self.descend[id].clear();
            self.gotos[id].clear();
            self.queue.push_back(id);
        }
    }

    // -- rule invocation ----------------------------------------------------

    /// All table rules invocable at a goal context: inverted rules with
    /// lexical families folded into class rules, filtered so that every
    /// already-instantiated argument is realizable.
    fn invoke_context(&mut self, ctx: &Constituent) -> Vec<TableRule> {
        let key = canonical_string(&canonical_key(&ctx.to_term()));
        if let Some(hit) = self.invoke_memo.get(&key) {
            return hit.clone();
        }
        let mut out: Vec<TableRule> = Vec::new();
        for r in invert_context(self.ng, ctx) {
            let tr = self.classify(r);
            if tr.members.is_some() || self.admissible(&tr.rule) {
                out.push(tr);
            }
        }
        out.sort_by_key(|r| r.payload());
        out.dedup_by_key(|r| r.payload());
        self.invoke_memo.insert(key, out.clone());
        out
    }

    /// Folds a rule bottoming out in a multi-member lexical class into the
    /// class rule: the member atom becomes a variable in the logical form
    /// and the member word a variable in the word string.
    fn classify(&self, r: InvertedRule) -> TableRule {
        let class = r
            .lex_index()
            .filter(|_| r.rhs.is_empty())
            .and_then(|i| self.lex_class.get(&i).copied());
        let Some(cid) = class else {
            return TableRule { rule: r, members: None };
        };
        let lex = &self.ng.lexical[r.lex_index().unwrap()];
        let atom = match strip_hats(&lex.entry.sem).0 {
            Term::App(a, args) if args.is_empty() => a.clone(),
            _ => return TableRule { rule: r, members: None },
        };
        let mut vg = VarGen::above(&[&r.lhs.to_term()]);
        let sem_var = vg.fresh_var();
        let word_var = vg.fresh_var();
        let lhs = Constituent {
            cat: r.lhs.cat.clone(),
            sem: replace_atom(&r.lhs.sem, &atom, &sem_var),
            w0: replace_atom(&r.lhs.w0, &lex.word, &word_var),
            w1: replace_atom(&r.lhs.w1, &lex.word, &word_var),
            a0: r.lhs.a0.clone(),
            a1: r.lhs.a1.clone(),
        };
        TableRule {
            rule: InvertedRule { lhs, rhs: Vec::new(), chain: r.chain },
            members: Some(self.classes[cid].members.clone()),
        }
    }

    /// A rule is admissible when each argument position whose logical form
    /// is already structured can actually invoke at least one rule,
    /// recursively.  This prunes alternatives that lookahead has already
    /// refuted (a modifier rule instantiated with a logical form no
    /// modifier can realize, say).
    fn admissible(&mut self, r: &InvertedRule) -> bool {
        let body = strip_hats(&r.lhs.sem).0.clone();
        let Term::App(_, args) = body else {
            return true;
        };
        for (j, t) in args.iter().enumerate() {
            if !t.is_var() && !self.realizable(&r.rhs[j]) {
                return false;
            }
        }
        true
    }

    fn realizable(&mut self, rhs_c: &Constituent) -> bool {
        let ctx = context_of(rhs_c);
        let key = canonical_string(&canonical_key(&ctx.to_term()));
        if let Some(&hit) = self.realizable_memo.get(&key) {
            return hit;
        }
        let rules = invert_context(self.ng, &ctx);
        let ans = rules.iter().any(|r| self.admissible(r));
        self.realizable_memo.insert(key, ans);
        ans
    }

    /// The dot-position goal contexts of a set of items, deduplicated.
    fn contexts_at(items: &[GenItem], p: usize) -> Vec<Constituent> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for item in items {
            let ctx = context_of(&item.rule.rule.rhs[p]);
            let key = canonical_string(&canonical_key(&ctx.to_term()));
            if seen.insert(key) {
                out.push(ctx);
            }
        }
        out
    }

    /// Items invoked when descending with a key at the given contexts.
    fn invoke_with_key(&mut self, ctxs: &[Constituent], key: &Term) -> Vec<GenItem> {
        let mut out: Vec<GenItem> = Vec::new();
        for ctx in ctxs {
            let ctx_term = ctx.to_term();
            let mut vg = VarGen::above(&[&ctx_term, key]);
            let k2 = rename_apart_group(&[key], &mut vg).pop().unwrap();
            let body = strip_hats(&ctx.sem).0.clone();
            let Some(env) = unify(&body, &k2, &Bindings::new()) else {
                continue;
            };
            let ctx2 = resolve_constituent(ctx, &env);
            for tr in self.invoke_context(&ctx2) {
                out.push(GenItem { rule: tr, dot: 0 });
            }
        }
        out.sort_by_key(|i| i.text());
        out.dedup_by_key(|i| i.text());
        out
    }

    /// One-level shapes an item's argument position can take: the root of
    /// the instantiated subterm, or the roots of all rules invocable at
    /// the position's context.
    fn item_shapes(&mut self, item: &GenItem, q: usize) -> Vec<Term> {
        let body = item.body();
        let Term::App(_, args) = &body else {
            return Vec::new();
        };
        let mut vg = VarGen::new();
        let mut out = BTreeMap::new();
        if !args[q].is_var() {
            let s = root_shape(&args[q], &mut vg);
            out.insert(canonical_string(&canonical_key(&s)), s);
        } else {
            let ctx = context_of(&item.rule.rule.rhs[q]);
            for tr in self.invoke_context(&ctx) {
                let s = self.rule_shape(&tr, &mut vg);
                out.insert(canonical_string(&canonical_key(&s)), s);
            }
        }
        out.into_values().collect()
    }

    /// The one-level shape a table rule's logical form takes; classes are
    /// represented by their first member.
    fn rule_shape(&self, tr: &TableRule, vg: &mut VarGen) -> Term {
        if let Some(ms) = &tr.members {
            return Term::atom(&ms[0].0);
        }
        root_shape(strip_hats(&tr.rule.lhs.sem).0, vg)
    }

    // -- key refinement -----------------------------------------------------

    /// Key shapes realizable at the given contexts under a depth
    /// assignment: every invocable rule contributes its logical form with
    /// each kept argument refined through that argument's own context and
    /// each cut argument replaced by a fresh variable.
    fn refine(&mut self, ctxs: &[Constituent], d: &DepthAssignment) -> Vec<Term> {
        let kids = match d {
            DepthAssignment::Cut => return vec![Term::Var(0)],
            DepthAssignment::Keep(kids) => kids.clone(),
        };
        let mut out: BTreeMap<String, Term> = BTreeMap::new();
        for ctx in ctxs {
            for tr in self.invoke_context(ctx) {
                let mut vg = VarGen::new();
                if let Some(members) = &tr.members {
                    let s = Term::atom(&members[0].0);
                    out.insert(canonical_string(&canonical_key(&s)), s);
                    continue;
                }
                let body = strip_hats(&tr.rule.lhs.sem).0.clone();
                let Term::App(f, args) = &body else {
                    continue;
                };
                let mut per_arg: Vec<Vec<Term>> = Vec::new();
                for j in 0..args.len() {
                    let kd = kids.get(j).unwrap_or(&DepthAssignment::Cut);
                    match kd {
                        DepthAssignment::Cut => per_arg.push(vec![Term::Var(0)]),
                        keep => {
                            let sub_ctx = context_of(&tr.rule.rhs[j]);
                            per_arg.push(self.refine(&[sub_ctx], keep));
                        }
                    }
                }
                for combo in cartesian(&per_arg) {
                    // Parts come from independent refinements, so rename
                    // them one by one to keep their variables disjoint.
                    let renamed: Vec<Term> =
                        combo.iter().map(|part| rename_apart(part, &mut vg)).collect();
                    let s = Term::App(f.clone(), renamed);
                    out.insert(canonical_string(&canonical_key(&s)), s);
                }
            }
        }
        out.into_values().map(|t| canonical_key(&t)).collect()
    }

    // -- determinism measurement ---------------------------------------------

    /// The largest reduce set any run-time path through an invoked state
    /// can retain, measured per key: the invoked items are partitioned by
    /// which one-level shapes their remaining argument positions admit
    /// (exactly what goto filtering will do), and the same measure is
    /// applied one level down to the item sets each (position, shape)
    /// pair invokes, since a mixed invocation there cannot be split by
    /// any later key.
    fn max_cell(&mut self, ctxs: &[Constituent], keys: &[Term]) -> usize {
        let mut worst = 0;
        for k in keys {
            let target = self.invoke_with_key(ctxs, k);
            if target.is_empty() {
                continue;
            }
            worst = worst.max(self.cell_measure(&target));
            let arity = target[0].arity();
            for q in 0..arity {
                let mut shape_union: BTreeMap<String, Term> = BTreeMap::new();
                let mut admits: Vec<Vec<String>> = Vec::new();
                for item in &target {
                    let shapes = self.item_shapes(item, q);
                    let texts: Vec<String> =
                        shapes.iter().map(|s| canonical_string(&canonical_key(s))).collect();
                    for (s, t) in shapes.into_iter().zip(texts.iter()) {
                        shape_union.insert(t.clone(), s);
                    }
                    admits.push(texts);
                }
                for (text, shape) in &shape_union {
                    let sub_ctxs: Vec<Constituent> = target
                        .iter()
                        .zip(&admits)
                        .filter(|(_, a)| a.contains(text))
                        .map(|(i, _)| context_of(&i.rule.rule.rhs[q]))
                        .collect();
                    let sub = self.invoke_with_key(&sub_ctxs, shape);
                    if !sub.is_empty() {
                        worst = worst.max(self.cell_measure(&sub));
                    }
                }
            }
        }
        worst
    }

    /// Partition freshly invoked items by admissible shape profiles over
    /// all argument positions; the largest cell bounds the reduce set a
    /// single run-time path can reach in the state they form.
    fn cell_measure(&mut self, items: &[GenItem]) -> usize {
        let arity = items[0].arity();
        if arity == 0 {
            return items.len();
        }
        let mut admits: Vec<Vec<BTreeSet<String>>> = Vec::new();
        for item in items {
            let mut per_q = Vec::new();
            for q in 0..arity {
                per_q.push(
                    self.item_shapes(item, q)
                        .iter()
                        .map(|s| canonical_string(&canonical_key(s)))
                        .collect::<BTreeSet<String>>(),
                );
            }
            admits.push(per_q);
        }
        let unions: Vec<Vec<&String>> = (0..arity)
            .map(|q| {
                let mut u = BTreeSet::new();
                for a in &admits {
                    u.extend(a[q].iter());
                }
                u.into_iter().collect()
            })
            .collect();
        // A position no item can realize makes the whole state dead.
        if unions.iter().any(|u| u.is_empty()) {
            return 0;
        }
        let mut worst = 0;
        let mut seq = vec![0usize; arity];
        loop {
            let cell = admits
                .iter()
                .filter(|a| (0..arity).all(|q| a[q].contains(unions[q][seq[q]])))
                .count();
            worst = worst.max(cell);
            let mut q = 0;
            loop {
                if q == arity {
                    return worst;
                }
                seq[q] += 1;
                if seq[q] < unions[q].len() {
                    break;
                }
                seq[q] = 0;
                q += 1;
            }
        }
    }

    // -- per-state key selection ----------------------------------------------

    fn keys_for(
        &mut self,
        sid: usize,
        items: &[GenItem],
        p: usize,
    ) -> Result<Vec<Term>, CompileError> {
        let ctxs = Compiler::contexts_at(items, p);
        match self.mode {
            CompileMode::Fixed(d) => {
                let d = (*d).max(1);
                let tree = uniform_tree(d, self.max_arity);
                Ok(self.refine(&ctxs, &tree))
            }
            CompileMode::Auto { strict, .. } => {
                let assignments = self.assignments.clone();
                let mut tolerance = 1;
                loop {
                    for d in &assignments {
                        let keys = self.refine(&ctxs, d);
                        if self.max_cell(&ctxs, &keys) <= tolerance {
                            return Ok(keys);
                        }
                    }
                    if *strict {
                        return Err(CompileError::Nondeterministic {
                            state: sid + 1,
                            budget: self.budget,
                        });
                    }
                    tolerance += 1;
                    if tolerance > 1024 {
                        // Unreachable: tolerance eventually exceeds every
                        // invoked set's size and the depth-1 assignment
                        // passes.  Fail loudly rather than loop.
                        return Err(CompileError::Nondeterministic {
                            state: sid + 1,
                            budget: self.budget,
                        });
                    }
                }
            }
            CompileMode::Examples { default_depth, .. } => {
                let default_depth = *default_depth;
                let arity = items[0].arity();
                let exact: Vec<Term> = self.states[sid]
                    .live
                    .values()
                    .filter_map(|t| match t {
                        Term::App(_, args) if args.len() == arity => Some(args[p].clone()),
                        _ => None,
                    })
                    .map(|t| canonical_key(&t))
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let defaults = {
                    let tree = uniform_tree(default_depth.max(1), self.max_arity);
                    self.refine(&ctxs, &tree)
                };
                if exact.is_empty() {
                    return Ok(defaults);
                }
                let target = self.max_cell(&ctxs, &exact);
                let assignments = self.assignments.clone();
                let mut chosen: Option<Vec<Term>> = None;
                for d in &assignments {
                    let mut vg = VarGen::new();
                    let masked: Vec<Term> = exact
                        .iter()
                        .map(|t| canonical_key(&truncate(t, d, &mut vg)))
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    if self.max_cell(&ctxs, &masked) <= target {
                        chosen = Some(masked);
                        break;
                    }
                }
                let chosen = chosen.unwrap_or(exact);
                let mut keys: BTreeMap<String, Term> = BTreeMap::new();
                for k in chosen.into_iter().chain(defaults) {
                    keys.insert(canonical_string(&canonical_key(&k)), k);
                }
                Ok(keys.into_values().collect())
            }
        }
    }

    // -- state processing -----------------------------------------------------

    fn process(&mut self, sid: usize) -> Result<(), CompileError> {
        let sid = self.canon_id(sid);
        if self.states[sid].dead || self.states[sid].processed {
            return Ok(());
        }
        self.states[sid].processed = true;
        self.descend[sid].clear();
        self.gotos[sid].clear();
        let items = self.states[sid].items.clone();
        if items.is_empty() {
            return Ok(());
        }
        let arity = items[0].arity();
        let dot = items[0].dot;
        debug_assert!(
            items.iter().all(|i| i.dot == dot && i.arity() == arity),
            "state {} mixes dots or arities",
            sid + 1
        );
        if dot == arity {
            return Ok(());
        }
        // Descend step: choose keys, invoke the target states.
        let keys = self.keys_for(sid, &items, dot)?;
        let ctxs = Compiler::contexts_at(&items, dot);
        for k in keys {
            let target = self.invoke_with_key(&ctxs, &k);
            if target.is_empty() {
                continue;
            }
            let live = self.flow_descend(sid, dot, arity, &k);
            let tid = self.intern(target, live);
            self.descend[sid].push((canonical_key(&k), tid));
            self.process(tid)?;
        }
        // Goto step: advance the dot under each one-level shape.
        let mut shape_union: BTreeMap<String, Term> = BTreeMap::new();
        let mut admits: Vec<BTreeSet<String>> = Vec::new();
        for item in &items {
            let shapes = self.item_shapes(item, dot);
            let mut texts = BTreeSet::new();
            for s in shapes {
                let t = canonical_string(&canonical_key(&s));
                texts.insert(t.clone());
                shape_union.insert(t, s);
            }
            admits.push(texts);
        }
        for (text, shape) in shape_union {
            let mut succ = Vec::new();
            for (item, adm) in items.iter().zip(&admits) {
                if !adm.contains(&text) {
                    continue;
                }
                if let Some(advanced) = advance_item(item, dot, &shape) {
                    succ.push(advanced);
                }
            }
            if succ.is_empty() {
                continue;
            }
            let live = self.flow_goto(sid, dot, arity, &shape);
            let tid = self.intern(succ, live);
            self.gotos[sid].push((canonical_key(&shape), tid));
            self.process(tid)?;
        }
        Ok(())
    }

    fn flow_descend(
        &self,
        sid: usize,
        p: usize,
        arity: usize,
        key: &Term,
    ) -> BTreeMap<String, Term> {
        let mut out = BTreeMap::new();
        for t in self.states[sid].live.values() {
            if let Term::App(_, args) = t {
                if args.len() == arity && subsumes(key, &args[p]) {
                    out.insert(canonical_string(&canonical_key(&args[p])), args[p].clone());
                }
            }
        }
        out
    }

    fn flow_goto(
        &self,
        sid: usize,
        p: usize,
        arity: usize,
        shape: &Term,
    ) -> BTreeMap<String, Term> {
        let mut out = BTreeMap::new();
        for (k, t) in &self.states[sid].live {
            if let Term::App(_, args) = t {
                if args.len() == arity && subsumes(shape, &args[p]) {
                    out.insert(k.clone(), t.clone());
                }
            }
        }
        out
    }

    // -- emission --------------------------------------------------------------

    fn emit(self) -> GenTables {
        // Walk the reachable graph, renumber states densely in creation
        // (depth-first) order, and collect the tables.
        let root = self.canon_id(0);
        let mut reachable = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(s) = stack.pop() {
            if !reachable.insert(s) {
                continue;
            }
            for (_, t) in self.descend[s].iter().chain(self.gotos[s].iter()) {
                stack.push(self.canon_id(*t));
            }
        }
        let mut number = HashMap::new();
        for (n, s) in reachable.iter().enumerate() {
            number.insert(*s, n + 1);
        }
        let mut tables = GenTables {
            top: self.ng.top.clone(),
            rules: Vec::new(),
            descend: Vec::new(),
            goto_entries: Vec::new(),
            reduce: Vec::new(),
            states: Vec::new(),
            canon: HashMap::new(),
        };
        let mut rule_index: HashMap<String, usize> = HashMap::new();
        for &s in &reachable {
            let ext = number[&s];
            for (k, t) in &self.descend[s] {
                tables.descend.push((ext, k.clone(), number[&self.canon_id(*t)]));
            }
            for (k, t) in &self.gotos[s] {
                tables.goto_entries.push((ext, k.clone(), number[&self.canon_id(*t)]));
            }
            let items = &self.states[s].items;
            if !items.is_empty() && items[0].is_reductive() {
                debug_assert!(
                    self.descend[s].is_empty() && self.gotos[s].is_empty(),
                    "reductive state {} has successors",
                    ext
                );
                for item in items {
                    let payload = item.rule.payload();
                    let idx = *rule_index.entry(payload).or_insert_with(|| {
                        tables.rules.push(item.rule.clone());
                        tables.rules.len() - 1
                    });
                    tables.reduce.push((ext, idx));
                }
            }
            tables.states.push(GenState { id: ext, items: items.clone() });
        }
        // Order rules by hash and remap, so in-memory order matches the
        // serialized order exactly.
        let mut order: Vec<usize> = (0..tables.rules.len()).collect();
        order.sort_by_key(|&i| tables.rules[i].hash());
        let mut remap = vec![0usize; tables.rules.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let rules = std::mem::take(&mut tables.rules);
        let mut sorted_rules: Vec<Option<TableRule>> = vec![None; rules.len()];
        for (old, r) in rules.into_iter().enumerate() {
            sorted_rules[remap[old]] = Some(r);
        }
        tables.rules = sorted_rules.into_iter().map(|r| r.unwrap()).collect();
        for (_, r) in tables.reduce.iter_mut() {
            *r = remap[*r];
        }
        tables.reduce.sort_by(|a, b| {
            a.0.cmp(&b.0).then_with(|| tables.rules[a.1].hash().cmp(&tables.rules[b.1].hash()))
        });
        tables.descend.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| canonical_string(&a.1).cmp(&canonical_string(&b.1)))
                .then(a.2.cmp(&b.2))
        });
        tables.goto_entries.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| canonical_string(&a.1).cmp(&canonical_string(&b.1)))
                .then(a.2.cmp(&b.2))
        });
        tables.build_canon();
        tables
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn replace_atom(t: &Term, name: &str, var: &Term) -> Term {
    match t {
        Term::App(f, args) if f == name && args.is_empty() => var.clone(),
        Term::App(f, args) => {
            Term::App(f.clone(), args.iter().map(|a| replace_atom(a, name, var)).collect())
        }
        Term::Var(_) => t.clone(),
    }
}

fn root_shape(t: &Term, vg: &mut VarGen) -> Term {
    match t {
        Term::Var(_) => vg.fresh_var(),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|_| vg.fresh_var()).collect()),
    }
}

fn cartesian(per_arg: &[Vec<Term>]) -> Vec<Vec<Term>> {
    let mut out = vec![Vec::new()];
    for options in per_arg {
        let mut next = Vec::new();
        for prefix in &out {
            for o in options {
                let mut row = prefix.clone();
                row.push(o.clone());
                next.push(row);
            }
        }
        out = next;
    }
    out
}

/// Advances an item's dot after its current argument has been generated
/// under the given one-level shape, instantiating the argument with it.
fn advance_item(item: &GenItem, p: usize, shape: &Term) -> Option<GenItem> {
    let terms = item.terms();
    let refs: Vec<&Term> = terms.iter().collect();
    let mut vg = VarGen::above(&refs);
    let shape2 = rename_apart_group(&[shape], &mut vg).pop().unwrap();
    let body = item.body();
    let arg = match &body {
        Term::App(_, args) => args[p].clone(),
        _ => return None,
    };
    let env = unify(&arg, &shape2, &Bindings::new())?;
    let rule = &item.rule.rule;
    let lhs = resolve_constituent(&rule.lhs, &env);
    let rhs: Vec<Constituent> = rule.rhs.iter().map(|c| resolve_constituent(c, &env)).collect();
    Some(GenItem {
        rule: TableRule {
            rule: InvertedRule { lhs, rhs, chain: rule.chain.clone() },
            members: item.rule.members.clone(),
        },
        dot: item.dot + 1,
    })
}

/// Perfect matching test: every item of `spec` is subsumed by a distinct
/// item of `gen`.
fn items_subsume(gen: &[GenItem], spec: &[GenItem]) -> bool {
    if gen.len() != spec.len() {
        return false;
    }
    fn rec(gen: &[GenItem], spec: &[GenItem], used: &mut Vec<bool>, i: usize) -> bool {
        if i == spec.len() {
            return true;
        }
        for (j, g) in gen.iter().enumerate() {
            if used[j] || g.dot != spec[i].dot || g.rule.members != spec[i].rule.members {
                continue;
            }
            let gt = g.terms();
            let st = spec[i].terms();
            let gr: Vec<&Term> = gt.iter().collect();
            let sr: Vec<&Term> = st.iter().collect();
            if subsumes_group(&gr, &sr) {
                used[j] = true;
                if rec(gen, spec, used, i + 1) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    let mut used = vec![false; gen.len()];
    rec(gen, spec, &mut used, 0)
}

fn uniform_tree(depth: u32, arity: usize) -> DepthAssignment {
    if depth == 0 {
        return DepthAssignment::Cut;
    }
    DepthAssignment::Keep(vec![uniform_tree(depth - 1, arity); arity])
}

/// All depth assignments with lookahead totals 1..=budget, ordered by
/// total and then leftmost-deepest first, so the search tries the
/// cheapest and most prefix-like keys before anything fancier.
fn enumerate_assignments(budget: usize, arity: usize) -> Vec<DepthAssignment> {
    fn with_total(total: usize, arity: usize) -> Vec<DepthAssignment> {
        fn fill(slots: usize, left: usize, arity: usize) -> Vec<Vec<DepthAssignment>> {
            if slots == 0 {
                return if left == 0 { vec![Vec::new()] } else { Vec::new() };
            }
            let mut out = Vec::new();
            for c in (0..=left).rev() {
                let subs = if c == 0 { vec![DepthAssignment::Cut] } else { with_total(c, arity) };
                for sub in subs {
                    for rest in fill(slots - 1, left - c, arity) {
                        let mut row = vec![sub.clone()];
                        row.extend(rest);
                        out.push(row);
                    }
                }
            }
            out
        }
        fill(arity, total - 1, arity).into_iter().map(DepthAssignment::Keep).collect()
    }
    let mut out = Vec::new();
    for total in 1..=budget.max(1) {
        out.extend(with_total(total, arity));
    }
    out
}

fn build_classes(
    ng: &NormalGrammar,
) -> (Vec<LexClass>, HashMap<usize, usize>, HashMap<String, String>) {
    // Atoms that appear anywhere other than as the whole logical form of a
    // lexicon entry may not be masked: collect them as blockers.
    let mut blocked: HashSet<String> = HashSet::new();
    fn collect(t: &Term, blocked: &mut HashSet<String>) {
        match t {
            Term::App(f, args) if args.is_empty() => {
                if f != crate::terms::NIL {
                    blocked.insert(f.clone());
                }
            }
            Term::App(_, args) => {
                for a in args {
                    collect(a, blocked);
                }
            }
            Term::Var(_) => {}
        }
    }
    for r in &ng.rules {
        collect(strip_hats(&r.lhs.sem).0, &mut blocked);
    }
    let mut bare: Vec<(usize, String, String, String)> = Vec::new(); // (lex index, cat, atom, word)
    for lex in &ng.lexical {
        let sem = strip_hats(&lex.entry.sem).0;
        match sem {
            Term::App(a, args) if args.is_empty() => {
                bare.push((lex.index, lex.entry.cat.clone(), a.clone(), lex.word.clone()));
            }
            other => collect(other, &mut blocked),
        }
    }
    // An atom used by two different categories cannot be typed either.
    let mut seen: HashMap<&str, &str> = HashMap::new();
    for (_, cat, atom, _) in &bare {
        match seen.get(atom.as_str()) {
            Some(c) if *c != cat.as_str() => {
                blocked.insert(atom.clone());
            }
            _ => {
                seen.insert(atom.as_str(), cat.as_str());
            }
        }
    }
    let mut by_cat: BTreeMap<String, Vec<(usize, String, String)>> = BTreeMap::new();
    for (i, cat, atom, word) in bare {
        if !blocked.contains(&atom) {
            by_cat.entry(cat).or_default().push((i, atom, word));
        }
    }
    let mut classes = Vec::new();
    let mut lex_class = HashMap::new();
    let mut atom_rep = HashMap::new();
    for (_, mut members) in by_cat {
        if members.len() < 2 {
            continue;
        }
        members.sort_by(|a, b| a.1.cmp(&b.1));
        let rep = members[0].1.clone();
        let cid = classes.len();
        for (i, atom, _) in &members {
            lex_class.insert(*i, cid);
            if *atom != rep {
                atom_rep.insert(atom.clone(), rep.clone());
            }
        }
        classes.push(LexClass { members: members.into_iter().map(|(_, a, w)| (a, w)).collect() });
    }
    (classes, lex_class, atom_rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{Grammar, QUESTIONS};
    use crate::terms::variant_group;

    fn sample() -> NormalGrammar {
        Grammar::parse(QUESTIONS).unwrap().normalize()
    }

    fn fixed(d: u32) -> GenTables {
        compile(&sample(), &CompileMode::Fixed(d)).unwrap()
    }

    fn item_matches(item: &GenItem, golden: &str) -> bool {
        let want = Term::parse(golden).unwrap();
        let want: Vec<Term> = want.proper_list().unwrap().into_iter().cloned().collect();
        let have = item.terms();
        let hr: Vec<&Term> = have.iter().collect();
        let wr: Vec<&Term> = want.iter().collect();
        variant_group(&hr, &wr)
    }

    fn state_matches(st: &GenState, dot: usize, goldens: &[&str]) -> bool {
        st.items.len() == goldens.len()
            && goldens.iter().all(|g| st.items.iter().any(|i| i.dot == dot && item_matches(i, g)))
    }

    const DUMMY_ITEM: &str = "[c('$top', '$top'(X), W0, W, [], []), c('S', X, W0, W, [], [])]";
    const S_QM: &str = "[c('S', mod(X, Y), W0, W, [], []), \
                        c('S', X, W0, W1, [], []), c('QM', Y, W1, W, [], [])]";
    const S_QM_YNQ: &str = "[c('S', mod(X, ynq), W0, W, [], []), \
                            c('S', X, W0, W1, [], []), c('QM', ynq, W1, W, [], [])]";
    const S_ADVP: &str = "[c('S', mod(Y, Z), W0, W, [], []), \
                          c('VP', X^Y, W1, W2, [arg('NP', X, W0, W1)], []), \
                          c('AdvP', Z, W2, W, [], [])]";
    const S_PP: &str = "[c('S', mod(Y, Z), W0, W, [], []), \
                        c('VP', X^Y, W1, W2, [arg('NP', X, W0, W1)], []), \
                        c('PP', Z, W2, W, [], [])]";
    const VP_ADVP: &str = "[c('VP', X^mod(Y, Z), W0, W, [arg('NP', X, W1, W0)], []), \
                           c('VP', X^Y, W0, W2, [arg('NP', X, W1, W0)], []), \
                           c('AdvP', Z, W2, W, [], [])]";
    const VP_PP: &str = "[c('VP', X^mod(Y, Z), W0, W, [arg('NP', X, W1, W0)], []), \
                         c('VP', X^Y, W0, W2, [arg('NP', X, W1, W0)], []), \
                         c('PP', Z, W2, W, [], [])]";

    fn descend_keys(tables: &GenTables, state: usize) -> Vec<String> {
        tables
            .descend
            .iter()
            .filter(|(f, _, _)| *f == state)
            .map(|(_, k, _)| canonical_string(k))
            .collect()
    }

    #[test]
    fn depth_one_states_match_the_hand_construction() {
        let tables = fixed(1);
        assert!(state_matches(&tables.states[0], 0, &[DUMMY_ITEM]));
        // State 1 descends into the goal with one key per root functor.
        assert_eq!(descend_keys(&tables, 1), vec!["mod(_, _)", "see(_, _)", "sleep(_)"]);
        // The modifier key invokes the three top-category rules.
        let s2 = tables
            .descend
            .iter()
            .find(|(f, k, _)| *f == 1 && canonical_string(k) == "mod(_, _)")
            .unwrap()
            .2;
        assert_eq!(s2, 2);
        assert!(state_matches(&tables.states[1], 0, &[S_QM, S_ADVP, S_PP]));
        // Descending into a modifier argument that is itself a modifier
        // brings in the argument-carrying variants as well.
        let s3 = tables
            .descend
            .iter()
            .find(|(f, k, _)| *f == 2 && canonical_string(k) == "mod(_, _)")
            .unwrap()
            .2;
        assert_eq!(s3, 3);
        assert!(state_matches(&tables.states[2], 0, &[S_QM, S_ADVP, S_PP, VP_ADVP, VP_PP]));
        // That state absorbs its own modifier descent.
        let s3_loop = tables
            .descend
            .iter()
            .find(|(f, k, _)| *f == 3 && canonical_string(k) == "mod(_, _)")
            .unwrap()
            .2;
        assert_eq!(s3_loop, 3);
    }

    #[test]
    fn deeper_fixed_keys_refine_through_the_arguments() {
        let tables = fixed(2);
        let keys = descend_keys(&tables, 1);
        for want in ["mod(mod(_, _), ynq)", "mod(see(_, _), ynq)", "mod(sleep(_), ynq)"] {
            assert!(keys.iter().any(|k| k == want), "missing key {want} in {keys:?}");
        }
        // Keys never mention non-representative class members.
        assert!(keys.iter().all(|k| !k.contains("mary") && !k.contains("paris")));
    }

    #[test]
    fn auto_mode_resolves_every_reduce_conflict() {
        let baseline = fixed(1);
        assert!(
            baseline.nondeterminism_report().values().any(|&n| n >= 2),
            "depth-1 tables should have a reduce conflict to resolve"
        );
        let tables =
            compile(&sample(), &CompileMode::Auto { budget: DEFAULT_BUDGET, strict: false })
                .unwrap();
        let report = tables.nondeterminism_report();
        assert!(!report.is_empty());
        assert!(report.values().all(|&n| n == 1), "report: {report:?}");
        let keys = descend_keys(&tables, 1);
        let ynq_keys: Vec<&String> = keys.iter().filter(|k| k.as_str() == "mod(_, ynq)").collect();
        assert_eq!(ynq_keys.len(), 1, "keys: {keys:?}");
        let target = tables
            .descend
            .iter()
            .find(|(f, k, _)| *f == 1 && canonical_string(k) == "mod(_, ynq)")
            .unwrap()
            .2;
        let st = tables.states.iter().find(|s| s.id == target).unwrap();
        assert!(state_matches(st, 0, &[S_QM_YNQ]), "{st}");
    }

    #[test]
    fn example_driven_keys_follow_the_corpus() {
        let corpus = vec![Term::parse("mod(sleep(john), ynq)").unwrap()];
        let tables = compile(
            &sample(),
            &CompileMode::Examples { corpus, budget: DEFAULT_BUDGET, default_depth: 1 },
        )
        .unwrap();
        let keys = descend_keys(&tables, 1);
        assert!(keys.iter().any(|k| k == "mod(_, ynq)"), "keys: {keys:?}");
        assert!(keys.iter().any(|k| k == "mod(_, _)"), "keys: {keys:?}");
        let target = tables
            .descend
            .iter()
            .find(|(f, k, _)| *f == 1 && canonical_string(k) == "mod(_, ynq)")
            .unwrap()
            .2;
        let st = tables.states.iter().find(|s| s.id == target).unwrap();
        assert_eq!(st.items.len(), 1, "{st}");
        assert!(state_matches(st, 0, &[S_QM_YNQ]), "{st}");
        // The general key still reaches the complete three-way state.
        let fallback = tables
            .descend
            .iter()
            .find(|(f, k, _)| *f == 1 && canonical_string(k) == "mod(_, _)")
            .unwrap()
            .2;
        let st = tables.states.iter().find(|s| s.id == fallback).unwrap();
        assert!(state_matches(st, 0, &[S_QM, S_ADVP, S_PP]));
    }

    #[test]
    fn proper_nouns_share_one_class_rule() {
        let tables = fixed(1);
        let class = tables
            .rules
            .iter()
            .find(|r| r.members.is_some())
            .expect("expected a lexical class rule");
        let ms = class.members.as_ref().unwrap();
        let atoms: Vec<&str> = ms.iter().map(|(a, _)| a.as_str()).collect();
        assert_eq!(atoms, vec!["john", "mary", "paris"]);
        assert_eq!(GenTables::class_word(class, "mary"), Some("Mary"));
        assert_eq!(tables.canonicalize(&Term::atom("paris")), Term::atom("john"));
    }

    #[test]
    fn reductive_states_have_no_successors() {
        for tables in [
            fixed(1),
            compile(&sample(), &CompileMode::Auto { budget: DEFAULT_BUDGET, strict: false })
                .unwrap(),
        ] {
            let reductive: BTreeSet<usize> = tables.reduce.iter().map(|(s, _)| *s).collect();
            for (f, _, _) in tables.descend.iter().chain(tables.goto_entries.iter()) {
                assert!(!reductive.contains(f), "state {f} both reduces and moves");
            }
        }
    }

    #[test]
    fn tables_round_trip_through_text() {
        for tables in [
            fixed(1),
            compile(&sample(), &CompileMode::Auto { budget: DEFAULT_BUDGET, strict: false })
                .unwrap(),
        ] {
            let text = tables.save();
            let loaded = GenTables::load(&text).unwrap();
            assert_eq!(loaded.save(), text);
            assert_eq!(loaded.nondeterminism_report(), tables.nondeterminism_report());
            assert_eq!(loaded.top, tables.top);
        }
    }
}
