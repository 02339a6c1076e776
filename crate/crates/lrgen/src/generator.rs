//! Table-driven surface generation.
//!
//! The generator walks a logical form top-down, but applies rules bottom-up:
//! at each state it descends into the next argument of the current focus,
//! builds the constituents that realize that argument, advances through the
//! goto table, and, once every argument has been generated, reduces by one
//! of the inverted rules the state offers.  The tables decide which rules
//! are still worth trying; the only remaining search is among the reduce
//! alternatives of each reductive state.
//!
//! Lookup happens in canonical space: atoms that belong to a lexical class
//! are replaced by the class representative before keys are consulted, and
//! the real atom resurfaces only when a class rule picks its word.

use std::collections::HashSet;

use crate::gen_compile::{GenTables, TableRule, DUMMY, INITIAL_STATE};
use crate::shdg::GenStats;
use crate::terms::{
    rename_apart, rename_apart_group, strip_hats, unify, unify_group, Bindings, Term, VarGen,
};

/// How much of the search space one call explores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    /// Stop at the first complete sentence.
    First,
    /// Exhaust every alternative and return all distinct sentences.
    All,
}

/// The strings produced for one logical form, with the search cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    /// Distinct sentences in the order the search found them.
    pub strings: Vec<String>,
    pub stats: GenStats,
}

/// Generates the sentences a table relates to `lf`.
///
/// An empty result is not an error: it means no branch of the table walk
/// survived, e.g. because the logical form lies outside the grammar's
/// image or no descend key covers one of its subterms.
pub fn generate(tables: &GenTables, lf: &Term, mode: GenMode) -> Generation {
    let mut walker =
        Walker { tables, first: mode == GenMode::First, done: false, stats: GenStats::default() };
    // The walk starts on a dummy focus wrapping the goal, so the initial
    // state needs no special casing: its single rule rewrites the wrapper
    // to a top-category constituent spanning the whole sentence.
    let goal = Term::app(DUMMY, vec![lf.clone()]);
    let mut tops = Vec::new();
    walker.walk(INITIAL_STATE, &goal, &[], &mut tops);
    let mut seen = HashSet::new();
    let mut strings = Vec::new();
    for t in &tops {
        if let Some(s) = surface(t) {
            if seen.insert(s.clone()) {
                strings.push(s);
            }
        }
    }
    Generation { strings, stats: walker.stats }
}

/// Generates every logical form of a batch, in batch order.
///
/// With the `parallel` feature the items run on the rayon thread pool;
/// otherwise this is [`generate_batch_seq`].
#[cfg(feature = "parallel")]
pub fn generate_batch(tables: &GenTables, lfs: &[Term], mode: GenMode) -> Vec<Generation> {
    use rayon::prelude::*;
    lfs.par_iter().map(|lf| generate(tables, lf, mode)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn generate_batch(tables: &GenTables, lfs: &[Term], mode: GenMode) -> Vec<Generation> {
    generate_batch_seq(tables, lfs, mode)
}

/// [`generate_batch`] on the current thread, for baseline measurements.
pub fn generate_batch_seq(tables: &GenTables, lfs: &[Term], mode: GenMode) -> Vec<Generation> {
    lfs.iter().map(|lf| generate(tables, lf, mode)).collect()
}

struct Walker<'a> {
    tables: &'a GenTables,
    first: bool,
    /// Set once a complete sentence exists in `First` mode; unwinds the
    /// whole search.
    done: bool,
    stats: GenStats,
}

impl Walker<'_> {
    /// All constituents `state` derives for the focus `lf`, as resolved
    /// constituent terms.
    fn derive(&mut self, state: usize, lf: &Term) -> Vec<Term> {
        let mut out = Vec::new();
        self.walk(state, lf, &[], &mut out);
        out
    }

    /// Continues a derivation in `state` with the constituents already
    /// built for the first `built.len()` arguments of the focus.
    fn walk(&mut self, state: usize, lf: &Term, built: &[Term], out: &mut Vec<Term>) {
        if self.done {
            return;
        }
        let rules = self.tables.reduce_rules(state);
        if !rules.is_empty() {
            self.reduce(&rules, lf, built, out);
            return;
        }
        // Non-reductive: generate the next argument.  A focus with no
        // argument left at a non-reductive state has no table route.
        let position = built.len();
        let arg = match lf {
            Term::App(_, args) if position < args.len() => &args[position],
            _ => return,
        };
        let canon = self.tables.canonicalize(arg);
        // The most specific matching key already leads to every rule that
        // can realize an argument of this shape, so one descent suffices.
        let Some(&(_, child)) = self.tables.descend_candidates(state, &canon).first() else {
            return;
        };
        let subs = self.derive(child, arg);
        if subs.is_empty() {
            return;
        }
        let Some(&(_, next)) = self.tables.goto_candidates(state, &canon).first() else {
            return;
        };
        for sub in &subs {
            if self.done {
                return;
            }
            // Each alternative lives in its own variable space; keep it
            // disjoint from what this branch accumulated so far.
            let mut boundary: Vec<&Term> = built.iter().collect();
            boundary.push(lf);
            let mut vg = VarGen::above(&boundary);
            let mut grown = built.to_vec();
            grown.push(rename_apart(sub, &mut vg));
            self.walk(next, lf, &grown, out);
        }
    }

    /// Tries the reduce alternatives of a reductive state in table order.
    fn reduce(&mut self, rules: &[usize], lf: &Term, built: &[Term], out: &mut Vec<Term>) {
        let canon = self.tables.canonicalize(lf);
        let mut live = 0;
        for &index in rules {
            let rule = &self.tables.rules[index];
            self.stats.rule_applications += 1;
            if let Some(built_lhs) = apply(rule, lf, &canon, built) {
                live += 1;
                let finished = self.first && is_goal(&built_lhs);
                out.push(built_lhs);
                if finished {
                    self.done = true;
                    break;
                }
            }
        }
        self.stats.note_site(live);
    }
}

/// One reduce alternative: unify the rule's right-hand constituents with
/// the constituents built for the argument positions, match the rule's
/// semantic body against the canonicalized focus, and resolve the
/// left-hand side.  Class rules additionally require the focus atom to be
/// a member and splice its surface word into the word list.
fn apply(rule: &TableRule, lf: &Term, canon: &Term, built: &[Term]) -> Option<Term> {
    let terms = rule.rule.to_terms();
    if terms.len() != built.len() + 1 {
        return None;
    }
    let mut boundary: Vec<&Term> = built.iter().collect();
    boundary.push(canon);
    let mut vg = VarGen::above(&boundary);
    let refs: Vec<&Term> = terms.iter().collect();
    let renamed = rename_apart_group(&refs, &mut vg);
    let (lhs, rhs) = renamed.split_first().expect("rule has a left-hand side");
    let rhs_refs: Vec<&Term> = rhs.iter().collect();
    let built_refs: Vec<&Term> = built.iter().collect();
    let env = unify_group(&rhs_refs, &built_refs, &Bindings::new())?;
    let Term::App(_, fields) = lhs else { return None };
    let (body, _) = strip_hats(&fields[1]);
    let env = unify(body, canon, &env)?;
    let env = match &rule.members {
        None => env,
        Some(_) => {
            // The focus names the member; the canonical form already
            // matched the representative, so only the word differs.
            let Term::App(atom, no_args) = lf else { return None };
            if !no_args.is_empty() {
                return None;
            }
            let word = GenTables::class_word(rule, atom)?;
            let w0 = env.resolve(&fields[2]);
            let (head, _) = w0.as_cons()?;
            unify(head, &Term::atom(word), &env)?
        }
    };
    Some(env.resolve(lhs))
}

fn is_goal(constituent: &Term) -> bool {
    match constituent {
        Term::App(_, fields) => matches!(&fields[0], Term::App(c, a) if c == DUMMY && a.is_empty()),
        Term::Var(_) => false,
    }
}

/// Reads the sentence off a completed goal constituent: closes the open
/// tail of its word list and joins the word atoms.
fn surface(top: &Term) -> Option<String> {
    let Term::App(_, fields) = top else { return None };
    let env = unify(&fields[3], &Term::nil(), &Bindings::new())?;
    let w0 = env.resolve(&fields[2]);
    let items = w0.proper_list()?;
    let mut words = Vec::new();
    for item in items {
        match item {
            Term::App(w, a) if a.is_empty() => words.push(w.as_str()),
            _ => return None,
        }
    }
    Some(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen_compile::{compile, CompileMode, DEFAULT_BUDGET};
    use crate::grammar::{Grammar, QUESTIONS};
    use crate::oracle;
    use crate::shdg::shdg_generate;
    use std::collections::BTreeSet;

    fn sample() -> Grammar {
        Grammar::parse(QUESTIONS).unwrap()
    }

    fn tables(mode: &CompileMode) -> GenTables {
        compile(&sample().normalize(), mode).unwrap()
    }

    fn strings(t: &GenTables, lf: &str, mode: GenMode) -> Vec<String> {
        generate(t, &Term::parse(lf).unwrap(), mode).strings
    }

    fn oracle_strings(g: &Grammar, lf: &Term) -> BTreeSet<String> {
        oracle::generate_all(g, &g.top, lf).into_iter().map(|w| w.join(" ")).collect()
    }

    #[test]
    fn generates_the_simple_question() {
        let t = tables(&CompileMode::Fixed(1));
        assert_eq!(strings(&t, "mod(sleep(john), ynq)", GenMode::All), vec!["John sleeps ?"]);
        assert_eq!(strings(&t, "sleep(john)", GenMode::All), vec!["John sleeps"]);
    }

    #[test]
    fn bare_atoms_are_not_sentences() {
        let t = tables(&CompileMode::Fixed(1));
        assert!(strings(&t, "john", GenMode::All).is_empty());
        assert!(strings(&t, "nonsense(x)", GenMode::All).is_empty());
    }

    #[test]
    fn class_members_keep_their_own_words() {
        let t = tables(&CompileMode::Fixed(1));
        let g = sample();
        for lf in ["see(mary, paris)", "see(paris, john)", "mod(sleep(mary), ynq)"] {
            let term = Term::parse(lf).unwrap();
            let got: BTreeSet<String> = strings(&t, lf, GenMode::All).into_iter().collect();
            assert_eq!(got, oracle_strings(&g, &term), "LF {lf}");
            assert!(!got.is_empty(), "LF {lf} should generate");
        }
    }

    #[test]
    fn matches_the_enumeration_at_every_depth() {
        let g = sample();
        let fixed = tables(&CompileMode::Fixed(1));
        let auto = tables(&CompileMode::Auto { budget: DEFAULT_BUDGET, strict: false });
        let mut lfs: Vec<Term> = Vec::new();
        let mut seen = BTreeSet::new();
        for (_, lf) in oracle::enumerate(&g, &g.top, 4) {
            if seen.insert(lf.to_string()) {
                lfs.push(lf);
            }
        }
        assert!(lfs.len() >= 10, "expected a varied corpus, got {}", lfs.len());
        for lf in &lfs {
            let want = oracle_strings(&g, lf);
            let via_fixed: BTreeSet<String> =
                generate(&fixed, lf, GenMode::All).strings.into_iter().collect();
            let via_auto: BTreeSet<String> =
                generate(&auto, lf, GenMode::All).strings.into_iter().collect();
            let (via_shdg, _) = shdg_generate(&g, &g.top, lf).unwrap();
            let via_shdg: BTreeSet<String> = via_shdg.into_iter().map(|w| w.join(" ")).collect();
            assert_eq!(via_fixed, want, "fixed tables disagree on {lf}");
            assert_eq!(via_auto, want, "auto tables disagree on {lf}");
            assert_eq!(via_shdg, want, "search baseline disagrees on {lf}");
        }
    }

    #[test]
    fn auto_tables_never_backtrack() {
        let g = sample();
        let auto = tables(&CompileMode::Auto { budget: DEFAULT_BUDGET, strict: false });
        let mut seen = BTreeSet::new();
        for (_, lf) in oracle::enumerate(&g, &g.top, 4) {
            if !seen.insert(lf.to_string()) {
                continue;
            }
            let run = generate(&auto, &lf, GenMode::All);
            assert!(!run.strings.is_empty(), "image LF {lf} must generate");
            assert_eq!(run.stats.backtracks, 0, "backtracked on {lf}");
            assert_eq!(run.stats.choice_points, 0, "choice point on {lf}");
        }
    }

    #[test]
    fn first_mode_agrees_with_the_full_search() {
        let g = sample();
        let t = tables(&CompileMode::Fixed(1));
        let mut seen = BTreeSet::new();
        for (_, lf) in oracle::enumerate(&g, &g.top, 4) {
            if !seen.insert(lf.to_string()) {
                continue;
            }
            let all = generate(&t, &lf, GenMode::All);
            let first = generate(&t, &lf, GenMode::First);
            assert_eq!(first.strings.len(), 1, "first mode on {lf}");
            assert!(all.strings.contains(&first.strings[0]), "stray string on {lf}");
            assert!(first.stats.rule_applications <= all.stats.rule_applications);
        }
    }

    #[test]
    fn example_tables_still_cover_the_whole_image() {
        let g = sample();
        let corpus = vec![Term::parse("mod(sleep(john), ynq)").unwrap()];
        let t = compile(
            &g.normalize(),
            &CompileMode::Examples { corpus, budget: DEFAULT_BUDGET, default_depth: 1 },
        )
        .unwrap();
        // On the trained shape the walk is deterministic.
        let trained = generate(&t, &Term::parse("mod(sleep(mary), ynq)").unwrap(), GenMode::All);
        assert_eq!(trained.strings, vec!["Mary sleeps ?"]);
        assert_eq!(trained.stats.choice_points, 0);
        // Away from the corpus the default keys keep the image intact.
        for lf in ["mod(see(john, mary), today)", "mod(sleep(john), in(paris))"] {
            let term = Term::parse(lf).unwrap();
            let got: BTreeSet<String> = strings(&t, lf, GenMode::All).into_iter().collect();
            assert_eq!(got, oracle_strings(&g, &term), "LF {lf}");
            assert!(!got.is_empty());
        }
    }

    #[test]
    fn batch_runs_match_single_runs() {
        let g = sample();
        let t = tables(&CompileMode::Fixed(1));
        let mut lfs = Vec::new();
        let mut seen = BTreeSet::new();
        for (_, lf) in oracle::enumerate(&g, &g.top, 3) {
            if seen.insert(lf.to_string()) {
                lfs.push(lf);
            }
        }
        let parallel = generate_batch(&t, &lfs, GenMode::All);
        let sequential = generate_batch_seq(&t, &lfs, GenMode::All);
        assert_eq!(parallel, sequential);
        for (run, lf) in sequential.iter().zip(&lfs) {
            assert_eq!(run, &generate(&t, lf, GenMode::All));
        }
    }

    #[test]
    fn loaded_tables_generate_identically() {
        let g = sample();
        let t = tables(&CompileMode::Auto { budget: DEFAULT_BUDGET, strict: false });
        let reloaded = GenTables::load(&t.save()).unwrap();
        let mut seen = BTreeSet::new();
        for (_, lf) in oracle::enumerate(&g, &g.top, 4) {
            if !seen.insert(lf.to_string()) {
                continue;
            }
            assert_eq!(generate(&t, &lf, GenMode::All), generate(&reloaded, &lf, GenMode::All));
        }
    }
}
