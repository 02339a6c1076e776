//! Exhaustive reference derivers, used to cross-check the real generators.
//!
//! Everything here works directly on the source [`Grammar`] by plain
//! top-down search over rule applications — no normal form, no inversion,
//! no tables — so results from this module are an independent standard of
//! comparison for the optimized paths.  It is exponential and only meant
//! for small grammars and tests.

use crate::grammar::{Grammar, Rule};
use crate::terms::{self, rename_apart_group, strip_hats, unify, Bindings, Term, VarGen};
use std::collections::BTreeSet;

/// Every (word string, logical form) pair derivable from `cat` with a
/// derivation tree of height at most `max_height` (a lexicon entry has
/// height 1, a rule application one more than its highest child).  Pairs
/// whose logical form does not come out ground are dropped, and duplicates
/// are removed.
pub fn enumerate(g: &Grammar, cat: &str, max_height: usize) -> Vec<(Vec<String>, Term)> {
    let mut vg = VarGen::new();
    let goal = vg.fresh_var();
    let results = expand(g, cat, &goal, Bindings::new(), &mut vg, max_height);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (words, env) in results {
        let sem = env.resolve(&goal);
        if !sem.vars().is_empty() {
            continue;
        }
        if seen.insert((words.clone(), sem.clone())) {
            out.push((words, sem));
        }
    }
    out
}

/// All distinct word strings with a derivation from `cat` whose logical
/// form unifies with `lf` — for a ground `lf`, exactly the strings that
/// can mean it.  Search depth is bounded by [`derivation_bound`], which is
/// safe for grammars that pass the grammar module's flow checks.
pub fn generate_all(g: &Grammar, cat: &str, lf: &Term) -> Vec<Vec<String>> {
    generate_all_bounded(g, cat, lf, derivation_bound(g, lf))
}

pub fn generate_all_bounded(
    g: &Grammar,
    cat: &str,
    lf: &Term,
    max_height: usize,
) -> Vec<Vec<String>> {
    let mut vg = VarGen::above(&[lf]);
    let results = expand(g, cat, lf, Bindings::new(), &mut vg, max_height);
    let set: BTreeSet<Vec<String>> = results.into_iter().map(|(words, _)| words).collect();
    set.into_iter().collect()
}

/// An upper bound on the derivation height of any derivation for `lf`.
///
/// Each functor-introducing rule on a root-to-leaf path consumes one
/// functor node of the logical form, so there are at most `nodes(lf)` of
/// them.  Between two of those, argument-filling rules either add a `^`
/// abstraction (at most `H` times, the deepest abstraction in the
/// lexicon, or anything deeper could never terminate in a lexical entry)
/// or pass the logical form along unchanged (at most once per category,
/// since pass-along cycles are rejected at load time).
pub fn derivation_bound(g: &Grammar, lf: &Term) -> usize {
    let nodes = count_nodes(lf);
    let hats = g.lexicon.iter().map(|e| strip_hats(&e.sem).1).max().unwrap_or(0);
    let mut cats = BTreeSet::new();
    for r in &g.rules {
        cats.insert(r.lhs.0.as_str());
        for (c, _) in &r.rhs {
            cats.insert(c.as_str());
        }
    }
    let chain_segment = (hats + 1) * (cats.len() + 1);
    nodes * (chain_segment + 1) + chain_segment + 2
}

fn count_nodes(t: &Term) -> usize {
    match t {
        Term::Var(_) => 1,
        Term::App(_, args) => 1 + args.iter().map(count_nodes).sum::<usize>(),
    }
}

/// Core search: all ways to derive `cat` with a logical form unifying
/// `goal` under `env`, as (words, extended environment) pairs.
fn expand(
    g: &Grammar,
    cat: &str,
    goal: &Term,
    env: Bindings,
    vg: &mut VarGen,
    height: usize,
) -> Vec<(Vec<String>, Bindings)> {
    let mut out = Vec::new();
    if height == 0 {
        return out;
    }
    for e in g.lexicon.iter().filter(|e| e.cat == cat) {
        let sem = terms::rename_apart(&e.sem, vg);
        if let Some(env2) = unify(&sem, goal, &env) {
            out.push((vec![e.word.clone()], env2));
        }
    }
    if height < 2 {
        return out;
    }
    for rule in g.rules.iter().filter(|r| r.lhs.0 == cat) {
        let (lhs_sem, rhs) = rename_rule(rule, vg);
        let Some(env2) = unify(&lhs_sem, goal, &env) else {
            continue;
        };
        let mut partial: Vec<(Vec<String>, Bindings)> = vec![(Vec::new(), env2)];
        for (rcat, rsem) in &rhs {
            let mut next = Vec::new();
            for (words, penv) in partial {
                for (child_words, cenv) in expand(g, rcat, rsem, penv, vg, height - 1) {
                    let mut w = words.clone();
                    w.extend(child_words);
                    next.push((w, cenv));
                }
            }
            partial = next;
            if partial.is_empty() {
                break;
            }
        }
        out.extend(partial);
    }
    out
}

fn rename_rule(rule: &Rule, vg: &mut VarGen) -> (Term, Vec<(String, Term)>) {
    let mut refs: Vec<&Term> = vec![&rule.lhs.1];
    refs.extend(rule.rhs.iter().map(|(_, s)| s));
    let mut renamed = rename_apart_group(&refs, vg);
    let lhs = renamed.remove(0);
    let rhs = rule.rhs.iter().map(|(c, _)| c.clone()).zip(renamed).collect();
    (lhs, rhs)
}
