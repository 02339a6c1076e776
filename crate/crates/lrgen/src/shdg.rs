//! Semantic-head-driven generation straight off the attributed grammar.
//!
//! Given a goal category and logical form, the generator looks for a
//! *pivot*: a lexicon entry or functor-introducing rule whose logical
//! form (after discounting abstractions the goal does not share)
//! introduces the goal's root functor.  The pivot's right-hand side is
//! generated recursively, and the pivot's category is then connected
//! upward to the goal category through the heads of argument-filling
//! rules, generating the arguments those rules fill along the way.
//!
//! This is the reference engine: complete but undirected — every rule
//! combination whose logical forms unify is tried, so its search
//! statistics are the baseline the compiled generation tables are
//! measured against.

use crate::grammar::{Grammar, LexEntry, Rule};
use crate::terms::{self, strip_hats, Bindings, Term, VarGen};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Search-cost counters shared by all generation engines.
///
/// * `rule_applications`: rule and lexicon-entry unifications attempted.
/// * `choice_points`: decision sites where two or more alternatives
///   unified.
/// * `backtracks`: alternatives explored beyond the first at such sites
///   (zero means the search never had to consider a second option).
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct GenStats {
    pub rule_applications: u64,
    pub choice_points: u64,
    pub backtracks: u64,
}

impl GenStats {
    pub(crate) fn note_site(&mut self, alternatives: u64) {
        if alternatives >= 2 {
            self.choice_points += 1;
            self.backtracks += alternatives - 1;
        }
    }
}

impl fmt::Display for GenStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "applications={} choicepoints={} backtracks={}",
            self.rule_applications, self.choice_points, self.backtracks
        )
    }
}

#[derive(Debug, Error)]
pub enum ShdgError {
    /// A chain of argument-filling rules grew past the point where every
    /// (category, abstraction-depth) pair must have repeated.
    #[error("argument-filling chain exceeded {bound} rules climbing {}", path.join(" -> "))]
    ChainBound { bound: usize, path: Vec<String> },
}

/// The longest useful chain of argument-filling rules: one rule per
/// distinct (category, abstraction-depth) pair.  Chains longer than this
/// must revisit a pair, which only a cyclic grammar can do.
pub fn chain_bound(g: &Grammar) -> usize {
    let mut cats: BTreeSet<&str> = BTreeSet::new();
    for rule in &g.rules {
        cats.insert(&rule.lhs.0);
        for (cat, _) in &rule.rhs {
            cats.insert(cat);
        }
    }
    let mut hats = 0;
    for entry in &g.lexicon {
        cats.insert(&entry.cat);
        hats = hats.max(strip_hats(&entry.sem).1);
    }
    for rule in &g.rules {
        hats = hats.max(strip_hats(&rule.lhs.1).1);
    }
    cats.len() * (hats + 1)
}

/// All strings the grammar relates to `(cat, lf)`, as word lists, with
/// the search statistics accumulated along the way.
pub fn shdg_generate(
    g: &Grammar,
    cat: &str,
    lf: &Term,
) -> Result<(Vec<Vec<String>>, GenStats), ShdgError> {
    shdg_generate_bounded(g, cat, lf, chain_bound(g))
}

/// Like [`shdg_generate`], with an explicit chain-length bound.
pub fn shdg_generate_bounded(
    g: &Grammar,
    cat: &str,
    lf: &Term,
    bound: usize,
) -> Result<(Vec<Vec<String>>, GenStats), ShdgError> {
    let mut engine = Shdg { g, vg: VarGen::above(&[lf]), bound, stats: GenStats::default() };
    let results = engine.generate(cat, lf, &Bindings::new())?;
    let set: BTreeSet<Vec<String>> = results.into_iter().map(|(words, _)| words).collect();
    Ok((set.into_iter().collect(), engine.stats))
}

struct Shdg<'g> {
    g: &'g Grammar,
    vg: VarGen,
    bound: usize,
    stats: GenStats,
}

type Alt = (Vec<String>, Bindings);

impl<'g> Shdg<'g> {
    /// Generates everything matching the goal.  Results carry their
    /// bindings because the goal's variables may be shared with the
    /// caller (an argument filled higher up fixes them).
    fn generate(&mut self, cat: &str, sem: &Term, env: &Bindings) -> Result<Vec<Alt>, ShdgError> {
        let g = self.g;
        let mut out = Vec::new();
        let mut pivots = 0;
        for entry in &g.lexicon {
            self.stats.rule_applications += 1;
            let fresh = self.rename_lex(entry);
            if let Some(env2) = pivot_match(&fresh.sem, sem, env) {
                pivots += 1;
                let start = (fresh.cat.clone(), fresh.sem, vec![fresh.word.clone()], env2);
                self.climb(start, cat, sem, 0, &mut vec![], &mut out)?;
            }
        }
        for rule in &g.rules {
            if rule.is_chain() {
                continue;
            }
            self.stats.rule_applications += 1;
            let fresh = self.rename_rule(rule);
            if let Some(env2) = pivot_match(&fresh.lhs.1, sem, env) {
                pivots += 1;
                for (words, env3) in self.generate_seq(&fresh.rhs, &env2)? {
                    let start = (fresh.lhs.0.clone(), fresh.lhs.1.clone(), words, env3);
                    self.climb(start, cat, sem, 0, &mut vec![], &mut out)?;
                }
            }
        }
        self.stats.note_site(pivots);
        Ok(out)
    }

    /// Connects a generated constituent upward through chain-rule heads
    /// until it reaches the goal, generating filled arguments on the way.
    fn climb(
        &mut self,
        current: (String, Term, Vec<String>, Bindings),
        goal_cat: &str,
        goal_sem: &Term,
        len: usize,
        path: &mut Vec<String>,
        out: &mut Vec<Alt>,
    ) -> Result<(), ShdgError> {
        let (cat, sem, words, env) = current;
        if cat == goal_cat {
            if let Some(env2) = terms::unify(&sem, goal_sem, &env) {
                out.push((words.clone(), env2));
            }
        }
        let g = self.g;
        let mut continuations = 0;
        let mut next = Vec::new();
        for rule in &g.rules {
            if !rule.is_chain() {
                continue;
            }
            let head = rule.head_index().unwrap();
            if rule.rhs[head].0 != cat {
                continue;
            }
            self.stats.rule_applications += 1;
            let fresh = self.rename_rule(rule);
            if let Some(env2) = terms::unify(&fresh.rhs[head].1, &sem, &env) {
                continuations += 1;
                // Fill the other right-hand-side constituents, splicing
                // the already generated head words into surface order.
                let before = self.generate_seq(&fresh.rhs[..head], &env2)?;
                for (pre, env3) in before {
                    for (post, env4) in self.generate_seq(&fresh.rhs[head + 1..], &env3)? {
                        let mut all = pre.clone();
                        all.extend(words.iter().cloned());
                        all.extend(post);
                        next.push((fresh.lhs.0.clone(), fresh.lhs.1.clone(), all, env4));
                    }
                }
            }
        }
        self.stats.note_site(continuations);
        if !next.is_empty() && len == self.bound {
            path.push(cat);
            return Err(ShdgError::ChainBound { bound: self.bound, path: std::mem::take(path) });
        }
        path.push(cat);
        for c in next {
            self.climb(c, goal_cat, goal_sem, len + 1, path, out)?;
        }
        path.pop();
        Ok(())
    }

    /// Generates a right-hand-side slice in surface order, threading
    /// bindings through the alternatives.
    fn generate_seq(
        &mut self,
        rhs: &[(String, Term)],
        env: &Bindings,
    ) -> Result<Vec<Alt>, ShdgError> {
        let mut alts: Vec<Alt> = vec![(Vec::new(), env.clone())];
        for (cat, sem) in rhs {
            let mut grown = Vec::new();
            for (words, env) in &alts {
                for (more, env2) in self.generate(cat, sem, env)? {
                    let mut w = words.clone();
                    w.extend(more);
                    grown.push((w, env2));
                }
            }
            alts = grown;
            if alts.is_empty() {
                break;
            }
        }
        Ok(alts)
    }

    fn rename_lex(&mut self, entry: &LexEntry) -> LexEntry {
        let sem = terms::rename_apart(&entry.sem, &mut self.vg);
        LexEntry { cat: entry.cat.clone(), sem, word: entry.word.clone() }
    }

    fn rename_rule(&mut self, rule: &Rule) -> Rule {
        let mut ts: Vec<&Term> = vec![&rule.lhs.1];
        ts.extend(rule.rhs.iter().map(|(_, s)| s));
        let mut renamed = terms::rename_apart_group(&ts, &mut self.vg);
        let lhs_sem = renamed.remove(0);
        Rule {
            id: rule.id,
            lhs: (rule.lhs.0.clone(), lhs_sem),
            rhs: rule.rhs.iter().zip(renamed).map(|((c, _), s)| (c.clone(), s)).collect(),
            flow: rule.flow.clone(),
        }
    }
}

/// Unifies a pivot's logical form with the goal's, first descending past
/// the abstractions the pivot has but the goal lacks (they are discharged
/// by argument-filling rules on the way up).
fn pivot_match(rule_sem: &Term, goal_sem: &Term, env: &Bindings) -> Option<Bindings> {
    let rh = strip_hats(rule_sem).1;
    let gh = strip_hats(&env.resolve(goal_sem)).1;
    if rh < gh {
        return None;
    }
    let mut inner = rule_sem;
    for _ in 0..rh - gh {
        match inner {
            Term::App(f, args) if f == terms::HAT && args.len() == 2 => inner = &args[1],
            _ => return None,
        }
    }
    terms::unify(inner, goal_sem, env)
}
