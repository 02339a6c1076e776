//! Grammar inversion: turning normal-form rules inside out so that rules
//! are selected by logical form instead of by category.
//!
//! An inverted rule answers the question "given that I must build this
//! constituent (category, logical form, pending arguments), which one rule
//! application could produce its string?"  Each one is the flattening of a
//! *chain*: zero or more argument-filling rules applied downward from the
//! goal constituent, terminated either by a functor-introducing phrasal
//! rule or by a lexicon entry.
//!
//! * Phrasal termination keeps the terminating rule's right-hand side
//!   (already mirrored to the logical form's argument order).
//! * Lexical termination consumes the head word; the constituents stacked
//!   up on the pending-argument list become the right-hand side, ordered
//!   to mirror the argument positions of the logical form they realize.
//!
//! Either way the right-hand side has exactly one constituent per
//! argument of the (abstraction-stripped) LHS logical form, which is what
//! lets the table compiler later run a dot across argument positions.
//!
//! [`invert_grammar`] inverts every goal context reachable from the top
//! category: starting from `⟨top, X, W0, W, ε, ε⟩`, each inverted rule's
//! RHS constituents (with their word spans generalized) become new
//! contexts until no new ones appear.

use crate::grammar::{Constituent, NormalGrammar, NormalLex, NormalRule, RuleKind, RuleOrigin};
use crate::terms::{
    self, canonical_key_group, canonical_strings_refs, rename_apart_group, strip_hats, Bindings,
    Term, VarGen,
};
use std::collections::HashMap;
use std::fmt;

/// One flattened chain.  `chain` lists the argument-filling rules applied
/// top-down, ending with the terminating functor-introducing rule or
/// lexicon entry.
#[derive(Debug, Clone)]
pub struct InvertedRule {
    pub lhs: Constituent,
    pub rhs: Vec<Constituent>,
    pub chain: Vec<RuleOrigin>,
}

impl InvertedRule {
    pub fn to_terms(&self) -> Vec<Term> {
        let mut ts = vec![self.lhs.to_term()];
        ts.extend(self.rhs.iter().map(|c| c.to_term()));
        ts
    }

    /// The lexicon entry this rule bottoms out in, if the chain ends
    /// lexically.
    pub fn lex_index(&self) -> Option<usize> {
        match self.chain.last() {
            Some(RuleOrigin::Lex(i)) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for InvertedRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ts = self.to_terms();
        let refs: Vec<&Term> = ts.iter().collect();
        let strs = canonical_strings_refs(&refs);
        if strs.len() == 1 {
            write!(f, "{} -->", strs[0])
        } else {
            write!(f, "{} --> {}", strs[0], strs[1..].join(", "))
        }
    }
}

pub(crate) fn unify_constituents(
    a: &Constituent,
    b: &Constituent,
    env: &Bindings,
) -> Option<Bindings> {
    if a.cat != b.cat {
        return None;
    }
    terms::unify_group(
        &[&a.sem, &a.w0, &a.w1, &a.a0, &a.a1],
        &[&b.sem, &b.w0, &b.w1, &b.a0, &b.a1],
        env,
    )
}

pub(crate) fn resolve_constituent(c: &Constituent, env: &Bindings) -> Constituent {
    Constituent {
        cat: c.cat.clone(),
        sem: env.resolve(&c.sem),
        w0: env.resolve(&c.w0),
        w1: env.resolve(&c.w1),
        a0: env.resolve(&c.a0),
        a1: env.resolve(&c.a1),
    }
}

pub(crate) fn rename_constituents(cs: &[&Constituent], vg: &mut VarGen) -> Vec<Constituent> {
    let ts: Vec<Term> = cs.iter().map(|c| c.to_term()).collect();
    let refs: Vec<&Term> = ts.iter().collect();
    rename_apart_group(&refs, vg).iter().map(|t| Constituent::from_term(t).unwrap()).collect()
}

fn rename_rule(rule: &NormalRule, vg: &mut VarGen) -> (Constituent, Vec<Constituent>) {
    let mut refs: Vec<&Constituent> = vec![&rule.lhs];
    refs.extend(rule.rhs.iter());
    let mut cs = rename_constituents(&refs, vg);
    let lhs = cs.remove(0);
    (lhs, cs)
}

/// The goal constituent inversion starts from: the top category with an
/// unconstrained logical form and no pending arguments.
pub fn top_context(ng: &NormalGrammar) -> Constituent {
    let mut vg = VarGen::new();
    Constituent {
        cat: ng.top.clone(),
        sem: vg.fresh_var(),
        w0: vg.fresh_var(),
        w1: vg.fresh_var(),
        a0: Term::nil(),
        a1: Term::nil(),
    }
}

/// Inverted rules for a category on its own (no pending arguments).
pub fn invert_for(ng: &NormalGrammar, cat: &str) -> Vec<InvertedRule> {
    let mut vg = VarGen::new();
    let context = Constituent {
        cat: cat.to_string(),
        sem: vg.fresh_var(),
        w0: vg.fresh_var(),
        w1: vg.fresh_var(),
        a0: Term::nil(),
        a1: Term::nil(),
    };
    invert_context(ng, &context)
}

/// Inverted rules for one goal constituent.
pub fn invert_context(ng: &NormalGrammar, context: &Constituent) -> Vec<InvertedRule> {
    let mut vg = VarGen::new();
    let goal = rename_constituents(&[context], &mut vg).remove(0);
    let mut inv =
        Inverter { ng, vg, goal: goal.clone(), max_hats: max_terminator_hats(ng), out: Vec::new() };
    inv.search(&goal, &Bindings::new(), &mut Vec::new(), &mut Vec::new());
    inv.out
}

/// The deepest `^` nesting any chain could still discharge: abstractions
/// beyond the deepest terminator logical form can never terminate.
fn max_terminator_hats(ng: &NormalGrammar) -> usize {
    let lex = ng.lexical.iter().map(|l| strip_hats(&l.entry.sem).1);
    let fun =
        ng.rules.iter().filter(|r| r.kind == RuleKind::Functor).map(|r| strip_hats(&r.lhs.sem).1);
    lex.chain(fun).max().unwrap_or(0)
}

struct Inverter<'g> {
    ng: &'g NormalGrammar,
    vg: VarGen,
    goal: Constituent,
    max_hats: usize,
    out: Vec<InvertedRule>,
}

impl<'g> Inverter<'g> {
    fn search(
        &mut self,
        current: &Constituent,
        env: &Bindings,
        chain: &mut Vec<RuleOrigin>,
        seen: &mut Vec<(String, usize, usize)>,
    ) {
        let ng = self.ng;
        // Terminate with a lexicon entry: the pending arguments become the
        // right-hand side.
        for lex in &ng.lexical {
            if lex.entry.cat != current.cat {
                continue;
            }
            let entry = rename_constituents(&[&lex.entry], &mut self.vg).remove(0);
            if let Some(env2) = unify_constituents(&entry, current, env) {
                if let Some(rule) = self.finish_lexical(lex, current, &env2, chain) {
                    self.out.push(rule);
                }
            }
        }
        for rule in &ng.rules {
            if rule.lhs.cat != current.cat {
                continue;
            }
            match rule.kind {
                // Terminate with a functor-introducing rule: its mirrored
                // right-hand side carries over.
                RuleKind::Functor => {
                    let (lhs, rhs) = rename_rule(rule, &mut self.vg);
                    if let Some(env2) = unify_constituents(&lhs, current, env) {
                        chain.push(rule.origin);
                        self.out.push(InvertedRule {
                            lhs: resolve_constituent(&self.goal, &env2),
                            rhs: rhs.iter().map(|c| resolve_constituent(c, &env2)).collect(),
                            chain: chain.clone(),
                        });
                        chain.pop();
                    }
                }
                // Extend the chain through an argument-filling rule.
                RuleKind::Chain => {
                    let (lhs, rhs) = rename_rule(rule, &mut self.vg);
                    if let Some(env2) = unify_constituents(&lhs, current, env) {
                        let head = resolve_constituent(&rhs[0], &env2);
                        let hats = strip_hats(&head.sem).1;
                        if hats > self.max_hats {
                            continue;
                        }
                        let key = (head.cat.clone(), hats, pending_len(&head.a0));
                        if seen.contains(&key) {
                            continue;
                        }
                        seen.push(key);
                        chain.push(rule.origin);
                        self.search(&head, &env2, chain, seen);
                        chain.pop();
                        seen.pop();
                    }
                }
            }
        }
    }

    /// Builds the right-hand side for a lexically terminated chain: one
    /// entry from the chain-bottom pending-argument list (the list the
    /// lexicon entry consumed) per argument of the stripped logical form,
    /// matched up by the argument variables they share.  Chains whose
    /// pending arguments do not pair off with the arguments one-to-one
    /// cannot be realized and are dropped.
    fn finish_lexical(
        &mut self,
        lex: &NormalLex,
        current: &Constituent,
        env: &Bindings,
        chain: &mut Vec<RuleOrigin>,
    ) -> Option<InvertedRule> {
        let lhs = resolve_constituent(&self.goal, env);
        let (body, _) = strip_hats(&lhs.sem);
        let args: Vec<&Term> = match body {
            Term::Var(_) => return None,
            Term::App(_, args) => args.iter().collect(),
        };
        let consumed = env.resolve(&current.a0);
        let pending = consumed.proper_list()?;
        if pending.len() != args.len() {
            return None;
        }
        let mut used = vec![false; pending.len()];
        let mut rhs = Vec::new();
        for arg in &args {
            let mut found = None;
            for (i, item) in pending.iter().enumerate() {
                if used[i] {
                    continue;
                }
                if let Term::App(f, fields) = item {
                    if f == crate::grammar::ARG && fields.len() == 4 && &&fields[1] == arg {
                        found = Some((i, fields));
                        break;
                    }
                }
            }
            let (i, fields) = found?;
            used[i] = true;
            let cat = match &fields[0] {
                Term::App(c, a) if a.is_empty() => c.clone(),
                _ => return None,
            };
            rhs.push(Constituent {
                cat,
                sem: fields[1].clone(),
                w0: fields[2].clone(),
                w1: fields[3].clone(),
                a0: Term::nil(),
                a1: Term::nil(),
            });
        }
        chain.push(RuleOrigin::Lex(lex.index));
        let rule = InvertedRule { lhs, rhs, chain: chain.clone() };
        chain.pop();
        Some(rule)
    }
}

fn pending_len(t: &Term) -> usize {
    let mut n = 0;
    let mut t = t;
    while let Some((_, rest)) = t.as_cons() {
        n += 1;
        t = rest;
    }
    n
}

/// Generalizes a constituent into a goal context: word spans are replaced
/// by fresh variables (identical span terms keep sharing — a pending
/// argument ending exactly where the head word starts stays wired that
/// way), while the logical form and pending-argument structure remain.
pub fn context_of(c: &Constituent) -> Constituent {
    let whole = c.to_term();
    let mut vg = VarGen::above(&[&whole]);
    let mut map: HashMap<Term, Term> = HashMap::new();
    let mut span = |t: &Term, vg: &mut VarGen| -> Term {
        map.entry(t.clone()).or_insert_with(|| vg.fresh_var()).clone()
    };
    let a0 = generalize_pending(&c.a0, &mut span, &mut vg);
    let a1 = generalize_pending(&c.a1, &mut span, &mut vg);
    Constituent {
        cat: c.cat.clone(),
        sem: c.sem.clone(),
        w0: span(&c.w0, &mut vg),
        w1: span(&c.w1, &mut vg),
        a0,
        a1,
    }
}

fn generalize_pending(
    t: &Term,
    span: &mut impl FnMut(&Term, &mut VarGen) -> Term,
    vg: &mut VarGen,
) -> Term {
    match t {
        Term::App(f, args) if f == crate::terms::CONS && args.len() == 2 => Term::cons(
            generalize_pending(&args[0], span, vg),
            generalize_pending(&args[1], span, vg),
        ),
        Term::App(f, args) if f == crate::grammar::ARG && args.len() == 4 => Term::app(
            crate::grammar::ARG,
            vec![args[0].clone(), args[1].clone(), span(&args[2], vg), span(&args[3], vg)],
        ),
        other => other.clone(),
    }
}

/// Inverts every goal context reachable from the top category and returns
/// all distinct inverted rules, Figure-6 style.
pub fn invert_grammar(ng: &NormalGrammar) -> Vec<InvertedRule> {
    let mut contexts = vec![top_context(ng)];
    let mut context_keys: Vec<Vec<Term>> =
        contexts.iter().map(|c| canonical_key_group(&[&c.to_term()])).collect();
    let mut out: Vec<InvertedRule> = Vec::new();
    let mut rule_keys: Vec<(Vec<Term>, Vec<RuleOrigin>)> = Vec::new();
    let mut i = 0;
    while i < contexts.len() {
        let ctx = contexts[i].clone();
        i += 1;
        for rule in invert_context(ng, &ctx) {
            let ts = rule.to_terms();
            let refs: Vec<&Term> = ts.iter().collect();
            let key = (canonical_key_group(&refs), rule.chain.clone());
            if rule_keys.contains(&key) {
                continue;
            }
            rule_keys.push(key);
            for c in &rule.rhs {
                let ctx = context_of(c);
                let ckey = canonical_key_group(&[&ctx.to_term()]);
                if !context_keys.contains(&ckey) {
                    context_keys.push(ckey);
                    contexts.push(ctx);
                }
            }
            out.push(rule);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{Grammar, QUESTIONS};

    fn inverted() -> Vec<InvertedRule> {
        let g = Grammar::parse(QUESTIONS).unwrap();
        invert_grammar(&g.normalize())
    }

    /// The full inverted sample grammar.  (The PP rule's logical form is
    /// `in(V1)`, with no leading abstraction: PP goal contexts arise only
    /// at modifier argument positions, whose logical forms are plain
    /// variables, so the abstraction is consumed inside the chain.)
    const GOLDEN: [&str; 15] = [
        "c('S', mod(V1, V2), V3, V4, [], []) --> \
         c('S', V1, V3, V5, [], []), c('QM', V2, V5, V4, [], [])",
        "c('S', mod(V1, V2), V3, V4, [], []) --> \
         c('VP', V5^V1, V6, V7, [arg('NP', V5, V3, V6)], []), c('AdvP', V2, V7, V4, [], [])",
        "c('S', mod(V1, V2), V3, V4, [], []) --> \
         c('VP', V5^V1, V6, V7, [arg('NP', V5, V3, V6)], []), c('PP', V2, V7, V4, [], [])",
        "c('VP', V1^mod(V2, V3), V4, V5, [arg('NP', V1, V6, V4)], []) --> \
         c('VP', V1^V2, V4, V7, [arg('NP', V1, V6, V4)], []), c('AdvP', V3, V7, V5, [], [])",
        "c('VP', V1^mod(V2, V3), V4, V5, [arg('NP', V1, V6, V4)], []) --> \
         c('VP', V1^V2, V4, V7, [arg('NP', V1, V6, V4)], []), c('PP', V3, V7, V5, [], [])",
        "c('S', sleep(V1), V2, V3, [], []) --> c('NP', V1, V2, [sleeps|V3], [], [])",
        "c('VP', V1^sleep(V1), [sleeps|V2], V2, [arg('NP', V1, V3, [sleeps|V2])], []) --> \
         c('NP', V1, V3, [sleeps|V2], [], [])",
        "c('S', see(V1, V2), V3, V4, [], []) --> \
         c('NP', V1, V5, V4, [], []), c('NP', V2, V3, [sees|V5], [], [])",
        "c('VP', V1^see(V2, V1), [sees|V3], V4, [arg('NP', V1, V5, [sees|V3])], []) --> \
         c('NP', V2, V3, V4, [], []), c('NP', V1, V5, [sees|V3], [], [])",
        "c('PP', in(V1), [in|V2], V3, [], []) --> c('NP', V1, V2, V3, [], [])",
        "c('NP', john, ['John'|V1], V1, [], []) -->",
        "c('NP', mary, ['Mary'|V1], V1, [], []) -->",
        "c('NP', paris, ['Paris'|V1], V1, [], []) -->",
        "c('AdvP', today, [today|V1], V1, [], []) -->",
        "c('QM', ynq, ['?'|V1], V1, [], []) -->",
    ];

    #[test]
    fn reproduces_the_inverted_sample_grammar() {
        let rules = inverted();
        let mut got: Vec<String> = rules.iter().map(ToString::to_string).collect();
        got.sort();
        let mut want: Vec<String> = GOLDEN.iter().map(|s| s.to_string()).collect();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn chains_record_their_rules() {
        use RuleOrigin::*;
        let rules = inverted();
        let by_text = |needle: &str| {
            rules
                .iter()
                .find(|r| r.to_string().contains(needle))
                .unwrap_or_else(|| panic!("no rule matching {needle}"))
        };
        // S -> S QM is a chainless functor rule.
        assert_eq!(by_text("c('QM', V2").chain, vec![Rule(1)]);
        // sleep under S: subject rule, verb-phrase pass-along, then the
        // intransitive lexicon entry.
        let sleeps = by_text("c('S', sleep(V1)");
        assert_eq!(sleeps.chain.len(), 3);
        assert_eq!(sleeps.chain[0], Rule(2));
        assert_eq!(sleeps.chain[1], Rule(5));
        assert!(matches!(sleeps.chain[2], Lex(_)));
        assert_eq!(sleeps.lex_index(), Some(3));
    }

    #[test]
    fn rhs_length_mirrors_arity() {
        for rule in inverted() {
            let (body, _) = strip_hats(&rule.lhs.sem);
            let arity = match body {
                Term::Var(_) => panic!("inverted LHS must have a functor"),
                Term::App(_, args) => args.len(),
            };
            assert_eq!(rule.rhs.len(), arity, "{rule}");
        }
    }

    #[test]
    fn invert_for_leaf_categories() {
        let g = Grammar::parse(QUESTIONS).unwrap();
        let ng = g.normalize();
        let np = invert_for(&ng, "NP");
        assert_eq!(np.len(), 3);
        assert!(np.iter().all(|r| r.rhs.is_empty()));
        // A category with no pending arguments cannot use the transitive
        // chain: the object argument could never be realized.
        let s = invert_for(&ng, "S");
        assert_eq!(s.len(), 5);
    }
}
