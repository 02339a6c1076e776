//! Side-by-side cost measurement: table-driven generation against the
//! semantic-head-driven search baseline, over a corpus of logical forms.

use std::collections::BTreeSet;

use crate::gen_compile::GenTables;
use crate::generator::{generate, GenMode};
use crate::grammar::Grammar;
use crate::shdg::{shdg_generate, GenStats, ShdgError};
use crate::terms::Term;

/// What both engines did with one corpus item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub lf: Term,
    /// Sentences the table engine produced, sorted.
    pub strings: Vec<String>,
    pub table: GenStats,
    pub baseline: GenStats,
    /// Whether both engines produced the same sentence set.
    pub agree: bool,
}

/// Output layout for [`render`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Aligned, human-oriented listing.
    Text,
    /// One header line plus one tab-separated record per item.
    Tsv,
}

/// Runs both engines over the corpus, in corpus order.
///
/// With the `parallel` feature the items are measured on the rayon thread
/// pool; the report order is corpus order either way.
pub fn compare_corpus(
    tables: &GenTables,
    g: &Grammar,
    corpus: &[Term],
) -> Result<Vec<Comparison>, ShdgError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        corpus.par_iter().map(|lf| compare_one(tables, g, lf)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        corpus.iter().map(|lf| compare_one(tables, g, lf)).collect()
    }
}

fn compare_one(tables: &GenTables, g: &Grammar, lf: &Term) -> Result<Comparison, ShdgError> {
    let run = generate(tables, lf, GenMode::All);
    let (baseline_strings, baseline) = shdg_generate(g, &tables.top, lf)?;
    let table_set: BTreeSet<String> = run.strings.into_iter().collect();
    let baseline_set: BTreeSet<String> =
        baseline_strings.into_iter().map(|words| words.join(" ")).collect();
    let agree = table_set == baseline_set;
    Ok(Comparison {
        lf: lf.clone(),
        strings: table_set.into_iter().collect(),
        table: run.stats,
        baseline,
        agree,
    })
}

/// Renders a comparison run.
pub fn render(rows: &[Comparison], format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(rows),
        ReportFormat::Tsv => render_tsv(rows),
    }
}

fn render_text(rows: &[Comparison]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&format!("{}\n", row.lf));
        if row.strings.is_empty() {
            out.push_str("  (no output)\n");
        }
        for s in &row.strings {
            out.push_str(&format!("  \"{s}\"\n"));
        }
        out.push_str(&format!("  tables:   {}\n", row.table));
        out.push_str(&format!("  baseline: {}\n", row.baseline));
        if !row.agree {
            out.push_str("  ENGINES DISAGREE\n");
        }
    }
    let (cp_t, cp_b): (u64, u64) = rows
        .iter()
        .fold((0, 0), |(a, b), r| (a + r.table.choice_points, b + r.baseline.choice_points));
    let (bt_t, bt_b): (u64, u64) =
        rows.iter().fold((0, 0), |(a, b), r| (a + r.table.backtracks, b + r.baseline.backtracks));
    out.push_str(&format!(
        "total: {} items, choicepoints {} vs {}, backtracks {} vs {} (tables vs baseline)\n",
        rows.len(),
        cp_t,
        cp_b,
        bt_t,
        bt_b
    ));
    out
}

fn render_tsv(rows: &[Comparison]) -> String {
    let mut out = String::from(
        "lf\tstrings\ttable_applications\ttable_choicepoints\ttable_backtracks\
         \tbaseline_applications\tbaseline_choicepoints\tbaseline_backtracks\tagree\n",
    );
    for row in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.lf,
            row.strings.join("; "),
            row.table.rule_applications,
            row.table.choice_points,
            row.table.backtracks,
            row.baseline.rule_applications,
            row.baseline.choice_points,
            row.baseline.backtracks,
            if row.agree { "yes" } else { "no" },
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen_compile::{compile, CompileMode, DEFAULT_BUDGET};
    use crate::grammar::QUESTIONS;

    fn fixture() -> (Grammar, GenTables) {
        let g = Grammar::parse(QUESTIONS).unwrap();
        let t =
            compile(&g.normalize(), &CompileMode::Auto { budget: DEFAULT_BUDGET, strict: false })
                .unwrap();
        (g, t)
    }

    #[test]
    fn engines_agree_and_tables_cost_less() {
        let (g, t) = fixture();
        let corpus: Vec<Term> =
            ["mod(sleep(john), ynq)", "mod(mod(sleep(mary), today), ynq)", "see(john, mary)"]
                .iter()
                .map(|s| Term::parse(s).unwrap())
                .collect();
        let rows = compare_corpus(&t, &g, &corpus).unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert!(row.agree, "engines disagree on {}", row.lf);
            assert!(!row.strings.is_empty());
            assert!(
                row.table.choice_points <= row.baseline.choice_points,
                "tables searched more than the baseline on {}",
                row.lf
            );
        }
    }

    #[test]
    fn empty_corpus_renders_to_a_bare_total() {
        let rows: Vec<Comparison> = Vec::new();
        let text = render(&rows, ReportFormat::Text);
        assert!(text.starts_with("total: 0 items"));
        let tsv = render(&rows, ReportFormat::Tsv);
        assert_eq!(tsv.lines().count(), 1, "header only");
    }

    #[test]
    fn tsv_has_one_record_per_item() {
        let (g, t) = fixture();
        let corpus = vec![Term::parse("sleep(john)").unwrap()];
        let rows = compare_corpus(&t, &g, &corpus).unwrap();
        let tsv = render(&rows, ReportFormat::Tsv);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("lf\tstrings"));
        assert!(lines[1].starts_with("sleep(john)\tJohn sleeps\t"));
    }
}
