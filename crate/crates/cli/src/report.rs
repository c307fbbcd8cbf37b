//! Report tables and figure data.
//!
//! Every figure is written twice: as a delimited table with the plotted
//! numbers and as a small SVG rendering of the same numbers.

use std::io::Write;

use anyhow::Context;
use jumplab::dataset::Scope;
use jumplab::workflow::ImportanceSummary;

use crate::manifest::{read_json, write_atomic};
use crate::stages::{
    ASSEMBLE_SUMMARY, AssembleSummary, Ctx, DETECT_SUMMARY, DetectSummary, EVALUATION, GRID, GridArtifact, IMPORTANCE,
    INSTANCES, SELECTION, ScopeEvaluation, SelectionArtifact, learner,
};
use crate::svg;

type Produced = Vec<(String, usize)>;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, ctx: &Ctx, name: &str, out: &mut Produced) -> anyhow::Result<()> {
        write_atomic(&ctx.work.join(name), |w| {
            let mut c = csv::WriterBuilder::new().delimiter(ctx.delimiter).from_writer(w);
            c.write_record(&self.header)?;
            for r in &self.rows {
                c.write_record(r)?;
            }
            c.flush()?;
            Ok(())
        })?;
        out.push((name.to_string(), self.rows.len()));
        Ok(())
    }
}

fn write_text(ctx: &Ctx, name: &str, text: &str, rows: usize, out: &mut Produced) -> anyhow::Result<()> {
    write_atomic(&ctx.work.join(name), |w| Ok(w.write_all(text.as_bytes())?))?;
    out.push((name.to_string(), rows));
    Ok(())
}

fn attribute_names(ctx: &Ctx) -> anyhow::Result<Vec<String>> {
    let p = ctx.work.join(INSTANCES);
    let mut r = csv::ReaderBuilder::new()
        .delimiter(ctx.delimiter)
        .from_path(&p)
        .with_context(|| format!("cannot open {}", p.display()))?;
    Ok(r.headers()?.iter().skip(5).map(str::to_string).collect())
}

fn pct(mean: f64, sd: f64) -> String {
    format!("{:.1} ± {:.1}", 100.0 * mean, 100.0 * sd)
}

pub fn run_report(ctx: &Ctx) -> anyhow::Result<Produced> {
    let detect: DetectSummary = read_json(&ctx.work.join(DETECT_SUMMARY))?;
    let assembled: AssembleSummary = read_json(&ctx.work.join(ASSEMBLE_SUMMARY))?;
    let selection: SelectionArtifact = read_json(&ctx.work.join(SELECTION))?;
    let grid: GridArtifact = read_json(&ctx.work.join(GRID))?;
    let evals: Vec<ScopeEvaluation> = read_json(&ctx.work.join(EVALUATION))?;
    let importance: Vec<(Scope, ImportanceSummary)> = if learner(ctx.cfg)? == jumplab::learners::LearnerKind::Forest {
        read_json(&ctx.work.join(IMPORTANCE))?
    } else {
        Vec::new()
    };
    let names = attribute_names(ctx)?;
    let mut out = Produced::new();

    let mut metrics = Table::new(&["learner", "scope", "problem", "metric", "mean", "sd", "replicates"]);
    for e in &evals {
        for (m, mean, sd) in &e.report.metrics {
            metrics.push(vec![
                e.learner.clone(),
                e.scope.to_string(),
                e.problem.to_string(),
                m.clone(),
                mean.to_string(),
                sd.to_string(),
                e.report.replicates.to_string(),
            ]);
        }
    }
    metrics.write(ctx, "report/table_metrics.csv", &mut out)?;

    let mut text = String::from("Replicate means ± sd, in percent\n\n");
    if let Some(first) = evals.first() {
        let cols: Vec<&str> = first.report.metrics.iter().map(|(n, _, _)| n.as_str()).collect();
        text.push_str(&format!("{:<8}{:<8}{:<9}", "learner", "scope", "problem"));
        for c in &cols {
            text.push_str(&format!("{c:>16}"));
        }
        text.push('\n');
        for e in &evals {
            text.push_str(&format!("{:<8}{:<8}{:<9}", e.learner, e.scope.to_string(), e.problem.to_string()));
            for (_, mean, sd) in &e.report.metrics {
                text.push_str(&format!("{:>16}", pct(*mean, *sd)));
            }
            text.push('\n');
        }
    }
    write_text(ctx, "report/table_metrics.txt", &text, evals.len(), &mut out)?;

    let mut gt = Table::new(&["group", "param", "count", "mean_f", "best"]);
    for (group, g) in [("comprehensive", &grid.comprehensive), ("interval", &grid.interval)] {
        if let Some(g) = g {
            for p in &g.points {
                gt.push(vec![
                    group.into(),
                    p.param.to_string(),
                    p.count.to_string(),
                    p.mean_f.to_string(),
                    (p.param == g.best.param && p.count == g.best.count).to_string(),
                ]);
            }
        }
    }
    gt.write(ctx, "report/table_grid.csv", &mut out)?;

    let mut counts = Table::new(&["scope", "problem", "train_up", "train_down", "train_none", "test_up", "test_down", "test_none"]);
    for (set, _) in &selection.scopes {
        let (a, b) = (set.train_counts, set.test_counts);
        counts.push(
            [set.scope.to_string(), set.problem.to_string()]
                .into_iter()
                .chain([a.up, a.down, a.none, b.up, b.down, b.none].map(|v| v.to_string()))
                .collect(),
        );
    }
    counts.write(ctx, "report/table_counts.csv", &mut out)?;

    let mut filters =
        Table::new(&["incomplete", "limit_lock", "halt", "post_event", "warm_up", "kept", "up", "down", "none"]);
    let f = assembled.filters;
    let row = [assembled.incomplete, f.limit_lock, f.halt, f.post_event, f.warm_up, f.kept];
    filters.push(row.into_iter().chain([assembled.up, assembled.down, assembled.none]).map(|v| v.to_string()).collect());
    filters.write(ctx, "report/table_filters.csv", &mut out)?;

    let labels: Vec<String> = (1..=detect.per_interval.len()).map(|i| i.to_string()).collect();
    let mut jc = Table::new(&["interval", "up", "down"]);
    for (i, (u, d)) in detect.per_interval.iter().enumerate() {
        jc.push(vec![(i + 1).to_string(), u.to_string(), d.to_string()]);
    }
    jc.write(ctx, "report/fig_jump_counts.csv", &mut out)?;
    let up: Vec<f64> = detect.per_interval.iter().map(|p| p.0 as f64).collect();
    let down: Vec<f64> = detect.per_interval.iter().map(|p| p.1 as f64).collect();
    let chart = svg::bars("Detected jumps per interval", &labels, &[("up", up), ("down", down)]);
    write_text(ctx, "report/fig_jump_counts.svg", &chart, 1, &mut out)?;

    let mut ex = Table::new(&["scope", "attribute", "name", "excess"]);
    let mut heat_rows = Vec::new();
    let mut heat = Vec::new();
    for (set, sel) in &selection.scopes {
        let r = sel.len().max(1) as f64;
        let row: Vec<f64> = (0..names.len()).map(|a| sel.iter().map(|s| s.excess(a)).sum::<f64>() / r).collect();
        for (a, v) in row.iter().enumerate() {
            ex.push(vec![set.scope.to_string(), (a + 1).to_string(), names[a].clone(), v.to_string()]);
        }
        heat_rows.push(set.scope.to_string());
        heat.push(row);
    }
    ex.write(ctx, "report/fig_excess_mi.csv", &mut out)?;
    let chart = svg::heatmap("Excess mutual information by scope and attribute", &heat_rows, &heat);
    write_text(ctx, "report/fig_excess_mi.svg", &chart, heat.len(), &mut out)?;

    let mut im = Table::new(&["scope", "interval", "accuracy", "f_measure"]);
    let (mut il, mut acc, mut fm) = (Vec::new(), Vec::new(), Vec::new());
    for e in evals.iter().filter(|e| matches!(e.scope, Scope::Interval(_))) {
        let Scope::Interval(i) = e.scope else { unreachable!() };
        let a = e.report.get("acc").map_or(0.0, |v| v.0);
        let fs: Vec<f64> = e.report.metrics.iter().filter(|(n, _, _)| n.starts_with("fm")).map(|m| m.1).collect();
        let f = fs.iter().sum::<f64>() / fs.len().max(1) as f64;
        im.push(vec![e.scope.to_string(), (i + 1).to_string(), a.to_string(), f.to_string()]);
        il.push((i + 1).to_string());
        acc.push(a);
        fm.push(f);
    }
    im.write(ctx, "report/fig_interval_metrics.csv", &mut out)?;
    let chart = svg::bars("Test accuracy and F-measure per interval model", &il, &[("accuracy", acc), ("F-measure", fm)]);
    write_text(ctx, "report/fig_interval_metrics.svg", &chart, il.len(), &mut out)?;

    let mut it = Table::new(&["scope", "rank", "attribute", "name", "mean", "sd"]);
    let top = importance
        .iter()
        .find(|(s, _)| *s == Scope::Comprehensive)
        .or_else(|| importance.first());
    let (mut tl, mut tv) = (Vec::new(), Vec::new());
    if let Some((scope, s)) = top {
        for (rank, a) in s.order().into_iter().take(20).enumerate() {
            it.push(vec![
                scope.to_string(),
                (rank + 1).to_string(),
                (a + 1).to_string(),
                names[a].clone(),
                s.mean[a].to_string(),
                s.sd[a].to_string(),
            ]);
            tl.push(names[a].clone());
            tv.push(s.mean[a]);
        }
    }
    it.write(ctx, "report/fig_importance.csv", &mut out)?;
    let chart = svg::bars("Permutation importance, top attributes", &tl, &[("mean score", tv)]);
    write_text(ctx, "report/fig_importance.svg", &chart, tl.len(), &mut out)?;

    let bins: usize = ctx.cfg.get("report.histogram_bins")?;
    let bins = bins.max(1);
    let stock_eval = evals.iter().find(|e| e.scope == Scope::Comprehensive).or_else(|| evals.first());
    let mut hist = vec![0usize; bins];
    let mut sf = Table::new(&["stock_id", "f_measure", "accuracy"]);
    if let Some(e) = stock_eval {
        for (id, m) in &e.per_stock {
            let f = m.selection_f();
            sf.push(vec![id.clone(), f.to_string(), m.accuracy.to_string()]);
            hist[((f * bins as f64) as usize).min(bins - 1)] += 1;
        }
    }
    sf.write(ctx, "report/fig_stock_fm.csv", &mut out)?;
    let hl: Vec<String> = (0..bins).map(|b| format!("{:.2}", b as f64 / bins as f64)).collect();
    let chart = svg::bars("Stocks by test F-measure", &hl, &[("stocks", hist.iter().map(|&c| c as f64).collect())]);
    write_text(ctx, "report/fig_stock_fm.svg", &chart, bins, &mut out)?;

    Ok(out)
}
