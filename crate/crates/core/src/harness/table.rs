use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::dataset::Pool;
use crate::metrics::MetricReport;
use crate::unlearn::Method;

pub const ORIGINAL: &str = "Original";
pub const MODEL_LABELS: [&str; 3] = [ORIGINAL, "GA", "RL"];

pub fn method_label(m: Method) -> &'static str {
    match m {
        Method::Ga => "GA",
        Method::Rl => "RL",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Fad,
    Kl,
    Clap,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Fad, Metric::Kl, Metric::Clap];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Fad => "FAD",
            Metric::Kl => "KL",
            Metric::Clap => "CLAP",
        }
    }

    pub fn value(self, r: &MetricReport) -> f64 {
        match self {
            Metric::Fad => r.fad,
            Metric::Kl => r.kl,
            Metric::Clap => r.clap,
        }
    }

    /// Arrow marking the better direction for a split: on the forget split
    /// a worse fit to the forgotten data is the goal.
    pub fn arrow(self, split: Pool) -> &'static str {
        let higher_better = match (split, self) {
            (Pool::Forget, Metric::Clap) | (Pool::Remain, Metric::Fad | Metric::Kl) => false,
            _ => true,
        };
        if higher_better {
            "↑"
        } else {
            "↓"
        }
    }
}

fn find<'a>(reports: &'a [MetricReport], model: &str, split: Pool) -> Result<&'a MetricReport, HarnessError> {
    reports
        .iter()
        .find(|r| r.model == model && r.split == split)
        .ok_or_else(|| HarnessError::MissingReport(format!("{model}/{}", split.as_str())))
}

fn split_title(split: Pool) -> &'static str {
    match split {
        Pool::Forget => "Forget set",
        Pool::Remain => "Remain set",
    }
}

/// Markdown table with Original, GA and RL rows, three decimals.
pub fn render_table(reports: &[MetricReport], split: Pool) -> Result<String, HarnessError> {
    let mut out = String::new();
    let head: Vec<String> = Metric::ALL.iter().map(|m| format!("{} ({})", m.name(), m.arrow(split))).collect();
    writeln!(out, "| Method | {} |", head.join(" | ")).expect("string write");
    writeln!(out, "|---|---:|---:|---:|").expect("string write");
    for label in MODEL_LABELS {
        let r = find(reports, label, split)?;
        writeln!(out, "| {label} | {:.3} | {:.3} | {:.3} |", r.fad, r.kl, r.clap).expect("string write");
    }
    Ok(out)
}

/// The same table as LaTeX tabular rows (`Original & 3.334 & 1.229 & 0.349 \\`).
pub fn render_latex_rows(reports: &[MetricReport], split: Pool) -> Result<String, HarnessError> {
    let mut out = String::new();
    let head: Vec<String> = Metric::ALL.iter().map(|m| format!("{} ({})", m.name(), m.arrow(split))).collect();
    writeln!(out, "Method & {} \\\\", head.join(" & ")).expect("string write");
    for label in MODEL_LABELS {
        let r = find(reports, label, split)?;
        writeln!(out, "{label} & {:.3} & {:.3} & {:.3} \\\\", r.fad, r.kl, r.clap).expect("string write");
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Up,
    Down,
    Flat,
}

impl Sign {
    pub fn of(delta: f64) -> Self {
        if delta > 0.0 {
            Sign::Up
        } else if delta < 0.0 {
            Sign::Down
        } else {
            Sign::Flat
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Up => "↑",
            Sign::Down => "↓",
            Sign::Flat => "=",
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Direction of one metric for an unlearned model relative to Original.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub method: Method,
    pub split: Pool,
    pub metric: Metric,
    pub expected: Sign,
    pub observed: Sign,
    /// Ungated cells carry an expected sign but never count as failures.
    pub gated: bool,
    pub original: f64,
    pub unlearned: f64,
}

impl Verdict {
    pub fn agrees(&self) -> bool {
        self.expected == self.observed
    }

    pub fn status(&self) -> &'static str {
        match (self.gated, self.agrees()) {
            (true, true) => "pass",
            (true, false) => "fail",
            (false, true) => "agrees",
            (false, false) => "differs",
        }
    }
}

/// Expected sign and gating for each (method, split, metric) cell.
pub fn expectation(method: Method, split: Pool, metric: Metric) -> (Sign, bool) {
    match (split, metric) {
        (Pool::Forget, Metric::Fad) => (Sign::Up, true),
        // forget-split KL fell for both methods in the reference results
        (Pool::Forget, Metric::Kl) => (Sign::Down, false),
        (Pool::Forget, Metric::Clap) => match method {
            Method::Ga => (Sign::Up, false),
            Method::Rl => (Sign::Down, false),
        },
        (Pool::Remain, Metric::Fad | Metric::Kl) => (Sign::Up, true),
        (Pool::Remain, Metric::Clap) => (Sign::Down, true),
    }
}

/// The 12 verdicts (2 methods × 2 splits × 3 metrics).
pub fn trend_verdicts(reports: &[MetricReport]) -> Result<Vec<Verdict>, HarnessError> {
    let mut out = Vec::with_capacity(12);
    for method in [Method::Ga, Method::Rl] {
        for split in [Pool::Forget, Pool::Remain] {
            let base = find(reports, ORIGINAL, split)?;
            let after = find(reports, method_label(method), split)?;
            for metric in Metric::ALL {
                let (expected, gated) = expectation(method, split, metric);
                let (o, u) = (metric.value(base), metric.value(after));
                out.push(Verdict {
                    method,
                    split,
                    metric,
                    expected,
                    observed: Sign::of(u - o),
                    gated,
                    original: o,
                    unlearned: u,
                });
            }
        }
    }
    Ok(out)
}

pub const VERDICT_CSV_HEADER: &str = "method,split,metric,expected,observed,gated,status,original,unlearned";

pub fn verdicts_to_csv(verdicts: &[Verdict]) -> String {
    let mut out = format!("{VERDICT_CSV_HEADER}\n");
    for v in verdicts {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            method_label(v.method),
            v.split.as_str(),
            v.metric.name(),
            v.expected,
            v.observed,
            v.gated,
            v.status(),
            v.original,
            v.unlearned
        )
        .expect("string write");
    }
    out
}

/// Both split tables followed by the verdict table.
pub fn render_report(reports: &[MetricReport], verdicts: &[Verdict]) -> Result<String, HarnessError> {
    let mut out = String::new();
    for split in [Pool::Forget, Pool::Remain] {
        writeln!(out, "## {}\n", split_title(split)).expect("string write");
        out.push_str(&render_table(reports, split)?);
        out.push('\n');
    }
    writeln!(out, "## Trend verdicts\n").expect("string write");
    writeln!(out, "| Method | Split | Metric | Expected | Observed | Gated | Result |").expect("string write");
    writeln!(out, "|---|---|---|---|---|---|---|").expect("string write");
    for v in verdicts {
        writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            method_label(v.method),
            v.split.as_str(),
            v.metric.name(),
            v.expected,
            v.observed,
            if v.gated { "yes" } else { "no" },
            v.status()
        )
        .expect("string write");
    }
    Ok(out)
}
