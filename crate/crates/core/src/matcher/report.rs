use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Outcome for one binary function.
#[derive(Clone, Debug, PartialEq)]
pub enum Label {
    /// Assigned weight is unique in the function's row.
    Matched { source: String, weight: f64 },
    /// Several source functions attain the assigned weight; always two or more candidates.
    Multi { candidates: Vec<String>, weight: f64 },
    /// Nothing in common with the assigned source function, or no assignment at all.
    Unmatched { weight: Option<f64> },
}

impl Label {
    pub fn kind(&self) -> &'static str {
        match self {
            Label::Matched { .. } => "matched",
            Label::Multi { .. } => "multi",
            Label::Unmatched { .. } => "unmatched",
        }
    }

    pub fn weight(&self) -> Option<f64> {
        match self {
            Label::Matched { weight, .. } | Label::Multi { weight, .. } => Some(*weight),
            Label::Unmatched { weight } => *weight,
        }
    }

    pub fn matched_source(&self) -> Option<&str> {
        match self {
            Label::Matched { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The matched pair set repeated the previous iteration's.
    Steady,
    /// The matched pair set repeated an older iteration's.
    Cycle,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationSnapshot {
    pub iteration: usize,
    pub total_cost: f64,
    /// Uniquely matched pairs, binary id to source id.
    pub matched: BTreeMap<String, String>,
}

/// Four-way split of binary functions against ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub total: usize,
    pub c_matched: usize,
    pub ic_matched: usize,
    pub multi: usize,
    /// Multi-matched functions whose candidate list contains the true source function.
    pub multi_with_truth: usize,
    pub unmatched: usize,
}

impl Tallies {
    fn frac(&self, n: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            n as f64 / self.total as f64
        }
    }

    pub fn c_matched_frac(&self) -> f64 {
        self.frac(self.c_matched)
    }

    pub fn ic_matched_frac(&self) -> f64 {
        self.frac(self.ic_matched)
    }

    pub fn multi_frac(&self) -> f64 {
        self.frac(self.multi)
    }

    pub fn unmatched_frac(&self) -> f64 {
        self.frac(self.unmatched)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, count, frac) in [
            ("C-Matched", self.c_matched, self.c_matched_frac()),
            ("IC-Matched", self.ic_matched, self.ic_matched_frac()),
            ("Multi", self.multi, self.multi_frac()),
            ("Unmatched", self.unmatched, self.unmatched_frac()),
        ] {
            let _ = writeln!(out, "{name:<11} {count:>6} {:>6.1}%", frac * 100.0);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchReport {
    pub labels: BTreeMap<String, Label>,
    pub similarity: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Mean weight of the assigned pairs in the final iteration (informational only).
    pub average_weight: f64,
    pub trace: Vec<IterationSnapshot>,
    /// Pseudo-inlined match targets mentioned in `labels`, mapped to the caller they stand for.
    pub pseudo_callers: BTreeMap<String, String>,
    pub tallies: Option<Tallies>,
}

impl MatchReport {
    pub fn count(&self, kind: &str) -> usize {
        self.labels.values().filter(|l| l.kind() == kind).count()
    }

    pub fn matched_pairs(&self) -> BTreeMap<String, String> {
        self.labels
            .iter()
            .filter_map(|(b, l)| l.matched_source().map(|s| (b.clone(), s.to_string())))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let doc = ReportDocument::from(self);
        let mut s = serde_json::to_string_pretty(&doc).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, serde_json::Error> {
        let doc: ReportDocument = serde_json::from_slice(bytes)?;
        doc.try_into().map_err(serde::de::Error::custom)
    }

    /// Machine-readable `key: value` summary lines.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "similarity: {:.3}", self.similarity);
        let _ = writeln!(out, "iterations: {}", self.iterations);
        let _ = writeln!(out, "termination: {}", termination_name(self.termination));
        let _ = writeln!(out, "binary_functions: {}", self.labels.len());
        let _ = writeln!(out, "matched: {}", self.count("matched"));
        let _ = writeln!(out, "multi: {}", self.count("multi"));
        let _ = writeln!(out, "unmatched: {}", self.count("unmatched"));
        let _ = writeln!(out, "average_weight: {:.4}", self.average_weight);
        if let Some(t) = &self.tallies {
            let _ = writeln!(out, "c_matched: {:.4}", t.c_matched_frac());
            let _ = writeln!(out, "ic_matched: {:.4}", t.ic_matched_frac());
            let _ = writeln!(out, "multi_fraction: {:.4}", t.multi_frac());
            let _ = writeln!(out, "unmatched_fraction: {:.4}", t.unmatched_frac());
        }
        out
    }

    /// Human-readable table of every label.
    pub fn render_text(&self) -> String {
        let mut out = self.summary();
        if let Some(t) = &self.tallies {
            out.push('\n');
            out.push_str(&t.render());
        }
        out.push('\n');
        let width = self.labels.keys().map(String::len).max().unwrap_or(6).max(6);
        let _ = writeln!(out, "{:<width$}  {:<9}  {:>8}  source", "binary", "label", "weight");
        for (id, label) in &self.labels {
            let weight = label
                .weight()
                .map(|w| format!("{w:.4}"))
                .unwrap_or_else(|| "-".to_string());
            let target = match label {
                Label::Matched { source, .. } => source.clone(),
                Label::Multi { candidates, .. } => candidates.join(", "),
                Label::Unmatched { .. } => "-".to_string(),
            };
            let _ = writeln!(out, "{id:<width$}  {:<9}  {weight:>8}  {target}", label.kind());
        }
        out
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Steady => "steady",
        Termination::Cycle => "cycle",
        Termination::MaxIterations => "max_iterations",
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportDocument {
    similarity: f64,
    iterations: usize,
    termination: Termination,
    average_weight: f64,
    labels: BTreeMap<String, LabelRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pseudo_inlined: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tallies: Option<Tallies>,
    #[serde(default)]
    trace: Vec<IterationSnapshot>,
}

impl From<&MatchReport> for ReportDocument {
    fn from(r: &MatchReport) -> Self {
        let labels = r
            .labels
            .iter()
            .map(|(id, l)| {
                let record = match l {
                    Label::Matched { source, weight } => LabelRecord {
                        label: "matched".into(),
                        source: Some(source.clone()),
                        candidates: None,
                        weight: Some(*weight),
                    },
                    Label::Multi { candidates, weight } => LabelRecord {
                        label: "multi".into(),
                        source: None,
                        candidates: Some(candidates.clone()),
                        weight: Some(*weight),
                    },
                    Label::Unmatched { weight } => LabelRecord {
                        label: "unmatched".into(),
                        source: None,
                        candidates: None,
                        weight: *weight,
                    },
                };
                (id.clone(), record)
            })
            .collect();
        ReportDocument {
            similarity: r.similarity,
            iterations: r.iterations,
            termination: r.termination,
            average_weight: r.average_weight,
            labels,
            pseudo_inlined: r.pseudo_callers.clone(),
            tallies: r.tallies,
            trace: r.trace.clone(),
        }
    }
}

impl TryFrom<ReportDocument> for MatchReport {
    type Error = String;

    fn try_from(doc: ReportDocument) -> Result<Self, String> {
        let mut labels = BTreeMap::new();
        for (id, rec) in doc.labels {
            let label = match rec.label.as_str() {
                "matched" => Label::Matched {
                    source: rec.source.ok_or_else(|| format!("`{id}`: matched label without source"))?,
                    weight: rec.weight.ok_or_else(|| format!("`{id}`: matched label without weight"))?,
                },
                "multi" => Label::Multi {
                    candidates: rec
                        .candidates
                        .filter(|c| c.len() >= 2)
                        .ok_or_else(|| format!("`{id}`: multi label needs at least two candidates"))?,
                    weight: rec.weight.ok_or_else(|| format!("`{id}`: multi label without weight"))?,
                },
                "unmatched" => Label::Unmatched { weight: rec.weight },
                other => return Err(format!("`{id}`: unknown label {other:?}")),
            };
            labels.insert(id, label);
        }
        Ok(MatchReport {
            labels,
            similarity: doc.similarity,
            iterations: doc.iterations,
            termination: doc.termination,
            average_weight: doc.average_weight,
            trace: doc.trace,
            pseudo_callers: doc.pseudo_inlined,
            tallies: doc.tallies,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tallies_render_four_way_split() {
        let t = Tallies {
            total: 1000,
            c_matched: 792,
            ic_matched: 19,
            multi: 166,
            multi_with_truth: 166,
            unmatched: 23,
        };
        let text = t.render();
        assert!(text.contains("C-Matched"));
        assert!(text.contains("79.2%"));
        assert!(text.contains("1.9%"));
        assert!(text.contains("16.6%"));
        let sum = t.c_matched_frac() + t.ic_matched_frac() + t.multi_frac() + t.unmatched_frac();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn report_json_round_trips() {
        let mut labels = BTreeMap::new();
        labels.insert("0x1".to_string(), Label::Matched { source: "f".into(), weight: 0.5 });
        labels.insert(
            "0x2".to_string(),
            Label::Multi { candidates: vec!["g".into(), "h".into()], weight: 1.0 },
        );
        labels.insert("0x3".to_string(), Label::Unmatched { weight: None });
        let report = MatchReport {
            labels,
            similarity: 1.0 / 3.0,
            iterations: 2,
            termination: Termination::Steady,
            average_weight: 0.75,
            trace: vec![],
            pseudo_callers: BTreeMap::new(),
            tallies: None,
        };
        let json = report.to_json();
        assert!(json.contains("\"label\": \"multi\""));
        assert_eq!(MatchReport::from_json(json.as_bytes()).unwrap(), report);
        assert!(report.summary().starts_with("similarity: 0.333\n"));
    }
}
