use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{tokens_cover_text, Benchmark, Polarity, Reference};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Item or pair id.
    pub subject: String,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, subject: &str, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            subject: subject.to_string(),
            field: field.into(),
            message: message.into(),
        });
    }
}

fn check_reference(report: &mut ValidationReport, subject: &str, field: &str, r: &Reference) {
    if r.tokens.is_empty() && !r.text.trim().is_empty() {
        report.push(
            subject,
            format!("{field}.tokens"),
            format!("reference `{}` has no tokens", r.id),
        );
    } else if !tokens_cover_text(&r.tokens, &r.text) {
        report.push(
            subject,
            format!("{field}.tokens"),
            format!("tokens of `{}` do not segment its text", r.id),
        );
    }
    if let Some(tags) = &r.pos_tags {
        if tags.len() != r.tokens.len() {
            report.push(
                subject,
                format!("{field}.pos_tags"),
                format!(
                    "`{}` has {} tags for {} tokens",
                    r.id,
                    tags.len(),
                    r.tokens.len()
                ),
            );
        }
    }
}

/// Checks every benchmark invariant and lists the violations. Never fails.
pub fn validate(b: &Benchmark) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = HashSet::new();

    for item in &b.items {
        let id = item.item_id.as_str();
        if !ids.insert(id) {
            report.push(id, "item_id", "duplicate id");
        }
        if item.positives.is_empty() {
            report.push(id, "positives", "no positive reference");
        } else if item.branch.name.is_recall_branch() && item.positives.len() != 1 {
            report.push(
                id,
                "positives",
                format!(
                    "{} positives in a Recall@1 branch (exactly one required)",
                    item.positives.len()
                ),
            );
        }
        if item.negatives.is_empty() {
            report.push(id, "negatives", "no negative reference");
        }
        let mut ref_ids = HashSet::new();
        for (field, list, polarity) in [
            ("positives", &item.positives, Polarity::Positive),
            ("negatives", &item.negatives, Polarity::Negative),
        ] {
            for r in list {
                if !ref_ids.insert(r.id.as_str()) {
                    report.push(
                        id,
                        format!("{field}.id"),
                        format!("duplicate reference id `{}`", r.id),
                    );
                }
                if r.polarity != polarity {
                    report.push(
                        id,
                        format!("{field}.polarity"),
                        format!("`{}` filed under the wrong polarity", r.id),
                    );
                }
                check_reference(&mut report, id, field, r);
            }
        }
    }

    for pair in &b.pairs {
        let id = pair.pair_id.as_str();
        if !ids.insert(id) {
            report.push(id, "pair_id", "duplicate id");
        }
        if pair.caption_0.text == pair.caption_1.text {
            report.push(id, "caption_1", "captions are identical");
        }
        check_reference(&mut report, id, "caption_0", &pair.caption_0);
        check_reference(&mut report, id, "caption_1", &pair.caption_1);
    }
    report
}
