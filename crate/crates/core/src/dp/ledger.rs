use serde::{Deserialize, Serialize};

use super::DpError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    pub epsilon: f64,
}

/// Sequential-composition accounting: the total is the sum of the entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BudgetLedger {
    entries: Vec<LedgerEntry>,
}

impl BudgetLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of spent epsilons, accumulated in entry order.
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.epsilon).sum()
    }

    pub fn compose(&mut self, epsilon_step: f64, label: impl Into<String>) -> Result<(), DpError> {
        if !(epsilon_step > 0.0 && epsilon_step.is_finite()) {
            return Err(DpError::Epsilon(epsilon_step));
        }
        self.entries.push(LedgerEntry {
            label: label.into(),
            epsilon: epsilon_step,
        });
        Ok(())
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
    }

    /// One `{"label": ..., "epsilon": ...}` object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Self { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_unit_steps() {
        let mut l = BudgetLedger::new();
        l.compose(1.0, "a").unwrap();
        l.compose(1.0, "b").unwrap();
        assert_eq!(l.total(), 2.0);
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn training_plus_three_connects() {
        let mut l = BudgetLedger::new();
        l.compose(0.5, "train").unwrap();
        for i in 0..3 {
            l.compose(0.5, format!("connect {i}")).unwrap();
        }
        assert_eq!(l.total(), 2.0);
        assert_eq!(l.len(), 4);
    }

    #[test]
    fn order_independent_total() {
        let steps = [0.5, 0.25, 2.0, 0.125];
        let mut a = BudgetLedger::new();
        let mut b = BudgetLedger::new();
        for s in steps {
            a.compose(s, "x").unwrap();
        }
        for s in steps.iter().rev() {
            b.compose(*s, "x").unwrap();
        }
        assert_eq!(a.total(), b.total());
    }

    #[test]
    fn rejects_nonpositive_step() {
        let mut l = BudgetLedger::new();
        assert!(l.compose(0.0, "x").is_err());
        assert!(l.compose(-1.0, "x").is_err());
        assert!(l.is_empty());
    }

    #[test]
    fn jsonl_format() {
        let mut l = BudgetLedger::new();
        l.compose(0.5, "train").unwrap();
        l.compose(1.25, "connect").unwrap();
        let text = l.to_jsonl();
        assert_eq!(
            text,
            "{\"label\":\"train\",\"epsilon\":0.5}\n{\"label\":\"connect\",\"epsilon\":1.25}\n"
        );
        assert_eq!(BudgetLedger::from_jsonl(&text).unwrap(), l);
    }
}
